use std::collections::VecDeque;
use std::f32::consts::PI;

use super::ClientError;
use crate::kinematics::{Quat, Vec3};
use crate::protocol::{JointTransform, PoseFull, PoseIk, PosePayload, TransformSimple};

pub const POSE_BUFFER_CAPACITY: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    /// Sender timestamp from the frame header.
    pub t_ms: u64,
    pub pose: PosePayload,
}

/// Recent poses of one remote participant, oldest first, timestamps strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseBuffer {
    samples: VecDeque<PoseSample>,
}

impl PoseBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a sample. Samples not newer than the newest are ignored; returns
    /// whether the sample was stored.
    pub fn push(&mut self, t_ms: u64, pose: PosePayload) -> bool {
        if self.samples.back().is_some_and(|s| s.t_ms >= t_ms) {
            return false;
        }
        if self.samples.len() == POSE_BUFFER_CAPACITY {
            self.samples.pop_front();
        }
        self.samples.push_back(PoseSample { t_ms, pose });
        true
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn newest(&self) -> Option<&PoseSample> {
        self.samples.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PoseSample> {
        self.samples.iter()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

/// The pose to render at `render_time_ms` (already shifted back by the
/// interpolation delay).
///
/// Between two samples, positions are interpolated linearly and rotations
/// spherically. Before the first sample the first is returned. Past the
/// newest, positions continue at the last observed velocity for at most
/// `extrapolation_cap_ms`, then hold.
pub fn sample_pose(
    buffer: &PoseBuffer,
    render_time_ms: u64,
    extrapolation_cap_ms: u64,
) -> Result<PosePayload, ClientError> {
    let s = &buffer.samples;
    let (first, newest) = match (s.front(), s.back()) {
        (Some(f), Some(n)) => (f, n),
        _ => return Err(ClientError::EmptyBuffer),
    };
    if render_time_ms <= first.t_ms {
        return Ok(first.pose.clone());
    }
    if render_time_ms >= newest.t_ms {
        let ahead = (render_time_ms - newest.t_ms).min(extrapolation_cap_ms);
        if ahead == 0 || s.len() < 2 {
            return Ok(newest.pose.clone());
        }
        let prev = &s[s.len() - 2];
        let u = 1.0 + ahead as f64 / (newest.t_ms - prev.t_ms) as f64;
        return Ok(extrapolate(&prev.pose, &newest.pose, u));
    }
    // First sample strictly after render time; its predecessor is at or before.
    let i = s.partition_point(|x| x.t_ms <= render_time_ms);
    let (a, b) = (&s[i - 1], &s[i]);
    let u = (render_time_ms - a.t_ms) as f64 / (b.t_ms - a.t_ms) as f64;
    Ok(interpolate(&a.pose, &b.pose, u))
}

/// Blend two poses at `u` in [0, 1]. Poses of different shape do not blend;
/// the earlier one is held until `u` reaches 1.
pub fn interpolate(a: &PosePayload, b: &PosePayload, u: f64) -> PosePayload {
    blend(a, b, u, true)
}

/// Positions continue along `a → b` past `b`; rotations and discrete state hold at `b`.
fn extrapolate(a: &PosePayload, b: &PosePayload, u: f64) -> PosePayload {
    blend(a, b, u, false)
}

fn blend(a: &PosePayload, b: &PosePayload, u: f64, rotate: bool) -> PosePayload {
    let joint = |ja: &JointTransform, jb: &JointTransform| JointTransform {
        position: Vec3::from_f32(ja.position)
            .lerp(Vec3::from_f32(jb.position), u)
            .to_f32(),
        rotation: if rotate {
            Quat::from_f32(ja.rotation)
                .slerp(Quat::from_f32(jb.rotation), u)
                .to_f32()
        } else {
            jb.rotation
        },
    };
    let pick_b = !rotate || u >= 0.5;
    match (a, b) {
        (PosePayload::Full(pa), PosePayload::Full(pb)) if pa.joints.len() == pb.joints.len() => {
            PosePayload::Full(PoseFull {
                space: pb.space,
                joints: pa
                    .joints
                    .iter()
                    .zip(&pb.joints)
                    .map(|(x, y)| joint(x, y))
                    .collect(),
            })
        }
        (PosePayload::Ik(pa), PosePayload::Ik(pb)) => {
            let mut joints = pb.joints;
            for (out, (x, y)) in joints.iter_mut().zip(pa.joints.iter().zip(&pb.joints)) {
                *out = joint(x, y);
            }
            PosePayload::Ik(PoseIk {
                joints,
                locomotion: if pick_b { pb.locomotion } else { pa.locomotion },
            })
        }
        (PosePayload::Simple(ta), PosePayload::Simple(tb)) => {
            PosePayload::Simple(TransformSimple {
                position: Vec3::from_f32(ta.position)
                    .lerp(Vec3::from_f32(tb.position), u)
                    .to_f32(),
                yaw: if rotate {
                    lerp_yaw(ta.yaw, tb.yaw, u as f32)
                } else {
                    tb.yaw
                },
                locomotion: if pick_b { tb.locomotion } else { ta.locomotion },
                intensity: if rotate {
                    (ta.intensity + (tb.intensity - ta.intensity) * u as f32).clamp(0.0, 1.0)
                } else {
                    tb.intensity
                },
            })
        }
        _ if u >= 1.0 => b.clone(),
        _ => a.clone(),
    }
}

/// Shortest-arc yaw interpolation, wrapped to (-pi, pi].
fn lerp_yaw(a: f32, b: f32, u: f32) -> f32 {
    let mut d = (b - a) % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d < -PI {
        d += 2.0 * PI;
    }
    let mut y = a + d * u;
    if y > PI {
        y -= 2.0 * PI;
    } else if y <= -PI {
        y += 2.0 * PI;
    }
    y
}
