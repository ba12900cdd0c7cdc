//! Analytic two-bone IK and the head-and-hands upper-body solver.

use serde::{Deserialize, Serialize};

use super::math::{Quat, Vec3};
use super::skeleton::{SensorId, SkeletonManifest};
use super::{Degeneracy, KinematicsError};
use crate::protocol::{IkJoint, JointTransform, Locomotion, PoseIk, POSE_IK_JOINTS};

/// Relative threshold below which the pole is considered parallel to the reach direction.
const COLLINEAR_EPS: f64 = 1e-6;
/// Relative distance from a reach limit within which the chain is snapped onto it.
const SHELL_SNAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBoneSolution {
    pub elbow: Vec3,
    /// End effector position; equals the target when `reached`.
    pub end: Vec3,
    /// Interior angle at the elbow, radians. Pi means fully extended.
    pub elbow_angle: f64,
    pub reached: bool,
    /// World orientation of the upper bone's aim frame: +x along the bone,
    /// +z toward the pole side of the bend plane.
    pub upper_rotation: Quat,
    /// Same frame convention for the lower bone.
    pub lower_rotation: Quat,
}

/// Orthonormal frame with +x along `dir` and +z toward `pole`.
fn aim_frame(dir: Vec3, pole: Vec3) -> Quat {
    let x = dir;
    let z = (pole - x * pole.dot(x))
        .try_normalize(1e-12)
        .unwrap_or_else(|| any_orthogonal(x));
    let y = z.cross(x);
    Quat::from_basis(x, y, z)
}

fn any_orthogonal(v: Vec3) -> Vec3 {
    let helper = if v.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    v.cross(helper).try_normalize(0.0).unwrap_or(Vec3::Z)
}

/// Solve a two-bone chain rooted at `shoulder` toward `target`.
///
/// The elbow is placed in the plane spanned by the reach direction and
/// `pole`, on the pole's side. Targets outside the reachable shell
/// `[|a-b|, a+b]` are clamped onto it and reported as not reached.
pub fn solve_two_bone(
    shoulder: Vec3,
    target: Vec3,
    upper_len: f64,
    fore_len: f64,
    pole: Vec3,
) -> Result<TwoBoneSolution, KinematicsError> {
    if !(shoulder.is_finite() && target.is_finite() && pole.is_finite())
        || !upper_len.is_finite()
        || !fore_len.is_finite()
    {
        return Err(KinematicsError::DegenerateInput(Degeneracy::NonFinite));
    }
    if upper_len <= 0.0 || fore_len <= 0.0 {
        return Err(KinematicsError::DegenerateInput(Degeneracy::ZeroBoneLength));
    }
    let (a, b) = (upper_len, fore_len);
    let to_target = target - shoulder;
    let d = to_target.length();

    let pole_len = pole.length();
    if pole_len <= 0.0 {
        return Err(KinematicsError::DegenerateInput(Degeneracy::CollinearPole));
    }
    let u = match to_target.try_normalize(1e-12) {
        Some(u) => u,
        None => any_orthogonal(pole * (1.0 / pole_len)),
    };
    let pole_perp = pole - u * pole.dot(u);
    let Some(v) = pole_perp.try_normalize(COLLINEAR_EPS * pole_len) else {
        return Err(KinematicsError::DegenerateInput(Degeneracy::CollinearPole));
    };

    let min_reach = (a - b).abs();
    let max_reach = a + b;
    let reached = d >= min_reach && d <= max_reach;
    let mut dc = d.clamp(min_reach, max_reach);
    // Near the shell the elbow position grows like sqrt(distance to the
    // shell), so f32 rounding of a straight-arm target would visibly bend it.
    let snap = SHELL_SNAP * max_reach;
    if max_reach - dc <= snap {
        dc = max_reach;
    } else if dc - min_reach <= snap {
        dc = min_reach;
    }

    let (sin_s, cos_s) = if dc > 0.0 {
        let c = ((a * a + dc * dc - b * b) / (2.0 * a * dc)).clamp(-1.0, 1.0);
        ((1.0 - c * c).max(0.0).sqrt(), c)
    } else {
        // Fully folded with equal bones: elbow straight out toward the pole.
        (1.0, 0.0)
    };
    let elbow = shoulder + (u * cos_s + v * sin_s) * a;
    let end = shoulder + u * dc;
    let cos_e = ((a * a + b * b - dc * dc) / (2.0 * a * b)).clamp(-1.0, 1.0);

    let upper_dir = (elbow - shoulder) * (1.0 / a);
    let lower_dir = (end - elbow).try_normalize(1e-12).unwrap_or(-upper_dir);
    Ok(TwoBoneSolution {
        elbow,
        end,
        elbow_angle: cos_e.acos(),
        reached,
        upper_rotation: aim_frame(upper_dir, v),
        lower_rotation: aim_frame(lower_dir, v),
    })
}

/// Tracked head and hand targets from a headset and controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkTargets {
    pub head: JointTransform,
    pub left_hand: JointTransform,
    pub right_hand: JointTransform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_hint: Option<[f32; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkConfig {
    /// Fraction of the remaining hips-to-head horizontal gap closed per frame
    /// (60 Hz reference). 1 disables damping.
    pub hips_follow: f64,
    /// Elbow hint for the left arm in the torso frame; mirrored for the right.
    pub left_pole: Vec3,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            hips_follow: 0.2,
            // Behind and below the shoulder, slightly outward.
            left_pole: Vec3::new(0.3, -1.0, -1.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ArmRig {
    upper_rest: Vec3,
    hand_rest: Vec3,
    upper_len: f64,
    fore_len: f64,
    pole: Vec3,
    rest_upper_frame: Quat,
    rest_lower_frame: Quat,
}

/// Upper-body solver bound to a manifest.
#[derive(Debug, Clone)]
pub struct IkSolver {
    config: IkConfig,
    hips: Vec3,
    spine: Vec3,
    head: Vec3,
    spine_fraction: f64,
    arms: [ArmRig; 2],
}

impl IkSolver {
    pub fn new(manifest: &SkeletonManifest, config: IkConfig) -> Result<Self, KinematicsError> {
        let pos = |s: SensorId| manifest.rest_position(manifest.sensor_joint(s));
        let hips = pos(SensorId::Hips);
        let spine = pos(SensorId::Spine);
        let head = pos(SensorId::Head);
        let chain_len = |from: usize, to: usize| {
            let mut len = 0.0;
            let mut j = to;
            while j != from {
                len += manifest.bone_length(j);
                j = manifest.joints()[j].parent.expect("sensor chain");
            }
            len
        };
        let hips_j = manifest.sensor_joint(SensorId::Hips);
        let spine_fraction = chain_len(hips_j, manifest.sensor_joint(SensorId::Spine))
            / chain_len(hips_j, manifest.sensor_joint(SensorId::Head));

        let arm = |upper: SensorId,
                   fore: SensorId,
                   hand: SensorId,
                   pole: Vec3|
         -> Result<ArmRig, KinematicsError> {
            let (u, f, h) = (
                manifest.sensor_joint(upper),
                manifest.sensor_joint(fore),
                manifest.sensor_joint(hand),
            );
            let upper_len = manifest
                .rest_position(u)
                .distance(manifest.rest_position(f));
            let fore_len = manifest
                .rest_position(f)
                .distance(manifest.rest_position(h));
            let up_dir = (manifest.rest_position(f) - manifest.rest_position(u))
                .try_normalize(0.0)
                .ok_or(KinematicsError::DegenerateInput(Degeneracy::ZeroBoneLength))?;
            let lo_dir = (manifest.rest_position(h) - manifest.rest_position(f))
                .try_normalize(0.0)
                .ok_or(KinematicsError::DegenerateInput(Degeneracy::ZeroBoneLength))?;
            Ok(ArmRig {
                upper_rest: manifest.rest_position(u),
                hand_rest: manifest.rest_position(h),
                upper_len,
                fore_len,
                pole,
                rest_upper_frame: aim_frame(up_dir, pole),
                rest_lower_frame: aim_frame(lo_dir, pole),
            })
        };
        let lp = config.left_pole;
        let rp = Vec3::new(-lp.x, lp.y, lp.z);
        Ok(Self {
            config,
            hips,
            spine,
            head,
            spine_fraction,
            arms: [
                arm(
                    SensorId::LeftUpperArm,
                    SensorId::LeftForearm,
                    SensorId::LeftHand,
                    lp,
                )?,
                arm(
                    SensorId::RightUpperArm,
                    SensorId::RightForearm,
                    SensorId::RightHand,
                    rp,
                )?,
            ],
        })
    }

    pub fn config(&self) -> &IkConfig {
        &self.config
    }

    /// Solve the nine-joint upper body. Locomotion is carried over from `prev`.
    pub fn solve(
        &self,
        targets: &IkTargets,
        prev: Option<&PoseIk>,
    ) -> Result<PoseIk, KinematicsError> {
        let head_pos = finite_vec(targets.head.position)?;
        let head_rot = unit_quat(targets.head.rotation)?;
        let hand_rots = [
            unit_quat(targets.left_hand.rotation)?,
            unit_quat(targets.right_hand.rotation)?,
        ];
        let hand_pos = [
            finite_vec(targets.left_hand.position)?,
            finite_vec(targets.right_hand.position)?,
        ];

        let prev_hips = prev.map(|p| {
            let j = p.joint(IkJoint::Hips);
            (Vec3::from_f32(j.position), Quat::from_f32(j.rotation))
        });
        let yaw = head_rot
            .yaw_part()
            .or_else(|| prev_hips.and_then(|(_, q)| q.yaw_part()))
            .unwrap_or(Quat::IDENTITY);

        let mut desired = head_pos + yaw.rotate(self.hips - self.head);
        if let Some(hint) = targets.root_hint {
            let hint = finite_vec(hint)?;
            desired.x = hint.x;
            desired.z = hint.z;
        }
        let k = self.config.hips_follow;
        let (hips_pos, hips_rot) = match prev_hips {
            Some((p, q)) => (
                Vec3::new(
                    p.x + (desired.x - p.x) * k,
                    desired.y,
                    p.z + (desired.z - p.z) * k,
                ),
                q.normalize().unwrap_or(Quat::IDENTITY).slerp(yaw, k),
            ),
            None => (desired, yaw),
        };

        let spine_rot = hips_rot.slerp(head_rot, self.spine_fraction);
        let spine_pos = hips_pos + hips_rot.rotate(self.spine - self.hips);

        let mut joints = [JointTransform::IDENTITY; POSE_IK_JOINTS];
        let mut put = |slot: IkJoint, p: Vec3, q: Quat| {
            joints[slot as usize] = JointTransform::new(p.to_f32(), q.to_f32());
        };
        put(IkJoint::Hips, hips_pos, hips_rot);
        put(IkJoint::Spine, spine_pos, spine_rot);
        put(IkJoint::Head, head_pos, head_rot);

        let slots = [
            (
                IkJoint::LeftUpperArm,
                IkJoint::LeftForearm,
                IkJoint::LeftHand,
            ),
            (
                IkJoint::RightUpperArm,
                IkJoint::RightForearm,
                IkJoint::RightHand,
            ),
        ];
        for (side, arm) in self.arms.iter().enumerate() {
            let shoulder = spine_pos + spine_rot.rotate(arm.upper_rest - self.spine);
            let pole = spine_rot.rotate(arm.pole);
            let sol =
                match solve_two_bone(shoulder, hand_pos[side], arm.upper_len, arm.fore_len, pole) {
                    Err(KinematicsError::DegenerateInput(Degeneracy::CollinearPole)) => {
                        // Fall back to the torso's right axis.
                        let right = spine_rot.rotate(-Vec3::X);
                        solve_two_bone(
                            shoulder,
                            hand_pos[side],
                            arm.upper_len,
                            arm.fore_len,
                            right,
                        )?
                    }
                    other => other?,
                };
            let upper_rot = (sol.upper_rotation * arm.rest_upper_frame.inverse()).normalize()?;
            let lower_rot = (sol.lower_rotation * arm.rest_lower_frame.inverse()).normalize()?;
            let (su, sf, sh) = slots[side];
            put(su, shoulder, upper_rot);
            put(sf, sol.elbow, lower_rot);
            put(sh, sol.end, hand_rots[side]);
        }

        Ok(PoseIk {
            joints,
            locomotion: prev.map(|p| p.locomotion).unwrap_or(Locomotion::Idle),
        })
    }

    /// The rest-pose targets (head and hands at rest, identity rotations).
    pub fn rest_targets(&self) -> IkTargets {
        IkTargets {
            head: JointTransform::new(self.head.to_f32(), Quat::IDENTITY.to_f32()),
            left_hand: JointTransform::new(
                self.arms[0].hand_rest.to_f32(),
                Quat::IDENTITY.to_f32(),
            ),
            right_hand: JointTransform::new(
                self.arms[1].hand_rest.to_f32(),
                Quat::IDENTITY.to_f32(),
            ),
            root_hint: None,
        }
    }

    /// Reach of each arm (upper + fore length): left, right.
    pub fn arm_reach(&self) -> [f64; 2] {
        [
            self.arms[0].upper_len + self.arms[0].fore_len,
            self.arms[1].upper_len + self.arms[1].fore_len,
        ]
    }
}

/// Solve the nine-joint upper body with the default configuration.
pub fn solve_ik_pose(
    targets: &IkTargets,
    manifest: &SkeletonManifest,
    prev: Option<&PoseIk>,
) -> Result<PoseIk, KinematicsError> {
    IkSolver::new(manifest, IkConfig::default())?.solve(targets, prev)
}

/// The manifest's rest pose projected onto the nine IK joints.
pub fn rest_pose_ik(manifest: &SkeletonManifest) -> PoseIk {
    let order = [
        SensorId::Hips,
        SensorId::Spine,
        SensorId::Head,
        SensorId::LeftUpperArm,
        SensorId::LeftForearm,
        SensorId::LeftHand,
        SensorId::RightUpperArm,
        SensorId::RightForearm,
        SensorId::RightHand,
    ];
    let mut joints = [JointTransform::IDENTITY; POSE_IK_JOINTS];
    for (slot, s) in joints.iter_mut().zip(order) {
        *slot = JointTransform::new(
            manifest.rest_position(manifest.sensor_joint(s)).to_f32(),
            Quat::IDENTITY.to_f32(),
        );
    }
    PoseIk {
        joints,
        locomotion: Locomotion::Idle,
    }
}

fn finite_vec(v: [f32; 3]) -> Result<Vec3, KinematicsError> {
    let v = Vec3::from_f32(v);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(KinematicsError::DegenerateInput(Degeneracy::NonFinite))
    }
}

fn unit_quat(q: [f32; 4]) -> Result<Quat, KinematicsError> {
    let q = Quat::from_f32(q);
    if !q.is_finite() {
        return Err(KinematicsError::DegenerateInput(Degeneracy::NonFinite));
    }
    q.normalize()
}
