//! 17-sensor to 59-joint retargeting.

use serde::{Deserialize, Serialize};

use super::math::{Quat, Vec3};
use super::skeleton::{JointDrive, SensorId, SkeletonManifest};
use super::KinematicsError;
use crate::protocol::{JointTransform, PoseFull, SpaceFlag};

/// One sensor reading. The rotation is relative to the parent sensor's
/// segment; the hips position is a displacement from the calibration pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub sensor: SensorId,
    pub transform: JointTransform,
}

/// A full frame from the inertial suit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub sensors: Vec<SensorReading>,
}

impl SensorFrame {
    /// Every sensor at its calibration pose.
    pub fn identity() -> Self {
        Self {
            sensors: SensorId::ALL
                .iter()
                .map(|&sensor| SensorReading {
                    sensor,
                    transform: JointTransform::IDENTITY,
                })
                .collect(),
        }
    }

    pub fn set(&mut self, sensor: SensorId, transform: JointTransform) {
        match self.sensors.iter_mut().find(|r| r.sensor == sensor) {
            Some(r) => r.transform = transform,
            None => self.sensors.push(SensorReading { sensor, transform }),
        }
    }

    pub fn get(&self, sensor: SensorId) -> Option<&JointTransform> {
        self.sensors
            .iter()
            .find(|r| r.sensor == sensor)
            .map(|r| &r.transform)
    }

    /// Check cardinality and return readings indexed by [`SensorId::index`].
    pub fn validated(&self) -> Result<[JointTransform; SensorId::COUNT], KinematicsError> {
        let mut slots: [Option<JointTransform>; SensorId::COUNT] = [None; SensorId::COUNT];
        for r in &self.sensors {
            let slot = &mut slots[r.sensor.index()];
            if slot.is_some() {
                return Err(KinematicsError::DuplicateSensor(r.sensor));
            }
            *slot = Some(r.transform);
        }
        let mut out = [JointTransform::IDENTITY; SensorId::COUNT];
        for s in SensorId::ALL {
            out[s.index()] = slots[s.index()].ok_or(KinematicsError::MissingSensor(s))?;
        }
        Ok(out)
    }
}

/// Map a sensor frame onto the manifest skeleton.
///
/// Returns a skeleton-local pose: parent-relative rotations, with positions
/// recomputed by forward kinematics from the root, which sits at the rest
/// root position displaced by the hips sensor position.
pub fn retarget(
    frame: &SensorFrame,
    manifest: &SkeletonManifest,
    fingers: f64,
) -> Result<PoseFull, KinematicsError> {
    let readings = frame.validated()?;
    if !(0.0..=1.0).contains(&fingers) {
        return Err(KinematicsError::InvalidInput(format!(
            "finger curl {fingers} outside [0, 1]"
        )));
    }

    let mut sensor_local = [Quat::IDENTITY; SensorId::COUNT];
    for s in SensorId::ALL {
        let t = &readings[s.index()];
        if !t.position.iter().all(|v| v.is_finite()) {
            return Err(KinematicsError::InvalidInput(format!(
                "sensor '{s}' position is not finite"
            )));
        }
        sensor_local[s.index()] = Quat::from_f32(t.rotation).normalize().map_err(|_| {
            KinematicsError::InvalidInput(format!("sensor '{s}' rotation has zero norm"))
        })?;
    }
    // Sensor parents precede children in `SensorId::ALL`.
    let mut sensor_global = [Quat::IDENTITY; SensorId::COUNT];
    for s in SensorId::ALL {
        let local = sensor_local[s.index()];
        sensor_global[s.index()] = match s.parent() {
            None => local,
            Some(p) => sensor_global[p.index()] * local,
        };
    }

    let joints = manifest.joints();
    let mut global = vec![Quat::IDENTITY; joints.len()];
    let mut local = vec![Quat::IDENTITY; joints.len()];
    // Interpolated joints look ahead to their target sensor's global rotation.
    let sensor_global_of = |joint: usize| match joints[joint].drive {
        JointDrive::Sensor(s) => sensor_global[s.index()],
        _ => unreachable!("interpolation endpoints are sensor joints"),
    };
    for (i, joint) in joints.iter().enumerate() {
        let parent_global = joint.parent.map(|p| global[p]);
        match joint.drive {
            JointDrive::Sensor(s) => {
                global[i] = sensor_global[s.index()];
                let parent_is_sensor_parent = match (joint.parent, s.parent()) {
                    (Some(p), Some(ps)) => p == manifest.sensor_joint(ps),
                    (None, None) => true,
                    _ => false,
                };
                local[i] = if parent_is_sensor_parent {
                    sensor_local[s.index()]
                } else {
                    relative(parent_global, global[i])
                };
            }
            JointDrive::Interpolated { from, to, fraction } => {
                global[i] = sensor_global_of(from).slerp(sensor_global_of(to), fraction);
                local[i] = relative(parent_global, global[i]);
            }
            JointDrive::Finger { curl } => {
                local[i] = Quat::IDENTITY.slerp(curl, fingers);
                global[i] = parent_global.unwrap_or(Quat::IDENTITY) * local[i];
            }
            JointDrive::Rigid => {
                local[i] = Quat::IDENTITY;
                global[i] = parent_global.unwrap_or(Quat::IDENTITY);
            }
        }
    }

    let hips_offset = Vec3::from_f32(readings[SensorId::Hips.index()].position);
    let root = manifest.rest_position(0) + hips_offset;
    let (positions, _) = manifest.forward(&local, root);

    Ok(PoseFull {
        space: SpaceFlag::SkeletonLocal,
        joints: positions
            .iter()
            .zip(&local)
            .map(|(p, q)| JointTransform::new(p.to_f32(), q.to_f32()))
            .collect(),
    })
}

fn relative(parent_global: Option<Quat>, global: Quat) -> Quat {
    match parent_global {
        None => global,
        Some(p) => (p.inverse() * global).normalize().unwrap_or(Quat::IDENTITY),
    }
}

/// Model-space positions recomputed from a pose's rotations and the rest offsets.
pub fn pose_forward_positions(pose: &PoseFull, manifest: &SkeletonManifest) -> Vec<Vec3> {
    let local: Vec<Quat> = pose
        .joints
        .iter()
        .map(|j| Quat::from_f32(j.rotation))
        .collect();
    let root = Vec3::from_f32(pose.joints[0].position);
    manifest.forward(&local, root).0
}

/// The manifest's rest pose as a skeleton-local [`PoseFull`].
pub fn rest_pose(manifest: &SkeletonManifest) -> PoseFull {
    PoseFull {
        space: SpaceFlag::SkeletonLocal,
        joints: manifest
            .rest_positions()
            .iter()
            .map(|p| JointTransform::new(p.to_f32(), Quat::IDENTITY.to_f32()))
            .collect(),
    }
}
