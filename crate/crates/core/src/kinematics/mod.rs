//! Skeleton model, sensor retargeting and analytic IK.
//!
//! Coordinates are meters, +y up, avatars face +z and their left side is +x.
//! Internal math runs in f64; poses leave through the f32 wire types.

mod ik;
mod math;
mod retarget;
mod skeleton;

use std::fmt;

use thiserror::Error;

pub use ik::{
    rest_pose_ik, solve_ik_pose, solve_two_bone, IkConfig, IkSolver, IkTargets, TwoBoneSolution,
};
pub use math::{Quat, Vec3};
pub use retarget::{pose_forward_positions, rest_pose, retarget, SensorFrame, SensorReading};
pub use skeleton::{
    CurlSpec, Joint, JointDrive, JointSpec, ManifestFile, ParentRef, SensorId, SkeletonManifest,
    CANONICAL_MANIFEST_JSON,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    ZeroBoneLength,
    CollinearPole,
    NonFinite,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Degeneracy::ZeroBoneLength => "zero bone length",
            Degeneracy::CollinearPole => "pole collinear with reach direction",
            Degeneracy::NonFinite => "non-finite input",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("sensor '{0}' missing from frame")]
    MissingSensor(SensorId),
    #[error("sensor '{0}' appears twice in frame")]
    DuplicateSensor(SensorId),
    #[error("unmapped joint: {0}")]
    UnmappedJoint(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(Degeneracy),
    #[error("quaternion has zero norm")]
    ZeroNorm,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
