//! The 59-joint skeleton manifest and forward kinematics.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::math::{Quat, Vec3};
use super::KinematicsError;
use crate::protocol::POSE_FULL_JOINTS;

/// The canonical manifest shipped with the crate.
pub const CANONICAL_MANIFEST_JSON: &str = include_str!("../../assets/skeleton59.json");

/// The 17 body sensors of the presenter's inertial suit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorId {
    Hips,
    Spine,
    Head,
    LeftShoulder,
    LeftUpperArm,
    LeftForearm,
    LeftHand,
    RightShoulder,
    RightUpperArm,
    RightForearm,
    RightHand,
    LeftThigh,
    LeftCalf,
    LeftFoot,
    RightThigh,
    RightCalf,
    RightFoot,
}

impl SensorId {
    pub const COUNT: usize = 17;

    pub const ALL: [SensorId; 17] = [
        SensorId::Hips,
        SensorId::Spine,
        SensorId::Head,
        SensorId::LeftShoulder,
        SensorId::LeftUpperArm,
        SensorId::LeftForearm,
        SensorId::LeftHand,
        SensorId::RightShoulder,
        SensorId::RightUpperArm,
        SensorId::RightForearm,
        SensorId::RightHand,
        SensorId::LeftThigh,
        SensorId::LeftCalf,
        SensorId::LeftFoot,
        SensorId::RightThigh,
        SensorId::RightCalf,
        SensorId::RightFoot,
    ];

    /// The sensor whose segment this sensor's rotation is relative to.
    pub fn parent(self) -> Option<SensorId> {
        use SensorId::*;
        match self {
            Hips => None,
            Spine | LeftThigh | RightThigh => Some(Hips),
            Head | LeftShoulder | RightShoulder => Some(Spine),
            LeftUpperArm => Some(LeftShoulder),
            LeftForearm => Some(LeftUpperArm),
            LeftHand => Some(LeftForearm),
            RightUpperArm => Some(RightShoulder),
            RightForearm => Some(RightUpperArm),
            RightHand => Some(RightForearm),
            LeftCalf => Some(LeftThigh),
            LeftFoot => Some(LeftCalf),
            RightCalf => Some(RightThigh),
            RightFoot => Some(RightCalf),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        use SensorId::*;
        match self {
            Hips => "hips",
            Spine => "spine",
            Head => "head",
            LeftShoulder => "left_shoulder",
            LeftUpperArm => "left_upper_arm",
            LeftForearm => "left_forearm",
            LeftHand => "left_hand",
            RightShoulder => "right_shoulder",
            RightUpperArm => "right_upper_arm",
            RightForearm => "right_forearm",
            RightHand => "right_hand",
            LeftThigh => "left_thigh",
            LeftCalf => "left_calf",
            LeftFoot => "left_foot",
            RightThigh => "right_thigh",
            RightCalf => "right_calf",
            RightFoot => "right_foot",
        }
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorId {
    type Err = KinematicsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SensorId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| KinematicsError::InvalidManifest(format!("unknown sensor id '{s}'")))
    }
}

/// Parent reference in the manifest file: a joint name, an index, or null/-1 for the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParentRef {
    Index(i32),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurlSpec {
    pub axis: Vec3,
    pub degrees: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    #[serde(default)]
    pub parent: Option<ParentRef>,
    pub rest_offset: Vec3,
    /// Local rotation at full finger curl. Only finger joints carry one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curl: Option<CurlSpec>,
}

/// On-disk manifest layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub joints: Vec<JointSpec>,
    pub sensor_map: BTreeMap<String, String>,
}

/// How retargeting drives a joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointDrive {
    /// Carries a sensor's rotation.
    Sensor(SensorId),
    /// Untracked joint between two sensor-driven joints; receives `fraction`
    /// of the rotation delta from `from` to `to` (both joint indices).
    Interpolated {
        from: usize,
        to: usize,
        fraction: f64,
    },
    /// Finger joint blended from rest toward `curl` by the curl scalar.
    Finger { curl: Quat },
    /// Follows its parent rigidly.
    Rigid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub rest_offset: Vec3,
    pub drive: JointDrive,
}

/// Validated, immutable 59-joint skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonManifest {
    joints: Vec<Joint>,
    sensor_joint: [usize; SensorId::COUNT],
    by_name: HashMap<String, usize>,
    rest_positions: Vec<Vec3>,
}

impl SkeletonManifest {
    /// The canonical humanoid manifest bundled with the crate.
    pub fn canonical() -> Self {
        Self::from_json(CANONICAL_MANIFEST_JSON).expect("bundled manifest is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KinematicsError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            KinematicsError::InvalidManifest(format!("{}: {e}", path.as_ref().display()))
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, KinematicsError> {
        let file: ManifestFile = serde_json::from_str(text)
            .map_err(|e| KinematicsError::InvalidManifest(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: ManifestFile) -> Result<Self, KinematicsError> {
        let invalid = |msg: String| Err(KinematicsError::InvalidManifest(msg));
        if file.joints.len() != POSE_FULL_JOINTS {
            return invalid(format!(
                "expected {POSE_FULL_JOINTS} joints, found {}",
                file.joints.len()
            ));
        }
        let mut by_name = HashMap::new();
        for (i, j) in file.joints.iter().enumerate() {
            if by_name.insert(j.name.clone(), i).is_some() {
                return invalid(format!("duplicate joint name '{}'", j.name));
            }
        }

        let mut parents = Vec::with_capacity(file.joints.len());
        for (i, j) in file.joints.iter().enumerate() {
            let parent = match &j.parent {
                None => None,
                Some(ParentRef::Index(-1)) => None,
                Some(ParentRef::Index(p)) if *p >= 0 => Some(*p as usize),
                Some(ParentRef::Index(p)) => {
                    return invalid(format!("joint '{}' has parent {p}", j.name))
                }
                Some(ParentRef::Name(n)) => match by_name.get(n) {
                    Some(&p) => Some(p),
                    None => return invalid(format!("joint '{}' has unknown parent '{n}'", j.name)),
                },
            };
            match parent {
                None if i != 0 => return invalid(format!("joint '{}' is a second root", j.name)),
                Some(_) if i == 0 => return invalid("first joint must be the root".to_string()),
                Some(p) if p >= i => {
                    return invalid(format!("joint '{}' listed before its parent", j.name))
                }
                _ => {}
            }
            if !j.rest_offset.is_finite() {
                return invalid(format!("joint '{}' has a non-finite rest offset", j.name));
            }
            if parent.is_some() && !(j.rest_offset.length() > 0.0) {
                return invalid(format!("joint '{}' has zero bone length", j.name));
            }
            parents.push(parent);
        }

        let mut sensor_joint = [usize::MAX; SensorId::COUNT];
        for (sensor_name, joint_name) in &file.sensor_map {
            let sensor: SensorId = sensor_name.parse()?;
            let Some(&joint) = by_name.get(joint_name) else {
                return Err(KinematicsError::UnmappedJoint(joint_name.clone()));
            };
            if sensor_joint.contains(&joint) {
                return invalid(format!("joint '{joint_name}' mapped by two sensors"));
            }
            sensor_joint[sensor.index()] = joint;
        }
        if let Some(missing) = SensorId::ALL
            .iter()
            .find(|s| sensor_joint[s.index()] == usize::MAX)
        {
            return Err(KinematicsError::UnmappedJoint(format!(
                "no joint for sensor '{missing}'"
            )));
        }
        if sensor_joint[SensorId::Hips.index()] != 0 {
            return invalid("hips sensor must drive the root joint".to_string());
        }
        // Each sensor joint must sit below its parent sensor's joint.
        for s in SensorId::ALL {
            if let Some(ps) = s.parent() {
                let (child, anc) = (sensor_joint[s.index()], sensor_joint[ps.index()]);
                if !is_ancestor(&parents, anc, child) {
                    return invalid(format!(
                        "joint for sensor '{s}' is not below the joint for '{ps}'"
                    ));
                }
            }
        }

        let drives = classify(&file, &parents, &sensor_joint)?;
        let joints: Vec<Joint> = file
            .joints
            .into_iter()
            .zip(parents)
            .zip(drives)
            .map(|((spec, parent), drive)| Joint {
                name: spec.name,
                parent,
                rest_offset: spec.rest_offset,
                drive,
            })
            .collect();

        let mut rest_positions: Vec<Vec3> = Vec::with_capacity(joints.len());
        for j in &joints {
            let p = match j.parent {
                None => j.rest_offset,
                Some(p) => rest_positions[p] + j.rest_offset,
            };
            rest_positions.push(p);
        }

        Ok(Self {
            joints,
            sensor_joint,
            by_name,
            rest_positions,
        })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn sensor_joint(&self, sensor: SensorId) -> usize {
        self.sensor_joint[sensor.index()]
    }

    /// Rest position of every joint in the skeleton frame.
    pub fn rest_positions(&self) -> &[Vec3] {
        &self.rest_positions
    }

    pub fn rest_position(&self, joint: usize) -> Vec3 {
        self.rest_positions[joint]
    }

    /// Length of the bone ending at `joint`.
    pub fn bone_length(&self, joint: usize) -> f64 {
        self.joints[joint].rest_offset.length()
    }

    /// Forward kinematics from parent-relative rotations. Returns model-space
    /// positions and rotations; the root is placed at `root_position`.
    pub fn forward(&self, local: &[Quat], root_position: Vec3) -> (Vec<Vec3>, Vec<Quat>) {
        assert_eq!(local.len(), self.joints.len(), "one rotation per joint");
        let mut positions: Vec<Vec3> = Vec::with_capacity(local.len());
        let mut globals: Vec<Quat> = Vec::with_capacity(local.len());
        for (j, q) in self.joints.iter().zip(local) {
            match j.parent {
                None => {
                    positions.push(root_position);
                    globals.push(*q);
                }
                Some(p) => {
                    positions.push(positions[p] + globals[p].rotate(j.rest_offset));
                    globals.push(globals[p] * *q);
                }
            }
        }
        (positions, globals)
    }
}

fn is_ancestor(parents: &[Option<usize>], ancestor: usize, mut joint: usize) -> bool {
    while let Some(p) = parents[joint] {
        if p == ancestor {
            return true;
        }
        joint = p;
    }
    false
}

fn depth_between(parents: &[Option<usize>], ancestor: usize, mut joint: usize) -> usize {
    let mut d = 0;
    while joint != ancestor {
        joint = parents[joint].expect("ancestor on path");
        d += 1;
    }
    d
}

fn classify(
    file: &ManifestFile,
    parents: &[Option<usize>],
    sensor_joint: &[usize; SensorId::COUNT],
) -> Result<Vec<JointDrive>, KinematicsError> {
    let n = parents.len();
    let mut first_child = vec![None; n];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            if first_child[p].is_none() {
                first_child[p] = Some(i);
            }
        }
    }
    let sensor_of = |joint: usize| {
        SensorId::ALL
            .iter()
            .copied()
            .find(|s| sensor_joint[s.index()] == joint)
    };

    let mut drives = Vec::with_capacity(n);
    for (i, spec) in file.joints.iter().enumerate() {
        if let Some(s) = sensor_of(i) {
            if spec.curl.is_some() {
                return Err(KinematicsError::InvalidManifest(format!(
                    "sensor joint '{}' cannot carry a curl",
                    spec.name
                )));
            }
            drives.push(JointDrive::Sensor(s));
            continue;
        }
        if let Some(curl) = &spec.curl {
            drives.push(JointDrive::Finger {
                curl: Quat::from_axis_angle(curl.axis, curl.degrees.to_radians()),
            });
            continue;
        }
        // Nearest sensor-driven ancestor.
        let mut anc = parents[i];
        while let Some(a) = anc {
            if sensor_of(a).is_some() {
                break;
            }
            anc = parents[a];
        }
        // Sensor-driven joint reached by following first children.
        let mut down = first_child[i];
        let mut target = None;
        while let Some(c) = down {
            if sensor_of(c).is_some() {
                target = Some(c);
                break;
            }
            down = first_child[c];
        }
        drives.push(match (anc, target) {
            (Some(from), Some(to)) if is_ancestor(parents, from, to) => {
                let k = depth_between(parents, from, i) as f64;
                let m = depth_between(parents, from, to) as f64;
                JointDrive::Interpolated {
                    from,
                    to,
                    fraction: k / m,
                }
            }
            _ => JointDrive::Rigid,
        });
    }
    Ok(drives)
}
