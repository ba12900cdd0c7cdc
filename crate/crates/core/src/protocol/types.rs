//! Message payload types carried inside an [`Envelope`](super::Envelope).

use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of joints in a full-body presenter pose.
pub const POSE_FULL_JOINTS: usize = 59;
/// Number of joints in a head-and-hands IK pose.
pub const POSE_IK_JOINTS: usize = 9;

/// Allowed deviation of a wire quaternion's norm from 1.
pub const QUAT_NORM_TOLERANCE: f32 = 1e-3;

/// Wire message type byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum MsgType {
    JoinRequest = 0x01,
    JoinAccept = 0x02,
    AvatarManifest = 0x03,
    Snapshot = 0x04,
    PoseFull = 0x10,
    PoseIk = 0x11,
    TransformSimple = 0x12,
    SlideCommand = 0x20,
    MuteControl = 0x21,
    PhaseChange = 0x22,
    AudioFrame = 0x30,
    Leave = 0x40,
    Heartbeat = 0x41,
    Reject = 0x50,
    PhaseExclusion = 0x51,
}

impl MsgType {
    pub const ALL: [MsgType; 15] = [
        MsgType::JoinRequest,
        MsgType::JoinAccept,
        MsgType::AvatarManifest,
        MsgType::Snapshot,
        MsgType::PoseFull,
        MsgType::PoseIk,
        MsgType::TransformSimple,
        MsgType::SlideCommand,
        MsgType::MuteControl,
        MsgType::PhaseChange,
        MsgType::AudioFrame,
        MsgType::Leave,
        MsgType::Heartbeat,
        MsgType::Reject,
        MsgType::PhaseExclusion,
    ];

    pub fn from_u8(byte: u8) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| *t as u8 == byte)
    }

    pub fn stream_class(self) -> StreamClass {
        match self {
            MsgType::PoseFull | MsgType::PoseIk | MsgType::TransformSimple => StreamClass::Pose,
            MsgType::SlideCommand | MsgType::MuteControl | MsgType::PhaseChange => {
                StreamClass::Control
            }
            MsgType::AudioFrame => StreamClass::Audio,
            _ => StreamClass::Session,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::JoinRequest => "join_request",
            MsgType::JoinAccept => "join_accept",
            MsgType::AvatarManifest => "avatar_manifest",
            MsgType::Snapshot => "snapshot",
            MsgType::PoseFull => "pose_full",
            MsgType::PoseIk => "pose_ik",
            MsgType::TransformSimple => "transform_simple",
            MsgType::SlideCommand => "slide_command",
            MsgType::MuteControl => "mute_control",
            MsgType::PhaseChange => "phase_change",
            MsgType::AudioFrame => "audio_frame",
            MsgType::Leave => "leave",
            MsgType::Heartbeat => "heartbeat",
            MsgType::Reject => "reject",
            MsgType::PhaseExclusion => "phase_exclusion",
        }
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sequence numbers are monotonic per (sender, stream class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamClass {
    Session,
    Pose,
    Control,
    Audio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Role {
    Presenter = 0,
    Examiner = 1,
    Audience = 2,
    OnsiteBridge = 3,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::Presenter,
        Role::Examiner,
        Role::Audience,
        Role::OnsiteBridge,
    ];

    pub fn from_u8(byte: u8) -> Option<Self> {
        Self::ALL.get(byte as usize).copied()
    }

    /// Mute state a participant of this role starts with.
    pub fn muted_on_join(self) -> bool {
        !matches!(self, Role::Presenter | Role::OnsiteBridge)
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Phase {
    #[default]
    Presentation = 0,
    OpenDiscussion = 1,
    ClosedDiscussion = 2,
    Announcement = 3,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Presentation,
        Phase::OpenDiscussion,
        Phase::ClosedDiscussion,
        Phase::Announcement,
    ];

    pub fn from_u8(byte: u8) -> Option<Self> {
        Self::ALL.get(byte as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Locomotion {
    #[default]
    Idle = 0,
    Walk = 1,
}

impl Locomotion {
    pub fn from_u8(byte: u8) -> Option<Self> {
        match byte {
            0 => Some(Locomotion::Idle),
            1 => Some(Locomotion::Walk),
            _ => None,
        }
    }
}

/// Whether pose positions/rotations are skeleton-local or world space.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum SpaceFlag {
    /// Rotations are parent-relative; positions are forward-kinematics results
    /// in the skeleton frame, anchored at the root joint's translation.
    #[default]
    SkeletonLocal = 0,
    /// Rotations and positions are both world space.
    World = 1,
}

impl SpaceFlag {
    pub fn from_u8(byte: u8) -> Option<Self> {
        match byte {
            0 => Some(SpaceFlag::SkeletonLocal),
            1 => Some(SpaceFlag::World),
            _ => None,
        }
    }
}

/// One joint: position in meters and a unit quaternion in (x, y, z, w) order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointTransform {
    pub position: [f32; 3],
    pub rotation: [f32; 4],
}

impl JointTransform {
    pub const IDENTITY: JointTransform = JointTransform {
        position: [0.0; 3],
        rotation: [0.0, 0.0, 0.0, 1.0],
    };

    pub fn new(position: [f32; 3], rotation: [f32; 4]) -> Self {
        Self { position, rotation }
    }

    pub fn rotation_norm(&self) -> f32 {
        let [x, y, z, w] = self.rotation;
        (x * x + y * y + z * z + w * w).sqrt()
    }
}

impl Default for JointTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFull {
    pub space: SpaceFlag,
    pub joints: Vec<JointTransform>,
}

impl PoseFull {
    pub fn root(&self) -> Option<&JointTransform> {
        self.joints.first()
    }
}

/// Joint order of [`PoseIk`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum IkJoint {
    Hips = 0,
    Spine = 1,
    Head = 2,
    LeftUpperArm = 3,
    LeftForearm = 4,
    LeftHand = 5,
    RightUpperArm = 6,
    RightForearm = 7,
    RightHand = 8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseIk {
    pub joints: [JointTransform; POSE_IK_JOINTS],
    pub locomotion: Locomotion,
}

impl PoseIk {
    pub fn joint(&self, joint: IkJoint) -> &JointTransform {
        &self.joints[joint as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSimple {
    pub position: [f32; 3],
    pub yaw: f32,
    pub locomotion: Locomotion,
    pub intensity: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlideCommand {
    pub slide_index: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MuteControl {
    pub target_id: u32,
    pub muted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseChange {
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinRequest {
    pub role: Role,
    pub display_name: String,
    pub avatar_ref: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinAccept {
    pub participant_id: u32,
    pub role: Role,
    pub snapshot: Snapshot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvatarManifest {
    pub participant_id: u32,
    pub role: Role,
    pub avatar_ref: String,
}

/// A pose payload in its role's native form.
#[derive(Debug, Clone, PartialEq)]
pub enum PosePayload {
    Full(PoseFull),
    Ik(PoseIk),
    Simple(TransformSimple),
}

impl PosePayload {
    pub fn msg_type(&self) -> MsgType {
        match self {
            PosePayload::Full(_) => MsgType::PoseFull,
            PosePayload::Ik(_) => MsgType::PoseIk,
            PosePayload::Simple(_) => MsgType::TransformSimple,
        }
    }

    /// Root position: hips for joint poses, the transform itself otherwise.
    pub fn root_position(&self) -> [f32; 3] {
        match self {
            PosePayload::Full(p) => p.joints[0].position,
            PosePayload::Ik(p) => p.joints[IkJoint::Hips as usize].position,
            PosePayload::Simple(t) => t.position,
        }
    }
}

/// Last cached pose of a participant as stored by the relay.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedPose {
    pub seq: u32,
    pub timestamp_ms: u64,
    pub pose: PosePayload,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEntry {
    pub participant_id: u32,
    pub role: Role,
    pub muted: bool,
    pub avatar_ref: String,
    /// `None` means the participant has not sent a pose yet.
    pub last_pose: Option<CachedPose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub slide_index: u16,
    pub phase: Phase,
    pub participants: Vec<SnapshotEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioFrame {
    pub data: Vec<u8>,
}

/// Server rejection codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum RejectCode {
    RoomFull = 1,
    PresenterConflict = 2,
    BadAvatarRef = 3,
    RoleStreamMismatch = 4,
    AuthorityViolation = 5,
    SlideOutOfRange = 6,
    UnknownParticipant = 7,
    PhaseRestricted = 8,
    Malformed = 9,
    NotJoined = 10,
    SenderMismatch = 11,
    UnknownRoom = 12,
    AlreadyJoined = 13,
}

impl RejectCode {
    pub const ALL: [RejectCode; 13] = [
        RejectCode::RoomFull,
        RejectCode::PresenterConflict,
        RejectCode::BadAvatarRef,
        RejectCode::RoleStreamMismatch,
        RejectCode::AuthorityViolation,
        RejectCode::SlideOutOfRange,
        RejectCode::UnknownParticipant,
        RejectCode::PhaseRestricted,
        RejectCode::Malformed,
        RejectCode::NotJoined,
        RejectCode::SenderMismatch,
        RejectCode::UnknownRoom,
        RejectCode::AlreadyJoined,
    ];

    pub fn from_u8(byte: u8) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| *c as u8 == byte)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub code: RejectCode,
    /// Sequence number of the offending message (0 when not applicable).
    pub ref_seq: u32,
    pub detail: String,
}

/// Sent to a participant removed from the room by a phase transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseExclusion {
    pub phase: Phase,
}

/// A typed wire message.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    JoinRequest(JoinRequest),
    JoinAccept(JoinAccept),
    AvatarManifest(AvatarManifest),
    Snapshot(Snapshot),
    PoseFull(PoseFull),
    PoseIk(PoseIk),
    TransformSimple(TransformSimple),
    SlideCommand(SlideCommand),
    MuteControl(MuteControl),
    PhaseChange(PhaseChange),
    AudioFrame(AudioFrame),
    Leave,
    Heartbeat,
    Reject(Reject),
    PhaseExclusion(PhaseExclusion),
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::JoinRequest(_) => MsgType::JoinRequest,
            Message::JoinAccept(_) => MsgType::JoinAccept,
            Message::AvatarManifest(_) => MsgType::AvatarManifest,
            Message::Snapshot(_) => MsgType::Snapshot,
            Message::PoseFull(_) => MsgType::PoseFull,
            Message::PoseIk(_) => MsgType::PoseIk,
            Message::TransformSimple(_) => MsgType::TransformSimple,
            Message::SlideCommand(_) => MsgType::SlideCommand,
            Message::MuteControl(_) => MsgType::MuteControl,
            Message::PhaseChange(_) => MsgType::PhaseChange,
            Message::AudioFrame(_) => MsgType::AudioFrame,
            Message::Leave => MsgType::Leave,
            Message::Heartbeat => MsgType::Heartbeat,
            Message::Reject(_) => MsgType::Reject,
            Message::PhaseExclusion(_) => MsgType::PhaseExclusion,
        }
    }

    pub fn into_pose(self) -> Option<PosePayload> {
        match self {
            Message::PoseFull(p) => Some(PosePayload::Full(p)),
            Message::PoseIk(p) => Some(PosePayload::Ik(p)),
            Message::TransformSimple(t) => Some(PosePayload::Simple(t)),
            _ => None,
        }
    }
}

impl From<PosePayload> for Message {
    fn from(pose: PosePayload) -> Self {
        match pose {
            PosePayload::Full(p) => Message::PoseFull(p),
            PosePayload::Ik(p) => Message::PoseIk(p),
            PosePayload::Simple(t) => Message::TransformSimple(t),
        }
    }
}
