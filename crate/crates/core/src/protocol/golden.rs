//! Fixed example messages, one per type, whose encodings are checked in under
//! `testdata/golden/` as a cross-implementation conformance suite.
//!
//! Every float is exactly representable and every quaternion is built from
//! 0.6/0.8 components, so the bytes do not depend on platform math.

use super::*;

/// Header shared by the golden frames.
pub const GOLDEN_HEADER: Header = Header {
    room_id: 7,
    sender_id: 3,
    seq: 42,
    timestamp_ms: 1_700_000_000_123,
};

const ROTATIONS: [[f32; 4]; 4] = [
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.6, 0.0, 0.8],
    [0.6, 0.0, 0.0, 0.8],
    [0.0, 0.0, 0.6, 0.8],
];

fn joint(i: usize) -> JointTransform {
    let f = i as f32;
    JointTransform::new([f * 0.25, 1.0 + f * 0.125, -f * 0.5], ROTATIONS[i % 4])
}

fn pose_full() -> PoseFull {
    PoseFull {
        space: SpaceFlag::SkeletonLocal,
        joints: (0..POSE_FULL_JOINTS).map(joint).collect(),
    }
}

fn pose_ik() -> PoseIk {
    PoseIk {
        joints: std::array::from_fn(joint),
        locomotion: Locomotion::Walk,
    }
}

fn transform_simple() -> TransformSimple {
    TransformSimple {
        position: [1.5, 0.0, -2.25],
        yaw: 0.5,
        locomotion: Locomotion::Walk,
        intensity: 0.75,
    }
}

fn snapshot() -> Snapshot {
    Snapshot {
        slide_index: 4,
        phase: Phase::OpenDiscussion,
        participants: vec![
            SnapshotEntry {
                participant_id: 1,
                role: Role::Presenter,
                muted: false,
                avatar_ref: "avatar:presenter".into(),
                last_pose: None,
            },
            SnapshotEntry {
                participant_id: 2,
                role: Role::Audience,
                muted: true,
                avatar_ref: "avatar:audience/2".into(),
                last_pose: Some(CachedPose {
                    seq: 9,
                    timestamp_ms: 1_700_000_000_000,
                    pose: PosePayload::Simple(transform_simple()),
                }),
            },
        ],
    }
}

/// `(file stem, message)` for every message type, in type-code order.
pub fn golden_messages() -> Vec<(&'static str, Envelope)> {
    let m = |name: &'static str, message: Message| (name, Envelope::new(GOLDEN_HEADER, message));
    vec![
        m(
            "join_request",
            Message::JoinRequest(JoinRequest {
                role: Role::Examiner,
                display_name: "Dr. Ada Ríos".into(),
                avatar_ref: "avatar:examiner/ada".into(),
            }),
        ),
        m(
            "join_accept",
            Message::JoinAccept(JoinAccept {
                participant_id: 3,
                role: Role::Examiner,
                snapshot: snapshot(),
            }),
        ),
        m(
            "avatar_manifest",
            Message::AvatarManifest(AvatarManifest {
                participant_id: 3,
                role: Role::Examiner,
                avatar_ref: "avatar:examiner/ada".into(),
            }),
        ),
        m("snapshot", Message::Snapshot(snapshot())),
        m("pose_full", Message::PoseFull(pose_full())),
        m("pose_ik", Message::PoseIk(pose_ik())),
        m(
            "transform_simple",
            Message::TransformSimple(transform_simple()),
        ),
        m(
            "slide_command",
            Message::SlideCommand(SlideCommand { slide_index: 12 }),
        ),
        m(
            "mute_control",
            Message::MuteControl(MuteControl {
                target_id: 5,
                muted: true,
            }),
        ),
        m(
            "phase_change",
            Message::PhaseChange(PhaseChange {
                phase: Phase::ClosedDiscussion,
            }),
        ),
        m(
            "audio_frame",
            Message::AudioFrame(AudioFrame {
                data: (0u8..16).collect(),
            }),
        ),
        m("leave", Message::Leave),
        m("heartbeat", Message::Heartbeat),
        m(
            "reject",
            Message::Reject(Reject {
                code: RejectCode::PresenterConflict,
                ref_seq: 42,
                detail: "presenter already present".into(),
            }),
        ),
        m(
            "phase_exclusion",
            Message::PhaseExclusion(PhaseExclusion {
                phase: Phase::ClosedDiscussion,
            }),
        ),
    ]
}
