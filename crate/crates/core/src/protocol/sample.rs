//! Random generation of valid messages, for round-trip and fuzz testing.

use rand::Rng;

use super::codec::{Envelope, Header};
use super::types::*;

fn unit_quat(rng: &mut impl Rng) -> [f32; 4] {
    loop {
        let q: [f64; 4] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 0.1 {
            let out = q.map(|c| (c / n) as f32);
            let nf = out.iter().map(|c| c * c).sum::<f32>().sqrt();
            if (nf - 1.0).abs() <= 1e-6 {
                return out;
            }
        }
    }
}

pub fn joint(rng: &mut impl Rng) -> JointTransform {
    JointTransform {
        position: [
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        ],
        rotation: unit_quat(rng),
    }
}

// At most 2 bytes per char, so `max_chars` <= 127 keeps it under the u8 prefix.
fn string(rng: &mut impl Rng, max_chars: usize) -> String {
    let len = rng.gen_range(0..=max_chars);
    (0..len)
        .map(|_| match rng.gen_range(0..4) {
            0 => 'é',
            _ => rng.gen_range('a'..='z'),
        })
        .collect()
}

fn avatar_ref(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..=24);
    (0..n).map(|_| rng.gen_range('a'..='z')).collect()
}

fn locomotion(rng: &mut impl Rng) -> Locomotion {
    if rng.gen_bool(0.5) {
        Locomotion::Walk
    } else {
        Locomotion::Idle
    }
}

fn role(rng: &mut impl Rng) -> Role {
    Role::ALL[rng.gen_range(0..Role::ALL.len())]
}

fn phase(rng: &mut impl Rng) -> Phase {
    Phase::ALL[rng.gen_range(0..Phase::ALL.len())]
}

pub fn pose_full(rng: &mut impl Rng) -> PoseFull {
    PoseFull {
        space: if rng.gen_bool(0.5) {
            SpaceFlag::SkeletonLocal
        } else {
            SpaceFlag::World
        },
        joints: (0..POSE_FULL_JOINTS).map(|_| joint(rng)).collect(),
    }
}

pub fn pose_ik(rng: &mut impl Rng) -> PoseIk {
    let mut joints = [JointTransform::IDENTITY; POSE_IK_JOINTS];
    for j in &mut joints {
        *j = joint(rng);
    }
    PoseIk {
        joints,
        locomotion: locomotion(rng),
    }
}

pub fn transform_simple(rng: &mut impl Rng) -> TransformSimple {
    let yaw = loop {
        let y: f32 = rng.gen_range(-std::f32::consts::PI..=std::f32::consts::PI);
        if y > -std::f32::consts::PI {
            break y;
        }
    };
    TransformSimple {
        position: [
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-1.0..3.0),
            rng.gen_range(-20.0..20.0),
        ],
        yaw,
        locomotion: locomotion(rng),
        intensity: rng.gen_range(0.0..=1.0),
    }
}

pub fn pose(rng: &mut impl Rng) -> PosePayload {
    match rng.gen_range(0..3) {
        0 => PosePayload::Full(pose_full(rng)),
        1 => PosePayload::Ik(pose_ik(rng)),
        _ => PosePayload::Simple(transform_simple(rng)),
    }
}

pub fn snapshot(rng: &mut impl Rng) -> Snapshot {
    let n = rng.gen_range(0..6u32);
    let participants = (0..n)
        .map(|i| SnapshotEntry {
            participant_id: i * 3 + 1,
            role: role(rng),
            muted: rng.gen(),
            avatar_ref: avatar_ref(rng),
            last_pose: rng.gen_bool(0.7).then(|| CachedPose {
                seq: rng.gen(),
                timestamp_ms: rng.gen(),
                pose: pose(rng),
            }),
        })
        .collect();
    Snapshot {
        slide_index: rng.gen(),
        phase: phase(rng),
        participants,
    }
}

/// A random valid message of the requested type.
pub fn message(rng: &mut impl Rng, msg_type: MsgType) -> Message {
    match msg_type {
        MsgType::JoinRequest => Message::JoinRequest(JoinRequest {
            role: role(rng),
            display_name: string(rng, 40),
            avatar_ref: avatar_ref(rng),
        }),
        MsgType::JoinAccept => Message::JoinAccept(JoinAccept {
            participant_id: rng.gen(),
            role: role(rng),
            snapshot: snapshot(rng),
        }),
        MsgType::AvatarManifest => Message::AvatarManifest(AvatarManifest {
            participant_id: rng.gen(),
            role: role(rng),
            avatar_ref: avatar_ref(rng),
        }),
        MsgType::Snapshot => Message::Snapshot(snapshot(rng)),
        MsgType::PoseFull => Message::PoseFull(pose_full(rng)),
        MsgType::PoseIk => Message::PoseIk(pose_ik(rng)),
        MsgType::TransformSimple => Message::TransformSimple(transform_simple(rng)),
        MsgType::SlideCommand => Message::SlideCommand(SlideCommand {
            slide_index: rng.gen(),
        }),
        MsgType::MuteControl => Message::MuteControl(MuteControl {
            target_id: rng.gen(),
            muted: rng.gen(),
        }),
        MsgType::PhaseChange => Message::PhaseChange(PhaseChange { phase: phase(rng) }),
        MsgType::AudioFrame => {
            let len = rng.gen_range(0..=960);
            Message::AudioFrame(AudioFrame {
                data: (0..len).map(|_| rng.gen()).collect(),
            })
        }
        MsgType::Leave => Message::Leave,
        MsgType::Heartbeat => Message::Heartbeat,
        MsgType::Reject => Message::Reject(Reject {
            code: RejectCode::ALL[rng.gen_range(0..RejectCode::ALL.len())],
            ref_seq: rng.gen(),
            detail: string(rng, 60),
        }),
        MsgType::PhaseExclusion => Message::PhaseExclusion(PhaseExclusion { phase: phase(rng) }),
    }
}

pub fn header(rng: &mut impl Rng) -> Header {
    Header {
        room_id: rng.gen(),
        sender_id: rng.gen(),
        seq: rng.gen(),
        timestamp_ms: rng.gen(),
    }
}

/// A random envelope of a uniformly chosen message type.
pub fn envelope(rng: &mut impl Rng) -> Envelope {
    let msg_type = MsgType::ALL[rng.gen_range(0..MsgType::ALL.len())];
    Envelope {
        header: header(rng),
        message: message(rng, msg_type),
    }
}
