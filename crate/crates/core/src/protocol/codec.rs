//! Bit-exact little-endian encoding of envelopes and payloads.
//!
//! Header layout (26 bytes):
//!
//! ```text
//! 0  magic        [0x48, 0x50]
//! 2  version      u8 (= 1)
//! 3  msg_type     u8
//! 4  room_id      u32
//! 8  sender_id    u32
//! 12 seq          u32
//! 16 timestamp_ms u64
//! 24 payload_len  u16
//! ```

use super::error::ProtocolError;
use super::types::*;

pub const MAGIC: [u8; 2] = [0x48, 0x50];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 26;
pub const JOINT_TRANSFORM_LEN: usize = 28;
pub const POSE_FULL_PAYLOAD_LEN: usize = 2 + POSE_FULL_JOINTS * JOINT_TRANSFORM_LEN;
pub const POSE_IK_PAYLOAD_LEN: usize = 1 + POSE_IK_JOINTS * JOINT_TRANSFORM_LEN + 1;
pub const TRANSFORM_SIMPLE_PAYLOAD_LEN: usize = 12 + 4 + 1 + 4;
pub const POSE_FULL_MESSAGE_LEN: usize = HEADER_LEN + POSE_FULL_PAYLOAD_LEN;
pub const POSE_IK_MESSAGE_LEN: usize = HEADER_LEN + POSE_IK_PAYLOAD_LEN;
pub const MAX_PAYLOAD_LEN: usize = u16::MAX as usize;

/// Quaternions closer than this to unit norm are passed through untouched so
/// that already-normalized values round-trip bit for bit.
const RENORMALIZE_THRESHOLD: f32 = 1e-6;

/// Header fields supplied by the sender. `msg_type` and `payload_len` are
/// derived from the message.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Header {
    pub room_id: u32,
    pub sender_id: u32,
    pub seq: u32,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub header: Header,
    pub message: Message,
}

impl Envelope {
    pub fn new(header: Header, message: Message) -> Self {
        Self { header, message }
    }

    pub fn encode(&self) -> Result<Vec<u8>, ProtocolError> {
        encode(&self.header, &self.message)
    }
}

/// Parsed fixed header, including the derived fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub header: Header,
    pub msg_type: MsgType,
    pub payload_len: u16,
}

pub fn pose_payload_len(msg_type: MsgType) -> Option<usize> {
    match msg_type {
        MsgType::PoseFull => Some(POSE_FULL_PAYLOAD_LEN),
        MsgType::PoseIk => Some(POSE_IK_PAYLOAD_LEN),
        MsgType::TransformSimple => Some(TRANSFORM_SIMPLE_PAYLOAD_LEN),
        _ => None,
    }
}

/// Encode a message with the given header into a single frame.
pub fn encode(header: &Header, message: &Message) -> Result<Vec<u8>, ProtocolError> {
    let mut out = Vec::with_capacity(HEADER_LEN + 64);
    encode_into(header, message, &mut out)?;
    Ok(out)
}

/// Append an encoded frame to `out`. On error `out` is left unchanged.
pub fn encode_into(
    header: &Header,
    message: &Message,
    out: &mut Vec<u8>,
) -> Result<(), ProtocolError> {
    let start = out.len();
    write_header_placeholder(out, header, message.msg_type());
    let result = write_payload(message, out);
    match result {
        Ok(()) => finish_frame(out, start),
        Err(e) => {
            out.truncate(start);
            Err(e)
        }
    }
}

/// Encode a frame whose payload is already serialized. Used by the relay to
/// build snapshots without re-encoding cached poses.
pub fn encode_raw(
    header: &Header,
    msg_type: MsgType,
    payload: &[u8],
) -> Result<Vec<u8>, ProtocolError> {
    if payload.len() > MAX_PAYLOAD_LEN {
        return Err(ProtocolError::invariant(format!(
            "payload of {} bytes exceeds u16 length",
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    write_header_placeholder(&mut out, header, msg_type);
    out.extend_from_slice(payload);
    finish_frame(&mut out, 0)?;
    Ok(out)
}

fn write_header_placeholder(out: &mut Vec<u8>, header: &Header, msg_type: MsgType) {
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type as u8);
    out.extend_from_slice(&header.room_id.to_le_bytes());
    out.extend_from_slice(&header.sender_id.to_le_bytes());
    out.extend_from_slice(&header.seq.to_le_bytes());
    out.extend_from_slice(&header.timestamp_ms.to_le_bytes());
    out.extend_from_slice(&[0, 0]);
}

fn finish_frame(out: &mut Vec<u8>, start: usize) -> Result<(), ProtocolError> {
    let payload_len = out.len() - start - HEADER_LEN;
    if payload_len > MAX_PAYLOAD_LEN {
        out.truncate(start);
        return Err(ProtocolError::invariant(format!(
            "payload of {payload_len} bytes exceeds u16 length"
        )));
    }
    out[start + 24..start + 26].copy_from_slice(&(payload_len as u16).to_le_bytes());
    Ok(())
}

/// Serialize only the payload of `message`.
pub fn encode_payload(message: &Message) -> Result<Vec<u8>, ProtocolError> {
    let mut out = Vec::new();
    write_payload(message, &mut out)?;
    Ok(out)
}

fn write_payload(message: &Message, out: &mut Vec<u8>) -> Result<(), ProtocolError> {
    match message {
        Message::JoinRequest(m) => {
            out.push(m.role as u8);
            write_str8(out, &m.display_name, "display_name")?;
            write_str8(out, &m.avatar_ref, "avatar_ref")?;
        }
        Message::JoinAccept(m) => {
            out.extend_from_slice(&m.participant_id.to_le_bytes());
            out.push(m.role as u8);
            write_snapshot(out, &m.snapshot)?;
        }
        Message::AvatarManifest(m) => {
            out.extend_from_slice(&m.participant_id.to_le_bytes());
            out.push(m.role as u8);
            write_str8(out, &m.avatar_ref, "avatar_ref")?;
        }
        Message::Snapshot(s) => write_snapshot(out, s)?,
        Message::PoseFull(p) => write_pose_full(out, p)?,
        Message::PoseIk(p) => write_pose_ik(out, p)?,
        Message::TransformSimple(t) => write_transform_simple(out, t)?,
        Message::SlideCommand(s) => out.extend_from_slice(&s.slide_index.to_le_bytes()),
        Message::MuteControl(m) => {
            out.extend_from_slice(&m.target_id.to_le_bytes());
            out.push(m.muted as u8);
        }
        Message::PhaseChange(p) => out.push(p.phase as u8),
        Message::AudioFrame(a) => out.extend_from_slice(&a.data),
        Message::Leave | Message::Heartbeat => {}
        Message::Reject(r) => {
            out.push(r.code as u8);
            out.extend_from_slice(&r.ref_seq.to_le_bytes());
            write_str8(out, &r.detail, "detail")?;
        }
        Message::PhaseExclusion(p) => out.push(p.phase as u8),
    }
    Ok(())
}

fn write_str8(out: &mut Vec<u8>, s: &str, field: &str) -> Result<(), ProtocolError> {
    let len = u8::try_from(s.len())
        .map_err(|_| ProtocolError::invariant(format!("{field} longer than 255 bytes")))?;
    out.push(len);
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn write_joint(out: &mut Vec<u8>, joint: &JointTransform) -> Result<(), ProtocolError> {
    check_joint(joint)?;
    for v in joint.position.iter().chain(joint.rotation.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn write_pose_full(out: &mut Vec<u8>, pose: &PoseFull) -> Result<(), ProtocolError> {
    if pose.joints.len() != POSE_FULL_JOINTS {
        return Err(ProtocolError::invariant(format!(
            "PoseFull joint_count {} != {POSE_FULL_JOINTS}",
            pose.joints.len()
        )));
    }
    out.push(pose.space as u8);
    out.push(POSE_FULL_JOINTS as u8);
    for joint in &pose.joints {
        write_joint(out, joint)?;
    }
    Ok(())
}

fn write_pose_ik(out: &mut Vec<u8>, pose: &PoseIk) -> Result<(), ProtocolError> {
    out.push(POSE_IK_JOINTS as u8);
    for joint in &pose.joints {
        write_joint(out, joint)?;
    }
    out.push(pose.locomotion as u8);
    Ok(())
}

fn write_transform_simple(out: &mut Vec<u8>, t: &TransformSimple) -> Result<(), ProtocolError> {
    check_transform_simple(t)?;
    for v in t.position {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&t.yaw.to_le_bytes());
    out.push(t.locomotion as u8);
    out.extend_from_slice(&t.intensity.to_le_bytes());
    Ok(())
}

fn write_pose(out: &mut Vec<u8>, pose: &PosePayload) -> Result<(), ProtocolError> {
    match pose {
        PosePayload::Full(p) => write_pose_full(out, p),
        PosePayload::Ik(p) => write_pose_ik(out, p),
        PosePayload::Simple(t) => write_transform_simple(out, t),
    }
}

/// A snapshot entry whose pose is already in serialized form.
#[derive(Debug, Clone, Copy)]
pub struct RawSnapshotEntry<'a> {
    pub participant_id: u32,
    pub role: Role,
    pub muted: bool,
    pub avatar_ref: &'a str,
    pub last_pose: Option<RawPose<'a>>,
}

#[derive(Debug, Clone, Copy)]
pub struct RawPose<'a> {
    pub msg_type: MsgType,
    pub seq: u32,
    pub timestamp_ms: u64,
    pub payload: &'a [u8],
}

fn write_snapshot(out: &mut Vec<u8>, snapshot: &Snapshot) -> Result<(), ProtocolError> {
    let count = u16::try_from(snapshot.participants.len())
        .map_err(|_| ProtocolError::invariant("snapshot participant count exceeds u16"))?;
    check_unique_ids(snapshot.participants.iter().map(|p| p.participant_id))?;
    out.extend_from_slice(&snapshot.slide_index.to_le_bytes());
    out.push(snapshot.phase as u8);
    out.extend_from_slice(&count.to_le_bytes());
    for entry in &snapshot.participants {
        write_entry_head(
            out,
            entry.participant_id,
            entry.role,
            entry.muted,
            &entry.avatar_ref,
        )?;
        match &entry.last_pose {
            None => out.push(0),
            Some(cached) => {
                out.push(cached.pose.msg_type() as u8);
                out.extend_from_slice(&cached.seq.to_le_bytes());
                out.extend_from_slice(&cached.timestamp_ms.to_le_bytes());
                write_pose(out, &cached.pose)?;
            }
        }
    }
    Ok(())
}

fn write_entry_head(
    out: &mut Vec<u8>,
    id: u32,
    role: Role,
    muted: bool,
    avatar_ref: &str,
) -> Result<(), ProtocolError> {
    out.extend_from_slice(&id.to_le_bytes());
    out.push(role as u8);
    out.push(muted as u8);
    write_str8(out, avatar_ref, "avatar_ref")
}

/// Serialize a snapshot payload from raw cached poses, copying each pose
/// payload verbatim.
pub fn encode_snapshot_payload_raw<'a>(
    out: &mut Vec<u8>,
    slide_index: u16,
    phase: Phase,
    entries: &[RawSnapshotEntry<'a>],
) -> Result<(), ProtocolError> {
    let count = u16::try_from(entries.len())
        .map_err(|_| ProtocolError::invariant("snapshot participant count exceeds u16"))?;
    check_unique_ids(entries.iter().map(|e| e.participant_id))?;
    out.extend_from_slice(&slide_index.to_le_bytes());
    out.push(phase as u8);
    out.extend_from_slice(&count.to_le_bytes());
    for e in entries {
        write_entry_head(out, e.participant_id, e.role, e.muted, e.avatar_ref)?;
        match e.last_pose {
            None => out.push(0),
            Some(p) => {
                if pose_payload_len(p.msg_type) != Some(p.payload.len()) {
                    return Err(ProtocolError::invariant(format!(
                        "cached {} payload has {} bytes",
                        p.msg_type,
                        p.payload.len()
                    )));
                }
                out.push(p.msg_type as u8);
                out.extend_from_slice(&p.seq.to_le_bytes());
                out.extend_from_slice(&p.timestamp_ms.to_le_bytes());
                out.extend_from_slice(p.payload);
            }
        }
    }
    Ok(())
}

fn check_unique_ids(ids: impl Iterator<Item = u32>) -> Result<(), ProtocolError> {
    let mut seen: Vec<u32> = ids.collect();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(ProtocolError::invariant(
            "duplicate participant id in snapshot",
        ));
    }
    Ok(())
}

fn check_joint(joint: &JointTransform) -> Result<(), ProtocolError> {
    if !joint.position.iter().all(|v| v.is_finite()) {
        return Err(ProtocolError::invariant("non-finite joint position"));
    }
    if !joint.rotation.iter().all(|v| v.is_finite()) {
        return Err(ProtocolError::invariant("non-finite joint rotation"));
    }
    let norm = joint.rotation_norm();
    if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
        return Err(ProtocolError::invariant(format!(
            "joint rotation norm {norm} outside 1 ± {QUAT_NORM_TOLERANCE}"
        )));
    }
    Ok(())
}

fn check_transform_simple(t: &TransformSimple) -> Result<(), ProtocolError> {
    if !t.position.iter().all(|v| v.is_finite()) {
        return Err(ProtocolError::invariant("non-finite transform position"));
    }
    if !(t.yaw > -std::f32::consts::PI && t.yaw <= std::f32::consts::PI) {
        return Err(ProtocolError::invariant(format!(
            "yaw {} outside (-pi, pi]",
            t.yaw
        )));
    }
    if !(0.0..=1.0).contains(&t.intensity) {
        return Err(ProtocolError::invariant(format!(
            "intensity {} outside [0, 1]",
            t.intensity
        )));
    }
    Ok(())
}

/// Parse and check the fixed header. Does not require the payload to be present.
pub fn decode_header(bytes: &[u8]) -> Result<FrameHeader, ProtocolError> {
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::TruncatedPayload {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    if bytes[0..2] != MAGIC {
        return Err(ProtocolError::BadMagic([bytes[0], bytes[1]]));
    }
    if bytes[2] != VERSION {
        return Err(ProtocolError::BadVersion(bytes[2]));
    }
    let msg_type = MsgType::from_u8(bytes[3]).ok_or(ProtocolError::UnknownMsgType(bytes[3]))?;
    let mut r = Reader::new(&bytes[4..HEADER_LEN]);
    let header = Header {
        room_id: r.u32()?,
        sender_id: r.u32()?,
        seq: r.u32()?,
        timestamp_ms: r.u64()?,
    };
    let payload_len = r.u16()?;
    Ok(FrameHeader {
        header,
        msg_type,
        payload_len,
    })
}

/// Total frame length announced by a (possibly partial) buffer, for stream
/// transports that delimit frames by `payload_len`.
pub fn frame_len(bytes: &[u8]) -> Result<Option<usize>, ProtocolError> {
    match decode_header(bytes) {
        Ok(h) => Ok(Some(HEADER_LEN + h.payload_len as usize)),
        Err(ProtocolError::TruncatedPayload { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Decode exactly one frame. Total over arbitrary input.
pub fn decode(bytes: &[u8]) -> Result<Envelope, ProtocolError> {
    let frame = decode_header(bytes)?;
    let payload = frame_payload(bytes, &frame)?;
    let message = decode_payload(frame.msg_type, payload)?;
    Ok(Envelope {
        header: frame.header,
        message,
    })
}

/// The payload slice of a frame whose header has been parsed.
pub fn frame_payload<'a>(bytes: &'a [u8], frame: &FrameHeader) -> Result<&'a [u8], ProtocolError> {
    let end = HEADER_LEN + frame.payload_len as usize;
    if bytes.len() < end {
        return Err(ProtocolError::TruncatedPayload {
            needed: end,
            available: bytes.len(),
        });
    }
    if bytes.len() > end {
        return Err(ProtocolError::invariant(format!(
            "payload_len {} but {} payload bytes present",
            frame.payload_len,
            bytes.len() - HEADER_LEN
        )));
    }
    Ok(&bytes[HEADER_LEN..end])
}

pub fn decode_payload(msg_type: MsgType, payload: &[u8]) -> Result<Message, ProtocolError> {
    let mut r = Reader::new(payload);
    let message = match msg_type {
        MsgType::JoinRequest => Message::JoinRequest(JoinRequest {
            role: read_role(&mut r)?,
            display_name: r.str8()?,
            avatar_ref: r.str8()?,
        }),
        MsgType::JoinAccept => Message::JoinAccept(JoinAccept {
            participant_id: r.u32()?,
            role: read_role(&mut r)?,
            snapshot: read_snapshot(&mut r)?,
        }),
        MsgType::AvatarManifest => Message::AvatarManifest(AvatarManifest {
            participant_id: r.u32()?,
            role: read_role(&mut r)?,
            avatar_ref: r.str8()?,
        }),
        MsgType::Snapshot => Message::Snapshot(read_snapshot(&mut r)?),
        MsgType::PoseFull => Message::PoseFull(read_pose_full(&mut r)?),
        MsgType::PoseIk => Message::PoseIk(read_pose_ik(&mut r)?),
        MsgType::TransformSimple => Message::TransformSimple(read_transform_simple(&mut r)?),
        MsgType::SlideCommand => Message::SlideCommand(SlideCommand {
            slide_index: r.u16()?,
        }),
        MsgType::MuteControl => Message::MuteControl(MuteControl {
            target_id: r.u32()?,
            muted: read_bool(&mut r)?,
        }),
        MsgType::PhaseChange => Message::PhaseChange(PhaseChange {
            phase: read_phase(&mut r)?,
        }),
        MsgType::AudioFrame => Message::AudioFrame(AudioFrame {
            data: r.rest().to_vec(),
        }),
        MsgType::Leave => Message::Leave,
        MsgType::Heartbeat => Message::Heartbeat,
        MsgType::Reject => {
            let code = r.u8()?;
            Message::Reject(Reject {
                code: RejectCode::from_u8(code).ok_or_else(|| {
                    ProtocolError::invariant(format!("unknown reject code {code}"))
                })?,
                ref_seq: r.u32()?,
                detail: r.str8()?,
            })
        }
        MsgType::PhaseExclusion => Message::PhaseExclusion(PhaseExclusion {
            phase: read_phase(&mut r)?,
        }),
    };
    if !r.is_empty() {
        return Err(ProtocolError::invariant(format!(
            "{} trailing bytes after {msg_type} payload",
            r.remaining()
        )));
    }
    Ok(message)
}

/// Decode a pose payload of the given type, requiring exact length.
pub fn decode_pose_payload(
    msg_type: MsgType,
    payload: &[u8],
) -> Result<PosePayload, ProtocolError> {
    match decode_payload(msg_type, payload)?.into_pose() {
        Some(pose) => Ok(pose),
        None => Err(ProtocolError::invariant(format!(
            "{msg_type} is not a pose message"
        ))),
    }
}

fn read_role(r: &mut Reader<'_>) -> Result<Role, ProtocolError> {
    let b = r.u8()?;
    Role::from_u8(b).ok_or_else(|| ProtocolError::invariant(format!("unknown role {b}")))
}

fn read_phase(r: &mut Reader<'_>) -> Result<Phase, ProtocolError> {
    let b = r.u8()?;
    Phase::from_u8(b).ok_or_else(|| ProtocolError::invariant(format!("unknown phase {b}")))
}

fn read_bool(r: &mut Reader<'_>) -> Result<bool, ProtocolError> {
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        b => Err(ProtocolError::invariant(format!("boolean byte {b}"))),
    }
}

fn read_locomotion(r: &mut Reader<'_>) -> Result<Locomotion, ProtocolError> {
    let b = r.u8()?;
    Locomotion::from_u8(b)
        .ok_or_else(|| ProtocolError::invariant(format!("unknown locomotion {b}")))
}

fn read_joint(r: &mut Reader<'_>) -> Result<JointTransform, ProtocolError> {
    let position = [r.f32()?, r.f32()?, r.f32()?];
    let rotation = [r.f32()?, r.f32()?, r.f32()?, r.f32()?];
    let mut joint = JointTransform { position, rotation };
    check_joint(&joint)?;
    let norm = joint.rotation_norm();
    if (norm - 1.0).abs() > RENORMALIZE_THRESHOLD {
        for c in &mut joint.rotation {
            *c /= norm;
        }
    }
    Ok(joint)
}

fn read_pose_full(r: &mut Reader<'_>) -> Result<PoseFull, ProtocolError> {
    let space_byte = r.u8()?;
    let space = SpaceFlag::from_u8(space_byte)
        .ok_or_else(|| ProtocolError::invariant(format!("unknown space flag {space_byte}")))?;
    let count = r.u8()? as usize;
    if count != POSE_FULL_JOINTS {
        return Err(ProtocolError::invariant(format!(
            "PoseFull joint_count {count} != {POSE_FULL_JOINTS}"
        )));
    }
    let joints = (0..count)
        .map(|_| read_joint(r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PoseFull { space, joints })
}

fn read_pose_ik(r: &mut Reader<'_>) -> Result<PoseIk, ProtocolError> {
    let count = r.u8()? as usize;
    if count != POSE_IK_JOINTS {
        return Err(ProtocolError::invariant(format!(
            "PoseIK joint_count {count} != {POSE_IK_JOINTS}"
        )));
    }
    let mut joints = [JointTransform::IDENTITY; POSE_IK_JOINTS];
    for joint in &mut joints {
        *joint = read_joint(r)?;
    }
    Ok(PoseIk {
        joints,
        locomotion: read_locomotion(r)?,
    })
}

fn read_transform_simple(r: &mut Reader<'_>) -> Result<TransformSimple, ProtocolError> {
    let t = TransformSimple {
        position: [r.f32()?, r.f32()?, r.f32()?],
        yaw: r.f32()?,
        locomotion: read_locomotion(r)?,
        intensity: r.f32()?,
    };
    check_transform_simple(&t)?;
    Ok(t)
}

fn read_snapshot(r: &mut Reader<'_>) -> Result<Snapshot, ProtocolError> {
    let slide_index = r.u16()?;
    let phase = read_phase(r)?;
    let count = r.u16()? as usize;
    // Each entry needs at least 8 bytes; bound the allocation by the input.
    let mut participants = Vec::with_capacity(count.min(r.remaining() / 8));
    for _ in 0..count {
        let participant_id = r.u32()?;
        let role = read_role(r)?;
        let muted = read_bool(r)?;
        let avatar_ref = r.str8()?;
        let tag = r.u8()?;
        let last_pose = if tag == 0 {
            None
        } else {
            let msg_type = MsgType::from_u8(tag)
                .filter(|t| pose_payload_len(*t).is_some())
                .ok_or_else(|| ProtocolError::invariant(format!("bad snapshot pose tag {tag}")))?;
            let seq = r.u32()?;
            let timestamp_ms = r.u64()?;
            let pose = match msg_type {
                MsgType::PoseFull => PosePayload::Full(read_pose_full(r)?),
                MsgType::PoseIk => PosePayload::Ik(read_pose_ik(r)?),
                _ => PosePayload::Simple(read_transform_simple(r)?),
            };
            Some(CachedPose {
                seq,
                timestamp_ms,
                pose,
            })
        };
        participants.push(SnapshotEntry {
            participant_id,
            role,
            muted,
            avatar_ref,
            last_pose,
        });
    }
    check_unique_ids(participants.iter().map(|p| p.participant_id))?;
    Ok(Snapshot {
        slide_index,
        phase,
        participants,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.remaining() < n {
            return Err(ProtocolError::TruncatedPayload {
                needed: self.pos + n,
                available: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ProtocolError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        self.array().map(u64::from_le_bytes)
    }

    fn f32(&mut self) -> Result<f32, ProtocolError> {
        self.array().map(f32::from_le_bytes)
    }

    fn str8(&mut self) -> Result<String, ProtocolError> {
        let len = self.u8()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| ProtocolError::invariant("string field is not valid UTF-8"))
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
}
