//! C ABI over the `hpsync` core: frame codec checks, an in-process relay room,
//! a client session with its room view, and the upper-body IK solver.
//!
//! Conventions:
//! - Every function returns an [`HpStatus`]; outputs go through pointers.
//! - Objects are opaque handles created by `*_new` and released by `*_free`.
//! - Frames are written into caller buffers. When a buffer is too small the
//!   call returns `HP_STATUS_BUFFER_TOO_SMALL` and stores the required length
//!   in `*written`.
//! - The message of the last failure on the calling thread is available from
//!   [`hp_last_error`].

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use bytes::Bytes;
use hpsync::client::{ClientConfig, ClientError, ClientSession};
use hpsync::kinematics::{IkConfig, IkSolver, IkTargets, KinematicsError, SkeletonManifest};
use hpsync::protocol::{
    self, JointTransform, Locomotion, Phase, PosePayload, ProtocolError, Role, TransformSimple,
};
use hpsync::server::{Output, Room, RoomConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    /// Malformed or invalid frame.
    Protocol = 4,
    /// The client session refused the operation or the incoming frame.
    Client = 5,
    Kinematics = 6,
    /// Nothing queued; returned by `hp_room_next_output` when drained.
    Empty = 7,
    /// A Rust panic was caught at the boundary. The handle should be freed.
    Internal = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: HpStatus, msg: impl std::fmt::Display) -> HpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.to_string());
    status
}

impl From<ProtocolError> for HpStatus {
    fn from(e: ProtocolError) -> Self {
        fail(HpStatus::Protocol, e)
    }
}

impl From<ClientError> for HpStatus {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Protocol(p) => p.into(),
            e => fail(HpStatus::Client, e),
        }
    }
}

impl From<KinematicsError> for HpStatus {
    fn from(e: KinematicsError) -> Self {
        fail(HpStatus::Kinematics, e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), HpStatus>) -> HpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HpStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(HpStatus::Internal, "panic inside hpsync"),
    }
}

unsafe fn slice<'a>(ptr: *const u8, len: usize) -> Result<&'a [u8], HpStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(fail(HpStatus::NullPointer, "null buffer"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out_ref<'a, T>(ptr: *mut T) -> Result<&'a mut T, HpStatus> {
    ptr.as_mut()
        .ok_or_else(|| fail(HpStatus::NullPointer, "null output pointer"))
}

unsafe fn handle<'a, T>(ptr: *mut T) -> Result<&'a mut T, HpStatus> {
    ptr.as_mut()
        .ok_or_else(|| fail(HpStatus::NullPointer, "null handle"))
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, HpStatus> {
    if ptr.is_null() {
        return Err(fail(HpStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(HpStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn write_out(
    bytes: &[u8],
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> Result<(), HpStatus> {
    let written = out_ref(written)?;
    *written = bytes.len();
    if bytes.len() > cap {
        return Err(fail(
            HpStatus::BufferTooSmall,
            format!("need {} bytes, have {cap}", bytes.len()),
        ));
    }
    if !bytes.is_empty() {
        if out.is_null() {
            return Err(fail(HpStatus::NullPointer, "null output buffer"));
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
    }
    Ok(())
}

fn role(byte: u8) -> Result<Role, HpStatus> {
    Role::from_u8(byte)
        .ok_or_else(|| fail(HpStatus::InvalidArgument, format!("unknown role {byte}")))
}

fn phase(byte: u8) -> Result<Phase, HpStatus> {
    Phase::from_u8(byte)
        .ok_or_else(|| fail(HpStatus::InvalidArgument, format!("unknown phase {byte}")))
}

/// Copies the last error message on this thread, NUL-terminated and truncated
/// to `cap`. Returns the full message length excluding the terminator.
///
/// # Safety
/// `buf` must be valid for `cap` bytes or null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn hp_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

// ---- codec ----

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HpFrameHeader {
    pub msg_type: u8,
    pub room_id: u32,
    pub sender_id: u32,
    pub seq: u32,
    pub timestamp_ms: u64,
    pub payload_len: u16,
}

/// Bytes in the fixed frame header.
pub const HP_HEADER_LEN: usize = 26;
/// Length of a complete PoseFull frame.
pub const HP_POSE_FULL_FRAME_LEN: usize = 1680;
/// Length of a complete PoseIk frame.
pub const HP_POSE_IK_FRAME_LEN: usize = 280;

const _: () = assert!(HP_HEADER_LEN == protocol::HEADER_LEN);
const _: () = assert!(HP_POSE_FULL_FRAME_LEN == protocol::POSE_FULL_MESSAGE_LEN);
const _: () = assert!(HP_POSE_IK_FRAME_LEN == protocol::POSE_IK_MESSAGE_LEN);

/// Total length of the frame starting at `bytes`, or 0 in `*out_len` when more
/// bytes are needed to tell.
///
/// # Safety
/// `bytes` must be valid for `len` bytes; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_frame_len(
    bytes: *const u8,
    len: usize,
    out_len: *mut usize,
) -> HpStatus {
    guard(|| {
        let b = slice(bytes, len)?;
        *out_ref(out_len)? = protocol::frame_len(b)?.unwrap_or(0);
        Ok(())
    })
}

/// Parses the header only.
///
/// # Safety
/// `bytes` must be valid for `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_decode_header(
    bytes: *const u8,
    len: usize,
    out: *mut HpFrameHeader,
) -> HpStatus {
    guard(|| {
        let h = protocol::decode_header(slice(bytes, len)?)?;
        *out_ref(out)? = HpFrameHeader {
            msg_type: h.msg_type as u8,
            room_id: h.header.room_id,
            sender_id: h.header.sender_id,
            seq: h.header.seq,
            timestamp_ms: h.header.timestamp_ms,
            payload_len: h.payload_len,
        };
        Ok(())
    })
}

/// Fully decodes and validates one frame, discarding the result.
///
/// # Safety
/// `bytes` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hp_validate_frame(bytes: *const u8, len: usize) -> HpStatus {
    guard(|| {
        protocol::decode(slice(bytes, len)?)?;
        Ok(())
    })
}

// ---- room ----

/// One relay room. Outputs produced by the room are queued and drained with
/// `hp_room_next_output`.
pub struct HpRoom {
    room: Room,
    queue: VecDeque<Output>,
    current: Option<Bytes>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpOutputKind {
    Send = 0,
    /// Flush earlier sends to `conn`, then drop it.
    Close = 1,
}

/// `data` stays valid until the next call on the same room.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HpOutput {
    pub kind: HpOutputKind,
    pub conn: u64,
    pub data: *const u8,
    pub len: usize,
}

/// # Safety
/// `out` must be writable. The handle must be released with `hp_room_free`.
#[no_mangle]
pub unsafe extern "C" fn hp_room_new(
    room_id: u32,
    deck_size: u16,
    out: *mut *mut HpRoom,
) -> HpStatus {
    guard(|| {
        let out = out_ref(out)?;
        let config = RoomConfig {
            id: room_id,
            deck_size,
            ..RoomConfig::default()
        };
        config
            .validate()
            .map_err(|e| fail(HpStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(HpRoom {
            room: Room::new(config),
            queue: VecDeque::new(),
            current: None,
        }));
        Ok(())
    })
}

/// # Safety
/// `room` must come from `hp_room_new` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hp_room_free(room: *mut HpRoom) {
    if !room.is_null() {
        drop(Box::from_raw(room));
    }
}

/// Feeds one frame received on `conn`. Rejections are queued as outputs, not
/// reported as errors.
///
/// # Safety
/// `room` must be a live handle; `bytes` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hp_room_handle(
    room: *mut HpRoom,
    conn: u64,
    bytes: *const u8,
    len: usize,
    now_ms: u64,
) -> HpStatus {
    guard(|| {
        let r = handle(room)?;
        let frame = Bytes::copy_from_slice(slice(bytes, len)?);
        let out = r.room.handle(conn, frame, now_ms);
        r.queue.extend(out);
        Ok(())
    })
}

/// # Safety
/// `room` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_room_disconnect(room: *mut HpRoom, conn: u64, now_ms: u64) -> HpStatus {
    guard(|| {
        let r = handle(room)?;
        let out = r.room.disconnect(conn, now_ms);
        r.queue.extend(out);
        Ok(())
    })
}

/// Expires silent participants. Call a few times per second.
///
/// # Safety
/// `room` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_room_tick(room: *mut HpRoom, now_ms: u64) -> HpStatus {
    guard(|| {
        let r = handle(room)?;
        let out = r.room.tick(now_ms);
        r.queue.extend(out);
        Ok(())
    })
}

/// Pops the next queued output, or returns `HP_STATUS_EMPTY`.
///
/// # Safety
/// `room` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_room_next_output(room: *mut HpRoom, out: *mut HpOutput) -> HpStatus {
    guard(|| {
        let r = handle(room)?;
        let out = out_ref(out)?;
        r.current = None;
        match r.queue.pop_front() {
            None => Err(HpStatus::Empty),
            Some(Output::Send { conn, bytes }) => {
                *out = HpOutput {
                    kind: HpOutputKind::Send,
                    conn,
                    data: bytes.as_ptr(),
                    len: bytes.len(),
                };
                r.current = Some(bytes);
                Ok(())
            }
            Some(Output::Close { conn }) => {
                *out = HpOutput {
                    kind: HpOutputKind::Close,
                    conn,
                    data: std::ptr::null(),
                    len: 0,
                };
                Ok(())
            }
        }
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HpRoomState {
    pub slide_index: u16,
    pub phase: u8,
    pub participants: u32,
}

/// # Safety
/// `room` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_room_state(room: *mut HpRoom, out: *mut HpRoomState) -> HpStatus {
    guard(|| {
        let r = handle(room)?;
        *out_ref(out)? = HpRoomState {
            slide_index: r.room.slide_index(),
            phase: r.room.phase() as u8,
            participants: r.room.participants().count() as u32,
        };
        Ok(())
    })
}

// ---- client ----

pub struct HpClient {
    session: ClientSession,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HpJoint {
    pub position: [f32; 3],
    /// x, y, z, w
    pub rotation: [f32; 4],
}

impl From<JointTransform> for HpJoint {
    fn from(j: JointTransform) -> Self {
        Self {
            position: j.position,
            rotation: j.rotation,
        }
    }
}

impl From<HpJoint> for JointTransform {
    fn from(j: HpJoint) -> Self {
        JointTransform::new(j.position, j.rotation)
    }
}

/// # Safety
/// `out` must be writable. The handle must be released with `hp_client_free`.
#[no_mangle]
pub unsafe extern "C" fn hp_client_new(room_id: u32, out: *mut *mut HpClient) -> HpStatus {
    guard(|| {
        *out_ref(out)? = Box::into_raw(Box::new(HpClient {
            session: ClientSession::new(room_id, ClientConfig::default()),
        }));
        Ok(())
    })
}

/// # Safety
/// `client` must come from `hp_client_new` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hp_client_free(client: *mut HpClient) {
    if !client.is_null() {
        drop(Box::from_raw(client));
    }
}

/// Builds a JoinRequest frame.
///
/// # Safety
/// `client` must be a live handle; strings NUL-terminated; `out` valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn hp_client_join(
    client: *mut HpClient,
    role_code: u8,
    display_name: *const c_char,
    avatar_ref: *const c_char,
    now_ms: u64,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HpStatus {
    guard(|| {
        let c = handle(client)?;
        let frame = c.session.join(
            role(role_code)?,
            str_arg(display_name)?,
            str_arg(avatar_ref)?,
            now_ms,
        )?;
        write_out(&frame, out, cap, written)
    })
}

/// # Safety
/// `client` must be a live handle; `out` valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn hp_client_heartbeat(
    client: *mut HpClient,
    now_ms: u64,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HpStatus {
    guard(|| {
        let frame = handle(client)?.session.heartbeat(now_ms)?;
        write_out(&frame, out, cap, written)
    })
}

/// # Safety
/// `client` must be a live handle; `out` valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn hp_client_slide(
    client: *mut HpClient,
    slide_index: u16,
    now_ms: u64,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HpStatus {
    guard(|| {
        let frame = handle(client)?.session.slide(slide_index, now_ms)?;
        write_out(&frame, out, cap, written)
    })
}

/// # Safety
/// `client` must be a live handle; `out` valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn hp_client_mute(
    client: *mut HpClient,
    target_id: u32,
    muted: bool,
    now_ms: u64,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HpStatus {
    guard(|| {
        let frame = handle(client)?.session.mute(target_id, muted, now_ms)?;
        write_out(&frame, out, cap, written)
    })
}

/// # Safety
/// `client` must be a live handle; `out` valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn hp_client_phase(
    client: *mut HpClient,
    phase_code: u8,
    now_ms: u64,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HpStatus {
    guard(|| {
        let frame = handle(client)?.session.phase(phase(phase_code)?, now_ms)?;
        write_out(&frame, out, cap, written)
    })
}

/// Builds a TransformSimple frame from a browser participant's avatar state.
///
/// # Safety
/// `client` must be a live handle; `out` valid for `cap` bytes.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn hp_client_transform(
    client: *mut HpClient,
    x: f32,
    y: f32,
    z: f32,
    yaw: f32,
    walking: bool,
    intensity: f32,
    now_ms: u64,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HpStatus {
    guard(|| {
        let pose = PosePayload::Simple(TransformSimple {
            position: [x, y, z],
            yaw,
            locomotion: if walking {
                Locomotion::Walk
            } else {
                Locomotion::Idle
            },
            intensity,
        });
        let frame = handle(client)?.session.pose(pose, now_ms)?;
        write_out(&frame, out, cap, written)
    })
}

/// Applies one frame from the server. `*msg_type` receives its type code.
///
/// # Safety
/// `client` must be a live handle; `bytes` valid for `len` bytes; `msg_type` writable or null.
#[no_mangle]
pub unsafe extern "C" fn hp_client_receive(
    client: *mut HpClient,
    bytes: *const u8,
    len: usize,
    msg_type: *mut u8,
) -> HpStatus {
    guard(|| {
        let c = handle(client)?;
        let env = c.session.receive(slice(bytes, len)?)?;
        if let Some(t) = msg_type.as_mut() {
            *t = env.message.msg_type() as u8;
        }
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HpViewState {
    pub joined: bool,
    pub self_id: u32,
    pub slide_index: u16,
    pub phase: u8,
    pub participants: u32,
    /// Set once the server excluded this client from the current phase.
    pub excluded: bool,
}

/// # Safety
/// `client` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_client_view(client: *mut HpClient, out: *mut HpViewState) -> HpStatus {
    guard(|| {
        let v = handle(client)?.session.view();
        *out_ref(out)? = HpViewState {
            joined: v.self_id().is_some(),
            self_id: v.self_id().unwrap_or(0),
            slide_index: v.slide_index(),
            phase: v.phase() as u8,
            participants: v.participants().len() as u32,
            excluded: v.excluded().is_some(),
        };
        Ok(())
    })
}

/// Interpolated root of a remote participant at local time `now_ms`, after the
/// configured interpolation delay.
///
/// # Safety
/// `client` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_client_sample_root(
    client: *mut HpClient,
    participant_id: u32,
    now_ms: u64,
    out: *mut HpJoint,
) -> HpStatus {
    guard(|| {
        let pose = handle(client)?.session.sample(participant_id, now_ms)?;
        let root = match &pose {
            PosePayload::Full(p) => p.joints[0],
            PosePayload::Ik(p) => p.joints[protocol::IkJoint::Hips as usize],
            PosePayload::Simple(t) => {
                let (s, c) = (t.yaw * 0.5).sin_cos();
                JointTransform::new(t.position, [0.0, s, 0.0, c])
            }
        };
        *out_ref(out)? = root.into();
        Ok(())
    })
}

// ---- kinematics ----

/// Upper-body IK solver on the canonical 59-joint skeleton.
pub struct HpIkSolver {
    solver: IkSolver,
}

/// Number of joints in an IK pose.
pub const HP_IK_JOINTS: usize = 9;

const _: () = assert!(HP_IK_JOINTS == protocol::POSE_IK_JOINTS);

/// # Safety
/// `out` must be writable. The handle must be released with `hp_ik_free`.
#[no_mangle]
pub unsafe extern "C" fn hp_ik_new(out: *mut *mut HpIkSolver) -> HpStatus {
    guard(|| {
        let out = out_ref(out)?;
        let solver = IkSolver::new(&SkeletonManifest::canonical(), IkConfig::default())?;
        *out = Box::into_raw(Box::new(HpIkSolver { solver }));
        Ok(())
    })
}

/// # Safety
/// `solver` must come from `hp_ik_new` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hp_ik_free(solver: *mut HpIkSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Solves a single frame from head and hand targets. `out` receives the IK
/// joints in wire order: hips, spine, head, left upper arm, forearm, hand,
/// right upper arm, forearm, hand.
///
/// # Safety
/// `solver` must be a live handle; `out` valid for `HP_IK_JOINTS` joints.
#[no_mangle]
pub unsafe extern "C" fn hp_ik_solve(
    solver: *mut HpIkSolver,
    head: HpJoint,
    left_hand: HpJoint,
    right_hand: HpJoint,
    out: *mut HpJoint,
) -> HpStatus {
    guard(|| {
        let s = handle(solver)?;
        if out.is_null() {
            return Err(fail(HpStatus::NullPointer, "null output pointer"));
        }
        let targets = IkTargets {
            head: head.into(),
            left_hand: left_hand.into(),
            right_hand: right_hand.into(),
            root_hint: None,
        };
        let pose = s.solver.solve(&targets, None)?;
        let out = std::slice::from_raw_parts_mut(out, HP_IK_JOINTS);
        for (o, j) in out.iter_mut().zip(pose.joints) {
            *o = j.into();
        }
        Ok(())
    })
}
