use std::collections::{BTreeMap, HashMap};

use bytes::Bytes;

use super::config::RoomConfig;
use super::log::{LogEvent, Outcome, RoomStats};
use crate::protocol::{
    decode_header, decode_payload, encode, encode_raw, encode_snapshot_payload_raw, frame_payload,
    pose_payload_len, AvatarManifest, Header, Message, MsgType, MuteControl, Phase, PhaseChange,
    PhaseExclusion, RawPose, RawSnapshotEntry, Reject, RejectCode, Role, SequenceTracker,
    SlideCommand, StreamClass, HEADER_LEN,
};

/// Transport-assigned connection handle.
pub type ConnId = u64;

/// Sender id used on frames the room itself originates.
pub const SERVER_SENDER_ID: u32 = 0;

/// What the transport must do after the room processed an input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Send {
        conn: ConnId,
        bytes: Bytes,
    },
    /// Flush pending sends, then drop the connection.
    Close {
        conn: ConnId,
    },
}

/// Latest accepted pose, kept as the sender's own bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedFrame {
    pub msg_type: MsgType,
    pub seq: u32,
    pub timestamp_ms: u64,
    /// Pose payload sliced out of the original frame.
    pub payload: Bytes,
}

#[derive(Debug, Clone)]
pub struct Participant {
    pub id: u32,
    pub role: Role,
    pub display_name: String,
    pub avatar_ref: String,
    pub muted: bool,
    pub last_pose: Option<CachedFrame>,
    pub conn: ConnId,
    pub last_seen_ms: u64,
    /// Pose message type fixed by the first pose an Examiner or Audience member sends.
    pub pose_mode: Option<MsgType>,
}

/// One relay room: a serialized state machine over decoded frames.
///
/// The room never re-encodes a participant's payload: pose, control and audio
/// frames are forwarded as the exact bytes received.
#[derive(Debug)]
pub struct Room {
    config: RoomConfig,
    participants: BTreeMap<u32, Participant>,
    by_conn: HashMap<ConnId, u32>,
    slide_index: u16,
    slide_seq: u64,
    phase: Phase,
    next_participant_id: u32,
    server_seq: u32,
    seqs: SequenceTracker,
    stats: RoomStats,
    log: Vec<LogEvent>,
}

struct Ctx {
    conn: ConnId,
    header: Header,
    msg_type: MsgType,
    now_ms: u64,
}

impl Room {
    pub fn new(config: RoomConfig) -> Self {
        Self {
            config,
            participants: BTreeMap::new(),
            by_conn: HashMap::new(),
            slide_index: 0,
            slide_seq: 0,
            phase: Phase::Presentation,
            next_participant_id: 1,
            server_seq: 0,
            seqs: SequenceTracker::new(),
            stats: RoomStats::default(),
            log: Vec::new(),
        }
    }

    pub fn id(&self) -> u32 {
        self.config.id
    }

    pub fn config(&self) -> &RoomConfig {
        &self.config
    }

    pub fn slide_index(&self) -> u16 {
        self.slide_index
    }

    /// Count of accepted slide changes.
    pub fn slide_seq(&self) -> u64 {
        self.slide_seq
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn participants(&self) -> impl Iterator<Item = &Participant> {
        self.participants.values()
    }

    pub fn participant(&self, id: u32) -> Option<&Participant> {
        self.participants.get(&id)
    }

    pub fn participant_for_conn(&self, conn: ConnId) -> Option<u32> {
        self.by_conn.get(&conn).copied()
    }

    pub fn stats(&self) -> &RoomStats {
        &self.stats
    }

    /// Drain structured log events accumulated since the last call.
    pub fn take_log(&mut self) -> Vec<LogEvent> {
        std::mem::take(&mut self.log)
    }

    /// Process one inbound frame from `conn`.
    pub fn handle(&mut self, conn: ConnId, frame: Bytes, now_ms: u64) -> Vec<Output> {
        let mut out = Vec::new();
        self.stats.frames_in += 1;
        self.stats.bytes_in += frame.len() as u64;

        let fh = match decode_header(&frame) {
            Ok(h) => h,
            Err(e) => {
                let seq = if frame.len() >= HEADER_LEN {
                    u32::from_le_bytes([frame[12], frame[13], frame[14], frame[15]])
                } else {
                    0
                };
                self.log.push(LogEvent {
                    t_ms: now_ms,
                    room_id: self.config.id,
                    conn,
                    sender_id: self.by_conn.get(&conn).copied(),
                    seq,
                    msg_type: None,
                    outcome: Outcome::Rejected,
                    code: Some(RejectCode::Malformed),
                    fanout: 0,
                });
                self.send_reject(
                    &mut out,
                    conn,
                    seq,
                    RejectCode::Malformed,
                    e.to_string(),
                    now_ms,
                );
                return out;
            }
        };
        let ctx = Ctx {
            conn,
            header: fh.header,
            msg_type: fh.msg_type,
            now_ms,
        };
        let message = match frame_payload(&frame, &fh).and_then(|p| decode_payload(fh.msg_type, p))
        {
            Ok(m) => m,
            Err(e) => {
                self.reject(&mut out, &ctx, RejectCode::Malformed, e.to_string());
                return out;
            }
        };
        if fh.header.room_id != self.config.id {
            let detail = format!(
                "frame for room {} reached room {}",
                fh.header.room_id, self.config.id
            );
            self.reject(&mut out, &ctx, RejectCode::UnknownRoom, detail);
            return out;
        }

        let Some(&sender) = self.by_conn.get(&conn) else {
            match message {
                Message::JoinRequest(req) => self.handle_join(&mut out, &ctx, req),
                _ => self.reject(&mut out, &ctx, RejectCode::NotJoined, "join first".into()),
            }
            return out;
        };
        if let Message::JoinRequest(_) = message {
            self.reject(
                &mut out,
                &ctx,
                RejectCode::AlreadyJoined,
                format!("already participant {sender}"),
            );
            return out;
        }
        if fh.header.sender_id != sender {
            let detail = format!("connection belongs to participant {sender}");
            self.reject(&mut out, &ctx, RejectCode::SenderMismatch, detail);
            return out;
        }
        if let Some(p) = self.participants.get_mut(&sender) {
            p.last_seen_ms = now_ms;
        }
        if matches!(
            fh.msg_type.stream_class(),
            StreamClass::Pose | StreamClass::Control | StreamClass::Audio
        ) && self
            .seqs
            .last(sender, fh.msg_type.stream_class())
            .is_some_and(|last| fh.header.seq <= last)
        {
            self.stats.stale_drops += 1;
            self.log_event(&ctx, Some(sender), Outcome::Stale, None, 0);
            return out;
        }

        match message {
            Message::JoinRequest(_) => unreachable!("handled above"),
            Message::PoseFull(_) | Message::PoseIk(_) | Message::TransformSimple(_) => {
                self.handle_pose(&mut out, &ctx, sender, &frame)
            }
            Message::SlideCommand(cmd) => self.handle_slide(&mut out, &ctx, sender, cmd, &frame),
            Message::MuteControl(cmd) => self.handle_mute(&mut out, &ctx, sender, cmd, &frame),
            Message::PhaseChange(cmd) => self.handle_phase(&mut out, &ctx, sender, cmd, &frame),
            Message::AudioFrame(_) => self.handle_audio(&mut out, &ctx, sender, &frame),
            Message::Heartbeat => self.log_event(&ctx, Some(sender), Outcome::Accepted, None, 0),
            Message::Leave => {
                self.remove(&mut out, sender, Some(frame), now_ms);
                self.log_event(&ctx, Some(sender), Outcome::Accepted, None, 0);
            }
            Message::JoinAccept(_)
            | Message::AvatarManifest(_)
            | Message::Snapshot(_)
            | Message::Reject(_)
            | Message::PhaseExclusion(_) => {
                let detail = format!("{} is server-originated", fh.msg_type);
                self.reject(&mut out, &ctx, RejectCode::AuthorityViolation, detail)
            }
        }
        out
    }

    /// The transport lost `conn`. Equivalent to a Leave from its participant.
    pub fn disconnect(&mut self, conn: ConnId, now_ms: u64) -> Vec<Output> {
        let mut out = Vec::new();
        if let Some(&id) = self.by_conn.get(&conn) {
            self.remove(&mut out, id, None, now_ms);
            self.log.push(LogEvent::lifecycle(
                now_ms,
                self.config.id,
                conn,
                id,
                Outcome::Disconnected,
            ));
        }
        out
    }

    /// Time-driven work: drop participants whose heartbeat lapsed.
    pub fn tick(&mut self, now_ms: u64) -> Vec<Output> {
        let mut out = Vec::new();
        let timeout = self.config.heartbeat_timeout_ms;
        let lapsed: Vec<(u32, ConnId)> = self
            .participants
            .values()
            .filter(|p| now_ms.saturating_sub(p.last_seen_ms) > timeout)
            .map(|p| (p.id, p.conn))
            .collect();
        for (id, conn) in lapsed {
            self.remove(&mut out, id, None, now_ms);
            self.stats.timeouts += 1;
            self.log.push(LogEvent::lifecycle(
                now_ms,
                self.config.id,
                conn,
                id,
                Outcome::TimedOut,
            ));
        }
        out
    }

    fn handle_join(&mut self, out: &mut Vec<Output>, ctx: &Ctx, req: crate::protocol::JoinRequest) {
        if self.participants.len() >= self.config.max_participants {
            let detail = format!("room holds {} participants", self.config.max_participants);
            return self.reject(out, ctx, RejectCode::RoomFull, detail);
        }
        if req.role == Role::Presenter
            && self
                .participants
                .values()
                .any(|p| p.role == Role::Presenter)
        {
            return self.reject(
                out,
                ctx,
                RejectCode::PresenterConflict,
                "room already has a presenter".into(),
            );
        }
        if !valid_avatar_ref(&req.avatar_ref) {
            let detail = format!("avatar_ref {:?} is not a valid reference", req.avatar_ref);
            return self.reject(out, ctx, RejectCode::BadAvatarRef, detail);
        }
        if req.role == Role::Audience && self.phase == Phase::ClosedDiscussion {
            return self.reject(
                out,
                ctx,
                RejectCode::PhaseRestricted,
                "closed discussion in progress".into(),
            );
        }

        let id = self.next_participant_id;
        self.next_participant_id += 1;
        self.participants.insert(
            id,
            Participant {
                id,
                role: req.role,
                display_name: req.display_name,
                avatar_ref: req.avatar_ref.clone(),
                muted: req.role.muted_on_join(),
                last_pose: None,
                conn: ctx.conn,
                last_seen_ms: ctx.now_ms,
                pose_mode: None,
            },
        );
        self.by_conn.insert(ctx.conn, id);

        let mut payload = Vec::with_capacity(64);
        payload.extend_from_slice(&id.to_le_bytes());
        payload.push(req.role as u8);
        let entries: Vec<RawSnapshotEntry<'_>> = self
            .participants
            .values()
            .map(|p| RawSnapshotEntry {
                participant_id: p.id,
                role: p.role,
                muted: p.muted,
                avatar_ref: &p.avatar_ref,
                last_pose: p.last_pose.as_ref().map(|c| RawPose {
                    msg_type: c.msg_type,
                    seq: c.seq,
                    timestamp_ms: c.timestamp_ms,
                    payload: &c.payload,
                }),
            })
            .collect();
        let snapshot =
            encode_snapshot_payload_raw(&mut payload, self.slide_index, self.phase, &entries);
        drop(entries);
        let header = self.server_header(ctx.now_ms);
        match snapshot.and_then(|()| encode_raw(&header, MsgType::JoinAccept, &payload)) {
            Ok(bytes) => self.send(out, ctx.conn, Bytes::from(bytes)),
            Err(e) => {
                // Only reachable when the room outgrows the snapshot's field widths.
                self.participants.remove(&id);
                self.by_conn.remove(&ctx.conn);
                return self.reject(out, ctx, RejectCode::RoomFull, e.to_string());
            }
        }

        let manifest = Message::AvatarManifest(AvatarManifest {
            participant_id: id,
            role: req.role,
            avatar_ref: req.avatar_ref,
        });
        let bytes = self.server_frame(ctx.now_ms, &manifest);
        let fanout = self.broadcast(out, Some(id), &bytes);
        self.log_event(ctx, Some(id), Outcome::Accepted, None, fanout);
    }

    fn handle_pose(&mut self, out: &mut Vec<Output>, ctx: &Ctx, sender: u32, frame: &Bytes) {
        let p = &self.participants[&sender];
        let allowed = match p.role {
            Role::Presenter => ctx.msg_type == MsgType::PoseFull,
            Role::Examiner | Role::Audience => match p.pose_mode {
                Some(mode) => ctx.msg_type == mode,
                None => matches!(ctx.msg_type, MsgType::PoseIk | MsgType::TransformSimple),
            },
            Role::OnsiteBridge => false,
        };
        if !allowed {
            let detail = format!("{:?} may not send {}", p.role, ctx.msg_type);
            return self.reject(out, ctx, RejectCode::RoleStreamMismatch, detail);
        }
        self.seqs.admit(sender, ctx.msg_type, ctx.header.seq);
        debug_assert_eq!(
            pose_payload_len(ctx.msg_type),
            Some(frame.len() - HEADER_LEN)
        );
        let p = self.participants.get_mut(&sender).expect("sender present");
        if p.role != Role::Presenter {
            p.pose_mode = Some(ctx.msg_type);
        }
        p.last_pose = Some(CachedFrame {
            msg_type: ctx.msg_type,
            seq: ctx.header.seq,
            timestamp_ms: ctx.header.timestamp_ms,
            payload: frame.slice(HEADER_LEN..),
        });
        let fanout = self.broadcast(out, Some(sender), frame);
        self.log_event(ctx, Some(sender), Outcome::Accepted, None, fanout);
    }

    fn handle_slide(
        &mut self,
        out: &mut Vec<Output>,
        ctx: &Ctx,
        sender: u32,
        cmd: SlideCommand,
        frame: &Bytes,
    ) {
        if self.participants[&sender].role != Role::Presenter {
            return self.reject(
                out,
                ctx,
                RejectCode::AuthorityViolation,
                "only the presenter changes slides".into(),
            );
        }
        if cmd.slide_index >= self.config.deck_size {
            let detail = format!(
                "slide {} outside deck of {}",
                cmd.slide_index, self.config.deck_size
            );
            return self.reject(out, ctx, RejectCode::SlideOutOfRange, detail);
        }
        self.seqs.admit(sender, ctx.msg_type, ctx.header.seq);
        self.slide_index = cmd.slide_index;
        self.slide_seq += 1;
        let fanout = self.broadcast(out, None, frame);
        self.log_event(ctx, Some(sender), Outcome::Accepted, None, fanout);
    }

    fn handle_mute(
        &mut self,
        out: &mut Vec<Output>,
        ctx: &Ctx,
        sender: u32,
        cmd: MuteControl,
        frame: &Bytes,
    ) {
        let sender_role = self.participants[&sender].role;
        let Some(target) = self.participants.get(&cmd.target_id) else {
            let detail = format!("no participant {}", cmd.target_id);
            return self.reject(out, ctx, RejectCode::UnknownParticipant, detail);
        };
        if target.role == Role::OnsiteBridge {
            return self.reject(
                out,
                ctx,
                RejectCode::AuthorityViolation,
                "the onsite bridge is never muted".into(),
            );
        }
        if sender_role != Role::Presenter {
            if cmd.target_id != sender {
                let detail = "only the presenter mutes other participants".into();
                return self.reject(out, ctx, RejectCode::AuthorityViolation, detail);
            }
            if !cmd.muted && self.phase == Phase::Presentation {
                let detail = "self-unmute is closed during the presentation".into();
                return self.reject(out, ctx, RejectCode::AuthorityViolation, detail);
            }
        }
        self.seqs.admit(sender, ctx.msg_type, ctx.header.seq);
        self.participants
            .get_mut(&cmd.target_id)
            .expect("target present")
            .muted = cmd.muted;
        let fanout = self.broadcast(out, None, frame);
        self.log_event(ctx, Some(sender), Outcome::Accepted, None, fanout);
    }

    fn handle_phase(
        &mut self,
        out: &mut Vec<Output>,
        ctx: &Ctx,
        sender: u32,
        cmd: PhaseChange,
        frame: &Bytes,
    ) {
        if self.participants[&sender].role != Role::Presenter {
            return self.reject(
                out,
                ctx,
                RejectCode::AuthorityViolation,
                "only the presenter changes phase".into(),
            );
        }
        self.seqs.admit(sender, ctx.msg_type, ctx.header.seq);
        let entering_closed =
            cmd.phase == Phase::ClosedDiscussion && self.phase != Phase::ClosedDiscussion;
        self.phase = cmd.phase;

        let excluded: Vec<(u32, ConnId)> = if entering_closed {
            self.participants
                .values()
                .filter(|p| p.role == Role::Audience)
                .map(|p| (p.id, p.conn))
                .collect()
        } else {
            Vec::new()
        };
        if !excluded.is_empty() {
            let notice = self.server_frame(
                ctx.now_ms,
                &Message::PhaseExclusion(PhaseExclusion { phase: cmd.phase }),
            );
            for &(id, conn) in &excluded {
                self.send(out, conn, notice.clone());
                self.detach(out, id);
                self.stats.exclusions += 1;
                self.log.push(LogEvent::lifecycle(
                    ctx.now_ms,
                    self.config.id,
                    conn,
                    id,
                    Outcome::Excluded,
                ));
            }
        }
        let fanout = self.broadcast(out, None, frame);
        for &(id, _) in &excluded {
            let leave = self.leave_frame(id, ctx.now_ms);
            self.broadcast(out, None, &leave);
        }
        self.log_event(ctx, Some(sender), Outcome::Accepted, None, fanout);
    }

    fn handle_audio(&mut self, out: &mut Vec<Output>, ctx: &Ctx, sender: u32, frame: &Bytes) {
        self.seqs.admit(sender, ctx.msg_type, ctx.header.seq);
        if self.participants[&sender].muted {
            self.stats.muted_audio_drops += 1;
            return self.log_event(ctx, Some(sender), Outcome::DroppedMuted, None, 0);
        }
        let fanout = self.broadcast(out, Some(sender), frame);
        self.log_event(ctx, Some(sender), Outcome::Accepted, None, fanout);
    }

    /// Remove a participant and tell the others. `leave` is the participant's
    /// own Leave frame when it sent one.
    fn remove(&mut self, out: &mut Vec<Output>, id: u32, leave: Option<Bytes>, now_ms: u64) {
        if !self.participants.contains_key(&id) {
            return;
        }
        self.detach(out, id);
        let leave = leave.unwrap_or_else(|| self.leave_frame(id, now_ms));
        self.broadcast(out, None, &leave);
    }

    /// Drop the participant's state and close its connection without notifying others.
    fn detach(&mut self, out: &mut Vec<Output>, id: u32) {
        if let Some(p) = self.participants.remove(&id) {
            self.by_conn.remove(&p.conn);
            self.seqs.forget_sender(id);
            out.push(Output::Close { conn: p.conn });
        }
    }

    /// A Leave carrying the departed participant's id as sender.
    fn leave_frame(&mut self, id: u32, now_ms: u64) -> Bytes {
        let mut header = self.server_header(now_ms);
        header.sender_id = id;
        Bytes::from(encode(&header, &Message::Leave).expect("leave encodes"))
    }

    fn broadcast(&mut self, out: &mut Vec<Output>, except: Option<u32>, bytes: &Bytes) -> usize {
        let conns: Vec<ConnId> = self
            .participants
            .values()
            .filter(|p| Some(p.id) != except)
            .map(|p| p.conn)
            .collect();
        for &conn in &conns {
            self.send(out, conn, bytes.clone());
        }
        conns.len()
    }

    fn send(&mut self, out: &mut Vec<Output>, conn: ConnId, bytes: Bytes) {
        self.stats.frames_out += 1;
        self.stats.bytes_out += bytes.len() as u64;
        out.push(Output::Send { conn, bytes });
    }

    fn server_header(&mut self, now_ms: u64) -> Header {
        self.server_seq = self.server_seq.wrapping_add(1);
        Header {
            room_id: self.config.id,
            sender_id: SERVER_SENDER_ID,
            seq: self.server_seq,
            timestamp_ms: now_ms,
        }
    }

    fn server_frame(&mut self, now_ms: u64, message: &Message) -> Bytes {
        let header = self.server_header(now_ms);
        Bytes::from(encode(&header, message).expect("server messages are valid"))
    }

    fn reject(&mut self, out: &mut Vec<Output>, ctx: &Ctx, code: RejectCode, detail: String) {
        let sender = self.by_conn.get(&ctx.conn).copied();
        self.log_event(ctx, sender, Outcome::Rejected, Some(code), 0);
        self.send_reject(out, ctx.conn, ctx.header.seq, code, detail, ctx.now_ms);
    }

    fn send_reject(
        &mut self,
        out: &mut Vec<Output>,
        conn: ConnId,
        ref_seq: u32,
        code: RejectCode,
        mut detail: String,
        now_ms: u64,
    ) {
        *self.stats.rejects.entry(code).or_default() += 1;
        truncate_utf8(&mut detail, 255);
        let msg = Message::Reject(Reject {
            code,
            ref_seq,
            detail,
        });
        let bytes = self.server_frame(now_ms, &msg);
        self.send(out, conn, bytes);
    }

    fn log_event(
        &mut self,
        ctx: &Ctx,
        sender: Option<u32>,
        outcome: Outcome,
        code: Option<RejectCode>,
        fanout: usize,
    ) {
        if outcome == Outcome::Accepted {
            self.stats.accepted += 1;
        }
        self.log.push(LogEvent {
            t_ms: ctx.now_ms,
            room_id: self.config.id,
            conn: ctx.conn,
            sender_id: sender,
            seq: ctx.header.seq,
            msg_type: Some(ctx.msg_type),
            outcome,
            code,
            fanout,
        });
    }
}

/// Avatar references are non-empty tokens of ASCII letters, digits and `._-:/`.
pub fn valid_avatar_ref(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 128
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"._-:/".contains(&b))
}

fn truncate_utf8(s: &mut String, max: usize) {
    if s.len() > max {
        let mut cut = max;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
}
