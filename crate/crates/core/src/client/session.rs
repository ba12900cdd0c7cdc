use bytes::Bytes;
use serde::{Deserialize, Serialize};

use super::{sample_pose, AudioConfig, ClientError, RoomView};
use crate::animation::LocomotionConfig;
use crate::protocol::{
    decode, encode, AudioFrame, Envelope, Header, JoinRequest, Message, MsgType, MuteControl,
    Phase, PhaseChange, PosePayload, Role, SlideCommand, StreamClass,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// How far behind the local clock remote poses are rendered.
    pub interp_delay_ms: u64,
    /// Longest stretch a remote pose is extrapolated before it holds.
    pub extrapolation_cap_ms: u64,
    pub walk_enter_mps: f64,
    pub walk_exit_mps: f64,
    pub audio_ref_m: f64,
    pub audio_min_gain: f64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        let loco = LocomotionConfig::default();
        let audio = AudioConfig::default();
        Self {
            interp_delay_ms: 100,
            extrapolation_cap_ms: 200,
            walk_enter_mps: loco.walk_enter_mps,
            walk_exit_mps: loco.walk_exit_mps,
            audio_ref_m: audio.audio_ref_m,
            audio_min_gain: audio.audio_min_gain,
        }
    }
}

impl ClientConfig {
    pub fn locomotion(&self) -> LocomotionConfig {
        LocomotionConfig {
            walk_enter_mps: self.walk_enter_mps,
            walk_exit_mps: self.walk_exit_mps,
        }
    }

    pub fn audio(&self) -> AudioConfig {
        AudioConfig {
            audio_ref_m: self.audio_ref_m,
            audio_min_gain: self.audio_min_gain,
        }
    }
}

/// One participant's side of the protocol: builds outgoing frames with
/// per-stream sequence numbers and folds incoming frames into a [`RoomView`].
#[derive(Debug, Clone)]
pub struct ClientSession {
    room_id: u32,
    config: ClientConfig,
    view: RoomView,
    /// Last sequence number used per stream class.
    seqs: [u32; 4],
}

fn class_index(c: StreamClass) -> usize {
    match c {
        StreamClass::Session => 0,
        StreamClass::Pose => 1,
        StreamClass::Control => 2,
        StreamClass::Audio => 3,
    }
}

impl ClientSession {
    pub fn new(room_id: u32, config: ClientConfig) -> Self {
        Self {
            room_id,
            config,
            view: RoomView::new(),
            seqs: [0; 4],
        }
    }

    pub fn room_id(&self) -> u32 {
        self.room_id
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn view(&self) -> &RoomView {
        &self.view
    }

    pub fn self_id(&self) -> Option<u32> {
        self.view.self_id()
    }

    fn frame(&mut self, message: &Message, now_ms: u64) -> Result<Bytes, ClientError> {
        let sender_id = match message {
            Message::JoinRequest(_) => 0,
            _ => self.view.self_id().ok_or(ClientError::NotJoined)?,
        };
        let slot = &mut self.seqs[class_index(message.msg_type().stream_class())];
        *slot += 1;
        let header = Header {
            room_id: self.room_id,
            sender_id,
            seq: *slot,
            timestamp_ms: now_ms,
        };
        Ok(Bytes::from(encode(&header, message)?))
    }

    pub fn join(
        &mut self,
        role: Role,
        display_name: &str,
        avatar_ref: &str,
        now_ms: u64,
    ) -> Result<Bytes, ClientError> {
        let req = JoinRequest {
            role,
            display_name: display_name.to_owned(),
            avatar_ref: avatar_ref.to_owned(),
        };
        self.frame(&Message::JoinRequest(req), now_ms)
    }

    pub fn pose(&mut self, pose: PosePayload, now_ms: u64) -> Result<Bytes, ClientError> {
        self.frame(&Message::from(pose), now_ms)
    }

    pub fn slide(&mut self, slide_index: u16, now_ms: u64) -> Result<Bytes, ClientError> {
        self.frame(&Message::SlideCommand(SlideCommand { slide_index }), now_ms)
    }

    pub fn mute(&mut self, target_id: u32, muted: bool, now_ms: u64) -> Result<Bytes, ClientError> {
        self.frame(
            &Message::MuteControl(MuteControl { target_id, muted }),
            now_ms,
        )
    }

    pub fn phase(&mut self, phase: Phase, now_ms: u64) -> Result<Bytes, ClientError> {
        self.frame(&Message::PhaseChange(PhaseChange { phase }), now_ms)
    }

    pub fn audio(&mut self, data: Vec<u8>, now_ms: u64) -> Result<Bytes, ClientError> {
        self.frame(&Message::AudioFrame(AudioFrame { data }), now_ms)
    }

    pub fn heartbeat(&mut self, now_ms: u64) -> Result<Bytes, ClientError> {
        self.frame(&Message::Heartbeat, now_ms)
    }

    pub fn leave(&mut self, now_ms: u64) -> Result<Bytes, ClientError> {
        self.frame(&Message::Leave, now_ms)
    }

    /// Decode and apply one incoming frame. Returns the decoded envelope.
    /// Unknown-participant poses are held by the view and not reported as errors.
    pub fn receive(&mut self, frame: &[u8]) -> Result<Envelope, ClientError> {
        let env = decode(frame)?;
        match self.view.apply(&env) {
            Ok(()) | Err(ClientError::UnknownParticipant(_)) => Ok(env),
            Err(e) => Err(e),
        }
    }

    /// Interpolated pose of a remote participant for display at local time `now_ms`.
    pub fn sample(&self, participant_id: u32, now_ms: u64) -> Result<PosePayload, ClientError> {
        let p = self
            .view
            .participant(participant_id)
            .ok_or(ClientError::UnknownParticipant(participant_id))?;
        sample_pose(
            &p.buffer,
            now_ms.saturating_sub(self.config.interp_delay_ms),
            self.config.extrapolation_cap_ms,
        )
    }

    /// Whether this session's role may send `msg_type` at all.
    pub fn may_send(role: Role, msg_type: MsgType) -> bool {
        match msg_type {
            MsgType::PoseFull | MsgType::SlideCommand | MsgType::PhaseChange => {
                role == Role::Presenter
            }
            MsgType::PoseIk | MsgType::TransformSimple => {
                matches!(role, Role::Examiner | Role::Audience)
            }
            MsgType::JoinRequest
            | MsgType::AudioFrame
            | MsgType::Heartbeat
            | MsgType::Leave
            | MsgType::MuteControl => true,
            MsgType::JoinAccept
            | MsgType::AvatarManifest
            | MsgType::Snapshot
            | MsgType::Reject
            | MsgType::PhaseExclusion => false,
        }
    }
}
