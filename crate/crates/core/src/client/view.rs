use std::collections::BTreeMap;

use super::{ClientError, PoseBuffer};
use crate::protocol::{
    CachedPose, Envelope, Header, Message, Phase, PosePayload, Reject, Role, SeqVerdict,
    SequenceTracker, Snapshot, StreamClass,
};
use crate::server::SERVER_SENDER_ID;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteParticipant {
    pub role: Role,
    pub avatar_ref: String,
    pub muted: bool,
    /// Freshest pose by sequence number.
    pub last_pose: Option<CachedPose>,
    pub buffer: PoseBuffer,
}

impl RemoteParticipant {
    fn new(role: Role, avatar_ref: String, muted: bool) -> Self {
        Self {
            role,
            avatar_ref,
            muted,
            last_pose: None,
            buffer: PoseBuffer::new(),
        }
    }

    fn take_pose(&mut self, header: &Header, pose: PosePayload) {
        self.buffer.push(header.timestamp_ms, pose.clone());
        self.last_pose = Some(CachedPose {
            seq: header.seq,
            timestamp_ms: header.timestamp_ms,
            pose,
        });
    }
}

/// Client-side mirror of a room under last-value semantics.
#[derive(Debug, Clone, Default)]
pub struct RoomView {
    self_id: Option<u32>,
    participants: BTreeMap<u32, RemoteParticipant>,
    slide_index: u16,
    phase: Phase,
    seqs: SequenceTracker,
    /// Freshest pose per sender whose manifest has not arrived yet.
    pending: BTreeMap<u32, (Header, PosePayload)>,
    excluded: Option<Phase>,
    last_reject: Option<Reject>,
}

/// The comparable part of a view: everything except local buffers and bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewState {
    pub participants: BTreeMap<u32, ParticipantState>,
    pub slide_index: u16,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantState {
    pub role: Role,
    pub avatar_ref: String,
    pub muted: bool,
    pub last_pose: Option<CachedPose>,
}

impl RoomView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn self_id(&self) -> Option<u32> {
        self.self_id
    }

    pub fn slide_index(&self) -> u16 {
        self.slide_index
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn participants(&self) -> &BTreeMap<u32, RemoteParticipant> {
        &self.participants
    }

    pub fn participant(&self, id: u32) -> Option<&RemoteParticipant> {
        self.participants.get(&id)
    }

    pub fn pending_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.pending.keys().copied()
    }

    /// Set when a phase transition removed this client from the room.
    pub fn excluded(&self) -> Option<Phase> {
        self.excluded
    }

    pub fn last_reject(&self) -> Option<&Reject> {
        self.last_reject.as_ref()
    }

    pub fn state(&self) -> ViewState {
        ViewState {
            participants: self
                .participants
                .iter()
                .map(|(&id, p)| {
                    (
                        id,
                        ParticipantState {
                            role: p.role,
                            avatar_ref: p.avatar_ref.clone(),
                            muted: p.muted,
                            last_pose: p.last_pose.clone(),
                        },
                    )
                })
                .collect(),
            slide_index: self.slide_index,
            phase: self.phase,
        }
    }

    /// Apply one decoded message. Messages not fresher than the last one seen
    /// on the sender's stream leave the view unchanged.
    ///
    /// A pose from an unknown participant is held and reported as
    /// [`ClientError::UnknownParticipant`]; it is applied once the
    /// participant's manifest arrives.
    pub fn apply(&mut self, env: &Envelope) -> Result<(), ClientError> {
        let h = &env.header;
        let class = env.message.msg_type().stream_class();
        if h.sender_id != SERVER_SENDER_ID
            && class != StreamClass::Session
            && self.seqs.admit(h.sender_id, env.message.msg_type(), h.seq) == SeqVerdict::StaleDrop
        {
            return Ok(());
        }
        match &env.message {
            Message::JoinAccept(accept) => {
                self.self_id = Some(accept.participant_id);
                self.excluded = None;
                self.load_snapshot(&accept.snapshot);
            }
            Message::Snapshot(s) => self.load_snapshot(s),
            Message::AvatarManifest(m) => {
                self.participants
                    .entry(m.participant_id)
                    .or_insert_with(|| {
                        RemoteParticipant::new(m.role, m.avatar_ref.clone(), m.role.muted_on_join())
                    });
                if let Some((ph, pose)) = self.pending.remove(&m.participant_id) {
                    self.participants
                        .get_mut(&m.participant_id)
                        .expect("just inserted")
                        .take_pose(&ph, pose);
                }
            }
            Message::PoseFull(_) | Message::PoseIk(_) | Message::TransformSimple(_) => {
                let pose = env.message.clone().into_pose().expect("pose message");
                match self.participants.get_mut(&h.sender_id) {
                    Some(p) => p.take_pose(h, pose),
                    None => {
                        self.pending.insert(h.sender_id, (*h, pose));
                        return Err(ClientError::UnknownParticipant(h.sender_id));
                    }
                }
            }
            Message::SlideCommand(c) => self.slide_index = c.slide_index,
            Message::MuteControl(c) => match self.participants.get_mut(&c.target_id) {
                Some(p) => p.muted = c.muted,
                None => return Err(ClientError::UnknownParticipant(c.target_id)),
            },
            Message::PhaseChange(c) => self.phase = c.phase,
            Message::Leave => {
                self.participants.remove(&h.sender_id);
                self.pending.remove(&h.sender_id);
                self.seqs.forget_sender(h.sender_id);
            }
            Message::PhaseExclusion(e) => {
                self.excluded = Some(e.phase);
                self.phase = e.phase;
                self.participants.clear();
                self.pending.clear();
            }
            Message::Reject(r) => self.last_reject = Some(r.clone()),
            Message::AudioFrame(_) | Message::Heartbeat | Message::JoinRequest(_) => {}
        }
        Ok(())
    }

    fn load_snapshot(&mut self, s: &Snapshot) {
        self.slide_index = s.slide_index;
        self.phase = s.phase;
        self.participants.clear();
        for e in &s.participants {
            let mut p = RemoteParticipant::new(e.role, e.avatar_ref.clone(), e.muted);
            if let Some(c) = &e.last_pose {
                self.seqs.admit(e.participant_id, c.pose.msg_type(), c.seq);
                p.buffer.push(c.timestamp_ms, c.pose.clone());
                p.last_pose = Some(c.clone());
            }
            self.participants.insert(e.participant_id, p);
        }
        let pending = std::mem::take(&mut self.pending);
        for (id, (h, pose)) in pending {
            match self.participants.get_mut(&id) {
                Some(p) if p.last_pose.as_ref().map_or(true, |c| h.seq > c.seq) => {
                    p.take_pose(&h, pose)
                }
                Some(_) => {}
                None => {
                    self.pending.insert(id, (h, pose));
                }
            }
        }
    }
}
