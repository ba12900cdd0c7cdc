use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::room::ConnId;
use crate::protocol::{MsgType, RejectCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Rejected,
    /// Sequence number not newer than the last accepted one; dropped silently.
    Stale,
    /// Audio from a muted participant.
    DroppedMuted,
    Disconnected,
    TimedOut,
    /// Removed by a phase transition.
    Excluded,
}

/// One structured log line per processed input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub t_ms: u64,
    pub room_id: u32,
    pub conn: ConnId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sender_id: Option<u32>,
    pub seq: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msg_type: Option<MsgType>,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<RejectCode>,
    /// Number of connections the frame was forwarded to.
    pub fanout: usize,
}

impl LogEvent {
    pub(crate) fn lifecycle(
        t_ms: u64,
        room_id: u32,
        conn: ConnId,
        id: u32,
        outcome: Outcome,
    ) -> Self {
        Self {
            t_ms,
            room_id,
            conn,
            sender_id: Some(id),
            seq: 0,
            msg_type: None,
            outcome,
            code: None,
            fanout: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log events serialize")
    }
}

/// Running counters for one room.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomStats {
    pub frames_in: u64,
    pub bytes_in: u64,
    pub frames_out: u64,
    pub bytes_out: u64,
    pub accepted: u64,
    pub stale_drops: u64,
    pub muted_audio_drops: u64,
    pub timeouts: u64,
    pub exclusions: u64,
    pub rejects: BTreeMap<RejectCode, u64>,
}

impl RoomStats {
    pub fn total_rejects(&self) -> u64 {
        self.rejects.values().sum()
    }
}
