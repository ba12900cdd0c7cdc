use std::collections::HashMap;

use super::types::{MsgType, StreamClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqVerdict {
    Accept,
    StaleDrop,
}

/// Last-value freshness rule: only strictly newer sequence numbers pass.
pub fn validate_sequence(last_seq: u32, incoming_seq: u32) -> SeqVerdict {
    if incoming_seq > last_seq {
        SeqVerdict::Accept
    } else {
        SeqVerdict::StaleDrop
    }
}

/// Per-(sender, stream class) high-water marks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequenceTracker {
    last: HashMap<(u32, StreamClass), u32>,
}

impl SequenceTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Check and, on accept, record `seq` for the sender's stream.
    pub fn admit(&mut self, sender_id: u32, msg_type: MsgType, seq: u32) -> SeqVerdict {
        let key = (sender_id, msg_type.stream_class());
        match self.last.get(&key) {
            Some(&last) if validate_sequence(last, seq) == SeqVerdict::StaleDrop => {
                SeqVerdict::StaleDrop
            }
            _ => {
                self.last.insert(key, seq);
                SeqVerdict::Accept
            }
        }
    }

    pub fn last(&self, sender_id: u32, class: StreamClass) -> Option<u32> {
        self.last.get(&(sender_id, class)).copied()
    }

    pub fn forget_sender(&mut self, sender_id: u32) {
        self.last.retain(|(id, _), _| *id != sender_id);
    }
}
