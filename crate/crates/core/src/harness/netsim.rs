//! Seeded link model for virtual-time runs.
//!
//! Conditions describe the client-to-client path. Each bot has an uplink and a
//! downlink; one-way latency, jitter and loss are split evenly across the two
//! hops so a relayed frame sees the stated figures end to end. Loss hits pose
//! and audio frames only: session and control traffic is delivered reliably
//! and in order, as over the WebSocket transport.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::protocol::{decode_header, StreamClass};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NetConditions {
    pub latency_ms: u64,
    pub jitter_ms: u64,
    pub loss: f64,
}

impl NetConditions {
    pub fn new(latency_ms: u64, jitter_ms: u64, loss: f64) -> Result<Self, HarnessError> {
        let c = Self {
            latency_ms,
            jitter_ms,
            loss,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(0.0..1.0).contains(&self.loss) {
            return Err(HarnessError::InvalidConfig(format!(
                "loss {} outside [0, 1)",
                self.loss
            )));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.latency_ms == 0 && self.jitter_ms == 0 && self.loss == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// Whether a frame may be dropped by the link.
pub fn is_lossy(frame: &[u8]) -> bool {
    decode_header(frame)
        .map(|h| {
            matches!(
                h.msg_type.stream_class(),
                StreamClass::Pose | StreamClass::Audio
            )
        })
        .unwrap_or(false)
}

/// One direction of one bot's connection.
#[derive(Debug, Clone)]
pub struct Link {
    rng: ChaCha8Rng,
    base_ms: u64,
    half_jitter: f64,
    hop_loss: f64,
    /// Reliable frames never overtake each other.
    last_reliable_due: u64,
    pub lost: u64,
}

impl Link {
    pub fn new(cond: &NetConditions, seed: u64, bot: usize, dir: Direction) -> Self {
        let stream = (bot as u64) * 2 + matches!(dir, Direction::Down) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let up = cond.latency_ms / 2;
        Self {
            rng,
            base_ms: match dir {
                Direction::Up => up,
                Direction::Down => cond.latency_ms - up,
            },
            half_jitter: cond.jitter_ms as f64 / 4.0,
            hop_loss: 1.0 - (1.0 - cond.loss).sqrt(),
            last_reliable_due: 0,
            lost: 0,
        }
    }

    /// Delivery time for a frame sent at `now_ms`, or `None` if it is lost.
    /// Draws the same random numbers for every frame so schedules stay
    /// aligned across condition changes.
    pub fn schedule(&mut self, now_ms: u64, lossy: bool) -> Option<u64> {
        let jitter: f64 = self.rng.gen_range(-1.0..=1.0) * self.half_jitter;
        let drop: f64 = self.rng.gen();
        let due = (now_ms as f64 + self.base_ms as f64 + jitter)
            .round()
            .max(now_ms as f64) as u64;
        if lossy {
            if drop < self.hop_loss {
                self.lost += 1;
                return None;
            }
            Some(due)
        } else {
            let due = due.max(self.last_reliable_due);
            self.last_reliable_due = due;
            Some(due)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delivery {
    ToServer { bot: usize, frame: Bytes },
    ToBot { bot: usize, frame: Bytes },
    CloseBot { bot: usize },
}

#[derive(Debug, PartialEq, Eq)]
struct Pending {
    due: u64,
    order: u64,
    what: Delivery,
}

impl Ord for Pending {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.due, self.order).cmp(&(o.due, o.order))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

/// Frames in flight, delivered in (due time, send order).
#[derive(Debug, Default)]
pub struct InFlight {
    heap: BinaryHeap<Reverse<Pending>>,
    order: u64,
}

impl InFlight {
    pub fn push(&mut self, due: u64, what: Delivery) {
        self.order += 1;
        self.heap.push(Reverse(Pending {
            due,
            order: self.order,
            what,
        }));
    }

    pub fn pop_due(&mut self, now_ms: u64) -> Option<Delivery> {
        if self.heap.peek().is_some_and(|Reverse(p)| p.due <= now_ms) {
            self.heap.pop().map(|Reverse(p)| p.what)
        } else {
            None
        }
    }
}
