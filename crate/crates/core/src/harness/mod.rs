//! Headless bots replaying scripted motion against a room, with a seeded
//! link model and metrics for bandwidth, latency and positional fidelity.
//!
//! Runs are in virtual time by default: one loop iteration per millisecond,
//! the room called directly. The same bots can also drive a live server over
//! WebSocket in real time.

mod bot;
mod metrics;
mod motion;
mod netsim;
mod scenario;
pub mod traces;
mod ws;

use thiserror::Error;

pub use bot::{Bot, BotKind, BotSpec, BotStats, OBSERVE_EVERY_MS, WALK_SPEED_MPS};
pub use metrics::{
    compute_positional_error, longest_run_within, Assertion, BotMetrics, ClockAlignment, Drops,
    HandshakeMetrics, LatencySummary, RootTrack, RunMetrics, Traffic,
};
pub use motion::{Intent, Keys, MotionTrace, TimedEvent, TraceEvent, TraceInput, TraceSample};
pub use netsim::{is_lossy, Direction, Link, NetConditions};
pub use scenario::{
    run_scenario, run_specs, run_with, InProcess, Recording, RunOutput, Scenario, ScenarioConfig,
    ServerPort, HANDSHAKE_CONTACT_M, HANDSHAKE_HOLD_MS,
};
pub use ws::WsPort;

use crate::animation::AnimationError;
use crate::client::ClientError;
use crate::kinematics::KinematicsError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("trace: {0}")]
    Trace(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scenario assertions failed: {}", failures.join("; "))]
    ScenarioAssertionFailed {
        failures: Vec<String>,
        output: Box<RunOutput>,
    },
    #[error("connection lost: {0}")]
    ConnectionLost(String),
    #[error("observer and truth clocks are not aligned")]
    ClockSkewUnresolved,
    #[error("no observation overlaps the ground truth")]
    NoOverlap,
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Animation(#[from] AnimationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
