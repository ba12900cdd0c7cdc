//! Authoritative relay rooms.
//!
//! [`Room`] is a pure state machine: frames in, [`Output`]s out. The [`net`]
//! module wraps it in a WebSocket (and optional framed TCP) server, one
//! serialized task per room.

mod config;
mod log;
pub mod net;
mod room;
pub mod trace;

use thiserror::Error;

pub use config::{RoomConfig, ServerConfig};
pub use log::{LogEvent, Outcome, RoomStats};
pub use room::{
    valid_avatar_ref, CachedFrame, ConnId, Output, Participant, Room, SERVER_SENDER_ID,
};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace: {0}")]
    Trace(String),
}

#[cfg(test)]
mod tests;
