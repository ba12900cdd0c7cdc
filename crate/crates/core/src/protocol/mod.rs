//! Wire protocol: message types, the binary envelope codec and sequence rules.
//!
//! Every frame is a 26-byte little-endian header followed by a typed payload.
//! One frame travels per WebSocket binary message; on a byte stream frames are
//! delimited by the header's `payload_len`.

mod codec;
mod error;
pub mod golden;
pub mod sample;
mod sequence;
mod types;

pub use codec::*;
pub use error::ProtocolError;
pub use sequence::{validate_sequence, SeqVerdict, SequenceTracker};
pub use types::*;
