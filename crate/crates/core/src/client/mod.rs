//! Transport-agnostic client: a [`RoomView`] mirror of the server's room,
//! pose interpolation for rendering, and proximity audio cues.

mod audio;
mod buffer;
mod session;
mod view;

use thiserror::Error;

pub use audio::{audio_cue, AudioConfig, AudioCue};
pub use buffer::{interpolate, sample_pose, PoseBuffer, PoseSample, POSE_BUFFER_CAPACITY};
pub use session::{ClientConfig, ClientSession};
pub use view::{ParticipantState, RemoteParticipant, RoomView, ViewState};

use crate::protocol::ProtocolError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("pose buffer is empty")]
    EmptyBuffer,
    /// The message referenced a participant the view has not seen yet. Poses
    /// are held until the participant's manifest arrives.
    #[error("unknown participant {0}")]
    UnknownParticipant(u32),
    #[error("not joined to a room")]
    NotJoined,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}
