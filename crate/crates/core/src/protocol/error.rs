use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("truncated: needed {needed} bytes, have {available}")]
    TruncatedPayload { needed: usize, available: usize },
    #[error("unknown message type 0x{0:02x}")]
    UnknownMsgType(u8),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

impl ProtocolError {
    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        ProtocolError::InvariantViolation(msg.into())
    }
}
