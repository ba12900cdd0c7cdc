//! Hybrid-presence synchronization engine.
//!
//! - [`protocol`]: the binary wire format shared by every participant.
//! - [`kinematics`]: skeleton manifest, sensor retargeting and two-bone IK.
//! - [`animation`]: locomotion state and blend weights for untracked legs.
//! - [`server`]: the authoritative relay room and its network front-ends.
//! - [`client`]: a transport-agnostic room view with interpolation and proximity audio.
//! - [`harness`]: headless bots, network condition injection and scenario metrics.

pub mod animation;
pub mod client;
pub mod harness;
pub mod kinematics;
pub mod protocol;
pub mod server;
