//! Alice, Bob and Eve as separate processes on a framed TCP wire.
//!
//! Photons travel as raw amplitudes because this is a simulation. The
//! proxy still only touches them through the adversary channels, which use
//! `statekit::measure` and `statekit::rotate` alone.

pub mod frame;
pub mod peer;
pub mod proxy;

use thiserror::Error;

use crate::adversary::AdversaryError;
use crate::protocol::{ChannelError, ProtocolError};

pub use frame::{decode_frame, encode_frame, AbortReason, Frame, FrameError, Hello, WirePhoton};
pub use peer::{run_alice, run_bob, run_peer, serve_bob, PeerOptions, Role};
pub use proxy::{relay, run_eve_proxy, serve_eve_proxy, ProxyOptions};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("framing: {0}")]
    Frame(#[from] FrameError),
    #[error("peer aborted the session (reason {})", .0.code())]
    Aborted(AbortReason),
    #[error("HELLO does not match the local configuration (reason {})", .0.code())]
    Mismatch(AbortReason),
    #[error("expected {expected}, got {got}")]
    Unexpected { expected: &'static str, got: &'static str },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Channel(ChannelError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("cannot connect: {0}")]
    Connect(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
