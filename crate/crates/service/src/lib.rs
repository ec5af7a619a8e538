//! Live simulation sessions over WebSocket.
//!
//! A single actor thread owns the [`Simulation`](magswarm_core::runner::Simulation)
//! and paces it against the wall clock. Clients receive frames and scene
//! statistics and send field commands, navigation plans and pause/resume
//! requests. See `docs/wire-protocol.md` for the message schema.

pub mod server;
pub mod session;
pub mod wire;

pub use server::{Server, DEFAULT_LISTEN, LISTEN_ENV};
pub use session::{Session, SessionConfig};
pub use wire::{Envelope, WireMessage, WIRE_VERSION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] magswarm_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    WebSocket(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("session actor has stopped")]
    SessionClosed,
}
