//! Live keyboard teleoperation of the rock-capturing environment.
//!
//! A human operator connects over a WebSocket, receives scene frames and
//! sends key states. Each joint has a pair of keys; a held key commands the
//! joint's full speed and release commands zero. Completed trials are logged
//! in the same episode format as agent runs, tagged `human`.

pub mod client;
pub mod protocol;
pub mod server;
pub mod session;

use thiserror::Error;

use rockcap_core::env::EnvError;

pub use client::Client;
pub use protocol::{
    decode_client, decode_control, decode_server, encode_client, encode_frame, encode_server, ClientMessage,
    ClockMode, ControlMessage, KeyStates, ProtocolError, ServerMessage, SessionMode, SessionSummary, StateFrame,
    TrialResult, PROTOCOL_VERSION,
};
pub use server::{serve, ConnectionReport, Mailbox, ServerConfig};
pub use session::{parse_seed_list, Session, SessionConfig, StepEvent};

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("session: {0}")]
    Session(String),
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    WebSocket(#[from] Box<tungstenite::Error>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<tungstenite::Error> for TeleopError {
    fn from(e: tungstenite::Error) -> Self {
        TeleopError::WebSocket(Box::new(e))
    }
}
