//! The four-phase scoring protocol: buyer, seller and broker state
//! machines, session framing, and in-process and TCP transports.

pub mod message;
mod roles;
mod session;
pub mod tcp;

use thiserror::Error;

use crate::ckks::CkksError;
use crate::influence::InfluenceError;

pub use message::{read_frame, write_frame, MsgType, SessionHeader, SessionId, SessionMessage};
pub use roles::{Broker, Buyer, BuyerConfig, FinalScores, Role, ScoreEntry, Seller};
pub use session::{phase_of, run_inproc, InprocSession, LogEvent, SessionLog, SessionReport, SessionTimings};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Ckks(#[from] CkksError),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("missing scores for candidates {0:?}")]
    MissingScore(Vec<u32>),
    #[error("no candidates")]
    NoCandidates,
    #[error("transport timed out")]
    TransportTimeout,
    #[error("transport: {0}")]
    Transport(String),
    #[error("session aborted: {0}")]
    Aborted(String),
}

impl From<std::io::Error> for ProtocolError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => ProtocolError::TransportTimeout,
            _ => ProtocolError::Transport(e.to_string()),
        }
    }
}
