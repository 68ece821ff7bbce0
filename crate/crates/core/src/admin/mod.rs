//! Remote administration over TCP. Clients parse scripts locally and ship
//! one encoded form per EVAL frame; the server evaluates each on the
//! node's control thread and answers with RESULT or ERROR.

mod client;
mod frame;
mod server;

pub use client::{submit, AdminClient, ClientError, FormOutcome};
pub use frame::{
    read_frame, write_frame, Frame, FrameError, MsgType, PayloadError, HEADER_LEN, MAGIC, MAX_PAYLOAD, VERSION,
};
pub use server::{serve_session, AdminServer, SessionStats, StatsSnapshot};

pub const DEFAULT_PORT: u16 = 4777;
/// Environment variable naming the bootstrap script.
pub const BOOTSTRAP_ENV: &str = "CVM_BOOTSTRAP";
