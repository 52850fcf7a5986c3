//! Live host for a hopper episode: a simulation loop on its own thread, a
//! websocket that streams frames and takes commands, and a small viewer page.
//!
//! The message format is described in `docs/wire_protocol.md`.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{
    snapshot_frame, wrap_x, ClientMessage, Command, Frame, FrameContext, PlanArc, RejectCode, Reply, ServerMessage,
    ServerPayload,
};
pub use server::{bind_addr, router, serve, BIND_ENV, DEFAULT_PORT};
pub use session::{spawn, LiveConfig, LiveHandle, SessionClosed};
