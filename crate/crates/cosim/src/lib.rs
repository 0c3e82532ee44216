//! Host side of the co-simulation framework.
//!
//! * [`transport`]: the two-FIFO [`Channel`](transport::Channel),
//! * [`stub`]: the software simulator that serves a device bus over it,
//! * [`script`]: a small test-script client,
//! * [`manifest`] and [`runner`]: the test runner,
//! * [`cli`]: the `cosim` command line.
//!
//! Protocol, register maps and bus semantics come from `cosim-core`.

pub mod cli;
pub mod manifest;
pub mod runner;
pub mod script;
pub mod stub;
pub mod transport;

use cosim_core::client::Session;
use transport::{open_channel, Channel, Role, TransportConfig};

/// Opens the client side of the channel and starts a session.
pub fn connect(cfg: &TransportConfig) -> Result<Session<Channel>, transport::TransportError> {
    open_channel(cfg, Role::Client).map(Session::new)
}

