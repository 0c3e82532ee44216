//! Line transport abstraction.

use alloc::string::String;

/// Failure of the underlying line transport.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinkError {
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("peer closed the channel")]
    PeerClosed,
    #[error("transport i/o error: {0}")]
    Io(String),
}

/// A bidirectional, newline-delimited text channel.
///
/// Implementations carry exactly one protocol line per call. `recv_line`
/// returns the line including its terminating `\n`.
pub trait LineLink {
    fn send_line(&mut self, line: &str) -> Result<(), LinkError>;
    fn recv_line(&mut self) -> Result<String, LinkError>;
}

impl<L: LineLink + ?Sized> LineLink for &mut L {
    fn send_line(&mut self, line: &str) -> Result<(), LinkError> {
        (**self).send_line(line)
    }

    fn recv_line(&mut self) -> Result<String, LinkError> {
        (**self).recv_line()
    }
}
