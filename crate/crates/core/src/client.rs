//! Software-side co-simulation interface.
//!
//! A [`Session`] turns method calls into protocol commands, one outstanding
//! command at a time, and keeps transaction statistics. An optional
//! [`AccessModel`] accumulates a modeled bus access time per transaction
//! without affecting the simulator.

use alloc::vec::Vec;

use crate::link::{LineLink, LinkError};
use crate::protocol::{encode_command, parse_response, Command, ErrorCode, ProtocolError, Response};
use crate::regmap::{RegisterMap, RegmapError};

/// Transaction counters. Block transfers count one transaction and `n`
/// words.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub reads: u64,
    pub writes: u64,
    pub words_read: u64,
    pub words_written: u64,
    pub modeled_time_ns: u64,
}

/// Modeled cost of a transaction: `ns_per_single + ns_per_word * words`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessModel {
    pub ns_per_single: u64,
    pub ns_per_word: u64,
}

impl AccessModel {
    pub fn cost(&self, words: u64) -> u64 {
        self.ns_per_single
            .saturating_add(self.ns_per_word.saturating_mul(words))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("bus error")]
    BusError,
    #[error("simulator rejected the command with error code {0:?}")]
    Rejected(ErrorCode),
    #[error("invalid request: {0}")]
    InvalidRequest(ProtocolError),
    #[error("unexpected response from simulator: {0}")]
    MalformedResponse(&'static str),
    #[error("timed out waiting for the simulator")]
    Timeout,
    #[error("simulator closed the channel")]
    PeerClosed,
    #[error("transport error: {0}")]
    Transport(alloc::string::String),
    #[error("session already ended")]
    SessionClosed,
    #[error("unknown register: {0}")]
    UnknownRegister(alloc::string::String),
    #[error("register index out of range: {0}")]
    IndexOutOfRange(alloc::string::String),
    #[error("access violation: {0}")]
    AccessViolation(alloc::string::String),
}

impl From<LinkError> for ClientError {
    fn from(err: LinkError) -> Self {
        match err {
            LinkError::Timeout => ClientError::Timeout,
            LinkError::PeerClosed => ClientError::PeerClosed,
            LinkError::Io(msg) => ClientError::Transport(msg),
        }
    }
}

impl From<RegmapError> for ClientError {
    fn from(err: RegmapError) -> Self {
        match err {
            RegmapError::IndexOutOfRange { .. } => {
                ClientError::IndexOutOfRange(alloc::format!("{err}"))
            }
            RegmapError::UnknownRegister(path) => ClientError::UnknownRegister(path),
            other => ClientError::UnknownRegister(alloc::format!("{other}")),
        }
    }
}

pub struct Session<L> {
    link: Option<L>,
    stats: Stats,
    access_model: AccessModel,
}

impl<L: LineLink> Session<L> {
    /// Wraps an already connected link. Stats start at zero.
    pub fn new(link: L) -> Self {
        Self::with_access_model(link, AccessModel::default())
    }

    pub fn with_access_model(link: L, access_model: AccessModel) -> Self {
        Self {
            link: Some(link),
            stats: Stats::default(),
            access_model,
        }
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    pub fn access_model(&self) -> AccessModel {
        self.access_model
    }

    pub fn is_closed(&self) -> bool {
        self.link.is_none()
    }

    pub fn link(&self) -> Option<&L> {
        self.link.as_ref()
    }

    pub fn link_mut(&mut self) -> Option<&mut L> {
        self.link.as_mut()
    }

    fn exchange(&mut self, cmd: &Command) -> Result<Response, ClientError> {
        cmd.validate().map_err(ClientError::InvalidRequest)?;
        let link = self.link.as_mut().ok_or(ClientError::SessionClosed)?;
        link.send_line(&encode_command(cmd))?;
        let line = link.recv_line()?;
        parse_response(&line).map_err(|e| match e {
            ProtocolError::MalformedResponse(m) | ProtocolError::MalformedCommand(m) => {
                ClientError::MalformedResponse(m)
            }
        })
    }

    /// Sends a bus transfer and accounts for it once the simulator answered,
    /// whether or not the cycle ended in a bus error.
    fn transfer(&mut self, cmd: &Command) -> Result<Response, ClientError> {
        let resp = self.exchange(cmd)?;
        let words = u64::from(cmd.word_count());
        match cmd {
            Command::Read { .. } | Command::BlockRead { .. } => {
                self.stats.reads += 1;
                self.stats.words_read += words;
            }
            _ => {
                self.stats.writes += 1;
                self.stats.words_written += words;
            }
        }
        self.stats.modeled_time_ns = self
            .stats
            .modeled_time_ns
            .saturating_add(self.access_model.cost(words));
        match resp {
            Response::Err(ErrorCode::BusError) => Err(ClientError::BusError),
            Response::Err(code) => Err(ClientError::Rejected(code)),
            resp => Ok(resp),
        }
    }

    fn expect_ok(resp: Response) -> Result<(), ClientError> {
        match resp {
            Response::Ok => Ok(()),
            _ => Err(ClientError::MalformedResponse("expected OK")),
        }
    }

    fn expect_data(resp: Response, count: u32) -> Result<Vec<u32>, ClientError> {
        match resp {
            Response::Data(words) if words.len() == count as usize => Ok(words),
            Response::Data(_) => Err(ClientError::MalformedResponse("wrong word count")),
            _ => Err(ClientError::MalformedResponse("expected data")),
        }
    }

    pub fn write32(&mut self, addr: u32, data: u32) -> Result<(), ClientError> {
        let resp = self.transfer(&Command::Write { addr, data })?;
        Self::expect_ok(resp)
    }

    pub fn read32(&mut self, addr: u32) -> Result<u32, ClientError> {
        let resp = self.transfer(&Command::Read { addr })?;
        Ok(Self::expect_data(resp, 1)?[0])
    }

    /// Writes `data` to consecutive words starting at `addr` in one
    /// transaction.
    pub fn block_write(&mut self, addr: u32, data: &[u32]) -> Result<(), ClientError> {
        let resp = self.transfer(&Command::BlockWrite {
            addr,
            data: data.to_vec(),
        })?;
        Self::expect_ok(resp)
    }

    pub fn block_read(&mut self, addr: u32, count: u32) -> Result<Vec<u32>, ClientError> {
        let resp = self.transfer(&Command::BlockRead { addr, count })?;
        Self::expect_data(resp, count)
    }

    pub fn advance_time(&mut self, delta_ns: u64) -> Result<(), ClientError> {
        match self.exchange(&Command::AdvanceTime { delta_ns })? {
            Response::Err(code) => Err(ClientError::Rejected(code)),
            resp => Self::expect_ok(resp),
        }
    }

    /// Sends `Q`, waits for `BYE` and releases the link. The session is
    /// closed afterwards even if the exchange failed.
    pub fn end_simulation(&mut self) -> Result<L, ClientError> {
        let resp = self.exchange(&Command::Quit);
        let link = self.link.take().ok_or(ClientError::SessionClosed)?;
        match resp? {
            Response::Bye => Ok(link),
            _ => Err(ClientError::MalformedResponse("expected BYE")),
        }
    }

    pub fn write_reg(&mut self, map: &RegisterMap, path: &str, data: u32) -> Result<(), ClientError> {
        let reg = map.lookup(path)?;
        if !reg.access.writable() {
            return Err(ClientError::AccessViolation(alloc::format!(
                "`{path}` is {}",
                reg.access
            )));
        }
        self.write32(reg.address, data)
    }

    pub fn read_reg(&mut self, map: &RegisterMap, path: &str) -> Result<u32, ClientError> {
        let reg = map.lookup(path)?;
        if !reg.access.readable() {
            return Err(ClientError::AccessViolation(alloc::format!(
                "`{path}` is {}",
                reg.access
            )));
        }
        self.read32(reg.address)
    }
}
