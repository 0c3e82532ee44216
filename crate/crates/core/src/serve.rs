//! Firmware-side command execution.
//!
//! [`Server`] executes protocol lines against a [`Bus`]; [`serve`] drives it
//! from a [`LineLink`] until the peer quits. [`InProcessLink`] plugs a server
//! directly into a client session without any transport in between.

use alloc::collections::VecDeque;
use alloc::string::String;

use crate::bus::Bus;
use crate::link::{LineLink, LinkError};
use crate::protocol::{encode_response, parse_command, Command, ErrorCode, Response};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeReport {
    /// Lines received, including malformed ones.
    pub commands: u64,
    /// `ERR` responses sent.
    pub errors: u64,
    pub sim_time_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("serve loop aborted after {} commands: {cause}", report.commands)]
pub struct ServeError {
    pub report: ServeReport,
    pub cause: LinkError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Rx,
    Tx,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Rx => "rx",
            Direction::Tx => "tx",
        }
    }
}

/// One logged protocol line, stamped with simulated time.
#[derive(Debug, Clone, Copy)]
pub struct LogEntry<'a> {
    pub time_ns: u64,
    pub direction: Direction,
    pub line: &'a str,
}

pub struct Server {
    bus: Bus,
    report: ServeReport,
}

impl Server {
    pub fn new(bus: Bus) -> Self {
        Self {
            bus,
            report: ServeReport::default(),
        }
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn bus_mut(&mut self) -> &mut Bus {
        &mut self.bus
    }

    pub fn into_bus(self) -> Bus {
        self.bus
    }

    pub fn report(&self) -> ServeReport {
        ServeReport {
            sim_time_ns: self.bus.sim_time_ns(),
            ..self.report
        }
    }

    /// Executes a parsed command. Transfers take zero simulated time.
    pub fn execute(&mut self, cmd: &Command) -> Response {
        let bus = &mut self.bus;
        let result = match cmd {
            Command::Write { addr, data } => bus.write(*addr, *data).map(|()| Response::Ok),
            Command::Read { addr } => bus.read(*addr).map(|w| Response::Data(alloc::vec![w])),
            Command::BlockWrite { addr, data } => bus.write_block(*addr, data).map(|()| Response::Ok),
            Command::BlockRead { addr, count } => bus.read_block(*addr, *count).map(Response::Data),
            Command::AdvanceTime { delta_ns } => {
                bus.advance(*delta_ns);
                Ok(Response::Ok)
            }
            Command::Quit => Ok(Response::Bye),
        };
        result.unwrap_or(Response::Err(ErrorCode::BusError))
    }

    /// Parses and executes one line, updating the counters.
    pub fn handle_line(&mut self, line: &str) -> Response {
        self.report.commands += 1;
        let resp = match parse_command(line) {
            Ok(cmd) => self.execute(&cmd),
            Err(_) => Response::Err(ErrorCode::MalformedCommand),
        };
        if matches!(resp, Response::Err(_)) {
            self.report.errors += 1;
        }
        resp
    }
}

/// Serves commands from `link` until `Q` has been answered with `BYE`.
///
/// Protocol-level errors are answered with `ERR` and the loop continues; only
/// a transport failure ends it early.
pub fn serve<L, F>(link: &mut L, server: &mut Server, mut log: F) -> Result<ServeReport, ServeError>
where
    L: LineLink + ?Sized,
    F: FnMut(LogEntry<'_>),
{
    loop {
        let fail = |server: &Server, cause| ServeError {
            report: server.report(),
            cause,
        };
        let line = link.recv_line().map_err(|e| fail(server, e))?;
        log(LogEntry {
            time_ns: server.bus.sim_time_ns(),
            direction: Direction::Rx,
            line: line.trim_end(),
        });
        let resp = server.handle_line(&line);
        let out = encode_response(&resp);
        log(LogEntry {
            time_ns: server.bus.sim_time_ns(),
            direction: Direction::Tx,
            line: out.trim_end(),
        });
        link.send_line(&out).map_err(|e| fail(server, e))?;
        if resp == Response::Bye {
            return Ok(server.report());
        }
    }
}

/// A [`LineLink`] whose peer is a [`Server`] in the same address space.
///
/// Each sent line is executed immediately; its response is queued for the
/// next `recv_line`. After `BYE` further sends report `PeerClosed`.
pub struct InProcessLink {
    server: Server,
    pending: VecDeque<String>,
    finished: bool,
}

impl InProcessLink {
    pub fn new(bus: Bus) -> Self {
        Self {
            server: Server::new(bus),
            pending: VecDeque::new(),
            finished: false,
        }
    }

    pub fn server(&self) -> &Server {
        &self.server
    }

    pub fn server_mut(&mut self) -> &mut Server {
        &mut self.server
    }
}

impl LineLink for InProcessLink {
    fn send_line(&mut self, line: &str) -> Result<(), LinkError> {
        if self.finished {
            return Err(LinkError::PeerClosed);
        }
        let resp = self.server.handle_line(line);
        self.finished = resp == Response::Bye;
        self.pending.push_back(encode_response(&resp));
        Ok(())
    }

    fn recv_line(&mut self) -> Result<String, LinkError> {
        self.pending.pop_front().ok_or(LinkError::PeerClosed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{adder_device, MemoryDevice, ADDER_SPAN};
    use alloc::boxed::Box;
    use alloc::vec::Vec;

    /// Replays scripted lines and records what was sent back.
    struct Script {
        input: VecDeque<String>,
        output: Vec<String>,
    }

    impl Script {
        fn new(lines: &[&str]) -> Self {
            Self {
                input: lines.iter().map(|l| String::from(*l)).collect(),
                output: Vec::new(),
            }
        }
    }

    impl LineLink for Script {
        fn send_line(&mut self, line: &str) -> Result<(), LinkError> {
            self.output.push(line.into());
            Ok(())
        }
        fn recv_line(&mut self) -> Result<String, LinkError> {
            self.input.pop_front().ok_or(LinkError::PeerClosed)
        }
    }

    fn adder_server() -> Server {
        let mut bus = Bus::new();
        bus.attach(0, ADDER_SPAN, adder_device()).unwrap();
        Server::new(bus)
    }

    #[test]
    fn adder_script() {
        let mut link = Script::new(&[
            "W 00000000 00000002\n",
            "W 00000004 00000003\n",
            "R 00000008\n",
            "Q\n",
        ]);
        let mut logged = 0;
        let report = serve(&mut link, &mut adder_server(), |_| logged += 1).unwrap();
        assert_eq!(link.output, ["OK\n", "OK\n", "D 00000005\n", "BYE\n"]);
        assert_eq!(report.commands, 4);
        assert_eq!(report.errors, 0);
        assert_eq!(logged, 8);
    }

    #[test]
    fn garbage_does_not_stop_the_loop() {
        let mut link = Script::new(&["garbage\n", "T 0000000000000064\n", "Q\n"]);
        let report = serve(&mut link, &mut adder_server(), |_| {}).unwrap();
        assert_eq!(link.output, ["ERR 00000002\n", "OK\n", "BYE\n"]);
        assert_eq!(report.errors, 1);
        assert_eq!(report.sim_time_ns, 100);
    }

    #[test]
    fn block_read_over_hole_is_single_error() {
        let mut bus = Bus::new();
        bus.attach(0x0, 0x10, Box::new(MemoryDevice::new(4))).unwrap();
        bus.attach(0x20, 0x10, Box::new(MemoryDevice::new(4))).unwrap();
        let mut link = Script::new(&["BR 00000008 00000008\n", "Q\n"]);
        serve(&mut link, &mut Server::new(bus), |_| {}).unwrap();
        assert_eq!(link.output, ["ERR 00000001\n", "BYE\n"]);
    }

    #[test]
    fn peer_close_is_reported() {
        let mut link = Script::new(&["R 00000000\n"]);
        let err = serve(&mut link, &mut adder_server(), |_| {}).unwrap_err();
        assert_eq!(err.cause, LinkError::PeerClosed);
        assert_eq!(err.report.commands, 1);
    }

    #[test]
    fn in_process_link_closes_after_bye() {
        let mut link = InProcessLink::new(Bus::new());
        link.send_line("Q\n").unwrap();
        assert_eq!(link.recv_line().unwrap(), "BYE\n");
        assert_eq!(link.send_line("Q\n"), Err(LinkError::PeerClosed));
    }
}
