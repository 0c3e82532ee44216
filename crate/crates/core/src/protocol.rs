//! Line-oriented co-simulation protocol.
//!
//! Every message is one ASCII line of space-separated fields terminated by
//! `\n`. Numeric fields are fixed-width uppercase hexadecimal so the hardware
//! side can decode them with plain fixed-position text reads.
//!
//! | command                          | line                              |
//! |----------------------------------|-----------------------------------|
//! | single write                     | `W <addr8> <data8>`               |
//! | single read                      | `R <addr8>`                       |
//! | block write                      | `BW <addr8> <n8> <data8>...`      |
//! | block read                       | `BR <addr8> <n8>`                 |
//! | advance simulated time (ns)      | `T <ns16>`                        |
//! | end simulation                   | `Q`                               |
//!
//! Responses are `OK`, `D <data8>...`, `ERR <code8>` and `BYE`. Exactly one
//! response is sent for each command, in order.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

/// Upper bound on the word count of a single block transfer.
pub const MAX_BLOCK_WORDS: u32 = 65_536;

/// Word size in bytes of every bus transfer.
pub const WORD_BYTES: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Write { addr: u32, data: u32 },
    Read { addr: u32 },
    BlockWrite { addr: u32, data: Vec<u32> },
    BlockRead { addr: u32, count: u32 },
    AdvanceTime { delta_ns: u64 },
    Quit,
}

/// Error codes carried by `ERR` responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum ErrorCode {
    /// Unmapped address or a device-terminated cycle.
    BusError = 1,
    MalformedCommand = 2,
    UnsupportedCommand = 3,
}

impl ErrorCode {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(Self::BusError),
            2 => Some(Self::MalformedCommand),
            3 => Some(Self::UnsupportedCommand),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Ok,
    Data(Vec<u32>),
    Err(ErrorCode),
    Bye,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed command: {0}")]
    MalformedCommand(&'static str),
    #[error("malformed response: {0}")]
    MalformedResponse(&'static str),
}

impl Command {
    pub fn write(addr: u32, data: u32) -> Result<Self, ProtocolError> {
        let cmd = Command::Write { addr, data };
        cmd.validate().map(|()| cmd)
    }

    pub fn read(addr: u32) -> Result<Self, ProtocolError> {
        let cmd = Command::Read { addr };
        cmd.validate().map(|()| cmd)
    }

    pub fn block_write(addr: u32, data: Vec<u32>) -> Result<Self, ProtocolError> {
        let cmd = Command::BlockWrite { addr, data };
        cmd.validate().map(|()| cmd)
    }

    pub fn block_read(addr: u32, count: u32) -> Result<Self, ProtocolError> {
        let cmd = Command::BlockRead { addr, count };
        cmd.validate().map(|()| cmd)
    }

    /// Checks alignment, block lengths and that a block does not run past the
    /// top of the 32-bit address space.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        match self {
            Command::Write { addr, .. } | Command::Read { addr } => check_aligned(*addr),
            Command::BlockWrite { addr, data } => {
                let len = u32::try_from(data.len())
                    .map_err(|_| ProtocolError::MalformedCommand("block too long"))?;
                check_block(*addr, len)
            }
            Command::BlockRead { addr, count } => check_block(*addr, *count),
            Command::AdvanceTime { .. } | Command::Quit => Ok(()),
        }
    }

    /// Number of bus words this command transfers.
    pub fn word_count(&self) -> u32 {
        match self {
            Command::Write { .. } | Command::Read { .. } => 1,
            Command::BlockWrite { data, .. } => data.len() as u32,
            Command::BlockRead { count, .. } => *count,
            Command::AdvanceTime { .. } | Command::Quit => 0,
        }
    }
}

fn check_aligned(addr: u32) -> Result<(), ProtocolError> {
    if addr % WORD_BYTES != 0 {
        return Err(ProtocolError::MalformedCommand("unaligned address"));
    }
    Ok(())
}

fn check_block(addr: u32, count: u32) -> Result<(), ProtocolError> {
    check_aligned(addr)?;
    if count == 0 {
        return Err(ProtocolError::MalformedCommand("empty block"));
    }
    if count > MAX_BLOCK_WORDS {
        return Err(ProtocolError::MalformedCommand("block too long"));
    }
    let last = u64::from(addr) + u64::from(WORD_BYTES) * (u64::from(count) - 1);
    if last > u64::from(u32::MAX) {
        return Err(ProtocolError::MalformedCommand("block exceeds address space"));
    }
    Ok(())
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Write { addr, data } => write!(f, "W {addr:08X} {data:08X}"),
            Command::Read { addr } => write!(f, "R {addr:08X}"),
            Command::BlockWrite { addr, data } => {
                write!(f, "BW {addr:08X} {:08X}", data.len())?;
                for word in data {
                    write!(f, " {word:08X}")?;
                }
                Ok(())
            }
            Command::BlockRead { addr, count } => write!(f, "BR {addr:08X} {count:08X}"),
            Command::AdvanceTime { delta_ns } => write!(f, "T {delta_ns:016X}"),
            Command::Quit => f.write_str("Q"),
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Ok => f.write_str("OK"),
            Response::Data(words) => {
                f.write_str("D")?;
                for word in words {
                    write!(f, " {word:08X}")?;
                }
                Ok(())
            }
            Response::Err(code) => write!(f, "ERR {:08X}", code.code()),
            Response::Bye => f.write_str("BYE"),
        }
    }
}

/// Encodes a command as a single newline-terminated line.
pub fn encode_command(cmd: &Command) -> String {
    let mut line = String::new();
    let _ = writeln!(line, "{cmd}");
    line
}

pub fn encode_response(resp: &Response) -> String {
    let mut line = String::new();
    let _ = writeln!(line, "{resp}");
    line
}

fn strip_line_end(line: &str) -> &str {
    let line = line.strip_suffix('\n').unwrap_or(line);
    line.strip_suffix('\r').unwrap_or(line)
}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    strip_line_end(line).split(' ').filter(|f| !f.is_empty())
}

fn parse_hex_field(field: &str, width: usize) -> Option<u64> {
    if field.len() != width || !field.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    u64::from_str_radix(field, 16).ok()
}

fn hex32(field: Option<&str>, err: ProtocolError) -> Result<u32, ProtocolError> {
    field
        .and_then(|f| parse_hex_field(f, 8))
        .map(|v| v as u32)
        .ok_or(err)
}

/// Parses one command line.
///
/// Repeated interior spaces and a missing trailing newline are tolerated.
/// Anything whose decoded value would violate the command invariants is
/// rejected.
pub fn parse_command(line: &str) -> Result<Command, ProtocolError> {
    use ProtocolError::MalformedCommand as Bad;

    let mut fields = split_fields(line);
    let opcode = fields.next().ok_or(Bad("empty line"))?;
    let bad_field = Bad("bad hex field");
    let cmd = match opcode {
        "W" => Command::Write {
            addr: hex32(fields.next(), bad_field.clone())?,
            data: hex32(fields.next(), bad_field)?,
        },
        "R" => Command::Read {
            addr: hex32(fields.next(), bad_field)?,
        },
        "BW" => {
            let addr = hex32(fields.next(), bad_field.clone())?;
            let n = hex32(fields.next(), bad_field.clone())?;
            check_block(addr, n)?;
            let data = fields
                .by_ref()
                .take(n as usize)
                .map(|f| hex32(Some(f), bad_field.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            if data.len() != n as usize {
                return Err(Bad("block length mismatch"));
            }
            Command::BlockWrite { addr, data }
        }
        "BR" => Command::BlockRead {
            addr: hex32(fields.next(), bad_field.clone())?,
            count: hex32(fields.next(), bad_field)?,
        },
        "T" => Command::AdvanceTime {
            delta_ns: fields
                .next()
                .and_then(|f| parse_hex_field(f, 16))
                .ok_or(bad_field)?,
        },
        "Q" => Command::Quit,
        _ => return Err(Bad("unknown opcode")),
    };
    if fields.next().is_some() {
        return Err(Bad("too many fields"));
    }
    cmd.validate()?;
    Ok(cmd)
}

pub fn parse_response(line: &str) -> Result<Response, ProtocolError> {
    use ProtocolError::MalformedResponse as Bad;

    let mut fields = split_fields(line);
    let opcode = fields.next().ok_or(Bad("empty line"))?;
    let resp = match opcode {
        "OK" => Response::Ok,
        "BYE" => Response::Bye,
        "ERR" => {
            let code = hex32(fields.next(), Bad("bad hex field"))?;
            Response::Err(ErrorCode::from_code(code).ok_or(Bad("unknown error code"))?)
        }
        "D" => {
            let words = fields
                .by_ref()
                .map(|f| hex32(Some(f), Bad("bad hex field")))
                .collect::<Result<Vec<_>, _>>()?;
            if words.is_empty() {
                return Err(Bad("data response without words"));
            }
            Response::Data(words)
        }
        _ => return Err(Bad("unknown opcode")),
    };
    if fields.next().is_some() {
        return Err(Bad("too many fields"));
    }
    Ok(resp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn encodes_documented_examples() {
        assert_eq!(
            encode_command(&Command::Write { addr: 0x4, data: 0x7 }),
            "W 00000004 00000007\n"
        );
        assert_eq!(
            encode_command(&Command::AdvanceTime { delta_ns: 100 }),
            "T 0000000000000064\n"
        );
        assert_eq!(
            encode_command(&Command::BlockRead { addr: 0x10, count: 2 }),
            "BR 00000010 00000002\n"
        );
        assert_eq!(
            encode_command(&Command::BlockWrite { addr: 0x0, data: vec![2, 0xABCDEF01] }),
            "BW 00000000 00000002 00000002 ABCDEF01\n"
        );
        assert_eq!(encode_command(&Command::Quit), "Q\n");
        assert_eq!(encode_response(&Response::Data(vec![5])), "D 00000005\n");
        assert_eq!(encode_response(&Response::Err(ErrorCode::BusError)), "ERR 00000001\n");
        assert_eq!(encode_response(&Response::Ok), "OK\n");
        assert_eq!(encode_response(&Response::Bye), "BYE\n");
    }

    #[test]
    fn parses_commands() {
        assert_eq!(parse_command("R 00000008\n"), Ok(Command::Read { addr: 8 }));
        assert_eq!(
            parse_command("W   00000004  00000007"),
            Ok(Command::Write { addr: 4, data: 7 })
        );
        assert_eq!(
            parse_command("BW 00000008 00000002 00000001 00000002\n"),
            Ok(Command::BlockWrite { addr: 8, data: vec![1, 2] })
        );
        assert_eq!(
            parse_command("T FFFFFFFFFFFFFFFF\n"),
            Ok(Command::AdvanceTime { delta_ns: u64::MAX })
        );
    }

    #[test]
    fn rejects_malformed_commands() {
        for line in [
            "W 00000003 00000001\n",
            "X 00\n",
            "",
            "\n",
            "R 8\n",
            "R 0000000G\n",
            "R +0000008\n",
            "R 00000008 00000000\n",
            "W 00000000\n",
            "BR 00000000 00000000\n",
            "BW 00000000 00000002 00000001\n",
            "BW 00000000 00000001 00000001 00000002\n",
            "BR FFFFFFFC 00000002\n",
            "BR 00000000 00010001\n",
            "T 64\n",
            "Q Q\n",
            "w 00000000 00000000\n",
        ] {
            assert!(
                matches!(parse_command(line), Err(ProtocolError::MalformedCommand(_))),
                "accepted {line:?}"
            );
        }
    }

    #[test]
    fn parses_responses() {
        assert_eq!(parse_response("ERR 00000001\n"), Ok(Response::Err(ErrorCode::BusError)));
        assert_eq!(parse_response("D 00000005 00000006"), Ok(Response::Data(vec![5, 6])));
        assert_eq!(parse_response("BYE\n"), Ok(Response::Bye));
        for line in ["D\n", "ERR 00000009\n", "OK 1\n", "NOPE\n", "D 5\n"] {
            assert!(parse_response(line).is_err(), "accepted {line:?}");
        }
    }

    #[test]
    fn checked_constructors_enforce_invariants() {
        assert!(Command::block_read(0, 0).is_err());
        assert!(Command::block_write(0, Vec::new()).is_err());
        assert!(Command::write(2, 0).is_err());
        assert!(Command::read(0xFFFF_FFFC).is_ok());
    }
}
