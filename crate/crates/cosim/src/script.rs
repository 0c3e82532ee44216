//! Line-based test scripts executed through a client [`Session`].
//!
//! ```text
//! # adder check
//! write top.adder.a 2
//! write 0x4 3
//! read top.adder.sum expect 5
//! read 0xFFFF0 expect bus-error
//! bwrite 0x0 1 2
//! bread 0x0 3 expect 1 2 3
//! advance 100
//! ```
//!
//! Targets are numeric byte addresses (`0x` hex or decimal) or register
//! paths resolved through a register map. `write`/`read` on a path honour the
//! register's access mode.

use std::io::Write;

use cosim_core::client::{ClientError, Session};
use cosim_core::link::LineLink;
use cosim_core::regmap::RegisterMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Address(u32),
    Register(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expect {
    Words(Vec<u32>),
    BusError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Write(Target, u32),
    Read(Target, Option<Expect>),
    BlockWrite(u32, Vec<u32>),
    BlockRead(u32, u32, Option<Expect>),
    Advance(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub number: usize,
    pub text: String,
    pub step: Step,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: assertion failed: {message}")]
    Assertion { line: usize, message: String },
    #[error("line {line}: {source}")]
    Client {
        line: usize,
        #[source]
        source: ClientError,
    },
}

impl ScriptError {
    /// Transport trouble is an infrastructure failure; everything else is a
    /// test failure.
    pub fn is_infrastructure(&self) -> bool {
        matches!(
            self,
            ScriptError::Parse { .. }
                | ScriptError::Client {
                    source: ClientError::Timeout
                        | ClientError::PeerClosed
                        | ClientError::Transport(_)
                        | ClientError::MalformedResponse(_),
                    ..
                }
        )
    }
}

pub fn parse_number(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

fn word(s: &str) -> Result<u32, String> {
    parse_number(s)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| format!("`{s}` is not a 32-bit value"))
}

fn target(s: &str) -> Result<Target, String> {
    if s.starts_with(|c: char| c.is_ascii_digit()) {
        word(s).map(Target::Address)
    } else {
        Ok(Target::Register(s.to_owned()))
    }
}

fn expectation(rest: &[&str]) -> Result<Option<Expect>, String> {
    match rest {
        [] => Ok(None),
        ["expect", "bus-error"] => Ok(Some(Expect::BusError)),
        ["expect", values @ ..] if !values.is_empty() => values
            .iter()
            .map(|v| word(v))
            .collect::<Result<_, _>>()
            .map(|w| Some(Expect::Words(w))),
        _ => Err("expected `expect <values...>` or `expect bus-error`".into()),
    }
}

pub fn parse_script(text: &str) -> Result<Vec<Line>, ScriptError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let fields: Vec<&str> = content.split_whitespace().collect();
        let step = match fields.as_slice() {
            [] => continue,
            ["write", t, v] => target(t).and_then(|t| Ok(Step::Write(t, word(v)?))),
            ["read", t, rest @ ..] => target(t).and_then(|t| Ok(Step::Read(t, expectation(rest)?))),
            ["bwrite", a, values @ ..] if !values.is_empty() => word(a).and_then(|a| {
                let data = values.iter().map(|v| word(v)).collect::<Result<_, _>>()?;
                Ok(Step::BlockWrite(a, data))
            }),
            ["bread", a, n, rest @ ..] => word(a)
                .and_then(|a| Ok(Step::BlockRead(a, word(n)?, expectation(rest)?))),
            ["advance", ns] => parse_number(ns)
                .map(Step::Advance)
                .ok_or_else(|| format!("`{ns}` is not a duration")),
            _ => Err(format!("cannot parse `{content}`")),
        }
        .map_err(|message| ScriptError::Parse {
            line: number,
            message,
        })?;
        out.push(Line {
            number,
            text: content.to_owned(),
            step,
        });
    }
    Ok(out)
}

fn resolve_read<L: LineLink>(
    session: &mut Session<L>,
    map: Option<&RegisterMap>,
    target: &Target,
) -> Result<u32, ClientError> {
    match (target, map) {
        (Target::Address(a), _) => session.read32(*a),
        (Target::Register(p), Some(map)) => session.read_reg(map, p),
        (Target::Register(p), None) => Err(ClientError::UnknownRegister(format!("{p} (no register map)"))),
    }
}

fn check<T: std::fmt::Debug + PartialEq>(
    line: &Line,
    expect: &Option<Expect>,
    got: Result<T, ClientError>,
    as_words: impl Fn(&T) -> Vec<u32>,
    out: &mut dyn Write,
) -> Result<(), ScriptError> {
    let client = |source| ScriptError::Client {
        line: line.number,
        source,
    };
    let fail = |message: String| ScriptError::Assertion {
        line: line.number,
        message,
    };
    match (expect, got) {
        (Some(Expect::BusError), Err(ClientError::BusError)) => {
            let _ = writeln!(out, "{} -> bus error (expected)", line.text);
            Ok(())
        }
        (Some(Expect::BusError), Ok(v)) => Err(fail(format!("expected bus error, read {v:?}"))),
        (_, Err(e)) => Err(client(e)),
        (Some(Expect::Words(want)), Ok(v)) => {
            let got = as_words(&v);
            let _ = writeln!(out, "{} -> {}", line.text, hex_list(&got));
            if &got == want {
                Ok(())
            } else {
                Err(fail(format!("expected {}, read {}", hex_list(want), hex_list(&got))))
            }
        }
        (None, Ok(v)) => {
            let _ = writeln!(out, "{} -> {}", line.text, hex_list(&as_words(&v)));
            Ok(())
        }
    }
}

fn hex_list(words: &[u32]) -> String {
    words
        .iter()
        .map(|w| format!("{w:#010x}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Runs every step in order, stopping at the first failure. Does not end the
/// simulation.
pub fn execute<L: LineLink>(
    session: &mut Session<L>,
    map: Option<&RegisterMap>,
    lines: &[Line],
    out: &mut dyn Write,
) -> Result<(), ScriptError> {
    for line in lines {
        let client = |source| ScriptError::Client {
            line: line.number,
            source,
        };
        match &line.step {
            Step::Write(target, value) => {
                match (target, map) {
                    (Target::Address(a), _) => session.write32(*a, *value),
                    (Target::Register(p), Some(map)) => session.write_reg(map, p, *value),
                    (Target::Register(p), None) => {
                        Err(ClientError::UnknownRegister(format!("{p} (no register map)")))
                    }
                }
                .map_err(client)?;
                let _ = writeln!(out, "{}", line.text);
            }
            Step::Read(target, expect) => {
                let got = resolve_read(session, map, target);
                check(line, expect, got, |w| vec![*w], out)?;
            }
            Step::BlockWrite(addr, data) => {
                session.block_write(*addr, data).map_err(client)?;
                let _ = writeln!(out, "{}", line.text);
            }
            Step::BlockRead(addr, count, expect) => {
                let got = session.block_read(*addr, *count);
                check(line, expect, got, |w| w.clone(), out)?;
            }
            Step::Advance(ns) => {
                session.advance_time(*ns).map_err(client)?;
                let _ = writeln!(out, "{}", line.text);
            }
        }
    }
    Ok(())
}
