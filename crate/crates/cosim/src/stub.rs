//! The software simulator stub: a bus of device models served over the
//! named-pipe channel, standing in for an HDL simulator.

use std::fs::{self, File};
use std::io::{self, LineWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use cosim_core::bus::{AdderDevice, Bus, DeviceModel, MemoryDevice, RegisterFileDevice, ADDER_SPAN};
use cosim_core::regmap::RegisterMap;
use cosim_core::serve::{serve, Server};

use crate::transport::{open_channel, Role, TransportConfig, DEFAULT_TIMEOUT_MS};

/// A device to attach, written `adder@<hexbase>` or `mem@<hexbase>:<words>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceSpec {
    Adder { base: u32 },
    Memory { base: u32, words: u32 },
}

fn parse_hex(s: &str) -> Result<u32, String> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    u32::from_str_radix(digits, 16).map_err(|_| format!("`{s}` is not a hex address"))
}

impl FromStr for DeviceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s
            .split_once('@')
            .ok_or_else(|| format!("`{s}`: expected <kind>@<hexbase>"))?;
        match kind {
            "adder" => Ok(DeviceSpec::Adder { base: parse_hex(rest)? }),
            "mem" => {
                let (base, words) = rest
                    .split_once(':')
                    .ok_or_else(|| format!("`{s}`: expected mem@<hexbase>:<words>"))?;
                let words = words
                    .parse()
                    .map_err(|_| format!("`{words}` is not a word count"))?;
                Ok(DeviceSpec::Memory {
                    base: parse_hex(base)?,
                    words,
                })
            }
            other => Err(format!("unknown device kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct StubArgs {
    /// FIFO carrying commands from the test program.
    #[arg(long = "sw-to-fw")]
    pub sw_to_fw: PathBuf,
    /// FIFO carrying responses back to the test program.
    #[arg(long = "fw-to-sw")]
    pub fw_to_sw: PathBuf,
    /// Register description; a register file covering it is mapped at its base.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Device to attach, e.g. `adder@0` or `mem@1000:64`. Repeatable.
    #[arg(long = "device")]
    pub devices: Vec<DeviceSpec>,
    /// Protocol log; defaults to stderr.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// How long to wait for the test program to connect.
    #[arg(long = "connect-timeout-ms", default_value_t = DEFAULT_TIMEOUT_MS)]
    pub connect_timeout_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum StubError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("transport: {0}")]
    Transport(#[from] crate::transport::TransportError),
    #[error(transparent)]
    Serve(#[from] cosim_core::serve::ServeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn build_bus(args: &StubArgs) -> Result<Bus, StubError> {
    let mut bus = Bus::new();
    let attach = |bus: &mut Bus, base, span, dev: Box<dyn DeviceModel>| {
        bus.attach(base, span, dev)
            .map_err(|e| StubError::Config(e.to_string()))
    };
    if let Some(path) = &args.map {
        let text = fs::read_to_string(path)
            .map_err(|e| StubError::Config(format!("{}: {e}", path.display())))?;
        let map = RegisterMap::parse(&text)
            .map_err(|e| StubError::Config(format!("{}: {e}", path.display())))?;
        let regs = RegisterFileDevice::new(&map);
        attach(&mut bus, regs.base(), regs.span(), Box::new(regs))?;
    }
    for dev in &args.devices {
        match *dev {
            DeviceSpec::Adder { base } => {
                attach(&mut bus, base, ADDER_SPAN, Box::new(AdderDevice::new()))?
            }
            DeviceSpec::Memory { base, words } => {
                let mem = MemoryDevice::new(words as usize);
                attach(&mut bus, base, mem.span(), Box::new(mem))?
            }
        }
    }
    Ok(bus)
}

/// Connects as the server, serves until `Q`, and returns the final report.
pub fn run_stub(args: &StubArgs) -> Result<cosim_core::ServeReport, StubError> {
    let bus = build_bus(args)?;
    let mut log: Box<dyn Write> = match &args.log {
        Some(path) => Box::new(LineWriter::new(File::create(path)?)),
        None => Box::new(io::stderr()),
    };
    let windows: Vec<String> = bus
        .windows()
        .map(|(base, span)| format!("{base:08X}+{span:X}"))
        .collect();
    writeln!(log, "# cosim-stub: bus windows [{}]", windows.join(", "))?;

    let cfg = TransportConfig::new(&args.sw_to_fw, &args.fw_to_sw)
        .with_timeout_ms(args.connect_timeout_ms);
    let mut channel = open_channel(&cfg, Role::Server)?;
    // The test program sets the pace; the runner owns the wall-clock limit.
    channel.set_recv_timeout(None);
    writeln!(log, "# cosim-stub: connected")?;

    let mut server = Server::new(bus);
    let result = serve(&mut channel, &mut server, |e| {
        let _ = writeln!(log, "{} {} {}", e.time_ns, e.direction.as_str(), e.line);
    });
    match &result {
        Ok(r) => writeln!(
            log,
            "# cosim-stub: done, {} commands, {} errors, sim time {} ns",
            r.commands, r.errors, r.sim_time_ns
        )?,
        Err(e) => writeln!(log, "# cosim-stub: {e}")?,
    }
    Ok(result?)
}

/// Process entry shared by `cosim-stub` and `cosim stub`.
pub fn main_with(args: &StubArgs) -> i32 {
    match run_stub(args) {
        Ok(_) => 0,
        Err(StubError::Config(msg)) => {
            eprintln!("cosim-stub: {msg}");
            2
        }
        Err(e) => {
            eprintln!("cosim-stub: {e}");
            1
        }
    }
}
