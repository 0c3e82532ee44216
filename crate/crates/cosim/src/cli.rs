//! `cosim` command line.
//!
//! Exit codes: `run` returns 0 on pass, 1 on fail and 2 on infrastructure
//! errors (including a bad manifest). `regmap` returns 0 or 2. `script`
//! returns 0 when every step passed, 1 on a failed assertion or unexpected
//! bus error, 2 when the simulator could not be reached.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cosim_core::client::{AccessModel, Session};
use cosim_core::regmap::RegisterMap;

use crate::manifest::load_manifest;
use crate::runner::{run, Verdict};
use crate::script::{execute, parse_script};
use crate::stub::{main_with as stub_main, StubArgs};
use crate::transport::{open_channel, Role, TransportConfig, DEFAULT_TIMEOUT_MS};

#[derive(Parser)]
#[command(name = "cosim", version, about = "Bus-level hardware/software co-simulation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the test described by a manifest.
    Run {
        manifest: PathBuf,
        /// Override the manifest's wall-clock limit, in seconds.
        #[arg(long)]
        timeout: Option<u32>,
        /// Leave the FIFOs in place after the run.
        #[arg(long)]
        keep_fifos: bool,
        /// Write both logs into this directory.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Allocate a register description and write the flat address listing.
    Regmap {
        description: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Serve a software device bus over the FIFOs (same as `cosim-stub`).
    Stub(StubArgs),
    /// Execute a test script against a simulator.
    Script(ScriptArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScriptArgs {
    pub script: PathBuf,
    #[arg(long = "sw-to-fw")]
    pub sw_to_fw: PathBuf,
    #[arg(long = "fw-to-sw")]
    pub fw_to_sw: PathBuf,
    /// Register description used to resolve register paths.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long = "timeout-ms", default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout_ms: u64,
    /// Modeled cost of every transaction, in ns.
    #[arg(long = "ns-per-single", default_value_t = 0)]
    pub ns_per_single: u64,
    /// Modeled cost of every transferred word, in ns.
    #[arg(long = "ns-per-word", default_value_t = 0)]
    pub ns_per_word: u64,
}

pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.command {
        Cmd::Run {
            manifest,
            timeout,
            keep_fifos,
            log_dir,
        } => run_cmd(manifest, timeout, keep_fifos, log_dir),
        Cmd::Regmap { description, output } => regmap_cmd(description, output),
        Cmd::Stub(args) => stub_main(&args),
        Cmd::Script(args) => script_main(&args),
    }
}

fn run_cmd(manifest: PathBuf, timeout: Option<u32>, keep_fifos: bool, log_dir: Option<PathBuf>) -> i32 {
    let mut spec = match load_manifest(&manifest) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cosim: {}: {e}", manifest.display());
            return Verdict::InfraError.exit_code();
        }
    };
    if let Some(t) = timeout {
        spec.timeout_s = t;
    }
    spec.keep_fifos |= keep_fifos;
    if let Some(dir) = log_dir {
        spec.set_log_dir(&dir);
    }
    if let Err(e) = spec.validate() {
        eprintln!("cosim: {e}");
        return Verdict::InfraError.exit_code();
    }
    let report = run(&spec);
    println!("{report}");
    report.verdict.exit_code()
}

fn regmap_cmd(description: PathBuf, output: PathBuf) -> i32 {
    let result = fs::read_to_string(&description)
        .map_err(|e| e.to_string())
        .and_then(|text| RegisterMap::parse(&text).map_err(|e| e.to_string()))
        .and_then(|map| fs::write(&output, map.emit()).map_err(|e| e.to_string()));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("cosim regmap: {}: {e}", description.display());
            2
        }
    }
}

/// Entry point of `cosim script`.
pub fn script_main(args: &ScriptArgs) -> i32 {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let infra = |msg: String| {
        eprintln!("cosim script: {msg}");
        2
    };

    let text = match fs::read_to_string(&args.script) {
        Ok(t) => t,
        Err(e) => return infra(format!("{}: {e}", args.script.display())),
    };
    let lines = match parse_script(&text) {
        Ok(l) => l,
        Err(e) => return infra(format!("{}: {e}", args.script.display())),
    };
    let map = match &args.map {
        None => None,
        Some(path) => match fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| RegisterMap::parse(&t).map_err(|e| e.to_string()))
        {
            Ok(m) => Some(m),
            Err(e) => return infra(format!("{}: {e}", path.display())),
        },
    };

    let cfg = TransportConfig::new(&args.sw_to_fw, &args.fw_to_sw).with_timeout_ms(args.timeout_ms);
    let channel = match open_channel(&cfg, Role::Client) {
        Ok(c) => c,
        Err(e) => return infra(format!("connecting: {e}")),
    };
    let model = AccessModel {
        ns_per_single: args.ns_per_single,
        ns_per_word: args.ns_per_word,
    };
    let mut session = Session::with_access_model(channel, model);

    let outcome = execute(&mut session, map.as_ref(), &lines, &mut out);
    let st = session.stats();
    let _ = writeln!(
        out,
        "stats: reads {} writes {} words_read {} words_written {} modeled_time_ns {}",
        st.reads, st.writes, st.words_read, st.words_written, st.modeled_time_ns
    );
    let shutdown = session.end_simulation().map(drop);

    match (outcome, shutdown) {
        (Ok(()), Ok(())) => {
            let _ = writeln!(out, "PASS");
            0
        }
        (Ok(()), Err(e)) => infra(format!("ending simulation: {e}")),
        (Err(e), _) => {
            let _ = writeln!(out, "FAIL: {e}");
            eprintln!("cosim script: {e}");
            if e.is_infrastructure() {
                2
            } else {
                1
            }
        }
    }
}
