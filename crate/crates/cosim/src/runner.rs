//! Test orchestration: FIFOs, child processes, logs, timeout and verdict.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use crate::manifest::{expand, TestSpec};
use crate::transport::{create_pipes, remove_pipes, TransportConfig};

const POLL_INTERVAL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    InfraError,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::InfraError => 2,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::InfraError => "infra_error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestReport {
    pub name: String,
    pub verdict: Verdict,
    /// `None` when the process was never started or died from a signal.
    pub test_exit: Option<i32>,
    pub sim_exit: Option<i32>,
    pub duration_ms: u64,
    pub sw_log: PathBuf,
    pub fw_log: PathBuf,
    /// Why the run was not a clean pass or fail.
    pub detail: Option<String>,
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = |c: Option<i32>| c.map_or_else(|| "-".to_owned(), |c| c.to_string());
        write!(
            f,
            "{}: {} (test exit {}, sim exit {}, {} ms)",
            self.name,
            self.verdict,
            code(self.test_exit),
            code(self.sim_exit),
            self.duration_ms
        )?;
        if let Some(d) = &self.detail {
            write!(f, " - {d}")?;
        }
        write!(f, "\n  sw log: {}\n  fw log: {}", self.sw_log.display(), self.fw_log.display())
    }
}

static RUN_SEQ: AtomicU64 = AtomicU64::new(0);

fn fresh_fifos(spec: &TestSpec) -> (PathBuf, PathBuf) {
    if let Some((a, b)) = &spec.fifo_paths {
        return (a.clone(), b.clone());
    }
    let tag = format!(
        "{}-{}-{}",
        spec.name,
        std::process::id(),
        RUN_SEQ.fetch_add(1, Ordering::Relaxed)
    );
    (
        spec.work_dir.join(format!("{tag}.sw2fw")),
        spec.work_dir.join(format!("{tag}.fw2sw")),
    )
}

fn open_log(path: &Path) -> io::Result<File> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(path)
}

fn note(log: &mut File, msg: &str) {
    let _ = writeln!(log, "# cosim: {msg}");
}

fn spawn(argv: &[String], log: &File) -> io::Result<Child> {
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(log.try_clone()?)
        .stderr(log.try_clone()?)
        // Own process group so a timeout also reaches grandchildren.
        .process_group(0);
    cmd.spawn()
}

fn kill_group(child: &mut Child) {
    if let Ok(pid) = i32::try_from(child.id()) {
        // SAFETY: plain syscall on a process group we created.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

fn exit_code(status: ExitStatus) -> Option<i32> {
    status.code()
}

fn describe(status: ExitStatus) -> String {
    match (status.code(), status.signal()) {
        (Some(c), _) => format!("exit {c}"),
        (None, Some(s)) => format!("signal {s}"),
        _ => "unknown status".into(),
    }
}

struct Run {
    started: Instant,
    report: TestReport,
}

impl Run {
    fn finish(mut self, verdict: Verdict, detail: Option<String>) -> TestReport {
        self.report.verdict = verdict;
        self.report.detail = detail;
        self.report.duration_ms = self.started.elapsed().as_millis() as u64;
        self.report
    }
}

/// Executes one test end to end. Never panics on child misbehaviour; every
/// failure is folded into the returned report.
pub fn run(spec: &TestSpec) -> TestReport {
    let run = Run {
        started: Instant::now(),
        report: TestReport {
            name: spec.name.clone(),
            verdict: Verdict::InfraError,
            test_exit: None,
            sim_exit: None,
            duration_ms: 0,
            sw_log: spec.sw_log.clone(),
            fw_log: spec.fw_log.clone(),
            detail: None,
        },
    };

    let (mut sw_log, mut fw_log) = match (open_log(&spec.sw_log), open_log(&spec.fw_log)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return run.finish(Verdict::InfraError, Some(format!("log files: {e}"))),
    };

    let (sw_to_fw, fw_to_sw) = fresh_fifos(spec);
    let cfg = TransportConfig::new(&sw_to_fw, &fw_to_sw);
    if let Err(e) = fs::create_dir_all(&spec.work_dir)
        .map_err(Into::into)
        .and_then(|()| create_pipes(&cfg))
    {
        let msg = format!("creating FIFOs: {e}");
        note(&mut sw_log, &msg);
        note(&mut fw_log, &msg);
        return run.finish(Verdict::InfraError, Some(msg));
    }

    let cosim = std::env::current_exe()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|_| "cosim".into());
    let values = [
        ("SW_TO_FW", sw_to_fw.to_string_lossy().into_owned()),
        ("FW_TO_SW", fw_to_sw.to_string_lossy().into_owned()),
        ("WORK_DIR", spec.work_dir.to_string_lossy().into_owned()),
        ("MANIFEST_DIR", spec.manifest_dir.to_string_lossy().into_owned()),
        ("COSIM", cosim),
    ];
    let values: Vec<(&str, &str)> = values.iter().map(|(k, v)| (*k, v.as_str())).collect();
    let sim_argv: Vec<String> = spec.sim_cmd.iter().map(|a| expand(a, &values)).collect();
    let test_argv: Vec<String> = spec.test_cmd.iter().map(|a| expand(a, &values)).collect();

    let report = supervise(run, spec, &sim_argv, &test_argv, &mut sw_log, &mut fw_log);

    if !spec.keep_fifos {
        if let Err(e) = remove_pipes(&cfg) {
            note(&mut fw_log, &format!("removing FIFOs: {e}"));
        }
    }
    report
}

fn supervise(
    run: Run,
    spec: &TestSpec,
    sim_argv: &[String],
    test_argv: &[String],
    sw_log: &mut File,
    fw_log: &mut File,
) -> TestReport {
    note(fw_log, &format!("spawning simulator: {}", sim_argv.join(" ")));
    let mut sim = match spawn(sim_argv, fw_log) {
        Ok(c) => c,
        Err(e) => {
            let msg = format!("cannot spawn simulator `{}`: {e}", sim_argv[0]);
            note(fw_log, &msg);
            note(sw_log, "test not started: simulator failed to spawn");
            return run.finish(Verdict::InfraError, Some(msg));
        }
    };

    note(sw_log, &format!("spawning test: {}", test_argv.join(" ")));
    let mut test = match spawn(test_argv, sw_log) {
        Ok(c) => c,
        Err(e) => {
            let msg = format!("cannot spawn test `{}`: {e}", test_argv[0]);
            note(sw_log, &msg);
            kill_group(&mut sim);
            let _ = sim.wait();
            note(fw_log, "simulator killed: test failed to spawn");
            return run.finish(Verdict::InfraError, Some(msg));
        }
    };

    let deadline = run.started + Duration::from_secs(u64::from(spec.timeout_s));
    let mut sim_status = None;
    let mut test_status = None;
    while sim_status.is_none() || test_status.is_none() {
        if sim_status.is_none() {
            sim_status = sim.try_wait().ok().flatten();
        }
        if test_status.is_none() {
            test_status = test.try_wait().ok().flatten();
        }
        if sim_status.is_some() && test_status.is_some() {
            break;
        }
        if Instant::now() >= deadline {
            let msg = format!("timeout after {} s, killing children", spec.timeout_s);
            if test_status.is_none() {
                kill_group(&mut test);
                let _ = test.wait();
                note(sw_log, &msg);
            }
            if sim_status.is_none() {
                kill_group(&mut sim);
                let _ = sim.wait();
                note(fw_log, &msg);
            }
            let mut run = run;
            run.report.test_exit = test_status.and_then(exit_code);
            run.report.sim_exit = sim_status.and_then(exit_code);
            return run.finish(Verdict::InfraError, Some(msg));
        }
        thread::sleep(POLL_INTERVAL);
    }

    let (sim_status, test_status) = (sim_status.unwrap(), test_status.unwrap());
    note(fw_log, &format!("simulator finished: {}", describe(sim_status)));
    note(sw_log, &format!("test finished: {}", describe(test_status)));
    let mut run = run;
    run.report.test_exit = exit_code(test_status);
    run.report.sim_exit = exit_code(sim_status);
    let passed = test_status.success() && sim_status.success();
    if passed {
        run.finish(Verdict::Pass, None)
    } else {
        let detail = format!(
            "test {}, simulator {}",
            describe(test_status),
            describe(sim_status)
        );
        run.finish(Verdict::Fail, Some(detail))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::os::unix::fs::FileTypeExt;

    fn sh(script: &str) -> Vec<String> {
        vec!["/bin/sh".into(), "-c".into(), script.into()]
    }

    fn spec(dir: &Path, sim: Vec<String>, test: Vec<String>) -> TestSpec {
        let mut spec = TestSpec::new("unit", dir, sim, test).unwrap();
        spec.work_dir = dir.join("work");
        spec.set_log_dir(&dir.join("logs"));
        spec.timeout_s = 5;
        spec
    }

    fn fifo_count(dir: &Path) -> usize {
        fs::read_dir(dir)
            .map(|rd| {
                rd.filter_map(Result::ok)
                    .filter(|e| e.file_type().map(|t| t.is_fifo()).unwrap_or(false))
                    .count()
            })
            .unwrap_or(0)
    }

    #[test]
    fn verdicts_follow_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let ok = run(&spec(dir.path(), sh("exit 0"), sh("echo hi")));
        assert_eq!(ok.verdict, Verdict::Pass);
        assert_eq!((ok.test_exit, ok.sim_exit), (Some(0), Some(0)));
        assert!(fs::read_to_string(&ok.sw_log).unwrap().contains("hi"));

        let fail = run(&spec(dir.path(), sh("exit 0"), sh("exit 3")));
        assert_eq!(fail.verdict, Verdict::Fail);
        assert_eq!(fail.test_exit, Some(3));

        let sim_fail = run(&spec(dir.path(), sh("exit 4"), sh("exit 0")));
        assert_eq!(sim_fail.verdict, Verdict::Fail);
        assert_eq!(fifo_count(&dir.path().join("work")), 0);
    }

    #[test]
    fn placeholders_reach_children() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(dir.path(), sh("test -p \"$0\" && test -p \"$1\""), sh("true"));
        s.sim_cmd.extend(["{SW_TO_FW}".into(), "{FW_TO_SW}".into()]);
        let report = run(&s);
        assert_eq!(report.verdict, Verdict::Pass, "{report}");
    }

    #[test]
    fn missing_simulator_is_infra_error() {
        let dir = tempfile::tempdir().unwrap();
        let marker = dir.path().join("marker");
        let s = spec(
            dir.path(),
            vec!["/nonexistent/simulator".into()],
            sh(&format!("touch {}", marker.display())),
        );
        let report = run(&s);
        assert_eq!(report.verdict, Verdict::InfraError);
        assert!(!marker.exists());
        assert!(fs::metadata(&report.fw_log).unwrap().len() > 0);
        assert_eq!(fifo_count(&dir.path().join("work")), 0);
    }

    #[test]
    fn timeout_kills_children() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(dir.path(), sh("sleep 30"), sh("sleep 30"));
        s.timeout_s = 1;
        let start = Instant::now();
        let report = run(&s);
        assert_eq!(report.verdict, Verdict::InfraError);
        assert!(start.elapsed() < Duration::from_secs(3));
        assert_eq!(fifo_count(&dir.path().join("work")), 0);
    }

    #[test]
    fn keep_fifos_leaves_them() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(dir.path(), sh("true"), sh("true"));
        s.keep_fifos = true;
        run(&s);
        assert_eq!(fifo_count(&dir.path().join("work")), 2);
    }
}
