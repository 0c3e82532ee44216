//! Test manifests.
//!
//! A manifest is a small TOML file describing one co-simulation test:
//!
//! ```toml
//! name = "adder"
//! sim_cmd = ["{COSIM}", "stub", "--sw-to-fw", "{SW_TO_FW}", "--fw-to-sw", "{FW_TO_SW}", "--device", "adder@0"]
//! test_cmd = ["{COSIM}", "script", "{MANIFEST_DIR}/adder.script", "--sw-to-fw", "{SW_TO_FW}", "--fw-to-sw", "{FW_TO_SW}"]
//! timeout_s = 30        # default 60
//! keep_fifos = false    # default false
//! # work_dir, sw_log, fw_log, sw_to_fw_path, fw_to_sw_path are optional
//! ```
//!
//! Relative paths are resolved against the manifest's directory. The
//! placeholders `{SW_TO_FW}` and `{FW_TO_SW}` expand to the run's FIFO paths;
//! `{WORK_DIR}`, `{MANIFEST_DIR}` and `{COSIM}` (this executable) are also
//! available. Any other `{NAME}` is rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const PLACEHOLDERS: [&str; 5] = ["SW_TO_FW", "FW_TO_SW", "WORK_DIR", "MANIFEST_DIR", "COSIM"];

pub const DEFAULT_TIMEOUT_S: u32 = 60;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error: {0}")]
    SyntaxError(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    name: Option<String>,
    work_dir: Option<PathBuf>,
    sim_cmd: Option<Vec<String>>,
    test_cmd: Option<Vec<String>>,
    sw_log: Option<PathBuf>,
    fw_log: Option<PathBuf>,
    timeout_s: Option<u32>,
    keep_fifos: Option<bool>,
    sw_to_fw_path: Option<PathBuf>,
    fw_to_sw_path: Option<PathBuf>,
}

/// A validated test description with defaults applied and paths absolute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSpec {
    pub name: String,
    pub work_dir: PathBuf,
    pub manifest_dir: PathBuf,
    pub sim_cmd: Vec<String>,
    pub test_cmd: Vec<String>,
    pub sw_log: PathBuf,
    pub fw_log: PathBuf,
    pub timeout_s: u32,
    pub keep_fifos: bool,
    /// Fixed FIFO paths; fresh per-run paths under `work_dir` when absent.
    pub fifo_paths: Option<(PathBuf, PathBuf)>,
}

impl TestSpec {
    /// Builds a spec with every default applied. `manifest_dir` anchors
    /// relative paths.
    pub fn new(
        name: impl Into<String>,
        manifest_dir: impl Into<PathBuf>,
        sim_cmd: Vec<String>,
        test_cmd: Vec<String>,
    ) -> Result<Self, ManifestError> {
        let name = name.into();
        let work_dir = std::env::temp_dir().join("cosim").join(&name);
        let spec = Self {
            sw_log: work_dir.join(format!("{name}.sw.log")),
            fw_log: work_dir.join(format!("{name}.fw.log")),
            name,
            work_dir,
            manifest_dir: manifest_dir.into(),
            sim_cmd,
            test_cmd,
            timeout_s: DEFAULT_TIMEOUT_S,
            keep_fifos: false,
            fifo_paths: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let invalid = |m: String| Err(ManifestError::Invalid(m));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return invalid(format!("name `{}` must be non-empty [A-Za-z0-9_.-]", self.name));
        }
        if self.sim_cmd.is_empty() {
            return invalid("sim_cmd is empty".into());
        }
        if self.test_cmd.is_empty() {
            return invalid("test_cmd is empty".into());
        }
        if self.timeout_s == 0 {
            return invalid("timeout_s must be positive".into());
        }
        for arg in self.sim_cmd.iter().chain(&self.test_cmd) {
            for name in placeholders_in(arg) {
                if !PLACEHOLDERS.contains(&name) {
                    return invalid(format!("unknown placeholder {{{name}}} in `{arg}`"));
                }
            }
        }
        if let Some((a, b)) = &self.fifo_paths {
            if a == b {
                return invalid("sw_to_fw_path and fw_to_sw_path must differ".into());
            }
        }
        Ok(())
    }

    /// Redirects both logs into `dir`, keeping their file names.
    pub fn set_log_dir(&mut self, dir: &Path) {
        self.sw_log = dir.join(format!("{}.sw.log", self.name));
        self.fw_log = dir.join(format!("{}.fw.log", self.name));
    }
}

/// Names of the `{NAME}` tokens in `arg` (uppercase letters and `_`).
fn placeholders_in(arg: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = arg;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                if !name.is_empty() && name.bytes().all(|b| b.is_ascii_uppercase() || b == b'_') {
                    out.push(name);
                }
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

/// Replaces every known placeholder in `arg`.
pub fn expand(arg: &str, values: &[(&str, &str)]) -> String {
    values.iter().fold(arg.to_owned(), |acc, (name, value)| {
        acc.replace(&format!("{{{name}}}"), value)
    })
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

pub fn parse_manifest(text: &str, manifest_dir: &Path) -> Result<TestSpec, ManifestError> {
    let raw: RawManifest =
        toml::from_str(text).map_err(|e| ManifestError::SyntaxError(e.to_string()))?;
    let name = raw.name.ok_or(ManifestError::MissingField("name"))?;
    let sim_cmd = raw.sim_cmd.ok_or(ManifestError::MissingField("sim_cmd"))?;
    let test_cmd = raw.test_cmd.ok_or(ManifestError::MissingField("test_cmd"))?;
    let mut spec = TestSpec::new(name, manifest_dir, sim_cmd, test_cmd)?;

    if let Some(dir) = raw.work_dir {
        spec.work_dir = resolve(manifest_dir, dir);
        spec.set_log_dir(&spec.work_dir.clone());
    }
    if let Some(p) = raw.sw_log {
        spec.sw_log = resolve(manifest_dir, p);
    }
    if let Some(p) = raw.fw_log {
        spec.fw_log = resolve(manifest_dir, p);
    }
    if let Some(t) = raw.timeout_s {
        spec.timeout_s = t;
    }
    if let Some(k) = raw.keep_fifos {
        spec.keep_fifos = k;
    }
    spec.fifo_paths = match (raw.sw_to_fw_path, raw.fw_to_sw_path) {
        (None, None) => None,
        (Some(a), Some(b)) => Some((resolve(manifest_dir, a), resolve(manifest_dir, b))),
        _ => {
            return Err(ManifestError::Invalid(
                "sw_to_fw_path and fw_to_sw_path must be given together".into(),
            ))
        }
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_manifest(path: &Path) -> Result<TestSpec, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_owned(),
        source,
    })?;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let dir = dir.canonicalize().unwrap_or_else(|_| dir.to_owned());
    parse_manifest(&text, &dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "adder"
sim_cmd = ["sim", "{SW_TO_FW}", "{FW_TO_SW}"]
test_cmd = ["test"]
"#;

    #[test]
    fn minimal_manifest_gets_defaults() {
        let spec = parse_manifest(MINIMAL, Path::new("/m")).unwrap();
        assert_eq!(spec.timeout_s, 60);
        assert!(!spec.keep_fifos);
        assert_eq!(spec.work_dir, std::env::temp_dir().join("cosim/adder"));
        assert_eq!(spec.sw_log, spec.work_dir.join("adder.sw.log"));
        assert_eq!(spec.fifo_paths, None);
    }

    #[test]
    fn relative_paths_resolve_against_manifest() {
        let text = format!("{MINIMAL}work_dir = \"w\"\nfw_log = \"/abs/fw.log\"\ntimeout_s = 5\n");
        let spec = parse_manifest(&text, Path::new("/m")).unwrap();
        assert_eq!(spec.work_dir, PathBuf::from("/m/w"));
        assert_eq!(spec.sw_log, PathBuf::from("/m/w/adder.sw.log"));
        assert_eq!(spec.fw_log, PathBuf::from("/abs/fw.log"));
        assert_eq!(spec.timeout_s, 5);
    }

    #[test]
    fn errors() {
        let missing = "name = \"x\"\nsim_cmd = [\"a\"]\n";
        assert!(matches!(
            parse_manifest(missing, Path::new("/")),
            Err(ManifestError::MissingField("test_cmd"))
        ));
        let zero = format!("{MINIMAL}timeout_s = 0\n");
        assert!(matches!(parse_manifest(&zero, Path::new("/")), Err(ManifestError::Invalid(_))));
        assert!(matches!(
            parse_manifest("name = ", Path::new("/")),
            Err(ManifestError::SyntaxError(_))
        ));
        assert!(matches!(
            parse_manifest(&format!("{MINIMAL}bogus = 1\n"), Path::new("/")),
            Err(ManifestError::SyntaxError(_))
        ));
        let empty = "name = \"x\"\nsim_cmd = []\ntest_cmd = [\"t\"]\n";
        assert!(matches!(parse_manifest(empty, Path::new("/")), Err(ManifestError::Invalid(_))));
        let unknown = "name = \"x\"\nsim_cmd = [\"{NOPE}\"]\ntest_cmd = [\"t\"]\n";
        assert!(matches!(parse_manifest(unknown, Path::new("/")), Err(ManifestError::Invalid(_))));
    }

    #[test]
    fn placeholder_expansion() {
        assert_eq!(placeholders_in("a{SW_TO_FW}b{x}{FW_TO_SW}"), vec!["SW_TO_FW", "FW_TO_SW"]);
        assert_eq!(
            expand("--p={SW_TO_FW}", &[("SW_TO_FW", "/tmp/p")]),
            "--p=/tmp/p"
        );
    }
}
