//! Named-pipe channel between the test process and the simulator.
//!
//! Two FIFOs carry one direction each. Both endpoints open them in a fixed
//! order so neither can deadlock waiting for the other:
//!
//! * server: `sw_to_fw` for reading, then `fw_to_sw` for writing;
//! * client: `sw_to_fw` for writing, then `fw_to_sw` for reading.
//!
//! Write ends are opened non-blocking in a retry loop (`ENXIO` until a
//! reader exists) and switched to blocking writes once connected. The client
//! opens its read end with a blocking open on a helper thread, so it returns
//! only once the server's writer is there. All receives are waited on with
//! `poll(2)`, which bounds them by the configured timeout.

use std::ffi::CString;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::os::unix::ffi::OsStrExt;
use std::os::unix::fs::{FileTypeExt, OpenOptionsExt};
use std::os::unix::io::AsRawFd;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use cosim_core::link::{LineLink, LinkError};

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("{0} exists and is not a FIFO")]
    PathIsNotFifo(PathBuf),
    #[error("permission denied: {0}")]
    PermissionDenied(PathBuf),
    #[error("{0} does not exist")]
    PathMissing(PathBuf),
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("peer closed the channel")]
    PeerClosed,
    #[error("invalid transport configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<TransportError> for LinkError {
    fn from(err: TransportError) -> Self {
        match err {
            TransportError::Timeout => LinkError::Timeout,
            TransportError::PeerClosed => LinkError::PeerClosed,
            other => LinkError::Io(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportConfig {
    pub sw_to_fw: PathBuf,
    pub fw_to_sw: PathBuf,
    pub timeout_ms: u64,
}

impl TransportConfig {
    pub fn new(sw_to_fw: impl Into<PathBuf>, fw_to_sw: impl Into<PathBuf>) -> Self {
        Self {
            sw_to_fw: sw_to_fw.into(),
            fw_to_sw: fw_to_sw.into(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.sw_to_fw == self.fw_to_sw {
            return Err(TransportError::InvalidConfig("pipe paths must differ"));
        }
        if self.timeout_ms == 0 {
            return Err(TransportError::InvalidConfig("timeout must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

fn path_error(path: &Path, err: io::Error) -> TransportError {
    match err.kind() {
        io::ErrorKind::NotFound => TransportError::PathMissing(path.to_owned()),
        io::ErrorKind::PermissionDenied => TransportError::PermissionDenied(path.to_owned()),
        _ => TransportError::Io(err),
    }
}

fn make_fifo(path: &Path) -> Result<(), TransportError> {
    match fs::symlink_metadata(path) {
        Ok(meta) if meta.file_type().is_fifo() => return Ok(()),
        Ok(_) => return Err(TransportError::PathIsNotFifo(path.to_owned())),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(path_error(path, e)),
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| path_error(parent, e))?;
    }
    let c_path = CString::new(path.as_os_str().as_bytes())
        .map_err(|_| TransportError::InvalidConfig("path contains NUL"))?;
    // SAFETY: c_path is a valid NUL-terminated string for the duration of the call.
    let rc = unsafe { libc::mkfifo(c_path.as_ptr(), 0o600) };
    if rc != 0 {
        let err = io::Error::last_os_error();
        // Lost a race with another creator; fine if it made a FIFO.
        if err.kind() == io::ErrorKind::AlreadyExists {
            return make_fifo(path);
        }
        return Err(path_error(path, err));
    }
    Ok(())
}

/// Creates both FIFOs. Succeeds if they already exist as FIFOs.
pub fn create_pipes(cfg: &TransportConfig) -> Result<(), TransportError> {
    cfg.validate()?;
    make_fifo(&cfg.sw_to_fw)?;
    make_fifo(&cfg.fw_to_sw)
}

/// Removes both FIFOs, ignoring ones that are already gone. Paths that are
/// not FIFOs are left alone.
pub fn remove_pipes(cfg: &TransportConfig) -> Result<(), TransportError> {
    for path in [&cfg.sw_to_fw, &cfg.fw_to_sw] {
        match fs::symlink_metadata(path) {
            Ok(meta) if meta.file_type().is_fifo() => fs::remove_file(path)?,
            Ok(_) => return Err(TransportError::PathIsNotFifo(path.clone())),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(path_error(path, e)),
        }
    }
    Ok(())
}

fn check_fifo(path: &Path) -> Result<(), TransportError> {
    let meta = fs::metadata(path).map_err(|e| path_error(path, e))?;
    if !meta.file_type().is_fifo() {
        return Err(TransportError::PathIsNotFifo(path.to_owned()));
    }
    Ok(())
}

fn open_read_end(path: &Path) -> Result<File, TransportError> {
    check_fifo(path)?;
    OpenOptions::new()
        .read(true)
        .custom_flags(libc::O_NONBLOCK)
        .open(path)
        .map_err(|e| path_error(path, e))
}

fn set_nonblocking(file: &File, nonblocking: bool) -> io::Result<()> {
    let fd = file.as_raw_fd();
    // SAFETY: fd is owned by `file` and stays open across both calls.
    unsafe {
        let flags = libc::fcntl(fd, libc::F_GETFL);
        if flags < 0 {
            return Err(io::Error::last_os_error());
        }
        let flags = if nonblocking {
            flags | libc::O_NONBLOCK
        } else {
            flags & !libc::O_NONBLOCK
        };
        if libc::fcntl(fd, libc::F_SETFL, flags) < 0 {
            return Err(io::Error::last_os_error());
        }
    }
    Ok(())
}

/// Opens a read end and waits for a writer to appear, up to `deadline`.
fn open_read_end_connected(path: &Path, deadline: Instant) -> Result<File, TransportError> {
    check_fifo(path)?;
    let (tx, rx) = mpsc::channel();
    let target = path.to_owned();
    thread::spawn(move || {
        let _ = tx.send(File::open(&target));
    });
    let left = deadline.saturating_duration_since(Instant::now());
    match rx.recv_timeout(left) {
        Ok(opened) => {
            let file = opened.map_err(|e| path_error(path, e))?;
            set_nonblocking(&file, true)?;
            Ok(file)
        }
        Err(_) => {
            // Release the opener thread by briefly posing as the writer.
            let _unblock = OpenOptions::new()
                .write(true)
                .custom_flags(libc::O_NONBLOCK)
                .open(path);
            let _ = rx.recv();
            Err(TransportError::Timeout)
        }
    }
}

fn open_write_end(path: &Path, deadline: Instant) -> Result<File, TransportError> {
    check_fifo(path)?;
    loop {
        match OpenOptions::new()
            .write(true)
            .custom_flags(libc::O_NONBLOCK)
            .open(path)
        {
            Ok(file) => {
                set_nonblocking(&file, false)?;
                return Ok(file);
            }
            Err(e) if e.raw_os_error() == Some(libc::ENXIO) => {
                if Instant::now() >= deadline {
                    return Err(TransportError::Timeout);
                }
                thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Err(path_error(path, e)),
        }
    }
}

/// One endpoint of a connected pipe pair.
#[derive(Debug)]
pub struct Channel {
    role: Role,
    reader: File,
    writer: File,
    buf: Vec<u8>,
    recv_timeout: Option<Duration>,
}

/// Opens the caller's side of the channel, following the role's open order.
///
/// Returns once the peer holds the opposite ends of both pipes, or fails
/// with `Timeout` after `timeout_ms`.
pub fn open_channel(cfg: &TransportConfig, role: Role) -> Result<Channel, TransportError> {
    cfg.validate()?;
    let deadline = Instant::now() + cfg.timeout();
    let (reader, writer) = match role {
        Role::Server => {
            let reader = open_read_end(&cfg.sw_to_fw)?;
            let writer = open_write_end(&cfg.fw_to_sw, deadline)?;
            (reader, writer)
        }
        Role::Client => {
            check_fifo(&cfg.fw_to_sw)?;
            let writer = open_write_end(&cfg.sw_to_fw, deadline)?;
            let reader = open_read_end_connected(&cfg.fw_to_sw, deadline)?;
            (reader, writer)
        }
    };
    Ok(Channel {
        role,
        reader,
        writer,
        buf: Vec::new(),
        recv_timeout: Some(cfg.timeout()),
    })
}

impl Channel {
    pub fn role(&self) -> Role {
        self.role
    }

    /// `None` waits forever.
    pub fn set_recv_timeout(&mut self, timeout: Option<Duration>) {
        self.recv_timeout = timeout;
    }

    pub fn send_line(&mut self, line: &str) -> Result<(), TransportError> {
        let res = self
            .writer
            .write_all(line.as_bytes())
            .and_then(|()| self.writer.flush());
        match res {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Err(TransportError::PeerClosed),
            Err(e) => Err(e.into()),
        }
    }

    /// Blocks until a full `\n`-terminated line is available and returns it,
    /// newline included.
    pub fn recv_line(&mut self) -> Result<String, TransportError> {
        let deadline = self.recv_timeout.map(|t| Instant::now() + t);
        let mut chunk = [0u8; 4096];
        loop {
            if let Some(pos) = self.buf.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = self.buf.drain(..=pos).collect();
                return Ok(String::from_utf8_lossy(&line).into_owned());
            }
            self.wait_readable(deadline)?;
            match self.reader.read(&mut chunk) {
                Ok(0) => return Err(TransportError::PeerClosed),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e)
                    if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::Interrupted) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn wait_readable(&self, deadline: Option<Instant>) -> Result<(), TransportError> {
        let timeout_ms: libc::c_int = match deadline {
            None => -1,
            Some(d) => {
                let left = d.saturating_duration_since(Instant::now());
                if left.is_zero() {
                    return Err(TransportError::Timeout);
                }
                // Round up so a sub-millisecond remainder still waits.
                left.as_millis().saturating_add(1).min(i32::MAX as u128) as libc::c_int
            }
        };
        let mut pfd = libc::pollfd {
            fd: self.reader.as_raw_fd(),
            events: libc::POLLIN,
            revents: 0,
        };
        loop {
            // SAFETY: pfd points to one valid pollfd for the call's duration.
            let rc = unsafe { libc::poll(&mut pfd, 1, timeout_ms) };
            match rc {
                0 => return Err(TransportError::Timeout),
                n if n > 0 => return Ok(()),
                _ => {
                    let err = io::Error::last_os_error();
                    if err.kind() != io::ErrorKind::Interrupted {
                        return Err(err.into());
                    }
                }
            }
        }
    }
}

impl LineLink for Channel {
    fn send_line(&mut self, line: &str) -> Result<(), LinkError> {
        Channel::send_line(self, line).map_err(Into::into)
    }

    fn recv_line(&mut self) -> Result<String, LinkError> {
        Channel::recv_line(self).map_err(Into::into)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path) -> TransportConfig {
        TransportConfig::new(dir.join("sw2fw"), dir.join("fw2sw")).with_timeout_ms(2_000)
    }

    #[test]
    fn create_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg(&dir.path().join("nested"));
        create_pipes(&cfg).unwrap();
        create_pipes(&cfg).unwrap();
        assert!(fs::metadata(&cfg.sw_to_fw).unwrap().file_type().is_fifo());
        remove_pipes(&cfg).unwrap();
        assert!(!cfg.sw_to_fw.exists());
        remove_pipes(&cfg).unwrap();
    }

    #[test]
    fn regular_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg(dir.path());
        fs::write(&cfg.sw_to_fw, b"x").unwrap();
        assert!(matches!(create_pipes(&cfg), Err(TransportError::PathIsNotFifo(_))));
    }

    #[test]
    fn invalid_configs() {
        let same = TransportConfig::new("/tmp/a", "/tmp/a");
        assert!(matches!(create_pipes(&same), Err(TransportError::InvalidConfig(_))));
        let zero = TransportConfig::new("/tmp/a", "/tmp/b").with_timeout_ms(0);
        assert!(matches!(zero.validate(), Err(TransportError::InvalidConfig(_))));
    }

    #[test]
    fn missing_paths() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg(dir.path());
        assert!(matches!(open_channel(&cfg, Role::Client), Err(TransportError::PathMissing(_))));
        assert!(matches!(open_channel(&cfg, Role::Server), Err(TransportError::PathMissing(_))));
    }

    #[test]
    fn lonely_client_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg(dir.path()).with_timeout_ms(100);
        create_pipes(&cfg).unwrap();
        let start = Instant::now();
        assert!(matches!(open_channel(&cfg, Role::Client), Err(TransportError::Timeout)));
        let took = start.elapsed();
        assert!(took >= Duration::from_millis(100) && took < Duration::from_secs(2), "{took:?}");
    }
}
