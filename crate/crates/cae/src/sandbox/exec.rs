use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use cae_core::model::CodeSolution;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::protocol::{Message, Reply, UnitSource};
use super::ExecError;

fn default_wall_time() -> f64 {
    10.0
}

fn default_memory() -> u64 {
    2 << 30
}

fn default_stdout() -> usize {
    1 << 20
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLimits {
    /// Seconds for the whole load/call/shutdown session.
    #[serde(default = "default_wall_time")]
    pub wall_time_limit: f64,
    /// Address-space cap in bytes.
    #[serde(default = "default_memory")]
    pub memory_limit: u64,
    #[serde(default = "default_stdout")]
    pub max_stdout: usize,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        ExecutionLimits {
            wall_time_limit: default_wall_time(),
            memory_limit: default_memory(),
            max_stdout: default_stdout(),
        }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wall_time_limit > 0.0 && self.wall_time_limit.is_finite()) || self.memory_limit == 0 || self.max_stdout == 0 {
            return Err("execution limits must all be positive".into());
        }
        Ok(())
    }

    pub fn memory_enforced() -> bool {
        cfg!(unix)
    }
}

/// How to launch the shim executable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimCommand {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
}

impl ShimCommand {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        ShimCommand {
            program: program.into(),
            args: Vec::new(),
        }
    }

    /// Bare names are searched on `PATH`, then next to the running executable.
    pub fn resolve(&self) -> Option<PathBuf> {
        if self.program.components().count() > 1 {
            return self.program.exists().then(|| self.program.clone());
        }
        let search = std::env::var_os("PATH")
            .map(|p| std::env::split_paths(&p).collect::<Vec<_>>())
            .unwrap_or_default();
        let beside = std::env::current_exe()
            .ok()
            .and_then(|p| p.parent().map(Path::to_path_buf));
        search
            .into_iter()
            .chain(beside)
            .map(|dir| dir.join(&self.program))
            .find(|p| p.is_file())
    }
}

enum Line {
    Text(String),
    Overflow,
    Eof,
}

fn spawn_reader(stdout: impl Read + Send + 'static, max: usize) -> Receiver<Line> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(stdout.take(max as u64 + 1));
        let mut total = 0usize;
        loop {
            let mut buf = Vec::new();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) | Err(_) => {
                    let _ = tx.send(Line::Eof);
                    return;
                }
                Ok(n) => {
                    total += n;
                    if total > max {
                        let _ = tx.send(Line::Overflow);
                        return;
                    }
                    let text = String::from_utf8_lossy(&buf).trim_end_matches(['\n', '\r']).to_string();
                    if tx.send(Line::Text(text)).is_err() {
                        return;
                    }
                }
            }
        }
    });
    rx
}

const STDERR_KEEP: usize = 16 << 10;

fn spawn_stderr(stderr: impl Read + Send + 'static) -> Arc<Mutex<Vec<u8>>> {
    let tail = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&tail);
    thread::spawn(move || {
        let mut stderr = stderr;
        let mut chunk = [0u8; 4096];
        while let Ok(n) = stderr.read(&mut chunk) {
            if n == 0 {
                break;
            }
            let mut buf = sink.lock().expect("stderr lock");
            buf.extend_from_slice(&chunk[..n]);
            if buf.len() > STDERR_KEEP {
                let cut = buf.len() - STDERR_KEEP;
                buf.drain(..cut);
            }
        }
    });
    tail
}

/// Owns the child process; killing the whole process group and reaping it
/// on every exit path.
struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<Line>,
    stderr: Arc<Mutex<Vec<u8>>>,
    deadline: Instant,
    limit: f64,
    reaped: bool,
}

impl Session {
    fn send(&mut self, message: &Message) -> Result<(), ExecError> {
        let mut line = serde_json::to_string(message).expect("messages serialize");
        line.push('\n');
        let stdin = self.stdin.as_mut().ok_or_else(|| ExecError::ProtocolError("stdin closed".into()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| ExecError::ProtocolError(format!("shim closed its input: {e}{}", self.stderr_note())))
    }

    fn receive(&mut self) -> Result<Reply, ExecError> {
        let left = self.deadline.saturating_duration_since(Instant::now());
        match self.lines.recv_timeout(left) {
            Ok(Line::Text(text)) => serde_json::from_str(&text)
                .map_err(|e| ExecError::ProtocolError(format!("malformed reply `{}`: {e}", truncate(&text, 200)))),
            Ok(Line::Overflow) => Err(ExecError::OutputOverflow(0)),
            Ok(Line::Eof) | Err(RecvTimeoutError::Disconnected) => Err(ExecError::ProtocolError(format!(
                "shim exited without replying{}",
                self.stderr_note()
            ))),
            Err(RecvTimeoutError::Timeout) => Err(ExecError::Timeout(self.limit)),
        }
    }

    fn stderr_note(&self) -> String {
        let tail = self.stderr.lock().expect("stderr lock");
        if tail.is_empty() {
            String::new()
        } else {
            format!("; stderr: {}", String::from_utf8_lossy(&tail).trim())
        }
    }

    fn shutdown(&mut self) {
        if self.send(&Message::Shutdown).is_ok() {
            self.stdin.take();
            let grace = self
                .deadline
                .saturating_duration_since(Instant::now())
                .min(Duration::from_secs(1));
            let until = Instant::now() + grace;
            while Instant::now() < until {
                if let Ok(Some(_)) = self.child.try_wait() {
                    self.reaped = true;
                    break;
                }
                thread::sleep(Duration::from_millis(2));
            }
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.stdin.take();
        kill_group(self.child.id());
        if !self.reaped {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
        wait_group_gone(self.child.id(), Duration::from_secs(1));
    }
}

#[cfg(unix)]
fn kill_group(pid: u32) {
    // SAFETY: signalling a process group we created; failure (already gone)
    // is harmless.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

#[cfg(not(unix))]
fn kill_group(_pid: u32) {}

/// True while any live (non-zombie) process of the group led by `pid` exists.
/// Orphaned members are reparented and may linger as zombies when the init
/// process does not reap; those hold no resources and are ignored.
#[cfg(target_os = "linux")]
pub fn group_alive(pid: u32) -> bool {
    let Ok(entries) = std::fs::read_dir("/proc") else {
        // SAFETY: signal 0 only probes for existence.
        return unsafe { libc::kill(-(pid as libc::pid_t), 0) == 0 };
    };
    entries.filter_map(Result::ok).any(|e| {
        let Ok(stat) = std::fs::read_to_string(e.path().join("stat")) else {
            return false;
        };
        // Fields after the parenthesised command: state, ppid, pgrp, ...
        let Some(rest) = stat.rfind(')').map(|i| &stat[i + 1..]) else {
            return false;
        };
        let fields: Vec<&str> = rest.split_whitespace().collect();
        fields.len() > 2 && fields[0] != "Z" && fields[2] == pid.to_string()
    })
}

#[cfg(all(unix, not(target_os = "linux")))]
pub fn group_alive(pid: u32) -> bool {
    // SAFETY: signal 0 only probes for existence.
    unsafe { libc::kill(-(pid as libc::pid_t), 0) == 0 }
}

/// Polls until the group is gone or `timeout` passes.
pub fn wait_group_gone(pid: u32, timeout: Duration) -> bool {
    let until = Instant::now() + timeout;
    loop {
        if !group_alive(pid) {
            return true;
        }
        if Instant::now() >= until {
            return false;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}

#[cfg(not(unix))]
pub fn group_alive(_pid: u32) -> bool {
    false
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn spawn(shim: &ShimCommand, limits: &ExecutionLimits) -> Result<Child, ExecError> {
    let program = shim
        .resolve()
        .ok_or_else(|| ExecError::Spawn(format!("shim `{}` not found", shim.program.display())))?;
    let mut cmd = Command::new(program);
    cmd.args(&shim.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
        let bytes = limits.memory_limit as libc::rlim_t;
        // SAFETY: setrlimit is async-signal-safe and touches no parent state.
        unsafe {
            cmd.pre_exec(move || {
                let lim = libc::rlimit {
                    rlim_cur: bytes,
                    rlim_max: bytes,
                };
                libc::setrlimit(libc::RLIMIT_AS, &lim);
                Ok(())
            });
        }
    }
    #[cfg(not(unix))]
    let _ = limits;
    cmd.spawn().map_err(|e| ExecError::Spawn(e.to_string()))
}

/// Runs one shim session: load the solution, optionally call it with
/// `request`, shut down. `on_spawn` sees the child pid before any IO.
pub fn run_session(
    solution: &CodeSolution,
    request: Option<&Value>,
    limits: &ExecutionLimits,
    shim: &ShimCommand,
    on_spawn: &mut dyn FnMut(u32),
) -> Result<Option<Value>, ExecError> {
    let order = solution
        .dependency_order()
        .map_err(|e| ExecError::CompileFailure(e.to_string()))?;
    let units = order
        .into_iter()
        .map(|name| UnitSource {
            source: solution.units[&name].source.clone(),
            name,
        })
        .collect();
    let started = Instant::now();
    let mut child = spawn(shim, limits)?;
    on_spawn(child.id());
    let stdin = child.stdin.take();
    let lines = spawn_reader(child.stdout.take().expect("piped stdout"), limits.max_stdout);
    let stderr = spawn_stderr(child.stderr.take().expect("piped stderr"));
    let mut session = Session {
        child,
        stdin,
        lines,
        stderr,
        deadline: started + Duration::from_secs_f64(limits.wall_time_limit),
        limit: limits.wall_time_limit,
        reaped: false,
    };
    session.send(&Message::Load {
        units,
        entrypoint: solution.entrypoint.clone(),
    })?;
    let reply = session.receive().map_err(|e| overflow_size(e, limits))?;
    if !reply.ok {
        return Err(ExecError::CompileFailure(reply.error.unwrap_or_default()));
    }
    let mut out = None;
    if let Some(request) = request {
        session.send(&Message::Call { request: request.clone() })?;
        let reply = session.receive().map_err(|e| overflow_size(e, limits))?;
        if !reply.ok {
            return Err(ExecError::RuntimeFailure {
                error: reply.error.unwrap_or_default(),
                traceback: reply.traceback.unwrap_or_default(),
            });
        }
        out = Some(
            reply
                .response
                .ok_or_else(|| ExecError::ProtocolError("successful call without response".into()))?,
        );
    }
    session.shutdown();
    Ok(out)
}

fn overflow_size(e: ExecError, limits: &ExecutionLimits) -> ExecError {
    match e {
        ExecError::OutputOverflow(_) => ExecError::OutputOverflow(limits.max_stdout),
        other => other,
    }
}
