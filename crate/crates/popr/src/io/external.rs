//! Line-protocol client for policies running as subprocesses.
//!
//! The child process speaks newline-delimited JSON over stdin/stdout,
//! strictly request-response. On startup the client sends a handshake
//! `{"protocol":1,"action_space":{...}}` describing the dataset's action
//! space; the child must reply with the same protocol version and an equal
//! action space before any state is sent. Each query is then one
//! `{"state":[...]}` line answered by one `{"action":...}` line.
//!
//! Every chain evaluating an external policy owns its own process instance,
//! so the request-response channel is never interleaved. The process is
//! terminated when the policy is dropped.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::Duration;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::core::{Action, ActionSpace, Policy, PolicyError};

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Handshake {
    protocol: u64,
    action_space: ActionSpace,
}

#[derive(Debug, Serialize)]
struct StateRequest<'a> {
    state: &'a [f64],
}

#[derive(Debug, Deserialize)]
struct ActionResponse {
    action: Action,
}

struct Wire {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl Wire {
    fn send_line(&mut self, line: &str) -> Result<(), IoError> {
        writeln!(self.stdin, "{line}")
            .and_then(|()| self.stdin.flush())
            .map_err(|e| IoError::Protocol { detail: format!("write failed: {e}") })
    }

    fn recv_line(&mut self) -> Result<String, IoError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(IoError::Protocol { detail: format!("read failed: {e}") }),
            Err(mpsc::RecvTimeoutError::Timeout) => {
                Err(IoError::Timeout { timeout_ms: self.timeout.as_millis() as u64 })
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(IoError::Protocol { detail: "policy process closed stdout".into() })
            }
        }
    }
}

impl Drop for Wire {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A [`Policy`] backed by a subprocess speaking the line protocol.
pub struct ExternalPolicy {
    id: String,
    space: ActionSpace,
    wire: Mutex<Wire>,
}

impl std::fmt::Debug for ExternalPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalPolicy")
            .field("id", &self.id)
            .field("space", &self.space)
            .finish_non_exhaustive()
    }
}

/// Spawn `command` and complete the handshake against `expected_space`.
///
/// Fails before any sampling if the process cannot be spawned, does not
/// answer within `timeout`, or declares a different protocol version or
/// action space.
pub fn external_policy_client(
    id: impl Into<String>,
    command: &[String],
    timeout: Duration,
    expected_space: &ActionSpace,
) -> Result<ExternalPolicy, IoError> {
    if command.is_empty() {
        return Err(IoError::Manifest { detail: "external policy command is empty".into() });
    }
    let mut child = Command::new(&command[0])
        .args(&command[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|source| IoError::Spawn { command: command.to_vec(), source })?;

    let stdin = child.stdin.take().expect("stdin piped");
    let stdout = child.stdout.take().expect("stdout piped");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(stdout);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(line.trim_end().to_string())).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });

    let mut wire = Wire { child, stdin, lines: rx, timeout };
    let hello = Handshake { protocol: PROTOCOL_VERSION, action_space: *expected_space };
    wire.send_line(&serde_json::to_string(&hello).expect("handshake serializes"))?;
    let reply = wire.recv_line()?;
    let reply: Handshake = serde_json::from_str(&reply)
        .map_err(|e| IoError::Handshake { detail: format!("unparseable reply: {e}") })?;
    if reply.protocol != PROTOCOL_VERSION {
        return Err(IoError::Handshake {
            detail: format!("protocol {} not supported (expected {PROTOCOL_VERSION})", reply.protocol),
        });
    }
    if reply.action_space != *expected_space {
        return Err(IoError::Handshake {
            detail: format!(
                "policy action space {:?} does not match dataset {:?}",
                reply.action_space, expected_space
            ),
        });
    }

    Ok(ExternalPolicy { id: id.into(), space: *expected_space, wire: Mutex::new(wire) })
}

impl Policy for ExternalPolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&self, state: &[f64], _rng: &mut dyn RngCore) -> Result<Action, PolicyError> {
        let mut wire = self.wire.lock().expect("wire lock");
        let mut query = || -> Result<Action, IoError> {
            let request = serde_json::to_string(&StateRequest { state }).expect("state serializes");
            wire.send_line(&request)?;
            let line = wire.recv_line()?;
            let response: ActionResponse = serde_json::from_str(&line)
                .map_err(|e| IoError::Protocol { detail: format!("bad action line: {e}") })?;
            Ok(response.action)
        };
        let action = query().map_err(|e| PolicyError::External(Box::new(e)))?;
        self.space
            .validate_action(&action)
            .map_err(|e| PolicyError::External(Box::new(e)))?;
        Ok(action)
    }
}
