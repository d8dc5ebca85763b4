use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::wire::{encode, Request, Response};
use super::{OracleBackend, OracleHandle, OracleKind, ProbVector};
use crate::error::{Error, Result};

pub const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);

/// Where an external oracle lives: `cmd:<program> [args...]` or
/// `tcp:<host>:<port>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Endpoint {
    Command { program: String, args: Vec<String> },
    Tcp(String),
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(cmd) = s.strip_prefix("cmd:") {
            let mut words = cmd.split_whitespace().map(str::to_owned);
            let program = words
                .next()
                .ok_or_else(|| Error::InvalidInput("empty oracle command".into()))?;
            Ok(Endpoint::Command {
                program,
                args: words.collect(),
            })
        } else if let Some(addr) = s.strip_prefix("tcp:") {
            if addr.rsplit_once(':').is_none() {
                return Err(Error::InvalidInput(format!("tcp endpoint needs host:port, got {addr}")));
            }
            Ok(Endpoint::Tcp(addr.to_owned()))
        } else {
            Err(Error::InvalidInput(format!(
                "endpoint must start with cmd: or tcp:, got {s:?}"
            )))
        }
    }
}

impl TryFrom<String> for Endpoint {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Endpoint> for String {
    fn from(e: Endpoint) -> String {
        e.to_string()
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Command { program, args } => {
                write!(f, "cmd:{program}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
            Endpoint::Tcp(addr) => write!(f, "tcp:{addr}"),
        }
    }
}

fn unavailable(message: impl Into<String>, source: Option<std::io::Error>) -> Error {
    Error::OracleUnavailable {
        message: message.into(),
        source,
    }
}

/// Client side of the wire protocol.
pub struct ExternalOracle {
    writer: Option<Box<dyn Write + Send>>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    next_id: u64,
    latent_dim: usize,
    num_classes: usize,
}

fn spawn_reader<R: Read + Send + 'static>(source: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(source).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl ExternalOracle {
    pub fn connect(endpoint: &Endpoint, handshake_timeout: Duration) -> Result<Self> {
        let (writer, lines, child): (Box<dyn Write + Send>, _, _) = match endpoint {
            Endpoint::Command { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| unavailable(format!("cannot launch {program}"), Some(e)))?;
                let stdin = child.stdin.take().expect("stdin piped");
                let stdout = child.stdout.take().expect("stdout piped");
                (Box::new(stdin), spawn_reader(stdout), Some(child))
            }
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| unavailable(format!("cannot connect to {addr}"), Some(e)))?;
                let read_half = stream
                    .try_clone()
                    .map_err(|e| unavailable("cannot clone tcp stream", Some(e)))?;
                (Box::new(stream), spawn_reader(read_half), None)
            }
        };
        let mut oracle = Self {
            writer: Some(writer),
            lines,
            child,
            next_id: 0,
            latent_dim: 0,
            num_classes: 0,
        };
        let response = oracle.round_trip(&Request::meta(0), Some(handshake_timeout))?;
        let (Some(latent_dim), Some(num_classes)) = (response.0.latent_dim, response.0.num_classes)
        else {
            return Err(Error::Protocol {
                message: "meta response lacks latent_dim or num_classes".into(),
                line: response.1,
            });
        };
        oracle.latent_dim = latent_dim;
        oracle.num_classes = num_classes;
        Ok(oracle)
    }

    fn send(&mut self, request: &Request) -> Result<()> {
        let writer = self.writer.as_mut().expect("writer present until drop");
        let mut line = encode(request);
        line.push('\n');
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.flush())
            .map_err(|e| unavailable("cannot write request", Some(e)))
    }

    fn receive(&mut self, timeout: Option<Duration>) -> Result<String> {
        let received = match timeout {
            Some(t) => self.lines.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => unavailable(format!("no response within {t:?}"), None),
                RecvTimeoutError::Disconnected => unavailable("oracle closed its output", None),
            })?,
            None => self
                .lines
                .recv()
                .map_err(|_| unavailable("oracle closed its output", None))?,
        };
        received.map_err(|e| unavailable("cannot read response", Some(e)))
    }

    /// Sends `request` and returns the parsed response with its raw line.
    fn round_trip(&mut self, request: &Request, timeout: Option<Duration>) -> Result<(Response, String)> {
        self.send(request)?;
        self.next_id = request.id + 1;
        let line = self.receive(timeout)?;
        let response: Response = serde_json::from_str(&line).map_err(|e| Error::Protocol {
            message: format!("unparseable response: {e}"),
            line: line.clone(),
        })?;
        if response.id != request.id {
            return Err(Error::Protocol {
                message: format!("expected response id {}, got {}", request.id, response.id),
                line,
            });
        }
        if let Some(message) = response.error {
            return Err(Error::OracleRemote {
                id: request.id,
                message,
            });
        }
        Ok((response, line))
    }
}

impl OracleBackend for ExternalOracle {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn evaluate(&mut self, codes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let request = Request::query(self.next_id, codes.to_vec());
        let (response, line) = self.round_trip(&request, None)?;
        let protocol = |message: String| Error::Protocol {
            message,
            line: line.clone(),
        };
        let probs = response
            .probs
            .ok_or_else(|| protocol("query response lacks probs".into()))?;
        if probs.len() != codes.len() {
            return Err(protocol(format!(
                "{} probability rows for {} codes",
                probs.len(),
                codes.len()
            )));
        }
        for row in &probs {
            if row.len() != self.num_classes {
                return Err(protocol(format!(
                    "row has {} classes, expected {}",
                    row.len(),
                    self.num_classes
                )));
            }
            ProbVector::new(row.clone()).map_err(|e| protocol(e.to_string()))?;
        }
        Ok(probs)
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        // Closing the writer signals end of input to a well-behaved server.
        self.writer.take();
        if let Some(mut child) = self.child.take() {
            for _ in 0..50 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Launches or dials an external oracle and performs the meta handshake.
pub fn connect_external(endpoint: &Endpoint) -> Result<OracleHandle> {
    let oracle = ExternalOracle::connect(endpoint, HANDSHAKE_TIMEOUT)?;
    OracleHandle::new(OracleKind::External, Box::new(oracle))
}
