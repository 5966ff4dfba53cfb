//! Blocking client with per-call timeouts.
//!
//! One request is in flight per connection. A timed-out or broken connection
//! is discarded and re-opened lazily on the next call, so a request is never
//! sent twice.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BridgeRequest, BridgeResponse, Op, PROTOCOL_VERSION};
use crate::error::{Error, Result};
use crate::sample::{Modality, PixelMask, Sample};

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "lowercase")]
pub enum Transport {
    /// Spawn `program args…` and talk over its stdin/stdout.
    Process {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
    /// Connect to `address` (`host:port`).
    Tcp { address: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeEndpoint {
    #[serde(flatten)]
    pub transport: Transport,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl BridgeEndpoint {
    pub fn process(program: impl Into<String>, args: Vec<String>) -> Self {
        BridgeEndpoint {
            transport: Transport::Process {
                program: program.into(),
                args,
            },
            timeout_ms: default_timeout_ms(),
        }
    }

    pub fn tcp(address: impl Into<String>) -> Self {
        BridgeEndpoint {
            transport: Transport::Tcp {
                address: address.into(),
            },
            timeout_ms: default_timeout_ms(),
        }
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    fn describe(&self) -> String {
        match &self.transport {
            Transport::Process { program, .. } => format!("process `{program}`"),
            Transport::Tcp { address } => format!("tcp {address}"),
        }
    }
}

/// An open connection with a background line reader.
struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    child: Option<Child>,
    socket: Option<TcpStream>,
    lines_read: u64,
}

impl Connection {
    fn open(endpoint: &BridgeEndpoint) -> Result<Self> {
        let dead = |e: io::Error| Error::EndpointDead(format!("{}: {e}", endpoint.describe()));
        let mut socket = None;
        let (reader, writer, child): (Box<dyn Read + Send>, Box<dyn Write + Send>, Option<Child>) =
            match &endpoint.transport {
                Transport::Process { program, args } => {
                    let mut child = Command::new(program)
                        .args(args)
                        .stdin(Stdio::piped())
                        .stdout(Stdio::piped())
                        .stderr(Stdio::inherit())
                        .spawn()
                        .map_err(dead)?;
                    let stdin = child.stdin.take().expect("stdin is piped");
                    let stdout = child.stdout.take().expect("stdout is piped");
                    (Box::new(stdout), Box::new(stdin), Some(child))
                }
                Transport::Tcp { address } => {
                    let stream = TcpStream::connect(address).map_err(dead)?;
                    stream.set_nodelay(true).ok();
                    let read_half = stream.try_clone().map_err(dead)?;
                    socket = Some(stream.try_clone().map_err(dead)?);
                    (Box::new(read_half), Box::new(stream), None)
                }
            };
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
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
        Ok(Connection {
            writer,
            lines: rx,
            child,
            socket,
            lines_read: 0,
        })
    }

    fn send_line(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }

    /// Next non-empty line, or the reason none arrived.
    fn recv_line(&mut self, deadline: Instant, timeout_ms: u64) -> Result<String> {
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(remaining) {
                Ok(Ok(line)) => {
                    self.lines_read += 1;
                    let trimmed = line.trim_end_matches(['\n', '\r']);
                    if trimmed.trim().is_empty() {
                        continue;
                    }
                    return Ok(trimmed.to_owned());
                }
                Ok(Err(e)) => return Err(Error::EndpointDead(e.to_string())),
                Err(RecvTimeoutError::Timeout) => return Err(Error::Timeout(timeout_ms)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::EndpointDead("connection closed".into()))
                }
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(socket) = &self.socket {
            let _ = socket.shutdown(std::net::Shutdown::Both);
        }
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

pub struct BridgeClient {
    endpoint: BridgeEndpoint,
    conn: Mutex<Option<Connection>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient")
            .field("endpoint", &self.endpoint)
            .finish()
    }
}

impl BridgeClient {
    /// Creates a client; the connection opens on first use.
    pub fn new(endpoint: BridgeEndpoint) -> Self {
        BridgeClient {
            endpoint,
            conn: Mutex::new(None),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn endpoint(&self) -> &BridgeEndpoint {
        &self.endpoint
    }

    /// Sends `request` with a fresh id and waits for the matching response.
    ///
    /// Responses with `ok: false` become [`Error::Bridge`]; the connection
    /// stays usable. Timeouts, malformed lines and id mismatches drop the
    /// connection.
    pub fn call(&self, mut request: BridgeRequest) -> Result<BridgeResponse> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(Connection::open(&self.endpoint)?);
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        request.id = id;
        request.v = PROTOCOL_VERSION;
        let line = serde_json::to_string(&request)?;
        let result = exchange(guard.as_mut().expect("connection opened"), &line, id, self.endpoint.timeout_ms);
        match result {
            Ok(resp) if resp.ok => Ok(resp),
            Ok(resp) => Err(Error::Bridge(
                resp.error.unwrap_or_else(|| "back-end reported failure".into()),
            )),
            Err(e) => {
                *guard = None;
                Err(e)
            }
        }
    }

    pub fn ping(&self, delay_ms: Option<u64>) -> Result<()> {
        let mut req = BridgeRequest::new(Op::Ping);
        req.delay_ms = delay_ms;
        self.call(req).map(|_| ())
    }

    pub fn regenerate(&self, sample: &Sample, seed: u64) -> Result<Sample> {
        let mut req = BridgeRequest::new(Op::Regenerate);
        req.sample = Some(sample.clone());
        req.seed = Some(seed);
        expect_sample(self.call(req)?)
    }

    pub fn regenerate_masked(&self, sample: &Sample, mask: &PixelMask, seed: u64) -> Result<Sample> {
        let mut req = BridgeRequest::new(Op::RegenerateMasked);
        req.sample = Some(sample.clone());
        req.mask = Some(mask.clone());
        req.seed = Some(seed);
        expect_sample(self.call(req)?)
    }

    pub fn generate_initial(&self, prompt: &str, modality: Modality, seed: u64) -> Result<Sample> {
        let mut req = BridgeRequest::new(Op::GenerateInitial);
        req.prompt = Some(prompt.to_owned());
        req.modality = Some(modality);
        req.seed = Some(seed);
        expect_sample(self.call(req)?)
    }

    pub fn distance(&self, metric: &str, candidate: &Sample, reference: &Sample) -> Result<f64> {
        let mut req = BridgeRequest::new(Op::Distance);
        req.metric = Some(metric.to_owned());
        req.sample = Some(candidate.clone());
        req.reference = Some(reference.clone());
        let resp = self.call(req)?;
        resp.distance
            .ok_or_else(|| Error::Bridge("distance response without `distance`".into()))
    }

    /// Opens a separate connection for sending hand-written lines.
    pub fn raw_session(&self) -> Result<RawSession> {
        Ok(RawSession {
            conn: Connection::open(&self.endpoint)?,
            timeout_ms: self.endpoint.timeout_ms,
        })
    }
}

fn exchange(conn: &mut Connection, line: &str, id: u64, timeout_ms: u64) -> Result<BridgeResponse> {
    let deadline = Instant::now() + Duration::from_millis(timeout_ms);
    conn.send_line(line)
        .map_err(|e| Error::EndpointDead(e.to_string()))?;
    let reply = conn.recv_line(deadline, timeout_ms)?;
    let line_no = conn.lines_read;
    let resp: BridgeResponse =
        serde_json::from_str(&reply).map_err(|e| Error::BridgeProtocol {
            line: line_no,
            message: format!("malformed response: {e}"),
        })?;
    if resp.id != Some(id) {
        return Err(Error::BridgeProtocol {
            line: line_no,
            message: format!("expected id {id}, got {:?}", resp.id),
        });
    }
    Ok(resp)
}

fn expect_sample(resp: BridgeResponse) -> Result<Sample> {
    resp.sample
        .ok_or_else(|| Error::Bridge("response without `sample`".into()))
}

/// A connection that sends lines verbatim, for protocol conformance checks.
pub struct RawSession {
    conn: Connection,
    timeout_ms: u64,
}

impl RawSession {
    pub fn send_line(&mut self, line: &str) -> Result<()> {
        self.conn
            .send_line(line)
            .map_err(|e| Error::EndpointDead(e.to_string()))
    }

    pub fn read_line(&mut self) -> Result<String> {
        let deadline = Instant::now() + Duration::from_millis(self.timeout_ms);
        self.conn.recv_line(deadline, self.timeout_ms)
    }

    pub fn round_trip(&mut self, line: &str) -> Result<BridgeResponse> {
        self.send_line(line)?;
        let reply = self.read_line()?;
        serde_json::from_str(&reply).map_err(|e| Error::BridgeProtocol {
            line: self.conn.lines_read,
            message: format!("malformed response: {e}"),
        })
    }
}
