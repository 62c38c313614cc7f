//! Client for delegating scoring, domain classification and generation to an
//! external model server.
//!
//! Messages are single-line JSON objects separated by `\n`, over TCP or the
//! stdin/stdout pair of a child process:
//!
//! ```text
//! -> {"task":"score","id":"1","payload":{"text":"is there wifi?"}}
//! <- {"id":"1","result":0.7}
//! -> {"task":"classify_domain","id":"2","payload":{"context":"User: ..."}}
//! <- {"id":"2","result":[0.1,0.2,0.7]}
//! -> {"task":"generate","id":"3","payload":{"context":"User: ...","answer":"..."}}
//! <- {"id":"3","error":{"code":"overloaded","message":"try later"}}
//! ```
//!
//! Detection and ranking both use the `score` task. A ranking request's text
//! is a flattened [`RankInput`], so it always contains [`SEPARATOR`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::detection::TextScorer;
use crate::dialogue::Dialogue;
use crate::domain::DomainScorer;
use crate::error::{Error, Result};
use crate::linear::{softmax, LinearModel};
use crate::pipeline::{template_response, ResponseGenerator, DEFAULT_FOLLOW_UP};
use crate::ranker::{LexicalRanker, RankInput, RelevanceScorer, SEPARATOR};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Score,
    ClassifyDomain,
    Generate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayRequest {
    pub task: Task,
    pub id: String,
    pub payload: Value,
}

impl GatewayRequest {
    pub fn score(id: impl Into<String>, text: &str) -> Self {
        GatewayRequest {
            task: Task::Score,
            id: id.into(),
            payload: json!({ "text": text }),
        }
    }

    pub fn classify_domain(id: impl Into<String>, context: &str) -> Self {
        GatewayRequest {
            task: Task::ClassifyDomain,
            id: id.into(),
            payload: json!({ "context": context }),
        }
    }

    pub fn generate(id: impl Into<String>, context: &str, answer: &str) -> Self {
        GatewayRequest {
            task: Task::Generate,
            id: id.into(),
            payload: json!({ "context": context, "answer": answer }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteError {
    pub code: Value,
    pub message: String,
}

impl RemoteError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        RemoteError {
            code: Value::String(code.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for RemoteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.code {
            Value::String(s) => write!(f, "{s}: {}", self.message),
            other => write!(f, "{other}: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RemoteError>,
}

impl GatewayResponse {
    pub fn ok(id: impl Into<String>, result: Value) -> Self {
        GatewayResponse {
            id: id.into(),
            result: Some(result),
            error: None,
        }
    }

    pub fn err(id: impl Into<String>, error: RemoteError) -> Self {
        GatewayResponse {
            id: id.into(),
            result: None,
            error: Some(error),
        }
    }

    /// The result value, or the server's error as `ScorerUnavailable`.
    pub fn into_result(self) -> Result<Value> {
        match (self.result, self.error) {
            (Some(v), None) => Ok(v),
            (None, Some(e)) => Err(Error::ScorerUnavailable(format!("server error {e}"))),
            _ => Err(Error::ScorerUnavailable(
                "malformed response: needs exactly one of result and error".into(),
            )),
        }
    }
}

type Completion = (String, Result<GatewayResponse>);

#[derive(Debug, Clone)]
enum Closed {
    Transport(String),
    Protocol(String),
}

impl Closed {
    fn to_error(&self) -> Error {
        match self {
            Closed::Transport(m) => Error::ScorerUnavailable(format!("transport: {m}")),
            Closed::Protocol(m) => Error::Protocol(m.clone()),
        }
    }
}

#[derive(Default)]
struct State {
    pending: HashMap<String, Sender<Completion>>,
    /// Ids whose caller gave up; a late reply is dropped exactly once.
    expired: HashSet<String>,
    closed: Option<Closed>,
}

#[derive(Default)]
struct Shared {
    state: Mutex<State>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn close(&self, why: Closed) {
        let mut st = self.lock();
        if st.closed.is_none() {
            st.closed = Some(why.clone());
        }
        for (id, tx) in st.pending.drain() {
            let _ = tx.send((id, Err(why.to_error())));
        }
    }

    fn dispatch(&self, line: &str) {
        let parsed: std::result::Result<GatewayResponse, _> = serde_json::from_str(line);
        let resp = match parsed {
            Ok(r) if r.result.is_some() != r.error.is_some() => r,
            other => {
                let id = match &other {
                    Ok(r) => Some(r.id.clone()),
                    Err(_) => serde_json::from_str::<Value>(line)
                        .ok()
                        .and_then(|v| v.get("id").and_then(Value::as_str).map(str::to_string)),
                };
                let cause = match other {
                    Ok(_) => "needs exactly one of result and error".to_string(),
                    Err(e) => e.to_string(),
                };
                let mut st = self.lock();
                if let Some(tx) = id.as_ref().and_then(|id| st.pending.remove(id)) {
                    let id = id.unwrap();
                    let _ = tx.send((id, Err(Error::ScorerUnavailable(format!("malformed response: {cause}")))));
                    return;
                }
                drop(st);
                self.close(Closed::Transport(format!("malformed response: {cause}")));
                return;
            }
        };
        let mut st = self.lock();
        if let Some(tx) = st.pending.remove(&resp.id) {
            let id = resp.id.clone();
            let _ = tx.send((id, Ok(resp)));
        } else if !st.expired.remove(&resp.id) {
            drop(st);
            self.close(Closed::Protocol(format!("response for unknown id {:?}", resp.id)));
        }
    }
}

/// One multiplexed gateway connection. Requests may be issued from several
/// threads; replies are matched to requests by id.
pub struct Connection {
    shared: Arc<Shared>,
    writer: Mutex<Box<dyn Write + Send>>,
    next_id: AtomicU64,
    child: Option<Child>,
    socket: Option<TcpStream>,
}

impl fmt::Debug for Connection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Connection")
            .field("child", &self.child.as_ref().map(Child::id))
            .field("socket", &self.socket.as_ref().and_then(|s| s.peer_addr().ok()))
            .finish()
    }
}

impl Connection {
    /// Wrap an arbitrary byte-stream pair; a background thread reads replies.
    pub fn from_streams<R, W>(reader: R, writer: W) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let shared = Arc::new(Shared::default());
        let reader_state = shared.clone();
        thread::spawn(move || {
            let mut lines = BufReader::new(reader);
            let mut line = String::new();
            loop {
                line.clear();
                match lines.read_line(&mut line) {
                    Ok(0) => {
                        reader_state.close(Closed::Transport("connection closed".into()));
                        break;
                    }
                    Ok(_) if line.trim().is_empty() => {}
                    Ok(_) => reader_state.dispatch(line.trim_end()),
                    Err(e) => {
                        reader_state.close(Closed::Transport(e.to_string()));
                        break;
                    }
                }
            }
        });
        Connection {
            shared,
            writer: Mutex::new(Box::new(writer)),
            next_id: AtomicU64::new(0),
            child: None,
            socket: None,
        }
    }

    pub fn tcp(addr: &str) -> Result<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::ScorerUnavailable(format!("transport: connect {addr}: {e}")))?;
        stream.set_nodelay(true).ok();
        let read_half = stream.try_clone()?;
        let write_half = stream.try_clone()?;
        let mut conn = Connection::from_streams(read_half, write_half);
        conn.socket = Some(stream);
        Ok(conn)
    }

    pub fn spawn(argv: &[String]) -> Result<Self> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| Error::Config("empty gateway command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::ScorerUnavailable(format!("transport: spawn {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut conn = Connection::from_streams(stdout, stdin);
        conn.child = Some(child);
        Ok(conn)
    }

    pub fn connect(endpoint: &Endpoint) -> Result<Self> {
        match endpoint {
            Endpoint::Tcp(addr) => Connection::tcp(addr),
            Endpoint::Command(argv) => Connection::spawn(argv),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.shared.lock().closed.is_some()
    }

    /// Fresh id, unique within this connection: "1", "2", ...
    pub fn next_id(&self) -> String {
        (self.next_id.fetch_add(1, Ordering::Relaxed) + 1).to_string()
    }

    fn send(&self, req: &GatewayRequest, tx: Sender<Completion>) -> Result<()> {
        {
            let mut st = self.shared.lock();
            if let Some(c) = &st.closed {
                return Err(c.to_error());
            }
            if st.pending.contains_key(&req.id) || st.expired.contains(&req.id) {
                return Err(Error::Protocol(format!("request id {:?} already in use", req.id)));
            }
            st.pending.insert(req.id.clone(), tx);
        }
        let mut line = serde_json::to_string(req).map_err(|e| Error::Protocol(e.to_string()))?;
        line.push('\n');
        let mut w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = w.write_all(line.as_bytes()).and_then(|_| w.flush()) {
            drop(w);
            self.shared.lock().pending.remove(&req.id);
            return Err(Error::ScorerUnavailable(format!("transport: {e}")));
        }
        Ok(())
    }

    /// Give up on `id`. Returns false when its reply has already been
    /// delivered to the caller's channel.
    fn expire(&self, id: &str) -> bool {
        let mut st = self.shared.lock();
        if st.pending.remove(id).is_some() {
            st.expired.insert(id.to_string());
            true
        } else {
            false
        }
    }

    pub fn request(&self, req: &GatewayRequest, timeout: Duration) -> Result<GatewayResponse> {
        let (tx, rx) = mpsc::channel();
        self.send(req, tx)?;
        match rx.recv_timeout(timeout) {
            Ok((_, r)) => r,
            Err(RecvTimeoutError::Timeout) => {
                if self.expire(&req.id) {
                    Err(Error::ScorerUnavailable(format!(
                        "request {} timed out after {timeout:?}",
                        req.id
                    )))
                } else {
                    rx.recv()
                        .map_err(|_| Error::ScorerUnavailable("transport: connection closed".into()))?
                        .1
                }
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::ScorerUnavailable("transport: connection closed".into()))
            }
        }
    }

    /// Issue one request with a fresh id and return its result value.
    pub fn call(&self, task: Task, payload: Value, timeout: Duration) -> Result<Value> {
        let req = GatewayRequest {
            task,
            id: self.next_id(),
            payload,
        };
        self.request(&req, timeout)?.into_result()
    }

    /// Keep up to `max_in_flight` requests outstanding and return responses
    /// in request order. Each slot fails independently.
    pub fn batch_request(
        &self,
        reqs: &[GatewayRequest],
        max_in_flight: usize,
        timeout: Duration,
    ) -> Result<Vec<Result<GatewayResponse>>> {
        if max_in_flight == 0 {
            return Err(Error::Precondition("max_in_flight must be at least 1".into()));
        }
        let (tx, rx) = mpsc::channel();
        let mut slots: Vec<Option<Result<GatewayResponse>>> = (0..reqs.len()).map(|_| None).collect();
        let mut in_flight: HashMap<String, (usize, Instant)> = HashMap::new();
        let mut next = 0;
        let mut done = 0;
        while done < reqs.len() {
            while next < reqs.len() && in_flight.len() < max_in_flight {
                match self.send(&reqs[next], tx.clone()) {
                    Ok(()) => {
                        in_flight.insert(reqs[next].id.clone(), (next, Instant::now() + timeout));
                    }
                    Err(e) => {
                        slots[next] = Some(Err(e));
                        done += 1;
                    }
                }
                next += 1;
            }
            let Some(deadline) = in_flight.values().map(|(_, d)| *d).min() else {
                continue;
            };
            match rx.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
                Ok((id, r)) => {
                    if let Some((slot, _)) = in_flight.remove(&id) {
                        slots[slot] = Some(r);
                        done += 1;
                    }
                }
                Err(RecvTimeoutError::Timeout) => {
                    let now = Instant::now();
                    let due: Vec<String> = in_flight
                        .iter()
                        .filter(|(_, (_, d))| *d <= now)
                        .map(|(id, _)| id.clone())
                        .collect();
                    for id in due {
                        if self.expire(&id) {
                            let (slot, _) = in_flight.remove(&id).unwrap();
                            slots[slot] = Some(Err(Error::ScorerUnavailable(format!(
                                "request {id} timed out after {timeout:?}"
                            ))));
                            done += 1;
                        }
                    }
                }
                Err(RecvTimeoutError::Disconnected) => unreachable!("batch holds a sender"),
            }
        }
        Ok(slots.into_iter().map(|s| s.expect("every slot is filled")).collect())
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(s) = &self.socket {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        if let Some(child) = &mut self.child {
            // Closing stdin lets a well-behaved server exit on its own.
            *self.writer.get_mut().unwrap_or_else(|p| p.into_inner()) = Box::new(std::io::sink());
            let deadline = Instant::now() + Duration::from_millis(500);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(5));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Where the model server lives: `host:port` / `tcp://host:port`, or a
/// command line (optionally prefixed `stdio:`) to spawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Command(Vec<String>),
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(addr) = s.strip_prefix("tcp://") {
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        if let Some(cmd) = s.strip_prefix("stdio:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(Error::Config("empty gateway command".into()));
            }
            return Ok(Endpoint::Command(argv));
        }
        let looks_like_addr = !s.contains(char::is_whitespace)
            && s.rsplit_once(':')
                .is_some_and(|(host, port)| !host.is_empty() && port.parse::<u16>().is_ok());
        if looks_like_addr {
            return Ok(Endpoint::Tcp(s.to_string()));
        }
        let argv: Vec<String> = s.split_whitespace().map(str::to_string).collect();
        if argv.is_empty() {
            return Err(Error::Config("empty gateway endpoint".into()));
        }
        Ok(Endpoint::Command(argv))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp(a) => write!(f, "tcp://{a}"),
            Endpoint::Command(argv) => write!(f, "stdio:{}", argv.join(" ")),
        }
    }
}

/// Fixed-size set of connections. Each request checks one out for its
/// duration, so a connection serves one worker at a time.
pub struct GatewayPool {
    endpoint: Option<Endpoint>,
    idle: Mutex<Vec<Connection>>,
    available: Condvar,
    timeout: Duration,
    size: usize,
}

impl fmt::Debug for GatewayPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GatewayPool")
            .field("endpoint", &self.endpoint)
            .field("size", &self.size)
            .field("timeout", &self.timeout)
            .finish()
    }
}

pub struct PooledConnection<'a> {
    pool: &'a GatewayPool,
    conn: Option<Connection>,
}

impl std::ops::Deref for PooledConnection<'_> {
    type Target = Connection;

    fn deref(&self) -> &Connection {
        self.conn.as_ref().expect("connection present until drop")
    }
}

impl Drop for PooledConnection<'_> {
    fn drop(&mut self) {
        if let Some(c) = self.conn.take() {
            self.pool.idle.lock().unwrap_or_else(|p| p.into_inner()).push(c);
            self.pool.available.notify_one();
        }
    }
}

impl GatewayPool {
    pub fn connect(endpoint: Endpoint, size: usize, timeout: Duration) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("gateway pool size must be at least 1".into()));
        }
        let conns = (0..size)
            .map(|_| Connection::connect(&endpoint))
            .collect::<Result<Vec<_>>>()?;
        Ok(GatewayPool {
            endpoint: Some(endpoint),
            idle: Mutex::new(conns),
            available: Condvar::new(),
            timeout,
            size,
        })
    }

    /// Pool over already-open connections; closed ones are not replaced.
    pub fn from_connections(conns: Vec<Connection>, timeout: Duration) -> Result<Self> {
        if conns.is_empty() {
            return Err(Error::Config("gateway pool needs at least one connection".into()));
        }
        Ok(GatewayPool {
            endpoint: None,
            size: conns.len(),
            idle: Mutex::new(conns),
            available: Condvar::new(),
            timeout,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Block until a connection is free. A connection found closed is
    /// replaced by a fresh one when the endpoint is known.
    pub fn checkout(&self) -> PooledConnection<'_> {
        let mut idle = self.idle.lock().unwrap_or_else(|p| p.into_inner());
        let mut conn = loop {
            if let Some(c) = idle.pop() {
                break c;
            }
            idle = self.available.wait(idle).unwrap_or_else(|p| p.into_inner());
        };
        drop(idle);
        if conn.is_closed() {
            if let Some(fresh) = self.endpoint.as_ref().and_then(|e| Connection::connect(e).ok()) {
                conn = fresh;
            }
        }
        PooledConnection {
            pool: self,
            conn: Some(conn),
        }
    }

    pub fn call(&self, task: Task, payload: Value) -> Result<Value> {
        self.checkout().call(task, payload, self.timeout)
    }
}

/// Detection scores from the server's `score` task.
#[derive(Debug, Clone)]
pub struct GatewayTextScorer(pub Arc<GatewayPool>);

impl TextScorer for GatewayTextScorer {
    fn score(&self, text: &str) -> Result<f64> {
        as_score(self.0.call(Task::Score, json!({ "text": text }))?)
    }
}

/// Ranking scores from the server's `score` task over flattened inputs.
#[derive(Debug, Clone)]
pub struct GatewayRelevanceScorer(pub Arc<GatewayPool>);

impl RelevanceScorer for GatewayRelevanceScorer {
    fn score(&self, input: &RankInput) -> Result<f64> {
        as_score(self.0.call(Task::Score, json!({ "text": input.flatten() }))?)
    }
}

fn as_score(v: Value) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::ScorerUnavailable(format!("malformed response: score result {v} is not a finite number")))
}

/// Domain distribution from the server's `classify_domain` task. Three
/// non-negative values are rescaled to sum to one; if any is negative they
/// are treated as logits and passed through softmax.
#[derive(Debug, Clone)]
pub struct GatewayDomainScorer(pub Arc<GatewayPool>);

impl DomainScorer for GatewayDomainScorer {
    fn distribution(&self, d: &Dialogue) -> Result<[f64; 3]> {
        let v = self.0.call(Task::ClassifyDomain, json!({ "context": d.render() }))?;
        let raw: Vec<f64> = v
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        if raw.len() != 3 || raw.iter().any(|x| !x.is_finite()) || v.as_array().map_or(0, Vec::len) != 3 {
            return Err(Error::ScorerUnavailable(format!(
                "malformed response: classify_domain result {v} is not three numbers"
            )));
        }
        normalize_distribution(&raw)
    }
}

pub(crate) fn normalize_distribution(raw: &[f64]) -> Result<[f64; 3]> {
    let probs = if raw.iter().any(|x| *x < 0.0) {
        softmax(raw)
    } else {
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::ScorerUnavailable(
                "malformed response: classify_domain result sums to zero".into(),
            ));
        }
        raw.iter().map(|x| x / sum).collect()
    };
    Ok([probs[0], probs[1], probs[2]])
}

/// Responses from the server's `generate` task, returned verbatim.
#[derive(Debug, Clone)]
pub struct GatewayGenerator(pub Arc<GatewayPool>);

impl ResponseGenerator for GatewayGenerator {
    fn generate(&self, context: &str, answer: &str) -> Result<String> {
        let v = self
            .0
            .call(Task::Generate, json!({ "context": context, "answer": answer }))
            .map_err(|e| match e {
                Error::ScorerUnavailable(m) | Error::Protocol(m) => Error::GeneratorUnavailable(m),
                other => other,
            })?;
        match v {
            Value::String(s) => Ok(s),
            other => Err(Error::GeneratorUnavailable(format!(
                "malformed response: generate result {other} is not text"
            ))),
        }
    }
}

/// Answer requests line by line until the input ends. Unparseable requests
/// get an error reply with code `bad_request`. Returns the number of lines
/// answered.
pub fn serve<R, W, H>(reader: R, mut writer: W, handler: H) -> Result<usize>
where
    R: BufRead,
    W: Write,
    H: Fn(&GatewayRequest) -> std::result::Result<Value, RemoteError>,
{
    let mut served = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<GatewayRequest>(&line) {
            Ok(req) => match handler(&req) {
                Ok(v) => GatewayResponse::ok(req.id, v),
                Err(e) => GatewayResponse::err(req.id, e),
            },
            Err(e) => {
                let id = serde_json::from_str::<Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Value::as_str).map(str::to_string))
                    .unwrap_or_default();
                GatewayResponse::err(id, RemoteError::new("bad_request", e.to_string()))
            }
        };
        let mut out = serde_json::to_string(&resp).map_err(|e| Error::Protocol(e.to_string()))?;
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
        served += 1;
    }
    Ok(served)
}

/// Serves the built-in models over the gateway protocol. Useful as a
/// reference server and for checking that gateway-backed runs agree with
/// in-process ones.
#[derive(Debug, Clone, Default)]
pub struct BuiltinHandler {
    pub detector: Option<Arc<LinearModel>>,
    pub domain: Option<Arc<LinearModel>>,
    pub ranker: Option<Arc<LexicalRanker>>,
    pub follow_up: Option<String>,
}

impl BuiltinHandler {
    pub fn handle(&self, req: &GatewayRequest) -> std::result::Result<Value, RemoteError> {
        let field = |name: &str| {
            req.payload
                .get(name)
                .and_then(Value::as_str)
                .ok_or_else(|| RemoteError::new("bad_request", format!("payload needs a text field {name:?}")))
        };
        let unavailable = |what: &str| RemoteError::new("unavailable", format!("no {what} model loaded"));
        match req.task {
            Task::Score => {
                let text = field("text")?;
                if text.contains(SEPARATOR) {
                    let ranker = self.ranker.as_ref().ok_or_else(|| unavailable("ranking"))?;
                    let input = RankInput::from_flat(text).map_err(|e| RemoteError::new("bad_request", e.to_string()))?;
                    let s = ranker.score(&input).map_err(|e| RemoteError::new("internal", e.to_string()))?;
                    Ok(json!(s))
                } else {
                    let det = self.detector.as_ref().ok_or_else(|| unavailable("detection"))?;
                    Ok(json!(det.probability(text)))
                }
            }
            Task::ClassifyDomain => {
                let context = field("context")?;
                let m = self.domain.as_ref().ok_or_else(|| unavailable("domain"))?;
                Ok(json!(m.distribution(context)))
            }
            Task::Generate => {
                field("context")?;
                let answer = field("answer")?;
                let follow_up = self.follow_up.as_deref().unwrap_or(DEFAULT_FOLLOW_UP);
                template_response(answer, follow_up)
                    .map(Value::String)
                    .map_err(|e| RemoteError::new("bad_request", e.to_string()))
            }
        }
    }
}
