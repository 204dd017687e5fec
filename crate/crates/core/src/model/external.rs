//! Client side of the wire protocol: a [`BlackBoxModel`] backed by a
//! subprocess (stdio) or a TCP server.
//!
//! Requests may be issued from many threads at once. A reader thread routes
//! each response to its waiter by id, so servers are free to answer out of
//! order. Results are cached by a hash of the canonical input JSON.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, ModelError};
use crate::graph::Target;
use crate::model::protocol::{Message, PROTOCOL_VERSION};
use crate::model::{BlackBoxModel, InputKind};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Where the model lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    /// Shell command whose stdin/stdout carry the protocol.
    Exec(String),
    /// `host:port`.
    Tcp(String),
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if let Some(cmd) = s.strip_prefix("exec:") {
            Ok(Endpoint::Exec(cmd.to_string()))
        } else if let Some(addr) = s.strip_prefix("tcp:") {
            Ok(Endpoint::Tcp(addr.to_string()))
        } else {
            Err(Error::InvalidArgument(format!(
                "endpoint `{s}` must start with exec: or tcp:"
            )))
        }
    }
}

type Reply = Result<Vec<f64>, ModelError>;

#[derive(Default)]
struct Router {
    waiters: HashMap<u64, Sender<Reply>>,
    handshake: Option<Sender<Result<(usize, InputKind), ModelError>>>,
    closed: Option<String>,
}

impl Router {
    fn fail_all(&mut self, reason: &str) {
        for (_, tx) in self.waiters.drain() {
            let _ = tx.send(Err(ModelError::Transport(reason.to_string())));
        }
        if let Some(tx) = self.handshake.take() {
            let _ = tx.send(Err(ModelError::Transport(reason.to_string())));
        }
    }
}

pub struct ExternalModel {
    n_classes: usize,
    accepts: InputKind,
    timeout: Duration,
    writer: Mutex<Box<dyn Write + Send>>,
    router: Arc<Mutex<Router>>,
    next_id: AtomicU64,
    requests_sent: AtomicU64,
    cache: Mutex<HashMap<[u8; 32], Vec<f64>>>,
    child: Option<Mutex<Child>>,
    tcp: Option<TcpStream>,
}

impl std::fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalModel")
            .field("n_classes", &self.n_classes)
            .field("accepts", &self.accepts)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

impl ExternalModel {
    /// Connects and performs the handshake. Fails if the server reports a
    /// different class count or input kind than expected.
    pub fn connect(
        endpoint: &Endpoint,
        accepts: InputKind,
        n_classes: usize,
        timeout: Duration,
    ) -> Result<Self, ModelError> {
        let (reader, writer, child, tcp): (Box<dyn Read + Send>, Box<dyn Write + Send>, _, _) = match endpoint {
            Endpoint::Exec(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| ModelError::Transport(format!("cannot spawn `{cmd}`: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdout), Box::new(stdin), Some(Mutex::new(child)), None)
            }
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| ModelError::Transport(format!("cannot connect to {addr}: {e}")))?;
                let _ = stream.set_nodelay(true);
                let read_half = stream
                    .try_clone()
                    .map_err(|e| ModelError::Transport(e.to_string()))?;
                let write_half = stream
                    .try_clone()
                    .map_err(|e| ModelError::Transport(e.to_string()))?;
                (Box::new(read_half), Box::new(write_half), None, Some(stream))
            }
        };

        let router = Arc::new(Mutex::new(Router::default()));
        let (hs_tx, hs_rx) = mpsc::channel();
        router.lock().unwrap().handshake = Some(hs_tx);
        spawn_reader(reader, Arc::clone(&router));

        let model = Self {
            n_classes,
            accepts,
            timeout,
            writer: Mutex::new(writer),
            router,
            next_id: AtomicU64::new(1),
            requests_sent: AtomicU64::new(0),
            cache: Mutex::new(HashMap::new()),
            child,
            tcp,
        };
        model.send(&Message::Hello {
            protocol: PROTOCOL_VERSION,
        })?;
        let (server_classes, server_accepts) = match hs_rx.recv_timeout(timeout) {
            Ok(r) => r?,
            Err(RecvTimeoutError::Timeout) => return Err(ModelError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(ModelError::Transport("connection closed during handshake".into()))
            }
        };
        if server_classes != n_classes {
            return Err(ModelError::ClassMismatch {
                expected: n_classes,
                actual: server_classes,
            });
        }
        if server_accepts != accepts {
            return Err(ModelError::InputKind {
                expected: accepts.name(),
                actual: server_accepts.name(),
            });
        }
        Ok(model)
    }

    /// Number of predict requests actually written to the wire.
    pub fn requests_sent(&self) -> u64 {
        self.requests_sent.load(Ordering::Relaxed)
    }

    fn send(&self, msg: &Message) -> Result<(), ModelError> {
        let mut w = self.writer.lock().unwrap();
        w.write_all(msg.to_line().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| ModelError::Transport(e.to_string()))
    }

    /// Issues a request and waits for its reply, bypassing the cache.
    pub fn request(&self, input: Value) -> Reply {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let rx = self.register(id)?;
        self.requests_sent.fetch_add(1, Ordering::Relaxed);
        if let Err(e) = self.send(&Message::Predict { id, input }) {
            self.router.lock().unwrap().waiters.remove(&id);
            return Err(e);
        }
        match rx.recv_timeout(self.timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                self.router.lock().unwrap().waiters.remove(&id);
                Err(ModelError::Timeout(self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => Err(ModelError::Transport("connection closed".into())),
        }
    }

    fn register(&self, id: u64) -> Result<Receiver<Reply>, ModelError> {
        let (tx, rx) = mpsc::channel();
        let mut router = self.router.lock().unwrap();
        if let Some(reason) = &router.closed {
            return Err(ModelError::Transport(reason.clone()));
        }
        router.waiters.insert(id, tx);
        Ok(rx)
    }
}

fn spawn_reader(reader: Box<dyn Read + Send>, router: Arc<Mutex<Router>>) {
    thread::spawn(move || {
        let reader = BufReader::new(reader);
        for line in reader.lines() {
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    let mut r = router.lock().unwrap();
                    r.closed = Some(e.to_string());
                    r.fail_all(&e.to_string());
                    return;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            dispatch(&router, &line);
        }
        let mut r = router.lock().unwrap();
        r.closed = Some("connection closed by model".into());
        r.fail_all("connection closed by model");
    });
}

fn dispatch(router: &Mutex<Router>, line: &str) {
    let mut r = router.lock().unwrap();
    match serde_json::from_str::<Message>(line) {
        Ok(Message::Ready { n_classes, accepts }) => {
            if let Some(tx) = r.handshake.take() {
                let _ = tx.send(Ok((n_classes, accepts)));
            }
        }
        Ok(Message::Prediction { id, probs }) => {
            if let Some(tx) = r.waiters.remove(&id) {
                let _ = tx.send(Ok(probs));
            } else {
                log::warn!("dropping prediction for unknown request id {id}");
            }
        }
        Ok(Message::Error { id: Some(id), message }) => {
            if let Some(tx) = r.waiters.remove(&id) {
                let _ = tx.send(Err(ModelError::Remote { id, message }));
            }
        }
        Ok(Message::Error { id: None, message }) => {
            if let Some(tx) = r.handshake.take() {
                let _ = tx.send(Err(ModelError::Protocol(message)));
            } else {
                log::warn!("model reported an error without request id: {message}");
            }
        }
        Ok(other) => {
            let reason = format!("unexpected message from model: {other:?}");
            r.fail_all(&reason);
        }
        Err(e) => {
            // A reply we cannot parse may belong to any waiter; fail the one it names if possible.
            let id = serde_json::from_str::<Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(Value::as_u64));
            let err = ModelError::Protocol(format!("malformed response `{line}`: {e}"));
            match id.and_then(|id| r.waiters.remove(&id)) {
                Some(tx) => {
                    let _ = tx.send(Err(err));
                }
                None => {
                    if let Some(tx) = r.handshake.take() {
                        let _ = tx.send(Err(err));
                    } else {
                        let reason = err.to_string();
                        for (_, tx) in r.waiters.drain() {
                            let _ = tx.send(Err(ModelError::Protocol(reason.clone())));
                        }
                    }
                }
            }
        }
    }
}

impl BlackBoxModel for ExternalModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn accepts(&self) -> InputKind {
        self.accepts
    }

    fn evaluate(&self, input: Target<'_>) -> Result<Vec<f64>, ModelError> {
        let json = input.to_json();
        let key: [u8; 32] = Sha256::digest(json.as_bytes()).into();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let value: Value = serde_json::from_str(&json).expect("canonical JSON parses");
        let probs = self.request(value)?;
        self.cache.lock().unwrap().insert(key, probs.clone());
        Ok(probs)
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        if let Some(stream) = &self.tcp {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
        if let Some(child) = &self.child {
            let mut child = child.lock().unwrap();
            // closing stdin lets well-behaved servers exit on EOF
            drop(std::mem::replace(&mut *self.writer.lock().unwrap(), Box::new(std::io::sink())));
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            "exec:python3 server.py".parse::<Endpoint>().unwrap(),
            Endpoint::Exec("python3 server.py".into())
        );
        assert_eq!(
            "tcp:127.0.0.1:9000".parse::<Endpoint>().unwrap(),
            Endpoint::Tcp("127.0.0.1:9000".into())
        );
        assert!("http://x".parse::<Endpoint>().is_err());
    }
}
