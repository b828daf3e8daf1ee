//! Blocking client: a local workspace of variables plus the request/reply
//! driver for one server connection.
//!
//! A [`Client`] has at most one request in flight; every call writes one
//! frame and reads exactly one reply.

use std::collections::BTreeMap;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use thiserror::Error;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use crate::broker::GroupInfo;
use crate::value::{NamedValues, Value, ValueError};
use crate::wire::{
    decode_frame, encode_frame, read_frame, Command, Frame, TransportBinding, TransportKind, WireError,
    PROTOCOL_VERSION,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to {binding}: {reason}")]
    ConnectFailed { binding: String, reason: String },
    #[error("protocol mismatch: {0}")]
    ProtocolMismatch(String),
    #[error("unknown group(s): {}", .0.join(", "))]
    UnknownGroup(Vec<String>),
    #[error("variable {0:?} is not in the workspace")]
    NameNotInWorkspace(String),
    #[error("server error {code}: {msg}")]
    Server { code: String, msg: String },
    #[error("unexpected reply {got} to {sent}")]
    UnexpectedReply { sent: Command, got: Command },
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

impl From<io::Error> for ClientError {
    fn from(e: io::Error) -> Self {
        ClientError::Wire(WireError::Io(e))
    }
}

/// Client-side variables, updated by [`Client::sync`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Workspace {
    vars: BTreeMap<String, Value>,
}

impl Workspace {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.vars.get(name)
    }

    pub fn set(&mut self, name: impl Into<String>, value: impl Into<Value>) {
        self.vars.insert(name.into(), value.into());
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.vars.remove(name)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn pick<S: AsRef<str>>(&self, names: &[S]) -> Result<NamedValues, ClientError> {
        let mut nv = NamedValues::new();
        for name in names {
            let name = name.as_ref();
            let v = self
                .vars
                .get(name)
                .ok_or_else(|| ClientError::NameNotInWorkspace(name.to_owned()))?;
            if nv.get(name).is_none() {
                nv.push(name, v.clone())?;
            }
        }
        Ok(nv)
    }
}

enum Connection {
    Stream {
        reader: BufReader<Box<dyn Read + Send>>,
        writer: BufWriter<Box<dyn Write + Send>>,
    },
    Ws(Box<WebSocket<MaybeTlsStream<TcpStream>>>),
}

impl Connection {
    fn open(binding: &TransportBinding) -> io::Result<Connection> {
        match binding.kind {
            TransportKind::Tcp => {
                let s = TcpStream::connect(&binding.address)?;
                s.set_nodelay(true)?;
                let r = s.try_clone()?;
                Ok(Connection::stream(Box::new(r), Box::new(s)))
            }
            #[cfg(unix)]
            TransportKind::Ipc => {
                let s = std::os::unix::net::UnixStream::connect(&binding.address)?;
                let r = s.try_clone()?;
                Ok(Connection::stream(Box::new(r), Box::new(s)))
            }
            #[cfg(not(unix))]
            TransportKind::Ipc => Err(io::Error::new(
                io::ErrorKind::Unsupported,
                "ipc transport needs unix domain sockets",
            )),
            TransportKind::WebSocket => {
                let s = TcpStream::connect(&binding.address)?;
                s.set_nodelay(true)?;
                let url = format!("ws://{}/", binding.address);
                let (ws, _) = tungstenite::client(url, MaybeTlsStream::Plain(s))
                    .map_err(|e| io::Error::new(io::ErrorKind::ConnectionRefused, e.to_string()))?;
                Ok(Connection::Ws(Box::new(ws)))
            }
        }
    }

    fn stream(r: Box<dyn Read + Send>, w: Box<dyn Write + Send>) -> Connection {
        Connection::Stream {
            reader: BufReader::with_capacity(64 * 1024, r),
            writer: BufWriter::with_capacity(64 * 1024, w),
        }
    }

    fn write(&mut self, bytes: Vec<u8>) -> Result<(), ClientError> {
        match self {
            Connection::Stream { writer, .. } => {
                writer.write_all(&bytes)?;
                writer.flush()?;
            }
            Connection::Ws(ws) => ws.send(Message::Binary(bytes)).map_err(ws_err)?,
        }
        Ok(())
    }

    fn read(&mut self) -> Result<Frame, ClientError> {
        match self {
            Connection::Stream { reader, .. } => read_frame(reader)?.ok_or(ClientError::Closed),
            Connection::Ws(ws) => loop {
                match ws.read().map_err(ws_err)? {
                    Message::Binary(bytes) => {
                        let (frame, used) = decode_frame(&bytes)?;
                        if used != bytes.len() {
                            return Err(WireError::MalformedHeader("trailing bytes in message".into()).into());
                        }
                        return Ok(frame);
                    }
                    Message::Close(_) => return Err(ClientError::Closed),
                    _ => continue,
                }
            },
        }
    }

    fn close(self) {
        match self {
            Connection::Stream { mut writer, .. } => {
                let _ = writer.flush();
            }
            Connection::Ws(mut ws) => {
                let _ = ws.close(None);
                let _ = ws.flush();
            }
        }
    }
}

fn ws_err(e: tungstenite::Error) -> ClientError {
    match e {
        tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed => ClientError::Closed,
        tungstenite::Error::Io(io) => io.into(),
        other => ClientError::Wire(WireError::Io(io::Error::other(other.to_string()))),
    }
}

/// One connection to a server plus its local workspace.
pub struct Client {
    conn: Option<Connection>,
    workspace: Workspace,
    groups: Vec<String>,
    client_id: i64,
    binding: TransportBinding,
}

impl Client {
    /// Connects and completes the `hello`/`ok` handshake.
    pub fn connect(binding: &TransportBinding) -> Result<Client, ClientError> {
        Client::connect_with_proto(binding, PROTOCOL_VERSION)
    }

    /// Like [`Client::connect`] but advertising an arbitrary protocol version.
    pub fn connect_with_proto(binding: &TransportBinding, proto: i64) -> Result<Client, ClientError> {
        let conn = Connection::open(binding).map_err(|e| ClientError::ConnectFailed {
            binding: binding.to_string(),
            reason: e.to_string(),
        })?;
        let mut client = Client {
            conn: Some(conn),
            workspace: Workspace::default(),
            groups: Vec::new(),
            client_id: 0,
            binding: binding.clone(),
        };
        match client.request(&Frame::hello(proto)) {
            Ok(ok) => {
                client.client_id = ok.int_header("client_id").unwrap_or(0);
                Ok(client)
            }
            Err(ClientError::Server { code, msg }) if code == "proto_mismatch" => {
                Err(ClientError::ProtocolMismatch(msg))
            }
            Err(e) => Err(e),
        }
    }

    /// Connects with retries, for processes racing a server that is starting.
    pub fn connect_retry(binding: &TransportBinding, attempts: usize, pause: Duration) -> Result<Client, ClientError> {
        let mut last = None;
        for _ in 0..attempts.max(1) {
            match Client::connect(binding) {
                Ok(c) => return Ok(c),
                Err(e @ ClientError::ConnectFailed { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
            std::thread::sleep(pause);
        }
        Err(last.expect("at least one attempt"))
    }

    pub fn binding(&self) -> &TransportBinding {
        &self.binding
    }

    /// Server-assigned session id.
    pub fn id(&self) -> i64 {
        self.client_id
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn workspace_mut(&mut self) -> &mut Workspace {
        &mut self.workspace
    }

    /// Groups this handle has joined, as far as it knows.
    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    fn request(&mut self, frame: &Frame) -> Result<Frame, ClientError> {
        let bytes = encode_frame(frame)?;
        let conn = self.conn.as_mut().ok_or(ClientError::Closed)?;
        conn.write(bytes)?;
        let reply = conn.read()?;
        if reply.cmd == Command::Err {
            let code = reply.str_header("code").unwrap_or_default().to_owned();
            let msg = reply.str_header("msg").unwrap_or_default().to_owned();
            return Err(if code == "unknown_group" {
                ClientError::UnknownGroup(reply.groups())
            } else {
                ClientError::Server { code, msg }
            });
        }
        Ok(reply)
    }

    fn expect(&mut self, frame: &Frame, want: Command) -> Result<Frame, ClientError> {
        let reply = self.request(frame)?;
        if reply.cmd != want {
            return Err(ClientError::UnexpectedReply {
                sent: frame.cmd,
                got: reply.cmd,
            });
        }
        Ok(reply)
    }

    pub fn join<S: AsRef<str>>(&mut self, groups: &[S]) -> Result<(), ClientError> {
        self.expect(&Frame::join(groups), Command::Ok)?;
        for g in groups {
            if !self.groups.iter().any(|have| have == g.as_ref()) {
                self.groups.push(g.as_ref().to_owned());
            }
        }
        Ok(())
    }

    pub fn leave<S: AsRef<str>>(&mut self, groups: &[S]) -> Result<(), ClientError> {
        self.expect(&Frame::leave(groups), Command::Ok)?;
        self.groups.retain(|have| !groups.iter().any(|g| g.as_ref() == have));
        Ok(())
    }

    /// Sends the named workspace variables to `groups`. Every name must be in
    /// the workspace; otherwise nothing is transmitted.
    pub fn send<S: AsRef<str>, N: AsRef<str>>(&mut self, groups: &[S], names: &[N]) -> Result<(), ClientError> {
        let payload = self.workspace.pick(names)?;
        self.send_values(groups, payload)
    }

    /// Sends one value without touching the workspace.
    pub fn send_r<S: AsRef<str>>(&mut self, groups: &[S], name: &str, value: impl Into<Value>) -> Result<(), ClientError> {
        let payload = NamedValues::new().with(name, value)?;
        self.send_values(groups, payload)
    }

    /// Sends a set of values in one frame; they land atomically.
    pub fn send_values<S: AsRef<str>>(&mut self, groups: &[S], payload: NamedValues) -> Result<(), ClientError> {
        if payload.is_empty() {
            return Ok(());
        }
        self.expect(&Frame::send(groups, payload), Command::Ok).map(drop)
    }

    pub fn broadcast<N: AsRef<str>>(&mut self, names: &[N]) -> Result<(), ClientError> {
        let payload = self.workspace.pick(names)?;
        self.broadcast_values(payload)
    }

    pub fn broadcast_r(&mut self, name: &str, value: impl Into<Value>) -> Result<(), ClientError> {
        let payload = NamedValues::new().with(name, value)?;
        self.broadcast_values(payload)
    }

    pub fn broadcast_values(&mut self, payload: NamedValues) -> Result<(), ClientError> {
        if payload.is_empty() {
            return Ok(());
        }
        self.expect(&Frame::broadcast(payload), Command::Ok).map(drop)
    }

    /// Fetches pending updates into the workspace and returns how many
    /// variables changed. `None` fetches everything pending.
    pub fn sync(&mut self, max_n: Option<usize>) -> Result<usize, ClientError> {
        let pairs = self.sync_r(max_n)?;
        let n = pairs.len();
        for (name, value) in pairs {
            self.workspace.vars.insert(name, value);
        }
        Ok(n)
    }

    /// Fetches pending updates and returns them, leaving the workspace alone.
    pub fn sync_r(&mut self, max_n: Option<usize>) -> Result<NamedValues, ClientError> {
        Ok(self.expect(&Frame::sync(max_n), Command::SyncReply)?.payload)
    }

    /// Blocks until a sync would return something or the timeout expires.
    /// `None` waits indefinitely.
    pub fn wait(&mut self, timeout: Option<Duration>) -> Result<bool, ClientError> {
        let ms = timeout.map(|t| t.as_millis().min(i64::MAX as u128) as u64);
        let reply = self.expect(&Frame::wait(ms), Command::Notify)?;
        Ok(reply.header("pending").and_then(Value::as_bool).unwrap_or(false))
    }

    pub fn list(&mut self) -> Result<Vec<GroupInfo>, ClientError> {
        let reply = self.expect(&Frame::list(), Command::ListReply)?;
        Ok(reply
            .payload
            .iter()
            .map(|(name, info)| {
                let field = |k: &str| match info {
                    Value::Map(m) => m.iter().find(|(n, _)| n == k).and_then(|(_, v)| v.as_i64()),
                    _ => None,
                };
                GroupInfo {
                    name: name.to_owned(),
                    members: field("members").unwrap_or(0) as usize,
                    writes: field("writes").unwrap_or(0) as u64,
                }
            })
            .collect())
    }

    /// Says goodbye and closes the transport. Later calls fail with
    /// [`ClientError::Closed`]; closing twice is a no-op.
    pub fn close(&mut self) {
        if let Some(mut conn) = self.conn.take() {
            if let Ok(bytes) = encode_frame(&Frame::bye()) {
                let _ = conn.write(bytes);
            }
            conn.close();
        }
    }

    pub fn is_closed(&self) -> bool {
        self.conn.is_none()
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        self.close();
    }
}
