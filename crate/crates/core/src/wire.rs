//! Frame layout shared by every transport.
//!
//! ```text
//! "DMSG" | u32 header length | u32 payload length | header JSON | payload
//! ```
//!
//! The header is a UTF-8 JSON object holding `"cmd"` followed by the command
//! parameters. The payload is an encoded [`NamedValues`]. Over TCP and IPC
//! frames are written back to back on the stream; over WebSocket each frame
//! is exactly one binary message carrying the same bytes.

use std::fmt;
use std::io::{self, Read};
use std::str::FromStr;

use serde_json::{Map as JsonMap, Number, Value as Json};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt};

use crate::value::{decode_named_values, encode_pairs_into, NamedValues, Value, ValueError, MAX_DEPTH};

pub const MAGIC: &[u8; 4] = b"DMSG";
pub const PREFIX_LEN: usize = 12;
pub const MAX_HEADER_LEN: usize = 64 * 1024;
pub const MAX_PAYLOAD_LEN: usize = 1 << 30;
pub const PROTOCOL_VERSION: i64 = 1;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error(transparent)]
    MalformedValue(#[from] ValueError),
    #[error("oversize frame: header {header} bytes, payload {payload} bytes")]
    OversizeFrame { header: usize, payload: usize },
    #[error("header {0:?} has no JSON form")]
    HeaderNotRepresentable(String),
    #[error("frame truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Hello,
    Ok,
    Err,
    Join,
    Leave,
    Send,
    Broadcast,
    Sync,
    SyncReply,
    Wait,
    Notify,
    List,
    ListReply,
    Bye,
}

impl Command {
    pub const ALL: [Command; 14] = [
        Command::Hello,
        Command::Ok,
        Command::Err,
        Command::Join,
        Command::Leave,
        Command::Send,
        Command::Broadcast,
        Command::Sync,
        Command::SyncReply,
        Command::Wait,
        Command::Notify,
        Command::List,
        Command::ListReply,
        Command::Bye,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Hello => "hello",
            Command::Ok => "ok",
            Command::Err => "err",
            Command::Join => "join",
            Command::Leave => "leave",
            Command::Send => "send",
            Command::Broadcast => "broadcast",
            Command::Sync => "sync",
            Command::SyncReply => "sync_reply",
            Command::Wait => "wait",
            Command::Notify => "notify",
            Command::List => "list",
            Command::ListReply => "list_reply",
            Command::Bye => "bye",
        }
    }
}

impl FromStr for Command {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, WireError> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| WireError::MalformedHeader(format!("unknown command {s:?}")))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One protocol message.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub cmd: Command,
    /// Ordered command parameters; keys are unique and never `"cmd"`.
    pub headers: Vec<(String, Value)>,
    pub payload: NamedValues,
}

impl Frame {
    pub fn new(cmd: Command) -> Self {
        Frame {
            cmd,
            headers: Vec::new(),
            payload: NamedValues::new(),
        }
    }

    pub fn with_header(mut self, key: &str, value: impl Into<Value>) -> Self {
        let value = value.into();
        match self.headers.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.headers.push((key.to_owned(), value)),
        }
        self
    }

    pub fn with_payload(mut self, payload: NamedValues) -> Self {
        self.payload = payload;
        self
    }

    pub fn header(&self, key: &str) -> Option<&Value> {
        self.headers.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn hello(proto: i64) -> Self {
        Frame::new(Command::Hello).with_header("proto", proto)
    }

    pub fn ok() -> Self {
        Frame::new(Command::Ok)
    }

    pub fn err(code: &str, msg: impl Into<String>) -> Self {
        Frame::new(Command::Err)
            .with_header("code", code)
            .with_header("msg", msg.into())
    }

    pub fn join<S: AsRef<str>>(groups: &[S]) -> Self {
        Frame::new(Command::Join).with_header("groups", str_list(groups))
    }

    pub fn leave<S: AsRef<str>>(groups: &[S]) -> Self {
        Frame::new(Command::Leave).with_header("groups", str_list(groups))
    }

    pub fn send<S: AsRef<str>>(groups: &[S], payload: NamedValues) -> Self {
        Frame::new(Command::Send)
            .with_header("groups", str_list(groups))
            .with_payload(payload)
    }

    pub fn broadcast(payload: NamedValues) -> Self {
        Frame::new(Command::Broadcast).with_payload(payload)
    }

    /// `max_n` of `None` means unlimited, sent as `n = -1`.
    pub fn sync(max_n: Option<usize>) -> Self {
        Frame::new(Command::Sync).with_header("n", max_n.map_or(-1, |n| n as i64))
    }

    pub fn sync_reply(payload: NamedValues) -> Self {
        Frame::new(Command::SyncReply).with_payload(payload)
    }

    /// `timeout_ms` of `None` waits without limit, sent as `-1`.
    pub fn wait(timeout_ms: Option<u64>) -> Self {
        Frame::new(Command::Wait).with_header("timeout_ms", timeout_ms.map_or(-1, |t| t as i64))
    }

    pub fn notify(pending: bool) -> Self {
        Frame::new(Command::Notify).with_header("pending", pending)
    }

    pub fn list() -> Self {
        Frame::new(Command::List)
    }

    pub fn list_reply(payload: NamedValues) -> Self {
        Frame::new(Command::ListReply).with_payload(payload)
    }

    pub fn bye() -> Self {
        Frame::new(Command::Bye)
    }

    /// Group names of join/leave/send frames.
    pub fn groups(&self) -> Vec<String> {
        self.header("groups")
            .and_then(Value::as_list)
            .map(|l| l.iter().filter_map(|v| v.as_str().map(str::to_owned)).collect())
            .unwrap_or_default()
    }

    /// Signed integer header, e.g. `n`, `timeout_ms`, `proto`.
    pub fn int_header(&self, key: &str) -> Option<i64> {
        self.header(key).and_then(Value::as_i64)
    }

    pub fn str_header(&self, key: &str) -> Option<&str> {
        self.header(key).and_then(Value::as_str)
    }
}

fn str_list<S: AsRef<str>>(items: &[S]) -> Value {
    Value::List(items.iter().map(|s| Value::from(s.as_ref())).collect())
}

fn value_to_json(key: &str, v: &Value) -> Result<Json, WireError> {
    let unrepresentable = || WireError::HeaderNotRepresentable(key.to_owned());
    Ok(match v {
        Value::Null => Json::Null,
        Value::Bool(b) => Json::Bool(*b),
        Value::Int(i) => Json::Number((*i).into()),
        Value::Double(d) => Json::Number(Number::from_f64(*d).ok_or_else(unrepresentable)?),
        Value::Str(s) => Json::String(s.clone()),
        Value::List(items) => Json::Array(
            items
                .iter()
                .map(|i| value_to_json(key, i))
                .collect::<Result<_, _>>()?,
        ),
        Value::Map(pairs) => {
            let mut m = JsonMap::new();
            for (k, v) in pairs {
                m.insert(k.clone(), value_to_json(key, v)?);
            }
            Json::Object(m)
        }
        Value::Complex(_) | Value::Array(_) => return Err(unrepresentable()),
    })
}

fn json_to_value(j: Json) -> Result<Value, WireError> {
    Ok(match j {
        Json::Null => Value::Null,
        Json::Bool(b) => Value::Bool(b),
        Json::Number(n) => match n.as_i64() {
            Some(i) => Value::Int(i),
            None => Value::Double(
                n.as_f64()
                    .ok_or_else(|| WireError::MalformedHeader(format!("bad number {n}")))?,
            ),
        },
        Json::String(s) => Value::Str(s),
        Json::Array(items) => Value::List(items.into_iter().map(json_to_value).collect::<Result<_, _>>()?),
        Json::Object(m) => Value::Map(
            m.into_iter()
                .map(|(k, v)| Ok((k, json_to_value(v)?)))
                .collect::<Result<_, WireError>>()?,
        ),
    })
}

fn header_json(f: &Frame) -> Result<Vec<u8>, WireError> {
    let mut obj = JsonMap::new();
    obj.insert("cmd".into(), Json::String(f.cmd.as_str().into()));
    for (k, v) in &f.headers {
        if obj.contains_key(k) {
            return Err(WireError::MalformedHeader(format!("duplicate header key {k:?}")));
        }
        obj.insert(k.clone(), value_to_json(k, v)?);
    }
    Ok(serde_json::to_vec(&Json::Object(obj)).expect("JSON map serializes"))
}

/// Assembles a frame from a command, its headers and borrowed payload pairs.
/// The server uses this to reply straight from its tables without cloning.
pub fn encode_frame_parts<'a, I>(f: &Frame, pairs: I) -> Result<Vec<u8>, WireError>
where
    I: ExactSizeIterator<Item = (&'a str, &'a Value)> + Clone,
{
    let header = header_json(f)?;
    let payload_len = 4 + pairs
        .clone()
        .map(|(n, v)| 4 + n.len() + v.encoded_len())
        .sum::<usize>();
    if header.len() > MAX_HEADER_LEN || payload_len > MAX_PAYLOAD_LEN {
        return Err(WireError::OversizeFrame {
            header: header.len(),
            payload: payload_len,
        });
    }
    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&(payload_len as u32).to_le_bytes());
    out.extend_from_slice(&header);
    encode_pairs_into(pairs, &mut out)?;
    debug_assert_eq!(out.len(), PREFIX_LEN + header.len() + payload_len);
    Ok(out)
}

pub fn encode_frame(f: &Frame) -> Result<Vec<u8>, WireError> {
    encode_frame_parts(f, f.payload.iter())
}

/// Parses the fixed prefix into (header length, payload length).
pub fn parse_prefix(prefix: &[u8; PREFIX_LEN]) -> Result<(usize, usize), WireError> {
    let magic: [u8; 4] = prefix[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let header = u32::from_le_bytes(prefix[4..8].try_into().unwrap()) as usize;
    let payload = u32::from_le_bytes(prefix[8..12].try_into().unwrap()) as usize;
    if header > MAX_HEADER_LEN || payload > MAX_PAYLOAD_LEN {
        return Err(WireError::OversizeFrame { header, payload });
    }
    Ok((header, payload))
}

/// Builds a frame from its header and payload bodies, validating the command
/// and its required headers.
pub fn decode_body(header: &[u8], payload: &[u8]) -> Result<Frame, WireError> {
    let json: Json = serde_json::from_slice(header)
        .map_err(|e| WireError::MalformedHeader(format!("invalid JSON: {e}")))?;
    let Json::Object(obj) = json else {
        return Err(WireError::MalformedHeader("header is not an object".into()));
    };
    let mut cmd = None;
    let mut headers = Vec::with_capacity(obj.len());
    for (k, v) in obj {
        if k == "cmd" {
            match v {
                Json::String(s) => cmd = Some(s.parse::<Command>()?),
                _ => return Err(WireError::MalformedHeader("cmd is not a string".into())),
            }
        } else {
            let v = json_to_value(v)?;
            if v.depth() > MAX_DEPTH {
                return Err(WireError::MalformedHeader(format!("header {k:?} nested too deep")));
            }
            headers.push((k, v));
        }
    }
    let cmd = cmd.ok_or_else(|| WireError::MalformedHeader("missing cmd".into()))?;
    let frame = Frame {
        cmd,
        headers,
        payload: decode_named_values(payload)?,
    };
    validate_headers(&frame)?;
    Ok(frame)
}

fn validate_headers(f: &Frame) -> Result<(), WireError> {
    let missing = |key: &str, what: &str| {
        WireError::MalformedHeader(format!("{} requires {key:?} ({what})", f.cmd))
    };
    let int_at_least = |key: &str, min: i64| match f.int_header(key) {
        Some(v) if v >= min => Ok(()),
        _ => Err(missing(key, &format!("integer >= {min}"))),
    };
    match f.cmd {
        Command::Hello => int_at_least("proto", 0),
        Command::Err => {
            f.str_header("code").ok_or_else(|| missing("code", "string"))?;
            f.str_header("msg").ok_or_else(|| missing("msg", "string"))?;
            Ok(())
        }
        Command::Join | Command::Leave | Command::Send => {
            let ok = f
                .header("groups")
                .and_then(Value::as_list)
                .is_some_and(|l| l.iter().all(|g| g.as_str().is_some_and(|s| !s.is_empty())));
            if ok {
                Ok(())
            } else {
                Err(missing("groups", "list of non-empty strings"))
            }
        }
        Command::Sync => int_at_least("n", -1),
        Command::Wait => int_at_least("timeout_ms", -1),
        Command::Notify => match f.header("pending") {
            Some(Value::Bool(_)) => Ok(()),
            _ => Err(missing("pending", "bool")),
        },
        Command::Ok
        | Command::Broadcast
        | Command::SyncReply
        | Command::List
        | Command::ListReply
        | Command::Bye => Ok(()),
    }
}

/// Decodes one frame from the front of `bytes`, returning it with the number
/// of bytes consumed. Incomplete input yields [`WireError::Truncated`].
pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, usize), WireError> {
    if bytes.len() < PREFIX_LEN {
        return Err(WireError::Truncated {
            needed: PREFIX_LEN,
            available: bytes.len(),
        });
    }
    let (hlen, plen) = parse_prefix(bytes[..PREFIX_LEN].try_into().unwrap())?;
    let total = PREFIX_LEN + hlen + plen;
    if bytes.len() < total {
        return Err(WireError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    let header = &bytes[PREFIX_LEN..PREFIX_LEN + hlen];
    let frame = decode_body(header, &bytes[PREFIX_LEN + hlen..total])?;
    Ok((frame, total))
}

/// Reads exactly one frame from a blocking stream. Returns `Ok(None)` on a
/// clean end of stream at a frame boundary.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, WireError> {
    let mut prefix = [0u8; PREFIX_LEN];
    let mut got = 0;
    while got < PREFIX_LEN {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (hlen, plen) = parse_prefix(&prefix)?;
    let mut header = vec![0u8; hlen];
    r.read_exact(&mut header)?;
    let mut payload = vec![0u8; plen];
    r.read_exact(&mut payload)?;
    decode_body(&header, &payload).map(Some)
}

/// Async counterpart of [`read_frame`].
pub async fn read_frame_async<R: AsyncRead + Unpin>(r: &mut R) -> Result<Option<Frame>, WireError> {
    let mut prefix = [0u8; PREFIX_LEN];
    let mut got = 0;
    while got < PREFIX_LEN {
        match r.read(&mut prefix[got..]).await? {
            0 if got == 0 => return Ok(None),
            0 => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            n => got += n,
        }
    }
    let (hlen, plen) = parse_prefix(&prefix)?;
    let mut header = vec![0u8; hlen];
    r.read_exact(&mut header).await?;
    let mut payload = vec![0u8; plen];
    r.read_exact(&mut payload).await?;
    decode_body(&header, &payload).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Tcp,
    Ipc,
    WebSocket,
}

/// Where a server listens or a client connects: `tcp://host:port`,
/// `ipc:///path/to/socket` or `ws://host:port`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportBinding {
    pub kind: TransportKind,
    pub address: String,
}

impl TransportBinding {
    pub fn tcp(addr: impl Into<String>) -> Self {
        TransportBinding {
            kind: TransportKind::Tcp,
            address: addr.into(),
        }
    }

    pub fn ipc(path: impl Into<String>) -> Self {
        TransportBinding {
            kind: TransportKind::Ipc,
            address: path.into(),
        }
    }

    pub fn websocket(addr: impl Into<String>) -> Self {
        TransportBinding {
            kind: TransportKind::WebSocket,
            address: addr.into(),
        }
    }
}

impl FromStr for TransportBinding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (scheme, rest) = s
            .split_once("://")
            .ok_or_else(|| format!("binding {s:?} lacks a scheme (tcp://, ipc://, ws://)"))?;
        if rest.is_empty() {
            return Err(format!("binding {s:?} has an empty address"));
        }
        match scheme {
            "tcp" => Ok(TransportBinding::tcp(rest)),
            "ipc" | "unix" => Ok(TransportBinding::ipc(rest)),
            "ws" => Ok(TransportBinding::websocket(rest)),
            _ => Err(format!("unknown transport scheme {scheme:?}")),
        }
    }
}

impl fmt::Display for TransportBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scheme = match self.kind {
            TransportKind::Tcp => "tcp",
            TransportKind::Ipc => "ipc",
            TransportKind::WebSocket => "ws",
        };
        write!(f, "{scheme}://{}", self.address)
    }
}
