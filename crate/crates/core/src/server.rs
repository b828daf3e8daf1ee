//! Network front end for the [`Broker`].
//!
//! Every connection gets a reader task that decodes frames into a channel and
//! a session task that applies them. Commands from all connections go through
//! one mutex-guarded broker, so state changes are serialized. A blocked `wait`
//! only parks its own session task.

use std::collections::HashMap;
use std::io;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use log::{debug, info, warn};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncWrite, AsyncWriteExt, BufReader, BufWriter};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, Notify};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::WebSocketStream;

use crate::broker::{Broker, BrokerError, ClientId, Limits};
use crate::value::{NamedValues, Value};
use crate::wire::{
    decode_frame, encode_frame, encode_frame_parts, read_frame_async, Command, Frame, TransportBinding,
    TransportKind, WireError, PROTOCOL_VERSION,
};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("no transport could be bound")]
    NothingBound,
    #[error("no transports configured")]
    NoBindings,
    #[error("failed to start runtime: {0}")]
    Runtime(io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    pub bindings: Vec<TransportBinding>,
    pub limits: Limits,
}

struct State {
    broker: Broker,
    waiters: HashMap<ClientId, Arc<Notify>>,
}

struct Shared {
    state: Mutex<State>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn wake(&self, state: &State, ids: &[ClientId]) {
        for id in ids {
            if let Some(n) = state.waiters.get(id) {
                n.notify_one();
            }
        }
    }
}

enum Listener {
    Tcp(TcpListener),
    #[cfg(unix)]
    Ipc {
        listener: tokio::net::UnixListener,
        _socket: SocketFile,
    },
    Ws(TcpListener),
}

/// Removes the socket file when the listener goes away.
#[cfg(unix)]
struct SocketFile(PathBuf);

#[cfg(unix)]
impl Drop for SocketFile {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

pub struct Server {
    shared: Arc<Shared>,
    listeners: Vec<(TransportBinding, Listener)>,
}

impl Server {
    /// Binds every configured transport. Failures are logged and skipped; it
    /// is an error only if nothing binds.
    pub async fn bind(config: ServerConfig) -> Result<Server, ServerError> {
        if config.bindings.is_empty() {
            return Err(ServerError::NoBindings);
        }
        let mut listeners = Vec::new();
        for binding in &config.bindings {
            match bind_one(binding).await {
                Ok(bound) => {
                    info!("listening on {}", bound.0);
                    listeners.push(bound);
                }
                Err(e) => warn!("cannot bind {binding}: {e}"),
            }
        }
        if listeners.is_empty() {
            return Err(ServerError::NothingBound);
        }
        Ok(Server {
            shared: Arc::new(Shared {
                state: Mutex::new(State {
                    broker: Broker::new(config.limits),
                    waiters: HashMap::new(),
                }),
            }),
            listeners,
        })
    }

    /// Bound addresses, with ephemeral ports resolved.
    pub fn bindings(&self) -> Vec<TransportBinding> {
        self.listeners.iter().map(|(b, _)| b.clone()).collect()
    }

    /// Accepts connections until `shutdown` resolves.
    pub async fn run_until<F>(self, shutdown: F)
    where
        F: std::future::Future<Output = ()>,
    {
        let mut accept_tasks = Vec::new();
        for (_, listener) in self.listeners {
            let shared = Arc::clone(&self.shared);
            accept_tasks.push(tokio::spawn(accept_loop(listener, shared)));
        }
        shutdown.await;
        for t in accept_tasks {
            t.abort();
        }
    }

    fn shared(&self) -> Arc<Shared> {
        Arc::clone(&self.shared)
    }
}

async fn bind_one(binding: &TransportBinding) -> io::Result<(TransportBinding, Listener)> {
    match binding.kind {
        TransportKind::Tcp => {
            let l = TcpListener::bind(&binding.address).await?;
            let addr = l.local_addr()?.to_string();
            Ok((TransportBinding::tcp(addr), Listener::Tcp(l)))
        }
        TransportKind::WebSocket => {
            let l = TcpListener::bind(&binding.address).await?;
            let addr = l.local_addr()?.to_string();
            Ok((TransportBinding::websocket(addr), Listener::Ws(l)))
        }
        #[cfg(unix)]
        TransportKind::Ipc => {
            let path = PathBuf::from(&binding.address);
            if path.exists() && std::os::unix::net::UnixStream::connect(&path).is_err() {
                // Stale socket left by a dead server.
                std::fs::remove_file(&path)?;
            }
            let l = tokio::net::UnixListener::bind(&path)?;
            Ok((
                binding.clone(),
                Listener::Ipc {
                    listener: l,
                    _socket: SocketFile(path),
                },
            ))
        }
        #[cfg(not(unix))]
        TransportKind::Ipc => Err(io::Error::new(
            io::ErrorKind::Unsupported,
            "ipc transport needs unix domain sockets",
        )),
    }
}

async fn accept_loop(listener: Listener, shared: Arc<Shared>) {
    loop {
        let accepted = match &listener {
            Listener::Tcp(l) => l.accept().await.map(|(s, peer)| {
                let _ = s.set_nodelay(true);
                debug!("tcp connection from {peer}");
                let shared = Arc::clone(&shared);
                tokio::spawn(async move {
                    let (r, w) = s.into_split();
                    serve_stream(shared, r, w).await
                });
            }),
            #[cfg(unix)]
            Listener::Ipc { listener: l, .. } => l.accept().await.map(|(s, _)| {
                debug!("ipc connection");
                let shared = Arc::clone(&shared);
                tokio::spawn(async move {
                    let (r, w) = s.into_split();
                    serve_stream(shared, r, w).await
                });
            }),
            Listener::Ws(l) => l.accept().await.map(|(s, peer)| {
                let _ = s.set_nodelay(true);
                debug!("websocket connection from {peer}");
                let shared = Arc::clone(&shared);
                tokio::spawn(async move {
                    match tokio_tungstenite::accept_async(s).await {
                        Ok(ws) => serve_ws(shared, ws).await,
                        Err(e) => debug!("websocket handshake with {peer} failed: {e}"),
                    }
                });
            }),
        };
        if let Err(e) = accepted {
            warn!("accept failed: {e}");
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }
}

type Incoming = mpsc::Receiver<Result<Frame, WireError>>;

enum Outgoing<W, S> {
    Stream(BufWriter<W>),
    Ws(S),
}

impl<W, S> Outgoing<W, S>
where
    W: AsyncWrite + Unpin,
    S: futures_util::Sink<Message> + Unpin,
{
    async fn send_bytes(&mut self, bytes: Vec<u8>) -> io::Result<()> {
        match self {
            Outgoing::Stream(w) => {
                w.write_all(&bytes).await?;
                w.flush().await
            }
            Outgoing::Ws(s) => s
                .send(Message::Binary(bytes))
                .await
                .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "websocket closed")),
        }
    }

    async fn send(&mut self, f: &Frame) -> io::Result<()> {
        match encode_frame(f) {
            Ok(bytes) => self.send_bytes(bytes).await,
            Err(e) => Err(io::Error::new(io::ErrorKind::InvalidData, e.to_string())),
        }
    }
}

async fn serve_stream<R, W>(shared: Arc<Shared>, r: R, w: W)
where
    R: AsyncRead + Unpin + Send + 'static,
    W: AsyncWrite + Unpin,
{
    let (tx, rx) = mpsc::channel(2);
    let reader = tokio::spawn(async move {
        let mut r = BufReader::with_capacity(64 * 1024, r);
        loop {
            match read_frame_async(&mut r).await {
                Ok(Some(f)) => {
                    if tx.send(Ok(f)).await.is_err() {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    let _ = tx.send(Err(e)).await;
                    break;
                }
            }
        }
    });
    let out: Outgoing<W, futures_util::sink::Drain<Message>> =
        Outgoing::Stream(BufWriter::with_capacity(64 * 1024, w));
    run_session(shared, rx, out).await;
    reader.abort();
}

async fn serve_ws<S>(shared: Arc<Shared>, ws: WebSocketStream<S>)
where
    S: AsyncRead + AsyncWrite + Unpin + Send + 'static,
{
    let (sink, mut stream) = ws.split();
    let (tx, rx) = mpsc::channel(2);
    let reader = tokio::spawn(async move {
        while let Some(msg) = stream.next().await {
            let item = match msg {
                Ok(Message::Binary(bytes)) => match decode_frame(&bytes) {
                    Ok((f, used)) if used == bytes.len() => Ok(f),
                    Ok(_) => Err(WireError::MalformedHeader(
                        "websocket message carries more than one frame".into(),
                    )),
                    Err(e) => Err(e),
                },
                Ok(Message::Close(_)) | Err(_) => break,
                Ok(Message::Text(_)) => Err(WireError::MalformedHeader("text websocket message".into())),
                Ok(_) => continue,
            };
            let fatal = item.is_err();
            if tx.send(item).await.is_err() || fatal {
                break;
            }
        }
    });
    let out: Outgoing<tokio::io::Sink, _> = Outgoing::Ws(sink);
    run_session(shared, rx, out).await;
    reader.abort();
}

async fn run_session<W, S>(shared: Arc<Shared>, mut rx: Incoming, mut out: Outgoing<W, S>)
where
    W: AsyncWrite + Unpin,
    S: futures_util::Sink<Message> + Unpin,
{
    let Some(id) = handshake(&shared, &mut rx, &mut out).await else {
        return;
    };
    debug!("session {id} open");
    let notify = Arc::new(Notify::new());
    shared.lock().waiters.insert(id, Arc::clone(&notify));

    let mut queued: Option<Frame> = None;
    loop {
        let frame = match queued.take() {
            Some(f) => f,
            None => match rx.recv().await {
                Some(Ok(f)) => f,
                Some(Err(e)) => {
                    debug!("session {id}: protocol violation: {e}");
                    let _ = out.send(&Frame::err("malformed", e.to_string())).await;
                    break;
                }
                None => break,
            },
        };
        let result = match frame.cmd {
            Command::Bye => break,
            Command::Wait => {
                let timeout = frame.int_header("timeout_ms").unwrap_or(-1);
                let (pending, interrupted) = wait_pending(&shared, id, &notify, timeout, &mut rx).await;
                let r = out.send(&Frame::notify(pending)).await;
                match interrupted {
                    Some(Some(Ok(f))) => queued = Some(f),
                    Some(_) => break,
                    None => {}
                }
                r
            }
            Command::Sync => {
                let max_n = match frame.int_header("n") {
                    Some(n) if n >= 0 => Some(n as usize),
                    _ => None,
                };
                // The batch shares the table's Arcs; encode after unlocking.
                let batch = shared.lock().broker.sync(id, max_n);
                match batch {
                    Ok(batch) => match encode_frame_parts(&Frame::new(Command::SyncReply), batch.iter()) {
                        Ok(bytes) => out.send_bytes(bytes).await,
                        Err(e) => out.send(&Frame::err("oversize", e.to_string())).await,
                    },
                    Err(e) => out.send(&broker_err(&e)).await,
                }
            }
            _ => {
                let reply = apply(&shared, id, frame);
                out.send(&reply).await
            }
        };
        if let Err(e) = result {
            debug!("session {id}: write failed: {e}");
            break;
        }
    }

    let mut state = shared.lock();
    state.waiters.remove(&id);
    state.broker.close_session(id);
    debug!("session {id} closed, {} remain", state.broker.session_count());
}

async fn handshake<W, S>(shared: &Shared, rx: &mut Incoming, out: &mut Outgoing<W, S>) -> Option<ClientId>
where
    W: AsyncWrite + Unpin,
    S: futures_util::Sink<Message> + Unpin,
{
    let hello = match rx.recv().await {
        Some(Ok(f)) if f.cmd == Command::Hello => f,
        Some(Ok(f)) => {
            let _ = out
                .send(&Frame::err("not_greeted", format!("expected hello, got {}", f.cmd)))
                .await;
            return None;
        }
        Some(Err(e)) => {
            let _ = out.send(&Frame::err("malformed", e.to_string())).await;
            return None;
        }
        None => return None,
    };
    let proto = hello.int_header("proto").unwrap_or(-1);
    if proto != PROTOCOL_VERSION {
        let _ = out
            .send(&Frame::err(
                "proto_mismatch",
                format!("server speaks protocol {PROTOCOL_VERSION}, client asked for {proto}"),
            ))
            .await;
        return None;
    }
    let opened = shared.lock().broker.open_session();
    match opened {
        Ok(id) => {
            let ok = Frame::ok()
                .with_header("proto", PROTOCOL_VERSION)
                .with_header("client_id", id as i64);
            if out.send(&ok).await.is_err() {
                shared.lock().broker.close_session(id);
                return None;
            }
            Some(id)
        }
        Err(e) => {
            let _ = out.send(&broker_err(&e)).await;
            None
        }
    }
}

fn broker_err(e: &BrokerError) -> Frame {
    let f = Frame::err(e.code(), e.to_string());
    match e {
        BrokerError::UnknownGroup(groups) => f.with_header(
            "groups",
            Value::List(groups.iter().map(|g| Value::from(g.as_str())).collect()),
        ),
        _ => f,
    }
}

/// Applies a non-blocking command and builds its reply.
fn apply(shared: &Shared, id: ClientId, frame: Frame) -> Frame {
    let mut state = shared.lock();
    let result = match frame.cmd {
        Command::Join => state.broker.join(id, &frame.groups()).map(|_| Frame::ok()),
        Command::Leave => state.broker.leave(id, &frame.groups()).map(|_| Frame::ok()),
        Command::Send => {
            let groups = frame.groups();
            state.broker.send(id, &groups, frame.payload).map(|woken| {
                shared.wake(&state, &woken);
                Frame::ok()
            })
        }
        Command::Broadcast => state.broker.broadcast(id, frame.payload).map(|woken| {
            shared.wake(&state, &woken);
            Frame::ok()
        }),
        Command::List => {
            let mut payload = NamedValues::new();
            for g in state.broker.list() {
                let info = Value::Map(vec![
                    ("members".into(), Value::Int(g.members as i64)),
                    ("writes".into(), Value::Int(g.writes as i64)),
                ]);
                payload.upsert(&g.name, info);
            }
            Ok(Frame::list_reply(payload))
        }
        Command::Hello => Ok(Frame::err("already_greeted", "hello sent twice")),
        other => Ok(Frame::err("bad_request", format!("{other} is not a request"))),
    };
    result.unwrap_or_else(|e| broker_err(&e))
}

/// Resolves a `wait`. Returns the pending flag and, if the wait was cut short
/// by the connection, whatever the reader produced.
async fn wait_pending(
    shared: &Shared,
    id: ClientId,
    notify: &Notify,
    timeout_ms: i64,
    rx: &mut Incoming,
) -> (bool, Option<Option<Result<Frame, WireError>>>) {
    let deadline = (timeout_ms >= 0)
        .then(|| tokio::time::Instant::now() + Duration::from_millis(timeout_ms as u64));
    loop {
        if shared.lock().broker.has_pending(id) {
            return (true, None);
        }
        let expired = async {
            match deadline {
                Some(d) => tokio::time::sleep_until(d).await,
                None => std::future::pending().await,
            }
        };
        tokio::select! {
            _ = notify.notified() => {}
            _ = expired => return (shared.lock().broker.has_pending(id), None),
            next = rx.recv() => return (false, Some(next)),
        }
    }
}

/// A server running on its own thread, for tests, benchmarks and embedding.
pub struct ServerHandle {
    bindings: Vec<TransportBinding>,
    shared: Arc<Shared>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn start(config: ServerConfig) -> Result<ServerHandle, ServerError> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(ServerError::Runtime)?;
        let server = rt.block_on(Server::bind(config))?;
        let bindings = server.bindings();
        let shared = server.shared();
        let (stop, stopped) = oneshot::channel::<()>();
        let thread = thread::Builder::new()
            .name("gridmesh-server".into())
            .spawn(move || {
                rt.block_on(server.run_until(async {
                    let _ = stopped.await;
                }));
                rt.shutdown_timeout(Duration::from_secs(1));
            })
            .map_err(ServerError::Runtime)?;
        Ok(ServerHandle {
            bindings,
            shared,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    /// Convenience: a server on an ephemeral loopback TCP port.
    pub fn start_tcp() -> Result<ServerHandle, ServerError> {
        ServerHandle::start(ServerConfig {
            bindings: vec![TransportBinding::tcp("127.0.0.1:0")],
            limits: Limits::default(),
        })
    }

    pub fn bindings(&self) -> &[TransportBinding] {
        &self.bindings
    }

    pub fn binding(&self, kind: TransportKind) -> Option<&TransportBinding> {
        self.bindings.iter().find(|b| b.kind == kind)
    }

    pub fn session_count(&self) -> usize {
        self.shared.lock().broker.session_count()
    }

    pub fn group_count(&self) -> usize {
        self.shared.lock().broker.group_count()
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}
