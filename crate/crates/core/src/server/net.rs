//! Socket front-ends: WebSocket (one frame per binary message) and plain TCP
//! (frames delimited by the header's `payload_len`).
//!
//! Each room runs as one task that owns its [`Room`]; connection tasks only
//! parse enough of the first frame to route it.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bytes::{Bytes, BytesMut};
use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message as WsMessage;

use super::{ConnId, LogEvent, Output, Room, ServerConfig, ServerError};
use crate::protocol::{
    decode_header, encode, frame_len, Header, Message, Reject, RejectCode, HEADER_LEN,
};

/// Receives every structured log event.
pub type LogSink = Arc<dyn Fn(&LogEvent) + Send + Sync>;

/// A sink writing one JSON object per line to stdout.
pub fn stdout_log() -> LogSink {
    Arc::new(|e: &LogEvent| println!("{}", e.to_json()))
}

#[derive(Debug)]
enum RoomCmd {
    Attach {
        conn: ConnId,
        tx: mpsc::UnboundedSender<ConnCmd>,
    },
    Frame {
        conn: ConnId,
        bytes: Bytes,
    },
    Detach {
        conn: ConnId,
    },
}

#[derive(Debug)]
enum ConnCmd {
    Frame(Bytes),
    Close,
}

#[derive(Clone)]
struct Router {
    rooms: Arc<HashMap<u32, mpsc::UnboundedSender<RoomCmd>>>,
    next_conn: Arc<AtomicU64>,
}

/// A running server. Dropping the handle does not stop it; call [`ServerHandle::shutdown`].
pub struct ServerHandle {
    pub ws_addr: SocketAddr,
    pub tcp_addr: Option<SocketAddr>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        for t in self.tasks {
            t.abort();
            let _ = t.await;
        }
    }
}

/// Bind listeners and start the room tasks.
pub async fn start(
    config: ServerConfig,
    ws_addr: SocketAddr,
    tcp_addr: Option<SocketAddr>,
    log: LogSink,
) -> Result<ServerHandle, ServerError> {
    config.validate()?;
    let (shutdown, shutdown_rx) = watch::channel(false);
    let epoch = Instant::now();
    let mut tasks = Vec::new();
    let mut rooms = HashMap::new();
    for rc in config.rooms {
        let (tx, rx) = mpsc::unbounded_channel();
        rooms.insert(rc.id, tx);
        tasks.push(tokio::spawn(room_task(
            Room::new(rc),
            rx,
            epoch,
            log.clone(),
        )));
    }
    let router = Router {
        rooms: Arc::new(rooms),
        next_conn: Arc::new(AtomicU64::new(1)),
    };

    let ws = TcpListener::bind(ws_addr).await?;
    let ws_addr = ws.local_addr()?;
    tasks.push(tokio::spawn(accept_loop(
        ws,
        router.clone(),
        shutdown_rx.clone(),
        Transport::WebSocket,
    )));
    let tcp_addr = match tcp_addr {
        Some(addr) => {
            let l = TcpListener::bind(addr).await?;
            let addr = l.local_addr()?;
            tasks.push(tokio::spawn(accept_loop(
                l,
                router,
                shutdown_rx,
                Transport::Tcp,
            )));
            Some(addr)
        }
        None => None,
    };
    Ok(ServerHandle {
        ws_addr,
        tcp_addr,
        shutdown,
        tasks,
    })
}

/// Run until interrupted.
pub async fn run(
    config: ServerConfig,
    ws_addr: SocketAddr,
    tcp_addr: Option<SocketAddr>,
    log: LogSink,
) -> Result<(), ServerError> {
    let handle = start(config, ws_addr, tcp_addr, log).await?;
    eprintln!("listening: websocket {}", handle.ws_addr);
    if let Some(a) = handle.tcp_addr {
        eprintln!("listening: tcp {a}");
    }
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await;
    Ok(())
}

async fn room_task(
    mut room: Room,
    mut rx: mpsc::UnboundedReceiver<RoomCmd>,
    epoch: Instant,
    log: LogSink,
) {
    let mut conns: HashMap<ConnId, mpsc::UnboundedSender<ConnCmd>> = HashMap::new();
    let mut tick = tokio::time::interval(Duration::from_millis(250));
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    loop {
        let out = tokio::select! {
            cmd = rx.recv() => {
                let Some(cmd) = cmd else { break };
                let now = epoch.elapsed().as_millis() as u64;
                match cmd {
                    RoomCmd::Attach { conn, tx } => {
                        conns.insert(conn, tx);
                        Vec::new()
                    }
                    RoomCmd::Frame { conn, bytes } => room.handle(conn, bytes, now),
                    RoomCmd::Detach { conn } => {
                        conns.remove(&conn);
                        room.disconnect(conn, now)
                    }
                }
            }
            _ = tick.tick() => room.tick(epoch.elapsed().as_millis() as u64),
        };
        for o in out {
            match o {
                Output::Send { conn, bytes } => {
                    if let Some(tx) = conns.get(&conn) {
                        let _ = tx.send(ConnCmd::Frame(bytes));
                    }
                }
                Output::Close { conn } => {
                    if let Some(tx) = conns.remove(&conn) {
                        let _ = tx.send(ConnCmd::Close);
                    }
                }
            }
        }
        for e in room.take_log() {
            log(&e);
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Transport {
    WebSocket,
    Tcp,
}

async fn accept_loop(
    listener: TcpListener,
    router: Router,
    mut shutdown: watch::Receiver<bool>,
    kind: Transport,
) {
    loop {
        tokio::select! {
            accepted = listener.accept() => {
                let Ok((stream, _)) = accepted else { continue };
                let _ = stream.set_nodelay(true);
                let router = router.clone();
                tokio::spawn(async move {
                    match kind {
                        Transport::WebSocket => serve_ws(stream, router).await,
                        Transport::Tcp => serve_tcp(stream, router).await,
                    }
                });
            }
            _ = shutdown.changed() => break,
        }
    }
}

/// Routes a connection's frames to its room, binding to the room named by the first frame.
struct Binding {
    conn: ConnId,
    room: Option<mpsc::UnboundedSender<RoomCmd>>,
    router: Router,
    tx: mpsc::UnboundedSender<ConnCmd>,
}

impl Binding {
    fn new(router: Router, tx: mpsc::UnboundedSender<ConnCmd>) -> Self {
        Self {
            conn: router.next_conn.fetch_add(1, Ordering::Relaxed),
            room: None,
            router,
            tx,
        }
    }

    fn deliver(&mut self, bytes: Bytes) {
        if self.room.is_none() {
            let room_id = match decode_header(&bytes) {
                Ok(h) => h.header.room_id,
                Err(e) => return self.reply_reject(0, RejectCode::Malformed, e.to_string()),
            };
            let Some(room) = self.router.rooms.get(&room_id) else {
                return self.reply_reject(
                    room_id,
                    RejectCode::UnknownRoom,
                    format!("no room {room_id}"),
                );
            };
            let _ = room.send(RoomCmd::Attach {
                conn: self.conn,
                tx: self.tx.clone(),
            });
            self.room = Some(room.clone());
        }
        if let Some(room) = &self.room {
            let _ = room.send(RoomCmd::Frame {
                conn: self.conn,
                bytes,
            });
        }
    }

    fn reply_reject(&self, room_id: u32, code: RejectCode, detail: String) {
        let header = Header {
            room_id,
            ..Header::default()
        };
        let msg = Message::Reject(Reject {
            code,
            ref_seq: 0,
            detail,
        });
        if let Ok(b) = encode(&header, &msg) {
            let _ = self.tx.send(ConnCmd::Frame(Bytes::from(b)));
        }
    }
}

impl Drop for Binding {
    fn drop(&mut self) {
        if let Some(room) = &self.room {
            let _ = room.send(RoomCmd::Detach { conn: self.conn });
        }
    }
}

async fn serve_ws(stream: TcpStream, router: Router) {
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else {
        return;
    };
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::unbounded_channel();
    let mut binding = Binding::new(router, tx);
    let writer = tokio::spawn(async move {
        while let Some(cmd) = rx.recv().await {
            match cmd {
                ConnCmd::Frame(b) => {
                    if sink.send(WsMessage::Binary(b.to_vec())).await.is_err() {
                        break;
                    }
                }
                ConnCmd::Close => {
                    let _ = sink.close().await;
                    break;
                }
            }
        }
    });
    while let Some(msg) = source.next().await {
        match msg {
            Ok(WsMessage::Binary(data)) => binding.deliver(Bytes::from(data)),
            Ok(WsMessage::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
        if writer.is_finished() {
            break;
        }
    }
    drop(binding);
    let _ = writer.await;
}

async fn serve_tcp(stream: TcpStream, router: Router) {
    let (mut read, mut write) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel();
    let mut binding = Binding::new(router, tx);
    let writer = tokio::spawn(async move {
        while let Some(cmd) = rx.recv().await {
            match cmd {
                ConnCmd::Frame(b) => {
                    if write.write_all(&b).await.is_err() {
                        break;
                    }
                }
                ConnCmd::Close => {
                    let _ = write.shutdown().await;
                    break;
                }
            }
        }
    });
    let mut buf = BytesMut::with_capacity(8 * 1024);
    'read: loop {
        match read.read_buf(&mut buf).await {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        loop {
            match frame_len(&buf) {
                Ok(Some(n)) if buf.len() >= n => binding.deliver(buf.split_to(n).freeze()),
                Ok(_) => break,
                Err(_) => {
                    // The stream lost framing; nothing after this point can be trusted.
                    let garbage = buf.split_to(buf.len().min(HEADER_LEN)).freeze();
                    binding.deliver(garbage);
                    break 'read;
                }
            }
        }
        if writer.is_finished() {
            break;
        }
    }
    drop(binding);
    let _ = writer.await;
}
