//! Drive a scenario against a running server over WebSocket, in real time.

use std::collections::HashMap;
use std::sync::mpsc as std_mpsc;

use bytes::Bytes;
use futures_util::{SinkExt, StreamExt};
use tokio::runtime::Runtime;
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::Message as WsMessage;

use super::scenario::ServerPort;
use super::HarnessError;
use crate::server::{ConnId, Output};

/// One WebSocket per bot, opened on the bot's first frame.
pub struct WsPort {
    url: String,
    rt: Runtime,
    conns: HashMap<ConnId, mpsc::UnboundedSender<Bytes>>,
    inbox_tx: std_mpsc::Sender<Output>,
    inbox: std_mpsc::Receiver<Output>,
}

impl WsPort {
    pub fn new(url: impl Into<String>) -> Result<Self, HarnessError> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (inbox_tx, inbox) = std_mpsc::channel();
        Ok(Self {
            url: url.into(),
            rt,
            conns: HashMap::new(),
            inbox_tx,
            inbox,
        })
    }

    fn open(&mut self, conn: ConnId) -> Option<mpsc::UnboundedSender<Bytes>> {
        let (ws, _) = self
            .rt
            .block_on(tokio_tungstenite::connect_async(self.url.as_str()))
            .ok()?;
        let (mut sink, mut stream) = ws.split();
        let (tx, mut rx) = mpsc::unbounded_channel::<Bytes>();
        self.rt.spawn(async move {
            while let Some(b) = rx.recv().await {
                if sink.send(WsMessage::Binary(b.to_vec())).await.is_err() {
                    break;
                }
            }
            let _ = sink.close().await;
        });
        let inbox = self.inbox_tx.clone();
        self.rt.spawn(async move {
            while let Some(Ok(msg)) = stream.next().await {
                match msg {
                    WsMessage::Binary(b) => {
                        if inbox
                            .send(Output::Send {
                                conn,
                                bytes: Bytes::from(b),
                            })
                            .is_err()
                        {
                            return;
                        }
                    }
                    WsMessage::Close(_) => break,
                    _ => {}
                }
            }
            let _ = inbox.send(Output::Close { conn });
        });
        self.conns.insert(conn, tx.clone());
        Some(tx)
    }
}

impl ServerPort for WsPort {
    fn deliver(&mut self, conn: ConnId, frame: Bytes, _now_ms: u64) -> Vec<Output> {
        let tx = match self.conns.get(&conn) {
            Some(tx) => Some(tx.clone()),
            None => self.open(conn),
        };
        match tx {
            Some(tx) if tx.send(frame).is_ok() => Vec::new(),
            _ => vec![Output::Close { conn }],
        }
    }

    fn poll(&mut self, _now_ms: u64) -> Vec<Output> {
        self.inbox.try_iter().collect()
    }

    fn realtime(&self) -> bool {
        true
    }
}

impl Drop for WsPort {
    fn drop(&mut self) {
        self.conns.clear();
    }
}
