//! The relay over real sockets: WebSocket and length-delimited TCP, plus the
//! harness driving a live server in real time.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message as WsMessage;

use hpsync::client::{ClientConfig, ClientSession};
use hpsync::harness::{run_with, Scenario, ScenarioConfig, WsPort};
use hpsync::protocol::{
    decode, encode, frame_len, Header, Message, MsgType, RejectCode, Role, SlideCommand,
};
use hpsync::server::{net, LogEvent, ServerConfig};

const WAIT: Duration = Duration::from_secs(5);

fn quiet() -> net::LogSink {
    Arc::new(|_: &LogEvent| {})
}

fn any_port() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

async fn ws_send(ws: &mut Ws, frame: &[u8]) {
    ws.send(WsMessage::Binary(frame.to_vec())).await.unwrap();
}

/// Next frame of `msg_type`, applying every frame on the way to `session`.
async fn ws_until(ws: &mut Ws, session: &mut ClientSession, msg_type: MsgType) -> Message {
    loop {
        let msg = timeout(WAIT, ws.next())
            .await
            .expect("frame in time")
            .unwrap()
            .unwrap();
        if let WsMessage::Binary(b) = msg {
            let env = session.receive(&b).unwrap();
            if env.message.msg_type() == msg_type {
                return env.message;
            }
        }
    }
}

#[tokio::test]
async fn websocket_join_and_slide() {
    let server = net::start(ServerConfig::default(), any_port(), None, quiet())
        .await
        .unwrap();
    let url = format!("ws://{}", server.ws_addr);

    let (mut p_ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let mut presenter = ClientSession::new(1, ClientConfig::default());
    ws_send(
        &mut p_ws,
        &presenter.join(Role::Presenter, "P", "avatar:p", 0).unwrap(),
    )
    .await;
    ws_until(&mut p_ws, &mut presenter, MsgType::JoinAccept).await;

    let (mut e_ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let mut examiner = ClientSession::new(1, ClientConfig::default());
    ws_send(
        &mut e_ws,
        &examiner.join(Role::Examiner, "E", "avatar:e", 0).unwrap(),
    )
    .await;
    ws_until(&mut e_ws, &mut examiner, MsgType::JoinAccept).await;
    ws_until(&mut p_ws, &mut presenter, MsgType::AvatarManifest).await;

    ws_send(&mut p_ws, &presenter.slide(5, 10).unwrap()).await;
    ws_until(&mut e_ws, &mut examiner, MsgType::SlideCommand).await;
    ws_until(&mut p_ws, &mut presenter, MsgType::SlideCommand).await;
    assert_eq!(examiner.view().slide_index(), 5);
    assert_eq!(presenter.view().state(), examiner.view().state());

    // Only the presenter drives slides.
    let forged = Header {
        room_id: 1,
        sender_id: examiner.self_id().unwrap(),
        seq: 1,
        timestamp_ms: 20,
    };
    ws_send(
        &mut e_ws,
        &encode(
            &forged,
            &Message::SlideCommand(SlideCommand { slide_index: 6 }),
        )
        .unwrap(),
    )
    .await;
    match ws_until(&mut e_ws, &mut examiner, MsgType::Reject).await {
        Message::Reject(r) => assert_eq!(r.code, RejectCode::AuthorityViolation),
        m => panic!("{m:?}"),
    }
    assert_eq!(examiner.view().slide_index(), 5);

    // Closing the socket is a leave.
    e_ws.close(None).await.unwrap();
    ws_until(&mut p_ws, &mut presenter, MsgType::Leave).await;
    assert_eq!(presenter.view().participants().len(), 1);
    server.shutdown().await;
}

#[tokio::test]
async fn websocket_unknown_room_is_rejected() {
    let server = net::start(ServerConfig::default(), any_port(), None, quiet())
        .await
        .unwrap();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}", server.ws_addr))
        .await
        .unwrap();
    let mut s = ClientSession::new(99, ClientConfig::default());
    ws_send(
        &mut ws,
        &s.join(Role::Audience, "A", "avatar:a", 0).unwrap(),
    )
    .await;
    let msg = timeout(WAIT, ws.next()).await.unwrap().unwrap().unwrap();
    let env = decode(&msg.into_data()).unwrap();
    assert!(matches!(env.message, Message::Reject(r) if r.code == RejectCode::UnknownRoom));
    server.shutdown().await;
}

async fn tcp_read_frame(stream: &mut TcpStream, buf: &mut Vec<u8>) -> Vec<u8> {
    loop {
        if let Some(n) = frame_len(buf).unwrap() {
            if buf.len() >= n {
                return buf.drain(..n).collect();
            }
        }
        let mut chunk = [0u8; 4096];
        let n = timeout(WAIT, stream.read(&mut chunk))
            .await
            .unwrap()
            .unwrap();
        assert!(n > 0, "server closed the stream");
        buf.extend_from_slice(&chunk[..n]);
    }
}

#[tokio::test]
async fn tcp_frames_survive_coalescing_and_splitting() {
    let server = net::start(
        ServerConfig::default(),
        any_port(),
        Some(any_port()),
        quiet(),
    )
    .await
    .unwrap();
    let addr = server.tcp_addr.unwrap();

    let mut p = TcpStream::connect(addr).await.unwrap();
    let mut presenter = ClientSession::new(1, ClientConfig::default());
    let join = presenter.join(Role::Presenter, "P", "avatar:p", 0).unwrap();
    // A frame split across two writes.
    p.write_all(&join[..10]).await.unwrap();
    p.flush().await.unwrap();
    tokio::time::sleep(Duration::from_millis(20)).await;
    p.write_all(&join[10..]).await.unwrap();
    let mut p_buf = Vec::new();
    let accept = tcp_read_frame(&mut p, &mut p_buf).await;
    presenter.receive(&accept).unwrap();
    assert!(presenter.self_id().is_some());

    let mut a = TcpStream::connect(addr).await.unwrap();
    let mut audience = ClientSession::new(1, ClientConfig::default());
    a.write_all(&audience.join(Role::Audience, "A", "avatar:a", 0).unwrap())
        .await
        .unwrap();
    let mut a_buf = Vec::new();
    audience
        .receive(&tcp_read_frame(&mut a, &mut a_buf).await)
        .unwrap();

    // Two frames in one write.
    let mut both = presenter.slide(2, 5).unwrap().to_vec();
    both.extend_from_slice(&presenter.slide(3, 6).unwrap());
    p.write_all(&both).await.unwrap();
    while audience.view().slide_index() != 3 {
        audience
            .receive(&tcp_read_frame(&mut a, &mut a_buf).await)
            .unwrap();
    }
    server.shutdown().await;
}

#[test]
fn harness_drives_a_live_server() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let server = rt
        .block_on(net::start(
            ServerConfig::default(),
            any_port(),
            None,
            quiet(),
        ))
        .unwrap();
    let mut port = WsPort::new(format!("ws://{}", server.ws_addr)).unwrap();
    let out = run_with(Scenario::Handshake, &ScenarioConfig::default(), &mut port).unwrap();
    let h = out.metrics.handshake.as_ref().unwrap();
    assert!(h.longest_contact_ms >= 1000, "{h:?}");
    assert!(out.metrics.passed(), "{:?}", out.metrics.failures());
    rt.block_on(server.shutdown());
}
