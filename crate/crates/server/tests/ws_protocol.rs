use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use eyeguide_core::dwell::DwellConfig;
use eyeguide_core::messenger::{Messenger, MessengerLayout, MessengerState, OutboundEvent, ALARM_ID, DEFAULT_TEMPLATES};
use eyeguide_core::protocol::{ClientMessage, ServerMessage};
use eyeguide_core::{Point, ScreenSize};
use eyeguide_server::{spawn, Hub, WS_PATH};
use futures::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn layout() -> MessengerLayout {
    let t: Vec<String> = DEFAULT_TEMPLATES.iter().map(|s| s.to_string()).collect();
    MessengerLayout::generate(ScreenSize::default(), &t).unwrap()
}

async fn connect(addr: SocketAddr) -> Client {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}{WS_PATH}")).await.unwrap();
    ws
}

async fn next(ws: &mut Client) -> ServerMessage {
    loop {
        let msg = timeout(Duration::from_secs(5), ws.next()).await.expect("message in time").unwrap().unwrap();
        if let Message::Text(t) = msg {
            assert!(t.ends_with('\n'), "messages are newline-terminated");
            return ServerMessage::decode(&t).unwrap();
        }
    }
}

async fn wait_for_clients(hub: &Arc<Hub>, n: usize) {
    for _ in 0..200 {
        if hub.client_count() == n {
            return;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("expected {n} clients, have {}", hub.client_count());
}

#[tokio::test]
async fn handshake_then_ordered_events() {
    let (hub, _pointer) = Hub::new(layout(), DwellConfig::default(), MessengerState::default());
    let server = spawn("127.0.0.1:0".parse().unwrap(), hub.clone(), None).await.unwrap();
    let mut ws = connect(server.addr).await;

    match next(&mut ws).await {
        ServerMessage::Layout { layout: l, dwell } => {
            assert_eq!(l.templates.len(), 10);
            assert_eq!(dwell, DwellConfig::default());
        }
        other => panic!("first message was {}", other.kind()),
    }
    assert_eq!(next(&mut ws).await, ServerMessage::StateSync { state: MessengerState::default() });
    wait_for_clients(&hub, 1).await;

    let mut m = Messenger::new(layout());
    hub.publish(m.click(ALARM_ID).unwrap());
    assert_eq!(next(&mut ws).await, ServerMessage::AlarmOn);
    match next(&mut ws).await {
        ServerMessage::StateSync { state } => assert!(state.alarm_active),
        other => panic!("expected state_sync, got {}", other.kind()),
    }

    for id in ["key:K", "key:E", "key:Y"] {
        hub.publish(m.click(id).unwrap());
    }
    let mut last = None;
    for _ in 0..3 {
        if let ServerMessage::StateSync { state } = next(&mut ws).await {
            last = Some(state);
        }
    }
    assert_eq!(last.unwrap().composed_text, "KEY");
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn pointer_override_reaches_the_core() {
    let (hub, mut pointer) = Hub::new(layout(), DwellConfig::default(), MessengerState::default());
    let server = spawn("127.0.0.1:0".parse().unwrap(), hub.clone(), None).await.unwrap();
    let mut ws = connect(server.addr).await;
    next(&mut ws).await;
    next(&mut ws).await;

    // anything other than a pointer override is ignored
    ws.send(Message::text(r#"{"type":"click","target_id":"speak"}"#)).await.unwrap();
    ws.send(Message::text(ClientMessage::PointerOverride { x: 12.0, y: 34.0 }.encode())).await.unwrap();
    let p = timeout(Duration::from_secs(5), pointer.recv()).await.unwrap().unwrap();
    assert_eq!(p, Point::new(12.0, 34.0));
    assert!(pointer.try_recv().is_err());
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn cursor_stream_is_throttled_per_client() {
    let (hub, _pointer) = Hub::new(layout(), DwellConfig::default(), MessengerState::default());
    let server = spawn("127.0.0.1:0".parse().unwrap(), hub.clone(), None).await.unwrap();
    let mut ws = connect(server.addr).await;
    next(&mut ws).await;
    next(&mut ws).await;
    wait_for_clients(&hub, 1).await;

    // 1000 samples at 120 Hz on a synthetic clock, then a marker
    let times: Vec<u64> = (0..1000u64).map(|i| i * 1000 / 120).collect();
    hub.publish(times.iter().map(|&t| OutboundEvent::Cursor { t, x: 1.0, y: 2.0, valid: true }));
    hub.publish([OutboundEvent::AlarmOn]);

    let mut sent = Vec::new();
    loop {
        match next(&mut ws).await {
            ServerMessage::Cursor { t, .. } => sent.push(t),
            ServerMessage::AlarmOn => break,
            other => panic!("unexpected {}", other.kind()),
        }
    }
    let span_s = (*times.last().unwrap() as f64 / 1000.0).ceil() as u64;
    for sec in 0..span_s {
        let n = sent.iter().filter(|&&t| t / 1000 == sec).count();
        assert!(n <= 60, "{n} cursor messages in second {sec}");
    }
    assert!(sent.windows(2).all(|w| w[0] < w[1]), "cursor updates are never reordered");
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn reconnect_after_restart_restores_state() {
    let (hub, _pointer) = Hub::new(layout(), DwellConfig::default(), MessengerState::default());
    let server = spawn("127.0.0.1:0".parse().unwrap(), hub.clone(), None).await.unwrap();
    let mut ws = connect(server.addr).await;
    next(&mut ws).await;
    next(&mut ws).await;
    wait_for_clients(&hub, 1).await;

    let mut m = Messenger::new(layout());
    for id in ["key:H", "key:I"] {
        hub.publish(m.click(id).unwrap());
    }
    next(&mut ws).await;
    next(&mut ws).await;
    let addr = server.addr;
    server.shutdown().await.unwrap();

    // the client sees its session end
    let end = timeout(Duration::from_secs(5), async {
        loop {
            match ws.next().await {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                Some(Ok(_)) => {}
            }
        }
    })
    .await;
    assert!(end.is_ok());

    let server = spawn(addr, hub.clone(), None).await.unwrap();
    let mut ws = connect(server.addr).await;
    assert_eq!(next(&mut ws).await.kind(), "layout");
    match next(&mut ws).await {
        ServerMessage::StateSync { state } => {
            assert_eq!(state.composed_text, "HI");
            assert_eq!(state, m.state().clone());
        }
        other => panic!("expected state_sync, got {}", other.kind()),
    }
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn serves_static_ui_assets() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<title>ui</title>").unwrap();
    let (hub, _pointer) = Hub::new(layout(), DwellConfig::default(), MessengerState::default());
    let server = spawn("127.0.0.1:0".parse().unwrap(), hub, Some(dir.path().to_path_buf())).await.unwrap();

    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut s = TcpStream::connect(server.addr).await.unwrap();
    s.write_all(b"GET /index.html HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut body = String::new();
    s.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.ends_with("<title>ui</title>"));
    server.shutdown().await.unwrap();
}
