//! WebSocket endpoint for the companion UI.
//!
//! The messenger core runs elsewhere and publishes its outbound events to a
//! [`Hub`]. Each connected client gets the layout and current state on
//! connect, then every published message in order, with cursor updates
//! throttled per client. The only inbound message is a pointer override,
//! forwarded to the core through the receiver returned by [`Hub::new`].

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use eyeguide_core::dwell::DwellConfig;
use eyeguide_core::messenger::{MessengerLayout, MessengerState, OutboundEvent};
use eyeguide_core::protocol::{ClientMessage, ServerMessage, UiSession};
use eyeguide_core::Point;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

pub const WS_PATH: &str = "/ws";
const CHANNEL_CAPACITY: usize = 1024;

struct Snapshot {
    layout: MessengerLayout,
    dwell: DwellConfig,
    state: MessengerState,
}

/// Fan-out point between the single core owner and UI connections.
pub struct Hub {
    snapshot: Mutex<Snapshot>,
    tx: broadcast::Sender<ServerMessage>,
    pointer: mpsc::UnboundedSender<Point>,
}

impl Hub {
    /// Returns the hub and the stream of pointer overrides from clients.
    pub fn new(
        layout: MessengerLayout,
        dwell: DwellConfig,
        state: MessengerState,
    ) -> (Arc<Self>, mpsc::UnboundedReceiver<Point>) {
        let (tx, _) = broadcast::channel(CHANNEL_CAPACITY);
        let (pointer, rx) = mpsc::unbounded_channel();
        (Arc::new(Self { snapshot: Mutex::new(Snapshot { layout, dwell, state }), tx, pointer }), rx)
    }

    /// Publishes core events in order. State syncs also update the snapshot
    /// that new connections start from.
    pub fn publish<I: IntoIterator<Item = OutboundEvent>>(&self, events: I) {
        let mut snap = self.snapshot.lock().expect("hub lock");
        for e in events {
            if let OutboundEvent::StateSync { state } = &e {
                snap.state = state.clone();
            }
            // no receivers is fine: nobody is connected
            let _ = self.tx.send(e.into());
        }
    }

    pub fn state(&self) -> MessengerState {
        self.snapshot.lock().expect("hub lock").state.clone()
    }

    pub fn client_count(&self) -> usize {
        self.tx.receiver_count()
    }

    /// Handshake messages plus a receiver positioned right after them.
    fn subscribe(&self, session: &mut UiSession) -> (Vec<ServerMessage>, broadcast::Receiver<ServerMessage>) {
        let snap = self.snapshot.lock().expect("hub lock");
        let rx = self.tx.subscribe();
        (session.handshake(&snap.layout, &snap.dwell, &snap.state), rx)
    }
}

#[derive(Clone)]
struct AppState {
    hub: Arc<Hub>,
    closing: watch::Receiver<bool>,
}

/// Routes for the protocol endpoint and optional static assets. Sessions end
/// when `closing` turns true.
pub fn router(hub: Arc<Hub>, ui_dir: Option<PathBuf>, closing: watch::Receiver<bool>) -> Router {
    let r = Router::new().route(WS_PATH, get(ws_handler)).with_state(AppState { hub, closing });
    match ui_dir {
        Some(dir) => r.fallback_service(ServeDir::new(dir)),
        None => r,
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(app): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client_session(socket, app.hub, app.closing))
}

async fn send(sink: &mut futures::stream::SplitSink<WebSocket, Message>, msg: &ServerMessage) -> bool {
    sink.send(Message::Text(msg.encode().into())).await.is_ok()
}

async fn client_session(socket: WebSocket, hub: Arc<Hub>, mut closing: watch::Receiver<bool>) {
    let (mut sink, mut stream) = socket.split();
    let mut session = UiSession::new();
    let (hello, mut rx) = hub.subscribe(&mut session);
    for m in &hello {
        if !send(&mut sink, m).await {
            return;
        }
    }
    log::info!("ui client connected");
    loop {
        tokio::select! {
            _ = async { closing.wait_for(|c| *c).await.map(|_| ()) } => {
                let _ = sink.send(Message::Close(None)).await;
                break;
            }
            msg = rx.recv() => match msg {
                Ok(m) => {
                    if let Some(m) = session.forward(m) {
                        if !send(&mut sink, &m).await {
                            break;
                        }
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("ui client lagged by {n} messages, resyncing state");
                    let sync = ServerMessage::StateSync { state: hub.state() };
                    if !send(&mut sink, &sync).await {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            inbound = stream.next() => match inbound {
                Some(Ok(Message::Text(text))) => match ClientMessage::decode(&text) {
                    Ok(m) => {
                        let _ = hub.pointer.send(m.point());
                    }
                    Err(e) => log::warn!("ignoring client message: {e}"),
                },
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    log::info!("ui client disconnected");
}

/// A running server. Dropping the handle leaves it running; call
/// [`Self::shutdown`] to disconnect clients and stop.
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: oneshot::Sender<()>,
    closing: watch::Sender<bool>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub async fn shutdown(self) -> std::io::Result<()> {
        let _ = self.closing.send(true);
        let _ = self.stop.send(());
        self.task.await.unwrap_or_else(|e| Err(std::io::Error::other(e)))
    }
}

/// Binds `addr` (port 0 picks a free port) and serves until shut down.
pub async fn spawn(addr: SocketAddr, hub: Arc<Hub>, ui_dir: Option<PathBuf>) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = oneshot::channel::<()>();
    let (closing, closing_rx) = watch::channel(false);
    let app = router(hub, ui_dir, closing_rx);
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    log::info!("serving ui protocol on ws://{addr}{WS_PATH}");
    Ok(ServerHandle { addr, stop, closing, task })
}
