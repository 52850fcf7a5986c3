//! HTTP front: the viewer page on `/` and one websocket per client on `/ws`.

use std::net::SocketAddr;
use std::time::Duration;

use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use crate::protocol::{ClientMessage, RejectCode, Reply, ServerMessage};
use crate::session::LiveHandle;

/// Overrides the bind address, e.g. `0.0.0.0:9000`.
pub const BIND_ENV: &str = "PARKOUR_BIND";
pub const DEFAULT_PORT: u16 = 8080;

const INDEX_HTML: &str = include_str!("../static/index.html");

/// `PARKOUR_BIND` if set and valid, otherwise localhost on `port`.
pub fn bind_addr(port: Option<u16>) -> Result<SocketAddr, String> {
    match std::env::var(BIND_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|e| format!("{BIND_ENV}={v:?} is not a socket address: {e}")),
        _ => Ok(SocketAddr::from(([127, 0, 0, 1], port.unwrap_or(DEFAULT_PORT)))),
    }
}

pub fn router(handle: LiveHandle) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/ws", get(upgrade))
        .with_state(handle)
}

pub async fn serve(listener: TcpListener, handle: LiveHandle) -> std::io::Result<()> {
    axum::serve(listener, router(handle)).await
}

async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

async fn upgrade(ws: WebSocketUpgrade, State(handle): State<LiveHandle>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, handle))
}

fn encode(msg: &ServerMessage) -> Message {
    Message::Text(Utf8Bytes::from(serde_json::to_string(msg).expect("message serializes")))
}

/// Pull an `id` out of a message that failed to parse, so the rejection can
/// still be matched to its request.
fn salvage_id(text: &str) -> Option<u64> {
    serde_json::from_str::<serde_json::Value>(text)
        .ok()?
        .get("id")?
        .as_u64()
}

async fn client(socket: WebSocket, handle: LiveHandle) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<ServerMessage>();
    let mut frames = handle.frames();
    let period = Duration::from_secs_f64(1.0 / handle.config().frame_rate.max(1.0));

    let writer = tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        frames.mark_changed();
        loop {
            tokio::select! {
                msg = out_rx.recv() => {
                    let Some(msg) = msg else { break };
                    if sink.send(encode(&msg)).await.is_err() {
                        break;
                    }
                }
                _ = interval.tick() => {
                    match frames.has_changed() {
                        Ok(true) => {}
                        Ok(false) => continue,
                        Err(_) => break,
                    }
                    let frame = (**frames.borrow_and_update()).clone();
                    if sink.send(encode(&ServerMessage::frame(frame))).await.is_err() {
                        break;
                    }
                }
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<ClientMessage>(&text) {
            Ok(m) => match handle.send(m.command).await {
                Ok(reply) => ServerMessage::reply(reply, m.id),
                Err(e) => ServerMessage::reply(
                    Reply::Reject {
                        code: RejectCode::SessionClosed,
                        reason: e.to_string(),
                    },
                    m.id,
                ),
            },
            Err(e) => ServerMessage::reply(
                Reply::Reject {
                    code: RejectCode::InvalidMessage,
                    reason: e.to_string(),
                },
                salvage_id(&text),
            ),
        };
        if out_tx.send(reply).is_err() {
            break;
        }
    }
    drop(out_tx);
    let _ = writer.await;
}
