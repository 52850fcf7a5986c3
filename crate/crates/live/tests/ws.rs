//! Scripted websocket clients against a live server.

use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use parkour_core::env::{Obstacle, Parkour, ParkourSpec};
use parkour_core::scenario::Scenario;
use parkour_core::sim::{EventKind, Outcome, Phase};
use parkour_live::{spawn, LiveConfig, RejectCode, ServerMessage, ServerPayload};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(scenario: Scenario, config: LiveConfig) -> String {
    let (handle, _) = spawn(scenario, config).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(parkour_live::serve(listener, handle));
    format!("127.0.0.1:{}", addr.port())
}

async fn connect(addr: &str) -> Socket {
    connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn next_message(ws: &mut Socket) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("server went quiet")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Send `msg` and wait for the reply carrying its id; frames in between are
/// skipped. Returns the reply and the round-trip time.
async fn request(ws: &mut Socket, msg: Value) -> (ServerPayload, Duration) {
    let id = msg["id"].as_u64();
    let sent = Instant::now();
    ws.send(Message::Text(msg.to_string().into())).await.unwrap();
    loop {
        let m = next_message(ws).await;
        if !matches!(m.payload, ServerPayload::Frame(_)) && m.id == id {
            return (m.payload, sent.elapsed());
        }
    }
}

async fn frame_where(ws: &mut Socket, pred: impl Fn(&parkour_live::Frame) -> bool) -> parkour_live::Frame {
    loop {
        if let ServerPayload::Frame(f) = next_message(ws).await.payload {
            if pred(&f) {
                return *f;
            }
        }
    }
}

fn course() -> Scenario {
    let parkour = Parkour::new(ParkourSpec {
        obstacles: vec![
            Obstacle::new("o1", 1.0, 1.2, 0.1),
            Obstacle::new("o2", 4.7, 4.9, 0.1),
        ],
        ..ParkourSpec::flat(0.0, 5.0)
    })
    .unwrap();
    Scenario {
        parkour,
        x_g: 4.5,
        ..Scenario::flat(0.0, 5.0)
    }
}

fn paused() -> LiveConfig {
    LiveConfig {
        start_paused: true,
        ..Default::default()
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn index_page_is_served() {
    let addr = start(course(), paused()).await;
    let mut tcp = TcpStream::connect(&addr).await.unwrap();
    tcp.write_all(b"GET / HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut body = String::new();
    tcp.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"));
    assert!(body.contains("text/html"));
    assert!(body.contains("/ws"));
}

#[tokio::test(flavor = "multi_thread")]
async fn frames_stream_at_the_configured_rate() {
    let addr = start(course(), LiveConfig::default()).await;
    let mut ws = connect(&addr).await;
    let first = frame_where(&mut ws, |_| true).await;
    assert_eq!(first.terrain.version, 0);
    assert_eq!(first.schema_version, parkour_core::scenario::SCHEMA_VERSION);
    let start = Instant::now();
    let mut count = 0;
    while start.elapsed() < Duration::from_millis(1000) {
        if let ServerPayload::Frame(_) = next_message(&mut ws).await.payload {
            count += 1;
        }
    }
    assert!((40..=70).contains(&count), "{count} frames in one second");
}

#[tokio::test(flavor = "multi_thread")]
async fn edits_are_acked_or_rejected() {
    let addr = start(course(), paused()).await;
    let mut ws = connect(&addr).await;

    let (reply, rtt) = request(
        &mut ws,
        json!({"type": "MoveObstacle", "payload": {"id": "o1", "A": 1.5, "B": 1.8, "H": 0.12}, "id": 1}),
    )
    .await;
    assert_eq!(reply, ServerPayload::Ack { version: 1, episode: 0 });
    assert!(rtt < Duration::from_millis(50), "ack took {rtt:?}");
    let f = frame_where(&mut ws, |f| f.terrain.version >= 1).await;
    let o1 = f.terrain.parkour.obstacle("o1").unwrap();
    assert_eq!((o1.front, o1.back, o1.height), (1.5, 1.8, 0.12));

    let (reply, _) = request(
        &mut ws,
        json!({"type": "MoveObstacle", "payload": {"id": "o1", "A": 4.6, "B": 4.8, "H": 0.1}, "id": 2}),
    )
    .await;
    assert!(matches!(reply, ServerPayload::Reject { code: RejectCode::OverlappingObstacles, .. }), "{reply:?}");

    let (reply, _) = request(&mut ws, json!({"type": "Disturb", "payload": {"dvx": -0.3, "dvz": 0.0}, "id": 3})).await;
    assert!(matches!(reply, ServerPayload::Reject { code: RejectCode::WrongPhase, .. }), "{reply:?}");

    let (reply, _) = request(&mut ws, json!({"type": "RemoveObstacle", "payload": {"id": "o9"}, "id": 4})).await;
    assert!(matches!(reply, ServerPayload::Reject { code: RejectCode::UnknownId, .. }));

    let (reply, _) = request(&mut ws, json!({"type": "SetSpeed", "payload": {"factor": 0.0}, "id": 5})).await;
    assert!(matches!(reply, ServerPayload::Reject { code: RejectCode::InvalidSpeed, .. }));

    let (reply, _) = request(&mut ws, json!({"type": "Fly", "id": 6})).await;
    assert!(matches!(reply, ServerPayload::Reject { code: RejectCode::InvalidMessage, .. }));

    // Nothing rejected moved the version.
    let (reply, _) = request(&mut ws, json!({"type": "Pause", "id": 7})).await;
    assert_eq!(reply, ServerPayload::Ack { version: 1, episode: 0 });
}

#[tokio::test(flavor = "multi_thread")]
async fn pause_holds_time_and_reset_starts_over() {
    let addr = start(course(), LiveConfig::default()).await;
    let mut ws = connect(&addr).await;
    frame_where(&mut ws, |f| f.t > 0.1).await;
    request(&mut ws, json!({"type": "Pause", "id": 1})).await;
    let a = frame_where(&mut ws, |f| f.paused).await;
    tokio::time::sleep(Duration::from_millis(150)).await;
    request(&mut ws, json!({"type": "Pause", "id": 2})).await;
    let b = frame_where(&mut ws, |f| f.paused).await;
    assert_eq!(a.t, b.t);

    request(&mut ws, json!({"type": "AddObstacle", "payload": {"id": "o3", "A": 2.5, "B": 2.7, "H": 0.1}, "id": 3})).await;
    let (reply, _) = request(&mut ws, json!({"type": "Reset", "id": 4})).await;
    assert_eq!(reply, ServerPayload::Ack { version: 0, episode: 1 });
    let f = frame_where(&mut ws, |f| f.episode == 1).await;
    assert_eq!(f.t, 0.0);
    assert!(f.terrain.parkour.obstacle("o3").is_none());

    let other = Scenario::flat(0.0, 2.0);
    let (reply, _) = request(&mut ws, json!({"type": "Reset", "payload": other, "id": 5})).await;
    assert_eq!(reply, ServerPayload::Ack { version: 0, episode: 2 });
    let f = frame_where(&mut ws, |f| f.episode == 2).await;
    assert_eq!(f.terrain.parkour, other.parkour);
    let length = other.parkour.x_max() - other.parkour.x_min();
    assert_eq!(f.display.circumference, length);
}

/// Move an obstacle into the path while the leg is in the air: the edit is
/// acknowledged quickly, the next stance plans around it, and the episode
/// still ends at the goal.
#[tokio::test(flavor = "multi_thread")]
async fn live_edit_changes_the_next_plan() {
    let addr = start(
        course(),
        LiveConfig {
            speed: 4.0,
            ..Default::default()
        },
    )
    .await;
    let mut ws = connect(&addr).await;
    frame_where(&mut ws, |f| f.phase == Phase::Flight && f.jumps == 1).await;
    let (reply, rtt) = request(
        &mut ws,
        json!({"type": "MoveObstacle", "payload": {"id": "o2", "A": 1.9, "B": 2.15, "H": 0.12}, "id": 1}),
    )
    .await;
    assert!(matches!(reply, ServerPayload::Ack { version: 1, .. }), "{reply:?}");
    assert!(rtt < Duration::from_millis(50), "ack took {rtt:?}");

    let f = frame_where(&mut ws, |f| f.jumps == 2).await;
    assert_eq!(f.terrain.version, 1);
    let crossing = f
        .plan
        .iter()
        .flat_map(|arc| arc.points.iter())
        .filter(|p| (1.9..=2.15).contains(&p[0]))
        .collect::<Vec<_>>();
    assert!(!crossing.is_empty(), "replanned window should reach the moved obstacle: {:?}", f.plan.iter().map(|a| (a.takeoff, a.landing)).collect::<Vec<_>>());
    for p in crossing {
        assert!(p[1] >= 0.12 - 1e-6, "planned foot at {p:?} inside the moved obstacle");
    }
    let end = frame_where(&mut ws, |f| f.outcome.is_some()).await;
    assert_eq!(end.outcome, Some(Outcome::GoalReached));
}

/// A course the leg cannot get past holds it in Staging until a client
/// lowers the obstacle.
#[tokio::test(flavor = "multi_thread")]
async fn blocked_leg_waits_for_an_edit() {
    let parkour = Parkour::new(ParkourSpec {
        obstacles: vec![Obstacle::new("wall", 0.6, 0.8, 2.0)],
        ..ParkourSpec::flat(0.0, 2.0)
    })
    .unwrap();
    let scenario = Scenario {
        parkour,
        x_g: 1.6,
        ..Scenario::flat(0.0, 2.0)
    };
    let addr = start(
        scenario,
        LiveConfig {
            speed: 4.0,
            ..Default::default()
        },
    )
    .await;
    let mut ws = connect(&addr).await;
    let stuck = frame_where(&mut ws, |f| {
        f.events.iter().any(|e| matches!(e.kind, EventKind::PlanFailed { .. }))
    })
    .await;
    assert_eq!(stuck.phase, Phase::Staging);
    let later = frame_where(&mut ws, |f| f.t > stuck.t + 1.0).await;
    assert_eq!((later.phase, later.outcome), (Phase::Staging, None));

    let (reply, _) = request(
        &mut ws,
        json!({"type": "MoveObstacle", "payload": {"id": "wall", "A": 0.6, "B": 0.8, "H": 0.1}, "id": 1}),
    )
    .await;
    assert!(matches!(reply, ServerPayload::Ack { version: 1, .. }), "{reply:?}");
    let end = frame_where(&mut ws, |f| f.outcome.is_some()).await;
    assert_eq!(end.outcome, Some(Outcome::GoalReached));
}
