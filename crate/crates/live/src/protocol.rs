//! Wire messages. Every message is one JSON object `{type, payload, id}`;
//! `payload` and `id` may be omitted where they carry nothing.

use parkour_core::env::EnvironmentUpdate;
use parkour_core::leg::LegParams;
use parkour_core::planner::JumpSpec;
use parkour_core::scenario::{Scenario, SCHEMA_VERSION};
use parkour_core::sim::{EventKind, Executor, Outcome, Phase};
use parkour_core::trace::foot_arc;
use serde::{Deserialize, Serialize};

/// Samples per planned arc in a frame.
pub const ARC_SAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", deny_unknown_fields)]
pub enum Command {
    MoveObstacle {
        id: String,
        #[serde(rename = "A")]
        front: f64,
        #[serde(rename = "B")]
        back: f64,
        #[serde(rename = "H")]
        height: f64,
    },
    AddObstacle {
        id: String,
        #[serde(rename = "A")]
        front: f64,
        #[serde(rename = "B")]
        back: f64,
        #[serde(rename = "H")]
        height: f64,
    },
    RemoveObstacle {
        id: String,
    },
    SetRestrictedArea {
        id: String,
        #[serde(rename = "a")]
        start: f64,
        #[serde(rename = "b")]
        end: f64,
    },
    RemoveRestrictedArea {
        id: String,
    },
    Disturb {
        dvx: f64,
        dvz: f64,
    },
    Pause,
    Resume,
    Reset(#[serde(default)] Option<Box<Scenario>>),
    SetSpeed {
        factor: f64,
    },
}

impl Command {
    /// The course edit this command makes, if any.
    pub fn as_update(&self) -> Option<EnvironmentUpdate> {
        Some(match self.clone() {
            Command::MoveObstacle { id, front, back, height } => EnvironmentUpdate::MoveObstacle { id, front, back, height },
            Command::AddObstacle { id, front, back, height } => EnvironmentUpdate::AddObstacle { id, front, back, height },
            Command::RemoveObstacle { id } => EnvironmentUpdate::RemoveObstacle { id },
            Command::SetRestrictedArea { id, start, end } => EnvironmentUpdate::SetRestrictedArea { id, start, end },
            Command::RemoveRestrictedArea { id } => EnvironmentUpdate::RemoveRestrictedArea { id },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    #[serde(flatten)]
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectCode {
    InvalidMessage,
    InvalidScenario,
    InvalidSpeed,
    WrongPhase,
    FootCovered,
    InvertedBounds,
    OverlappingObstacles,
    OutOfExtent,
    NonPositiveHeight,
    NonFinite,
    DuplicateId,
    UnknownId,
    InvalidCourse,
    SessionClosed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum Reply {
    /// `version` is the terrain version once the command has been applied.
    Ack { version: u64, episode: u64 },
    Reject { code: RejectCode, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum ServerPayload {
    Frame(Box<Frame>),
    Ack { version: u64, episode: u64 },
    Reject { code: RejectCode, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    #[serde(flatten)]
    pub payload: ServerPayload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
}

impl ServerMessage {
    pub fn frame(frame: Frame) -> Self {
        Self {
            payload: ServerPayload::Frame(Box::new(frame)),
            id: None,
        }
    }

    pub fn reply(reply: Reply, id: Option<u64>) -> Self {
        let payload = match reply {
            Reply::Ack { version, episode } => ServerPayload::Ack { version, episode },
            Reply::Reject { code, reason } => ServerPayload::Reject { code, reason },
        };
        Self { payload, id }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub version: u64,
    pub parkour: parkour_core::env::Parkour,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanArc {
    pub takeoff: [f64; 2],
    pub landing: [f64; 2],
    pub t: f64,
    pub v: f64,
    pub theta: f64,
    /// Foot path from lift-off, where the leg is fully extended, to landing.
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEvent {
    /// Position in the episode log.
    pub seq: usize,
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// `x` coordinates folded onto a circular track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Display {
    pub circumference: f64,
    pub hip_x: f64,
    pub foot_x: f64,
    pub knee_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub schema_version: u32,
    /// Incremented by every reset.
    pub episode: u64,
    pub t: f64,
    pub phase: Phase,
    pub hip: [f64; 2],
    pub hip_velocity: [f64; 2],
    pub foot: [f64; 2],
    pub knee: [f64; 2],
    pub jumps: usize,
    pub x_g: f64,
    pub terrain: Terrain,
    pub plan: Vec<PlanArc>,
    pub events: Vec<FrameEvent>,
    pub outcome: Option<Outcome>,
    pub paused: bool,
    pub speed: f64,
    pub display: Display,
}

/// Run state that lives outside the executor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameContext {
    pub episode: u64,
    pub x_g: f64,
    pub paused: bool,
    pub speed: f64,
    pub circumference: f64,
    /// Start of the track for wrapping.
    pub origin: f64,
    /// How many trailing log events to include.
    pub recent_events: usize,
}

/// Fold `x` onto `[origin, origin + circumference)`.
pub fn wrap_x(x: f64, origin: f64, circumference: f64) -> f64 {
    if circumference > 0.0 {
        origin + (x - origin).rem_euclid(circumference)
    } else {
        x
    }
}

fn arcs(plan: &[JumpSpec], leg: &LegParams) -> Vec<PlanArc> {
    plan.iter()
        .map(|j| PlanArc {
            takeoff: j.takeoff,
            landing: j.landing,
            t: j.t,
            v: j.v,
            theta: j.theta,
            points: foot_arc(j, leg.g, ARC_SAMPLES),
        })
        .collect()
}

/// Project the executor's state and course into a frame.
pub fn snapshot_frame(ex: &Executor, ctx: &FrameContext) -> Frame {
    let s = ex.state();
    let leg = ex.leg();
    let log = ex.log();
    let plan = match &s.pending_plan {
        Some(r) => &r.full_plan.jumps[..],
        None => log.jumps.last().map(|j| &j.plan.jumps[..]).unwrap_or(&[]),
    };
    let foot = s.foot(leg);
    let knee = s.knee(leg);
    let first = log.events.len().saturating_sub(ctx.recent_events);
    let wrap = |x| wrap_x(x, ctx.origin, ctx.circumference);
    Frame {
        schema_version: SCHEMA_VERSION,
        episode: ctx.episode,
        t: s.time,
        phase: s.phase,
        hip: s.hip,
        hip_velocity: s.hip_velocity,
        foot,
        knee,
        jumps: s.jumps,
        x_g: ctx.x_g,
        terrain: Terrain {
            version: ex.env_version(),
            parkour: ex.env().clone(),
        },
        plan: arcs(plan, leg),
        events: log.events[first..]
            .iter()
            .enumerate()
            .map(|(i, e)| FrameEvent {
                seq: first + i,
                t: e.t,
                kind: e.kind.clone(),
            })
            .collect(),
        outcome: ex.outcome(),
        paused: ctx.paused,
        speed: ctx.speed,
        display: Display {
            circumference: ctx.circumference,
            hip_x: wrap(s.hip[0]),
            foot_x: wrap(foot[0]),
            knee_x: wrap(knee[0]),
        },
    }
}
