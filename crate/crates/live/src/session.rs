//! The simulation loop. One thread owns the executor; commands reach it over
//! a channel and frames leave through a watch channel.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use parkour_core::env::EnvError;
use parkour_core::scenario::{ParseError, Scenario};
use parkour_core::sim::{Executor, SimError, ThreadedPlanner};
use tokio::sync::{oneshot, watch};

use crate::protocol::{snapshot_frame, Command, Frame, FrameContext, RejectCode, Reply};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiveConfig {
    /// Frames per second pushed to each client.
    pub frame_rate: f64,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Track length for wrapped display; the course length when `None`.
    pub circumference: Option<f64>,
    pub start_paused: bool,
    pub recent_events: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            frame_rate: 60.0,
            speed: 1.0,
            circumference: None,
            start_paused: false,
            recent_events: 16,
        }
    }
}

pub const MAX_SPEED: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("the simulation loop has stopped")]
pub struct SessionClosed;

struct Request {
    command: Command,
    reply: oneshot::Sender<Reply>,
}

/// Cheap to clone; the loop stops once every handle is dropped.
#[derive(Clone)]
pub struct LiveHandle {
    requests: mpsc::Sender<Request>,
    frames: watch::Receiver<Arc<Frame>>,
    config: LiveConfig,
}

impl LiveHandle {
    pub async fn send(&self, command: Command) -> Result<Reply, SessionClosed> {
        let (reply, rx) = oneshot::channel();
        self.requests.send(Request { command, reply }).map_err(|_| SessionClosed)?;
        rx.await.map_err(|_| SessionClosed)
    }

    pub fn frames(&self) -> watch::Receiver<Arc<Frame>> {
        self.frames.clone()
    }

    pub fn latest(&self) -> Arc<Frame> {
        self.frames.borrow().clone()
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }
}

struct Session {
    scenario: Scenario,
    ex: Executor,
    ctx: FrameContext,
    frames: watch::Sender<Arc<Frame>>,
}

fn executor(scenario: &Scenario) -> Result<Executor, ParseError> {
    let mut ex = Executor::new(scenario, Box::new(ThreadedPlanner::new()))?;
    // A stuck leg waits for the course to be edited.
    ex.hold_on_stall(true);
    Ok(ex)
}

fn context(scenario: &Scenario, config: &LiveConfig, episode: u64) -> FrameContext {
    let env = &scenario.parkour;
    FrameContext {
        episode,
        x_g: scenario.x_g,
        paused: config.start_paused,
        speed: config.speed,
        circumference: config.circumference.unwrap_or(env.x_max() - env.x_min()),
        origin: env.x_min(),
        recent_events: config.recent_events,
    }
}

fn env_code(e: &EnvError) -> RejectCode {
    match e {
        EnvError::InvertedBounds { .. } => RejectCode::InvertedBounds,
        EnvError::OverlappingObstacles { .. } => RejectCode::OverlappingObstacles,
        EnvError::OutOfExtent { .. } | EnvError::PositionOutOfExtent { .. } => RejectCode::OutOfExtent,
        EnvError::NonPositiveHeight { .. } => RejectCode::NonPositiveHeight,
        EnvError::NonFinite { .. } => RejectCode::NonFinite,
        EnvError::DuplicateId(_) => RejectCode::DuplicateId,
        EnvError::UnknownId(_) => RejectCode::UnknownId,
        EnvError::InvalidMargin | EnvError::InvalidExtent => RejectCode::InvalidCourse,
    }
}

fn reject(e: SimError) -> Reply {
    let code = match &e {
        SimError::WrongPhase(_) => RejectCode::WrongPhase,
        SimError::FootCovered => RejectCode::FootCovered,
        SimError::Env(env) => env_code(env),
    };
    Reply::Reject {
        code,
        reason: e.to_string(),
    }
}

impl Session {
    fn publish(&self) {
        self.frames.send_replace(Arc::new(snapshot_frame(&self.ex, &self.ctx)));
    }

    fn ack(&self) -> Reply {
        Reply::Ack {
            version: self.ex.env_version(),
            episode: self.ctx.episode,
        }
    }

    fn handle(&mut self, command: Command, config: &LiveConfig) -> Reply {
        if let Some(update) = command.as_update() {
            return match self.ex.apply_update(&update) {
                Ok(_) => self.ack(),
                Err(e) => reject(e),
            };
        }
        match command {
            Command::Disturb { dvx, dvz } => match self.ex.inject_disturbance([dvx, dvz]) {
                Ok(()) => self.ack(),
                Err(e) => reject(e),
            },
            Command::Pause => {
                self.ctx.paused = true;
                self.ack()
            }
            Command::Resume => {
                self.ctx.paused = false;
                self.ack()
            }
            Command::SetSpeed { factor } => {
                if factor > 0.0 && factor <= MAX_SPEED {
                    self.ctx.speed = factor;
                    self.ack()
                } else {
                    Reply::Reject {
                        code: RejectCode::InvalidSpeed,
                        reason: format!("speed factor must be in (0, {MAX_SPEED}], got {factor}"),
                    }
                }
            }
            Command::Reset(next) => {
                let scenario = next.map(|s| *s).unwrap_or_else(|| self.scenario.clone());
                match executor(&scenario) {
                    Ok(ex) => {
                        let episode = self.ctx.episode + 1;
                        let (paused, speed) = (self.ctx.paused, self.ctx.speed);
                        self.ctx = FrameContext {
                            paused,
                            speed,
                            ..context(&scenario, config, episode)
                        };
                        self.ex = ex;
                        self.scenario = scenario;
                        self.ack()
                    }
                    Err(e) => Reply::Reject {
                        code: RejectCode::InvalidScenario,
                        reason: e.to_string(),
                    },
                }
            }
            _ => unreachable!("edits handled above"),
        }
    }
}

/// Start the simulation loop for `scenario` on its own thread.
pub fn spawn(scenario: Scenario, config: LiveConfig) -> Result<(LiveHandle, JoinHandle<()>), ParseError> {
    let ex = executor(&scenario)?;
    let ctx = context(&scenario, &config, 0);
    let (frames, frames_rx) = watch::channel(Arc::new(snapshot_frame(&ex, &ctx)));
    let (requests, rx) = mpsc::channel::<Request>();
    let mut session = Session {
        scenario,
        ex,
        ctx,
        frames,
    };
    let thread = thread::Builder::new()
        .name("parkour-sim".into())
        .spawn(move || {
            let mut next_tick = Instant::now();
            loop {
                let running = !session.ctx.paused && session.ex.outcome().is_none();
                let wait = if running {
                    next_tick.saturating_duration_since(Instant::now())
                } else {
                    Duration::from_millis(100)
                };
                match rx.recv_timeout(wait) {
                    Ok(req) => {
                        let reply = session.handle(req.command, &config);
                        session.publish();
                        let _ = req.reply.send(reply);
                        if !running {
                            next_tick = Instant::now();
                        }
                        continue;
                    }
                    Err(RecvTimeoutError::Disconnected) => break,
                    Err(RecvTimeoutError::Timeout) => {}
                }
                if !running {
                    next_tick = Instant::now();
                    continue;
                }
                session.ex.tick();
                session.publish();
                next_tick += Duration::from_secs_f64(session.ex.dt() / session.ctx.speed);
                // Drop ticks we can no longer catch up on instead of bursting.
                let now = Instant::now();
                if now > next_tick + Duration::from_millis(250) {
                    next_tick = now;
                }
            }
        })
        .expect("spawn simulation thread");
    Ok((
        LiveHandle {
            requests,
            frames: frames_rx,
            config,
        },
        thread,
    ))
}
