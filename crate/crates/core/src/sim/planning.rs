//! Where the executor gets its plans from: inline for batch runs, a worker
//! thread for live runs.

use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::thread;

use crate::env::Parkour;
use crate::leg::JumpGeometry;
use crate::mppc::{mppc_step, MppcConfig, MppcResult};
use crate::planner::{PlanError, SolverConfig};

/// Snapshot handed to the planner at the start of a stance.
#[derive(Debug, Clone)]
pub struct PlanRequest {
    pub env: Parkour,
    pub geometry: JumpGeometry,
    pub x_s: f64,
    pub config: MppcConfig,
    pub solver: SolverConfig,
}

impl PlanRequest {
    pub fn solve(&self) -> Result<MppcResult, PlanError> {
        mppc_step(&self.env, &self.geometry, self.x_s, &self.config, &self.solver)
    }
}

pub trait PlanSource: Send {
    /// Start planning; replaces any request still in progress.
    fn request(&mut self, request: PlanRequest);
    /// The finished result, once. `None` while planning or idle.
    fn poll(&mut self) -> Option<Result<MppcResult, PlanError>>;
}

/// Solves inside `request`; the result is available on the next poll.
#[derive(Debug, Default)]
pub struct InlinePlanner {
    ready: Option<Result<MppcResult, PlanError>>,
}

impl InlinePlanner {
    pub fn new() -> Self {
        Self::default()
    }
}

impl PlanSource for InlinePlanner {
    fn request(&mut self, request: PlanRequest) {
        self.ready = Some(request.solve());
    }

    fn poll(&mut self) -> Option<Result<MppcResult, PlanError>> {
        self.ready.take()
    }
}

/// Solves on a background thread. A result arriving for a superseded
/// request is dropped.
#[derive(Debug, Default)]
pub struct ThreadedPlanner {
    pending: Option<Receiver<Result<MppcResult, PlanError>>>,
}

impl ThreadedPlanner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_busy(&self) -> bool {
        self.pending.is_some()
    }
}

impl PlanSource for ThreadedPlanner {
    fn request(&mut self, request: PlanRequest) {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let _ = tx.send(request.solve());
        });
        self.pending = Some(rx);
    }

    fn poll(&mut self) -> Option<Result<MppcResult, PlanError>> {
        let rx = self.pending.as_ref()?;
        match rx.try_recv() {
            Ok(r) => {
                self.pending = None;
                Some(r)
            }
            Err(TryRecvError::Empty) => None,
            Err(TryRecvError::Disconnected) => {
                self.pending = None;
                Some(Err(PlanError::Infeasible("planner thread exited".into())))
            }
        }
    }
}
