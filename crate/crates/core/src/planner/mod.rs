//! Minimum-flight-time impulse planning over a parkour window.
//!
//! A plan is a sequence of ballistic jumps, each fully described by its air
//! time, take-off speed and take-off angle. Because every take-off angle is
//! below vertical, landings progress monotonically in `x`, so the binary
//! "which side of each obstacle edge" variables collapse into a choice of
//! landing interval per jump. [`plan_jumps`] searches those choices with
//! branch-and-bound and solves a smooth bound-constrained program at every
//! leaf.

mod dynamics;
pub mod nlp;
pub mod oracle;
mod residuals;
mod search;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::env::{LandingInterval, Obstacle, Parkour, RestrictedArea};
use crate::leg::JumpGeometry;

pub use dynamics::{
    clearance_heights, initial_guess, jump_offsets, rollout, velocity_components, Clearance,
    Landing,
};
pub use residuals::{
    constraint_residuals, objective, Block, BlockKind, BlockName, Residuals, Row,
};
pub use search::{plan_jumps, plan_jumps_until, seed_for_assignment, solve_assignment};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("no feasible jump sequence: {0}")]
    Infeasible(String),
    #[error("inner solver hit its iteration limit without a conclusive answer")]
    IterationLimit,
    #[error("branch-and-bound node limit of {0} reached")]
    NodeLimit(usize),
    #[error("time budget ran out before any plan was found")]
    TimeLimit,
    #[error("jump needs forward horizontal velocity")]
    NoForwardProgress,
    #[error("invalid planner input: {0}")]
    InvalidInput(String),
}

fn deg(d: f64) -> f64 {
    d.to_radians()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub t_min: f64,
    pub t_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Radians.
    pub theta_min: f64,
    /// Radians.
    pub theta_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            t_min: 0.1,
            t_max: 2.0,
            v_min: 0.5,
            v_max: 3.5,
            theta_min: deg(45.0),
            theta_max: deg(85.0),
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), PlanError> {
        let ok = 0.0 < self.t_min
            && self.t_min < self.t_max
            && 0.0 < self.v_min
            && self.v_min < self.v_max
            && 0.0 < self.theta_min
            && self.theta_min < self.theta_max
            && self.theta_max < std::f64::consts::FRAC_PI_2;
        if ok && [self.t_max, self.v_max].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(PlanError::InvalidInput(format!("inconsistent limits {self:?}")))
        }
    }

    pub(crate) fn lower(&self) -> [f64; 3] {
        [self.t_min, self.v_min, self.theta_min]
    }

    pub(crate) fn upper(&self) -> [f64; 3] {
        [self.t_max, self.v_max, self.theta_max]
    }
}

/// Per-jump continuous decision variables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionVars {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

impl DecisionVars {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Interleaved `[t1, v1, θ1, t2, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        (0..self.len())
            .flat_map(|n| [self.t[n], self.v[n], self.theta[n]])
            .collect()
    }

    pub fn from_flat(y: &[f64]) -> Self {
        let mut vars = DecisionVars::default();
        for chunk in y.chunks_exact(3) {
            vars.t.push(chunk[0]);
            vars.v.push(chunk[1]);
            vars.theta.push(chunk[2]);
        }
        vars
    }

    pub fn within(&self, limits: &Limits, tol: f64) -> bool {
        let inside = |x: f64, lo: f64, hi: f64| x >= lo - tol && x <= hi + tol;
        (0..self.len()).all(|n| {
            inside(self.t[n], limits.t_min, limits.t_max)
                && inside(self.v[n], limits.v_min, limits.v_max)
                && inside(self.theta[n], limits.theta_min, limits.theta_max)
        })
    }
}

/// Which side of every obstacle edge each landing lies on.
///
/// Row `n` belongs to the landing of jump `n + 1`; `start_*` describe the
/// take-off point of the first jump.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryAssignment {
    pub delta_a: Vec<Vec<bool>>,
    pub delta_b: Vec<Vec<bool>>,
    pub start_a: Vec<bool>,
    pub start_b: Vec<bool>,
}

impl BinaryAssignment {
    /// Beyond-front is `x ≥ A` and beyond-back is `x > B`, matching closed
    /// obstacle tops.
    pub fn side_of(obstacles: &[Obstacle], x: f64) -> (Vec<bool>, Vec<bool>) {
        (
            obstacles.iter().map(|o| x >= o.front).collect(),
            obstacles.iter().map(|o| x > o.back).collect(),
        )
    }

    pub fn from_positions(obstacles: &[Obstacle], start: f64, landings: &[f64]) -> Self {
        let (start_a, start_b) = Self::side_of(obstacles, start);
        let mut out = BinaryAssignment {
            start_a,
            start_b,
            ..Default::default()
        };
        for &x in landings {
            let (a, b) = Self::side_of(obstacles, x);
            out.delta_a.push(a);
            out.delta_b.push(b);
        }
        out
    }

    /// Derived from landing intervals (using each interval's midpoint).
    pub fn from_intervals(obstacles: &[Obstacle], start: f64, intervals: &[LandingInterval]) -> Self {
        let mids: Vec<f64> = intervals.iter().map(|i| 0.5 * (i.lo + i.hi)).collect();
        Self::from_positions(obstacles, start, &mids)
    }

    pub fn jumps(&self) -> usize {
        self.delta_a.len()
    }

    pub(crate) fn prev_a(&self, n: usize, k: usize) -> bool {
        if n == 0 {
            self.start_a[k]
        } else {
            self.delta_a[n - 1][k]
        }
    }

    pub(crate) fn prev_b(&self, n: usize, k: usize) -> bool {
        if n == 0 {
            self.start_b[k]
        } else {
            self.delta_b[n - 1][k]
        }
    }

    /// Both matrices are non-decreasing along jumps and back implies front.
    pub fn is_monotone(&self) -> bool {
        let k_count = self.start_a.len();
        (0..self.jumps()).all(|n| {
            (0..k_count).all(|k| {
                (!self.delta_b[n][k] || self.delta_a[n][k])
                    && (self.delta_a[n][k] || !self.prev_a(n, k))
                    && (self.delta_b[n][k] || !self.prev_b(n, k))
            })
        })
    }
}

/// Everything a single planning call needs: geometry, start, target and the
/// obstacles/areas between start and target.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningWindow {
    pub geometry: JumpGeometry,
    pub limits: Limits,
    pub x_s: f64,
    pub z_s: f64,
    pub x_t: f64,
    pub obstacles: Vec<Obstacle>,
    pub areas: Vec<RestrictedArea>,
    pub margin_h: f64,
    pub margin_v: f64,
    /// Admissible landing spans in `[x_s, x_t]`, ordered by `x`.
    pub intervals: Vec<LandingInterval>,
}

impl PlanningWindow {
    pub fn new(
        env: &Parkour,
        geometry: JumpGeometry,
        limits: Limits,
        x_s: f64,
        z_s: f64,
        x_t: f64,
    ) -> Self {
        let (lo, hi) = (x_s.min(x_t), x_s.max(x_t));
        let obstacles = env.obstacles_between(lo, hi).cloned().collect();
        let areas = env
            .areas()
            .iter()
            .filter(|a| a.end >= lo && a.start <= hi)
            .cloned()
            .collect();
        let intervals = env.landing_intervals(lo, hi);
        Self {
            geometry,
            limits,
            x_s,
            z_s,
            x_t,
            obstacles,
            areas,
            margin_h: env.margin_h(),
            margin_v: env.margin_v(),
            intervals,
        }
    }

    /// Index of the landing interval containing the target, if any.
    pub fn target_interval(&self) -> Option<usize> {
        self.intervals.iter().rposition(|i| i.contains(self.x_t))
    }

    pub fn g(&self) -> f64 {
        self.geometry.g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Max constraint violation accepted at a solution.
    pub constraint_tol: f64,
    /// Relative gap below which branch-and-bound stops improving.
    pub rel_opt_tol: f64,
    /// Outer (multiplier-update) iterations per leaf.
    pub max_outer_iterations: usize,
    /// Inner projected-Newton iterations per outer iteration.
    pub max_inner_iterations: usize,
    pub max_nodes: usize,
    pub penalty_growth: f64,
    pub initial_penalty: f64,
    pub max_penalty: f64,
    /// Seeds tried per leaf; later seeds run only if earlier ones fail.
    pub seeds_per_leaf: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            constraint_tol: 1e-6,
            rel_opt_tol: 1e-4,
            max_outer_iterations: 40,
            max_inner_iterations: 60,
            max_nodes: 20_000,
            penalty_growth: 10.0,
            initial_penalty: 10.0,
            max_penalty: 1e8,
            seeds_per_leaf: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub t: f64,
    pub v: f64,
    pub theta: f64,
    pub takeoff: [f64; 2],
    pub landing: [f64; 2],
    pub segment: LandingInterval,
}

impl JumpSpec {
    pub fn velocity(&self) -> (f64, f64) {
        velocity_components(self.v, self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverStats {
    /// Inner iterations summed over all leaves.
    pub iterations: usize,
    pub nodes_expanded: usize,
    pub leaves_solved: usize,
    #[serde(with = "duration_secs")]
    pub setup_time: Duration,
    #[serde(with = "duration_secs")]
    pub solve_time: Duration,
}

impl SolverStats {
    pub(crate) fn absorb(&mut self, other: &SolverStats) {
        self.iterations += other.iterations;
        self.nodes_expanded += other.nodes_expanded;
        self.leaves_solved += other.leaves_solved;
        self.setup_time += other.setup_time;
        self.solve_time += other.solve_time;
    }
}

pub(crate) mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub jumps: Vec<JumpSpec>,
    pub total_flight_time: f64,
    pub assignment: BinaryAssignment,
    /// Ids of the obstacles the assignment columns refer to.
    pub obstacle_ids: Vec<String>,
    pub solver_stats: SolverStats,
}

impl Plan {
    pub fn empty() -> Self {
        Plan {
            jumps: Vec::new(),
            total_flight_time: 0.0,
            assignment: BinaryAssignment::default(),
            obstacle_ids: Vec::new(),
            solver_stats: SolverStats::default(),
        }
    }

    pub fn vars(&self) -> DecisionVars {
        DecisionVars {
            t: self.jumps.iter().map(|j| j.t).collect(),
            v: self.jumps.iter().map(|j| j.v).collect(),
            theta: self.jumps.iter().map(|j| j.theta).collect(),
        }
    }

    /// Number of landings on obstacle tops.
    pub fn obstacle_landings(&self) -> usize {
        self.jumps.iter().filter(|j| j.segment.z > 0.0).count()
    }
}

/// Re-check a plan against every residual block, independent of how it was
/// produced. Returns the largest violation found.
pub fn certify(window: &PlanningWindow, plan: &Plan) -> f64 {
    if plan.jumps.is_empty() {
        return (window.x_t - window.x_s).abs();
    }
    let vars = plan.vars();
    let residuals = constraint_residuals(window, &vars, &plan.assignment, false);
    let mut worst = residuals.max_violation();
    let limits = &window.limits;
    for n in 0..vars.len() {
        for (x, lo, hi) in [
            (vars.t[n], limits.t_min, limits.t_max),
            (vars.v[n], limits.v_min, limits.v_max),
            (vars.theta[n], limits.theta_min, limits.theta_max),
        ] {
            worst = worst.max(lo - x).max(x - hi);
        }
    }
    worst
}
