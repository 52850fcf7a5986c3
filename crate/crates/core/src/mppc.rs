//! Receding-horizon wrapper around the jump planner: plan over a lookahead
//! window, execute only the first jump, replan after every landing.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::env::Parkour;
use crate::leg::JumpGeometry;
use crate::planner::{
    duration_secs, plan_jumps_until, JumpSpec, Limits, Plan, PlanError, PlanningWindow, SolverConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppcConfig {
    /// Lookahead distance (m).
    pub p: f64,
    /// Final goal (m).
    pub x_g: f64,
    pub limits: Limits,
    /// Horizons tried beyond the flat-ground minimum.
    pub n_slack: usize,
    /// A non-landable goal may be replaced by a landable point this close.
    pub goal_tolerance: f64,
    /// Wall-clock seconds spent on one target before falling back to a
    /// nearer one; `None` searches without limit.
    pub target_budget: Option<f64>,
}

impl Default for MppcConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            x_g: 0.0,
            limits: Limits::default(),
            n_slack: 3,
            goal_tolerance: 0.05,
            target_budget: Some(1.0),
        }
    }
}

impl MppcConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        self.limits.validate()?;
        if !(self.p > 0.0 && self.p.is_finite() && self.x_g.is_finite() && self.goal_tolerance >= 0.0) {
            return Err(PlanError::InvalidInput(format!(
                "lookahead must be positive and goal finite (p={}, x_g={})",
                self.p, self.x_g
            )));
        }
        if self.target_budget.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
            return Err(PlanError::InvalidInput(format!(
                "target budget must be positive, got {:?}",
                self.target_budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MppcResult {
    pub first_jump: JumpSpec,
    pub full_plan: Plan,
    pub target_used: f64,
    pub horizon_used: usize,
    #[serde(with = "duration_secs")]
    pub loop_time: Duration,
    /// Planner setup summed over every horizon tried.
    #[serde(with = "duration_secs")]
    pub setup_time: Duration,
    #[serde(with = "duration_secs")]
    pub solve_time: Duration,
}

/// Candidate jump counts for covering `x_s → x_t` on flat ground: the fewest
/// full-speed jumps at `θ_min` that span the gap, then `n_slack` more.
pub fn jumps_range(geometry: &JumpGeometry, x_s: f64, x_t: f64, limits: &Limits, n_slack: usize) -> Vec<usize> {
    let gap = x_t - x_s;
    if gap <= 0.0 {
        return Vec::new();
    }
    let r_max = limits.v_max * limits.v_max * (2.0 * limits.theta_min).sin() / geometry.g;
    let per_jump = r_max + geometry.offsets(limits.theta_min).c_xe;
    // Tolerate round-off so an exact multiple of the range is not bumped up.
    let n_min = ((gap / per_jump) - 1e-9).ceil().max(1.0) as usize;
    (n_min..=n_min + n_slack).collect()
}

/// Window target: the lookahead end or the goal, moved onto landable ground.
/// Points past the lookahead are never chosen; the goal may shift by up to
/// the goal tolerance in either direction.
pub fn window_target(env: &Parkour, x_s: f64, config: &MppcConfig) -> Option<f64> {
    let goal_window = x_s + config.p >= config.x_g;
    let raw = if goal_window { config.x_g } else { x_s + config.p };
    if env.is_landable(raw) {
        return Some(raw);
    }
    if goal_window {
        let tol = config.goal_tolerance;
        let lo = x_s.max(raw - tol);
        let hi = (raw + tol).min(env.x_max());
        return env
            .landing_intervals(lo, hi)
            .iter()
            .map(|iv| raw.clamp(iv.lo, iv.hi))
            .filter(|x| *x > x_s)
            .min_by(|a, b| (a - raw).abs().total_cmp(&(b - raw).abs()));
    }
    let last = *env.landing_intervals(x_s, raw).last()?;
    let inset = (0.25 * last.width()).min(0.02);
    let x = last.hi - inset;
    (x > x_s).then_some(x)
}

/// Nearer targets tried when the window target cannot be reached: the far
/// end of each earlier landing span past the first obstacle front, closest
/// to `x_t` first. Spans before every obstacle are never offered, so an
/// impassable obstacle still fails the step.
pub fn fallback_targets(env: &Parkour, x_s: f64, x_t: f64, count: usize) -> Vec<f64> {
    let Some(front) = env.obstacles_between(x_s, x_t).map(|o| o.front).find(|&f| f > x_s) else {
        return Vec::new();
    };
    env.landing_intervals(x_s, x_t)
        .iter()
        .rev()
        .filter(|iv| !iv.contains(x_t) && iv.lo >= front)
        .map(|iv| iv.hi - (0.25 * iv.width()).min(0.02))
        .filter(|&x| x > x_s)
        .take(count)
        .collect()
}

/// One receding-horizon step from the foot position `x_s`. If every horizon
/// fails towards the window target, up to two nearer landing spans are tried.
pub fn mppc_step(
    env: &Parkour,
    geometry: &JumpGeometry,
    x_s: f64,
    config: &MppcConfig,
    solver: &SolverConfig,
) -> Result<MppcResult, PlanError> {
    let start = Instant::now();
    config.validate()?;
    let z_s = env
        .locate(x_s)
        .map_err(|e| PlanError::InvalidInput(e.to_string()))?;
    let x_t = window_target(env, x_s, config).ok_or_else(|| {
        PlanError::Infeasible(format!("no landable target ahead of {x_s:.3}"))
    })?;
    let mut setup_time = Duration::ZERO;
    let mut solve_time = Duration::ZERO;
    let mut last_err = None;
    let targets = std::iter::once(x_t).chain(fallback_targets(env, x_s, x_t, 2));
    for target in targets {
        let t0 = Instant::now();
        let window = PlanningWindow::new(env, *geometry, config.limits, x_s, z_s, target);
        setup_time += t0.elapsed();
        let deadline = config.target_budget.map(|b| t0 + Duration::from_secs_f64(b));
        for n in jumps_range(geometry, x_s, target, &config.limits, config.n_slack) {
            match plan_jumps_until(&window, n, solver, deadline) {
                Ok(plan) => {
                    setup_time += plan.solver_stats.setup_time;
                    solve_time += plan.solver_stats.solve_time;
                    return Ok(MppcResult {
                        first_jump: plan.jumps[0],
                        full_plan: plan,
                        target_used: target,
                        horizon_used: n,
                        loop_time: start.elapsed(),
                        setup_time,
                        solve_time,
                    });
                }
                Err(e @ PlanError::InvalidInput(_)) => return Err(e),
                Err(PlanError::TimeLimit) => {
                    last_err = Some(PlanError::TimeLimit);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    Err(PlanError::Infeasible(match last_err {
        Some(e) => format!("every horizon failed towards {x_t:.3}; last: {e}"),
        None => format!("no horizon to try towards {x_t:.3}"),
    }))
}
