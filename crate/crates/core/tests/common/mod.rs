//! Shared helpers for the integration tests.
#![allow(dead_code)]

use parkour_core::env::{Obstacle, Parkour, ParkourSpec, RestrictedArea};
use parkour_core::leg::{JumpGeometry, LegParams};
use parkour_core::planner::{DecisionVars, Limits};
use rand::Rng;

pub fn leg_geometry() -> JumpGeometry {
    LegParams::default().geometry().unwrap()
}

/// A small random course: up to two obstacles and one restricted area.
pub fn small_course<R: Rng>(rng: &mut R, length: f64) -> Parkour {
    loop {
        let mut spec = ParkourSpec::flat(0.0, length);
        let n_obstacles = rng.random_range(0..=2);
        for i in 0..n_obstacles {
            let front = rng.random_range(0.3..length - 0.6);
            let width = rng.random_range(0.15..0.4);
            let height = rng.random_range(0.04..0.2);
            spec.obstacles.push(Obstacle::new(format!("o{i}"), front, front + width, height));
        }
        if rng.random_bool(0.5) {
            let start = rng.random_range(0.3..length - 0.5);
            let width = rng.random_range(0.1..0.3);
            spec.areas.push(RestrictedArea::with_id("r", start, start + width));
        }
        if let Ok(p) = Parkour::new(spec) {
            if p.is_landable(0.0) {
                return p;
            }
        }
    }
}

/// A landable target in `[lo, hi)`.
pub fn landable_target<R: Rng>(rng: &mut R, env: &Parkour, lo: f64, hi: f64) -> f64 {
    loop {
        let x = rng.random_range(lo..hi);
        if env.is_landable(x) {
            return x;
        }
    }
}

/// Decision variables strictly inside the limits.
pub fn interior_vars<R: Rng>(rng: &mut R, limits: &Limits, n: usize) -> DecisionVars {
    let inner = |rng: &mut R, lo: f64, hi: f64| {
        let pad = 0.02 * (hi - lo);
        rng.random_range(lo + pad..hi - pad)
    };
    let mut vars = DecisionVars::default();
    for _ in 0..n {
        vars.t.push(inner(rng, limits.t_min, 0.8));
        vars.v.push(inner(rng, limits.v_min, limits.v_max));
        vars.theta.push(inner(rng, limits.theta_min, limits.theta_max));
    }
    vars
}

use std::sync::{Arc, Mutex};

use parkour_core::mppc::MppcResult;
use parkour_core::planner::{constraint_residuals, BlockName, Plan, PlanError, PlanningWindow};
use parkour_core::sim::{InlinePlanner, PlanRequest, PlanSource};

/// Blocks every plan must satisfy.
pub const CHECKED_BLOCKS: [BlockName; 6] =
    [BlockName::D, BlockName::O1, BlockName::O2, BlockName::O3, BlockName::A, BlockName::R];

/// Largest violation over the checked blocks, recomputed from scratch.
pub fn block_violation(window: &PlanningWindow, plan: &Plan) -> f64 {
    let res = constraint_residuals(window, &plan.vars(), &plan.assignment, false);
    CHECKED_BLOCKS
        .iter()
        .filter_map(|&name| res.block(name))
        .fold(0.0, |m, b| m.max(b.violation()))
}

/// Inline planner that re-checks every plan it hands out.
pub struct CertifyingPlanner {
    inner: InlinePlanner,
    last: Option<PlanRequest>,
    pub violations: Arc<Mutex<Vec<f64>>>,
}

impl CertifyingPlanner {
    pub fn new(violations: Arc<Mutex<Vec<f64>>>) -> Self {
        Self {
            inner: InlinePlanner::new(),
            last: None,
            violations,
        }
    }
}

impl PlanSource for CertifyingPlanner {
    fn request(&mut self, request: PlanRequest) {
        self.last = Some(request.clone());
        self.inner.request(request);
    }

    fn poll(&mut self) -> Option<Result<MppcResult, PlanError>> {
        let out = self.inner.poll()?;
        if let (Ok(r), Some(req)) = (&out, &self.last) {
            let window = PlanningWindow::new(
                &req.env,
                req.geometry,
                req.config.limits,
                req.x_s,
                req.env.height_at(req.x_s),
                r.target_used,
            );
            self.violations.lock().unwrap().push(block_violation(&window, &r.full_plan));
        }
        Some(out)
    }
}

use parkour_core::planner::{objective, rollout, BinaryAssignment};

/// Worst mismatch between analytic and central-difference gradients of the
/// objective and every residual row at `vars`. Errors are relative to
/// `max(1, |analytic|, |numeric|)`.
pub fn gradient_error(window: &PlanningWindow, vars: &DecisionVars, assignment: &BinaryAssignment) -> f64 {
    let y = vars.to_flat();
    let analytic = constraint_residuals(window, vars, assignment, true);
    let (_, obj_grad) = objective(vars);
    let mut worst = 0.0f64;
    let compare = |a: f64, b: f64| (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
    for i in 0..y.len() {
        let h = 1e-6 * 1f64.max(y[i].abs());
        let mut up = y.clone();
        let mut down = y.clone();
        up[i] += h;
        down[i] -= h;
        let (vu, vd) = (DecisionVars::from_flat(&up), DecisionVars::from_flat(&down));
        let fd = (objective(&vu).0 - objective(&vd).0) / (2.0 * h);
        worst = worst.max(compare(obj_grad[i], fd));
        let (ru, rd) = (
            constraint_residuals(window, &vu, assignment, false),
            constraint_residuals(window, &vd, assignment, false),
        );
        for (b, (bu, bd)) in analytic.blocks.iter().zip(ru.blocks.iter().zip(&rd.blocks)) {
            assert_eq!(b.len(), bu.len(), "row set changed under perturbation");
            for row in 0..b.len() {
                let fd = (bu.values[row] - bd.values[row]) / (2.0 * h);
                worst = worst.max(compare(b.gradient(row)[i], fd));
            }
        }
    }
    worst
}

/// A window over a random small course with an assignment taken from
/// where the rolled-out landings fall.
pub fn random_gradient_case<R: Rng>(rng: &mut R) -> (PlanningWindow, DecisionVars, BinaryAssignment) {
    let n = rng.random_range(1..=3);
    let length = 1.1 * n as f64 + 0.4;
    let env = small_course(rng, length);
    let x_t = landable_target(rng, &env, 0.5 * length, length - 0.05);
    let limits = Limits::default();
    let window = PlanningWindow::new(&env, leg_geometry(), limits, 0.0, 0.0, x_t);
    let vars = interior_vars(rng, &limits, n);
    let landings: Vec<f64> = rollout(&window.geometry, (0.0, 0.0), &vars)[1..].iter().map(|l| l.x).collect();
    let assignment = BinaryAssignment::from_positions(&window.obstacles, 0.0, &landings);
    (window, vars, assignment)
}
