//! Branch-and-bound over landing-interval sequences with one smooth
//! program per complete sequence.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use super::nlp::{self, ConstraintEval, NlpOptions, NlpStatus, Problem};
use super::residuals::{objective, solver_residuals, BlockKind};
use super::{
    certify, rollout, BinaryAssignment, DecisionVars, JumpSpec, Plan, PlanError, PlanningWindow,
    SolverConfig, SolverStats,
};
use crate::env::LandingInterval;

struct LeafProblem<'a> {
    window: &'a PlanningWindow,
    intervals: &'a [LandingInterval],
    assignment: BinaryAssignment,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> LeafProblem<'a> {
    fn new(window: &'a PlanningWindow, intervals: &'a [LandingInterval]) -> Self {
        let n = intervals.len();
        let assignment = BinaryAssignment::from_intervals(&window.obstacles, window.x_s, intervals);
        let lo = (0..n).flat_map(|_| window.limits.lower()).collect();
        let hi = (0..n).flat_map(|_| window.limits.upper()).collect();
        Self {
            window,
            intervals,
            assignment,
            lo,
            hi,
        }
    }
}

impl Problem for LeafProblem<'_> {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn lower(&self) -> &[f64] {
        &self.lo
    }

    fn upper(&self) -> &[f64] {
        &self.hi
    }

    fn objective(&self, y: &[f64]) -> (f64, Vec<f64>) {
        objective(&DecisionVars::from_flat(y))
    }

    fn constraints(&self, y: &[f64], with_grad: bool) -> ConstraintEval {
        let vars = DecisionVars::from_flat(y);
        let res = solver_residuals(self.window, &vars, &self.assignment, self.intervals, with_grad);
        let mut out = ConstraintEval::default();
        for block in res.blocks {
            let (values, jac) = match block.kind {
                BlockKind::Equality => (&mut out.eq, &mut out.eq_jac),
                BlockKind::Inequality => (&mut out.ineq, &mut out.ineq_jac),
            };
            values.extend_from_slice(&block.values);
            jac.extend_from_slice(&block.jacobian);
        }
        out
    }
}

/// Solve the jump `from → to` exactly for the first angle (scanning upward
/// from `θ_min`) whose speed, air time and clearances are acceptable. Falls
/// back to the least-violating angle.
fn shoot(window: &PlanningWindow, from: (f64, f64), to: (f64, f64)) -> (f64, f64, f64) {
    let limits = &window.limits;
    let g = window.g();
    let steps = 64;
    let mut best: Option<(f64, (f64, f64, f64))> = None;
    for i in 0..=steps {
        let theta = limits.theta_min + (limits.theta_max - limits.theta_min) * i as f64 / steps as f64;
        let o = window.geometry.offsets(theta);
        let dx = to.0 - from.0 - o.c_xe;
        let dz = to.1 - from.1 - o.c_ze;
        let (s, c) = theta.sin_cos();
        let den = 2.0 * c * c * (dx * theta.tan() - dz);
        if dx <= 0.0 || den <= 0.0 {
            continue;
        }
        let v = (g * dx * dx / den).sqrt();
        let t = dx / (v * c);
        let mut bad = (limits.v_min - v).max(0.0)
            + (v - limits.v_max).max(0.0)
            + (limits.t_min - t).max(0.0)
            + (t - limits.t_max).max(0.0)
            + (v * s - g * t).max(0.0);
        let vx = v * c;
        let vz = v * s;
        let height = |x_edge: f64, cx: f64, cz: f64| {
            let tau = (x_edge - from.0 - cx) / vx;
            from.1 + cz + vz * tau - 0.5 * g * tau * tau
        };
        for ob in &window.obstacles {
            let clear = ob.height + window.margin_v;
            if from.0 < ob.front && to.0 >= ob.front {
                bad += (clear - height(ob.front, o.c_xe, o.c_ze)).max(0.0);
            }
            if from.0 <= ob.back && to.0 > ob.back {
                bad += (clear - height(ob.back, o.c_xk, o.c_zk)).max(0.0);
                bad += (clear - height(ob.back, o.c_xe, o.c_ze)).max(0.0);
            }
        }
        if bad == 0.0 {
            return (t, v, theta);
        }
        if best.is_none_or(|(b, _)| bad < b) {
            best = Some((bad, (t, v, theta)));
        }
    }
    match best {
        Some((_, jump)) => jump,
        None => {
            let theta = limits.theta_min;
            let v = limits.v_min.midpoint(limits.v_max);
            (2.0 * v * theta.sin() / g, v, theta)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Placement {
    /// Evenly spaced between start and target.
    Even,
    /// Each jump as long as the reach allows, counted from the start.
    Front,
    /// Each jump as long as the reach allows, counted back from the target.
    Back,
}

/// Shooting seeds for a fixed interval sequence: landing targets are placed
/// inside each interval (evenly, or packed towards either end of the
/// window), and every jump is solved in closed form between consecutive
/// targets.
pub fn seed_for_assignment(window: &PlanningWindow, intervals: &[LandingInterval]) -> Vec<DecisionVars> {
    let n = intervals.len();
    if n == 0 {
        return Vec::new();
    }
    let l = &window.limits;
    let g = window.g();
    let reach = 0.9 * (l.v_max * l.v_max * (2.0 * l.theta_min).sin() / g + window.geometry.offsets(l.theta_min).c_xe);
    let clamp = |k: usize, x: f64| {
        let iv = &intervals[k];
        let inset = (0.2 * iv.width()).min(0.01);
        x.clamp(iv.lo + inset, iv.hi - inset)
    };
    let mut seeds = Vec::with_capacity(3);
    for place in [Placement::Even, Placement::Back, Placement::Front] {
        let mut xs = vec![window.x_t; n];
        match place {
            Placement::Even => {
                for (k, x) in xs.iter_mut().enumerate().take(n - 1) {
                    *x = clamp(k, window.x_s + (k + 1) as f64 * (window.x_t - window.x_s) / n as f64);
                }
            }
            Placement::Front => {
                let mut prev = window.x_s;
                for k in 0..n - 1 {
                    xs[k] = clamp(k, prev + reach);
                    prev = xs[k];
                }
            }
            Placement::Back => {
                for k in (0..n - 1).rev() {
                    xs[k] = clamp(k, xs[k + 1] - reach);
                }
            }
        }
        let mut vars = DecisionVars::default();
        let mut from = (window.x_s, window.z_s);
        for (k, x) in xs.into_iter().enumerate() {
            let to = (x, intervals[k].z);
            let (t, v, theta) = shoot(window, from, to);
            vars.t.push(t);
            vars.v.push(v);
            vars.theta.push(theta);
            from = to;
        }
        if !seeds.contains(&vars) {
            seeds.push(vars);
        }
    }
    seeds
}

fn nlp_options(config: &SolverConfig) -> NlpOptions {
    NlpOptions {
        // Solve tighter than the certification threshold.
        constraint_tol: 0.1 * config.constraint_tol,
        objective_rel_tol: 1e-8,
        max_outer: config.max_outer_iterations,
        max_inner: config.max_inner_iterations,
        initial_penalty: config.initial_penalty,
        penalty_growth: config.penalty_growth,
        max_penalty: config.max_penalty,
    }
}

fn build_plan(
    window: &PlanningWindow,
    intervals: &[LandingInterval],
    assignment: BinaryAssignment,
    vars: &DecisionVars,
    stats: SolverStats,
) -> Plan {
    let points = rollout(&window.geometry, (window.x_s, window.z_s), vars);
    let jumps = (0..vars.len())
        .map(|n| JumpSpec {
            t: vars.t[n],
            v: vars.v[n],
            theta: vars.theta[n],
            takeoff: [points[n].x, points[n].z],
            landing: [points[n + 1].x, points[n + 1].z],
            segment: intervals[n],
        })
        .collect();
    Plan {
        jumps,
        total_flight_time: vars.t.iter().sum(),
        assignment,
        obstacle_ids: window.obstacles.iter().map(|o| o.id.clone()).collect(),
        solver_stats: stats,
    }
}

/// Solve the continuous program for one landing-interval sequence (binaries
/// fixed). `guess`, when given, is tried before the shooting seeds.
pub fn solve_assignment(
    window: &PlanningWindow,
    intervals: &[LandingInterval],
    guess: Option<&DecisionVars>,
    config: &SolverConfig,
) -> Result<Plan, PlanError> {
    let start = Instant::now();
    if intervals.is_empty() {
        return if window.x_t == window.x_s {
            Ok(Plan::empty())
        } else {
            Err(PlanError::Infeasible("no jumps for a nonzero gap".into()))
        };
    }
    let problem = LeafProblem::new(window, intervals);
    if !problem.assignment.is_monotone() {
        return Err(PlanError::InvalidInput("assignment is not monotone".into()));
    }
    let mut seeds: Vec<DecisionVars> = guess.into_iter().cloned().collect();
    let setup_start = Instant::now();
    seeds.extend(seed_for_assignment(window, intervals));
    seeds.truncate(config.seeds_per_leaf.max(1));
    let setup_time = setup_start.elapsed();

    let opts = nlp_options(config);
    let mut stats = SolverStats {
        leaves_solved: 1,
        setup_time,
        ..Default::default()
    };
    let mut inconclusive = false;
    let mut worst = 0.0f64;
    let mut best: Option<DecisionVars> = None;
    for seed in &seeds {
        let result = nlp::solve(&problem, &seed.to_flat(), &opts);
        stats.iterations += result.inner_iterations;
        match result.status {
            NlpStatus::Converged => {
                let vars = DecisionVars::from_flat(&result.y);
                let plan = build_plan(window, intervals, problem.assignment.clone(), &vars, stats);
                let violation = certify(window, &plan);
                if violation > config.constraint_tol {
                    worst = worst.max(violation);
                } else if best.as_ref().is_none_or(|b| plan.total_flight_time < b.t.iter().sum::<f64>()) {
                    best = Some(vars);
                }
            }
            NlpStatus::IterationLimit => inconclusive = true,
            NlpStatus::Infeasible => worst = worst.max(result.violation),
        }
    }
    if let Some(vars) = best {
        stats.solve_time = start.elapsed().saturating_sub(setup_time);
        return Ok(build_plan(window, intervals, problem.assignment.clone(), &vars, stats));
    }
    if inconclusive {
        Err(PlanError::IterationLimit)
    } else {
        Err(PlanError::Infeasible(format!(
            "interval sequence admits no solution (residual {worst:.3e})"
        )))
    }
}

/// Admissible per-jump bounds derived from the limits and offset ranges.
struct Bounds {
    g: f64,
    t_min: f64,
    t_max: f64,
    v_max: f64,
    vx_max: f64,
    tan_min: f64,
    cx_max: f64,
    cz_min: f64,
    theta: (f64, f64),
    reach_cache: HashMap<(u64, u64), f64>,
}

impl Bounds {
    fn new(window: &PlanningWindow) -> Self {
        let l = &window.limits;
        let at_min = window.geometry.offsets(l.theta_min);
        Self {
            g: window.g(),
            t_min: l.t_min,
            t_max: l.t_max,
            v_max: l.v_max,
            vx_max: l.v_max * l.theta_min.cos(),
            tan_min: l.theta_min.tan(),
            // c_xe falls and c_ze rises with θ on (0, π/2).
            cx_max: at_min.c_xe,
            cz_min: at_min.c_ze,
            theta: (l.theta_min, l.theta_max),
            reach_cache: HashMap::new(),
        }
    }

    /// Least air time of a jump whose foot must travel at least `gap` and
    /// land `dz` higher than it took off.
    fn jump_time(&self, gap: f64, dz: f64) -> f64 {
        let horizontal = (gap - self.cx_max) / self.vx_max;
        let lift = self.tan_min * (gap - self.cx_max) - (dz - self.cz_min);
        let angle = if lift > 0.0 { (2.0 * lift / self.g).sqrt() } else { 0.0 };
        self.t_min.max(horizontal).max(angle)
    }

    /// Largest foot travel of one jump landing `dz` higher, at full speed,
    /// over a grid of angles, padded for the grid.
    fn reach(&mut self, geometry: &crate::leg::JumpGeometry, dz: f64) -> f64 {
        let key = (dz.to_bits(), 0);
        if let Some(&r) = self.reach_cache.get(&key) {
            return r;
        }
        let steps = 48;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=steps {
            let theta = self.theta.0 + (self.theta.1 - self.theta.0) * i as f64 / steps as f64;
            let o = geometry.offsets(theta);
            let (s, c) = theta.sin_cos();
            let vz = self.v_max * s;
            let rise = dz - o.c_ze;
            let disc = vz * vz - 2.0 * self.g * rise;
            if disc < 0.0 {
                continue;
            }
            let t = ((vz + disc.sqrt()) / self.g).min(self.t_max);
            best = best.max(o.c_xe + self.v_max * c * t);
        }
        let r = if best.is_finite() { best * 1.02 + 0.02 } else { f64::NEG_INFINITY };
        self.reach_cache.insert(key, r);
        r
    }
}

#[derive(Debug, Clone)]
struct Node {
    bound: f64,
    /// Summed bounds of the jumps already placed.
    placed: f64,
    seq: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: lowest bound first, then deepest, then lexicographic.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.seq.len().cmp(&other.seq.len()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Whether `(cost, landings, seq)` beats the incumbent.
fn improves(plan: &Plan, seq: &[usize], best: &Option<(Plan, Vec<usize>)>) -> bool {
    let Some((inc, inc_seq)) = best else {
        return true;
    };
    let scale = inc.total_flight_time.abs().max(1e-12);
    let diff = plan.total_flight_time - inc.total_flight_time;
    if diff < -1e-9 * scale {
        return true;
    }
    if diff > 1e-9 * scale {
        return false;
    }
    (plan.obstacle_landings(), seq) < (inc.obstacle_landings(), inc_seq.as_slice())
}

/// Minimum-flight-time plan of exactly `n` jumps from `(x_s, z_s)` to `x_t`.
pub fn plan_jumps(window: &PlanningWindow, n: usize, config: &SolverConfig) -> Result<Plan, PlanError> {
    plan_jumps_until(window, n, config, None)
}

/// [`plan_jumps`] that gives up at `deadline`. Past it the incumbent is
/// returned if there is one, otherwise [`PlanError::TimeLimit`].
pub fn plan_jumps_until(
    window: &PlanningWindow,
    n: usize,
    config: &SolverConfig,
    deadline: Option<Instant>,
) -> Result<Plan, PlanError> {
    let start = Instant::now();
    window.limits.validate()?;
    if !(window.x_s.is_finite() && window.x_t.is_finite()) {
        return Err(PlanError::InvalidInput("non-finite start or target".into()));
    }
    if window.x_t < window.x_s {
        return Err(PlanError::Infeasible("target lies behind the start".into()));
    }
    if n == 0 {
        return if window.x_t == window.x_s {
            Ok(Plan::empty())
        } else {
            Err(PlanError::InvalidInput("zero jumps requested for a nonzero gap".into()))
        };
    }
    let Some(target) = window.target_interval() else {
        return Err(PlanError::Infeasible(format!("target {} is not landable", window.x_t)));
    };
    let intervals = &window.intervals;
    let mut bounds = Bounds::new(window);
    let total_floor = (window.x_t - window.x_s - n as f64 * bounds.cx_max) / bounds.vx_max;

    // Bound of a prefix: exact per-jump bounds for placed jumps plus a
    // horizontal-speed bound for the rest.
    let (t_min, cx_max, vx_max) = (bounds.t_min, bounds.cx_max, bounds.vx_max);
    let prefix_bound = |seq: &[usize], placed: f64| {
        let remaining = n - seq.len();
        let from = seq.last().map_or(window.x_s, |&i| intervals[i].hi);
        let rest = if remaining == 0 {
            0.0
        } else {
            (remaining as f64 * t_min).max((window.x_t - from - remaining as f64 * cx_max) / vx_max)
        };
        (placed + rest).max(total_floor)
    };

    let mut stats = SolverStats::default();
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: prefix_bound(&[], 0.0),
        placed: 0.0,
        seq: Vec::new(),
    });
    let mut best: Option<(Plan, Vec<usize>)> = None;
    let mut inconclusive = false;
    let setup_time = start.elapsed();

    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &best {
            if node.bound >= inc.total_flight_time * (1.0 - config.rel_opt_tol) {
                break;
            }
        }
        stats.nodes_expanded += 1;
        if stats.nodes_expanded > config.max_nodes {
            if best.is_none() {
                return Err(PlanError::NodeLimit(config.max_nodes));
            }
            break;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            if best.is_none() {
                return Err(PlanError::TimeLimit);
            }
            break;
        }
        let placed = node.placed;
        if node.seq.len() == n {
            let segs: Vec<LandingInterval> = node.seq.iter().map(|&i| intervals[i]).collect();
            match solve_assignment(window, &segs, None, config) {
                Ok(plan) => {
                    stats.absorb(&plan.solver_stats);
                    if improves(&plan, &node.seq, &best) {
                        best = Some((plan, node.seq));
                    }
                }
                Err(PlanError::IterationLimit) => {
                    stats.leaves_solved += 1;
                    inconclusive = true;
                }
                Err(_) => stats.leaves_solved += 1,
            }
            continue;
        }
        let (from_x, from_z) = node
            .seq
            .last()
            .map_or((window.x_s, window.z_s), |&i| (intervals[i].hi, intervals[i].z));
        let first = node.seq.last().copied().unwrap_or(0);
        let last_jump = node.seq.len() + 1 == n;
        let candidates = if last_jump { target..=target } else { first..=target };
        for idx in candidates {
            if idx < first {
                continue;
            }
            let iv = intervals[idx];
            if iv.hi <= window.x_s {
                continue;
            }
            let gap = (iv.lo - from_x).max(0.0);
            let dz = iv.z - from_z;
            if gap > bounds.reach(&window.geometry, dz) {
                // Intervals further on are no easier to reach at this height,
                // but heights differ, so only this child is dropped.
                continue;
            }
            let mut seq = node.seq.clone();
            seq.push(idx);
            let cost = placed + bounds.jump_time(gap, dz);
            let bound = prefix_bound(&seq, cost);
            heap.push(Node {
                bound,
                placed: cost,
                seq,
            });
        }
    }

    match best {
        Some((mut plan, _)) => {
            stats.setup_time += setup_time;
            stats.solve_time = start.elapsed().saturating_sub(stats.setup_time);
            plan.solver_stats = stats;
            Ok(plan)
        }
        None if inconclusive => Err(PlanError::IterationLimit),
        None => Err(PlanError::Infeasible(format!(
            "no interval sequence of {n} jumps reaches {:.3}",
            window.x_t
        ))),
    }
}
