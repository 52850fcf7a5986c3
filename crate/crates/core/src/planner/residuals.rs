//! Constraint residuals of the impulse-planning program and their exact
//! Jacobians with respect to the interleaved `[t, v, θ]` variables.
//!
//! Equality rows report signed residuals. Inequality rows report `g(y)` with
//! `g ≤ 0` meaning satisfied.

use serde::{Deserialize, Serialize};

use super::{BinaryAssignment, DecisionVars, PlanningWindow};
use crate::env::LandingInterval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockName {
    /// Last landing on the target.
    D,
    /// Binary/position consistency for obstacle fronts and backs.
    O1,
    /// Landing height equals the terrain height selected by the binaries.
    O2,
    /// Landing keeps half the horizontal margin from every edge.
    O3,
    /// Foot over crossed fronts and knee over crossed backs clear `H + M_v`.
    A,
    /// Landing outside every restricted area.
    R,
    /// Foot also clears `H + M_v` when it passes a crossed back.
    FootAtBack,
    /// Foot moving downward at touchdown.
    Descent,
    /// Landing inside the assigned landing interval (solver-side form of
    /// `O3` and `R`).
    Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Equality,
    Inequality,
}

/// Which jump (0-based) and which obstacle/area a row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub jump: usize,
    pub feature: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: BlockName,
    pub kind: BlockKind,
    pub dim: usize,
    pub values: Vec<f64>,
    /// Row-major, `values.len() × dim`; empty when gradients were not asked for.
    pub jacobian: Vec<f64>,
    pub rows: Vec<Row>,
}

impl Block {
    fn new(name: BlockName, kind: BlockKind, dim: usize) -> Self {
        Self {
            name,
            kind,
            dim,
            values: Vec::new(),
            jacobian: Vec::new(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Row, value: f64, grad: Option<&[f64]>, scale: f64) {
        self.values.push(value);
        self.rows.push(row);
        if let Some(grad) = grad {
            self.jacobian.extend(grad.iter().map(|g| g * scale));
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gradient(&self, row: usize) -> &[f64] {
        &self.jacobian[row * self.dim..(row + 1) * self.dim]
    }

    pub fn violation(&self) -> f64 {
        match self.kind {
            BlockKind::Equality => self.values.iter().fold(0.0, |m, v| m.max(v.abs())),
            BlockKind::Inequality => self.values.iter().fold(0.0, |m, v| m.max(*v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub blocks: Vec<Block>,
}

impl Residuals {
    pub fn block(&self, name: BlockName) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn max_violation(&self) -> f64 {
        self.blocks.iter().fold(0.0, |m, b| m.max(b.violation()))
    }
}

/// `Σ t[n]` and its gradient.
pub fn objective(vars: &DecisionVars) -> (f64, Vec<f64>) {
    let grad = (0..vars.len()).flat_map(|_| [1.0, 0.0, 0.0]).collect();
    (vars.t.iter().sum(), grad)
}

/// Rolled-out states with their gradients, shared by all blocks.
struct Trajectory {
    dim: usize,
    x: Vec<f64>,
    z: Vec<f64>,
    /// `(N + 1) × dim`, row `n` is `∂x[n]/∂y`.
    dx: Vec<f64>,
    dz: Vec<f64>,
    with_grad: bool,
}

struct JumpTerms {
    vx: f64,
    vz: f64,
    c_xe: f64,
    c_ze: f64,
    c_xk: f64,
    c_zk: f64,
    /// `d(c_xe)/dθ`, shared by the knee offset.
    dc_x: f64,
    dc_z: f64,
    sin: f64,
    cos: f64,
}

impl Trajectory {
    fn build(window: &PlanningWindow, vars: &DecisionVars, with_grad: bool) -> (Self, Vec<JumpTerms>) {
        let n_jumps = vars.len();
        let dim = 3 * n_jumps;
        let g = window.g();
        let mut tr = Trajectory {
            dim,
            x: vec![window.x_s],
            z: vec![window.z_s],
            dx: if with_grad { vec![0.0; dim] } else { Vec::new() },
            dz: if with_grad { vec![0.0; dim] } else { Vec::new() },
            with_grad,
        };
        let mut terms = Vec::with_capacity(n_jumps);
        for n in 0..n_jumps {
            let (t, v, th) = (vars.t[n], vars.v[n], vars.theta[n]);
            let (sin, cos) = th.sin_cos();
            let o = window.geometry.offsets(th);
            let (dc_x, dc_z) = window.geometry.offset_slopes(th);
            let jt = JumpTerms {
                vx: v * cos,
                vz: v * sin,
                c_xe: o.c_xe,
                c_ze: o.c_ze,
                c_xk: o.c_xk,
                c_zk: o.c_zk,
                dc_x,
                dc_z,
                sin,
                cos,
            };
            let x_prev = tr.x[n];
            let z_prev = tr.z[n];
            tr.x.push(x_prev + jt.c_xe + jt.vx * t);
            tr.z.push(z_prev + jt.c_ze + jt.vz * t - 0.5 * g * t * t);
            if with_grad {
                let base = n * dim;
                let mut row_x = tr.dx[base..base + dim].to_vec();
                let mut row_z = tr.dz[base..base + dim].to_vec();
                let j = 3 * n;
                row_x[j] += jt.vx;
                row_x[j + 1] += cos * t;
                row_x[j + 2] += dc_x - jt.vz * t;
                row_z[j] += jt.vz - g * t;
                row_z[j + 1] += sin * t;
                row_z[j + 2] += dc_z + jt.vx * t;
                tr.dx.extend(row_x);
                tr.dz.extend(row_z);
            }
            terms.push(jt);
        }
        (tr, terms)
    }

    fn grad_x(&self, n: usize) -> Option<&[f64]> {
        self.with_grad.then(|| &self.dx[n * self.dim..(n + 1) * self.dim])
    }

    fn grad_z(&self, n: usize) -> Option<&[f64]> {
        self.with_grad.then(|| &self.dz[n * self.dim..(n + 1) * self.dim])
    }

    /// Height of a point offset by `(c_x, c_z)` from the take-off foot of
    /// jump `n` (0-based) when it passes `x_edge`, with gradient.
    fn height_at(
        &self,
        n: usize,
        jt: &JumpTerms,
        vars: &DecisionVars,
        g: f64,
        x_edge: f64,
        c_x: f64,
        c_z: f64,
        grad: &mut [f64],
    ) -> f64 {
        let u = x_edge - self.x[n] - c_x;
        let tau = u / jt.vx;
        let value = self.z[n] + c_z + jt.vz * tau - 0.5 * g * tau * tau;
        if self.with_grad {
            let v = vars.v[n];
            let j = 3 * n;
            let dxp = &self.dx[n * self.dim..(n + 1) * self.dim];
            let dzp = &self.dz[n * self.dim..(n + 1) * self.dim];
            let slope = jt.vz - g * tau;
            // dτ = du / vx - u dvx / vx², du = -dx[n] - dc_x dθ
            for i in 0..self.dim {
                let mut dtau = -dxp[i] / jt.vx;
                let mut dvz = 0.0;
                if i == j + 1 {
                    dtau -= u * jt.cos / (jt.vx * jt.vx);
                    dvz = jt.sin;
                } else if i == j + 2 {
                    dtau += (-jt.dc_x * jt.vx + u * v * jt.sin) / (jt.vx * jt.vx);
                    dvz = v * jt.cos;
                }
                let mut d = dzp[i] + tau * dvz + slope * dtau;
                if i == j + 2 {
                    d += jt.dc_z;
                }
                grad[i] = d;
            }
        }
        value
    }
}

fn step(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Evaluate every residual block at `vars` with the binaries fixed to
/// `assignment`.
pub fn constraint_residuals(
    window: &PlanningWindow,
    vars: &DecisionVars,
    assignment: &BinaryAssignment,
    with_grad: bool,
) -> Residuals {
    evaluate(window, vars, assignment, None, with_grad)
}

/// Solver-side constraint set: the certified blocks without the non-smooth `O3`/`R`
/// rows, plus assigned-interval bounds that imply them. Rows whose binary
/// factor is zero are dropped.
pub(crate) fn solver_residuals(
    window: &PlanningWindow,
    vars: &DecisionVars,
    assignment: &BinaryAssignment,
    intervals: &[LandingInterval],
    with_grad: bool,
) -> Residuals {
    evaluate(window, vars, assignment, Some(intervals), with_grad)
}

fn evaluate(
    window: &PlanningWindow,
    vars: &DecisionVars,
    assignment: &BinaryAssignment,
    intervals: Option<&[LandingInterval]>,
    with_grad: bool,
) -> Residuals {
    let n_jumps = vars.len();
    let g = window.g();
    let (tr, terms) = Trajectory::build(window, vars, with_grad);
    let dim = tr.dim;
    let solver_form = intervals.is_some();
    let obstacles = &window.obstacles;
    let mut scratch = vec![0.0; dim];

    let eq = BlockKind::Equality;
    let ineq = BlockKind::Inequality;

    let mut d = Block::new(BlockName::D, eq, dim);
    d.push(
        Row {
            jump: n_jumps.saturating_sub(1),
            feature: None,
        },
        window.x_t - tr.x[n_jumps],
        tr.grad_x(n_jumps),
        -1.0,
    );

    let mut o1 = Block::new(BlockName::O1, ineq, dim);
    let mut o2 = Block::new(BlockName::O2, eq, dim);
    let mut o3 = Block::new(BlockName::O3, ineq, dim);
    let mut a = Block::new(BlockName::A, ineq, dim);
    let mut r = Block::new(BlockName::R, ineq, dim);
    let mut foot_back = Block::new(BlockName::FootAtBack, ineq, dim);
    let mut descent = Block::new(BlockName::Descent, ineq, dim);
    let mut interval_block = Block::new(BlockName::Interval, ineq, dim);

    for n in 0..n_jumps {
        let landing = n + 1;
        let x = tr.x[landing];
        let z = tr.z[landing];
        let gx = tr.grad_x(landing);
        let gz = tr.grad_z(landing);
        let jt = &terms[n];

        let mut selected_height = 0.0;
        for (k, ob) in obstacles.iter().enumerate() {
            let row = Row {
                jump: n,
                feature: Some(k),
            };
            let da = step(assignment.delta_a[n][k]);
            let db = step(assignment.delta_b[n][k]);
            selected_height += ob.height * (da - db);

            for (coef, value, sign) in [
                (da, ob.front - x, -1.0),
                (1.0 - da, x - ob.front, 1.0),
                (db, ob.back - x, -1.0),
                (1.0 - db, x - ob.back, 1.0),
            ] {
                if solver_form && coef == 0.0 {
                    continue;
                }
                o1.push(row, coef * value, gx, sign * coef);
            }

            if !solver_form {
                let half = 0.5 * window.margin_h;
                for edge in [ob.front, ob.back] {
                    let s = (x - edge).signum();
                    o3.push(row, half - (x - edge).abs(), gx, -s);
                }
            }

            let cross_a = da - step(assignment.prev_a(n, k));
            let cross_b = db - step(assignment.prev_b(n, k));
            let clear = ob.height + window.margin_v;

            if !(solver_form && cross_a == 0.0) {
                let z_ae = tr.height_at(n, jt, vars, g, ob.front, jt.c_xe, jt.c_ze, &mut scratch);
                a.push(row, (clear - z_ae) * cross_a, with_grad.then_some(&scratch[..]), -cross_a);
            }
            if !(solver_form && cross_b == 0.0) {
                let z_bk = tr.height_at(n, jt, vars, g, ob.back, jt.c_xk, jt.c_zk, &mut scratch);
                a.push(row, (clear - z_bk) * cross_b, with_grad.then_some(&scratch[..]), -cross_b);
                let z_be = tr.height_at(n, jt, vars, g, ob.back, jt.c_xe, jt.c_ze, &mut scratch);
                foot_back.push(
                    row,
                    (clear - z_be) * cross_b,
                    with_grad.then_some(&scratch[..]),
                    -cross_b,
                );
            }
        }

        o2.push(
            Row {
                jump: n,
                feature: None,
            },
            z - selected_height,
            gz,
            1.0,
        );

        if !solver_form {
            for (m, area) in window.areas.iter().enumerate() {
                let mid = 0.5 * (area.start + area.end);
                let half = 0.5 * (area.end - area.start);
                let s = (x - mid).signum();
                r.push(
                    Row {
                        jump: n,
                        feature: Some(m),
                    },
                    half - (x - mid).abs(),
                    gx,
                    -s,
                );
            }
        }

        let t = vars.t[n];
        let grad_descent = with_grad.then(|| {
            let mut gd = vec![0.0; dim];
            gd[3 * n] = -g;
            gd[3 * n + 1] = jt.sin;
            gd[3 * n + 2] = jt.vx;
            gd
        });
        descent.push(
            Row {
                jump: n,
                feature: None,
            },
            jt.vz - g * t,
            grad_descent.as_deref(),
            1.0,
        );

        if let Some(intervals) = intervals {
            // The last landing is pinned by `D`.
            if n + 1 < n_jumps {
                let iv = intervals[n];
                let row = Row {
                    jump: n,
                    feature: None,
                };
                interval_block.push(row, iv.lo - x, gx, -1.0);
                interval_block.push(row, x - iv.hi, gx, 1.0);
            }
        }
    }

    let mut blocks = vec![d, o1, o2];
    if !solver_form {
        blocks.push(o3);
    }
    blocks.push(a);
    if !solver_form {
        blocks.push(r);
    }
    blocks.push(foot_back);
    blocks.push(descent);
    if solver_form {
        blocks.push(interval_block);
    }
    Residuals { blocks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Obstacle, Parkour, ParkourSpec, RestrictedArea};
    use crate::leg::{JumpGeometry, LegParams, GRAVITY};
    use crate::planner::{clearance_heights, Limits};
    use approx::assert_abs_diff_eq;

    fn window(env: &Parkour, geometry: JumpGeometry, x_t: f64) -> PlanningWindow {
        PlanningWindow::new(env, geometry, Limits::default(), 0.0, 0.0, x_t)
    }

    fn flat_jump(range: f64, theta: f64) -> DecisionVars {
        let v = (range * GRAVITY / (2.0 * theta).sin()).sqrt();
        DecisionVars {
            t: vec![2.0 * v * theta.sin() / GRAVITY],
            v: vec![v],
            theta: vec![theta],
        }
    }

    #[test]
    fn exact_single_jump_satisfies_everything() {
        let env = Parkour::flat(0.0, 3.0);
        let w = window(&env, JumpGeometry::point_mass(GRAVITY), 0.8);
        let vars = flat_jump(0.8, 0.9);
        let asg = BinaryAssignment::from_positions(&w.obstacles, 0.0, &[0.8]);
        let res = constraint_residuals(&w, &vars, &asg, false);
        assert!(res.max_violation() <= 1e-12, "{res:?}");
    }

    #[test]
    fn o3_violation_near_edge() {
        let env = Parkour::new(ParkourSpec {
            obstacles: vec![Obstacle::new("o", 0.5, 1.0, 0.2)],
            margin_h: 0.1,
            ..ParkourSpec::flat(0.0, 3.0)
        })
        .unwrap();
        let landing = 0.5 + 0.1 / 4.0;
        let w = window(&env, JumpGeometry::point_mass(GRAVITY), landing);
        // Land exactly there at the obstacle height; value of the other
        // blocks is irrelevant here.
        let vars = flat_jump(landing, 1.2);
        let asg = BinaryAssignment::from_positions(&w.obstacles, 0.0, &[landing]);
        let res = constraint_residuals(&w, &vars, &asg, false);
        let o3 = res.block(BlockName::O3).unwrap();
        assert_abs_diff_eq!(o3.violation(), 0.1 / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn a_block_reports_missing_vertical_margin() {
        let margin_v = 0.1;
        let theta: f64 = 1.0;
        let range = 1.2;
        let vars = flat_jump(range, theta);
        // Put the front at the quarter point and size the obstacle so the
        // foot crosses at H + M_v / 2.
        let geometry = JumpGeometry::point_mass(GRAVITY);
        let probe = Obstacle::new("p", 0.3, 0.35, 0.01);
        let c = clearance_heights(&geometry, (0.0, 0.0), vars.v[0], theta, &probe).unwrap();
        let height = c.z_ae - margin_v / 2.0;
        let env = Parkour::new(ParkourSpec {
            obstacles: vec![Obstacle::new("o", 0.3, 0.5, height)],
            margin_v,
            ..ParkourSpec::flat(0.0, 3.0)
        })
        .unwrap();
        let w = window(&env, geometry, range);
        let asg = BinaryAssignment::from_positions(&w.obstacles, 0.0, &[range]);
        let res = constraint_residuals(&w, &vars, &asg, false);
        let a = res.block(BlockName::A).unwrap();
        assert_abs_diff_eq!(a.values[0], margin_v / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn restricted_area_row() {
        let env = Parkour::new(ParkourSpec {
            areas: vec![RestrictedArea::new(0.7, 0.9)],
            ..ParkourSpec::flat(0.0, 3.0)
        })
        .unwrap();
        let w = window(&env, JumpGeometry::point_mass(GRAVITY), 0.8);
        let vars = flat_jump(0.8, 0.9);
        let asg = BinaryAssignment::from_positions(&w.obstacles, 0.0, &[0.8]);
        let res = constraint_residuals(&w, &vars, &asg, false);
        assert_abs_diff_eq!(res.block(BlockName::R).unwrap().values[0], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn solver_form_drops_inactive_rows() {
        let env = Parkour::new(ParkourSpec {
            obstacles: vec![Obstacle::new("o", 0.5, 1.0, 0.2)],
            ..ParkourSpec::flat(0.0, 3.0)
        })
        .unwrap();
        let geometry = LegParams::default().geometry().unwrap();
        let w = window(&env, geometry, 1.5);
        let vars = DecisionVars {
            t: vec![0.3, 0.3],
            v: vec![2.0, 2.0],
            theta: vec![0.9, 0.9],
        };
        let ivs = [w.intervals[1], w.intervals[2]];
        let asg = BinaryAssignment::from_intervals(&w.obstacles, 0.0, &ivs);
        let res = solver_residuals(&w, &vars, &asg, &ivs, true);
        // Jump 1 crosses the front only, jump 2 the back only.
        let a = res.block(BlockName::A).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(res.block(BlockName::Interval).unwrap().len(), 2);
        assert!(res.block(BlockName::O3).is_none());
    }
}
