//! Small dense bound-constrained nonlinear programs solved with a
//! Powell-Hestenes-Rockafellar augmented Lagrangian. Each subproblem is
//! minimized by projected Newton steps on the box.

use nalgebra::{DMatrix, DVector};

/// Constraint values and row-major Jacobians at one point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintEval {
    /// `h(y) = 0`.
    pub eq: Vec<f64>,
    pub eq_jac: Vec<f64>,
    /// `g(y) ≤ 0`.
    pub ineq: Vec<f64>,
    pub ineq_jac: Vec<f64>,
}

impl ConstraintEval {
    pub fn violation(&self) -> f64 {
        let e = self.eq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.ineq.iter().fold(e, |m, v| m.max(*v))
    }
}

pub trait Problem {
    fn dim(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    /// Objective value and gradient.
    fn objective(&self, y: &[f64]) -> (f64, Vec<f64>);
    /// Row counts must not depend on `y`.
    fn constraints(&self, y: &[f64], with_grad: bool) -> ConstraintEval;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlpOptions {
    pub constraint_tol: f64,
    pub objective_rel_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            constraint_tol: 1e-6,
            objective_rel_tol: 1e-8,
            max_outer: 40,
            max_inner: 60,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlpStatus {
    Converged,
    /// The penalty passed its cap while the violation stalled.
    Infeasible,
    /// Ran out of iterations without a verdict.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpResult {
    pub y: Vec<f64>,
    pub objective: f64,
    pub violation: f64,
    pub status: NlpStatus,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

struct Lagrangian<'a, P: Problem> {
    problem: &'a P,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    rho: f64,
}

impl<P: Problem> Lagrangian<'_, P> {
    fn value(&self, y: &[f64]) -> f64 {
        let (f, _) = self.problem.objective(y);
        let c = self.problem.constraints(y, false);
        let mut v = f;
        for (h, l) in c.eq.iter().zip(&self.lambda) {
            v += l * h + 0.5 * self.rho * h * h;
        }
        for (g, m) in c.ineq.iter().zip(&self.mu) {
            let s = (m + self.rho * g).max(0.0);
            v += (s * s - m * m) / (2.0 * self.rho);
        }
        v
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let (_, mut grad) = self.problem.objective(y);
        let c = self.problem.constraints(y, true);
        for (i, (h, l)) in c.eq.iter().zip(&self.lambda).enumerate() {
            let w = l + self.rho * h;
            for (gj, jj) in grad.iter_mut().zip(&c.eq_jac[i * n..(i + 1) * n]) {
                *gj += w * jj;
            }
        }
        for (i, (g, m)) in c.ineq.iter().zip(&self.mu).enumerate() {
            let w = (m + self.rho * g).max(0.0);
            if w > 0.0 {
                for (gj, jj) in grad.iter_mut().zip(&c.ineq_jac[i * n..(i + 1) * n]) {
                    *gj += w * jj;
                }
            }
        }
        grad
    }
}

fn project(y: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in y.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Norm of the projected-gradient step, the first-order measure on a box.
fn projected_gradient_norm(y: &[f64], grad: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    y.iter()
        .zip(grad)
        .zip(lo.iter().zip(hi))
        .fold(0.0f64, |m, ((v, g), (l, h))| m.max(((v - g).clamp(*l, *h) - v).abs()))
}

/// Forward-difference Hessian of the merit built column by column from its
/// analytic gradient, symmetrized.
fn hessian<P: Problem>(lag: &Lagrangian<'_, P>, y: &[f64], grad: &[f64]) -> DMatrix<f64> {
    let n = y.len();
    let mut h = DMatrix::zeros(n, n);
    let mut probe = y.to_vec();
    for j in 0..n {
        let step = 1e-7 * y[j].abs().max(1.0);
        probe[j] = y[j] + step;
        let gp = lag.gradient(&probe);
        probe[j] = y[j];
        for i in 0..n {
            h[(i, j)] = (gp[i] - grad[i]) / step;
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Newton direction on the free variables with a Levenberg shift until the
/// reduced Hessian factors.
fn newton_direction(h: &DMatrix<f64>, grad: &[f64], free: &[usize]) -> Option<Vec<f64>> {
    let m = free.len();
    if m == 0 {
        return Some(vec![0.0; grad.len()]);
    }
    let mut reduced = DMatrix::zeros(m, m);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            reduced[(a, b)] = h[(i, j)];
        }
    }
    let rhs = DVector::from_iterator(m, free.iter().map(|&i| -grad[i]));
    let scale = (0..m).fold(1e-12f64, |s, i| s.max(reduced[(i, i)].abs()));
    let mut shift = 0.0;
    for _ in 0..20 {
        let mut shifted = reduced.clone();
        for i in 0..m {
            shifted[(i, i)] += shift;
        }
        if let Some(chol) = shifted.cholesky() {
            let d = chol.solve(&rhs);
            let mut out = vec![0.0; grad.len()];
            for (a, &i) in free.iter().enumerate() {
                out[i] = d[a];
            }
            return Some(out);
        }
        shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
    }
    None
}

/// Projected Armijo search along `dir`; returns the accepted point and its
/// merit, or `None` if no decrease was found.
fn line_search<P: Problem>(
    lag: &Lagrangian<'_, P>,
    y: &[f64],
    f0: f64,
    grad: &[f64],
    dir: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let lo = lag.problem.lower();
    let hi = lag.problem.upper();
    let mut alpha = 1.0;
    for _ in 0..40 {
        let mut trial: Vec<f64> = y.iter().zip(dir).map(|(v, d)| v + alpha * d).collect();
        project(&mut trial, lo, hi);
        let decrease: f64 = grad.iter().zip(trial.iter().zip(y)).map(|(g, (t, v))| g * (v - t)).sum();
        let f = lag.value(&trial);
        if f.is_finite() && decrease > 0.0 && f <= f0 - 1e-4 * decrease {
            return Some((trial, f));
        }
        alpha *= 0.5;
    }
    None
}

/// Minimize the merit over the box from `y`. Returns iterations used.
fn inner_solve<P: Problem>(lag: &Lagrangian<'_, P>, y: &mut Vec<f64>, tol: f64, max_iter: usize) -> usize {
    let lo = lag.problem.lower();
    let hi = lag.problem.upper();
    let mut f = lag.value(y);
    for iter in 0..max_iter {
        let grad = lag.gradient(y);
        if projected_gradient_norm(y, &grad, lo, hi) <= tol {
            return iter;
        }
        // Variables pinned at a bound with the gradient pushing outward.
        let eps = 1e-10;
        let active: Vec<bool> = (0..y.len())
            .map(|i| (y[i] <= lo[i] + eps && grad[i] > 0.0) || (y[i] >= hi[i] - eps && grad[i] < 0.0))
            .collect();
        let free: Vec<usize> = (0..y.len()).filter(|&i| !active[i]).collect();
        let h = hessian(lag, y, &grad);
        let newton = newton_direction(&h, &grad, &free).map(|mut d| {
            for i in 0..y.len() {
                if active[i] {
                    d[i] = -grad[i];
                }
            }
            d
        });
        let step = newton
            .and_then(|d| line_search(lag, y, f, &grad, &d))
            .or_else(|| {
                let d: Vec<f64> = grad.iter().map(|g| -g).collect();
                line_search(lag, y, f, &grad, &d)
            });
        match step {
            Some((next, f_next)) => {
                let moved = next.iter().zip(y.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                *y = next;
                let stalled = moved <= 1e-15 || (f - f_next).abs() <= 1e-16 * f.abs().max(1.0);
                f = f_next;
                if stalled {
                    return iter + 1;
                }
            }
            None => return iter + 1,
        }
    }
    max_iter
}

/// Solve `min f(y)` subject to `h(y) = 0`, `g(y) ≤ 0` and the problem's box,
/// starting from `y0` (projected onto the box first).
pub fn solve<P: Problem>(problem: &P, y0: &[f64], opts: &NlpOptions) -> NlpResult {
    let mut y = y0.to_vec();
    project(&mut y, problem.lower(), problem.upper());
    let c0 = problem.constraints(&y, false);
    let mut lag = Lagrangian {
        problem,
        lambda: vec![0.0; c0.eq.len()],
        mu: vec![0.0; c0.ineq.len()],
        rho: opts.initial_penalty,
    };
    let mut prev_violation = c0.violation();
    let mut prev_objective = f64::INFINITY;
    let mut inner_tol: f64 = 1e-3;
    let mut inner_total = 0;
    let mut status = NlpStatus::IterationLimit;
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        inner_total += inner_solve(&lag, &mut y, inner_tol, opts.max_inner);
        let c = problem.constraints(&y, false);
        let violation = c.violation();
        let (objective, _) = problem.objective(&y);
        let settled = (objective - prev_objective).abs() <= opts.objective_rel_tol * objective.abs().max(1.0);
        if violation <= opts.constraint_tol && settled {
            status = NlpStatus::Converged;
            break;
        }
        prev_objective = objective;
        for (l, h) in lag.lambda.iter_mut().zip(&c.eq) {
            *l += lag.rho * h;
        }
        for (m, g) in lag.mu.iter_mut().zip(&c.ineq) {
            *m = (*m + lag.rho * g).max(0.0);
        }
        if violation > opts.constraint_tol && violation > 0.25 * prev_violation {
            lag.rho *= opts.penalty_growth;
            if lag.rho > opts.max_penalty {
                status = NlpStatus::Infeasible;
                break;
            }
        }
        prev_violation = violation;
        inner_tol = (inner_tol * 0.1).max(1e-10);
    }
    let (objective, _) = problem.objective(&y);
    let violation = problem.constraints(&y, false).violation();
    NlpResult {
        y,
        objective,
        violation,
        status,
        inner_iterations: inner_total,
        outer_iterations: outer,
    }
}
