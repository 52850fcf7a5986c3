use serde::{Deserialize, Serialize};

use super::{DecisionVars, Limits, PlanError};
use crate::env::Obstacle;
use crate::leg::{ConfigOffsets, JumpGeometry};

pub fn velocity_components(v: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (v * c, v * s)
}

pub fn jump_offsets(geometry: &JumpGeometry, theta: f64) -> ConfigOffsets {
    geometry.offsets(theta)
}

/// Foot contact point after each jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landing {
    pub x: f64,
    pub z: f64,
}

/// Contact points `x[0..=N]` of a jump sequence, one ballistic step per jump.
pub fn rollout(geometry: &JumpGeometry, start: (f64, f64), vars: &DecisionVars) -> Vec<Landing> {
    let g = geometry.g;
    let mut out = Vec::with_capacity(vars.len() + 1);
    let (mut x, mut z) = start;
    out.push(Landing { x, z });
    for n in 0..vars.len() {
        let (vx, vz) = velocity_components(vars.v[n], vars.theta[n]);
        let o = geometry.offsets(vars.theta[n]);
        let t = vars.t[n];
        x += o.c_xe + vx * t;
        z += o.c_ze + vz * t - 0.5 * g * t * t;
        out.push(Landing { x, z });
    }
    out
}

/// Foot height over an obstacle front and knee height over its back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clearance {
    pub z_ae: f64,
    pub z_bk: f64,
    pub t_a: f64,
    pub t_b: f64,
}

/// Evaluate the jump leaving `takeoff` with `(v, theta)` at the front (foot)
/// and back (knee) of `obstacle`.
pub fn clearance_heights(
    geometry: &JumpGeometry,
    takeoff: (f64, f64),
    v: f64,
    theta: f64,
    obstacle: &Obstacle,
) -> Result<Clearance, PlanError> {
    let (vx, vz) = velocity_components(v, theta);
    // cos(π/2) is not exactly zero in floating point.
    if vx <= 1e-12 * v.abs().max(1.0) {
        return Err(PlanError::NoForwardProgress);
    }
    let g = geometry.g;
    let o = geometry.offsets(theta);
    let (x0, z0) = takeoff;
    let t_a = (obstacle.front - x0 - o.c_xe) / vx;
    let t_b = (obstacle.back - x0 - o.c_xk) / vx;
    Ok(Clearance {
        z_ae: z0 + o.c_ze + vz * t_a - 0.5 * g * t_a * t_a,
        z_bk: z0 + o.c_zk + vz * t_b - 0.5 * g * t_b * t_b,
        t_a,
        t_b,
    })
}

/// Obstacle-free seed: every jump at `θ_min` with one shared speed that
/// covers the gap in `n` equal flat jumps.
pub fn initial_guess(
    geometry: &JumpGeometry,
    n: usize,
    x_s: f64,
    x_t: f64,
    limits: &Limits,
) -> DecisionVars {
    let theta = limits.theta_min;
    let g = geometry.g;
    let c_xe = geometry.offsets(theta).c_xe;
    let per_jump = if n == 0 {
        0.0
    } else {
        (x_t - x_s - n as f64 * c_xe) / n as f64
    };
    let v = (per_jump.max(0.0) * g / (2.0 * theta).sin())
        .sqrt()
        .clamp(limits.v_min, limits.v_max);
    let t = (2.0 * v * theta.sin() / g).clamp(limits.t_min, limits.t_max);
    DecisionVars {
        t: vec![t; n],
        v: vec![v; n],
        theta: vec![theta; n],
    }
}
