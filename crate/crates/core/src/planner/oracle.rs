//! Brute-force reference planner for small instances.
//!
//! Every intermediate jump is drawn from a dense `(v, θ)` grid, simulated
//! against the terrain by first contact of the foot parabola, and chained by
//! dynamic programming over bucketed landing positions. The final jump is
//! solved for the exact target and validated the same way. Shares nothing
//! with the optimizer beyond the offset formulas.

use std::collections::BTreeMap;

use super::{BinaryAssignment, DecisionVars, JumpSpec, Limits, Plan, PlanError, SolverStats};
use crate::env::{LandingInterval, Parkour};
use crate::leg::JumpGeometry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Grid step for speed (m/s) and angle (rad).
    pub step: f64,
    /// Landing positions closer than this are merged in the search.
    pub bucket: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step: 0.005,
            bucket: 0.005,
        }
    }
}

/// Touchdown of one simulated jump.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Touchdown {
    x: f64,
    z: f64,
    t: f64,
}

/// Simulate the foot along its parabola until first terrain contact and
/// check clearances on the way. `None` if the jump collides, fails to land
/// properly or violates a limit.
fn simulate(
    env: &Parkour,
    pieces: &[(f64, f64, f64)],
    geometry: &JumpGeometry,
    limits: &Limits,
    from: (f64, f64),
    v: f64,
    theta: f64,
) -> Option<Touchdown> {
    let g = geometry.g;
    let o = geometry.offsets(theta);
    let (s, c) = theta.sin_cos();
    let (vx, vz) = (v * c, v * s);
    let x0 = from.0 + o.c_xe;
    let z0 = from.1 + o.c_ze;
    let foot_z = |x: f64| {
        let tau = (x - x0) / vx;
        z0 + vz * tau - 0.5 * g * tau * tau
    };
    let knee_z = |x: f64| {
        let tau = (x - from.0 - o.c_xk) / vx;
        from.1 + o.c_zk + vz * tau - 0.5 * g * tau * tau
    };
    // Descending crossing of height `h` by the foot, as an x coordinate.
    let descend_to = |h: f64| {
        let disc = vz * vz - 2.0 * g * (h - z0);
        if disc < 0.0 {
            None
        } else {
            Some(x0 + vx * (vz + disc.sqrt()) / g)
        }
    };

    // First piece whose top the foot meets on its way down. Entering any
    // piece below its top is a face hit.
    let mut touchdown = None;
    for &(start, end, h) in pieces {
        let lo = start.max(x0);
        if lo > end {
            continue;
        }
        if foot_z(lo) < h - 1e-12 {
            return None;
        }
        let xc = descend_to(h)?;
        if xc <= end {
            touchdown = Some((xc.max(lo), h));
            break;
        }
    }
    let (x, z) = touchdown?;
    let t = (x - x0) / vx;

    // Clearances over obstacle faces crossed during flight.
    for ob in env.obstacles() {
        let clear = ob.height + env.margin_v();
        if from.0 < ob.front && x >= ob.front && foot_z(ob.front) < clear {
            return None;
        }
        if from.0 <= ob.back && x > ob.back && (knee_z(ob.back) < clear || foot_z(ob.back) < clear) {
            return None;
        }
    }
    let ok = t >= limits.t_min - 1e-12
        && t <= limits.t_max + 1e-12
        && env.is_landable(x)
        && x <= env.x_max();
    ok.then_some(Touchdown { x, z, t })
}

/// Exact final-jump speed hitting `(x_t, z_t)` at angle `theta`.
fn final_speed(geometry: &JumpGeometry, from: (f64, f64), target: (f64, f64), theta: f64) -> Option<f64> {
    let o = geometry.offsets(theta);
    let dx = target.0 - from.0 - o.c_xe;
    let dz = target.1 - from.1 - o.c_ze;
    let c = theta.cos();
    let den = 2.0 * c * c * (dx * theta.tan() - dz);
    (dx > 0.0 && den > 0.0).then(|| (geometry.g * dx * dx / den).sqrt())
}

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).floor() as usize;
    (0..=n).map(move |i| lo + i as f64 * step)
}

#[derive(Debug, Clone, Copy)]
struct State {
    x: f64,
    z: f64,
    cost: f64,
    back: Option<(usize, i64)>,
    jump: (f64, f64, f64),
}

/// Minimum-flight-time plan of exactly `n` jumps by exhaustive grid search.
pub fn oracle_plan(
    env: &Parkour,
    geometry: &JumpGeometry,
    limits: &Limits,
    start: (f64, f64),
    x_t: f64,
    n: usize,
    config: &OracleConfig,
) -> Result<Plan, PlanError> {
    if n == 0 || x_t <= start.0 {
        return Err(PlanError::InvalidInput("oracle needs n ≥ 1 and a forward target".into()));
    }
    if !env.is_landable(x_t) {
        return Err(PlanError::Infeasible("target not landable".into()));
    }
    let z_t = env.height_at(x_t);
    let pieces = env.pieces();
    let speeds: Vec<f64> = grid(limits.v_min, limits.v_max, config.step).collect();
    let angles: Vec<f64> = grid(limits.theta_min, limits.theta_max, config.step).collect();
    let key = |x: f64| (x / config.bucket).round() as i64;

    let mut layers: Vec<BTreeMap<i64, State>> = Vec::with_capacity(n);
    let mut frontier = BTreeMap::new();
    frontier.insert(
        key(start.0),
        State {
            x: start.0,
            z: start.1,
            cost: 0.0,
            back: None,
            jump: (0.0, 0.0, 0.0),
        },
    );
    layers.push(frontier);

    for layer in 0..n - 1 {
        let mut next: BTreeMap<i64, State> = BTreeMap::new();
        for (&k, st) in &layers[layer] {
            for &theta in &angles {
                for &v in &speeds {
                    let Some(td) = simulate(env, &pieces, geometry, limits, (st.x, st.z), v, theta) else {
                        continue;
                    };
                    if td.x >= x_t {
                        continue;
                    }
                    let cand = State {
                        x: td.x,
                        z: td.z,
                        cost: st.cost + td.t,
                        back: Some((layer, k)),
                        jump: (td.t, v, theta),
                    };
                    next.entry(key(td.x))
                        .and_modify(|e| {
                            if cand.cost < e.cost {
                                *e = cand;
                            }
                        })
                        .or_insert(cand);
                }
            }
        }
        layers.push(next);
    }

    let mut best: Option<(f64, i64, (f64, f64, f64))> = None;
    for (&k, st) in &layers[n - 1] {
        for &theta in &angles {
            let Some(v) = final_speed(geometry, (st.x, st.z), (x_t, z_t), theta) else {
                continue;
            };
            if v < limits.v_min || v > limits.v_max {
                continue;
            }
            let Some(td) = simulate(env, &pieces, geometry, limits, (st.x, st.z), v, theta) else {
                continue;
            };
            if (td.x - x_t).abs() > 1e-6 {
                continue;
            }
            let cost = st.cost + td.t;
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, k, (td.t, v, theta)));
            }
        }
    }
    let Some((cost, mut k, last)) = best else {
        return Err(PlanError::Infeasible(format!("no grid chain of {n} jumps reaches {x_t:.3}")));
    };

    let mut chain = vec![last];
    let mut layer = n - 1;
    while layer > 0 {
        let st = layers[layer][&k];
        chain.push(st.jump);
        let (l, pk) = st.back.expect("non-root state has a parent");
        layer = l;
        k = pk;
    }
    chain.reverse();
    let vars = DecisionVars {
        t: chain.iter().map(|j| j.0).collect(),
        v: chain.iter().map(|j| j.1).collect(),
        theta: chain.iter().map(|j| j.2).collect(),
    };

    let mut jumps = Vec::with_capacity(n);
    let mut from = start;
    let mut landings = Vec::with_capacity(n);
    for i in 0..n {
        let td = simulate(env, &pieces, geometry, limits, from, vars.v[i], vars.theta[i])
            .expect("replayed chain stays valid");
        let segment = env
            .landing_intervals(env.x_min(), env.x_max())
            .into_iter()
            .find(|iv| iv.contains(td.x))
            .unwrap_or(LandingInterval {
                lo: td.x,
                hi: td.x,
                z: td.z,
            });
        jumps.push(JumpSpec {
            t: td.t,
            v: vars.v[i],
            theta: vars.theta[i],
            takeoff: [from.0, from.1],
            landing: [td.x, td.z],
            segment,
        });
        landings.push(td.x);
        from = (td.x, td.z);
    }
    let obstacles: Vec<_> = env.obstacles().to_vec();
    Ok(Plan {
        jumps,
        total_flight_time: cost,
        assignment: BinaryAssignment::from_positions(&obstacles, start.0, &landings),
        obstacle_ids: obstacles.iter().map(|o| o.id.clone()).collect(),
        solver_stats: SolverStats::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Obstacle, ParkourSpec, RestrictedArea};
    use crate::leg::GRAVITY;
    use approx::assert_abs_diff_eq;

    fn coarse() -> OracleConfig {
        OracleConfig {
            step: 0.01,
            bucket: 0.01,
        }
    }

    #[test]
    fn flat_single_jump() {
        let env = Parkour::flat(0.0, 3.0);
        let g = JumpGeometry::point_mass(GRAVITY);
        let plan = oracle_plan(&env, &g, &Limits::default(), (0.0, 0.0), 0.5, 1, &coarse()).unwrap();
        assert_abs_diff_eq!(plan.total_flight_time, 0.3193, epsilon = 2e-3);
    }

    #[test]
    fn tall_wall_is_infeasible() {
        let limits = Limits::default();
        let apex = limits.v_max * limits.v_max / (2.0 * GRAVITY);
        let env = Parkour::new(ParkourSpec {
            obstacles: vec![Obstacle::new("wall", 0.4, 0.6, apex + 0.05)],
            ..ParkourSpec::flat(0.0, 3.0)
        })
        .unwrap();
        let g = JumpGeometry::point_mass(GRAVITY);
        let r = oracle_plan(&env, &g, &limits, (0.0, 0.0), 1.0, 1, &coarse());
        assert!(matches!(r, Err(PlanError::Infeasible(_))));
    }

    #[test]
    fn restricted_target() {
        let env = Parkour::new(ParkourSpec {
            areas: vec![RestrictedArea::new(0.2, 1.5)],
            ..ParkourSpec::flat(0.0, 3.0)
        })
        .unwrap();
        let g = JumpGeometry::point_mass(GRAVITY);
        let r = oracle_plan(&env, &g, &Limits::default(), (0.0, 0.0), 1.0, 1, &coarse());
        assert!(matches!(r, Err(PlanError::Infeasible(_))));
    }

    #[test]
    fn lands_on_wall_front_face_is_rejected() {
        // Low flat jump straight into a tall face.
        let env = Parkour::new(ParkourSpec {
            obstacles: vec![Obstacle::new("o", 0.3, 0.5, 0.5)],
            ..ParkourSpec::flat(0.0, 3.0)
        })
        .unwrap();
        let g = JumpGeometry::point_mass(GRAVITY);
        let r = simulate(&env, &env.pieces(), &g, &Limits::default(), (0.0, 0.0), 2.0, 45f64.to_radians());
        assert!(r.is_none());
    }
}
