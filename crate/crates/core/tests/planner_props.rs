//! Invariants of single plans and of the receding-horizon step.

mod common;

use parkour_core::env::Parkour;
use parkour_core::leg::JumpGeometry;
use parkour_core::mppc::{jumps_range, mppc_step, MppcConfig};
use parkour_core::planner::{
    certify, plan_jumps, BinaryAssignment, Limits, Plan, PlanningWindow, SolverConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

fn case(seed: u64, point_mass: bool) -> (Parkour, PlanningWindow, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1 + (seed % 3) as usize;
    let length = 1.1 * n as f64 + 0.4;
    let env = common::small_course(&mut rng, length);
    let x_t = common::landable_target(&mut rng, &env, 0.5 * length, length - 0.05);
    let geometry = if point_mass {
        JumpGeometry::point_mass(9.81)
    } else {
        common::leg_geometry()
    };
    let window = PlanningWindow::new(&env, geometry, Limits::default(), 0.0, 0.0, x_t);
    (env, window, n)
}

fn check_plan(env: &Parkour, window: &PlanningWindow, plan: &Plan) -> Result<(), TestCaseError> {
    prop_assert!(certify(window, plan) <= TOL);
    let landings: Vec<f64> = plan.jumps.iter().map(|j| j.landing[0]).collect();
    prop_assert!((landings.last().unwrap() - window.x_t).abs() <= TOL);
    prop_assert_eq!(
        &plan.assignment,
        &BinaryAssignment::from_positions(&window.obstacles, window.x_s, &landings)
    );
    prop_assert!(plan.assignment.is_monotone());
    let mut prev = window.x_s;
    for j in &plan.jumps {
        prop_assert!(j.landing[0] > prev);
        prev = j.landing[0];
        let x = j.landing[0];
        prop_assert!(window.intervals.iter().any(|iv| iv.lo - TOL <= x && x <= iv.hi + TOL));
        prop_assert!((j.landing[1] - env.height_at(j.landing[0])).abs() <= TOL);
        let (_, vz) = j.velocity();
        prop_assert!(vz - window.geometry.g * j.t < 0.0, "touchdown while rising");
    }
    let total: f64 = plan.jumps.iter().map(|j| j.t).sum();
    prop_assert!((total - plan.total_flight_time).abs() <= 1e-12);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn plans_are_feasible_and_consistent(seed in 0u64..10_000) {
        let (env, window, n) = case(seed, false);
        if let Ok(plan) = plan_jumps(&window, n, &SolverConfig::default()) {
            prop_assert_eq!(plan.jumps.len(), n);
            check_plan(&env, &window, &plan)?;
        }
    }

    /// A point-mass arc is a parabola, so sampling it must never dip into the
    /// terrain between take-off and touchdown.
    #[test]
    fn point_mass_arcs_clear_terrain(seed in 0u64..10_000) {
        let (env, window, n) = case(seed, true);
        let Ok(plan) = plan_jumps(&window, n, &SolverConfig::default()) else {
            return Ok(());
        };
        check_plan(&env, &window, &plan)?;
        for j in &plan.jumps {
            let (vx, vz) = j.velocity();
            for i in 1..200 {
                let s = j.t * i as f64 / 200.0;
                let x = j.takeoff[0] + vx * s;
                let z = j.takeoff[1] + vz * s - 0.5 * 9.81 * s * s;
                prop_assert!(z >= env.height_at(x) - TOL, "arc below terrain at x={x}");
            }
        }
    }

    #[test]
    fn mppc_is_deterministic_and_uses_fewest_jumps(seed in 0u64..10_000) {
        let (env, window, _) = case(seed, false);
        let config = MppcConfig { x_g: window.x_t, ..MppcConfig::default() };
        let solver = SolverConfig::default();
        let a = mppc_step(&env, &window.geometry, 0.0, &config, &solver);
        let b = mppc_step(&env, &window.geometry, 0.0, &config, &solver);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a.full_plan.jumps, &b.full_plan.jumps);
                prop_assert_eq!(a.horizon_used, b.horizon_used);
                prop_assert_eq!(a.first_jump, a.full_plan.jumps[0]);
                let tried = PlanningWindow::new(&env, window.geometry, config.limits, 0.0, 0.0, a.target_used);
                for n in jumps_range(&window.geometry, 0.0, a.target_used, &config.limits, config.n_slack) {
                    if n == a.horizon_used {
                        break;
                    }
                    prop_assert!(plan_jumps(&tried, n, &solver).is_err(), "N={} also succeeds", n);
                }
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "same input gave different outcomes"),
        }
    }
}
