//! Frames projected from a running executor.

use parkour_core::env::{Obstacle, Parkour, ParkourSpec};
use parkour_core::leg::{forward_kinematics, knee_position};
use parkour_core::scenario::Scenario;
use parkour_core::sim::{Executor, InlinePlanner, Outcome, Phase};
use parkour_live::{snapshot_frame, Frame, FrameContext};

fn course() -> Scenario {
    let parkour = Parkour::new(ParkourSpec {
        obstacles: vec![Obstacle::new("o1", 1.0, 1.2, 0.1)],
        ..ParkourSpec::flat(0.0, 3.0)
    })
    .unwrap();
    Scenario {
        parkour,
        x_g: 2.0,
        ..Scenario::flat(0.0, 3.0)
    }
}

fn context(circumference: f64) -> FrameContext {
    FrameContext {
        episode: 0,
        x_g: 2.0,
        paused: false,
        speed: 1.0,
        circumference,
        origin: 0.0,
        recent_events: 16,
    }
}

fn close(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
}

#[test]
fn frames_follow_the_executor() {
    let mut ex = Executor::new(&course(), Box::new(InlinePlanner::new())).unwrap();
    let ctx = context(3.0);
    let mut flights = 0;
    let mut with_plan = 0;
    loop {
        let f = snapshot_frame(&ex, &ctx);
        let s = ex.state();
        let leg = ex.leg();
        assert_eq!((f.t, f.phase, f.jumps), (s.time, s.phase, s.jumps));
        match s.anchor {
            Some(anchor) => assert_eq!(f.foot, anchor),
            None => {
                flights += 1;
                let fk = forward_kinematics(leg, &s.joints);
                assert!(close(f.foot, [s.hip[0] + fk.x, s.hip[1] + fk.y]));
            }
        }
        let k = knee_position(leg, &s.joints);
        assert!(close(f.knee, [s.hip[0] + k.x, s.hip[1] + k.y]));
        for arc in &f.plan {
            with_plan += 1;
            // The foot leaves the ground ahead of the stance point.
            assert!(arc.points[0][0] > arc.takeoff[0] && arc.points[0][1] >= arc.takeoff[1], "{arc:?}");
            let end = *arc.points.last().unwrap();
            assert!((end[0] - arc.landing[0]).abs() < 1e-9 && (end[1] - arc.landing[1]).abs() < 1e-9);
        }
        assert!(f.events.len() <= 16);
        assert!(f.events.windows(2).all(|w| w[1].seq == w[0].seq + 1));
        if let Some(last) = f.events.last() {
            assert_eq!(last.seq + 1, ex.log().events.len());
        }
        if f.outcome.is_some() {
            assert_eq!(f.outcome, Some(Outcome::GoalReached));
            break;
        }
        ex.tick();
    }
    assert!(flights > 0 && with_plan > 0);
    assert_ne!(ex.state().phase, Phase::Flight);
}

#[test]
fn frames_round_trip_through_json() {
    let mut ex = Executor::new(&course(), Box::new(InlinePlanner::new())).unwrap();
    while ex.state().phase != Phase::Flight {
        ex.tick();
    }
    let f = snapshot_frame(&ex, &context(3.0));
    assert!(!f.plan.is_empty());
    let back: Frame = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
    assert_eq!(back, f);
}

#[test]
fn display_wraps_onto_the_track() {
    let mut ex = Executor::new(&course(), Box::new(InlinePlanner::new())).unwrap();
    while ex.state().hip[0] < 0.8 {
        ex.tick();
    }
    let f = snapshot_frame(&ex, &context(0.5));
    assert_eq!(f.display.circumference, 0.5);
    for (raw, shown) in [(f.hip[0], f.display.hip_x), (f.foot[0], f.display.foot_x), (f.knee[0], f.display.knee_x)] {
        assert!((0.0..0.5).contains(&shown), "{raw} shown at {shown}");
        let laps = (raw - shown) / 0.5;
        assert!((laps - laps.round()).abs() < 1e-9);
    }
}
