//! Event-level hopper simulation: a point-mass hip with a kinematic two-link
//! leg, cycling through the stance and flight phases and replanning once
//! per stance.

mod contact;
mod executor;
mod log;
mod planning;

use serde::{Deserialize, Serialize};

pub use contact::{arc_contact, detect_contact, ContactEvent, ContactKind, FlightArc, Segment};
pub use executor::{run_episode, Executor, SimState};
pub use log::{
    EpisodeLog, EpisodeMeta, EventKind, JumpRecord, LogEvent, LogLine, LogReadError, PlanSummary,
    TickSample,
};
pub use planning::{InlinePlanner, PlanRequest, PlanSource, ThreadedPlanner};

use crate::env::EnvironmentUpdate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initialization,
    Flight,
    Absorption,
    Reposition,
    Staging,
    Exertion,
}

impl Phase {
    /// Successor in the stance/flight cycle.
    pub fn next(self) -> Phase {
        match self {
            Phase::Initialization => Phase::Reposition,
            Phase::Flight => Phase::Absorption,
            Phase::Absorption => Phase::Reposition,
            Phase::Reposition => Phase::Staging,
            Phase::Staging => Phase::Exertion,
            Phase::Exertion => Phase::Flight,
        }
    }

    pub fn is_grounded(self) -> bool {
        self != Phase::Flight
    }
}

/// Joint-space tracking for one phase. Setpoints are followed with a
/// first-order lag of rate `kp / kd` (1/s); `kd = 0` snaps to the setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGain {
    pub kp: f64,
    pub kd: f64,
    /// Nominal duration (s); zero for phases ended by events.
    #[serde(default)]
    pub duration: f64,
}

impl PhaseGain {
    pub const fn new(kp: f64, kd: f64, duration: f64) -> Self {
        Self { kp, kd, duration }
    }

    /// Fraction of the remaining setpoint error removed over `dt`.
    pub fn blend(&self, dt: f64) -> f64 {
        if self.kp <= 0.0 {
            0.0
        } else if self.kd <= 0.0 {
            1.0
        } else {
            1.0 - (-dt * self.kp / self.kd).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseGains {
    pub initialization: PhaseGain,
    pub flight: PhaseGain,
    pub absorption: PhaseGain,
    pub reposition: PhaseGain,
    pub staging: PhaseGain,
    pub exertion: PhaseGain,
    /// Foot-to-hip distance held while crouched (m).
    pub crouch_extension: f64,
}

impl Default for PhaseGains {
    fn default() -> Self {
        Self {
            initialization: PhaseGain::new(20.0, 0.5, 0.5),
            flight: PhaseGain::new(20.0, 0.5, 0.0),
            absorption: PhaseGain::new(8.0, 0.4, 0.15),
            reposition: PhaseGain::new(20.0, 0.4, 0.2),
            staging: PhaseGain::new(60.0, 0.4, 0.1),
            exertion: PhaseGain::new(0.0, 0.0, 0.0),
            crouch_extension: 0.2,
        }
    }
}

impl PhaseGains {
    pub fn get(&self, phase: Phase) -> &PhaseGain {
        match phase {
            Phase::Initialization => &self.initialization,
            Phase::Flight => &self.flight,
            Phase::Absorption => &self.absorption,
            Phase::Reposition => &self.reposition,
            Phase::Staging => &self.staging,
            Phase::Exertion => &self.exertion,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            (Phase::Initialization, true),
            (Phase::Flight, false),
            (Phase::Absorption, true),
            (Phase::Reposition, true),
            (Phase::Staging, true),
            (Phase::Exertion, false),
        ];
        for (phase, timed) in all {
            let g = self.get(phase);
            if !(g.kp >= 0.0 && g.kd >= 0.0 && g.duration >= 0.0) || !g.kp.is_finite() || !g.kd.is_finite() {
                return Err(format!("{phase:?} gains must be finite and non-negative"));
            }
            if timed && !(g.duration > 0.0 && g.duration.is_finite()) {
                return Err(format!("{phase:?} duration must be positive"));
            }
        }
        if !(self.crouch_extension > 0.0 && self.crouch_extension.is_finite()) {
            return Err("crouch extension must be positive".into());
        }
        Ok(())
    }
}

/// Gaussian execution noise applied at every take-off.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Noise {
    /// Take-off speed standard deviation (m/s).
    pub sigma_v: f64,
    /// Take-off angle standard deviation (rad).
    pub sigma_theta: f64,
}

impl Noise {
    pub fn is_zero(&self) -> bool {
        self.sigma_v == 0.0 && self.sigma_theta == 0.0
    }
}

/// When a scripted event fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// Simulation time (s).
    Time(f64),
    /// `after` seconds into the flight of jump `jump` (1-based).
    Flight { jump: usize, after: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Update(EnvironmentUpdate),
    /// Hip velocity change (m/s).
    Impulse { dv_x: f64, dv_z: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedEvent {
    pub trigger: Trigger,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("velocity impulses need the leg in flight, not {0:?}")]
    WrongPhase(Phase),
    #[error("edit would put terrain under the foot")]
    FootCovered,
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GoalReached,
    FrontCollision,
    BackCollision,
    /// Planning failed and nothing scheduled could change the course, or
    /// the retry budget ran out.
    PlanningFailed,
    TimedOut,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        self == Outcome::GoalReached
    }

    /// Physical failures, as opposed to running out of plans or time.
    pub fn is_hard_failure(self) -> bool {
        matches!(self, Outcome::FrontCollision | Outcome::BackCollision)
    }
}

/// Episode-level settings that are not part of the leg or planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunLimits {
    /// Integration step (s).
    pub dt: f64,
    /// Simulated time budget (s).
    pub max_time: f64,
    /// Consecutive failed planning attempts tolerated in Staging.
    pub max_plan_retries: usize,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self {
            dt: 1.0 / 200.0,
            max_time: 60.0,
            max_plan_retries: 200,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_cycle() {
        let mut p = Phase::Flight;
        let mut seen = vec![p];
        for _ in 0..5 {
            p = p.next();
            seen.push(p);
        }
        assert_eq!(
            seen,
            vec![
                Phase::Flight,
                Phase::Absorption,
                Phase::Reposition,
                Phase::Staging,
                Phase::Exertion,
                Phase::Flight
            ]
        );
        assert_eq!(Phase::Initialization.next(), Phase::Reposition);
    }

    #[test]
    fn blend_limits() {
        assert_eq!(PhaseGain::new(0.0, 1.0, 0.0).blend(0.1), 0.0);
        assert_eq!(PhaseGain::new(1.0, 0.0, 0.0).blend(0.1), 1.0);
        let b = PhaseGain::new(10.0, 1.0, 0.0).blend(0.1);
        assert!((b - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn event_json_shape() {
        let ev: TimedEvent = serde_json::from_str(
            r#"{"trigger": {"flight": {"jump": 3, "after": 0.1}}, "action": {"impulse": {"dv_x": -0.3, "dv_z": 0.0}}}"#,
        )
        .unwrap();
        assert_eq!(ev.trigger, Trigger::Flight { jump: 3, after: 0.1 });
        let ev: TimedEvent = serde_json::from_str(
            r#"{"trigger": {"time": 2.5}, "action": {"update": {"op": "remove_obstacle", "id": "o1"}}}"#,
        )
        .unwrap();
        assert_eq!(ev.trigger, Trigger::Time(2.5));
    }
}
