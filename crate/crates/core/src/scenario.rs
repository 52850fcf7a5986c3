//! Declarative experiment description, stored as JSON.

use serde::{Deserialize, Serialize};

use crate::env::{EnvError, FeatureKind, FeatureRef, Parkour, ParkourSpec};
use crate::leg::LegParams;
use crate::mppc::MppcConfig;
use crate::planner::{Limits, SolverConfig};
use crate::sim::{Noise, PhaseGains, RunLimits, TimedEvent, Trigger};

pub const SCHEMA_VERSION: u32 = 1;

/// Receding-horizon settings; the goal comes from the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppcSettings {
    /// Lookahead (m).
    pub p: f64,
    pub n_slack: usize,
    /// Also the goal tolerance of the episode.
    pub goal_tolerance: f64,
    /// Seconds per target before falling back; `null` for no limit.
    pub target_budget: Option<f64>,
}

impl Default for MppcSettings {
    fn default() -> Self {
        let d = MppcConfig::default();
        Self {
            p: d.p,
            n_slack: d.n_slack,
            goal_tolerance: d.goal_tolerance,
            target_budget: d.target_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    #[serde(default)]
    name: String,
    parkour: ParkourSpec,
    #[serde(default)]
    leg: LegParams,
    #[serde(default)]
    limits: Limits,
    #[serde(default)]
    mppc: MppcSettings,
    #[serde(default)]
    solver: SolverConfig,
    #[serde(default)]
    gains: PhaseGains,
    #[serde(default)]
    noise: Noise,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    run: RunLimits,
    #[serde(default)]
    events: Vec<TimedEvent>,
    x_s: f64,
    x_g: f64,
}

/// A validated scenario. Build one with [`parse_scenario`] or
/// [`Scenario::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScenario", into = "RawScenario")]
pub struct Scenario {
    pub name: String,
    pub parkour: Parkour,
    pub leg: LegParams,
    pub limits: Limits,
    pub mppc: MppcSettings,
    pub solver: SolverConfig,
    pub gains: PhaseGains,
    pub noise: Noise,
    pub seed: u64,
    pub run: RunLimits,
    pub events: Vec<TimedEvent>,
    pub x_s: f64,
    pub x_g: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ParseError {
    /// Dotted path to the offending field, e.g. `parkour.obstacles[1].B`.
    pub path: String,
    pub message: String,
}

impl ParseError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn feature_path(feature: &FeatureRef, field: &str) -> String {
    let list = match feature.kind {
        FeatureKind::Obstacle => "obstacles",
        FeatureKind::Area => "areas",
    };
    format!("parkour.{list}[{}].{field}", feature.index)
}

fn env_error_path(spec: &ParkourSpec, err: &EnvError) -> String {
    let obstacle_index = |id: &str| spec.obstacles.iter().position(|o| o.id == id);
    match err {
        EnvError::InvertedBounds { feature } => {
            let field = if feature.kind == FeatureKind::Obstacle { "B" } else { "b" };
            feature_path(feature, field)
        }
        EnvError::OutOfExtent { feature } | EnvError::NonFinite { feature } => {
            let field = if feature.kind == FeatureKind::Obstacle { "A" } else { "a" };
            feature_path(feature, field)
        }
        EnvError::OverlappingObstacles { second, .. } => match obstacle_index(second) {
            Some(i) => format!("parkour.obstacles[{i}].A"),
            None => "parkour.obstacles".into(),
        },
        EnvError::NonPositiveHeight { id } => match obstacle_index(id) {
            Some(i) => format!("parkour.obstacles[{i}].H"),
            None => "parkour.obstacles".into(),
        },
        EnvError::DuplicateId(id) => match spec.obstacles.iter().rposition(|o| &o.id == id) {
            Some(i) => format!("parkour.obstacles[{i}].id"),
            None => "parkour".into(),
        },
        EnvError::InvalidMargin => "parkour.M_h".into(),
        EnvError::InvalidExtent => "parkour.x_max".into(),
        EnvError::PositionOutOfExtent { .. } | EnvError::UnknownId(_) => "parkour".into(),
    }
}

impl TryFrom<RawScenario> for Scenario {
    type Error = ParseError;

    fn try_from(raw: RawScenario) -> Result<Self, ParseError> {
        if raw.schema_version != SCHEMA_VERSION {
            return Err(ParseError::at(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", raw.schema_version),
            ));
        }
        let parkour = Parkour::new(raw.parkour.clone())
            .map_err(|e| ParseError::at(env_error_path(&raw.parkour, &e), e.to_string()))?;
        let scenario = Scenario {
            name: raw.name,
            parkour,
            leg: raw.leg,
            limits: raw.limits,
            mppc: raw.mppc,
            solver: raw.solver,
            gains: raw.gains,
            noise: raw.noise,
            seed: raw.seed,
            run: raw.run,
            events: raw.events,
            x_s: raw.x_s,
            x_g: raw.x_g,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

impl From<Scenario> for RawScenario {
    fn from(s: Scenario) -> Self {
        RawScenario {
            schema_version: SCHEMA_VERSION,
            name: s.name,
            parkour: s.parkour.to_spec(),
            leg: s.leg,
            limits: s.limits,
            mppc: s.mppc,
            solver: s.solver,
            gains: s.gains,
            noise: s.noise,
            seed: s.seed,
            run: s.run,
            events: s.events,
            x_s: s.x_s,
            x_g: s.x_g,
        }
    }
}

impl Scenario {
    /// A flat course from `x_s` to `x_g` with every default.
    pub fn flat(x_s: f64, x_g: f64) -> Self {
        let lo = x_s.min(x_g);
        let hi = x_s.max(x_g);
        Scenario {
            name: "flat".into(),
            parkour: Parkour::flat(lo, hi + 0.5),
            leg: LegParams::default(),
            limits: Limits::default(),
            mppc: MppcSettings::default(),
            solver: SolverConfig::default(),
            gains: PhaseGains::default(),
            noise: Noise::default(),
            seed: 0,
            run: RunLimits::default(),
            events: Vec::new(),
            x_s,
            x_g,
        }
    }

    pub fn validate(&self) -> Result<(), ParseError> {
        self.leg.validate().map_err(|e| ParseError::at("leg", e.to_string()))?;
        self.limits
            .validate()
            .map_err(|e| ParseError::at("limits", e.to_string()))?;
        let m = &self.mppc;
        if !(m.p > 0.0 && m.p.is_finite()) {
            return Err(ParseError::at("mppc.p", "lookahead must be positive"));
        }
        if !(m.goal_tolerance >= 0.0 && m.goal_tolerance.is_finite()) {
            return Err(ParseError::at("mppc.goal_tolerance", "must be finite and non-negative"));
        }
        if m.target_budget.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
            return Err(ParseError::at("mppc.target_budget", "must be positive or null"));
        }
        self.gains.validate().map_err(|e| ParseError::at("gains", e))?;
        if self.gains.crouch_extension >= self.leg.takeoff_extension {
            return Err(ParseError::at(
                "gains.crouch_extension",
                "crouch must be shorter than the take-off extension",
            ));
        }
        if self.gains.crouch_extension <= self.leg.min_reach() {
            return Err(ParseError::at("gains.crouch_extension", "crouch is closer than the leg can fold"));
        }
        let n = &self.noise;
        if !(n.sigma_v >= 0.0 && n.sigma_v.is_finite()) {
            return Err(ParseError::at("noise.sigma_v", "must be finite and non-negative"));
        }
        if !(n.sigma_theta >= 0.0 && n.sigma_theta.is_finite()) {
            return Err(ParseError::at("noise.sigma_theta", "must be finite and non-negative"));
        }
        let r = &self.run;
        if !(r.dt > 0.0 && r.dt.is_finite()) {
            return Err(ParseError::at("run.dt", "must be positive"));
        }
        if !(r.max_time > 0.0 && r.max_time.is_finite()) {
            return Err(ParseError::at("run.max_time", "must be positive"));
        }
        for (name, x) in [("x_s", self.x_s), ("x_g", self.x_g)] {
            if !x.is_finite() || x < self.parkour.x_min() || x > self.parkour.x_max() {
                return Err(ParseError::at(name, format!("{x} is outside the course extent")));
            }
        }
        if self.parkour.locate(self.x_s).is_err() || self.parkour.is_restricted(self.x_s) {
            return Err(ParseError::at("x_s", "start must be on open ground"));
        }
        let mut last_time = f64::NEG_INFINITY;
        for (i, ev) in self.events.iter().enumerate() {
            match ev.trigger {
                Trigger::Time(t) => {
                    if !(t.is_finite() && t >= 0.0) {
                        return Err(ParseError::at(format!("events[{i}].trigger.time"), "must be finite and non-negative"));
                    }
                    if t < last_time {
                        return Err(ParseError::at(
                            format!("events[{i}].trigger.time"),
                            "timed events must be listed in order",
                        ));
                    }
                    last_time = t;
                }
                Trigger::Flight { jump, after } => {
                    if jump == 0 {
                        return Err(ParseError::at(format!("events[{i}].trigger.flight.jump"), "jumps count from 1"));
                    }
                    if !(after.is_finite() && after >= 0.0) {
                        return Err(ParseError::at(
                            format!("events[{i}].trigger.flight.after"),
                            "must be finite and non-negative",
                        ));
                    }
                }
            }
            if let crate::sim::Action::Impulse { dv_x, dv_z } = ev.action {
                if !(dv_x.is_finite() && dv_z.is_finite()) {
                    return Err(ParseError::at(format!("events[{i}].action.impulse"), "must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn mppc_config(&self) -> MppcConfig {
        MppcConfig {
            p: self.mppc.p,
            x_g: self.x_g,
            limits: self.limits,
            n_slack: self.mppc.n_slack,
            goal_tolerance: self.mppc.goal_tolerance,
            target_budget: self.mppc.target_budget,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Same course and settings apart from the seed.
    pub fn with_seed(&self, seed: u64) -> Scenario {
        Scenario {
            seed,
            ..self.clone()
        }
    }
}

/// Strict parse: unknown fields are errors, omitted optional blocks take
/// their defaults, and every error carries the path of the field at fault.
pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ParseError::at(path, e.into_inner().to_string())
    })?;
    Scenario::try_from(raw)
}

/// Scenarios shipped with the crate, by name.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "static_course" => Some(include_str!("../scenarios/static_course.json")),
        "dynamic_course" => Some(include_str!("../scenarios/dynamic_course.json")),
        "disturbed_course" => Some(include_str!("../scenarios/disturbed_course.json")),
        _ => None,
    }
}

pub const BUNDLED: [&str; 3] = ["static_course", "dynamic_course", "disturbed_course"];

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema_version": 1, "parkour": {"x_min": 0, "x_max": 2}, "x_s": 0, "x_g": 1.6}"#;

    #[test]
    fn minimal_takes_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.parkour.margin_h(), 0.05);
        assert_eq!(s.parkour.margin_v(), 0.05);
        assert_eq!(s.gains, PhaseGains::default());
        assert_eq!(s.run.dt, 1.0 / 200.0);
    }

    #[test]
    fn inverted_obstacle_path() {
        let text = r#"{"schema_version": 1,
            "parkour": {"x_min": 0, "x_max": 5, "obstacles": [
                {"id": "a", "A": 1.0, "B": 1.2, "H": 0.1},
                {"id": "b", "A": 3.0, "B": 2.5, "H": 0.1}]},
            "x_s": 0, "x_g": 4}"#;
        let err = parse_scenario(text).unwrap_err();
        assert_eq!(err.path, "parkour.obstacles[1].B");
    }

    #[test]
    fn unknown_field_path() {
        let text = r#"{"schema_version": 1, "parkour": {"x_min": 0, "x_max": 2, "wall": 1}, "x_s": 0, "x_g": 1}"#;
        let err = parse_scenario(text).unwrap_err();
        assert_eq!(err.path, "parkour.wall");
        assert!(err.message.contains("wall"), "{err}");
        let text = r#"{"schema_version": 1, "parkour": {"x_min": 0, "x_max": 2}, "x_s": 0, "x_g": 1, "extra": 0}"#;
        assert!(parse_scenario(text).unwrap_err().message.contains("extra"));
    }

    #[test]
    fn wrong_type_path() {
        let text = r#"{"schema_version": 1, "parkour": {"x_min": 0, "x_max": 2}, "noise": {"sigma_v": "x"}, "x_s": 0, "x_g": 1}"#;
        assert_eq!(parse_scenario(text).unwrap_err().path, "noise.sigma_v");
    }

    #[test]
    fn version_checked() {
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert_eq!(parse_scenario(&text).unwrap_err().path, "schema_version");
    }

    #[test]
    fn unordered_events_rejected() {
        let text = r#"{"schema_version": 1, "parkour": {"x_min": 0, "x_max": 2}, "x_s": 0, "x_g": 1,
            "events": [
                {"trigger": {"time": 2.0}, "action": {"impulse": {"dv_x": 0, "dv_z": 0}}},
                {"trigger": {"time": 1.0}, "action": {"impulse": {"dv_x": 0, "dv_z": 0}}}]}"#;
        assert_eq!(parse_scenario(text).unwrap_err().path, "events[1].trigger.time");
    }

    #[test]
    fn bundled_parse_and_round_trip() {
        for name in BUNDLED {
            let s = parse_scenario(bundled(name).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
            let again = parse_scenario(&s.to_json()).unwrap();
            assert_eq!(s, again, "{name}");
        }
    }
}
