//! Episode records and their JSON-lines form.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Outcome, Phase};
use crate::env::{EnvironmentUpdate, Parkour};
use crate::leg::LegParams;
use crate::mppc::MppcResult;
use crate::planner::JumpSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSample {
    pub t: f64,
    pub phase: Phase,
    pub hip: [f64; 2],
    pub hip_velocity: [f64; 2],
    pub foot: [f64; 2],
    pub knee: [f64; 2],
    pub q: [f64; 2],
    /// Hip and knee torque, logged during exertion only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque: Option<[f64; 2]>,
}

/// Planner output kept with each executed jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub target: f64,
    pub horizon: usize,
    pub total_flight_time: f64,
    pub loop_time: f64,
    pub setup_time: f64,
    pub solve_time: f64,
    pub nodes: usize,
    pub iterations: usize,
    /// Every planned jump of the window, first one executed.
    pub jumps: Vec<JumpSpec>,
}

impl From<&MppcResult> for PlanSummary {
    fn from(r: &MppcResult) -> Self {
        Self {
            target: r.target_used,
            horizon: r.horizon_used,
            total_flight_time: r.full_plan.total_flight_time,
            loop_time: r.loop_time.as_secs_f64(),
            setup_time: r.setup_time.as_secs_f64(),
            solve_time: r.solve_time.as_secs_f64(),
            nodes: r.full_plan.solver_stats.nodes_expanded,
            iterations: r.full_plan.solver_stats.iterations,
            jumps: r.full_plan.jumps.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    /// 1-based.
    pub number: usize,
    pub takeoff_time: f64,
    pub plan: PlanSummary,
    /// Take-off angle actually used (rad).
    pub theta_c: f64,
    /// Corrected release speed before speed noise (m/s).
    pub v_c: f64,
    /// Release speed including noise (m/s).
    pub v_release: f64,
    /// Hip at release.
    pub release_hip: [f64; 2],
    pub landing_time: Option<f64>,
    pub landing: Option<[f64; 2]>,
    /// Landing x minus planned landing x.
    pub landing_error: Option<f64>,
    /// Largest relative change of `½|v|² + g z` over the undisturbed flight.
    pub energy_drift: f64,
    pub disturbed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    EnvironmentUpdate { update: EnvironmentUpdate, version: u64 },
    EnvironmentUpdateRejected { update: EnvironmentUpdate, reason: String },
    Disturbance { dv: [f64; 2] },
    DisturbanceRejected { dv: [f64; 2], phase: Phase },
    PhaseChange { from: Phase, to: Phase },
    PlanRequested { x_s: f64 },
    PlanFailed { reason: String },
    MarginViolation { x: f64, restricted: bool },
    Collision { kind: super::ContactKind, point: [f64; 2], obstacle: Option<String> },
    GoalReached { x: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub name: String,
    pub seed: u64,
    pub dt: f64,
    pub x_s: f64,
    pub x_g: f64,
    /// Course at the start of the episode.
    pub parkour: Parkour,
    pub leg: LegParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub meta: EpisodeMeta,
    pub ticks: Vec<TickSample>,
    pub jumps: Vec<JumpRecord>,
    pub events: Vec<LogEvent>,
    pub outcome: Option<Outcome>,
    pub end_time: f64,
}

/// One line of the JSON-lines form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Meta(EpisodeMeta),
    Tick(TickSample),
    Event(LogEvent),
    Jump(JumpRecord),
    End { t: f64, outcome: Option<Outcome> },
}

impl EpisodeLog {
    pub fn new(meta: EpisodeMeta) -> Self {
        Self {
            meta,
            ticks: Vec::new(),
            jumps: Vec::new(),
            events: Vec::new(),
            outcome: None,
            end_time: 0.0,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.outcome.is_some_and(|o| o.is_success())
    }

    pub fn hard_failures(&self) -> usize {
        usize::from(self.outcome.is_some_and(|o| o.is_hard_failure()))
    }

    pub fn margin_violations(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::MarginViolation { .. }))
            .count()
    }

    /// Lines ordered by time: ticks, then events and finished jumps at their
    /// timestamps, then the outcome.
    pub fn lines(&self) -> Vec<LogLine> {
        let mut keyed: Vec<(f64, u8, LogLine)> = Vec::new();
        keyed.extend(self.ticks.iter().map(|t| (t.t, 0, LogLine::Tick(t.clone()))));
        keyed.extend(self.events.iter().map(|e| (e.t, 1, LogLine::Event(e.clone()))));
        keyed.extend(self.jumps.iter().map(|j| {
            (
                j.landing_time.unwrap_or(self.end_time),
                2,
                LogLine::Jump(j.clone()),
            )
        }));
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out = Vec::with_capacity(keyed.len() + 2);
        out.push(LogLine::Meta(self.meta.clone()));
        out.extend(keyed.into_iter().map(|(_, _, l)| l));
        out.push(LogLine::End {
            t: self.end_time,
            outcome: self.outcome,
        });
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for line in self.lines() {
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, LogReadError> {
        let mut log: Option<EpisodeLog> = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine =
                serde_json::from_str(&line).map_err(|e| LogReadError::Line { line: i + 1, source: e })?;
            match parsed {
                LogLine::Meta(meta) => log = Some(EpisodeLog::new(meta)),
                other => {
                    let log = log.as_mut().ok_or(LogReadError::MissingMeta)?;
                    match other {
                        LogLine::Tick(t) => log.ticks.push(t),
                        LogLine::Event(e) => log.events.push(e),
                        LogLine::Jump(j) => log.jumps.push(j),
                        LogLine::End { t, outcome } => {
                            log.end_time = t;
                            log.outcome = outcome;
                        }
                        LogLine::Meta(_) => unreachable!(),
                    }
                }
            }
        }
        let mut log = log.ok_or(LogReadError::MissingMeta)?;
        log.jumps.sort_by_key(|j| j.number);
        Ok(log)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogReadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Line { line: usize, source: serde_json::Error },
    #[error("log has no meta line")]
    MissingMeta,
}
