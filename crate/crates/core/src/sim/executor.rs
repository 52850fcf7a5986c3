//! The stance/flight state machine.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::contact::{arc_contact, ContactKind, FlightArc};
use super::log::{EpisodeLog, EpisodeMeta, EventKind, JumpRecord, LogEvent, PlanSummary, TickSample};
use super::planning::{PlanRequest, PlanSource};
use super::{Action, Outcome, Phase, PhaseGains, SimError, Trigger};
use crate::env::{EnvironmentUpdate, Parkour};
use crate::leg::{
    exertion_force, exertion_velocity, flight_config, forward_kinematics, inverse_kinematics,
    joint_torques, knee_position, JointState, JumpGeometry, KneeBend, LegParams,
};
use crate::mppc::{MppcConfig, MppcResult};
use crate::planner::SolverConfig;
use crate::scenario::Scenario;

const EPS: f64 = 1e-9;
/// Landings this close to landable ground are not margin violations.
const LANDING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub time: f64,
    pub phase: Phase,
    pub hip: [f64; 2],
    pub hip_velocity: [f64; 2],
    pub joints: JointState,
    /// Foot contact point while grounded.
    pub anchor: Option<[f64; 2]>,
    /// Time spent in the current phase (s).
    pub phase_time: f64,
    pub pending_plan: Option<MppcResult>,
    /// Take-offs so far.
    pub jumps: usize,
}

impl SimState {
    pub fn foot(&self, leg: &LegParams) -> [f64; 2] {
        match self.anchor {
            Some(a) => a,
            None => {
                let f = forward_kinematics(leg, &self.joints);
                [self.hip[0] + f.x, self.hip[1] + f.y]
            }
        }
    }

    pub fn knee(&self, leg: &LegParams) -> [f64; 2] {
        let k = knee_position(leg, &self.joints);
        [self.hip[0] + k.x, self.hip[1] + k.y]
    }
}

#[derive(Debug, Clone, Copy)]
struct Push {
    start: f64,
    anchor: [f64; 2],
    u: [f64; 2],
    r0: f64,
    accel: f64,
    duration: f64,
    force: Vector2<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Motion {
    /// Hip at `anchor + r (cos φ, sin φ)`.
    Stance { r: f64, phi: f64 },
    Push(Push),
    Flight(FlightArc),
}

/// Runs one episode tick by tick.
pub struct Executor {
    leg: LegParams,
    geometry: JumpGeometry,
    gains: PhaseGains,
    noise: super::Noise,
    dt: f64,
    max_time: f64,
    max_retries: usize,
    mppc: MppcConfig,
    solver: SolverConfig,
    env: Parkour,
    env_version: u64,
    planner: Box<dyn PlanSource>,
    awaiting_plan: bool,
    /// Course version of the last failed plan; planning resumes once the
    /// course changes.
    stalled_on: Option<u64>,
    /// Course version the outstanding request was made against.
    planned_version: u64,
    hold_on_stall: bool,
    retries: usize,
    rng: ChaCha8Rng,
    timed: Vec<(f64, Action)>,
    next_timed: usize,
    flight_events: Vec<(usize, f64, Action, bool)>,
    state: SimState,
    motion: Motion,
    ticks: u64,
    flight_joints: JointState,
    energy_ref: f64,
    log: EpisodeLog,
    outcome: Option<Outcome>,
}

fn polar(anchor: [f64; 2], r: f64, phi: f64) -> [f64; 2] {
    [anchor[0] + r * phi.cos(), anchor[1] + r * phi.sin()]
}

fn energy(g: f64, hip: [f64; 2], v: [f64; 2]) -> f64 {
    0.5 * (v[0] * v[0] + v[1] * v[1]) + g * hip[1]
}

impl Executor {
    pub fn new(scenario: &Scenario, planner: Box<dyn PlanSource>) -> Result<Self, crate::scenario::ParseError> {
        scenario.validate()?;
        let leg = scenario.leg.clone();
        let bad_leg = |e: crate::leg::LegError| crate::scenario::ParseError {
            path: "leg".into(),
            message: e.to_string(),
        };
        let geometry = leg.geometry().map_err(bad_leg)?;
        let flight_joints = flight_config(&leg).map_err(bad_leg)?.joints;
        let env = scenario.parkour.clone();
        let z_s = env.height_at(scenario.x_s);
        let anchor = [scenario.x_s, z_s];
        let (r, phi) = (leg.flight_extension, leg.flight_angle);
        let mut timed = Vec::new();
        let mut flight_events = Vec::new();
        for ev in &scenario.events {
            match ev.trigger {
                Trigger::Time(t) => timed.push((t, ev.action.clone())),
                Trigger::Flight { jump, after } => flight_events.push((jump, after, ev.action.clone(), false)),
            }
        }
        let meta = EpisodeMeta {
            name: scenario.name.clone(),
            seed: scenario.seed,
            dt: scenario.run.dt,
            x_s: scenario.x_s,
            x_g: scenario.x_g,
            parkour: env.clone(),
            leg: leg.clone(),
        };
        let mut ex = Executor {
            geometry,
            gains: scenario.gains,
            noise: scenario.noise,
            dt: scenario.run.dt,
            max_time: scenario.run.max_time,
            max_retries: scenario.run.max_plan_retries,
            mppc: scenario.mppc_config(),
            solver: scenario.solver,
            env,
            env_version: 0,
            planner,
            awaiting_plan: false,
            stalled_on: None,
            planned_version: 0,
            hold_on_stall: false,
            retries: 0,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            timed,
            next_timed: 0,
            flight_events,
            state: SimState {
                time: 0.0,
                phase: Phase::Initialization,
                hip: polar(anchor, r, phi),
                hip_velocity: [0.0, 0.0],
                joints: JointState::default(),
                anchor: Some(anchor),
                phase_time: 0.0,
                pending_plan: None,
                jumps: 0,
            },
            motion: Motion::Stance { r, phi },
            ticks: 0,
            flight_joints,
            energy_ref: 0.0,
            log: EpisodeLog::new(meta),
            outcome: None,
            leg,
        };
        ex.state.joints = ex.stance_joints(anchor, ex.state.hip, None);
        ex.record_tick(None);
        Ok(ex)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn env(&self) -> &Parkour {
        &self.env
    }

    pub fn env_version(&self) -> u64 {
        self.env_version
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    pub fn leg(&self) -> &LegParams {
        &self.leg
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Current flight arc, when airborne.
    pub fn flight_arc(&self) -> Option<FlightArc> {
        match self.motion {
            Motion::Flight(a) => Some(a),
            _ => None,
        }
    }

    fn event(&mut self, t: f64, kind: EventKind) {
        self.log.events.push(LogEvent { t, kind });
    }

    fn finish(&mut self, t: f64, outcome: Outcome) {
        if self.outcome.is_none() {
            self.outcome = Some(outcome);
            self.log.outcome = Some(outcome);
            self.log.end_time = t;
        }
    }

    fn set_phase(&mut self, t: f64, to: Phase) {
        let from = self.state.phase;
        self.state.phase = to;
        self.state.phase_time = 0.0;
        self.event(t, EventKind::PhaseChange { from, to });
    }

    /// Apply a course edit. Rejected when it would put terrain under the
    /// planted or airborne foot.
    pub fn apply_update(&mut self, update: &EnvironmentUpdate) -> Result<u64, SimError> {
        let t = self.state.time;
        let result = self.env.apply_update(update).map_err(SimError::from).and_then(|next| {
            let foot = self.state.foot(&self.leg);
            let covered = match self.state.anchor {
                Some(a) => (next.height_at(a[0]) - a[1]).abs() > EPS,
                None => next.height_at(foot[0]) > foot[1],
            };
            if covered {
                Err(SimError::FootCovered)
            } else {
                Ok(next)
            }
        });
        match result {
            Ok(next) => {
                self.env = next;
                self.env_version += 1;
                let version = self.env_version;
                self.event(
                    t,
                    EventKind::EnvironmentUpdate {
                        update: update.clone(),
                        version,
                    },
                );
                Ok(version)
            }
            Err(e) => {
                self.event(
                    t,
                    EventKind::EnvironmentUpdateRejected {
                        update: update.clone(),
                        reason: e.to_string(),
                    },
                );
                Err(e)
            }
        }
    }

    /// Add `dv` to the hip velocity. Only valid in flight.
    pub fn inject_disturbance(&mut self, dv: [f64; 2]) -> Result<(), SimError> {
        let t = self.state.time;
        let Motion::Flight(arc) = self.motion else {
            let phase = self.state.phase;
            self.event(t, EventKind::DisturbanceRejected { dv, phase });
            return Err(SimError::WrongPhase(phase));
        };
        self.kick(arc, t, dv);
        Ok(())
    }

    fn kick(&mut self, arc: FlightArc, t: f64, dv: [f64; 2]) {
        let next = arc.kicked(t, dv);
        self.motion = Motion::Flight(next);
        self.state.hip = next.hip(t);
        self.state.hip_velocity = next.velocity(t);
        self.energy_ref = energy(next.g, self.state.hip, self.state.hip_velocity);
        if let Some(rec) = self.log.jumps.last_mut() {
            rec.disturbed = true;
        }
        self.event(t, EventKind::Disturbance { dv });
    }

    fn apply_action(&mut self, action: &Action) {
        match *action {
            Action::Update(ref u) => {
                let _ = self.apply_update(u);
            }
            Action::Impulse { dv_x, dv_z } => {
                let _ = self.inject_disturbance([dv_x, dv_z]);
            }
        }
    }

    /// Advance one step. Returns the outcome once the episode has ended.
    pub fn tick(&mut self) -> Option<Outcome> {
        if self.outcome.is_some() {
            return self.outcome;
        }
        let t0 = self.state.time;
        while self.next_timed < self.timed.len() && self.timed[self.next_timed].0 <= t0 + EPS {
            let action = self.timed[self.next_timed].1.clone();
            self.next_timed += 1;
            self.apply_action(&action);
        }
        self.ticks += 1;
        let t1 = self.ticks as f64 * self.dt;
        let mut torque = None;
        match self.state.phase {
            Phase::Exertion | Phase::Flight => torque = self.advance_motion(t0, t1),
            _ => self.advance_stance(t1),
        }
        self.state.time = t1;
        self.record_tick(torque);
        if self.outcome.is_none() && t1 >= self.max_time - EPS {
            self.finish(t1, Outcome::TimedOut);
        }
        self.outcome
    }

    /// Tick until the episode ends.
    pub fn run(&mut self) -> Outcome {
        loop {
            if let Some(o) = self.tick() {
                return o;
            }
        }
    }

    fn record_tick(&mut self, torque: Option<[f64; 2]>) {
        let s = &self.state;
        let foot = s.foot(&self.leg);
        let knee = s.knee(&self.leg);
        self.log.ticks.push(TickSample {
            t: s.time,
            phase: s.phase,
            hip: s.hip,
            hip_velocity: s.hip_velocity,
            foot,
            knee,
            q: [s.joints.q1, s.joints.q2],
            torque,
        });
    }

    fn stance_joints(&self, anchor: [f64; 2], hip: [f64; 2], prev: Option<&JointState>) -> JointState {
        let foot = Vector2::new(anchor[0] - hip[0], anchor[1] - hip[1]);
        let mut q = inverse_kinematics(&self.leg, foot, KneeBend::Trailing).unwrap_or(self.state.joints);
        if let Some(p) = prev {
            q.q1d = (q.q1 - p.q1) / self.dt;
            q.q2d = (q.q2 - p.q2) / self.dt;
        }
        q
    }

    fn goal_reached(&self) -> bool {
        self.state
            .anchor
            .is_some_and(|a| a[0] >= self.mppc.x_g - self.mppc.goal_tolerance)
    }

    /// When set, a plan that fails on an unchanged course keeps the leg in
    /// Staging until the course is edited instead of ending the episode.
    pub fn hold_on_stall(&mut self, hold: bool) {
        self.hold_on_stall = hold;
    }

    fn request_plan(&mut self, t: f64) {
        let anchor = self.state.anchor.expect("planning while grounded");
        self.planner.request(PlanRequest {
            env: self.env.clone(),
            geometry: self.geometry,
            x_s: anchor[0],
            config: self.mppc,
            solver: self.solver,
        });
        self.awaiting_plan = true;
        self.planned_version = self.env_version;
        self.event(t, EventKind::PlanRequested { x_s: anchor[0] });
    }

    /// Whether a timed course edit is still to come.
    fn edits_scheduled(&self) -> bool {
        self.timed[self.next_timed..]
            .iter()
            .any(|(_, a)| matches!(a, Action::Update(_)))
    }

    fn poll_plan(&mut self, t: f64) {
        if let Some(version) = self.stalled_on {
            if version != self.env_version {
                self.stalled_on = None;
                self.request_plan(t);
            } else if !self.hold_on_stall && !self.edits_scheduled() {
                self.finish(t, Outcome::PlanningFailed);
            }
            return;
        }
        if !self.awaiting_plan {
            return;
        }
        match self.planner.poll() {
            None => {}
            Some(Ok(plan)) => {
                self.awaiting_plan = false;
                self.retries = 0;
                self.state.pending_plan = Some(plan);
            }
            Some(Err(e)) => {
                self.awaiting_plan = false;
                self.event(t, EventKind::PlanFailed { reason: e.to_string() });
                self.retries += 1;
                if self.retries > self.max_retries {
                    self.finish(t, Outcome::PlanningFailed);
                } else if self.planned_version == self.env_version {
                    // The same request would fail the same way.
                    self.stalled_on = Some(self.env_version);
                    self.poll_plan(t);
                } else {
                    self.request_plan(t);
                }
            }
        }
    }

    fn advance_stance(&mut self, t1: f64) {
        let phase = self.state.phase;
        let anchor = self.state.anchor.expect("grounded phase has an anchor");
        if matches!(phase, Phase::Reposition | Phase::Staging) {
            self.poll_plan(t1);
            if self.outcome.is_some() {
                return;
            }
        }
        let gain = *self.gains.get(phase);
        let Motion::Stance { r, phi } = self.motion else {
            unreachable!("stance motion in a grounded phase")
        };
        let crouch = self.gains.crouch_extension;
        let target = match phase {
            Phase::Initialization | Phase::Absorption => Some((crouch, phi)),
            Phase::Reposition | Phase::Staging => {
                self.state.pending_plan.as_ref().map(|p| (crouch, p.first_jump.theta))
            }
            _ => None,
        };
        let (r, phi) = match target {
            Some((rt, pt)) => {
                let b = gain.blend(self.dt);
                (r + b * (rt - r), phi + b * (pt - phi))
            }
            None => (r, phi),
        };
        self.motion = Motion::Stance { r, phi };
        let hip = polar(anchor, r, phi);
        self.state.hip_velocity = [(hip[0] - self.state.hip[0]) / self.dt, (hip[1] - self.state.hip[1]) / self.dt];
        let prev = self.state.joints;
        self.state.hip = hip;
        self.state.joints = self.stance_joints(anchor, hip, Some(&prev));
        self.state.phase_time += self.dt;
        if self.state.phase_time < gain.duration - EPS {
            return;
        }
        match phase {
            Phase::Initialization | Phase::Absorption => {
                if self.goal_reached() {
                    self.state.hip_velocity = [0.0, 0.0];
                    self.event(t1, EventKind::GoalReached { x: anchor[0] });
                    self.finish(t1, Outcome::GoalReached);
                    return;
                }
                self.set_phase(t1, Phase::Reposition);
                self.state.pending_plan = None;
                self.retries = 0;
                self.request_plan(t1);
            }
            Phase::Reposition => self.set_phase(t1, Phase::Staging),
            Phase::Staging => {
                if self.state.pending_plan.is_some() {
                    self.start_push(t1);
                }
            }
            _ => {}
        }
    }

    fn start_push(&mut self, t: f64) {
        let plan = self.state.pending_plan.clone().expect("push needs a plan");
        let jump = plan.first_jump;
        let anchor = self.state.anchor.expect("push from the ground");
        // Draw order is fixed so runs are reproducible per seed.
        let n_theta: f64 = StandardNormal.sample(&mut self.rng);
        let n_v: f64 = StandardNormal.sample(&mut self.rng);
        let theta_c = jump.theta + self.noise.sigma_theta * n_theta;
        let v_c = exertion_velocity(jump.v, jump.theta, theta_c).unwrap_or(jump.v);
        let v_release = (v_c + self.noise.sigma_v * n_v).max(1e-3);
        let r0 = self.gains.crouch_extension;
        let d = self.leg.takeoff_extension - r0;
        let u = [theta_c.cos(), theta_c.sin()];
        let foot = Vector2::new(-r0 * u[0], -r0 * u[1]);
        let force = exertion_force(&self.leg, v_release, foot).unwrap_or_else(|_| Vector2::zeros());
        let push = Push {
            start: t,
            anchor,
            u,
            r0,
            accel: v_release * v_release / (2.0 * d),
            duration: 2.0 * d / v_release,
            force,
        };
        self.motion = Motion::Push(push);
        self.state.hip = polar(anchor, r0, theta_c);
        self.state.hip_velocity = [0.0, 0.0];
        self.state.jumps += 1;
        self.log.jumps.push(JumpRecord {
            number: self.state.jumps,
            takeoff_time: t + push.duration,
            plan: PlanSummary::from(&plan),
            theta_c,
            v_c,
            v_release,
            release_hip: polar(anchor, self.leg.takeoff_extension, theta_c),
            landing_time: None,
            landing: None,
            landing_error: None,
            energy_drift: 0.0,
            disturbed: false,
        });
        self.set_phase(t, Phase::Exertion);
    }

    /// Push and flight for `[t0, t1]`, splitting at release, scripted flight
    /// events and touchdown.
    fn advance_motion(&mut self, t0: f64, t1: f64) -> Option<[f64; 2]> {
        let mut torque = None;
        let mut ta = t0;
        if let Motion::Push(push) = self.motion {
            let release = push.start + push.duration;
            if release > t1 {
                let s = t1 - push.start;
                let r = push.r0 + 0.5 * push.accel * s * s;
                let speed = push.accel * s;
                let hip = polar(push.anchor, r, push.u[1].atan2(push.u[0]));
                let prev = self.state.joints;
                self.state.hip = hip;
                self.state.hip_velocity = [speed * push.u[0], speed * push.u[1]];
                self.state.joints = self.stance_joints(push.anchor, hip, Some(&prev));
                self.state.phase_time = s;
                let (t_hip, t_knee) = joint_torques(&self.leg, &self.state.joints, push.force);
                torque = Some([t_hip, t_knee]);
                return torque;
            }
            let v = push.accel * push.duration;
            let hip0 = polar(push.anchor, self.leg.takeoff_extension, push.u[1].atan2(push.u[0]));
            let (fx, fz) = self.geometry.hip_from_foot();
            let (kx, kz) = self.geometry.knee_from_foot();
            let arc = FlightArc {
                t0: release,
                hip0,
                v0: [v * push.u[0], v * push.u[1]],
                g: self.leg.g,
                foot_offset: [-fx, -fz],
                knee_offset: [kx - fx, kz - fz],
            };
            self.motion = Motion::Flight(arc);
            self.state.anchor = None;
            self.state.joints = self.flight_joints;
            self.energy_ref = energy(arc.g, arc.hip0, arc.v0);
            self.set_phase(release, Phase::Flight);
            ta = release;
        }

        let jump_no = self.state.jumps;
        loop {
            let Motion::Flight(arc) = self.motion else { break };
            let release = self.log.jumps.last().map(|j| j.takeoff_time).unwrap_or(t0);
            // Earliest unfired flight event of this jump inside the step.
            let due = self
                .flight_events
                .iter()
                .enumerate()
                .filter(|(_, e)| !e.3 && e.0 == jump_no)
                .map(|(i, e)| (i, (release + e.1).max(ta)))
                .filter(|&(_, te)| te <= t1)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let tb = due.map(|d| d.1).unwrap_or(t1);
            if let Some((t, contact)) = arc_contact(&self.env, &arc, ta, tb) {
                self.track_energy(&arc, t);
                self.touch_down(arc, t, t1, contact);
                return torque;
            }
            self.track_energy(&arc, tb);
            self.state.hip = arc.hip(tb);
            self.state.hip_velocity = arc.velocity(tb);
            self.state.phase_time = tb - release;
            match due {
                Some((i, t)) => {
                    self.flight_events[i].3 = true;
                    let action = self.flight_events[i].2.clone();
                    let saved = self.state.time;
                    self.state.time = t;
                    self.apply_action(&action);
                    self.state.time = saved;
                    ta = t;
                }
                None => break,
            }
        }
        torque
    }

    fn track_energy(&mut self, arc: &FlightArc, t: f64) {
        let e = energy(arc.g, arc.hip(t), arc.velocity(t));
        let drift = (e - self.energy_ref).abs() / self.energy_ref.abs().max(1e-12);
        if let Some(rec) = self.log.jumps.last_mut() {
            rec.energy_drift = rec.energy_drift.max(drift);
        }
    }

    fn touch_down(&mut self, arc: FlightArc, t: f64, t1: f64, contact: super::ContactEvent) {
        self.state.hip = arc.hip(t);
        self.state.hip_velocity = arc.velocity(t);
        match contact.kind {
            ContactKind::Landing => {
                let point = contact.point;
                if let Some(rec) = self.log.jumps.last_mut() {
                    rec.landing_time = Some(t);
                    rec.landing = Some(point);
                    let planned = rec.plan.jumps.first().map(|j| j.landing[0]);
                    rec.landing_error = planned.map(|p| point[0] - p);
                }
                if self.env.landing_intervals(point[0] - LANDING_TOL, point[0] + LANDING_TOL).is_empty() {
                    let restricted = self.env.is_restricted(point[0]);
                    self.event(t, EventKind::MarginViolation { x: point[0], restricted });
                }
                self.state.anchor = Some(point);
                self.state.pending_plan = None;
                let (r, phi) = (self.leg.flight_extension, self.leg.flight_angle);
                self.motion = Motion::Stance { r, phi };
                self.set_phase(t, Phase::Absorption);
                // The rest of the step is spent absorbing.
                let rest = (t1 - t).max(0.0);
                let b = self.gains.absorption.blend(rest);
                let (r, phi) = (r + b * (self.gains.crouch_extension - r), phi);
                self.motion = Motion::Stance { r, phi };
                let hip = polar(point, r, phi);
                self.state.hip = hip;
                self.state.hip_velocity = [0.0, 0.0];
                self.state.joints = self.stance_joints(point, hip, None);
                self.state.phase_time = rest;
            }
            kind => {
                self.event(
                    t,
                    EventKind::Collision {
                        kind,
                        point: contact.point,
                        obstacle: contact.obstacle,
                    },
                );
                let outcome = if kind == ContactKind::FrontCollision {
                    Outcome::FrontCollision
                } else {
                    Outcome::BackCollision
                };
                self.finish(t, outcome);
            }
        }
    }
}

/// Run `scenario` to completion with the planner inline.
pub fn run_episode(scenario: &Scenario) -> Result<EpisodeLog, crate::scenario::ParseError> {
    let mut ex = Executor::new(scenario, Box::new(super::InlinePlanner::new()))?;
    ex.run();
    Ok(ex.into_log())
}
