//! Two-link leg geometry.
//!
//! Positions are in the sagittal plane, `x` along the direction of travel and
//! `z` up. Joint-space quantities use a hip-centred frame: the thigh points
//! along `q1` from the hip, the shank along `q1 + q2` from the knee.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LegError {
    #[error("target at radius {radius:.4} m is outside the reachable annulus [{min:.4}, {max:.4}]")]
    Unreachable { radius: f64, min: f64, max: f64 },
    #[error("take-off angle leaves no ballistic range (sin 2θ = {sin_2theta:.3e})")]
    DegenerateAngle { sin_2theta: f64 },
    #[error("exertion stroke {stroke:.4} m must be positive")]
    NonpositiveStroke { stroke: f64 },
    #[error("invalid leg parameters: {0}")]
    InvalidParams(String),
}

/// Which way the knee points relative to the hip–foot line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeBend {
    /// Knee behind the hip–foot line (positive knee angle). Used throughout.
    Trailing,
    Leading,
}

impl KneeBend {
    fn sign(self) -> f64 {
        match self {
            KneeBend::Trailing => 1.0,
            KneeBend::Leading => -1.0,
        }
    }
}

fn default_gravity() -> f64 {
    GRAVITY
}

fn default_link() -> f64 {
    0.2
}

fn default_mass() -> f64 {
    2.5
}

fn default_takeoff_extension() -> f64 {
    0.34
}

fn default_flight_extension() -> f64 {
    0.24
}

fn default_flight_angle() -> f64 {
    75f64.to_radians()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegParams {
    /// Thigh length (m).
    #[serde(default = "default_link")]
    pub l1: f64,
    /// Shank length (m).
    #[serde(default = "default_link")]
    pub l2: f64,
    /// Mass lumped at the hip (kg).
    #[serde(rename = "m", default = "default_mass")]
    pub mass: f64,
    /// Foot-to-hip distance at take-off (m).
    #[serde(rename = "r_t", default = "default_takeoff_extension")]
    pub takeoff_extension: f64,
    /// Foot-to-hip distance in flight (m).
    #[serde(rename = "r_f", default = "default_flight_extension")]
    pub flight_extension: f64,
    /// Angle between ground and the foot-to-hip line in flight (rad).
    #[serde(rename = "theta_f", default = "default_flight_angle")]
    pub flight_angle: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

impl Default for LegParams {
    fn default() -> Self {
        Self {
            l1: default_link(),
            l2: default_link(),
            mass: default_mass(),
            takeoff_extension: default_takeoff_extension(),
            flight_extension: default_flight_extension(),
            flight_angle: default_flight_angle(),
            g: GRAVITY,
        }
    }
}

impl LegParams {
    pub fn validate(&self) -> Result<(), LegError> {
        let p = self;
        let finite = [
            p.l1,
            p.l2,
            p.mass,
            p.takeoff_extension,
            p.flight_extension,
            p.flight_angle,
            p.g,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(LegError::InvalidParams("non-finite value".into()));
        }
        if p.l1 <= 0.0 || p.l2 <= 0.0 {
            return Err(LegError::InvalidParams("link lengths must be positive".into()));
        }
        if p.mass <= 0.0 {
            return Err(LegError::InvalidParams("mass must be positive".into()));
        }
        if p.g <= 0.0 {
            return Err(LegError::InvalidParams("gravity must be positive".into()));
        }
        if !(0.0 < p.flight_extension && p.flight_extension <= p.takeoff_extension) {
            return Err(LegError::InvalidParams("need 0 < r_f <= r_t".into()));
        }
        if p.takeoff_extension >= p.l1 + p.l2 {
            return Err(LegError::InvalidParams("r_t must be shorter than l1 + l2".into()));
        }
        if p.flight_extension <= (p.l1 - p.l2).abs() {
            return Err(LegError::InvalidParams("r_f must exceed |l1 - l2|".into()));
        }
        if !(0.0 < p.flight_angle && p.flight_angle < PI) {
            return Err(LegError::InvalidParams("theta_f must lie in (0, pi)".into()));
        }
        Ok(())
    }

    pub fn min_reach(&self) -> f64 {
        (self.l1 - self.l2).abs()
    }

    pub fn max_reach(&self) -> f64 {
        self.l1 + self.l2
    }

    /// The precomputed take-off/flight geometry used by the planner.
    pub fn geometry(&self) -> Result<JumpGeometry, LegError> {
        let flight = flight_config(self)?;
        Ok(JumpGeometry {
            takeoff_extension: self.takeoff_extension,
            flight_extension: self.flight_extension,
            flight_angle: self.flight_angle,
            shank: self.l2,
            alpha_f: flight.alpha_f,
            g: self.g,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    pub q1: f64,
    pub q2: f64,
    pub q1d: f64,
    pub q2d: f64,
}

impl JointState {
    pub fn at(q1: f64, q2: f64) -> Self {
        Self {
            q1,
            q2,
            q1d: 0.0,
            q2d: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub q1: (f64, f64),
    pub q2: (f64, f64),
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            q1: (-PI, PI),
            q2: (-PI, PI),
        }
    }
}

impl JointLimits {
    pub fn contains(&self, q: &JointState) -> bool {
        (self.q1.0..=self.q1.1).contains(&q.q1) && (self.q2.0..=self.q2.1).contains(&q.q2)
    }
}

/// Foot and knee displacement between take-off and flight configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigOffsets {
    pub c_xe: f64,
    pub c_ze: f64,
    pub c_xk: f64,
    pub c_zk: f64,
    pub alpha_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightConfig {
    /// Angle between the shank and the ground in flight (rad).
    pub alpha_f: f64,
    pub joints: JointState,
}

/// Knee position in the hip frame.
pub fn knee_position(params: &LegParams, q: &JointState) -> Vector2<f64> {
    Vector2::new(params.l1 * q.q1.cos(), params.l1 * q.q1.sin())
}

/// Foot position in the hip frame.
pub fn forward_kinematics(params: &LegParams, q: &JointState) -> Vector2<f64> {
    let q12 = q.q1 + q.q2;
    knee_position(params, q) + Vector2::new(params.l2 * q12.cos(), params.l2 * q12.sin())
}

/// Joint angles placing the foot at `foot` (hip frame).
pub fn inverse_kinematics(
    params: &LegParams,
    foot: Vector2<f64>,
    bend: KneeBend,
) -> Result<JointState, LegError> {
    let (l1, l2) = (params.l1, params.l2);
    let r = foot.norm();
    let (min, max) = (params.min_reach(), params.max_reach());
    let slack = 1e-12 * max;
    if r < min - slack || r > max + slack || r == 0.0 {
        return Err(LegError::Unreachable {
            radius: r,
            min,
            max,
        });
    }
    let c2 = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let q2 = bend.sign() * c2.acos();
    let q1 = foot.y.atan2(foot.x) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
    Ok(JointState::at(wrap_angle(q1), q2))
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Foot-velocity Jacobian of [`forward_kinematics`].
pub fn jacobian(params: &LegParams, q: &JointState) -> Matrix2<f64> {
    let (s1, c1) = q.q1.sin_cos();
    let (s12, c12) = (q.q1 + q.q2).sin_cos();
    let (l1, l2) = (params.l1, params.l2);
    Matrix2::new(
        -l1 * s1 - l2 * s12,
        -l2 * s12,
        l1 * c1 + l2 * c12,
        l2 * c12,
    )
}

/// Flight pose: foot at distance `r_f` below-behind the hip along `θ_f`,
/// knee trailing.
pub fn flight_config(params: &LegParams) -> Result<FlightConfig, LegError> {
    let (s, c) = params.flight_angle.sin_cos();
    let foot = -params.flight_extension * Vector2::new(c, s);
    let joints = inverse_kinematics(params, foot, KneeBend::Trailing)?;
    let knee = knee_position(params, &joints);
    // knee = foot + l2 (-cos α_f, sin α_f)
    let shank = knee - foot;
    let alpha_f = shank.y.atan2(-shank.x);
    Ok(FlightConfig { alpha_f, joints })
}

/// Take-off to flight reconfiguration offsets for a jump at `theta`.
pub fn takeoff_offsets(params: &LegParams, theta: f64) -> Result<ConfigOffsets, LegError> {
    Ok(params.geometry()?.offsets(theta))
}

/// Range-preserving speed correction for a take-off at `theta_c` instead of
/// the planned `theta`.
pub fn exertion_velocity(v: f64, theta: f64, theta_c: f64) -> Result<f64, LegError> {
    const TOL: f64 = 1e-9;
    let planned = (2.0 * theta).sin();
    let current = (2.0 * theta_c).sin();
    if current <= TOL {
        return Err(LegError::DegenerateAngle { sin_2theta: current });
    }
    if planned <= TOL {
        return Err(LegError::DegenerateAngle { sin_2theta: planned });
    }
    Ok((v * v * planned / current).sqrt())
}

/// Constant push-off force over the remaining stroke `r_t - |foot|`,
/// directed from the foot to the hip. `foot` is in the hip frame.
pub fn exertion_force(
    params: &LegParams,
    v_c: f64,
    foot: Vector2<f64>,
) -> Result<Vector2<f64>, LegError> {
    let r_c = foot.norm();
    let stroke = params.takeoff_extension - r_c;
    if stroke <= 0.0 || r_c == 0.0 {
        return Err(LegError::NonpositiveStroke { stroke });
    }
    let magnitude = params.mass * v_c * v_c / (2.0 * stroke);
    Ok(-foot / r_c * magnitude)
}

/// `τ = Jᵀ λ`.
pub fn joint_torques(params: &LegParams, q: &JointState, force: Vector2<f64>) -> (f64, f64) {
    let tau = jacobian(params, q).transpose() * force;
    (tau.x, tau.y)
}

/// Reduced geometry the planner needs: everything that enters the
/// take-off/flight offsets plus gravity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpGeometry {
    pub takeoff_extension: f64,
    pub flight_extension: f64,
    pub flight_angle: f64,
    pub shank: f64,
    pub alpha_f: f64,
    pub g: f64,
}

impl JumpGeometry {
    /// A bare point mass: every offset is zero.
    pub fn point_mass(g: f64) -> Self {
        Self {
            takeoff_extension: 0.0,
            flight_extension: 0.0,
            flight_angle: 0.0,
            shank: 0.0,
            alpha_f: 0.0,
            g,
        }
    }

    pub fn offsets(&self, theta: f64) -> ConfigOffsets {
        let (s, c) = theta.sin_cos();
        let (sf, cf) = self.flight_angle.sin_cos();
        let c_xe = self.takeoff_extension * c - self.flight_extension * cf;
        let c_ze = self.takeoff_extension * s - self.flight_extension * sf;
        ConfigOffsets {
            c_xe,
            c_ze,
            c_xk: c_xe - self.shank * self.alpha_f.cos(),
            c_zk: c_ze + self.shank * self.alpha_f.sin(),
            alpha_f: self.alpha_f,
        }
    }

    /// `d(c_xe)/dθ` and `d(c_ze)/dθ`; the knee offsets share them.
    pub fn offset_slopes(&self, theta: f64) -> (f64, f64) {
        let (s, c) = theta.sin_cos();
        (-self.takeoff_extension * s, self.takeoff_extension * c)
    }

    /// Knee position relative to the foot during flight.
    pub fn knee_from_foot(&self) -> (f64, f64) {
        (-self.shank * self.alpha_f.cos(), self.shank * self.alpha_f.sin())
    }

    /// Hip position relative to the foot during flight.
    pub fn hip_from_foot(&self) -> (f64, f64) {
        let (s, c) = self.flight_angle.sin_cos();
        (self.flight_extension * c, self.flight_extension * s)
    }
}
