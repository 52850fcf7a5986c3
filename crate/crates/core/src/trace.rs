//! Static export of an episode: SVG figure, CSV ticks, JSON log.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::env::Parkour;
use crate::planner::JumpSpec;
use crate::sim::{EpisodeLog, JumpRecord};

/// Columns of the CSV export, in order.
pub const CSV_COLUMNS: [&str; 14] = [
    "t", "phase", "hip_x", "hip_z", "hip_vx", "hip_vz", "foot_x", "foot_z", "knee_x", "knee_z", "q1", "q2",
    "tau1", "tau2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Svg,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("unsupported trace format '{0}' (expected svg, csv or json)")]
    UnsupportedFormat(String),
}

impl FromStr for TraceFormat {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, TraceError> {
        match s.to_ascii_lowercase().as_str() {
            "svg" => Ok(TraceFormat::Svg),
            "csv" => Ok(TraceFormat::Csv),
            "json" => Ok(TraceFormat::Json),
            _ => Err(TraceError::UnsupportedFormat(s.into())),
        }
    }
}

/// Render `log` in `format` (`svg`, `csv` or `json`).
pub fn export_trace(log: &EpisodeLog, format: &str) -> Result<String, TraceError> {
    Ok(match format.parse::<TraceFormat>()? {
        TraceFormat::Svg => to_svg(log),
        TraceFormat::Csv => to_csv(log),
        TraceFormat::Json => serde_json::to_string_pretty(log).expect("log serializes"),
    })
}

pub fn to_csv(log: &EpisodeLog) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for s in &log.ticks {
        let phase = serde_json::to_value(s.phase)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let (t1, t2) = match s.torque {
            Some([a, b]) => (a.to_string(), b.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.t,
            phase,
            s.hip[0],
            s.hip[1],
            s.hip_velocity[0],
            s.hip_velocity[1],
            s.foot[0],
            s.foot[1],
            s.knee[0],
            s.knee[1],
            s.q[0],
            s.q[1],
            t1,
            t2
        );
    }
    out
}

/// Terrain outline from `x_min` to `x_max`, including the vertical faces.
pub fn terrain_profile(env: &Parkour) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for (start, end, h) in env.pieces() {
        if let Some(&[_, z]) = pts.last() {
            if z != h {
                pts.push([start, h]);
            }
        } else {
            pts.push([start, h]);
        }
        pts.push([end, h]);
    }
    pts
}

/// Planned foot path of a jump, sampled at `samples + 1` points.
pub fn planned_foot_arc(log: &EpisodeLog, jump: &JumpRecord, samples: usize) -> Vec<[f64; 2]> {
    match jump.plan.jumps.first() {
        Some(spec) => foot_arc(spec, log.meta.leg.g, samples),
        None => Vec::new(),
    }
}

/// Foot path of `spec` in flight, ending at its landing point.
pub fn foot_arc(spec: &JumpSpec, g: f64, samples: usize) -> Vec<[f64; 2]> {
    let (vx, vz) = spec.velocity();
    let [lx, lz] = spec.landing;
    let samples = samples.max(1);
    (0..=samples)
        .map(|i| {
            // Measured back from touchdown.
            let back = spec.t * (1.0 - i as f64 / samples as f64);
            let s = spec.t - back;
            let dz = (vz * s - 0.5 * g * s * s) - (vz * spec.t - 0.5 * g * spec.t * spec.t);
            [lx - vx * back, lz + dz]
        })
        .collect()
}

struct Frame {
    x0: f64,
    z_top: f64,
    scale: f64,
    pad: f64,
}

impl Frame {
    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        (self.pad + (p[0] - self.x0) * self.scale, self.pad + (self.z_top - p[1]) * self.scale)
    }

    fn path(&self, pts: &[[f64; 2]]) -> String {
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.px(*p);
            let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
        }
        d.trim_end().to_owned()
    }
}

pub fn to_svg(log: &EpisodeLog) -> String {
    let env = &log.meta.parkour;
    let terrain = terrain_profile(env);
    let mut z_top = env.obstacles().iter().map(|o| o.height).fold(0.0, f64::max);
    for s in &log.ticks {
        z_top = z_top.max(s.hip[1]).max(s.foot[1]);
    }
    z_top += 0.1;
    let frame = Frame {
        x0: env.x_min(),
        z_top,
        scale: 200.0,
        pad: 20.0,
    };
    let width = 2.0 * frame.pad + (env.x_max() - env.x_min()) * frame.scale;
    let height = 2.0 * frame.pad + (z_top + 0.05) * frame.scale;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    for a in env.areas() {
        let (x0, y0) = frame.px([a.start, 0.0]);
        let (x1, _) = frame.px([a.end, 0.0]);
        let _ = writeln!(
            out,
            r##"<rect class="restricted" x="{x0:.2}" y="{:.2}" width="{:.2}" height="6" fill="#e66" opacity="0.5"/>"##,
            y0 - 3.0,
            x1 - x0
        );
    }
    let _ = writeln!(
        out,
        r##"<path class="terrain" d="{}" fill="none" stroke="#333" stroke-width="2"/>"##,
        frame.path(&terrain)
    );
    for jump in &log.jumps {
        let arc = planned_foot_arc(log, jump, 32);
        let _ = writeln!(
            out,
            r##"<path class="planned" d="{}" fill="none" stroke="#39f" stroke-dasharray="4 3"/>"##,
            frame.path(&arc)
        );
    }
    if !log.ticks.is_empty() {
        let hip: Vec<_> = log.ticks.iter().map(|s| s.hip).collect();
        let foot: Vec<_> = log.ticks.iter().map(|s| s.foot).collect();
        let _ = writeln!(
            out,
            r##"<path class="hip" d="{}" fill="none" stroke="#888"/>"##,
            frame.path(&hip)
        );
        let _ = writeln!(
            out,
            r##"<path class="foot" d="{}" fill="none" stroke="#c60" stroke-width="1.5"/>"##,
            frame.path(&foot)
        );
    }
    out.push_str("</svg>\n");
    out
}
