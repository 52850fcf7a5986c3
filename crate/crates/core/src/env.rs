//! Planar parkour terrain: block obstacles on flat ground plus restricted
//! landing areas.
//!
//! The terrain is piecewise constant over `x`. A [`Parkour`] is only ever
//! constructed through validation, so every value of the type satisfies the
//! ordering and non-overlap invariants the planner relies on. Updates return
//! new values and leave the original untouched.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Default horizontal and vertical margin (m) when a course omits them.
pub const DEFAULT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub id: String,
    /// Front face x-position (m).
    #[serde(rename = "A")]
    pub front: f64,
    /// Back face x-position (m).
    #[serde(rename = "B")]
    pub back: f64,
    /// Top surface height (m).
    #[serde(rename = "H")]
    pub height: f64,
}

impl Obstacle {
    pub fn new(id: impl Into<String>, front: f64, back: f64, height: f64) -> Self {
        Self {
            id: id.into(),
            front,
            back,
            height,
        }
    }
}

/// A span of `x` where the foot must not touch down, at any height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestrictedArea {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(rename = "a")]
    pub start: f64,
    #[serde(rename = "b")]
    pub end: f64,
}

impl RestrictedArea {
    pub fn new(start: f64, end: f64) -> Self {
        Self {
            id: None,
            start,
            end,
        }
    }

    pub fn with_id(id: impl Into<String>, start: f64, end: f64) -> Self {
        Self {
            id: Some(id.into()),
            start,
            end,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && x <= self.end
    }
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

/// Unvalidated course description, as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParkourSpec {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub areas: Vec<RestrictedArea>,
    #[serde(rename = "M_h", default = "default_margin")]
    pub margin_h: f64,
    #[serde(rename = "M_v", default = "default_margin")]
    pub margin_v: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl ParkourSpec {
    pub fn flat(x_min: f64, x_max: f64) -> Self {
        Self {
            obstacles: Vec::new(),
            areas: Vec::new(),
            margin_h: DEFAULT_MARGIN,
            margin_v: DEFAULT_MARGIN,
            x_min,
            x_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Obstacle,
    Area,
}

/// Points at one element of a [`ParkourSpec`] by its position in the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRef {
    pub kind: FeatureKind,
    pub index: usize,
    pub id: Option<String>,
}

impl fmt::Display for FeatureRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            FeatureKind::Obstacle => "obstacle",
            FeatureKind::Area => "restricted area",
        };
        match &self.id {
            Some(id) => write!(f, "{kind} '{id}' (#{})", self.index),
            None => write!(f, "{kind} #{}", self.index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("{feature} has inverted bounds")]
    InvertedBounds { feature: FeatureRef },
    #[error("obstacles '{first}' and '{second}' overlap")]
    OverlappingObstacles { first: String, second: String },
    #[error("{feature} lies outside the course extent")]
    OutOfExtent { feature: FeatureRef },
    #[error("position {x} is outside the course extent [{x_min}, {x_max}]")]
    PositionOutOfExtent { x: f64, x_min: f64, x_max: f64 },
    #[error("obstacle '{id}' must have a positive height")]
    NonPositiveHeight { id: String },
    #[error("{feature} has a non-finite coordinate")]
    NonFinite { feature: FeatureRef },
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
    #[error("unknown id '{0}'")]
    UnknownId(String),
    #[error("margins must be finite and non-negative")]
    InvalidMargin,
    #[error("course extent is empty or non-finite")]
    InvalidExtent,
}

/// A validated course. Obstacles are sorted by front position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParkourSpec", into = "ParkourSpec")]
pub struct Parkour {
    obstacles: Vec<Obstacle>,
    areas: Vec<RestrictedArea>,
    margin_h: f64,
    margin_v: f64,
    x_min: f64,
    x_max: f64,
}

impl TryFrom<ParkourSpec> for Parkour {
    type Error = EnvError;

    fn try_from(spec: ParkourSpec) -> Result<Self, Self::Error> {
        validate(spec)
    }
}

impl From<Parkour> for ParkourSpec {
    fn from(p: Parkour) -> Self {
        ParkourSpec {
            obstacles: p.obstacles,
            areas: p.areas,
            margin_h: p.margin_h,
            margin_v: p.margin_v,
            x_min: p.x_min,
            x_max: p.x_max,
        }
    }
}

/// Check a raw course and normalize it (obstacles sorted by `A`).
pub fn validate(spec: ParkourSpec) -> Result<Parkour, EnvError> {
    if !(spec.x_min.is_finite() && spec.x_max.is_finite() && spec.x_min < spec.x_max) {
        return Err(EnvError::InvalidExtent);
    }
    if !(spec.margin_h.is_finite() && spec.margin_v.is_finite())
        || spec.margin_h < 0.0
        || spec.margin_v < 0.0
    {
        return Err(EnvError::InvalidMargin);
    }

    let in_extent = |lo: f64, hi: f64| lo >= spec.x_min && hi <= spec.x_max;

    for (index, o) in spec.obstacles.iter().enumerate() {
        let feature = FeatureRef {
            kind: FeatureKind::Obstacle,
            index,
            id: Some(o.id.clone()),
        };
        if !(o.front.is_finite() && o.back.is_finite() && o.height.is_finite()) {
            return Err(EnvError::NonFinite { feature });
        }
        if o.front >= o.back {
            return Err(EnvError::InvertedBounds { feature });
        }
        if o.height <= 0.0 {
            return Err(EnvError::NonPositiveHeight { id: o.id.clone() });
        }
        if !in_extent(o.front, o.back) {
            return Err(EnvError::OutOfExtent { feature });
        }
    }
    for (i, o) in spec.obstacles.iter().enumerate() {
        if spec.obstacles[..i].iter().any(|p| p.id == o.id) {
            return Err(EnvError::DuplicateId(o.id.clone()));
        }
    }
    for (index, a) in spec.areas.iter().enumerate() {
        let feature = FeatureRef {
            kind: FeatureKind::Area,
            index,
            id: a.id.clone(),
        };
        if !(a.start.is_finite() && a.end.is_finite()) {
            return Err(EnvError::NonFinite { feature });
        }
        if a.start >= a.end {
            return Err(EnvError::InvertedBounds { feature });
        }
        if !in_extent(a.start, a.end) {
            return Err(EnvError::OutOfExtent { feature });
        }
        if let Some(id) = &a.id {
            if spec.areas[..index].iter().any(|b| b.id.as_ref() == Some(id)) {
                return Err(EnvError::DuplicateId(id.clone()));
            }
        }
    }

    let mut obstacles = spec.obstacles;
    obstacles.sort_by(|a, b| a.front.total_cmp(&b.front));
    // Closed intervals: touching obstacles share a point and count as overlapping.
    for pair in obstacles.windows(2) {
        if pair[1].front <= pair[0].back {
            return Err(EnvError::OverlappingObstacles {
                first: pair[0].id.clone(),
                second: pair[1].id.clone(),
            });
        }
    }

    Ok(Parkour {
        obstacles,
        areas: spec.areas,
        margin_h: spec.margin_h,
        margin_v: spec.margin_v,
        x_min: spec.x_min,
        x_max: spec.x_max,
    })
}

/// Maximal span where touching down is permitted, with its terrain height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandingInterval {
    pub lo: f64,
    pub hi: f64,
    pub z: f64,
}

impl LandingInterval {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Runtime edit of a course.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentUpdate {
    AddObstacle {
        id: String,
        #[serde(rename = "A")]
        front: f64,
        #[serde(rename = "B")]
        back: f64,
        #[serde(rename = "H")]
        height: f64,
    },
    MoveObstacle {
        id: String,
        #[serde(rename = "A")]
        front: f64,
        #[serde(rename = "B")]
        back: f64,
        #[serde(rename = "H")]
        height: f64,
    },
    RemoveObstacle {
        id: String,
    },
    /// Insert a restricted area, or replace the one with the same id.
    SetRestrictedArea {
        id: String,
        #[serde(rename = "a")]
        start: f64,
        #[serde(rename = "b")]
        end: f64,
    },
    RemoveRestrictedArea {
        id: String,
    },
}

impl Parkour {
    pub fn new(spec: ParkourSpec) -> Result<Self, EnvError> {
        validate(spec)
    }

    /// Obstacle-free course over `[x_min, x_max]` with default margins.
    pub fn flat(x_min: f64, x_max: f64) -> Self {
        validate(ParkourSpec::flat(x_min, x_max)).expect("flat course is valid")
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn areas(&self) -> &[RestrictedArea] {
        &self.areas
    }

    pub fn margin_h(&self) -> f64 {
        self.margin_h
    }

    pub fn margin_v(&self) -> f64 {
        self.margin_v
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn obstacle(&self, id: &str) -> Option<&Obstacle> {
        self.obstacles.iter().find(|o| o.id == id)
    }

    pub fn to_spec(&self) -> ParkourSpec {
        self.clone().into()
    }

    /// Terrain height at `x`. Obstacle tops are closed intervals, so a point
    /// exactly on an edge reads the obstacle height.
    pub fn locate(&self, x: f64) -> Result<f64, EnvError> {
        if !(x >= self.x_min && x <= self.x_max) {
            return Err(EnvError::PositionOutOfExtent {
                x,
                x_min: self.x_min,
                x_max: self.x_max,
            });
        }
        Ok(self.height_at(x))
    }

    /// Like [`Parkour::locate`] without the extent check; ground outside.
    pub fn height_at(&self, x: f64) -> f64 {
        // First obstacle whose back is >= x; it is the only candidate.
        let i = self.obstacles.partition_point(|o| o.back < x);
        match self.obstacles.get(i) {
            Some(o) if o.front <= x => o.height,
            _ => 0.0,
        }
    }

    /// Whether `x` is inside any restricted area.
    pub fn is_restricted(&self, x: f64) -> bool {
        self.areas.iter().any(|a| a.contains(x))
    }

    /// Distance from `x` to the nearest obstacle edge, if any obstacles exist.
    pub fn edge_distance(&self, x: f64) -> Option<f64> {
        self.obstacles
            .iter()
            .flat_map(|o| [(x - o.front).abs(), (x - o.back).abs()])
            .min_by(f64::total_cmp)
    }

    /// Whether a touchdown at `x` respects edge bands and restricted areas.
    pub fn is_landable(&self, x: f64) -> bool {
        let band = 0.5 * self.margin_h;
        !self.is_restricted(x) && self.edge_distance(x).is_none_or(|d| d >= band)
    }

    /// Permitted landing spans inside `[lo, hi]`: terrain pieces minus the
    /// half-margin bands around every obstacle edge and minus every
    /// restricted area.
    pub fn landing_intervals(&self, lo: f64, hi: f64) -> Vec<LandingInterval> {
        if !(lo < hi) {
            return Vec::new();
        }
        let band = 0.5 * self.margin_h;

        let mut forbidden: Vec<(f64, f64)> = Vec::new();
        for o in &self.obstacles {
            forbidden.push((o.front - band, o.front + band));
            forbidden.push((o.back - band, o.back + band));
        }
        forbidden.extend(self.areas.iter().map(|a| (a.start, a.end)));
        forbidden.sort_by(|a, b| a.0.total_cmp(&b.0));
        let forbidden = merge_spans(forbidden);

        let mut out = Vec::new();
        for (start, end, z) in self.pieces() {
            let (s, e) = (start.max(lo), end.min(hi));
            if s >= e {
                continue;
            }
            subtract_into(s, e, z, &forbidden, &mut out);
        }
        out
    }

    /// Terrain as `(start, end, height)` pieces covering the extent.
    pub fn pieces(&self) -> Vec<(f64, f64, f64)> {
        let mut pieces = Vec::with_capacity(2 * self.obstacles.len() + 1);
        let mut cursor = self.x_min;
        for o in &self.obstacles {
            if o.front > cursor {
                pieces.push((cursor, o.front, 0.0));
            }
            pieces.push((o.front, o.back, o.height));
            cursor = o.back;
        }
        if self.x_max > cursor {
            pieces.push((cursor, self.x_max, 0.0));
        }
        pieces
    }

    /// Obstacles whose span intersects `(lo, hi]`.
    pub fn obstacles_between(&self, lo: f64, hi: f64) -> impl Iterator<Item = &Obstacle> {
        self.obstacles
            .iter()
            .filter(move |o| o.back > lo && o.front <= hi)
    }

    pub fn apply_update(&self, update: &EnvironmentUpdate) -> Result<Parkour, EnvError> {
        let mut spec = self.to_spec();
        match update {
            EnvironmentUpdate::AddObstacle {
                id,
                front,
                back,
                height,
            } => {
                if spec.obstacles.iter().any(|o| &o.id == id) {
                    return Err(EnvError::DuplicateId(id.clone()));
                }
                spec.obstacles
                    .push(Obstacle::new(id.clone(), *front, *back, *height));
            }
            EnvironmentUpdate::MoveObstacle {
                id,
                front,
                back,
                height,
            } => {
                let o = spec
                    .obstacles
                    .iter_mut()
                    .find(|o| &o.id == id)
                    .ok_or_else(|| EnvError::UnknownId(id.clone()))?;
                o.front = *front;
                o.back = *back;
                o.height = *height;
            }
            EnvironmentUpdate::RemoveObstacle { id } => {
                let before = spec.obstacles.len();
                spec.obstacles.retain(|o| &o.id != id);
                if spec.obstacles.len() == before {
                    return Err(EnvError::UnknownId(id.clone()));
                }
            }
            EnvironmentUpdate::SetRestrictedArea { id, start, end } => {
                let area = RestrictedArea::with_id(id.clone(), *start, *end);
                match spec
                    .areas
                    .iter_mut()
                    .find(|a| a.id.as_deref() == Some(id.as_str()))
                {
                    Some(existing) => *existing = area,
                    None => spec.areas.push(area),
                }
            }
            EnvironmentUpdate::RemoveRestrictedArea { id } => {
                let before = spec.areas.len();
                spec.areas.retain(|a| a.id.as_deref() != Some(id.as_str()));
                if spec.areas.len() == before {
                    return Err(EnvError::UnknownId(id.clone()));
                }
            }
        }
        validate(spec)
    }

    /// The update that undoes `update` when applied to the result of
    /// applying it to `self`.
    pub fn inverse_of(&self, update: &EnvironmentUpdate) -> Result<EnvironmentUpdate, EnvError> {
        Ok(match update {
            EnvironmentUpdate::AddObstacle { id, .. } => {
                EnvironmentUpdate::RemoveObstacle { id: id.clone() }
            }
            EnvironmentUpdate::MoveObstacle { id, .. } | EnvironmentUpdate::RemoveObstacle { id } => {
                let o = self
                    .obstacle(id)
                    .ok_or_else(|| EnvError::UnknownId(id.clone()))?;
                if matches!(update, EnvironmentUpdate::MoveObstacle { .. }) {
                    EnvironmentUpdate::MoveObstacle {
                        id: id.clone(),
                        front: o.front,
                        back: o.back,
                        height: o.height,
                    }
                } else {
                    EnvironmentUpdate::AddObstacle {
                        id: id.clone(),
                        front: o.front,
                        back: o.back,
                        height: o.height,
                    }
                }
            }
            EnvironmentUpdate::SetRestrictedArea { id, .. } => {
                match self.areas.iter().find(|a| a.id.as_deref() == Some(id.as_str())) {
                    Some(a) => EnvironmentUpdate::SetRestrictedArea {
                        id: id.clone(),
                        start: a.start,
                        end: a.end,
                    },
                    None => EnvironmentUpdate::RemoveRestrictedArea { id: id.clone() },
                }
            }
            EnvironmentUpdate::RemoveRestrictedArea { id } => {
                let a = self
                    .areas
                    .iter()
                    .find(|a| a.id.as_deref() == Some(id.as_str()))
                    .ok_or_else(|| EnvError::UnknownId(id.clone()))?;
                EnvironmentUpdate::SetRestrictedArea {
                    id: id.clone(),
                    start: a.start,
                    end: a.end,
                }
            }
        })
    }

    /// Same terrain regardless of obstacle and area ordering.
    pub fn equivalent(&self, other: &Parkour) -> bool {
        let mut a = self.areas.clone();
        let mut b = other.areas.clone();
        let key = |r: &RestrictedArea| (r.id.clone(), r.start.to_bits(), r.end.to_bits());
        a.sort_by_key(key);
        b.sort_by_key(key);
        self.obstacles == other.obstacles
            && a == b
            && self.margin_h == other.margin_h
            && self.margin_v == other.margin_v
            && self.x_min == other.x_min
            && self.x_max == other.x_max
    }
}

fn merge_spans(sorted: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (s, e) in sorted {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

fn subtract_into(
    start: f64,
    end: f64,
    z: f64,
    forbidden: &[(f64, f64)],
    out: &mut Vec<LandingInterval>,
) {
    let mut cursor = start;
    for &(fs, fe) in forbidden {
        if fe <= cursor {
            continue;
        }
        if fs >= end {
            break;
        }
        if fs > cursor {
            out.push(LandingInterval {
                lo: cursor,
                hi: fs,
                z,
            });
        }
        cursor = cursor.max(fe);
        if cursor >= end {
            return;
        }
    }
    if cursor < end {
        out.push(LandingInterval { lo: cursor, hi: end, z });
    }
}
