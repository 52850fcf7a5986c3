//! Foot and knee contact against the piecewise-constant terrain.

use serde::{Deserialize, Serialize};

use crate::env::Parkour;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactKind {
    /// Foot meets a top surface from above.
    Landing,
    /// Foot crosses an obstacle front below its top.
    FrontCollision,
    /// Knee crosses an obstacle back below its top.
    BackCollision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub kind: ContactKind,
    /// Contact point of the foot (landing, front) or the knee (back).
    pub point: [f64; 2],
    /// Position along the segment in `[0, 1]`.
    pub fraction: f64,
    pub obstacle: Option<String>,
}

/// Straight foot and knee motion over one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub foot0: [f64; 2],
    pub foot1: [f64; 2],
    pub knee0: [f64; 2],
    pub knee1: [f64; 2],
}

fn lerp(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Parameter where `a → b` crosses the vertical line `x`, moving forward.
fn crossing_x(a: [f64; 2], b: [f64; 2], x: f64, inclusive_start: bool) -> Option<f64> {
    let starts = if inclusive_start { a[0] <= x } else { a[0] < x };
    (b[0] > a[0] && starts && b[0] >= x).then(|| (x - a[0]) / (b[0] - a[0]))
}

/// Terrain pieces with the outermost ground extended without bound.
pub(crate) fn open_pieces(env: &Parkour) -> Vec<(f64, f64, f64)> {
    let mut pieces = env.pieces();
    if let Some(first) = pieces.first_mut() {
        if first.2 == 0.0 {
            first.0 = f64::NEG_INFINITY;
        }
    }
    if let Some(last) = pieces.last_mut() {
        if last.2 == 0.0 {
            last.1 = f64::INFINITY;
        }
    }
    pieces
}

/// First terrain event along `segment`, if any.
///
/// Landing is a downward crossing of a piece's top height inside that
/// piece (obstacle tops are closed). A forward crossing of an obstacle
/// front below `H` by the foot, or of an obstacle back below `H` by the
/// knee, is a collision. Ties go to collisions.
pub fn detect_contact(env: &Parkour, segment: &Segment) -> Option<ContactEvent> {
    let mut best: Option<ContactEvent> = None;
    let mut offer = |ev: ContactEvent| {
        let better = match &best {
            None => true,
            Some(b) => {
                ev.fraction < b.fraction
                    || (ev.fraction == b.fraction && b.kind == ContactKind::Landing && ev.kind != ContactKind::Landing)
            }
        };
        if better {
            best = Some(ev);
        }
    };

    let (f0, f1) = (segment.foot0, segment.foot1);
    if f1[1] < f0[1] {
        for (start, end, h) in open_pieces(env) {
            if f0[1] >= h && f1[1] <= h {
                let s = (f0[1] - h) / (f0[1] - f1[1]);
                let p = lerp(f0, f1, s);
                if p[0] >= start && p[0] <= end {
                    let obstacle = env
                        .obstacles()
                        .iter()
                        .find(|o| h > 0.0 && o.front == start)
                        .map(|o| o.id.clone());
                    offer(ContactEvent {
                        kind: ContactKind::Landing,
                        point: [p[0], h],
                        fraction: s,
                        obstacle,
                    });
                }
            }
        }
    }

    for ob in env.obstacles() {
        if let Some(s) = crossing_x(f0, f1, ob.front, false) {
            let p = lerp(f0, f1, s);
            if p[1] < ob.height {
                offer(ContactEvent {
                    kind: ContactKind::FrontCollision,
                    point: p,
                    fraction: s,
                    obstacle: Some(ob.id.clone()),
                });
            }
        }
        if let Some(s) = crossing_x(segment.knee0, segment.knee1, ob.back, true) {
            let p = lerp(segment.knee0, segment.knee1, s);
            if p[1] < ob.height && segment.knee0[0] < ob.back {
                offer(ContactEvent {
                    kind: ContactKind::BackCollision,
                    point: p,
                    fraction: s,
                    obstacle: Some(ob.id.clone()),
                });
            }
        }
    }
    best
}

/// Ballistic hip motion with the leg frozen in its flight pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightArc {
    pub t0: f64,
    pub hip0: [f64; 2],
    pub v0: [f64; 2],
    pub g: f64,
    /// Foot minus hip.
    pub foot_offset: [f64; 2],
    /// Knee minus hip.
    pub knee_offset: [f64; 2],
}

impl FlightArc {
    pub fn hip(&self, t: f64) -> [f64; 2] {
        let s = t - self.t0;
        [
            self.hip0[0] + self.v0[0] * s,
            self.hip0[1] + self.v0[1] * s - 0.5 * self.g * s * s,
        ]
    }

    pub fn velocity(&self, t: f64) -> [f64; 2] {
        [self.v0[0], self.v0[1] - self.g * (t - self.t0)]
    }

    pub fn foot(&self, t: f64) -> [f64; 2] {
        let h = self.hip(t);
        [h[0] + self.foot_offset[0], h[1] + self.foot_offset[1]]
    }

    pub fn knee(&self, t: f64) -> [f64; 2] {
        let h = self.hip(t);
        [h[0] + self.knee_offset[0], h[1] + self.knee_offset[1]]
    }

    /// Same motion restarted at `t` with the velocity changed by `dv`.
    pub fn kicked(&self, t: f64, dv: [f64; 2]) -> FlightArc {
        let v = self.velocity(t);
        FlightArc {
            t0: t,
            hip0: self.hip(t),
            v0: [v[0] + dv[0], v[1] + dv[1]],
            ..*self
        }
    }

    /// Time in `[ta, tb]` at which a point with vertical offset `dz` from
    /// the hip descends through height `h`.
    fn descending_at(&self, dz: f64, h: f64, ta: f64, tb: f64) -> Option<f64> {
        let z0 = self.hip0[1] + dz - h;
        let vz = self.v0[1];
        let disc = vz * vz + 2.0 * self.g * z0;
        if disc < 0.0 {
            return None;
        }
        let t = self.t0 + (vz + disc.sqrt()) / self.g;
        (t >= ta && t <= tb).then_some(t)
    }

    /// Time in `(ta, tb]` at which a point with horizontal offset `dx` from
    /// the hip moves forward across `x`; `ta` itself counts when
    /// `inclusive_start`.
    fn crossing_at(&self, dx: f64, x: f64, ta: f64, tb: f64, inclusive_start: bool) -> Option<f64> {
        let vx = self.v0[0];
        if vx <= 0.0 {
            return None;
        }
        let t = self.t0 + (x - self.hip0[0] - dx) / vx;
        let after_start = if inclusive_start { t >= ta } else { t > ta };
        (after_start && t <= tb).then_some(t)
    }
}

/// First contact along `arc` within `[ta, tb]`, with its exact time. Same
/// classification as [`detect_contact`], evaluated on the parabola instead
/// of a chord; `fraction` is the position within the interval.
pub fn arc_contact(env: &Parkour, arc: &FlightArc, ta: f64, tb: f64) -> Option<(f64, ContactEvent)> {
    let span = tb - ta;
    let frac = |t: f64| if span > 0.0 { (t - ta) / span } else { 0.0 };
    let mut best: Option<(f64, ContactEvent)> = None;
    let mut offer = |t: f64, ev: ContactEvent| {
        let better = match &best {
            None => true,
            Some((bt, b)) => t < *bt || (t == *bt && b.kind == ContactKind::Landing && ev.kind != ContactKind::Landing),
        };
        if better {
            best = Some((t, ev));
        }
    };

    for (start, end, h) in open_pieces(env) {
        if arc.foot(ta)[1] < h {
            continue;
        }
        if let Some(t) = arc.descending_at(arc.foot_offset[1], h, ta, tb) {
            let x = arc.foot(t)[0];
            if x >= start && x <= end {
                let obstacle = env
                    .obstacles()
                    .iter()
                    .find(|o| h > 0.0 && o.front == start)
                    .map(|o| o.id.clone());
                offer(
                    t,
                    ContactEvent {
                        kind: ContactKind::Landing,
                        point: [x, h],
                        fraction: frac(t),
                        obstacle,
                    },
                );
            }
        }
    }

    for ob in env.obstacles() {
        if let Some(t) = arc.crossing_at(arc.foot_offset[0], ob.front, ta, tb, false) {
            let p = arc.foot(t);
            if p[1] < ob.height {
                offer(
                    t,
                    ContactEvent {
                        kind: ContactKind::FrontCollision,
                        point: [ob.front, p[1]],
                        fraction: frac(t),
                        obstacle: Some(ob.id.clone()),
                    },
                );
            }
        }
        if arc.knee(ta)[0] < ob.back {
            if let Some(t) = arc.crossing_at(arc.knee_offset[0], ob.back, ta, tb, true) {
                let p = arc.knee(t);
                if p[1] < ob.height {
                    offer(
                        t,
                        ContactEvent {
                            kind: ContactKind::BackCollision,
                            point: [ob.back, p[1]],
                            fraction: frac(t),
                            obstacle: Some(ob.id.clone()),
                        },
                    );
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Obstacle, ParkourSpec};
    use crate::leg::GRAVITY;

    fn course() -> Parkour {
        Parkour::new(ParkourSpec {
            obstacles: vec![Obstacle::new("box", 1.0, 1.5, 0.2)],
            ..ParkourSpec::flat(0.0, 3.0)
        })
        .unwrap()
    }

    fn foot_only(a: [f64; 2], b: [f64; 2]) -> Segment {
        // Knee far above so it never interferes.
        Segment {
            foot0: a,
            foot1: b,
            knee0: [a[0], a[1] + 10.0],
            knee1: [b[0], b[1] + 10.0],
        }
    }

    #[test]
    fn flat_landing_interpolates() {
        let ev = detect_contact(&course(), &foot_only([0.2, 0.1], [0.4, -0.1])).unwrap();
        assert_eq!(ev.kind, ContactKind::Landing);
        assert!((ev.point[0] - 0.3).abs() < 1e-12);
        assert_eq!(ev.point[1], 0.0);
        assert!((ev.fraction - 0.5).abs() < 1e-12);
    }

    #[test]
    fn face_below_top() {
        let ev = detect_contact(&course(), &foot_only([0.95, 0.1], [1.05, 0.1])).unwrap();
        assert_eq!(ev.kind, ContactKind::FrontCollision);
        assert_eq!(ev.obstacle.as_deref(), Some("box"));
    }

    #[test]
    fn landing_on_top() {
        let ev = detect_contact(&course(), &foot_only([1.2, 0.25], [1.25, 0.15])).unwrap();
        assert_eq!(ev.kind, ContactKind::Landing);
        assert_eq!(ev.point[1], 0.2);
        assert_eq!(ev.obstacle.as_deref(), Some("box"));
    }

    #[test]
    fn knee_behind_back() {
        let seg = Segment {
            foot0: [1.6, 0.5],
            foot1: [1.7, 0.45],
            knee0: [1.45, 0.15],
            knee1: [1.55, 0.12],
        };
        let ev = detect_contact(&course(), &seg).unwrap();
        assert_eq!(ev.kind, ContactKind::BackCollision);
    }

    fn bare_arc(hip0: [f64; 2], v0: [f64; 2]) -> FlightArc {
        FlightArc {
            t0: 0.0,
            hip0,
            v0,
            g: GRAVITY,
            foot_offset: [0.0, 0.0],
            knee_offset: [0.0, 10.0],
        }
    }

    #[test]
    fn arc_landing_is_exact() {
        let arc = bare_arc([0.0, 0.0], [1.0, 2.0]);
        let (t, ev) = arc_contact(&Parkour::flat(-1.0, 3.0), &arc, 0.3, 0.5).unwrap();
        let t_exact = 2.0 * 2.0 / GRAVITY;
        assert!((t - t_exact).abs() < 1e-14);
        assert!((ev.point[0] - t_exact).abs() < 1e-14);
        assert!(arc_contact(&Parkour::flat(-1.0, 3.0), &arc, 0.0, 0.3).is_none());
    }

    #[test]
    fn arc_and_chord_agree_on_kind() {
        let env = course();
        for &(vx, vz) in &[(2.0, 1.0), (1.5, 2.5), (3.0, 1.2)] {
            let arc = bare_arc([0.6, 0.0], [vx, vz]);
            let dt = 0.005;
            let mut chord = None;
            let mut exact = None;
            for i in 0..400 {
                let (ta, tb) = (i as f64 * dt, (i + 1) as f64 * dt);
                if chord.is_none() {
                    chord = detect_contact(&env, &foot_only(arc.foot(ta), arc.foot(tb)));
                }
                if exact.is_none() {
                    exact = arc_contact(&env, &arc, ta, tb).map(|(_, e)| e);
                }
            }
            let (c, e) = (chord.unwrap(), exact.unwrap());
            assert_eq!(c.kind, e.kind, "vx={vx} vz={vz}");
            assert!((c.point[0] - e.point[0]).abs() < 1e-3);
        }
    }

    #[test]
    fn kick_keeps_position() {
        let arc = bare_arc([0.0, 0.5], [1.0, 1.0]);
        let k = arc.kicked(0.2, [0.0, 0.0]);
        for t in [0.2, 0.3, 0.45] {
            let (a, b) = (arc.hip(t), k.hip(t));
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn low_arc_never_lands_on_top() {
        // Apex below the top: stepping a ballistic arc towards the box must
        // end in a face collision.
        let env = course();
        let (vx, vz) = (2.0, 1.0);
        let apex = vz * vz / (2.0 * GRAVITY);
        assert!(apex < 0.2);
        let pos = |t: f64| [0.7 + vx * t, 0.01 + vz * t - 0.5 * GRAVITY * t * t];
        let dt = 0.005;
        let mut first = None;
        for i in 0..200 {
            let (a, b) = (pos(i as f64 * dt), pos((i + 1) as f64 * dt));
            if let Some(ev) = detect_contact(&env, &foot_only(a, b)) {
                first = Some(ev);
                break;
            }
        }
        assert_eq!(first.unwrap().kind, ContactKind::FrontCollision);
    }
}
