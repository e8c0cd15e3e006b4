use serde::{Deserialize, Serialize};

use crate::math::sin_cos;
use crate::model::geometry::ReferencePath;
use crate::spatial::obb::Obb;

/// Axis-aligned box in `(s, d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min_s: f64,
    pub max_s: f64,
    pub min_d: f64,
    pub max_d: f64,
}

impl Aabb {
    /// Identity element of [`Aabb::union`].
    pub const EMPTY: Aabb = Aabb { min_s: f64::INFINITY, max_s: f64::NEG_INFINITY, min_d: f64::INFINITY, max_d: f64::NEG_INFINITY };
    pub const EVERYTHING: Aabb = Aabb { min_s: f64::NEG_INFINITY, max_s: f64::INFINITY, min_d: f64::NEG_INFINITY, max_d: f64::INFINITY };

    pub fn new(min_s: f64, max_s: f64, min_d: f64, max_d: f64) -> Self {
        Self { min_s, max_s, min_d, max_d }
    }

    pub fn is_empty(&self) -> bool {
        self.min_s > self.max_s || self.min_d > self.max_d
    }

    /// Closed-interval overlap; touching boxes intersect.
    #[inline(always)]
    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min_s <= o.max_s && o.min_s <= self.max_s && self.min_d <= o.max_d && o.min_d <= self.max_d
    }

    #[inline]
    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min_s: self.min_s.min(o.min_s),
            max_s: self.max_s.max(o.max_s),
            min_d: self.min_d.min(o.min_d),
            max_d: self.max_d.max(o.max_d),
        }
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        self.min_s <= o.min_s && self.max_s >= o.max_s && self.min_d <= o.min_d && self.max_d >= o.max_d
    }

    pub fn inflate(&self, margin: f64) -> Aabb {
        Aabb { min_s: self.min_s - margin, max_s: self.max_s + margin, min_d: self.min_d - margin, max_d: self.max_d + margin }
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.min_s + self.max_s), 0.5 * (self.min_d + self.max_d))
    }
}

/// Bound of a rectangle given its frame position and heading relative to the
/// path. Tight when the path is straight.
#[inline(always)]
pub fn aabb_from_center(s: f64, d: f64, rel_heading: f64, half_length: f64, half_width: f64, margin: f64) -> Aabb {
    let (sn, cs) = sin_cos(rel_heading);
    let es = half_length * cs.abs() + half_width * sn.abs() + margin;
    let ed = half_length * sn.abs() + half_width * cs.abs() + margin;
    Aabb { min_s: s - es, max_s: s + es, min_d: d - ed, max_d: d + ed }
}

/// Bound of the four projected corners of `obb`, inflated by `margin`. The flag
/// reports whether any corner fell outside the path's projection range.
pub fn frenet_aabb(obb: &Obb, path: &ReferencePath, margin: f64) -> (Aabb, bool) {
    let mut out = Aabb::EMPTY;
    let mut clamped = false;
    for (x, y) in obb.corners() {
        let p = path.project(x, y);
        clamped |= p.clamped;
        out = out.union(&Aabb::new(p.s, p.s, p.d, p.d));
    }
    (out.inflate(margin), clamped)
}
