use serde::{Deserialize, Serialize};

use crate::math::sin_cos;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Obb {
    pub fn frame(&self) -> ObbFrame {
        ObbFrame::new(self.x, self.y, self.heading, self.half_length, self.half_width)
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [(f64, f64); 4] {
        self.frame().corners()
    }
}

/// Rectangle with its axes precomputed for repeated SAT tests.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObbFrame {
    pub cx: f64,
    pub cy: f64,
    pub cos: f64,
    pub sin: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl ObbFrame {
    #[inline(always)]
    pub fn new(cx: f64, cy: f64, heading: f64, half_length: f64, half_width: f64) -> Self {
        let (sin, cos) = sin_cos(heading);
        Self { cx, cy, cos, sin, half_length, half_width }
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (lx, ly) = (self.cos * self.half_length, self.sin * self.half_length);
        let (wx, wy) = (-self.sin * self.half_width, self.cos * self.half_width);
        [
            (self.cx + lx + wx, self.cy + ly + wy),
            (self.cx - lx + wx, self.cy - ly + wy),
            (self.cx - lx - wx, self.cy - ly - wy),
            (self.cx + lx - wx, self.cy + ly - wy),
        ]
    }

    #[inline(always)]
    fn radius_on(&self, ax: f64, ay: f64) -> f64 {
        self.half_length * (self.cos * ax + self.sin * ay).abs() + self.half_width * (self.cos * ay - self.sin * ax).abs()
    }

    /// Candidate axis `k` in 0..4: two from `a`, two from `b`.
    #[inline(always)]
    fn axis(k: usize, a: &ObbFrame, b: &ObbFrame) -> (f64, f64) {
        match k {
            0 => (a.cos, a.sin),
            1 => (-a.sin, a.cos),
            2 => (b.cos, b.sin),
            _ => (-b.sin, b.cos),
        }
    }
}

/// True when axis `k` separates `a` and `b`; touching is not separated.
#[inline(always)]
pub fn separated_on_axis(k: usize, a: &ObbFrame, b: &ObbFrame) -> bool {
    let (ax, ay) = ObbFrame::axis(k, a, b);
    let dist = ((b.cx - a.cx) * ax + (b.cy - a.cy) * ay).abs();
    dist > a.radius_on(ax, ay) + b.radius_on(ax, ay)
}

/// Scalar separating-axis test over the four rectangle axes.
#[inline]
pub fn sat_overlap(a: &ObbFrame, b: &ObbFrame) -> bool {
    for k in 0..4 {
        if separated_on_axis(k, a, b) {
            return false;
        }
    }
    true
}

/// Lane-parallel SAT over up to `W` pairs. A lane retires as soon as one axis
/// separates its pair; the loop stops when every lane has retired or all four
/// axes were tested. Inactive slots report `false`.
#[inline]
pub fn sat_overlap_batch<const W: usize>(a: &[ObbFrame; W], b: &[ObbFrame; W], mask: [bool; W]) -> [bool; W] {
    let mut live = mask;
    for k in 0..4 {
        if !live.iter().any(|&l| l) {
            break;
        }
        for l in 0..W {
            let sep = separated_on_axis(k, &a[l], &b[l]);
            live[l] = live[l] & !sep;
        }
    }
    live
}

/// Runs [`sat_overlap_batch`] over arbitrary-length pair lists in chunks of `W`.
pub fn sat_overlap_pairs<const W: usize>(a: &[ObbFrame], b: &[ObbFrame], out: &mut Vec<bool>) {
    debug_assert_eq!(a.len(), b.len());
    out.clear();
    let mut start = 0;
    while start < a.len() {
        let n = (a.len() - start).min(W);
        let mut ca = [ObbFrame::default(); W];
        let mut cb = [ObbFrame::default(); W];
        let mut mask = [false; W];
        for l in 0..n {
            ca[l] = a[start + l];
            cb[l] = b[start + l];
            mask[l] = true;
        }
        let flags = sat_overlap_batch::<W>(&ca, &cb, mask);
        out.extend_from_slice(&flags[..n]);
        start += n;
    }
}
