//! Reference paths and the Frenet frame.
//!
//! A [`ReferencePath`] is a polyline with per-vertex unit tangents and left
//! normals. Inside segment `j` the frame interpolates the vertex normals
//! linearly, so a point maps to
//!
//! ```text
//! p(u, d) = a_j + u * e_j + d * (n_j + u * (n_{j+1} - n_j)),   u in [0, 1]
//! ```
//!
//! which is continuous across vertices and exactly invertible. On straight
//! paths it reduces to the usual orthogonal projection.

use crate::error::{Error, Result};
use crate::math::{atan, wrap_angle};

const U_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrenetPoint {
    /// Arc length along the path.
    pub s: f64,
    /// Signed lateral offset, left positive.
    pub d: f64,
    /// Path heading at `s`.
    pub heading: f64,
    pub segment: usize,
    /// Set when the point lies outside the path's projection range.
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePath {
    x: Vec<f64>,
    y: Vec<f64>,
    arc: Vec<f64>,
    heading: Vec<f64>,
    nx: Vec<f64>,
    ny: Vec<f64>,
    seg_ux: Vec<f64>,
    seg_uy: Vec<f64>,
    seg_len: Vec<f64>,
}

/// Borrowed segment columns for lane-parallel nearest-segment scans.
#[derive(Clone, Copy)]
pub struct SegmentColumns<'a> {
    pub ax: &'a [f64],
    pub ay: &'a [f64],
    pub ux: &'a [f64],
    pub uy: &'a [f64],
    pub len: &'a [f64],
}

/// Squared distance from `(px, py)` to the segment starting at `(ax, ay)`.
#[inline(always)]
pub fn segment_dist2(ax: f64, ay: f64, ux: f64, uy: f64, len: f64, px: f64, py: f64) -> f64 {
    let wx = px - ax;
    let wy = py - ay;
    let t = wx * ux + wy * uy;
    let t = if t < 0.0 { 0.0 } else { t };
    let t = if t > len { len } else { t };
    let cx = wx - t * ux;
    let cy = wy - t * uy;
    cx * cx + cy * cy
}

impl ReferencePath {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGeometry("path needs at least two vertices".into()));
        }
        let n = points.len();
        let mut seg_ux = Vec::with_capacity(n - 1);
        let mut seg_uy = Vec::with_capacity(n - 1);
        let mut seg_len = Vec::with_capacity(n - 1);
        let mut arc = Vec::with_capacity(n);
        arc.push(0.0);
        for w in points.windows(2) {
            let dx = w[1].0 - w[0].0;
            let dy = w[1].1 - w[0].1;
            let len = dx.hypot(dy);
            if !(len > 0.0) || !len.is_finite() {
                return Err(Error::InvalidGeometry("arc length must be strictly increasing".into()));
            }
            seg_ux.push(dx / len);
            seg_uy.push(dy / len);
            seg_len.push(len);
            arc.push(arc[arc.len() - 1] + len);
        }
        let mut heading = Vec::with_capacity(n);
        let mut nx = Vec::with_capacity(n);
        let mut ny = Vec::with_capacity(n);
        for i in 0..n {
            let (tx, ty) = if i == 0 {
                (seg_ux[0], seg_uy[0])
            } else if i == n - 1 {
                (seg_ux[n - 2], seg_uy[n - 2])
            } else {
                let sx = seg_ux[i - 1] + seg_ux[i];
                let sy = seg_uy[i - 1] + seg_uy[i];
                let l = sx.hypot(sy);
                if !(l > 1e-9) {
                    return Err(Error::InvalidGeometry(format!("path reverses at vertex {i}")));
                }
                (sx / l, sy / l)
            };
            heading.push(ty.atan2(tx));
            nx.push(-ty);
            ny.push(tx);
        }
        Ok(Self {
            x: points.iter().map(|p| p.0).collect(),
            y: points.iter().map(|p| p.1).collect(),
            arc,
            heading,
            nx,
            ny,
            seg_ux,
            seg_uy,
            seg_len,
        })
    }

    /// Straight path from `start` along `heading`, sampled every `spacing` meters.
    pub fn straight(start: (f64, f64), heading: f64, length: f64, spacing: f64) -> Result<Self> {
        if !(length > 0.0 && spacing > 0.0) {
            return Err(Error::InvalidGeometry("length and spacing must be positive".into()));
        }
        let count = (length / spacing).ceil() as usize;
        let (s, c) = heading.sin_cos();
        let pts: Vec<_> = (0..=count)
            .map(|i| {
                let t = (i as f64 * spacing).min(length);
                (start.0 + t * c, start.1 + t * s)
            })
            .collect();
        Self::new(&pts)
    }

    /// Circular arc around `center`; positive `sweep` turns left.
    pub fn arc(center: (f64, f64), radius: f64, start_angle: f64, sweep: f64, spacing: f64) -> Result<Self> {
        if !(radius > 0.0 && spacing > 0.0 && sweep != 0.0) {
            return Err(Error::InvalidGeometry("degenerate arc".into()));
        }
        let count = ((radius * sweep.abs()) / spacing).ceil().max(1.0) as usize;
        let pts: Vec<_> = (0..=count)
            .map(|i| {
                let a = start_angle + sweep * i as f64 / count as f64;
                (center.0 + radius * a.cos(), center.1 + radius * a.sin())
            })
            .collect();
        Self::new(&pts)
    }

    /// The iso-`d` curve of this path's frame.
    pub fn offset(&self, d: f64) -> Result<Self> {
        let pts: Vec<_> = (0..self.x.len())
            .map(|i| (self.x[i] + d * self.nx[i], self.y[i] + d * self.ny[i]))
            .collect();
        Self::new(&pts)
    }

    pub fn length(&self) -> f64 {
        self.arc[self.arc.len() - 1]
    }

    pub fn vertex_count(&self) -> usize {
        self.x.len()
    }

    pub fn segment_count(&self) -> usize {
        self.seg_len.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.arc
    }

    pub fn vertex_heading(&self, i: usize) -> f64 {
        self.heading[i]
    }

    pub fn vertex_normal(&self, i: usize) -> (f64, f64) {
        (self.nx[i], self.ny[i])
    }

    pub fn segments(&self) -> SegmentColumns<'_> {
        let n = self.seg_len.len();
        SegmentColumns {
            ax: &self.x[..n],
            ay: &self.y[..n],
            ux: &self.seg_ux,
            uy: &self.seg_uy,
            len: &self.seg_len,
        }
    }

    /// Index of the Euclidean-nearest segment; ties go to the lower index.
    pub fn nearest_segment(&self, px: f64, py: f64) -> usize {
        let mut best = f64::INFINITY;
        let mut idx = 0;
        for j in 0..self.seg_len.len() {
            let d2 = segment_dist2(self.x[j], self.y[j], self.seg_ux[j], self.seg_uy[j], self.seg_len[j], px, py);
            if d2 < best {
                best = d2;
                idx = j;
            }
        }
        idx
    }

    /// Solves for the frame coordinates of `p` inside segment `j`.
    fn solve_in_segment(&self, j: usize, px: f64, py: f64) -> Option<(f64, f64)> {
        let (ax, ay) = (self.x[j], self.y[j]);
        let ex = self.x[j + 1] - ax;
        let ey = self.y[j + 1] - ay;
        let (nax, nay) = (self.nx[j], self.ny[j]);
        let mx = self.nx[j + 1] - nax;
        let my = self.ny[j + 1] - nay;
        let wx = px - ax;
        let wy = py - ay;
        let qa = ex * my - ey * mx;
        let qb = (ex * nay - ey * nax) - (wx * my - wy * mx);
        let qc = -(wx * nay - wy * nax);
        let scale = ex.abs() + ey.abs();
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |u: f64| {
            if !(u >= -U_TOL && u <= 1.0 + U_TOL) {
                return;
            }
            let u = u.clamp(0.0, 1.0);
            let nux = nax + u * mx;
            let nuy = nay + u * my;
            let rx = wx - u * ex;
            let ry = wy - u * ey;
            let d = (rx * nux + ry * nuy) / (nux * nux + nuy * nuy);
            match best {
                Some((_, bd)) if !(d.abs() < bd.abs()) => {}
                _ => best = Some((u, d)),
            }
        };
        if qa.abs() <= 1e-14 * scale {
            if qb != 0.0 {
                consider(-qc / qb);
            }
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let q = -0.5 * (qb + if qb >= 0.0 { sq } else { -sq });
                if q != 0.0 {
                    consider(q / qa);
                    consider(qc / q);
                } else {
                    consider(0.0);
                }
            }
        }
        best
    }

    #[inline]
    fn heading_in_segment(&self, j: usize, u: f64) -> f64 {
        let ha = self.heading[j];
        wrap_angle(ha + u * wrap_angle(self.heading[j + 1] - ha))
    }

    /// Refines a projection given the nearest segment from a prior scan.
    pub fn project_from_segment(&self, px: f64, py: f64, nearest: usize) -> FrenetPoint {
        let nseg = self.seg_len.len();
        let lo = nearest.saturating_sub(1);
        let hi = (nearest + 1).min(nseg - 1);
        let mut best: Option<(usize, f64, f64)> = None;
        for j in lo..=hi {
            if let Some((u, d)) = self.solve_in_segment(j, px, py) {
                match best {
                    Some((_, _, bd)) if !(d.abs() < bd.abs()) => {}
                    _ => best = Some((j, u, d)),
                }
            }
        }
        if let Some((j, u, d)) = best {
            return FrenetPoint {
                s: self.arc[j] + u * self.seg_len[j],
                d,
                heading: self.heading_in_segment(j, u),
                segment: j,
                clamped: false,
            };
        }
        // outside the frame: clamp to an endpoint or fall back to the Euclidean foot
        let j = nearest;
        let wx = px - self.x[j];
        let wy = py - self.y[j];
        let t = wx * self.seg_ux[j] + wy * self.seg_uy[j];
        if j == 0 && t <= 0.0 {
            return FrenetPoint { s: 0.0, d: wx * self.nx[0] + wy * self.ny[0], heading: self.heading[0], segment: 0, clamped: true };
        }
        let last = nseg - 1;
        if j == last && t >= self.seg_len[last] {
            let v = last + 1;
            let d = (px - self.x[v]) * self.nx[v] + (py - self.y[v]) * self.ny[v];
            return FrenetPoint { s: self.arc[v], d, heading: self.heading[v], segment: last, clamped: true };
        }
        let t = t.clamp(0.0, self.seg_len[j]);
        let cross = self.seg_ux[j] * wy - self.seg_uy[j] * wx;
        let cx = wx - t * self.seg_ux[j];
        let cy = wy - t * self.seg_uy[j];
        let u = t / self.seg_len[j];
        FrenetPoint {
            s: self.arc[j] + t,
            d: cx.hypot(cy).copysign(cross),
            heading: self.heading_in_segment(j, u),
            segment: j,
            clamped: true,
        }
    }

    pub fn project(&self, px: f64, py: f64) -> FrenetPoint {
        self.project_from_segment(px, py, self.nearest_segment(px, py))
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let nseg = self.seg_len.len();
        let j = match self.arc.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(i) => i.min(nseg - 1),
            Err(i) => i.saturating_sub(1).min(nseg - 1),
        };
        (j, (s - self.arc[j]) / self.seg_len[j])
    }

    /// Maps frame coordinates back to the plane; `s` outside the path extrapolates.
    pub fn point_at(&self, s: f64, d: f64) -> (f64, f64) {
        let (j, u) = self.locate(s);
        let ex = self.x[j + 1] - self.x[j];
        let ey = self.y[j + 1] - self.y[j];
        let nux = self.nx[j] + u * (self.nx[j + 1] - self.nx[j]);
        let nuy = self.ny[j] + u * (self.ny[j + 1] - self.ny[j]);
        (self.x[j] + u * ex + d * nux, self.y[j] + u * ey + d * nuy)
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let (j, u) = self.locate(s);
        self.heading_in_segment(j, u.clamp(0.0, 1.0))
    }

    /// Minimum turning radius implied by consecutive vertex headings.
    pub fn min_curvature_radius(&self) -> f64 {
        (0..self.seg_len.len())
            .map(|j| {
                let dh = wrap_angle(self.heading[j + 1] - self.heading[j]).abs();
                if dh == 0.0 { f64::INFINITY } else { self.seg_len[j] / dh }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Projects `point` onto `path`.
pub fn frenet_project(point: (f64, f64), path: &ReferencePath) -> FrenetPoint {
    path.project(point.0, point.1)
}

/// Heading of a direction in the frame given its lateral slope `dd/ds`.
pub fn slope_heading(path_heading: f64, slope: f64) -> f64 {
    wrap_angle(path_heading + atan(slope))
}

/// Multi-lane road around a straight or curved centerline, plus an optional
/// crossing road. Lane `i` is centred at `(i - (n - 1) / 2) * width`, left positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Road {
    pub centerline: ReferencePath,
    pub lane_count: usize,
    pub lane_width: f64,
    pub crossing: Option<ReferencePath>,
}

impl Road {
    pub fn new(centerline: ReferencePath, lane_count: usize, lane_width: f64, crossing: Option<ReferencePath>) -> Result<Self> {
        if lane_count == 0 || !(lane_width > 0.0) {
            return Err(Error::InvalidGeometry("road needs at least one lane of positive width".into()));
        }
        Ok(Self { centerline, lane_count, lane_width, crossing })
    }

    /// Straight road along +x starting at the origin.
    pub fn straight(length: f64, lane_count: usize, lane_width: f64) -> Result<Self> {
        Self::new(ReferencePath::straight((0.0, 0.0), 0.0, length, 5.0)?, lane_count, lane_width, None)
    }

    #[inline(always)]
    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 - (self.lane_count as f64 - 1.0) * 0.5) * self.lane_width
    }

    /// Lane whose band contains `d`, clamped to existing lanes.
    #[inline(always)]
    pub fn nearest_lane(&self, d: f64) -> usize {
        let f = (d / self.lane_width + (self.lane_count as f64 - 1.0) * 0.5).round();
        let f = if f < 0.0 { 0.0 } else { f };
        let top = (self.lane_count - 1) as f64;
        (if f > top { top } else { f }) as usize
    }

    pub fn route(&self, route: Route) -> &ReferencePath {
        match (route, &self.crossing) {
            (Route::Crossing, Some(c)) => c,
            _ => &self.centerline,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Main,
    Crossing,
}
