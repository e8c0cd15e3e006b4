//! Branch-free elementary functions.
//!
//! The batch kernels evaluate trigonometry across lanes in plain loops. Calls
//! into libm block auto-vectorization, so the functions here are written as
//! straight-line polynomial code with selects instead of branches. The scalar
//! reference path uses the very same functions, which is what makes
//! batch/scalar outputs bit-identical.
//!
//! Accuracy is within a few ulp of the libm results on the ranges the planner
//! uses (angles of a few turns, arbitrary `atan` arguments).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI, TAU};

const PIO2_HI: f64 = 1.570_796_326_794_896_6;
const PIO2_LO: f64 = 6.123_233_995_736_766e-17;
const TWO_OVER_PI: f64 = 0.636_619_772_367_581_4;

// Taylor coefficients; on |r| <= pi/4 the truncation error is below 1e-16.
const S3: f64 = -1.0 / 6.0;
const S5: f64 = 1.0 / 120.0;
const S7: f64 = -1.0 / 5040.0;
const S9: f64 = 1.0 / 362_880.0;
const S11: f64 = -1.0 / 39_916_800.0;
const S13: f64 = 1.0 / 6_227_020_800.0;
const S15: f64 = -1.0 / 1_307_674_368_000.0;

const C2: f64 = -1.0 / 2.0;
const C4: f64 = 1.0 / 24.0;
const C6: f64 = -1.0 / 720.0;
const C8: f64 = 1.0 / 40_320.0;
const C10: f64 = -1.0 / 3_628_800.0;
const C12: f64 = 1.0 / 479_001_600.0;
const C14: f64 = -1.0 / 87_178_291_200.0;
const C16: f64 = 1.0 / 20_922_789_888_000.0;

const TAN_PI_12: f64 = 0.267_949_192_431_122_7;
const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[inline(always)]
fn select(cond: bool, a: f64, b: f64) -> f64 {
    if cond {
        a
    } else {
        b
    }
}

#[inline(always)]
fn sin_poly(r: f64) -> f64 {
    let r2 = r * r;
    let p = S13 + r2 * S15;
    let p = S11 + r2 * p;
    let p = S9 + r2 * p;
    let p = S7 + r2 * p;
    let p = S5 + r2 * p;
    let p = S3 + r2 * p;
    r + r * r2 * p
}

#[inline(always)]
fn cos_poly(r: f64) -> f64 {
    let r2 = r * r;
    let p = C14 + r2 * C16;
    let p = C12 + r2 * p;
    let p = C10 + r2 * p;
    let p = C8 + r2 * p;
    let p = C6 + r2 * p;
    let p = C4 + r2 * p;
    let p = C2 + r2 * p;
    1.0 + r2 * p
}

/// Returns `(sin x, cos x)`.
#[inline(always)]
pub fn sin_cos(x: f64) -> (f64, f64) {
    let q = (x * TWO_OVER_PI).round();
    let r = (x - q * PIO2_HI) - q * PIO2_LO;
    let s = sin_poly(r);
    let c = cos_poly(r);
    // quadrant in 0..4, kept in floating point so the selects vectorize
    let quad = q - 4.0 * (q * 0.25).floor();
    let sin = select(
        quad == 0.0,
        s,
        select(quad == 1.0, c, select(quad == 2.0, -s, -c)),
    );
    let cos = select(
        quad == 0.0,
        c,
        select(quad == 1.0, -s, select(quad == 2.0, -c, s)),
    );
    (sin, cos)
}

#[inline(always)]
pub fn sin(x: f64) -> f64 {
    sin_cos(x).0
}

#[inline(always)]
pub fn cos(x: f64) -> f64 {
    sin_cos(x).1
}

/// Tangent for steering-sized angles (|x| well inside pi/2).
#[inline(always)]
pub fn tan(x: f64) -> f64 {
    let (s, c) = sin_cos(x);
    s / c
}

#[inline(always)]
fn atan_poly(z: f64) -> f64 {
    // alternating series 1/(2k+1); |z| <= tan(pi/12) so 14 terms reach double precision
    let z2 = z * z;
    let p = -1.0 / 27.0;
    let p = 1.0 / 25.0 + z2 * p;
    let p = -1.0 / 23.0 + z2 * p;
    let p = 1.0 / 21.0 + z2 * p;
    let p = -1.0 / 19.0 + z2 * p;
    let p = 1.0 / 17.0 + z2 * p;
    let p = -1.0 / 15.0 + z2 * p;
    let p = 1.0 / 13.0 + z2 * p;
    let p = -1.0 / 11.0 + z2 * p;
    let p = 1.0 / 9.0 + z2 * p;
    let p = -1.0 / 7.0 + z2 * p;
    let p = 1.0 / 5.0 + z2 * p;
    let p = -1.0 / 3.0 + z2 * p;
    z + z * z2 * p
}

#[inline(always)]
pub fn atan(x: f64) -> f64 {
    let ax = x.abs();
    let inv = ax > 1.0;
    let y = select(inv, 1.0 / ax, ax);
    let shifted = y > TAN_PI_12;
    let z = select(shifted, (y * SQRT_3 - 1.0) / (SQRT_3 + y), y);
    let r = select(shifted, FRAC_PI_6, 0.0) + atan_poly(z);
    let r = select(inv, FRAC_PI_2 - r, r);
    select(x < 0.0, -r, r)
}

/// Wraps an angle into `(-pi, pi]`. Valid for inputs within `(-3pi, 3pi]`.
#[inline(always)]
pub fn wrap_angle(a: f64) -> f64 {
    let a = select(a > PI, a - TAU, a);
    select(a <= -PI, a + TAU, a)
}

/// Wraps an angle of any magnitude into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % TAU;
    if r > PI {
        r -= TAU;
    } else if r <= -PI {
        r += TAU;
    }
    r
}
