//! Exact-at-integers trigonometry.

use num_complex::Complex64;
use std::f64::consts::PI;

/// `sin(pi x)`, exactly zero at every integer and exactly ±1 at half-integers.
pub fn sin_pi(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    // x = 2m + r with r in [-1, 1)
    let r = x - 2.0 * (x / 2.0).round();
    let (sign, r) = if r < 0.0 { (-1.0, -r) } else { (1.0, r) };
    // r in [0, 1]; fold onto [0, 1/2]
    let r = if r > 0.5 { 1.0 - r } else { r };
    let v = if r == 0.0 {
        0.0
    } else if r == 0.5 {
        1.0
    } else if r <= 0.25 {
        (PI * r).sin()
    } else {
        (PI * (0.5 - r)).cos()
    };
    sign * v
}

/// Normalized sinc: `sin(pi s) / (pi s)`, with `sinc(0) = 1`.
pub fn sinc(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        sin_pi(s) / (PI * s)
    }
}

/// `exp(-2 pi i theta)` with argument reduction so integer `theta` gives exactly 1.
pub fn cis_neg_turns(theta: f64) -> Complex64 {
    let r = theta - theta.round();
    let (s, c) = (2.0 * PI * r).sin_cos();
    Complex64::new(c, -s)
}
