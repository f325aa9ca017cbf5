//! The real Heisenberg group `H_n`, its lattice `Z^n x Z^n x (1/2)Z`, the
//! reproducing set `E = (-1/2,1/2)^{2n} x (-1/4,1/4)` and the integration
//! normalization tying Lebesgue measure to the unit-mass quotient measure.
//!
//! Coordinates are `(x, xi, t)` with the product
//! `(x,xi,t)(x',xi',t') = (x+x', xi+xi', t+t' + (x.xi' - x'.xi)/2)`.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PointFunction};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Haar measure in the quotient-normalized convention is `HAAR_SCALE` times
/// Lebesgue measure: the fundamental domain has Lebesgue volume 1/2 and the
/// quotient measure has total mass 1.
pub const HAAR_SCALE: f64 = 2.0;

/// Default absolute tolerance for lattice membership tests.
pub const DEFAULT_LATTICE_TOL: f64 = 1e-9;

/// An element `(x, xi, t)` of `H_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub t: f64,
}

impl Point {
    pub fn new(x: Vec<f64>, xi: Vec<f64>, t: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidArgument("dimension n must be at least 1".into()));
        }
        if x.len() != xi.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: xi.len() });
        }
        if !(x.iter().chain(xi.iter()).all(|v| v.is_finite()) && t.is_finite()) {
            return Err(Error::InvalidArgument("point components must be finite".into()));
        }
        Ok(Point { x, xi, t })
    }

    pub fn identity(n: usize) -> Self {
        Point { x: vec![0.0; n], xi: vec![0.0; n], t: 0.0 }
    }

    /// Builds a point from the flat coordinate layout `(x_1..x_n, xi_1..xi_n, t)`.
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        if coords.len() < 3 || coords.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "flat coordinates must have odd length 2n+1 >= 3, got {}",
                coords.len()
            )));
        }
        let n = (coords.len() - 1) / 2;
        Point::new(coords[..n].to_vec(), coords[n..2 * n].to_vec(), coords[2 * n])
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.n() + 1);
        out.extend_from_slice(&self.x);
        out.extend_from_slice(&self.xi);
        out.push(self.t);
        out
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn max_abs_diff(&self, other: &Point) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn check_dims(p: &Point, q: &Point) -> Result<()> {
    if p.n() != q.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), found: q.n() });
    }
    Ok(())
}

pub fn group_mul(p: &Point, q: &Point) -> Result<Point> {
    check_dims(p, q)?;
    let x = p.x.iter().zip(&q.x).map(|(a, b)| a + b).collect();
    let xi = p.xi.iter().zip(&q.xi).map(|(a, b)| a + b).collect();
    let t = p.t + q.t + 0.5 * (dot(&p.x, &q.xi) - dot(&q.x, &p.xi));
    Ok(Point { x, xi, t })
}

pub fn group_inv(p: &Point) -> Point {
    Point {
        x: p.x.iter().map(|v| -v).collect(),
        xi: p.xi.iter().map(|v| -v).collect(),
        t: -p.t,
    }
}

/// `g h g^{-1}`.
pub fn conjugate(g: &Point, h: &Point) -> Result<Point> {
    group_mul(&group_mul(g, h)?, &group_inv(g))
}

fn near_integer(v: f64, tol: f64) -> bool {
    (v - v.round()).abs() <= tol
}

/// Membership in `Z^n x Z^n x (1/2)Z` up to an absolute tolerance.
pub fn in_lattice(p: &Point, tol: f64) -> bool {
    p.x.iter().chain(p.xi.iter()).all(|&v| near_integer(v, tol)) && near_integer(2.0 * p.t, 2.0 * tol)
}

/// Which part of `Gamma - {1}` a difference `p q^{-1}` was found in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum WitnessKind {
    /// Conjugates of `(Z^{2n} - 0) x (1/2)Z`; only the integer `(a, alpha)` survive conjugation.
    NonCentral { a: Vec<i64>, alpha: Vec<i64> },
    /// Central elements `(0, 0, c)` with `c` a nonzero half-integer.
    Central { twice_c: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub difference: Point,
    pub kind: WitnessKind,
}

/// Returns a witness iff `p q^{-1}` lies in some conjugate of `Gamma - {1}`.
///
/// Conjugation fixes `(x, xi)` and moves `t` by `x.xi' - x'.xi`, which sweeps
/// every real number once `(a, alpha) != 0`, so the orbit of the non-central
/// part is exactly `(Z^{2n} - 0) x R` and the central part is its own orbit.
pub fn reproducing_violation(p: &Point, q: &Point, tol: f64) -> Result<Option<Witness>> {
    let d = group_mul(p, &group_inv(q))?;
    let planar: Vec<f64> = d.x.iter().chain(d.xi.iter()).copied().collect();
    let all_integer = planar.iter().all(|&v| near_integer(v, tol));
    if !all_integer {
        return Ok(None);
    }
    let rounded: Vec<i64> = planar.iter().map(|v| v.round() as i64).collect();
    let n = d.n();
    if rounded.iter().any(|&v| v != 0) {
        return Ok(Some(Witness {
            kind: WitnessKind::NonCentral { a: rounded[..n].to_vec(), alpha: rounded[n..].to_vec() },
            difference: d,
        }));
    }
    let twice_c = (2.0 * d.t).round();
    if twice_c != 0.0 && (2.0 * d.t - twice_c).abs() <= 2.0 * tol {
        return Ok(Some(Witness { kind: WitnessKind::Central { twice_c: twice_c as i64 }, difference: d }));
    }
    Ok(None)
}

/// Per-axis bounds of the reproducing set `E`.
pub fn reproducing_set_box(n: usize) -> Vec<(f64, f64)> {
    let mut b = vec![(-0.5, 0.5); 2 * n];
    b.push((-0.25, 0.25));
    b
}

/// Per-axis bounds of the fundamental domain `[0,1)^{2n} x [0,1/2)`.
pub fn fundamental_domain_box(n: usize) -> Vec<(f64, f64)> {
    let mut b = vec![(0.0, 1.0); 2 * n];
    b.push((0.0, 0.5));
    b
}

pub fn box_volume(b: &[(f64, f64)]) -> f64 {
    b.iter().map(|(lo, hi)| hi - lo).product()
}

pub fn in_reproducing_set(p: &Point) -> bool {
    p.x.iter().chain(p.xi.iter()).all(|v| v.abs() < 0.5) && p.t.abs() < 0.25
}

/// Both sides of the unfolding identity `int_G f = int_{Gamma\G} sum_gamma f(gamma x)`,
/// scaled to the quotient-normalized convention (`HAAR_SCALE` times Lebesgue).
#[derive(Debug, Clone, Serialize)]
pub struct WeilCheck {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub gamma_radius: u32,
    /// Number of (sample, translate) pairs with nonzero contribution.
    pub contributing: usize,
}

impl WeilCheck {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.lhs.norm();
        if scale == 0.0 {
            (self.lhs - self.rhs).norm()
        } else {
            (self.lhs - self.rhs).norm() / scale
        }
    }
}

/// Smallest radius whose ball contains every translate that can meet the
/// support of `f` from the fundamental domain, plus one empty boundary shell.
pub fn default_gamma_radius(support: &[(f64, f64)]) -> u32 {
    let n = (support.len() - 1) / 2;
    let mut planar: f64 = 0.0;
    for &(lo, hi) in &support[..2 * n] {
        // a + x in (lo, hi) for x in [0, 1)
        planar = planar.max((lo - 1.0).abs().ceil()).max(hi.abs().ceil());
    }
    let (tlo, thi) = support[2 * n];
    // c = t_f - t - (a.xi - x.alpha)/2 with t in [0, 1/2), |a|,|alpha| <= planar, |x|,|xi| < 1
    let shear = n as f64 * planar;
    let c_bound = tlo.abs().max(thi.abs()) + 0.5 + shear;
    let twice_c = (2.0 * c_bound).ceil();
    planar.max(twice_c) as u32 + 1
}

/// Evaluates both sides of the unfolding identity by midpoint quadrature.
///
/// The left side integrates `f` over the box of `grid`; the right side
/// integrates the periodization over the fundamental domain with the same
/// per-axis sample counts. Translates are enumerated in the ball
/// `|a|, |alpha| <= r`, `|2c| <= r`; mass on the boundary shell or outside the
/// ball is reported as [`Error::InsufficientRadius`].
pub fn weil_check<F: PointFunction + ?Sized>(
    f: &F,
    grid: &GridSpec,
    gamma_radius: Option<u32>,
) -> Result<WeilCheck> {
    let n = f.n();
    if grid.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: grid.n() });
    }
    let support = f.support();
    let radius = gamma_radius.unwrap_or_else(|| default_gamma_radius(&support));
    let r = radius as i64;

    let lhs_grid = crate::grid::GridFunction::sample(grid, f);
    let lhs = HAAR_SCALE * lhs_grid.integral();

    let fd = GridSpec::with_box(n, grid.counts().to_vec(), fundamental_domain_box(n))?;
    let cell = fd.cell_volume();
    let dim = 2 * n + 1;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut contributing = 0usize;
    let mut coords = vec![0.0; dim];
    let mut image = vec![0.0; dim];
    let mut ranges: Vec<(i64, i64)> = vec![(0, 0); 2 * n];

    for idx in 0..fd.len() {
        fd.point_into(idx, &mut coords);
        // admissible integer shifts per planar axis, unclipped
        for i in 0..2 * n {
            let (lo, hi) = support[i];
            ranges[i] = ((lo - coords[i]).ceil() as i64, (hi - coords[i]).floor() as i64);
        }
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            continue;
        }
        let mut planar_shift = vec![0i64; 2 * n];
        for (i, s) in planar_shift.iter_mut().enumerate() {
            *s = ranges[i].0;
        }
        loop {
            let (a, alpha) = planar_shift.split_at(n);
            let (x, rest) = coords.split_at(n);
            let (xi, t) = rest.split_at(n);
            let shear: f64 = 0.5
                * (a.iter().zip(xi).map(|(ai, v)| *ai as f64 * v).sum::<f64>()
                    - x.iter().zip(alpha).map(|(v, al)| v * *al as f64).sum::<f64>());
            let base_t = t[0] + shear;
            let (tlo, thi) = support[2 * n];
            let c_lo = (2.0 * (tlo - base_t)).ceil() as i64;
            let c_hi = (2.0 * (thi - base_t)).floor() as i64;
            for twice_c in c_lo..=c_hi {
                for i in 0..2 * n {
                    image[i] = coords[i] + planar_shift[i] as f64;
                }
                image[2 * n] = base_t + 0.5 * twice_c as f64;
                let v = f.eval(&image);
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let norm = planar_shift.iter().map(|s| s.abs()).max().unwrap_or(0).max(twice_c.abs());
                if norm >= r {
                    return Err(Error::InsufficientRadius { radius });
                }
                contributing += 1;
                acc += v;
            }
            // odometer over the planar shift box
            let mut axis = 0;
            loop {
                if axis == 2 * n {
                    break;
                }
                planar_shift[axis] += 1;
                if planar_shift[axis] <= ranges[axis].1 {
                    break;
                }
                planar_shift[axis] = ranges[axis].0;
                axis += 1;
            }
            if axis == 2 * n {
                break;
            }
        }
    }
    let rhs = HAAR_SCALE * acc * cell;
    Ok(WeilCheck { lhs, rhs, gamma_radius: radius, contributing })
}
