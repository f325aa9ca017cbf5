//! Characters `chi_{b,beta}`, Schrödinger representations `rho_omega`, and
//! three routes to `||rho_omega(f)||_HS^2`.
//!
//! `rho_omega(x, xi, t)` acts on `L^2(R^n)` by
//! `phi(y) -> exp(-2 pi i omega (t + xi.y + x.xi/2)) phi(y + x)`.
//! All norms here use Lebesgue measure.

use crate::error::{Error, Result};
use crate::grid::{apply_axis, fourier_at, fourier_many, partial_fourier_t, write_hgf1, Frequency, GridFunction};
use crate::group::Point;
use crate::special::{cis_neg_turns, sinc};
use num_complex::Complex64;
use rayon::prelude::*;
use std::io::Write;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const COMMENSURATE_TOL: f64 = 1e-9;

/// Default half-width `L` of the window `[-L, L)^n`.
pub const DEFAULT_WINDOW_HALF_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CharacterParams {
    pub b: Vec<f64>,
    pub beta: Vec<f64>,
}

impl CharacterParams {
    pub fn new(b: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if b.len() != beta.len() {
            return Err(Error::DimensionMismatch { expected: b.len(), found: beta.len() });
        }
        if !b.iter().chain(&beta).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("character parameters must be finite".into()));
        }
        Ok(CharacterParams { b, beta })
    }
}

/// `exp(-2 pi i (b.x + beta.xi))`.
pub fn char_value(c: &CharacterParams, p: &Point) -> Result<Complex64> {
    if c.b.len() != p.n() {
        return Err(Error::DimensionMismatch { expected: c.b.len(), found: p.n() });
    }
    let phase: f64 = c.b.iter().zip(&p.x).chain(c.beta.iter().zip(&p.xi)).map(|(u, v)| u * v).sum();
    Ok(cis_neg_turns(phase))
}

/// `chi_{b,beta}(f) = f^(b, beta, 0)`.
pub fn char_coefficient(f: &GridFunction, c: &CharacterParams) -> Result<Complex64> {
    if c.b.len() != f.n() {
        return Err(Error::DimensionMismatch { expected: f.n(), found: c.b.len() });
    }
    Ok(fourier_at(f, &Frequency { b: c.b.clone(), beta: c.beta.clone(), omega: 0.0 }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepParams {
    omega: f64,
}

impl RepParams {
    pub fn new(omega: f64) -> Result<Self> {
        if omega == 0.0 {
            return Err(Error::ZeroOmega);
        }
        if !omega.is_finite() {
            return Err(Error::InvalidArgument("omega must be finite".into()));
        }
        Ok(RepParams { omega })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }
}

/// Uniform grid `origin + j h`, `j < count`, on every one of `n` axes.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    pub n: usize,
    pub origin: f64,
    pub h: f64,
    pub count: usize,
}

impl WindowSpec {
    pub fn new(n: usize, origin: f64, h: f64, count: usize) -> Result<Self> {
        if n == 0 || count == 0 || !(h > 0.0 && h.is_finite()) || !origin.is_finite() {
            return Err(Error::InvalidArgument("window needs n, count >= 1 and a positive spacing".into()));
        }
        Ok(WindowSpec { n, origin, h, count })
    }

    /// `[-L, L)^n` with nodes `-L + j h`.
    pub fn symmetric(n: usize, half_width: f64, h: f64) -> Result<Self> {
        let count = (2.0 * half_width / h).round() as usize;
        WindowSpec::new(n, -half_width, h, count)
    }

    /// Default window for kernels of `f`: `L = 2`, spacing equal to the x-spacing of `f`.
    pub fn default_for(f: &GridFunction) -> Result<Self> {
        WindowSpec::symmetric(f.n(), DEFAULT_WINDOW_HALF_WIDTH, x_spacing(f)?)
    }

    pub fn node(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.h
    }

    pub fn len(&self) -> usize {
        self.count.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn end(&self) -> f64 {
        self.origin + self.count as f64 * self.h
    }

    fn counts(&self) -> Vec<usize> {
        vec![self.count; self.n]
    }
}

/// Samples of `phi` on a [`WindowSpec`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    spec: WindowSpec,
    values: Vec<Complex64>,
}

impl Window {
    pub fn from_values(spec: WindowSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidArgument("window value count does not match its spec".into()));
        }
        Ok(Window { spec, values })
    }

    pub fn from_fn(spec: WindowSpec, phi: impl Fn(&[f64]) -> Complex64) -> Self {
        let mut y = vec![0.0; spec.n];
        let values = (0..spec.len())
            .map(|mut idx| {
                for axis in (0..spec.n).rev() {
                    y[axis] = spec.node(idx % spec.count);
                    idx /= spec.count;
                }
                phi(&y)
            })
            .collect();
        Window { spec, values }
    }

    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.spec.h.powi(self.spec.n as i32)
    }

    pub fn max_abs_diff(&self, other: &Window) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Per-axis inclusive index range of the samples above `1e-15 max|phi|`,
    /// or `None` if all vanish.
    fn support_box(&self) -> Option<Vec<(usize, usize)>> {
        let (n, c) = (self.spec.n, self.spec.count);
        let floor = 1e-15 * self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut bx: Option<Vec<(usize, usize)>> = None;
        for (mut idx, v) in self.values.iter().enumerate() {
            if v.norm() <= floor {
                continue;
            }
            let mut tuple = vec![0; n];
            for axis in (0..n).rev() {
                tuple[axis] = idx % c;
                idx /= c;
            }
            let b = bx.get_or_insert_with(|| tuple.iter().map(|&i| (i, i)).collect());
            for (r, &i) in b.iter_mut().zip(&tuple) {
                r.0 = r.0.min(i);
                r.1 = r.1.max(i);
            }
        }
        bx
    }
}

/// `rho_omega(p) phi` on the same window.
///
/// Fails with [`Error::SupportOverflow`] when the shift would move part of
/// the support of `phi` out of the window.
pub fn rho_apply(r: &RepParams, p: &Point, phi: &Window) -> Result<Window> {
    if p.n() != phi.spec.n {
        return Err(Error::DimensionMismatch { expected: phi.spec.n, found: p.n() });
    }
    if let Some(bx) = phi.support_box() {
        let spec = &phi.spec;
        for (axis, &(lo, hi)) in bx.iter().enumerate() {
            let shift = p.x[axis] / spec.h;
            let last = (spec.count - 1) as f64;
            if lo as f64 - shift < -COMMENSURATE_TOL || hi as f64 - shift > last + COMMENSURATE_TOL {
                return Err(Error::SupportOverflow);
            }
        }
    }
    rho_apply_into(r, p, phi, &phi.spec)
}

/// `rho_omega(p) phi` sampled on `target`.
///
/// When every target node shifted by `x` lands on a node of `phi` the values
/// are moved by index; otherwise they are interpolated with the separable
/// band-limited sinc series of `phi`. `phi` is taken to vanish outside its window.
pub fn rho_apply_into(r: &RepParams, p: &Point, phi: &Window, target: &WindowSpec) -> Result<Window> {
    let n = phi.spec.n;
    if p.n() != n || target.n != n {
        return Err(Error::DimensionMismatch { expected: n, found: if p.n() != n { p.n() } else { target.n } });
    }
    let src = &phi.spec;
    // fractional source index of every target node, per axis
    let positions: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..target.count).map(|j| (target.node(j) + p.x[i] - src.origin) / src.h).collect())
        .collect();
    let commensurate = positions.iter().flatten().all(|&q| (q - q.round()).abs() <= COMMENSURATE_TOL);

    let mut values = if commensurate {
        shift_values(phi, target, &positions)
    } else {
        let mut cur = phi.values.clone();
        let mut counts = src.counts();
        for (axis, pos) in positions.iter().enumerate() {
            let matrix: Vec<Vec<Complex64>> = pos
                .iter()
                .map(|&q| (0..src.count).map(|i| Complex64::new(sinc(q - i as f64), 0.0)).collect())
                .collect();
            let (next, next_counts) = apply_axis(&cur, &counts, axis, &matrix);
            cur = next;
            counts = next_counts;
        }
        cur
    };

    let omega = r.omega;
    let x_dot_xi: f64 = p.x.iter().zip(&p.xi).map(|(a, b)| a * b).sum();
    let axis_phase: Vec<Vec<Complex64>> = (0..n)
        .map(|i| (0..target.count).map(|j| cis_neg_turns(omega * p.xi[i] * target.node(j))).collect())
        .collect();
    let base = cis_neg_turns(omega * (p.t + 0.5 * x_dot_xi));
    for (mut idx, v) in values.iter_mut().enumerate() {
        let mut ph = base;
        for axis in (0..n).rev() {
            ph *= axis_phase[axis][idx % target.count];
            idx /= target.count;
        }
        *v *= ph;
    }
    Ok(Window { spec: target.clone(), values })
}

fn shift_values(phi: &Window, target: &WindowSpec, positions: &[Vec<f64>]) -> Vec<Complex64> {
    let n = target.n;
    let src_count = phi.spec.count as i64;
    let maps: Vec<Vec<Option<usize>>> = positions
        .iter()
        .map(|pos| {
            pos.iter()
                .map(|&q| {
                    let i = q.round() as i64;
                    (0..src_count).contains(&i).then_some(i as usize)
                })
                .collect()
        })
        .collect();
    (0..target.len())
        .map(|mut idx| {
            let mut flat = 0usize;
            let mut stride = 1usize;
            for axis in (0..n).rev() {
                match maps[axis][idx % target.count] {
                    Some(i) => flat += i * stride,
                    None => return ZERO,
                }
                stride *= phi.spec.count;
                idx /= target.count;
            }
            phi.values[flat]
        })
        .collect()
}

fn x_spacing(f: &GridFunction) -> Result<f64> {
    let spec = f.spec();
    let h = spec.spacing(0);
    if (1..spec.n()).any(|a| (spec.spacing(a) - h).abs() > 1e-15 * h) {
        return Err(Error::InvalidArgument("x axes must share one spacing".into()));
    }
    Ok(h)
}

/// Banded kernel of `rho_omega(f)`:
/// `(rho_omega(f) phi)(y) = int K(y, u) phi(u) du` with `u = y + x`.
///
/// Rows run over the `y` window; within a row the entries are indexed by the
/// x-samples of `f`, so row `j` covers `u` nodes `j .. j + N_x` of `u_spec`.
#[derive(Debug, Clone)]
pub struct Kernel {
    y_spec: WindowSpec,
    u_spec: WindowSpec,
    x_count: usize,
    values: Vec<Complex64>,
}

impl Kernel {
    pub fn y_spec(&self) -> &WindowSpec {
        &self.y_spec
    }

    pub fn u_spec(&self) -> &WindowSpec {
        &self.u_spec
    }

    /// `K(y_j, u_m)`, zero outside the band.
    pub fn get(&self, y: &[usize], u: &[usize]) -> Complex64 {
        let mut flat_y = 0;
        let mut flat_x = 0;
        for (&j, &m) in y.iter().zip(u) {
            if m < j || m - j >= self.x_count {
                return ZERO;
            }
            flat_y = flat_y * self.y_spec.count + j;
            flat_x = flat_x * self.x_count + (m - j);
        }
        self.values[flat_y * self.x_count.pow(self.y_spec.n as u32) + flat_x]
    }

    /// `int K(y, u) phi(u) du` for `phi` sampled on [`Kernel::u_spec`].
    pub fn apply(&self, phi: &Window) -> Result<Window> {
        if phi.spec != self.u_spec {
            return Err(Error::InvalidArgument("phi must be sampled on the kernel's u grid".into()));
        }
        let n = self.y_spec.n;
        let band = self.x_count.pow(n as u32);
        let du = self.u_spec.h.powi(n as i32);
        let values = (0..self.y_spec.len())
            .into_par_iter()
            .map(|jy| {
                let y = unflatten(jy, self.y_spec.count, n);
                let row = &self.values[jy * band..(jy + 1) * band];
                let mut acc = ZERO;
                for (kx, kv) in row.iter().enumerate() {
                    let x = unflatten(kx, self.x_count, n);
                    let mut flat_u = 0;
                    for (a, b) in y.iter().zip(&x) {
                        flat_u = flat_u * self.u_spec.count + a + b;
                    }
                    acc += kv * phi.values[flat_u];
                }
                acc * du
            })
            .collect();
        Ok(Window { spec: self.y_spec.clone(), values })
    }

    /// `int int |K(y, u)|^2 dy du`.
    pub fn frobenius_sq(&self) -> f64 {
        let n = self.y_spec.n as i32;
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.y_spec.h.powi(n) * self.u_spec.h.powi(n)
    }

    /// HGF1 dump with axes `(y_1..y_n, x_1..x_n)`.
    pub fn write_hgf1<W: Write>(&self, w: W) -> Result<()> {
        let n = self.y_spec.n;
        let mut axes = vec![self.y_spec.count; n];
        axes.extend(vec![self.x_count; n]);
        let mut bounds = vec![(self.y_spec.origin, self.y_spec.end()); n];
        let x0 = self.u_spec.origin - self.y_spec.origin;
        bounds.extend(vec![(x0, x0 + self.x_count as f64 * self.y_spec.h); n]);
        write_hgf1(w, 2 * n, &axes, &bounds, &self.values)
    }
}

fn unflatten(mut idx: usize, count: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for axis in (0..n).rev() {
        out[axis] = idx % count;
        idx /= count;
    }
    out
}

/// Builds the kernel of `rho_omega(f)` on the `y` window `window`.
///
/// The window spacing must equal the x-spacing of `f`, and the window must
/// contain `[-1, 1]^n`.
pub fn rho_kernel(r: &RepParams, f: &GridFunction, window: &WindowSpec) -> Result<Kernel> {
    let n = f.n();
    if window.n != n {
        return Err(Error::DimensionMismatch { expected: n, found: window.n });
    }
    let h = x_spacing(f)?;
    if (window.h - h).abs() > 1e-12 * h {
        return Err(Error::InvalidArgument(format!("window spacing {} differs from the x-spacing {}", window.h, h)));
    }
    if window.origin > -1.0 + 1e-12 || window.end() < 1.0 - 1e-12 {
        return Err(Error::WindowTooSmall(format!(
            "window [{}, {}) must contain [-1, 1] on every axis",
            window.origin,
            window.end()
        )));
    }
    let spec = f.spec();
    let x_count = spec.counts()[0];
    if (1..n).any(|a| spec.counts()[a] != x_count) {
        return Err(Error::InvalidArgument("x axes must share one sample count".into()));
    }
    let xs = spec.axis_coords(0);
    let xi_coords: Vec<Vec<f64>> = (n..2 * n).map(|a| spec.axis_coords(a)).collect();
    let xi_counts: Vec<usize> = (n..2 * n).map(|a| spec.counts()[a]).collect();
    let dxi: f64 = (n..2 * n).map(|a| spec.spacing(a)).product();
    let g = partial_fourier_t(f, r.omega);
    let gv = g.values();
    let xi_len: usize = xi_counts.iter().product();
    let band = x_count.pow(n as u32);
    let omega = r.omega;

    let values: Vec<Complex64> = (0..window.len() * band)
        .into_par_iter()
        .map(|flat| {
            let (jy, kx) = (flat / band, flat % band);
            let y = unflatten(jy, window.count, n);
            let x = unflatten(kx, x_count, n);
            // per-axis phases exp(-2 pi i omega xi_i (y_i + x_i / 2))
            let tables: Vec<Vec<Complex64>> = (0..n)
                .map(|i| {
                    let s = window.node(y[i]) + 0.5 * xs[x[i]];
                    xi_coords[i].iter().map(|&v| cis_neg_turns(omega * v * s)).collect()
                })
                .collect();
            let row = &gv[kx * xi_len..(kx + 1) * xi_len];
            let mut acc = ZERO;
            for (m, gval) in row.iter().enumerate() {
                let mut ph = Complex64::new(1.0, 0.0);
                let mut rem = m;
                for axis in (0..n).rev() {
                    ph *= tables[axis][rem % xi_counts[axis]];
                    rem /= xi_counts[axis];
                }
                acc += gval * ph;
            }
            acc * dxi
        })
        .collect();

    let u_spec = WindowSpec::new(n, window.origin + xs[0], h, window.count + x_count - 1)?;
    Ok(Kernel { y_spec: window.clone(), u_spec, x_count, values })
}

/// `|omega|^{-n} int int |F_3 f(u, v, omega)|^2 du dv`.
pub fn hs_norm_sq_integral(r: &RepParams, f: &GridFunction) -> f64 {
    partial_fourier_t(f, r.omega).norm_sq() / r.omega.abs().powi(f.n() as i32)
}

/// Partial sums of the lattice series over the shells `max(|a|, |alpha|) = 0, 1, ..., K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSeries {
    /// Entry `K` holds the sum over `max(|a|_inf, |alpha|_inf) <= K`.
    pub partial_sums: Vec<f64>,
}

impl LatticeSeries {
    pub fn value(&self) -> f64 {
        *self.partial_sums.last().expect("series has at least the K = 0 term")
    }

    /// Difference of the last two partial sums.
    pub fn tail(&self) -> f64 {
        let s = &self.partial_sums;
        if s.len() < 2 {
            s[0]
        } else {
            s[s.len() - 1] - s[s.len() - 2]
        }
    }
}

/// All planar lattice points `(a, alpha)` with `max-norm <= k`, grouped by shell.
pub fn planar_shells(n: usize, k: i64) -> Vec<Vec<(Vec<i64>, Vec<i64>)>> {
    let mut shells = vec![Vec::new(); k as usize + 1];
    let side = (2 * k + 1) as usize;
    let total = side.pow(2 * n as u32);
    for mut idx in 0..total {
        let mut v = vec![0i64; 2 * n];
        for axis in (0..2 * n).rev() {
            v[axis] = (idx % side) as i64 - k;
            idx /= side;
        }
        let shell = v.iter().map(|c| c.abs()).max().unwrap_or(0) as usize;
        let alpha = v.split_off(n);
        shells[shell].push((v, alpha));
    }
    shells
}

/// `|omega|^{-n} sum_{|a|,|alpha| <= K} |f^(a, alpha, omega)|^2` with its partial sums.
pub fn hs_norm_sq_lattice_series(r: &RepParams, f: &GridFunction, k_xy: i64) -> Result<LatticeSeries> {
    if k_xy < 1 {
        return Err(Error::InvalidArgument("K_xy must be at least 1".into()));
    }
    let n = f.n();
    let shells = planar_shells(n, k_xy);
    let freqs: Vec<Frequency> = shells
        .iter()
        .flatten()
        .map(|(a, al)| Frequency {
            b: a.iter().map(|&v| v as f64).collect(),
            beta: al.iter().map(|&v| v as f64).collect(),
            omega: r.omega,
        })
        .collect();
    let values = fourier_many(f, &freqs);
    let scale = r.omega.abs().powi(n as i32);
    let mut partial_sums = Vec::with_capacity(shells.len());
    let mut acc = 0.0;
    let mut offset = 0;
    for shell in &shells {
        acc += values[offset..offset + shell.len()].iter().map(|v| v.norm_sqr()).sum::<f64>() / scale;
        offset += shell.len();
        partial_sums.push(acc);
    }
    Ok(LatticeSeries { partial_sums })
}

pub fn hs_norm_sq_lattice(r: &RepParams, f: &GridFunction, k_xy: i64) -> Result<f64> {
    Ok(hs_norm_sq_lattice_series(r, f, k_xy)?.value())
}

/// Frobenius integral of the kernel of `rho_omega(f)` on `window`.
pub fn hs_norm_sq_kernel(r: &RepParams, f: &GridFunction, window: &WindowSpec) -> Result<f64> {
    Ok(rho_kernel(r, f, window)?.frobenius_sq())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_bump, trig_poly, GridSpec};
    use crate::group::group_mul;
    use crate::frames::FrameIndex;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn p1(x: f64, xi: f64, t: f64) -> Point {
        Point::new(vec![x], vec![xi], t).unwrap()
    }

    fn gaussian_window(h: f64) -> Window {
        let spec = WindowSpec::symmetric(1, 2.0, h).unwrap();
        Window::from_fn(spec, |y| {
            let v = (-(y[0] - 0.1).powi(2) * 40.0).exp();
            c(v, 0.3 * v * y[0])
        })
    }

    #[test]
    fn character_examples() {
        let ch = CharacterParams::new(vec![1.0], vec![0.0]).unwrap();
        assert!((char_value(&ch, &p1(0.5, 0.0, 0.0)).unwrap() - c(-1.0, 0.0)).norm() < 1e-15);
        let ch = CharacterParams::new(vec![0.7], vec![-2.3]).unwrap();
        assert_eq!(char_value(&ch, &p1(0.0, 0.0, 0.9)).unwrap(), c(1.0, 0.0));
        assert!((char_value(&ch, &p1(0.31, 1.7, 0.0)).unwrap().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn character_coefficients_of_harmonics() {
        let s = GridSpec::cube(1, 16).unwrap();
        let ones = GridFunction::from_values(s.clone(), vec![c(1.0, 0.0); s.len()]).unwrap();
        let zero = CharacterParams::new(vec![0.0], vec![0.0]).unwrap();
        assert!((char_coefficient(&ones, &zero).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
        let g = c(0.4, -1.1);
        let f = trig_poly(&s, &[(FrameIndex::new(vec![2], vec![-3], 0), g)]).unwrap();
        let ch = CharacterParams::new(vec![2.0], vec![-3.0]).unwrap();
        assert!((char_coefficient(&f, &ch).unwrap() - g * 0.5).norm() < 1e-12);
    }

    #[test]
    fn zero_omega_rejected() {
        assert!(matches!(RepParams::new(0.0), Err(Error::ZeroOmega)));
    }

    #[test]
    fn rho_identity_and_center() {
        let r = RepParams::new(2.0).unwrap();
        let phi = gaussian_window(1.0 / 32.0);
        assert_eq!(rho_apply(&r, &Point::identity(1), &phi).unwrap(), phi);
        let out = rho_apply(&r, &p1(0.0, 0.0, 0.3), &phi).unwrap();
        let ph = cis_neg_turns(2.0 * 0.3);
        for (a, b) in out.values().iter().zip(phi.values()) {
            assert!((a - b * ph).norm() < 1e-15);
        }
    }

    #[test]
    fn rho_is_a_representation_on_commensurate_shifts() {
        let h = 1.0 / 32.0;
        let phi = gaussian_window(h);
        for &omega in &[2.0, -2.0, 4.0, 0.7] {
            let r = RepParams::new(omega).unwrap();
            let p = p1(5.0 * h, 0.37, 0.11);
            let q = p1(-9.0 * h, -1.21, 0.4);
            let lhs = rho_apply(&r, &p, &rho_apply(&r, &q, &phi).unwrap()).unwrap();
            let rhs = rho_apply(&r, &group_mul(&p, &q).unwrap(), &phi).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-12, "omega {omega}");
            assert!((lhs.norm_sq() - phi.norm_sq()).abs() < 1e-10 * phi.norm_sq());
        }
    }

    #[test]
    fn x_dot_y_phase_is_not_multiplicative() {
        // the x.y variant of the phase fails the homomorphism test
        let omega = 2.0;
        let (p, q) = ((0.25, 0.0, 0.0), (0.5, 0.0, 0.0));
        let y = 0.1;
        let xy = |x: f64, xi: f64, t: f64, y: f64| omega * (t + x * y + 0.5 * x * xi);
        let lhs = xy(p.0, p.1, p.2, y) + xy(q.0, q.1, q.2, y + p.0);
        let rhs = xy(p.0 + q.0, 0.0, 0.0, y);
        assert!(((lhs - rhs) - (lhs - rhs).round()).abs() > 0.1);
    }

    #[test]
    fn interpolated_shift_matches_analytic_band_limited_function() {
        let h = 1.0 / 32.0;
        let spec = WindowSpec::symmetric(1, 2.0, h).unwrap();
        let g = |y: f64| (-(y * y) * 30.0).exp();
        let phi = Window::from_fn(spec, |y| c(g(y[0]), 0.0));
        let r = RepParams::new(1.0).unwrap();
        let x = 0.3 * h + 4.0 * h;
        let out = rho_apply(&r, &p1(x, 0.0, 0.0), &phi).unwrap();
        for (j, v) in out.values().iter().enumerate() {
            let y = out.spec().node(j);
            assert!((v - c(g(y + x), 0.0)).norm() < 1e-8, "j = {j}");
        }
    }

    #[test]
    fn support_overflow() {
        let spec = WindowSpec::symmetric(1, 1.0, 0.125).unwrap();
        let phi = Window::from_fn(spec, |y| c(if y[0].abs() < 0.9 { 1.0 } else { 0.0 }, 0.0));
        let r = RepParams::new(2.0).unwrap();
        assert!(matches!(rho_apply(&r, &p1(0.5, 0.0, 0.0), &phi), Err(Error::SupportOverflow)));
        assert!(rho_apply(&r, &p1(0.0, 1.0, 0.0), &phi).is_ok());
    }

    #[test]
    fn kernel_band_and_zero() {
        let s = GridSpec::cube(1, 8).unwrap();
        let win = WindowSpec::symmetric(1, 2.0, 0.125).unwrap();
        let r = RepParams::new(2.0).unwrap();
        let k = rho_kernel(&r, &GridFunction::zeros(&s), &win).unwrap();
        assert_eq!(k.frobenius_sq(), 0.0);
        let f = make_bump(&s, &[1.0, 1.0, 1.0]).unwrap();
        let k = rho_kernel(&r, &f, &win).unwrap();
        // u - y ranges over x-midpoints only, so |u - y| < 1/2 inside the band
        let u0 = k.u_spec().origin;
        for j in 0..win.count {
            for m in 0..k.u_spec().count {
                let d = u0 + m as f64 * 0.125 - win.node(j);
                if d.abs() >= 0.5 {
                    assert_eq!(k.get(&[j], &[m]), c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn kernel_errors() {
        let s = GridSpec::cube(1, 8).unwrap();
        let f = make_bump(&s, &[1.0, 1.0, 1.0]).unwrap();
        let r = RepParams::new(2.0).unwrap();
        let small = WindowSpec::symmetric(1, 0.75, 0.125).unwrap();
        assert!(matches!(rho_kernel(&r, &f, &small), Err(Error::WindowTooSmall(_))));
        let coarse = WindowSpec::symmetric(1, 2.0, 0.25).unwrap();
        assert!(matches!(rho_kernel(&r, &f, &coarse), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn kernel_matches_integrated_representation() {
        let s = GridSpec::cube(1, 8).unwrap();
        let f = make_bump(&s, &[0.9, 0.9, 0.9]).unwrap();
        let win = WindowSpec::default_for(&f).unwrap();
        let r = RepParams::new(2.0).unwrap();
        let k = rho_kernel(&r, &f, &win).unwrap();
        let phi = Window::from_fn(k.u_spec().clone(), |u| c((-(u[0] * u[0]) * 3.0).exp(), 0.2 * u[0]));
        let via_kernel = k.apply(&phi).unwrap();
        let mut via_rho = vec![c(0.0, 0.0); win.len()];
        let mut coords = vec![0.0; 3];
        for idx in 0..s.len() {
            s.point_into(idx, &mut coords);
            let w = f.values()[idx] * s.cell_volume();
            if w == c(0.0, 0.0) {
                continue;
            }
            let p = Point::from_coords(&coords).unwrap();
            let out = rho_apply_into(&r, &p, &phi, &win).unwrap();
            for (acc, v) in via_rho.iter_mut().zip(out.values()) {
                *acc += w * v;
            }
        }
        let scale = via_kernel.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in via_kernel.values().iter().zip(&via_rho) {
            assert!((a - b).norm() <= 1e-8 * scale);
        }
    }

    #[test]
    fn hs_routes_are_quadratic_and_vanish_on_zero() {
        let s = GridSpec::cube(1, 16).unwrap();
        let r = RepParams::new(2.0).unwrap();
        let z = GridFunction::zeros(&s);
        assert_eq!(hs_norm_sq_integral(&r, &z), 0.0);
        assert_eq!(hs_norm_sq_lattice(&r, &z, 2).unwrap(), 0.0);
        let f = make_bump(&s, &[0.9, 0.9, 0.9]).unwrap();
        let a = c(0.6, -1.3);
        let fa = f.scale(a);
        let rel = (hs_norm_sq_integral(&r, &fa) - a.norm_sqr() * hs_norm_sq_integral(&r, &f)).abs()
            / hs_norm_sq_integral(&r, &fa);
        assert!(rel < 1e-13);
    }

    #[test]
    fn lattice_series_is_monotone_and_weights_cancel() {
        let s = GridSpec::cube(1, 16).unwrap();
        let f = make_bump(&s, &[0.9, 0.9, 0.9]).unwrap();
        let r = RepParams::new(4.0).unwrap();
        let series = hs_norm_sq_lattice_series(&r, &f, 4).unwrap();
        assert!(series.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        assert!(series.tail() >= 0.0);
        let direct: f64 = planar_shells(1, 4)
            .iter()
            .flatten()
            .map(|(a, al)| fourier_at(&f, &Frequency::new(vec![a[0] as f64], vec![al[0] as f64], 4.0).unwrap()).norm_sqr())
            .sum();
        assert!((4.0 * series.value() - direct).abs() < 1e-14 * direct);
    }

    #[test]
    fn planar_shell_counts() {
        let shells = planar_shells(1, 3);
        assert_eq!(shells.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![1, 8, 16, 24]);
        assert_eq!(planar_shells(2, 1).iter().map(|s| s.len()).sum::<usize>(), 81);
    }
}
