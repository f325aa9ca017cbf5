//! Sampled functions on boxes of `R^{2n+1}`, midpoint quadrature, and the
//! Euclidean Fourier transform at arbitrary real frequencies.
//!
//! Axes are ordered `(x_1..x_n, xi_1..xi_n, t)` and sample arrays are
//! row-major with `t` fastest. Samples sit at cell midpoints. All integrals
//! here are Lebesgue.

use crate::error::{Error, Result};
use crate::frames::FrameIndex;
use crate::group::reproducing_set_box;
use crate::special::{cis_neg_turns, sinc};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// A frequency `(b, beta, omega)` at which transforms are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub b: Vec<f64>,
    pub beta: Vec<f64>,
    pub omega: f64,
}

impl Frequency {
    pub fn new(b: Vec<f64>, beta: Vec<f64>, omega: f64) -> Result<Self> {
        if b.len() != beta.len() {
            return Err(Error::DimensionMismatch { expected: b.len(), found: beta.len() });
        }
        if !(b.iter().chain(&beta).all(|v| v.is_finite()) && omega.is_finite()) {
            return Err(Error::InvalidArgument("frequency components must be finite".into()));
        }
        Ok(Frequency { b, beta, omega })
    }

    pub fn zero(n: usize) -> Self {
        Frequency { b: vec![0.0; n], beta: vec![0.0; n], omega: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// Component along flat axis `axis` of `(x.., xi.., t)`.
    pub fn component(&self, axis: usize) -> f64 {
        let n = self.n();
        if axis < n {
            self.b[axis]
        } else if axis < 2 * n {
            self.beta[axis - n]
        } else {
            self.omega
        }
    }

    pub fn components(&self) -> Vec<f64> {
        (0..2 * self.n() + 1).map(|a| self.component(a)).collect()
    }

    pub fn from_components(c: &[f64]) -> Self {
        let n = (c.len() - 1) / 2;
        Frequency { b: c[..n].to_vec(), beta: c[n..2 * n].to_vec(), omega: c[2 * n] }
    }

    pub fn sub(&self, other: &Frequency) -> Frequency {
        Frequency {
            b: self.b.iter().zip(&other.b).map(|(u, v)| u - v).collect(),
            beta: self.beta.iter().zip(&other.beta).map(|(u, v)| u - v).collect(),
            omega: self.omega - other.omega,
        }
    }
}

/// `int_E exp(-2 pi i d.p) dp` over the reproducing set, in closed form.
pub fn integral_over_e(d: &Frequency) -> f64 {
    let planar: f64 = d.b.iter().chain(&d.beta).map(|&v| sinc(v)).product();
    planar * 0.5 * sinc(0.5 * d.omega)
}

/// Uniform midpoint grid on an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    counts: Vec<usize>,
    bounds: Vec<(f64, f64)>,
}

impl GridSpec {
    /// Grid on the closure of `E` with the given per-axis counts.
    pub fn new(n: usize, counts: Vec<usize>) -> Result<Self> {
        Self::with_box(n, counts, reproducing_set_box(n))
    }

    /// Grid on `E` with `per_axis` samples on every axis.
    pub fn cube(n: usize, per_axis: usize) -> Result<Self> {
        Self::new(n, vec![per_axis; 2 * n + 1])
    }

    pub fn with_box(n: usize, counts: Vec<usize>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if counts.len() != 2 * n + 1 || bounds.len() != 2 * n + 1 {
            return Err(Error::InvalidArgument(format!("grid needs {} axes", 2 * n + 1)));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument("every axis needs at least one sample".into()));
        }
        if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi > lo)) {
            return Err(Error::InvalidArgument("box bounds must be finite with lo < hi".into()));
        }
        Ok(GridSpec { n, counts, bounds })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> usize {
        2 * self.n + 1
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        (hi - lo) / self.counts[axis] as f64
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        self.bounds[axis].0 + (k as f64 + 0.5) * self.spacing(axis)
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.counts[axis]).map(|k| self.coord(axis, k)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dims()).map(|a| self.spacing(a)).product()
    }

    /// Writes the coordinates of flat sample `idx` into `out`.
    pub fn point_into(&self, mut idx: usize, out: &mut [f64]) {
        for axis in (0..self.dims()).rev() {
            let c = self.counts[axis];
            out[axis] = self.coord(axis, idx % c);
            idx /= c;
        }
    }
}

/// A function that can be evaluated pointwise on `R^{2n+1}`.
pub trait PointFunction: Sync {
    fn n(&self) -> usize;
    /// Value at flat coordinates `(x.., xi.., t)`.
    fn eval(&self, coords: &[f64]) -> Complex64;
    /// A closed box containing the support.
    fn support(&self) -> Vec<(f64, f64)>;
}

/// Anything whose Fourier transform over `R^{2n+1}` can be evaluated.
pub trait Spectrum: Sync {
    fn n(&self) -> usize;
    fn transform_many(&self, freqs: &[Frequency]) -> Vec<Complex64>;
}

/// Separable smooth bump `amp * prod_i exp(-1 - c r_i^2/(1-r_i^2))` with
/// `r_i = (p_i - center_i) / (w_i half_extent_i)`.
///
/// The default sharpness `c = 1` is the classical `exp(-1/(1-r^2))`.
/// Larger `c` concentrates the bump and speeds up the decay of its spectrum.
#[derive(Debug, Clone)]
pub struct Bump {
    center: Vec<f64>,
    half_extent: Vec<f64>,
    widths: Vec<f64>,
    sharpness: f64,
    amplitude: Complex64,
}

impl Bump {
    pub fn new(center: Vec<f64>, half_extent: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        let d = center.len();
        if d < 3 || d.is_multiple_of(2) || half_extent.len() != d || widths.len() != d {
            return Err(Error::InvalidArgument("bump needs 2n+1 centers, extents and widths".into()));
        }
        if widths.iter().chain(&half_extent).any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("bump widths and extents must be positive".into()));
        }
        Ok(Bump { center, half_extent, widths, sharpness: 1.0, amplitude: Complex64::new(1.0, 0.0) })
    }

    /// Bump centered in `E`, normalized so `s_i` spans `(-1, 1)` across `E`.
    pub fn centered(n: usize, widths: &[f64]) -> Result<Self> {
        if widths.len() != 2 * n + 1 {
            return Err(Error::InvalidArgument(format!("expected {} widths", 2 * n + 1)));
        }
        if widths.iter().any(|&w| !(w > 0.0 && w <= 1.0)) {
            return Err(Error::InvalidArgument("bump widths must lie in (0, 1]".into()));
        }
        let half_extent = reproducing_set_box(n).iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect();
        Bump::new(vec![0.0; 2 * n + 1], half_extent, widths.to_vec())
    }

    pub fn with_sharpness(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument("bump sharpness must be positive".into()));
        }
        self.sharpness = c;
        Ok(self)
    }

    pub fn scaled(mut self, amplitude: Complex64) -> Self {
        self.amplitude *= amplitude;
        self
    }

    /// One separable factor evaluated at a coordinate along `axis`.
    pub fn factor(&self, axis: usize, v: f64) -> f64 {
        let s = (v - self.center[axis]) / self.half_extent[axis];
        let r = s / self.widths[axis];
        if r.abs() >= 1.0 {
            0.0
        } else {
            let r2 = r * r;
            (-1.0 - self.sharpness * r2 / (1.0 - r2)).exp()
        }
    }
}

impl PointFunction for Bump {
    fn n(&self) -> usize {
        (self.center.len() - 1) / 2
    }

    fn eval(&self, coords: &[f64]) -> Complex64 {
        let mut v = 1.0;
        for (axis, &c) in coords.iter().enumerate() {
            v *= self.factor(axis, c);
            if v == 0.0 {
                return ZERO;
            }
        }
        self.amplitude * v
    }

    fn support(&self) -> Vec<(f64, f64)> {
        (0..self.center.len())
            .map(|a| {
                let r = self.widths[a] * self.half_extent[a];
                (self.center[a] - r, self.center[a] + r)
            })
            .collect()
    }
}

/// Finite exponential sum `sum_j g_j exp(2 pi i nu_j . p)` restricted to `E`.
#[derive(Debug, Clone)]
pub struct ExpSum {
    n: usize,
    terms: Vec<(Frequency, Complex64)>,
}

impl ExpSum {
    pub fn new(n: usize, terms: Vec<(Frequency, Complex64)>) -> Result<Self> {
        if let Some((f, _)) = terms.iter().find(|(f, _)| f.n() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: f.n() });
        }
        Ok(ExpSum { n, terms })
    }

    pub fn terms(&self) -> &[(Frequency, Complex64)] {
        &self.terms
    }

    /// Samples the sum on a grid using separable per-axis phase tables.
    pub fn sample(&self, spec: &GridSpec) -> GridFunction {
        let dims = spec.dims();
        let coords: Vec<Vec<f64>> = (0..dims).map(|a| spec.axis_coords(a)).collect();
        let mut values = vec![ZERO; spec.len()];
        for (freq, g) in &self.terms {
            let tables: Vec<Vec<Complex64>> = (0..dims)
                .map(|a| {
                    let f = freq.component(a);
                    coords[a].iter().map(|&s| cis_neg_turns(-f * s)).collect()
                })
                .collect();
            accumulate_outer(&mut values, spec.counts(), &tables, *g);
        }
        GridFunction { spec: spec.clone(), values }
    }
}

/// `values += g * outer(tables[0], tables[1], ...)` in row-major order.
fn accumulate_outer(values: &mut [Complex64], counts: &[usize], tables: &[Vec<Complex64>], g: Complex64) {
    let last = counts.len() - 1;
    let inner = counts[last];
    let outer: usize = counts[..last].iter().product();
    let mut idx = vec![0usize; last];
    for o in 0..outer {
        let mut prefix = g;
        for (a, &i) in idx.iter().enumerate() {
            prefix *= tables[a][i];
        }
        let row = &mut values[o * inner..(o + 1) * inner];
        for (v, t) in row.iter_mut().zip(&tables[last]) {
            *v += prefix * t;
        }
        for a in (0..last).rev() {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

impl PointFunction for ExpSum {
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, coords: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(f, g)| {
                let phase: f64 = f.components().iter().zip(coords).map(|(a, b)| a * b).sum();
                g * cis_neg_turns(-phase)
            })
            .sum()
    }

    fn support(&self) -> Vec<(f64, f64)> {
        reproducing_set_box(self.n)
    }
}

impl Spectrum for ExpSum {
    fn n(&self) -> usize {
        self.n
    }

    /// Closed form: `sum_j g_j int_E exp(-2 pi i (nu - nu_j).p) dp`.
    fn transform_many(&self, freqs: &[Frequency]) -> Vec<Complex64> {
        freqs
            .par_iter()
            .map(|nu| self.terms.iter().map(|(f, g)| g * integral_over_e(&nu.sub(f))).sum())
            .collect()
    }
}

/// Complex samples of a function on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn from_values(spec: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidArgument(format!(
                "grid has {} samples but {} values were given",
                spec.len(),
                values.len()
            )));
        }
        Ok(GridFunction { spec, values })
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        GridFunction { spec: spec.clone(), values: vec![ZERO; spec.len()] }
    }

    pub fn sample<F: PointFunction + ?Sized>(spec: &GridSpec, f: &F) -> Self {
        let dims = spec.dims();
        let values = (0..spec.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; dims],
                |coords, idx| {
                    spec.point_into(idx, coords);
                    f.eval(coords)
                },
            )
            .collect();
        GridFunction { spec: spec.clone(), values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.spec.cell_volume()
    }

    pub fn scale(&self, a: Complex64) -> Self {
        GridFunction { spec: self.spec.clone(), values: self.values.iter().map(|v| v * a).collect() }
    }

    /// `self + a * other` on a common grid.
    pub fn axpy(&self, a: Complex64, other: &GridFunction) -> Result<Self> {
        if self.spec != other.spec {
            return Err(Error::InvalidArgument("grid specs differ".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(u, v)| u + a * v).collect();
        Ok(GridFunction { spec: self.spec.clone(), values })
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.im.abs() <= tol)
    }

    /// Writes the HGF1 representation.
    pub fn write_hgf1<W: Write>(&self, w: W) -> Result<()> {
        write_hgf1(w, self.spec.n, self.spec.counts(), self.spec.bounds(), &self.values)
    }

    pub fn read_hgf1<R: Read>(r: R) -> Result<Self> {
        let (n, axes, bounds, values) = read_hgf1(r)?;
        let spec = GridSpec::with_box(n, axes, bounds)?;
        GridFunction::from_values(spec, values)
    }
}

impl Spectrum for GridFunction {
    fn n(&self) -> usize {
        self.spec.n
    }

    fn transform_many(&self, freqs: &[Frequency]) -> Vec<Complex64> {
        fourier_many(self, freqs)
    }
}

/// Midpoint phase vector `h * exp(-2 pi i f s_k)` along one axis.
fn phase_vector(spec_lo: f64, h: f64, count: usize, f: f64) -> Vec<Complex64> {
    (0..count)
        .map(|k| {
            let s = spec_lo + (k as f64 + 0.5) * h;
            cis_neg_turns(f * s) * h
        })
        .collect()
}

/// Contracts the last axis of a row-major tensor with one phase vector.
fn contract_last(values: &[Complex64], phases: &[Complex64]) -> Vec<Complex64> {
    let inner = phases.len();
    values
        .chunks_exact(inner)
        .map(|row| {
            let mut acc = ZERO;
            for (v, p) in row.iter().zip(phases) {
                acc += v * p;
            }
            acc
        })
        .collect()
}

/// Applies `matrix` (rows of length `counts[axis]`) along `axis`.
///
/// Each output entry accumulates its terms in ascending input index, so a
/// one-row matrix reproduces [`contract_last`] bit for bit on the last axis.
pub(crate) fn apply_axis(
    values: &[Complex64],
    counts: &[usize],
    axis: usize,
    matrix: &[Vec<Complex64>],
) -> (Vec<Complex64>, Vec<usize>) {
    let len = counts[axis];
    let outer: usize = counts[..axis].iter().product();
    let inner: usize = counts[axis + 1..].iter().product();
    let m = matrix.len();
    let mut out = vec![ZERO; outer * m * inner];
    for o in 0..outer {
        for (r, row) in matrix.iter().enumerate() {
            let dst = &mut out[(o * m + r) * inner..(o * m + r + 1) * inner];
            for (k, coef) in row.iter().enumerate().take(len) {
                let src = &values[(o * len + k) * inner..(o * len + k + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s * coef;
                }
            }
        }
    }
    let mut new_counts = counts.to_vec();
    new_counts[axis] = m;
    (out, new_counts)
}

/// Midpoint approximation of `int f(p) exp(-2 pi i freq.p) dp` (Lebesgue).
pub fn fourier_at(f: &GridFunction, freq: &Frequency) -> Complex64 {
    let spec = &f.spec;
    let mut cur: Vec<Complex64> = f.values.clone();
    for axis in (0..spec.dims()).rev() {
        let ph = phase_vector(spec.bounds[axis].0, spec.spacing(axis), spec.counts[axis], freq.component(axis));
        cur = contract_last(&cur, &ph);
    }
    cur[0]
}

/// Batched [`fourier_at`]; shares partial contractions between frequencies
/// with equal trailing components, with results identical to independent calls.
pub fn fourier_many(f: &GridFunction, freqs: &[Frequency]) -> Vec<Complex64> {
    if freqs.is_empty() {
        return Vec::new();
    }
    let spec = &f.spec;
    let last = spec.dims() - 1;
    let groups = group_by_component(freqs, (0..freqs.len()).collect(), last);
    let partials: Vec<Vec<(usize, Complex64)>> = groups
        .into_par_iter()
        .map(|(value, members)| {
            let ph = phase_vector(spec.bounds[last].0, spec.spacing(last), spec.counts[last], value);
            let reduced = contract_last(&f.values, &ph);
            let mut out = Vec::with_capacity(members.len());
            contract_groups(spec, &reduced, freqs, members, last, &mut out);
            out
        })
        .collect();
    let mut result = vec![ZERO; freqs.len()];
    for (i, v) in partials.into_iter().flatten() {
        result[i] = v;
    }
    result
}

fn group_by_component(freqs: &[Frequency], members: Vec<usize>, axis: usize) -> Vec<(f64, Vec<usize>)> {
    let mut map: BTreeMap<u64, (f64, Vec<usize>)> = BTreeMap::new();
    for i in members {
        let v = freqs[i].component(axis);
        map.entry(v.to_bits()).or_insert_with(|| (v, Vec::new())).1.push(i);
    }
    map.into_values().collect()
}

fn contract_groups(
    spec: &GridSpec,
    values: &[Complex64],
    freqs: &[Frequency],
    members: Vec<usize>,
    contracted: usize,
    out: &mut Vec<(usize, Complex64)>,
) {
    if contracted == 0 {
        for i in members {
            out.push((i, values[0]));
        }
        return;
    }
    let axis = contracted - 1;
    for (value, group) in group_by_component(freqs, members, axis) {
        let ph = phase_vector(spec.bounds[axis].0, spec.spacing(axis), spec.counts[axis], value);
        let reduced = contract_last(values, &ph);
        contract_groups(spec, &reduced, freqs, group, axis, out);
    }
}

/// Complex samples on the `(x, xi)` box `D`, e.g. a partial transform in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneGrid {
    n: usize,
    counts: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    values: Vec<Complex64>,
}

impl PlaneGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        (hi - lo) / self.counts[axis] as f64
    }

    pub fn cell_area(&self) -> f64 {
        (0..2 * self.n).map(|a| self.spacing(a)).product()
    }

    /// `int int |g|^2 dx dxi` by midpoint quadrature.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_area()
    }

    /// 2n-dimensional midpoint transform at `(b, beta)`.
    pub fn fourier_at(&self, b: &[f64], beta: &[f64]) -> Complex64 {
        let mut cur = self.values.clone();
        for axis in (0..2 * self.n).rev() {
            let f = if axis < self.n { b[axis] } else { beta[axis - self.n] };
            let ph = phase_vector(self.bounds[axis].0, self.spacing(axis), self.counts[axis], f);
            cur = contract_last(&cur, &ph);
        }
        cur[0]
    }
}

/// `g(x, xi) = sum_t f(x, xi, t) exp(-2 pi i omega t) h_t`.
pub fn partial_fourier_t(f: &GridFunction, omega: f64) -> PlaneGrid {
    let spec = &f.spec;
    let last = spec.dims() - 1;
    let ph = phase_vector(spec.bounds[last].0, spec.spacing(last), spec.counts[last], omega);
    PlaneGrid {
        n: spec.n,
        counts: spec.counts[..last].to_vec(),
        bounds: spec.bounds[..last].to_vec(),
        values: contract_last(&f.values, &ph),
    }
}

/// `int |f|^2` by midpoint quadrature (Lebesgue).
pub fn norm_sq(f: &GridFunction) -> f64 {
    f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * f.spec.cell_volume()
}

/// Cyclic shift by `shifts` samples along `t`: sample `j` takes the old sample `j - shifts`.
pub fn translate_t(f: &GridFunction, shifts: i64) -> GridFunction {
    let nt = *f.spec.counts.last().expect("grid has a t axis");
    let s = shifts.rem_euclid(nt as i64) as usize;
    let mut values = vec![ZERO; f.values.len()];
    for (src, dst) in f.values.chunks_exact(nt).zip(values.chunks_exact_mut(nt)) {
        for j in 0..nt {
            dst[(j + s) % nt] = src[j];
        }
    }
    GridFunction { spec: f.spec.clone(), values }
}

/// Separable bump sampled on `spec`; see [`Bump::centered`].
pub fn make_bump(spec: &GridSpec, widths: &[f64]) -> Result<GridFunction> {
    let bump = Bump::centered(spec.n, widths)?;
    Ok(GridFunction::sample(spec, &bump))
}

/// Samples `sum_z g_z exp(2 pi i z.p)` for lattice points `z = (a, alpha, 2k)`.
pub fn trig_poly(spec: &GridSpec, coeffs: &[(FrameIndex, Complex64)]) -> Result<GridFunction> {
    let terms = coeffs
        .iter()
        .map(|(z, g)| Ok((z.lattice_point(spec.n)?, *g)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpSum::new(spec.n, terms)?.sample(spec))
}

#[derive(Serialize, Deserialize)]
struct HgfHeader {
    magic: String,
    n: usize,
    axes: Vec<usize>,
    #[serde(rename = "box")]
    bounds: Vec<(f64, f64)>,
    dtype: String,
}

/// Writes an HGF1 stream: a one-line JSON header, then little-endian `(re, im)` pairs.
pub fn write_hgf1<W: Write>(
    mut w: W,
    n: usize,
    axes: &[usize],
    bounds: &[(f64, f64)],
    values: &[Complex64],
) -> Result<()> {
    let header = HgfHeader {
        magic: "HGF1".into(),
        n,
        axes: axes.to_vec(),
        bounds: bounds.to_vec(),
        dtype: "c128le".into(),
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(values.len() * 16);
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads an HGF1 stream, rejecting a wrong magic or a payload length mismatch.
#[allow(clippy::type_complexity)]
pub fn read_hgf1<R: Read>(mut r: R) -> Result<(usize, Vec<usize>, Vec<(f64, f64)>, Vec<Complex64>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header: HgfHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.magic != "HGF1" {
        return Err(Error::Format(format!("wrong magic {:?}", header.magic)));
    }
    if header.dtype != "c128le" {
        return Err(Error::Format(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.axes.len() != header.bounds.len() {
        return Err(Error::Format("axes and box lengths differ".into()));
    }
    let count: usize = header.axes.iter().product();
    let payload = &bytes[nl + 1..];
    if payload.len() != count * 16 {
        return Err(Error::Format(format!("expected {} payload bytes, found {}", count * 16, payload.len())));
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok((header.n, header.axes, header.bounds, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ones(spec: &GridSpec) -> GridFunction {
        GridFunction::from_values(spec.clone(), vec![c(1.0, 0.0); spec.len()]).unwrap()
    }

    fn freq1(b: f64, beta: f64, omega: f64) -> Frequency {
        Frequency::new(vec![b], vec![beta], omega).unwrap()
    }

    #[test]
    fn spec_geometry() {
        let s = GridSpec::cube(1, 8).unwrap();
        assert_eq!(s.len(), 512);
        assert_eq!(s.spacing(0), 1.0 / 8.0);
        assert_eq!(s.spacing(2), 0.5 / 8.0);
        assert_eq!(s.coord(0, 0), -0.5 + 1.0 / 16.0);
        assert!(GridSpec::new(1, vec![4, 4]).is_err());
        assert!(GridSpec::new(1, vec![4, 0, 4]).is_err());
    }

    #[test]
    fn bump_center_and_boundary() {
        let s = GridSpec::cube(1, 9).unwrap();
        let f = make_bump(&s, &[1.0, 1.0, 1.0]).unwrap();
        // 9 samples per axis put the middle sample at the center
        let mid = (4 * 9 + 4) * 9 + 4;
        assert!((f.values()[mid].re - (-3.0f64).exp()).abs() < 1e-15);
        let g = make_bump(&GridSpec::cube(1, 16).unwrap(), &[0.5, 0.5, 0.5]).unwrap();
        let spec = g.spec().clone();
        let mut p = vec![0.0; 3];
        for (i, v) in g.values().iter().enumerate() {
            spec.point_into(i, &mut p);
            let on_edge = (0..3).any(|a| {
                let k = {
                    let mut idx = i;
                    for _ in a + 1..3 {
                        idx /= 16;
                    }
                    idx % 16
                };
                k == 0 || k == 15
            });
            if on_edge {
                assert_eq!(*v, c(0.0, 0.0));
            }
        }
        assert!(make_bump(&s, &[0.0, 1.0, 1.0]).is_err());
        assert!(make_bump(&s, &[1.5, 1.0, 1.0]).is_err());
    }

    #[test]
    fn constant_function_transforms() {
        let s = GridSpec::cube(1, 16).unwrap();
        let f = ones(&s);
        assert!((fourier_at(&f, &Frequency::zero(1)) - c(0.5, 0.0)).norm() < 1e-15);
        assert!(fourier_at(&f, &freq1(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((norm_sq(&f) - 0.5).abs() < 1e-15);
        assert_eq!(norm_sq(&GridFunction::zeros(&s)), 0.0);
    }

    #[test]
    fn trig_poly_orthogonality() {
        let s = GridSpec::cube(1, 16).unwrap();
        let coeffs = vec![
            (FrameIndex::new(vec![1], vec![-2], 1), c(0.5, -1.0)),
            (FrameIndex::new(vec![0], vec![0], 0), c(2.0, 0.0)),
            (FrameIndex::new(vec![-3], vec![2], -2), c(0.0, 0.75)),
        ];
        let f = trig_poly(&s, &coeffs).unwrap();
        let expect: f64 = 0.5 * coeffs.iter().map(|(_, g)| g.norm_sqr()).sum::<f64>();
        assert!((norm_sq(&f) - expect).abs() < 1e-12);
        for (z, g) in &coeffs {
            let fz = z.lattice_point(1).unwrap();
            assert!((fourier_at(&f, &fz) - g * 0.5).norm() < 1e-12);
        }
        let one = trig_poly(&s, &[(FrameIndex::new(vec![0], vec![0], 0), c(1.0, 0.0))]).unwrap();
        assert!(one.values().iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn conjugate_symmetric_coefficients_give_real_samples() {
        let s = GridSpec::cube(1, 12).unwrap();
        let g = c(0.3, 0.8);
        let coeffs = vec![
            (FrameIndex::new(vec![2], vec![1], 1), g),
            (FrameIndex::new(vec![-2], vec![-1], -1), g.conj()),
        ];
        assert!(trig_poly(&s, &coeffs).unwrap().is_real(1e-14));
    }

    #[test]
    fn fourier_many_matches_single_calls_bitwise() {
        let s = GridSpec::cube(1, 12).unwrap();
        let f = make_bump(&s, &[0.9, 0.8, 0.7]).unwrap();
        assert!(fourier_many(&f, &[]).is_empty());
        let mut freqs = Vec::new();
        for a in -2..=2 {
            for al in -2..=2 {
                for k in -2..=2 {
                    freqs.push(freq1(a as f64 + 0.1, al as f64, 2.0 * k as f64 - 0.05));
                }
            }
        }
        let many = fourier_many(&f, &freqs);
        for (fr, v) in freqs.iter().zip(&many) {
            assert_eq!(fourier_at(&f, fr), *v);
        }
        assert_eq!(fourier_many(&f, &freqs[3..4]), vec![fourier_at(&f, &freqs[3])]);
    }

    #[test]
    fn partial_transform_then_plane_transform() {
        let s = GridSpec::cube(1, 16).unwrap();
        let f = make_bump(&s, &[0.9, 0.9, 0.9]).unwrap();
        let g = partial_fourier_t(&f, 2.0);
        let via = g.fourier_at(&[1.0], &[-1.0]);
        let direct = fourier_at(&f, &freq1(1.0, -1.0, 2.0));
        assert!((via - direct).norm() < 1e-13);
    }

    #[test]
    fn partial_transform_of_t_independent_function() {
        let s = GridSpec::cube(1, 8).unwrap();
        let base = trig_poly(&s, &[(FrameIndex::new(vec![1], vec![0], 0), c(1.0, 0.0))]).unwrap();
        let g = partial_fourier_t(&base, 0.0);
        for (i, v) in g.values().iter().enumerate() {
            assert!((v - base.values()[i * 8] * 0.5).norm() < 1e-15);
        }
    }

    #[test]
    fn translate_cycles() {
        let s = GridSpec::cube(1, 8).unwrap();
        let f = make_bump(&s, &[0.9, 0.9, 0.9]).unwrap();
        assert_eq!(translate_t(&f, 0), f);
        assert_eq!(translate_t(&f, 8), f);
        assert_eq!(translate_t(&translate_t(&f, 3), -3), f);
    }

    #[test]
    fn translate_modulates_commensurate_frequencies() {
        let s = GridSpec::cube(1, 16).unwrap();
        let f = make_bump(&s, &[0.9, 0.9, 0.9]).unwrap();
        let shifts = 5;
        let tau = shifts as f64 * s.spacing(2);
        let g = translate_t(&f, shifts);
        for k in -3..=3 {
            let w = 2.0 * k as f64;
            let fr = freq1(0.5, -1.0, w);
            let expect = fourier_at(&f, &fr) * Complex64::from_polar(1.0, -2.0 * PI * w * tau);
            assert!((fourier_at(&g, &fr) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn exp_sum_closed_form_matches_quadrature_for_lattice_terms() {
        let s = GridSpec::cube(1, 16).unwrap();
        let e = ExpSum::new(1, vec![(freq1(1.0, 2.0, -2.0), c(1.0, 0.5)), (freq1(0.0, -1.0, 4.0), c(-0.3, 0.0))]).unwrap();
        let g = e.sample(&s);
        let freqs = vec![freq1(1.0, 2.0, -2.0), freq1(0.0, -1.0, 4.0), freq1(3.0, 0.0, 0.0)];
        let closed = e.transform_many(&freqs);
        let quad = g.transform_many(&freqs);
        for (a, b) in closed.iter().zip(&quad) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn hgf1_round_trip_and_rejections() {
        let s = GridSpec::cube(1, 4).unwrap();
        let f = make_bump(&s, &[1.0, 1.0, 1.0]).unwrap().scale(c(1.0, -2.0));
        let mut buf = Vec::new();
        f.write_hgf1(&mut buf).unwrap();
        let first_line = buf.split(|&b| b == b'\n').next().unwrap();
        let header: serde_json::Value = serde_json::from_slice(first_line).unwrap();
        assert_eq!(header["magic"], "HGF1");
        assert_eq!(header["dtype"], "c128le");
        assert_eq!(GridFunction::read_hgf1(&buf[..]).unwrap(), f);

        let mut bad = buf.clone();
        bad[10] = b'X';
        assert!(GridFunction::read_hgf1(&bad[..]).is_err());
        let truncated = &buf[..buf.len() - 8];
        assert!(matches!(GridFunction::read_hgf1(truncated), Err(Error::Format(_))));
        let wrong = String::from_utf8(buf.clone()).unwrap_or_default();
        let _ = wrong;
        let mut magic = buf.clone();
        let pos = magic.windows(4).position(|w| w == b"HGF1").unwrap();
        magic[pos + 3] = b'2';
        assert!(matches!(GridFunction::read_hgf1(&magic[..]), Err(Error::Format(m)) if m.contains("magic")));
    }
}
