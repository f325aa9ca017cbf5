//! Frame index sets, perturbation schemes, the quadratic forms of the frame
//! inequality, Gram matrices, frame bounds, and reconstruction.
//!
//! Bounds are computed on the truncated span (finite sections) and are exact
//! there; for the full `L^2(E)` they are estimates.

use crate::error::{Error, Result};
use crate::grid::{integral_over_e, ExpSum, Frequency, GridFunction, GridSpec, Spectrum};
use crate::group::HAAR_SCALE;
use crate::numfmt::format_g17;
use crate::representations::{hs_norm_sq_lattice, RepParams};
use crate::spectral::{cholesky_solve, extreme_eigenvalues, power_extremes, SymMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// Largest index count for which dense Gram matrices are assembled.
pub const MAX_DENSE_INDICES: usize = 5000;

const POWER_ITERATIONS: usize = 300;

/// Index `z = (a, alpha, k)` embedded as the lattice point `(a, alpha, 2k)`.
///
/// The derived ordering is lexicographic over `(a, alpha, k)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameIndex {
    pub a: Vec<i64>,
    pub alpha: Vec<i64>,
    pub k: i64,
}

impl FrameIndex {
    pub fn new(a: Vec<i64>, alpha: Vec<i64>, k: i64) -> Self {
        FrameIndex { a, alpha, k }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn lattice_point(&self, n: usize) -> Result<Frequency> {
        if self.a.len() != n || self.alpha.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.a.len().max(self.alpha.len()) });
        }
        Ok(Frequency {
            b: self.a.iter().map(|&v| v as f64).collect(),
            beta: self.alpha.iter().map(|&v| v as f64).collect(),
            omega: 2.0 * self.k as f64,
        })
    }
}

/// `|a|_inf, |alpha|_inf <= K_xy` and `|k| <= K_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub n: usize,
    #[serde(rename = "K_xy")]
    pub k_xy: i64,
    #[serde(rename = "K_t")]
    pub k_t: i64,
}

impl Truncation {
    pub fn new(n: usize, k_xy: i64, k_t: i64) -> Result<Self> {
        if n == 0 || k_xy < 1 || k_t < 1 {
            return Err(Error::InvalidArgument("truncation needs n >= 1, K_xy >= 1 and K_t >= 1".into()));
        }
        Ok(Truncation { n, k_xy, k_t })
    }

    pub fn count(&self) -> usize {
        let side = (2 * self.k_xy + 1) as usize;
        side.pow(2 * self.n as u32) * (2 * self.k_t + 1) as usize
    }

    pub fn contains(&self, z: &FrameIndex) -> bool {
        z.a.len() == self.n
            && z.alpha.len() == self.n
            && z.a.iter().chain(&z.alpha).all(|c| c.abs() <= self.k_xy)
            && z.k.abs() <= self.k_t
    }

    /// All `a` in `[-K_xy, K_xy]^n`, lexicographic.
    pub fn planar_indices(&self) -> Vec<Vec<i64>> {
        let side = (2 * self.k_xy + 1) as usize;
        (0..side.pow(self.n as u32))
            .map(|mut idx| {
                let mut v = vec![0; self.n];
                for axis in (0..self.n).rev() {
                    v[axis] = (idx % side) as i64 - self.k_xy;
                    idx /= side;
                }
                v
            })
            .collect()
    }

    /// Every index in lexicographic order.
    pub fn indices(&self) -> Vec<FrameIndex> {
        let planar = self.planar_indices();
        let mut out = Vec::with_capacity(self.count());
        for a in &planar {
            for alpha in &planar {
                for k in -self.k_t..=self.k_t {
                    out.push(FrameIndex::new(a.clone(), alpha.clone(), k));
                }
            }
        }
        out
    }
}

/// How deviations from the harmonic nodes are laid out.
///
/// Vector deviations are added to every component of `b_a` (or `beta_alpha`).
/// `alternating` uses the sign `(-1)^(sum of the index)`; `odd_sites` applies
/// the deviation only where that sum is odd. `random` draws a deviation in
/// `[-1, 1]` per component and site from ChaCha8 (stream derived from the
/// site), then rescales so the largest one over the truncation has size `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeRule {
    #[default]
    Harmonic,
    Uniform {
        #[serde(default)]
        b: f64,
        #[serde(default)]
        beta: f64,
        #[serde(default)]
        omega: f64,
    },
    Alternating {
        #[serde(default)]
        b: f64,
        #[serde(default)]
        beta: f64,
        #[serde(default)]
        omega: f64,
    },
    OddSites {
        #[serde(default)]
        b: f64,
        #[serde(default)]
        beta: f64,
        #[serde(default)]
        omega: f64,
    },
    Random {
        m: f64,
        #[serde(default)]
        seed: u64,
    },
}

/// Explicit node values applied after the rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Override {
    B { a: Vec<i64>, value: Vec<f64> },
    Beta { alpha: Vec<i64>, value: Vec<f64> },
    Omega { k: i64, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SchemeSpec {
    #[serde(default)]
    pub rule: SchemeRule,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

impl SchemeSpec {
    pub fn harmonic() -> Self {
        SchemeSpec::default()
    }

    pub fn with_rule(rule: SchemeRule) -> Self {
        SchemeSpec { rule, overrides: Vec::new() }
    }
}

/// Truncated node maps `a -> b_a`, `alpha -> beta_alpha`, `k -> omega_k` (`k != 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationScheme {
    truncation: Truncation,
    b: BTreeMap<Vec<i64>, Vec<f64>>,
    beta: BTreeMap<Vec<i64>, Vec<f64>>,
    omega: BTreeMap<i64, f64>,
    m: f64,
}

fn index_sum_parity(v: &[i64]) -> i64 {
    v.iter().sum::<i64>().rem_euclid(2)
}

fn site_stream(kind: u64, index: &[i64]) -> u64 {
    index
        .iter()
        .fold(kind.wrapping_add(0xcbf2_9ce4_8422_2325), |acc, &c| (acc ^ c as u64).wrapping_mul(0x0100_0000_01b3))
}

fn site_draws(seed: u64, kind: u64, index: &[i64], count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(site_stream(kind, index));
    (0..count).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

impl PerturbationScheme {
    pub fn harmonic(truncation: Truncation) -> Self {
        Self::from_spec(truncation, &SchemeSpec::harmonic()).expect("the harmonic scheme is valid")
    }

    pub fn from_spec(truncation: Truncation, spec: &SchemeSpec) -> Result<Self> {
        let n = truncation.n;
        let planar = truncation.planar_indices();
        let ks: Vec<i64> = (-truncation.k_t..=truncation.k_t).filter(|&k| k != 0).collect();
        let as_f = |v: &[i64]| v.iter().map(|&c| c as f64).collect::<Vec<f64>>();

        let vector_dev = |v: &[i64], kind: u64| -> Vec<f64> {
            match &spec.rule {
                SchemeRule::Harmonic | SchemeRule::Random { .. } => vec![0.0; n],
                SchemeRule::Uniform { b, beta, .. } => vec![if kind == 0 { *b } else { *beta }; n],
                SchemeRule::Alternating { b, beta, .. } => {
                    let amp = if kind == 0 { *b } else { *beta };
                    let sign = if index_sum_parity(v) == 0 { 1.0 } else { -1.0 };
                    vec![sign * amp; n]
                }
                SchemeRule::OddSites { b, beta, .. } => {
                    let amp = if kind == 0 { *b } else { *beta };
                    vec![if index_sum_parity(v) == 1 { amp } else { 0.0 }; n]
                }
            }
        };
        let scalar_dev = |k: i64| -> f64 {
            match &spec.rule {
                SchemeRule::Harmonic | SchemeRule::Random { .. } => 0.0,
                SchemeRule::Uniform { omega, .. } => *omega,
                SchemeRule::Alternating { omega, .. } => {
                    if k.rem_euclid(2) == 0 {
                        *omega
                    } else {
                        -*omega
                    }
                }
                SchemeRule::OddSites { omega, .. } => {
                    if k.rem_euclid(2) == 1 {
                        *omega
                    } else {
                        0.0
                    }
                }
            }
        };

        let mut b: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
        let mut beta: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
        let mut omega: BTreeMap<i64, f64> = BTreeMap::new();

        if let SchemeRule::Random { m, seed } = spec.rule {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::Domain(format!("random deviation size {m} must be finite and nonnegative")));
            }
            let db: Vec<Vec<f64>> = planar.iter().map(|a| site_draws(seed, 0, a, n)).collect();
            let dbeta: Vec<Vec<f64>> = planar.iter().map(|a| site_draws(seed, 1, a, n)).collect();
            let dom: Vec<f64> = ks.iter().map(|&k| site_draws(seed, 2, &[k], 1)[0]).collect();
            let peak = db.iter().chain(&dbeta).flatten().chain(&dom).fold(0.0f64, |acc, v| acc.max(v.abs()));
            let scale = if peak > 0.0 { m / peak } else { 0.0 };
            for (i, a) in planar.iter().enumerate() {
                let base = as_f(a);
                b.insert(a.clone(), base.iter().zip(&db[i]).map(|(x, d)| x + scale * d).collect());
                beta.insert(a.clone(), base.iter().zip(&dbeta[i]).map(|(x, d)| x + scale * d).collect());
            }
            for (&k, d) in ks.iter().zip(&dom) {
                omega.insert(k, 2.0 * k as f64 + scale * d);
            }
        } else {
            for a in &planar {
                let base = as_f(a);
                b.insert(a.clone(), base.iter().zip(vector_dev(a, 0)).map(|(x, d)| x + d).collect());
                beta.insert(a.clone(), base.iter().zip(vector_dev(a, 1)).map(|(x, d)| x + d).collect());
            }
            for &k in &ks {
                omega.insert(k, 2.0 * k as f64 + scalar_dev(k));
            }
        }

        for o in &spec.overrides {
            match o {
                Override::B { a, value } => set_vector(&mut b, a, value, n, "b")?,
                Override::Beta { alpha, value } => set_vector(&mut beta, alpha, value, n, "beta")?,
                Override::Omega { k, value } => match omega.get_mut(k) {
                    Some(slot) => *slot = *value,
                    None => return Err(Error::InvalidArgument(format!("omega override at k = {k} is outside the truncation"))),
                },
            }
        }
        Self::from_maps(truncation, b, beta, omega)
    }

    /// Validates explicit maps: complete on the truncation, finite, every
    /// `omega_k` nonzero, and deviation `M < 2/n`.
    pub fn from_maps(
        truncation: Truncation,
        b: BTreeMap<Vec<i64>, Vec<f64>>,
        beta: BTreeMap<Vec<i64>, Vec<f64>>,
        omega: BTreeMap<i64, f64>,
    ) -> Result<Self> {
        let n = truncation.n;
        let planar = truncation.planar_indices();
        for map in [&b, &beta] {
            if map.len() != planar.len() || planar.iter().any(|a| map.get(a).is_none_or(|v| v.len() != n)) {
                return Err(Error::InvalidArgument("node maps must cover the truncation with n-vectors".into()));
            }
        }
        let ks: Vec<i64> = (-truncation.k_t..=truncation.k_t).filter(|&k| k != 0).collect();
        if omega.len() != ks.len() || ks.iter().any(|k| !omega.contains_key(k)) {
            return Err(Error::InvalidArgument("omega map must cover every k != 0 in the truncation".into()));
        }
        if !b.values().chain(beta.values()).flatten().chain(omega.values()).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("scheme nodes must be finite".into()));
        }
        if let Some((k, _)) = omega.iter().find(|(_, w)| **w == 0.0) {
            return Err(Error::NotAFrame(format!("omega_{k} = 0, so rho_omega_{k} is undefined")));
        }
        let dev = |map: &BTreeMap<Vec<i64>, Vec<f64>>| {
            map.iter()
                .flat_map(|(a, v)| a.iter().zip(v).map(|(x, y)| (y - *x as f64).abs()))
                .fold(0.0f64, f64::max)
        };
        let dom = omega.iter().map(|(k, w)| (w - 2.0 * *k as f64).abs()).fold(0.0f64, f64::max);
        let m = dev(&b).max(dev(&beta)).max(dom);
        if m >= 2.0 / n as f64 {
            return Err(Error::Domain(format!("deviation M = {m} must be below 2/n = {}", 2.0 / n as f64)));
        }
        Ok(PerturbationScheme { truncation, b, beta, omega, m })
    }

    pub fn truncation(&self) -> &Truncation {
        &self.truncation
    }

    pub fn n(&self) -> usize {
        self.truncation.n
    }

    pub fn b(&self, a: &[i64]) -> Option<&[f64]> {
        self.b.get(a).map(Vec::as_slice)
    }

    pub fn beta(&self, alpha: &[i64]) -> Option<&[f64]> {
        self.beta.get(alpha).map(Vec::as_slice)
    }

    pub fn omega(&self, k: i64) -> Option<f64> {
        self.omega.get(&k).copied()
    }

    /// Weight `|2k / omega_k|^n` of the `k`-th shell; 1 for `k = 0`.
    pub fn weight(&self, k: i64) -> f64 {
        match self.omega.get(&k) {
            Some(w) => (2.0 * k as f64 / w).abs().powi(self.n() as i32),
            None => 1.0,
        }
    }
}

fn set_vector(map: &mut BTreeMap<Vec<i64>, Vec<f64>>, key: &[i64], value: &[f64], n: usize, name: &str) -> Result<()> {
    if value.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: value.len() });
    }
    match map.get_mut(key) {
        Some(slot) => {
            *slot = value.to_vec();
            Ok(())
        }
        None => Err(Error::InvalidArgument(format!("{name} override at {key:?} is outside the truncation"))),
    }
}

/// `k = 0: (b_a, beta_alpha, 0)`; `k != 0: (a, alpha, omega_k)`.
pub fn tilde_map(s: &PerturbationScheme, z: &FrameIndex) -> Result<Frequency> {
    if !s.truncation.contains(z) {
        return Err(Error::OutsideTruncation);
    }
    if z.k == 0 {
        Ok(Frequency { b: s.b[&z.a].clone(), beta: s.beta[&z.alpha].clone(), omega: 0.0 })
    } else {
        Ok(Frequency {
            b: z.a.iter().map(|&v| v as f64).collect(),
            beta: z.alpha.iter().map(|&v| v as f64).collect(),
            omega: s.omega[&z.k],
        })
    }
}

fn tilde_all(s: &PerturbationScheme) -> (Vec<FrameIndex>, Vec<Frequency>) {
    let idx = s.truncation.indices();
    let freqs = idx.iter().map(|z| tilde_map(s, z).expect("index from the truncation")).collect();
    (idx, freqs)
}

/// Largest deviation of the nodes from the harmonic lattice over the truncation.
pub fn scheme_m(s: &PerturbationScheme) -> f64 {
    s.m
}

/// `C(M) = nM / (2 - nM)` for `0 <= M < 2/n`.
pub fn c_of_m(m: f64, n: usize) -> Result<f64> {
    let nm = n as f64 * m;
    if !(m >= 0.0) || nm >= 2.0 || n == 0 {
        return Err(Error::Domain(format!("C(M) needs 0 <= M < 2/n, got M = {m}, n = {n}")));
    }
    Ok(nm / (2.0 - nm))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lo: f64,
    pub hi: f64,
    /// Set when `sqrt(T) >= 1`, where the lower envelope carries no information.
    pub degenerate_lower: bool,
}

/// `((1 - C)(1 - sqrt T)^2, (1 + C)(1 + sqrt T)^2)`, lower end clamped at 0.
pub fn envelope(m: f64, t: f64, n: usize) -> Result<Envelope> {
    let c = c_of_m(m, n)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("T must be finite and nonnegative, got {t}")));
    }
    let rt = t.sqrt();
    let degenerate_lower = rt >= 1.0;
    let lo = if degenerate_lower { 0.0 } else { ((1.0 - c) * (1.0 - rt) * (1.0 - rt)).max(0.0) };
    Ok(Envelope { lo, hi: (1.0 + c) * (1.0 + rt) * (1.0 + rt), degenerate_lower })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    /// Plain Lebesgue transforms `f^(z~)`.
    #[serde(rename = "lebesgue-raw")]
    LebesgueRaw,
    /// `sqrt(HAAR_SCALE) f^(z~)`; Parseval with constant 1 in the harmonic case.
    #[serde(rename = "haar-normalized")]
    HaarNormalized,
}

impl Convention {
    fn scale(self) -> f64 {
        match self {
            Convention::LebesgueRaw => 1.0,
            Convention::HaarNormalized => HAAR_SCALE.sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Convention::LebesgueRaw => "lebesgue-raw",
            Convention::HaarNormalized => "haar-normalized",
        }
    }
}

/// Frame coefficients over a truncation, in lexicographic index order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    truncation: Truncation,
    convention: Convention,
    entries: Vec<(FrameIndex, Complex64)>,
}

impl CoefficientTable {
    /// Builds a table from values listed in the truncation's lexicographic order.
    pub fn from_values(truncation: Truncation, convention: Convention, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != truncation.count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                truncation.count(),
                values.len()
            )));
        }
        let entries = truncation.indices().into_iter().zip(values).collect();
        Ok(CoefficientTable { truncation, convention, entries })
    }

    pub fn truncation(&self) -> &Truncation {
        &self.truncation
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn entries(&self) -> &[(FrameIndex, Complex64)] {
        &self.entries
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.entries.iter().map(|(_, v)| *v).collect()
    }

    pub fn get(&self, z: &FrameIndex) -> Option<Complex64> {
        self.entries.binary_search_by(|(w, _)| w.cmp(z)).ok().map(|i| self.entries[i].1)
    }

    pub fn energy(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v.norm_sqr()).sum()
    }

    pub fn to_convention(&self, convention: Convention) -> Self {
        let factor = convention.scale() / self.convention.scale();
        CoefficientTable {
            truncation: self.truncation,
            convention,
            entries: self.entries.iter().map(|(z, v)| (z.clone(), v * factor)).collect(),
        }
    }

    /// HCT1: one JSON header line, then `a..,alpha..,k,re,im` rows.
    pub fn write_hct1<W: Write>(&self, mut w: W) -> Result<()> {
        let header = HctHeader {
            magic: "HCT1".into(),
            n: self.truncation.n,
            k_xy: self.truncation.k_xy,
            k_t: self.truncation.k_t,
            convention: self.convention,
        };
        let mut out = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
        out.push('\n');
        for (z, v) in &self.entries {
            let mut fields: Vec<String> = z.a.iter().chain(&z.alpha).map(|c| c.to_string()).collect();
            fields.push(z.k.to_string());
            fields.push(format_g17(v.re));
            fields.push(format_g17(v.im));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read_hct1<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text).map_err(|e| Error::Format(format!("HCT1 is not UTF-8 text: {e}")))?;
        let mut lines = text.lines();
        let header: HctHeader = serde_json::from_str(lines.next().ok_or_else(|| Error::Format("empty file".into()))?)
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.magic != "HCT1" {
            return Err(Error::Format(format!("wrong magic {:?}", header.magic)));
        }
        let truncation = Truncation::new(header.n, header.k_xy, header.k_t)
            .map_err(|e| Error::Format(format!("bad truncation: {e}")))?;
        let expected = truncation.indices();
        let n = truncation.n;
        let mut entries = Vec::with_capacity(expected.len());
        for (row, line) in lines.filter(|l| !l.is_empty()).enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 * n + 3 {
                return Err(Error::Format(format!("row {row}: expected {} fields", 2 * n + 3)));
            }
            let ints = fields[..2 * n + 1]
                .iter()
                .map(|f| f.trim().parse::<i64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("row {row}: {e}")))?;
            let re: f64 = fields[2 * n + 1].trim().parse().map_err(|e| Error::Format(format!("row {row}: {e}")))?;
            let im: f64 = fields[2 * n + 2].trim().parse().map_err(|e| Error::Format(format!("row {row}: {e}")))?;
            let z = FrameIndex::new(ints[..n].to_vec(), ints[n..2 * n].to_vec(), ints[2 * n]);
            if expected.get(row) != Some(&z) {
                return Err(Error::Format(format!("row {row}: index {z:?} out of lexicographic order")));
            }
            entries.push((z, Complex64::new(re, im)));
        }
        if entries.len() != expected.len() {
            return Err(Error::Format(format!("expected {} rows, found {}", expected.len(), entries.len())));
        }
        Ok(CoefficientTable { truncation, convention: header.convention, entries })
    }
}

#[derive(Serialize, Deserialize)]
struct HctHeader {
    magic: String,
    n: usize,
    #[serde(rename = "K_xy")]
    k_xy: i64,
    #[serde(rename = "K_t")]
    k_t: i64,
    convention: Convention,
}

/// Coefficients `c_z = scale * f^(z~)` for every index of the scheme's truncation.
pub fn analysis<S: Spectrum + ?Sized>(f: &S, s: &PerturbationScheme, convention: Convention) -> Result<CoefficientTable> {
    if f.n() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), found: f.n() });
    }
    let (_, freqs) = tilde_all(s);
    let scale = convention.scale();
    let values = f.transform_many(&freqs).into_iter().map(|v| v * scale).collect();
    CoefficientTable::from_values(s.truncation, convention, values)
}

/// The forms `q`, `r`, `phi` and `p = q + r` over the truncation (Lebesgue).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForms {
    pub q: f64,
    pub r: f64,
    pub phi: f64,
    pub p: f64,
}

pub fn quadratic_forms(f: &GridFunction, s: &PerturbationScheme) -> Result<QuadraticForms> {
    let table = analysis(f, s, Convention::LebesgueRaw)?;
    let mut q = 0.0;
    let mut phi = 0.0;
    for (z, v) in table.entries() {
        if z.k == 0 {
            q += v.norm_sqr();
        } else {
            phi += v.norm_sqr();
        }
    }
    let n = s.n() as i32;
    let mut r = 0.0;
    for k in (-s.truncation.k_t..=s.truncation.k_t).filter(|&k| k != 0) {
        let rep = RepParams::new(s.omega[&k])?;
        r += (2.0 * k as f64).abs().powi(n) * hs_norm_sq_lattice(&rep, f, s.truncation.k_xy)?;
    }
    Ok(QuadraticForms { q, r, phi, p: q + r })
}

/// `<e_v, e_u>` over `E` in closed form; real.
pub fn gram_entry(u: &Frequency, v: &Frequency) -> Complex64 {
    Complex64::new(integral_over_e(&u.sub(v)), 0.0)
}

/// `G[z][w] = HAAR_SCALE <e_{w~}, e_{z~}>`, optionally scaled by `sqrt(w_z w_w)`
/// with `w_z = |2k / omega_k|^n`. Entries are real, so the matrix is real symmetric.
pub fn gram_matrix(s: &PerturbationScheme, weighted: bool) -> Result<SymMatrix> {
    let count = s.truncation.count();
    if count > MAX_DENSE_INDICES {
        return Err(Error::SizeOverflow(count));
    }
    let (idx, freqs) = tilde_all(s);
    let sw: Vec<f64> = idx.iter().map(|z| if weighted { s.weight(z.k).sqrt() } else { 1.0 }).collect();
    Ok(SymMatrix::from_fn(count, |i, j| {
        HAAR_SCALE * integral_over_e(&freqs[i].sub(&freqs[j])) * sw[i] * sw[j]
    }))
}

/// `HAAR_SCALE * lambda_max(D)` with `D[z][w] = <d_w, d_z>`, `d_z = e_{z~} - e_z`.
pub fn t_estimate(s: &PerturbationScheme) -> Result<f64> {
    let count = s.truncation.count();
    if count > MAX_DENSE_INDICES {
        return Err(Error::SizeOverflow(count));
    }
    let (idx, tilde) = tilde_all(s);
    let harmonic: Vec<Frequency> = idx.iter().map(|z| z.lattice_point(s.n()).expect("matching n")).collect();
    let ip = |v: &Frequency, u: &Frequency| integral_over_e(&u.sub(v));
    let d = SymMatrix::from_fn(count, |z, w| {
        ip(&tilde[w], &tilde[z]) - ip(&tilde[w], &harmonic[z]) - ip(&harmonic[w], &tilde[z])
            + ip(&harmonic[w], &harmonic[z])
    });
    let (_, top) = extreme_eigenvalues(&d)?;
    Ok((HAAR_SCALE * top).max(0.0))
}

/// Frame bounds on the truncated span with the theoretical envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    #[serde(rename = "A_est")]
    pub a_est: f64,
    #[serde(rename = "B_est")]
    pub b_est: f64,
    #[serde(rename = "C_M")]
    pub c_m: f64,
    #[serde(rename = "T_est")]
    pub t_est: f64,
    pub envelope_lo: f64,
    pub envelope_hi: f64,
    pub degenerate_lower: bool,
    pub condition_number: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub n: usize,
    #[serde(rename = "K_xy", skip_serializing_if = "Option::is_none", default)]
    pub k_xy: Option<i64>,
    #[serde(rename = "K_t", skip_serializing_if = "Option::is_none", default)]
    pub k_t: Option<i64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none", default)]
    pub k: Option<i64>,
    pub index_count: usize,
    pub weighted: bool,
    #[serde(rename = "power_A")]
    pub power_a: f64,
    #[serde(rename = "power_B")]
    pub power_b: f64,
    /// Always `"truncated"`: the bounds hold exactly on the truncated span only.
    pub span: String,
}

/// Dense extremes with a power-iteration consistency check.
pub(crate) fn checked_extremes(g: &SymMatrix) -> Result<(f64, f64, f64, f64)> {
    let (lo, hi) = extreme_eigenvalues(g)?;
    let (plo, phi) = power_extremes(g, POWER_ITERATIONS);
    let tol = 1e-9 * hi.abs().max(1.0);
    if phi > hi + tol || plo < lo - tol {
        return Err(Error::Eigensolve(format!(
            "power iteration estimates ({plo}, {phi}) fall outside the dense spectrum [{lo}, {hi}]"
        )));
    }
    Ok((lo, hi, plo, phi))
}

pub fn frame_bounds(s: &PerturbationScheme, weighted: bool) -> Result<BoundsReport> {
    let g = gram_matrix(s, weighted)?;
    let (lo, hi, plo, phi) = checked_extremes(&g)?;
    let a = lo.max(0.0);
    let b = hi.max(a);
    let n = s.n();
    let m = scheme_m(s);
    let t = t_estimate(s)?;
    let env = envelope(m, t, n)?;
    Ok(BoundsReport {
        a_est: a,
        b_est: b,
        c_m: c_of_m(m, n)?,
        t_est: t,
        envelope_lo: env.lo,
        envelope_hi: env.hi,
        degenerate_lower: env.degenerate_lower,
        condition_number: b / a,
        m,
        n,
        k_xy: Some(s.truncation.k_xy),
        k_t: Some(s.truncation.k_t),
        k: None,
        index_count: g.dim(),
        weighted,
        power_a: plo,
        power_b: phi,
        span: "truncated".into(),
    })
}

/// Bounds at a truncation and at twice its radii.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stability {
    pub coarse: BoundsReport,
    pub fine: BoundsReport,
    pub delta_a: f64,
    pub delta_b: f64,
}

pub fn finite_section_stability(truncation: Truncation, spec: &SchemeSpec, weighted: bool) -> Result<Stability> {
    let fine_t = Truncation::new(truncation.n, 2 * truncation.k_xy, 2 * truncation.k_t)?;
    let coarse = frame_bounds(&PerturbationScheme::from_spec(truncation, spec)?, weighted)?;
    let fine = frame_bounds(&PerturbationScheme::from_spec(fine_t, spec)?, weighted)?;
    Ok(Stability {
        delta_a: (fine.a_est - coarse.a_est).abs(),
        delta_b: (fine.b_est - coarse.b_est).abs(),
        coarse,
        fine,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GramSolve,
    FrameIteration,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gram-solve" => Ok(Method::GramSolve),
            "frame-iteration" => Ok(Method::FrameIteration),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// `f = sum_z g_z sqrt(HAAR_SCALE) e_{z~}`.
    pub synthesis: ExpSum,
    pub coefficients: Vec<Complex64>,
    pub function: GridFunction,
    pub iterations: usize,
    /// Relative coefficient residual `|c - analysis(f)| / |c|`.
    pub residual: f64,
}

fn sym_mul_complex(g: &SymMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let re: Vec<f64> = v.iter().map(|c| c.re).collect();
    let im: Vec<f64> = v.iter().map(|c| c.im).collect();
    g.mul_vec(&re).into_iter().zip(g.mul_vec(&im)).map(|(a, b)| Complex64::new(a, b)).collect()
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// `|sum_z g_z sqrt(HAAR_SCALE) e_{z~}|^2 = g* G g` for the unweighted Gram `G`.
pub fn synthesis_norm_sq(g: &SymMatrix, coeffs: &[Complex64]) -> f64 {
    let gv = sym_mul_complex(g, coeffs);
    coeffs.iter().zip(&gv).map(|(a, b)| (a.conj() * b).re).sum()
}

/// Recovers `f` in the span of the scheme's exponentials from its coefficients.
pub fn reconstruct(
    c: &CoefficientTable,
    s: &PerturbationScheme,
    target: &GridSpec,
    method: Method,
    tol: f64,
    max_iter: usize,
) -> Result<Reconstruction> {
    if c.truncation != s.truncation {
        return Err(Error::InvalidArgument("coefficient table and scheme truncations differ".into()));
    }
    if target.n() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), found: target.n() });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let (_, freqs) = tilde_all(s);
    let root = HAAR_SCALE.sqrt();
    let finish = |coeffs: Vec<Complex64>, iterations: usize, residual: f64| -> Result<Reconstruction> {
        let terms = freqs.iter().cloned().zip(coeffs.iter().map(|g| g * root)).collect();
        let synthesis = ExpSum::new(s.n(), terms)?;
        let function = synthesis.sample(target);
        Ok(Reconstruction { synthesis, coefficients: coeffs, function, iterations, residual })
    };

    let cv = c.to_convention(Convention::HaarNormalized).values();
    let cnorm = vec_norm(&cv);
    if cnorm == 0.0 {
        return finish(vec![Complex64::new(0.0, 0.0); cv.len()], 0, 0.0);
    }
    let g = gram_matrix(s, false)?;
    let (lo, hi, _, _) = checked_extremes(&g)?;
    if !(lo > 0.0) {
        return Err(Error::NotAFrame(format!("A_est = {lo:e} <= 0 on the truncated span")));
    }
    let residual_of = |h: &[Complex64]| {
        let gh = sym_mul_complex(&g, h);
        let r: Vec<Complex64> = cv.iter().zip(&gh).map(|(a, b)| a - b).collect();
        (vec_norm(&r) / cnorm, r)
    };
    match method {
        Method::GramSolve => {
            let re: Vec<f64> = cv.iter().map(|v| v.re).collect();
            let im: Vec<f64> = cv.iter().map(|v| v.im).collect();
            let not_pd = || Error::NotAFrame("Gram matrix is not positive definite".into());
            let xr = cholesky_solve(&g, &re).ok_or_else(not_pd)?;
            let xi = cholesky_solve(&g, &im).ok_or_else(not_pd)?;
            let h: Vec<Complex64> = xr.into_iter().zip(xi).map(|(a, b)| Complex64::new(a, b)).collect();
            let (res, _) = residual_of(&h);
            if res > tol {
                return Err(Error::NoConvergence { iterations: 1, residual: res });
            }
            finish(h, 1, res)
        }
        Method::FrameIteration => {
            let lambda = 2.0 / (lo + hi);
            let mut h = vec![Complex64::new(0.0, 0.0); cv.len()];
            for it in 0..=max_iter {
                let (res, r) = residual_of(&h);
                if res <= tol {
                    return finish(h, it, res);
                }
                if it == max_iter {
                    return Err(Error::NoConvergence { iterations: max_iter, residual: res });
                }
                for (hv, rv) in h.iter_mut().zip(&r) {
                    *hv += lambda * rv;
                }
            }
            unreachable!("the loop returns on its last iteration")
        }
    }
}
