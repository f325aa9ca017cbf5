//! One-dimensional perturbed exponentials `e^{2 pi i omega_j s}` on `(-1/2, 1/2)`.

use crate::error::{Error, Result};
use crate::frames::{checked_extremes, envelope, BoundsReport};
use crate::special::sinc;
use crate::spectral::{extreme_eigenvalues, SymMatrix};
use serde::{Deserialize, Serialize};

/// Nodes `omega_j` for `j = -K..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaSequence {
    k: i64,
    omega: Vec<f64>,
}

impl OmegaSequence {
    pub fn new(k: i64, omega: Vec<f64>) -> Result<Self> {
        if k < 0 || omega.len() != (2 * k + 1) as usize {
            return Err(Error::InvalidArgument(format!("expected {} nodes for K = {k}", 2 * k + 1)));
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("nodes must be finite".into()));
        }
        let s = OmegaSequence { k, omega };
        if !(s.separation() > 0.0) {
            return Err(Error::Domain("nodes must be separated: two of them coincide".into()));
        }
        Ok(s)
    }

    pub fn from_fn(k: i64, f: impl Fn(i64) -> f64) -> Result<Self> {
        Self::new(k, (-k..=k).map(f).collect())
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    pub fn nodes(&self) -> &[f64] {
        &self.omega
    }

    /// `sup_j |omega_j - j|`.
    pub fn deviation(&self) -> f64 {
        self.omega.iter().zip(-self.k..=self.k).map(|(w, j)| (w - j as f64).abs()).fold(0.0, f64::max)
    }

    /// `min_{j != l} |omega_j - omega_l|`; infinite for a single node.
    pub fn separation(&self) -> f64 {
        let mut sorted = self.omega.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Node layouts for the command line and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceRule {
    Harmonic,
    /// `omega_j = j + shift`.
    Uniform { shift: f64 },
    /// `omega_j = j + amp (-1)^j`.
    Alternating { amp: f64 },
}

impl SequenceRule {
    pub fn build(&self, k: i64) -> Result<OmegaSequence> {
        match *self {
            SequenceRule::Harmonic => OmegaSequence::from_fn(k, |j| j as f64),
            SequenceRule::Uniform { shift } => OmegaSequence::from_fn(k, |j| j as f64 + shift),
            SequenceRule::Alternating { amp } => {
                OmegaSequence::from_fn(k, |j| j as f64 + if j.rem_euclid(2) == 0 { amp } else { -amp })
            }
        }
    }
}

/// `<e_v, e_u>` over `(-1/2, 1/2)`: `sinc(u - v)`.
pub fn ds_gram_entry(u: f64, v: f64) -> f64 {
    sinc(u - v)
}

/// Extremal eigenvalues of the sinc Gram, `T` from the difference Gram
/// against the integer nodes, and `C_M = 0`.
pub fn ds_frame_bounds(s: &OmegaSequence) -> Result<BoundsReport> {
    let w = &s.omega;
    let dim = w.len();
    let g = SymMatrix::from_fn(dim, |i, j| ds_gram_entry(w[i], w[j]));
    let (lo, hi, plo, phi) = checked_extremes(&g)?;
    let ints: Vec<f64> = (-s.k..=s.k).map(|j| j as f64).collect();
    let d = SymMatrix::from_fn(dim, |i, j| {
        ds_gram_entry(w[i], w[j]) - ds_gram_entry(ints[i], w[j]) - ds_gram_entry(w[i], ints[j])
            + ds_gram_entry(ints[i], ints[j])
    });
    let t = extreme_eigenvalues(&d)?.1.max(0.0);
    let env = envelope(0.0, t, 1)?;
    let a = lo.max(0.0);
    let b = hi.max(a);
    Ok(BoundsReport {
        a_est: a,
        b_est: b,
        c_m: 0.0,
        t_est: t,
        envelope_lo: env.lo,
        envelope_hi: env.hi,
        degenerate_lower: env.degenerate_lower,
        condition_number: b / a,
        m: s.deviation(),
        n: 1,
        k_xy: None,
        k_t: None,
        k: Some(s.k),
        index_count: dim,
        weighted: false,
        power_a: plo,
        power_b: phi,
        span: "truncated".into(),
    })
}
