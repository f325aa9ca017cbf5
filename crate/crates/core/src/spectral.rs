//! Extremal eigenvalues of dense real symmetric matrices.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Dense real symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        use rayon::prelude::*;
        let data: Vec<f64> = (0..dim * dim)
            .into_par_iter()
            .map(|flat| {
                let (i, j) = (flat / dim, flat % dim);
                // evaluate the upper triangle only so the matrix is exactly symmetric
                if i <= j {
                    f(i, j)
                } else {
                    f(j, i)
                }
            })
            .collect();
        SymMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_identity(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| self.get(i, j) == if i == j { 1.0 } else { 0.0 }))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.dim).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

/// All eigenvalues in ascending order.
pub fn eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    if m.dim == 0 {
        return Err(Error::Eigensolve("empty matrix".into()));
    }
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigensolve("matrix has non-finite entries".into()));
    }
    // identically zero rows carry eigenvalue 0; the Householder reduction
    // breaks down on them, so they are split off first
    let live: Vec<usize> = (0..m.dim).filter(|&i| m.data[i * m.dim..(i + 1) * m.dim].iter().any(|&x| x != 0.0)).collect();
    let mut v = vec![0.0; m.dim - live.len()];
    if !live.is_empty() {
        let sub = DMatrix::from_fn(live.len(), live.len(), |i, j| m.get(live[i], live[j]));
        let eig = nalgebra::SymmetricEigen::try_new(sub, f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigensolve("symmetric eigensolver did not converge".into()))?;
        v.extend(eig.eigenvalues.iter().copied());
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigensolve("eigenvalues are not finite".into()));
    }
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// `(lambda_min, lambda_max)`.
pub fn extreme_eigenvalues(m: &SymMatrix) -> Result<(f64, f64)> {
    let v = eigenvalues(m)?;
    Ok((v[0], v[v.len() - 1]))
}

/// Rayleigh-quotient power iteration for the extremes of a positive
/// semidefinite matrix: on `G` for the top, on `s I - G` for the bottom.
///
/// Rayleigh quotients never leave `[lambda_min, lambda_max]`, which makes the
/// result a consistency check on a dense solve.
pub fn power_extremes(m: &SymMatrix, iterations: usize) -> (f64, f64) {
    let dim = m.dim;
    let start: Vec<f64> = (0..dim).map(|i| 1.0 + 0.5 * ((i as f64 * 0.618_033_988_749_895).fract() - 0.5)).collect();
    let top = rayleigh_power(&start, iterations, |v| m.mul_vec(v));
    let shift = top.abs().max(f64::MIN_POSITIVE);
    let shifted = rayleigh_power(&start, iterations, |v| {
        let mv = m.mul_vec(v);
        v.iter().zip(mv).map(|(a, b)| shift * a - b).collect()
    });
    (shift - shifted, top)
}

fn rayleigh_power(start: &[f64], iterations: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let mut v = DVector::from_column_slice(start);
    v /= v.norm();
    let mut q = 0.0;
    for _ in 0..iterations.max(1) {
        let w = DVector::from_vec(apply(v.as_slice()));
        q = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        v = w / norm;
    }
    q
}

/// Solves `m x = rhs` for a positive definite `m`; `None` when the Cholesky
/// factorization fails.
pub fn cholesky_solve(m: &SymMatrix, rhs: &[f64]) -> Option<Vec<f64>> {
    let chol = nalgebra::Cholesky::new(m.to_nalgebra())?;
    let x = chol.solve(&DVector::from_column_slice(rhs));
    Some(x.iter().copied().collect())
}
