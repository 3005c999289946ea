use std::f64::consts::TAU;

use nalgebra::DMatrix;

use super::operator::{Operator, C64};
use super::SpinError;

/// Relative Hermiticity tolerance applied to every decomposition input.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigen-decomposition of a Hermitian operator.
///
/// Eigenvalues are ascending; column `k` of `vectors` is the eigenvector for
/// `values[k]`, with its largest-magnitude component made real and positive.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Operator,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        let n = self.vectors.dim();
        (0..n).map(|i| self.vectors[(i, k)]).collect()
    }

    /// V Λ V†
    pub fn reconstruct(&self) -> Operator {
        let d = Operator::from_diagonal(&self.values);
        self.vectors.matmul(&d).matmul(&self.vectors.adjoint())
    }
}

fn check_hermitian(h: &Operator) -> Result<(), SpinError> {
    let err = h.hermiticity_error();
    if err >= HERMITIAN_TOL * h.max_abs().max(1.0) {
        return Err(SpinError::NotHermitian { error: err });
    }
    Ok(())
}

pub fn eigenbasis(h: &Operator) -> Result<Eigen, SpinError> {
    check_hermitian(h)?;
    let n = h.dim();
    // symmetrize so the decomposition sees an exactly Hermitian matrix
    let m = DMatrix::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    let eig = m.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Operator::zeros(n);
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let peak = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        // first component within rounding of the peak fixes the phase
        let pivot = v
            .iter()
            .position(|z| z.norm() >= peak * (1.0 - 1e-10))
            .unwrap_or(0);
        let phase = v[pivot].conj() / v[pivot].norm();
        for i in 0..n {
            vectors[(i, col)] = v[i] * phase / norm;
        }
    }
    Ok(Eigen { values, vectors })
}

/// exp(-i 2π H t) for a Hermitian `h` in MHz and `t` in µs.
pub fn herm_expm(h: &Operator, t: f64) -> Result<Operator, SpinError> {
    let eig = eigenbasis(h)?;
    Ok(propagator_from_eigen(&eig, t))
}

/// Propagator exp(-i 2π H t) from a precomputed decomposition of H.
pub fn propagator_from_eigen(eig: &Eigen, t: f64) -> Operator {
    let n = eig.values.len();
    let v = &eig.vectors;
    let phases: Vec<C64> = eig
        .values
        .iter()
        .map(|&l| C64::from_polar(1.0, -TAU * l * t))
        .collect();
    Operator::from_fn(n, |i, j| {
        (0..n)
            .map(|k| v[(i, k)] * phases[k] * v[(j, k)].conj())
            .sum()
    })
}
