//! Spectral time evolution of the single-excitation Hamiltonian.
//!
//! All propagation goes through `U(t) = V exp(-itΛ) Vᵀ`; no ODE integration.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::Hamiltonian;

const SYMMETRIC_EIGEN_EPS: f64 = 1e-15;
const SYMMETRIC_EIGEN_MAX_ITER: usize = 10_000;

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
///
/// Each eigenvector is normalised so its first component above `1e-12` in
/// magnitude is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl EigenSystem {
    /// Diagonalizes a real symmetric matrix. Only the lower triangle is read.
    pub fn from_symmetric(matrix: &DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return invalid(format!(
                "matrix is {}x{}, not square",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("matrix has non-finite entries".into()));
        }
        let n = matrix.nrows();
        let eig = SymmetricEigen::try_new(
            matrix.clone(),
            SYMMETRIC_EIGEN_EPS,
            SYMMETRIC_EIGEN_MAX_ITER,
        )
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (col, &src) in order.iter().enumerate() {
            let v = eig.eigenvectors.column(src);
            let sign = v
                .iter()
                .find(|x| x.abs() > 1e-12)
                .map_or(1.0, |x| x.signum());
            vectors.set_column(col, &(v * sign));
        }
        Ok(Self { values, vectors })
    }

    /// Wraps precomputed eigenpairs without reordering or sign normalisation.
    #[cfg(test)]
    pub(crate) fn from_parts(values: Vec<f64>, vectors: DMatrix<f64>) -> Self {
        Self { values, vectors }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Columns are eigenvectors, rows are nodes.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Component of eigenvector `n` (0-based) on 1-based `node`.
    #[inline]
    pub fn component(&self, node: usize, n: usize) -> f64 {
        self.vectors[(node - 1, n)]
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node == 0 || node > self.dim() {
            return invalid(format!("node {node} outside 1..={}", self.dim()));
        }
        Ok(())
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.values));
        &self.vectors * lambda * self.vectors.transpose()
    }
}

pub fn eigendecompose(h: &Hamiltonian) -> Result<EigenSystem> {
    EigenSystem::from_symmetric(h.matrix())
}

/// `⟨out| exp(-itH) |in⟩`.
pub fn transfer_amplitude(
    eig: &EigenSystem,
    input: usize,
    output: usize,
    t: f64,
) -> Result<Complex64> {
    eig.check_node(input)?;
    eig.check_node(output)?;
    Ok(amplitude_unchecked(eig, input, output, t))
}

pub(crate) fn amplitude_unchecked(
    eig: &EigenSystem,
    input: usize,
    output: usize,
    t: f64,
) -> Complex64 {
    let vi = eig.vectors.row(input - 1);
    let vo = eig.vectors.row(output - 1);
    eig.values
        .iter()
        .zip(vi.iter().zip(vo.iter()))
        .map(|(&lambda, (&a, &b))| Complex64::from_polar(a * b, -t * lambda))
        .sum()
}

/// `|⟨out| exp(-itH) |in⟩|²`, clamped to `[0, 1]`.
pub fn transfer_probability(eig: &EigenSystem, input: usize, output: usize, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return invalid(format!("time must be non-negative, got {t}"));
    }
    Ok(transfer_amplitude(eig, input, output, t)?
        .norm_sqr()
        .clamp(0.0, 1.0))
}

/// Sampled transfer probability on the grid `0, dt, 2dt, … ≤ t_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySeries {
    pub in_node: usize,
    pub out_node: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ProbabilitySeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest sampled value and its time.
    pub fn max(&self) -> Option<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.values)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(&t, &p)| (t, p))
    }
}

pub fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return invalid(format!("time step must be positive, got {dt}"));
    }
    if !(t_max > 0.0) || !t_max.is_finite() {
        return invalid(format!("t_max must be positive, got {t_max}"));
    }
    // Tolerate t_max/dt landing just below an integer.
    let steps = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=steps).map(|k| k as f64 * dt).collect())
}

pub fn probability_series(
    eig: &EigenSystem,
    input: usize,
    output: usize,
    t_max: f64,
    dt: f64,
) -> Result<ProbabilitySeries> {
    eig.check_node(input)?;
    eig.check_node(output)?;
    let times = time_grid(t_max, dt)?;
    let values = times
        .iter()
        .map(|&t| {
            amplitude_unchecked(eig, input, output, t)
                .norm_sqr()
                .clamp(0.0, 1.0)
        })
        .collect();
    Ok(ProbabilitySeries {
        in_node: input,
        out_node: output,
        times,
        values,
    })
}

/// Closed-form transfer probability for the two-node Hamiltonian
/// `[[c1, 1], [1, c2]]`: `(2/Ω)² sin²(Ωt/2)` with `Ω = √((c2 − c1)² + 4)`.
pub fn rabi_probability(c1: f64, c2: f64, t: f64) -> f64 {
    let omega = ((c2 - c1).powi(2) + 4.0).sqrt();
    let s = (0.5 * omega * t).sin();
    (2.0 / omega).powi(2) * s * s
}
