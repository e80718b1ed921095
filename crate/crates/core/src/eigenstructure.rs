//! Information transfer fidelity and the eigenvector alignment condition.
//!
//! For real eigenvectors, `√ITF = Σ_n |⟨in|v_n⟩⟨v_n|out⟩|` bounds the transfer
//! probability at every time. Stationarity of this bound under the
//! normalization constraints forces `|⟨v_n|in⟩| = |⟨v_n|out⟩|` for all `n`;
//! [`check_optimality_condition`] measures how far a system is from that.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::EigenSystem;
use crate::error::Result;
use crate::objective::DEGENERACY_TOL;

/// Overlap products below this magnitude get sign 0.
pub const SIGN_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItfReport {
    pub sqrt_itf: f64,
    pub itf: f64,
    /// `sign(⟨in|v_n⟩⟨v_n|out⟩)`, zero when the product vanishes.
    pub signs: Vec<i8>,
    pub overlaps_in: Vec<f64>,
    pub overlaps_out: Vec<f64>,
    /// `| |⟨v_n|in⟩| − |⟨v_n|out⟩| |` per eigenvector.
    pub condition_residuals: Vec<f64>,
}

impl ItfReport {
    pub fn max_condition_residual(&self) -> f64 {
        self.condition_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Groups of eigen-indices whose eigenvalues agree to within
/// [`DEGENERACY_TOL`] (relative). Eigenvalues must be ascending.
pub fn degenerate_groups(values: &[f64]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (n, &v) in values.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (v - values[g[0]]).abs() < DEGENERACY_TOL * v.abs().max(1.0) => g.push(n),
            _ => groups.push(vec![n]),
        }
    }
    groups
}

/// Overlaps of `in` and `out` with a canonical basis of one eigenspace.
///
/// The first basis vector is the normalized projection of `in`, the second
/// carries what remains of the projection of `out`; every other basis
/// vector is orthogonal to both nodes.
fn canonical_overlaps(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g = x.len();
    let mut ov_in = vec![0.0; g];
    let mut ov_out = vec![0.0; g];
    if g == 1 {
        return (x.to_vec(), y.to_vec());
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx < SIGN_ZERO_TOL {
        ov_out[0] = ny;
        return (ov_in, ov_out);
    }
    let along: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / nx;
    ov_in[0] = nx;
    ov_out[0] = along;
    ov_out[1] = (ny * ny - along * along).max(0.0).sqrt();
    (ov_in, ov_out)
}

/// ITF and per-eigenvector overlaps.
///
/// Inside a degenerate eigenspace the eigensolver's basis is arbitrary, so
/// the overlaps are reported in the canonical basis of
/// [`canonical_overlaps`]. This makes `√ITF = Σ_λ |⟨in|P_λ|out⟩|`, the tight
/// bound on the transfer amplitude, and makes the alignment residuals
/// independent of the basis.
pub fn compute_itf(eig: &EigenSystem, input: usize, output: usize) -> Result<ItfReport> {
    eig.check_node(input)?;
    eig.check_node(output)?;
    let dim = eig.dim();
    let mut overlaps_in = vec![0.0; dim];
    let mut overlaps_out = vec![0.0; dim];
    for group in degenerate_groups(eig.values()) {
        let x: Vec<f64> = group.iter().map(|&n| eig.component(input, n)).collect();
        let y: Vec<f64> = group.iter().map(|&n| eig.component(output, n)).collect();
        let (a, b) = canonical_overlaps(&x, &y);
        for (k, &n) in group.iter().enumerate() {
            overlaps_in[n] = a[k];
            overlaps_out[n] = b[k];
        }
    }
    let products: Vec<f64> = overlaps_in
        .iter()
        .zip(&overlaps_out)
        .map(|(a, b)| a * b)
        .collect();
    let sqrt_itf: f64 = products.iter().map(|p| p.abs()).sum();
    let signs = products
        .iter()
        .map(|&p| {
            if p.abs() < SIGN_ZERO_TOL {
                0
            } else {
                p.signum() as i8
            }
        })
        .collect();
    let condition_residuals = overlaps_in
        .iter()
        .zip(&overlaps_out)
        .map(|(a, b)| (a.abs() - b.abs()).abs())
        .collect();
    Ok(ItfReport {
        sqrt_itf,
        itf: sqrt_itf * sqrt_itf,
        signs,
        overlaps_in,
        overlaps_out,
        condition_residuals,
    })
}

/// Whether `max_n | |⟨v_n|in⟩| − |⟨v_n|out⟩| | < tol`, and that maximum.
pub fn check_optimality_condition(
    eig: &EigenSystem,
    input: usize,
    output: usize,
    tol: f64,
) -> Result<(bool, f64)> {
    let worst = compute_itf(eig, input, output)?.max_condition_residual();
    Ok((worst < tol, worst))
}

/// `4 Σ_n |v_{in,n}|² sin²((tλ_n − φ)/2)`.
///
/// For a mirror-symmetric Hamiltonian whose eigenvectors are all even under
/// the mirror (`V = PV`), this is the alignment residual between input and
/// output. In general it equals the alignment residual of the input with
/// itself: `2 − 2 Re(e^{-iφ} ⟨in|e^{itH}|in⟩)`.
pub fn symmetric_transfer_expression(
    eig: &EigenSystem,
    input: usize,
    t: f64,
    phase: f64,
) -> Result<f64> {
    eig.check_node(input)?;
    Ok((0..eig.dim())
        .map(|n| {
            let v = eig.component(input, n);
            let s = (0.5 * (t * eig.values()[n] - phase)).sin();
            4.0 * v * v * s * s
        })
        .sum())
}

/// Permutation matrix of a 1-based node map.
pub fn permutation_matrix(map: &[usize]) -> DMatrix<f64> {
    let n = map.len() - 1;
    let mut p = DMatrix::zeros(n, n);
    for j in 1..=n {
        p[(map[j] - 1, j - 1)] = 1.0;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{eigendecompose, transfer_probability};
    use crate::network::{build_reduced_hamiltonian, BiasVector, NetworkSpec};
    use crate::objective::alignment_residual;
    use std::f64::consts::{PI, SQRT_2};

    fn eig_of(spec: NetworkSpec, bias: Vec<f64>) -> EigenSystem {
        eigendecompose(&build_reduced_hamiltonian(&spec, &BiasVector::new(bias).unwrap()).unwrap())
            .unwrap()
    }

    #[test]
    fn two_chain_itf_is_one() {
        let r = compute_itf(&eig_of(NetworkSpec::chain(2).unwrap(), vec![0.0; 2]), 1, 2).unwrap();
        assert!((r.sqrt_itf - 1.0).abs() < 1e-14);
        for (a, b) in r.overlaps_in.iter().zip(&r.overlaps_out) {
            assert!((a.abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
            assert!((b.abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        }
        assert_eq!(r.signs, vec![-1, 1]);
    }

    #[test]
    fn unbiased_ring6_opposite_nodes() {
        // Projector weights ⟨1|P_λ|4⟩ are 1/6, −1/3, 1/3, −1/6 for λ = 2, 1, −1, −2.
        let eig = eig_of(NetworkSpec::ring(6).unwrap(), vec![0.0; 6]);
        let r = compute_itf(&eig, 1, 4).unwrap();
        assert!((r.sqrt_itf - 1.0).abs() < 1e-12, "itf {}", r.itf);
        let (ok, worst) = check_optimality_condition(&eig, 1, 4, 1e-3).unwrap();
        assert!(ok, "residual {worst}");
        // The bound is not reached: the eigenphases never line up.
        let best = (0..200_000)
            .map(|i| transfer_probability(&eig, 1, 4, i as f64 * 1e-3).unwrap())
            .fold(0.0, f64::max);
        assert!((best - 0.75).abs() < 1e-6, "max p {best}");
    }

    #[test]
    fn degenerate_basis_rotation_leaves_report_unchanged() {
        let eig = eig_of(NetworkSpec::ring(8).unwrap(), vec![0.0; 8]);
        let base = compute_itf(&eig, 1, 3).unwrap();
        let groups = degenerate_groups(eig.values());
        let mut vectors = eig.vectors().clone();
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        for g in groups.iter().filter(|g| g.len() == 2) {
            let (u, w) = (
                vectors.column(g[0]).clone_owned(),
                vectors.column(g[1]).clone_owned(),
            );
            vectors.set_column(g[0], &(&u * c + &w * s));
            vectors.set_column(g[1], &(&w * c - &u * s));
        }
        let rotated = compute_itf(
            &EigenSystem::from_parts(eig.values().to_vec(), vectors),
            1,
            3,
        )
        .unwrap();
        assert!((base.sqrt_itf - rotated.sqrt_itf).abs() < 1e-12);
        for (a, b) in base
            .condition_residuals
            .iter()
            .zip(&rotated.condition_residuals)
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mirror_chain_satisfies_condition() {
        let eig = eig_of(NetworkSpec::chain(3).unwrap(), vec![0.0; 3]);
        let (ok, worst) = check_optimality_condition(&eig, 1, 3, 1e-10).unwrap();
        assert!(ok, "residual {worst}");
    }

    #[test]
    fn zero_overlap_gets_zero_sign() {
        // The middle eigenvector of the unbiased 3-chain vanishes on node 2.
        let eig = eig_of(NetworkSpec::chain(3).unwrap(), vec![0.0; 3]);
        let r = compute_itf(&eig, 1, 2).unwrap();
        assert_eq!(r.signs[1], 0);
    }

    #[test]
    fn itf_bounds_probability() {
        let eig = eig_of(
            NetworkSpec::ring(7).unwrap(),
            vec![1.0, 0.0, 2.5, -0.5, 3.0, 0.0, 0.4],
        );
        let r = compute_itf(&eig, 1, 3).unwrap();
        assert!(r.itf <= 1.0 + 1e-12);
        for i in 0..2000 {
            let p = transfer_probability(&eig, 1, 3, i as f64 * 0.05).unwrap();
            assert!(r.sqrt_itf >= p.sqrt() - 1e-10);
        }
    }

    #[test]
    fn invariant_under_sign_flips_and_reordering() {
        let eig = eig_of(
            NetworkSpec::ring(5).unwrap(),
            vec![0.3, 1.0, -2.0, 0.0, 0.7],
        );
        let base = check_optimality_condition(&eig, 1, 3, 1e-3).unwrap().1;
        let mut vectors = eig.vectors().clone();
        vectors.column_mut(2).neg_mut();
        vectors.column_mut(4).neg_mut();
        vectors.swap_columns(0, 3);
        let mut values = eig.values().to_vec();
        values.swap(0, 3);
        let altered = EigenSystem::from_parts(values, vectors);
        assert_eq!(
            check_optimality_condition(&altered, 1, 3, 1e-3).unwrap().1,
            base
        );
        let (a, b) = (
            compute_itf(&eig, 1, 3).unwrap(),
            compute_itf(&altered, 1, 3).unwrap(),
        );
        assert!((a.sqrt_itf - b.sqrt_itf).abs() < 1e-15);
    }

    #[test]
    fn expression_vanishes_at_full_revival_of_three_chain() {
        let eig = eig_of(NetworkSpec::chain(3).unwrap(), vec![0.0; 3]);
        assert!(symmetric_transfer_expression(&eig, 1, SQRT_2 * PI, 0.0).unwrap() < 1e-20);
        assert_eq!(
            symmetric_transfer_expression(&eig, 1, 0.0, 0.0).unwrap(),
            0.0
        );
        // At the transfer time the odd eigenvector carries a sign the
        // expression does not see.
        let at_transfer = symmetric_transfer_expression(&eig, 1, PI / SQRT_2, 0.0).unwrap();
        assert!((at_transfer - 2.0).abs() < 1e-12);
    }

    #[test]
    fn expression_equals_self_alignment_residual() {
        let eig = eig_of(
            NetworkSpec::chain(5).unwrap(),
            vec![2.0, -1.0, 0.5, -1.0, 2.0],
        );
        for &(t, phi) in &[(0.7, 0.0), (3.3, 1.2), (12.0, -2.0)] {
            let expr = symmetric_transfer_expression(&eig, 1, t, phi).unwrap();
            let direct = alignment_residual(&eig, 1, 1, t, phi).unwrap();
            assert!((expr - direct).abs() < 1e-10);
        }
    }
}
