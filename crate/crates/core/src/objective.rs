//! Infidelity `1 − p(t)` as a smooth function of an unconstrained parameter
//! vector, with its exact gradient.
//!
//! The bias derivative of `exp(-itH)` is taken through the spectral
//! representation. With `H = V Λ Vᵀ` and `∂H/∂Δ_k = e_k e_kᵀ`,
//!
//! ```text
//!   ∂U/∂Δ_k = V (Γ ∘ (Vᵀ e_k e_kᵀ V)) Vᵀ,
//!   Γ_mn = (e^{-itλ_m} − e^{-itλ_n}) / (λ_m − λ_n),   Γ_mm = −it e^{-itλ_m}.
//! ```
//!
//! `Γ_mn` is evaluated as `−it e^{-itσ} sinc(tδ)` with `σ` the mean and `δ`
//! the half-gap of the pair, which equals the divided difference without
//! cancellation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{amplitude_unchecked, eigendecompose, EigenSystem};
use crate::error::{invalid, Result};
use crate::network::{build_reduced_hamiltonian, BiasVector};
use crate::problem::{Bounds, TimeMode, TransferProblem};

/// Relative gap below which two eigenvalues are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Raw optimizer coordinates: bias parameters first, then the time parameter
/// when the time is optimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub infidelity: f64,
    pub gradient: Vec<f64>,
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn softplus_inverse(y: f64) -> f64 {
    // y + ln(1 − e^{-y})
    y + (-(-y).exp_m1()).ln()
}

fn logit(u: f64) -> f64 {
    let u = u.clamp(1e-15, 1.0 - 1e-15);
    (u / (1.0 - u)).ln()
}

/// Precomputed mapping between raw parameters and `(Δ, t)`.
#[derive(Debug, Clone)]
pub struct Parameterization {
    orbits: Vec<Vec<usize>>,
    bounds: Option<Bounds>,
    time_mode: TimeMode,
    size: usize,
}

impl Parameterization {
    pub fn new(problem: &TransferProblem) -> Self {
        Self {
            orbits: problem.bias_orbits(),
            bounds: problem.constraint.bounds,
            time_mode: problem.time_mode,
            size: problem.spec.size(),
        }
    }

    pub fn bias_dim(&self) -> usize {
        self.orbits.len()
    }

    pub fn dim(&self) -> usize {
        self.orbits.len() + usize::from(self.time_mode.is_optimized())
    }

    pub fn orbits(&self) -> &[Vec<usize>] {
        &self.orbits
    }

    fn check_len(&self, params: &ParameterVector) -> Result<()> {
        if params.len() != self.dim() {
            return invalid(format!(
                "expected {} parameters, got {}",
                self.dim(),
                params.len()
            ));
        }
        if params.0.iter().any(|v| !v.is_finite()) {
            return invalid("parameters must be finite");
        }
        Ok(())
    }

    fn bias_value(&self, raw: f64) -> (f64, f64) {
        match self.bounds {
            Some(Bounds { lo, hi }) => {
                let s = logistic(raw);
                (lo + (hi - lo) * s, (hi - lo) * s * (1.0 - s))
            }
            None => (raw, 1.0),
        }
    }

    fn time_value(&self, raw: Option<f64>) -> (f64, f64) {
        match (self.time_mode, raw) {
            (TimeMode::Fixed { t }, _) => (t, 0.0),
            (TimeMode::Free, Some(r)) => (softplus(r), logistic(r)),
            (TimeMode::Bounded { t_max }, Some(r)) => {
                let s = logistic(r);
                (t_max * s, t_max * s * (1.0 - s))
            }
            _ => unreachable!("length checked"),
        }
    }

    /// Maps raw parameters to a full bias vector and transfer time.
    pub fn decode(&self, params: &ParameterVector) -> Result<(BiasVector, f64)> {
        self.check_len(params)?;
        let (bias, t, _, _) = self.decode_with_jacobian(params);
        Ok((BiasVector::new(bias)?, t))
    }

    /// Decoded biases and time plus the diagonal Jacobian factors
    /// `dΔ/draw` per orbit and `dt/draw`.
    fn decode_with_jacobian(&self, params: &ParameterVector) -> (Vec<f64>, f64, Vec<f64>, f64) {
        let raw = params.as_slice();
        let mut bias = vec![0.0; self.size];
        let mut jac = Vec::with_capacity(self.orbits.len());
        for (orbit, &r) in self.orbits.iter().zip(raw) {
            let (value, d) = self.bias_value(r);
            for &node in orbit {
                bias[node - 1] = value;
            }
            jac.push(d);
        }
        let (t, dt) = self.time_value(raw.get(self.orbits.len()).copied());
        (bias, t, jac, dt)
    }

    /// Inverse of [`decode`](Self::decode) on feasible points. Symmetric
    /// parameterizations read each orbit's smallest node; boxed biases on the
    /// boundary map to large finite raw values.
    pub fn encode(&self, bias: &BiasVector, t: f64) -> Result<ParameterVector> {
        if bias.len() != self.size {
            return invalid(format!(
                "bias has {} entries, expected {}",
                bias.len(),
                self.size
            ));
        }
        let mut raw: Vec<f64> = self
            .orbits
            .iter()
            .map(|orbit| {
                let v = bias.at(orbit[0]);
                match self.bounds {
                    Some(Bounds { lo, hi }) => logit((v - lo) / (hi - lo)),
                    None => v,
                }
            })
            .collect();
        match self.time_mode {
            TimeMode::Fixed { .. } => {}
            TimeMode::Free => {
                if !(t > 0.0) {
                    return invalid(format!("free time must be positive, got {t}"));
                }
                raw.push(softplus_inverse(t));
            }
            TimeMode::Bounded { t_max } => raw.push(logit(t / t_max)),
        }
        Ok(ParameterVector(raw))
    }
}

pub fn decode(params: &ParameterVector, problem: &TransferProblem) -> Result<(BiasVector, f64)> {
    Parameterization::new(problem).decode(params)
}

pub fn encode(bias: &BiasVector, t: f64, problem: &TransferProblem) -> Result<ParameterVector> {
    Parameterization::new(problem).encode(bias, t)
}

/// Transfer probability and its exact derivatives with respect to every
/// on-site bias and the time.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferGradient {
    pub probability: f64,
    pub d_bias: Vec<f64>,
    pub d_time: f64,
}

/// Divided differences of `λ ↦ exp(-itλ)` over all eigenvalue pairs.
fn divided_difference_kernel(values: &[f64], t: f64) -> Vec<Complex64> {
    let n = values.len();
    let mut kernel = vec![Complex64::new(0.0, 0.0); n * n];
    let minus_it = Complex64::new(0.0, -t);
    for m in 0..n {
        for k in 0..n {
            let (lm, lk) = (values[m], values[k]);
            let entry = if (lm - lk).abs() < DEGENERACY_TOL * lm.abs().max(1.0) {
                minus_it * Complex64::from_polar(1.0, -t * lm)
            } else {
                let half_gap = 0.5 * (lm - lk);
                let x = t * half_gap;
                let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                minus_it * Complex64::from_polar(sinc, -t * 0.5 * (lm + lk))
            };
            kernel[m * n + k] = entry;
        }
    }
    kernel
}

pub fn transfer_gradient(
    eig: &EigenSystem,
    input: usize,
    output: usize,
    t: f64,
) -> Result<TransferGradient> {
    eig.check_node(input)?;
    eig.check_node(output)?;
    Ok(transfer_gradient_unchecked(eig, input, output, t))
}

fn transfer_gradient_unchecked(
    eig: &EigenSystem,
    input: usize,
    output: usize,
    t: f64,
) -> TransferGradient {
    let n = eig.dim();
    let v = eig.vectors();
    let lambda = eig.values();
    let (i0, o0) = (input - 1, output - 1);

    let amp = amplitude_unchecked(eig, input, output, t);
    let conj_amp = amp.conj();

    let d_amp_dt: Complex64 = (0..n)
        .map(|m| {
            Complex64::new(0.0, -lambda[m])
                * Complex64::from_polar(v[(o0, m)] * v[(i0, m)], -t * lambda[m])
        })
        .sum();

    let kernel = divided_difference_kernel(lambda, t);
    // w_k[m] = Σ_j Γ_mj V[k,j] V[in,j]; ∂a/∂Δ_k = Σ_m V[out,m] V[k,m] w_k[m].
    let mut d_bias = Vec::with_capacity(n);
    let mut scratch = vec![0.0; n];
    for k in 0..n {
        for j in 0..n {
            scratch[j] = v[(k, j)] * v[(i0, j)];
        }
        let mut d_amp = Complex64::new(0.0, 0.0);
        for m in 0..n {
            let left = v[(o0, m)] * v[(k, m)];
            if left == 0.0 {
                continue;
            }
            let row = &kernel[m * n..(m + 1) * n];
            let inner: Complex64 = row.iter().zip(&scratch).map(|(g, &s)| g * s).sum();
            d_amp += inner * left;
        }
        d_bias.push(2.0 * (conj_amp * d_amp).re);
    }

    TransferGradient {
        probability: amp.norm_sqr(),
        d_bias,
        d_time: 2.0 * (conj_amp * d_amp_dt).re,
    }
}

/// Evaluates `1 − p(t)` and its gradient with respect to the raw parameters.
pub struct Objective {
    problem: TransferProblem,
    param: Parameterization,
}

impl Objective {
    pub fn new(problem: &TransferProblem) -> Self {
        Self {
            problem: problem.clone(),
            param: Parameterization::new(problem),
        }
    }

    pub fn problem(&self) -> &TransferProblem {
        &self.problem
    }

    pub fn parameterization(&self) -> &Parameterization {
        &self.param
    }

    pub fn dim(&self) -> usize {
        self.param.dim()
    }

    pub fn infidelity(&self, params: &ParameterVector) -> Result<f64> {
        self.param.check_len(params)?;
        let (bias, t, _, _) = self.param.decode_with_jacobian(params);
        let h = build_reduced_hamiltonian(&self.problem.spec, &BiasVector::new(bias)?)?;
        let eig = eigendecompose(&h)?;
        let p =
            amplitude_unchecked(&eig, self.problem.in_node, self.problem.out_node, t).norm_sqr();
        Ok((1.0 - p).clamp(0.0, 1.0))
    }

    pub fn evaluate(&self, params: &ParameterVector) -> Result<ObjectiveValue> {
        self.param.check_len(params)?;
        let (bias, t, jac, dt) = self.param.decode_with_jacobian(params);
        let h = build_reduced_hamiltonian(&self.problem.spec, &BiasVector::new(bias)?)?;
        let eig = eigendecompose(&h)?;
        let g = transfer_gradient_unchecked(&eig, self.problem.in_node, self.problem.out_node, t);

        let mut gradient: Vec<f64> = self
            .param
            .orbits
            .iter()
            .zip(&jac)
            .map(|(orbit, &d)| -d * orbit.iter().map(|&node| g.d_bias[node - 1]).sum::<f64>())
            .collect();
        if self.problem.time_mode.is_optimized() {
            gradient.push(-dt * g.d_time);
        }
        Ok(ObjectiveValue {
            infidelity: (1.0 - g.probability).clamp(0.0, 1.0),
            gradient,
        })
    }
}

pub fn infidelity_and_gradient(
    params: &ParameterVector,
    problem: &TransferProblem,
) -> Result<ObjectiveValue> {
    Objective::new(problem).evaluate(params)
}

/// Minimum over the global phase `φ` of
/// `Σ_n |V[out,n] − e^{i(tλ_n − φ)} V[in,n]|²`, with the minimizing phase.
///
/// Writing `A = Σ_n V[out,n] e^{itλ_n} V[in,n]`, the minimum is `2 − 2|A|`
/// at `φ = arg A`, and `|A|² = p(t)`.
pub fn eq3_residual(eig: &EigenSystem, input: usize, output: usize, t: f64) -> Result<(f64, f64)> {
    eig.check_node(input)?;
    eig.check_node(output)?;
    let a = amplitude_unchecked(eig, input, output, t).conj();
    Ok((2.0 - 2.0 * a.norm(), a.arg()))
}

/// `Σ_n |V[out,n] − e^{i(tλ_n − φ)} V[in,n]|²` evaluated term by term.
pub fn alignment_residual(
    eig: &EigenSystem,
    input: usize,
    output: usize,
    t: f64,
    phase: f64,
) -> Result<f64> {
    eig.check_node(input)?;
    eig.check_node(output)?;
    Ok((0..eig.dim())
        .map(|n| {
            let rotated =
                Complex64::from_polar(eig.component(input, n), t * eig.values()[n] - phase);
            (Complex64::new(eig.component(output, n), 0.0) - rotated).norm_sqr()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::transfer_probability;
    use crate::network::NetworkSpec;
    use crate::problem::{symmetry_pairs, BiasConstraint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, SQRT_2};

    fn ring_problem(
        n: usize,
        k: usize,
        time_mode: TimeMode,
        constraint: BiasConstraint,
    ) -> TransferProblem {
        TransferProblem::new(NetworkSpec::ring(n).unwrap(), 1, k, time_mode, constraint).unwrap()
    }

    fn central_difference(obj: &Objective, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut plus = x.to_vec();
                let mut minus = x.to_vec();
                plus[i] += h;
                minus[i] -= h;
                let fp = obj.infidelity(&ParameterVector(plus)).unwrap();
                let fm = obj.infidelity(&ParameterVector(minus)).unwrap();
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn symmetric_decode_replicates_orbits() {
        let problem = ring_problem(13, 5, TimeMode::Fixed { t: 1.0 }, BiasConstraint::SYMMETRIC);
        let raw: Vec<f64> = (1..=7).map(|i| i as f64).collect();
        let (bias, t) = decode(&ParameterVector(raw), &problem).unwrap();
        assert_eq!(t, 1.0);
        for orbit in symmetry_pairs(13, 5).unwrap() {
            assert!(orbit.iter().all(|&j| bias.at(j) == bias.at(orbit[0])));
        }
        assert_eq!(bias.at(1), bias.at(5));
        assert_eq!(bias.at(6), bias.at(13));
    }

    #[test]
    fn box_decode_midpoint_and_identity_decode() {
        let boxed = ring_problem(
            5,
            2,
            TimeMode::Fixed { t: 1.0 },
            BiasConstraint::boxed(0.0, 100.0),
        );
        let (bias, _) = decode(&ParameterVector(vec![0.0; 5]), &boxed).unwrap();
        assert!(bias.values().iter().all(|&v| v == 50.0));

        let free = ring_problem(
            5,
            2,
            TimeMode::Fixed { t: 1.0 },
            BiasConstraint::UNCONSTRAINED,
        );
        let raw = vec![0.3, -2.0, 7.5, 0.0, 1e3];
        let (bias, _) = decode(&ParameterVector(raw.clone()), &free).unwrap();
        assert_eq!(bias.values(), raw.as_slice());
    }

    #[test]
    fn decode_length_mismatch() {
        let problem = ring_problem(5, 2, TimeMode::Free, BiasConstraint::UNCONSTRAINED);
        assert!(decode(&ParameterVector(vec![0.0; 5]), &problem).is_err());
        assert!(decode(&ParameterVector(vec![0.0; 6]), &problem).is_ok());
    }

    #[test]
    fn encode_inverts_decode() {
        let modes = [
            TimeMode::Free,
            TimeMode::Bounded { t_max: 40.0 },
            TimeMode::Fixed { t: 2.0 },
        ];
        let constraints = [
            BiasConstraint::UNCONSTRAINED,
            BiasConstraint::SYMMETRIC,
            BiasConstraint::boxed(-3.0, 9.0),
            BiasConstraint::symmetric_boxed(0.0, 100.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in modes {
            for c in constraints {
                let problem = ring_problem(9, 4, mode, c);
                let p = Parameterization::new(&problem);
                let raw = ParameterVector((0..p.dim()).map(|_| rng.gen_range(-4.0..4.0)).collect());
                let (bias, t) = p.decode(&raw).unwrap();
                let back = p.encode(&bias, t).unwrap();
                assert!(max_abs_diff(&raw.0, &back.0) < 1e-9, "{mode:?} {c:?}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &n in &[5usize, 9, 13] {
            for constraint in [
                BiasConstraint::UNCONSTRAINED,
                BiasConstraint::symmetric_boxed(0.0, 10.0),
            ] {
                let problem = ring_problem(n, 1 + n / 3, TimeMode::Free, constraint);
                let obj = Objective::new(&problem);
                let x: Vec<f64> = (0..obj.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let exact = obj.evaluate(&ParameterVector(x.clone())).unwrap().gradient;
                let fd = central_difference(&obj, &x, 1e-5);
                let scale = exact.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-3);
                assert!(
                    max_abs_diff(&exact, &fd) / scale < 1e-6,
                    "n={n}: {exact:?} vs {fd:?}"
                );
            }
        }
    }

    #[test]
    fn degenerate_unbiased_ring_gradient() {
        // The unbiased ring has exactly degenerate eigenvalue pairs.
        let problem = ring_problem(
            8,
            3,
            TimeMode::Fixed { t: 2.3 },
            BiasConstraint::UNCONSTRAINED,
        );
        let obj = Objective::new(&problem);
        let x = vec![0.0; 8];
        let exact = obj.evaluate(&ParameterVector(x.clone())).unwrap().gradient;
        let fd = central_difference(&obj, &x, 1e-5);
        assert!(max_abs_diff(&exact, &fd) < 1e-8, "{exact:?} vs {fd:?}");
    }

    #[test]
    fn perfect_transfer_is_stationary() {
        let problem = TransferProblem::new(
            NetworkSpec::chain(3).unwrap(),
            1,
            3,
            TimeMode::Fixed { t: PI / SQRT_2 },
            BiasConstraint::UNCONSTRAINED,
        )
        .unwrap();
        let v = infidelity_and_gradient(&ParameterVector(vec![0.0; 3]), &problem).unwrap();
        assert!(v.infidelity < 1e-10);
        let norm = v.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "{:?}", v.gradient);
    }

    #[test]
    fn uniform_shift_is_invisible() {
        let problem = ring_problem(
            7,
            3,
            TimeMode::Fixed { t: 3.1 },
            BiasConstraint::UNCONSTRAINED,
        );
        let obj = Objective::new(&problem);
        let x = vec![0.4, -1.0, 2.2, 0.0, 0.7, 1.3, -0.2];
        let shifted: Vec<f64> = x.iter().map(|v| v + 3.7).collect();
        let a = obj.evaluate(&ParameterVector(x)).unwrap();
        let b = obj.evaluate(&ParameterVector(shifted)).unwrap();
        assert!((a.infidelity - b.infidelity).abs() < 1e-12);
        assert!(a.gradient.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn eq3_residual_identity() {
        let spec = NetworkSpec::ring(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let bias = BiasVector::new((0..9).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
            let eig = eigendecompose(&build_reduced_hamiltonian(&spec, &bias).unwrap()).unwrap();
            let t = rng.gen_range(0.0..20.0);
            let (res, phase) = eq3_residual(&eig, 1, 4, t).unwrap();
            let p = transfer_probability(&eig, 1, 4, t).unwrap();
            assert!((res - (2.0 - 2.0 * p.sqrt())).abs() < 1e-10);
            // The closed-form phase attains the minimum of the explicit sum.
            let direct = alignment_residual(&eig, 1, 4, t, phase).unwrap();
            assert!((direct - res).abs() < 1e-10);
            for dphi in [-0.3, 0.1, 1.0] {
                assert!(alignment_residual(&eig, 1, 4, t, phase + dphi).unwrap() >= res - 1e-12);
            }
        }
    }

    #[test]
    fn eq3_residual_special_points() {
        let eig = eigendecompose(
            &build_reduced_hamiltonian(&NetworkSpec::chain(3).unwrap(), &BiasVector::zeros(3))
                .unwrap(),
        )
        .unwrap();
        let (res, phase) = eq3_residual(&eig, 1, 3, PI / SQRT_2).unwrap();
        assert!(res < 1e-8);
        for n in 0..3 {
            let rotated =
                Complex64::from_polar(eig.component(1, n), PI / SQRT_2 * eig.values()[n] - phase);
            assert!((rotated - eig.component(3, n)).norm() < 1e-7);
        }
        let (res0, _) = eq3_residual(&eig, 1, 3, 0.0).unwrap();
        assert!((res0 - 2.0).abs() < 1e-14);
    }
}
