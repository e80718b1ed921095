//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The two-loop recursion follows Nocedal (1980); the line search is the
//! bracketing/zoom scheme of Nocedal & Wright, *Numerical Optimization*,
//! algorithms 3.5 and 3.6, with safeguarded cubic interpolation.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    /// Number of correction pairs kept.
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the gradient's Euclidean norm drops below this.
    pub grad_tol: f64,
    /// Stop when `(f_prev − f) / max(|f_prev|, |f|, 1)` drops below this.
    pub rel_decrease_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search_evals: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 2000,
            grad_tol: 1e-9,
            rel_decrease_tol: 1e-12,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_evals: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientNorm,
    RelativeDecrease,
    MaxIterations,
    LineSearchFailed,
    /// The objective could not be evaluated at the starting point.
    InvalidStart,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::GradientNorm | Termination::RelativeDecrease
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Sample {
    alpha: f64,
    f: f64,
    slope: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

struct LineSearch<'a, F> {
    func: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    opts: &'a LbfgsOptions,
    evals: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    fn sample(&mut self, alpha: f64) -> Sample {
        self.evals += 1;
        let x: Vec<f64> = self
            .x
            .iter()
            .zip(self.dir)
            .map(|(xi, di)| xi + alpha * di)
            .collect();
        match (self.func)(&x) {
            Some((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let slope = dot(&g, self.dir);
                Sample {
                    alpha,
                    f,
                    slope,
                    x,
                    g,
                }
            }
            _ => Sample {
                alpha,
                f: f64::INFINITY,
                slope: f64::NAN,
                x,
                g: Vec::new(),
            },
        }
    }

    fn armijo_fails(&self, s: &Sample) -> bool {
        !(s.f <= self.f0 + self.opts.c1 * s.alpha * self.slope0)
    }

    fn curvature_holds(&self, s: &Sample) -> bool {
        s.slope.abs() <= -self.opts.c2 * self.slope0
    }

    fn budget_left(&self) -> bool {
        self.evals < self.opts.max_line_search_evals
    }

    /// Returns an accepted sample, or the best sufficient-decrease sample seen
    /// if the Wolfe conditions could not be met, or `None`.
    fn run(&mut self, alpha_init: f64) -> Option<Sample> {
        let mut prev = Sample {
            alpha: 0.0,
            f: self.f0,
            slope: self.slope0,
            x: Vec::new(),
            g: Vec::new(),
        };
        let mut alpha = alpha_init;
        let mut first = true;
        while self.budget_left() {
            let cur = self.sample(alpha);
            if self.armijo_fails(&cur) || (!first && cur.f >= prev.f) {
                return self.zoom(prev, cur);
            }
            if self.curvature_holds(&cur) {
                return Some(cur);
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            first = false;
            alpha = cur.alpha * 2.0;
            prev = cur;
        }
        (prev.alpha > 0.0).then_some(prev)
    }

    fn zoom(&mut self, mut lo: Sample, mut hi: Sample) -> Option<Sample> {
        while self.budget_left() {
            let width = hi.alpha - lo.alpha;
            if width.abs() <= 1e-16 * lo.alpha.abs().max(1.0) {
                break;
            }
            let alpha = cubic_minimizer(&lo, &hi)
                .filter(|a| {
                    let (a0, a1) = if lo.alpha < hi.alpha {
                        (lo.alpha, hi.alpha)
                    } else {
                        (hi.alpha, lo.alpha)
                    };
                    let margin = 0.1 * (a1 - a0);
                    *a > a0 + margin && *a < a1 - margin
                })
                .unwrap_or(lo.alpha + 0.5 * width);
            let cur = self.sample(alpha);
            if self.armijo_fails(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature_holds(&cur) {
                    return Some(cur);
                }
                if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        // `lo` always satisfies sufficient decrease; accept it if it moved.
        (lo.alpha > 0.0).then_some(lo)
    }
}

/// Minimizer of the cubic matching values and slopes at both ends.
fn cubic_minimizer(a: &Sample, b: &Sample) -> Option<f64> {
    if !(a.f.is_finite() && b.f.is_finite() && a.slope.is_finite() && b.slope.is_finite()) {
        return None;
    }
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let denom = b.slope - a.slope + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let alpha = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
    alpha.is_finite().then_some(alpha)
}

/// Minimizes `func` from `x0`. `func` returns the value and gradient, or
/// `None` where it cannot be evaluated. Accepted iterates never increase the
/// objective.
pub fn minimize<F>(mut func: F, x0: &[f64], opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let mut evaluations = 1;
    let (mut f, mut g) = match func(&x) {
        Some((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => (f, g),
        _ => {
            return LbfgsResult {
                x,
                f: f64::NAN,
                grad_norm: f64::NAN,
                iterations: 0,
                evaluations,
                termination: Termination::InvalidStart,
            }
        }
    };
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;

    let termination = loop {
        let gnorm = norm(&g);
        if gnorm < opts.grad_tol {
            break Termination::GradientNorm;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }

        let mut dir = two_loop_direction(&g, &history);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let alpha_init = if history.is_empty() {
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };

        let mut search = LineSearch {
            func: &mut func,
            x: &x,
            dir: &dir,
            f0: f,
            slope0: slope,
            opts,
            evals: 0,
        };
        let accepted = search.run(alpha_init);
        evaluations += search.evals;
        let Some(step) = accepted else {
            if !history.is_empty() {
                // Retry once along steepest descent before giving up.
                history.clear();
                continue;
            }
            break Termination::LineSearchFailed;
        };

        iterations += 1;
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let f_prev = f;
        x = step.x;
        f = step.f;
        g = step.g;
        if (f_prev - f) / f_prev.abs().max(f.abs()).max(1.0) <= opts.rel_decrease_tol {
            break Termination::RelativeDecrease;
        }
    };

    LbfgsResult {
        grad_norm: norm(&g),
        x,
        f,
        iterations,
        evaluations,
        termination,
    }
}

fn two_loop_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}
