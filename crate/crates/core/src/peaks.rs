//! Local maxima of sampled transfer probabilities.

use serde::{Deserialize, Serialize};

use crate::dynamics::ProbabilitySeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub time: f64,
    pub probability: f64,
    /// Whether the three-point parabola refinement was applied.
    pub refined: bool,
}

/// Vertex of the parabola through three samples, if it lies within the bracket.
fn parabola_vertex(t: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
    if h0 <= 0.0 || h1 <= 0.0 {
        return None;
    }
    // Divided differences of the Lagrange interpolant.
    let d01 = (y[1] - y[0]) / h0;
    let d12 = (y[2] - y[1]) / h1;
    let curvature = (d12 - d01) / (t[2] - t[0]);
    if !(curvature < 0.0) {
        return None;
    }
    // p(s) = y1 + b (s - t1) + curvature (s - t1)^2, with b the slope at t1.
    let b = d01 + curvature * h0;
    let offset = -b / (2.0 * curvature);
    if offset < -h0 || offset > h1 {
        return None;
    }
    Some((t[1] + offset, y[1] - b * b / (4.0 * curvature)))
}

/// Local maxima whose (refined) probability exceeds `threshold`, sorted by time.
///
/// A sample is a local maximum if it is strictly above its left neighbour and
/// not below its right neighbour. Endpoints are never reported.
pub fn find_peaks(series: &ProbabilitySeries, threshold: f64) -> Vec<Peak> {
    let (t, y) = (&series.times, &series.values);
    let mut peaks = Vec::new();
    for i in 1..t.len().saturating_sub(1) {
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        let peak = match parabola_vertex([t[i - 1], t[i], t[i + 1]], [y[i - 1], y[i], y[i + 1]]) {
            Some((time, p)) => Peak {
                time,
                probability: p.clamp(0.0, 1.0),
                refined: true,
            },
            None => Peak {
                time: t[i],
                probability: y[i],
                refined: false,
            },
        };
        if peak.probability > threshold && peak.time > 0.0 {
            peaks.push(peak);
        }
    }
    peaks.sort_by(|a, b| a.time.total_cmp(&b.time));
    peaks
}
