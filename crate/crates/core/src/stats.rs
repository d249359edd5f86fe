//! Estimates with uncertainty, and order-stable reductions.

use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Sim,
    Analytic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Sim => "sim",
            Provenance::Analytic => "analytic",
        }
    }
}

/// A probability with its uncertainty: a 95% normal-approximation CI
/// half-width for simulation, a quadrature error bound for analytic values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageEstimate {
    pub value: f64,
    pub half_width_95: f64,
    pub n_trials: u64,
    pub provenance: Provenance,
}

impl CoverageEstimate {
    pub fn from_counts(successes: u64, n_trials: u64) -> Self {
        if n_trials == 0 {
            return CoverageEstimate {
                value: 0.0,
                half_width_95: 0.0,
                n_trials,
                provenance: Provenance::Sim,
            };
        }
        let n = n_trials as f64;
        let p = successes as f64 / n;
        CoverageEstimate {
            value: p,
            half_width_95: Z95 * (p * (1.0 - p) / n).sqrt(),
            n_trials,
            provenance: Provenance::Sim,
        }
    }

    pub fn analytic(value: f64, error: f64) -> Self {
        CoverageEstimate {
            value,
            half_width_95: error,
            n_trials: 0,
            provenance: Provenance::Analytic,
        }
    }
}

/// Sample mean with a 95% CI half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n: u64,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanEstimate {
                mean: 0.0,
                half_width_95: 0.0,
                n: 0,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 {
            pairwise_sum(&sq) / (n as f64 - 1.0)
        } else {
            0.0
        };
        MeanEstimate {
            mean,
            half_width_95: Z95 * (var / n as f64).sqrt(),
            n: n as u64,
        }
    }
}

/// Pairwise (cascade) summation; the result depends only on the slice
/// order, never on how the slice was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
