//! Empirical summaries, KS distance to a centered normal and the
//! mean-absolute ratio against `sqrt(2/pi)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::normal_cdf;
use crate::summation::NeumaierSum;

/// Probability levels reported in every summary.
pub const QUANTILE_LEVELS: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];

/// `sqrt(2/pi)`, the mean absolute value of a standard normal.
pub const MEAN_ABS_NORMAL: f64 = 0.797_884_560_802_865_4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

/// Frequency of `|x| >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub threshold: f64,
    pub frequency: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub count: usize,
    pub mean: f64,
    pub mean_abs: f64,
    pub variance: f64,
    pub quantiles: Vec<Quantile>,
    pub exceedances: Vec<Exceedance>,
    pub stderr_mean: f64,
    pub stderr_mean_abs: f64,
    pub stderr_variance: f64,
}

impl EmpiricalSummary {
    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.quantiles.iter().find(|q| q.level == level).map(|q| q.value)
    }

    pub fn exceedance(&self, threshold: f64) -> Option<&Exceedance> {
        self.exceedances.iter().find(|e| e.threshold == threshold)
    }
}

fn mean_of(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<NeumaierSum>().value() / n as f64
}

/// Linear interpolation between order statistics (`(n-1) p` rule).
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 { sorted[lo] } else { sorted[lo] + frac * (sorted[hi] - sorted[lo]) }
}

/// `summarize`, with exceedance frequencies at each of `thresholds`.
pub fn summarize(samples: &[f64], thresholds: &[f64]) -> Result<EmpiricalSummary> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    // sorted order makes every sum below independent of input order
    let nf = n as f64;
    let mean = mean_of(sorted.iter().copied(), n);
    let mean_abs = mean_of(sorted.iter().map(|x| x.abs()), n);
    let m2 = mean_of(sorted.iter().map(|x| (x - mean).powi(2)), n);
    let m4 = mean_of(sorted.iter().map(|x| (x - mean).powi(4)), n);
    let variance = m2 * nf / (nf - 1.0);
    let abs_var = mean_of(sorted.iter().map(|x| (x.abs() - mean_abs).powi(2)), n);
    let quantiles = QUANTILE_LEVELS.iter().map(|&level| Quantile { level, value: sorted_quantile(&sorted, level) }).collect();
    let exceedances = thresholds
        .iter()
        .map(|&threshold| {
            let hits = sorted.iter().filter(|x| x.abs() >= threshold).count() as f64;
            let frequency = hits / nf;
            Exceedance { threshold, frequency, stderr: (frequency * (1.0 - frequency) / nf).sqrt() }
        })
        .collect();
    Ok(EmpiricalSummary {
        count: n,
        mean,
        mean_abs,
        variance,
        quantiles,
        exceedances,
        stderr_mean: (variance / nf).sqrt(),
        stderr_mean_abs: (abs_var / nf).sqrt(),
        stderr_variance: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub sigma: f64,
    pub count: usize,
}

/// `sup_x |F_n(x) - Phi(x / sigma)|`, evaluated on both
/// sides of every jump.
pub fn ks_distance_to_normal(samples: &[f64], sigma: f64) -> Result<KsResult> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::DegenerateSigma(sigma));
    }
    let n = samples.len();
    if n < 10 {
        return Err(Error::TooFewSamples { got: n, need: 10 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < n {
        // ties form a single jump
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let cdf = normal_cdf(sorted[i] / sigma);
        d = d.max((cdf - i as f64 / nf).abs()).max(((j + 1) as f64 / nf - cdf).abs());
        i = j + 1;
    }
    Ok(KsResult { statistic: d.min(1.0), sigma, count: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanAbsRatio {
    pub ratio: f64,
    pub stderr: f64,
}

impl MeanAbsRatio {
    /// Distance to `sqrt(2/pi)` in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.ratio - MEAN_ABS_NORMAL) / self.stderr
    }
}

/// `mean|x| / sigma` with its standard error.
pub fn mean_abs_ratio(samples: &[f64], sigma: f64) -> Result<MeanAbsRatio> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::DegenerateSigma(sigma));
    }
    let s = summarize(samples, &[])?;
    Ok(MeanAbsRatio { ratio: s.mean_abs / sigma, stderr: s.stderr_mean_abs / sigma })
}
