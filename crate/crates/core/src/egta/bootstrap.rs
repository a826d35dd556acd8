use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EgtaError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub n: usize,
    pub resamples: usize,
    pub level: f64,
    pub sample_mean: f64,
    /// Mean of the resample means.
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Distribution of the resample means.
    pub histogram: Vec<HistogramBin>,
    /// Number of distinct sample values.
    pub effective_size: usize,
}

const BINS: usize = 20;

/// Percentile bootstrap of the mean.
pub fn bootstrap_estimate<R: Rng + ?Sized>(
    samples: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<BootstrapSummary, EgtaError> {
    if samples.is_empty() {
        return Err(EgtaError::Invalid("no samples to bootstrap".into()));
    }
    if resamples < 1 {
        return Err(EgtaError::Invalid("at least one resample is needed".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EgtaError::Invalid(format!("confidence level {level} outside (0, 1)")));
    }
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| shifted_mean((0..n).map(|_| samples[rng.random_range(0..n)]), samples[0], n))
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = ((tail * resamples as f64).floor() as usize).min(resamples - 1);
    let hi = ((((1.0 - tail) * resamples as f64).ceil() as usize).max(1) - 1).min(resamples - 1);

    let mut distinct = samples.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    Ok(BootstrapSummary {
        n,
        resamples,
        level,
        sample_mean: shifted_mean(samples.iter().copied(), samples[0], n),
        mean: shifted_mean(means.iter().copied(), means[0], resamples),
        ci_low: means[lo],
        ci_high: means[hi],
        histogram: histogram(&means),
        effective_size: distinct.len(),
    })
}

/// `shift + mean(x - shift)`; exact when every value equals `shift`.
fn shifted_mean(values: impl Iterator<Item = f64>, shift: f64, n: usize) -> f64 {
    shift + values.map(|v| v - shift).sum::<f64>() / n as f64
}

fn histogram(sorted: &[f64]) -> Vec<HistogramBin> {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return vec![HistogramBin { lo, hi, count: sorted.len() }];
    }
    let width = (hi - lo) / BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..BINS)
        .map(|b| HistogramBin {
            lo: lo + width * b as f64,
            hi: if b + 1 == BINS { hi } else { lo + width * (b + 1) as f64 },
            count: 0,
        })
        .collect();
    for &v in sorted {
        let b = (((v - lo) / width) as usize).min(BINS - 1);
        bins[b].count += 1;
    }
    bins
}
