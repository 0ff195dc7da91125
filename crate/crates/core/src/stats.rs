//! Small descriptive-statistics helpers.

use std::f64::consts::SQRT_2;

/// First four moments of a scalar sample. `kurtosis` is the plain (non-excess)
/// fourth standardized moment, so a Gaussian gives 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Moments with the `1/M` (population) normalization throughout.
pub fn moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    Moments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
    }
}

/// Weighted mean and variance for weights summing to one. Two-pass so that a
/// constant input gives a variance of exactly zero up to rounding.
pub fn weighted_mean_variance(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let var: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean) * (v - mean))
        .sum();
    (mean, var)
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Kolmogorov-Smirnov distance `sup |F_M - Phi|` against the standard normal.
pub fn ks_distance_normal(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let f = normal_cdf(*v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Standard errors of moment estimators from `batches` contiguous batches.
/// Used for autocorrelated chains.
pub fn batch_moment_errors(x: &[f64], batches: usize) -> Moments {
    let size = x.len() / batches;
    let per: Vec<Moments> = (0..batches).map(|b| moments(&x[b * size..(b + 1) * size])).collect();
    let se = |f: fn(&Moments) -> f64| {
        let vals: Vec<f64> = per.iter().map(f).collect();
        let m = moments(&vals);
        (m.variance * batches as f64 / (batches as f64 - 1.0) / batches as f64).sqrt()
    };
    Moments {
        mean: se(|m| m.mean),
        variance: se(|m| m.variance),
        skewness: se(|m| m.skewness),
        kurtosis: se(|m| m.kurtosis),
    }
}
