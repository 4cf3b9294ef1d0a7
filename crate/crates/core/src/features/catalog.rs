//! Fixed catalog of 24 time-series features.
//!
//! Every feature is defined for any non-empty series. A constant series
//! (`min == max`) maps all dispersion, correlation, trend, entropy, shape
//! and spectral features to 0.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const TS_FEATURE_COUNT: usize = 24;

pub const TS_FEATURE_NAMES: [&str; TS_FEATURE_COUNT] = [
    "mean",
    "std",
    "median",
    "iqr",
    "min",
    "max",
    "acf_lag1",
    "acf_lag2",
    "first_acf_below_inv_e",
    "first_acf_below_zero",
    "trend_slope",
    "trend_r2",
    "mean_crossing_rate",
    "longest_run_above_mean",
    "longest_run_below_mean",
    "increase_fraction",
    "mean_abs_diff",
    "std_diff",
    "hist10_entropy",
    "hist5_mode_fraction",
    "skewness",
    "excess_kurtosis",
    "low_freq_power_fraction",
    "spectral_centroid",
];

/// Positions of features that are unchanged by `s -> a·s + b` with `a > 0`.
pub const AFFINE_INVARIANT: [usize; 13] = [6, 7, 8, 9, 11, 12, 13, 14, 15, 18, 19, 20, 21];
/// Spectral features, also affine invariant.
pub const SPECTRAL: [usize; 2] = [22, 23];

pub fn ts_feature_vector(series: &[f64]) -> Result<[f64; TS_FEATURE_COUNT]> {
    if series.is_empty() {
        return Err(Error::arg("time-series features need a non-empty series"));
    }
    let n = series.len();
    let nf = n as f64;
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[n - 1];
    let mean = series.iter().sum::<f64>() / nf;
    let median = quantile(&sorted, 0.5);

    let mut f = [0.0; TS_FEATURE_COUNT];
    f[0] = mean;
    f[2] = median;
    f[4] = min;
    f[5] = max;
    if min == max {
        f[19] = 1.0;
        return Ok(f);
    }

    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let m2 = dev.iter().map(|d| d * d).sum::<f64>() / nf;
    let m3 = dev.iter().map(|d| d * d * d).sum::<f64>() / nf;
    let m4 = dev.iter().map(|d| d * d * d * d).sum::<f64>() / nf;
    let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();

    f[1] = libm::sqrt(m2);
    f[3] = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    f[6] = autocorrelation(&dev, m2, 1);
    f[7] = autocorrelation(&dev, m2, 2);
    f[8] = first_lag_below(&dev, m2, core::f64::consts::E.recip());
    f[9] = first_lag_below(&dev, m2, 0.0);
    let (slope, r2) = linear_trend(series, mean);
    f[10] = slope;
    f[11] = r2;
    if n > 1 {
        let crossings = dev.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
        f[12] = crossings as f64 / (nf - 1.0);
        f[15] = diffs.iter().filter(|d| **d > 0.0).count() as f64 / (nf - 1.0);
        f[16] = diffs.iter().map(|d| libm::fabs(*d)).sum::<f64>() / (nf - 1.0);
        let dmean = diffs.iter().sum::<f64>() / (nf - 1.0);
        f[17] = libm::sqrt(diffs.iter().map(|d| (d - dmean) * (d - dmean)).sum::<f64>() / (nf - 1.0));
    }
    f[13] = longest_run(&dev, |d| d > 0.0) as f64 / nf;
    f[14] = longest_run(&dev, |d| d < 0.0) as f64 / nf;
    let hist10 = histogram(series, min, max, 10);
    f[18] = -hist10
        .iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / nf;
            p * libm::log(p)
        })
        .sum::<f64>();
    f[19] = *histogram(series, min, max, 5).iter().max().unwrap() as f64 / nf;
    if m2 > 0.0 {
        f[20] = m3 / libm::pow(m2, 1.5);
        f[21] = m4 / (m2 * m2) - 3.0;
    }
    let (low, centroid) = spectral(&dev);
    f[22] = low;
    f[23] = centroid;
    Ok(f)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Lag-`k` autocorrelation with a per-lag mean of products over the
/// population variance.
fn autocorrelation(dev: &[f64], var: f64, k: usize) -> f64 {
    let n = dev.len();
    if k >= n || var <= 0.0 {
        return 0.0;
    }
    let s: f64 = (0..n - k).map(|t| dev[t] * dev[t + k]).sum();
    s / (n - k) as f64 / var
}

/// First lag whose autocorrelation drops below `threshold`; the series
/// length if none does.
fn first_lag_below(dev: &[f64], var: f64, threshold: f64) -> f64 {
    (1..dev.len()).find(|&k| autocorrelation(dev, var, k) < threshold).unwrap_or(dev.len()) as f64
}

fn linear_trend(series: &[f64], mean: f64) -> (f64, f64) {
    let n = series.len();
    if n < 2 {
        return (0.0, 0.0);
    }
    let t_mean = (n - 1) as f64 / 2.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (t, y) in series.iter().enumerate() {
        let dt = t as f64 - t_mean;
        let dy = y - mean;
        sxy += dt * dy;
        sxx += dt * dt;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    (slope, r2)
}

fn longest_run(dev: &[f64], pred: impl Fn(f64) -> bool) -> usize {
    let mut best = 0;
    let mut cur = 0;
    for &d in dev {
        if pred(d) {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

fn histogram(series: &[f64], min: f64, max: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = max - min;
    for x in series {
        let idx = libm::floor((x - min) / width * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    counts
}

/// Periodogram of the demeaned series over frequencies `1..=n/2`: share of
/// power in the lowest fifth and the power-weighted mean frequency scaled
/// into `(0, 1]`.
fn spectral(dev: &[f64]) -> (f64, f64) {
    let n = dev.len();
    let k_max = n / 2;
    if k_max == 0 {
        return (0.0, 0.0);
    }
    let power: Vec<f64> = (1..=k_max)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, x) in dev.iter().enumerate() {
                let angle = -2.0 * core::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += x * libm::cos(angle);
                im += x * libm::sin(angle);
            }
            re * re + im * im
        })
        .collect();
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        return (0.0, 0.0);
    }
    let low_count = k_max.div_ceil(5);
    let low = power[..low_count].iter().sum::<f64>() / total;
    let centroid = power.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum::<f64>() / (total * k_max as f64);
    (low, centroid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(name: &str) -> usize {
        TS_FEATURE_NAMES.iter().position(|n| *n == name).unwrap()
    }

    #[test]
    fn constant_series_conventions() {
        let f = ts_feature_vector(&[3.0, 3.0, 3.0, 3.0]).unwrap();
        assert_eq!(f[idx("mean")], 3.0);
        assert_eq!(f[idx("median")], 3.0);
        assert_eq!(f[idx("min")], 3.0);
        assert_eq!(f[idx("max")], 3.0);
        for name in [
            "std",
            "iqr",
            "acf_lag1",
            "acf_lag2",
            "first_acf_below_inv_e",
            "first_acf_below_zero",
            "trend_slope",
            "trend_r2",
            "mean_abs_diff",
            "std_diff",
            "hist10_entropy",
            "skewness",
            "excess_kurtosis",
            "low_freq_power_fraction",
            "spectral_centroid",
        ] {
            assert_eq!(f[idx(name)], 0.0, "{name}");
        }
    }

    #[test]
    fn ramp_trend() {
        let ramp: Vec<f64> = (0..10).map(f64::from).collect();
        let f = ts_feature_vector(&ramp).unwrap();
        assert!((f[idx("trend_slope")] - 1.0).abs() <= 1e-9);
        assert!((f[idx("mean")] - 4.5).abs() <= 1e-12);
        assert!((f[idx("trend_r2")] - 1.0).abs() <= 1e-9);
        assert_eq!(f[idx("increase_fraction")], 1.0);
        assert_eq!(f[idx("mean_abs_diff")], 1.0);
        assert_eq!(f[idx("std_diff")], 0.0);
        assert!((f[idx("median")] - 4.5).abs() < 1e-12);
        assert!((f[idx("iqr")] - 4.5).abs() < 1e-12);
        assert_eq!(f[idx("longest_run_above_mean")], 0.5);
        assert_eq!(f[idx("mean_crossing_rate")], 1.0 / 9.0);
    }

    #[test]
    fn alternating_series_acf() {
        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let f = ts_feature_vector(&alt).unwrap();
        assert!((f[idx("acf_lag1")] + 1.0).abs() <= 1e-9);
        assert!((f[idx("acf_lag2")] - 1.0).abs() <= 1e-9);
        assert_eq!(f[idx("first_acf_below_zero")], 1.0);
        assert_eq!(f[idx("mean_crossing_rate")], 1.0);
        // all power sits at the Nyquist frequency
        assert!(f[idx("low_freq_power_fraction")].abs() < 1e-12);
        assert!((f[idx("spectral_centroid")] - 1.0).abs() < 1e-12);
        assert!(f[idx("skewness")].abs() < 1e-12);
        assert!((f[idx("excess_kurtosis")] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_features() {
        // two equally filled extreme bins
        let f = ts_feature_vector(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((f[idx("hist10_entropy")] - libm::log(2.0)).abs() < 1e-12);
        assert_eq!(f[idx("hist5_mode_fraction")], 0.5);
    }

    #[test]
    fn single_value_series() {
        let f = ts_feature_vector(&[2.5]).unwrap();
        assert_eq!(f[0], 2.5);
        assert_eq!(f[1], 0.0);
    }

    #[test]
    fn empty_series_rejected() {
        assert!(ts_feature_vector(&[]).is_err());
    }
}
