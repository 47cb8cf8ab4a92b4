//! Validation statistics over paired measured and simulated series.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::timeseries::interpolate;

/// Spacing of the common comparison grid (s).
pub const GRID_STEP: f64 = 60.0;

/// Measured values `y` paired with predictions `y_star`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedSeries {
    pub time: Vec<f64>,
    pub y: Vec<f64>,
    pub y_star: Vec<f64>,
}

impl PairedSeries {
    pub fn new(y: Vec<f64>, y_star: Vec<f64>) -> Result<Self> {
        let time = (0..y.len()).map(|i| i as f64 * GRID_STEP).collect();
        Self::with_time(time, y, y_star)
    }

    pub fn with_time(time: Vec<f64>, y: Vec<f64>, y_star: Vec<f64>) -> Result<Self> {
        if y.len() != y_star.len() || time.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "series lengths differ ({} measured, {} simulated)",
                y.len(),
                y_star.len()
            )));
        }
        if y.len() < 2 {
            return Err(Error::InvalidInput("at least two paired samples are needed".into()));
        }
        if y.iter().chain(&y_star).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in paired series".into()));
        }
        Ok(PairedSeries { time, y, y_star })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Resamples both series onto the 60 s grid points inside their overlap.
pub fn align(measured: &[(f64, f64)], simulated: &[(f64, f64)]) -> Result<PairedSeries> {
    let span = |s: &[(f64, f64)]| s.first().zip(s.last()).map(|(a, b)| (a.0, b.0));
    let (Some((m0, m1)), Some((s0, s1))) = (span(measured), span(simulated)) else {
        return Err(Error::Alignment("empty series".into()));
    };
    let start = m0.max(s0);
    let end = m1.min(s1);
    let first = (start / GRID_STEP).ceil() as i64;
    let last = (end / GRID_STEP).floor() as i64;
    if last - first < 1 {
        return Err(Error::Alignment(format!(
            "overlap [{start}, {end}] s holds fewer than two grid points"
        )));
    }
    let time: Vec<f64> = (first..=last).map(|k| k as f64 * GRID_STEP).collect();
    let y = time.iter().map(|&t| interpolate(measured, t)).collect();
    let y_star = time.iter().map(|&t| interpolate(simulated, t)).collect();
    PairedSeries::with_time(time, y, y_star)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Normalised root mean squared relative error, normalised by the measured range.
pub fn nrmsre(p: &PairedSeries) -> Result<f64> {
    let max = p.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = p.y.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if !(range > 0.0) {
        return Err(Error::DegenerateRange);
    }
    let sum: f64 = p.y.iter().zip(&p.y_star).map(|(y, s)| ((y - s) / range).powi(2)).sum();
    Ok((sum / p.len() as f64).sqrt())
}

/// Squared Pearson correlation between measured and simulated values.
pub fn r_squared(p: &PairedSeries) -> Result<f64> {
    let my = mean(&p.y);
    let ms = mean(&p.y_star);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (y, s) in p.y.iter().zip(&p.y_star) {
        let (dy, ds) = (y - my, s - ms);
        sxy += dy * ds;
        sxx += dy * dy;
        syy += ds * ds;
    }
    if !(sxx > 0.0) {
        return Err(Error::DegenerateVariance("measured".into()));
    }
    if !(syy > 0.0) {
        return Err(Error::DegenerateVariance("simulated".into()));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok((r * r).min(1.0))
}

/// Goodness of fit in percent; 100 for a perfect fit, unbounded below.
pub fn gof(p: &PairedSeries) -> Result<f64> {
    let my = mean(&p.y);
    let dev: f64 = p.y.iter().map(|y| (y - my).powi(2)).sum();
    if !(dev > 0.0) {
        return Err(Error::DegenerateVariance("measured".into()));
    }
    let res: f64 = p.y.iter().zip(&p.y_star).map(|(y, s)| (s - y).powi(2)).sum();
    Ok(100.0 * (1.0 - (res / dev).sqrt()))
}

/// Centred moving average over `window` samples, shortened at the ends.
pub fn rolling_mean(values: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return values.to_vec();
    }
    let before = (window - 1) / 2;
    let after = window - 1 - before;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(values.len());
            mean(&values[lo..hi])
        })
        .collect()
}
