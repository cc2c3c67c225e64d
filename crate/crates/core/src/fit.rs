//! Log-log least-squares fits of residual decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedules::TauTable;

pub const MIN_WINDOW_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Inclusive x-range the fit used.
    pub window: (f64, f64),
    pub points: usize,
}

/// Fit log y = intercept + slope·log x over all pairs.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < MIN_WINDOW_POINTS {
        return Err(Error::InvalidInput(format!(
            "a rate fit needs at least {MIN_WINDOW_POINTS} points, got {}",
            xs.len()
        )));
    }
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if !(x > 0.0) || !(y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::NonpositiveValue { index: i });
        }
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::InvalidInput("rate fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RateFit {
        slope,
        intercept,
        r2,
        window: (lo, hi),
        points: xs.len(),
    })
}

/// Fit log series[n] against log n for n in the inclusive `window`.
pub fn fit_rate(series: &[f64], window: (usize, usize)) -> Result<RateFit> {
    let (lo, hi) = window;
    if lo == 0 || hi < lo || hi >= series.len() {
        return Err(Error::InvalidInput(format!(
            "window {lo}:{hi} must satisfy 1 <= lo <= hi < {}",
            series.len()
        )));
    }
    let xs: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
    fit_loglog(&xs, &series[lo..=hi]).map_err(|e| match e {
        Error::NonpositiveValue { index } => Error::NonpositiveValue { index: index + lo },
        other => other,
    })
}

/// The last decade of the horizon, started no earlier than the first n with
/// τ_n > 1/π so that σ is past its cap.
pub fn default_window(table: &TauTable, n_max: usize) -> (usize, usize) {
    let cap = 1.0 / std::f64::consts::PI;
    let first = (1..=n_max).find(|&n| table.tau(n) > cap).unwrap_or(n_max);
    let lo = (n_max / 10).max(first).max(1);
    (lo.min(n_max.saturating_sub(MIN_WINDOW_POINTS - 1)).max(1), n_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::StepSchedule;

    #[test]
    fn recovers_power_law() {
        let series: Vec<f64> = (0..200).map(|n| 3.0 * (n.max(1) as f64).powf(-0.75)).collect();
        let fit = fit_rate(&series, (10, 199)).unwrap();
        assert!((fit.slope + 0.75).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_has_zero_slope() {
        let fit = fit_loglog(&(1..=12).map(f64::from).collect::<Vec<_>>(), &[2.0; 12]).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn rejects_nonpositive_and_short_windows() {
        let mut s = vec![1.0; 30];
        s[17] = 0.0;
        assert!(matches!(fit_rate(&s, (5, 25)), Err(Error::NonpositiveValue { index: 17 })));
        assert!(fit_rate(&s, (1, 5)).is_err());
    }

    #[test]
    fn default_window_skips_plateau() {
        let table = StepSchedule::constant(0.5).unwrap().table(1000);
        assert_eq!(default_window(&table, 1000), (100, 1000));
        let table = StepSchedule::power(1.0).unwrap().table(50);
        let (lo, hi) = default_window(&table, 50);
        assert!(lo >= 5 && hi == 50);
    }
}
