//! Power-law fits by weighted least squares on `(log n, log estimate)`.

use serde::{Deserialize, Serialize};

use crate::asymptotics::series::ScalingSeries;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% interval for the slope.
    pub ci95: f64,
    pub r2: f64,
    pub points: usize,
}

impl SlopeFit {
    /// `intercept + slope * log n`.
    pub fn predict_log(&self, n: f64) -> f64 {
        self.intercept + self.slope * n.ln()
    }
}

/// Fit of `log y = intercept + slope * log n`. Weights are `(y / se)^2`
/// when every standard error is positive, otherwise uniform. The interval
/// is inflated by the reduced chi-square when the scatter exceeds the
/// stated errors.
pub fn fit_points(ns: &[f64], ys: &[f64], ses: &[f64]) -> Result<SlopeFit> {
    let m = ns.len();
    if m < 3 || ys.len() != m || ses.len() != m {
        return Err(Error::Fit(format!("need at least 3 matching points, got {m}")));
    }
    if let Some(bad) = ys.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
        return Err(Error::Fit(format!("estimate {bad} is not positive")));
    }
    if ns.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::Fit("horizons must be positive".into()));
    }
    let weighted = ses.iter().zip(ys).all(|(s, y)| *s > 0.0 && (s / y).is_finite());
    let w: Vec<f64> = if weighted {
        ses.iter().zip(ys).map(|(s, y)| (y / s).powi(2)).collect()
    } else {
        vec![1.0; m]
    };
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("horizons must not all coincide".into()));
    }
    let sxy: f64 = (0..m).map(|k| w[k] * (x[k] - xm) * (y[k] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = (0..m).map(|k| w[k] * (y[k] - intercept - slope * x[k]).powi(2)).sum();
    let syy: f64 = (0..m).map(|k| w[k] * (y[k] - ym).powi(2)).sum();
    let dof = (m - 2) as f64;
    let var = if weighted {
        (rss / dof).max(1.0) / sxx
    } else {
        rss / dof / sxx
    };
    let r2 = if syy > 0.0 { (1.0 - rss / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(SlopeFit {
        slope,
        intercept,
        ci95: 1.96 * var.sqrt(),
        r2,
        points: m,
    })
}

pub fn fit_log_slope(series: &ScalingSeries) -> Result<SlopeFit> {
    let ns: Vec<f64> = series.rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = series.rows.iter().map(|r| r.estimate).collect();
    let ses: Vec<f64> = series.rows.iter().map(|r| r.stderr).collect();
    fit_points(&ns, &ys, &ses)
}
