//! Text formats for series, fits and plot data. Floats use the shortest
//! round-trip representation, so equal values give equal bytes.

use std::fmt::Write as _;

use crate::asymptotics::fit::SlopeFit;
use crate::asymptotics::series::{ScalingSeries, SeriesRow};
use crate::error::{Error, Result};

pub const SERIES_HEADER: &str = "n,i,estimate,stderr,nsamples,seed";
pub const PLOT_HEADER: &str = "log_n,log_est,log_fit";

pub fn series_to_csv(series: &ScalingSeries) -> String {
    let mut out = String::with_capacity(64 * (series.rows.len() + 1));
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for r in &series.rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.n, r.i, r.estimate, r.stderr, r.nsamples, r.seed);
    }
    out
}

pub fn series_from_csv(label: &str, text: &str) -> Result<ScalingSeries> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == SERIES_HEADER => {}
        other => return Err(Error::Numeric(format!("bad series header {other:?}"))),
    }
    let bad = |no: usize, what: &str| Error::Numeric(format!("series line {no}: bad {what}"));
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let no = k + 2;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(bad(no, "field count"));
        }
        rows.push(SeriesRow {
            n: f[0].parse().map_err(|_| bad(no, "n"))?,
            i: f[1].parse().map_err(|_| bad(no, "i"))?,
            estimate: f[2].parse().map_err(|_| bad(no, "estimate"))?,
            stderr: f[3].parse().map_err(|_| bad(no, "stderr"))?,
            nsamples: f[4].parse().map_err(|_| bad(no, "nsamples"))?,
            seed: f[5].parse().map_err(|_| bad(no, "seed"))?,
            budget_exceeded: false,
        });
    }
    Ok(ScalingSeries {
        label: label.to_string(),
        regime: None,
        rows,
    })
}

/// Keys `slope, intercept, ci95, r2, points`.
pub fn fit_to_json(fit: &SlopeFit) -> String {
    serde_json::to_string_pretty(fit).expect("plain struct serializes")
}

/// `log n, log estimate` per row with the fitted line at the same abscissa.
pub fn plot_data(series: &ScalingSeries, fit: &SlopeFit) -> Result<String> {
    if series.rows.is_empty() {
        return Err(Error::Fit("empty series has no plot data".into()));
    }
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    for r in &series.rows {
        if !(r.estimate > 0.0) {
            return Err(Error::Fit(format!("estimate {} at n = {} is not positive", r.estimate, r.n)));
        }
        let x = (r.n as f64).ln();
        let _ = writeln!(out, "{},{},{}", x, r.estimate.ln(), fit.predict_log(r.n as f64));
    }
    Ok(out)
}
