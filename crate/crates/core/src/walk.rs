//! The associated random walk `S_k = X_1 + ... + X_k` and its path statistics.

use std::fmt::Write as _;

use rand::Rng;

use crate::env::IncrementLaw;
use crate::error::{Error, Result};
use crate::numerics::LogSumExp;

/// A materialized walk of horizon `n`: `partial_sums[0] = 0`, `partial_sums[k] = S_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    increments: Vec<f64>,
    partial_sums: Vec<f64>,
}

impl WalkPath {
    /// Builds a path from explicit increments `X_1..X_n`.
    pub fn from_increments(increments: Vec<f64>) -> Result<Self> {
        if increments.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("walk increments must be finite"));
        }
        let mut partial_sums = Vec::with_capacity(increments.len() + 1);
        let mut s = 0.0;
        partial_sums.push(s);
        for &x in &increments {
            s += x;
            partial_sums.push(s);
        }
        Ok(WalkPath {
            increments,
            partial_sums,
        })
    }

    /// Horizon `n`.
    pub fn n(&self) -> usize {
        self.increments.len()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn partial_sums(&self) -> &[f64] {
        &self.partial_sums
    }

    /// `S_k`.
    #[inline]
    pub fn s(&self, k: usize) -> f64 {
        self.partial_sums[k]
    }

    /// Debug dump with columns `k,S_k`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,S_k\n");
        for (k, s) in self.partial_sums.iter().enumerate() {
            let _ = writeln!(out, "{k},{s}");
        }
        out
    }
}

/// Draws `n` i.i.d. increments from `law`.
pub fn simulate_path<R: Rng + ?Sized>(law: &IncrementLaw, n: usize, rng: &mut R) -> Result<WalkPath> {
    if n == 0 {
        return Err(Error::domain("walk horizon n must be at least 1"));
    }
    let increments = (0..n).map(|_| law.sample(rng)).collect();
    WalkPath::from_increments(increments)
}

/// Running extrema and the first time the minimum is attained.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSummary {
    /// `L_0..L_n`, minima over `S_0..S_k` (so `S_0` is included).
    pub running_min: Vec<f64>,
    /// `M_1..M_n`, maxima over `S_1..S_k` (`S_0` excluded).
    pub running_max: Vec<f64>,
    /// First index attaining `L_n`.
    pub tau_n: usize,
}

impl PathSummary {
    pub fn l_n(&self) -> f64 {
        *self.running_min.last().expect("running_min is never empty")
    }

    pub fn m_n(&self) -> f64 {
        *self.running_max.last().expect("path has n >= 1")
    }
}

pub fn path_summary(path: &WalkPath) -> PathSummary {
    let s = path.partial_sums();
    let mut running_min = Vec::with_capacity(s.len());
    let mut running_max = Vec::with_capacity(s.len().saturating_sub(1));
    let mut lo = s[0];
    let mut tau = 0;
    running_min.push(lo);
    let mut hi = f64::NEG_INFINITY;
    for (k, &v) in s.iter().enumerate().skip(1) {
        // strict comparison keeps the first minimizer
        if v < lo {
            lo = v;
            tau = k;
        }
        hi = hi.max(v);
        running_min.push(lo);
        running_max.push(hi);
    }
    PathSummary {
        running_min,
        running_max,
        tau_n: tau,
    }
}

/// `log a_{i,n}` and `log b_{i,n}` for one path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogExpFunctional {
    /// `S_i - S_n`
    pub log_a: f64,
    /// `log sum_{k=i}^{n-1} exp(S_i - S_k)`
    pub log_b: f64,
}

pub fn log_exp_functionals(path: &WalkPath, i: usize) -> Result<LogExpFunctional> {
    let n = path.n();
    if i >= n {
        return Err(Error::domain(format!("index i = {i} outside [0, {}]", n.saturating_sub(1))));
    }
    let si = path.s(i);
    let mut acc = LogSumExp::new();
    for k in i..n {
        acc.push(si - path.s(k));
    }
    Ok(LogExpFunctional {
        log_a: si - path.s(n),
        log_b: acc.value(),
    })
}
