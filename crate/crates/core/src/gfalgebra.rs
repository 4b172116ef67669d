//! Fractional-linear generating functions and the environment-conditional
//! probability that a single immigrant clan makes up the whole population.
//!
//! Under geometric offspring every composed generating function has the form
//! `F(s) = 1 - 1/(A/(1-s) + B)`. The pair `(A, B)` is kept in log domain and
//! composes as a monoid: `(A_l, B_l)·(A_r, B_r) = (A_l A_r, B_l + A_l B_r)`
//! with identity `(1, 0)`, i.e. `F(s) = s`.
//!
//! Notation, for a walk `S`: `a_i = e^{-S_i}`, `b_i = sum_{k<i} e^{-S_k}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_add_exp, LogSumExp};
use crate::walk::WalkPath;

/// `F(s) = 1 - 1/(A (1-s)^{-1} + B)` stored as `(log A, log B)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FracLinCoef {
    pub log_a: f64,
    /// `-inf` encodes `B = 0`.
    pub log_b: f64,
}

impl FracLinCoef {
    /// `F(s) = s`.
    pub const IDENTITY: FracLinCoef = FracLinCoef {
        log_a: 0.0,
        log_b: f64::NEG_INFINITY,
    };

    /// One-generation map `F(s) = 1/(1 + e^x (1-s))`, i.e. `(A, B) = (e^{-x}, 1)`.
    pub fn from_increment(x: f64) -> Self {
        FracLinCoef {
            log_a: -x,
            log_b: 0.0,
        }
    }

    /// `self ∘ right`: `self` is the earlier generation block.
    pub fn compose(&self, right: &FracLinCoef) -> FracLinCoef {
        FracLinCoef {
            log_a: self.log_a + right.log_a,
            log_b: log_add_exp(self.log_b, self.log_a + right.log_b),
        }
    }

    /// Left fold of the one-step maps over the increments of `path`; equals `F_{0,n}`.
    pub fn fold_path(path: &WalkPath) -> FracLinCoef {
        path.increments()
            .iter()
            .fold(FracLinCoef::IDENTITY, |acc, &x| acc.compose(&FracLinCoef::from_increment(x)))
    }

    /// `F(s)` for `s` in `[0, 1)`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        Ok(-self.log_one_minus(s)?.exp_m1())
    }

    /// `log(1 - F(s)) = -log(A/(1-s) + B)`.
    pub fn log_one_minus(&self, s: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&s) {
            return Err(Error::domain(format!("generating function argument s = {s} outside [0, 1)")));
        }
        Ok(-log_add_exp(self.log_a - (-s).ln_1p(), self.log_b))
    }
}

/// Which clans must be extinct for the event "only clan i survives".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Every other clan `k ∈ {0..n-1} \ {i}` is extinct.
    Strict,
    /// Clans `k ∈ {1..n-1} \ {i}` are extinct; the founder's clan is
    /// unconstrained when `i ≥ 1`. Reproduces the closed form used in the
    /// literature verbatim.
    #[default]
    PaperCorollary,
}

/// `log H_{i,n}` with its convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClanProbability {
    pub log_h: f64,
    pub convention: Convention,
}

impl ClanProbability {
    pub fn value(&self) -> f64 {
        self.log_h.exp()
    }
}

/// `log sum_{k ∈ ks} e^{-(S_k - S_ref)}`.
fn log_tail_sum(path: &WalkPath, reference: usize, ks: impl IntoIterator<Item = usize>) -> f64 {
    let sref = path.s(reference);
    let mut acc = LogSumExp::new();
    for k in ks {
        acc.push(sref - path.s(k));
    }
    acc.value()
}

/// Probability, given the environment, that only the clan of the immigrant
/// of generation `i` is alive at generation `n`.
///
/// Sums of the form `a_n + b_n - b_{i+1}` are evaluated as a log-sum-exp
/// over the index set `{i+1..n}`, never by subtraction.
pub fn clan_prob(path: &WalkPath, i: usize, convention: Convention) -> Result<ClanProbability> {
    let n = path.n();
    if i >= n {
        return Err(Error::domain(format!("clan index i = {i} outside [0, {}]", n - 1)));
    }
    let sn = path.s(n);
    // log(a_n + b_n - b_1) = log sum_{k=1}^{n} e^{-S_k}
    let log_tail1 = log_tail_sum(path, 0, 1..=n);
    // log(a_n + b_n)
    let log_full = log_add_exp(0.0, log_tail1);
    let log_h = if i == 0 {
        -log_full + (-sn) - log_tail1
    } else {
        // log of sum_{k=i+1}^{n} e^{-(S_k - S_i)}, i.e. (a_n + b_n - b_{i+1}) / a_i
        let log_after = log_tail_sum(path, i, i + 1..=n);
        match convention {
            Convention::PaperCorollary => -log_after + (-sn) - log_tail1,
            Convention::Strict => -log_after + (-sn) - log_full,
        }
    };
    Ok(ClanProbability { log_h, convention })
}

/// `log` of the probability that no earlier clan survives to generation `n`:
/// `prod_{k<n} F_{k,n}(0) = a_n / (a_n + b_n)`.
pub fn log_no_survivor_prob(path: &WalkPath) -> f64 {
    let n = path.n();
    let log_full = log_tail_sum(path, 0, 0..=n);
    -path.s(n) - log_full
}

pub fn no_survivor_prob(path: &WalkPath) -> f64 {
    log_no_survivor_prob(path).exp()
}

/// Time-reversed representation of the clan probability, `j = n - i`:
/// `e^{S_j} / sum_{k<j} e^{S_k} · 1 / sum_{k<n} e^{S_k}`.
///
/// Its expectation over paths equals `P(only clan n-j survives)` (founder
/// unconstrained); pathwise it is a weight, not a probability, and may exceed 1.
pub fn log_reversed_rep_weight(path: &WalkPath, j: usize) -> Result<f64> {
    let n = path.n();
    if j == 0 || j > n {
        return Err(Error::domain(format!("reversed index j = {j} outside [1, {n}]")));
    }
    let mut head = LogSumExp::new();
    for k in 0..j {
        head.push(path.s(k));
    }
    let log_head = head.value();
    let mut all = head;
    for k in j..n {
        all.push(path.s(k));
    }
    Ok(path.s(j) - log_head - all.value())
}

pub fn reversed_rep_weight(path: &WalkPath, j: usize) -> Result<f64> {
    log_reversed_rep_weight(path, j).map(f64::exp)
}
