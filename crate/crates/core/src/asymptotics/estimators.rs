//! Path-averaged clan-survival probabilities: the direct (environment
//! conditional) form and the time-reversed weight.

use serde::{Deserialize, Serialize};

use crate::asymptotics::engine::{estimate, EstimatorResult, Integrand, Runner, SegmentPlan, Target};
use crate::asymptotics::segment::Segment;
use crate::env::IncrementLaw;
use crate::error::{Error, Result};
use crate::gfalgebra::Convention;
use crate::rng::StreamKey;

/// Virtual paths per batch.
pub const BATCH_PATHS: u64 = 1 << 14;

/// How the clan index follows the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Regime {
    FixedI(usize),
    FixedGap(usize),
    Proportional(f64),
}

impl Regime {
    /// The clan index used at horizon `n`.
    pub fn index(&self, n: usize) -> Result<usize> {
        let i = match *self {
            Regime::FixedI(i) => {
                if i >= n {
                    return Err(Error::domain(format!("fixed_i({i}) needs n > {i}, got n = {n}")));
                }
                i
            }
            Regime::FixedGap(gap) => {
                if gap == 0 || gap >= n {
                    return Err(Error::domain(format!("fixed_gap({gap}) needs 1 <= N <= n - 1, got n = {n}")));
                }
                n - gap
            }
            Regime::Proportional(rho) => {
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(Error::domain(format!("proportional({rho}) needs rho in (0, 1)")));
                }
                (rho * n as f64).floor() as usize
            }
        };
        Ok(i)
    }

    pub fn label(&self) -> String {
        match self {
            Regime::FixedI(i) => format!("fixed_i({i})"),
            Regime::FixedGap(g) => format!("fixed_gap({g})"),
            Regime::Proportional(r) => format!("proportional({r})"),
        }
    }
}

/// How a path is cut into independently sampled segments. Every
/// combination of segment samples is evaluated, about `2^14` per batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Crossing {
    /// Independent full paths.
    Plain,
    /// `pre` segments before the split point and `post` after it.
    Split { pre: usize, post: usize },
}

impl Default for Crossing {
    fn default() -> Self {
        Crossing::Split { pre: 1, post: 2 }
    }
}

/// Segment plan with about `2^14` virtual paths per batch, split at `split`.
pub fn batch_plan(split: usize, n: usize, crossing: Crossing) -> SegmentPlan {
    let (pre, post) = match crossing {
        Crossing::Plain => return SegmentPlan::plain(split, n, BATCH_PATHS as usize),
        Crossing::Split { pre, post } => (pre, post),
    };
    let mut k_pre = pre.max(1).min(split);
    let k_post = post.max(1).min(n - split);
    if k_post == 0 {
        k_pre = k_pre.max(pre + post).min(split);
    }
    let segments = k_pre + k_post;
    if segments < 2 {
        return SegmentPlan::plain(split, n, BATCH_PATHS as usize);
    }
    let per = (BATCH_PATHS as f64).powf(1.0 / segments as f64).round() as usize;
    SegmentPlan::crossed(split, n, k_pre, k_post, per)
}

/// `H_{i,n}` evaluated on (`[0, i]`, `[i, n]`).
#[derive(Clone, Copy, Debug)]
pub struct ClanIntegrand {
    pub founder: bool,
    pub convention: Convention,
}

impl ClanIntegrand {
    #[inline]
    pub fn value(&self, pre: &Segment, post: &Segment) -> f64 {
        let a_n = pre.down.a * post.down.a;
        // sum_{k=1}^n e^{-S_k}
        let c0 = pre.down.c + pre.down.a * post.down.c;
        if self.founder {
            return a_n / c0 / (1.0 + c0);
        }
        // sum_{k=i+1}^n e^{-(S_k - S_i)}
        let ci = post.down.c;
        match self.convention {
            Convention::PaperCorollary => a_n / c0 / ci,
            Convention::Strict => a_n / (1.0 + c0) / ci,
        }
    }
}

impl Integrand for ClanIntegrand {
    fn dim(&self) -> usize {
        1
    }
    #[inline]
    fn eval(&self, pre: &Segment, post: &Segment, out: &mut [f64]) {
        out[0] = self.value(pre, post);
    }
}

/// Reversed weight `e^{S_j} / sum_{k<j} e^{S_k} / sum_{k<n} e^{S_k}` on (`[0, j]`, `[j, n]`).
#[derive(Clone, Copy, Debug)]
pub struct ReversedIntegrand;

impl ReversedIntegrand {
    #[inline]
    pub fn value(pre: &Segment, post: &Segment) -> f64 {
        let head = pre.up.b;
        let all = head + pre.up.a * post.up.b;
        pre.up.a / head / all
    }
}

impl Integrand for ReversedIntegrand {
    fn dim(&self) -> usize {
        1
    }
    #[inline]
    fn eval(&self, pre: &Segment, post: &Segment, out: &mut [f64]) {
        out[0] = Self::value(pre, post);
    }
}

/// Shared options of the event estimators.
#[derive(Clone, Copy, Debug)]
pub struct EventOptions {
    pub target: Target,
    pub crossing: Crossing,
}

impl EventOptions {
    pub fn new(target: Target) -> Self {
        EventOptions { target, crossing: Crossing::default() }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::domain("horizon n must be at least 1"));
    }
    Ok(())
}

/// Mean of `H_{i,n}` over environments, `i` resolved from the regime.
pub fn estimate_event_prob(
    runner: &Runner,
    law: &IncrementLaw,
    regime: Regime,
    n: usize,
    opts: EventOptions,
    convention: Convention,
    key: StreamKey,
) -> Result<EstimatorResult> {
    check_n(n)?;
    let i = regime.index(n)?;
        let plan = batch_plan(i, n, opts.crossing);
    let integrand = ClanIntegrand {
        founder: i == 0,
        convention,
    };
    Ok(estimate(runner, law, &plan, &integrand, key, opts.target)?.estimate(0))
}

/// Mean of the reversed weight at `j = n - i`.
pub fn estimate_event_prob_reversed(
    runner: &Runner,
    law: &IncrementLaw,
    regime: Regime,
    n: usize,
    opts: EventOptions,
    key: StreamKey,
) -> Result<EstimatorResult> {
    check_n(n)?;
    let j = n - regime.index(n)?;
        let plan = batch_plan(j, n, opts.crossing);
    Ok(estimate(runner, law, &plan, &ReversedIntegrand, key, opts.target)?.estimate(0))
}
