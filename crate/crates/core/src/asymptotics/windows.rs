//! Contribution of paths whose extremum falls in the middle windows
//! `K1 = [N, j-N]` and `K2 = [j+N, n]`.
//!
//! The walk integrand is `e^{-S_j} e^{L_{j-1}} e^{L_n}` with `τ` the first
//! minimum of `S`. The clan integrand is the reversed weight at `j`, whose
//! walk is `-S`, so its `τ` is the first maximum of `S`.

use serde::{Deserialize, Serialize};

use crate::asymptotics::engine::{estimate, BatchSet, EstimatorResult, Integrand, Runner};
use crate::asymptotics::estimators::{batch_plan, EventOptions, ReversedIntegrand};
use crate::asymptotics::segment::Segment;
use crate::env::IncrementLaw;
use crate::error::{Error, Result};
use crate::rng::StreamKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauWindow {
    K1,
    K2,
    /// `K1 ∪ K2`
    Union,
    /// `[0, n]`
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowIntegrand {
    /// `e^{-S_j} e^{S_{τ(j-1)}} e^{S_{τ(n)}}`
    Walk,
    /// Reversed clan weight.
    Clan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Bounds {
    k1: (usize, usize),
    k2: (usize, usize),
}

impl Bounds {
    fn new(j: usize, n: usize, big_n: usize) -> Result<Self> {
        if j == 0 || j >= n {
            return Err(Error::domain(format!("window centre j = {j} must satisfy 1 <= j < n = {n}")));
        }
        if big_n == 0 || big_n > (j / 2).min(n - j) {
            return Err(Error::domain(format!(
                "window width N = {big_n} must lie in [1, min(j/2, n-j)] = [1, {}]",
                (j / 2).min(n - j)
            )));
        }
        Ok(Bounds {
            k1: (big_n, j - big_n),
            k2: (j + big_n, n),
        })
    }

    #[inline]
    fn hits(&self, tau: usize) -> (bool, bool) {
        (
            (self.k1.0..=self.k1.1).contains(&tau),
            (self.k2.0..=self.k2.1).contains(&tau),
        )
    }
}

/// Columns: total weight, then `(K1, K2, K1 ∪ K2)` for every `N`.
struct Profile {
    kind: WindowIntegrand,
    bounds: Vec<Bounds>,
}

impl Profile {
    #[inline]
    fn weight_and_tau(&self, pre: &Segment, post: &Segment) -> (f64, usize) {
        let full = pre.concat(post);
        match self.kind {
            WindowIntegrand::Walk => ((-pre.end + pre.min_head + full.min).exp(), full.min_at),
            WindowIntegrand::Clan => (ReversedIntegrand::value(pre, post), full.max_at),
        }
    }
}

impl Integrand for Profile {
    fn dim(&self) -> usize {
        1 + 3 * self.bounds.len()
    }

    #[inline]
    fn eval(&self, pre: &Segment, post: &Segment, out: &mut [f64]) {
        let (w, tau) = self.weight_and_tau(pre, post);
        out[0] = w;
        for (k, b) in self.bounds.iter().enumerate() {
            let (a, c) = b.hits(tau);
            out[1 + 3 * k] = if a { w } else { 0.0 };
            out[2 + 3 * k] = if c { w } else { 0.0 };
            out[3 + 3 * k] = if a || c { w } else { 0.0 };
        }
    }
}

/// Window contributions for several widths, all on the same paths.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowProfile {
    pub widths: Vec<usize>,
    pub full: EstimatorResult,
    pub k1: Vec<EstimatorResult>,
    pub k2: Vec<EstimatorResult>,
    pub union: Vec<EstimatorResult>,
    /// `(K1 ∪ K2 contribution) / full`, with a delta-method standard error.
    pub ratio: Vec<(f64, f64)>,
}

fn run_profile(
    runner: &Runner,
    law: &IncrementLaw,
    j: usize,
    n: usize,
    bounds: Vec<Bounds>,
    kind: WindowIntegrand,
    opts: EventOptions,
    key: StreamKey,
) -> Result<BatchSet> {
    let plan = batch_plan(j, n, opts.crossing);
    estimate(runner, law, &plan, &Profile { kind, bounds }, key, opts.target)
}

/// Mean of the integrand restricted to `τ ∈ window`, split at `j`.
#[allow(clippy::too_many_arguments)]
pub fn tau_window_contribution(
    runner: &Runner,
    law: &IncrementLaw,
    j: usize,
    n: usize,
    window: TauWindow,
    big_n: usize,
    kind: WindowIntegrand,
    opts: EventOptions,
    key: StreamKey,
) -> Result<EstimatorResult> {
    if window == TauWindow::Full {
        if j == 0 || j > n {
            return Err(Error::domain(format!("j = {j} outside [1, {n}]")));
        }
        let set = run_profile(runner, law, j, n, vec![], kind, opts, key)?;
        return Ok(set.estimate(0));
    }
    let b = Bounds::new(j, n, big_n)?;
    let set = run_profile(runner, law, j, n, vec![b], kind, opts, key)?;
    Ok(set.estimate(match window {
        TauWindow::K1 => 1,
        TauWindow::K2 => 2,
        _ => 3,
    }))
}

/// Window contributions for every width in `widths`, on common streams.
pub fn tau_window_profile(
    runner: &Runner,
    law: &IncrementLaw,
    j: usize,
    n: usize,
    widths: &[usize],
    kind: WindowIntegrand,
    opts: EventOptions,
    key: StreamKey,
) -> Result<WindowProfile> {
    if widths.is_empty() {
        return Err(Error::domain("no window widths given"));
    }
    let bounds = widths.iter().map(|&w| Bounds::new(j, n, w)).collect::<Result<Vec<_>>>()?;
    let set = run_profile(runner, law, j, n, bounds, kind, opts, key)?;
    let m = widths.len();
    Ok(WindowProfile {
        widths: widths.to_vec(),
        full: set.estimate(0),
        k1: (0..m).map(|k| set.estimate(1 + 3 * k)).collect(),
        k2: (0..m).map(|k| set.estimate(2 + 3 * k)).collect(),
        union: (0..m).map(|k| set.estimate(3 + 3 * k)).collect(),
        ratio: (0..m).map(|k| set.ratio(3 + 3 * k, 0)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::engine::Target;
    use crate::asymptotics::estimators::{estimate_event_prob_reversed, Regime};
    use crate::walk::{path_summary, WalkPath};

    #[test]
    fn invalid_windows_are_rejected() {
        assert!(Bounds::new(128, 256, 65).is_err());
        assert!(Bounds::new(128, 130, 8).is_err());
        assert!(Bounds::new(128, 256, 0).is_err());
        assert!(Bounds::new(256, 256, 4).is_err());
        let b = Bounds::new(128, 256, 32).unwrap();
        assert_eq!((b.k1, b.k2), ((32, 96), (160, 256)));
    }

    #[test]
    fn walk_weight_matches_path() {
        let p = WalkPath::from_increments(vec![0.4, -1.0, 0.3, -0.2, 0.7, -1.5, 0.2, 0.6]).unwrap();
        let j = 4;
        let inc = p.increments();
        let (pre, post) = (Segment::from_increments(&inc[..j]), Segment::from_increments(&inc[j..]));
        let prof = Profile { kind: WindowIntegrand::Walk, bounds: vec![] };
        let (w, tau) = prof.weight_and_tau(&pre, &post);
        let s = p.partial_sums();
        let l_jm1 = s[..j].iter().cloned().fold(f64::INFINITY, f64::min);
        let sum = path_summary(&p);
        assert_eq!(tau, sum.tau_n);
        assert!((w - (-s[j] + l_jm1 + sum.l_n()).exp()).abs() < 1e-14);
        let prof = Profile { kind: WindowIntegrand::Clan, bounds: vec![] };
        let (_, tau) = prof.weight_and_tau(&pre, &post);
        assert_eq!(tau, 1);
    }

    #[test]
    fn full_window_equals_reversed_estimator() {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        let r = Runner::sequential();
        let opts = EventOptions::new(Target::Samples(1 << 18));
        let key = StreamKey::root(12);
        let w = tau_window_contribution(&r, &law, 32, 64, TauWindow::Full, 0, WindowIntegrand::Clan, opts, key).unwrap();
        let e = estimate_event_prob_reversed(&r, &law, Regime::FixedI(32), 64, opts, key).unwrap();
        assert_eq!(w.mean.to_bits(), e.mean.to_bits());
    }

    #[test]
    fn contributions_shrink_with_width() {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        let p = tau_window_profile(
            &Runner::sequential(),
            &law,
            32,
            64,
            &[2, 4, 8, 16],
            WindowIntegrand::Walk,
            EventOptions::new(Target::Samples(1 << 18)),
            StreamKey::root(4),
        )
        .unwrap();
        assert!(p.union.windows(2).all(|w| w[1].mean <= w[0].mean));
        assert!(p.ratio.windows(2).all(|w| w[1].0 <= w[0].0));
        for k in 0..4 {
            assert!((p.k1[k].mean + p.k2[k].mean - p.union[k].mean).abs() <= 1e-12 * p.full.mean);
        }
    }
}
