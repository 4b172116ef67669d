//! Batched Monte Carlo over composed walk segments.
//!
//! A path of length `n` is cut at a split point into `pre` and `post`
//! pieces, and each piece into one or more segments. In a batch every
//! segment position gets `per_segment` independent samples. With crossing
//! enabled, every combination of samples is composed into a virtual path
//! (`per_segment^K` of them), and the batch mean over those is an unbiased
//! U-statistic for the path expectation. Without crossing, sample `t` of
//! every position forms path `t` and the estimator is plain Monte Carlo.
//!
//! Each batch draws from its own stream `key.child(batch)`. Batch means are
//! collected in batch order and reduced by a fixed pairwise tree, so the
//! result does not depend on the number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::segment::Segment;
use crate::env::IncrementLaw;
use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;
use crate::rng::StreamKey;

/// Minimum number of batches behind any reported standard error.
pub const MIN_BATCHES: u64 = 16;

/// Default sample budget (virtual paths) for adaptive runs.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Worker pool. Results never depend on the worker count.
pub struct Runner {
    pool: Option<rayon::ThreadPool>,
    workers: usize,
}

impl std::fmt::Debug for Runner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runner").field("workers", &self.workers).finish()
    }
}

impl Runner {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::domain("workers must be at least 1"));
        }
        let pool = if workers == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?,
            )
        };
        Ok(Runner { pool, workers })
    }

    pub fn sequential() -> Self {
        Runner { pool: None, workers: 1 }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `f(0..count)` collected in index order.
    pub fn map<T, F>(&self, range: std::ops::Range<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        match &self.pool {
            None => range.map(f).collect(),
            Some(pool) => pool.install(|| range.into_par_iter().map(f).collect()),
        }
    }
}

/// How virtual paths are assembled from segments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPlan {
    /// Segment lengths covering `[0, split]`.
    pub pre: Vec<usize>,
    /// Segment lengths covering `[split, n]`.
    pub post: Vec<usize>,
    pub per_segment: usize,
    pub cross: bool,
}

impl SegmentPlan {
    /// Plain Monte Carlo: `paths` independent paths per batch.
    pub fn plain(split: usize, n: usize, paths: usize) -> Self {
        SegmentPlan {
            pre: if split > 0 { vec![split] } else { vec![] },
            post: if n > split { vec![n - split] } else { vec![] },
            per_segment: paths,
            cross: false,
        }
    }

    /// Cuts `[0, split]` into `k_pre` and `[split, n]` into `k_post` near-equal
    /// segments and crosses `per_segment` samples of each.
    pub fn crossed(split: usize, n: usize, k_pre: usize, k_post: usize, per_segment: usize) -> Self {
        SegmentPlan {
            pre: split_evenly(split, k_pre),
            post: split_evenly(n - split, k_post),
            per_segment,
            cross: true,
        }
    }

    pub fn n(&self) -> usize {
        self.pre.iter().sum::<usize>() + self.post.iter().sum::<usize>()
    }

    pub fn split(&self) -> usize {
        self.pre.iter().sum()
    }

    pub fn segments(&self) -> usize {
        self.pre.len() + self.post.len()
    }

    /// Virtual paths per batch.
    pub fn paths_per_batch(&self) -> u64 {
        if self.cross {
            (self.per_segment as u64).pow(self.segments() as u32)
        } else {
            self.per_segment as u64
        }
    }

    fn validate(&self) -> Result<()> {
        if self.per_segment == 0 {
            return Err(Error::domain("per_segment must be positive"));
        }
        if self.pre.iter().chain(&self.post).any(|&m| m == 0) {
            return Err(Error::domain("segments must be non-empty"));
        }
        Ok(())
    }
}

fn split_evenly(len: usize, k: usize) -> Vec<usize> {
    if len == 0 {
        return vec![];
    }
    let k = k.clamp(1, len);
    (0..k).map(|j| (j + 1) * len / k - j * len / k).collect()
}

/// Sample-size target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// At least this many virtual paths.
    Samples(u64),
    /// Add batches until the relative standard error of the first component
    /// is at most `goal`, or the budget (virtual paths) is spent.
    RelSe { goal: f64, budget: u64 },
}

impl Target {
    pub fn rel_se(goal: f64) -> Self {
        Target::RelSe {
            goal,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// A Monte Carlo mean with its batch-means standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    /// Virtual paths behind the mean.
    pub nsamples: u64,
    pub master_seed: u64,
    pub batches: u64,
    /// Set when an adaptive run stopped on its budget before reaching its goal.
    pub budget_exceeded: bool,
}

impl EstimatorResult {
    pub fn rel_se(&self) -> f64 {
        self.stderr / self.mean.abs()
    }

    /// `|self - other| / sqrt(se_1^2 + se_2^2)`.
    pub fn z_vs(&self, other: &EstimatorResult) -> f64 {
        (self.mean - other.mean).abs() / self.stderr.hypot(other.stderr)
    }

    /// `|self - value| / se`.
    pub fn z_to(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.stderr
    }
}

/// Per-batch means of a vector-valued integrand.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchSet {
    /// `means[b][d]`
    pub means: Vec<Vec<f64>>,
    pub paths_per_batch: u64,
    pub master_seed: u64,
    pub budget_exceeded: bool,
}

impl BatchSet {
    pub fn batches(&self) -> u64 {
        self.means.len() as u64
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.means.iter().map(|m| m[d]).collect()
    }

    fn mean_of(xs: &[f64]) -> f64 {
        pairwise_sum(xs) / xs.len() as f64
    }

    /// Estimate of component `d`.
    pub fn estimate(&self, d: usize) -> EstimatorResult {
        let col = self.column(d);
        let mean = Self::mean_of(&col);
        let b = col.len() as f64;
        let dev: Vec<f64> = col.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if col.len() > 1 { pairwise_sum(&dev) / (b - 1.0) } else { f64::NAN };
        EstimatorResult {
            mean,
            stderr: (var / b).sqrt(),
            nsamples: self.batches() * self.paths_per_batch,
            master_seed: self.master_seed,
            batches: self.batches(),
            budget_exceeded: self.budget_exceeded,
        }
    }

    /// Sample covariance of the batch means of components `d` and `e`, divided by the batch count.
    pub fn mean_cov(&self, d: usize, e: usize) -> f64 {
        let x = self.column(d);
        let y = self.column(e);
        let (mx, my) = (Self::mean_of(&x), Self::mean_of(&y));
        let prods: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).collect();
        let b = x.len() as f64;
        pairwise_sum(&prods) / (b - 1.0) / b
    }

    /// Ratio of component means with a delta-method standard error.
    pub fn ratio(&self, num: usize, den: usize) -> (f64, f64) {
        let n = self.estimate(num).mean;
        let d = self.estimate(den).mean;
        let r = n / d;
        let var = (self.mean_cov(num, num) - 2.0 * r * self.mean_cov(num, den)
            + r * r * self.mean_cov(den, den))
            / (d * d);
        (r, var.max(0.0).sqrt())
    }
}

/// Integrand over a virtual path given as (`[0, split]`, `[split, n]`) pieces.
pub trait Integrand: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, pre: &Segment, post: &Segment, out: &mut [f64]);
}

/// Closure-backed integrand.
pub struct FnIntegrand<F> {
    dim: usize,
    f: F,
}

impl<F> FnIntegrand<F>
where
    F: Fn(&Segment, &Segment, &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnIntegrand { dim, f }
    }
}

impl<F> Integrand for FnIntegrand<F>
where
    F: Fn(&Segment, &Segment, &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn eval(&self, pre: &Segment, post: &Segment, out: &mut [f64]) {
        (self.f)(pre, post, out)
    }
}

fn compose_all(samples: &[Vec<Segment>]) -> Vec<Segment> {
    let mut acc = vec![Segment::EMPTY];
    for level in samples {
        acc = acc
            .iter()
            .flat_map(|a| level.iter().map(move |b| a.concat(b)))
            .collect();
    }
    acc
}

fn fold_row(samples: &[Vec<Segment>], t: usize) -> Segment {
    samples.iter().fold(Segment::EMPTY, |acc, level| acc.concat(&level[t]))
}

/// Means of the integrand over one batch.
pub fn run_batch<I: Integrand + ?Sized>(
    law: &IncrementLaw,
    plan: &SegmentPlan,
    integrand: &I,
    key: StreamKey,
) -> Result<Vec<f64>> {
    let mut rng = key.rng();
    let m = plan.per_segment;
    let mut draw = |lens: &[usize]| -> Result<Vec<Vec<Segment>>> {
        lens.iter()
            .map(|&len| {
                (0..m)
                    .map(|_| {
                        let seg = Segment::simulate(law, len, &mut rng);
                        if seg.within_range() {
                            Ok(seg)
                        } else {
                            Err(Error::Numeric(format!(
                                "segment excursion {} exceeds the linear-domain range",
                                seg.span
                            )))
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let pre = draw(&plan.pre)?;
    let post = draw(&plan.post)?;

    let dim = integrand.dim();
    let mut sums = vec![0.0; dim];
    let mut out = vec![0.0; dim];
    let count;
    if plan.cross {
        // the last post level (or last pre level when post is empty) is streamed
        let pre_all;
        let post_all;
        let last: &[Segment];
        if let Some((tail, head)) = post.split_last() {
            pre_all = compose_all(&pre);
            post_all = compose_all(head);
            last = tail;
        } else {
            let (tail, head) = pre.split_last().expect("plan has segments");
            pre_all = compose_all(head);
            post_all = vec![Segment::EMPTY];
            last = tail;
        }
        let post_last = !post.is_empty();
        for p in &pre_all {
            for q in &post_all {
                for r in last {
                    if post_last {
                        integrand.eval(p, &q.concat(r), &mut out);
                    } else {
                        integrand.eval(&p.concat(r), q, &mut out);
                    }
                    for (s, o) in sums.iter_mut().zip(&out) {
                        *s += o;
                    }
                }
            }
        }
        count = (pre_all.len() * post_all.len() * last.len()) as f64;
    } else {
        for t in 0..m {
            let p = fold_row(&pre, t);
            let q = fold_row(&post, t);
            integrand.eval(&p, &q, &mut out);
            for (s, o) in sums.iter_mut().zip(&out) {
                *s += o;
            }
        }
        count = m as f64;
    }
    let means: Vec<f64> = sums.iter().map(|s| s / count).collect();
    if means.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite batch mean".into()));
    }
    Ok(means)
}

/// Runs batches `0..count` under `key`, in batch order.
pub fn run_batches<I: Integrand + ?Sized>(
    runner: &Runner,
    law: &IncrementLaw,
    plan: &SegmentPlan,
    integrand: &I,
    key: StreamKey,
    range: std::ops::Range<u64>,
) -> Result<Vec<Vec<f64>>> {
    runner
        .map(range, |b| run_batch(law, plan, integrand, key.child(b)))
        .into_iter()
        .collect()
}

/// Runs the integrand to the requested target.
pub fn estimate<I: Integrand + ?Sized>(
    runner: &Runner,
    law: &IncrementLaw,
    plan: &SegmentPlan,
    integrand: &I,
    key: StreamKey,
    target: Target,
) -> Result<BatchSet> {
    law.validate()?;
    plan.validate()?;
    let per_batch = plan.paths_per_batch();
    let mut set = BatchSet {
        means: Vec::new(),
        paths_per_batch: per_batch,
        master_seed: key.master_seed,
        budget_exceeded: false,
    };
    match target {
        Target::Samples(total) => {
            let batches = total.div_ceil(per_batch).max(MIN_BATCHES);
            set.means = run_batches(runner, law, plan, integrand, key, 0..batches)?;
        }
        Target::RelSe { goal, budget } => {
            if !(goal > 0.0) {
                return Err(Error::domain("relative standard error goal must be positive"));
            }
            let max_batches = (budget / per_batch).max(MIN_BATCHES);
            let mut done = 0;
            let mut next = MIN_BATCHES;
            loop {
                let chunk = run_batches(runner, law, plan, integrand, key, done..next)?;
                set.means.extend(chunk);
                done = next;
                let est = set.estimate(0);
                if est.mean != 0.0 && est.rel_se() <= goal || est.stderr == 0.0 {
                    break;
                }
                if done >= max_batches {
                    set.budget_exceeded = true;
                    break;
                }
                // project the batches needed from the current spread, grow at most 4x per round
                let rel = est.rel_se();
                let wanted = if rel.is_finite() {
                    (done as f64 * (rel / goal).powi(2) * 1.1).ceil() as u64
                } else {
                    done * 4
                };
                next = wanted.clamp(done + 1, done * 4).min(max_batches);
            }
        }
    }
    Ok(set)
}
