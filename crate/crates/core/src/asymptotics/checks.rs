//! Identity checks: the duality `P(τ(n) = n) = P(M_n < 0)` with the
//! factorization at the first minimum, and the decomposition of the
//! population at generation `n` by surviving clans.

use serde::Serialize;

use crate::asymptotics::engine::{estimate, EstimatorResult, Integrand, Runner};
use crate::asymptotics::estimators::{batch_plan, EventOptions};
use crate::asymptotics::segment::Segment;
use crate::asymptotics::series::{estimate_walk_functional, RRule, WalkFunctional};
use crate::env::IncrementLaw;
use crate::error::{Error, Result};
use crate::gfalgebra::{clan_prob, no_survivor_prob, Convention};
use crate::numerics::pairwise_sum;
use crate::popsim::{event_indicator, oracle_counts, simulate_population};
use crate::rng::StreamKey;
use crate::walk::simulate_path;

enum Event {
    /// `τ(n) = n`
    MinAtEnd,
    /// `M_n < 0`
    MaxNegative,
}

impl Integrand for Event {
    fn dim(&self) -> usize {
        1
    }
    #[inline]
    fn eval(&self, pre: &Segment, post: &Segment, out: &mut [f64]) {
        let s = pre.concat(post);
        let hit = match self {
            Event::MinAtEnd => s.min_at == s.len,
            Event::MaxNegative => s.max_tail < 0.0,
        };
        out[0] = f64::from(u8::from(hit));
    }
}

/// `|a - b| / sqrt(se_a^2 + se_b^2)`, with `0/0 = 0`.
pub fn z_score(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let d = (a - b).abs();
    let se = se_a.hypot(se_b);
    if d == 0.0 {
        0.0
    } else {
        d / se
    }
}

/// `E[e^{λS_r}; τ(n) = r]` against `E[e^{λS_r}; τ(r) = r] · P(L_{n-r} >= 0)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorizationCheck {
    pub r: usize,
    pub lambda: f64,
    pub lhs: EstimatorResult,
    pub tilted_at_r: EstimatorResult,
    pub min_nonneg: EstimatorResult,
    pub rhs: f64,
    pub rhs_se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityReport {
    pub n: usize,
    pub p_tau: EstimatorResult,
    pub p_max: EstimatorResult,
    pub z: f64,
    pub factorization: FactorizationCheck,
}

fn exact(mean: f64, key: StreamKey) -> EstimatorResult {
    EstimatorResult {
        mean,
        stderr: 0.0,
        nsamples: 0,
        master_seed: key.master_seed,
        batches: 0,
        budget_exceeded: false,
    }
}

/// Duality check at horizon `n`, with the factorization at `r = n/2`, `λ = 1`.
/// Each quantity uses its own sub-stream of `key`.
pub fn duality_check(
    runner: &Runner,
    law: &IncrementLaw,
    n: usize,
    opts: EventOptions,
    key: StreamKey,
) -> Result<DualityReport> {
    law.validate()?;
    if !law.is_continuous() {
        return Err(Error::Lattice(format!(
            "duality needs a continuous law, got {}",
            law.family_name()
        )));
    }
    if n == 0 {
        return Err(Error::domain("horizon n must be at least 1"));
    }
    let plan = batch_plan(n / 2, n, opts.crossing);
    let p_tau = estimate(runner, law, &plan, &Event::MinAtEnd, key.child(0), opts.target)?.estimate(0);
    let p_max = estimate(runner, law, &plan, &Event::MaxNegative, key.child(1), opts.target)?.estimate(0);
    let z = z_score(p_tau.mean, p_tau.stderr, p_max.mean, p_max.stderr);

    let (r, lambda) = (n / 2, 1.0);
    let lhs = estimate_walk_functional(
        runner,
        law,
        WalkFunctional::TiltedTau { lambda, r: RRule::Fixed(r) },
        n,
        opts,
        key.child(2),
    )?;
    let tilted_at_r = if r == 0 {
        exact(1.0, key)
    } else {
        estimate_walk_functional(
            runner,
            law,
            WalkFunctional::TiltedTau { lambda, r: RRule::FromEnd(0) },
            r,
            opts,
            key.child(3),
        )?
    };
    let min_nonneg = estimate_walk_functional(runner, law, WalkFunctional::ProbMinNonneg, n - r, opts, key.child(4))?;
    let rhs = tilted_at_r.mean * min_nonneg.mean;
    let rhs_se = (min_nonneg.mean * tilted_at_r.stderr).hypot(tilted_at_r.mean * min_nonneg.stderr);
    let fz = z_score(lhs.mean, lhs.stderr, rhs, rhs_se);
    Ok(DualityReport {
        n,
        p_tau,
        p_max,
        z,
        factorization: FactorizationCheck {
            r,
            lambda,
            lhs,
            tilted_at_r,
            min_nonneg,
            rhs,
            rhs_se,
            z: fz,
        },
    })
}

/// One frozen environment of the decomposition check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathDecomposition {
    /// `sum_i H_strict(i)`
    pub sum_h: f64,
    pub no_survivor: f64,
    /// Oracle frequency of two or more surviving clans.
    pub multi_freq: f64,
    pub multi_se: f64,
    /// `sum_h + no_survivor + multi_freq - 1`
    pub deviation: f64,
    pub z: f64,
    /// Per clan `i`: oracle frequency of "only clan i" against `H_strict(i)`, in standard errors.
    pub cell_z: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub n: usize,
    pub branch_reps: u64,
    pub paths: Vec<PathDecomposition>,
    pub max_z: f64,
    /// Fraction of environments whose total is within 4 standard errors of 1.
    pub fraction_within_4se: f64,
    /// Fraction of (environment, clan) cells within 4 standard errors.
    pub cell_fraction_within_4se: f64,
}

/// Largest horizon accepted by [`decomposition_check`].
pub const DECOMPOSITION_MAX_N: usize = 16;

/// For each of `env_samples` environments, compares the closed-form clan
/// probabilities plus the oracle's multi-clan mass with 1.
pub fn decomposition_check(
    runner: &Runner,
    law: &IncrementLaw,
    n: usize,
    env_samples: u64,
    branch_reps: u64,
    key: StreamKey,
) -> Result<DecompositionReport> {
    law.validate()?;
    if n == 0 || n > DECOMPOSITION_MAX_N {
        return Err(Error::domain(format!("decomposition check needs 1 <= n <= {DECOMPOSITION_MAX_N}, got {n}")));
    }
    if env_samples == 0 {
        return Err(Error::domain("env_samples must be at least 1"));
    }
    let paths = runner
        .map(0..env_samples, |e| -> Result<PathDecomposition> {
            let k = key.child(e);
            let path = simulate_path(law, n, &mut k.child(0).rng())?;
            let counts = oracle_counts(&path, branch_reps, k.child(1))?;
            let mut sum_h = 0.0;
            let mut cell_z = Vec::with_capacity(n);
            for i in 0..n {
                let h = clan_prob(&path, i, Convention::Strict)?.value();
                sum_h += h;
                let (f, se) = counts.event(i, Convention::Strict);
                let se_h = (h * (1.0 - h) / branch_reps as f64).sqrt();
                cell_z.push(z_score(f, se.max(se_h), h, 0.0));
            }
            let no_survivor = no_survivor_prob(&path);
            let (multi_freq, multi_se) = counts.freq(counts.multi);
            let deviation = sum_h + no_survivor + multi_freq - 1.0;
            let z = if deviation.abs() < 1e-12 { 0.0 } else { deviation.abs() / multi_se };
            Ok(PathDecomposition {
                sum_h,
                no_survivor,
                multi_freq,
                multi_se,
                deviation,
                z,
                cell_z,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let max_z = paths.iter().map(|p| p.z).fold(0.0, f64::max);
    let within = paths.iter().filter(|p| p.z <= 4.0).count() as f64 / paths.len() as f64;
    let cells: Vec<f64> = paths.iter().flat_map(|p| p.cell_z.iter().copied()).collect();
    let cell_within = cells.iter().filter(|z| **z <= 4.0).count() as f64 / cells.len() as f64;
    Ok(DecompositionReport {
        n,
        branch_reps,
        paths,
        max_z,
        fraction_within_4se: within,
        cell_fraction_within_4se: cell_within,
    })
}

/// Variances across environments of the closed-form clan probability and
/// of the population indicator it conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RaoBlackwellReport {
    pub mean_closed_form: f64,
    pub mean_indicator: f64,
    pub var_closed_form: f64,
    pub var_indicator: f64,
}

/// One environment and one population replicate per sample; sample `e`
/// uses `key.child(e)`.
pub fn rao_blackwell_check(
    runner: &Runner,
    law: &IncrementLaw,
    n: usize,
    i: usize,
    convention: Convention,
    env_samples: u64,
    key: StreamKey,
) -> Result<RaoBlackwellReport> {
    law.validate()?;
    if env_samples < 2 {
        return Err(Error::domain("need at least 2 environments"));
    }
    let pairs = runner
        .map(0..env_samples, |e| -> Result<(f64, f64)> {
            let k = key.child(e);
            let path = simulate_path(law, n, &mut k.child(0).rng())?;
            let h = clan_prob(&path, i, convention)?.value();
            let clans = simulate_population(&path, &mut k.child(1).rng())?;
            Ok((h, f64::from(u8::from(event_indicator(&clans, i, convention)?))))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let m = env_samples as f64;
    let mean_var = |xs: Vec<f64>| {
        let mean = pairwise_sum(&xs) / m;
        let ss = pairwise_sum(&xs.iter().map(|x| (x - mean).powi(2)).collect::<Vec<_>>());
        (mean, ss / (m - 1.0))
    };
    let (mh, vh) = mean_var(pairs.iter().map(|p| p.0).collect());
    let (mi, vi) = mean_var(pairs.iter().map(|p| p.1).collect());
    Ok(RaoBlackwellReport {
        mean_closed_form: mh,
        mean_indicator: mi,
        var_closed_form: vh,
        var_indicator: vi,
    })
}
