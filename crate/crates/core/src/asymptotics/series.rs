//! Scaling series over a grid of horizons: clan probabilities along a
//! regime, and walk functionals with known decay exponents.

use serde::{Deserialize, Serialize};

use crate::asymptotics::engine::{estimate, EstimatorResult, Integrand, Runner};
use crate::asymptotics::estimators::{batch_plan, estimate_event_prob, EventOptions, Regime};
use crate::asymptotics::segment::Segment;
use crate::env::IncrementLaw;
use crate::error::{Error, Result};
use crate::gfalgebra::Convention;
use crate::rng::StreamKey;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub n: usize,
    /// Clan index (or split time) used at this horizon.
    pub i: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub nsamples: u64,
    pub seed: u64,
    #[serde(default)]
    pub budget_exceeded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub label: String,
    pub regime: Option<Regime>,
    pub rows: Vec<SeriesRow>,
}

impl ScalingSeries {
    pub fn ns(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.n).collect()
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.estimate).collect()
    }
}

fn check_grid(n_grid: &[usize], min_n: usize) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::domain("n grid is empty"));
    }
    if n_grid[0] < min_n {
        return Err(Error::domain(format!("n grid starts at {}, needs n >= {min_n}", n_grid[0])));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("n grid must be strictly increasing"));
    }
    Ok(())
}

fn row(n: usize, i: usize, e: &EstimatorResult) -> SeriesRow {
    SeriesRow {
        n,
        i,
        estimate: e.mean,
        stderr: e.stderr,
        nsamples: e.nsamples,
        seed: e.master_seed,
        budget_exceeded: e.budget_exceeded,
    }
}

/// `P(only clan i survives)` for each `n` of the grid, `i` following the
/// regime. Horizon `n` draws from the sub-stream `key.child(n)`.
pub fn scaling_sweep(
    runner: &Runner,
    law: &IncrementLaw,
    regime: Regime,
    n_grid: &[usize],
    opts: EventOptions,
    convention: Convention,
    key: StreamKey,
) -> Result<ScalingSeries> {
    check_grid(n_grid, 2)?;
    let idx = n_grid.iter().map(|&n| regime.index(n)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(n_grid.len());
    for (&n, &i) in n_grid.iter().zip(&idx) {
        let e = estimate_event_prob(runner, law, regime, n, opts, convention, key.child(n as u64))?;
        rows.push(row(n, i, &e));
    }
    Ok(ScalingSeries {
        label: regime.label(),
        regime: Some(regime),
        rows,
    })
}

/// `g` in `E[g(Υ_n) h(Λ_n)]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GFn {
    /// `g(y) = y`, `α = 1`.
    #[default]
    Identity,
    /// `g(y) = y^α`.
    Power { alpha: f64 },
}

/// `h` in `E[g(Υ_n) h(Λ_n)]`; every registered `h` is Lipschitz (`ε = 1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HFn {
    /// `h(y) = 1/(1+y)`, `β = 1`.
    #[default]
    InvOnePlus,
    /// `h(y) = (1+y)^{-β}`.
    InvOnePlusPow { beta: f64 },
    /// `h(y) = 1/((1+y)(1+x+y))`, `β = 2`.
    InvPair { x: f64 },
}

impl GFn {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            GFn::Identity => y,
            GFn::Power { alpha } => y.powf(alpha),
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            GFn::Identity => 1.0,
            GFn::Power { alpha } => alpha,
        }
    }
}

impl HFn {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            HFn::InvOnePlus => 1.0 / (1.0 + y),
            HFn::InvOnePlusPow { beta } => (1.0 + y).powf(-beta),
            HFn::InvPair { x } => 1.0 / (1.0 + y) / (1.0 + x + y),
        }
    }

    pub fn beta(&self) -> f64 {
        match *self {
            HFn::InvOnePlus => 1.0,
            HFn::InvOnePlusPow { beta } => beta,
            HFn::InvPair { .. } => 2.0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        1.0
    }
}

/// `E[g(Υ_n) h(Λ_n)]` with `η_k = e^{X_k}`, `Υ_n = prod η_k`, `Λ_n = sum_{k=1}^n Υ_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GuivarchFunctional {
    pub g: GFn,
    pub h: HFn,
}

impl GuivarchFunctional {
    /// `(α, β, ε)` of the growth and regularity bounds.
    pub fn exponents(&self) -> (f64, f64, f64) {
        (self.g.alpha(), self.h.beta(), self.h.epsilon())
    }

    /// Checks the parameters and that `E[η^α]` and `E[η^{-ε}]` are finite under `law`.
    pub fn validate(&self, law: &IncrementLaw) -> Result<()> {
        let (alpha, beta, eps) = self.exponents();
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::domain("guivarch exponents alpha and beta must be positive"));
        }
        if let HFn::InvPair { x } = self.h {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::domain(format!("guivarch h parameter x = {x} must be >= 0")));
            }
        }
        if !law.exp_moment_finite(alpha) || !law.exp_moment_finite(-eps) {
            return Err(Error::domain(format!(
                "E[eta^{alpha}] or E[eta^-{eps}] is infinite under the {} law",
                law.family_name()
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, upsilon: f64, lambda: f64) -> f64 {
        self.g.eval(upsilon) * self.h.eval(lambda)
    }
}

/// Where the tilted functional looks at the walk: `r` as a function of `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RRule {
    /// `r = floor(rho n)`.
    Fraction(f64),
    Fixed(usize),
    /// `r = n - m`.
    FromEnd(usize),
}

impl RRule {
    pub fn r(&self, n: usize) -> Result<usize> {
        match *self {
            RRule::Fraction(rho) if (0.0..=1.0).contains(&rho) => Ok((rho * n as f64).floor() as usize),
            RRule::Fixed(r) if r <= n => Ok(r),
            RRule::FromEnd(m) if m <= n => Ok(n - m),
            _ => Err(Error::domain(format!("r rule {self:?} gives no r in [0, {n}]"))),
        }
    }
}

/// Walk functionals with a known power-law decay in `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WalkFunctional {
    /// `P(L_n >= 0)`
    ProbMinNonneg,
    /// `E[e^{-S_n}; L_n >= 0]`
    ExpNegMin,
    /// `E[e^{S_n}; M_n < 0]`
    ExpPosMax,
    /// `E[e^{λ S_r}; τ(n) = r]`
    TiltedTau { lambda: f64, r: RRule },
    /// `E[g(Υ_n) h(Λ_n)]`
    Guivarch { g: GFn, h: HFn },
    /// `E[u / (u + sum_{k=1}^{n-1} e^{-S_k})]`, `u = 1/(1-s)`
    Psi { s: f64 },
    /// `E[e^{-S_n} / ((1+Λ)(1+x+Λ))]`, `Λ = sum_{k=1}^n e^{-S_k}`
    TOfX { x: f64 },
}

impl WalkFunctional {
    pub fn name(&self) -> &'static str {
        match self {
            WalkFunctional::ProbMinNonneg => "prob_min_nonneg",
            WalkFunctional::ExpNegMin => "exp_neg_min",
            WalkFunctional::ExpPosMax => "exp_pos_max",
            WalkFunctional::TiltedTau { .. } => "tilted_tau",
            WalkFunctional::Guivarch { .. } => "guivarch",
            WalkFunctional::Psi { .. } => "psi",
            WalkFunctional::TOfX { .. } => "t_of_x",
        }
    }

    /// The default-parameter functional registered under `name`.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "prob_min_nonneg" => WalkFunctional::ProbMinNonneg,
            "exp_neg_min" => WalkFunctional::ExpNegMin,
            "exp_pos_max" => WalkFunctional::ExpPosMax,
            "tilted_tau" => WalkFunctional::TiltedTau {
                lambda: 1.0,
                r: RRule::Fraction(0.5),
            },
            "guivarch" => WalkFunctional::Guivarch {
                g: GFn::default(),
                h: HFn::default(),
            },
            "psi" => WalkFunctional::Psi { s: 0.0 },
            "t_of_x" => WalkFunctional::TOfX { x: 0.0 },
            other => return Err(Error::UnknownFunctional(other.to_string())),
        })
    }

    /// Decay exponent of the functional in `n` (for `tilted_tau`, with `r ∝ n`).
    pub fn expected_slope(&self) -> f64 {
        match self {
            WalkFunctional::ProbMinNonneg | WalkFunctional::Psi { .. } => -0.5,
            WalkFunctional::TiltedTau { .. } => -2.0,
            _ => -1.5,
        }
    }

    pub fn validate(&self, law: &IncrementLaw) -> Result<()> {
        law.validate()?;
        match *self {
            WalkFunctional::TiltedTau { lambda, r } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::domain(format!("tilted_tau needs lambda > 0, got {lambda}")));
                }
                if let RRule::Fraction(rho) = r {
                    if !(0.0..=1.0).contains(&rho) {
                        return Err(Error::domain(format!("r fraction {rho} outside [0, 1]")));
                    }
                }
            }
            WalkFunctional::Guivarch { g, h } => GuivarchFunctional { g, h }.validate(law)?,
            WalkFunctional::Psi { s } => {
                if !(0.0..1.0).contains(&s) {
                    return Err(Error::domain(format!("psi needs s in [0, 1), got {s}")));
                }
            }
            WalkFunctional::TOfX { x } => {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::domain(format!("t_of_x needs x >= 0, got {x}")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Split point used when composing segments at horizon `n`.
    pub fn split(&self, n: usize) -> Result<usize> {
        match self {
            WalkFunctional::TiltedTau { r, .. } => r.r(n),
            _ => Ok(n / 2),
        }
    }

    /// Value on the path (`[0, split]`, `[split, n]`).
    #[inline]
    pub fn value(&self, pre: &Segment, post: &Segment) -> f64 {
        match *self {
            WalkFunctional::TiltedTau { lambda, .. } => {
                // τ(n) = r: every earlier point strictly above S_r, no later point below it
                if pre.min_at == pre.len && post.min >= 0.0 {
                    (lambda * pre.end).exp()
                } else {
                    0.0
                }
            }
            _ => self.value_full(&pre.concat(post)),
        }
    }

    /// Value on a whole path summary (not defined for `tilted_tau`, which needs its split).
    #[inline]
    fn value_full(&self, s: &Segment) -> f64 {
        match *self {
            WalkFunctional::ProbMinNonneg => f64::from(u8::from(s.min >= 0.0)),
            WalkFunctional::ExpNegMin => {
                if s.min >= 0.0 {
                    s.down.a
                } else {
                    0.0
                }
            }
            WalkFunctional::ExpPosMax => {
                if s.max_tail < 0.0 {
                    s.up.a
                } else {
                    0.0
                }
            }
            WalkFunctional::Guivarch { g, h } => g.eval(s.up.a) * h.eval(s.up.c),
            WalkFunctional::Psi { s: arg } => {
                let u = 1.0 / (1.0 - arg);
                u / (u + (s.down.b - 1.0))
            }
            WalkFunctional::TOfX { x } => {
                let l = s.down.c;
                s.down.a / (1.0 + l) / (1.0 + x + l)
            }
            WalkFunctional::TiltedTau { .. } => unreachable!("tilted_tau is evaluated at its split"),
        }
    }
}

struct WalkIntegrand(WalkFunctional);

impl Integrand for WalkIntegrand {
    fn dim(&self) -> usize {
        1
    }
    #[inline]
    fn eval(&self, pre: &Segment, post: &Segment, out: &mut [f64]) {
        out[0] = self.0.value(pre, post);
    }
}

/// Monte Carlo mean of a walk functional at horizon `n`.
pub fn estimate_walk_functional(
    runner: &Runner,
    law: &IncrementLaw,
    kind: WalkFunctional,
    n: usize,
    opts: EventOptions,
    key: StreamKey,
) -> Result<EstimatorResult> {
    kind.validate(law)?;
    if n == 0 {
        return Err(Error::domain("horizon n must be at least 1"));
    }
    let split = kind.split(n)?;
    let plan = batch_plan(split, n, opts.crossing);
    Ok(estimate(runner, law, &plan, &WalkIntegrand(kind), key, opts.target)?.estimate(0))
}

/// The functional at every `n` of the grid; horizon `n` uses `key.child(n)`.
pub fn walk_functional_series(
    runner: &Runner,
    law: &IncrementLaw,
    kind: WalkFunctional,
    n_grid: &[usize],
    opts: EventOptions,
    key: StreamKey,
) -> Result<ScalingSeries> {
    kind.validate(law)?;
    check_grid(n_grid, 1)?;
    let splits = n_grid.iter().map(|&n| kind.split(n)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(n_grid.len());
    for (&n, &split) in n_grid.iter().zip(&splits) {
        let e = estimate_walk_functional(runner, law, kind, n, opts, key.child(n as u64))?;
        let i = if matches!(kind, WalkFunctional::TiltedTau { .. }) { split } else { 0 };
        rows.push(row(n, i, &e));
    }
    Ok(ScalingSeries {
        label: kind.name().to_string(),
        regime: None,
        rows,
    })
}
