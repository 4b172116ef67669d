//! Renewal functions `U`, `V` of the walk killed on changing sign, the
//! reweighted expectations they define, and the normalizers of the tilted
//! measures `μ_λ(dz) = c1 e^{-λz} U(z) dz`, `ν_λ(dz) = c2 e^{λz} V(z) dz`.
//!
//! `U(x) = 1 + Σ_n P(S_n ≥ -x, M_n < 0)` for `x ≥ 0`, and
//! `V(x) = 1 + Σ_n P(S_n < -x, L_n ≥ 0)` for `x ≤ 0`. Both are estimated by
//! counting epochs of one excursion before the first sign change.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asymptotics::engine::Runner;
use crate::env::IncrementLaw;
use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;
use crate::rng::StreamKey;

/// Excursion paths per batch of a renewal estimate.
pub const RENEWAL_BATCH: u64 = 1024;
/// Draws per batch for the plain Monte Carlo averages of this module.
pub const DRAW_BATCH: u64 = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Renewal {
    /// Argument `x ≥ 0`, walk kept below 0.
    U,
    /// Argument `x ≤ 0`, walk kept at or above 0.
    V,
}

impl Renewal {
    fn name(self) -> &'static str {
        match self {
            Renewal::U => "U",
            Renewal::V => "V",
        }
    }

    /// Maps `x` to the distance `|x|` used internally; rejects the wrong sign.
    fn abscissa(self, x: f64) -> Result<f64> {
        let ok = match self {
            Renewal::U => x >= 0.0,
            Renewal::V => x <= 0.0,
        };
        if !ok || !x.is_finite() {
            return Err(Error::domain(format!("{} is not defined at x = {x}", self.name())));
        }
        Ok(x.abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalTable {
    pub kind: Renewal,
    /// Ordered by increasing `|x|`.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub cap: u64,
    pub paths: u64,
    pub seed: u64,
    pub truncated_fraction: f64,
    /// Per-batch estimates of `values`, used to propagate table error.
    #[serde(skip)]
    batch_values: Vec<Vec<f64>>,
    #[serde(skip)]
    batch_sizes: Vec<u64>,
}

fn check_grid(kind: Renewal, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::domain("renewal grid is empty"));
    }
    let t = grid.iter().map(|&x| kind.abscissa(x)).collect::<Result<Vec<_>>>()?;
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("renewal grid must be strictly increasing in |x|"));
    }
    Ok(t)
}

struct Knot {
    t: f64,
    value: f64,
    /// Index into the grid, `None` for the exact point `(0, 1)`.
    slot: Option<usize>,
}

impl RenewalTable {
    /// A table with given values and no sampling error, e.g. `U ≡ 1`.
    pub fn from_values(kind: Renewal, grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(kind, &grid)?;
        if values.len() != grid.len() {
            return Err(Error::domain("grid and values differ in length"));
        }
        let m = grid.len();
        Ok(RenewalTable {
            kind,
            grid,
            values,
            stderr: vec![0.0; m],
            cap: 0,
            paths: 0,
            seed: 0,
            truncated_fraction: 0.0,
            batch_values: vec![],
            batch_sizes: vec![],
        })
    }

    fn knots(&self) -> Vec<Knot> {
        let mut k = Vec::with_capacity(self.grid.len() + 1);
        if self.grid[0] != 0.0 {
            k.push(Knot { t: 0.0, value: 1.0, slot: None });
        }
        for (s, (&x, &v)) in self.grid.iter().zip(&self.values).enumerate() {
            k.push(Knot { t: x.abs(), value: v, slot: Some(s) });
        }
        k
    }

    /// Interpolation weights on two knots: linear inside, linear
    /// extrapolation from the last two knots beyond the grid.
    fn weights(knots: &[Knot], t: f64) -> [(usize, f64); 2] {
        let m = knots.len();
        if m == 1 {
            return [(0, 1.0), (0, 0.0)];
        }
        let hi = knots.partition_point(|k| k.t < t).clamp(1, m - 1);
        let (a, b) = (&knots[hi - 1], &knots[hi]);
        let u = (t - a.t) / (b.t - a.t);
        [(hi - 1, 1.0 - u), (hi, u)]
    }

    /// Interpolated value at `x` (sign as for the table kind).
    pub fn eval(&self, x: f64) -> Result<f64> {
        let t = self.kind.abscissa(x)?;
        let knots = self.knots();
        Ok(Self::weights(&knots, t).iter().map(|&(k, w)| w * knots[k].value).sum())
    }

    /// Standard error of `Σ_k coef[k] · values[k]` from the batch spread.
    pub fn linear_se(&self, coef: &[f64]) -> f64 {
        let b = self.batch_sizes.len();
        if b < 2 {
            return 0.0;
        }
        let total = self.paths as f64;
        let l: Vec<f64> = self
            .batch_values
            .iter()
            .map(|row| row.iter().zip(coef).map(|(v, c)| v * c).sum())
            .collect();
        let w: Vec<f64> = self.batch_sizes.iter().map(|&s| s as f64 / total).collect();
        let mean: f64 = l.iter().zip(&w).map(|(l, w)| l * w).sum();
        let ss: f64 = l.iter().zip(&w).map(|(l, w)| (w * (l - mean)).powi(2)).sum();
        (ss * b as f64 / (b - 1) as f64).sqrt()
    }

    /// Adds `scale · weights(x)` to a grid-indexed coefficient vector.
    fn add_weights(&self, knots: &[Knot], t: f64, scale: f64, coef: &mut [f64]) {
        for (k, w) in Self::weights(knots, t) {
            if let Some(s) = knots[k].slot {
                coef[s] += scale * w;
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# kind={}", self.kind.name());
        let _ = writeln!(out, "# cap={}", self.cap);
        let _ = writeln!(out, "# paths={}", self.paths);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(out, "# truncated_fraction={}", self.truncated_fraction);
        out.push_str("x,value,stderr\n");
        for k in 0..self.grid.len() {
            let _ = writeln!(out, "{},{},{}", self.grid[k], self.values[k], self.stderr[k]);
        }
        out
    }
}

struct BatchCounts {
    paths: u64,
    sum: Vec<u64>,
    sum_sq: Vec<u128>,
    truncated: u64,
}

fn excursion_batch(law: &IncrementLaw, kind: Renewal, t: &[f64], paths: u64, cap: u64, key: StreamKey) -> BatchCounts {
    let m = t.len();
    let mut rng = key.rng();
    let mut out = BatchCounts {
        paths,
        sum: vec![0; m],
        sum_sq: vec![0; m],
        truncated: 0,
    };
    let mut hist = vec![0u64; m + 1];
    for _ in 0..paths {
        hist.iter_mut().for_each(|h| *h = 0);
        let mut s = 0.0;
        let mut g = 0;
        loop {
            if g == cap {
                out.truncated += 1;
                break;
            }
            g += 1;
            s += law.sample(&mut rng);
            match kind {
                // epoch counts for every x with |x| >= -S_g
                Renewal::U => {
                    if s >= 0.0 {
                        break;
                    }
                    hist[t.partition_point(|&v| v < -s)] += 1;
                }
                // epoch counts for every x with |x| > S_g
                Renewal::V => {
                    if s < 0.0 {
                        break;
                    }
                    hist[t.partition_point(|&v| v <= s)] += 1;
                }
            }
        }
        let mut c = 0u64;
        for k in 0..m {
            c += hist[k];
            out.sum[k] += c;
            out.sum_sq[k] += u128::from(c) * u128::from(c);
        }
    }
    out
}

fn estimate_renewal(
    runner: &Runner,
    law: &IncrementLaw,
    kind: Renewal,
    x_grid: &[f64],
    paths: u64,
    cap: u64,
    key: StreamKey,
) -> Result<RenewalTable> {
    law.validate()?;
    let t = check_grid(kind, x_grid)?;
    if paths == 0 || cap == 0 {
        return Err(Error::domain("paths and cap must be at least 1"));
    }
    let nb = paths.div_ceil(RENEWAL_BATCH);
    let batches = runner.map(0..nb, |b| {
        let size = RENEWAL_BATCH.min(paths - b * RENEWAL_BATCH);
        excursion_batch(law, kind, &t, size, cap, key.child(b))
    });
    let m = t.len();
    let mut sum = vec![0u64; m];
    let mut sum_sq = vec![0u128; m];
    let mut truncated = 0;
    for b in &batches {
        truncated += b.truncated;
        for k in 0..m {
            sum[k] += b.sum[k];
            sum_sq[k] += b.sum_sq[k];
        }
    }
    let p = paths as f64;
    let values: Vec<f64> = sum.iter().map(|&s| 1.0 + s as f64 / p).collect();
    let stderr = (0..m)
        .map(|k| {
            if paths < 2 {
                return 0.0;
            }
            let mean = sum[k] as f64 / p;
            let var = (sum_sq[k] as f64 - p * mean * mean).max(0.0) / (p - 1.0);
            (var / p).sqrt()
        })
        .collect();
    Ok(RenewalTable {
        kind,
        grid: x_grid.to_vec(),
        values,
        stderr,
        cap,
        paths,
        seed: key.master_seed,
        truncated_fraction: truncated as f64 / p,
        batch_values: batches
            .iter()
            .map(|b| b.sum.iter().map(|&s| 1.0 + s as f64 / b.paths as f64).collect())
            .collect(),
        batch_sizes: batches.iter().map(|b| b.paths).collect(),
    })
}

/// `U` on a grid of `x ≥ 0`. Batch `b` of 1024 excursions uses `key.child(b)`.
#[allow(non_snake_case)]
pub fn estimate_U(
    runner: &Runner,
    law: &IncrementLaw,
    x_grid: &[f64],
    paths: u64,
    cap: u64,
    key: StreamKey,
) -> Result<RenewalTable> {
    estimate_renewal(runner, law, Renewal::U, x_grid, paths, cap, key)
}

/// `V` on a grid of `x ≤ 0` listed by increasing `|x|`.
#[allow(non_snake_case)]
pub fn estimate_V(
    runner: &Runner,
    law: &IncrementLaw,
    x_grid: &[f64],
    paths: u64,
    cap: u64,
    key: StreamKey,
) -> Result<RenewalTable> {
    estimate_renewal(runner, law, Renewal::V, x_grid, paths, cap, key)
}

/// A Monte Carlo average over draws with the part of its error that comes
/// from the renewal table reported apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightedEstimate {
    pub estimate: f64,
    /// From the draws, with the table held fixed.
    pub se: f64,
    /// From the table, with the draws held fixed.
    pub table_se: f64,
}

impl WeightedEstimate {
    pub fn combined_se(&self) -> f64 {
        self.se.hypot(self.table_se)
    }
}

/// Deterministic mean and standard error of `reps` draws of `f`, with
/// per-batch accumulation of `f` and of a coefficient vector.
fn draw_mean<F>(runner: &Runner, reps: u64, dim: usize, key: StreamKey, f: F) -> (f64, f64, Vec<f64>)
where
    F: Fn(&mut crate::rng::RngStream, &mut [f64]) -> f64 + Sync + Send,
{
    let nb = reps.div_ceil(DRAW_BATCH);
    let parts = runner.map(0..nb, |b| {
        let size = DRAW_BATCH.min(reps - b * DRAW_BATCH);
        let mut rng = key.child(b).rng();
        let mut coef = vec![0.0; dim];
        let mut vals = Vec::with_capacity(size as usize);
        for _ in 0..size {
            vals.push(f(&mut rng, &mut coef));
        }
        let s = pairwise_sum(&vals);
        let mean = s / size as f64;
        let ss = pairwise_sum(&vals.iter().map(|v| (v - mean).powi(2)).collect::<Vec<_>>());
        (size, s, ss, mean, coef)
    });
    let n = reps as f64;
    let total = pairwise_sum(&parts.iter().map(|p| p.1).collect::<Vec<_>>());
    let mean = total / n;
    // pooled within-batch plus between-batch sums of squares
    let ss: f64 = parts.iter().map(|p| p.2 + p.0 as f64 * (p.3 - mean).powi(2)).sum();
    let se = if reps > 1 { (ss / (n - 1.0) / n).sqrt() } else { 0.0 };
    let mut coef = vec![0.0; dim];
    for p in &parts {
        for (c, v) in coef.iter_mut().zip(&p.4) {
            *c += v;
        }
    }
    coef.iter_mut().for_each(|c| *c /= n);
    (mean, se, coef)
}

/// `E[Û(x+X); x+X ≥ 0] - Û(x)` for `U`, `E[V̂(x+X); x+X < 0] - V̂(x)` for `V`.
pub fn harmonicity_residual(
    runner: &Runner,
    law: &IncrementLaw,
    table: &RenewalTable,
    x: f64,
    reps: u64,
    key: StreamKey,
) -> Result<WeightedEstimate> {
    law.validate()?;
    let t0 = table.kind.abscissa(x)?;
    if reps == 0 {
        return Err(Error::domain("reps must be at least 1"));
    }
    let knots = table.knots();
    let kind = table.kind;
    let (mean, se, mut coef) = draw_mean(runner, reps, table.grid.len(), key, |rng, coef| {
        let y = x + law.sample(rng);
        let alive = match kind {
            Renewal::U => y >= 0.0,
            Renewal::V => y < 0.0,
        };
        if !alive {
            return 0.0;
        }
        let t = y.abs();
        table.add_weights(&knots, t, 1.0, coef);
        RenewalTable::weights(&knots, t).iter().map(|&(k, w)| w * knots[k].value).sum()
    });
    let here = table.eval(x)?;
    table.add_weights(&knots, t0, -1.0, &mut coef);
    Ok(WeightedEstimate {
        estimate: mean - here,
        se,
        table_se: table.linear_se(&coef),
    })
}

/// Path functionals `O_n` evaluated on the positions `S_0, ..., S_n`.
#[derive(Clone)]
pub enum PathFunctional {
    One,
    /// `e^{-S_n}`
    ExpNegEnd,
    /// `1 / (1 + Σ_{k=1}^n e^{-S_k})`
    InvOnePlusSum,
    /// Any bounded evaluator.
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for PathFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PathFunctional {
    pub fn name(&self) -> &'static str {
        match self {
            PathFunctional::One => "one",
            PathFunctional::ExpNegEnd => "exp_neg_end",
            PathFunctional::InvOnePlusSum => "inv_one_plus_sum",
            PathFunctional::Custom(_) => "custom",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "one" => Ok(PathFunctional::One),
            "exp_neg_end" => Ok(PathFunctional::ExpNegEnd),
            "inv_one_plus_sum" => Ok(PathFunctional::InvOnePlusSum),
            other => Err(Error::UnknownFunctional(other.to_string())),
        }
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        match self {
            PathFunctional::One => 1.0,
            PathFunctional::ExpNegEnd => (-s[s.len() - 1]).exp(),
            PathFunctional::InvOnePlusSum => 1.0 / (1.0 + s[1..].iter().map(|v| (-v).exp()).sum::<f64>()),
            PathFunctional::Custom(f) => f(s),
        }
    }
}

fn fill_path<R: rand::Rng + ?Sized>(law: &IncrementLaw, start: f64, s: &mut [f64], rng: &mut R) {
    s[0] = start;
    for k in 1..s.len() {
        s[k] = s[k - 1] + law.sample(rng);
    }
}

/// `E_x^+[O_n] = E_x[O_n Û(S_n); L_n ≥ 0] / Û(x)`, paths started at `x`.
#[allow(clippy::too_many_arguments)]
pub fn plus_measure_expectation(
    runner: &Runner,
    law: &IncrementLaw,
    functional: &PathFunctional,
    n: usize,
    x: f64,
    reps: u64,
    table_u: &RenewalTable,
    key: StreamKey,
) -> Result<WeightedEstimate> {
    law.validate()?;
    if table_u.kind != Renewal::U {
        return Err(Error::domain("the plus measure needs a U table"));
    }
    let t0 = Renewal::U.abscissa(x)?;
    if reps == 0 {
        return Err(Error::domain("reps must be at least 1"));
    }
    if n == 0 {
        return Ok(WeightedEstimate {
            estimate: functional.eval(&[x]),
            se: 0.0,
            table_se: 0.0,
        });
    }
    let knots = table_u.knots();
    let ux = table_u.eval(x)?;
    let (mean, se, coef) = draw_mean(runner, reps, table_u.grid.len(), key, |rng, coef| {
        let mut s = vec![0.0; n + 1];
        fill_path(law, x, &mut s, rng);
        if s.iter().any(|v| *v < 0.0) {
            return 0.0;
        }
        let t = s[n];
        let u: f64 = RenewalTable::weights(&knots, t).iter().map(|&(k, w)| w * knots[k].value).sum();
        let o = functional.eval(&s);
        table_u.add_weights(&knots, t, o / ux, coef);
        o * u / ux
    });
    // linearized in the table: d(A/Û(x)) = dA/Û(x) - est dÛ(x)/Û(x)
    let mut coef = coef;
    table_u.add_weights(&knots, t0, -mean / ux, &mut coef);
    Ok(WeightedEstimate {
        estimate: mean,
        se,
        table_se: table_u.linear_se(&coef),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    /// `L_n ≥ -x`
    MinAbove { x: f64 },
    /// `M_n < -x`
    MaxBelow { x: f64 },
    /// `τ(n) = r`
    TauAt { r: usize },
}

impl Condition {
    fn holds(&self, s: &[f64]) -> bool {
        match *self {
            Condition::MinAbove { x } => s.iter().all(|v| *v >= -x),
            Condition::MaxBelow { x } => s[1..].iter().all(|v| *v < -x),
            Condition::TauAt { r } => {
                let m = s[r];
                s[..r].iter().all(|v| *v > m) && s[r + 1..].iter().all(|v| *v >= m)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionalEstimate {
    pub estimate: f64,
    pub se: f64,
    pub acceptance_rate: f64,
    pub accepted: u64,
}

/// Rejection estimate of `E[O_n | condition]` from `reps` paths.
pub fn conditional_expectation(
    runner: &Runner,
    law: &IncrementLaw,
    functional: &PathFunctional,
    condition: Condition,
    n: usize,
    reps: u64,
    key: StreamKey,
) -> Result<ConditionalEstimate> {
    law.validate()?;
    match condition {
        Condition::MinAbove { x } | Condition::MaxBelow { x } if !(x >= 0.0 && x.is_finite()) => {
            return Err(Error::domain(format!("condition level x = {x} must be >= 0")));
        }
        Condition::TauAt { r } => {
            if r > n {
                return Err(Error::domain(format!("r = {r} exceeds n = {n}")));
            }
            if !law.is_continuous() {
                return Err(Error::Lattice(format!(
                    "conditioning on the first-minimum time needs a continuous law, got {}",
                    law.family_name()
                )));
            }
        }
        _ => {}
    }
    if n == 0 || reps == 0 {
        return Err(Error::domain("n and reps must be at least 1"));
    }
    let nb = reps.div_ceil(DRAW_BATCH);
    let parts = runner.map(0..nb, |b| {
        let size = DRAW_BATCH.min(reps - b * DRAW_BATCH);
        let mut rng = key.child(b).rng();
        let mut s = vec![0.0; n + 1];
        let mut vals = Vec::new();
        for _ in 0..size {
            fill_path(law, 0.0, &mut s, &mut rng);
            if condition.holds(&s) {
                vals.push(functional.eval(&s));
            }
        }
        vals
    });
    let vals: Vec<f64> = parts.into_iter().flatten().collect();
    let a = vals.len() as u64;
    if a == 0 {
        return Err(Error::NoSample(format!("no path out of {reps} met {condition:?} at n = {n}")));
    }
    let mean = pairwise_sum(&vals) / a as f64;
    let se = if a > 1 {
        let ss = pairwise_sum(&vals.iter().map(|v| (v - mean).powi(2)).collect::<Vec<_>>());
        (ss / (a - 1) as f64 / a as f64).sqrt()
    } else {
        0.0
    };
    Ok(ConditionalEstimate {
        estimate: mean,
        se,
        acceptance_rate: a as f64 / reps as f64,
        accepted: a,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltedMeasureSpec {
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
}

/// `∫_0^∞ e^{-λt} R(t) dt` with `R` the piecewise-linear table, each piece
/// and the linear tail integrated against the exponential in closed form.
fn laplace_integral(table: &RenewalTable, lambda: f64) -> f64 {
    let k = table.knots();
    // ∫_0^h e^{-λu} (a + b u) du
    let piece = |a: f64, b: f64, h: f64| {
        let e = (-lambda * h).exp();
        a * (1.0 - e) / lambda + b * ((1.0 - e) / (lambda * lambda) - h * e / lambda)
    };
    let mut s = 0.0;
    for j in 1..k.len() {
        let h = k[j].t - k[j - 1].t;
        let b = (k[j].value - k[j - 1].value) / h;
        s += (-lambda * k[j - 1].t).exp() * piece(k[j - 1].value, b, h);
    }
    let last = k.len() - 1;
    let slope = if last == 0 {
        0.0
    } else {
        (k[last].value - k[last - 1].value) / (k[last].t - k[last - 1].t)
    };
    s + (-lambda * k[last].t).exp() * (k[last].value / lambda + slope / (lambda * lambda))
}

pub fn mu_nu_normalizers(table_u: &RenewalTable, table_v: &RenewalTable, lambda: f64) -> Result<TiltedMeasureSpec> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda = {lambda} must be positive")));
    }
    if table_u.kind != Renewal::U || table_v.kind != Renewal::V {
        return Err(Error::domain("expected a U table and a V table"));
    }
    Ok(TiltedMeasureSpec {
        lambda,
        c1: 1.0 / laplace_integral(table_u, lambda),
        c2: 1.0 / laplace_integral(table_v, lambda),
    })
}
