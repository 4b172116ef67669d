//! One function per experiment kind.

use bpire::asymptotics::checks::{decomposition_check, duality_check, z_score};
use bpire::asymptotics::engine::{EstimatorResult, Runner, Target};
use bpire::asymptotics::estimators::{estimate_event_prob, estimate_event_prob_reversed, Crossing, EventOptions};
use bpire::asymptotics::fit::{fit_log_slope, SlopeFit};
use bpire::asymptotics::io::{fit_to_json, series_to_csv};
use bpire::asymptotics::series::{
    estimate_walk_functional, scaling_sweep, walk_functional_series, ScalingSeries, SeriesRow, WalkFunctional,
};
use bpire::conditioned::{estimate_U, estimate_V, harmonicity_residual, mu_nu_normalizers, RenewalTable};
use bpire::env::validate_hypotheses;
use bpire::gfalgebra::{clan_prob, Convention};
use bpire::numerics::{central_binomial_over_4n, log_sum_exp};
use bpire::popsim::oracle_counts;
use bpire::rng::StreamKey;
use bpire::walk::simulate_path;
use serde::Serialize;
use serde_json::json;

use crate::config::{Estimator, Format, Kind, Loaded};
use crate::output::Outputs;
use crate::{Failure, Settings};

pub fn dispatch(cfg: &Loaded, s: &Settings, runner: &Runner, out: &mut Outputs) -> Result<(), Failure> {
    match s.kind {
        Kind::Validate => validate(cfg, out),
        Kind::Estimate => estimate(cfg, s, runner, out),
        Kind::Sweep | Kind::Walkseries => series(cfg, s, runner, out),
        Kind::Renewal => renewal(cfg, s, runner, out),
        Kind::Identities => identities(cfg, s, runner, out),
        Kind::Oracle => oracle(cfg, s, out),
    }
}

fn validate(cfg: &Loaded, out: &mut Outputs) -> Result<(), Failure> {
    let law = cfg.law(Kind::Validate)?;
    out.write_json("report.json", &validate_hypotheses(&law)?)
}

fn note_budget(out: &mut Outputs, rows: &[SeriesRow]) {
    for r in rows.iter().filter(|r| r.budget_exceeded) {
        let msg = format!("sample budget exhausted at n = {} before the precision goal", r.n);
        eprintln!("bpire: warning: {msg}");
        out.notes.push(msg);
    }
}

fn write_series(out: &mut Outputs, format: Format, series: &ScalingSeries) -> Result<(), Failure> {
    match format {
        Format::Csv => out.write("series.csv", &series_to_csv(series)),
        Format::Json => out.write_json("series.json", series),
    }
}

fn estimate(cfg: &Loaded, s: &Settings, runner: &Runner, out: &mut Outputs) -> Result<(), Failure> {
    let kind = Kind::Estimate;
    let law = cfg.law(kind)?;
    let regime = cfg.need("regime", &cfg.config.regime, kind)?;
    let n = cfg.need("n", &cfg.config.n, kind)?;
    if n < 2 {
        return Err(cfg.bad("n", "must be at least 2"));
    }
    let i = regime.index(n).map_err(|e| cfg.bad("regime", e))?;
    let opts = cfg.event_options()?;
    let key = StreamKey::root(s.seed);
    let e = match cfg.config.estimator.unwrap_or_default() {
        Estimator::Direct => estimate_event_prob(runner, &law, regime, n, opts, cfg.convention(), key)?,
        Estimator::Reversed => estimate_event_prob_reversed(runner, &law, regime, n, opts, key)?,
    };
    let series = ScalingSeries {
        label: regime.label(),
        regime: Some(regime),
        rows: vec![SeriesRow {
            n,
            i,
            estimate: e.mean,
            stderr: e.stderr,
            nsamples: e.nsamples,
            seed: e.master_seed,
            budget_exceeded: e.budget_exceeded,
        }],
    };
    note_budget(out, &series.rows);
    match s.format {
        Format::Csv => out.write("estimate.csv", &series_to_csv(&series)),
        Format::Json => out.write_json(
            "estimate.json",
            &json!({ "regime": regime, "n": n, "i": i, "result": e }),
        ),
    }
}

fn fit_outputs(out: &mut Outputs, series: &ScalingSeries) -> Result<Option<SlopeFit>, Failure> {
    if series.rows.len() < 3 {
        out.notes.push("fewer than 3 horizons, no slope fit".into());
        return Ok(None);
    }
    let fit = fit_log_slope(series)?;
    let mut text = fit_to_json(&fit);
    text.push('\n');
    out.write("fit.json", &text)?;
    out.emit_plot_data("plot.csv", series, &fit)?;
    Ok(Some(fit))
}

fn series(cfg: &Loaded, s: &Settings, runner: &Runner, out: &mut Outputs) -> Result<(), Failure> {
    let law = cfg.law(s.kind)?;
    let grid = cfg.n_grid(s.kind)?;
    let opts = cfg.event_options()?;
    let key = StreamKey::root(s.seed);
    let series = if s.kind == Kind::Sweep {
        let regime = cfg.need("regime", &cfg.config.regime, s.kind)?;
        for &n in &grid {
            regime.index(n).map_err(|e| cfg.bad("regime", e))?;
        }
        scaling_sweep(runner, &law, regime, &grid, opts, cfg.convention(), key)?
    } else {
        let f = cfg.need("functional", &cfg.config.functional, s.kind)?;
        f.validate(&law).map_err(|e| cfg.bad("functional", e))?;
        walk_functional_series(runner, &law, f, &grid, opts, key)?
    };
    note_budget(out, &series.rows);
    write_series(out, s.format, &series)?;
    fit_outputs(out, &series)?;
    Ok(())
}

fn write_table(out: &mut Outputs, format: Format, name: &str, t: &RenewalTable) -> Result<(), Failure> {
    match format {
        Format::Csv => out.write(&format!("{name}.csv"), &t.to_csv()),
        Format::Json => out.write_json(&format!("{name}.json"), t),
    }
}

fn renewal(cfg: &Loaded, s: &Settings, runner: &Runner, out: &mut Outputs) -> Result<(), Failure> {
    let kind = Kind::Renewal;
    let c = &cfg.config;
    let law = cfg.law(kind)?;
    if c.u_grid.is_none() && c.v_grid.is_none() {
        return Err(Failure::config("config: kind `renewal` needs `u_grid`, `v_grid` or both"));
    }
    let paths = cfg.positive("paths", c.paths, 100_000)?;
    let cap = cfg.positive("cap", c.cap, 1_000_000)?;
    let key = StreamKey::root(s.seed);
    let u = match &c.u_grid {
        Some(g) => Some(estimate_U(runner, &law, g, paths, cap, key.child(0)).map_err(|e| cfg.bad("u_grid", e))?),
        None => None,
    };
    let v = match &c.v_grid {
        Some(g) => Some(estimate_V(runner, &law, g, paths, cap, key.child(1)).map_err(|e| cfg.bad("v_grid", e))?),
        None => None,
    };
    if let Some(t) = &u {
        write_table(out, s.format, "renewal_u", t)?;
    }
    if let Some(t) = &v {
        write_table(out, s.format, "renewal_v", t)?;
    }
    if let Some(xs) = &c.harmonic_x {
        let reps = cfg.positive("reps", c.reps, 1_000_000)?;
        let mut rows = vec![];
        for (k, &x) in xs.iter().enumerate() {
            let tables = [(&u, x >= 0.0, "U"), (&v, x <= 0.0, "V")];
            let mut used = false;
            for (t, side, name) in tables {
                let Some(t) = t.as_ref().filter(|_| side) else { continue };
                used = true;
                let h = harmonicity_residual(runner, &law, t, x, reps, key.path(&[2, k as u64, u64::from(name == "V")]))?;
                rows.push(json!({
                    "table": name,
                    "x": x,
                    "residual": h.estimate,
                    "se": h.se,
                    "table_se": h.table_se,
                    "within_3se": h.estimate.abs() <= 3.0 * h.combined_se(),
                }));
            }
            if !used {
                return Err(cfg.bad("harmonic_x", format!("no table covers x = {x}")));
            }
        }
        out.write_json("harmonicity.json", &rows)?;
    }
    if let Some(lambda) = c.lambda {
        let (Some(tu), Some(tv)) = (&u, &v) else {
            return Err(cfg.bad("lambda", "normalizers need both `u_grid` and `v_grid`"));
        };
        let spec = mu_nu_normalizers(tu, tv, lambda).map_err(|e| cfg.bad("lambda", e))?;
        out.write_json("normalizers.json", &spec)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
    detail: serde_json::Value,
}

fn identities(cfg: &Loaded, s: &Settings, runner: &Runner, out: &mut Outputs) -> Result<(), Failure> {
    let kind = Kind::Identities;
    let c = &cfg.config;
    let law = cfg.law(kind)?;
    let key = StreamKey::root(s.seed);
    let n = c.n.unwrap_or(64);
    let opts = cfg.event_options()?;
    let mut checks = vec![];

    let d = duality_check(runner, &law, n, opts, key.child(0))?;
    checks.push(Check {
        name: "duality",
        pass: d.z <= 4.0 && d.factorization.z <= 4.0,
        detail: serde_json::to_value(&d).unwrap_or_default(),
    });

    let paths = cfg.positive("paths", c.paths, 20_000)?;
    let cap = cfg.positive("cap", c.cap, 100_000)?;
    let reps = cfg.positive("reps", c.reps, 200_000)?;
    let grid: Vec<f64> = (0..=100).map(|k| 0.1 * k as f64).collect();
    let neg: Vec<f64> = grid.iter().map(|x| -x).collect();
    let tu = estimate_U(runner, &law, &grid, paths, cap, key.child(1))?;
    let tv = estimate_V(runner, &law, &neg, paths, cap, key.child(2))?;
    for (name, t, sub) in [("harmonicity_u", &tu, 3), ("harmonicity_v", &tv, 4)] {
        let h = harmonicity_residual(runner, &law, t, 0.0, reps, key.child(sub))?;
        checks.push(Check {
            name,
            pass: h.estimate.abs() <= 3.0 * h.combined_se(),
            detail: serde_json::to_value(h).unwrap_or_default(),
        });
    }

    let envs = cfg.positive("env_samples", c.env_samples, 20)?;
    let branch = cfg.positive("branch_reps", c.branch_reps, 100_000)?;
    let dec = decomposition_check(runner, &law, 8, envs, branch, key.child(5))?;
    checks.push(Check {
        name: "decomposition",
        pass: dec.fraction_within_4se >= 0.95,
        detail: json!({
            "n": dec.n,
            "max_z": dec.max_z,
            "fraction_within_4se": dec.fraction_within_4se,
            "cell_fraction_within_4se": dec.cell_fraction_within_4se,
        }),
    });

    let plain = EventOptions {
        target: Target::Samples(1 << 20),
        crossing: Crossing::Plain,
    };
    let mut rows = vec![];
    let mut pass = true;
    for m in [1usize, 2, 5, 10] {
        let e: EstimatorResult = estimate_walk_functional(runner, &law, WalkFunctional::ProbMinNonneg, m, plain, key.path(&[6, m as u64]))?;
        let want = central_binomial_over_4n(m as u64);
        let z = e.z_to(want);
        pass &= z <= 4.0;
        rows.push(json!({ "n": m, "estimate": e.mean, "stderr": e.stderr, "exact": want, "z": z }));
    }
    checks.push(Check {
        name: "sparre_andersen",
        pass,
        detail: json!(rows),
    });

    let mut rng = key.child(7).rng();
    let mut worst: f64 = 0.0;
    for k in 0..1000usize {
        let path = simulate_path(&law, 2 + k % 31, &mut rng)?;
        let sums = path.partial_sums();
        let log_full = log_sum_exp(sums.iter().map(|v| -v));
        let log_tail = log_sum_exp(sums[1..].iter().map(|v| -v));
        for i in 1..path.n() {
            let hs = clan_prob(&path, i, Convention::Strict)?.log_h;
            let hp = clan_prob(&path, i, Convention::PaperCorollary)?.log_h;
            let lhs = hs + log_full;
            let rhs = hp + log_tail;
            worst = worst.max((lhs - rhs).abs() / (1.0 + hs.abs()));
        }
    }
    checks.push(Check {
        name: "convention_relation",
        pass: worst <= 1e-12,
        detail: json!({ "max_relative_log_deviation": worst }),
    });

    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    out.write_json("identities.json", &checks)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::identity(format!("identity violations: {}", failed.join(", "))))
    }
}

fn oracle(cfg: &Loaded, s: &Settings, out: &mut Outputs) -> Result<(), Failure> {
    let kind = Kind::Oracle;
    let c = &cfg.config;
    let law = cfg.law(kind)?;
    let n = cfg.need("n", &c.n, kind)?;
    if n == 0 {
        return Err(cfg.bad("n", "must be at least 1"));
    }
    let reps = cfg.positive("reps", c.reps, 100_000)?;
    let key = StreamKey::root(s.seed);
    let path = simulate_path(&law, n, &mut key.child(0).rng())?;
    let counts = oracle_counts(&path, reps, key.child(1))?;
    #[derive(Serialize)]
    struct Row {
        i: usize,
        convention: Convention,
        clan_prob: f64,
        freq: f64,
        se: f64,
        z: f64,
    }
    let mut rows = vec![];
    for i in 0..n {
        for conv in [Convention::Strict, Convention::PaperCorollary] {
            let h = clan_prob(&path, i, conv)?.value();
            let (freq, se) = counts.event(i, conv);
            let se_h = (h * (1.0 - h) / reps as f64).sqrt();
            rows.push(Row {
                i,
                convention: conv,
                clan_prob: h,
                freq,
                se,
                z: z_score(freq, se.max(se_h), h, 0.0),
            });
        }
    }
    out.write("path.csv", &path.to_csv())?;
    match s.format {
        Format::Csv => {
            let mut text = String::from("i,convention,clan_prob,freq,se,z\n");
            for r in &rows {
                let conv = match r.convention {
                    Convention::Strict => "strict",
                    Convention::PaperCorollary => "paper_corollary",
                };
                text.push_str(&format!("{},{},{},{},{},{}\n", r.i, conv, r.clan_prob, r.freq, r.se, r.z));
            }
            out.write("oracle.csv", &text)
        }
        Format::Json => out.write_json(
            "oracle.json",
            &json!({ "n": n, "reps": reps, "none": counts.none, "multi": counts.multi, "rows": rows }),
        ),
    }
}
