//! Experiment configuration in TOML. Unknown keys are rejected and every
//! error names the key, with its line when the key is present.

use std::path::PathBuf;

use bpire::asymptotics::engine::{Target, DEFAULT_BUDGET};
use bpire::asymptotics::estimators::{Crossing, EventOptions, Regime};
use bpire::asymptotics::series::WalkFunctional;
use bpire::env::IncrementLaw;
use bpire::gfalgebra::Convention;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Validate,
    Estimate,
    Sweep,
    Walkseries,
    Renewal,
    Identities,
    Oracle,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Validate => "validate",
            Kind::Estimate => "estimate",
            Kind::Sweep => "sweep",
            Kind::Walkseries => "walkseries",
            Kind::Renewal => "renewal",
            Kind::Identities => "identities",
            Kind::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Direct,
    Reversed,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub kind: Option<Kind>,
    pub law: Option<IncrementLaw>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub convention: Option<Convention>,

    pub regime: Option<Regime>,
    pub estimator: Option<Estimator>,
    pub n: Option<usize>,
    pub n_grid: Option<Vec<usize>>,
    pub functional: Option<WalkFunctional>,

    pub rel_se: Option<f64>,
    pub samples: Option<u64>,
    pub budget: Option<u64>,
    pub crossing: Option<Crossing>,

    pub u_grid: Option<Vec<f64>>,
    pub v_grid: Option<Vec<f64>>,
    pub paths: Option<u64>,
    pub cap: Option<u64>,
    pub lambda: Option<f64>,
    pub harmonic_x: Option<Vec<f64>>,

    pub reps: Option<u64>,
    pub env_samples: Option<u64>,
    pub branch_reps: Option<u64>,
}

/// A parsed config together with its source text, for line lookups.
pub struct Loaded {
    pub config: Config,
    pub text: String,
}

/// 1-based line of the first assignment to `key`.
pub fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|k| k + 1)
}

impl Loaded {
    pub fn parse(text: String) -> Result<Self, Failure> {
        let config: Config = toml::from_str(&text).map_err(|e| Failure::config(format!("config: {e}")))?;
        Ok(Loaded { config, text })
    }

    /// Validation error about `key`.
    pub fn bad(&self, key: &str, msg: impl std::fmt::Display) -> Failure {
        match line_of(&self.text, key) {
            Some(l) => Failure::config(format!("config line {l}: key `{key}`: {msg}")),
            None => Failure::config(format!("config: key `{key}`: {msg}")),
        }
    }

    pub fn need<T: Clone>(&self, key: &str, v: &Option<T>, kind: Kind) -> Result<T, Failure> {
        v.clone()
            .ok_or_else(|| Failure::config(format!("config: missing key `{key}` required by kind `{}`", kind.name())))
    }

    pub fn law(&self, kind: Kind) -> Result<IncrementLaw, Failure> {
        let law = self.need("law", &self.config.law, kind)?;
        law.validate().map_err(|e| self.bad("law", e))?;
        Ok(law)
    }

    pub fn convention(&self) -> Convention {
        self.config.convention.unwrap_or_default()
    }

    pub fn n_grid(&self, kind: Kind) -> Result<Vec<usize>, Failure> {
        let g = self.need("n_grid", &self.config.n_grid, kind)?;
        if g.is_empty() || g.windows(2).any(|w| w[1] <= w[0]) {
            return Err(self.bad("n_grid", "must be a nonempty strictly increasing list"));
        }
        Ok(g)
    }

    pub fn event_options(&self) -> Result<EventOptions, Failure> {
        let c = &self.config;
        let target = match (c.rel_se, c.samples) {
            (Some(_), Some(_)) => return Err(self.bad("samples", "give either `rel_se` or `samples`, not both")),
            (Some(goal), None) => {
                if !(goal > 0.0 && goal.is_finite()) {
                    return Err(self.bad("rel_se", format!("{goal} is not a positive number")));
                }
                Target::RelSe {
                    goal,
                    budget: c.budget.unwrap_or(DEFAULT_BUDGET),
                }
            }
            (None, Some(s)) => {
                if c.budget.is_some() {
                    return Err(self.bad("budget", "only applies together with `rel_se`"));
                }
                Target::Samples(s)
            }
            (None, None) => Target::Samples(1 << 20),
        };
        Ok(EventOptions {
            target,
            crossing: c.crossing.unwrap_or_default(),
        })
    }

    pub fn positive(&self, key: &str, v: Option<u64>, default: u64) -> Result<u64, Failure> {
        match v {
            Some(0) => Err(self.bad(key, "must be at least 1")),
            Some(x) => Ok(x),
            None => Ok(default),
        }
    }
}
