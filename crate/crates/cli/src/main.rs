//! `bpire <kind> --config FILE [--seed U64] [--workers K] [--out DIR] [--format csv|json]`
//!
//! Exit codes: 0 success, 1 config error, 2 numeric or I/O failure,
//! 3 identity violation (`identities` only).

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use config::{Format, Kind, Loaded};

#[derive(Parser, Debug)]
#[command(name = "bpire", version, about = "Monte Carlo experiments for branching processes in random environment with immigration")]
struct Cli {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "BPIRE_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn identity(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

impl From<bpire::Error> for Failure {
    fn from(e: bpire::Error) -> Self {
        use bpire::Error::*;
        match e {
            InvalidLaw { .. } | Domain(_) | UnknownFunctional(_) | Lattice(_) => Failure::config(e.to_string()),
            Overflow { .. } | NoSample(_) | Numeric(_) | Fit(_) => Failure::numeric(e.to_string()),
        }
    }
}

/// Settings after merging flags, environment and config file.
pub struct Settings {
    pub kind: Kind,
    pub seed: u64,
    pub workers: usize,
    pub format: Format,
    pub out_dir: PathBuf,
}

fn main_inner(cli: Cli) -> Result<(), Failure> {
    let t0 = Instant::now();
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| Failure::config(format!("{}: {e}", cli.config.display())))?;
    let loaded = Loaded::parse(text)?;
    let c = &loaded.config;
    if let Some(k) = c.kind {
        if k != cli.kind {
            return Err(loaded.bad("kind", format!("config is for `{}`, command asks for `{}`", k.name(), cli.kind.name())));
        }
    }
    let workers = match cli.workers.or(c.workers) {
        Some(0) => return Err(loaded.bad("workers", "must be at least 1")),
        Some(w) => w,
        None => 1,
    };
    let settings = Settings {
        kind: cli.kind,
        seed: cli.seed.or(c.seed).unwrap_or(0),
        workers,
        format: cli.format.or(c.format).unwrap_or_default(),
        out_dir: cli.out.or_else(|| c.out_dir.clone()).unwrap_or_else(|| PathBuf::from("bpire-out")),
    };
    let runner = bpire::asymptotics::engine::Runner::new(workers)?;
    let mut out = output::Outputs::new(settings.out_dir.clone())?;
    let result = run::dispatch(&loaded, &settings, &runner, &mut out);
    // identity violations still leave their report and manifest behind
    if result.as_ref().is_ok() || result.as_ref().is_err_and(|f| f.code == 3) {
        out.finish(settings.kind.name(), &loaded.text, settings.seed, workers, t0.elapsed().as_secs_f64())?;
    }
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("bpire: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
