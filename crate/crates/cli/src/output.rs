//! Artifact writing. Every file goes through a temp file in the target
//! directory and a rename, and is listed with its digest in `manifest.json`.

use std::io::Write;
use std::path::{Path, PathBuf};

use bpire::asymptotics::fit::SlopeFit;
use bpire::asymptotics::io::plot_data;
use bpire::asymptotics::series::ScalingSeries;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Artifact {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    kind: &'a str,
    config: String,
    config_sha256: String,
    seed: u64,
    workers: usize,
    wall_time_s: f64,
    artifacts: &'a [Artifact],
    notes: &'a [String],
}

pub struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
    pub notes: Vec<String>,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |e: std::io::Error| Failure::io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

impl Outputs {
    pub fn new(dir: PathBuf) -> Result<Self, Failure> {
        std::fs::create_dir_all(&dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
        Ok(Outputs {
            dir,
            artifacts: vec![],
            notes: vec![],
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::io(format!("{name}: {e}")))?;
        s.push('\n');
        self.write(name, &s)
    }

    /// `log_n, log_est, log_fit` columns for a fitted series.
    pub fn emit_plot_data(&mut self, name: &str, series: &ScalingSeries, fit: &SlopeFit) -> Result<(), Failure> {
        let text = plot_data(series, fit).map_err(|e| Failure::numeric(format!("{name}: {e}")))?;
        self.write(name, &text)
    }

    pub fn finish(self, kind: &str, config_text: &str, seed: u64, workers: usize, wall: f64) -> Result<(), Failure> {
        let m = Manifest {
            tool: "bpire",
            version: env!("CARGO_PKG_VERSION"),
            kind,
            config: config_text.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            workers,
            wall_time_s: wall,
            artifacts: &self.artifacts,
            notes: &self.notes,
        };
        let mut s = serde_json::to_string_pretty(&m).map_err(|e| Failure::io(format!("manifest: {e}")))?;
        s.push('\n');
        write_atomic(&self.dir.join("manifest.json"), s.as_bytes())
    }
}
