//! Shared run-directory context. Every subcommand works inside
//! `<run_root>/<12-hex-prefix>/`, keyed by the config identity hash, so the
//! staged commands (synth → preprocess → train-teacher → … → infer) find
//! each other's artifacts without any extra plumbing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use tsak_core::signal::container::{dataset_hash_hex, load_container};
use tsak_core::signal::splits::{build_splits, SplitPlan};
use tsak_core::signal::window::WindowedDataset;
use tsak_core::util::hex32;
use tsak_core::{Error, Result};

use crate::config::RunConfig;

/// Wraps an io::Error with the path it happened on.
pub fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

pub struct RunCtx {
    pub cfg: RunConfig,
    pub run_dir: PathBuf,
    /// Identity hash of the sealed config; doubles as the exported bundle's
    /// config fingerprint.
    pub identity: [u8; 32],
}

impl RunCtx {
    pub fn new(cfg: RunConfig, run_root: PathBuf) -> Result<RunCtx> {
        let identity = cfg.identity_hash();
        let run_dir = run_root.join(&hex32(&identity)[..12]);
        fs::create_dir_all(&run_dir).map_err(|e| io_at(&run_dir, e))?;
        Ok(RunCtx {
            cfg,
            run_dir,
            identity,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.path("sessions")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.path("dataset.tsakc")
    }

    pub fn write_text(&self, path: &Path, text: &str) -> Result<()> {
        fs::write(path, text).map_err(|e| io_at(path, e))
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        let mut json = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Format(format!("cannot serialize {}: {e}", path.display())))?;
        json.push('\n');
        self.write_text(path, &json)
    }

    /// Reads a staged artifact, turning a missing file into a config error
    /// that says which command produces it.
    pub fn read_artifact(&self, path: &Path, hint: &str) -> Result<String> {
        if !path.exists() {
            return Err(Error::Config(format!(
                "no artifact at {}; {hint}",
                path.display()
            )));
        }
        fs::read_to_string(path).map_err(|e| io_at(path, e))
    }

    pub fn load_dataset(&self) -> Result<(WindowedDataset, [u8; 32])> {
        let path = self.dataset_path();
        if !path.exists() {
            return Err(Error::Config(format!(
                "no dataset at {}; run `tsak preprocess` first",
                path.display()
            )));
        }
        load_container(&path)
    }

    pub fn split_plan(&self, ds: &WindowedDataset) -> Result<SplitPlan> {
        build_splits(ds, self.cfg.scheme()?)
    }

    /// The configured fold index, validated against the plan.
    pub fn fold_no(&self, plan: &SplitPlan) -> Result<usize> {
        if self.cfg.fold >= plan.folds.len() {
            return Err(Error::Config(format!(
                "fold {} is out of range: scheme `{}` yields {} folds",
                self.cfg.fold,
                self.cfg.scheme,
                plan.folds.len()
            )));
        }
        Ok(self.cfg.fold)
    }

    /// Records what ran last in this directory. The manifest is the one
    /// artifact allowed to carry a timestamp; everything tabular must be
    /// byte-reproducible.
    pub fn write_manifest(&self, command: &str, dataset_hash: Option<&[u8; 32]>) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            version: &'a str,
            created_unix: u64,
            run_id: String,
            config_hash: String,
            dataset_hash: Option<String>,
            config: &'a RunConfig,
        }
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            created_unix,
            run_id: hex32(&self.identity)[..12].to_string(),
            config_hash: hex32(&self.identity),
            dataset_hash: dataset_hash.map(dataset_hash_hex),
            config: &self.cfg,
        };
        self.write_json(&self.path("manifest.json"), &manifest)
    }
}
