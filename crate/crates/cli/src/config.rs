//! Run configuration: one JSON document (plus flag overrides) drives every
//! subcommand. A single top-level seed pins the whole run — the per-stage
//! and synthesis seeds are derived from it, never set directly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tsak_core::distill::KDConfig;
use tsak_core::eval::{GridSpec, StagePlan};
use tsak_core::signal::pipeline::PreprocessConfig;
use tsak_core::signal::splits::SplitScheme;
use tsak_core::synth::SynthSpec;
use tsak_core::util::derive_seed;
use tsak_core::{Error, Result};

use tsak_core::distill::Strategy;

/// Everything a run needs, with working defaults for every field so a bare
/// `{}` (or no config file at all) is a valid small experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random stream in the run derives from it.
    pub seed: u64,
    pub synth: SynthSpec,
    pub preprocess: PreprocessConfig,
    /// Cross-validation scheme name: `loso` or `louo`.
    pub scheme: String,
    pub stages: StagePlan,
    /// Ablation grid for `sweep`.
    pub grid: GridSpec,
    /// Fold index used by the staged per-fold commands.
    pub fold: usize,
    /// Evaluate only the first N folds when set.
    pub fold_limit: Option<usize>,
    /// Worker threads for sweep cells.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 7,
            synth: SynthSpec::default(),
            preprocess: PreprocessConfig::default(),
            scheme: "loso".to_string(),
            stages: StagePlan::default(),
            grid: GridSpec {
                strategies: vec![Strategy::Baseline, Strategy::SCLogit],
                alphas: vec![0.99],
                taus: vec![4.0],
            },
            fold: 0,
            fold_limit: None,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse config {}: {e}", path.display())))
    }

    /// Re-derives every stage seed from the top-level seed. Seed fields
    /// inside `synth` and `stages` are derived state: whatever a config
    /// file puts there is replaced here, so one number reproduces a run.
    pub fn seal(&mut self) {
        self.synth.seed = derive_seed(self.seed, "synth");
        self.stages.teacher.seed = derive_seed(self.seed, "teacher");
        self.stages.semantic.seed = derive_seed(self.seed, "semantic");
        self.stages.student.seed = derive_seed(self.seed, "student");
    }

    pub fn validate(&self) -> Result<()> {
        SplitScheme::parse(&self.scheme)?;
        self.stages.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn scheme(&self) -> Result<SplitScheme> {
        SplitScheme::parse(&self.scheme)
    }

    /// Hash identifying the run directory: the dataset recipe,
    /// preprocessing, split scheme, stage plans, and seed. Per-invocation
    /// choices — the student cell (strategy, α, τ), the sweep grid, and
    /// execution knobs (fold, fold_limit, workers) — are deliberately
    /// excluded, so every stage of one experiment lands in one directory
    /// and artifacts for different cells can sit side by side.
    pub fn identity_hash(&self) -> [u8; 32] {
        #[derive(Serialize)]
        struct Identity<'a> {
            seed: u64,
            synth: &'a SynthSpec,
            preprocess: &'a PreprocessConfig,
            scheme: &'a str,
            teacher: &'a KDConfig,
            semantic: &'a KDConfig,
            student_epochs: usize,
            student_patience: usize,
            student_batch_size: usize,
            student_lr: f64,
            val_fraction: f64,
        }
        let id = Identity {
            seed: self.seed,
            synth: &self.synth,
            preprocess: &self.preprocess,
            scheme: &self.scheme,
            teacher: &self.stages.teacher,
            semantic: &self.stages.semantic,
            student_epochs: self.stages.student.epochs,
            student_patience: self.stages.student.patience,
            student_batch_size: self.stages.student.batch_size,
            student_lr: self.stages.student.lr,
            val_fraction: self.stages.val_fraction,
        };
        let json = serde_json::to_string(&id).expect("run identity serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hasher.finalize().into()
    }
}
