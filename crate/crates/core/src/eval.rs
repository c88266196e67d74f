//! Cross-validated evaluation: confusion matrices, macro-averaged metrics,
//! and the ablation grid over (strategy, α, τ).
//!
//! Splits are decided at the session level and checked programmatically:
//! every held-out window is predicted by models that never trained on any
//! window of its session. Within a fold, all grid cells share one trained
//! teacher, one semantic classifier, one representation cache, and one
//! student initialisation seed, so cells differ only in the loss they
//! optimise.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distill::{
    distill_student_cached, predict_windows, student_channel_indices, train_semantic,
    train_teacher, KDConfig, Strategy, TeacherCache, TrainHistory,
};
use crate::error::{Error, Result};
use crate::models::{SemanticClassifier, StudentNet, TeacherNet};
use crate::signal::normalize::NormalizationStats;
use crate::signal::splits::{
    carve_validation, verify_split_hygiene, windows_of_sessions, Fold, SplitPlan,
};
use crate::signal::window::WindowedDataset;
use crate::util::derive_seed;

/// Row-major `C × C` count matrix: rows index the true class, columns the
/// predicted class, so each row sums to that class's test support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> ConfusionMatrix {
        let c = class_names.len();
        ConfusionMatrix {
            class_names,
            counts: vec![0; c * c],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn get(&self, true_class: usize, pred_class: usize) -> u64 {
        self.counts[true_class * self.n_classes() + pred_class]
    }

    pub fn record(&mut self, true_class: usize, pred_class: usize) -> Result<()> {
        let c = self.n_classes();
        if true_class >= c || pred_class >= c {
            return Err(Error::InvalidLabel(format!(
                "label pair (true {true_class}, predicted {pred_class}) outside {c} classes"
            )));
        }
        self.counts[true_class * c + pred_class] += 1;
        Ok(())
    }

    /// Per-class test support (row sum).
    pub fn support(&self, class: usize) -> u64 {
        let c = self.n_classes();
        self.counts[class * c..(class + 1) * c].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn from_labels(
        truth: &[usize],
        pred: &[usize],
        class_names: &[String],
    ) -> Result<ConfusionMatrix> {
        if truth.len() != pred.len() {
            return Err(Error::Shape(format!(
                "{} true labels against {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::InvalidInput(
                "cannot score an empty label vector".into(),
            ));
        }
        let mut m = ConfusionMatrix::new(class_names.to_vec());
        for (&t, &p) in truth.iter().zip(pred) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    /// Elementwise sum; the matrices must describe the same classes.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.class_names != other.class_names {
            return Err(Error::Shape(
                "cannot merge confusion matrices over different class sets".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Square CSV: header row of predicted class names, one row per true
    /// class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true_class");
        for name in &self.class_names {
            let _ = write!(s, ",{name}");
        }
        s.push('\n');
        for (t, name) in self.class_names.iter().enumerate() {
            let _ = write!(s, "{name}");
            for p in 0..self.n_classes() {
                let _ = write!(s, ",{}", self.get(t, p));
            }
            s.push('\n');
        }
        s
    }
}

/// One class's scores. Empty denominators follow the zero convention:
/// a class never predicted has precision 0, a class without test support
/// has recall 0, and F1 is 0 whenever precision + recall is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Macro-averaged scores plus the per-class breakdown they average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Derives macro-averaged metrics from a populated confusion matrix.
pub fn metrics_from_confusion(m: &ConfusionMatrix) -> Result<Metrics> {
    let c = m.n_classes();
    let total = m.total();
    if total == 0 {
        return Err(Error::InvalidInput(
            "cannot derive metrics from an empty confusion matrix".into(),
        ));
    }
    let mut per_class = Vec::with_capacity(c);
    let mut correct = 0u64;
    for k in 0..c {
        let tp = m.get(k, k);
        correct += tp;
        let predicted: u64 = (0..c).map(|t| m.get(t, k)).sum();
        let support = m.support(k);
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support,
        });
    }
    let c_f = c as f64;
    Ok(Metrics {
        precision: per_class.iter().map(|x| x.precision).sum::<f64>() / c_f,
        recall: per_class.iter().map(|x| x.recall).sum::<f64>() / c_f,
        f1: per_class.iter().map(|x| x.f1).sum::<f64>() / c_f,
        accuracy: correct as f64 / total as f64,
        per_class,
    })
}

/// Scores predictions against ground truth: per-class precision/recall/F1
/// under the zero convention, their macro averages, and the confusion
/// matrix they were read from.
pub fn compute_metrics(
    truth: &[usize],
    pred: &[usize],
    class_names: &[String],
) -> Result<(Metrics, ConfusionMatrix)> {
    let m = ConfusionMatrix::from_labels(truth, pred, class_names)?;
    let metrics = metrics_from_confusion(&m)?;
    Ok((metrics, m))
}

pub fn labels_of(ds: &WindowedDataset, indices: &[usize]) -> Vec<usize> {
    indices.iter().map(|&w| ds.labels[w] as usize).collect()
}

/// The ablation grid. Baseline ignores α and τ and contributes a single
/// cell; the feature-alignment strategies ignore τ and expand over α only;
/// the logit strategies expand over the full α × τ product.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub taus: Vec<f64>,
}

impl GridSpec {
    pub fn single(strategy: Strategy, alpha: f64, tau: f64) -> GridSpec {
        GridSpec {
            strategies: vec![strategy],
            alphas: vec![alpha],
            taus: vec![tau],
        }
    }

    /// Expands the grid into distinct (strategy, α, τ) cells, in listed
    /// order. Dimensions a strategy ignores are pinned to 1 so that each
    /// emitted cell names exactly the knobs that shaped it.
    pub fn cells(&self) -> Result<Vec<(Strategy, f64, f64)>> {
        if self.strategies.is_empty() {
            return Err(Error::Config("the sweep grid names no strategies".into()));
        }
        let needs_alpha = self.strategies.iter().any(|s| *s != Strategy::Baseline);
        if needs_alpha && self.alphas.is_empty() {
            return Err(Error::Config("the sweep grid names no alpha values".into()));
        }
        if self.strategies.iter().any(Strategy::uses_tau) && self.taus.is_empty() {
            return Err(Error::Config(
                "the sweep grid names no temperatures but includes a logit strategy".into(),
            ));
        }
        for &a in &self.alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha must lie in [0, 1], got {a}")));
            }
        }
        for &t in &self.taus {
            if !(t > 0.0) {
                return Err(Error::Config(format!(
                    "temperature must be positive, got {t}"
                )));
            }
        }
        let mut cells = Vec::new();
        let mut seen: HashSet<(&'static str, u64, u64)> = HashSet::new();
        for &s in &self.strategies {
            let alphas: &[f64] = if s == Strategy::Baseline {
                &[1.0]
            } else {
                &self.alphas
            };
            let taus: &[f64] = if s.uses_tau() { &self.taus } else { &[1.0] };
            for &a in alphas {
                for &t in taus {
                    if seen.insert((s.name(), a.to_bits(), t.to_bits())) {
                        cells.push((s, a, t));
                    }
                }
            }
        }
        Ok(cells)
    }
}

fn default_val_fraction() -> f64 {
    0.15
}

/// Epoch/patience/seed settings for the three training stages of a run.
/// The student entry is a template: the sweep overrides its strategy, α,
/// and τ per grid cell. `val_fraction` of each fold's training windows is
/// carved off (stratified) to drive early stopping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StagePlan {
    #[serde(default)]
    pub teacher: KDConfig,
    #[serde(default)]
    pub semantic: KDConfig,
    #[serde(default)]
    pub student: KDConfig,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

impl Default for StagePlan {
    fn default() -> StagePlan {
        StagePlan {
            teacher: KDConfig::default(),
            semantic: KDConfig::default(),
            student: KDConfig::default(),
            val_fraction: default_val_fraction(),
        }
    }
}

impl StagePlan {
    pub fn validate(&self) -> Result<()> {
        self.teacher.validate()?;
        self.semantic.validate()?;
        self.student.validate()?;
        if !(self.val_fraction > 0.0 && self.val_fraction <= 0.5) {
            return Err(Error::Config(format!(
                "val_fraction must lie in (0, 0.5], got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Checks that a fold's window splits respect its session boundary: train
/// and validation windows come only from training sessions, test windows
/// only from held-out sessions, and the three sets are pairwise disjoint.
pub fn assert_fold_hygiene(
    ds: &WindowedDataset,
    fold: &Fold,
    train: &[usize],
    val: &[usize],
    test: &[usize],
) -> Result<()> {
    let n_sessions = ds.sessions.len();
    let mut in_train_sessions = vec![false; n_sessions];
    let mut in_test_sessions = vec![false; n_sessions];
    for &s in &fold.train_sessions {
        in_train_sessions[s] = true;
    }
    for &s in &fold.test_sessions {
        if in_train_sessions[s] {
            return Err(Error::Split(format!(
                "session {s} appears on both sides of the fold"
            )));
        }
        in_test_sessions[s] = true;
    }
    let mut seen = vec![false; ds.n_windows()];
    for (&w, role) in train
        .iter()
        .map(|w| (w, "train"))
        .chain(val.iter().map(|w| (w, "validation")))
        .chain(test.iter().map(|w| (w, "test")))
    {
        if seen[w] {
            return Err(Error::Split(format!(
                "window {w} assigned to more than one split"
            )));
        }
        seen[w] = true;
        let sess = ds.window_session[w] as usize;
        let ok = if role == "test" {
            in_test_sessions[sess]
        } else {
            in_train_sessions[sess]
        };
        if !ok {
            return Err(Error::Split(format!(
                "{role} window {w} comes from session {sess}, which is outside the \
                 fold's {role} sessions"
            )));
        }
    }
    Ok(())
}

/// Everything stage two needs from one fold: window splits, normalization
/// fitted on the training sessions only, the frozen teacher and semantic
/// classifier, and their cached representations for every window the fold
/// will touch.
pub struct FoldContext {
    pub fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub stats: NormalizationStats,
    pub teacher: TeacherNet,
    pub semantic: SemanticClassifier,
    pub cache: TeacherCache,
    pub teacher_history: TrainHistory,
    pub semantic_history: TrainHistory,
}

/// A stage config bound to one fold: same knobs, fold-specific seed.
pub fn stage_config(base: &KDConfig, fold: usize, stage: &str) -> KDConfig {
    let mut cfg = base.clone();
    cfg.seed = derive_seed(base.seed, &format!("fold{fold}/{stage}"));
    cfg
}

/// One fold's window splits and training-side normalization stats: test
/// windows from the held-out sessions, the rest carved (stratified, with a
/// fold-specific seed) into train and validation, stats fitted on the
/// training sessions' extrema only.
pub fn fold_splits(
    ds: &WindowedDataset,
    fold: &Fold,
    fold_no: usize,
    stages: &StagePlan,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>, NormalizationStats)> {
    stages.validate()?;
    let test = windows_of_sessions(ds, &fold.test_sessions);
    let pool = windows_of_sessions(ds, &fold.train_sessions);
    let carve_seed = derive_seed(stages.teacher.seed, &format!("fold{fold_no}/carve"));
    let (train, val) = carve_validation(ds, &pool, stages.val_fraction, carve_seed);
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::Split(format!(
            "fold {fold_no} splits into {} train / {} validation / {} test windows; \
             every part must be non-empty",
            train.len(),
            val.len(),
            test.len()
        )));
    }
    assert_fold_hygiene(ds, fold, &train, &val, &test)?;
    let extrema: Vec<Vec<(f64, f64)>> = fold
        .train_sessions
        .iter()
        .map(|&s| ds.sessions[s].channel_extrema.clone())
        .collect();
    let stats =
        NormalizationStats::from_extrema(&extrema, &ds.channels, format!("fold{fold_no}-train"))?;
    Ok((train, val, test, stats))
}

/// Runs stage one for a fold: fits normalization on the training sessions,
/// trains and freezes the teacher, trains and freezes the semantic
/// classifier, and caches supervisor outputs for train, validation, and
/// test windows.
pub fn prepare_fold(
    ds: &WindowedDataset,
    fold: &Fold,
    fold_no: usize,
    stages: &StagePlan,
) -> Result<FoldContext> {
    let (train, val, test, stats) = fold_splits(ds, fold, fold_no, stages)?;

    let teacher_cfg = stage_config(&stages.teacher, fold_no, "teacher");
    let (teacher, teacher_history) = train_teacher(ds, &stats, &train, &val, &teacher_cfg)?;
    teacher.freeze();

    let mut cached: Vec<usize> = train
        .iter()
        .chain(&val)
        .chain(&test)
        .copied()
        .collect();
    cached.sort_unstable();
    let mut cache = TeacherCache::build(&teacher, ds, &stats, &cached)?;

    let semantic_cfg = stage_config(&stages.semantic, fold_no, "semantic");
    let (semantic, semantic_history) =
        train_semantic(&teacher, &cache, ds, &train, &val, &semantic_cfg)?;
    semantic.freeze();
    cache.attach_semantic(&semantic)?;

    Ok(FoldContext {
        fold: fold_no,
        train,
        val,
        test,
        stats,
        teacher,
        semantic,
        cache,
        teacher_history,
        semantic_history,
    })
}

/// One fold's scores for one model.
#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub best_epoch: usize,
    pub epochs_trained: usize,
    pub best_val_accuracy: f64,
}

impl FoldContext {
    /// Scores the frozen teacher on this fold's held-out windows.
    pub fn teacher_fold_result(&self, ds: &WindowedDataset) -> Result<FoldResult> {
        let pred = self.cache.teacher_predictions(&self.test)?;
        let truth = labels_of(ds, &self.test);
        let (metrics, confusion) = compute_metrics(&truth, &pred, &ds.class_names)?;
        Ok(FoldResult {
            fold: self.fold,
            metrics,
            confusion,
            best_epoch: self.teacher_history.best_epoch,
            epochs_trained: self.teacher_history.epochs.len(),
            best_val_accuracy: self.teacher_history.best_val_accuracy,
        })
    }
}

/// Eval-mode student predictions over `windows`: the student sees only its
/// accelerometer channels, and a fixed eval stream stands in for the
/// dropout rng (inactive outside training).
pub fn predict_student(
    ds: &WindowedDataset,
    stats: &NormalizationStats,
    windows: &[usize],
    net: &StudentNet,
    batch_size: usize,
) -> Result<Vec<usize>> {
    let accel = student_channel_indices(ds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    predict_windows(ds, stats, windows, Some(&accel), batch_size, |x| {
        Ok(net.forward(x, false, &mut rng)?.1)
    })
}

/// Trains one grid cell's student against the fold's cached supervisors
/// and scores it on the held-out windows.
pub fn evaluate_cell(
    ds: &WindowedDataset,
    cache: &TeacherCache,
    stats: &NormalizationStats,
    train: &[usize],
    val: &[usize],
    test: &[usize],
    fold: usize,
    cfg: &KDConfig,
) -> Result<FoldResult> {
    let (student, history) = distill_student_cached(Some(cache), ds, stats, train, val, cfg)?;
    let pred = predict_student(ds, stats, test, &student, cfg.batch_size)?;
    let truth = labels_of(ds, test);
    let (metrics, confusion) = compute_metrics(&truth, &pred, &ds.class_names)?;
    Ok(FoldResult {
        fold,
        metrics,
        confusion,
        best_epoch: history.best_epoch,
        epochs_trained: history.epochs.len(),
        best_val_accuracy: history.best_val_accuracy,
    })
}

/// Per-fold results and fold means for one grid cell (or for the teacher,
/// reported under the pseudo-strategy name `teacher`).
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub strategy: String,
    pub alpha: f64,
    pub tau: f64,
    pub folds: Vec<FoldResult>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub mean_accuracy: f64,
}

impl CellResult {
    fn new(strategy: String, alpha: f64, tau: f64, folds: Vec<FoldResult>) -> CellResult {
        let n = folds.len().max(1) as f64;
        let mean = |f: &dyn Fn(&FoldResult) -> f64| folds.iter().map(|r| f(r)).sum::<f64>() / n;
        CellResult {
            strategy,
            alpha,
            tau,
            mean_precision: mean(&|r| r.metrics.precision),
            mean_recall: mean(&|r| r.metrics.recall),
            mean_f1: mean(&|r| r.metrics.f1),
            mean_accuracy: mean(&|r| r.metrics.accuracy),
            folds,
        }
    }
}

/// The assembled sweep: one row per evaluated cell, teacher first when
/// included, grid cells in grid order.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsTable {
    pub scheme: String,
    pub folds_evaluated: usize,
    pub cells: Vec<CellResult>,
}

impl MetricsTable {
    pub fn cell(&self, strategy: &str, alpha: f64, tau: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.alpha == alpha && c.tau == tau)
    }

    pub fn cells_named<'a>(&'a self, strategy: &'a str) -> impl Iterator<Item = &'a CellResult> {
        self.cells.iter().filter(move |c| c.strategy == strategy)
    }

    fn per_fold_rows(&self, teacher: bool) -> String {
        let mut s = String::from("strategy,alpha,tau,fold,precision,recall,f1\n");
        for cell in &self.cells {
            if (cell.strategy == "teacher") != teacher {
                continue;
            }
            for r in &cell.folds {
                let _ = writeln!(
                    s,
                    "{},{:.6},{:.6},{},{:.6},{:.6},{:.6}",
                    cell.strategy,
                    cell.alpha,
                    cell.tau,
                    r.fold,
                    r.metrics.precision,
                    r.metrics.recall,
                    r.metrics.f1
                );
            }
        }
        s
    }

    /// Long-format per-fold rows, one per grid cell and fold; the teacher
    /// is reported separately by [`MetricsTable::teacher_csv`].
    pub fn ablation_csv(&self) -> String {
        self.per_fold_rows(false)
    }

    /// The teacher's per-fold rows, same columns as the ablation table.
    pub fn teacher_csv(&self) -> String {
        self.per_fold_rows(true)
    }

    /// Fold-mean rows, one per cell.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("strategy,alpha,tau,folds,precision,recall,f1\n");
        for cell in &self.cells {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{},{:.6},{:.6},{:.6}",
                cell.strategy,
                cell.alpha,
                cell.tau,
                cell.folds.len(),
                cell.mean_precision,
                cell.mean_recall,
                cell.mean_f1
            );
        }
        s
    }

    /// Long-format confusion counts for every cell and fold.
    pub fn confusion_csv(&self) -> String {
        let mut s =
            String::from("strategy,alpha,tau,fold,true_idx,pred_idx,true_class,pred_class,count\n");
        for cell in &self.cells {
            for r in &cell.folds {
                let c = r.confusion.n_classes();
                for t in 0..c {
                    for p in 0..c {
                        let _ = writeln!(
                            s,
                            "{},{:.6},{:.6},{},{},{},{},{},{}",
                            cell.strategy,
                            cell.alpha,
                            cell.tau,
                            r.fold,
                            t,
                            p,
                            r.confusion.class_names[t],
                            r.confusion.class_names[p],
                            r.confusion.get(t, p)
                        );
                    }
                }
            }
        }
        s
    }
}

/// Knobs that bound a sweep without changing any result row: how many of
/// the plan's folds to run, how many worker threads may train independent
/// grid cells concurrently, and whether to score the teacher alongside.
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub fold_limit: Option<usize>,
    pub workers: usize,
    pub include_teacher: bool,
}

impl Default for SweepOptions {
    fn default() -> SweepOptions {
        SweepOptions {
            fold_limit: None,
            workers: 1,
            include_teacher: true,
        }
    }
}

/// The student config for one grid cell. Every cell of a fold shares one
/// derived seed, so cells start from identical weights and differ only in
/// the loss they optimise.
pub fn cell_config(
    template: &KDConfig,
    fold: usize,
    s: Strategy,
    alpha: f64,
    tau: f64,
) -> KDConfig {
    let mut cfg = stage_config(template, fold, "student");
    cfg.strategy = s;
    cfg.alpha = alpha;
    cfg.tau = tau;
    cfg
}

/// Runs the full grid over the plan's folds. Stage one runs once per fold;
/// the fold's grid cells then share its cache and student seed, so a
/// sweep's rows are reproducible cell by cell and independent of the
/// worker count.
pub fn run_sweep(
    ds: &WindowedDataset,
    plan: &SplitPlan,
    grid: &GridSpec,
    stages: &StagePlan,
    opts: &SweepOptions,
) -> Result<MetricsTable> {
    stages.validate()?;
    verify_split_hygiene(ds, plan)?;
    let cells = grid.cells()?;
    let n_folds = plan.folds.len().min(opts.fold_limit.unwrap_or(usize::MAX));
    if n_folds == 0 {
        return Err(Error::Split("no folds to evaluate".into()));
    }
    let pool = if opts.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(opts.workers)
                .build()
                .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?,
        )
    } else {
        None
    };
    let mut teacher_folds: Vec<FoldResult> = Vec::new();
    let mut per_cell: Vec<Vec<FoldResult>> = (0..cells.len()).map(|_| Vec::new()).collect();
    for fold_no in 0..n_folds {
        let ctx = prepare_fold(ds, &plan.folds[fold_no], fold_no, stages)?;
        if opts.include_teacher {
            teacher_folds.push(ctx.teacher_fold_result(ds)?);
        }
        let configs: Vec<KDConfig> = cells
            .iter()
            .map(|&(s, a, t)| cell_config(&stages.student, fold_no, s, a, t))
            .collect();
        let run_one = |cfg: &KDConfig| {
            evaluate_cell(
                ds, &ctx.cache, &ctx.stats, &ctx.train, &ctx.val, &ctx.test, fold_no, cfg,
            )
        };
        let fold_results: Vec<FoldResult> = match &pool {
            Some(p) => p.install(|| configs.par_iter().map(run_one).collect::<Result<_>>())?,
            None => configs.iter().map(run_one).collect::<Result<_>>()?,
        };
        for (slot, result) in per_cell.iter_mut().zip(fold_results) {
            slot.push(result);
        }
    }
    let mut out = Vec::with_capacity(cells.len() + 1);
    if opts.include_teacher {
        out.push(CellResult::new("teacher".into(), 1.0, 1.0, teacher_folds));
    }
    for (&(s, a, t), folds) in cells.iter().zip(per_cell) {
        out.push(CellResult::new(s.name().to_string(), a, t, folds));
    }
    Ok(MetricsTable {
        scheme: plan.scheme.name().to_string(),
        folds_evaluated: n_folds,
        cells: out,
    })
}

/// Cross-validates a single configuration: a one-cell sweep whose student
/// stage is the given config.
pub fn cross_validate(
    ds: &WindowedDataset,
    plan: &SplitPlan,
    stages: &StagePlan,
    cfg: &KDConfig,
    opts: &SweepOptions,
) -> Result<MetricsTable> {
    let grid = GridSpec::single(cfg.strategy, cfg.alpha, cfg.tau);
    let stages = StagePlan {
        student: cfg.clone(),
        ..stages.clone()
    };
    run_sweep(ds, plan, &grid, &stages, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::pipeline::{build_dataset, PreprocessConfig};
    use crate::signal::splits::{build_splits, SplitScheme};
    use crate::synth::{generate, synth_class_names, SynthSpec};
    use rand::Rng;

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|k| format!("C{k}")).collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let truth = vec![0, 1, 2, 3, 2, 1, 0, 3];
        let (m, cm) = compute_metrics(&truth, &truth, &names(4)).unwrap();
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.accuracy, 1.0);
        for (k, pc) in m.per_class.iter().enumerate() {
            assert_eq!(pc.f1, 1.0);
            assert_eq!(pc.support, 2);
            assert_eq!(cm.get(k, k), 2);
        }
        assert_eq!(cm.total(), 8);
        assert_eq!(cm.counts.iter().filter(|&&x| x > 0).count(), 4);
    }

    #[test]
    fn collapsed_predictor_counting_oracle() {
        // Balanced four-class truth, every prediction class 0: only class 0
        // scores, with precision 1/4 and recall 1, so the macro averages
        // are 1/16 and 1/4 exactly.
        let truth = vec![0, 0, 1, 1, 2, 2, 3, 3];
        let pred = vec![0; 8];
        let (m, cm) = compute_metrics(&truth, &pred, &names(4)).unwrap();
        assert_eq!(m.per_class[0].precision, 0.25);
        assert_eq!(m.per_class[0].recall, 1.0);
        for pc in &m.per_class[1..] {
            assert_eq!(pc.precision, 0.0);
            assert_eq!(pc.recall, 0.0);
            assert_eq!(pc.f1, 0.0);
        }
        assert_eq!(m.precision, 0.0625);
        assert_eq!(m.recall, 0.25);
        assert_eq!(m.accuracy, 0.25);
        for k in 0..4 {
            assert_eq!(cm.support(k), 2);
            assert_eq!(cm.get(k, 0), 2);
        }
    }

    #[test]
    fn hand_counted_macro_f1() {
        // Class 0: P=1, R=1/2, F1=2/3. Class 1: P=2/3, R=1, F1=4/5.
        // Macro-F1 = (2/3 + 4/5)/2 = 11/15.
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 1, 1, 1];
        let (m, _) = compute_metrics(&truth, &pred, &names(2)).unwrap();
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.per_class[1].f1 - 0.8).abs() < 1e-12);
        assert!((m.f1 - 11.0 / 15.0).abs() < 1e-12);
        assert!((m.precision - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((m.recall - 0.75).abs() < 1e-12);
    }

    #[test]
    fn scoring_rejects_bad_inputs() {
        let Err(e) = compute_metrics(&[0, 1], &[0], &names(2)) else {
            panic!("length mismatch must be rejected")
        };
        assert!(matches!(e, Error::Shape(_)));
        let Err(e) = compute_metrics(&[0, 2], &[0, 0], &names(2)) else {
            panic!("out-of-range label must be rejected")
        };
        assert!(matches!(e, Error::InvalidLabel(_)));
        let Err(e) = compute_metrics(&[], &[], &names(2)) else {
            panic!("empty labels must be rejected")
        };
        assert!(matches!(e, Error::InvalidInput(_)));
    }

    #[test]
    fn confusion_invariants_on_random_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth: Vec<usize> = (0..500).map(|_| rng.gen_range(0..5)).collect();
        let pred: Vec<usize> = (0..500).map(|_| rng.gen_range(0..5)).collect();
        let (m, cm) = compute_metrics(&truth, &pred, &names(5)).unwrap();
        assert_eq!(cm.total(), 500);
        for k in 0..5 {
            let support = truth.iter().filter(|&&t| t == k).count() as u64;
            assert_eq!(cm.support(k), support);
            assert_eq!(m.per_class[k].support, support);
        }
        for v in [m.precision, m.recall, m.f1, m.accuracy] {
            assert!((0.0..=1.0).contains(&v));
        }
        // The two scoring paths agree bit for bit.
        let again = metrics_from_confusion(&cm).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn confusion_square_csv_shape() {
        let cm = ConfusionMatrix::from_labels(&[0, 1, 1], &[0, 1, 0], &names(2)).unwrap();
        let csv = cm.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "true_class,C0,C1");
        assert_eq!(lines[1], "C0,1,0");
        assert_eq!(lines[2], "C1,1,1");
    }

    #[test]
    fn grid_cell_cardinality() {
        let g = GridSpec {
            strategies: vec![Strategy::SCLogit],
            alphas: vec![0.99],
            taus: vec![1.0, 4.0, 20.0],
        };
        assert_eq!(g.cells().unwrap().len(), 3);

        let g = GridSpec {
            strategies: vec![Strategy::SCLogit, Strategy::Logit],
            alphas: vec![0.99],
            taus: vec![1.0, 4.0, 20.0],
        };
        assert_eq!(g.cells().unwrap().len(), 6);

        // Baseline collapses to one cell no matter the grid axes.
        let g = GridSpec {
            strategies: vec![Strategy::Baseline],
            alphas: vec![0.5, 0.99],
            taus: vec![1.0, 4.0],
        };
        assert_eq!(g.cells().unwrap(), vec![(Strategy::Baseline, 1.0, 1.0)]);

        // Feature strategies ignore the temperature axis.
        let g = GridSpec {
            strategies: vec![Strategy::CombiRep],
            alphas: vec![0.5, 0.99],
            taus: vec![1.0, 4.0],
        };
        assert_eq!(g.cells().unwrap().len(), 2);

        // Duplicate specifications collapse too.
        let g = GridSpec {
            strategies: vec![Strategy::Logit, Strategy::Logit],
            alphas: vec![0.99, 0.99],
            taus: vec![4.0],
        };
        assert_eq!(g.cells().unwrap().len(), 1);

        let g = GridSpec {
            strategies: vec![],
            alphas: vec![0.99],
            taus: vec![4.0],
        };
        assert!(g.cells().is_err());
        let g = GridSpec {
            strategies: vec![Strategy::Logit],
            alphas: vec![0.99],
            taus: vec![],
        };
        assert!(g.cells().is_err());
    }

    #[test]
    fn fold_hygiene_catches_leaks() {
        let (ds, _) = tiny_dataset(2, 2, 30.0);
        let plan = build_splits(&ds, SplitScheme::LeaveOneSessionOut).unwrap();
        let fold = &plan.folds[0];
        let test = windows_of_sessions(&ds, &fold.test_sessions);
        let pool = windows_of_sessions(&ds, &fold.train_sessions);
        assert_fold_hygiene(&ds, fold, &pool, &[], &test).unwrap();

        // A test window smuggled into training is refused.
        let mut leaky = pool.clone();
        leaky.push(test[0]);
        let Err(e) = assert_fold_hygiene(&ds, fold, &leaky, &[], &test) else {
            panic!("leak must be caught")
        };
        assert!(matches!(e, Error::Split(_)));

        // A window in two splits at once is refused.
        let Err(e) = assert_fold_hygiene(&ds, fold, &pool, &[pool[0]], &test) else {
            panic!("double assignment must be caught")
        };
        assert!(matches!(e, Error::Split(_)));

        // A fold whose session sets overlap is refused.
        let mut bad = fold.clone();
        bad.train_sessions.push(bad.test_sessions[0]);
        let Err(e) = assert_fold_hygiene(&ds, &bad, &pool, &[], &test) else {
            panic!("overlapping sessions must be caught")
        };
        assert!(matches!(e, Error::Split(_)));
    }

    fn tiny_dataset(
        users: usize,
        sessions: usize,
        seconds: f64,
    ) -> (WindowedDataset, SplitPlan) {
        let spec = SynthSpec {
            num_users: users,
            sessions_per_user: sessions,
            session_seconds: seconds,
            seed: 11,
            ..SynthSpec::default()
        };
        let recordings = generate(&spec).unwrap();
        let (ds, _) = build_dataset(
            &recordings,
            synth_class_names(4),
            &PreprocessConfig::default(),
        )
        .unwrap();
        let plan = build_splits(&ds, SplitScheme::LeaveOneSessionOut).unwrap();
        (ds, plan)
    }

    fn quick_stages() -> StagePlan {
        let quick = |seed| KDConfig {
            epochs: 3,
            patience: 3,
            batch_size: 32,
            seed,
            ..KDConfig::default()
        };
        StagePlan {
            teacher: quick(7),
            semantic: quick(7),
            student: quick(7),
            val_fraction: 0.2,
        }
    }

    #[test]
    fn sweep_scores_every_cell_on_every_fold() {
        let (ds, plan) = tiny_dataset(2, 2, 40.0);
        assert_eq!(plan.folds.len(), 2);
        let grid = GridSpec {
            strategies: vec![Strategy::Baseline, Strategy::CombiRep],
            alphas: vec![0.5],
            taus: vec![4.0],
        };
        let table = run_sweep(&ds, &plan, &grid, &quick_stages(), &SweepOptions::default())
            .unwrap();

        // Teacher first, then the two grid cells.
        assert_eq!(table.cells.len(), 3);
        assert_eq!(table.cells[0].strategy, "teacher");
        assert_eq!(table.cells[1].strategy, "baseline");
        assert_eq!(table.cells[2].strategy, "combirep");
        assert_eq!(table.folds_evaluated, 2);

        for cell in &table.cells {
            assert_eq!(cell.folds.len(), 2);
            for r in &cell.folds {
                for v in [r.metrics.precision, r.metrics.recall, r.metrics.f1] {
                    assert!((0.0..=1.0).contains(&v));
                }
                // Reported metrics are exactly what the confusion matrix
                // yields.
                let again = metrics_from_confusion(&r.confusion).unwrap();
                assert_eq!(again, r.metrics);
            }
        }

        // Across the two folds, each window is held out exactly once.
        let held_out: u64 = table.cells[1].folds.iter().map(|r| r.confusion.total()).sum();
        assert_eq!(held_out, ds.n_windows() as u64);

        // CSV shapes: grid rows in the ablation table, teacher rows in its
        // own table with the same columns.
        let ablation = table.ablation_csv();
        assert_eq!(ablation.lines().count(), 1 + 2 * 2);
        assert_eq!(
            ablation.lines().next().unwrap(),
            "strategy,alpha,tau,fold,precision,recall,f1"
        );
        assert!(ablation.lines().nth(1).unwrap().starts_with("baseline,1.000000,1.000000,0,"));
        let teacher = table.teacher_csv();
        assert_eq!(teacher.lines().count(), 1 + 2);
        assert!(teacher.lines().nth(1).unwrap().starts_with("teacher,1.000000,1.000000,0,"));
        let summary = table.summary_csv();
        assert_eq!(summary.lines().count(), 1 + 3);
        let confusion = table.confusion_csv();
        assert_eq!(confusion.lines().count(), 1 + 3 * 2 * 16);

        // Fold means match a direct recomputation; the combirep cell
        // records the pinned tau of 1.
        let cell = table.cell("combirep", 0.5, 1.0).expect("combirep cell");
        assert_eq!(cell.tau, 1.0);
        let mean: f64 =
            cell.folds.iter().map(|r| r.metrics.f1).sum::<f64>() / cell.folds.len() as f64;
        assert_eq!(cell.mean_f1, mean);
    }

    #[test]
    fn single_fold_sweep_is_deterministic() {
        let (ds, plan) = tiny_dataset(2, 2, 30.0);
        let grid = GridSpec::single(Strategy::Baseline, 1.0, 1.0);
        let opts = SweepOptions {
            fold_limit: Some(1),
            ..SweepOptions::default()
        };
        let a = run_sweep(&ds, &plan, &grid, &quick_stages(), &opts).unwrap();
        let b = run_sweep(&ds, &plan, &grid, &quick_stages(), &opts).unwrap();
        assert_eq!(a.ablation_csv(), b.ablation_csv());
        assert_eq!(a.confusion_csv(), b.confusion_csv());
        assert_eq!(a.folds_evaluated, 1);
    }
}
