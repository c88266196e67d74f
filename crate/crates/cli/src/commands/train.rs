//! The staged training commands: `train-teacher`, `train-sc`, `distill`.
//!
//! Each works on one fold (`--fold`, default 0) and drops a JSON artifact
//! plus a small report into the run directory. The reports carry the
//! supervisor weight hashes before and after each downstream stage, so it
//! is checkable from the artifacts alone that stage two never touched
//! stage-one weights.

use std::path::PathBuf;

use serde::Serialize;

use tsak_core::artifact::{load_semantic, load_teacher, save_semantic, save_student, save_teacher};
use tsak_core::distill::{
    distill_student_cached, train_semantic, train_teacher, KDConfig, Strategy, TeacherCache,
    TrainHistory,
};
use tsak_core::eval::{cell_config, compute_metrics, fold_splits, labels_of, predict_student, stage_config};
use tsak_core::models::{SemanticClassifier, TeacherNet};
use tsak_core::signal::normalize::NormalizationStats;
use tsak_core::signal::window::WindowedDataset;
use tsak_core::util::hex32;
use tsak_core::{Error, Result};

use crate::runctx::RunCtx;

pub fn teacher_path(ctx: &RunCtx, fold: usize) -> PathBuf {
    ctx.path(&format!("teacher_fold{fold}.json"))
}

pub fn semantic_path(ctx: &RunCtx, fold: usize) -> PathBuf {
    ctx.path(&format!("semantic_fold{fold}.json"))
}

/// Student artifacts are per-cell: the same fold can hold one student per
/// (strategy, α, τ) without collisions.
pub fn cell_tag(cfg: &KDConfig) -> String {
    format!("{}_a{}_t{}", cfg.strategy.name(), cfg.alpha, cfg.tau)
}

pub fn student_path(ctx: &RunCtx, fold: usize, cfg: &KDConfig) -> PathBuf {
    ctx.path(&format!("student_fold{fold}_{}.json", cell_tag(cfg)))
}

/// Everything the per-fold commands share: the dataset, the chosen fold's
/// window splits, and the fold-fitted normalization stats.
pub struct FoldSetup {
    pub ds: WindowedDataset,
    pub dataset_hash: [u8; 32],
    pub fold_no: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub stats: NormalizationStats,
}

impl FoldSetup {
    pub fn load(ctx: &RunCtx) -> Result<FoldSetup> {
        let (ds, dataset_hash) = ctx.load_dataset()?;
        let plan = ctx.split_plan(&ds)?;
        let fold_no = ctx.fold_no(&plan)?;
        let (train, val, test, stats) =
            fold_splits(&ds, &plan.folds[fold_no], fold_no, &ctx.cfg.stages)?;
        Ok(FoldSetup {
            ds,
            dataset_hash,
            fold_no,
            train,
            val,
            test,
            stats,
        })
    }

    /// Training-side windows (train ∪ validation), sorted: the cache rows a
    /// fold's stage-two work needs.
    fn cache_windows(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.train.iter().chain(self.val.iter()).copied().collect();
        all.sort_unstable();
        all
    }
}

#[derive(Serialize)]
struct StageReport {
    fold: usize,
    stage: &'static str,
    param_hash: String,
    best_epoch: usize,
    epochs_trained: usize,
    best_val_accuracy: f64,
    artifact: String,
}

fn stage_report(
    fold: usize,
    stage: &'static str,
    param_hash: String,
    history: &TrainHistory,
    artifact: &PathBuf,
) -> StageReport {
    StageReport {
        fold,
        stage,
        param_hash,
        best_epoch: history.best_epoch,
        epochs_trained: history.epochs.len(),
        best_val_accuracy: history.best_val_accuracy,
        artifact: artifact.display().to_string(),
    }
}

pub fn teacher(ctx: &RunCtx) -> Result<()> {
    let setup = FoldSetup::load(ctx)?;
    let cfg = stage_config(&ctx.cfg.stages.teacher, setup.fold_no, "teacher");
    let (net, history) = train_teacher(&setup.ds, &setup.stats, &setup.train, &setup.val, &cfg)?;
    let path = teacher_path(ctx, setup.fold_no);
    ctx.write_text(&path, &save_teacher(&net)?)?;
    let report = stage_report(
        setup.fold_no,
        "teacher",
        hex32(&net.param_hash()),
        &history,
        &path,
    );
    ctx.write_json(
        &ctx.path(&format!("teacher_fold{}_report.json", setup.fold_no)),
        &report,
    )?;
    ctx.write_manifest("train-teacher", Some(&setup.dataset_hash))?;
    println!(
        "teacher fold {}: {} params, best val accuracy {:.4} at epoch {}, saved {}",
        setup.fold_no,
        net.param_count(),
        history.best_val_accuracy,
        history.best_epoch,
        path.display()
    );
    Ok(())
}

fn load_frozen_teacher(ctx: &RunCtx, fold: usize) -> Result<TeacherNet> {
    let path = teacher_path(ctx, fold);
    let json = ctx.read_artifact(&path, "run `tsak train-teacher` first")?;
    let net = load_teacher(&json)?;
    net.freeze();
    Ok(net)
}

fn load_frozen_semantic(ctx: &RunCtx, fold: usize) -> Result<SemanticClassifier> {
    let path = semantic_path(ctx, fold);
    let json = ctx.read_artifact(&path, "run `tsak train-sc` first")?;
    let sc = load_semantic(&json)?;
    sc.freeze();
    Ok(sc)
}

#[derive(Serialize)]
struct SemanticReport {
    fold: usize,
    stage: &'static str,
    teacher_hash_before: String,
    teacher_hash_after: String,
    param_hash: String,
    best_epoch: usize,
    epochs_trained: usize,
    best_val_accuracy: f64,
    artifact: String,
}

pub fn semantic(ctx: &RunCtx) -> Result<()> {
    let setup = FoldSetup::load(ctx)?;
    let teacher = load_frozen_teacher(ctx, setup.fold_no)?;
    let teacher_hash_before = hex32(&teacher.param_hash());
    let cache = TeacherCache::build(&teacher, &setup.ds, &setup.stats, &setup.cache_windows())?;
    let cfg = stage_config(&ctx.cfg.stages.semantic, setup.fold_no, "semantic");
    let (sc, history) = train_semantic(&teacher, &cache, &setup.ds, &setup.train, &setup.val, &cfg)?;
    let teacher_hash_after = hex32(&teacher.param_hash());
    if teacher_hash_before != teacher_hash_after {
        return Err(Error::Config(
            "teacher weights changed while training the semantic classifier; \
             the frozen-supervisor invariant is broken"
                .into(),
        ));
    }
    let path = semantic_path(ctx, setup.fold_no);
    ctx.write_text(&path, &save_semantic(&sc)?)?;
    let report = SemanticReport {
        fold: setup.fold_no,
        stage: "semantic",
        teacher_hash_before,
        teacher_hash_after,
        param_hash: hex32(&sc.param_hash()),
        best_epoch: history.best_epoch,
        epochs_trained: history.epochs.len(),
        best_val_accuracy: history.best_val_accuracy,
        artifact: path.display().to_string(),
    };
    ctx.write_json(
        &ctx.path(&format!("semantic_fold{}_report.json", setup.fold_no)),
        &report,
    )?;
    ctx.write_manifest("train-sc", Some(&setup.dataset_hash))?;
    println!(
        "semantic classifier fold {}: best val accuracy {:.4} at epoch {}, saved {}",
        setup.fold_no,
        history.best_val_accuracy,
        history.best_epoch,
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct DistillReport {
    fold: usize,
    stage: &'static str,
    strategy: String,
    alpha: f64,
    tau: f64,
    kd_active: bool,
    teacher_hash_before: Option<String>,
    teacher_hash_after: Option<String>,
    semantic_hash_before: Option<String>,
    semantic_hash_after: Option<String>,
    student_param_hash: String,
    best_epoch: usize,
    epochs_trained: usize,
    best_val_accuracy: f64,
    test_precision: f64,
    test_recall: f64,
    test_f1: f64,
    test_accuracy: f64,
    artifact: String,
}

pub fn distill(ctx: &RunCtx) -> Result<()> {
    let setup = FoldSetup::load(ctx)?;
    let template = &ctx.cfg.stages.student;
    let cell = cell_config(
        template,
        setup.fold_no,
        template.strategy,
        template.alpha,
        template.tau,
    );
    cell.validate()?;
    let kd_active = cell.strategy != Strategy::Baseline && cell.alpha < 1.0;

    let mut supervisors = None;
    if kd_active {
        let teacher = load_frozen_teacher(ctx, setup.fold_no)?;
        let teacher_before = hex32(&teacher.param_hash());
        let mut cache =
            TeacherCache::build(&teacher, &setup.ds, &setup.stats, &setup.cache_windows())?;
        let semantic = if cell.strategy.needs_sc() {
            let sc = load_frozen_semantic(ctx, setup.fold_no)?;
            let before = hex32(&sc.param_hash());
            cache.attach_semantic(&sc)?;
            Some((sc, before))
        } else {
            None
        };
        supervisors = Some((teacher, teacher_before, cache, semantic));
    }

    let cache_ref = supervisors.as_ref().map(|(_, _, cache, _)| cache);
    let (mut student, history) = distill_student_cached(
        cache_ref,
        &setup.ds,
        &setup.stats,
        &setup.train,
        &setup.val,
        &cell,
    )?;

    // Score on the held-out windows before finalization, matching how the
    // sweep evaluates cells.
    let pred = predict_student(&setup.ds, &setup.stats, &setup.test, &student, cell.batch_size)?;
    let truth = labels_of(&setup.ds, &setup.test);
    let (metrics, _) = compute_metrics(&truth, &pred, &setup.ds.class_names)?;

    student.finalize();
    let path = student_path(ctx, setup.fold_no, &cell);
    ctx.write_text(&path, &save_student(&student)?)?;

    let (teacher_hash_before, teacher_hash_after, semantic_hash_before, semantic_hash_after) =
        match &supervisors {
            Some((teacher, before, _, semantic)) => (
                Some(before.clone()),
                Some(hex32(&teacher.param_hash())),
                semantic.as_ref().map(|(_, b)| b.clone()),
                semantic.as_ref().map(|(sc, _)| hex32(&sc.param_hash())),
            ),
            None => (None, None, None, None),
        };
    if teacher_hash_before != teacher_hash_after || semantic_hash_before != semantic_hash_after {
        return Err(Error::Config(
            "supervisor weights changed during distillation; the frozen-supervisor \
             invariant is broken"
                .into(),
        ));
    }

    let report = DistillReport {
        fold: setup.fold_no,
        stage: "student",
        strategy: cell.strategy.name().to_string(),
        alpha: cell.alpha,
        tau: cell.tau,
        kd_active,
        teacher_hash_before,
        teacher_hash_after,
        semantic_hash_before,
        semantic_hash_after,
        student_param_hash: hex32(&student.param_hash()),
        best_epoch: history.best_epoch,
        epochs_trained: history.epochs.len(),
        best_val_accuracy: history.best_val_accuracy,
        test_precision: metrics.precision,
        test_recall: metrics.recall,
        test_f1: metrics.f1,
        test_accuracy: metrics.accuracy,
        artifact: path.display().to_string(),
    };
    ctx.write_json(
        &ctx.path(&format!(
            "student_fold{}_{}_report.json",
            setup.fold_no,
            cell_tag(&cell)
        )),
        &report,
    )?;
    ctx.write_manifest("distill", Some(&setup.dataset_hash))?;
    println!(
        "student fold {} [{}]: test F1 {:.4}, accuracy {:.4}, saved {}",
        setup.fold_no,
        cell_tag(&cell),
        metrics.f1,
        metrics.accuracy,
        path.display()
    );
    Ok(())
}
