//! `tsak evaluate` (one cell) and `tsak sweep` (the whole grid): run the
//! cross-validated pipeline end to end and emit the result tables.
//!
//! Outputs in the run directory, all byte-reproducible for a fixed config:
//! `ablation.csv` (per-fold grid rows), `teacher.csv` (per-fold teacher
//! rows), `summary.csv` (fold means per cell), `confusion.csv` (per-fold
//! confusion counts in long form), and `metrics.json` (the full table).

use tsak_core::eval::{cross_validate, run_sweep, GridSpec, MetricsTable, SweepOptions};
use tsak_core::Result;

use crate::runctx::RunCtx;

pub fn evaluate(ctx: &RunCtx, include_teacher: bool) -> Result<()> {
    let (ds, digest) = ctx.load_dataset()?;
    let plan = ctx.split_plan(&ds)?;
    let table = cross_validate(
        &ds,
        &plan,
        &ctx.cfg.stages,
        &ctx.cfg.stages.student,
        &options(ctx, include_teacher),
    )?;
    finish(ctx, "evaluate", &table, &digest)
}

pub fn sweep(ctx: &RunCtx, include_teacher: bool) -> Result<()> {
    let (ds, digest) = ctx.load_dataset()?;
    let plan = ctx.split_plan(&ds)?;
    let grid: GridSpec = ctx.cfg.grid.clone();
    let table = run_sweep(
        &ds,
        &plan,
        &grid,
        &ctx.cfg.stages,
        &options(ctx, include_teacher),
    )?;
    finish(ctx, "sweep", &table, &digest)
}

fn options(ctx: &RunCtx, include_teacher: bool) -> SweepOptions {
    SweepOptions {
        fold_limit: ctx.cfg.fold_limit,
        workers: ctx.cfg.workers,
        include_teacher,
    }
}

fn finish(ctx: &RunCtx, command: &str, table: &MetricsTable, digest: &[u8; 32]) -> Result<()> {
    ctx.write_text(&ctx.path("ablation.csv"), &table.ablation_csv())?;
    ctx.write_text(&ctx.path("teacher.csv"), &table.teacher_csv())?;
    ctx.write_text(&ctx.path("summary.csv"), &table.summary_csv())?;
    ctx.write_text(&ctx.path("confusion.csv"), &table.confusion_csv())?;
    ctx.write_json(&ctx.path("metrics.json"), table)?;
    ctx.write_manifest(command, Some(digest))?;
    print!("{}", table.summary_csv());
    println!(
        "({} folds evaluated under {}; tables written to {})",
        table.folds_evaluated,
        table.scheme,
        ctx.run_dir.display()
    );
    Ok(())
}
