//! `tsak preprocess`: read session CSVs, run the resample/filter/window
//! pipeline, and save the windowed container the training commands load.

use std::path::PathBuf;

use tsak_core::signal::container::{dataset_hash_hex, save_container};
use tsak_core::signal::csvio::{list_session_files, read_session_file};
use tsak_core::signal::openpack::{merge_openpack_labels, openpack_class_names};
use tsak_core::signal::pipeline::build_dataset;
use tsak_core::synth::synth_class_names;
use tsak_core::{Error, Result};

use crate::runctx::RunCtx;

pub fn run(ctx: &RunCtx, sessions_dir: Option<PathBuf>, labels: &str) -> Result<()> {
    let dir = sessions_dir.unwrap_or_else(|| ctx.sessions_dir());
    let files = list_session_files(&dir)?;
    if files.is_empty() {
        return Err(Error::Config(format!(
            "no session CSVs under {}; run `tsak synth` first or point --sessions-dir \
             at existing recordings",
            dir.display()
        )));
    }
    let mut recordings = Vec::with_capacity(files.len());
    for file in &files {
        recordings.push(read_session_file(file)?);
    }
    let class_names = match labels {
        "synth" => synth_class_names(ctx.cfg.synth.num_classes),
        "openpack" => {
            for session in &mut recordings {
                session.labels = merge_openpack_labels(&session.labels)?;
            }
            openpack_class_names()
        }
        other => {
            return Err(Error::Config(format!(
                "unknown label scheme `{other}` (expected `synth` or `openpack`)"
            )))
        }
    };
    let (ds, report) = build_dataset(&recordings, class_names, &ctx.cfg.preprocess)?;
    let digest = save_container(&ctx.dataset_path(), &ds)?;
    ctx.write_manifest("preprocess", Some(&digest))?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "windowed {} sessions into {} windows x {} channels ({} classes), hash {}",
        ds.sessions.len(),
        ds.labels.len(),
        ds.channels.len(),
        ds.class_names.len(),
        &dataset_hash_hex(&digest)[..12]
    );
    println!("dataset saved to {}", ctx.dataset_path().display());
    Ok(())
}
