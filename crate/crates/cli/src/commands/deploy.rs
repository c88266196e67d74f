//! `tsak export` and `tsak infer`: pack a distilled student into the
//! self-contained bundle, then run the forward-only runtime over windows
//! from a CSV (or windows sampled from the run's dataset).
//!
//! Window CSVs are channel-major: header `id,v0,...,v{C*T-1}` with an
//! optional trailing `label` column, raw (unnormalized) values; the bundle
//! itself carries the normalization statistics.

use std::fs;
use std::path::PathBuf;

use tsak_core::artifact::{export_student, load_student};
use tsak_core::distill::student_channel_indices;
use tsak_core::eval::{cell_config, fold_splits};
use tsak_core::{Error, Result};
use tsak_runtime::StudentRuntime;

use crate::commands::train::{cell_tag, student_path};
use crate::runctx::{io_at, RunCtx};

pub fn export(ctx: &RunCtx, output: Option<PathBuf>) -> Result<()> {
    let (ds, _) = ctx.load_dataset()?;
    let plan = ctx.split_plan(&ds)?;
    let fold_no = ctx.fold_no(&plan)?;
    let template = &ctx.cfg.stages.student;
    let cell = cell_config(
        template,
        fold_no,
        template.strategy,
        template.alpha,
        template.tau,
    );
    let path = student_path(ctx, fold_no, &cell);
    let json = ctx.read_artifact(&path, "run `tsak distill` first")?;
    let student = load_student(&json)?;
    let (_, _, _, stats) = fold_splits(&ds, &plan.folds[fold_no], fold_no, &ctx.cfg.stages)?;
    let accel = student_channel_indices(&ds)?;
    let bytes = export_student(&student, &stats, &accel, &ds.class_names, ctx.identity)?;
    let out = output.unwrap_or_else(|| ctx.path("student.tsak"));
    fs::write(&out, &bytes).map_err(|e| io_at(&out, e))?;
    ctx.write_manifest("export", None)?;
    println!(
        "exported fold {} [{}] to {} ({} bytes, {} weights)",
        fold_no,
        cell_tag(&cell),
        out.display(),
        bytes.len(),
        student.param_count()
    );
    Ok(())
}

/// One row of inference input: an id, the raw window values, and the true
/// label when it is known (sampled rows know theirs).
struct WindowRow {
    id: String,
    values: Vec<f64>,
    truth: Option<usize>,
}

pub fn infer(
    ctx: &RunCtx,
    bundle: Option<PathBuf>,
    input: Option<PathBuf>,
    output: Option<PathBuf>,
    sample: usize,
) -> Result<()> {
    let bundle_path = bundle.unwrap_or_else(|| ctx.path("student.tsak"));
    if !bundle_path.exists() {
        return Err(Error::Config(format!(
            "no bundle at {}; run `tsak export` first",
            bundle_path.display()
        )));
    }
    let bytes = fs::read(&bundle_path).map_err(|e| io_at(&bundle_path, e))?;
    let rt = StudentRuntime::from_bytes(&bytes)?;
    let window_values = rt.n_channels() * rt.window_len();

    let rows = match &input {
        Some(path) => read_window_csv(ctx, path, window_values)?,
        None => sample_rows(ctx, &rt, sample)?,
    };

    let mut scratch = rt.scratch();
    let mut csv = String::from("id,predicted_id,predicted_class");
    for k in 0..rt.class_names().len() {
        csv.push_str(&format!(",p{k}"));
    }
    csv.push_str(",true_id\n");
    let mut correct = 0usize;
    let mut known = 0usize;
    for row in &rows {
        let (class, probs) = rt.infer(&row.values, &mut scratch)?;
        csv.push_str(&format!("{},{},{}", row.id, class, rt.class_names()[class]));
        for p in &probs {
            csv.push_str(&format!(",{p:.6}"));
        }
        match row.truth {
            Some(t) => {
                known += 1;
                if t == class {
                    correct += 1;
                }
                csv.push_str(&format!(",{t}\n"));
            }
            None => csv.push_str(",\n"),
        }
    }
    let out = output.unwrap_or_else(|| ctx.path("predictions.csv"));
    ctx.write_text(&out, &csv)?;
    ctx.write_manifest("infer", None)?;
    println!("inferred {} windows -> {}", rows.len(), out.display());
    if known > 0 {
        println!(
            "labels were known for {known} windows: {correct} correct ({:.4})",
            correct as f64 / known as f64
        );
    }
    Ok(())
}

/// Evenly strided windows from the run's dataset, restricted to the student
/// channels. Also writes them to `sample_windows.csv` as a worked example
/// of the input format (full-precision values so they round-trip exactly).
fn sample_rows(ctx: &RunCtx, rt: &StudentRuntime, sample: usize) -> Result<Vec<WindowRow>> {
    if sample == 0 {
        return Err(Error::Config("--sample must be at least 1".into()));
    }
    let (ds, _) = ctx.load_dataset()?;
    let accel = student_channel_indices(&ds)?;
    if accel.len() != rt.n_channels() || ds.win_len != rt.window_len() {
        return Err(Error::Config(format!(
            "bundle expects {} channels x {} samples but the dataset provides {} x {}",
            rt.n_channels(),
            rt.window_len(),
            accel.len(),
            ds.win_len
        )));
    }
    let total = ds.labels.len();
    if total == 0 {
        return Err(Error::Config("the dataset has no windows".into()));
    }
    let take = sample.min(total);
    let stride = (total / take).max(1);
    let n_channels = ds.channels.len();
    let win = ds.win_len;

    let mut rows = Vec::with_capacity(take);
    let mut csv = String::from("id");
    for v in 0..accel.len() * win {
        csv.push_str(&format!(",v{v}"));
    }
    csv.push_str(",label\n");
    for i in (0..total).step_by(stride).take(take) {
        let mut values = Vec::with_capacity(accel.len() * win);
        for &c in &accel {
            let base = (i * n_channels + c) * win;
            values.extend(ds.windows[base..base + win].iter().map(|&v| v as f64));
        }
        let truth = ds.labels[i] as usize;
        csv.push_str(&format!("w{i:05}"));
        for v in &values {
            csv.push_str(&format!(",{v}"));
        }
        csv.push_str(&format!(",{truth}\n"));
        rows.push(WindowRow {
            id: format!("w{i:05}"),
            values,
            truth: Some(truth),
        });
    }
    ctx.write_text(&ctx.path("sample_windows.csv"), &csv)?;
    println!(
        "sampled {} dataset windows (stride {stride}) -> {}",
        rows.len(),
        ctx.path("sample_windows.csv").display()
    );
    Ok(rows)
}

fn read_window_csv(ctx: &RunCtx, path: &PathBuf, window_values: usize) -> Result<Vec<WindowRow>> {
    let text = ctx.read_artifact(path, "provide a window CSV")?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Format(format!("{}: empty file", path.display())));
    };
    let cols: Vec<&str> = header.split(',').collect();
    let has_label = cols.last() == Some(&"label");
    let value_cols = cols.len() - 1 - usize::from(has_label);
    if cols.first() != Some(&"id") || value_cols != window_values {
        return Err(Error::Format(format!(
            "{}: expected header id,v0,...,v{}[,label], got {} value columns",
            path.display(),
            window_values - 1,
            value_cols
        )));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields
            .next()
            .ok_or_else(|| Error::Format(format!("{}:{}: missing id", path.display(), lineno + 1)))?
            .to_string();
        let mut values = Vec::with_capacity(window_values);
        for _ in 0..window_values {
            let field = fields.next().ok_or_else(|| {
                Error::Format(format!(
                    "{}:{}: expected {} values",
                    path.display(),
                    lineno + 1,
                    window_values
                ))
            })?;
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: cannot parse value `{field}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            values.push(v);
        }
        let truth = if has_label {
            let field = fields.next().ok_or_else(|| {
                Error::Format(format!("{}:{}: missing label", path.display(), lineno + 1))
            })?;
            Some(field.parse::<usize>().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: cannot parse label `{field}`",
                    path.display(),
                    lineno + 1
                ))
            })?)
        } else {
            None
        };
        if fields.next().is_some() {
            return Err(Error::Format(format!(
                "{}:{}: more columns than the header declares",
                path.display(),
                lineno + 1
            )));
        }
        rows.push(WindowRow { id, values, truth });
    }
    if rows.is_empty() {
        return Err(Error::Format(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(rows)
}
