//! `tsak profile`: time batch-1 forwards for the teacher and the student,
//! count parameters and per-window FLOPs analytically, and set both against
//! the recorded reference hardware figures.
//!
//! Latency is weight-independent, so fresh nets are profiled; class count
//! comes from the run's dataset when one exists, else the default 4.

use tsak_core::models::{StudentNet, TeacherNet, TeacherVariant};
use tsak_core::profiler::{
    profile_student, profile_teacher, ratios_vs, reference_ratios, table_csv, ProfileReport,
    Ratios, ReferenceProfile, TimingOptions, REFERENCE_STUDENT, REFERENCE_TEACHER,
};
use tsak_core::{Error, Result};

use serde::Serialize;

use crate::runctx::RunCtx;

fn reference_report(name: &str, profile: &ReferenceProfile, ratios: Option<Ratios>) -> ProfileReport {
    ProfileReport {
        name: name.to_string(),
        params: profile.params as u64,
        flops_per_window: (profile.mflops * 1e6) as u64,
        latency_ms: profile.latency_ms,
        throughput_per_s: 1000.0 / profile.latency_ms,
        ratios,
    }
}

#[derive(Serialize)]
struct ProfileDocument {
    reference_ratios: Ratios,
    measured_ratios: Ratios,
    reports: Vec<ProfileReport>,
}

pub fn run(
    ctx: &RunCtx,
    variant: Option<String>,
    warmup: Option<usize>,
    timed: Option<usize>,
) -> Result<()> {
    let variant = match variant.as_deref() {
        None | Some("factory") => TeacherVariant::Factory,
        Some("openpack") => TeacherVariant::OpenPack,
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown variant `{other}` (expected `factory` or `openpack`)"
            )))
        }
    };
    let num_classes = if ctx.dataset_path().exists() {
        ctx.load_dataset()?.0.class_names.len()
    } else {
        4
    };
    let defaults = TimingOptions::default();
    let opts = TimingOptions {
        warmup: warmup.unwrap_or(defaults.warmup),
        timed: timed.unwrap_or(defaults.timed),
    };

    let teacher = TeacherNet::new(variant, num_classes, ctx.cfg.stages.teacher.seed);
    let student = StudentNet::new(num_classes, ctx.cfg.stages.student.seed);
    let teacher_report = profile_teacher(&teacher, None, &opts)?;
    let student_report = profile_student(&student, Some(&teacher_report), &opts)?;
    let measured_ratios = ratios_vs(&student_report, &teacher_report);

    let reference_teacher = reference_report("reference-teacher", &REFERENCE_TEACHER, None);
    let reference_student = reference_report(
        "reference-student",
        &REFERENCE_STUDENT,
        Some(reference_ratios()),
    );

    let reports = vec![
        reference_teacher,
        reference_student,
        teacher_report,
        student_report,
    ];
    let csv = table_csv(&reports);
    ctx.write_text(&ctx.path("profile.csv"), &csv)?;
    ctx.write_json(
        &ctx.path("profile.json"),
        &ProfileDocument {
            reference_ratios: reference_ratios(),
            measured_ratios,
            reports,
        },
    )?;
    ctx.write_manifest("profile", None)?;
    print!("{csv}");
    println!("(full report at {})", ctx.path("profile.json").display());
    Ok(())
}
