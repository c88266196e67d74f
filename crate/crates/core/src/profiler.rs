//! Efficiency profiling: exact parameter counts, analytic per-window FLOPs,
//! and wall-clock single-window latency, plus the compression ratios of a
//! model against a reference profile.
//!
//! Latency is measured on the build host, batch 1, with all tensor work
//! pinned to a single thread; reduction and speedup claims from the
//! original full-scale runs are replayed from their recorded constants, so
//! the ratio story is host-independent.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::models::{StudentNet, TeacherNet, STUDENT_CHANNELS, WINDOW_LEN};

/// Compression ratios of one profile against a reference: how many
/// parameters and FLOPs it sheds, and how much faster it answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ratios {
    /// 1 − params / reference params.
    pub param_reduction: f64,
    /// Reference latency / this latency.
    pub speedup: f64,
    /// 1 − FLOPs / reference FLOPs.
    pub flop_reduction: f64,
}

/// One model's efficiency numbers. Parameter and FLOP counts are analytic
/// and deterministic; latency is the median of the timed forwards.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileReport {
    pub name: String,
    pub params: u64,
    pub flops_per_window: u64,
    pub latency_ms: f64,
    pub throughput_per_s: f64,
    pub ratios: Option<Ratios>,
}

/// Warm-up and sample counts for the latency benchmark. The defaults match
/// the reporting convention: at least 1000 timed forwards after warm-up.
#[derive(Debug, Clone, Copy)]
pub struct TimingOptions {
    pub warmup: usize,
    pub timed: usize,
}

impl Default for TimingOptions {
    fn default() -> TimingOptions {
        TimingOptions {
            warmup: 100,
            timed: 1000,
        }
    }
}

/// Recorded numbers from a full-scale reference run, used to replay its
/// ratio claims exactly.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceProfile {
    pub params: f64,
    pub latency_ms: f64,
    pub mflops: f64,
}

/// Full-scale teacher reference measurements.
pub const REFERENCE_TEACHER: ReferenceProfile = ReferenceProfile {
    params: 12_650.0,
    latency_ms: 27.91,
    mflops: 651.85,
};

/// Full-scale student reference measurements.
pub const REFERENCE_STUDENT: ReferenceProfile = ReferenceProfile {
    params: 2_690.0,
    latency_ms: 3.14,
    mflops: 22.48,
};

/// Ratios between the recorded reference profiles: the student keeps about
/// a fifth of the parameters, answers 8.9× faster, and uses 3.4% of the
/// FLOPs.
pub fn reference_ratios() -> Ratios {
    Ratios {
        param_reduction: 1.0 - REFERENCE_STUDENT.params / REFERENCE_TEACHER.params,
        speedup: REFERENCE_TEACHER.latency_ms / REFERENCE_STUDENT.latency_ms,
        flop_reduction: 1.0 - REFERENCE_STUDENT.mflops / REFERENCE_TEACHER.mflops,
    }
}

/// Ratios of `report` against `reference`, computed from the two reports'
/// own numbers.
pub fn ratios_vs(report: &ProfileReport, reference: &ProfileReport) -> Ratios {
    Ratios {
        param_reduction: 1.0 - report.params as f64 / reference.params as f64,
        speedup: reference.latency_ms / report.latency_ms,
        flop_reduction: 1.0 - report.flops_per_window as f64 / reference.flops_per_window as f64,
    }
}

/// Profiles one model: records the given analytic counts and times
/// `forward` on a single thread, discarding `opts.warmup` runs and taking
/// the median of the next `opts.timed`.
pub fn profile<F>(
    name: &str,
    params: u64,
    flops_per_window: u64,
    reference: Option<&ProfileReport>,
    opts: &TimingOptions,
    mut forward: F,
) -> Result<ProfileReport>
where
    F: FnMut() -> Result<()>,
{
    if opts.timed == 0 {
        return Err(Error::Config(
            "latency needs at least one timed forward".into(),
        ));
    }
    // Tensor ops only fan out across the batch dimension, and only from
    // batch 8 upward, so these batch-1 forwards run entirely on this
    // thread: no pinning needed.
    for _ in 0..opts.warmup {
        forward()?;
    }
    let mut samples_ms = Vec::with_capacity(opts.timed);
    for _ in 0..opts.timed {
        let t0 = Instant::now();
        forward()?;
        samples_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let latency_ms = median(samples_ms);
    let mut report = ProfileReport {
        name: name.to_string(),
        params,
        flops_per_window,
        latency_ms,
        throughput_per_s: 1e3 / latency_ms,
        ratios: None,
    };
    if let Some(reference) = reference {
        report.ratios = Some(ratios_vs(&report, reference));
    }
    Ok(report)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("durations are finite"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// A batch-1 window of in-range values for timing forwards.
fn probe_window(channels: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data: Vec<f64> = (0..channels * WINDOW_LEN).map(|_| rng.gen::<f64>()).collect();
    Tensor::from_vec(vec![1, channels, WINDOW_LEN], data)
}

/// Profiles a teacher in eval mode on a single synthetic window.
pub fn profile_teacher(
    net: &TeacherNet,
    reference: Option<&ProfileReport>,
    opts: &TimingOptions,
) -> Result<ProfileReport> {
    let x = probe_window(net.variant.input_channels());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    profile(
        &format!("teacher-{}", net.variant.name()),
        net.param_count() as u64,
        net.flops(),
        reference,
        opts,
        || net.forward(&x, false, &mut rng).map(|_| ()),
    )
}

/// Profiles a student in eval mode on a single synthetic window.
pub fn profile_student(
    net: &StudentNet,
    reference: Option<&ProfileReport>,
    opts: &TimingOptions,
) -> Result<ProfileReport> {
    let x = probe_window(STUDENT_CHANNELS);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    profile(
        "student",
        net.param_count() as u64,
        net.flops(),
        reference,
        opts,
        || net.forward(&x, false, &mut rng).map(|_| ()),
    )
}

/// Combined CSV over several profiles, reference rows and live rows alike.
pub fn table_csv(reports: &[ProfileReport]) -> String {
    use std::fmt::Write as _;
    let mut s = String::from(
        "model,params,flops_per_window,latency_ms,throughput_per_s,\
         param_reduction,speedup,flop_reduction\n",
    );
    for r in reports {
        let _ = write!(
            s,
            "{},{},{},{:.6},{:.6}",
            r.name, r.params, r.flops_per_window, r.latency_ms, r.throughput_per_s
        );
        match &r.ratios {
            Some(q) => {
                let _ = writeln!(
                    s,
                    ",{:.6},{:.6},{:.6}",
                    q.param_reduction, q.speedup, q.flop_reduction
                );
            }
            None => s.push_str(",,,\n"),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TeacherVariant;

    const QUICK: TimingOptions = TimingOptions {
        warmup: 5,
        timed: 31,
    };

    #[test]
    fn reference_ratios_replay_the_recorded_story() {
        let r = reference_ratios();
        assert!((r.param_reduction - (1.0 - 2690.0 / 12650.0)).abs() < 1e-15);
        assert!((r.speedup - 27.91 / 3.14).abs() < 1e-15);
        assert!((r.flop_reduction - (1.0 - 22.48 / 651.85)).abs() < 1e-15);
        // Decimal spot checks of the same quantities.
        assert!((r.param_reduction - 0.787_351_778_656_126_5).abs() < 1e-12);
        assert!((r.speedup - 8.888_535_031_847_134).abs() < 1e-12);
        assert!((r.flop_reduction - 0.965_513_538_390_734_1).abs() < 1e-12);
    }

    #[test]
    fn student_profile_counts_and_ratios() {
        let teacher = TeacherNet::new(TeacherVariant::Factory, 4, 7);
        let student = StudentNet::new(4, 7);
        let t = profile_teacher(&teacher, None, &QUICK).unwrap();
        let s = profile_student(&student, Some(&t), &QUICK).unwrap();
        assert_eq!(t.params, 15_978);
        assert_eq!(t.flops_per_window, 2_094_768);
        assert_eq!(s.params, 2_689);
        assert_eq!(s.flops_per_window, 333_930);
        assert!(t.latency_ms > 0.0 && s.latency_ms > 0.0);
        assert!((s.throughput_per_s - 1e3 / s.latency_ms).abs() < 1e-9);
        let q = s.ratios.expect("student profiled against the teacher");
        // The student keeps at most a quarter of the teacher's parameters.
        assert!(q.param_reduction >= 0.75);
        assert!((q.param_reduction - (1.0 - 2689.0 / 15978.0)).abs() < 1e-12);
        assert!((q.flop_reduction - (1.0 - 333_930.0 / 2_094_768.0)).abs() < 1e-12);
        assert!(q.speedup > 0.0);
    }

    #[test]
    fn analytic_counts_are_stable_and_latency_is_plausible() {
        let student = StudentNet::new(4, 3);
        let a = profile_student(&student, None, &QUICK).unwrap();
        let b = profile_student(&student, None, &QUICK).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.flops_per_window, b.flops_per_window);
        // Medians from two back-to-back runs agree within a loose factor;
        // the tight 20% bound only holds on an idle host.
        let ratio = a.latency_ms / b.latency_ms;
        assert!(
            (0.2..5.0).contains(&ratio),
            "latency medians diverged: {} vs {}",
            a.latency_ms,
            b.latency_ms
        );
    }

    #[test]
    fn table_csv_lists_one_row_per_report() {
        let student = StudentNet::new(4, 7);
        let s = profile_student(&student, None, &QUICK).unwrap();
        let mut with_ratios = s.clone();
        with_ratios.ratios = Some(reference_ratios());
        let csv = table_csv(&[s, with_ratios]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("model,params,flops_per_window"));
        assert!(lines[1].ends_with(",,,"));
        assert!(!lines[2].ends_with(",,,"));
    }

    #[test]
    fn zero_timed_forwards_is_refused() {
        let opts = TimingOptions {
            warmup: 0,
            timed: 0,
        };
        let student = StudentNet::new(4, 7);
        let Err(e) = profile_student(&student, None, &opts) else {
            panic!("timed=0 must be refused")
        };
        assert!(matches!(e, Error::Config(_)));
    }
}
