//! End-to-end preprocessing: raw sessions in, windowed dataset out.
//!
//! Per session the order is resample → low-pass filter → segment; min-max
//! normalization is deferred to training time, where stats are fitted from
//! the training sessions' extrema only (recorded per session at segment
//! time) and applied with clamping elsewhere.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::signal::filter::{apply_filter, apply_filter_zero_phase, design_butterworth2};
use crate::signal::resample::{resample_labels_nearest, resample_linear};
use crate::signal::session::SessionRecording;
use crate::signal::window::WindowedDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_rate_hz: f64,
    pub cutoff_hz: f64,
    /// Forward-backward filtering instead of the causal default.
    pub zero_phase: bool,
    pub window_s: f64,
    pub step_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_rate_hz: 50.0,
            cutoff_hz: 30.0,
            zero_phase: false,
            window_s: 2.0,
            step_s: 0.5,
        }
    }
}

#[derive(Debug, Default)]
pub struct PreprocessReport {
    pub warnings: Vec<String>,
    pub windows_per_session: Vec<usize>,
}

/// Resamples and filters one session. Pure: parallel-safe across sessions.
pub fn preprocess_session(
    session: &SessionRecording,
    cfg: &PreprocessConfig,
) -> Result<SessionRecording> {
    let design = design_butterworth2(cfg.cutoff_hz, cfg.target_rate_hz)?;
    let c = session.n_channels();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(c);
    for ci in 0..c {
        let raw = session.channel(ci);
        let resampled = if session.sample_rate_hz == cfg.target_rate_hz {
            raw
        } else {
            resample_linear(&raw, session.sample_rate_hz, cfg.target_rate_hz)?
        };
        let filtered = if cfg.zero_phase {
            apply_filter_zero_phase(&resampled, &design.coeffs)?
        } else {
            apply_filter(&resampled, &design.coeffs)?
        };
        columns.push(filtered);
    }
    let labels = if session.sample_rate_hz == cfg.target_rate_hz {
        session.labels.clone()
    } else {
        resample_labels_nearest(&session.labels, session.sample_rate_hz, cfg.target_rate_hz)?
    };
    let t = columns[0].len();
    debug_assert_eq!(labels.len(), t);
    let mut samples = Vec::with_capacity(t * c);
    for ti in 0..t {
        for col in &columns {
            samples.push(col[ti]);
        }
    }
    Ok(SessionRecording {
        user_id: session.user_id.clone(),
        session_id: session.session_id.clone(),
        sample_rate_hz: cfg.target_rate_hz,
        channels: session.channels.clone(),
        samples,
        labels,
    })
}

/// Preprocesses every session (in parallel; output order is input order)
/// and segments the results into one dataset.
pub fn build_dataset(
    sessions: &[SessionRecording],
    class_names: Vec<String>,
    cfg: &PreprocessConfig,
) -> Result<(WindowedDataset, PreprocessReport)> {
    let mut report = PreprocessReport::default();
    let design = design_butterworth2(cfg.cutoff_hz, cfg.target_rate_hz)?;
    if design.clamped {
        report.warnings.push(format!(
            "cutoff {} Hz exceeds the usable band at {} Hz; clamped to {} Hz",
            cfg.cutoff_hz, cfg.target_rate_hz, design.effective_cutoff_hz
        ));
    }
    let win = (cfg.window_s * cfg.target_rate_hz).round() as usize;
    let processed: Vec<Result<SessionRecording>> = sessions
        .par_iter()
        .map(|s| preprocess_session(s, cfg))
        .collect();
    let channels = sessions
        .first()
        .map(|s| s.channels.clone())
        .unwrap_or_default();
    let mut ds = WindowedDataset::new(channels, class_names, cfg.target_rate_hz, win);
    for p in processed {
        let session = p?;
        let n = ds.append_session(&session, cfg.step_s)?;
        report.windows_per_session.push(n);
    }
    Ok((ds, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::session::{factory_channels, ChannelKind, ChannelSpec};

    fn raw_session(user: &str, sid: &str, seconds: f64) -> SessionRecording {
        let channels = factory_channels();
        let c = channels.len();
        let fs = 30.0;
        let n = (seconds * fs) as usize;
        let samples = (0..n * c)
            .map(|i| ((i % 97) as f64 * 0.13).sin())
            .collect();
        SessionRecording {
            user_id: user.into(),
            session_id: sid.into(),
            sample_rate_hz: fs,
            channels,
            samples,
            labels: (0..n).map(|i| (i / 90) % 4).collect(),
        }
    }

    #[test]
    fn thirty_to_fifty_hz_window_math() {
        // 60 s at 30 Hz = 1800 samples → 2999 on the 50 Hz grid spanning
        // the same duration → 116 windows of 100 with step 25.
        let s = raw_session("u0", "s0", 60.0);
        let (ds, report) = build_dataset(
            &[s],
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &PreprocessConfig::default(),
        )
        .unwrap();
        assert_eq!(ds.sessions[0].n_samples, 2999);
        assert_eq!(ds.n_windows(), (2999 - 100) / 25 + 1);
        assert_eq!(report.windows_per_session, vec![ds.n_windows()]);
        assert_eq!(ds.win_len, 100);
    }

    #[test]
    fn cutoff_clamp_warns_once() {
        let s = raw_session("u0", "s0", 10.0);
        let (_, report) = build_dataset(
            &[s.clone(), raw_session("u0", "s1", 10.0)],
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &PreprocessConfig::default(),
        )
        .unwrap();
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("22.5"));
    }

    #[test]
    fn in_band_cutoff_does_not_warn() {
        let s = raw_session("u0", "s0", 10.0);
        let cfg = PreprocessConfig {
            cutoff_hz: 10.0,
            ..PreprocessConfig::default()
        };
        let (_, report) = build_dataset(
            &[s],
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &cfg,
        )
        .unwrap();
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn preprocessing_is_deterministic_across_calls() {
        let s = raw_session("u1", "s0", 20.0);
        let a = preprocess_session(&s, &PreprocessConfig::default()).unwrap();
        let b = preprocess_session(&s, &PreprocessConfig::default()).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn already_at_target_rate_skips_resampling() {
        let channels = vec![ChannelSpec::new("r_gyr_x", ChannelKind::Gyro)];
        let n = 200;
        let s = SessionRecording {
            user_id: "u".into(),
            session_id: "s".into(),
            sample_rate_hz: 50.0,
            channels,
            samples: (0..n).map(|i| i as f64).collect(),
            labels: vec![1; n],
        };
        let out = preprocess_session(&s, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.n_samples(), n, "no grid change at matching rates");
        assert_eq!(out.labels, s.labels);
    }

    #[test]
    fn constant_signal_survives_the_whole_pipeline() {
        let channels = vec![ChannelSpec::new("r_acc_x", ChannelKind::Accel)];
        let n = 300;
        let s = SessionRecording {
            user_id: "u".into(),
            session_id: "s".into(),
            sample_rate_hz: 30.0,
            channels,
            samples: vec![2.5; n],
            labels: vec![0; n],
        };
        let out = preprocess_session(&s, &PreprocessConfig::default()).unwrap();
        // Unit DC gain: once the causal filter settles, a constant input
        // comes back unchanged.
        for &v in &out.samples[150..] {
            assert!((v - 2.5).abs() < 1e-9, "{v}");
        }
    }
}
