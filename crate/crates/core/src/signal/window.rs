//! Sliding-window segmentation and the windowed-dataset container's
//! in-memory form.

use crate::error::{Error, Result};
use crate::signal::session::{ChannelSpec, SessionRecording};

/// Per-session bookkeeping kept alongside the windows: provenance plus the
/// whole-session channel extrema that normalization is fitted from later
/// (per training split), without revisiting raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionMeta {
    pub user_id: String,
    pub session_id: String,
    pub n_samples: u64,
    pub channel_extrema: Vec<(f64, f64)>,
}

/// Windowed tensor data: `windows` is `[N × C × win_len]`, stored as 32-bit
/// floats (the container's on-disk precision). Values are unnormalized;
/// normalization happens per fold from training-session extrema.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub sample_rate_hz: f64,
    pub win_len: usize,
    pub channels: Vec<ChannelSpec>,
    pub class_names: Vec<String>,
    pub sessions: Vec<SessionMeta>,
    pub windows: Vec<f32>,
    pub labels: Vec<u16>,
    /// Index into `sessions` per window.
    pub window_session: Vec<u32>,
    /// Start sample index within the source session per window.
    pub window_start: Vec<u32>,
}

/// Majority label of a window; ties break toward the smallest class id.
pub fn majority_label(labels: &[usize]) -> usize {
    debug_assert!(!labels.is_empty());
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &l in labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Number of windows a session of `n_samples` yields.
pub fn window_count(n_samples: usize, win: usize, step: usize) -> usize {
    if n_samples < win {
        0
    } else {
        (n_samples - win) / step + 1
    }
}

impl WindowedDataset {
    pub fn new(
        channels: Vec<ChannelSpec>,
        class_names: Vec<String>,
        sample_rate_hz: f64,
        win_len: usize,
    ) -> WindowedDataset {
        WindowedDataset {
            sample_rate_hz,
            win_len,
            channels,
            class_names,
            sessions: Vec::new(),
            windows: Vec::new(),
            labels: Vec::new(),
            window_session: Vec::new(),
            window_start: Vec::new(),
        }
    }

    pub fn n_windows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn window(&self, i: usize) -> &[f32] {
        let sz = self.n_channels() * self.win_len;
        &self.windows[i * sz..(i + 1) * sz]
    }

    /// (user_id, session_id, window start in seconds)
    pub fn provenance(&self, i: usize) -> (&str, &str, f64) {
        let s = &self.sessions[self.window_session[i] as usize];
        (
            &s.user_id,
            &s.session_id,
            self.window_start[i] as f64 / self.sample_rate_hz,
        )
    }

    /// Segments one session (already at this dataset's sample rate) and
    /// appends its windows. Sessions shorter than one window contribute
    /// zero windows but are still recorded. Returns the number added.
    pub fn append_session(
        &mut self,
        session: &SessionRecording,
        step_s: f64,
    ) -> Result<usize> {
        if session.sample_rate_hz != self.sample_rate_hz {
            return Err(Error::InvalidInput(format!(
                "session {}/{} is at {} Hz, dataset expects {} Hz",
                session.user_id, session.session_id, session.sample_rate_hz, self.sample_rate_hz
            )));
        }
        let c = self.n_channels();
        if session.channels.len() != c {
            return Err(Error::Shape(format!(
                "session {}/{} has {} channels, dataset expects {}",
                session.user_id,
                session.session_id,
                session.channels.len(),
                c
            )));
        }
        session.validate(self.class_names.len())?;
        let step = (step_s * self.sample_rate_hz).round() as usize;
        if step == 0 {
            return Err(Error::InvalidInput(format!(
                "step of {} s is below one sample at {} Hz",
                step_s, self.sample_rate_hz
            )));
        }
        let win = self.win_len;
        let t = session.n_samples();
        let n = window_count(t, win, step);
        let session_idx = self.sessions.len() as u32;
        self.sessions.push(SessionMeta {
            user_id: session.user_id.clone(),
            session_id: session.session_id.clone(),
            n_samples: t as u64,
            channel_extrema: crate::signal::normalize::session_extrema(session),
        });
        self.windows.reserve(n * c * win);
        for w in 0..n {
            let start = w * step;
            for ci in 0..c {
                for ti in 0..win {
                    self.windows.push(session.samples[(start + ti) * c + ci] as f32);
                }
            }
            let lbl = majority_label(&session.labels[start..start + win]);
            self.labels.push(lbl as u16);
            self.window_session.push(session_idx);
            self.window_start.push(start as u32);
        }
        Ok(n)
    }
}

/// Segments a single session into a fresh dataset; window and step are in
/// seconds (2 s windows are 100 samples at 50 Hz).
pub fn segment_windows(
    session: &SessionRecording,
    class_names: Vec<String>,
    window_s: f64,
    step_s: f64,
) -> Result<WindowedDataset> {
    let win = (window_s * session.sample_rate_hz).round() as usize;
    if win == 0 {
        return Err(Error::InvalidInput(format!(
            "window of {} s is below one sample at {} Hz",
            window_s, session.sample_rate_hz
        )));
    }
    let mut ds = WindowedDataset::new(
        session.channels.clone(),
        class_names,
        session.sample_rate_hz,
        win,
    );
    ds.append_session(session, step_s)?;
    Ok(ds)
}
