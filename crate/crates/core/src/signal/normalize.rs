//! Train-split min-max normalization to the 0-1 range.

use crate::error::{Error, Result};
use crate::signal::session::{ChannelSpec, SessionRecording};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelStat {
    pub min: f64,
    pub max: f64,
    /// Set when max == min; apply maps such channels to constant 0.5.
    pub degenerate: bool,
}

/// Per-channel extrema fitted on training data only. Channels that are not
/// normalized (angular velocity) have no entry.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationStats {
    pub per_channel: Vec<Option<ChannelStat>>,
    pub fitted_on: String,
}

impl NormalizationStats {
    /// Combines per-session extrema (min, max per channel) into fold stats.
    /// `extrema[s][c]` must cover every channel of every training session.
    pub fn from_extrema(
        extrema: &[Vec<(f64, f64)>],
        specs: &[ChannelSpec],
        fitted_on: impl Into<String>,
    ) -> Result<NormalizationStats> {
        if extrema.is_empty() {
            return Err(Error::InvalidInput(
                "cannot fit normalization on zero training sessions".into(),
            ));
        }
        let c = specs.len();
        for (si, e) in extrema.iter().enumerate() {
            if e.len() != c {
                return Err(Error::Shape(format!(
                    "session {} provides extrema for {} channels, expected {}",
                    si,
                    e.len(),
                    c
                )));
            }
        }
        let per_channel = specs
            .iter()
            .enumerate()
            .map(|(ci, spec)| {
                if !spec.normalize {
                    return None;
                }
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for e in extrema {
                    lo = lo.min(e[ci].0);
                    hi = hi.max(e[ci].1);
                }
                Some(ChannelStat {
                    min: lo,
                    max: hi,
                    degenerate: hi == lo,
                })
            })
            .collect();
        Ok(NormalizationStats {
            per_channel,
            fitted_on: fitted_on.into(),
        })
    }

    /// Maps one value of channel `c`: `(x − min)/(max − min)` clamped to
    /// [0, 1]; degenerate channels map to 0.5; non-normalized channels pass
    /// through unchanged.
    #[inline]
    pub fn apply_value(&self, c: usize, x: f64) -> f64 {
        match &self.per_channel[c] {
            None => x,
            Some(st) if st.degenerate => 0.5,
            Some(st) => ((x - st.min) / (st.max - st.min)).clamp(0.0, 1.0),
        }
    }
}

/// Per-channel (min, max) over one session's samples, for every channel
/// (normalization scope is decided later, at fit time).
pub fn session_extrema(session: &SessionRecording) -> Vec<(f64, f64)> {
    let c = session.n_channels();
    let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); c];
    for (i, &v) in session.samples.iter().enumerate() {
        let e = &mut out[i % c];
        if v < e.0 {
            e.0 = v;
        }
        if v > e.1 {
            e.1 = v;
        }
    }
    out
}

/// Fits stats over whole training sessions.
pub fn fit_minmax(
    train_sessions: &[SessionRecording],
    specs: &[ChannelSpec],
    fitted_on: impl Into<String>,
) -> Result<NormalizationStats> {
    let extrema: Vec<Vec<(f64, f64)>> = train_sessions.iter().map(session_extrema).collect();
    NormalizationStats::from_extrema(&extrema, specs, fitted_on)
}

/// Returns a copy of the session with normalized channels mapped to 0-1
/// (clamped) and other channels untouched.
pub fn apply_minmax(
    session: &SessionRecording,
    stats: &NormalizationStats,
) -> Result<SessionRecording> {
    if stats.per_channel.len() != session.n_channels() {
        return Err(Error::Config(format!(
            "stats cover {} channels but session has {}",
            stats.per_channel.len(),
            session.n_channels()
        )));
    }
    for (ci, spec) in session.channels.iter().enumerate() {
        if spec.normalize && stats.per_channel[ci].is_none() {
            return Err(Error::Config(format!(
                "channel {} requires normalization but stats have no entry",
                spec.name
            )));
        }
    }
    let c = session.n_channels();
    let mut out = session.clone();
    for (i, v) in out.samples.iter_mut().enumerate() {
        *v = stats.apply_value(i % c, *v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::session::{ChannelKind, ChannelSpec};

    fn two_channel_session() -> SessionRecording {
        // channel 0: accel {0,2,4}; channel 1: gyro {−250,0,250}
        SessionRecording {
            user_id: "u".into(),
            session_id: "s".into(),
            sample_rate_hz: 50.0,
            channels: vec![
                ChannelSpec::new("acc", ChannelKind::Accel),
                ChannelSpec::new("gyr", ChannelKind::Gyro),
            ],
            samples: vec![0.0, -250.0, 2.0, 0.0, 4.0, 250.0],
            labels: vec![0, 0, 0],
        }
    }

    #[test]
    fn extrema_and_fit() {
        let s = two_channel_session();
        let stats = fit_minmax(std::slice::from_ref(&s), &s.channels, "train").unwrap();
        let acc = stats.per_channel[0].unwrap();
        assert_eq!((acc.min, acc.max), (0.0, 4.0));
        assert!(!acc.degenerate);
        assert!(stats.per_channel[1].is_none(), "gyro must have no stats entry");
    }

    #[test]
    fn apply_midpoint_clamp_and_passthrough() {
        let s = two_channel_session();
        let stats = fit_minmax(std::slice::from_ref(&s), &s.channels, "train").unwrap();
        assert_eq!(stats.apply_value(0, 2.0), 0.5);
        assert_eq!(stats.apply_value(0, 9.0), 1.0);
        assert_eq!(stats.apply_value(0, -1.0), 0.0);
        assert_eq!(stats.apply_value(1, -250.0), -250.0);

        let n = apply_minmax(&s, &stats).unwrap();
        assert_eq!(n.samples, vec![0.0, -250.0, 0.5, 0.0, 1.0, 250.0]);
    }

    #[test]
    fn degenerate_channel_maps_to_half() {
        let mut s = two_channel_session();
        s.samples = vec![7.0, -1.0, 7.0, 0.0, 7.0, 1.0];
        let stats = fit_minmax(std::slice::from_ref(&s), &s.channels, "train").unwrap();
        assert!(stats.per_channel[0].unwrap().degenerate);
        assert_eq!(stats.apply_value(0, 7.0), 0.5);
        assert_eq!(stats.apply_value(0, 123.0), 0.5);
    }

    #[test]
    fn missing_stats_for_normalized_channel_is_config_error() {
        let s = two_channel_session();
        let stats = NormalizationStats {
            per_channel: vec![None, None],
            fitted_on: "train".into(),
        };
        assert_eq!(apply_minmax(&s, &stats).unwrap_err().category(), "config");
    }

    #[test]
    fn fit_requires_at_least_one_session() {
        let specs = vec![ChannelSpec::new("acc", ChannelKind::Accel)];
        assert!(NormalizationStats::from_extrema(&[], &specs, "train").is_err());
    }
}
