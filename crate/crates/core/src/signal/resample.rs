//! Sample-rate conversion by piecewise-linear interpolation.

use crate::error::{Error, Result};

/// Resamples `signal` from `src_hz` to `dst_hz` on the source time grid.
/// The output spans the same duration; its first and last samples equal the
/// input's first and last samples.
pub fn resample_linear(signal: &[f64], src_hz: f64, dst_hz: f64) -> Result<Vec<f64>> {
    if src_hz <= 0.0 || dst_hz <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "sample rates must be positive, got {} -> {}",
            src_hz, dst_hz
        )));
    }
    if signal.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "resampling needs at least 2 samples, got {}",
            signal.len()
        )));
    }
    if src_hz == dst_hz {
        return Ok(signal.to_vec());
    }
    let duration = (signal.len() - 1) as f64 / src_hz;
    let n_out = (duration * dst_hz).round() as usize + 1;
    let ratio = src_hz / dst_hz;
    let mut out = Vec::with_capacity(n_out);
    let last = signal.len() - 1;
    for i in 0..n_out {
        let pos = i as f64 * ratio;
        let i0 = pos.floor() as usize;
        if i0 >= last {
            out.push(signal[last]);
            continue;
        }
        let frac = pos - i0 as f64;
        out.push(signal[i0] * (1.0 - frac) + signal[i0 + 1] * frac);
    }
    Ok(out)
}

/// Resamples per-sample labels with nearest-neighbor selection on the same
/// grid as [`resample_linear`], so signals and labels stay aligned.
pub fn resample_labels_nearest(labels: &[usize], src_hz: f64, dst_hz: f64) -> Result<Vec<usize>> {
    if src_hz <= 0.0 || dst_hz <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "sample rates must be positive, got {} -> {}",
            src_hz, dst_hz
        )));
    }
    if labels.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "resampling needs at least 2 samples, got {}",
            labels.len()
        )));
    }
    if src_hz == dst_hz {
        return Ok(labels.to_vec());
    }
    let duration = (labels.len() - 1) as f64 / src_hz;
    let n_out = (duration * dst_hz).round() as usize + 1;
    let ratio = src_hz / dst_hz;
    let last = labels.len() - 1;
    Ok((0..n_out)
        .map(|i| {
            let idx = (i as f64 * ratio).round() as usize;
            labels[idx.min(last)]
        })
        .collect())
}
