//! Second-order Butterworth low-pass design and application.

use crate::error::{Error, Result};

/// Biquad coefficients with the `a0 = 1` convention:
/// `y[n] = b0·x[n] + b1·x[n−1] + b2·x[n−2] − a1·y[n−1] − a2·y[n−2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

/// A designed filter plus bookkeeping about cutoff clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDesign {
    pub coeffs: FilterCoeffs,
    pub requested_cutoff_hz: f64,
    pub effective_cutoff_hz: f64,
    /// True when the requested cutoff exceeded 0.45·fs and was clamped.
    pub clamped: bool,
}

/// Fraction of the sample rate the cutoff is clamped to. Requests at or
/// above Nyquist are not realizable by a discrete low-pass.
pub const MAX_CUTOFF_FRACTION: f64 = 0.45;

/// Designs a discrete 2nd-order Butterworth low-pass by bilinear transform
/// of the analog prototype `1/(s² + √2·s + 1)` with frequency pre-warping.
pub fn design_butterworth2(cutoff_hz: f64, sample_hz: f64) -> Result<FilterDesign> {
    if sample_hz <= 0.0 || cutoff_hz <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "cutoff and sample rate must be positive, got {} Hz at {} Hz",
            cutoff_hz, sample_hz
        )));
    }
    let limit = MAX_CUTOFF_FRACTION * sample_hz;
    let (effective, clamped) = if cutoff_hz > limit {
        (limit, true)
    } else {
        (cutoff_hz, false)
    };
    let k = (std::f64::consts::PI * effective / sample_hz).tan();
    let q = std::f64::consts::FRAC_1_SQRT_2;
    let norm = 1.0 / (1.0 + k / q + k * k);
    let b0 = k * k * norm;
    let coeffs = FilterCoeffs {
        b0,
        b1: 2.0 * b0,
        b2: b0,
        a1: 2.0 * (k * k - 1.0) * norm,
        a2: (1.0 - k / q + k * k) * norm,
    };
    Ok(FilterDesign {
        coeffs,
        requested_cutoff_hz: cutoff_hz,
        effective_cutoff_hz: effective,
        clamped,
    })
}

/// Causal single-pass filtering in direct form II transposed, zero initial
/// state. Output length equals input length.
pub fn apply_filter(signal: &[f64], c: &FilterCoeffs) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::InvalidInput("cannot filter an empty signal".into()));
    }
    let mut out = Vec::with_capacity(signal.len());
    let (mut s1, mut s2) = (0.0, 0.0);
    for &x in signal {
        let y = c.b0 * x + s1;
        s1 = c.b1 * x - c.a1 * y + s2;
        s2 = c.b2 * x - c.a2 * y;
        out.push(y);
    }
    Ok(out)
}

///// Forward-backward filtering: zero phase lag, squared magnitude response.
/// Off by default in the pipeline; the causal pass is the wearable-realistic
/// setting.
pub fn apply_filter_zero_phase(signal: &[f64], c: &FilterCoeffs) -> Result<Vec<f64>> {
    let mut fwd = apply_filter(signal, c)?;
    fwd.reverse();
    let mut back = apply_filter(&fwd, c)?;
    back.reverse();
    Ok(back)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Coefficients for 10 Hz at 50 Hz from an independent bilinear-transform
    /// derivation, pinned before this module was written.
    const ORACLE_B: [f64; 3] = [0.2065720838261479, 0.4131441676522958, 0.2065720838261479];
    const ORACLE_A: [f64; 2] = [-0.3695273773512414, 0.1958157126558331];

    #[test]
    fn design_matches_independent_derivation() {
        let d = design_butterworth2(10.0, 50.0).unwrap();
        let c = d.coeffs;
        assert!((c.b0 - ORACLE_B[0]).abs() < 1e-9);
        assert!((c.b1 - ORACLE_B[1]).abs() < 1e-9);
        assert!((c.b2 - ORACLE_B[2]).abs() < 1e-9);
        assert!((c.a1 - ORACLE_A[0]).abs() < 1e-9);
        assert!((c.a2 - ORACLE_A[1]).abs() < 1e-9);
        assert!(!d.clamped);
    }

    #[test]
    fn dc_gain_is_unity_for_many_designs() {
        for (fc, fs) in [(10.0, 50.0), (1.0, 30.0), (5.0, 100.0), (22.0, 50.0)] {
            let c = design_butterworth2(fc, fs).unwrap().coeffs;
            let dc = (c.b0 + c.b1 + c.b2) / (1.0 + c.a1 + c.a2);
            assert!((dc - 1.0).abs() < 1e-9, "fc={} fs={}: DC gain {}", fc, fs, dc);
        }
    }

    #[test]
    fn half_power_at_the_effective_cutoff() {
        // Pre-warping puts the −3 dB point exactly at the design cutoff.
        let d = design_butterworth2(10.0, 50.0).unwrap();
        let c = d.coeffs;
        let w = 2.0 * std::f64::consts::PI * d.effective_cutoff_hz / 50.0;
        let (cos1, sin1) = (w.cos(), w.sin());
        let (cos2, sin2) = ((2.0 * w).cos(), (2.0 * w).sin());
        let num_re = c.b0 + c.b1 * cos1 + c.b2 * cos2;
        let num_im = -c.b1 * sin1 - c.b2 * sin2;
        let den_re = 1.0 + c.a1 * cos1 + c.a2 * cos2;
        let den_im = -c.a1 * sin1 - c.a2 * sin2;
        let gain = ((num_re * num_re + num_im * num_im)
            / (den_re * den_re + den_im * den_im))
            .sqrt();
        assert!((gain - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9, "gain {}", gain);
    }

    #[test]
    fn above_nyquist_request_is_clamped_with_warning() {
        let d = design_butterworth2(30.0, 50.0).unwrap();
        assert!(d.clamped);
        assert_eq!(d.requested_cutoff_hz, 30.0);
        assert!((d.effective_cutoff_hz - 22.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_rates_are_rejected() {
        assert!(design_butterworth2(0.0, 50.0).is_err());
        assert!(design_butterworth2(10.0, 0.0).is_err());
        assert!(design_butterworth2(-3.0, 50.0).is_err());
    }

    #[test]
    fn constant_signal_converges_to_itself() {
        let c = design_butterworth2(10.0, 50.0).unwrap().coeffs;
        let x = vec![3.25; 400];
        let y = apply_filter(&x, &c).unwrap();
        assert_eq!(y.len(), 400);
        for &v in &y[300..] {
            assert!((v - 3.25).abs() < 1e-6, "tail value {}", v);
        }
    }

    #[test]
    fn zero_signal_stays_zero() {
        let c = design_butterworth2(10.0, 50.0).unwrap().coeffs;
        let y = apply_filter(&[0.0; 64], &c).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_response_matches_oracle() {
        // Reference values from an independent recurrence evaluation of the
        // pinned 10 Hz / 50 Hz design.
        let expected = [
            0.2065720838261479,
            0.4894782080225530,
            0.3469976224980896,
            0.0323775972553989,
            -0.0559831781406209,
            -0.0270273592747404,
            0.0009750367348195,
            0.0056526843850275,
        ];
        let c = design_butterworth2(10.0, 50.0).unwrap().coeffs;
        let mut x = vec![0.0; 8];
        x[0] = 1.0;
        let y = apply_filter(&x, &c).unwrap();
        for (a, e) in y.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12, "{} vs {}", a, e);
        }
    }

    #[test]
    fn ramp_response_matches_oracle() {
        let expected = [
            0.2065720838261479,
            0.9026223756748488,
            1.9456702900216394,
            2.6079516339715334,
            2.2352933837357001,
            1.1416125292289470,
        ];
        let c = design_butterworth2(10.0, 50.0).unwrap().coeffs;
        let y = apply_filter(&[1.0, 2.0, 3.0, 2.0, 1.0, 0.0], &c).unwrap();
        for (a, e) in y.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12, "{} vs {}", a, e);
        }
    }

    #[test]
    fn empty_signal_is_rejected() {
        let c = design_butterworth2(10.0, 50.0).unwrap().coeffs;
        assert!(apply_filter(&[], &c).is_err());
    }

    #[test]
    fn zero_phase_pass_keeps_length_and_dc() {
        let c = design_butterworth2(10.0, 50.0).unwrap().coeffs;
        let x = vec![1.0; 300];
        let y = apply_filter_zero_phase(&x, &c).unwrap();
        assert_eq!(y.len(), 300);
        assert!((y[150] - 1.0).abs() < 1e-6);
    }
}
