//! Forward-only execution over a loaded bundle.
//!
//! Weights are widened to f64 once at load; per-inference work happens in
//! two ping-pong buffers owned by a caller-provided [`Scratch`], so repeated
//! calls allocate nothing. A loaded runtime is immutable and can serve
//! overlapping inferences from multiple threads, one scratch per thread.

use crate::format::{read_bundle, write_bundle, BundleSpec, LayerDesc};
use crate::{BundleError, Result};

pub struct StudentRuntime {
    spec: BundleSpec,
    /// f64 copies of the weight blob, one slice range per layer.
    weights: Vec<f64>,
    layer_offsets: Vec<usize>,
    /// Largest intermediate activation size across the layer walk.
    arena_len: usize,
    n_channels: usize,
    n_classes: usize,
}

/// Reusable per-thread activation buffers.
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl StudentRuntime {
    pub fn from_bytes(bytes: &[u8]) -> Result<StudentRuntime> {
        let spec = read_bundle(bytes)?;
        Ok(Self::from_spec(spec))
    }

    fn from_spec(spec: BundleSpec) -> StudentRuntime {
        let weights: Vec<f64> = spec.weights.iter().map(|&w| w as f64).collect();
        let mut layer_offsets = Vec::with_capacity(spec.layers.len() + 1);
        let mut off = 0usize;
        for layer in &spec.layers {
            layer_offsets.push(off);
            off += layer.weight_count();
        }
        layer_offsets.push(off);

        let n_channels = spec.channel_stats.len();
        let mut c = n_channels;
        let mut t = spec.window_len;
        let mut arena_len = c * t;
        for layer in &spec.layers {
            match *layer {
                LayerDesc::Conv1dSame { c_out, stride, .. } => {
                    c = c_out as usize;
                    t = t.div_ceil(stride as usize);
                }
                LayerDesc::MaxPool { k, stride } => {
                    t = (t - k as usize) / stride as usize + 1;
                }
                LayerDesc::Relu => {}
                LayerDesc::GlobalMaxPool => t = 1,
                LayerDesc::Linear { f_out, .. } => {
                    c = f_out as usize;
                    t = 1;
                }
            }
            arena_len = arena_len.max(c * t);
        }
        let n_classes = spec.class_names.len();
        StudentRuntime {
            spec,
            weights,
            layer_offsets,
            arena_len,
            n_channels,
            n_classes,
        }
    }

    /// Re-serializes the loaded model; byte-identical to the original stream.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        write_bundle(&self.spec)
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            a: vec![0.0; self.arena_len],
            b: vec![0.0; self.arena_len],
        }
    }

    pub fn class_names(&self) -> &[String] {
        &self.spec.class_names
    }

    pub fn config_hash(&self) -> &[u8; 32] {
        &self.spec.config_hash
    }

    pub fn weight_count(&self) -> usize {
        self.spec.weights.len()
    }

    pub fn window_len(&self) -> usize {
        self.spec.window_len
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    /// Raw class scores for one channel-major raw window
    /// (`n_channels × window_len`, unnormalized). Normalization is applied
    /// internally from the bundled statistics.
    pub fn logits(&self, window: &[f64], scratch: &mut Scratch) -> Result<Vec<f64>> {
        let (cin, t0) = (self.n_channels, self.spec.window_len);
        if window.len() != cin * t0 {
            return Err(BundleError::Input(format!(
                "window must be {} channels × {} samples = {} values, got {}",
                cin,
                t0,
                cin * t0,
                window.len()
            )));
        }
        // Normalize into the first buffer: (x − min)/(max − min), clamped.
        for ci in 0..cin {
            let (lo, hi) = self.spec.channel_stats[ci];
            let span = hi - lo;
            let row = &mut scratch.a[ci * t0..(ci + 1) * t0];
            let src = &window[ci * t0..(ci + 1) * t0];
            if span == 0.0 {
                // Constant training channel: midpoint, matching the
                // convention the stats were fitted under.
                row.fill(0.5);
            } else {
                for (d, &s) in row.iter_mut().zip(src) {
                    *d = ((s - lo) / span).clamp(0.0, 1.0);
                }
            }
        }

        let (mut c, mut t) = (cin, t0);
        let mut cur_in_a = true;
        for (li, layer) in self.spec.layers.iter().enumerate() {
            let w = &self.weights[self.layer_offsets[li]..self.layer_offsets[li + 1]];
            let (src, dst) = if cur_in_a {
                (&mut scratch.a, &mut scratch.b)
            } else {
                (&mut scratch.b, &mut scratch.a)
            };
            match *layer {
                LayerDesc::Conv1dSame { c_in, c_out, k, stride } => {
                    let (c_in, c_out, k, stride) =
                        (c_in as usize, c_out as usize, k as usize, stride as usize);
                    let t_out = t.div_ceil(stride);
                    let pad_left = (((t_out - 1) * stride + k).saturating_sub(t)) / 2;
                    let bias = &w[c_out * c_in * k..];
                    for co in 0..c_out {
                        let orow = &mut dst[co * t_out..(co + 1) * t_out];
                        orow.fill(bias[co]);
                        for ci in 0..c_in {
                            let xrow = &src[ci * t..(ci + 1) * t];
                            for kk in 0..k {
                                let wv = w[(co * c_in + ci) * k + kk];
                                let lo = if pad_left > kk {
                                    (pad_left - kk).div_ceil(stride)
                                } else {
                                    0
                                };
                                if t + pad_left <= kk {
                                    continue;
                                }
                                let hi = ((t - 1 + pad_left - kk) / stride).min(t_out - 1);
                                if lo > hi {
                                    continue;
                                }
                                let mut xi = lo * stride + kk - pad_left;
                                for item in orow.iter_mut().take(hi + 1).skip(lo) {
                                    *item += wv * xrow[xi];
                                    xi += stride;
                                }
                            }
                        }
                    }
                    c = c_out;
                    t = t_out;
                    cur_in_a = !cur_in_a;
                }
                LayerDesc::MaxPool { k, stride } => {
                    let (k, stride) = (k as usize, stride as usize);
                    let t_out = (t - k) / stride + 1;
                    for ci in 0..c {
                        let xrow = &src[ci * t..(ci + 1) * t];
                        let orow = &mut dst[ci * t_out..(ci + 1) * t_out];
                        for (ti, o) in orow.iter_mut().enumerate() {
                            let start = ti * stride;
                            let mut best = xrow[start];
                            for &v in &xrow[start + 1..start + k] {
                                if v > best {
                                    best = v;
                                }
                            }
                            *o = best;
                        }
                    }
                    t = t_out;
                    cur_in_a = !cur_in_a;
                }
                LayerDesc::Relu => {
                    for v in src[..c * t].iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                LayerDesc::GlobalMaxPool => {
                    for ci in 0..c {
                        let xrow = &src[ci * t..(ci + 1) * t];
                        let mut best = xrow[0];
                        for &v in &xrow[1..] {
                            if v > best {
                                best = v;
                            }
                        }
                        dst[ci] = best;
                    }
                    t = 1;
                    cur_in_a = !cur_in_a;
                }
                LayerDesc::Linear { f_in, f_out } => {
                    let (f_in, f_out) = (f_in as usize, f_out as usize);
                    let bias = &w[f_in * f_out..];
                    dst[..f_out].copy_from_slice(bias);
                    for fi in 0..f_in {
                        let xv = src[fi];
                        let wrow = &w[fi * f_out..(fi + 1) * f_out];
                        for (o, &wv) in dst[..f_out].iter_mut().zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                    c = f_out;
                    t = 1;
                    cur_in_a = !cur_in_a;
                }
            }
        }
        let out = if cur_in_a { &scratch.a } else { &scratch.b };
        Ok(out[..self.n_classes].to_vec())
    }

    /// Predicted class id (first argmax on ties) and softmax probabilities.
    pub fn infer(&self, window: &[f64], scratch: &mut Scratch) -> Result<(usize, Vec<f64>)> {
        let logits = self.logits(window, scratch)?;
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
        let z: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= z;
        }
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate().skip(1) {
            if p > probs[best] {
                best = i;
            }
        }
        Ok((best, probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A tiny 2-channel, 4-sample, 2-class model exercising every op kind.
    fn tiny_spec() -> BundleSpec {
        let layers = vec![
            LayerDesc::Conv1dSame { c_in: 2, c_out: 3, k: 3, stride: 1 },
            LayerDesc::Relu,
            LayerDesc::MaxPool { k: 2, stride: 2 },
            LayerDesc::GlobalMaxPool,
            LayerDesc::Linear { f_in: 3, f_out: 2 },
        ];
        let n: usize = layers.iter().map(|l| l.weight_count()).sum();
        let weights: Vec<f32> = (0..n).map(|i| ((i as f32) * 0.37).sin() * 0.5).collect();
        BundleSpec {
            config_hash: [7u8; 32],
            window_len: 4,
            channel_stats: vec![(-1.0, 1.0), (0.0, 2.0)],
            class_names: vec!["a".into(), "b".into()],
            layers,
            weights,
        }
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let bytes = write_bundle(&tiny_spec()).unwrap();
        let rt = StudentRuntime::from_bytes(&bytes).unwrap();
        assert_eq!(rt.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupted_checksum_is_rejected() {
        let mut bytes = write_bundle(&tiny_spec()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        match StudentRuntime::from_bytes(&bytes) {
            Err(BundleError::Corrupt(_)) => {}
            other => panic!("expected corruption error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn weight_blob_length_is_validated() {
        let mut spec = tiny_spec();
        spec.weights.pop();
        assert!(write_bundle(&spec).is_err());
    }

    #[test]
    fn inference_is_pure_and_normalized() {
        let rt = StudentRuntime::from_bytes(&write_bundle(&tiny_spec()).unwrap()).unwrap();
        let window: Vec<f64> = (0..8).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let mut s1 = rt.scratch();
        let mut s2 = rt.scratch();
        let (c1, p1) = rt.infer(&window, &mut s1).unwrap();
        let (c2, p2) = rt.infer(&window, &mut s2).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(p1, p2);
        assert!((p1.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        // Re-using a scratch must give the same answer as a fresh one.
        let (c3, p3) = rt.infer(&window, &mut s1).unwrap();
        assert_eq!(c1, c3);
        assert_eq!(p1, p3);
    }

    #[test]
    fn wrong_window_shape_is_rejected() {
        let rt = StudentRuntime::from_bytes(&write_bundle(&tiny_spec()).unwrap()).unwrap();
        let mut s = rt.scratch();
        assert!(rt.infer(&[0.0; 7], &mut s).is_err());
    }

    #[test]
    fn relu_layer_clamps_in_place() {
        // One conv that negates the input, then relu, then global pool:
        // all activations ≤ 0 before relu, so the pooled result is 0.
        let layers = vec![
            LayerDesc::Conv1dSame { c_in: 1, c_out: 1, k: 1, stride: 1 },
            LayerDesc::Relu,
            LayerDesc::GlobalMaxPool,
            LayerDesc::Linear { f_in: 1, f_out: 1 },
        ];
        let spec = BundleSpec {
            config_hash: [0u8; 32],
            window_len: 3,
            channel_stats: vec![(0.0, 1.0)],
            class_names: vec!["only".into()],
            layers,
            // conv w=−1 b=0, linear w=1 b=5
            weights: vec![-1.0, 0.0, 1.0, 5.0],
        };
        let rt = StudentRuntime::from_bytes(&write_bundle(&spec).unwrap()).unwrap();
        let mut s = rt.scratch();
        let logits = rt.logits(&[0.2, 0.8, 0.5], &mut s).unwrap();
        assert_eq!(logits, vec![5.0]);
    }
}
