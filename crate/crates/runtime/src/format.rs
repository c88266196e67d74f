//! The `TSAK` bundle byte format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            4  bytes  "TSAK"
//! version          u16
//! config_hash      32 bytes
//! window_len       u32
//! n_channels       u16
//! per channel      f64 min, f64 max
//! n_classes        u16
//! per class        u16 name length, UTF-8 name bytes
//! n_layers         u16
//! per layer        u8 kind, 4 × u32 fields (unused fields zero)
//! n_weights        u32
//! weights          n_weights × f32
//! checksum         32 bytes, SHA-256 of everything above
//! ```

use sha2::{Digest, Sha256};

use crate::{BundleError, Result};

pub const BUNDLE_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"TSAK";

/// One entry of the layer descriptor table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerDesc {
    /// 1-D convolution, zero same-padding, followed by nothing implicit.
    Conv1dSame {
        c_in: u32,
        c_out: u32,
        k: u32,
        stride: u32,
    },
    MaxPool {
        k: u32,
        stride: u32,
    },
    Relu,
    GlobalMaxPool,
    Linear {
        f_in: u32,
        f_out: u32,
    },
}

impl LayerDesc {
    fn kind(&self) -> u8 {
        match self {
            LayerDesc::Conv1dSame { .. } => 0,
            LayerDesc::MaxPool { .. } => 1,
            LayerDesc::Relu => 2,
            LayerDesc::GlobalMaxPool => 3,
            LayerDesc::Linear { .. } => 4,
        }
    }

    fn fields(&self) -> [u32; 4] {
        match *self {
            LayerDesc::Conv1dSame { c_in, c_out, k, stride } => [c_in, c_out, k, stride],
            LayerDesc::MaxPool { k, stride } => [k, stride, 0, 0],
            LayerDesc::Relu | LayerDesc::GlobalMaxPool => [0, 0, 0, 0],
            LayerDesc::Linear { f_in, f_out } => [f_in, f_out, 0, 0],
        }
    }

    /// Number of weights (including bias) this layer consumes from the blob.
    pub fn weight_count(&self) -> usize {
        match *self {
            LayerDesc::Conv1dSame { c_in, c_out, k, .. } => {
                (c_out * c_in * k + c_out) as usize
            }
            LayerDesc::Linear { f_in, f_out } => (f_in * f_out + f_out) as usize,
            _ => 0,
        }
    }
}

/// Everything needed to write (or re-write) a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleSpec {
    pub config_hash: [u8; 32],
    pub window_len: usize,
    /// Per-channel (min, max) used for 0-1 normalization at inference time.
    pub channel_stats: Vec<(f64, f64)>,
    pub class_names: Vec<String>,
    pub layers: Vec<LayerDesc>,
    pub weights: Vec<f32>,
}

impl BundleSpec {
    /// Walks the layer table from the input shape, checking dimension
    /// agreement. Returns the final feature count.
    pub fn validate(&self) -> Result<usize> {
        if self.channel_stats.is_empty() || self.window_len == 0 {
            return Err(BundleError::Format(
                "bundle must declare at least one channel and a nonzero window".into(),
            ));
        }
        for (i, &(lo, hi)) in self.channel_stats.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || hi < lo {
                return Err(BundleError::Format(format!(
                    "channel {} has invalid normalization range [{}, {}]",
                    i, lo, hi
                )));
            }
        }
        // (channels, time); time = 0 marks a flattened vector.
        let mut c = self.channel_stats.len() as u32;
        let mut t = self.window_len as u32;
        let mut flat = false;
        let mut needed = 0usize;
        for (i, layer) in self.layers.iter().enumerate() {
            needed += layer.weight_count();
            match *layer {
                LayerDesc::Conv1dSame { c_in, c_out, k, stride } => {
                    if flat {
                        return Err(BundleError::Format(format!(
                            "layer {}: convolution after flattening",
                            i
                        )));
                    }
                    if c_in != c || k % 2 == 0 || stride == 0 {
                        return Err(BundleError::Format(format!(
                            "layer {}: conv expects {} input channels (have {}), odd k, stride ≥ 1",
                            i, c_in, c
                        )));
                    }
                    c = c_out;
                    t = t.div_ceil(stride);
                }
                LayerDesc::MaxPool { k, stride } => {
                    if flat || k == 0 || stride == 0 || t < k {
                        return Err(BundleError::Format(format!(
                            "layer {}: invalid pool over length {}",
                            i, t
                        )));
                    }
                    t = (t - k) / stride + 1;
                }
                LayerDesc::Relu => {}
                LayerDesc::GlobalMaxPool => {
                    if flat {
                        return Err(BundleError::Format(format!(
                            "layer {}: global pool after flattening",
                            i
                        )));
                    }
                    flat = true;
                    t = 1;
                }
                LayerDesc::Linear { f_in, f_out } => {
                    let have = if flat { c } else { c * t };
                    if f_in != have {
                        return Err(BundleError::Format(format!(
                            "layer {}: linear expects {} inputs, have {}",
                            i, f_in, have
                        )));
                    }
                    flat = true;
                    c = f_out;
                }
            }
        }
        if needed != self.weights.len() {
            return Err(BundleError::Format(format!(
                "layer table needs {} weights but blob holds {}",
                needed,
                self.weights.len()
            )));
        }
        if !flat || c as usize != self.class_names.len() {
            return Err(BundleError::Format(format!(
                "network must end in {} class scores, produces {}",
                self.class_names.len(),
                c
            )));
        }
        Ok(c as usize)
    }
}

/// Serializes a validated spec to the deterministic byte stream.
pub fn write_bundle(spec: &BundleSpec) -> Result<Vec<u8>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(1024 + spec.weights.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
    out.extend_from_slice(&spec.config_hash);
    out.extend_from_slice(&(spec.window_len as u32).to_le_bytes());
    out.extend_from_slice(&(spec.channel_stats.len() as u16).to_le_bytes());
    for &(lo, hi) in &spec.channel_stats {
        out.extend_from_slice(&lo.to_le_bytes());
        out.extend_from_slice(&hi.to_le_bytes());
    }
    out.extend_from_slice(&(spec.class_names.len() as u16).to_le_bytes());
    for name in &spec.class_names {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(BundleError::Format(format!("class name too long: {}", name)));
        }
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
    }
    out.extend_from_slice(&(spec.layers.len() as u16).to_le_bytes());
    for layer in &spec.layers {
        out.push(layer.kind());
        for field in layer.fields() {
            out.extend_from_slice(&field.to_le_bytes());
        }
    }
    out.extend_from_slice(&(spec.weights.len() as u32).to_le_bytes());
    for w in &spec.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(BundleError::Format(format!(
                "truncated bundle: need {} bytes at offset {}",
                n, self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses and verifies a byte stream back into a spec.
pub fn read_bundle(bytes: &[u8]) -> Result<BundleSpec> {
    if bytes.len() < 32 {
        return Err(BundleError::Format("bundle shorter than its checksum".into()));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != checksum {
        return Err(BundleError::Corrupt("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(BundleError::Format("bad magic, not a TSAK bundle".into()));
    }
    let version = r.u16()?;
    if version != BUNDLE_VERSION {
        return Err(BundleError::Format(format!(
            "unsupported bundle version {}",
            version
        )));
    }
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(r.take(32)?);
    let window_len = r.u32()? as usize;
    let n_channels = r.u16()? as usize;
    let mut channel_stats = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let lo = r.f64()?;
        let hi = r.f64()?;
        channel_stats.push((lo, hi));
    }
    let n_classes = r.u16()? as usize;
    let mut class_names = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| BundleError::Format(format!("class name not UTF-8: {}", e)))?;
        class_names.push(name.to_string());
    }
    let n_layers = r.u16()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let kind = r.take(1)?[0];
        let f = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        layers.push(match kind {
            0 => LayerDesc::Conv1dSame {
                c_in: f[0],
                c_out: f[1],
                k: f[2],
                stride: f[3],
            },
            1 => LayerDesc::MaxPool { k: f[0], stride: f[1] },
            2 => LayerDesc::Relu,
            3 => LayerDesc::GlobalMaxPool,
            4 => LayerDesc::Linear { f_in: f[0], f_out: f[1] },
            other => {
                return Err(BundleError::Format(format!(
                    "layer {}: unknown op kind {}",
                    i, other
                )))
            }
        });
    }
    let n_weights = r.u32()? as usize;
    let mut weights = Vec::with_capacity(n_weights);
    for _ in 0..n_weights {
        weights.push(r.f32()?);
    }
    if r.pos != body.len() {
        return Err(BundleError::Format(format!(
            "{} trailing bytes after weight blob",
            body.len() - r.pos
        )));
    }
    let spec = BundleSpec {
        config_hash,
        window_len,
        channel_stats,
        class_names,
        layers,
        weights,
    };
    spec.validate()?;
    Ok(spec)
}
