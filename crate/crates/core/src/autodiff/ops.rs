//! Differentiable operators.
//!
//! Each operator is a single graph node: the forward pass computes the value
//! and, when any input tracks gradients, registers one backward closure that
//! scatters the output gradient to the inputs. Heavy kernels (conv, LSTM)
//! parallelize over the batch dimension; per-sample partial weight gradients
//! are reduced in batch order so results are bitwise identical regardless of
//! thread count.

use rand::Rng;
use rayon::prelude::*;

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Minimum batch size before kernels fan out to the thread pool.
const PAR_BATCH_MIN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad so the output length is `ceil(T / stride)`.
    Same,
    /// No padding; the kernel must fit inside the input.
    None,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// c[m×n] = a[m×k] · b[k×n]
fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let av = a[i * k + l];
            let brow = &b[l * n..(l + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

/// c[m×n] = aᵀ · b with a[k×m], b[k×n]
fn mm_t1(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for l in 0..k {
        for i in 0..m {
            let av = a[l * m + i];
            let brow = &b[l * n..(l + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

/// c[m×n] = a · bᵀ with a[m×k], b[n×k]
fn mm_t2(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for l in 0..k {
                s += arow[l] * brow[l];
            }
            c[i * n + j] = s;
        }
    }
    c
}

fn softmax_rows_inplace(m: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut m[r * cols..(r + 1) * cols];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

/// Elementwise sum of two same-shape tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "add: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let out: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape(),
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            if ac.requires_grad_flag() {
                ac.accumulate_grad(g);
            }
            if bc.requires_grad_flag() {
                bc.accumulate_grad(g);
            }
        }),
    ))
}

/// Multiplies every element by a constant.
pub fn scale(x: &Tensor, s: f64) -> Tensor {
    let out: Vec<f64> = x.data().iter().map(|v| v * s).collect();
    let xc = x.clone();
    Tensor::from_op(
        x.shape(),
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let gx: Vec<f64> = g.iter().map(|v| v * s).collect();
            xc.accumulate_grad(&gx);
        }),
    )
}

/// Elementwise max(x, 0).
pub fn relu(x: &Tensor) -> Tensor {
    let out: Vec<f64> = x.data().iter().map(|v| v.max(0.0)).collect();
    let track = x.requires_grad_flag();
    let mask: Vec<bool> = if track {
        x.data().iter().map(|&v| v > 0.0).collect()
    } else {
        Vec::new()
    };
    let xc = x.clone();
    Tensor::from_op(
        x.shape(),
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let gx: Vec<f64> = g
                .iter()
                .zip(&mask)
                .map(|(v, &m)| if m { *v } else { 0.0 })
                .collect();
            xc.accumulate_grad(&gx);
        }),
    )
}

/// Inverted dropout: at train time keeps each element with probability
/// `1 - rate` and rescales by `1 / (1 - rate)`; in eval mode it is the
/// identity and consumes no randomness.
pub fn dropout<R: Rng>(x: &Tensor, rate: f64, train: bool, rng: &mut R) -> Tensor {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
    if !train || rate == 0.0 {
        return x.clone();
    }
    let keep = 1.0 - rate;
    let factors: Vec<f64> = (0..x.numel())
        .map(|_| {
            if rng.gen::<f64>() >= rate {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect();
    let out: Vec<f64> = x.data().iter().zip(&factors).map(|(v, f)| v * f).collect();
    let xc = x.clone();
    Tensor::from_op(
        x.shape(),
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let gx: Vec<f64> = g.iter().zip(&factors).map(|(v, f)| v * f).collect();
            xc.accumulate_grad(&gx);
        }),
    )
}

/// Same data, new shape (sizes must agree).
pub fn reshape(x: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
    if shape.iter().product::<usize>() != x.numel() {
        return Err(Error::Shape(format!(
            "reshape: cannot view {:?} as {:?}",
            x.shape(),
            shape
        )));
    }
    let xc = x.clone();
    Ok(Tensor::from_op(
        shape,
        x.to_vec(),
        vec![x.clone()],
        Box::new(move |g| xc.accumulate_grad(g)),
    ))
}

/// [B×C×T] -> [B×T×C]
pub fn transpose_12(x: &Tensor) -> Result<Tensor> {
    let sh = x.shape();
    if sh.len() != 3 {
        return Err(Error::Shape(format!("transpose_12 expects rank 3, got {:?}", sh)));
    }
    let (b, c, t) = (sh[0], sh[1], sh[2]);
    let xd = x.data();
    let mut out = vec![0.0; b * c * t];
    for bi in 0..b {
        for ci in 0..c {
            for ti in 0..t {
                out[(bi * t + ti) * c + ci] = xd[(bi * c + ci) * t + ti];
            }
        }
    }
    drop(xd);
    let xc = x.clone();
    Ok(Tensor::from_op(
        vec![b, t, c],
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; b * c * t];
            for bi in 0..b {
                for ci in 0..c {
                    for ti in 0..t {
                        gx[(bi * c + ci) * t + ti] = g[(bi * t + ti) * c + ci];
                    }
                }
            }
            xc.accumulate_grad(&gx);
        }),
    ))
}

/// Concatenates rank-2 tensors along the feature axis: [B×F1],[B×F2],... -> [B×ΣFi]
pub fn concat_features(xs: &[&Tensor]) -> Result<Tensor> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("concat_features: empty input list".into()));
    }
    let b = xs[0].shape()[0];
    let mut feats = Vec::with_capacity(xs.len());
    for x in xs {
        let sh = x.shape();
        if sh.len() != 2 || sh[0] != b {
            return Err(Error::Shape(format!(
                "concat_features: expected [{}×F], got {:?}",
                b, sh
            )));
        }
        feats.push(sh[1]);
    }
    let ftot: usize = feats.iter().sum();
    let mut out = vec![0.0; b * ftot];
    let mut off = 0;
    for (x, &f) in xs.iter().zip(&feats) {
        let xd = x.data();
        for bi in 0..b {
            out[bi * ftot + off..bi * ftot + off + f].copy_from_slice(&xd[bi * f..(bi + 1) * f]);
        }
        off += f;
    }
    let parents: Vec<Tensor> = xs.iter().map(|x| (*x).clone()).collect();
    let pc = parents.clone();
    Ok(Tensor::from_op(
        vec![b, ftot],
        out,
        parents,
        Box::new(move |g| {
            let mut off = 0;
            for (x, &f) in pc.iter().zip(&feats) {
                if x.requires_grad_flag() {
                    let mut gx = vec![0.0; b * f];
                    for bi in 0..b {
                        gx[bi * f..(bi + 1) * f]
                            .copy_from_slice(&g[bi * ftot + off..bi * ftot + off + f]);
                    }
                    x.accumulate_grad(&gx);
                }
                off += f;
            }
        }),
    ))
}

fn conv_span(t: usize, t_out: usize, stride: usize, pad_left: usize, kk: usize) -> Option<(usize, usize)> {
    let lo = if pad_left > kk {
        (pad_left - kk).div_ceil(stride)
    } else {
        0
    };
    if t + pad_left <= kk {
        return None;
    }
    let hi = ((t - 1 + pad_left - kk) / stride).min(t_out.saturating_sub(1));
    if lo > hi {
        None
    } else {
        Some((lo, hi))
    }
}

/// 1-D convolution (cross-correlation convention) over [B×Cin×T].
pub fn conv1d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let ish = input.shape();
    let wsh = weight.shape();
    if ish.len() != 3 || wsh.len() != 3 {
        return Err(Error::Shape(format!(
            "conv1d: expected input [B×Cin×T] and weight [Cout×Cin×K], got {:?} and {:?}",
            ish, wsh
        )));
    }
    let (b, cin, t) = (ish[0], ish[1], ish[2]);
    let (cout, wcin, k) = (wsh[0], wsh[1], wsh[2]);
    if wcin != cin {
        return Err(Error::Shape(format!(
            "conv1d: input has {} channels but weight expects {}",
            cin, wcin
        )));
    }
    if bias.shape() != vec![cout] {
        return Err(Error::Shape(format!(
            "conv1d: bias shape {:?} does not match {} output channels",
            bias.shape(),
            cout
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidInput("conv1d: stride must be >= 1".into()));
    }
    let (t_out, pad_left) = match padding {
        Padding::Same => {
            if k % 2 == 0 {
                return Err(Error::InvalidInput(
                    "conv1d: same padding requires an odd kernel size".into(),
                ));
            }
            let t_out = t.div_ceil(stride);
            let pad_total = ((t_out - 1) * stride + k).saturating_sub(t);
            (t_out, pad_total / 2)
        }
        Padding::None => {
            if t < k {
                return Err(Error::Shape(format!(
                    "conv1d: input length {} shorter than kernel {}",
                    t, k
                )));
            }
            ((t - k) / stride + 1, 0)
        }
    };

    let mut out = vec![0.0; b * cout * t_out];
    {
        let xg = input.data();
        let wg = weight.data();
        let bg = bias.data();
        let (x, w, bs): (&[f64], &[f64], &[f64]) = (&xg, &wg, &bg);
        let body = |bi: usize, ob: &mut [f64]| {
            let xb = &x[bi * cin * t..(bi + 1) * cin * t];
            for co in 0..cout {
                let orow = &mut ob[co * t_out..(co + 1) * t_out];
                orow.fill(bs[co]);
                for ci in 0..cin {
                    let xrow = &xb[ci * t..(ci + 1) * t];
                    for kk in 0..k {
                        let wv = w[(co * cin + ci) * k + kk];
                        if let Some((lo, hi)) = conv_span(t, t_out, stride, pad_left, kk) {
                            let mut xi = lo * stride + kk - pad_left;
                            for item in orow.iter_mut().take(hi + 1).skip(lo) {
                                *item += wv * xrow[xi];
                                xi += stride;
                            }
                        }
                    }
                }
            }
        };
        if b >= PAR_BATCH_MIN {
            out.par_chunks_mut(cout * t_out)
                .enumerate()
                .for_each(|(bi, ob)| body(bi, ob));
        } else {
            out.chunks_mut(cout * t_out)
                .enumerate()
                .for_each(|(bi, ob)| body(bi, ob));
        }
    }

    let (ic, wc, bc) = (input.clone(), weight.clone(), bias.clone());
    Ok(Tensor::from_op(
        vec![b, cout, t_out],
        out,
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |gy| {
            if bc.requires_grad_flag() {
                let mut db = vec![0.0; cout];
                for bi in 0..b {
                    for (co, dbv) in db.iter_mut().enumerate() {
                        let grow = &gy[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
                        *dbv += grow.iter().sum::<f64>();
                    }
                }
                bc.accumulate_grad(&db);
            }
            if ic.requires_grad_flag() {
                let wg = wc.data();
                let w: &[f64] = &wg;
                let mut dx = vec![0.0; b * cin * t];
                let body = |bi: usize, dxb: &mut [f64]| {
                    let gb = &gy[bi * cout * t_out..(bi + 1) * cout * t_out];
                    for co in 0..cout {
                        let grow = &gb[co * t_out..(co + 1) * t_out];
                        for ci in 0..cin {
                            let dxrow = &mut dxb[ci * t..(ci + 1) * t];
                            for kk in 0..k {
                                let wv = w[(co * cin + ci) * k + kk];
                                if let Some((lo, hi)) = conv_span(t, t_out, stride, pad_left, kk) {
                                    let mut xi = lo * stride + kk - pad_left;
                                    for gv in grow.iter().take(hi + 1).skip(lo) {
                                        dxrow[xi] += wv * gv;
                                        xi += stride;
                                    }
                                }
                            }
                        }
                    }
                };
                if b >= PAR_BATCH_MIN {
                    dx.par_chunks_mut(cin * t)
                        .enumerate()
                        .for_each(|(bi, dxb)| body(bi, dxb));
                } else {
                    dx.chunks_mut(cin * t)
                        .enumerate()
                        .for_each(|(bi, dxb)| body(bi, dxb));
                }
                ic.accumulate_grad(&dx);
            }
            if wc.requires_grad_flag() {
                let xg = ic.data();
                let x: &[f64] = &xg;
                let per_batch = |bi: usize| -> Vec<f64> {
                    let mut dwp = vec![0.0; cout * cin * k];
                    let xb = &x[bi * cin * t..(bi + 1) * cin * t];
                    let gb = &gy[bi * cout * t_out..(bi + 1) * cout * t_out];
                    for co in 0..cout {
                        let grow = &gb[co * t_out..(co + 1) * t_out];
                        for ci in 0..cin {
                            let xrow = &xb[ci * t..(ci + 1) * t];
                            for kk in 0..k {
                                if let Some((lo, hi)) = conv_span(t, t_out, stride, pad_left, kk) {
                                    let mut s = 0.0;
                                    let mut xi = lo * stride + kk - pad_left;
                                    for gv in grow.iter().take(hi + 1).skip(lo) {
                                        s += xrow[xi] * gv;
                                        xi += stride;
                                    }
                                    dwp[(co * cin + ci) * k + kk] = s;
                                }
                            }
                        }
                    }
                    dwp
                };
                // Partials are summed in batch order: bitwise-stable under rayon.
                let partials: Vec<Vec<f64>> = if b >= PAR_BATCH_MIN {
                    (0..b).into_par_iter().map(per_batch).collect()
                } else {
                    (0..b).map(per_batch).collect()
                };
                let mut dw = vec![0.0; cout * cin * k];
                for p in &partials {
                    for (a, v) in dw.iter_mut().zip(p) {
                        *a += v;
                    }
                }
                wc.accumulate_grad(&dw);
            }
        }),
    ))
}

/// Max pooling over the time axis of [B×C×T]; gradient routes to the first
/// maximal element of each window.
pub fn maxpool1d(input: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    let ish = input.shape();
    if ish.len() != 3 {
        return Err(Error::Shape(format!("maxpool1d expects rank 3, got {:?}", ish)));
    }
    let (b, c, t) = (ish[0], ish[1], ish[2]);
    if k == 0 || stride == 0 {
        return Err(Error::InvalidInput("maxpool1d: k and stride must be >= 1".into()));
    }
    if t < k {
        return Err(Error::Shape(format!(
            "maxpool1d: input length {} shorter than window {}",
            t, k
        )));
    }
    let t_out = (t - k) / stride + 1;
    let track = input.requires_grad_flag();
    let xd = input.data();
    let mut out = vec![0.0; b * c * t_out];
    let mut arg: Vec<u32> = if track { vec![0; b * c * t_out] } else { Vec::new() };
    for bc_idx in 0..b * c {
        let xrow = &xd[bc_idx * t..(bc_idx + 1) * t];
        for ti in 0..t_out {
            let start = ti * stride;
            let mut best = xrow[start];
            let mut best_i = start;
            for (off, &v) in xrow.iter().enumerate().take(start + k).skip(start + 1) {
                if v > best {
                    best = v;
                    best_i = off;
                }
            }
            out[bc_idx * t_out + ti] = best;
            if track {
                arg[bc_idx * t_out + ti] = best_i as u32;
            }
        }
    }
    drop(xd);
    let ic = input.clone();
    Ok(Tensor::from_op(
        vec![b, c, t_out],
        out,
        vec![input.clone()],
        Box::new(move |gy| {
            let mut dx = vec![0.0; b * c * t];
            for bc_idx in 0..b * c {
                for ti in 0..t_out {
                    dx[bc_idx * t + arg[bc_idx * t_out + ti] as usize] += gy[bc_idx * t_out + ti];
                }
            }
            ic.accumulate_grad(&dx);
        }),
    ))
}

/// Global max over the time axis: [B×C×T] -> [B×C].
pub fn global_maxpool_time(input: &Tensor) -> Result<Tensor> {
    let ish = input.shape();
    if ish.len() != 3 {
        return Err(Error::Shape(format!(
            "global_maxpool_time expects rank 3, got {:?}",
            ish
        )));
    }
    let (b, c, t) = (ish[0], ish[1], ish[2]);
    let track = input.requires_grad_flag();
    let xd = input.data();
    let mut out = vec![0.0; b * c];
    let mut arg: Vec<u32> = if track { vec![0; b * c] } else { Vec::new() };
    for bc_idx in 0..b * c {
        let xrow = &xd[bc_idx * t..(bc_idx + 1) * t];
        let mut best = xrow[0];
        let mut best_i = 0usize;
        for (off, &v) in xrow.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                best_i = off;
            }
        }
        out[bc_idx] = best;
        if track {
            arg[bc_idx] = best_i as u32;
        }
    }
    drop(xd);
    let ic = input.clone();
    Ok(Tensor::from_op(
        vec![b, c],
        out,
        vec![input.clone()],
        Box::new(move |gy| {
            let mut dx = vec![0.0; b * c * t];
            for bc_idx in 0..b * c {
                dx[bc_idx * t + arg[bc_idx] as usize] += gy[bc_idx];
            }
            ic.accumulate_grad(&dx);
        }),
    ))
}

/// Affine map: [B×F]·[F×G] + bias[G] -> [B×G].
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let ish = input.shape();
    let wsh = weight.shape();
    if ish.len() != 2 || wsh.len() != 2 {
        return Err(Error::Shape(format!(
            "linear: expected input [B×F] and weight [F×G], got {:?} and {:?}",
            ish, wsh
        )));
    }
    let (b, f) = (ish[0], ish[1]);
    let (wf, g) = (wsh[0], wsh[1]);
    if f != wf {
        return Err(Error::Shape(format!(
            "linear: input has {} features but weight expects {}",
            f, wf
        )));
    }
    if bias.shape() != vec![g] {
        return Err(Error::Shape(format!(
            "linear: bias shape {:?} does not match {} outputs",
            bias.shape(),
            g
        )));
    }
    let mut out = vec![0.0; b * g];
    {
        let xd = input.data();
        let wd = weight.data();
        let bd = bias.data();
        for bi in 0..b {
            let orow = &mut out[bi * g..(bi + 1) * g];
            orow.copy_from_slice(&bd);
            for fi in 0..f {
                let xv = xd[bi * f + fi];
                let wrow = &wd[fi * g..(fi + 1) * g];
                for gi in 0..g {
                    orow[gi] += xv * wrow[gi];
                }
            }
        }
    }
    let (ic, wc, bc) = (input.clone(), weight.clone(), bias.clone());
    Ok(Tensor::from_op(
        vec![b, g],
        out,
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |gy| {
            if bc.requires_grad_flag() {
                let mut db = vec![0.0; g];
                for bi in 0..b {
                    for (gi, dbv) in db.iter_mut().enumerate() {
                        *dbv += gy[bi * g + gi];
                    }
                }
                bc.accumulate_grad(&db);
            }
            if ic.requires_grad_flag() {
                let wd = wc.data();
                let mut dx = vec![0.0; b * f];
                for bi in 0..b {
                    let grow = &gy[bi * g..(bi + 1) * g];
                    for fi in 0..f {
                        let wrow = &wd[fi * g..(fi + 1) * g];
                        let mut s = 0.0;
                        for gi in 0..g {
                            s += grow[gi] * wrow[gi];
                        }
                        dx[bi * f + fi] = s;
                    }
                }
                ic.accumulate_grad(&dx);
            }
            if wc.requires_grad_flag() {
                let xd = ic.data();
                let mut dw = vec![0.0; f * g];
                for bi in 0..b {
                    let grow = &gy[bi * g..(bi + 1) * g];
                    for fi in 0..f {
                        let xv = xd[bi * f + fi];
                        let dwrow = &mut dw[fi * g..(fi + 1) * g];
                        for gi in 0..g {
                            dwrow[gi] += xv * grow[gi];
                        }
                    }
                }
                wc.accumulate_grad(&dw);
            }
        }),
    ))
}

/// LSTM over [B×T×F] with zero initial state. Gate order: input, forget,
/// cell, output. Weights are `w_ih [4H×F]`, `w_hh [4H×H]`, `bias [4H]`.
/// Returns the full output sequence [B×T×H] and the final hidden state [B×H].
pub fn lstm_seq(
    input: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    bias: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let ish = input.shape();
    if ish.len() != 3 {
        return Err(Error::Shape(format!("lstm_seq expects rank 3 input, got {:?}", ish)));
    }
    let (b, t, f) = (ish[0], ish[1], ish[2]);
    let wih_sh = w_ih.shape();
    let whh_sh = w_hh.shape();
    if wih_sh.len() != 2 || wih_sh[0] % 4 != 0 || wih_sh[1] != f {
        return Err(Error::Shape(format!(
            "lstm_seq: w_ih shape {:?} incompatible with {} input features",
            wih_sh, f
        )));
    }
    let h = wih_sh[0] / 4;
    if whh_sh != vec![4 * h, h] || bias.shape() != vec![4 * h] {
        return Err(Error::Shape(format!(
            "lstm_seq: recurrent shapes {:?}/{:?} incompatible with hidden size {}",
            whh_sh,
            bias.shape(),
            h
        )));
    }
    let track = input.requires_grad_flag()
        || w_ih.requires_grad_flag()
        || w_hh.requires_grad_flag()
        || bias.requires_grad_flag();

    let mut outputs = vec![0.0; b * t * h];
    // Saved activations per (batch, time): gates and cell states for BPTT.
    let n_save = if track { b * t * h } else { 0 };
    let mut sv_i = vec![0.0; n_save];
    let mut sv_f = vec![0.0; n_save];
    let mut sv_g = vec![0.0; n_save];
    let mut sv_o = vec![0.0; n_save];
    let mut sv_c = vec![0.0; n_save];
    let mut sv_tc = vec![0.0; n_save];
    {
        let xg = input.data();
        let wihg = w_ih.data();
        let whhg = w_hh.data();
        let bg = bias.data();
        let (x, wih, whh, bs): (&[f64], &[f64], &[f64], &[f64]) = (&xg, &wihg, &whhg, &bg);
        struct Rows<'a> {
            out: &'a mut [f64],
            i: &'a mut [f64],
            f: &'a mut [f64],
            g: &'a mut [f64],
            o: &'a mut [f64],
            c: &'a mut [f64],
            tc: &'a mut [f64],
        }
        let body = |bi: usize, rows: Rows<'_>| {
            let xb = &x[bi * t * f..(bi + 1) * t * f];
            let mut hv = vec![0.0; h];
            let mut cv = vec![0.0; h];
            let mut z = vec![0.0; 4 * h];
            for ti in 0..t {
                let xt = &xb[ti * f..(ti + 1) * f];
                z.copy_from_slice(bs);
                for (j, zv) in z.iter_mut().enumerate() {
                    let wrow = &wih[j * f..(j + 1) * f];
                    let mut s = 0.0;
                    for fi in 0..f {
                        s += wrow[fi] * xt[fi];
                    }
                    let rrow = &whh[j * h..(j + 1) * h];
                    for hi in 0..h {
                        s += rrow[hi] * hv[hi];
                    }
                    *zv += s;
                }
                for hi in 0..h {
                    let ig = sigmoid(z[hi]);
                    let fg = sigmoid(z[h + hi]);
                    let gg = z[2 * h + hi].tanh();
                    let og = sigmoid(z[3 * h + hi]);
                    let c_new = fg * cv[hi] + ig * gg;
                    let tc = c_new.tanh();
                    cv[hi] = c_new;
                    hv[hi] = og * tc;
                    rows.out[ti * h + hi] = hv[hi];
                    if track {
                        rows.i[ti * h + hi] = ig;
                        rows.f[ti * h + hi] = fg;
                        rows.g[ti * h + hi] = gg;
                        rows.o[ti * h + hi] = og;
                        rows.c[ti * h + hi] = c_new;
                        rows.tc[ti * h + hi] = tc;
                    }
                }
            }
        };
        let sz = t * h;
        if track {
            let iter = outputs
                .chunks_mut(sz)
                .zip(sv_i.chunks_mut(sz))
                .zip(sv_f.chunks_mut(sz))
                .zip(sv_g.chunks_mut(sz))
                .zip(sv_o.chunks_mut(sz))
                .zip(sv_c.chunks_mut(sz))
                .zip(sv_tc.chunks_mut(sz))
                .enumerate()
                .map(|(bi, ((((((out, i), fr), g), o), c), tc))| {
                    (bi, Rows { out, i, f: fr, g, o, c, tc })
                })
                .collect::<Vec<_>>();
            if b >= PAR_BATCH_MIN {
                iter.into_par_iter().for_each(|(bi, rows)| body(bi, rows));
            } else {
                iter.into_iter().for_each(|(bi, rows)| body(bi, rows));
            }
        } else {
            let (mut e1, mut e2, mut e3, mut e4, mut e5, mut e6) =
                (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (bi, out) in outputs.chunks_mut(sz).enumerate() {
                let rows = Rows {
                    out,
                    i: &mut e1,
                    f: &mut e2,
                    g: &mut e3,
                    o: &mut e4,
                    c: &mut e5,
                    tc: &mut e6,
                };
                body(bi, rows);
            }
        }
    }

    let out_hist = if track { outputs.clone() } else { Vec::new() };
    let (ic, wihc, whhc, bc) = (input.clone(), w_ih.clone(), w_hh.clone(), bias.clone());
    let seq = Tensor::from_op(
        vec![b, t, h],
        outputs,
        vec![input.clone(), w_ih.clone(), w_hh.clone(), bias.clone()],
        Box::new(move |gy| {
            // Per-sample BPTT; weight-gradient partials reduced in batch order.
            struct Partial {
                dx: Vec<f64>,
                dwih: Vec<f64>,
                dwhh: Vec<f64>,
                db: Vec<f64>,
            }
            // Data borrows live only inside this block so the accumulation
            // below can re-borrow the same parents mutably.
            let partials: Vec<Partial> = {
            let xg = ic.data();
            let wihg = wihc.data();
            let whhg = whhc.data();
            let (x, wih, whh): (&[f64], &[f64], &[f64]) = (&xg, &wihg, &whhg);
            let per_batch = |bi: usize| -> Partial {
                let sz = t * h;
                let gyb = &gy[bi * sz..(bi + 1) * sz];
                let (ib, fb, gb, ob) = (
                    &sv_i[bi * sz..(bi + 1) * sz],
                    &sv_f[bi * sz..(bi + 1) * sz],
                    &sv_g[bi * sz..(bi + 1) * sz],
                    &sv_o[bi * sz..(bi + 1) * sz],
                );
                let (cb, tcb) = (
                    &sv_c[bi * sz..(bi + 1) * sz],
                    &sv_tc[bi * sz..(bi + 1) * sz],
                );
                let hb = &out_hist[bi * sz..(bi + 1) * sz];
                let xb = &x[bi * t * f..(bi + 1) * t * f];
                let mut dx = vec![0.0; t * f];
                let mut dwih = vec![0.0; 4 * h * f];
                let mut dwhh = vec![0.0; 4 * h * h];
                let mut db = vec![0.0; 4 * h];
                let mut dh = vec![0.0; h];
                let mut dc = vec![0.0; h];
                let mut dz = vec![0.0; 4 * h];
                for ti in (0..t).rev() {
                    for hi in 0..h {
                        let idx = ti * h + hi;
                        let dht = dh[hi] + gyb[idx];
                        let (ig, fg, gg, og) = (ib[idx], fb[idx], gb[idx], ob[idx]);
                        let tc = tcb[idx];
                        let dct = dc[hi] + dht * og * (1.0 - tc * tc);
                        let c_prev = if ti == 0 { 0.0 } else { cb[idx - h] };
                        let d_o = dht * tc;
                        let d_i = dct * gg;
                        let d_g = dct * ig;
                        let d_f = dct * c_prev;
                        dc[hi] = dct * fg;
                        dz[hi] = d_i * ig * (1.0 - ig);
                        dz[h + hi] = d_f * fg * (1.0 - fg);
                        dz[2 * h + hi] = d_g * (1.0 - gg * gg);
                        dz[3 * h + hi] = d_o * og * (1.0 - og);
                    }
                    let xt = &xb[ti * f..(ti + 1) * f];
                    for (j, &dzv) in dz.iter().enumerate() {
                        if dzv == 0.0 {
                            continue;
                        }
                        db[j] += dzv;
                        let dwrow = &mut dwih[j * f..(j + 1) * f];
                        for fi in 0..f {
                            dwrow[fi] += dzv * xt[fi];
                        }
                        if ti > 0 {
                            let hprev = &hb[(ti - 1) * h..ti * h];
                            let drrow = &mut dwhh[j * h..(j + 1) * h];
                            for hi in 0..h {
                                drrow[hi] += dzv * hprev[hi];
                            }
                        }
                    }
                    let dxt = &mut dx[ti * f..(ti + 1) * f];
                    for (j, &dzv) in dz.iter().enumerate() {
                        if dzv == 0.0 {
                            continue;
                        }
                        let wrow = &wih[j * f..(j + 1) * f];
                        for fi in 0..f {
                            dxt[fi] += dzv * wrow[fi];
                        }
                    }
                    for dhv in dh.iter_mut() {
                        *dhv = 0.0;
                    }
                    for (j, &dzv) in dz.iter().enumerate() {
                        if dzv == 0.0 {
                            continue;
                        }
                        let rrow = &whh[j * h..(j + 1) * h];
                        for hi in 0..h {
                            dh[hi] += dzv * rrow[hi];
                        }
                    }
                }
                Partial { dx, dwih, dwhh, db }
            };
            if b >= PAR_BATCH_MIN {
                (0..b).into_par_iter().map(per_batch).collect()
            } else {
                (0..b).map(per_batch).collect()
            }
            };
            if ic.requires_grad_flag() {
                let mut dx = vec![0.0; b * t * f];
                for (bi, p) in partials.iter().enumerate() {
                    dx[bi * t * f..(bi + 1) * t * f].copy_from_slice(&p.dx);
                }
                ic.accumulate_grad(&dx);
            }
            if wihc.requires_grad_flag() {
                let mut dw = vec![0.0; 4 * h * f];
                for p in &partials {
                    for (a, v) in dw.iter_mut().zip(&p.dwih) {
                        *a += v;
                    }
                }
                wihc.accumulate_grad(&dw);
            }
            if whhc.requires_grad_flag() {
                let mut dw = vec![0.0; 4 * h * h];
                for p in &partials {
                    for (a, v) in dw.iter_mut().zip(&p.dwhh) {
                        *a += v;
                    }
                }
                whhc.accumulate_grad(&dw);
            }
            if bc.requires_grad_flag() {
                let mut db = vec![0.0; 4 * h];
                for p in &partials {
                    for (a, v) in db.iter_mut().zip(&p.db) {
                        *a += v;
                    }
                }
                bc.accumulate_grad(&db);
            }
        }),
    );
    let final_h = take_last_timestep(&seq)?;
    Ok((seq, final_h))
}

/// [B×T×H] -> [B×H], selecting t = T−1.
pub fn take_last_timestep(x: &Tensor) -> Result<Tensor> {
    let sh = x.shape();
    if sh.len() != 3 {
        return Err(Error::Shape(format!(
            "take_last_timestep expects rank 3, got {:?}",
            sh
        )));
    }
    let (b, t, h) = (sh[0], sh[1], sh[2]);
    let xd = x.data();
    let mut out = vec![0.0; b * h];
    for bi in 0..b {
        out[bi * h..(bi + 1) * h]
            .copy_from_slice(&xd[(bi * t + t - 1) * h..(bi * t + t) * h]);
    }
    drop(xd);
    let xc = x.clone();
    Ok(Tensor::from_op(
        vec![b, h],
        out,
        vec![x.clone()],
        Box::new(move |gy| {
            let mut gx = vec![0.0; b * t * h];
            for bi in 0..b {
                gx[(bi * t + t - 1) * h..(bi * t + t) * h]
                    .copy_from_slice(&gy[bi * h..(bi + 1) * h]);
            }
            xc.accumulate_grad(&gx);
        }),
    ))
}

/// Single-head self-attention over [B×N×D]: softmax(QKᵀ/√D)·V with learned
/// square projections and no biases.
pub fn self_attention(
    input: &Tensor,
    w_q: &Tensor,
    w_k: &Tensor,
    w_v: &Tensor,
) -> Result<Tensor> {
    let ish = input.shape();
    if ish.len() != 3 {
        return Err(Error::Shape(format!(
            "self_attention expects rank 3 input, got {:?}",
            ish
        )));
    }
    let (b, n, d) = (ish[0], ish[1], ish[2]);
    for (name, w) in [("w_q", w_q), ("w_k", w_k), ("w_v", w_v)] {
        if w.shape() != vec![d, d] {
            return Err(Error::Shape(format!(
                "self_attention: {} shape {:?} does not match model dim {}",
                name,
                w.shape(),
                d
            )));
        }
    }
    let track = input.requires_grad_flag()
        || w_q.requires_grad_flag()
        || w_k.requires_grad_flag()
        || w_v.requires_grad_flag();
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();

    let mut out = vec![0.0; b * n * d];
    let n_save = if track { b } else { 0 };
    let mut sv_q = vec![0.0; n_save * n * d];
    let mut sv_k = vec![0.0; n_save * n * d];
    let mut sv_v = vec![0.0; n_save * n * d];
    let mut sv_a = vec![0.0; n_save * n * n];
    {
        let xg = input.data();
        let (wqg, wkg, wvg) = (w_q.data(), w_k.data(), w_v.data());
        for bi in 0..b {
            let xb = &xg[bi * n * d..(bi + 1) * n * d];
            let q = mm(xb, &wqg, n, d, d);
            let kq = mm(xb, &wkg, n, d, d);
            let v = mm(xb, &wvg, n, d, d);
            let mut a = mm_t2(&q, &kq, n, d, n);
            for av in a.iter_mut() {
                *av *= inv_sqrt_d;
            }
            softmax_rows_inplace(&mut a, n, n);
            let y = mm(&a, &v, n, n, d);
            out[bi * n * d..(bi + 1) * n * d].copy_from_slice(&y);
            if track {
                sv_q[bi * n * d..(bi + 1) * n * d].copy_from_slice(&q);
                sv_k[bi * n * d..(bi + 1) * n * d].copy_from_slice(&kq);
                sv_v[bi * n * d..(bi + 1) * n * d].copy_from_slice(&v);
                sv_a[bi * n * n..(bi + 1) * n * n].copy_from_slice(&a);
            }
        }
    }

    let (ic, wqc, wkc, wvc) = (input.clone(), w_q.clone(), w_k.clone(), w_v.clone());
    Ok(Tensor::from_op(
        vec![b, n, d],
        out,
        vec![input.clone(), w_q.clone(), w_k.clone(), w_v.clone()],
        Box::new(move |gy| {
            let mut dx = vec![0.0; b * n * d];
            let mut dwq = vec![0.0; d * d];
            let mut dwk = vec![0.0; d * d];
            let mut dwv = vec![0.0; d * d];
            // Data borrows are scoped so the parents can be re-borrowed
            // mutably when gradients are accumulated below.
            {
            let xg = ic.data();
            let (wqg, wkg, wvg) = (wqc.data(), wkc.data(), wvc.data());
            for bi in 0..b {
                let xb = &xg[bi * n * d..(bi + 1) * n * d];
                let gyb = &gy[bi * n * d..(bi + 1) * n * d];
                let q = &sv_q[bi * n * d..(bi + 1) * n * d];
                let kq = &sv_k[bi * n * d..(bi + 1) * n * d];
                let v = &sv_v[bi * n * d..(bi + 1) * n * d];
                let a = &sv_a[bi * n * n..(bi + 1) * n * n];
                let da = mm_t2(gyb, v, n, d, n);
                let dv = mm_t1(a, gyb, n, n, d);
                // Row-wise softmax backward: dS = A ⊙ (dA − rowsum(dA ⊙ A)).
                let mut ds = vec![0.0; n * n];
                for r in 0..n {
                    let arow = &a[r * n..(r + 1) * n];
                    let darow = &da[r * n..(r + 1) * n];
                    let dot: f64 = arow.iter().zip(darow).map(|(x, y)| x * y).sum();
                    for cidx in 0..n {
                        ds[r * n + cidx] = arow[cidx] * (darow[cidx] - dot);
                    }
                }
                for dsv in ds.iter_mut() {
                    *dsv *= inv_sqrt_d;
                }
                let dq = mm(&ds, kq, n, n, d);
                let dk = mm_t1(&ds, q, n, n, d);
                if ic.requires_grad_flag() {
                    let dxq = mm_t2(&dq, &wqg, n, d, d);
                    let dxk = mm_t2(&dk, &wkg, n, d, d);
                    let dxv = mm_t2(&dv, &wvg, n, d, d);
                    let dxb = &mut dx[bi * n * d..(bi + 1) * n * d];
                    for i in 0..n * d {
                        dxb[i] = dxq[i] + dxk[i] + dxv[i];
                    }
                }
                for (dw, dp) in [(&mut dwq, &dq), (&mut dwk, &dk), (&mut dwv, &dv)] {
                    let part = mm_t1(xb, dp, n, d, d);
                    for (a, v) in dw.iter_mut().zip(&part) {
                        *a += v;
                    }
                }
            }
            }
            if ic.requires_grad_flag() {
                ic.accumulate_grad(&dx);
            }
            if wqc.requires_grad_flag() {
                wqc.accumulate_grad(&dwq);
            }
            if wkc.requires_grad_flag() {
                wkc.accumulate_grad(&dwk);
            }
            if wvc.requires_grad_flag() {
                wvc.accumulate_grad(&dwv);
            }
        }),
    ))
}

/// Fixed-coefficient contraction to a scalar: Σᵢ wᵢ·xᵢ. Used to reduce
/// non-scalar op outputs when verifying gradients.
pub fn weighted_sum(x: &Tensor, w: &[f64]) -> Result<Tensor> {
    if w.len() != x.numel() {
        return Err(Error::Shape(format!(
            "weighted_sum: {} coefficients for {} elements",
            w.len(),
            x.numel()
        )));
    }
    let s: f64 = x.data().iter().zip(w).map(|(a, b)| a * b).sum();
    let wv = w.to_vec();
    let xc = x.clone();
    Ok(Tensor::from_op(
        vec![1],
        vec![s],
        vec![x.clone()],
        Box::new(move |g| {
            let gx: Vec<f64> = wv.iter().map(|v| v * g[0]).collect();
            xc.accumulate_grad(&gx);
        }),
    ))
}

/// Temperature softmax over rows of [B×C], computed with max-subtraction.
pub fn softmax_t(logits: &Tensor, temp: f64) -> Result<Tensor> {
    if !(temp > 0.0) {
        return Err(Error::InvalidInput(format!(
            "softmax temperature must be positive, got {}",
            temp
        )));
    }
    let sh = logits.shape();
    if sh.len() != 2 {
        return Err(Error::Shape(format!("softmax_t expects rank 2, got {:?}", sh)));
    }
    let (b, c) = (sh[0], sh[1]);
    let mut out = logits.to_vec();
    for v in out.iter_mut() {
        *v /= temp;
    }
    softmax_rows_inplace(&mut out, b, c);
    let y_saved = out.clone();
    let lc = logits.clone();
    Ok(Tensor::from_op(
        vec![b, c],
        out,
        vec![logits.clone()],
        Box::new(move |gy| {
            let mut gx = vec![0.0; b * c];
            for bi in 0..b {
                let yrow = &y_saved[bi * c..(bi + 1) * c];
                let grow = &gy[bi * c..(bi + 1) * c];
                let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                for ci in 0..c {
                    gx[bi * c + ci] = yrow[ci] * (grow[ci] - dot) / temp;
                }
            }
            lc.accumulate_grad(&gx);
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t3(b: usize, c: usize, t: usize, data: Vec<f64>) -> Tensor {
        Tensor::from_vec(vec![b, c, t], data)
    }

    #[test]
    fn conv1d_same_pad_ones() {
        let x = t3(1, 1, 4, vec![1.0; 4]);
        let w = Tensor::from_vec(vec![1, 1, 3], vec![1.0, 1.0, 1.0]);
        let b = Tensor::from_vec(vec![1], vec![0.0]);
        let y = conv1d(&x, &w, &b, 1, Padding::Same).unwrap();
        assert_eq!(y.to_vec(), vec![2.0, 3.0, 3.0, 2.0]);
    }

    #[test]
    fn conv1d_zero_weights_zero_output() {
        let x = t3(2, 3, 7, (0..42).map(|v| v as f64).collect());
        let w = Tensor::zeros(vec![4, 3, 3]);
        let b = Tensor::zeros(vec![4]);
        let y = conv1d(&x, &w, &b, 1, Padding::Same).unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 0.0));
        assert_eq!(y.shape(), vec![2, 4, 7]);
    }

    #[test]
    fn conv1d_channel_mismatch_is_shape_error() {
        let x = t3(1, 2, 5, vec![0.0; 10]);
        let w = Tensor::zeros(vec![1, 3, 3]);
        let b = Tensor::zeros(vec![1]);
        let err = conv1d(&x, &w, &b, 1, Padding::Same).unwrap_err();
        assert_eq!(err.category(), "shape");
    }

    #[test]
    fn maxpool_basic_and_stack_lengths() {
        let x = t3(1, 1, 4, vec![1.0, 3.0, 2.0, 5.0]);
        let y = maxpool1d(&x, 2, 2).unwrap();
        assert_eq!(y.to_vec(), vec![3.0, 5.0]);

        let x = t3(1, 1, 100, vec![7.0; 100]);
        let p1 = maxpool1d(&x, 2, 2).unwrap();
        assert_eq!(p1.shape(), vec![1, 1, 50]);
        let p2 = maxpool1d(&p1, 2, 2).unwrap();
        assert_eq!(p2.shape(), vec![1, 1, 25]);
        let p3 = maxpool1d(&p2, 2, 2).unwrap();
        assert_eq!(p3.shape(), vec![1, 1, 12]);
        assert!(p3.to_vec().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn maxpool_too_short_is_shape_error() {
        let x = t3(1, 1, 1, vec![1.0]);
        assert_eq!(maxpool1d(&x, 2, 2).unwrap_err().category(), "shape");
    }

    #[test]
    fn maxpool_gradient_goes_to_first_argmax_on_tie() {
        let x = t3(1, 1, 4, vec![2.0, 2.0, 1.0, 5.0]).requires_grad(true);
        let y = maxpool1d(&x, 2, 2).unwrap();
        y.backward();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn linear_identity_and_bias() {
        let x = Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let w = Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b = Tensor::zeros(vec![2]);
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);

        let x0 = Tensor::zeros(vec![3, 2]);
        let b2 = Tensor::from_vec(vec![2], vec![0.5, -1.5]);
        let y2 = linear(&x0, &w, &b2).unwrap();
        assert_eq!(y2.to_vec(), vec![0.5, -1.5, 0.5, -1.5, 0.5, -1.5]);
    }

    #[test]
    fn lstm_zero_weights_gives_zero_final_state() {
        let x = Tensor::from_vec(vec![2, 4, 3], (0..24).map(|v| v as f64 * 0.1).collect());
        let w_ih = Tensor::zeros(vec![8, 3]);
        let w_hh = Tensor::zeros(vec![8, 2]);
        let b = Tensor::zeros(vec![8]);
        let (_, final_h) = lstm_seq(&x, &w_ih, &w_hh, &b).unwrap();
        assert_eq!(final_h.shape(), vec![2, 2]);
        assert!(final_h.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_single_step_matches_cell_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = 3;
        let h = 2;
        let x: Vec<f64> = (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w_ih: Vec<f64> = (0..4 * h * f).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let b: Vec<f64> = (0..4 * h).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let xt = Tensor::from_vec(vec![1, 1, f], x.clone());
        let wt = Tensor::from_vec(vec![4 * h, f], w_ih.clone());
        let rt = Tensor::zeros(vec![4 * h, h]);
        let bt = Tensor::from_vec(vec![4 * h], b.clone());
        let (outputs, final_h) = lstm_seq(&xt, &wt, &rt, &bt).unwrap();
        assert_eq!(outputs.to_vec(), final_h.to_vec());
        for hi in 0..h {
            let z = |gate: usize| -> f64 {
                let j = gate * h + hi;
                b[j] + (0..f).map(|fi| w_ih[j * f + fi] * x[fi]).sum::<f64>()
            };
            let expect = sigmoid(z(3)) * (sigmoid(z(0)) * z(2).tanh()).tanh();
            assert!((final_h.to_vec()[hi] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_single_token_equals_value_projection() {
        let x = Tensor::from_vec(vec![1, 1, 3], vec![0.4, -1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mk = |rng: &mut ChaCha8Rng| {
            Tensor::from_vec(vec![3, 3], (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect())
        };
        let (wq, wk, wv) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let y = self_attention(&x, &wq, &wk, &wv).unwrap();
        let v = mm(&x.to_vec(), &wv.to_vec(), 1, 3, 3);
        for (a, b) in y.to_vec().iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_identical_tokens_average_uniformly() {
        let token = [0.3, 0.7, -0.2];
        let mut data = Vec::new();
        for _ in 0..4 {
            data.extend_from_slice(&token);
        }
        let x = Tensor::from_vec(vec![1, 4, 3], data);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mk = |rng: &mut ChaCha8Rng| {
            Tensor::from_vec(vec![3, 3], (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect())
        };
        let (wq, wk, wv) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let y = self_attention(&x, &wq, &wk, &wv).unwrap();
        let v = mm(&token, &wv.to_vec(), 1, 3, 3);
        let yd = y.to_vec();
        for ni in 0..4 {
            for di in 0..3 {
                assert!((yd[ni * 3 + di] - v[di]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_symmetry_and_scalar_values() {
        let z = Tensor::from_vec(vec![1, 2], vec![0.0, 0.0]);
        assert_eq!(softmax_t(&z, 7.0).unwrap().to_vec(), vec![0.5, 0.5]);

        let z = Tensor::from_vec(vec![1, 2], vec![1.0, 0.0]);
        let p1 = softmax_t(&z, 1.0).unwrap().to_vec();
        assert!((p1[0] - 0.7311).abs() < 1e-4);
        assert!((p1[1] - 0.2689).abs() < 1e-4);

        let p20 = softmax_t(&z, 20.0).unwrap().to_vec();
        assert!((p20[0] - 0.51250).abs() < 1e-4);
        assert!((p20[1] - 0.48750).abs() < 1e-4);
        assert!((p20[0] - 0.5).abs() < 0.013);
    }

    #[test]
    fn softmax_rejects_nonpositive_temperature() {
        let z = Tensor::from_vec(vec![1, 2], vec![1.0, 0.0]);
        assert_eq!(softmax_t(&z, 0.0).unwrap_err().category(), "invalid-input");
        assert_eq!(softmax_t(&z, -2.0).unwrap_err().category(), "invalid-input");
    }

    #[test]
    fn dropout_eval_is_identity_and_train_scales() {
        let x = Tensor::from_vec(vec![2, 5], (1..=10).map(|v| v as f64).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = dropout(&x, 0.4, false, &mut rng);
        assert_eq!(y.to_vec(), x.to_vec());

        let y = dropout(&x, 0.4, true, &mut rng);
        for (xi, yi) in x.to_vec().iter().zip(y.to_vec()) {
            let kept = xi / 0.6;
            assert!(yi == 0.0 || (yi - kept).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_features_roundtrip_gradient() {
        let a = Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).requires_grad(true);
        let b = Tensor::from_vec(vec![2, 1], vec![5.0, 6.0]).requires_grad(true);
        let y = concat_features(&[&a, &b]).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        y.backward();
        assert_eq!(a.grad().unwrap(), vec![1.0; 4]);
        assert_eq!(b.grad().unwrap(), vec![1.0; 2]);
    }

    #[test]
    fn transpose_roundtrip() {
        let x = t3(1, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = transpose_12(&x).unwrap();
        assert_eq!(y.shape(), vec![1, 3, 2]);
        assert_eq!(y.to_vec(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let z = transpose_12(&y).unwrap();
        assert_eq!(z.to_vec(), x.to_vec());
    }

    #[test]
    fn global_maxpool_takes_row_maxima() {
        let x = t3(1, 2, 3, vec![1.0, 9.0, 2.0, -5.0, -1.0, -2.0]).requires_grad(true);
        let y = global_maxpool_time(&x).unwrap();
        assert_eq!(y.to_vec(), vec![9.0, -1.0]);
        y.backward();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    }
}
