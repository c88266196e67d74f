//! Scalar training losses.
//!
//! All losses reduce by batch mean. Distillation losses treat the teacher
//! side as a constant: gradients flow only into the student argument.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

fn check_rank2(name: &str, x: &Tensor) -> Result<(usize, usize)> {
    let sh = x.shape();
    if sh.len() != 2 {
        return Err(Error::Shape(format!("{} expects rank 2, got {:?}", name, sh)));
    }
    Ok((sh[0], sh[1]))
}

/// Row-wise log-softmax with max-subtraction.
fn log_softmax_rows(z: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &z[r * cols..(r + 1) * cols];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() + mx;
        for c in 0..cols {
            out[r * cols + c] = row[c] - lse;
        }
    }
    out
}

/// Mean categorical cross-entropy: −log softmax(logits)[label], averaged
/// over the batch.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, c) = check_rank2("cross_entropy", logits)?;
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "cross_entropy: {} labels for batch of {}",
            labels.len(),
            b
        )));
    }
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::InvalidLabel(format!(
                "label {} at row {} out of range for {} classes",
                y, i, c
            )));
        }
    }
    let logp = log_softmax_rows(&logits.data(), b, c);
    let mut loss = 0.0;
    for (bi, &y) in labels.iter().enumerate() {
        loss -= logp[bi * c + y];
    }
    loss /= b as f64;

    let track = logits.requires_grad_flag();
    let probs: Vec<f64> = if track {
        logp.iter().map(|v| v.exp()).collect()
    } else {
        Vec::new()
    };
    let labels_owned: Vec<usize> = labels.to_vec();
    let lc = logits.clone();
    Ok(Tensor::from_op(
        vec![1],
        vec![loss],
        vec![logits.clone()],
        Box::new(move |g| {
            let scale = g[0] / b as f64;
            let mut gx = vec![0.0; b * c];
            for (bi, &y) in labels_owned.iter().enumerate() {
                for ci in 0..c {
                    let indicator = if ci == y { 1.0 } else { 0.0 };
                    gx[bi * c + ci] = scale * (probs[bi * c + ci] - indicator);
                }
            }
            lc.accumulate_grad(&gx);
        }),
    ))
}

/// Mean KL divergence between tempered softened distributions,
/// KL(σ(z_t/T) ‖ σ(z_s/T)). The teacher side is detached.
pub fn kl_div_soft(teacher_logits: &Tensor, student_logits: &Tensor, temp: f64) -> Result<Tensor> {
    if !(temp > 0.0) {
        return Err(Error::InvalidInput(format!(
            "distillation temperature must be positive, got {}",
            temp
        )));
    }
    let (bt, ct) = check_rank2("kl_div_soft", teacher_logits)?;
    let (bs, cs) = check_rank2("kl_div_soft", student_logits)?;
    if (bt, ct) != (bs, cs) {
        return Err(Error::Shape(format!(
            "kl_div_soft: teacher {:?} vs student {:?}",
            teacher_logits.shape(),
            student_logits.shape()
        )));
    }
    let (b, c) = (bt, ct);
    let scaled = |x: &Tensor| -> Vec<f64> { x.data().iter().map(|v| v / temp).collect() };
    let logp_t = log_softmax_rows(&scaled(teacher_logits), b, c);
    let logq_s = log_softmax_rows(&scaled(student_logits), b, c);
    let p_t: Vec<f64> = logp_t.iter().map(|v| v.exp()).collect();
    let mut loss = 0.0;
    for i in 0..b * c {
        if p_t[i] > 0.0 {
            loss += p_t[i] * (logp_t[i] - logq_s[i]);
        }
    }
    loss /= b as f64;

    let track = student_logits.requires_grad_flag();
    let q_s: Vec<f64> = if track {
        logq_s.iter().map(|v| v.exp()).collect()
    } else {
        Vec::new()
    };
    let sc = student_logits.clone();
    Ok(Tensor::from_op(
        vec![1],
        vec![loss],
        vec![student_logits.clone()],
        Box::new(move |g| {
            let scale = g[0] / (b as f64 * temp);
            let gx: Vec<f64> = q_s
                .iter()
                .zip(&p_t)
                .map(|(q, p)| scale * (q - p))
                .collect();
            sc.accumulate_grad(&gx);
        }),
    ))
}

/// Mean cosine distance 1 − cos(h_t, h_s) over the batch. The teacher side
/// is detached; rows where either vector has zero norm contribute exactly 1
/// with zero gradient.
pub fn cosine_distance(h_t: &Tensor, h_s: &Tensor) -> Result<Tensor> {
    let (bt, dt) = check_rank2("cosine_distance", h_t)?;
    let (bs, ds) = check_rank2("cosine_distance", h_s)?;
    if (bt, dt) != (bs, ds) {
        return Err(Error::Shape(format!(
            "cosine_distance: teacher {:?} vs student {:?}",
            h_t.shape(),
            h_s.shape()
        )));
    }
    let (b, d) = (bt, dt);
    let t = h_t.to_vec();
    let s = h_s.to_vec();
    let mut loss = 0.0;
    // Per-row (dot, ‖t‖, ‖s‖); rows with a zero norm are marked inert.
    let mut row_stats = Vec::with_capacity(b);
    for bi in 0..b {
        let tr = &t[bi * d..(bi + 1) * d];
        let sr = &s[bi * d..(bi + 1) * d];
        let dot: f64 = tr.iter().zip(sr).map(|(a, b)| a * b).sum();
        let nt = tr.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ns = sr.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nt == 0.0 || ns == 0.0 {
            loss += 1.0;
            row_stats.push((0.0, 0.0, 0.0));
        } else {
            loss += 1.0 - dot / (nt * ns);
            row_stats.push((dot, nt, ns));
        }
    }
    loss /= b as f64;

    let sc = h_s.clone();
    Ok(Tensor::from_op(
        vec![1],
        vec![loss],
        vec![h_s.clone()],
        Box::new(move |g| {
            let scale = g[0] / b as f64;
            let mut gx = vec![0.0; b * d];
            for (bi, &(dot, nt, ns)) in row_stats.iter().enumerate() {
                if nt == 0.0 {
                    continue;
                }
                let tr = &t[bi * d..(bi + 1) * d];
                let sr = &s[bi * d..(bi + 1) * d];
                let cos = dot / (nt * ns);
                for di in 0..d {
                    // d/ds of −cos = −(t/(‖t‖‖s‖) − cos·s/‖s‖²)
                    gx[bi * d + di] =
                        scale * (cos * sr[di] / (ns * ns) - tr[di] / (nt * ns));
                }
            }
            sc.accumulate_grad(&gx);
        }),
    ))
}
