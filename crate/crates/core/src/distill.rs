//! The distillation loss family and staged training orchestration.
//!
//! Training happens in stages: first the multimodal teacher, then the
//! semantic classifier on the frozen teacher's representations, then the
//! accelerometer-only student under one of eight supervision regimes.
//! Supervisors stay frozen throughout stage two, so the whole stage is a
//! pure function of (data, config, seed); every loss term with an exactly
//! zero coefficient is skipped rather than multiplied out, which makes the
//! α = 1 limit of every strategy bitwise identical to plain
//! cross-entropy training.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::loss::{cosine_distance, cross_entropy, kl_div_soft};
use crate::autodiff::ops::{add, scale};
use crate::autodiff::{Adadelta, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::models::{
    RepresentationBundle, SemanticClassifier, StudentNet, TeacherNet, TeacherVariant,
    STUDENT_CHANNELS, STUDENT_REP_DIM,
};
use crate::signal::normalize::NormalizationStats;
use crate::signal::session::ChannelKind;
use crate::signal::window::WindowedDataset;
use crate::util::derive_seed;

/// Fixed weight of each cosine term in the merged loss. Deliberately not
/// the complement of α.
pub const MERGED_KD_COEFF: f64 = 0.01;

/// Internal batch size used when precomputing supervisor representations.
const CACHE_BATCH: usize = 256;

/// The eight student supervision regimes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Plain cross-entropy on ground truth; no teacher involvement.
    #[default]
    Baseline,
    /// Tempered KL against the teacher's logits.
    Logit,
    /// Cosine alignment with the teacher's attention representation.
    AttnRep,
    /// Cosine alignment with the teacher's LSTM representation.
    CausalRep,
    /// Cosine alignment with the concatenated representation.
    CombiRep,
    /// Cross-entropy plus all three cosine terms at fixed weight.
    MergedLoss,
    /// Tempered KL against the semantic classifier's logits.
    SCLogit,
    /// Cosine alignment with the semantic classifier's hidden layer.
    SCFeature,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Baseline,
        Strategy::Logit,
        Strategy::AttnRep,
        Strategy::CausalRep,
        Strategy::CombiRep,
        Strategy::MergedLoss,
        Strategy::SCLogit,
        Strategy::SCFeature,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Logit => "logit",
            Strategy::AttnRep => "attnrep",
            Strategy::CausalRep => "causalrep",
            Strategy::CombiRep => "combirep",
            Strategy::MergedLoss => "mergedloss",
            Strategy::SCLogit => "sclogit",
            Strategy::SCFeature => "scfeature",
        }
    }

    /// Accepts canonical names case-insensitively, ignoring `-`/`_`.
    pub fn parse(s: &str) -> Result<Strategy> {
        let canon: String = s
            .trim()
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect::<String>()
            .to_ascii_lowercase();
        for v in Strategy::ALL {
            if canon == v.name() {
                return Ok(v);
            }
        }
        let valid: Vec<&str> = Strategy::ALL.iter().map(|v| v.name()).collect();
        Err(Error::Config(format!(
            "unknown strategy '{}'; valid strategies: {}",
            s,
            valid.join(", ")
        )))
    }

    /// Temperature participates only in the logit-matching losses.
    pub fn uses_tau(&self) -> bool {
        matches!(self, Strategy::Logit | Strategy::SCLogit)
    }

    /// Strategies supervised by the semantic classifier.
    pub fn needs_sc(&self) -> bool {
        matches!(self, Strategy::SCLogit | Strategy::SCFeature)
    }

    /// Projector widths the student needs for this strategy against the
    /// given teacher, i.e. every targeted representation whose width
    /// differs from the student's own tap.
    pub fn projector_dims(&self, variant: TeacherVariant) -> Vec<usize> {
        let h = variant.lstm_hidden();
        let mut dims = Vec::new();
        match self {
            Strategy::CausalRep => {
                if h != STUDENT_REP_DIM {
                    dims.push(h);
                }
            }
            Strategy::CombiRep => dims.push(variant.combi_dim()),
            Strategy::MergedLoss => {
                if h != STUDENT_REP_DIM {
                    dims.push(h);
                }
                dims.push(variant.combi_dim());
            }
            _ => {}
        }
        dims.sort_unstable();
        dims
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_alpha() -> f64 {
    0.99
}
fn default_tau() -> f64 {
    4.0
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    0.9
}
fn default_seed() -> u64 {
    7
}

/// One training run's knobs. `alpha` weights the cross-entropy term;
/// `tau` is the distillation temperature for the logit strategies.
/// Baseline ignores both; the feature strategies ignore `tau`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KDConfig {
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for KDConfig {
    fn default() -> KDConfig {
        KDConfig {
            strategy: Strategy::Baseline,
            alpha: default_alpha(),
            tau: default_tau(),
            epochs: default_epochs(),
            patience: default_patience(),
            batch_size: default_batch(),
            lr: default_lr(),
            seed: default_seed(),
        }
    }
}

impl KDConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        if self.epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs, patience and batch_size must all be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Scalar decomposition of one loss evaluation. `total` always equals the
/// active strategy's composition of `ce_term` and `kd_term` (within 1e-9);
/// skipped terms report as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub total: f64,
    pub ce_term: f64,
    pub kd_term: f64,
}

/// Weighted sum of loss terms, skipping zero coefficients entirely so the
/// skipped terms contribute neither values nor graph nodes.
fn compose(terms: &[(f64, &Tensor)]) -> Result<Tensor> {
    let mut acc: Option<Tensor> = None;
    for &(c, t) in terms {
        if c == 0.0 {
            continue;
        }
        let piece = scale(t, c);
        acc = Some(match acc {
            None => piece,
            Some(prev) => add(&prev, &piece)?,
        });
    }
    Ok(acc.unwrap_or_else(|| Tensor::zeros(vec![1])))
}

/// Plain cross-entropy on ground-truth labels.
pub fn loss_baseline(student_logits: &Tensor, labels: &[usize]) -> Result<(Tensor, LossReport)> {
    let ce = cross_entropy(student_logits, labels)?;
    let v = ce.item();
    Ok((
        ce,
        LossReport {
            total: v,
            ce_term: v,
            kd_term: 0.0,
        },
    ))
}

/// Logit distillation: `α·CE + (1−α)·KL(σ(z_sup/τ) ‖ σ(z_stu/τ))`. The
/// supervisor side contributes no gradients.
pub fn loss_sc(
    student_logits: &Tensor,
    supervisor_logits: &Tensor,
    labels: &[usize],
    alpha: f64,
    tau: f64,
) -> Result<(Tensor, LossReport)> {
    check_alpha(alpha)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "distillation temperature must be positive, got {}",
            tau
        )));
    }
    let ce = cross_entropy(student_logits, labels)?;
    let kd_coeff = 1.0 - alpha;
    if kd_coeff == 0.0 {
        let v = ce.item();
        return Ok((
            ce,
            LossReport {
                total: v,
                ce_term: v,
                kd_term: 0.0,
            },
        ));
    }
    let kd = kl_div_soft(supervisor_logits, student_logits, tau)?;
    let total = compose(&[(alpha, &ce), (kd_coeff, &kd)])?;
    Ok((
        total.clone(),
        LossReport {
            total: total.item(),
            ce_term: ce.item(),
            kd_term: kd.item(),
        },
    ))
}

/// Feature distillation: `α·CE + (1−α)·cos_dist(h_sup, h_stu)`. The student
/// side must already match the supervisor's width (project first if not).
pub fn loss_feature(
    student_h: &Tensor,
    supervisor_rep: &Tensor,
    student_logits: &Tensor,
    labels: &[usize],
    alpha: f64,
) -> Result<(Tensor, LossReport)> {
    check_alpha(alpha)?;
    let (hs, ht) = (student_h.shape(), supervisor_rep.shape());
    if hs != ht {
        return Err(Error::Shape(format!(
            "feature distillation dimension mismatch: supervisor {:?} vs student {:?}; \
             attach a projector for the supervisor width",
            ht, hs
        )));
    }
    let ce = cross_entropy(student_logits, labels)?;
    let kd_coeff = 1.0 - alpha;
    if kd_coeff == 0.0 {
        let v = ce.item();
        return Ok((
            ce,
            LossReport {
                total: v,
                ce_term: v,
                kd_term: 0.0,
            },
        ));
    }
    let kd = cosine_distance(supervisor_rep, student_h)?;
    let total = compose(&[(alpha, &ce), (kd_coeff, &kd)])?;
    Ok((
        total.clone(),
        LossReport {
            total: total.item(),
            ce_term: ce.item(),
            kd_term: kd.item(),
        },
    ))
}

/// Merged loss: `α·CE + 0.01·Σ cos_dist` over all three teacher
/// representations, each against the appropriately shaped student view.
/// The 0.01 weights are fixed and intentionally do not complement α; at
/// α = 1 the cosine terms are skipped so the strategy degenerates to
/// Baseline like every other.
pub fn loss_merged(
    h_for_attn: &Tensor,
    h_for_causal: &Tensor,
    h_for_combi: &Tensor,
    bundle: &RepresentationBundle,
    student_logits: &Tensor,
    labels: &[usize],
    alpha: f64,
) -> Result<(Tensor, LossReport)> {
    check_alpha(alpha)?;
    let ce = cross_entropy(student_logits, labels)?;
    if alpha == 1.0 {
        let v = ce.item();
        return Ok((
            ce,
            LossReport {
                total: v,
                ce_term: v,
                kd_term: 0.0,
            },
        ));
    }
    let cos_attn = cosine_distance(&bundle.attn_rep, h_for_attn)?;
    let cos_causal = cosine_distance(&bundle.causal_rep, h_for_causal)?;
    let cos_combi = cosine_distance(&bundle.combi_rep, h_for_combi)?;
    let total = compose(&[
        (alpha, &ce),
        (MERGED_KD_COEFF, &cos_attn),
        (MERGED_KD_COEFF, &cos_causal),
        (MERGED_KD_COEFF, &cos_combi),
    ])?;
    Ok((
        total.clone(),
        LossReport {
            total: total.item(),
            ce_term: ce.item(),
            kd_term: cos_attn.item() + cos_causal.item() + cos_combi.item(),
        },
    ))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in [0, 1], got {}",
            alpha
        )));
    }
    Ok(())
}

/// Indices of the channels the student sees: the first accelerometer
/// triple of the layout (the right-hand/right-wrist device in both
/// supported layouts).
pub fn student_channel_indices(ds: &WindowedDataset) -> Result<Vec<usize>> {
    let idx: Vec<usize> = ds
        .channels
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ChannelKind::Accel)
        .map(|(i, _)| i)
        .take(STUDENT_CHANNELS)
        .collect();
    if idx.len() < STUDENT_CHANNELS {
        return Err(Error::Config(format!(
            "student input needs {} accelerometer channels; layout provides {}",
            STUDENT_CHANNELS,
            idx.len()
        )));
    }
    Ok(idx)
}

/// Materializes a normalized `[B×C×T]` batch (and its labels) from stored
/// windows. `channel_sel` restricts and orders the channels; `None` takes
/// all of them.
pub fn gather_batch(
    ds: &WindowedDataset,
    indices: &[usize],
    stats: &NormalizationStats,
    channel_sel: Option<&[usize]>,
) -> Result<(Tensor, Vec<usize>)> {
    let all_channels = ds.n_channels();
    if stats.per_channel.len() != all_channels {
        return Err(Error::Config(format!(
            "normalization stats cover {} channels but dataset has {}",
            stats.per_channel.len(),
            all_channels
        )));
    }
    let default_sel: Vec<usize>;
    let sel: &[usize] = match channel_sel {
        Some(s) => s,
        None => {
            default_sel = (0..all_channels).collect();
            &default_sel
        }
    };
    let win = ds.win_len;
    let mut data = Vec::with_capacity(indices.len() * sel.len() * win);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= ds.n_windows() {
            return Err(Error::InvalidInput(format!(
                "window index {} out of range ({} windows)",
                i,
                ds.n_windows()
            )));
        }
        let w = ds.window(i);
        for &c in sel {
            for t in 0..win {
                data.push(stats.apply_value(c, w[c * win + t] as f64));
            }
        }
        labels.push(ds.labels[i] as usize);
    }
    Ok((
        Tensor::from_vec(vec![indices.len(), sel.len(), win], data),
        labels,
    ))
}

/// Row argmax; ties keep the first maximum.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let sh = logits.shape();
    let (b, c) = (sh[0], sh[1]);
    let d = logits.data();
    (0..b)
        .map(|bi| {
            let row = &d[bi * c..(bi + 1) * c];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    debug_assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 0.0;
    }
    let hit = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hit as f64 / pred.len() as f64
}

/// Batched eval-mode predictions over selected windows.
pub fn predict_windows<F>(
    ds: &WindowedDataset,
    stats: &NormalizationStats,
    indices: &[usize],
    channel_sel: Option<&[usize]>,
    batch: usize,
    mut logits_of: F,
) -> Result<Vec<usize>>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    let mut pred = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch.max(1)) {
        let (x, _) = gather_batch(ds, chunk, stats, channel_sel)?;
        let logits = logits_of(&x)?;
        pred.extend(argmax_rows(&logits));
    }
    Ok(pred)
}

/// One epoch row of a training history.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_total: f64,
    pub train_ce: f64,
    pub train_kd: f64,
    pub val_accuracy: f64,
}

/// Full early-stopped training record; the model carries the best epoch's
/// weights when training returns.
#[derive(Debug, Clone, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
}

/// Generic seeded training loop: shuffled mini-batches, Adadelta updates,
/// early stopping on validation accuracy with best-weights restore.
///
/// `step` must evaluate one mini-batch in training mode and return the
/// scalar loss tensor (backward and the optimizer step happen here);
/// `val_accuracy` must evaluate the current weights in eval mode. A new
/// shuffle and dropout stream both derive from `cfg.seed`, so the whole
/// trajectory is a pure function of (data, closures, config).
pub fn run_training(
    params: &[Parameter],
    cfg: &KDConfig,
    train_idx: &[usize],
    step: &mut dyn FnMut(&[usize], &mut ChaCha8Rng) -> Result<(Tensor, LossReport)>,
    val_accuracy: &mut dyn FnMut() -> Result<f64>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(Error::Config("cannot train on an empty split".into()));
    }
    let mut opt = Adadelta::new(params, cfg.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dropout"));

    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_val_accuracy: f64::NEG_INFINITY,
        stopped_early: false,
    };
    let mut best_weights: Vec<Vec<f64>> = Vec::new();
    let mut since_best = 0usize;
    let mut order: Vec<usize> = train_idx.to_vec();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum_total = 0.0;
        let mut sum_ce = 0.0;
        let mut sum_kd = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, report) = step(chunk, &mut dropout_rng)?;
            loss.backward();
            opt.step(params)?;
            let w = chunk.len() as f64;
            sum_total += report.total * w;
            sum_ce += report.ce_term * w;
            sum_kd += report.kd_term * w;
        }
        let n = order.len() as f64;
        let acc = val_accuracy()?;
        history.epochs.push(EpochStats {
            epoch,
            train_total: sum_total / n,
            train_ce: sum_ce / n,
            train_kd: sum_kd / n,
            val_accuracy: acc,
        });
        if acc > history.best_val_accuracy {
            history.best_val_accuracy = acc;
            history.best_epoch = epoch;
            best_weights = params.iter().map(|p| p.tensor.to_vec()).collect();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    for (p, w) in params.iter().zip(&best_weights) {
        p.tensor.set_data(w);
    }
    Ok(history)
}

/// Stage 1: trains a teacher for the dataset's channel layout with plain
/// cross-entropy. The returned model carries its best-validation weights
/// and is still trainable (freeze it before the later stages).
pub fn train_teacher(
    ds: &WindowedDataset,
    stats: &NormalizationStats,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &KDConfig,
) -> Result<(TeacherNet, TrainHistory)> {
    check_splits(train_idx, val_idx)?;
    let variant = TeacherVariant::for_channels(ds.n_channels())?;
    let net = TeacherNet::new(variant, ds.class_names.len(), cfg.seed);
    let params = net.params();
    let mut step = |chunk: &[usize], rng: &mut ChaCha8Rng| {
        let (x, y) = gather_batch(ds, chunk, stats, None)?;
        let bundle = net.forward(&x, true, rng)?;
        loss_baseline(&bundle.teacher_logits, &y)
    };
    let mut val = || {
        let mut eval_rng = ChaCha8Rng::seed_from_u64(0);
        let pred = predict_windows(ds, stats, val_idx, None, cfg.batch_size, |x| {
            Ok(net.forward(x, false, &mut eval_rng)?.teacher_logits)
        })?;
        let truth: Vec<usize> = val_idx.iter().map(|&i| ds.labels[i] as usize).collect();
        Ok(accuracy(&pred, &truth))
    };
    let history = run_training(&params, cfg, train_idx, &mut step, &mut val)?;
    Ok((net, history))
}

/// Precomputed supervisor outputs for a set of windows. Because every
/// forward here is per-window deterministic in eval mode, cached rows are
/// bitwise identical to recomputation, whatever the batching.
pub struct TeacherCache {
    pub variant: TeacherVariant,
    num_classes: usize,
    index: HashMap<usize, usize>,
    attn: Vec<f64>,
    causal: Vec<f64>,
    combi: Vec<f64>,
    logits: Vec<f64>,
    sc_logits: Option<Vec<f64>>,
    sc_hidden: Option<Vec<f64>>,
}

impl TeacherCache {
    /// Runs the frozen teacher over `indices` (batched; the tensor ops
    /// spread each batch across cores) and stores all representation rows.
    pub fn build(
        teacher: &TeacherNet,
        ds: &WindowedDataset,
        stats: &NormalizationStats,
        indices: &[usize],
    ) -> Result<TeacherCache> {
        if !teacher.is_frozen() {
            return Err(Error::Config(
                "representation caching requires a frozen teacher".into(),
            ));
        }
        let variant = teacher.variant;
        let mut cache = TeacherCache {
            variant,
            num_classes: teacher.num_classes,
            index: HashMap::with_capacity(indices.len()),
            attn: Vec::with_capacity(indices.len() * STUDENT_REP_DIM),
            causal: Vec::with_capacity(indices.len() * variant.lstm_hidden()),
            combi: Vec::with_capacity(indices.len() * variant.combi_dim()),
            logits: Vec::with_capacity(indices.len() * teacher.num_classes),
            sc_logits: None,
            sc_hidden: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for chunk in indices.chunks(CACHE_BATCH) {
            let (x, _) = gather_batch(ds, chunk, stats, None)?;
            let b = teacher.forward(&x, false, &mut rng)?;
            cache.attn.extend(b.attn_rep.to_vec());
            cache.causal.extend(b.causal_rep.to_vec());
            cache.combi.extend(b.combi_rep.to_vec());
            cache.logits.extend(b.teacher_logits.to_vec());
        }
        for (row, &w) in indices.iter().enumerate() {
            cache.index.insert(w, row);
        }
        Ok(cache)
    }

    /// Runs the frozen semantic classifier over every cached row and stores
    /// its logits and hidden activations alongside.
    pub fn attach_semantic(&mut self, sc: &SemanticClassifier) -> Result<()> {
        if !sc.is_frozen() {
            return Err(Error::Config(
                "representation caching requires a frozen semantic classifier".into(),
            ));
        }
        let n = self.len();
        let mut sc_logits = Vec::with_capacity(n * self.num_classes);
        let mut sc_hidden = Vec::with_capacity(n * STUDENT_REP_DIM);
        let rows: Vec<usize> = (0..n).collect();
        for chunk in rows.chunks(CACHE_BATCH) {
            let bundle = self.bundle_of_rows(chunk);
            let (hidden, logits) = sc.forward(&bundle)?;
            sc_hidden.extend(hidden.to_vec());
            sc_logits.extend(logits.to_vec());
        }
        self.sc_logits = Some(sc_logits);
        self.sc_hidden = Some(sc_hidden);
        Ok(())
    }

    pub fn has_semantic(&self) -> bool {
        self.sc_logits.is_some()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    fn row_of(&self, window: usize) -> Result<usize> {
        self.index.get(&window).copied().ok_or_else(|| {
            Error::InvalidInput(format!("window {} is not in the teacher cache", window))
        })
    }

    fn bundle_of_rows(&self, rows: &[usize]) -> RepresentationBundle {
        let gather = |src: &[f64], dim: usize| -> Tensor {
            let mut out = Vec::with_capacity(rows.len() * dim);
            for &r in rows {
                out.extend_from_slice(&src[r * dim..(r + 1) * dim]);
            }
            Tensor::from_vec(vec![rows.len(), dim], out)
        };
        let h = self.variant.lstm_hidden();
        RepresentationBundle {
            attn_rep: gather(&self.attn, STUDENT_REP_DIM),
            causal_rep: gather(&self.causal, h),
            combi_rep: gather(&self.combi, self.variant.combi_dim()),
            teacher_logits: gather(&self.logits, self.num_classes),
            sc_logits: self
                .sc_logits
                .as_ref()
                .map(|s| gather(s, self.num_classes)),
            sc_hidden: self.sc_hidden.as_ref().map(|s| gather(s, STUDENT_REP_DIM)),
        }
    }

    /// Constant (graph-free) supervisor outputs for the given windows.
    pub fn supervisor_batch(&self, windows: &[usize]) -> Result<RepresentationBundle> {
        let rows: Vec<usize> = windows
            .iter()
            .map(|&w| self.row_of(w))
            .collect::<Result<_>>()?;
        Ok(self.bundle_of_rows(&rows))
    }

    /// The frozen teacher's own predictions for the given windows.
    pub fn teacher_predictions(&self, windows: &[usize]) -> Result<Vec<usize>> {
        let c = self.num_classes;
        windows
            .iter()
            .map(|&w| {
                let r = self.row_of(w)?;
                let row = &self.logits[r * c..(r + 1) * c];
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                Ok(best)
            })
            .collect()
    }
}

/// Stage 1b: trains the semantic classifier on the frozen teacher's cached
/// representations with plain cross-entropy. The teacher is bitwise
/// untouched; the returned classifier is still trainable.
pub fn train_semantic(
    teacher: &TeacherNet,
    cache: &TeacherCache,
    ds: &WindowedDataset,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &KDConfig,
) -> Result<(SemanticClassifier, TrainHistory)> {
    if !teacher.is_frozen() {
        return Err(Error::Config(
            "the semantic classifier trains against a frozen teacher; freeze it first".into(),
        ));
    }
    check_splits(train_idx, val_idx)?;
    let sc = SemanticClassifier::new(cache.variant, ds.class_names.len(), cfg.seed);
    let params = sc.params();
    let mut step = |chunk: &[usize], _rng: &mut ChaCha8Rng| {
        let bundle = cache.supervisor_batch(chunk)?;
        let y: Vec<usize> = chunk.iter().map(|&i| ds.labels[i] as usize).collect();
        let (_, logits) = sc.forward(&bundle)?;
        loss_baseline(&logits, &y)
    };
    let mut val = || {
        let mut pred = Vec::with_capacity(val_idx.len());
        for chunk in val_idx.chunks(cfg.batch_size) {
            let bundle = cache.supervisor_batch(chunk)?;
            let (_, logits) = sc.forward(&bundle)?;
            pred.extend(argmax_rows(&logits));
        }
        let truth: Vec<usize> = val_idx.iter().map(|&i| ds.labels[i] as usize).collect();
        Ok(accuracy(&pred, &truth))
    };
    let history = run_training(&params, cfg, train_idx, &mut step, &mut val)?;
    Ok((sc, history))
}

/// Stage 2 against a prebuilt cache. The cache may be `None` only when no
/// supervision will actually be used (Baseline, or any strategy at α = 1).
pub fn distill_student_cached(
    cache: Option<&TeacherCache>,
    ds: &WindowedDataset,
    stats: &NormalizationStats,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &KDConfig,
) -> Result<(StudentNet, TrainHistory)> {
    cfg.validate()?;
    check_splits(train_idx, val_idx)?;
    let kd_active = cfg.strategy != Strategy::Baseline && cfg.alpha < 1.0;
    if kd_active {
        let cache = cache.ok_or_else(|| {
            Error::Config(format!(
                "strategy {} requires cached teacher representations",
                cfg.strategy
            ))
        })?;
        if cfg.strategy.needs_sc() && !cache.has_semantic() {
            return Err(Error::Config(format!(
                "strategy {} requires a trained semantic classifier; run the semantic \
                 stage first",
                cfg.strategy
            )));
        }
    }
    let accel = student_channel_indices(ds)?;
    let mut student = StudentNet::new(ds.class_names.len(), cfg.seed);
    if kd_active {
        let variant = cache.unwrap().variant;
        for dim in cfg.strategy.projector_dims(variant) {
            student.attach_projector(dim, cfg.seed);
        }
    }
    let params = student.params();
    let mut step = |chunk: &[usize], rng: &mut ChaCha8Rng| {
        let (x, y) = gather_batch(ds, chunk, stats, Some(&accel))?;
        let (h_s, z_s) = student.forward(&x, true, rng)?;
        if !kd_active {
            return loss_baseline(&z_s, &y);
        }
        let bundle = cache.unwrap().supervisor_batch(chunk)?;
        strategy_loss(cfg, &student, &h_s, &z_s, &bundle, &y)
    };
    let mut val = || {
        let mut eval_rng = ChaCha8Rng::seed_from_u64(0);
        let pred = predict_windows(ds, stats, val_idx, Some(&accel), cfg.batch_size, |x| {
            Ok(student.forward(x, false, &mut eval_rng)?.1)
        })?;
        let truth: Vec<usize> = val_idx.iter().map(|&i| ds.labels[i] as usize).collect();
        Ok(accuracy(&pred, &truth))
    };
    let history = run_training(&params, cfg, train_idx, &mut step, &mut val)?;
    Ok((student, history))
}

/// Stage 2: trains the student under the configured strategy against a
/// frozen teacher (and frozen semantic classifier where required),
/// building the representation cache internally.
pub fn distill_student(
    teacher: &TeacherNet,
    sc: Option<&SemanticClassifier>,
    ds: &WindowedDataset,
    stats: &NormalizationStats,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &KDConfig,
) -> Result<(StudentNet, TrainHistory)> {
    cfg.validate()?;
    if !teacher.is_frozen() {
        return Err(Error::Config(
            "student distillation requires a frozen teacher; freeze it first".into(),
        ));
    }
    if cfg.strategy.needs_sc() {
        let sc = sc.ok_or_else(|| {
            Error::Config(format!(
                "strategy {} requires a trained semantic classifier; run the semantic \
                 stage first",
                cfg.strategy
            ))
        })?;
        if !sc.is_frozen() {
            return Err(Error::Config(
                "student distillation requires a frozen semantic classifier".into(),
            ));
        }
    }
    let kd_active = cfg.strategy != Strategy::Baseline && cfg.alpha < 1.0;
    let cache = if kd_active {
        let mut all: Vec<usize> = Vec::with_capacity(train_idx.len() + val_idx.len());
        all.extend_from_slice(train_idx);
        all.extend_from_slice(val_idx);
        let mut c = TeacherCache::build(teacher, ds, stats, &all)?;
        if cfg.strategy.needs_sc() {
            c.attach_semantic(sc.unwrap())?;
        }
        Some(c)
    } else {
        None
    };
    distill_student_cached(cache.as_ref(), ds, stats, train_idx, val_idx, cfg)
}

/// Routes one training batch to the strategy's loss. Only called with KD
/// active (non-Baseline, α < 1).
fn strategy_loss(
    cfg: &KDConfig,
    student: &StudentNet,
    h_s: &Tensor,
    z_s: &Tensor,
    bundle: &RepresentationBundle,
    labels: &[usize],
) -> Result<(Tensor, LossReport)> {
    let missing_sc = || {
        Error::Config(format!(
            "strategy {} requires semantic classifier outputs in the cache",
            cfg.strategy
        ))
    };
    match cfg.strategy {
        Strategy::Baseline => loss_baseline(z_s, labels),
        Strategy::Logit => loss_sc(z_s, &bundle.teacher_logits, labels, cfg.alpha, cfg.tau),
        Strategy::SCLogit => {
            let zt = bundle.sc_logits.as_ref().ok_or_else(missing_sc)?;
            loss_sc(z_s, zt, labels, cfg.alpha, cfg.tau)
        }
        Strategy::AttnRep => loss_feature(h_s, &bundle.attn_rep, z_s, labels, cfg.alpha),
        Strategy::CausalRep => {
            let h = causal_view(student, h_s, bundle)?;
            loss_feature(&h, &bundle.causal_rep, z_s, labels, cfg.alpha)
        }
        Strategy::CombiRep => {
            let dim = bundle.combi_rep.shape()[1];
            let h = student.project(h_s, dim)?;
            loss_feature(&h, &bundle.combi_rep, z_s, labels, cfg.alpha)
        }
        Strategy::SCFeature => {
            let ht = bundle.sc_hidden.as_ref().ok_or_else(missing_sc)?;
            loss_feature(h_s, ht, z_s, labels, cfg.alpha)
        }
        Strategy::MergedLoss => {
            let h_causal = causal_view(student, h_s, bundle)?;
            let combi_dim = bundle.combi_rep.shape()[1];
            let h_combi = student.project(h_s, combi_dim)?;
            loss_merged(h_s, &h_causal, &h_combi, bundle, z_s, labels, cfg.alpha)
        }
    }
}

/// The student view matched to the causal representation: the raw tap when
/// widths agree, the projected tap otherwise.
fn causal_view(
    student: &StudentNet,
    h_s: &Tensor,
    bundle: &RepresentationBundle,
) -> Result<Tensor> {
    let dim = bundle.causal_rep.shape()[1];
    if dim == STUDENT_REP_DIM {
        Ok(h_s.clone())
    } else {
        student.project(h_s, dim)
    }
}

fn check_splits(train_idx: &[usize], val_idx: &[usize]) -> Result<()> {
    if train_idx.is_empty() {
        return Err(Error::Config("cannot train on an empty split".into()));
    }
    if val_idx.is_empty() {
        return Err(Error::Config(
            "early stopping requires a non-empty validation split".into(),
        ));
    }
    Ok(())
}
