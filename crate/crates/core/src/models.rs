//! Model definitions: the two-branch multimodal teacher, the shallow
//! semantic classifier that reads its representations, and the compact
//! accelerometer-only student.
//!
//! Weight initialization is fully seeded: each network draws from one
//! ChaCha8 stream in declaration order, so a (seed, architecture) pair
//! pins every weight. Biases start at zero.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::ops::{
    concat_features, conv1d, dropout, global_maxpool_time, linear, lstm_seq, maxpool1d, relu,
    reshape, self_attention, transpose_12, Padding,
};
use crate::autodiff::{Parameter, Tensor};
use crate::error::{Error, Result};
use crate::util::derive_seed;

pub const WINDOW_LEN: usize = 100;
/// Student input: one hand's accelerometer triple.
pub const STUDENT_CHANNELS: usize = 3;
/// Width of the student's distillation tap (the post-activation `fc1`
/// output), and of the teacher's attention representation.
pub const STUDENT_REP_DIM: usize = 10;
/// Attention embedding width after the conv stack.
const ATTN_DIM: usize = 10;
/// Second attention block's reduced embedding width.
const ATTN2_DIM: usize = 6;
/// Time steps surviving three halvings of a 100-sample window.
const ATTN_TOKENS: usize = 12;
const DROPOUT_RATE: f64 = 0.1;

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

#[derive(Clone)]
struct Lin {
    w: Parameter,
    b: Parameter,
    fan_in: usize,
    fan_out: usize,
}

impl Lin {
    fn new(name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Lin {
        let bound = (6.0 / fan_in as f64).sqrt();
        Lin {
            w: Parameter::new(
                format!("{name}.w"),
                Tensor::from_vec(vec![fan_in, fan_out], uniform(rng, fan_in * fan_out, bound)),
            ),
            b: Parameter::new(
                format!("{name}.b"),
                Tensor::from_vec(vec![fan_out], vec![0.0; fan_out]),
            ),
            fan_in,
            fan_out,
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        linear(x, &self.w.tensor, &self.b.tensor)
    }

    /// Applies the layer to each token of a `[B×N×F]` sequence.
    fn forward_tokens(&self, x: &Tensor) -> Result<Tensor> {
        let sh = x.shape();
        let (b, n) = (sh[0], sh[1]);
        let flat = reshape(x, vec![b * n, sh[2]])?;
        let out = self.forward(&flat)?;
        reshape(&out, vec![b, n, self.fan_out])
    }

    fn params(&self) -> Vec<Parameter> {
        vec![self.w.clone(), self.b.clone()]
    }

    fn n_params(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }

    fn flops(&self) -> u64 {
        (2 * self.fan_in * self.fan_out) as u64
    }
}

#[derive(Clone)]
struct Conv {
    w: Parameter,
    b: Parameter,
    cout: usize,
    cin: usize,
    k: usize,
}

impl Conv {
    fn new(name: &str, cout: usize, cin: usize, k: usize, rng: &mut ChaCha8Rng) -> Conv {
        let bound = (6.0 / (cin * k) as f64).sqrt();
        Conv {
            w: Parameter::new(
                format!("{name}.w"),
                Tensor::from_vec(vec![cout, cin, k], uniform(rng, cout * cin * k, bound)),
            ),
            b: Parameter::new(
                format!("{name}.b"),
                Tensor::from_vec(vec![cout], vec![0.0; cout]),
            ),
            cout,
            cin,
            k,
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv1d(x, &self.w.tensor, &self.b.tensor, 1, Padding::Same)
    }

    fn params(&self) -> Vec<Parameter> {
        vec![self.w.clone(), self.b.clone()]
    }

    fn n_params(&self) -> usize {
        self.cout * self.cin * self.k + self.cout
    }

    fn flops(&self, t_out: usize) -> u64 {
        (2 * self.cout * self.cin * self.k * t_out) as u64
    }
}

#[derive(Clone)]
struct Attn {
    q: Parameter,
    k: Parameter,
    v: Parameter,
    d: usize,
}

impl Attn {
    fn new(name: &str, d: usize, rng: &mut ChaCha8Rng) -> Attn {
        let bound = (3.0 / d as f64).sqrt();
        let mk = |suffix: &str, rng: &mut ChaCha8Rng| {
            Parameter::new(
                format!("{name}.{suffix}"),
                Tensor::from_vec(vec![d, d], uniform(rng, d * d, bound)),
            )
        };
        Attn {
            q: mk("q", rng),
            k: mk("k", rng),
            v: mk("v", rng),
            d,
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self_attention(x, &self.q.tensor, &self.k.tensor, &self.v.tensor)
    }

    fn params(&self) -> Vec<Parameter> {
        vec![self.q.clone(), self.k.clone(), self.v.clone()]
    }

    fn n_params(&self) -> usize {
        3 * self.d * self.d
    }

    fn flops(&self, n_tokens: usize) -> u64 {
        (2 * n_tokens * self.d * (3 * self.d + 2 * n_tokens)) as u64
    }
}

#[derive(Clone)]
struct LstmLayer {
    w_ih: Parameter,
    w_hh: Parameter,
    bias: Parameter,
    input: usize,
    hidden: usize,
}

impl LstmLayer {
    fn new(name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> LstmLayer {
        let bound = 1.0 / (hidden as f64).sqrt();
        LstmLayer {
            w_ih: Parameter::new(
                format!("{name}.w_ih"),
                Tensor::from_vec(vec![4 * hidden, input], uniform(rng, 4 * hidden * input, bound)),
            ),
            w_hh: Parameter::new(
                format!("{name}.w_hh"),
                Tensor::from_vec(
                    vec![4 * hidden, hidden],
                    uniform(rng, 4 * hidden * hidden, bound),
                ),
            ),
            bias: Parameter::new(
                format!("{name}.bias"),
                Tensor::from_vec(vec![4 * hidden], uniform(rng, 4 * hidden, bound)),
            ),
            input,
            hidden,
        }
    }

    fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        lstm_seq(x, &self.w_ih.tensor, &self.w_hh.tensor, &self.bias.tensor)
    }

    fn params(&self) -> Vec<Parameter> {
        vec![self.w_ih.clone(), self.w_hh.clone(), self.bias.clone()]
    }

    fn n_params(&self) -> usize {
        4 * self.hidden * (self.input + self.hidden) + 4 * self.hidden
    }

    fn flops(&self, t: usize) -> u64 {
        (8 * self.hidden * (self.input + self.hidden) * t) as u64
    }
}

/// Sums trainable scalars; freezing does not change the total.
pub fn count_params(params: &[Parameter]) -> usize {
    params.iter().map(|p| p.tensor.numel()).sum()
}

/// Sums scalars of currently frozen parameters.
pub fn count_frozen_params(params: &[Parameter]) -> usize {
    params
        .iter()
        .filter(|p| p.frozen())
        .map(|p| p.tensor.numel())
        .sum()
}

/// sha256 over parameter names and values, in declaration order. Bitwise
/// sensitive: any training step on any parameter changes it.
pub fn param_hash(params: &[Parameter]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.name.as_bytes());
        h.update((p.tensor.numel() as u64).to_le_bytes());
        for v in p.tensor.data().iter() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().into()
}

/// One row of the architecture manifest.
#[derive(Debug, Clone)]
pub struct LayerReport {
    pub name: String,
    pub shape: String,
    pub params: usize,
    pub flops: u64,
    pub formula: String,
}

/// Structured description of a constructed network: layer table plus
/// totals, renderable as an aligned text report.
#[derive(Debug, Clone)]
pub struct ArchManifest {
    pub model: String,
    pub layers: Vec<LayerReport>,
    pub notes: Vec<String>,
}

impl ArchManifest {
    pub fn total_params(&self) -> usize {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn total_flops(&self) -> u64 {
        self.layers.iter().map(|l| l.flops).sum()
    }
}

impl std::fmt::Display for ArchManifest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "model: {}", self.model)?;
        writeln!(
            f,
            "{:<22} {:<18} {:>8} {:>10}  {}",
            "layer", "shape", "params", "flops", "flop formula"
        )?;
        for l in &self.layers {
            writeln!(
                f,
                "{:<22} {:<18} {:>8} {:>10}  {}",
                l.name, l.shape, l.params, l.flops, l.formula
            )?;
        }
        writeln!(
            f,
            "{:<22} {:<18} {:>8} {:>10}",
            "total",
            "",
            self.total_params(),
            self.total_flops()
        )?;
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

/// Everything the teacher produces for one batch. `combi_rep` is always
/// the exact concatenation of the attention and causal representations.
#[derive(Clone)]
pub struct RepresentationBundle {
    pub attn_rep: Tensor,
    pub causal_rep: Tensor,
    pub combi_rep: Tensor,
    pub teacher_logits: Tensor,
    pub sc_logits: Option<Tensor>,
    pub sc_hidden: Option<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeacherVariant {
    /// 20-channel two-glove layout, LSTM hidden size 10.
    Factory,
    /// 12-channel two-wrist IMU layout, LSTM hidden size 6.
    OpenPack,
}

impl TeacherVariant {
    pub fn input_channels(&self) -> usize {
        match self {
            TeacherVariant::Factory => 20,
            TeacherVariant::OpenPack => 12,
        }
    }

    pub fn lstm_hidden(&self) -> usize {
        match self {
            TeacherVariant::Factory => 10,
            TeacherVariant::OpenPack => 6,
        }
    }

    /// Combined representation width: attention (10) plus causal (H).
    pub fn combi_dim(&self) -> usize {
        ATTN_DIM + self.lstm_hidden()
    }

    pub fn for_channels(c: usize) -> Result<TeacherVariant> {
        match c {
            20 => Ok(TeacherVariant::Factory),
            12 => Ok(TeacherVariant::OpenPack),
            other => Err(Error::Shape(format!(
                "no teacher variant accepts {other} input channels (expected 20 or 12)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TeacherVariant::Factory => "factory",
            TeacherVariant::OpenPack => "openpack",
        }
    }
}

/// Two-branch multimodal teacher: a conv + double-self-attention branch
/// producing a 10-d attention representation, and an LSTM over the raw
/// (time-major) input producing the causal representation; their
/// concatenation feeds a two-layer head.
pub struct TeacherNet {
    pub variant: TeacherVariant,
    pub num_classes: usize,
    conv1: Conv,
    conv2: Conv,
    conv3: Conv,
    attn1: Attn,
    adapter1: Lin,
    attn2: Attn,
    adapter2: Lin,
    reduce: Lin,
    lstm: LstmLayer,
    head1: Lin,
    head2: Lin,
}

impl TeacherNet {
    pub fn new(variant: TeacherVariant, num_classes: usize, seed: u64) -> TeacherNet {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init/teacher"));
        let c = variant.input_channels();
        let h = variant.lstm_hidden();
        TeacherNet {
            variant,
            num_classes,
            conv1: Conv::new("conv1", 100, c, 3, &mut rng),
            conv2: Conv::new("conv2", 20, 100, 3, &mut rng),
            conv3: Conv::new("conv3", ATTN_DIM, 20, 3, &mut rng),
            attn1: Attn::new("attn1", ATTN_DIM, &mut rng),
            adapter1: Lin::new("adapter1", ATTN_DIM, ATTN2_DIM, &mut rng),
            attn2: Attn::new("attn2", ATTN2_DIM, &mut rng),
            adapter2: Lin::new("adapter2", ATTN2_DIM, ATTN_DIM, &mut rng),
            reduce: Lin::new("reduce", ATTN_TOKENS * ATTN_DIM, ATTN_DIM, &mut rng),
            lstm: LstmLayer::new("lstm", c, h, &mut rng),
            head1: Lin::new("head1", variant.combi_dim(), 10, &mut rng),
            head2: Lin::new("head2", 10, num_classes, &mut rng),
        }
    }

    pub fn forward(
        &self,
        x: &Tensor,
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<RepresentationBundle> {
        let sh = x.shape();
        if sh.len() != 3 || sh[1] != self.variant.input_channels() || sh[2] != WINDOW_LEN {
            return Err(Error::Shape(format!(
                "teacher ({}) expects [B×{}×{}], got {:?}",
                self.variant.name(),
                self.variant.input_channels(),
                WINDOW_LEN,
                sh
            )));
        }
        let b = sh[0];

        // Attention branch: conv stack 100 -> 50 -> 25 -> 12 time steps.
        let mut h = x.clone();
        for conv in [&self.conv1, &self.conv2, &self.conv3] {
            h = conv.forward(&h)?;
            h = relu(&h);
            h = maxpool1d(&h, 2, 2)?;
            h = dropout(&h, DROPOUT_RATE, train, rng);
        }
        let tokens = transpose_12(&h)?; // [B×12×10]
        let a1 = self.attn1.forward(&tokens)?;
        let narrowed = self.adapter1.forward_tokens(&a1)?; // [B×12×6]
        let a2 = self.attn2.forward(&narrowed)?;
        let widened = self.adapter2.forward_tokens(&a2)?; // [B×12×10]
        let flat = reshape(&widened, vec![b, ATTN_TOKENS * ATTN_DIM])?;
        let attn_rep = self.reduce.forward(&flat)?; // [B×10]

        // Causal branch reads the raw window, time-major.
        let seq = transpose_12(x)?; // [B×100×C]
        let (_, causal_rep) = self.lstm.forward(&seq)?; // [B×H]

        let combi_rep = concat_features(&[&attn_rep, &causal_rep])?;
        let hidden = relu(&self.head1.forward(&combi_rep)?);
        let teacher_logits = self.head2.forward(&hidden)?;
        Ok(RepresentationBundle {
            attn_rep,
            causal_rep,
            combi_rep,
            teacher_logits,
            sc_logits: None,
            sc_hidden: None,
        })
    }

    pub fn params(&self) -> Vec<Parameter> {
        let mut p = Vec::new();
        p.extend(self.conv1.params());
        p.extend(self.conv2.params());
        p.extend(self.conv3.params());
        p.extend(self.attn1.params());
        p.extend(self.adapter1.params());
        p.extend(self.attn2.params());
        p.extend(self.adapter2.params());
        p.extend(self.reduce.params());
        p.extend(self.lstm.params());
        p.extend(self.head1.params());
        p.extend(self.head2.params());
        p
    }

    pub fn freeze(&self) {
        for p in self.params() {
            p.freeze();
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.params().iter().all(|p| p.frozen())
    }

    pub fn param_count(&self) -> usize {
        count_params(&self.params())
    }

    pub fn param_hash(&self) -> [u8; 32] {
        param_hash(&self.params())
    }

    pub fn flops(&self) -> u64 {
        self.manifest().total_flops()
    }

    pub fn manifest(&self) -> ArchManifest {
        let t = WINDOW_LEN;
        let layers = vec![
            LayerReport {
                name: "conv1 (same, k3)".into(),
                shape: format!("{}→100 × {t}", self.variant.input_channels()),
                params: self.conv1.n_params(),
                flops: self.conv1.flops(t),
                formula: "2·Cout·Cin·K·T'".into(),
            },
            LayerReport {
                name: "conv2 (same, k3)".into(),
                shape: format!("100→20 × {}", t / 2),
                params: self.conv2.n_params(),
                flops: self.conv2.flops(t / 2),
                formula: "2·Cout·Cin·K·T'".into(),
            },
            LayerReport {
                name: "conv3 (same, k3)".into(),
                shape: format!("20→10 × {}", t / 4),
                params: self.conv3.n_params(),
                flops: self.conv3.flops(t / 4),
                formula: "2·Cout·Cin·K·T'".into(),
            },
            LayerReport {
                name: "self-attention 1".into(),
                shape: format!("{ATTN_TOKENS} tokens × {ATTN_DIM}"),
                params: self.attn1.n_params(),
                flops: self.attn1.flops(ATTN_TOKENS),
                formula: "2·N·D·(3D+2N)".into(),
            },
            LayerReport {
                name: "adapter 10→6".into(),
                shape: format!("{ATTN_TOKENS} × {ATTN_DIM}→{ATTN2_DIM}"),
                params: self.adapter1.n_params(),
                flops: self.adapter1.flops() * ATTN_TOKENS as u64,
                formula: "2·F·G per token".into(),
            },
            LayerReport {
                name: "self-attention 2".into(),
                shape: format!("{ATTN_TOKENS} tokens × {ATTN2_DIM}"),
                params: self.attn2.n_params(),
                flops: self.attn2.flops(ATTN_TOKENS),
                formula: "2·N·D·(3D+2N)".into(),
            },
            LayerReport {
                name: "adapter 6→10".into(),
                shape: format!("{ATTN_TOKENS} × {ATTN2_DIM}→{ATTN_DIM}"),
                params: self.adapter2.n_params(),
                flops: self.adapter2.flops() * ATTN_TOKENS as u64,
                formula: "2·F·G per token".into(),
            },
            LayerReport {
                name: "reduce".into(),
                shape: format!("{}→{ATTN_DIM}", ATTN_TOKENS * ATTN_DIM),
                params: self.reduce.n_params(),
                flops: self.reduce.flops(),
                formula: "2·F·G".into(),
            },
            LayerReport {
                name: "lstm".into(),
                shape: format!(
                    "{}→{} × {t}",
                    self.variant.input_channels(),
                    self.variant.lstm_hidden()
                ),
                params: self.lstm.n_params(),
                flops: self.lstm.flops(t),
                formula: "8·H·(F+H)·T".into(),
            },
            LayerReport {
                name: "head linear 1".into(),
                shape: format!("{}→10", self.variant.combi_dim()),
                params: self.head1.n_params(),
                flops: self.head1.flops(),
                formula: "2·F·G".into(),
            },
            LayerReport {
                name: "head linear 2".into(),
                shape: format!("10→{}", self.num_classes),
                params: self.head2.n_params(),
                flops: self.head2.flops(),
                formula: "2·F·G".into(),
            },
        ];
        ArchManifest {
            model: format!("teacher/{}", self.variant.name()),
            layers,
            notes: vec![
                "FLOPs are analytic per-window forward multiply-accumulates × 2; \
                 activations, pooling and softmax are not counted."
                    .into(),
            ],
        }
    }
}

/// Compact accelerometer-only student: three conv/pool/dropout blocks, a
/// global max-pool, and a two-layer head. The optional projectors map the
/// 10-d tap onto teacher representation spaces for feature distillation
/// and are dropped before export. They are keyed by target width, so one
/// run can project onto several teacher representations at once.
pub struct StudentNet {
    pub num_classes: usize,
    conv1: Conv,
    conv2: Conv,
    conv3: Conv,
    fc1: Lin,
    fc2: Lin,
    projectors: std::collections::BTreeMap<usize, Lin>,
    finalized: bool,
}

impl StudentNet {
    pub fn new(num_classes: usize, seed: u64) -> StudentNet {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init/student"));
        StudentNet {
            num_classes,
            conv1: Conv::new("conv1", 100, STUDENT_CHANNELS, 3, &mut rng),
            conv2: Conv::new("conv2", 5, 100, 3, &mut rng),
            conv3: Conv::new("conv3", 5, 5, 3, &mut rng),
            fc1: Lin::new("fc1", 5, 10, &mut rng),
            fc2: Lin::new("fc2", 10, num_classes, &mut rng),
            projectors: std::collections::BTreeMap::new(),
            finalized: false,
        }
    }

    /// Attaches a train-only feature projector (10 → `out_dim`). Drawn
    /// from its own seed stream so the main weights are identical whether
    /// or not any projector exists. Re-attaching the same width is a no-op.
    pub fn attach_projector(&mut self, out_dim: usize, seed: u64) {
        self.projectors.entry(out_dim).or_insert_with(|| {
            let tag = format!("init/student-projector/{out_dim}");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &tag));
            Lin::new(&format!("projector{out_dim}"), 10, out_dim, &mut rng)
        });
    }

    pub fn has_projector(&self, out_dim: usize) -> bool {
        self.projectors.contains_key(&out_dim)
    }

    pub fn has_any_projector(&self) -> bool {
        !self.projectors.is_empty()
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Forward pass; `h_s` is the post-activation 10-d tap feeding both the
    /// classifier head and feature distillation.
    pub fn forward(
        &self,
        x: &Tensor,
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Tensor)> {
        let sh = x.shape();
        if sh.len() != 3 || sh[1] != STUDENT_CHANNELS || sh[2] != WINDOW_LEN {
            return Err(Error::Shape(format!(
                "student expects [B×{STUDENT_CHANNELS}×{WINDOW_LEN}], got {sh:?}"
            )));
        }
        let mut h = x.clone();
        for conv in [&self.conv1, &self.conv2, &self.conv3] {
            h = conv.forward(&h)?;
            h = relu(&h);
            h = maxpool1d(&h, 2, 2)?;
            h = dropout(&h, DROPOUT_RATE, train, rng);
        }
        let pooled = global_maxpool_time(&h)?; // [B×5]
        let h_s = relu(&self.fc1.forward(&pooled)?); // [B×10]
        let logits = self.fc2.forward(&h_s)?;
        Ok((h_s, logits))
    }

    /// Projects the student tap onto a teacher representation space of
    /// width `out_dim`.
    pub fn project(&self, h_s: &Tensor, out_dim: usize) -> Result<Tensor> {
        let proj = self.projectors.get(&out_dim).ok_or_else(|| {
            Error::Config(format!(
                "feature distillation onto a {out_dim}-wide representation requires an \
                 attached projector"
            ))
        })?;
        proj.forward(h_s)
    }

    /// Core parameters followed by any projectors', in ascending width.
    pub fn params(&self) -> Vec<Parameter> {
        let mut p = Vec::new();
        p.extend(self.conv1.params());
        p.extend(self.conv2.params());
        p.extend(self.conv3.params());
        p.extend(self.fc1.params());
        p.extend(self.fc2.params());
        for proj in self.projectors.values() {
            p.extend(proj.params());
        }
        p
    }

    /// Parameters that ship in the deployed model (projector excluded).
    pub fn deploy_params(&self) -> Vec<Parameter> {
        let mut p = Vec::new();
        p.extend(self.conv1.params());
        p.extend(self.conv2.params());
        p.extend(self.conv3.params());
        p.extend(self.fc1.params());
        p.extend(self.fc2.params());
        p
    }

    /// Deployed parameter count; the train-only projector never counts.
    pub fn param_count(&self) -> usize {
        count_params(&self.deploy_params())
    }

    pub fn param_hash(&self) -> [u8; 32] {
        param_hash(&self.deploy_params())
    }

    /// Drops the projectors and rounds every weight through 32-bit floats,
    /// so training-stack evaluation and the exported bundle agree exactly.
    pub fn finalize(&mut self) {
        self.projectors.clear();
        for p in self.deploy_params() {
            let rounded: Vec<f64> = p.tensor.to_vec().iter().map(|&v| v as f32 as f64).collect();
            p.tensor.set_data(&rounded);
        }
        self.finalized = true;
    }

    /// Deployed weights flattened in declaration order, at export precision.
    pub fn flat_weights_f32(&self) -> Vec<f32> {
        self.deploy_params()
            .iter()
            .flat_map(|p| p.tensor.to_vec().into_iter().map(|v| v as f32))
            .collect()
    }

    pub fn flops(&self) -> u64 {
        self.manifest().total_flops()
    }

    pub fn manifest(&self) -> ArchManifest {
        let t = WINDOW_LEN;
        let layers = vec![
            LayerReport {
                name: "conv1 (same, k3)".into(),
                shape: format!("3→100 × {t}"),
                params: self.conv1.n_params(),
                flops: self.conv1.flops(t),
                formula: "2·Cout·Cin·K·T'".into(),
            },
            LayerReport {
                name: "conv2 (same, k3)".into(),
                shape: format!("100→5 × {}", t / 2),
                params: self.conv2.n_params(),
                flops: self.conv2.flops(t / 2),
                formula: "2·Cout·Cin·K·T'".into(),
            },
            LayerReport {
                name: "conv3 (same, k3)".into(),
                shape: format!("5→5 × {}", t / 4),
                params: self.conv3.n_params(),
                flops: self.conv3.flops(t / 4),
                formula: "2·Cout·Cin·K·T'".into(),
            },
            LayerReport {
                name: "fc1".into(),
                shape: "5→10".into(),
                params: self.fc1.n_params(),
                flops: self.fc1.flops(),
                formula: "2·F·G".into(),
            },
            LayerReport {
                name: "fc2".into(),
                shape: format!("10→{}", self.num_classes),
                params: self.fc2.n_params(),
                flops: self.fc2.flops(),
                formula: "2·F·G".into(),
            },
        ];
        ArchManifest {
            model: "student".into(),
            layers,
            notes: vec![
                "The train-only feature projector is excluded from the table; \
                 it never ships."
                    .into(),
            ],
        }
    }
}

/// Shallow classifier over the frozen teacher's three representations.
pub struct SemanticClassifier {
    pub input_dim: usize,
    pub num_classes: usize,
    fc1: Lin,
    fc2: Lin,
}

impl SemanticClassifier {
    pub fn new(variant: TeacherVariant, num_classes: usize, seed: u64) -> SemanticClassifier {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init/semantic"));
        let input_dim = 2 * variant.combi_dim();
        SemanticClassifier {
            input_dim,
            num_classes,
            fc1: Lin::new("sc.fc1", input_dim, 10, &mut rng),
            fc2: Lin::new("sc.fc2", 10, num_classes, &mut rng),
        }
    }

    /// Consumes a teacher bundle; returns `(sc_hidden [B×10], sc_logits)`.
    pub fn forward(&self, bundle: &RepresentationBundle) -> Result<(Tensor, Tensor)> {
        let x = concat_features(&[
            &bundle.attn_rep,
            &bundle.causal_rep,
            &bundle.combi_rep,
        ])?;
        if x.shape()[1] != self.input_dim {
            return Err(Error::Shape(format!(
                "semantic classifier expects {} input features, bundle provides {}",
                self.input_dim,
                x.shape()[1]
            )));
        }
        let hidden = relu(&self.fc1.forward(&x)?);
        let logits = self.fc2.forward(&hidden)?;
        Ok((hidden, logits))
    }

    pub fn params(&self) -> Vec<Parameter> {
        let mut p = self.fc1.params();
        p.extend(self.fc2.params());
        p
    }

    pub fn freeze(&self) {
        for p in self.params() {
            p.freeze();
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.params().iter().all(|p| p.frozen())
    }

    pub fn param_count(&self) -> usize {
        count_params(&self.params())
    }

    pub fn param_hash(&self) -> [u8; 32] {
        param_hash(&self.params())
    }

    pub fn flops(&self) -> u64 {
        self.fc1.flops() + self.fc2.flops()
    }

    pub fn manifest(&self) -> ArchManifest {
        ArchManifest {
            model: "semantic-classifier".into(),
            layers: vec![
                LayerReport {
                    name: "fc1".into(),
                    shape: format!("{}→10", self.input_dim),
                    params: self.fc1.n_params(),
                    flops: self.fc1.flops(),
                    formula: "2·F·G".into(),
                },
                LayerReport {
                    name: "fc2".into(),
                    shape: format!("10→{}", self.num_classes),
                    params: self.fc2.n_params(),
                    flops: self.fc2.flops(),
                    formula: "2·F·G".into(),
                },
            ],
            notes: vec![],
        }
    }
}

/// Detached copy of a bundle: same values, no gradient graph. Used when
/// the teacher supervises without being trained.
pub fn detach_bundle(b: &RepresentationBundle) -> RepresentationBundle {
    RepresentationBundle {
        attn_rep: b.attn_rep.detach(),
        causal_rep: b.causal_rep.detach(),
        combi_rep: b.combi_rep.detach(),
        teacher_logits: b.teacher_logits.detach(),
        sc_logits: b.sc_logits.as_ref().map(|t| t.detach()),
        sc_hidden: b.sc_hidden.as_ref().map(|t| t.detach()),
    }
}

/// Describes the student's fixed topology for the deployment bundle.
pub fn student_layer_plan(num_classes: usize) -> Vec<tsak_runtime::LayerDesc> {
    use tsak_runtime::LayerDesc::*;
    vec![
        Conv1dSame {
            c_in: STUDENT_CHANNELS as u32,
            c_out: 100,
            k: 3,
            stride: 1,
        },
        Relu,
        MaxPool { k: 2, stride: 2 },
        Conv1dSame {
            c_in: 100,
            c_out: 5,
            k: 3,
            stride: 1,
        },
        Relu,
        MaxPool { k: 2, stride: 2 },
        Conv1dSame {
            c_in: 5,
            c_out: 5,
            k: 3,
            stride: 1,
        },
        Relu,
        MaxPool { k: 2, stride: 2 },
        GlobalMaxPool,
        Linear { f_in: 5, f_out: 10 },
        Relu,
        Linear {
            f_in: 10,
            f_out: num_classes as u32,
        },
    ]
}
