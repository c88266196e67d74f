//! Trained-model artifacts: integrity-hashed JSON checkpoints for the
//! training stack and the deployable student bundle.
//!
//! Checkpoints store exact 64-bit weights (JSON numbers round-trip f64
//! losslessly) together with the parameter hash they were saved under, so
//! a staged pipeline can prove a supervisor came back bit-identical.

use serde::{Deserialize, Serialize};

use crate::autodiff::Parameter;
use crate::error::{Error, Result};
use crate::models::{
    param_hash, student_layer_plan, SemanticClassifier, StudentNet, TeacherNet, TeacherVariant,
    STUDENT_CHANNELS, WINDOW_LEN,
};
use crate::signal::normalize::NormalizationStats;
use crate::util::hex32;
use tsak_runtime::{write_bundle, BundleSpec};

#[derive(Debug, Serialize, Deserialize)]
struct ParamBlob {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// One serialized model. `kind` is `teacher`, `semantic`, or `student`;
/// `variant` names the teacher layout (`factory` / `openpack`) and is `-`
/// for the student, whose shape never varies.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: String,
    pub variant: String,
    pub num_classes: usize,
    pub finalized: bool,
    pub param_hash: String,
    params: Vec<ParamBlob>,
}

fn snapshot(
    kind: &str,
    variant: &str,
    num_classes: usize,
    finalized: bool,
    params: &[Parameter],
) -> Checkpoint {
    Checkpoint {
        kind: kind.into(),
        variant: variant.into(),
        num_classes,
        finalized,
        param_hash: hex32(&param_hash(params)),
        params: params
            .iter()
            .map(|p| ParamBlob {
                name: p.name.clone(),
                shape: p.tensor.shape(),
                data: p.tensor.to_vec(),
            })
            .collect(),
    }
}

fn to_json(ck: &Checkpoint) -> Result<String> {
    serde_json::to_string(ck).map_err(|e| Error::Format(format!("cannot encode checkpoint: {e}")))
}

fn from_json(json: &str, expected_kind: &str) -> Result<Checkpoint> {
    let ck: Checkpoint = serde_json::from_str(json)
        .map_err(|e| Error::Format(format!("cannot decode checkpoint: {e}")))?;
    if ck.kind != expected_kind {
        return Err(Error::Format(format!(
            "checkpoint holds a {} model, expected {}",
            ck.kind, expected_kind
        )));
    }
    Ok(ck)
}

fn variant_from_name(name: &str) -> Result<TeacherVariant> {
    match name {
        "factory" => Ok(TeacherVariant::Factory),
        "openpack" => Ok(TeacherVariant::OpenPack),
        other => Err(Error::Format(format!("unknown teacher variant `{other}`"))),
    }
}

/// Writes the checkpoint's weights into a freshly constructed model's
/// parameters, then proves integrity by recomputing the parameter hash.
fn restore(params: &[Parameter], ck: &Checkpoint) -> Result<()> {
    if params.len() != ck.params.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} parameter blocks, model expects {}",
            ck.params.len(),
            params.len()
        )));
    }
    for (p, blob) in params.iter().zip(&ck.params) {
        if p.name != blob.name || p.tensor.shape() != blob.shape {
            return Err(Error::Format(format!(
                "parameter mismatch: checkpoint {} {:?} against model {} {:?}",
                blob.name,
                blob.shape,
                p.name,
                p.tensor.shape()
            )));
        }
        let numel: usize = blob.shape.iter().product();
        if blob.data.len() != numel {
            return Err(Error::Format(format!(
                "parameter {} carries {} values for shape {:?}",
                blob.name,
                blob.data.len(),
                blob.shape
            )));
        }
        p.tensor.set_data(&blob.data);
    }
    let recomputed = hex32(&param_hash(params));
    if recomputed != ck.param_hash {
        return Err(Error::Format(format!(
            "checkpoint integrity failure: stored hash {} but weights hash to {}",
            ck.param_hash, recomputed
        )));
    }
    Ok(())
}

pub fn save_teacher(net: &TeacherNet) -> Result<String> {
    to_json(&snapshot(
        "teacher",
        net.variant.name(),
        net.num_classes,
        false,
        &net.params(),
    ))
}

/// Loads a teacher checkpoint. The result is unfrozen; callers freeze it
/// before using it as a supervisor.
pub fn load_teacher(json: &str) -> Result<TeacherNet> {
    let ck = from_json(json, "teacher")?;
    let net = TeacherNet::new(variant_from_name(&ck.variant)?, ck.num_classes, 0);
    restore(&net.params(), &ck)?;
    Ok(net)
}

pub fn save_semantic(sc: &SemanticClassifier) -> Result<String> {
    // input_dim = 2 · (attention width + LSTM width) identifies the layout.
    let variant = if sc.input_dim == 2 * TeacherVariant::Factory.combi_dim() {
        TeacherVariant::Factory
    } else {
        TeacherVariant::OpenPack
    };
    to_json(&snapshot(
        "semantic",
        variant.name(),
        sc.num_classes,
        false,
        &sc.params(),
    ))
}

pub fn load_semantic(json: &str) -> Result<SemanticClassifier> {
    let ck = from_json(json, "semantic")?;
    let sc = SemanticClassifier::new(variant_from_name(&ck.variant)?, ck.num_classes, 0);
    restore(&sc.params(), &ck)?;
    Ok(sc)
}

/// Saves the student's deployable parameters; training-only projectors are
/// never part of a checkpoint.
pub fn save_student(net: &StudentNet) -> Result<String> {
    to_json(&snapshot(
        "student",
        "-",
        net.num_classes,
        net.is_finalized(),
        &net.deploy_params(),
    ))
}

pub fn load_student(json: &str) -> Result<StudentNet> {
    let ck = from_json(json, "student")?;
    let mut net = StudentNet::new(ck.num_classes, 0);
    restore(&net.deploy_params(), &ck)?;
    if ck.finalized {
        // Re-finalizing rounds already-rounded weights: a value no-op that
        // restores the deployable flag.
        net.finalize();
    }
    Ok(net)
}

/// Packs a finalized student into the deployable bundle. `channels` names
/// the dataset channels the student consumes, in model input order; their
/// fitted ranges travel with the weights so the runtime can normalize raw
/// windows on its own.
pub fn export_student(
    net: &StudentNet,
    stats: &NormalizationStats,
    channels: &[usize],
    class_names: &[String],
    config_hash: [u8; 32],
) -> Result<Vec<u8>> {
    if net.has_any_projector() || !net.is_finalized() {
        return Err(Error::Config(
            "export needs a finalized student: drop the training projectors first".into(),
        ));
    }
    if class_names.len() != net.num_classes {
        return Err(Error::Config(format!(
            "{} class names against a {}-way head",
            class_names.len(),
            net.num_classes
        )));
    }
    if channels.len() != STUDENT_CHANNELS {
        return Err(Error::Config(format!(
            "the student reads exactly {STUDENT_CHANNELS} channels, got {}",
            channels.len()
        )));
    }
    let mut channel_stats = Vec::with_capacity(channels.len());
    for &c in channels {
        match stats.per_channel.get(c) {
            Some(Some(st)) => channel_stats.push((st.min, st.max)),
            Some(None) => {
                return Err(Error::Config(format!(
                    "channel {c} is not normalized; the bundle carries normalized \
                     accelerometer channels only"
                )))
            }
            None => {
                return Err(Error::Config(format!(
                    "channel {c} is outside the fitted normalization stats"
                )))
            }
        }
    }
    let spec = BundleSpec {
        config_hash,
        window_len: WINDOW_LEN,
        channel_stats,
        class_names: class_names.to_vec(),
        layers: student_layer_plan(net.num_classes),
        weights: net.flat_weights_f32(),
    };
    Ok(write_bundle(&spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::distill::{gather_batch, student_channel_indices};
    use crate::signal::pipeline::{build_dataset, PreprocessConfig};
    use crate::synth::{generate, synth_class_names, SynthSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tsak_runtime::StudentRuntime;

    fn probe(channels: usize) -> Tensor {
        let n = 2 * channels * WINDOW_LEN;
        let data: Vec<f64> = (0..n).map(|i| ((i % 17) as f64) / 16.0).collect();
        Tensor::from_vec(vec![2, channels, WINDOW_LEN], data)
    }

    #[test]
    fn teacher_checkpoint_round_trips_bitwise() {
        let net = TeacherNet::new(TeacherVariant::Factory, 4, 41);
        let json = save_teacher(&net).unwrap();
        let back = load_teacher(&json).unwrap();
        assert_eq!(net.param_hash(), back.param_hash());
        let x = probe(20);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = net.forward(&x, false, &mut rng).unwrap();
        let b = back.forward(&x, false, &mut rng).unwrap();
        assert_eq!(a.teacher_logits.to_vec(), b.teacher_logits.to_vec());
        // Saving the loaded model reproduces the byte stream.
        assert_eq!(json, save_teacher(&back).unwrap());
    }

    #[test]
    fn semantic_checkpoint_round_trips_for_both_layouts() {
        for variant in [TeacherVariant::Factory, TeacherVariant::OpenPack] {
            let sc = SemanticClassifier::new(variant, 4, 9);
            let json = save_semantic(&sc).unwrap();
            let back = load_semantic(&json).unwrap();
            assert_eq!(back.input_dim, sc.input_dim);
            assert_eq!(
                param_hash(&sc.params()),
                param_hash(&back.params())
            );
        }
    }

    #[test]
    fn student_checkpoint_round_trips_and_keeps_finalization() {
        let mut net = StudentNet::new(4, 23);
        net.attach_projector(20, 23);
        net.finalize();
        let json = save_student(&net).unwrap();
        let back = load_student(&json).unwrap();
        assert!(back.is_finalized());
        assert!(!back.has_any_projector());
        assert_eq!(net.param_hash(), back.param_hash());
        assert_eq!(net.flat_weights_f32(), back.flat_weights_f32());
    }

    #[test]
    fn tampered_or_mismatched_checkpoints_are_refused() {
        let net = TeacherNet::new(TeacherVariant::Factory, 4, 41);
        let json = save_teacher(&net).unwrap();

        // Wrong model kind.
        let Err(e) = load_student(&json) else {
            panic!("kind mismatch must be refused")
        };
        assert!(matches!(e, Error::Format(_)));

        // Stored hash no longer matches the weights.
        let tampered = json.replacen("\"param_hash\":\"", "\"param_hash\":\"00", 1);
        let Err(e) = load_teacher(&tampered) else {
            panic!("integrity failure must be refused")
        };
        assert!(matches!(e, Error::Format(_)));
        assert!(e.to_string().contains("integrity"));
    }

    #[test]
    fn export_refuses_unfinalized_students() {
        let spec = SynthSpec {
            num_users: 1,
            sessions_per_user: 1,
            session_seconds: 20.0,
            seed: 3,
            ..SynthSpec::default()
        };
        let recordings = generate(&spec).unwrap();
        let (ds, _) =
            build_dataset(&recordings, synth_class_names(4), &PreprocessConfig::default())
                .unwrap();
        let extrema: Vec<Vec<(f64, f64)>> = ds
            .sessions
            .iter()
            .map(|s| s.channel_extrema.clone())
            .collect();
        let stats = NormalizationStats::from_extrema(&extrema, &ds.channels, "all").unwrap();
        let accel = student_channel_indices(&ds).unwrap();

        let mut net = StudentNet::new(4, 5);
        let Err(e) = export_student(&net, &stats, &accel, &ds.class_names, [0; 32]) else {
            panic!("unfinalized student must be refused")
        };
        assert!(matches!(e, Error::Config(_)));

        net.attach_projector(20, 5);
        let Err(_) = export_student(&net, &stats, &accel, &ds.class_names, [0; 32]) else {
            panic!("student with projectors must be refused")
        };

        net.finalize();
        assert!(export_student(&net, &stats, &accel, &ds.class_names, [0; 32]).is_ok());
    }

    #[test]
    fn exported_bundle_matches_training_stack_inference() {
        let spec = SynthSpec {
            num_users: 1,
            sessions_per_user: 1,
            session_seconds: 30.0,
            seed: 19,
            ..SynthSpec::default()
        };
        let recordings = generate(&spec).unwrap();
        let (ds, _) =
            build_dataset(&recordings, synth_class_names(4), &PreprocessConfig::default())
                .unwrap();
        let extrema: Vec<Vec<(f64, f64)>> = ds
            .sessions
            .iter()
            .map(|s| s.channel_extrema.clone())
            .collect();
        let stats = NormalizationStats::from_extrema(&extrema, &ds.channels, "all").unwrap();
        let accel = student_channel_indices(&ds).unwrap();

        let mut net = StudentNet::new(4, 77);
        net.finalize();
        let bytes =
            export_student(&net, &stats, &accel, &ds.class_names, [7; 32]).unwrap();
        assert!(bytes.len() < 16 * 1024, "bundle is {} bytes", bytes.len());
        let rt = StudentRuntime::from_bytes(&bytes).unwrap();
        assert_eq!(rt.weight_count(), 2689);
        assert_eq!(*rt.config_hash(), [7; 32]);

        // Export → load → re-export is byte-identical.
        assert_eq!(bytes, rt.to_bytes().unwrap());

        let mut scratch = rt.scratch();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let win = ds.win_len;
        for i in (0..ds.n_windows()).step_by(7) {
            // The runtime takes the raw window and normalizes internally.
            let w = ds.window(i);
            let mut raw = Vec::with_capacity(accel.len() * win);
            for &c in &accel {
                raw.extend(w[c * win..(c + 1) * win].iter().map(|&v| v as f64));
            }
            let (class, probs) = rt.infer(&raw, &mut scratch).unwrap();
            let rt_logits = rt.logits(&raw, &mut scratch).unwrap();

            // The training stack sees the same window pre-normalized.
            let (x, _) = gather_batch(&ds, &[i], &stats, Some(&accel)).unwrap();
            let (_, z) = net.forward(&x, false, &mut rng).unwrap();
            let train_logits = z.to_vec();

            for (a, b) in rt_logits.iter().zip(&train_logits) {
                assert!((a - b).abs() < 1e-6, "logit drift: {a} vs {b}");
            }
            assert_eq!(class, crate::distill::argmax_rows(&z)[0]);
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }
}
