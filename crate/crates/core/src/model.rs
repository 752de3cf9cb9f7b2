//! Baseline CNN and hybrid QCNN + CNN classifiers.
//!
//! Every variant reads a 140-point series. A hybrid with `k` QCNN blocks feeds
//! `x[16i .. 16i + 16)` to block `i` and the remaining `140 - 16k` points to the
//! classical convolution stack. Block outputs `(p0, p1)` and the flattened conv
//! features are concatenated (blocks first) and passed through three dense layers.
//! ReLU follows every conv and hidden dense layer; dropout follows the last conv.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::nn::{dropout_backward, dropout_forward, relu_backward, relu_forward, Conv1d, Dense};
use crate::qcnn::{self, QcnnParams, BLOCK_PARAMS, INPUT_LEN as QCNN_INPUT};

pub const SERIES_LEN: usize = 140;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const QCNN_INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Baseline,
    Hybrid1,
    Hybrid2,
    Hybrid4,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] =
        [ModelKind::Baseline, ModelKind::Hybrid1, ModelKind::Hybrid2, ModelKind::Hybrid4];

    pub fn qcnn_count(self) -> usize {
        match self {
            ModelKind::Baseline => 0,
            ModelKind::Hybrid1 => 1,
            ModelKind::Hybrid2 => 2,
            ModelKind::Hybrid4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Hybrid1 => "hybrid1",
            ModelKind::Hybrid2 => "hybrid2",
            ModelKind::Hybrid4 => "hybrid4",
        }
    }

    fn code(self) -> u32 {
        self.qcnn_count() as u32
    }

    fn from_code(code: u32) -> Option<Self> {
        ModelKind::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown model kind '{s}'")))
    }
}

/// Full layer geometry of one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_len: usize,
    pub qcnn_count: usize,
    pub classical_input_len: usize,
    pub convs: Vec<Conv1d>,
    /// Length entering each conv, plus the final conv output length.
    pub conv_lengths: Vec<usize>,
    pub classical_features: usize,
    pub concat_dim: usize,
    pub dense: Vec<Dense>,
    pub dropout_rate: f64,
}

/// One row of a layer-shape table, in `(H, W, D)` notation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeRow {
    pub layer: String,
    pub input: Option<Vec<usize>>,
    pub output: Option<Vec<usize>>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        let qcnn_count = kind.qcnn_count();
        let classical_input_len = SERIES_LEN - QCNN_INPUT * qcnn_count;
        let mut convs = vec![Conv1d::new(1, 8, 30, 2), Conv1d::new(8, 16, 20, 2)];
        if kind != ModelKind::Hybrid4 {
            convs.push(Conv1d::new(16, 32, 10, 2));
        }
        let mut conv_lengths = vec![classical_input_len];
        for c in &convs {
            let last = *conv_lengths.last().unwrap();
            conv_lengths.push(c.output_length(last).expect("fixed geometry is valid"));
        }
        let last = convs.last().unwrap();
        let classical_features = last.out_channels * conv_lengths.last().unwrap();
        let concat_dim = classical_features + 2 * qcnn_count;
        let dense = vec![Dense::new(concat_dim, 18), Dense::new(18, 9), Dense::new(9, 2)];
        ModelSpec {
            kind,
            input_len: SERIES_LEN,
            qcnn_count,
            classical_input_len,
            convs,
            conv_lengths,
            classical_features,
            concat_dim,
            dense,
            dropout_rate: DEFAULT_DROPOUT,
        }
    }

    pub fn layout(&self) -> ParamLayout {
        let mut blocks = Vec::new();
        let mut start = 0;
        let mut push = |name: String, len: usize| {
            blocks.push(ParamBlock { name, start, len });
            start += len;
        };
        for i in 0..self.qcnn_count {
            push(format!("qcnn{i}"), BLOCK_PARAMS);
        }
        for (i, c) in self.convs.iter().enumerate() {
            push(format!("conv{}", i + 1), c.num_params());
        }
        for (i, d) in self.dense.iter().enumerate() {
            push(format!("fc{}", i + 1), d.num_params());
        }
        ParamLayout { blocks }
    }

    /// Layer-by-layer shapes in the `(H, W, D)` notation used for architecture tables.
    pub fn shape_table(&self) -> Vec<ShapeRow> {
        let row = |layer: &str, input, output| ShapeRow { layer: layer.to_string(), input, output };
        let mut rows = vec![row("Input", Some(vec![1, 1, self.input_len]), None)];
        for i in 0..self.qcnn_count {
            rows.push(row(&format!("Partial input{}", i + 1), Some(vec![1, 1, QCNN_INPUT]), None));
            rows.push(row("QCNN", Some(vec![1, 1, QCNN_INPUT]), Some(vec![1, 1, 2])));
        }
        if self.qcnn_count > 0 {
            let name = format!("Partial input{}", self.qcnn_count + 1);
            rows.push(row(&name, Some(vec![1, 1, self.classical_input_len]), None));
        }
        for (i, c) in self.convs.iter().enumerate() {
            rows.push(row(
                &format!("Classical 1D Conv. layer{}", i + 1),
                Some(vec![1, c.in_channels, self.conv_lengths[i]]),
                Some(vec![1, c.out_channels, self.conv_lengths[i + 1]]),
            ));
        }
        if self.qcnn_count > 0 {
            rows.push(row("Concatenate", Some(vec![1, 1, self.concat_dim]), None));
        }
        for (i, d) in self.dense.iter().enumerate() {
            rows.push(row(
                &format!("Classical fully connected layer{}", i + 1),
                Some(vec![1, 1, d.in_dim]),
                Some(vec![1, 1, d.out_dim]),
            ));
        }
        rows.push(row("Output", None, Some(vec![1, 2])));
        rows
    }
}

/// Number of trainable reals in a model variant.
pub fn count_parameters(spec: &ModelSpec) -> usize {
    spec.convs.iter().map(Conv1d::num_params).sum::<usize>()
        + spec.dense.iter().map(Dense::num_params).sum::<usize>()
        + BLOCK_PARAMS * spec.qcnn_count
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl ParamBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Named slices of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn total(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.start + b.len)
    }

    pub fn get(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    fn range(&self, name: &str) -> std::ops::Range<usize> {
        self.get(name).expect("layout block exists").range()
    }
}

/// Flat parameter store plus its index map.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub values: Vec<f64>,
    pub layout: ParamLayout,
}

impl ModelParams {
    /// He-normal conv/dense weights, zero biases, N(0, 0.1^2) QCNN angles.
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Self {
        let layout = spec.layout();
        let mut values = vec![0.0; layout.total()];
        for i in 0..spec.qcnn_count {
            let block = QcnnParams::random(rng, QCNN_INIT_STD).to_vec();
            values[layout.range(&format!("qcnn{i}"))].copy_from_slice(&block);
        }
        let mut he = |name: String, fan_in: usize, weights: usize, values: &mut [f64]| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            let start = layout.range(&name).start;
            for v in &mut values[start..start + weights] {
                *v = normal.sample(rng);
            }
        };
        for (i, c) in spec.convs.iter().enumerate() {
            he(format!("conv{}", i + 1), c.fan_in(), c.num_weights(), &mut values);
        }
        for (i, d) in spec.dense.iter().enumerate() {
            he(format!("fc{}", i + 1), d.in_dim, d.num_weights(), &mut values);
        }
        ModelParams { kind: spec.kind, values, layout }
    }

    pub fn from_values(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        let layout = spec.layout();
        if values.len() != layout.total() {
            return Err(shape(format!(
                "{} needs {} parameters, got {}",
                spec.kind,
                layout.total(),
                values.len()
            )));
        }
        Ok(ModelParams { kind: spec.kind, values, layout })
    }

    pub fn block(&self, name: &str) -> &[f64] {
        &self.values[self.layout.range(name)]
    }
}

/// Splits a series into QCNN segments and the classical remainder.
pub fn split_input<'a>(x: &'a [f64], spec: &ModelSpec) -> Result<(Vec<&'a [f64]>, &'a [f64])> {
    if x.len() != spec.input_len {
        return Err(shape(format!("expected {} points, got {}", spec.input_len, x.len())));
    }
    let segments = (0..spec.qcnn_count).map(|k| &x[k * QCNN_INPUT..(k + 1) * QCNN_INPUT]).collect();
    Ok((segments, &x[spec.qcnn_count * QCNN_INPUT..]))
}

/// Activations cached by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub qcnn_inputs: Vec<Vec<f64>>,
    pub qcnn_outputs: Vec<(f64, f64)>,
    /// Input to each conv layer.
    pub conv_inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each conv layer.
    pub conv_pre: Vec<Vec<f64>>,
    pub dropout_mask: Vec<f64>,
    pub concat: Vec<f64>,
    pub dense_inputs: Vec<Vec<f64>>,
    pub dense_pre: Vec<Vec<f64>>,
    pub logits: [f64; 2],
}

fn check_params(spec: &ModelSpec, params: &ModelParams) -> Result<()> {
    if params.kind != spec.kind || params.values.len() != count_parameters(spec) {
        return Err(shape(format!("parameters for {} do not match spec {}", params.kind, spec.kind)));
    }
    Ok(())
}

pub fn forward<R: Rng + ?Sized>(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &[f64],
    training: bool,
    rng: &mut R,
) -> Result<ForwardTrace> {
    check_params(spec, params)?;
    let (segments, classical) = split_input(x, spec)?;

    let mut qcnn_outputs = Vec::with_capacity(segments.len());
    for (i, seg) in segments.iter().enumerate() {
        let angles = QcnnParams::from_slice(params.block(&format!("qcnn{i}")))?;
        qcnn_outputs.push(qcnn::qcnn_forward(seg, &angles)?);
    }

    let mut h = classical.to_vec();
    let mut conv_inputs = Vec::with_capacity(spec.convs.len());
    let mut conv_pre = Vec::with_capacity(spec.convs.len());
    for (i, conv) in spec.convs.iter().enumerate() {
        let pre = conv.forward(params.block(&format!("conv{}", i + 1)), &h, spec.conv_lengths[i])?;
        conv_inputs.push(std::mem::replace(&mut h, relu_forward(&pre)));
        conv_pre.push(pre);
    }
    let (features, dropout_mask) = dropout_forward(&h, spec.dropout_rate, training, rng)?;

    let mut concat = Vec::with_capacity(spec.concat_dim);
    for &(p0, p1) in &qcnn_outputs {
        concat.push(p0);
        concat.push(p1);
    }
    concat.extend_from_slice(&features);

    let mut h = concat.clone();
    let mut dense_inputs = Vec::with_capacity(spec.dense.len());
    let mut dense_pre = Vec::with_capacity(spec.dense.len());
    let last = spec.dense.len() - 1;
    for (i, d) in spec.dense.iter().enumerate() {
        let pre = d.forward(params.block(&format!("fc{}", i + 1)), &h)?;
        let next = if i == last { pre.clone() } else { relu_forward(&pre) };
        dense_inputs.push(std::mem::replace(&mut h, next));
        dense_pre.push(pre);
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics("non-finite logits".into()));
    }
    Ok(ForwardTrace {
        qcnn_inputs: segments.iter().map(|s| s.to_vec()).collect(),
        qcnn_outputs,
        conv_inputs,
        conv_pre,
        dropout_mask,
        concat,
        dense_inputs,
        dense_pre,
        logits: [h[0], h[1]],
    })
}

/// Gradient of `dlogits · logits` with respect to every parameter.
pub fn backward(
    spec: &ModelSpec,
    params: &ModelParams,
    trace: &ForwardTrace,
    dlogits: [f64; 2],
) -> Result<Vec<f64>> {
    check_params(spec, params)?;
    let mut grad = vec![0.0; params.values.len()];
    if dlogits == [0.0, 0.0] {
        return Ok(grad);
    }

    let mut g = dlogits.to_vec();
    for i in (0..spec.dense.len()).rev() {
        if i != spec.dense.len() - 1 {
            g = relu_backward(&trace.dense_pre[i], &g)?;
        }
        let range = params.layout.range(&format!("fc{}", i + 1));
        g = spec.dense[i].backward(
            &params.values[range.clone()],
            &trace.dense_inputs[i],
            &g,
            &mut grad[range],
        )?;
    }

    let (g_quantum, g_classical) = g.split_at(2 * spec.qcnn_count);
    for (k, seg) in trace.qcnn_inputs.iter().enumerate() {
        let range = params.layout.range(&format!("qcnn{k}"));
        let angles = QcnnParams::from_slice(&params.values[range.clone()])?;
        let gq = qcnn::qcnn_gradient(seg, &angles, [g_quantum[2 * k], g_quantum[2 * k + 1]])?;
        grad[range].iter_mut().zip(gq).for_each(|(a, b)| *a += b);
    }

    let mut g = dropout_backward(&trace.dropout_mask, g_classical)?;
    for i in (0..spec.convs.len()).rev() {
        g = relu_backward(&trace.conv_pre[i], &g)?;
        let range = params.layout.range(&format!("conv{}", i + 1));
        g = spec.convs[i].backward(
            &params.values[range.clone()],
            &trace.conv_inputs[i],
            spec.conv_lengths[i],
            &g,
            &mut grad[range],
        )?;
    }
    Ok(grad)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HQCNNCKP";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointSidecar {
    format_version: u32,
    kind: ModelKind,
    num_params: usize,
    layout: ParamLayout,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `path` (header + little-endian f64 array) and a `path.json` layout sidecar.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * params.values.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&params.kind.code().to_le_bytes());
    buf.extend_from_slice(&(params.values.len() as u64).to_le_bytes());
    for v in &params.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    let sidecar = CheckpointSidecar {
        format_version: CHECKPOINT_VERSION,
        kind: params.kind,
        num_params: params.values.len(),
        layout: params.layout.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |m: &str| Error::Data(format!("{}: {m}", path.display()));
    if buf.len() < 24 || &buf[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    if u32_at(8) != CHECKPOINT_VERSION {
        return Err(bad("unsupported checkpoint version"));
    }
    let kind = ModelKind::from_code(u32_at(12)).ok_or_else(|| bad("unknown model kind"))?;
    let count = u64::from_le_bytes(buf[16..24].try_into().unwrap()) as usize;
    if buf.len() != 24 + 8 * count {
        return Err(bad("truncated parameter array"));
    }
    let values = buf[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = ModelParams::from_values(&ModelSpec::new(kind), values)?;
    if let Ok(text) = fs::read_to_string(sidecar_path(path)) {
        let sidecar: CheckpointSidecar = serde_json::from_str(&text)?;
        if sidecar.kind != kind || sidecar.layout != params.layout {
            return Err(bad("sidecar layout disagrees with checkpoint"));
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::weighted_softmax_xent;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_counts() {
        let counts: Vec<usize> =
            ModelKind::ALL.iter().map(|k| count_parameters(&ModelSpec::new(*k))).collect();
        assert_eq!(counts, vec![11_065, 9_983, 8_901, 4_177]);
        for k in ModelKind::ALL {
            let spec = ModelSpec::new(k);
            assert_eq!(spec.layout().total(), count_parameters(&spec));
        }
    }

    #[test]
    fn concat_dims_and_input_sum_rule() {
        let dims: Vec<usize> = ModelKind::ALL.iter().map(|k| ModelSpec::new(*k).concat_dim).collect();
        assert_eq!(dims, vec![160, 98, 36, 56]);
        for k in ModelKind::ALL {
            let s = ModelSpec::new(k);
            assert_eq!(s.classical_input_len + 16 * s.qcnn_count, 140);
        }
    }

    #[test]
    fn split_input_segments() {
        let x: Vec<f64> = (0..140).map(|i| i as f64).collect();
        let (q, c) = split_input(&x, &ModelSpec::new(ModelKind::Hybrid1)).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0], &x[..16]);
        assert_eq!(c.len(), 124);
        let (q, c) = split_input(&x, &ModelSpec::new(ModelKind::Hybrid4)).unwrap();
        assert_eq!(q.len(), 4);
        assert_eq!(q[3][0], 48.0);
        assert_eq!(c.len(), 76);
        let (q, c) = split_input(&x, &ModelSpec::new(ModelKind::Baseline)).unwrap();
        assert!(q.is_empty());
        assert_eq!(c.len(), 140);
        assert!(split_input(&x[..139], &ModelSpec::new(ModelKind::Baseline)).is_err());
    }

    #[test]
    fn zero_segment_is_encoding_error() {
        let spec = ModelSpec::new(ModelKind::Hybrid1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = ModelParams::init(&spec, &mut rng);
        let mut x = vec![1.0; 140];
        x[..16].iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(forward(&spec, &params, &x, false, &mut rng), Err(Error::Encoding(_))));
    }

    fn loss_at(spec: &ModelSpec, values: &[f64], x: &[f64], seed: u64) -> f64 {
        let p = ModelParams::from_values(spec, values.to_vec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = forward(spec, &p, x, true, &mut rng).unwrap();
        weighted_softmax_xent(&t.logits, 1, &[0.8, 1.3]).unwrap().0
    }

    #[test]
    fn gradient_matches_finite_differences_on_sampled_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for kind in ModelKind::ALL {
            let spec = ModelSpec::new(kind);
            let params = ModelParams::init(&spec, &mut rng);
            let x: Vec<f64> = (0..140).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let mut drng = ChaCha8Rng::seed_from_u64(9);
            let trace = forward(&spec, &params, &x, true, &mut drng).unwrap();
            let (_, dl) = weighted_softmax_xent(&trace.logits, 1, &[0.8, 1.3]).unwrap();
            let g = backward(&spec, &params, &trace, dl).unwrap();
            let n = params.values.len();
            let idx: Vec<usize> = (0..60).map(|_| rng.random_range(0..n)).chain(0..8).collect();
            let h = 1e-5;
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for &i in &idx {
                let mut vp = params.values.clone();
                vp[i] += h;
                let mut vm = params.values.clone();
                vm[i] -= h;
                let fd = (loss_at(&spec, &vp, &x, 9) - loss_at(&spec, &vm, &x, 9)) / (2.0 * h);
                num += (g[i] - fd).powi(2);
                den += g[i].powi(2).max(fd.powi(2));
            }
            assert!((num / den).sqrt() <= 1e-4, "{kind}: rel err {}", (num / den).sqrt());
        }
    }

    #[test]
    fn zero_dlogits_and_baseline_structure() {
        let spec = ModelSpec::new(ModelKind::Baseline);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::init(&spec, &mut rng);
        assert!(params.layout.blocks.iter().all(|b| !b.name.starts_with("qcnn")));
        let x: Vec<f64> = (0..140).map(|_| rng.random::<f64>()).collect();
        let trace = forward(&spec, &params, &x, false, &mut rng).unwrap();
        assert!(backward(&spec, &params, &trace, [0.0, 0.0]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let spec = ModelSpec::new(ModelKind::Hybrid2);
        let params = ModelParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(5));
        save_checkpoint(&params, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, params);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"HQCNNCKP");
        assert_eq!(bytes.len(), 24 + 8 * 8_901);
        fs::write(&path, &bytes[..100]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
