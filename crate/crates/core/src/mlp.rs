//! Feed-forward classifier: ReLU hidden layers with inverted dropout and a
//! softmax head, hand-written backpropagation, Adam, and the checkpoint
//! format.
//!
//! The default network has two hidden layers of 1500 and 1000 units with
//! dropout 0.2 and 0.3 after them; one to three hidden layers are supported.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::FusedFeature;
use crate::loss::LossConfig;

pub const DEFAULT_HIDDEN: [usize; 2] = [1500, 1000];
pub const DEFAULT_DROPOUT: [f64; 2] = [0.2, 0.3];
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum MlpError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("forward cache does not match parameters or gradient shape")]
    CacheMismatch,
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid dropout rate {0}; must be in [0, 1)")]
    InvalidDropout(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One affine layer; `weight` is `[out × in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

/// Hidden layers followed by the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    pub fn d_in(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weight.nrows())
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn zeros(d_in: usize, hidden: &[usize], classes: usize) -> Self {
        let mut fan_in = d_in;
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        for &out in hidden.iter().chain(std::iter::once(&classes)) {
            layers.push(Dense {
                weight: Array2::zeros((out, fan_in)),
                bias: Array1::zeros(out),
            });
            fan_in = out;
        }
        Self { layers }
    }
}

/// Weights uniform in `±√(6 / fan_in)`, biases zero, seeded.
pub fn init_params(d_in: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<MlpParams, MlpError> {
    if d_in == 0 || classes == 0 || hidden.contains(&0) {
        return Err(MlpError::InvalidArchitecture(format!(
            "all sizes must be >= 1 (d_in {d_in}, hidden {hidden:?}, classes {classes})"
        )));
    }
    if hidden.is_empty() || hidden.len() > 3 {
        return Err(MlpError::InvalidArchitecture(format!(
            "1 to 3 hidden layers supported, got {}",
            hidden.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::zeros(d_in, hidden, classes);
    for layer in &mut params.layers {
        let bound = (6.0 / layer.weight.ncols() as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        layer.weight.mapv_inplace(|_| dist.sample(&mut rng));
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    /// One rate per hidden layer, applied after its ReLU.
    pub rates: Vec<f64>,
    pub seed: u64,
}

impl Default for DropoutSpec {
    fn default() -> Self {
        Self {
            rates: DEFAULT_DROPOUT.to_vec(),
            seed: 0,
        }
    }
}

impl DropoutSpec {
    pub fn validate(&self) -> Result<(), MlpError> {
        match self.rates.iter().find(|p| !(0.0..1.0).contains(*p)) {
            Some(&p) => Err(MlpError::InvalidDropout(p)),
            None => Ok(()),
        }
    }
}

pub enum Mode<'a> {
    Eval,
    Train { rates: &'a [f64], rng: &'a mut ChaCha8Rng },
}

/// Inverted-dropout mask: kept units carry `1 / (1 − p)`, dropped units 0.
pub fn dropout_mask(shape: (usize, usize), p: f64, rng: &mut impl Rng) -> Array2<f64> {
    let scale = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { scale })
}

/// Everything backpropagation needs from one forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Array2<f64>,
    /// Per hidden layer, before ReLU.
    pub pre: Vec<Array2<f64>>,
    /// Per hidden layer, after ReLU and dropout.
    pub post: Vec<Array2<f64>>,
    pub masks: Vec<Option<Array2<f64>>>,
    pub probs: Array2<f64>,
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn affine(x: ArrayView2<f64>, layer: &Dense) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

pub fn forward(params: &MlpParams, x: ArrayView2<f64>, mode: Mode<'_>) -> Result<(Array2<f64>, ForwardCache), MlpError> {
    if x.nrows() == 0 {
        return Err(MlpError::EmptyBatch);
    }
    if x.ncols() != params.d_in() {
        return Err(MlpError::DimMismatch {
            expected: params.d_in(),
            found: x.ncols(),
        });
    }
    let n_hidden = params.layers.len() - 1;
    let (rates, mut rng) = match mode {
        Mode::Eval => (None, None),
        Mode::Train { rates, rng } => {
            if rates.len() != n_hidden {
                return Err(MlpError::InvalidArchitecture(format!(
                    "{} dropout rates for {} hidden layers",
                    rates.len(),
                    n_hidden
                )));
            }
            (Some(rates), Some(rng))
        }
    };

    let mut pre = Vec::with_capacity(n_hidden);
    let mut post: Vec<Array2<f64>> = Vec::with_capacity(n_hidden);
    let mut masks = Vec::with_capacity(n_hidden);
    for (l, layer) in params.layers[..n_hidden].iter().enumerate() {
        let input = post.last().map(|a| a.view()).unwrap_or(x);
        let z = affine(input, layer);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(MlpError::NonFiniteActivation { layer: l });
        }
        let mut a = z.mapv(|v| v.max(0.0));
        let mask = match (rates, rng.as_deref_mut()) {
            (Some(rates), Some(rng)) if rates[l] > 0.0 => {
                let m = dropout_mask(a.dim(), rates[l], rng);
                a *= &m;
                Some(m)
            }
            _ => None,
        };
        pre.push(z);
        post.push(a);
        masks.push(mask);
    }
    let last = post.last().map(|a| a.view()).unwrap_or(x);
    let mut logits = affine(last, params.layers.last().unwrap());
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(MlpError::NonFiniteActivation { layer: n_hidden });
    }
    softmax_rows(&mut logits);
    let probs = logits;
    let cache = ForwardCache {
        input: x.to_owned(),
        pre,
        post,
        masks,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

/// Eval-mode probabilities.
pub fn predict_proba(params: &MlpParams, x: ArrayView2<f64>) -> Result<Array2<f64>, MlpError> {
    forward(params, x, Mode::Eval).map(|(p, _)| p)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn backward(cache: &ForwardCache, params: &MlpParams, grad_logits: ArrayView2<f64>) -> Result<MlpGrads, MlpError> {
    let n_hidden = params.layers.len() - 1;
    if cache.pre.len() != n_hidden
        || cache.post.len() != n_hidden
        || cache.masks.len() != n_hidden
        || grad_logits.dim() != cache.probs.dim()
        || cache.input.ncols() != params.d_in()
        || cache.probs.ncols() != params.classes()
        || cache
            .pre
            .iter()
            .zip(&params.layers)
            .any(|(z, l)| z.ncols() != l.weight.nrows() || z.nrows() != cache.input.nrows())
    {
        return Err(MlpError::CacheMismatch);
    }

    let mut grads: Vec<Dense> = Vec::with_capacity(params.layers.len());
    let mut g = grad_logits.to_owned();
    for l in (0..params.layers.len()).rev() {
        let a_prev = if l == 0 { cache.input.view() } else { cache.post[l - 1].view() };
        let weight = g.t().dot(&a_prev);
        let bias = g.sum_axis(Axis(0));
        if l > 0 {
            let mut upstream = g.dot(&params.layers[l].weight);
            if let Some(mask) = &cache.masks[l - 1] {
                upstream *= mask;
            }
            Zip::from(&mut upstream)
                .and(&cache.pre[l - 1])
                .for_each(|u, &z| {
                    if z <= 0.0 {
                        *u = 0.0;
                    }
                });
            g = upstream;
        }
        grads.push(Dense { weight, bias });
    }
    grads.reverse();
    Ok(MlpGrads { layers: grads })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub step: u64,
    pub m: Vec<Dense>,
    pub v: Vec<Dense>,
}

impl OptState {
    pub fn new(params: &MlpParams) -> Self {
        let zeros: Vec<Dense> = params.layers.iter().map(Dense::zeros_like).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// Adam update of a flat tensor at (1-based) step `t`.
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &OptConfig) {
    let c1 = 1.0 - cfg.beta1.powf(t as f64);
    let c2 = 1.0 - cfg.beta2.powf(t as f64);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

pub fn optimizer_step(params: &mut MlpParams, grads: &MlpGrads, state: &mut OptState, cfg: &OptConfig) {
    state.step += 1;
    let t = state.step;
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        adam_update(
            p.weight.as_slice_mut().expect("standard layout"),
            g.weight.as_slice().expect("standard layout"),
            m.weight.as_slice_mut().expect("standard layout"),
            v.weight.as_slice_mut().expect("standard layout"),
            t,
            cfg,
        );
        adam_update(
            p.bias.as_slice_mut().unwrap(),
            g.bias.as_slice().unwrap(),
            m.bias.as_slice_mut().unwrap(),
            v.bias.as_slice_mut().unwrap(),
            t,
            cfg,
        );
    }
}

/// Stacks fused features into a `[B × d]` matrix.
pub fn stack_features(features: &[FusedFeature]) -> Result<Array2<f64>, MlpError> {
    let d = features.first().map(|f| f.values.len()).unwrap_or(0);
    let mut out = Array2::zeros((features.len(), d));
    for (mut row, f) in out.rows_mut().into_iter().zip(features) {
        if f.values.len() != d {
            return Err(MlpError::DimMismatch {
                expected: d,
                found: f.values.len(),
            });
        }
        row.assign(&ndarray::ArrayView1::from(&f.values));
    }
    Ok(out)
}

/// Header line of a checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub d_in: usize,
    pub h1: Option<usize>,
    pub h2: Option<usize>,
    #[serde(rename = "C")]
    pub classes: usize,
    pub hidden: Vec<usize>,
    pub loss_config: Option<LossConfig>,
    pub metadata: serde_json::Value,
}

/// Classifier weights plus the configuration that produced them.
///
/// File layout: the JSON header on one line terminated by `\n`, then every
/// tensor as little-endian f64 in layer order (W1, b1, W2, b2, ...), weights
/// row-major `[out × in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub loss_config: Option<LossConfig>,
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn header(&self) -> CheckpointHeader {
        let hidden = self.params.hidden_sizes();
        CheckpointHeader {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            d_in: self.params.d_in(),
            h1: hidden.first().copied(),
            h2: hidden.get(1).copied(),
            classes: self.params.classes(),
            hidden,
            loss_config: self.loss_config.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), MlpError> {
        let header = serde_json::to_string(&self.header()).map_err(|e| MlpError::Checkpoint(e.to_string()))?;
        w.write_all(header.as_bytes())?;
        w.write_all(b"\n")?;
        let mut buf = Vec::new();
        for layer in &self.params.layers {
            for v in layer.weight.iter().chain(layer.bias.iter()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MlpError> {
        let bad = |m: &str| MlpError::Checkpoint(m.to_string());
        let newline = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[..newline]).map_err(|e| MlpError::Checkpoint(e.to_string()))?;
        if header.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(MlpError::Checkpoint(format!(
                "unsupported schema version {}",
                header.schema_version
            )));
        }
        let mut params = MlpParams::zeros(header.d_in, &header.hidden, header.classes);
        let expected: usize = params.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum();
        let body = &bytes[newline + 1..];
        if body.len() != expected * 8 {
            return Err(MlpError::Checkpoint(format!(
                "tensor payload is {} bytes, expected {}",
                body.len(),
                expected * 8
            )));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for layer in &mut params.layers {
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = values.next().unwrap();
            }
        }
        Ok(Self {
            params,
            loss_config: header.loss_config,
            metadata: header.metadata,
        })
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, MlpError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
