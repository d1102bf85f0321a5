//! Adaptive focal-confidence loss and its parts.
//!
//! Every loss here takes a row-stochastic probability matrix `[B × C]` (the
//! softmax output) and returns its value together with the gradient with
//! respect to the pre-softmax logits. Per-example terms are averaged over the
//! batch; the domain term is computed once per batch from the mean
//! prediction.
//!
//! - focal: `−Σᵢ wᵢ (1 − pᵢ)^γ yᵢ ln pᵢ`
//! - confidence penalty: `Σᵢ pᵢ ln pᵢ`
//! - domain: `KL(q ‖ p_avg) = Σᵢ qᵢ ln(qᵢ / p_avg,ᵢ)`
//! - total: `α·focal + β·conf + λ·domain`

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::corpus::Label;

/// Probabilities are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-12;

const DIST_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: probabilities {probs:?}, other {other:?}")]
    ShapeMismatch { probs: (usize, usize), other: (usize, usize) },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
    #[error("all class counts are zero")]
    AllCountsZero,
}

/// All AFC hyperparameters, fully resolved for a given class space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub class_weights: Vec<f64>,
    pub gamma_base: f64,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub target_distribution: Vec<f64>,
}

impl LossConfig {
    pub fn classes(&self) -> usize {
        self.class_weights.len()
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |m: String| Err(LossError::InvalidConfig(m));
        if self.class_weights.is_empty() {
            return bad("no classes".into());
        }
        if self.class_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return bad(format!("class weights must be positive: {:?}", self.class_weights));
        }
        if self.target_distribution.len() != self.class_weights.len() {
            return bad(format!(
                "{} class weights but {} target probabilities",
                self.class_weights.len(),
                self.target_distribution.len()
            ));
        }
        if !(self.gamma_base >= 0.0 && self.gamma_base.is_finite()) || !self.eta.is_finite() {
            return bad(format!("gamma_base {} / eta {}", self.gamma_base, self.eta));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("lambda", self.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        check_distribution(self.target_distribution.iter().copied(), "target distribution")
    }
}

fn check_distribution(values: impl Iterator<Item = f64>, what: &str) -> Result<(), LossError> {
    let mut sum = 0.0;
    for v in values {
        if !(v > 0.0 && v.is_finite()) {
            return Err(LossError::InvalidDistribution(format!("{what} has entry {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > DIST_TOL {
        return Err(LossError::InvalidDistribution(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// Loss value and gradient with respect to logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Array2<f64>,
}

/// Per-component values of one AFC evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AfcComponents {
    pub focal: f64,
    pub conf: f64,
    pub domain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfcOutput {
    pub value: f64,
    pub grad: Array2<f64>,
    pub components: AfcComponents,
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn same_shape(probs: &ArrayView2<f64>, other: &ArrayView2<f64>) -> Result<(), LossError> {
    if probs.dim() != other.dim() {
        return Err(LossError::ShapeMismatch {
            probs: probs.dim(),
            other: other.dim(),
        });
    }
    Ok(())
}

/// Chains `∂L/∂p` through the softmax: `∂L/∂zⱼ = pⱼ (gⱼ − Σₖ pₖ gₖ)`.
pub fn softmax_backward(probs: ArrayView2<f64>, grad_probs: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    Zip::from(out.rows_mut())
        .and(probs.rows())
        .and(grad_probs.rows())
        .for_each(|mut o, p, g| {
            let dot = p.dot(&g);
            Zip::from(&mut o).and(&p).and(&g).for_each(|o, &p, &g| *o = p * (g - dot));
        });
    out
}

/// Class-weighted focal loss, batch mean.
pub fn focal_loss(
    probs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    weights: &[f64],
    gamma: f64,
) -> Result<LossOutput, LossError> {
    same_shape(&probs, &targets)?;
    if weights.len() != probs.ncols() {
        return Err(LossError::ShapeMismatch {
            probs: probs.dim(),
            other: (1, weights.len()),
        });
    }
    let batch = probs.nrows() as f64;
    let mut value = 0.0;
    let mut grad_p = Array2::zeros(probs.raw_dim());
    for ((p_row, y_row), mut g_row) in probs.rows().into_iter().zip(targets.rows()).zip(grad_p.rows_mut()) {
        for i in 0..p_row.len() {
            let y = y_row[i];
            if y == 0.0 {
                continue;
            }
            let p = clamp(p_row[i]);
            let w = weights[i];
            let one_minus = 1.0 - p;
            let modulator = one_minus.powf(gamma);
            let ln_p = p.ln();
            value -= w * modulator * y * ln_p;
            // d/dp of −w y (1−p)^γ ln p
            let d_mod = if gamma == 0.0 { 0.0 } else { -gamma * one_minus.powf(gamma - 1.0) };
            g_row[i] = -w * y * (d_mod * ln_p + modulator / p) / batch;
        }
    }
    Ok(LossOutput {
        value: value / batch,
        grad: softmax_backward(probs, grad_p.view()),
    })
}

/// Categorical cross-entropy, batch mean. Baseline objective.
pub fn cross_entropy(probs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<LossOutput, LossError> {
    same_shape(&probs, &targets)?;
    let batch = probs.nrows() as f64;
    let mut value = 0.0;
    let mut grad_p = Array2::zeros(probs.raw_dim());
    Zip::from(&mut grad_p)
        .and(&probs)
        .and(&targets)
        .for_each(|g, &p, &y| {
            if y != 0.0 {
                let p = clamp(p);
                value -= y * p.ln();
                *g = -y / p / batch;
            }
        });
    Ok(LossOutput {
        value: value / batch,
        grad: softmax_backward(probs, grad_p.view()),
    })
}

/// Negative entropy `Σ pᵢ ln pᵢ`, batch mean. Entries at zero contribute zero.
pub fn confidence_penalty(probs: ArrayView2<f64>) -> Result<LossOutput, LossError> {
    let batch = probs.nrows() as f64;
    let mut value = 0.0;
    let mut grad_p = Array2::zeros(probs.raw_dim());
    Zip::from(&mut grad_p).and(&probs).for_each(|g, &p| {
        let ln_p = clamp(p).ln();
        value += p * ln_p;
        *g = (ln_p + 1.0) / batch;
    });
    Ok(LossOutput {
        value: value / batch,
        grad: softmax_backward(probs, grad_p.view()),
    })
}

/// `KL(q ‖ p)` for strictly positive distributions.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> Result<f64, LossError> {
    if q.len() != p.len() {
        return Err(LossError::InvalidDistribution(format!(
            "lengths {} and {} differ",
            q.len(),
            p.len()
        )));
    }
    check_distribution(q.iter().copied(), "q")?;
    check_distribution(p.iter().copied(), "p")?;
    Ok(q.iter().zip(p).map(|(&qi, &pi)| qi * (qi / pi).ln()).sum())
}

/// Column mean of the batch probability matrix.
pub fn batch_mean(probs: ArrayView2<f64>) -> Array1<f64> {
    probs.mean_axis(Axis(0)).expect("non-empty batch")
}

/// `KL(q ‖ p_avg)` with `p_avg` the batch-mean prediction; the gradient is
/// spread back over the rows through the mean.
pub fn domain_kl(probs: ArrayView2<f64>, q: &[f64]) -> Result<LossOutput, LossError> {
    if q.len() != probs.ncols() {
        return Err(LossError::ShapeMismatch {
            probs: probs.dim(),
            other: (1, q.len()),
        });
    }
    check_distribution(q.iter().copied(), "q")?;
    let batch = probs.nrows() as f64;
    let p_avg = batch_mean(probs).mapv(clamp);
    let value = q
        .iter()
        .zip(p_avg.iter())
        .map(|(&qi, &pi)| qi * (qi / pi).ln())
        .sum();
    let row_grad: Array1<f64> = q
        .iter()
        .zip(p_avg.iter())
        .map(|(&qi, &pi)| -qi / pi / batch)
        .collect();
    let grad_p = Array2::from_shape_fn(probs.raw_dim(), |(_, j)| row_grad[j]);
    Ok(LossOutput {
        value,
        grad: softmax_backward(probs, grad_p.view()),
    })
}

/// `α·focal + β·conf + λ·domain` with components reported for logging.
pub fn afc_loss(
    probs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    cfg: &LossConfig,
    gamma: f64,
) -> Result<AfcOutput, LossError> {
    let focal = focal_loss(probs, targets, &cfg.class_weights, gamma)?;
    let conf = confidence_penalty(probs)?;
    let domain = domain_kl(probs, &cfg.target_distribution)?;
    let value = cfg.alpha * focal.value + cfg.beta * conf.value + cfg.lambda * domain.value;
    let mut grad = focal.grad * cfg.alpha;
    grad.scaled_add(cfg.beta, &conf.grad);
    grad.scaled_add(cfg.lambda, &domain.grad);
    Ok(AfcOutput {
        value,
        grad,
        components: AfcComponents {
            focal: focal.value,
            conf: conf.value,
            domain: domain.value,
        },
    })
}

/// Focusing parameter from the previous validation accuracy, floored at 0.
pub fn update_gamma(gamma_base: f64, eta: f64, accuracy_val: f64) -> f64 {
    (gamma_base + eta * accuracy_val).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Uniform,
    #[default]
    InverseFrequency,
}

/// Class weights over `classes` (in order) from label counts.
///
/// Inverse frequency gives `N / (C · countᵢ)`; a class with no examples gets
/// the largest weight among the present classes.
pub fn class_weights(
    counts: &BTreeMap<Label, usize>,
    classes: &[Label],
    scheme: WeightScheme,
) -> Result<Vec<f64>, LossError> {
    let per_class: Vec<usize> = classes
        .iter()
        .map(|l| counts.get(l).copied().unwrap_or(0))
        .collect();
    let total: usize = per_class.iter().sum();
    if total == 0 {
        return Err(LossError::AllCountsZero);
    }
    if scheme == WeightScheme::Uniform {
        return Ok(vec![1.0; classes.len()]);
    }
    let c = classes.len() as f64;
    let raw: Vec<Option<f64>> = per_class
        .iter()
        .map(|&n| (n > 0).then(|| total as f64 / (c * n as f64)))
        .collect();
    let max = raw.iter().flatten().copied().fold(f64::MIN, f64::max);
    Ok(raw.into_iter().map(|w| w.unwrap_or(max)).collect())
}

/// One-hot target matrix for class indices.
pub fn one_hot(indices: &[usize], classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), classes));
    for (r, &c) in indices.iter().enumerate() {
        out[(r, c)] = 1.0;
    }
    out
}
