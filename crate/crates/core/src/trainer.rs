//! Classifier training: per-epoch focusing-parameter schedule, stratified
//! validation split, early stopping on validation macro-F1, k-fold driver.
//!
//! Seeds derive from `TrainConfig::seed`: weight init uses `seed`, batch
//! shuffling `seed + 1`, dropout `seed + 2`, the validation split `seed + 3`.
//! Cross-validation trains fold `k` with `seed + k`.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_label_folds, CorpusError, FoldPlan, Label};
use crate::fusion::FusedFeature;
use crate::loss::{self, LossConfig, LossError, WeightScheme};
use crate::metrics::{self, AggregateReport, MetricsError, MetricsReport};
use crate::mlp::{self, Checkpoint, MlpError, MlpParams, Mode, OptConfig, OptState, DEFAULT_DROPOUT, DEFAULT_HIDDEN};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("need at least {needed} labelled examples (2 x batch size), got {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("label {0} is outside the model's class space")]
    UnknownClass(Label),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Afc,
    CrossEntropy,
}

/// Prior class distribution for the domain term.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    /// Class frequencies of the training split.
    #[default]
    Empirical,
    Uniform,
    /// Explicit probabilities in class-space order.
    Explicit(Vec<f64>),
}

/// Loss hyperparameters before class statistics are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSpec {
    pub gamma_base: f64,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub weights: WeightScheme,
    pub target: TargetSpec,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            gamma_base: 2.0,
            eta: 1.0,
            alpha: 1.0,
            beta: 0.1,
            lambda: 0.1,
            weights: WeightScheme::InverseFrequency,
            target: TargetSpec::Empirical,
        }
    }
}

impl LossSpec {
    /// Concrete loss config for `classes` given training-split counts.
    /// A class absent from the split gets a pseudo-count of 1 in the
    /// empirical prior so the prior stays strictly positive.
    pub fn resolve(&self, counts: &BTreeMap<Label, usize>, classes: &[Label]) -> Result<LossConfig, TrainError> {
        let class_weights = loss::class_weights(counts, classes, self.weights)?;
        let target_distribution = match &self.target {
            TargetSpec::Empirical => {
                let raw: Vec<f64> = classes
                    .iter()
                    .map(|l| counts.get(l).copied().unwrap_or(0).max(1) as f64)
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|c| c / total).collect()
            }
            TargetSpec::Uniform => vec![1.0 / classes.len() as f64; classes.len()],
            TargetSpec::Explicit(q) => q.clone(),
        };
        let cfg = LossConfig {
            class_weights,
            gamma_base: self.gamma_base,
            eta: self.eta,
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            target_distribution,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Dropout rate after each hidden layer.
    pub dropout: Vec<f64>,
    pub opt: OptConfig,
    pub loss: LossSpec,
    pub objective: Objective,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            seed: 42,
            hidden: DEFAULT_HIDDEN.to_vec(),
            dropout: DEFAULT_DROPOUT.to_vec(),
            opt: OptConfig::default(),
            loss: LossSpec::default(),
            objective: Objective::Afc,
            early_stop_patience: 5,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return bad(format!("val_fraction must lie in (0, 0.5), got {}", self.val_fraction));
        }
        if self.hidden.is_empty() || self.hidden.len() > 3 || self.hidden.contains(&0) {
            return bad(format!("hidden must list 1 to 3 positive sizes, got {:?}", self.hidden));
        }
        if self.dropout.len() != self.hidden.len() {
            return bad(format!(
                "{} dropout rates for {} hidden layers",
                self.dropout.len(),
                self.hidden.len()
            ));
        }
        if self.dropout.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return bad(format!("dropout rates must lie in [0, 1), got {:?}", self.dropout));
        }
        let o = &self.opt;
        if !(o.lr > 0.0 && o.lr.is_finite() && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return bad(format!("invalid optimizer settings {o:?}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub focal: f64,
    pub conf: f64,
    pub domain: f64,
    pub val_acc: f64,
    pub val_macro_f1: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Last completed epoch (zero-based).
    pub epoch: usize,
    pub gamma: f64,
    pub best_val_metric: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    /// One JSON object per epoch.
    pub fn write_run_log(&self, mut w: impl Write) -> std::io::Result<()> {
        for rec in &self.history {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Checkpoint metadata written by the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub classes: Vec<Label>,
    pub objective: Objective,
    pub best_epoch: usize,
    pub train_config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub classes: Vec<Label>,
    pub state: TrainState,
}

impl TrainedModel {
    pub fn params(&self) -> &MlpParams {
        &self.checkpoint.params
    }
}

/// Class list stored in a checkpoint; a bare 3-class checkpoint maps to all labels.
pub fn checkpoint_classes(ckpt: &Checkpoint) -> Result<Vec<Label>, TrainError> {
    if let Some(v) = ckpt.metadata.get("classes") {
        let classes: Vec<Label> = serde_json::from_value(v.clone())
            .map_err(|e| TrainError::InvalidConfig(format!("checkpoint classes: {e}")))?;
        if classes.len() != ckpt.params.classes() {
            return Err(TrainError::InvalidConfig(format!(
                "checkpoint lists {} classes but has {} outputs",
                classes.len(),
                ckpt.params.classes()
            )));
        }
        return Ok(classes);
    }
    if ckpt.params.classes() == Label::ALL.len() {
        return Ok(Label::ALL.to_vec());
    }
    Err(TrainError::InvalidConfig("checkpoint does not record its classes".into()))
}

/// Sorted distinct labels.
pub fn class_space(labels: &[Label]) -> Vec<Label> {
    let mut out: Vec<Label> = labels.to_vec();
    out.sort();
    out.dedup();
    out
}

fn class_indices(labels: &[Label], classes: &[Label]) -> Result<Vec<usize>, TrainError> {
    labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).ok_or(TrainError::UnknownClass(*l)))
        .collect()
}

/// Stratified seeded split into (train, validation) row indices, each sorted.
pub fn split_validation(y: &[usize], classes: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut group in by_class {
        group.shuffle(&mut rng);
        let k = (group.len() as f64 * fraction).round() as usize;
        let k = k.min(group.len().saturating_sub(1));
        val.extend_from_slice(&group[..k]);
        train.extend_from_slice(&group[k..]);
    }
    if val.is_empty() && train.len() > 1 {
        let pick = rand::Rng::random_range(&mut rng, 0..train.len());
        val.push(train.swap_remove(pick));
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn predict(params: &MlpParams, x: ArrayView2<f64>) -> Result<Vec<usize>, MlpError> {
    let mut out = Vec::with_capacity(x.nrows());
    for chunk in x.axis_chunks_iter(Axis(0), 512) {
        out.extend(mlp::argmax_rows(&mlp::predict_proba(params, chunk)?));
    }
    Ok(out)
}

fn class_names(classes: &[Label]) -> Vec<String> {
    classes.iter().map(|l| l.name().to_string()).collect()
}

/// Argmax predictions scored against gold labels.
pub fn evaluate_matrix(
    params: &MlpParams,
    classes: &[Label],
    x: ArrayView2<f64>,
    labels: &[Label],
) -> Result<MetricsReport, TrainError> {
    if x.nrows() != labels.len() {
        return Err(TrainError::LengthMismatch {
            features: x.nrows(),
            labels: labels.len(),
        });
    }
    if classes.len() != params.classes() {
        return Err(TrainError::InvalidConfig(format!(
            "{} class names for {} outputs",
            classes.len(),
            params.classes()
        )));
    }
    let golds = class_indices(labels, classes)?;
    let preds = predict(params, x)?;
    Ok(metrics::report(&metrics::confusion(&golds, &preds, &class_names(classes))?)?)
}

pub fn evaluate(model: &TrainedModel, features: &[FusedFeature], labels: &[Label]) -> Result<MetricsReport, TrainError> {
    let x = mlp::stack_features(features)?;
    evaluate_matrix(model.params(), &model.classes, x.view(), labels)
}

/// Trains on the labels' own class space.
pub fn train(features: &[FusedFeature], labels: &[Label], cfg: &TrainConfig) -> Result<TrainedModel, TrainError> {
    if features.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let x = mlp::stack_features(features)?;
    train_matrix(x.view(), labels, &class_space(labels), cfg)
}

struct EpochTotals {
    loss: f64,
    focal: f64,
    conf: f64,
    domain: f64,
}

/// Trains over an explicit class space (which may include classes absent
/// from `labels`).
pub fn train_matrix(
    x: ArrayView2<f64>,
    labels: &[Label],
    classes: &[Label],
    cfg: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    cfg.validate()?;
    if x.nrows() != labels.len() {
        return Err(TrainError::LengthMismatch {
            features: x.nrows(),
            labels: labels.len(),
        });
    }
    let needed = 2 * cfg.batch_size;
    if labels.len() < needed {
        return Err(TrainError::InsufficientData {
            needed,
            found: labels.len(),
        });
    }
    if classes.is_empty() {
        return Err(TrainError::InvalidConfig("empty class space".into()));
    }
    let c = classes.len();
    let y = class_indices(labels, classes)?;

    let (train_idx, val_idx) = split_validation(&y, c, cfg.val_fraction, cfg.seed.wrapping_add(3));
    let x_train = x.select(Axis(0), &train_idx);
    let y_train: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
    let x_val = x.select(Axis(0), &val_idx);
    let y_val: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();
    let names = class_names(classes);

    let mut counts = BTreeMap::new();
    for &k in &y_train {
        *counts.entry(classes[k]).or_insert(0usize) += 1;
    }
    let loss_cfg = cfg.loss.resolve(&counts, classes)?;

    let mut params = mlp::init_params(x.ncols(), &cfg.hidden, c, cfg.seed)?;
    let mut opt = OptState::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));

    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut history: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, MlpParams)> = None;
    let mut stale = 0usize;
    let mut gamma = cfg.loss.gamma_base;

    for epoch in 0..cfg.epochs {
        gamma = match history.last() {
            Some(prev) => loss::update_gamma(loss_cfg.gamma_base, loss_cfg.eta, prev.val_acc),
            None => loss_cfg.gamma_base,
        };
        order.shuffle(&mut shuffle_rng);
        let mut totals = EpochTotals {
            loss: 0.0,
            focal: 0.0,
            conf: 0.0,
            domain: 0.0,
        };
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            let non_finite = TrainError::NonFiniteLoss { epoch, batch };
            let xb = x_train.select(Axis(0), rows);
            let yb: Vec<usize> = rows.iter().map(|&r| y_train[r]).collect();
            let targets = loss::one_hot(&yb, c);
            let (probs, cache) = match mlp::forward(
                &params,
                xb.view(),
                Mode::Train {
                    rates: &cfg.dropout,
                    rng: &mut dropout_rng,
                },
            ) {
                Ok(v) => v,
                Err(MlpError::NonFiniteActivation { .. }) => return Err(non_finite),
                Err(e) => return Err(e.into()),
            };
            let (value, grad, comps) = match cfg.objective {
                Objective::Afc => {
                    let out = loss::afc_loss(probs.view(), targets.view(), &loss_cfg, gamma)?;
                    (out.value, out.grad, out.components)
                }
                Objective::CrossEntropy => {
                    let out = loss::cross_entropy(probs.view(), targets.view())?;
                    (out.value, out.grad, loss::AfcComponents::default())
                }
            };
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(non_finite);
            }
            let grads = mlp::backward(&cache, &params, grad.view())?;
            mlp::optimizer_step(&mut params, &grads, &mut opt, &cfg.opt);
            if !params.all_finite() {
                return Err(non_finite);
            }
            let n = rows.len() as f64;
            totals.loss += value * n;
            totals.focal += comps.focal * n;
            totals.conf += comps.conf * n;
            totals.domain += comps.domain * n;
        }
        let n = train_idx.len() as f64;
        let preds = predict(&params, x_val.view())?;
        let report = metrics::report(&metrics::confusion(&y_val, &preds, &names)?)?;
        let rec = EpochRecord {
            epoch,
            train_loss: totals.loss / n,
            focal: totals.focal / n,
            conf: totals.conf / n,
            domain: totals.domain / n,
            val_acc: report.accuracy,
            val_macro_f1: report.macro_avg.f1,
            gamma,
        };
        log::debug!(
            "epoch {epoch}: loss {:.5} val_acc {:.4} val_f1 {:.4} gamma {:.3}",
            rec.train_loss,
            rec.val_acc,
            rec.val_macro_f1,
            gamma
        );
        let prev_best = best.as_ref().map(|b| b.0);
        history.push(rec);
        // ties move the checkpoint forward but do not reset patience
        if prev_best.is_none_or(|m| report.macro_avg.f1 >= m) {
            best = Some((report.macro_avg.f1, epoch, params.clone()));
        }
        if prev_best.is_none_or(|m| report.macro_avg.f1 > m) {
            stale = 0;
        } else {
            stale += 1;
            if cfg.early_stop_patience > 0 && stale >= cfg.early_stop_patience {
                break;
            }
        }
    }

    let (best_val_metric, best_epoch, best_params) = best.expect("at least one epoch ran");
    let metadata = ModelMetadata {
        classes: classes.to_vec(),
        objective: cfg.objective,
        best_epoch,
        train_config: cfg.clone(),
    };
    let checkpoint = Checkpoint {
        params: best_params,
        loss_config: Some(loss_cfg),
        metadata: serde_json::to_value(&metadata).expect("metadata serializes"),
    };
    Ok(TrainedModel {
        checkpoint,
        classes: classes.to_vec(),
        state: TrainState {
            epoch: history.len() - 1,
            gamma,
            best_val_metric,
            best_epoch,
            history,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub train_set_size: usize,
    pub test_set_size: usize,
    pub report: MetricsReport,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalResult {
    pub n_folds: usize,
    pub seed: u64,
    pub classes: Vec<Label>,
    pub folds: Vec<FoldResult>,
    pub aggregate: AggregateReport,
}

/// k-fold cross-validation over pre-computed features. Folds are
/// stratified and seeded with `cfg.seed`; the class space is taken from the
/// whole dataset so every fold model shares it.
pub fn crossval(
    features: &[FusedFeature],
    labels: &[Label],
    n_folds: usize,
    cfg: &TrainConfig,
) -> Result<CrossvalResult, TrainError> {
    if features.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let x = mlp::stack_features(features)?;
    let tagged: Vec<Option<Label>> = labels.iter().copied().map(Some).collect();
    let plan = make_label_folds(&tagged, n_folds, true, cfg.seed)?;
    crossval_with_plan(x.view(), labels, &plan, cfg, |_, _| Ok(()))
}

/// Runs every fold of `plan`. `on_fold` sees each trained model (for
/// persisting checkpoints) before the next fold starts.
pub fn crossval_with_plan(
    x: ArrayView2<f64>,
    labels: &[Label],
    plan: &FoldPlan,
    cfg: &TrainConfig,
    mut on_fold: impl FnMut(usize, &TrainedModel) -> Result<(), TrainError>,
) -> Result<CrossvalResult, TrainError> {
    let classes = class_space(labels);
    let mut folds = Vec::with_capacity(plan.n_folds);
    for k in 0..plan.n_folds {
        let train_idx = plan.train_indices(k);
        let test_idx = plan.test_indices(k);
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..cfg.clone()
        };
        let y_train: Vec<Label> = train_idx.iter().map(|&i| labels[i]).collect();
        let y_test: Vec<Label> = test_idx.iter().map(|&i| labels[i]).collect();
        let model = train_matrix(x.select(Axis(0), &train_idx).view(), &y_train, &classes, &fold_cfg)?;
        let report = evaluate_matrix(model.params(), &classes, x.select(Axis(0), &test_idx).view(), &y_test)?;
        log::info!("fold {k}: macro-F1 {:.4}", report.macro_avg.f1);
        on_fold(k, &model)?;
        folds.push(FoldResult {
            fold_index: k,
            train_set_size: train_idx.len(),
            test_set_size: test_idx.len(),
            report,
            history: model.state.history,
        });
    }
    let aggregate = metrics::aggregate(folds.iter().map(|f| &f.report))?;
    Ok(CrossvalResult {
        n_folds: plan.n_folds,
        seed: cfg.seed,
        classes,
        folds,
        aggregate,
    })
}

/// Stacks features into a matrix, checking equal lengths.
pub fn feature_matrix(features: &[FusedFeature]) -> Result<ndarray::Array2<f64>, TrainError> {
    Ok(mlp::stack_features(features)?)
}
