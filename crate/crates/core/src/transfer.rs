//! Cross-domain transfer over a source and a target dataset.
//!
//! The target is split into `n` stratified folds. For each fold `k` the
//! adaptive training set is every source pair followed by the target pairs
//! outside fold `k`; fold `k` is the test set. Optionally each role's
//! encoder is fine-tuned on the adaptive set first (always starting from
//! the base checkpoint). A fresh classifier is trained per fold.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::{make_folds, CorpusError, Dataset, FoldPlan, Label};
use crate::embeddings::{CachedEncoder, EmbeddingError, EncoderFinetuner, EncoderRole, FinetuneParams};
use crate::fsio;
use crate::metrics::{self, AggregateReport, MetricsReport};
use crate::pipeline::{gold_labels, Featurizer, PipelineError};
use crate::trainer::{self, class_space, TrainConfig, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum TransferError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid transfer plan: {0}")]
    InvalidPlan(String),
    #[error("target label {0} does not occur in the source data")]
    LabelSpaceMismatch(Label),
    #[error("fold {fold}: test pair {id:?} appears in the training set")]
    Leak { fold: usize, id: String },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EncoderMode {
    #[default]
    Frozen,
    /// Fine-tune the listed roles on every adaptive training set.
    Finetune {
        roles: Vec<EncoderRole>,
        #[serde(default)]
        params: FinetuneParams,
    },
}

#[derive(Debug, Clone)]
pub struct TransferPlan {
    /// Source datasets concatenated in order; may be empty.
    pub source: Dataset,
    pub target: Dataset,
    pub n_folds: usize,
    pub cfg: TrainConfig,
    pub encoder_mode: EncoderMode,
    /// Seeds the target fold split. Fold `k` trains with `cfg.seed + k`.
    pub seed: u64,
}

impl TransferPlan {
    pub fn validate(&self) -> Result<Vec<Label>, TransferError> {
        if self.n_folds < 2 {
            return Err(TransferError::InvalidPlan(format!("n_folds must be >= 2, got {}", self.n_folds)));
        }
        self.cfg.validate()?;
        let source_labels = gold_labels(&self.source)?;
        let target_labels = gold_labels(&self.target)?;
        if !self.source.is_empty() {
            let known: HashSet<Label> = source_labels.iter().copied().collect();
            if let Some(l) = target_labels.iter().find(|l| !known.contains(l)) {
                return Err(TransferError::LabelSpaceMismatch(*l));
            }
        }
        let mut all = source_labels;
        all.extend(target_labels);
        Ok(class_space(&all))
    }
}

/// Source block, then the target pairs outside `test_fold`, each in
/// original order. Ids are prefixed `source/` and `target/`.
pub fn build_adaptive_train_set(
    source: &Dataset,
    target: &Dataset,
    plan: &FoldPlan,
    test_fold: usize,
) -> Result<Dataset, CorpusError> {
    let kept = target.select(target.name(), &plan.train_indices(test_fold))?;
    Dataset::concat(
        format!("{}+{}[-{test_fold}]", source.name(), target.name()),
        &[source.namespaced("source"), kept.namespaced("target")],
    )
}

fn leak_check(adaptive: &Dataset, target: &Dataset, plan: &FoldPlan, fold: usize) -> Result<(), TransferError> {
    let train_ids: HashSet<&str> = adaptive.pairs().iter().map(|p| p.id.as_str()).collect();
    for i in plan.test_indices(fold) {
        let id = format!("target/{}", target.pairs()[i].id);
        if train_ids.contains(id.as_str()) {
            return Err(TransferError::Leak { fold, id });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFold {
    pub fold_index: usize,
    pub train_set_size: usize,
    pub test_set_size: usize,
    pub leak_check_passed: bool,
    /// Fine-tuned encoder checkpoint per role; empty in frozen mode.
    pub encoder_checkpoints: BTreeMap<EncoderRole, String>,
    pub best_epoch: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub n_folds: usize,
    pub seed: u64,
    pub source_size: usize,
    pub target_size: usize,
    pub classes: Vec<Label>,
    pub encoder_mode: EncoderMode,
    /// Set when the service declined a fine-tune and the run continued frozen.
    pub fell_back_to_frozen: bool,
    pub per_fold: Vec<TransferFold>,
    pub aggregate: AggregateReport,
}

/// Where fold artifacts go. `fold-{k}.ckpt` and `fold-{k}.report.json` are
/// written atomically into `dir`.
pub struct ArtifactDir<'a>(pub &'a Path);

impl ArtifactDir<'_> {
    fn write(&self, name: String, bytes: &[u8]) -> Result<(), TransferError> {
        let path = self.0.join(name);
        fsio::write_bytes_atomic(&path, bytes).map_err(|source| TransferError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Featurizer with `roles` served by fine-tuned checkpoints of the base
/// encoders.
fn finetuned_featurizer(
    base: &Featurizer,
    service: &dyn EncoderFinetuner,
    roles: &[EncoderRole],
    adaptive: &Dataset,
    params: &FinetuneParams,
) -> Result<(Featurizer, BTreeMap<EncoderRole, String>), TransferError> {
    let mut out = base.clone();
    let mut ids = BTreeMap::new();
    for &role in roles {
        let enc = base
            .encoder(role)
            .ok_or_else(|| TransferError::InvalidPlan(format!("no encoder for role {}", role.name())))?;
        let id = service.finetune(enc.model_id(), adaptive.pairs(), params)?;
        let tuned = Arc::new(CachedEncoder::uncached(service.provider(&id, enc.dim())?));
        match role {
            EncoderRole::A => out.a = tuned,
            EncoderRole::B => out.b = Some(tuned),
        }
        ids.insert(role, id);
    }
    Ok((out, ids))
}

fn frozen_matrices(plan: &TransferPlan, fz: &Featurizer) -> Result<(Array2<f64>, Array2<f64>), TransferError> {
    let tgt = trainer::feature_matrix(&fz.featurize(&plan.target)?)?;
    let src = if plan.source.is_empty() {
        Array2::zeros((0, tgt.ncols()))
    } else {
        trainer::feature_matrix(&fz.featurize(&plan.source)?)?
    };
    Ok((src, tgt))
}

pub fn run_transfer(
    plan: &TransferPlan,
    featurizer: &Featurizer,
    service: Option<&dyn EncoderFinetuner>,
    artifacts: Option<ArtifactDir<'_>>,
) -> Result<TransferResult, TransferError> {
    let classes = plan.validate()?;
    if matches!(plan.encoder_mode, EncoderMode::Finetune { .. }) && service.is_none() {
        return Err(TransferError::InvalidPlan("fine-tune mode needs an encoder service".into()));
    }
    let folds = make_folds(&plan.target, plan.n_folds, true, plan.seed)?;
    let target_labels = gold_labels(&plan.target)?;
    let source_labels = gold_labels(&plan.source)?;

    // frozen features are computed once and sliced per fold
    let mut frozen: Option<(Array2<f64>, Array2<f64>)> = None;

    let mut fell_back = false;
    let mut per_fold = Vec::with_capacity(plan.n_folds);
    for k in 0..plan.n_folds {
        let adaptive = build_adaptive_train_set(&plan.source, &plan.target, &folds, k)?;
        leak_check(&adaptive, &plan.target, &folds, k)?;
        let train_idx = folds.train_indices(k);
        let test_idx = folds.test_indices(k);
        let expected = plan.source.len() + plan.target.len() - test_idx.len();
        if adaptive.len() != expected {
            return Err(TransferError::InvalidPlan(format!(
                "fold {k}: adaptive set has {} pairs, expected {expected}",
                adaptive.len()
            )));
        }
        let y_train: Vec<Label> = source_labels
            .iter()
            .copied()
            .chain(train_idx.iter().map(|&i| target_labels[i]))
            .collect();
        let y_test: Vec<Label> = test_idx.iter().map(|&i| target_labels[i]).collect();

        let mut tuned = None;
        if let (EncoderMode::Finetune { roles, params }, Some(svc), false) = (&plan.encoder_mode, service, fell_back) {
            match finetuned_featurizer(featurizer, svc, roles, &adaptive, params) {
                Ok(v) => tuned = Some(v),
                Err(TransferError::Embedding(EmbeddingError::FinetuneRejected { status, message })) => {
                    log::warn!("fine-tune declined ({status}: {message}); continuing with frozen encoders");
                    fell_back = true;
                }
                Err(e) => return Err(e),
            }
        }
        let (x_train, x_test, encoder_checkpoints) = match tuned {
            Some((fz, ids)) => {
                let test = plan.target.select(plan.target.name(), &test_idx)?;
                let x_train = trainer::feature_matrix(&fz.featurize(&adaptive)?)?;
                let x_test = trainer::feature_matrix(&fz.featurize(&test)?)?;
                (x_train, x_test, ids)
            }
            None => {
                if frozen.is_none() {
                    frozen = Some(frozen_matrices(plan, featurizer)?);
                }
                let (src, tgt) = frozen.as_ref().expect("just filled");
                let x_train = concatenate(Axis(0), &[src.view(), tgt.select(Axis(0), &train_idx).view()])
                    .expect("equal widths");
                (x_train, tgt.select(Axis(0), &test_idx), BTreeMap::new())
            }
        };

        let fold_cfg = TrainConfig {
            seed: plan.cfg.seed.wrapping_add(k as u64),
            ..plan.cfg.clone()
        };
        let model = trainer::train_matrix(x_train.view(), &y_train, &classes, &fold_cfg)?;
        let report = trainer::evaluate_matrix(model.params(), &classes, x_test.view(), &y_test)?;
        log::info!("transfer fold {k}: train {} test {} macro-F1 {:.4}", y_train.len(), y_test.len(), report.macro_avg.f1);
        let fold = TransferFold {
            fold_index: k,
            train_set_size: adaptive.len(),
            test_set_size: test_idx.len(),
            leak_check_passed: true,
            encoder_checkpoints,
            best_epoch: model.state.best_epoch,
            report,
        };
        if let Some(dir) = &artifacts {
            dir.write(format!("fold-{k}.ckpt"), &model.checkpoint.to_bytes())?;
            let json = serde_json::to_vec_pretty(&fold).expect("fold serializes");
            dir.write(format!("fold-{k}.report.json"), &json)?;
        }
        per_fold.push(fold);
    }
    let aggregate = metrics::aggregate(per_fold.iter().map(|f| &f.report)).map_err(TrainError::from)?;
    Ok(TransferResult {
        n_folds: plan.n_folds,
        seed: plan.seed,
        source_size: plan.source.len(),
        target_size: plan.target.len(),
        classes,
        encoder_mode: plan.encoder_mode.clone(),
        fell_back_to_frozen: fell_back,
        per_fold,
        aggregate,
    })
}

/// The same protocol with no source data.
pub fn target_only_baseline(
    target: &Dataset,
    n_folds: usize,
    cfg: &TrainConfig,
    seed: u64,
    featurizer: &Featurizer,
) -> Result<TransferResult, TransferError> {
    let plan = TransferPlan {
        source: Dataset::empty("none"),
        target: target.clone(),
        n_folds,
        cfg: cfg.clone(),
        encoder_mode: EncoderMode::Frozen,
        seed,
    };
    run_transfer(&plan, featurizer, None, None)
}
