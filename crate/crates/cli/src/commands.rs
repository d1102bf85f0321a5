use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use tsrcdf::corpus::{load_dataset_auto, make_folds, Dataset};
use tsrcdf::embeddings::{
    CachedEncoder, EmbeddingProvider, EncoderFinetuner, HashEncoder, RemoteEncoder, RemoteEncoderService,
    StoreProvider, VectorStore,
};
use tsrcdf::fsio;
use tsrcdf::fusion::{FusionConfig, FusionMode};
use tsrcdf::metrics::{render_table, AggregateReport, MetricsReport};
use tsrcdf::mlp::Checkpoint;
use tsrcdf::pipeline::{gold_labels, Featurizer};
use tsrcdf::trainer::{self, checkpoint_classes, evaluate_matrix, feature_matrix};
use tsrcdf::transfer::{run_transfer, target_only_baseline, ArtifactDir, EncoderMode, TransferPlan};

use crate::args::{Command, EncoderArgs, ProviderKind, RoleArg, RunArgs};
use crate::config::{read_json, PlanFile, RunConfig, DEFAULT_DIM, DEFAULT_FOLDS};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Encode {
            dataset,
            role,
            out,
            encoder,
        } => encode(&dataset, role, &out, &encoder),
        Command::Train {
            dataset,
            out,
            log,
            run,
            encoder,
        } => train(&dataset, &out, log.as_deref(), &run, &encoder),
        Command::Eval {
            dataset,
            model,
            out,
            encoder,
        } => eval(&dataset, &model, &out, &encoder),
        Command::Folds {
            dataset,
            folds,
            plan_only,
            out,
            run,
            encoder,
        } => folds_cmd(&dataset, folds, plan_only, &out, &run, &encoder),
        Command::Transfer {
            plan,
            source,
            target,
            folds,
            frozen,
            finetune,
            baseline,
            out,
            run,
            encoder,
        } => transfer(
            TransferArgs {
                plan,
                source,
                target,
                folds,
                frozen,
                finetune,
                baseline,
            },
            &out,
            &run,
            &encoder,
        ),
        Command::Report { input, out } => report(&input, out.as_deref()),
    }
}

fn load(path: &Path) -> Result<Dataset> {
    Ok(load_dataset_auto(path)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    fsio::write_bytes_atomic(path, &bytes).map_err(|e| CliError::io(path, e))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Encoders for the requested provider, plus their model ids.
struct Encoders {
    featurizer: Featurizer,
    model_ids: Vec<String>,
    dim: usize,
}

fn remote_url(args: &EncoderArgs) -> Result<&str> {
    args.encoder_url
        .as_deref()
        .ok_or_else(|| CliError::Usage("remote provider needs --encoder-url or TSRCDF_ENCODER_URL".into()))
}

/// Provider for one role, without any cache in front.
fn raw_provider(args: &EncoderArgs, cfg: &RunConfig, role: RoleArg) -> Result<Box<dyn EmbeddingProvider>> {
    let (seed, file, remote_name) = match role {
        RoleArg::A => (1, "a.vec", &cfg.remote_models.a),
        RoleArg::B => (2, "b.vec", &cfg.remote_models.b),
    };
    Ok(match args.provider {
        ProviderKind::Hash => {
            let dim = args.dim.or(cfg.dim).unwrap_or(DEFAULT_DIM);
            if dim == 0 {
                return Err(CliError::Usage("--dim must be at least 1".into()));
            }
            Box::new(HashEncoder::with_default_id(dim, seed))
        }
        ProviderKind::File => {
            let dir = args
                .cache
                .as_ref()
                .ok_or_else(|| CliError::Usage("file provider needs --cache DIR".into()))?;
            Box::new(StoreProvider::open(&dir.join(file))?)
        }
        ProviderKind::Remote => Box::new(RemoteEncoder::discover(remote_url(args)?, remote_name)?),
    })
}

fn cached(args: &EncoderArgs, provider: Box<dyn EmbeddingProvider>, role: RoleArg) -> Result<CachedEncoder> {
    match (&args.cache, args.provider) {
        (Some(dir), ProviderKind::Hash | ProviderKind::Remote) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            let file = dir.join(if role == RoleArg::A { "a.vec" } else { "b.vec" });
            let store = VectorStore::open(&file, provider.model_id(), provider.dim())?;
            Ok(CachedEncoder::new(provider, store))
        }
        _ => Ok(CachedEncoder::uncached(provider)),
    }
}

fn encoders(args: &EncoderArgs, cfg: &RunConfig) -> Result<Encoders> {
    let fusion: FusionConfig = cfg.fusion(args.fusion);
    let a = cached(args, raw_provider(args, cfg, RoleArg::A)?, RoleArg::A)?;
    let b = match fusion.mode {
        FusionMode::SixElement => Some(cached(args, raw_provider(args, cfg, RoleArg::B)?, RoleArg::B)?),
        FusionMode::ThreeElement => None,
    };
    let dim = a.dim();
    let model_ids = std::iter::once(&a).chain(b.as_ref()).map(|e| e.model_id().to_string()).collect();
    Ok(Encoders {
        featurizer: Featurizer::new(a, b, fusion),
        model_ids,
        dim,
    })
}

fn encoder_record(args: &EncoderArgs, enc: &Encoders) -> Value {
    json!({
        "provider": args.provider,
        "encoder_url": args.encoder_url,
        "cache": args.cache.as_deref().map(path_str),
        "models": enc.model_ids,
        "dim": enc.dim,
        "fusion": enc.featurizer.fusion,
    })
}

fn encode(datasets: &[PathBuf], role: RoleArg, out: &Path, args: &EncoderArgs) -> Result<()> {
    if args.provider == ProviderKind::File {
        return Err(CliError::Usage("encode needs the hash or remote provider".into()));
    }
    let cfg = RunConfig::default();
    let provider = raw_provider(args, &cfg, role)?;
    let mut seen = BTreeSet::new();
    let mut texts: Vec<String> = Vec::new();
    for path in datasets {
        for p in load(path)?.pairs() {
            for t in [&p.text1, &p.text2] {
                if seen.insert(t.clone()) {
                    texts.push(t.clone());
                }
            }
        }
    }

    let dir = match out.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::io(out, e))?
        .into_temp_path();
    if out.exists() {
        std::fs::copy(out, &tmp).map_err(|e| CliError::io(out, e))?;
    }
    let store = VectorStore::open(&tmp, provider.model_id(), provider.dim())?;
    let enc = CachedEncoder::new(provider, store);
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    enc.resolve(&refs)?;
    let stored = enc.store().len();
    drop(enc);
    tmp.persist(out).map_err(|e| CliError::io(out, e.error))?;
    println!("{}", json!({"out": path_str(out), "sentences": texts.len(), "records": stored}));
    Ok(())
}

fn train(dataset: &Path, out: &Path, log_path: Option<&Path>, run: &RunArgs, args: &EncoderArgs) -> Result<()> {
    let cfg = RunConfig::load(run)?;
    cfg.train.validate()?;
    let data = load(dataset)?;
    let enc = encoders(args, &cfg)?;
    let features = enc.featurizer.featurize(&data)?;
    let labels = gold_labels(&data)?;
    let mut model = trainer::train(&features, &labels, &cfg.train)?;
    let config = json!({
        "command": "train",
        "dataset": path_str(dataset),
        "seed": cfg.seed(),
        "encoder": encoder_record(args, &enc),
        "train_config": cfg.train,
    });
    if let Value::Object(m) = &mut model.checkpoint.metadata {
        m.insert("run_config".into(), config);
    }
    fsio::write_bytes_atomic(out, &model.checkpoint.to_bytes()).map_err(|e| CliError::io(out, e))?;
    if let Some(p) = log_path {
        fsio::write_atomic(p, |w| model.state.write_run_log(w)).map_err(|e| CliError::io(p, e))?;
    }
    println!(
        "{}",
        json!({"out": path_str(out), "epochs_run": model.state.history.len(), "best_epoch": model.state.best_epoch})
    );
    Ok(())
}

fn eval(dataset: &Path, model_path: &Path, out: &Path, args: &EncoderArgs) -> Result<()> {
    let bytes = std::fs::read(model_path).map_err(|e| CliError::io(model_path, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;
    let classes = checkpoint_classes(&ckpt)?;
    let cfg = RunConfig::default();
    let data = load(dataset)?;
    let enc = encoders(args, &cfg)?;
    let x = feature_matrix(&enc.featurizer.featurize(&data)?)?;
    let labels = gold_labels(&data)?;
    let report = evaluate_matrix(&ckpt.params, &classes, x.view(), &labels)?;
    let config = json!({
        "command": "eval",
        "dataset": path_str(dataset),
        "model": path_str(model_path),
        "encoder": encoder_record(args, &enc),
        "model_run_config": ckpt.metadata.get("run_config"),
    });
    write_json(out, &json!({"config": config, "report": report}))?;
    println!("{}", json!({"out": path_str(out), "macro_f1": report.macro_avg.f1}));
    Ok(())
}

fn folds_cmd(dataset: &Path, folds: Option<usize>, plan_only: bool, out: &Path, run: &RunArgs, args: &EncoderArgs) -> Result<()> {
    let cfg = RunConfig::load(run)?;
    let n_folds = folds.or(cfg.folds).unwrap_or(DEFAULT_FOLDS);
    let data = load(dataset)?;
    let mut config = json!({
        "command": "folds",
        "dataset": path_str(dataset),
        "n_folds": n_folds,
        "seed": cfg.seed(),
    });
    if plan_only {
        let plan = make_folds(&data, n_folds, true, cfg.seed())?;
        write_json(out, &json!({"config": config, "plan": plan}))?;
        println!("{}", json!({"out": path_str(out), "fold_sizes": plan.fold_sizes()}));
        return Ok(());
    }
    cfg.train.validate()?;
    let enc = encoders(args, &cfg)?;
    let features = enc.featurizer.featurize(&data)?;
    let labels = gold_labels(&data)?;
    let result = trainer::crossval(&features, &labels, n_folds, &cfg.train)?;
    config["encoder"] = encoder_record(args, &enc);
    config["train_config"] = json!(cfg.train);
    write_json(out, &json!({"config": config, "result": result}))?;
    println!("{}", json!({"out": path_str(out), "macro_f1": result.aggregate.macro_f1.mean}));
    Ok(())
}

struct TransferArgs {
    plan: Option<PathBuf>,
    source: Vec<PathBuf>,
    target: Option<PathBuf>,
    folds: Option<usize>,
    frozen: bool,
    finetune: bool,
    baseline: bool,
}

fn transfer(t: TransferArgs, out: &Path, run: &RunArgs, args: &EncoderArgs) -> Result<()> {
    let mut cfg = RunConfig::load(run)?;
    let file = t.plan.as_deref().map(PlanFile::load).transpose()?;
    let mut sources = file.as_ref().map(|f| f.source.clone()).unwrap_or_default();
    let mut target = file.as_ref().map(|f| f.target.clone());
    let mut n_folds = cfg.folds.unwrap_or(DEFAULT_FOLDS);
    let mut mode = EncoderMode::Frozen;
    let mut seed = cfg.seed();
    if let Some(f) = &file {
        if let Some(tc) = &f.train_config {
            cfg.train = tc.clone();
        }
        n_folds = f.n_folds.unwrap_or(n_folds);
        mode = f.encoder_mode.clone().unwrap_or_default();
        seed = f.seed.unwrap_or(seed);
    }
    if !t.source.is_empty() {
        sources = t.source;
    }
    if t.target.is_some() {
        target = t.target;
    }
    n_folds = t.folds.unwrap_or(n_folds);
    seed = run.seed.unwrap_or(seed);
    cfg.train.seed = if run.seed.is_some() || file.as_ref().is_some_and(|f| f.seed.is_some()) {
        seed
    } else {
        cfg.train.seed
    };
    if t.frozen {
        mode = EncoderMode::Frozen;
    } else if t.finetune {
        mode = EncoderMode::Finetune {
            roles: cfg.finetune.roles.clone(),
            params: cfg.finetune.params.clone(),
        };
    }
    let target = target.ok_or_else(|| CliError::Usage("transfer needs --target or --plan".into()))?;
    cfg.train.validate()?;

    let target_data = load(&target)?;
    let parts = sources.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let source_data = Dataset::concat("source", &parts).map_err(CliError::from)?;
    let service = match (&mode, args.provider) {
        (EncoderMode::Frozen, _) => None,
        (EncoderMode::Finetune { .. }, ProviderKind::Remote) => Some(RemoteEncoderService::new(remote_url(args)?)),
        (EncoderMode::Finetune { .. }, _) => {
            return Err(CliError::Usage("--finetune needs --provider remote".into()));
        }
    };
    let enc = encoders(args, &cfg)?;
    let plan = TransferPlan {
        source: source_data,
        target: target_data,
        n_folds,
        cfg: cfg.train.clone(),
        encoder_mode: mode,
        seed,
    };
    let config = json!({
        "command": "transfer",
        "source": sources.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
        "target": path_str(&target),
        "n_folds": n_folds,
        "seed": seed,
        "encoder_mode": plan.encoder_mode,
        "encoder": encoder_record(args, &enc),
        "train_config": plan.cfg,
    });

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let result = run_transfer(
        &plan,
        &enc.featurizer,
        service.as_ref().map(|s| s as &dyn EncoderFinetuner),
        Some(ArtifactDir(out)),
    )?;
    write_json(&out.join("transfer.json"), &json!({"config": config, "result": result}))?;
    let mut summary = json!({"out": path_str(out), "macro_f1": result.aggregate.macro_f1.mean});
    if t.baseline {
        let base = target_only_baseline(&plan.target, n_folds, &plan.cfg, seed, &enc.featurizer)?;
        let mut base_config = config.clone();
        base_config["command"] = json!("transfer-baseline");
        base_config["source"] = json!([]);
        base_config["encoder_mode"] = json!(EncoderMode::Frozen);
        write_json(&out.join("baseline.json"), &json!({"config": base_config, "result": base}))?;
        summary["baseline_macro_f1"] = json!(base.aggregate.macro_f1.mean);
    }
    println!("{summary}");
    Ok(())
}

/// Macro and weighted averages from any result file this tool writes.
fn averages_of(v: &Value, path: &Path) -> Result<(tsrcdf::metrics::Averages, tsrcdf::metrics::Averages)> {
    let bad = |what: &str| CliError::Data {
        message: format!("{}: {what}", path.display()),
        path: Some(path_str(path)),
    };
    if let Some(agg) = v.pointer("/result/aggregate").or_else(|| v.get("aggregate")) {
        let agg: AggregateReport = serde_json::from_value(agg.clone()).map_err(|e| bad(&e.to_string()))?;
        return Ok((agg.macro_means(), agg.weighted_means()));
    }
    if let Some(r) = v.get("report") {
        let r: MetricsReport = serde_json::from_value(r.clone()).map_err(|e| bad(&e.to_string()))?;
        return Ok((r.macro_avg, r.weighted));
    }
    Err(bad("no aggregate or report found"))
}

fn report(inputs: &[String], out: Option<&Path>) -> Result<()> {
    let mut rows = Vec::with_capacity(inputs.len());
    for spec in inputs {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (name, p)
            }
        };
        let v: Value = read_json(&path)?;
        let (m, w) = averages_of(&v, &path)?;
        rows.push((name, m, w));
    }
    let table = render_table(&rows);
    match out {
        Some(p) => fsio::write_bytes_atomic(p, table.as_bytes()).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
