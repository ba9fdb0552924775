use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use skelnet_core::ablation::{run_ablation, AblationConfig, Variant};
use skelnet_core::data::{
    generate_raw, load_dataset, write_dataset, write_sequence, DatasetSplit, MotionSequence, SyntheticSpec,
};
use skelnet_core::eval::{emit_report, evaluate, EvalOptions, ModelPredictor, Predictor};
use skelnet_core::models::{
    Activation, Crnn, CrnnConfig, MergeConfig, MergeMode, SequenceModel, SkelNet, SkelNetConfig,
};
use skelnet_core::numerics::{checkpoint, OptimizerConfig, OptimizerKind, ParamStore};
use skelnet_core::skeleton::{synthetic_skeleton, PartitionOptions, SchemeName, SkeletonSpec};
use skelnet_core::training::{
    horizon_frames, train_skel_tnet, train_stage, CheckpointPlan, LossKind, NoiseSpace, SkelTNet, SkelTNetConfig,
    TrainConfig, TrainLog,
};
use skelnet_core::{Error, Result, Tensor};

use crate::settings::RunConfig;

const CHECKPOINT_FORMAT: &str = "skelnet-checkpoint/1";

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn out_dir(rc: &RunConfig) -> Result<PathBuf> {
    let dir: PathBuf = rc.get("out")?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

/// Reject settings that do not apply to the chosen mode.
fn reject(rc: &RunConfig, keys: &[&str], why: &str) -> Result<()> {
    match keys.iter().find(|k| rc.explicit(k)) {
        Some(k) => Err(usage(format!("--{k} conflicts with {why}"))),
        None => Ok(()),
    }
}

fn check_data_source(rc: &RunConfig) -> Result<()> {
    match (rc.flag("synthetic")?, rc.raw("data").is_some()) {
        (true, true) => Err(usage("--data and --synthetic are mutually exclusive")),
        (false, false) => Err(usage("a dataset (--data) or --synthetic is required")),
        _ => Ok(()),
    }
}

fn skeleton(rc: &RunConfig, root: Option<&Path>) -> Result<SkeletonSpec> {
    if let Some(p) = rc.opt::<PathBuf>("skeleton")? {
        return SkeletonSpec::load(&p);
    }
    match root {
        Some(r) => SkeletonSpec::load(&r.join("skeleton.skel")),
        None => Ok(synthetic_skeleton()),
    }
}

fn synthetic_spec(rc: &RunConfig) -> Result<SyntheticSpec> {
    Ok(SyntheticSpec {
        count: rc.get("synthetic-count")?,
        length: rc.get("synthetic-length")?,
        seed: rc.get("synthetic-seed")?,
        coupling: rc.get("synthetic-coupling")?,
        ..SyntheticSpec::default()
    })
}

fn load_split(rc: &RunConfig) -> Result<DatasetSplit> {
    check_data_source(rc)?;
    let threshold: f64 = rc.get("still-threshold")?;
    match rc.opt::<PathBuf>("data")? {
        Some(root) => load_dataset(&root, &skeleton(rc, Some(&root))?, threshold),
        None => {
            let skel = skeleton(rc, None)?;
            let (train, test) = generate_raw(&synthetic_spec(rc)?, &skel)?;
            DatasetSplit::from_raw(skel, &train, &test, threshold)
        }
    }
}

fn activation(rc: &RunConfig) -> Result<Activation> {
    match rc.get::<String>("activation")?.as_str() {
        "lrelu" => Ok(Activation::Lrelu),
        "tanh" => Ok(Activation::Tanh),
        "none" => Ok(Activation::None),
        other => Err(usage(format!("unknown activation `{other}`"))),
    }
}

fn skelnet_config(
    rc: &RunConfig,
    spec: &SkeletonSpec,
    retained: &[usize],
    scheme: SchemeName,
) -> Result<SkelNetConfig> {
    let opts = PartitionOptions { global_in_torso: rc.get("global-in-torso")? };
    let cfg = SkelNetConfig {
        branch_dims: rc.list("branch-dims")?,
        activation: activation(rc)?,
        dropout_rate: rc.get("dropout")?,
        use_residual: rc.get("residual")?,
        seed_length: rc.get("seed-length")?,
        ..SkelNetConfig::new(spec.partition_with(scheme, retained, opts)?)
    };
    cfg.validate()?;
    Ok(cfg)
}

fn crnn_config(rc: &RunConfig, input_dim: usize) -> Result<CrnnConfig> {
    let cfg = CrnnConfig {
        gru_units: rc.get("gru-units")?,
        head_dims: rc.list("crnn-head")?,
        dropout_rate: rc.get("dropout")?,
        use_residual: rc.get("residual")?,
        ..CrnnConfig::new(input_dim)
    };
    cfg.validate()?;
    Ok(cfg)
}

fn merge_config(rc: &RunConfig, input_dim: usize, mode: MergeMode) -> Result<MergeConfig> {
    Ok(MergeConfig {
        hidden_dims: rc.list("merge-dims")?,
        dropout_rate: rc.get("dropout")?,
        use_residual: rc.get("residual")?,
        mode,
        ..MergeConfig::new(input_dim)
    })
}

/// Settings shared by every stage of a `train` run.
fn apply_common_train(rc: &RunConfig, tc: &mut TrainConfig, seed_frames: usize) -> Result<()> {
    tc.iterations = rc.get("iterations")?;
    tc.batch_size = rc.get("batch-size")?;
    tc.seed = rc.get("seed")?;
    tc.seed_frames = seed_frames;
    tc.noise_variance = rc.get("noise-variance")?;
    tc.noise_space = match rc.get::<String>("noise-space")?.as_str() {
        "raw" => NoiseSpace::Raw,
        _ => NoiseSpace::Standardized,
    };
    let clip: f64 = rc.get("clip-norm")?;
    tc.clip_norm = (clip > 0.0).then_some(clip);
    tc.checkpoint_every = rc.get("checkpoint-every")?;
    tc.record_wall_time = rc.flag("wall-time")?;
    tc.converging.alpha = rc.get("alpha")?;
    tc.converging.beta = rc.get("beta")?;
    tc.validate()
}

fn checkpoint_meta(rc: &RunConfig, stage: &str, model: Value, tc: &TrainConfig, split: &DatasetSplit) -> String {
    json!({
        "format": CHECKPOINT_FORMAT,
        "stage": stage,
        "model": model,
        "train": tc,
        "retained": split.stats.retained,
        "run_config": rc.to_json(),
    })
    .to_string()
}

fn write_log(rc: &RunConfig, dir: &Path, stage: &str, log: &TrainLog) -> Result<PathBuf> {
    let path = dir.join(format!("{stage}.log.jsonl"));
    let header = json!({ "stage": stage, "run_config": rc.to_json() });
    write_file(&path, log.to_jsonl(Some(&header)))?;
    Ok(path)
}

fn summary(stage: &str, log: &TrainLog) {
    match (log.first_loss(), log.last_loss()) {
        (Some(a), Some(b)) => println!("{stage}: {} iterations, loss {a:.6} -> {b:.6}", log.records.len()),
        _ => println!("{stage}: no iterations, initialization written"),
    }
}

pub fn train(rc: &RunConfig) -> Result<()> {
    let model: String = rc.get("model")?;
    check_data_source(rc)?;
    let stage_lrs = ["skelnet-lr", "crnn-lr", "merge-lr"];
    match model.as_str() {
        "skeltnet" => {
            reject(rc, &["loss"], "--model skeltnet (each stage has a fixed loss)")?;
            reject(rc, &["lr", "optimizer"], "--model skeltnet (use --skelnet-lr, --crnn-lr, --merge-lr)")?;
        }
        "crnn" => {
            reject(
                rc,
                &["scheme", "branch-dims", "activation", "seed-length", "global-in-torso", "merge-mode", "merge-dims"],
                "--model crnn",
            )?;
            reject(rc, &stage_lrs, "a single-model run (use --lr)")?;
        }
        _ => {
            reject(rc, &["gru-units", "crnn-head", "merge-mode", "merge-dims"], &format!("--model {model}"))?;
            reject(rc, &stage_lrs, "a single-model run (use --lr)")?;
            if model == "baseline" {
                reject(rc, &["scheme"], "--model baseline (always the whole scheme)")?;
            }
        }
    }
    let merge_mode: MergeMode = rc.get("merge-mode")?;
    let loss: Option<LossKind> = rc.opt("loss")?;

    let split = load_split(rc)?;
    let dir = out_dir(rc)?;
    let period = split.period_ms();
    let horizon_ms = rc.opt::<f64>("horizon-ms")?.unwrap_or(if model == "skeltnet" { 400.0 } else { 1000.0 });
    let horizon = horizon_frames(horizon_ms, period)?;
    let scheme = if model == "baseline" { SchemeName::Whole } else { rc.get("scheme")? };
    let seed_length: usize = rc.get("seed-length")?;
    let uses_crnn = model == "crnn" || model == "skeltnet";
    let seed_frames =
        rc.opt::<usize>("seed-frames")?.unwrap_or(if uses_crnn { seed_length.max(4) } else { seed_length });
    let d = split.input_dim();

    if model == "skeltnet" {
        let skel = skelnet_config(rc, &split.spec, &split.stats.retained, scheme)?;
        let mut cfg = SkelTNetConfig::new(skel, horizon);
        cfg.crnn = crnn_config(rc, d)?;
        cfg.merge = merge_config(rc, d, merge_mode)?;
        for (tc, key) in [
            (&mut cfg.skelnet_train, "skelnet-lr"),
            (&mut cfg.crnn_train, "crnn-lr"),
            (&mut cfg.merge_train, "merge-lr"),
        ] {
            apply_common_train(rc, tc, seed_frames)?;
            tc.optimizer.learning_rate = rc.get(key)?;
        }
        let metas = [
            checkpoint_meta(
                rc,
                "skelnet",
                json!({"model": "skelnet", "config": cfg.skelnet}),
                &cfg.skelnet_train,
                &split,
            ),
            checkpoint_meta(rc, "crnn", json!({"model": "crnn", "config": cfg.crnn}), &cfg.crnn_train, &split),
            checkpoint_meta(rc, "merge", json!({"model": "merge", "config": cfg.merge}), &cfg.merge_train, &split),
        ];
        let plans: Vec<CheckpointPlan> = ["skelnet", "crnn", "merge"]
            .iter()
            .zip(metas)
            .map(|(name, meta)| CheckpointPlan { dir: dir.clone(), name: name.to_string(), meta })
            .collect();
        rc.write_files(&dir)?;
        let run = train_skel_tnet(&split, &cfg, [Some(&plans[0]), Some(&plans[1]), Some(&plans[2])], 0)?;
        for (stage, log) in [("skelnet", &run.skelnet_log), ("crnn", &run.crnn_log), ("merge", &run.merge_log)] {
            write_log(rc, &dir, stage, log)?;
            summary(stage, log);
        }
        for p in &plans {
            println!("wrote {}", p.final_path().display());
        }
        return Ok(());
    }

    let (seq_model, mut tc) = if model == "crnn" {
        let cfg = crnn_config(rc, d)?;
        (SequenceModel::Crnn(Crnn::new(cfg)?), TrainConfig::crnn(horizon))
    } else {
        let cfg = skelnet_config(rc, &split.spec, &split.stats.retained, scheme)?;
        (SequenceModel::SkelNet(SkelNet::new(cfg)?), TrainConfig::skelnet(horizon))
    };
    if let Some(l) = loss {
        tc.loss = l;
    }
    if let Some(lr) = rc.opt::<f64>("lr")? {
        tc.optimizer.learning_rate = lr;
    }
    match rc.opt::<String>("optimizer")?.as_deref() {
        Some("adam") if tc.optimizer.kind != OptimizerKind::Adam => {
            tc.optimizer = OptimizerConfig::adam(tc.optimizer.learning_rate)
        }
        Some("sgd") if tc.optimizer.kind != OptimizerKind::Sgd => {
            tc.optimizer = OptimizerConfig::sgd(tc.optimizer.learning_rate)
        }
        _ => {}
    }
    apply_common_train(rc, &mut tc, seed_frames)?;
    let plan = CheckpointPlan {
        dir: dir.clone(),
        name: model.clone(),
        meta: checkpoint_meta(rc, &model, seq_model.to_json(), &tc, &split),
    };
    rc.write_files(&dir)?;
    let (_, log) = train_stage(&seq_model, &split, &tc, Some(&plan))?;
    write_log(rc, &dir, &model, &log)?;
    summary(&model, &log);
    println!("wrote {}", plan.final_path().display());
    Ok(())
}

struct Loaded {
    stage: String,
    meta: Value,
    store: ParamStore,
    checksum: String,
}

fn load_checkpoint(path: &Path) -> Result<Loaded> {
    if !path.is_file() {
        return Err(usage(format!("checkpoint {} not found", path.display())));
    }
    let (store, meta) = checkpoint::load(path)?;
    let meta: Value = serde_json::from_str(&meta)
        .map_err(|e| Error::Checkpoint(format!("{}: unreadable metadata: {e}", path.display())))?;
    let stage = meta["model"]["model"]
        .as_str()
        .ok_or_else(|| Error::Checkpoint(format!("{}: metadata names no model", path.display())))?
        .to_string();
    let checksum = store.checksum();
    Ok(Loaded { stage, meta, store, checksum })
}

fn stage_model(l: &Loaded, split: &DatasetSplit, scheme: Option<SchemeName>) -> Result<SequenceModel> {
    let model = SequenceModel::from_json(&l.meta["model"])?;
    if l.store.total_parameter_count() != model.param_count() {
        return Err(Error::Checkpoint(format!(
            "{} checkpoint holds {} parameters, its config describes {}",
            l.stage,
            l.store.total_parameter_count(),
            model.param_count()
        )));
    }
    let retained: Vec<usize> = serde_json::from_value(l.meta["retained"].clone()).unwrap_or_default();
    if retained != split.stats.retained {
        return Err(usage(format!(
            "{} checkpoint was trained on {} retained dimensions; this dataset retains {}",
            l.stage,
            retained.len(),
            split.stats.retained.len()
        )));
    }
    if let (Some(s), SequenceModel::SkelNet(m)) = (scheme, &model) {
        if m.config.partition.name != s {
            return Err(usage(format!(
                "--scheme {s} disagrees with the checkpoint's {} partition",
                m.config.partition.name
            )));
        }
    }
    Ok(model)
}

fn stored_usize(l: &Loaded, key: &str) -> Option<usize> {
    l.meta["train"][key].as_u64().map(|v| v as usize)
}

pub fn eval(rc: &RunConfig) -> Result<()> {
    let paths: Vec<PathBuf> = rc.list("checkpoint")?;
    if paths.is_empty() {
        return Err(usage("--checkpoint is required"));
    }
    check_data_source(rc)?;
    let loaded = paths.iter().map(|p| load_checkpoint(p)).collect::<Result<Vec<_>>>()?;
    let find = |stage: &str| -> Result<Option<&Loaded>> {
        let mut it = loaded.iter().filter(|l| l.stage == stage);
        let first = it.next();
        if it.next().is_some() {
            return Err(usage(format!("more than one {stage} checkpoint given")));
        }
        Ok(first)
    };
    let (skel, crnn, merge) = (find("skelnet")?, find("crnn")?, find("merge")?);
    let mode: Option<MergeMode> = rc.opt("merge-mode")?;
    let scheme: Option<SchemeName> = rc.opt("scheme")?;

    let split = load_split(rc)?;
    let dir = out_dir(rc)?;
    let pipeline;
    let single;
    let predictor: &dyn Predictor = match (skel, crnn) {
        (Some(s), Some(c)) => {
            let mode = match (mode, merge) {
                (Some(m), _) => m,
                (None, Some(m)) => serde_json::from_value(m.meta["model"]["config"]["mode"].clone())?,
                (None, None) => return Err(usage("a SkelNet + C-RNN pair needs a merge checkpoint or --merge-mode")),
            };
            let (merge_cfg, merge_store) = if mode.is_trainable() {
                let m = merge.ok_or_else(|| usage(format!("--merge-mode {mode} needs a merge checkpoint")))?;
                let cfg: MergeConfig = serde_json::from_value(m.meta["model"]["config"].clone())?;
                if cfg.mode != mode {
                    return Err(usage(format!("merge checkpoint was trained as {}, not {mode}", cfg.mode)));
                }
                if cfg.param_count() != m.store.total_parameter_count() {
                    return Err(Error::Checkpoint("merge checkpoint size disagrees with its config".into()));
                }
                (cfg, m.store.clone())
            } else {
                (MergeConfig { mode, ..MergeConfig::new(split.input_dim()) }, ParamStore::new())
            };
            if merge_cfg.input_dim != split.input_dim() {
                return Err(usage("merge checkpoint width disagrees with the dataset"));
            }
            pipeline = SkelTNet {
                skelnet: stage_model(s, &split, scheme)?,
                skelnet_store: s.store.clone(),
                crnn: stage_model(c, &split, scheme)?,
                crnn_store: c.store.clone(),
                merge: merge_cfg,
                merge_store,
            };
            &pipeline
        }
        (Some(one), None) | (None, Some(one)) => {
            if mode.is_some() || merge.is_some() {
                return Err(usage("merge wiring needs both a SkelNet and a C-RNN checkpoint"));
            }
            single = (stage_model(one, &split, scheme)?, one.store.clone());
            &ModelPredictor { model: &single.0, store: &single.1 }
        }
        (None, None) => return Err(usage("no SkelNet or C-RNN checkpoint given")),
    };

    let stage_one: Vec<&Loaded> = [skel, crnn].into_iter().flatten().collect();
    let horizon = match rc.opt::<f64>("horizon-ms")? {
        Some(ms) => horizon_frames(ms, split.period_ms())?,
        None => stage_one.iter().filter_map(|l| stored_usize(l, "horizon")).max().unwrap_or(10),
    };
    let seed_frames = match rc.opt::<usize>("seed-frames")? {
        Some(n) => n,
        None => stage_one.iter().filter_map(|l| stored_usize(l, "seed_frames")).max().unwrap_or(1),
    };
    let opts = EvalOptions {
        windows: rc.get("windows")?,
        sampler_seed: rc.get("sampler-seed")?,
        horizons_ms: rc.list("horizons-ms")?,
        group_scheme: rc.opt("group-scheme")?,
        noise_variance: rc.get("noise-variance")?,
        noise_seed: rc.get("seed")?,
        ..EvalOptions::new(seed_frames, horizon)
    };
    let ids = loaded.iter().map(|l| format!("{}:{}", l.stage, l.checksum)).collect();
    let mut report = evaluate(predictor, &split, &opts, ids, 0)?;
    report.run_config = rc.to_json();
    emit_report(&report, &dir)?;
    rc.write_files(&dir)?;
    println!("activity\tmof");
    for a in &report.activities {
        println!("{}\t{:.6}", a.activity, a.mof);
    }
    println!("average\t{:.6}\nstd\t{:.6}", report.mof_average, report.mof_std);
    println!("wrote {}", dir.join("report.json").display());
    Ok(())
}

pub fn ablate(rc: &RunConfig) -> Result<()> {
    let variants: Vec<Variant> = rc.list("variants")?;
    if variants.is_empty() {
        return Err(usage("--variants is empty"));
    }
    let seeds: Vec<u64> = rc.list("seeds")?;
    let noise: Vec<f64> = rc.list("noise-variance")?;
    check_data_source(rc)?;
    let split = load_split(rc)?;
    let dir = out_dir(rc)?;
    let horizon = horizon_frames(rc.get("horizon-ms")?, split.period_ms())?;

    let mut cfg = AblationConfig::smoke(variants);
    cfg.seeds = seeds;
    cfg.noise_variances = noise;
    for (tc, key) in [(&mut cfg.skelnet_train, "skelnet-lr"), (&mut cfg.crnn_train, "crnn-lr")] {
        tc.iterations = rc.get("iterations")?;
        tc.batch_size = rc.get("batch-size")?;
        tc.horizon = horizon;
        tc.optimizer.learning_rate = rc.get(key)?;
    }
    cfg.crnn_train.seed_frames = rc.get("crnn-seed-frames")?;
    cfg.branch_dims = rc.list("branch-dims")?;
    cfg.crnn_units = rc.get("gru-units")?;
    cfg.crnn_head_dims = rc.list("crnn-head")?;
    cfg.long_prior = rc.get("long-prior")?;
    cfg.eval = EvalOptions {
        windows: rc.get("windows")?,
        sampler_seed: rc.get("sampler-seed")?,
        horizons_ms: rc.list("horizons-ms")?,
        ..EvalOptions::new(1, horizon)
    };
    let table = run_ablation(&split, &cfg, 0)?;
    let tsv = table.to_tsv();
    write_file(&dir.join("ablation.tsv"), format!("# run_config: {}\n{tsv}", rc.to_json()))?;
    let doc = json!({ "run_config": rc.to_json(), "table": table });
    write_file(&dir.join("ablation.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    rc.write_files(&dir)?;
    print!("{tsv}");
    Ok(())
}

/// Published SkelNet total used as a reference line; not expected to match.
const REFERENCE_SKELNET_TOTAL: &str = "~0.3m";

pub fn paramcount(rc: &RunConfig) -> Result<()> {
    let (spec, retained) = if rc.flag("synthetic")? || rc.raw("data").is_some() {
        let split = load_split(rc)?;
        (split.spec, split.stats.retained)
    } else {
        let spec = skeleton(rc, None)?;
        let all = (0..spec.dim()).collect();
        (spec, all)
    };
    let d = retained.len();
    let mut rows: Vec<(String, usize, usize)> = Vec::new();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(rc.get("seed")?);
    for scheme in SchemeName::ALL {
        let cfg = skelnet_config(rc, &spec, &retained, scheme)?;
        let model = SequenceModel::SkelNet(SkelNet::new(cfg)?);
        let mut store = ParamStore::new();
        model.init(&mut store, &mut rng)?;
        rows.push((format!("skelnet_{scheme}"), model.param_count(), store.total_parameter_count()));
    }
    let crnn = SequenceModel::Crnn(Crnn::new(crnn_config(rc, d)?)?);
    let mut store = ParamStore::new();
    crnn.init(&mut store, &mut rng)?;
    rows.push(("crnn".into(), crnn.param_count(), store.total_parameter_count()));
    let merge = merge_config(rc, d, MergeMode::Network)?;
    let mut store = ParamStore::new();
    merge.init(&mut store, &mut rng)?;
    rows.push(("merge".into(), merge.param_count(), store.total_parameter_count()));

    println!("model\tinput_dim\tclosed_form\tinstantiated\tcheckpoint_payload_bytes");
    for (name, closed, inst) in &rows {
        println!("{name}\t{d}\t{closed}\t{inst}\t{}", inst * 8);
    }
    println!(
        "note: reference SkelNet total is {REFERENCE_SKELNET_TOTAL}; this layer layout gives {} at input dim {d} \
         (the discrepancy is expected, see README)",
        rows[0].1
    );
    if let Some((name, closed, inst)) = rows.iter().find(|(_, c, i)| c != i) {
        return Err(Error::Validation(format!("{name}: closed form {closed} != instantiated {inst}")));
    }
    Ok(())
}

pub fn gen_synthetic(rc: &RunConfig) -> Result<()> {
    reject(rc, &["data"], "gen-synthetic (it writes to --out)")?;
    let skel = skeleton(rc, None)?;
    let spec = synthetic_spec(rc)?;
    let (train, test) = generate_raw(&spec, &skel)?;
    let dir = out_dir(rc)?;
    write_dataset(&dir, &train, &test)?;
    write_file(&dir.join("skeleton.skel"), skel.to_text())?;
    let doc = json!({ "run_config": rc.to_json(), "spec": spec });
    write_file(&dir.join("synthetic_spec.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    println!("wrote {} train and {} test sequences to {}", train.len(), test.len(), dir.display());
    Ok(())
}

pub fn convert(rc: &RunConfig) -> Result<()> {
    let input: PathBuf = rc.get("input")?;
    let output: PathBuf = rc.get("output")?;
    let activity: String = rc.get("activity")?;
    let step: usize = rc.get("downsample")?;
    if step == 0 {
        return Err(usage("--downsample must be at least 1"));
    }
    let text = std::fs::read_to_string(&input).map_err(|e| Error::Io { path: input.clone(), source: e })?;
    let origin = input.display().to_string();
    let mut width = None;
    let mut data = Vec::new();
    let lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    for (frame, (n, line)) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Validation(format!("{origin}:{}: {e}", n + 1)))?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Validation(format!("{origin}:{}: expected {w} columns, found {}", n + 1, row.len())))
            }
            _ => {}
        }
        if frame % step == 0 {
            data.extend(row);
        }
    }
    let width = width.ok_or_else(|| Error::Validation(format!("{origin}: no frames")))?;
    if let Some(p) = rc.opt::<PathBuf>("skeleton")? {
        let spec = SkeletonSpec::load(&p)?;
        if spec.dim() != width {
            return Err(Error::Validation(format!("{origin}: {width} columns, skeleton declares {}", spec.dim())));
        }
    }
    let seq = MotionSequence::new(activity, Tensor::new(vec![data.len() / width, width], data)?, rc.get("period-ms")?)?;
    write_sequence(&output, &seq)?;
    println!("wrote {} frames x {width} dims to {}", seq.len(), output.display());
    Ok(())
}
