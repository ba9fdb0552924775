//! Losses, noise injection and the deterministic training loops.

mod loss;
mod noise;
mod pipeline;

pub use loss::{
    converging_loss, converging_loss_with_inputs, sampling_loss, sequence_l2, sequence_l2_tape, ConvergingLossConfig,
    ConvergingTerms, LossKind,
};
pub use noise::add_gaussian_noise;
pub use pipeline::{train_merge, train_skel_tnet, SkelTNet, SkelTNetConfig, SkelTNetRun};

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_training_batch, Batch, DatasetSplit, MotionSequence};
use crate::error::{Error, Result};
use crate::models::{Autoregressive, ForwardCtx, SequenceModel};
use crate::numerics::{checkpoint, optimizer_step, OptimizerConfig, ParamStore, Tape, Tensor, Var};
use crate::rotations::PreprocessStats;
use noise::add_noise_with;

/// Default global gradient-norm cap.
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

/// Where noise is drawn: in network-input (standardized) units or in raw
/// feature units, which are divided by each dimension's std before adding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSpace {
    Standardized,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub converging: ConvergingLossConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Seed frames per training window.
    pub seed_frames: usize,
    /// Predicted frames per training window.
    pub horizon: usize,
    pub noise_variance: f64,
    pub noise_space: NoiseSpace,
    pub clip_norm: Option<f64>,
    /// Intermediate checkpoint interval in iterations; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Record measured wall time in logs. Off by default so logs are byte-stable.
    pub record_wall_time: bool,
}

impl TrainConfig {
    fn base(horizon: usize, optimizer: OptimizerConfig, loss: LossKind) -> Self {
        TrainConfig {
            loss,
            converging: ConvergingLossConfig::default(),
            optimizer,
            batch_size: 16,
            iterations: 10_000,
            seed: 0,
            seed_frames: 1,
            horizon,
            noise_variance: 0.0,
            noise_space: NoiseSpace::Standardized,
            clip_norm: Some(DEFAULT_CLIP_NORM),
            checkpoint_every: 0,
            record_wall_time: false,
        }
    }

    /// Sampling loss, SGD at 0.01.
    pub fn skelnet(horizon: usize) -> Self {
        Self::base(horizon, OptimizerConfig::sgd(0.01), LossKind::Sampling)
    }

    /// Converging loss, SGD at 5e-5.
    pub fn crnn(horizon: usize) -> Self {
        Self::base(horizon, OptimizerConfig::sgd(5e-5), LossKind::Converging)
    }

    /// Adam at 0.01 on the frame-wise sequence error.
    pub fn merge(horizon: usize) -> Self {
        Self::base(horizon, OptimizerConfig::adam(0.01), LossKind::Sampling)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.converging.validate()?;
        if self.batch_size == 0 || self.seed_frames == 0 || self.horizon == 0 {
            return Err(Error::Config("batch_size, seed_frames and horizon must be positive".into()));
        }
        if !self.noise_variance.is_finite() || self.noise_variance < 0.0 {
            return Err(Error::Config(format!("noise variance {} must be non-negative", self.noise_variance)));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!("clip norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Convert a horizon in milliseconds to frames; it must be a whole multiple of the period.
pub fn horizon_frames(ms: f64, period_ms: f64) -> Result<usize> {
    let frames = ms / period_ms;
    let rounded = frames.round();
    if rounded.is_nan() || rounded < 1.0 || (frames - rounded).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "horizon {ms} ms is not a positive multiple of the {period_ms} ms frame period"
        )));
    }
    Ok(rounded as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    pub loss: f64,
    /// Teacher-forced term; absent for losses without one.
    pub l_pos: Option<f64>,
    /// Free-running term.
    pub l_neg: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    /// One JSON object per line, optionally preceded by a header object.
    pub fn to_jsonl(&self, header: Option<&serde_json::Value>) -> String {
        let mut out = String::new();
        if let Some(h) = header {
            out += &h.to_string();
            out.push('\n');
        }
        for r in &self.records {
            out += &serde_json::to_string(r).expect("log record serializes");
            out.push('\n');
        }
        out
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// Checkpoint destination for a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointPlan {
    pub dir: PathBuf,
    pub name: String,
    /// Self-describing metadata stored in every checkpoint.
    pub meta: String,
}

impl CheckpointPlan {
    pub fn final_path(&self) -> PathBuf {
        self.dir.join(format!("{}.ckpt", self.name))
    }

    pub fn interval_path(&self, iteration: usize) -> PathBuf {
        self.dir.join(format!("{}.iter{iteration:06}.ckpt", self.name))
    }

    pub fn last_good_path(&self) -> PathBuf {
        self.dir.join(format!("{}.last_good.ckpt", self.name))
    }

    fn write(&self, path: &Path, store: &ParamStore) -> Result<()> {
        checkpoint::save(path, store, &self.meta)
    }
}

/// Independent random streams of one run, all derived from `TrainConfig::seed`.
pub(crate) struct Streams {
    pub init: ChaCha8Rng,
    pub batches: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub dropout: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let stream = |n: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(n);
            r
        };
        Streams { init: stream(0), batches: stream(1), noise: stream(2), dropout: stream(3) }
    }
}

pub(crate) fn noise_scale(stats: &PreprocessStats, space: NoiseSpace) -> Option<Vec<f64>> {
    match space {
        NoiseSpace::Standardized => None,
        NoiseSpace::Raw => Some(stats.retained.iter().map(|&d| 1.0 / stats.std[d]).collect()),
    }
}

pub(crate) fn noisy(
    frames: &[Tensor],
    cfg: &TrainConfig,
    scale: Option<&[f64]>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Tensor>> {
    frames.iter().map(|f| add_noise_with(f, cfg.noise_variance, scale, rng)).collect()
}

/// Train one stage-one model from a fresh seeded initialization.
pub fn train_stage(
    model: &SequenceModel,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    plan: Option<&CheckpointPlan>,
) -> Result<(ParamStore, TrainLog)> {
    cfg.validate()?;
    let mut streams = Streams::new(cfg.seed);
    let mut store = ParamStore::new();
    model.init(&mut store, &mut streams.init)?;
    train_stage_from(model, &split.train, &split.stats, cfg, store, streams, plan)
}

fn train_stage_from(
    model: &SequenceModel,
    train: &[MotionSequence],
    stats: &PreprocessStats,
    cfg: &TrainConfig,
    mut store: ParamStore,
    mut streams: Streams,
    plan: Option<&CheckpointPlan>,
) -> Result<(ParamStore, TrainLog)> {
    if model.input_dim() != stats.retained_dim() {
        return Err(Error::Config(format!(
            "model expects {} input dims, data has {}",
            model.input_dim(),
            stats.retained_dim()
        )));
    }
    if cfg.seed_frames < model.seed_length() {
        return Err(Error::Config(format!(
            "model needs {} seed frames, config provides {}",
            model.seed_length(),
            cfg.seed_frames
        )));
    }
    let scale = noise_scale(stats, cfg.noise_space);
    let mut log = TrainLog::default();
    let started = Instant::now();

    for iteration in 0..cfg.iterations {
        let step = (|| -> Result<(f64, Option<f64>, Option<f64>)> {
            let windows =
                sample_training_batch(train, &mut streams.batches, cfg.batch_size, cfg.seed_frames, cfg.horizon)?;
            let batch = Batch::from_windows(&windows)?;
            let seeds = noisy(&batch.seeds, cfg, scale.as_deref(), &mut streams.noise)?;
            let mut tape = Tape::new();
            let mut ctx = ForwardCtx::train(rand::Rng::random(&mut streams.dropout));
            let seeds: Vec<Var> = seeds.into_iter().map(|t| tape.constant(t)).collect();
            let truth: Vec<Var> = batch.truth.iter().map(|t| tape.constant(t.clone())).collect();
            let (loss, l_pos, l_neg) = match cfg.loss {
                LossKind::Sampling => {
                    let l = sampling_loss(model, &mut tape, &store, &mut ctx, &seeds, &truth, cfg.horizon)?;
                    (l, None, Some(l))
                }
                LossKind::Converging => {
                    let teacher: Vec<Var> = noisy(&batch.truth, cfg, scale.as_deref(), &mut streams.noise)?
                        .into_iter()
                        .map(|t| tape.constant(t))
                        .collect();
                    let terms = converging_loss_with_inputs(
                        model,
                        &mut tape,
                        &store,
                        &mut ctx,
                        &seeds,
                        &truth,
                        &teacher,
                        cfg.horizon,
                        &cfg.converging,
                    )?;
                    (terms.total, Some(terms.l_pos), Some(terms.l_neg))
                }
            };
            let value = tape.value(loss).item();
            let l_pos = l_pos.map(|v| tape.value(v).item());
            let l_neg = l_neg.map(|v| tape.value(v).item());
            tape.backward(loss, &mut store)?;
            if let Some(c) = cfg.clip_norm {
                store.clip_grad_norm(c);
            }
            Ok((value, l_pos, l_neg))
        })();
        let result = step.and_then(|terms| {
            let before = store.clone();
            match optimizer_step(&mut store, &cfg.optimizer) {
                Ok(()) => Ok(terms),
                Err(e) => {
                    store = before;
                    Err(e)
                }
            }
        });
        let (loss, l_pos, l_neg) = match result {
            Ok(v) => v,
            Err(source) => {
                store.zero_grad();
                if let Some(p) = plan {
                    p.write(&p.last_good_path(), &store)?;
                }
                return Err(Error::TrainingFault { iteration, source: Box::new(source) });
            }
        };
        let wall_ms = if cfg.record_wall_time { started.elapsed().as_millis() as u64 } else { 0 };
        log.records.push(LogRecord { iteration, loss, l_pos, l_neg, wall_ms });
        if let Some(p) = plan {
            if cfg.checkpoint_every > 0 && (iteration + 1) % cfg.checkpoint_every == 0 && iteration + 1 < cfg.iterations
            {
                p.write(&p.interval_path(iteration + 1), &store)?;
            }
        }
    }
    if let Some(p) = plan {
        p.write(&p.final_path(), &store)?;
    }
    Ok((store, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::models::{Crnn, CrnnConfig, SkelNet, SkelNetConfig};
    use crate::skeleton::{synthetic_skeleton, SchemeName};

    fn split() -> DatasetSplit {
        let spec = SyntheticSpec { count: 4, length: 60, ..SyntheticSpec::default() };
        generate_synthetic(&spec, &synthetic_skeleton()).unwrap()
    }

    fn skelnet(split: &DatasetSplit) -> SequenceModel {
        let p = split.spec.partition(SchemeName::FivePart, &split.stats.retained).unwrap();
        SequenceModel::SkelNet(SkelNet::new(SkelNetConfig::new(p)).unwrap())
    }

    #[test]
    fn horizons_in_frames() {
        assert_eq!(horizon_frames(1000.0, 40.0).unwrap(), 25);
        assert_eq!(horizon_frames(400.0, 40.0).unwrap(), 10);
        assert!(horizon_frames(410.0, 40.0).is_err());
        assert!(horizon_frames(0.0, 40.0).is_err());
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let s = split();
        let m = skelnet(&s);
        let cfg = TrainConfig { iterations: 0, ..TrainConfig::skelnet(5) };
        let (store, log) = train_stage(&m, &s, &cfg, None).unwrap();
        let mut fresh = ParamStore::new();
        m.init(&mut fresh, &mut Streams::new(0).init).unwrap();
        assert_eq!(store.checksum(), fresh.checksum());
        assert!(log.records.is_empty());
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let s = split();
        let m = skelnet(&s);
        let cfg = TrainConfig { iterations: 40, batch_size: 8, ..TrainConfig::skelnet(5) };
        let (a, la) = train_stage(&m, &s, &cfg, None).unwrap();
        let (b, lb) = train_stage(&m, &s, &cfg, None).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(la.to_jsonl(None), lb.to_jsonl(None));
        let head: f64 = la.records[..5].iter().map(|r| r.loss).sum();
        let tail: f64 = la.records[35..].iter().map(|r| r.loss).sum();
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn converging_records_both_terms() {
        let s = split();
        let m = SequenceModel::Crnn(
            Crnn::new(CrnnConfig { gru_units: 8, head_dims: vec![8], ..CrnnConfig::new(s.input_dim()) }).unwrap(),
        );
        let cfg = TrainConfig { iterations: 3, batch_size: 2, seed_frames: 3, ..TrainConfig::crnn(4) };
        let (_, log) = train_stage(&m, &s, &cfg, None).unwrap();
        for r in &log.records {
            let (p, n) = (r.l_pos.unwrap(), r.l_neg.unwrap());
            assert!((cfg.converging.combine(p, n) - r.loss).abs() <= 1e-12 * r.loss.abs());
        }
    }

    #[test]
    fn divergence_reports_iteration_and_keeps_last_good() {
        let s = split();
        let m = skelnet(&s);
        let dir = tempfile::tempdir().unwrap();
        let plan = CheckpointPlan { dir: dir.path().into(), name: "skel".into(), meta: "{}".into() };
        let cfg = TrainConfig {
            iterations: 200,
            clip_norm: None,
            optimizer: OptimizerConfig::sgd(1e12),
            ..TrainConfig::skelnet(5)
        };
        match train_stage(&m, &s, &cfg, Some(&plan)) {
            Err(Error::TrainingFault { iteration, .. }) => assert!(iteration < 200),
            other => panic!("expected a training fault, got {other:?}"),
        }
        let (store, _) = checkpoint::load(&plan.last_good_path()).unwrap();
        assert!(store.iter().all(|(_, e)| e.value.is_finite()));
    }

    #[test]
    fn interval_checkpoints() {
        let s = split();
        let m = skelnet(&s);
        let dir = tempfile::tempdir().unwrap();
        let plan = CheckpointPlan { dir: dir.path().into(), name: "skel".into(), meta: "{}".into() };
        let cfg = TrainConfig { iterations: 4, batch_size: 2, checkpoint_every: 2, ..TrainConfig::skelnet(3) };
        let (store, _) = train_stage(&m, &s, &cfg, Some(&plan)).unwrap();
        assert!(plan.interval_path(2).exists());
        assert!(!plan.interval_path(4).exists());
        let (back, meta) = checkpoint::load(&plan.final_path()).unwrap();
        assert_eq!(back.checksum(), store.checksum());
        assert_eq!(meta, "{}");
    }
}
