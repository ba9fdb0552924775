//! Two-stage Skel-TNet training: SkelNet and C-RNN independently, then the
//! merging network on their frozen rollouts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{noise_scale, noisy, train_stage, CheckpointPlan, LogRecord, Streams, TrainConfig, TrainLog};
use crate::data::{sample_training_batch, Batch, DatasetSplit};
use crate::error::{Error, Result};
use crate::models::{
    merge_sequences, rollout, Conditioning, Crnn, CrnnConfig, ForwardCtx, MergeConfig, MergeMode, SequenceModel,
    SkelNet, SkelNetConfig,
};
use crate::numerics::{optimizer_step, ParamStore, Tape, Tensor, Var};
use crate::parallel::par_map;
use crate::training::{sequence_l2_tape, LossKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkelTNetConfig {
    pub skelnet: SkelNetConfig,
    pub crnn: CrnnConfig,
    pub merge: MergeConfig,
    pub skelnet_train: TrainConfig,
    pub crnn_train: TrainConfig,
    pub merge_train: TrainConfig,
}

impl SkelTNetConfig {
    /// Default three-stage configuration for `horizon` predicted frames.
    pub fn new(skelnet: SkelNetConfig, horizon: usize) -> Self {
        let d = skelnet.input_dim();
        SkelTNetConfig {
            skelnet,
            crnn: CrnnConfig::new(d),
            merge: MergeConfig::new(d),
            skelnet_train: TrainConfig::skelnet(horizon),
            crnn_train: TrainConfig::crnn(horizon),
            merge_train: TrainConfig::merge(horizon),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.skelnet.input_dim();
        if self.crnn.input_dim != d || self.merge.input_dim != d {
            return Err(Error::Config(format!(
                "stage widths disagree: skelnet {d}, crnn {}, merge {}",
                self.crnn.input_dim, self.merge.input_dim
            )));
        }
        if self.merge_train.loss != LossKind::Sampling {
            return Err(Error::Config("the merging stage trains on the frame-wise sequence error only".into()));
        }
        let need = self.skelnet.seed_length.max(1);
        if self.merge_train.seed_frames < need {
            return Err(Error::Config(format!("merge stage needs at least {need} seed frames")));
        }
        self.skelnet_train.validate()?;
        self.crnn_train.validate()?;
        self.merge_train.validate()
    }
}

/// Three trained stores wired into one predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct SkelTNet {
    pub skelnet: SequenceModel,
    pub skelnet_store: ParamStore,
    pub crnn: SequenceModel,
    pub crnn_store: ParamStore,
    pub merge: MergeConfig,
    pub merge_store: ParamStore,
}

impl SkelTNet {
    /// Same stage-one models under another merge wiring. Trainable modes keep
    /// the current merge store, so they only make sense for the mode it was trained in.
    pub fn with_mode(&self, mode: MergeMode) -> SkelTNet {
        let mut out = self.clone();
        out.merge.mode = mode;
        if !mode.is_trainable() {
            out.merge_store = ParamStore::new();
        }
        out
    }

    /// Evaluation-mode prediction of `horizon` frames from `[k, D]` seeds.
    pub fn predict(&self, seeds: &Tensor, horizon: usize) -> Result<Tensor> {
        let frames: Vec<Tensor> = (0..seeds.rows()).map(|r| Tensor::row(seeds.row_slice(r))).collect();
        let (skel, crnn) = stage_one_rollouts(
            (&self.skelnet, &self.skelnet_store),
            (&self.crnn, &self.crnn_store),
            &frames,
            horizon,
            1,
        )?;
        let mut tape = Tape::new();
        let mut ctx = ForwardCtx::eval();
        let out = merge_on_tape(&mut tape, &self.merge_store, &mut ctx, &self.merge, &skel, &crnn)?;
        let vals: Vec<&Tensor> = out.iter().map(|&v| tape.value(v)).collect();
        Tensor::stack_rows(&vals)
    }
}

/// A finished staged run.
#[derive(Debug, Clone, PartialEq)]
pub struct SkelTNetRun {
    pub pipeline: SkelTNet,
    pub skelnet_log: TrainLog,
    pub crnn_log: TrainLog,
    pub merge_log: TrainLog,
}

/// Free-running rollout values in evaluation mode for batched seeds.
fn rollout_values(model: &SequenceModel, store: &ParamStore, seeds: &[Tensor], horizon: usize) -> Result<Vec<Tensor>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = seeds.iter().map(|t| tape.constant(t.clone())).collect();
    let mut ctx = ForwardCtx::eval();
    let out = rollout(model, &mut tape, store, &mut ctx, &vars, horizon, Conditioning::FreeRunning)?;
    Ok(out.iter().map(|&v| tape.value(v).clone()).collect())
}

type Frozen<'a> = (&'a SequenceModel, &'a ParamStore);

fn stage_one_rollouts(
    skel: Frozen<'_>,
    crnn: Frozen<'_>,
    seeds: &[Tensor],
    horizon: usize,
    threads: usize,
) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    let mut both = par_map(&[skel, crnn], threads, |_, &(m, s)| rollout_values(m, s, seeds, horizon)).into_iter();
    let a = both.next().expect("two rollouts")?;
    let b = both.next().expect("two rollouts")?;
    Ok((a, b))
}

fn merge_on_tape(
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &mut ForwardCtx,
    cfg: &MergeConfig,
    skel: &[Tensor],
    crnn: &[Tensor],
) -> Result<Vec<Var>> {
    let a: Vec<Var> = skel.iter().map(|t| tape.constant(t.clone())).collect();
    let b: Vec<Var> = crnn.iter().map(|t| tape.constant(t.clone())).collect();
    merge_sequences(tape, store, ctx, cfg, &a, &b)
}

fn check_trained(model: &SequenceModel, store: &ParamStore, what: &str) -> Result<()> {
    if store.is_empty() || store.total_parameter_count() != model.param_count() {
        return Err(Error::Config(format!(
            "stage two needs a trained {what} checkpoint ({} parameters expected, {} present)",
            model.param_count(),
            store.total_parameter_count()
        )));
    }
    Ok(())
}

/// Train the merging network on rollouts of two frozen stage-one models.
///
/// The stage-one stores are borrowed immutably, so they cannot change.
pub fn train_merge(
    skel: Frozen<'_>,
    crnn: Frozen<'_>,
    merge: &MergeConfig,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    plan: Option<&CheckpointPlan>,
    threads: usize,
) -> Result<(ParamStore, TrainLog)> {
    cfg.validate()?;
    check_trained(skel.0, skel.1, "SkelNet")?;
    check_trained(crnn.0, crnn.1, "C-RNN")?;
    if merge.input_dim != split.input_dim() {
        return Err(Error::Config(format!(
            "merge width {} does not match data width {}",
            merge.input_dim,
            split.input_dim()
        )));
    }
    let mut streams = Streams::new(cfg.seed);
    let mut store = ParamStore::new();
    merge.init(&mut store, &mut streams.init)?;
    let mut log = TrainLog::default();
    if merge.mode.is_trainable() {
        let scale = noise_scale(&split.stats, cfg.noise_space);
        for iteration in 0..cfg.iterations {
            let result = (|| -> Result<f64> {
                let windows = sample_training_batch(
                    &split.train,
                    &mut streams.batches,
                    cfg.batch_size,
                    cfg.seed_frames,
                    cfg.horizon,
                )?;
                let batch = Batch::from_windows(&windows)?;
                let seeds = noisy(&batch.seeds, cfg, scale.as_deref(), &mut streams.noise)?;
                let (a, b) = stage_one_rollouts(skel, crnn, &seeds, cfg.horizon, threads)?;
                let mut tape = Tape::new();
                let mut ctx = ForwardCtx::train(streams.dropout.random());
                let out = merge_on_tape(&mut tape, &store, &mut ctx, merge, &a, &b)?;
                let truth: Vec<Var> = batch.truth.iter().map(|t| tape.constant(t.clone())).collect();
                let loss = sequence_l2_tape(&mut tape, &out, &truth)?;
                let value = tape.value(loss).item();
                tape.backward(loss, &mut store)?;
                if let Some(c) = cfg.clip_norm {
                    store.clip_grad_norm(c);
                }
                let before = store.clone();
                if let Err(e) = optimizer_step(&mut store, &cfg.optimizer) {
                    store = before;
                    return Err(e);
                }
                Ok(value)
            })();
            match result {
                Ok(loss) => log.records.push(LogRecord { iteration, loss, l_pos: None, l_neg: Some(loss), wall_ms: 0 }),
                Err(source) => {
                    store.zero_grad();
                    if let Some(p) = plan {
                        p.write(&p.last_good_path(), &store)?;
                    }
                    return Err(Error::TrainingFault { iteration, source: Box::new(source) });
                }
            }
            if let Some(p) = plan {
                if cfg.checkpoint_every > 0
                    && (iteration + 1) % cfg.checkpoint_every == 0
                    && iteration + 1 < cfg.iterations
                {
                    p.write(&p.interval_path(iteration + 1), &store)?;
                }
            }
        }
    }
    if let Some(p) = plan {
        p.write(&p.final_path(), &store)?;
    }
    Ok((store, log))
}

/// Run both stages. Stage one trains SkelNet and C-RNN concurrently when
/// `threads` allows; results do not depend on the thread count.
pub fn train_skel_tnet(
    split: &DatasetSplit,
    cfg: &SkelTNetConfig,
    plans: [Option<&CheckpointPlan>; 3],
    threads: usize,
) -> Result<SkelTNetRun> {
    cfg.validate()?;
    let skelnet = SequenceModel::SkelNet(SkelNet::new(cfg.skelnet.clone())?);
    let crnn = SequenceModel::Crnn(Crnn::new(cfg.crnn.clone())?);
    let jobs = [(&skelnet, &cfg.skelnet_train, plans[0]), (&crnn, &cfg.crnn_train, plans[1])];
    let mut trained = par_map(&jobs, threads, |_, &(m, c, p)| train_stage(m, split, c, p)).into_iter();
    let (skelnet_store, skelnet_log) = trained.next().expect("two stages")?;
    let (crnn_store, crnn_log) = trained.next().expect("two stages")?;

    let (merge_store, merge_log) = train_merge(
        (&skelnet, &skelnet_store),
        (&crnn, &crnn_store),
        &cfg.merge,
        split,
        &cfg.merge_train,
        plans[2],
        threads,
    )?;
    Ok(SkelTNetRun {
        pipeline: SkelTNet { skelnet, skelnet_store, crnn, crnn_store, merge: cfg.merge.clone(), merge_store },
        skelnet_log,
        crnn_log,
        merge_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::skeleton::{synthetic_skeleton, SchemeName};

    fn small(iterations: usize) -> (DatasetSplit, SkelTNetConfig) {
        let split = generate_synthetic(
            &SyntheticSpec { count: 3, length: 40, ..SyntheticSpec::default() },
            &synthetic_skeleton(),
        )
        .unwrap();
        let p = split.spec.partition(SchemeName::FivePart, &split.stats.retained).unwrap();
        let mut cfg = SkelTNetConfig::new(SkelNetConfig { branch_dims: vec![8, 8], ..SkelNetConfig::new(p) }, 4);
        cfg.crnn.gru_units = 8;
        cfg.crnn.head_dims = vec![8];
        cfg.merge.hidden_dims = vec![16];
        for t in [&mut cfg.skelnet_train, &mut cfg.crnn_train, &mut cfg.merge_train] {
            t.iterations = iterations;
            t.batch_size = 4;
            t.seed_frames = 2;
        }
        (split, cfg)
    }

    #[test]
    fn stage_two_leaves_stage_one_untouched() {
        let (split, cfg) = small(3);
        let run = train_skel_tnet(&split, &cfg, [None; 3], 2).unwrap();
        let p = &run.pipeline;
        let before = (p.skelnet_store.checksum(), p.crnn_store.checksum());
        let (merge_store, log) = train_merge(
            (&p.skelnet, &p.skelnet_store),
            (&p.crnn, &p.crnn_store),
            &cfg.merge,
            &split,
            &cfg.merge_train,
            None,
            1,
        )
        .unwrap();
        assert_eq!(before, (p.skelnet_store.checksum(), p.crnn_store.checksum()));
        assert_eq!(log.records.len(), 3);
        assert_eq!(merge_store.checksum(), p.merge_store.checksum());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (split, cfg) = small(2);
        let a = train_skel_tnet(&split, &cfg, [None; 3], 1).unwrap();
        let b = train_skel_tnet(&split, &cfg, [None; 3], 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn passthrough_and_average_wiring() {
        let (split, cfg) = small(2);
        let run = train_skel_tnet(&split, &cfg, [None; 3], 1).unwrap();
        let seeds = split.test[0].frames.slice_rows(0, 2).unwrap();
        let p = &run.pipeline;
        let skel = crate::models::predict(&p.skelnet, &p.skelnet_store, &seeds, 4).unwrap();
        let crnn = crate::models::predict(&p.crnn, &p.crnn_store, &seeds, 4).unwrap();
        assert!(p.with_mode(MergeMode::PassthroughSkel).predict(&seeds, 4).unwrap().bit_eq(&skel));
        assert!(p.with_mode(MergeMode::PassthroughCrnn).predict(&seeds, 4).unwrap().bit_eq(&crnn));
        let avg = p.with_mode(MergeMode::Average).predict(&seeds, 4).unwrap();
        let mean = skel.zip_with(&crnn, "mean", |a, b| (a + b) * 0.5).unwrap();
        assert!(avg.bit_eq(&mean));
    }

    #[test]
    fn stage_two_requires_stage_one() {
        let (split, cfg) = small(1);
        let skel = SequenceModel::SkelNet(SkelNet::new(cfg.skelnet.clone()).unwrap());
        let crnn = SequenceModel::Crnn(Crnn::new(cfg.crnn.clone()).unwrap());
        let empty = ParamStore::new();
        let err = train_merge((&skel, &empty), (&crnn, &empty), &cfg.merge, &split, &cfg.merge_train, None, 1);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn merge_loss_kind_is_fixed() {
        let (_, mut cfg) = small(1);
        cfg.merge_train.loss = LossKind::Converging;
        assert!(cfg.validate().is_err());
    }
}
