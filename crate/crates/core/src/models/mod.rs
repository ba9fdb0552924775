//! The three networks and the autoregressive rollout they share.
//!
//! Frames travel as `[batch, width]` tensors, one per time step. Every model
//! keeps its weights in its own [`ParamStore`]; the model structs only carry
//! configuration.

mod crnn;
mod merge;
mod skelnet;

pub use crnn::{gru_cell, Crnn, CrnnConfig};
pub use merge::{merge_sequences, MergeConfig, MergeMode};
pub use skelnet::{SkelNet, SkelNetConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tape, Tensor, Var};

/// Negative slope of every leaky ReLU.
pub const LRELU_SLOPE: f64 = 0.2;
pub const DEFAULT_DROPOUT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Lrelu,
    Tanh,
    None,
}

/// Training flag plus the dropout random stream.
#[derive(Debug, Clone)]
pub struct ForwardCtx {
    pub training: bool,
    rng: ChaCha8Rng,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        ForwardCtx { training: false, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    pub fn train(seed: u64) -> Self {
        ForwardCtx { training: true, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub(crate) fn dropout(&mut self, tape: &mut Tape, x: Var, rate: f64) -> Result<Var> {
        tape.dropout(x, rate, self.training, &mut self.rng)
    }
}

/// Register a `[fan_in, fan_out]` weight with Glorot-uniform values and a zero bias.
pub(crate) fn init_linear<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<()> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let w = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
    store.insert(format!("{prefix}.w"), Tensor::new(vec![fan_in, fan_out], w)?)?;
    store.insert(format!("{prefix}.b"), Tensor::zeros(1, fan_out))?;
    Ok(())
}

pub(crate) fn linear(tape: &mut Tape, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let w = tape.param(store, &format!("{prefix}.w"))?;
    let b = tape.param(store, &format!("{prefix}.b"))?;
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

pub(crate) fn activate(tape: &mut Tape, x: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Lrelu => tape.lrelu(x, LRELU_SLOPE),
        Activation::Tanh => tape.tanh(x),
        Activation::None => Ok(x),
    }
}

pub(crate) fn linear_count(fan_in: usize, fan_out: usize) -> usize {
    fan_in * fan_out + fan_out
}

/// What feeds step `t + 1` of a rollout.
#[derive(Debug, Clone, Copy)]
pub enum Conditioning<'a> {
    /// The model's own previous prediction.
    FreeRunning,
    /// Ground-truth frame `t` (must hold at least `horizon - 1` frames).
    TeacherForced(&'a [Var]),
}

/// Recurrent context carried between steps.
#[derive(Debug, Clone, Default)]
pub struct RollState {
    /// Most recent frames, oldest first, excluding the next input.
    pub window: Vec<Var>,
    pub hidden: Option<Var>,
}

pub trait Autoregressive {
    fn input_dim(&self) -> usize;

    /// Minimum number of seed frames.
    fn seed_length(&self) -> usize {
        1
    }

    /// Consume every seed frame except the last, which becomes the first input.
    fn warm_up(&self, tape: &mut Tape, store: &ParamStore, ctx: &mut ForwardCtx, seeds: &[Var]) -> Result<RollState>;

    /// Predict the next frame from `input` and advance the state.
    fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &mut ForwardCtx,
        state: &mut RollState,
        input: Var,
    ) -> Result<Var>;
}

/// Unroll `horizon` steps from a warmed-up state; `first` is the last seed.
#[allow(clippy::too_many_arguments)]
pub fn unroll<M: Autoregressive + ?Sized>(
    model: &M,
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &mut ForwardCtx,
    mut state: RollState,
    first: Var,
    horizon: usize,
    cond: Conditioning<'_>,
) -> Result<Vec<Var>> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least one frame".into()));
    }
    if let Conditioning::TeacherForced(truth) = cond {
        if truth.len() + 1 < horizon {
            return Err(Error::Validation(format!(
                "teacher forcing needs {} truth frames, got {}",
                horizon - 1,
                truth.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(horizon);
    let mut input = first;
    for t in 0..horizon {
        let y = model.step(tape, store, ctx, &mut state, input)?;
        out.push(y);
        input = match cond {
            Conditioning::FreeRunning => y,
            Conditioning::TeacherForced(truth) if t + 1 < horizon => truth[t],
            Conditioning::TeacherForced(_) => y,
        };
    }
    Ok(out)
}

/// Warm up on `seeds` and unroll.
pub fn rollout<M: Autoregressive + ?Sized>(
    model: &M,
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &mut ForwardCtx,
    seeds: &[Var],
    horizon: usize,
    cond: Conditioning<'_>,
) -> Result<Vec<Var>> {
    let (&last, prefix) =
        seeds.split_last().ok_or_else(|| Error::Validation("rollout needs at least one seed frame".into()))?;
    if seeds.len() < model.seed_length() {
        return Err(Error::Validation(format!("model needs {} seed frames, got {}", model.seed_length(), seeds.len())));
    }
    let state = model.warm_up(tape, store, ctx, prefix)?;
    unroll(model, tape, store, ctx, state, last, horizon, cond)
}

/// Evaluation-mode free-running prediction for one `[frames, width]` seed sequence.
pub fn predict<M: Autoregressive + ?Sized>(
    model: &M,
    store: &ParamStore,
    seeds: &Tensor,
    horizon: usize,
) -> Result<Tensor> {
    if seeds.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "predict",
            left: seeds.shape().to_vec(),
            right: vec![model.input_dim()],
        });
    }
    let mut tape = Tape::new();
    let frames: Vec<Var> = (0..seeds.rows()).map(|r| tape.constant(Tensor::row(seeds.row_slice(r)))).collect();
    let mut ctx = ForwardCtx::eval();
    let out = rollout(model, &mut tape, store, &mut ctx, &frames, horizon, Conditioning::FreeRunning)?;
    let vals: Vec<&Tensor> = out.iter().map(|&v| tape.value(v)).collect();
    Tensor::stack_rows(&vals)
}

/// Either stage-one model, for code that picks one at runtime.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceModel {
    SkelNet(SkelNet),
    Crnn(Crnn),
}

impl SequenceModel {
    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        match self {
            SequenceModel::SkelNet(m) => m.init(store, rng),
            SequenceModel::Crnn(m) => m.init(store, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            SequenceModel::SkelNet(m) => m.config.param_count(),
            SequenceModel::Crnn(m) => m.config.param_count(),
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, SequenceModel::Crnn(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SequenceModel::SkelNet(_) => "skelnet",
            SequenceModel::Crnn(_) => "crnn",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            SequenceModel::SkelNet(m) => serde_json::json!({"model": "skelnet", "config": m.config}),
            SequenceModel::Crnn(m) => serde_json::json!({"model": "crnn", "config": m.config}),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let cfg = v.get("config").cloned().unwrap_or_default();
        match v.get("model").and_then(|m| m.as_str()) {
            Some("skelnet") => Ok(SequenceModel::SkelNet(SkelNet::new(serde_json::from_value(cfg)?)?)),
            Some("crnn") => Ok(SequenceModel::Crnn(Crnn::new(serde_json::from_value(cfg)?)?)),
            other => Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        }
    }
}

impl Autoregressive for SequenceModel {
    fn input_dim(&self) -> usize {
        match self {
            SequenceModel::SkelNet(m) => m.input_dim(),
            SequenceModel::Crnn(m) => m.input_dim(),
        }
    }

    fn seed_length(&self) -> usize {
        match self {
            SequenceModel::SkelNet(m) => m.seed_length(),
            SequenceModel::Crnn(m) => m.seed_length(),
        }
    }

    fn warm_up(&self, tape: &mut Tape, store: &ParamStore, ctx: &mut ForwardCtx, seeds: &[Var]) -> Result<RollState> {
        match self {
            SequenceModel::SkelNet(m) => m.warm_up(tape, store, ctx, seeds),
            SequenceModel::Crnn(m) => m.warm_up(tape, store, ctx, seeds),
        }
    }

    fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &mut ForwardCtx,
        state: &mut RollState,
        input: Var,
    ) -> Result<Var> {
        match self {
            SequenceModel::SkelNet(m) => m.step(tape, store, ctx, state, input),
            SequenceModel::Crnn(m) => m.step(tape, store, ctx, state, input),
        }
    }
}
