use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{rollout, unroll, Autoregressive, Conditioning, ForwardCtx};
use crate::numerics::{ParamStore, Tape, Tensor, Var};

/// Weights of the teacher-forced (`alpha`) and free-running (`beta`) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergingLossConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ConvergingLossConfig {
    fn default() -> Self {
        ConvergingLossConfig { alpha: 1.0, beta: 0.1 }
    }
}

impl ConvergingLossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta <= 0.0 {
            return Err(Error::Config(format!(
                "converging loss weights must be non-negative with a positive sum, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn combine(&self, l_pos: f64, l_neg: f64) -> f64 {
        self.alpha * l_pos + self.beta * l_neg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Sampling,
    Converging,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampling" => Ok(LossKind::Sampling),
            "converging" => Ok(LossKind::Converging),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

/// Mean over frames (and batch rows) of the squared Euclidean frame distance.
pub fn sequence_l2_tape(tape: &mut Tape, pred: &[Var], truth: &[Var]) -> Result<Var> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Validation(format!(
            "sequence_l2: {} predicted vs {} target frames",
            pred.len(),
            truth.len()
        )));
    }
    let rows = tape.value(pred[0]).rows();
    let mut terms = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(truth) {
        let d = tape.sub(p, t)?;
        terms.push(tape.sum_of_squares(d)?);
    }
    let total = tape.sum_scalars(&terms)?;
    tape.scale(total, 1.0 / (pred.len() * rows) as f64)
}

/// [`sequence_l2_tape`] on plain `[frames, D]` tensors.
pub fn sequence_l2(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            op: "sequence_l2",
            left: pred.shape().to_vec(),
            right: truth.shape().to_vec(),
        });
    }
    let diff = pred.zip_with(truth, "sequence_l2", |a, b| a - b)?;
    Ok(diff.sum_of_squares() / pred.rows() as f64)
}

/// Loss of the free-running rollout against `truth`.
#[allow(clippy::too_many_arguments)]
pub fn sampling_loss<M: Autoregressive + ?Sized>(
    model: &M,
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &mut ForwardCtx,
    seeds: &[Var],
    truth: &[Var],
    horizon: usize,
) -> Result<Var> {
    check_truth(truth, horizon)?;
    let pred = rollout(model, tape, store, ctx, seeds, horizon, Conditioning::FreeRunning)?;
    sequence_l2_tape(tape, &pred, &truth[..horizon])
}

/// Scalar handles of one converging-loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ConvergingTerms {
    pub total: Var,
    pub l_pos: Var,
    pub l_neg: Var,
}

/// `alpha * L_pos + beta * L_neg`, with teacher inputs equal to `truth`.
#[allow(clippy::too_many_arguments)]
pub fn converging_loss<M: Autoregressive + ?Sized>(
    model: &M,
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &mut ForwardCtx,
    seeds: &[Var],
    truth: &[Var],
    horizon: usize,
    cfg: &ConvergingLossConfig,
) -> Result<ConvergingTerms> {
    converging_loss_with_inputs(model, tape, store, ctx, seeds, truth, truth, horizon, cfg)
}

/// Converging loss where the teacher-forced phase reads `teacher` frames as
/// inputs (e.g. a noisy copy) while both phases are scored against `truth`.
///
/// The two phases branch from one warm-up of the seeds.
#[allow(clippy::too_many_arguments)]
pub fn converging_loss_with_inputs<M: Autoregressive + ?Sized>(
    model: &M,
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &mut ForwardCtx,
    seeds: &[Var],
    truth: &[Var],
    teacher: &[Var],
    horizon: usize,
    cfg: &ConvergingLossConfig,
) -> Result<ConvergingTerms> {
    cfg.validate()?;
    check_truth(truth, horizon)?;
    check_truth(teacher, horizon)?;
    let (&last, prefix) =
        seeds.split_last().ok_or_else(|| Error::Validation("converging loss needs seed frames".into()))?;
    let state = model.warm_up(tape, store, ctx, prefix)?;

    let positive = unroll(
        model,
        tape,
        store,
        ctx,
        state.clone(),
        last,
        horizon,
        Conditioning::TeacherForced(&teacher[..horizon]),
    )?;
    let l_pos = sequence_l2_tape(tape, &positive, &truth[..horizon])?;

    let negative = unroll(model, tape, store, ctx, state, last, horizon, Conditioning::FreeRunning)?;
    let l_neg = sequence_l2_tape(tape, &negative, &truth[..horizon])?;

    let a = tape.scale(l_pos, cfg.alpha)?;
    let b = tape.scale(l_neg, cfg.beta)?;
    let total = tape.add(a, b)?;
    Ok(ConvergingTerms { total, l_pos, l_neg })
}

fn check_truth(truth: &[Var], horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least one frame".into()));
    }
    if truth.len() < horizon {
        return Err(Error::Validation(format!("need {horizon} target frames, got {}", truth.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_by_hand() {
        let a = Tensor::row(&[3.0, 4.0]);
        let b = Tensor::row(&[0.0, 0.0]);
        assert_eq!(sequence_l2(&a, &b).unwrap(), 25.0);
        assert_eq!(sequence_l2(&a, &a).unwrap(), 0.0);
        assert!(sequence_l2(&a, &Tensor::row(&[1.0])).is_err());
    }

    #[test]
    fn l2_matches_double_loop() {
        let pred = Tensor::new(vec![3, 2], vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5]).unwrap();
        let truth = Tensor::new(vec![3, 2], vec![0.0, 1.0, 1.0, -0.25, 0.75, 0.5]).unwrap();
        let mut brute = 0.0;
        for r in 0..3 {
            for c in 0..2 {
                brute += (pred.get(r, c) - truth.get(r, c)).powi(2);
            }
        }
        brute /= 3.0;
        assert!((sequence_l2(&pred, &truth).unwrap() - brute).abs() < 1e-15);

        let mut tape = Tape::new();
        let p: Vec<Var> = (0..3).map(|r| tape.constant(Tensor::row(pred.row_slice(r)))).collect();
        let t: Vec<Var> = (0..3).map(|r| tape.constant(Tensor::row(truth.row_slice(r)))).collect();
        let l = sequence_l2_tape(&mut tape, &p, &t).unwrap();
        assert!((tape.value(l).item() - brute).abs() < 1e-15);
    }

    #[test]
    fn weights_arithmetic() {
        let cfg = ConvergingLossConfig::default();
        assert_eq!(cfg.combine(2.0, 5.0), 2.5);
        assert!(ConvergingLossConfig { alpha: 0.0, beta: 0.0 }.validate().is_err());
        assert!(ConvergingLossConfig { alpha: -1.0, beta: 1.0 }.validate().is_err());
    }
}
