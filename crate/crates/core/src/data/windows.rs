use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MotionSequence;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A seed/target cut from one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub activity: String,
    /// Index into the sequence list the window was drawn from.
    pub sequence: usize,
    pub start: usize,
    /// `[seed_length, D]`
    pub seeds: Tensor,
    /// `[horizon, D]`
    pub truth: Tensor,
}

fn cut(seqs: &[MotionSequence], idx: usize, start: usize, seed_length: usize, horizon: usize) -> Result<Window> {
    let s = &seqs[idx];
    Ok(Window {
        activity: s.activity.clone(),
        sequence: idx,
        start,
        seeds: s.frames.slice_rows(start, start + seed_length)?,
        truth: s.frames.slice_rows(start + seed_length, start + seed_length + horizon)?,
    })
}

/// Draw `count` windows with a fixed seed: sequence uniform, start uniform.
pub fn sample_test_windows(
    sequences: &[MotionSequence],
    count: usize,
    seed: u64,
    seed_length: usize,
    horizon: usize,
) -> Result<Vec<Window>> {
    if sequences.is_empty() {
        return Err(Error::Validation("no sequences to sample windows from".into()));
    }
    if seed_length == 0 || horizon == 0 {
        return Err(Error::Config("seed_length and horizon must be positive".into()));
    }
    let need = seed_length + horizon;
    if let Some(s) = sequences.iter().find(|s| s.len() < need) {
        return Err(Error::Validation(format!(
            "test sequence `{}` has {} frames; windows need {need}",
            s.activity,
            s.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let idx = rng.random_range(0..sequences.len());
            let start = rng.random_range(0..=sequences[idx].len() - need);
            cut(sequences, idx, start, seed_length, horizon)
        })
        .collect()
}

/// `count` windows per activity, each activity drawn with the same `seed`.
pub fn sample_windows_by_activity(
    sequences: &[MotionSequence],
    count: usize,
    seed: u64,
    seed_length: usize,
    horizon: usize,
) -> Result<IndexMap<String, Vec<Window>>> {
    let mut labels: Vec<&str> = sequences.iter().map(|s| s.activity.as_str()).collect();
    labels.sort();
    labels.dedup();
    let mut out = IndexMap::new();
    for label in labels {
        let (idx, subset): (Vec<usize>, Vec<MotionSequence>) =
            sequences.iter().enumerate().filter(|(_, s)| s.activity == label).map(|(i, s)| (i, s.clone())).unzip();
        let mut windows = sample_test_windows(&subset, count, seed, seed_length, horizon)?;
        for w in &mut windows {
            w.sequence = idx[w.sequence];
        }
        out.insert(label.to_string(), windows);
    }
    Ok(out)
}

/// Minibatch laid out per time step: each tensor is `[batch, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub seeds: Vec<Tensor>,
    pub truth: Vec<Tensor>,
}

impl Batch {
    /// Stack windows of equal lengths into per-step batches.
    pub fn from_windows(windows: &[Window]) -> Result<Batch> {
        let first = windows.first().ok_or_else(|| Error::Validation("empty batch".into()))?;
        let step = |t: usize, pick: &dyn Fn(&Window) -> &Tensor| -> Result<Tensor> {
            let rows: Vec<Tensor> = windows.iter().map(|w| Tensor::row(pick(w).row_slice(t))).collect();
            Tensor::stack_rows(&rows.iter().collect::<Vec<_>>())
        };
        let seeds = (0..first.seeds.rows()).map(|t| step(t, &|w| &w.seeds)).collect::<Result<_>>()?;
        let truth = (0..first.truth.rows()).map(|t| step(t, &|w| &w.truth)).collect::<Result<_>>()?;
        Ok(Batch { seeds, truth })
    }
}

/// Training windows: sequences weighted by their number of valid start
/// positions, start uniform within the chosen sequence.
pub fn sample_training_batch<R: Rng>(
    sequences: &[MotionSequence],
    rng: &mut R,
    batch: usize,
    seed_length: usize,
    horizon: usize,
) -> Result<Vec<Window>> {
    let need = seed_length + horizon;
    let weights: Vec<usize> = sequences.iter().map(|s| (s.len() + 1).saturating_sub(need)).collect();
    let total: usize = weights.iter().sum();
    if total == 0 {
        return Err(Error::Validation(format!("no training sequence is long enough for {need}-frame windows")));
    }
    (0..batch)
        .map(|_| {
            let mut pick = rng.random_range(0..total);
            let idx = weights
                .iter()
                .position(|&w| {
                    if pick < w {
                        true
                    } else {
                        pick -= w;
                        false
                    }
                })
                .expect("pick < total");
            cut(sequences, idx, pick, seed_length, horizon)
        })
        .collect()
}
