//! Motion sequences, dataset splits, window sampling and synthetic data.

mod seqfile;
mod synthetic;
mod windows;

pub use seqfile::{emit_sequence, parse_sequence, read_sequence, write_sequence};
pub use synthetic::{generate_raw, generate_synthetic, ActivityProfile, GroupOscillator, SyntheticSpec};
pub use windows::{sample_test_windows, sample_training_batch, sample_windows_by_activity, Batch, Window};

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rotations::{apply_preprocess, fit_preprocess, PreprocessStats};
use crate::skeleton::SkeletonSpec;

/// Default frame period: 25 frames per second.
pub const DEFAULT_PERIOD_MS: f64 = 40.0;

/// One recorded (or generated) motion: `frames` is `[F, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub activity: String,
    pub frames: Tensor,
    pub period_ms: f64,
}

impl MotionSequence {
    pub fn new(activity: impl Into<String>, frames: Tensor, period_ms: f64) -> Result<Self> {
        let activity = activity.into();
        if activity.is_empty() || activity.contains(char::is_whitespace) {
            return Err(Error::Validation(format!("invalid activity label `{activity}`")));
        }
        if !(period_ms > 0.0 && period_ms.is_finite()) {
            return Err(Error::Validation(format!("frame period {period_ms} must be positive")));
        }
        if !frames.is_finite() {
            return Err(Error::Validation(format!("sequence `{activity}` has non-finite values")));
        }
        Ok(MotionSequence { activity, frames, period_ms })
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }
}

/// Train and test sequences, preprocessed with statistics from `train` only.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub spec: SkeletonSpec,
    pub stats: PreprocessStats,
    pub train: Vec<MotionSequence>,
    pub test: Vec<MotionSequence>,
}

impl DatasetSplit {
    /// Fit preprocessing on `train_raw` and apply it to both splits.
    pub fn from_raw(
        spec: SkeletonSpec,
        train_raw: &[MotionSequence],
        test_raw: &[MotionSequence],
        still_threshold: f64,
    ) -> Result<Self> {
        if train_raw.is_empty() {
            return Err(Error::Validation("training split is empty".into()));
        }
        if test_raw.is_empty() {
            return Err(Error::Validation("test split is empty".into()));
        }
        for s in train_raw.iter().chain(test_raw) {
            if s.dim() != spec.dim() {
                return Err(Error::Validation(format!(
                    "sequence `{}` has {} dims, skeleton has {}",
                    s.activity,
                    s.dim(),
                    spec.dim()
                )));
            }
        }
        let frames: Vec<&Tensor> = train_raw.iter().map(|s| &s.frames).collect();
        let stats = fit_preprocess(&frames, spec.dim(), still_threshold)?;
        let apply = |seqs: &[MotionSequence]| {
            seqs.iter()
                .map(|s| {
                    Ok(MotionSequence {
                        activity: s.activity.clone(),
                        frames: apply_preprocess(&s.frames, &stats)?,
                        period_ms: s.period_ms,
                    })
                })
                .collect::<Result<Vec<_>>>()
        };
        let train = apply(train_raw)?;
        let test = apply(test_raw)?;
        Ok(DatasetSplit { spec, stats, train, test })
    }

    /// Width of preprocessed frames.
    pub fn input_dim(&self) -> usize {
        self.stats.retained_dim()
    }

    pub fn period_ms(&self) -> f64 {
        self.train[0].period_ms
    }

    /// Sorted, de-duplicated activity labels of the test split.
    pub fn activities(&self) -> Vec<String> {
        let mut a: Vec<String> = self.test.iter().map(|s| s.activity.clone()).collect();
        a.sort();
        a.dedup();
        a
    }
}

/// Raw sequences from `<root>/<activity>/<train|test>/<name>.seq`, sorted by path.
pub fn load_raw(root: &Path, spec: &SkeletonSpec) -> Result<(Vec<MotionSequence>, Vec<MotionSequence>)> {
    let read_dir = |p: &Path| -> Result<Vec<std::path::PathBuf>> {
        let mut v: Vec<_> = std::fs::read_dir(p)
            .map_err(|e| Error::io(p, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(p, err)))
            .collect::<Result<_>>()?;
        v.sort();
        Ok(v)
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for activity_dir in read_dir(root)?.into_iter().filter(|p| p.is_dir()) {
        for (split, out) in [("train", &mut train), ("test", &mut test)] {
            let dir = activity_dir.join(split);
            if !dir.is_dir() {
                continue;
            }
            for file in read_dir(&dir)? {
                if file.extension().and_then(|e| e.to_str()) != Some("seq") {
                    continue;
                }
                let seq = read_sequence(&file)?;
                if seq.dim() != spec.dim() {
                    return Err(Error::parse(
                        file.display(),
                        1,
                        format!("sequence has {} dims but skeleton declares {}", seq.dim(), spec.dim()),
                    ));
                }
                out.push(seq);
            }
        }
    }
    Ok((train, test))
}

/// Load a dataset directory and preprocess it.
pub fn load_dataset(root: &Path, spec: &SkeletonSpec, still_threshold: f64) -> Result<DatasetSplit> {
    let (train, test) = load_raw(root, spec)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Validation(format!(
            "{}: empty split ({} train, {} test sequences)",
            root.display(),
            train.len(),
            test.len()
        )));
    }
    DatasetSplit::from_raw(spec.clone(), &train, &test, still_threshold)
}

/// Write raw sequences in the dataset directory layout.
pub fn write_dataset(root: &Path, train: &[MotionSequence], test: &[MotionSequence]) -> Result<()> {
    for (split, seqs) in [("train", train), ("test", test)] {
        let mut counters: std::collections::HashMap<&str, usize> = Default::default();
        for s in seqs {
            let dir = root.join(&s.activity).join(split);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let n = counters.entry(s.activity.as_str()).or_default();
            write_sequence(&dir.join(format!("{:04}.seq", n)), s)?;
            *n += 1;
        }
    }
    Ok(())
}
