//! Smooth oscillator motion with one frequency band per body part.
//!
//! Every dimension of a five-part group is a phase-shifted copy of the
//! group's oscillator, so a group's frame determines its own next frame while
//! different groups share nothing when `coupling` is 0.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, MotionSequence, DEFAULT_PERIOD_MS};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rotations::DEFAULT_STILL_THRESHOLD;
use crate::skeleton::{SchemeName, SkeletonSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOscillator {
    /// Frequency range in Hz.
    pub freq_hz: (f64, f64),
    pub amplitude: (f64, f64),
    pub phase: (f64, f64),
}

/// Per-group amplitude gains for one activity label, in five-part order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub name: String,
    pub gains: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// One oscillator per five-part group.
    pub groups: Vec<GroupOscillator>,
    pub activities: Vec<ActivityProfile>,
    /// Weight of an oscillator shared by every dimension, in `[0, 1]`.
    pub coupling: f64,
    /// Frames per sequence.
    pub length: usize,
    /// Sequences per activity.
    pub count: usize,
    pub seed: u64,
    pub period_ms: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let osc =
            |lo: f64, hi: f64| GroupOscillator { freq_hz: (lo, hi), amplitude: (0.4, 0.6), phase: (0.0, 2.0 * PI) };
        SyntheticSpec {
            groups: vec![osc(0.55, 0.65), osc(0.85, 0.95), osc(1.15, 1.25), osc(1.45, 1.55), osc(0.3, 0.4)],
            activities: vec![
                ActivityProfile { name: "walking".into(), gains: [0.3, 0.3, 1.0, 1.0, 0.3] },
                ActivityProfile { name: "waving".into(), gains: [1.0, 1.0, 0.2, 0.2, 0.3] },
            ],
            coupling: 0.0,
            length: 200,
            count: 10,
            seed: 0,
            period_ms: DEFAULT_PERIOD_MS,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups.len() != 5 {
            return Err(Error::Config(format!("synthetic spec needs 5 group oscillators, got {}", self.groups.len())));
        }
        if self.groups.iter().any(|g| g.freq_hz.0 <= 0.0 || g.freq_hz.1 < g.freq_hz.0) {
            return Err(Error::Config("oscillator frequencies must be positive ranges".into()));
        }
        if self.groups.iter().any(|g| g.amplitude.0 < 0.0 || g.amplitude.1 < g.amplitude.0) {
            return Err(Error::Config("amplitude ranges must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::Config(format!("coupling {} outside [0, 1]", self.coupling)));
        }
        if self.length < 2 || self.count == 0 || self.activities.is_empty() {
            return Err(Error::Config("synthetic spec needs length >= 2, count >= 1 and an activity".into()));
        }
        if self.period_ms.is_nan() || self.period_ms <= 0.0 {
            return Err(Error::Config("frame period must be positive".into()));
        }
        Ok(())
    }

    /// Upper bound on `|value|` of any generated sample.
    pub fn amplitude_bound(&self) -> f64 {
        let max_amp = self.groups.iter().map(|g| g.amplitude.1).fold(0.0, f64::max);
        let max_gain = self.activities.iter().flat_map(|a| a.gains.iter().map(|g| g.abs())).fold(0.0, f64::max);
        max_amp * max_gain
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn waveform(phase: f64) -> f64 {
    0.7 * phase.sin() + 0.3 * (2.0 * phase).sin()
}

/// Generate raw (exponential-map) train and test sequences, split 80/20 by
/// whole sequences within each activity.
pub fn generate_raw(
    spec: &SyntheticSpec,
    skeleton: &SkeletonSpec,
) -> Result<(Vec<MotionSequence>, Vec<MotionSequence>)> {
    spec.validate()?;
    let all: Vec<usize> = (0..skeleton.dim()).collect();
    let partition = skeleton.partition(SchemeName::FivePart, &all)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dt = spec.period_ms / 1000.0;
    let d = skeleton.dim();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for profile in &spec.activities {
        let n_train = ((spec.count as f64) * 0.8).round().clamp(1.0, (spec.count.max(2) - 1) as f64) as usize;
        for k in 0..spec.count {
            let groups: Vec<(f64, f64, f64)> = spec
                .groups
                .iter()
                .zip(profile.gains)
                .map(|(g, gain)| {
                    (uniform(&mut rng, g.freq_hz), uniform(&mut rng, g.phase), gain * uniform(&mut rng, g.amplitude))
                })
                .collect();
            let common_freq = uniform(&mut rng, (0.2, 0.3));
            let common_phase = uniform(&mut rng, (0.0, 2.0 * PI));

            let mut data = vec![0.0; spec.length * d];
            for t in 0..spec.length {
                let time = t as f64 * dt;
                let common = waveform(2.0 * PI * common_freq * time + common_phase);
                for (group, &(freq, phase, amp)) in partition.groups.iter().zip(&groups) {
                    let n = group.dims.len() as f64;
                    for (j, &dim) in group.dims.iter().enumerate() {
                        let offset = PI * j as f64 / n;
                        let own = waveform(2.0 * PI * freq * time + phase + offset);
                        let mixed = (1.0 - spec.coupling) * own + spec.coupling * common;
                        data[t * d + dim] = amp * mixed;
                    }
                }
            }
            let seq = MotionSequence::new(&profile.name, Tensor::new(vec![spec.length, d], data)?, spec.period_ms)?;
            if k < n_train {
                train.push(seq);
            } else {
                test.push(seq);
            }
        }
    }
    Ok((train, test))
}

/// Generate and preprocess a synthetic dataset.
pub fn generate_synthetic(spec: &SyntheticSpec, skeleton: &SkeletonSpec) -> Result<DatasetSplit> {
    let (train, test) = generate_raw(spec, skeleton)?;
    DatasetSplit::from_raw(skeleton.clone(), &train, &test, DEFAULT_STILL_THRESHOLD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotations::fit_preprocess;
    use crate::skeleton::synthetic_skeleton;

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn uncoupled_groups_are_uncorrelated() {
        let skel = synthetic_skeleton();
        let spec = SyntheticSpec { length: 10_000, count: 2, ..SyntheticSpec::default() };
        let (train, _) = generate_raw(&spec, &skel).unwrap();
        let f = &train[0].frames;
        let col = |c: usize| (0..f.rows()).map(|r| f.get(r, c)).collect::<Vec<_>>();
        let five = skel.partition(SchemeName::FivePart, &(0..54).collect::<Vec<_>>()).unwrap();
        let mut worst = 0.0f64;
        for (gi, a) in five.groups.iter().enumerate() {
            for b in &five.groups[gi + 1..] {
                for &da in &a.dims {
                    for &db in &b.dims {
                        worst = worst.max(correlation(&col(da), &col(db)).abs());
                    }
                }
            }
        }
        assert!(worst < 0.1, "max cross-group correlation {worst}");
    }

    #[test]
    fn zero_amplitude_is_all_still() {
        let skel = synthetic_skeleton();
        let mut spec = SyntheticSpec { count: 2, length: 20, ..SyntheticSpec::default() };
        for g in &mut spec.groups {
            g.amplitude = (0.0, 0.0);
        }
        let (train, _) = generate_raw(&spec, &skel).unwrap();
        let frames: Vec<&Tensor> = train.iter().map(|s| &s.frames).collect();
        let stats = fit_preprocess(&frames, 54, DEFAULT_STILL_THRESHOLD).unwrap();
        assert_eq!(stats.still.len(), 54);
    }

    #[test]
    fn seeded_and_bounded() {
        let skel = synthetic_skeleton();
        let spec = SyntheticSpec { coupling: 0.3, ..SyntheticSpec::default() };
        let a = generate_raw(&spec, &skel).unwrap();
        let b = generate_raw(&spec, &skel).unwrap();
        assert!(a.0.iter().zip(&b.0).all(|(x, y)| x.frames.bit_eq(&y.frames)));
        let bound = spec.amplitude_bound();
        assert!(a.0.iter().chain(&a.1).all(|s| s.frames.data().iter().all(|v| v.abs() <= bound)));
        assert_eq!(a.0.len(), 16);
        assert_eq!(a.1.len(), 4);
    }
}
