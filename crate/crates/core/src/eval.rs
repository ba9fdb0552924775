//! Per-horizon angle error, mean error of frames (MoF), and report files.
//!
//! Predictions are made in preprocessed space, mapped back with
//! [`invert_preprocess`], and scored with [`frame_euler_error`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{sample_windows_by_activity, DatasetSplit, Window};
use crate::error::{Error, Result};
use crate::models::{predict, SequenceModel};
use crate::numerics::{ParamStore, Tensor};
use crate::parallel::par_map;
use crate::rotations::{frame_euler_error, invert_preprocess, joint_sq_errors, PreprocessStats};
use crate::skeleton::{SchemeName, SkeletonSpec};
use crate::training::{add_gaussian_noise, SkelTNet};

pub const REPORT_SCHEMA: &str = "skelnet-eval/1";
pub const STD_DEFINITION: &str = "population standard deviation of per-activity MoF";
pub const DEFAULT_SAMPLER_SEED: u64 = 1_234_567_890;
pub const DEFAULT_WINDOWS: usize = 8;

/// Anything that turns `[k, D]` preprocessed seeds into `horizon` predicted frames.
pub trait Predictor: Sync {
    fn predict(&self, seeds: &Tensor, horizon: usize) -> Result<Tensor>;
}

impl<F> Predictor for F
where
    F: Fn(&Tensor, usize) -> Result<Tensor> + Sync,
{
    fn predict(&self, seeds: &Tensor, horizon: usize) -> Result<Tensor> {
        self(seeds, horizon)
    }
}

/// A stage-one model with its weights.
pub struct ModelPredictor<'a> {
    pub model: &'a SequenceModel,
    pub store: &'a ParamStore,
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, seeds: &Tensor, horizon: usize) -> Result<Tensor> {
        predict(self.model, self.store, seeds, horizon)
    }
}

impl Predictor for SkelTNet {
    fn predict(&self, seeds: &Tensor, horizon: usize) -> Result<Tensor> {
        SkelTNet::predict(self, seeds, horizon)
    }
}

/// Scoring context: how to map predictions back and which skeleton to score on.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    pub stats: &'a PreprocessStats,
    pub spec: &'a SkeletonSpec,
    pub threads: usize,
}

/// Inverted-space `[horizon, raw D]` prediction and truth for one window.
fn inverted_pair(pred: &dyn Predictor, w: &Window, horizon: usize, sc: &Scorer<'_>) -> Result<(Tensor, Tensor)> {
    if w.truth.rows() < horizon {
        return Err(Error::Validation(format!(
            "horizon of {horizon} frames exceeds the window's {} truth frames",
            w.truth.rows()
        )));
    }
    let out = pred.predict(&w.seeds, horizon)?;
    if out.rows() != horizon || out.cols() != w.truth.cols() {
        return Err(Error::ShapeMismatch {
            op: "evaluate",
            left: out.shape().to_vec(),
            right: vec![horizon, w.truth.cols()],
        });
    }
    let p = invert_preprocess(&out, sc.stats)?;
    let t = invert_preprocess(&w.truth.slice_rows(0, horizon)?, sc.stats)?;
    Ok((p, t))
}

/// `errors[w][f]`: angle error of frame `f` in window `w`.
fn error_matrix(pred: &dyn Predictor, windows: &[Window], horizon: usize, sc: &Scorer<'_>) -> Result<Vec<Vec<f64>>> {
    par_map(windows, sc.threads, |_, w| {
        let (p, t) = inverted_pair(pred, w, horizon, sc)?;
        (0..horizon).map(|f| frame_euler_error(p.row_slice(f), t.row_slice(f), sc.spec)).collect()
    })
    .into_iter()
    .collect()
}

/// Mean over windows of each frame's error, reduced in window order.
fn per_frame_mean(errors: &[Vec<f64>], horizon: usize) -> Vec<f64> {
    (0..horizon).map(|f| errors.iter().map(|e| e[f]).sum::<f64>() / errors.len() as f64).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonError {
    pub ms: f64,
    pub error: f64,
}

/// Mean error over `windows` at each horizon; horizon `h` ms scores predicted frame `h / period`.
pub fn eval_horizons(
    pred: &dyn Predictor,
    windows: &[Window],
    horizons_ms: &[f64],
    period_ms: f64,
    sc: &Scorer<'_>,
) -> Result<Vec<HorizonError>> {
    if windows.is_empty() {
        return Err(Error::Validation("no windows to evaluate".into()));
    }
    let frames =
        horizons_ms.iter().map(|&ms| crate::training::horizon_frames(ms, period_ms)).collect::<Result<Vec<_>>>()?;
    let Some(&longest) = frames.iter().max() else {
        return Ok(Vec::new());
    };
    let errors = error_matrix(pred, windows, longest, sc)?;
    let curve = per_frame_mean(&errors, longest);
    Ok(horizons_ms.iter().zip(&frames).map(|(&ms, &f)| HorizonError { ms, error: curve[f - 1] }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityMof {
    pub activity: String,
    pub mof: f64,
    /// Mean error of each predicted frame over the windows; `mof` is its mean.
    pub per_frame: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MofSummary {
    pub activities: Vec<ActivityMof>,
    pub average: f64,
    pub std: f64,
}

/// Population standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// MoF per activity over `horizon` frames, plus mean and population std across activities.
pub fn eval_mof(
    pred: &dyn Predictor,
    by_activity: &IndexMap<String, Vec<Window>>,
    horizon: usize,
    sc: &Scorer<'_>,
) -> Result<MofSummary> {
    if by_activity.is_empty() || by_activity.values().any(|w| w.is_empty()) {
        return Err(Error::Validation("eval_mof needs at least one window per activity".into()));
    }
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least one frame".into()));
    }
    let mut activities = Vec::with_capacity(by_activity.len());
    for (name, windows) in by_activity {
        let errors = error_matrix(pred, windows, horizon, sc)?;
        let per_frame = per_frame_mean(&errors, horizon);
        activities.push(ActivityMof { activity: name.clone(), mof: mean(&per_frame), per_frame });
    }
    let mofs: Vec<f64> = activities.iter().map(|a| a.mof).collect();
    Ok(MofSummary { average: mean(&mofs), std: population_std(&mofs), activities })
}

/// Per-frame error restricted to each group of `scheme`, averaged over windows.
pub fn eval_group_curves(
    pred: &dyn Predictor,
    windows: &[Window],
    horizon: usize,
    scheme: SchemeName,
    sc: &Scorer<'_>,
) -> Result<Vec<GroupCurve>> {
    let map = sc.spec.resolved_group_map(scheme)?;
    let joint_index: IndexMap<&str, usize> =
        sc.spec.joints().iter().enumerate().map(|(i, j)| (j.name.as_str(), i)).collect();
    let members: Vec<Vec<usize>> =
        map.values().map(|names| names.iter().filter_map(|n| joint_index.get(n.as_str()).copied()).collect()).collect();
    let per_window: Vec<Vec<Vec<f64>>> = par_map(windows, sc.threads, |_, w| {
        let (p, t) = inverted_pair(pred, w, horizon, sc)?;
        (0..horizon)
            .map(|f| {
                let sq = joint_sq_errors(p.row_slice(f), t.row_slice(f), sc.spec)?;
                Ok(members.iter().map(|m| m.iter().map(|&j| sq[j]).sum::<f64>().sqrt()).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(map
        .keys()
        .enumerate()
        .map(|(g, name)| GroupCurve {
            group: name.clone(),
            per_frame: (0..horizon)
                .map(|f| per_window.iter().map(|w| w[f][g]).sum::<f64>() / per_window.len() as f64)
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCurve {
    pub group: String,
    pub per_frame: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityReport {
    pub activity: String,
    pub horizons: Vec<HorizonError>,
    pub mof: f64,
    pub per_frame: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<GroupCurve>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub sampler_seed: u64,
    pub windows_per_activity: usize,
    pub period_ms: f64,
    pub horizon_frames: usize,
    pub std_definition: String,
    /// Checksums (or names) of the evaluated weights.
    pub checkpoints: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_scheme: Option<SchemeName>,
    pub activities: Vec<ActivityReport>,
    pub mof_average: f64,
    pub mof_std: f64,
    #[serde(default)]
    pub run_config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub windows: usize,
    pub sampler_seed: u64,
    pub seed_frames: usize,
    pub horizon_frames: usize,
    pub horizons_ms: Vec<f64>,
    pub group_scheme: Option<SchemeName>,
    /// Gaussian noise added to the seed frames.
    pub noise_variance: f64,
    pub noise_seed: u64,
}

impl EvalOptions {
    pub fn new(seed_frames: usize, horizon_frames: usize) -> Self {
        EvalOptions {
            windows: DEFAULT_WINDOWS,
            sampler_seed: DEFAULT_SAMPLER_SEED,
            seed_frames,
            horizon_frames,
            horizons_ms: vec![80.0, 160.0, 240.0, 320.0, 400.0],
            group_scheme: None,
            noise_variance: 0.0,
            noise_seed: 0,
        }
    }
}

/// Replace each window's seeds with a noisy copy; window `i` uses `seed + i`.
pub fn noisy_windows(windows: &[Window], variance: f64, seed: u64) -> Result<Vec<Window>> {
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            Ok(Window { seeds: add_gaussian_noise(&w.seeds, variance, seed.wrapping_add(i as u64))?, ..w.clone() })
        })
        .collect()
}

/// Sample the fixed test windows and compute every metric.
pub fn evaluate(
    pred: &dyn Predictor,
    split: &DatasetSplit,
    opts: &EvalOptions,
    checkpoints: Vec<String>,
    threads: usize,
) -> Result<EvalReport> {
    let period = split.period_ms();
    let longest_ms = opts.horizon_frames as f64 * period;
    let horizons: Vec<f64> = opts.horizons_ms.iter().copied().filter(|&ms| ms <= longest_ms + 1e-9).collect();
    let mut by_activity = sample_windows_by_activity(
        &split.test,
        opts.windows,
        opts.sampler_seed,
        opts.seed_frames,
        opts.horizon_frames,
    )?;
    if opts.noise_variance > 0.0 {
        for windows in by_activity.values_mut() {
            *windows = noisy_windows(windows, opts.noise_variance, opts.noise_seed)?;
        }
    }
    let sc = Scorer { stats: &split.stats, spec: &split.spec, threads };
    let mof = eval_mof(pred, &by_activity, opts.horizon_frames, &sc)?;
    let mut activities = Vec::with_capacity(mof.activities.len());
    for (a, windows) in mof.activities.into_iter().zip(by_activity.values()) {
        let horizons =
            if horizons.is_empty() { Vec::new() } else { eval_horizons(pred, windows, &horizons, period, &sc)? };
        let groups = match opts.group_scheme {
            Some(s) => Some(eval_group_curves(pred, windows, opts.horizon_frames, s, &sc)?),
            None => None,
        };
        activities.push(ActivityReport { activity: a.activity, horizons, mof: a.mof, per_frame: a.per_frame, groups });
    }
    Ok(EvalReport {
        schema: REPORT_SCHEMA.into(),
        sampler_seed: opts.sampler_seed,
        windows_per_activity: opts.windows,
        period_ms: period,
        horizon_frames: opts.horizon_frames,
        std_definition: STD_DEFINITION.into(),
        checkpoints,
        group_scheme: opts.group_scheme,
        activities,
        mof_average: mof.average,
        mof_std: mof.std,
        run_config: serde_json::Value::Null,
    })
}

/// Plot CSV for one activity: `frame_index,ms,error`, frame index starting at 1.
pub fn plot_csv(report: &EvalReport, activity: &ActivityReport) -> String {
    let mut out = String::from("frame_index,ms,error\n");
    for (i, e) in activity.per_frame.iter().enumerate() {
        let f = i + 1;
        writeln!(out, "{f},{},{e}", f as f64 * report.period_ms).expect("write to String");
    }
    out
}

/// Write `report.json` and one `plot_<activity>.csv` per activity into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(report)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    for a in &report.activities {
        let path = dir.join(format!("plot_{}.csv", a.activity));
        std::fs::write(&path, plot_csv(report, a)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::skeleton::synthetic_skeleton;

    fn split() -> DatasetSplit {
        generate_synthetic(&SyntheticSpec { count: 5, length: 60, ..SyntheticSpec::default() }, &synthetic_skeleton())
            .unwrap()
    }

    /// Looks the seeds up in the test split and returns the frames that follow.
    fn oracle(split: &DatasetSplit) -> impl Fn(&Tensor, usize) -> Result<Tensor> + Sync + '_ {
        move |seeds: &Tensor, horizon: usize| {
            for s in &split.test {
                for start in 0..=s.len() - seeds.rows() {
                    if s.frames.slice_rows(start, start + seeds.rows())?.bit_eq(seeds) {
                        return s.frames.slice_rows(start + seeds.rows(), start + seeds.rows() + horizon);
                    }
                }
            }
            Err(Error::Validation("unknown seeds".into()))
        }
    }

    #[test]
    fn ground_truth_scores_zero() {
        let s = split();
        let pred = oracle(&s);
        let report = evaluate(&pred, &s, &EvalOptions::new(2, 10), vec![], 2).unwrap();
        assert_eq!(report.mof_average, 0.0);
        assert!(report.activities.iter().all(|a| a.mof == 0.0 && a.horizons.iter().all(|h| h.error == 0.0)));
        assert_eq!(report.activities[0].horizons.len(), 5);
    }

    #[test]
    fn single_frame_mof_equals_horizon_error() {
        let s = split();
        let hold = |seeds: &Tensor, h: usize| {
            let last = Tensor::row(seeds.row_slice(seeds.rows() - 1));
            Tensor::stack_rows(&vec![&last; h])
        };
        let by = sample_windows_by_activity(&s.test, 8, 3, 1, 1).unwrap();
        let sc = Scorer { stats: &s.stats, spec: &s.spec, threads: 1 };
        let mof = eval_mof(&hold, &by, 1, &sc).unwrap();
        for (a, w) in mof.activities.iter().zip(by.values()) {
            let h = eval_horizons(&hold, w, &[40.0], 40.0, &sc).unwrap();
            assert_eq!(a.mof, h[0].error);
        }
    }

    #[test]
    fn report_round_trip_and_csv_rows() {
        let s = split();
        let hold = |seeds: &Tensor, h: usize| {
            let last = Tensor::row(seeds.row_slice(seeds.rows() - 1));
            Tensor::stack_rows(&vec![&last; h])
        };
        let opts = EvalOptions { group_scheme: Some(SchemeName::FivePart), ..EvalOptions::new(1, 7) };
        let report = evaluate(&hold, &s, &opts, vec!["abc".into()], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&report, dir.path()).unwrap();
        assert_eq!(files.len(), 1 + report.activities.len());
        assert_eq!(read_report(&files[0]).unwrap(), report);
        let csv = std::fs::read_to_string(&files[1]).unwrap();
        assert_eq!(csv.lines().count(), 1 + 7);
        assert_eq!(report.sampler_seed, DEFAULT_SAMPLER_SEED);
        let recomputed: f64 = report.activities[0].per_frame.iter().sum::<f64>() / 7.0;
        assert!((recomputed - report.activities[0].mof).abs() < 1e-15);
        assert_eq!(report.activities[0].groups.as_ref().unwrap().len(), 5);
    }

    #[test]
    fn horizon_errors() {
        let s = split();
        let by = sample_windows_by_activity(&s.test, 2, 3, 1, 3).unwrap();
        let w = by.values().next().unwrap();
        let sc = Scorer { stats: &s.stats, spec: &s.spec, threads: 1 };
        let p = oracle(&s);
        assert!(eval_horizons(&p, w, &[160.0], 40.0, &sc).is_err());
        assert!(eval_horizons(&p, w, &[50.0], 40.0, &sc).is_err());
        assert!(eval_horizons(&p, &[], &[40.0], 40.0, &sc).is_err());
    }

    #[test]
    fn population_std_by_hand() {
        assert_eq!(population_std(&[1.0, 3.0]), 1.0);
        assert_eq!(population_std(&[2.0]), 0.0);
    }
}
