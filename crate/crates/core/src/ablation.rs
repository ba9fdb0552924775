//! Variant sweeps: architecture ablations, loss comparison and noise robustness.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, ModelPredictor};
use crate::models::{Activation, Crnn, CrnnConfig, SequenceModel, SkelNet, SkelNetConfig};
use crate::parallel::par_map;
use crate::skeleton::SchemeName;
use crate::training::{train_stage, LossKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    WoBranches,
    WoLrelu,
    WoDropout,
    WoResidual,
    WTanh,
    WLongPrior,
    Ud,
    Lr,
    CrnnConverging,
    CrnnSampling,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Full,
        Variant::WoBranches,
        Variant::WoLrelu,
        Variant::WoDropout,
        Variant::WoResidual,
        Variant::WTanh,
        Variant::WLongPrior,
        Variant::Ud,
        Variant::Lr,
        Variant::CrnnConverging,
        Variant::CrnnSampling,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoBranches => "wo_branches",
            Variant::WoLrelu => "wo_lrelu",
            Variant::WoDropout => "wo_dropout",
            Variant::WoResidual => "wo_residual",
            Variant::WTanh => "w_tanh",
            Variant::WLongPrior => "w_long_prior",
            Variant::Ud => "ud",
            Variant::Lr => "lr",
            Variant::CrnnConverging => "crnn_converging",
            Variant::CrnnSampling => "crnn_sampling",
        }
    }

    pub fn is_crnn(self) -> bool {
        matches!(self, Variant::CrnnConverging | Variant::CrnnSampling)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .replace("w/o", "wo")
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        let alias = match key.as_str() {
            "wo_lrelus" => "wo_lrelu",
            "wo_residual_connection" => "wo_residual",
            "skelnet_ud" | "ud_three" => "ud",
            "skelnet_lr" | "lr_three" => "lr",
            "skelnet" => "full",
            k => k,
        };
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == alias)
            .ok_or_else(|| Error::Config(format!("unknown ablation variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub variants: Vec<Variant>,
    /// Training seeds; each cell reports the median over them.
    pub seeds: Vec<u64>,
    /// One table column per variance.
    pub noise_variances: Vec<f64>,
    pub skelnet_train: TrainConfig,
    pub crnn_train: TrainConfig,
    pub branch_dims: Vec<usize>,
    /// Seed frames read by the long-prior variant.
    pub long_prior: usize,
    pub crnn_units: usize,
    pub crnn_head_dims: Vec<usize>,
    /// Windows, sampler seed and horizon; seed frames are set from the variants.
    pub eval: EvalOptions,
}

impl AblationConfig {
    /// Desk-scale configuration: 200 iterations, 5 seeds, 400 ms horizons at 40 ms.
    pub fn smoke(variants: Vec<Variant>) -> Self {
        let horizon = 10;
        let mut crnn_train = TrainConfig::crnn(horizon);
        crnn_train.seed_frames = 4;
        // The full-run C-RNN rate barely moves a 200-iteration smoke run.
        crnn_train.optimizer.learning_rate = 0.01;
        AblationConfig {
            variants,
            seeds: (0..5).collect(),
            noise_variances: vec![0.0],
            skelnet_train: TrainConfig { iterations: 200, ..TrainConfig::skelnet(horizon) },
            crnn_train: TrainConfig { iterations: 200, ..crnn_train },
            branch_dims: vec![64, 128, 64],
            long_prior: 3,
            crnn_units: 64,
            crnn_head_dims: vec![64],
            eval: EvalOptions { horizons_ms: vec![80.0, 160.0, 320.0, 400.0], ..EvalOptions::new(1, horizon) },
        }
    }

    fn seed_frames(&self) -> usize {
        self.variants
            .iter()
            .map(|v| match v {
                Variant::WLongPrior => self.long_prior,
                v if v.is_crnn() => self.crnn_train.seed_frames,
                _ => self.skelnet_train.seed_frames,
            })
            .max()
            .unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.seeds.is_empty() || self.noise_variances.is_empty() {
            return Err(Error::Config("ablation needs variants, seeds and noise variances".into()));
        }
        if let Some(v) = self.noise_variances.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Config(format!("noise variance {v} must be non-negative")));
        }
        if self.long_prior == 0 {
            return Err(Error::Config("long prior needs at least one frame".into()));
        }
        self.skelnet_train.validate()?;
        self.crnn_train.validate()
    }

    /// Build the model and training configuration of one variant.
    pub fn instantiate(&self, variant: Variant, split: &DatasetSplit) -> Result<(SequenceModel, TrainConfig)> {
        if variant.is_crnn() {
            let cfg = CrnnConfig {
                gru_units: self.crnn_units,
                head_dims: self.crnn_head_dims.clone(),
                ..CrnnConfig::new(split.input_dim())
            };
            let loss = if variant == Variant::CrnnConverging { LossKind::Converging } else { LossKind::Sampling };
            let train = TrainConfig { loss, ..self.crnn_train.clone() };
            return Ok((SequenceModel::Crnn(Crnn::new(cfg)?), train));
        }
        let scheme = match variant {
            Variant::WoBranches => SchemeName::Whole,
            Variant::Ud => SchemeName::UdThree,
            Variant::Lr => SchemeName::LrThree,
            _ => SchemeName::FivePart,
        };
        let mut cfg = SkelNetConfig {
            branch_dims: self.branch_dims.clone(),
            ..SkelNetConfig::new(split.spec.partition(scheme, &split.stats.retained)?)
        };
        let mut train = self.skelnet_train.clone();
        match variant {
            Variant::WoLrelu => cfg.activation = Activation::None,
            Variant::WoDropout => cfg.dropout_rate = 0.0,
            Variant::WoResidual => cfg.use_residual = false,
            Variant::WTanh => cfg.activation = Activation::Tanh,
            Variant::WLongPrior => {
                cfg.seed_length = self.long_prior;
                train.seed_frames = train.seed_frames.max(self.long_prior);
            }
            _ => {}
        }
        Ok((SequenceModel::SkelNet(SkelNet::new(cfg)?), train))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub noise_variance: f64,
    /// Average-over-activities MoF for each seed, in seed order.
    pub mof_by_seed: Vec<f64>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub param_count: usize,
    pub cells: Vec<AblationCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub noise_variances: Vec<f64>,
    pub sampler_seed: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// Tab-separated: variant, parameter count, then one median-MoF column per variance.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("variant\tparams");
        for v in &self.noise_variances {
            write!(out, "\tmof@var={v}").expect("write to String");
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{}\t{}", r.variant, r.param_count).expect("write to String");
            for c in &r.cells {
                write!(out, "\t{:.6}", c.median).expect("write to String");
            }
            out.push('\n');
        }
        out
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Train and evaluate every (variant, variance, seed) combination.
///
/// Noise of a given variance is applied to training inputs and to test seeds.
/// All variants share the sampler seed and window set.
pub fn run_ablation(split: &DatasetSplit, cfg: &AblationConfig, threads: usize) -> Result<AblationTable> {
    cfg.validate()?;
    let seed_frames = cfg.seed_frames();
    let mut jobs = Vec::new();
    for &variant in &cfg.variants {
        for &var in &cfg.noise_variances {
            for &seed in &cfg.seeds {
                jobs.push((variant, var, seed));
            }
        }
    }
    let results = par_map(&jobs, threads, |_, &(variant, var, seed)| -> Result<f64> {
        let (model, base) = cfg.instantiate(variant, split)?;
        let train = TrainConfig { seed, noise_variance: var, ..base };
        let (store, _) = train_stage(&model, split, &train, None)?;
        let opts = EvalOptions { seed_frames, noise_variance: var, noise_seed: seed, ..cfg.eval.clone() };
        let report = evaluate(&ModelPredictor { model: &model, store: &store }, split, &opts, vec![], 1)?;
        Ok(report.mof_average)
    });
    let mut results = results.into_iter();
    let mut rows = Vec::new();
    for &variant in &cfg.variants {
        let (model, _) = cfg.instantiate(variant, split)?;
        let mut cells = Vec::new();
        for &var in &cfg.noise_variances {
            let mof_by_seed = (0..cfg.seeds.len())
                .map(|_| results.next().expect("one result per job"))
                .collect::<Result<Vec<f64>>>()?;
            cells.push(AblationCell { noise_variance: var, median: median(&mof_by_seed), mof_by_seed });
        }
        rows.push(AblationRow { variant, param_count: model.param_count(), cells });
    }
    Ok(AblationTable {
        seeds: cfg.seeds.clone(),
        noise_variances: cfg.noise_variances.clone(),
        sampler_seed: cfg.eval.sampler_seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::skeleton::synthetic_skeleton;

    #[test]
    fn names_and_aliases() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("w/o branches".parse::<Variant>().unwrap(), Variant::WoBranches);
        assert_eq!("SkelNet_UD".parse::<Variant>().unwrap(), Variant::Ud);
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn median_by_hand() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn coarse_variants_use_three_groups() {
        let split = generate_synthetic(
            &SyntheticSpec { count: 2, length: 30, ..SyntheticSpec::default() },
            &synthetic_skeleton(),
        )
        .unwrap();
        let cfg = AblationConfig::smoke(vec![]);
        for (v, groups) in [(Variant::Full, 5), (Variant::Ud, 3), (Variant::Lr, 3), (Variant::WoBranches, 1)] {
            match cfg.instantiate(v, &split).unwrap().0 {
                SequenceModel::SkelNet(m) => assert_eq!(m.config.partition.groups.len(), groups),
                _ => panic!(),
            }
        }
    }

    #[test]
    fn tiny_sweep_shape() {
        let split = generate_synthetic(
            &SyntheticSpec { count: 3, length: 40, ..SyntheticSpec::default() },
            &synthetic_skeleton(),
        )
        .unwrap();
        let mut cfg = AblationConfig::smoke(vec![Variant::Full, Variant::WoBranches]);
        cfg.seeds = vec![0, 1];
        cfg.noise_variances = vec![0.1, 0.3];
        cfg.skelnet_train.iterations = 2;
        cfg.skelnet_train.batch_size = 2;
        cfg.branch_dims = vec![4];
        cfg.eval = EvalOptions { windows: 2, ..EvalOptions::new(1, 3) };
        cfg.skelnet_train.horizon = 3;
        let t = run_ablation(&split, &cfg, 2).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.cells.len() == 2 && r.cells[0].mof_by_seed.len() == 2));
        assert_eq!(t.to_tsv().lines().count(), 3);
        assert_eq!(t, run_ablation(&split, &cfg, 1).unwrap());
    }
}
