//! Skeletal motion prediction with component-partitioned networks.
//!
//! The crate provides:
//!
//! * [`numerics`]: a small float64 tensor type with a recording tape for
//!   reverse-mode gradients, SGD/Adam, finite-difference checks and binary
//!   checkpoints.
//! * [`rotations`]: Euler / rotation-matrix / exponential-map conversions,
//!   the angle-space frame error and the still-dimension preprocessing.
//! * [`skeleton`]: skeleton descriptions and body-part partitions.
//! * [`models`]: SkelNet (branched feed-forward with residual velocity
//!   prediction), C-RNN (GRU with a residual head) and the merging network.
//! * [`training`]: sequence losses (sampling-based and converging), noise
//!   injection, per-model training stages and the staged Skel-TNet pipeline.
//! * [`data`]: the sequence file format, dataset loading, window sampling
//!   and a synthetic motion generator.
//! * [`eval`]: per-horizon error, mean-of-frames error and report output.
//! * [`ablation`]: variant grids built on top of training and evaluation.
//! * [`parallel`]: an order-preserving scoped thread map.

pub mod ablation;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod numerics;
pub mod parallel;
pub mod rotations;
pub mod skeleton;
pub mod training;

pub use data::{DatasetSplit, MotionSequence, SyntheticSpec, Window};
pub use error::{Error, ErrorKind, Result};
pub use eval::{EvalOptions, EvalReport, Predictor};
pub use models::{CrnnConfig, MergeConfig, MergeMode, SkelNetConfig};
pub use numerics::{OptimizerConfig, ParamStore, Tape, Tensor, Var};
pub use rotations::PreprocessStats;
pub use skeleton::{PartitionScheme, SchemeName, SkeletonSpec};
pub use training::{ConvergingLossConfig, LossKind, SkelTNet, TrainConfig, TrainLog};
