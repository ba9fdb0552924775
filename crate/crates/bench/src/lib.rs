//! Fixtures shared by the criterion benches in `benches/`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skelnet_core::models::{Crnn, CrnnConfig, SequenceModel, SkelNet, SkelNetConfig};
use skelnet_core::skeleton::{synthetic_skeleton, SchemeName};
use skelnet_core::{ParamStore, Result, Tensor};

/// Width of the built-in synthetic skeleton.
pub const SYNTHETIC_DIM: usize = 54;

pub fn initialized(model: SequenceModel, seed: u64) -> Result<(SequenceModel, ParamStore)> {
    let mut store = ParamStore::new();
    model.init(&mut store, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok((model, store))
}

/// SkelNet over every dimension of the synthetic skeleton.
pub fn skelnet(scheme: SchemeName) -> Result<(SequenceModel, ParamStore)> {
    let spec = synthetic_skeleton();
    let retained: Vec<usize> = (0..spec.dim()).collect();
    let cfg = SkelNetConfig::new(spec.partition(scheme, &retained)?);
    initialized(SequenceModel::SkelNet(SkelNet::new(cfg)?), 0)
}

pub fn crnn(units: usize) -> Result<(SequenceModel, ParamStore)> {
    let cfg = CrnnConfig { gru_units: units, head_dims: vec![units], ..CrnnConfig::new(SYNTHETIC_DIM) };
    initialized(SequenceModel::Crnn(Crnn::new(cfg)?), 0)
}

/// Deterministic `[frames, width]` seed sequence.
pub fn seeds(frames: usize, width: usize) -> Tensor {
    let data = (0..frames * width).map(|i| (i as f64 * 0.37).sin()).collect();
    Tensor::new(vec![frames, width], data).expect("shape matches data")
}
