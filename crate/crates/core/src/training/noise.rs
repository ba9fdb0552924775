use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Add i.i.d. zero-mean Gaussian noise of the given variance to every entry.
pub fn add_gaussian_noise(seq: &Tensor, variance: f64, seed: u64) -> Result<Tensor> {
    add_noise_with(seq, variance, None, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// As [`add_gaussian_noise`], drawing from `rng`; `scale` rescales each column.
pub(crate) fn add_noise_with<R: Rng + ?Sized>(
    seq: &Tensor,
    variance: f64,
    scale: Option<&[f64]>,
    rng: &mut R,
) -> Result<Tensor> {
    if !variance.is_finite() || variance < 0.0 {
        return Err(Error::Config(format!("noise variance {variance} must be non-negative")));
    }
    if variance == 0.0 {
        return Ok(seq.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let cols = seq.cols();
    let mut out = seq.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let s = scale.map_or(1.0, |s| s[i % cols]);
        *v += s * normal.sample(rng);
    }
    Ok(out)
}
