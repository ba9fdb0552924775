use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_linear, linear, linear_count, ForwardCtx, DEFAULT_DROPOUT, LRELU_SLOPE};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tape, Tensor, Var};

/// How the two stage-one sequences are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Blend both inputs with trainable weights, then the feed-forward stack.
    Network,
    /// Frame-wise mean of the two inputs, no parameters.
    Average,
    /// Return the SkelNet sequence unchanged.
    PassthroughSkel,
    /// Return the C-RNN sequence unchanged.
    PassthroughCrnn,
    /// Network fed by the SkelNet sequence alone, with a single blend weight.
    SingleSkel,
    /// Network fed by the C-RNN sequence alone, with a single blend weight.
    SingleCrnn,
}

impl MergeMode {
    pub const ALL: [MergeMode; 6] = [
        MergeMode::Network,
        MergeMode::Average,
        MergeMode::PassthroughSkel,
        MergeMode::PassthroughCrnn,
        MergeMode::SingleSkel,
        MergeMode::SingleCrnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MergeMode::Network => "network",
            MergeMode::Average => "average",
            MergeMode::PassthroughSkel => "passthrough_skel",
            MergeMode::PassthroughCrnn => "passthrough_crnn",
            MergeMode::SingleSkel => "single_skel",
            MergeMode::SingleCrnn => "single_crnn",
        }
    }

    /// Whether this mode has trainable parameters.
    pub fn is_trainable(self) -> bool {
        matches!(self, MergeMode::Network | MergeMode::SingleSkel | MergeMode::SingleCrnn)
    }

    fn blend_weights(self) -> &'static [&'static str] {
        match self {
            MergeMode::Network => &["blend.skel", "blend.crnn"],
            MergeMode::SingleSkel => &["blend.skel"],
            MergeMode::SingleCrnn => &["blend.crnn"],
            _ => &[],
        }
    }
}

impl fmt::Display for MergeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MergeMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown merge mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub input_dim: usize,
    /// Hidden widths; a final linear layer maps back to `input_dim`.
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub use_residual: bool,
    pub blend_init: f64,
    pub mode: MergeMode,
}

impl MergeConfig {
    pub fn new(input_dim: usize) -> Self {
        MergeConfig {
            input_dim,
            hidden_dims: vec![1024, 512, 512],
            dropout_rate: DEFAULT_DROPOUT,
            use_residual: true,
            blend_init: 0.5,
            mode: MergeMode::Network,
        }
    }

    pub fn param_count(&self) -> usize {
        if !self.mode.is_trainable() {
            return 0;
        }
        let mut total = self.mode.blend_weights().len();
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            total += linear_count(fan_in, h);
            fan_in = h;
        }
        total + linear_count(fan_in, self.input_dim)
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        if !self.mode.is_trainable() {
            return Ok(());
        }
        for name in self.mode.blend_weights() {
            store.insert(*name, Tensor::scalar(self.blend_init))?;
        }
        let mut fan_in = self.input_dim;
        for (i, &h) in self.hidden_dims.iter().enumerate() {
            init_linear(store, &format!("merge{i}"), fan_in, h, rng)?;
            fan_in = h;
        }
        init_linear(store, "merge_out", fan_in, self.input_dim, rng)
    }
}

/// Combine the SkelNet sequence `skel` with the C-RNN sequence `crnn` frame by frame.
pub fn merge_sequences(
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &mut ForwardCtx,
    config: &MergeConfig,
    skel: &[Var],
    crnn: &[Var],
) -> Result<Vec<Var>> {
    if skel.len() != crnn.len() {
        return Err(Error::Validation(format!("merge: sequence lengths differ ({} vs {})", skel.len(), crnn.len())));
    }
    let mut out = Vec::with_capacity(skel.len());
    for (&a, &b) in skel.iter().zip(crnn) {
        let (va, vb) = (tape.value(a), tape.value(b));
        if va.shape() != vb.shape() || va.cols() != config.input_dim {
            return Err(Error::ShapeMismatch { op: "merge", left: va.shape().to_vec(), right: vb.shape().to_vec() });
        }
        let frame = match config.mode {
            MergeMode::PassthroughSkel => a,
            MergeMode::PassthroughCrnn => b,
            MergeMode::Average => {
                let s = tape.add(a, b)?;
                tape.scale(s, 0.5)?
            }
            MergeMode::Network => {
                let w1 = tape.param(store, "blend.skel")?;
                let w2 = tape.param(store, "blend.crnn")?;
                let pa = tape.scale_by(a, w1)?;
                let pb = tape.scale_by(b, w2)?;
                let u = tape.add(pa, pb)?;
                merge_stack(tape, store, ctx, config, u)?
            }
            MergeMode::SingleSkel => {
                let w = tape.param(store, "blend.skel")?;
                let u = tape.scale_by(a, w)?;
                merge_stack(tape, store, ctx, config, u)?
            }
            MergeMode::SingleCrnn => {
                let w = tape.param(store, "blend.crnn")?;
                let u = tape.scale_by(b, w)?;
                merge_stack(tape, store, ctx, config, u)?
            }
        };
        out.push(frame);
    }
    Ok(out)
}

fn merge_stack(tape: &mut Tape, store: &ParamStore, ctx: &mut ForwardCtx, config: &MergeConfig, u: Var) -> Result<Var> {
    let mut y = u;
    for i in 0..config.hidden_dims.len() {
        y = linear(tape, store, &format!("merge{i}"), y)?;
        y = tape.lrelu(y, LRELU_SLOPE)?;
        y = ctx.dropout(tape, y, config.dropout_rate)?;
    }
    y = linear(tape, store, "merge_out", y)?;
    if config.use_residual {
        y = tape.add(y, u)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn consts(tape: &mut Tape, rows: &[[f64; 3]]) -> Vec<Var> {
        rows.iter().map(|r| tape.constant(Tensor::row(r))).collect()
    }

    #[test]
    fn average_of_identical_inputs() {
        let cfg = MergeConfig { mode: MergeMode::Average, ..MergeConfig::new(3) };
        let mut tape = Tape::new();
        let a = consts(&mut tape, &[[1.0, 2.0, 3.0], [-1.0, 0.5, 0.25]]);
        let out = merge_sequences(&mut tape, &ParamStore::new(), &mut ForwardCtx::eval(), &cfg, &a, &a).unwrap();
        for (o, i) in out.iter().zip(&a) {
            assert!(tape.value(*o).bit_eq(tape.value(*i)));
        }
    }

    #[test]
    fn zero_network_passes_the_blend() {
        let cfg = MergeConfig { hidden_dims: vec![8, 4], ..MergeConfig::new(3) };
        let mut store = ParamStore::new();
        cfg.init(&mut store, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (name, e) in store.clone().iter() {
            if !name.starts_with("blend") {
                store
                    .set_value(name, Tensor::new(e.value.shape().to_vec(), vec![0.0; e.value.len()]).unwrap())
                    .unwrap();
            }
        }
        let mut tape = Tape::new();
        let a = consts(&mut tape, &[[1.0, 2.0, 3.0]]);
        let b = consts(&mut tape, &[[3.0, -2.0, 1.0]]);
        let out = merge_sequences(&mut tape, &store, &mut ForwardCtx::eval(), &cfg, &a, &b).unwrap();
        assert_eq!(tape.value(out[0]).data(), &[2.0, 0.0, 2.0]);
    }

    #[test]
    fn counts_and_modes() {
        let cfg = MergeConfig::new(54);
        let mut store = ParamStore::new();
        cfg.init(&mut store, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(store.total_parameter_count(), cfg.param_count());
        assert_eq!(store.value("blend.skel").unwrap().item(), 0.5);
        let single = MergeConfig { mode: MergeMode::SingleCrnn, ..cfg.clone() };
        assert_eq!(single.param_count(), cfg.param_count() - 1);
        let avg = MergeConfig { mode: MergeMode::Average, ..cfg };
        assert_eq!(avg.param_count(), 0);
        assert_eq!("passthrough_skel".parse::<MergeMode>().unwrap(), MergeMode::PassthroughSkel);
    }

    #[test]
    fn length_mismatch() {
        let cfg = MergeConfig { mode: MergeMode::Average, ..MergeConfig::new(3) };
        let mut tape = Tape::new();
        let a = consts(&mut tape, &[[1.0, 2.0, 3.0]]);
        let b = consts(&mut tape, &[[1.0, 2.0, 3.0], [0.0; 3]]);
        assert!(merge_sequences(&mut tape, &ParamStore::new(), &mut ForwardCtx::eval(), &cfg, &a, &b).is_err());
    }
}
