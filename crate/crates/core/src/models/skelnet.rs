use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    activate, init_linear, linear, linear_count, Activation, Autoregressive, ForwardCtx, RollState, DEFAULT_DROPOUT,
};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tape, Var};
use crate::skeleton::PartitionScheme;

/// Branched feed-forward next-frame predictor.
///
/// Each partition group runs through its own stack of `branch_dims` layers;
/// the branch outputs are concatenated and a shared linear layer maps them
/// back to the frame width. With `use_residual` the input frame is added to
/// that output, so the network models per-frame velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkelNetConfig {
    pub partition: PartitionScheme,
    pub branch_dims: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub use_residual: bool,
    /// Frames each prediction is conditioned on (1 unless using a long prior).
    pub seed_length: usize,
}

impl SkelNetConfig {
    pub fn new(partition: PartitionScheme) -> Self {
        SkelNetConfig {
            partition,
            branch_dims: vec![64, 128, 64],
            activation: Activation::Lrelu,
            dropout_rate: DEFAULT_DROPOUT,
            use_residual: true,
            seed_length: 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.partition.width()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.seed_length == 0 {
            return Err(Error::Config("seed_length must be positive".into()));
        }
        if self.branch_dims.contains(&0) {
            return Err(Error::Config("branch widths must be positive".into()));
        }
        Ok(())
    }

    fn branch_out_width(&self, group_width: usize) -> usize {
        self.branch_dims.last().copied().unwrap_or(group_width * self.seed_length)
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let mut total = 0;
        let mut concat = 0;
        for w in self.partition.group_widths() {
            let mut fan_in = w * self.seed_length;
            for &h in &self.branch_dims {
                total += linear_count(fan_in, h);
                fan_in = h;
            }
            concat += self.branch_out_width(w);
        }
        total + linear_count(concat, self.input_dim())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkelNet {
    pub config: SkelNetConfig,
}

impl SkelNet {
    pub fn new(config: SkelNetConfig) -> Result<Self> {
        config.validate()?;
        Ok(SkelNet { config })
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        let cfg = &self.config;
        let mut concat = 0;
        for (g, w) in cfg.partition.group_widths().into_iter().enumerate() {
            let mut fan_in = w * cfg.seed_length;
            for (i, &h) in cfg.branch_dims.iter().enumerate() {
                init_linear(store, &format!("branch{g}.layer{i}"), fan_in, h, rng)?;
                fan_in = h;
            }
            concat += cfg.branch_out_width(w);
        }
        init_linear(store, "shared", concat, cfg.input_dim(), rng)
    }

    /// Per-group activations `z_g` for a window of `seed_length` frames.
    pub fn branch_outputs(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &mut ForwardCtx,
        window: &[Var],
    ) -> Result<Vec<Var>> {
        let cfg = &self.config;
        if window.len() != cfg.seed_length {
            return Err(Error::Validation(format!(
                "window of {} frames for seed_length {}",
                window.len(),
                cfg.seed_length
            )));
        }
        for &f in window {
            let w = tape.value(f).cols();
            if w != cfg.input_dim() {
                return Err(Error::ShapeMismatch {
                    op: "skelnet_step",
                    left: tape.value(f).shape().to_vec(),
                    right: vec![cfg.input_dim()],
                });
            }
        }
        let mut outs = Vec::with_capacity(cfg.partition.groups.len());
        for (g, group) in cfg.partition.groups.iter().enumerate() {
            let slices = window.iter().map(|&f| tape.columns(f, &group.dims)).collect::<Result<Vec<_>>>()?;
            let mut h = tape.concat(&slices)?;
            for i in 0..cfg.branch_dims.len() {
                h = linear(tape, store, &format!("branch{g}.layer{i}"), h)?;
                h = activate(tape, h, cfg.activation)?;
                h = ctx.dropout(tape, h, cfg.dropout_rate)?;
            }
            outs.push(h);
        }
        Ok(outs)
    }

    /// One next-frame prediction from the last `seed_length` frames (oldest first).
    pub fn step_window(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &mut ForwardCtx,
        window: &[Var],
    ) -> Result<Var> {
        let z = self.branch_outputs(tape, store, ctx, window)?;
        let cat = tape.concat(&z)?;
        let y = linear(tape, store, "shared", cat)?;
        if self.config.use_residual {
            tape.add(y, *window.last().expect("non-empty window"))
        } else {
            Ok(y)
        }
    }
}

impl Autoregressive for SkelNet {
    fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    fn seed_length(&self) -> usize {
        self.config.seed_length
    }

    fn warm_up(&self, _: &mut Tape, _: &ParamStore, _: &mut ForwardCtx, seeds: &[Var]) -> Result<RollState> {
        let keep = self.config.seed_length - 1;
        if seeds.len() < keep {
            return Err(Error::Validation(format!("need {} seed frames", self.config.seed_length)));
        }
        Ok(RollState { window: seeds[seeds.len() - keep..].to_vec(), hidden: None })
    }

    fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &mut ForwardCtx,
        state: &mut RollState,
        input: Var,
    ) -> Result<Var> {
        let mut window = std::mem::take(&mut state.window);
        window.push(input);
        let y = self.step_window(tape, store, ctx, &window)?;
        window.remove(0);
        state.window = window;
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{predict, rollout, Conditioning};
    use crate::numerics::Tensor;
    use crate::skeleton::{synthetic_skeleton, SchemeName};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(scheme: SchemeName) -> (SkelNet, ParamStore) {
        let s = synthetic_skeleton();
        let p = s.partition(scheme, &(0..54).collect::<Vec<_>>()).unwrap();
        let m = SkelNet::new(SkelNetConfig::new(p)).unwrap();
        let mut store = ParamStore::new();
        m.init(&mut store, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        (m, store)
    }

    #[test]
    fn closed_form_count_at_54() {
        let (m, store) = net(SchemeName::FivePart);
        let hand: usize =
            [12, 12, 12, 12, 6].iter().map(|d| (d * 64 + 64) + (64 * 128 + 128) + (128 * 64 + 64)).sum::<usize>()
                + (320 * 54 + 54);
        assert_eq!(m.config.param_count(), hand);
        assert_eq!(store.total_parameter_count(), hand);
        assert_eq!(hand, 103_990);
    }

    #[test]
    fn zero_weights_residual_is_identity() {
        let (m, mut store) = net(SchemeName::FivePart);
        store.zero_values();
        let seed = Tensor::new(vec![1, 54], (0..54).map(|i| (i as f64).sin()).collect()).unwrap();
        let out = predict(&m, &store, &seed, 5).unwrap();
        for r in 0..5 {
            assert_eq!(out.row_slice(r), seed.row_slice(0));
        }
    }

    #[test]
    fn horizon_one_is_one_step() {
        let (m, store) = net(SchemeName::LrThree);
        let seed = Tensor::new(vec![2, 54], (0..108).map(|i| (i as f64 * 0.1).cos()).collect()).unwrap();
        let out = predict(&m, &store, &seed, 1).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(seed.row_slice(1)));
        let y = m.step_window(&mut tape, &store, &mut ForwardCtx::eval(), &[x]).unwrap();
        assert!(out.bit_eq(tape.value(y)));
    }

    #[test]
    fn long_prior_reads_concatenated_frames() {
        let s = synthetic_skeleton();
        let p = s.partition(SchemeName::FivePart, &(0..54).collect::<Vec<_>>()).unwrap();
        let mut cfg = SkelNetConfig::new(p);
        cfg.seed_length = 3;
        let m = SkelNet::new(cfg).unwrap();
        let mut store = ParamStore::new();
        m.init(&mut store, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(store.value("branch0.layer0.w").unwrap().shape(), &[36, 64]);
        assert_eq!(store.total_parameter_count(), m.config.param_count());

        let mut tape = Tape::new();
        let seeds: Vec<Var> = (0..2).map(|_| tape.constant(Tensor::zeros(1, 54))).collect();
        let err = rollout(&m, &mut tape, &store, &mut ForwardCtx::eval(), &seeds, 2, Conditioning::FreeRunning);
        assert!(err.is_err());
    }

    #[test]
    fn width_mismatch() {
        let (m, store) = net(SchemeName::FivePart);
        assert!(predict(&m, &store, &Tensor::zeros(1, 53), 1).is_err());
    }
}
