use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_linear, linear, linear_count, Autoregressive, ForwardCtx, RollState, DEFAULT_DROPOUT, LRELU_SLOPE};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrnnConfig {
    pub input_dim: usize,
    pub gru_units: usize,
    /// Hidden widths of the head; a final linear layer maps back to `input_dim`.
    pub head_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub use_residual: bool,
}

impl CrnnConfig {
    pub fn new(input_dim: usize) -> Self {
        CrnnConfig {
            input_dim,
            gru_units: 1024,
            head_dims: vec![512],
            dropout_rate: DEFAULT_DROPOUT,
            use_residual: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gru_units == 0 || self.input_dim == 0 || self.head_dims.contains(&0) {
            return Err(Error::Config("C-RNN widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn gru_param_count(&self) -> usize {
        3 * linear_count(self.input_dim + self.gru_units, self.gru_units)
    }

    pub fn param_count(&self) -> usize {
        let mut total = self.gru_param_count();
        let mut fan_in = self.gru_units;
        for &h in &self.head_dims {
            total += linear_count(fan_in, h);
            fan_in = h;
        }
        total + linear_count(fan_in, self.input_dim)
    }
}

/// Register GRU weights under `prefix`: `{z,r,h}.w` of shape `[input + units, units]`.
pub(crate) fn init_gru<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    units: usize,
    rng: &mut R,
) -> Result<()> {
    for gate in ["z", "r", "h"] {
        init_linear(store, &format!("{prefix}.{gate}"), input + units, units, rng)?;
    }
    Ok(())
}

/// One GRU update:
///
/// ```text
/// z  = sigmoid(W_z [x, h] + b_z)
/// r  = sigmoid(W_r [x, h] + b_r)
/// h~ = tanh(W_h [x, r * h] + b_h)
/// h' = (1 - z) * h + z * h~
/// ```
pub fn gru_cell(tape: &mut Tape, store: &ParamStore, prefix: &str, x: Var, h_prev: Var) -> Result<Var> {
    let xh = tape.concat(&[x, h_prev])?;
    let z_pre = linear(tape, store, &format!("{prefix}.z"), xh)?;
    let z = tape.sigmoid(z_pre)?;
    let r_pre = linear(tape, store, &format!("{prefix}.r"), xh)?;
    let r = tape.sigmoid(r_pre)?;
    let rh = tape.mul(r, h_prev)?;
    let xrh = tape.concat(&[x, rh])?;
    let cand_pre = linear(tape, store, &format!("{prefix}.h"), xrh)?;
    let cand = tape.tanh(cand_pre)?;
    let keep = tape.one_minus(z)?;
    let old = tape.mul(keep, h_prev)?;
    let new = tape.mul(z, cand)?;
    tape.add(old, new)
}

/// Single-layer GRU followed by a feed-forward head with a residual connection.
#[derive(Debug, Clone, PartialEq)]
pub struct Crnn {
    pub config: CrnnConfig,
}

impl Crnn {
    pub fn new(config: CrnnConfig) -> Result<Self> {
        config.validate()?;
        Ok(Crnn { config })
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        let cfg = &self.config;
        init_gru(store, "gru", cfg.input_dim, cfg.gru_units, rng)?;
        let mut fan_in = cfg.gru_units;
        for (i, &h) in cfg.head_dims.iter().enumerate() {
            init_linear(store, &format!("head{i}"), fan_in, h, rng)?;
            fan_in = h;
        }
        init_linear(store, "out", fan_in, cfg.input_dim, rng)
    }

    fn check_width(&self, tape: &Tape, x: Var) -> Result<()> {
        let v = tape.value(x);
        if v.cols() != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                op: "crnn",
                left: v.shape().to_vec(),
                right: vec![self.config.input_dim],
            });
        }
        Ok(())
    }

    fn zero_state(&self, tape: &mut Tape, rows: usize) -> Var {
        tape.constant(Tensor::zeros(rows, self.config.gru_units))
    }
}

impl Autoregressive for Crnn {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn warm_up(&self, tape: &mut Tape, store: &ParamStore, _: &mut ForwardCtx, seeds: &[Var]) -> Result<RollState> {
        let mut hidden = None;
        for &s in seeds {
            self.check_width(tape, s)?;
            let h = match hidden {
                Some(h) => h,
                None => self.zero_state(tape, tape.value(s).rows()),
            };
            hidden = Some(gru_cell(tape, store, "gru", s, h)?);
        }
        Ok(RollState { window: Vec::new(), hidden })
    }

    fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &mut ForwardCtx,
        state: &mut RollState,
        input: Var,
    ) -> Result<Var> {
        self.check_width(tape, input)?;
        let h_prev = match state.hidden {
            Some(h) => h,
            None => self.zero_state(tape, tape.value(input).rows()),
        };
        let h = gru_cell(tape, store, "gru", input, h_prev)?;
        state.hidden = Some(h);
        let mut y = h;
        for i in 0..self.config.head_dims.len() {
            y = linear(tape, store, &format!("head{i}"), y)?;
            y = tape.lrelu(y, LRELU_SLOPE)?;
            y = ctx.dropout(tape, y, self.config.dropout_rate)?;
        }
        y = linear(tape, store, "out", y)?;
        if self.config.use_residual {
            y = tape.add(y, input)?;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gru_store(input: usize, units: usize, seed: u64) -> ParamStore {
        let mut s = ParamStore::new();
        init_gru(&mut s, "g", input, units, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        s
    }

    #[test]
    fn zero_params_halve_the_state() {
        let mut store = gru_store(3, 4, 0);
        store.zero_values();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(&[1.0, -2.0, 0.5]));
        let h0 = tape.constant(Tensor::row(&[0.2, -0.4, 1.0, 3.0]));
        let h = gru_cell(&mut tape, &store, "g", x, h0).unwrap();
        assert_eq!(tape.value(h).data(), &[0.1, -0.2, 0.5, 1.5]);

        let zero = tape.constant(Tensor::zeros(1, 4));
        let h = gru_cell(&mut tape, &store, "g", x, zero).unwrap();
        assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
    }

    /// Independent scalar-loop GRU.
    fn scalar_gru(store: &ParamStore, x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = h.len();
        let gate = |name: &str, input: &[f64], f: fn(f64) -> f64| -> Vec<f64> {
            let w = store.value(&format!("g.{name}.w")).unwrap();
            let b = store.value(&format!("g.{name}.b")).unwrap();
            (0..n)
                .map(|j| {
                    let mut acc = b.data()[j];
                    for (i, v) in input.iter().enumerate() {
                        acc += v * w.get(i, j);
                    }
                    f(acc)
                })
                .collect()
        };
        let xh: Vec<f64> = x.iter().chain(h).copied().collect();
        let z = gate("z", &xh, sigmoid);
        let r = gate("r", &xh, sigmoid);
        let xrh: Vec<f64> = x.iter().copied().chain(r.iter().zip(h).map(|(a, b)| a * b)).collect();
        let c = gate("h", &xrh, f64::tanh);
        (0..n).map(|j| (1.0 - z[j]) * h[j] + z[j] * c[j]).collect()
    }

    #[test]
    fn matches_scalar_reimplementation() {
        let store = gru_store(5, 6, 7);
        let x = [0.3, -1.2, 0.8, 0.05, -0.4];
        let h = [0.1, 0.0, -0.5, 0.9, -0.2, 0.33];
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::row(&x));
        let hv = tape.constant(Tensor::row(&h));
        let out = gru_cell(&mut tape, &store, "g", xv, hv).unwrap();
        let oracle = scalar_gru(&store, &x, &h);
        for (a, b) in tape.value(out).data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn param_count_matches_instantiation() {
        let cfg = CrnnConfig { gru_units: 16, head_dims: vec![8], ..CrnnConfig::new(6) };
        let m = Crnn::new(cfg).unwrap();
        let mut s = ParamStore::new();
        m.init(&mut s, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.total_parameter_count(), m.config.param_count());
        assert_eq!(m.config.gru_param_count(), 3 * ((6 + 16) * 16 + 16));
    }
}
