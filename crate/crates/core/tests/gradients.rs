//! Finite-difference checks of whole models on random small instances.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skelnet_core::models::{
    Crnn, CrnnConfig, ForwardCtx, MergeConfig, MergeMode, SequenceModel, SkelNet, SkelNetConfig,
};
use skelnet_core::numerics::{grad_check, FD_STEP};
use skelnet_core::skeleton::{SchemeName, SkeletonSpec};
use skelnet_core::training::{converging_loss, sampling_loss};
use skelnet_core::{ConvergingLossConfig, ParamStore, Tape, Tensor, Var};

const SKELETON: &str = "joint a 0 2\njoint b 2 1\njoint c 3 1\njoint d 4 1\njoint e 5 1\n\
    group five_part left_arm a\ngroup five_part right_arm b\ngroup five_part left_leg c\n\
    group five_part right_leg d\ngroup five_part torso e\n";
const DIM: usize = 6;

fn frames(values: &[f64], n: usize, rows: usize) -> Vec<Tensor> {
    (0..n)
        .map(|i| {
            let data = (0..rows * DIM).map(|k| values[(i * rows * DIM + k) % values.len()]).collect();
            Tensor::new(vec![rows, DIM], data).unwrap()
        })
        .collect()
}

fn vars(tape: &mut Tape, fs: &[Tensor]) -> Vec<Var> {
    fs.iter().map(|f| tape.constant(f.clone())).collect()
}

fn model(crnn: bool, scheme: SchemeName, width: usize, seed: u64) -> (SequenceModel, ParamStore) {
    let m = if crnn {
        SequenceModel::Crnn(
            Crnn::new(CrnnConfig { gru_units: width, head_dims: vec![width], ..CrnnConfig::new(DIM) }).unwrap(),
        )
    } else {
        let spec = SkeletonSpec::parse_str(SKELETON, "toy").unwrap();
        let all: Vec<usize> = (0..DIM).collect();
        let cfg =
            SkelNetConfig { branch_dims: vec![width], ..SkelNetConfig::new(spec.partition(scheme, &all).unwrap()) };
        SequenceModel::SkelNet(SkelNet::new(cfg).unwrap())
    };
    let mut store = ParamStore::new();
    m.init(&mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (m, store)
}

/// Worst finite-difference disagreement over every parameter entry.
///
/// Unlike `grad_check`, the denominator is floored at 1e-3 of the parameter's
/// largest gradient entry: random instances routinely produce entries near 1e-7
/// whose central differences are dominated by round-off.
fn scaled_fd_error(mut f: impl FnMut(&mut Tape, &ParamStore) -> skelnet_core::Result<Var>, store: &ParamStore) -> f64 {
    let mut loss_at = |s: &ParamStore| {
        let mut t = Tape::new();
        let l = f(&mut t, s).unwrap();
        (t.value(l).data()[0], t, l)
    };
    let (_, tape, loss) = loss_at(store);
    let mut grads = store.clone();
    grads.zero_grad();
    tape.backward(loss, &mut grads).unwrap();
    let mut worst: f64 = 0.0;
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let analytic = grads.grad(&name).unwrap().clone();
        let value = store.value(&name).unwrap().clone();
        let scale = analytic.data().iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for k in 0..value.len() {
            let mut shifted = |delta: f64| {
                let mut data = value.data().to_vec();
                data[k] += delta;
                let mut s = store.clone();
                s.set_value(&name, Tensor::new(value.shape().to_vec(), data).unwrap()).unwrap();
                loss_at(&s).0
            };
            let numeric = (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP);
            let a = analytic.data()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3 * scale).max(1e-8));
        }
    }
    worst
}

fn scheme_strategy() -> impl Strategy<Value = SchemeName> {
    prop::sample::select(SchemeName::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn losses_match_finite_differences(
        crnn in any::<bool>(),
        scheme in scheme_strategy(),
        width in 2usize..=8,
        horizon in 1usize..=3,
        seed in 0u64..1000,
        values in prop::collection::vec(-1.0f64..1.0, 24..60),
    ) {
        let (m, store) = model(crnn, scheme, width, seed);
        let seeds = frames(&values, 2, 2);
        let truth = frames(&values[3..], horizon, 2);
        let cfg = ConvergingLossConfig { alpha: 1.0, beta: 0.1 };
        let sampling = scaled_fd_error(
            |t, s| {
                let (sv, tv) = (vars(t, &seeds), vars(t, &truth));
                sampling_loss(&m, t, s, &mut ForwardCtx::train(seed), &sv, &tv, horizon)
            },
            &store,
        );
        prop_assert!(sampling < 1e-4, "sampling worst {:e}", sampling);
        let converging = scaled_fd_error(
            |t, s| {
                let (sv, tv) = (vars(t, &seeds), vars(t, &truth));
                Ok(converging_loss(&m, t, s, &mut ForwardCtx::train(seed), &sv, &tv, horizon, &cfg)?.total)
            },
            &store,
        );
        prop_assert!(converging < 1e-4, "converging worst {:e}", converging);
    }

    #[test]
    fn merge_modes_match_finite_differences(
        mode in prop::sample::select(vec![MergeMode::Network, MergeMode::SingleSkel, MergeMode::SingleCrnn]),
        hidden in 1usize..=8,
        values in prop::collection::vec(-1.0f64..1.0, 12..40),
    ) {
        let cfg = MergeConfig { hidden_dims: vec![hidden], mode, ..MergeConfig::new(DIM) };
        let mut store = ParamStore::new();
        cfg.init(&mut store, &mut ChaCha8Rng::seed_from_u64(hidden as u64)).unwrap();
        let a = frames(&values, 3, 1);
        let b = frames(&values[5..], 3, 1);
        let report = grad_check(
            |t, s| {
                let (av, bv) = (vars(t, &a), vars(t, &b));
                let out = skelnet_core::models::merge_sequences(t, s, &mut ForwardCtx::eval(), &cfg, &av, &bv)?;
                let sq = out.iter().map(|&o| t.sum_of_squares(o)).collect::<skelnet_core::Result<Vec<_>>>()?;
                t.sum_scalars(&sq)
            },
            &mut store,
            1e-5,
        ).unwrap();
        prop_assert!(report.passed(), "worst {:e}", report.worst());
        prop_assert!(report.params.iter().any(|p| p.name.starts_with("blend.")));
    }
}
