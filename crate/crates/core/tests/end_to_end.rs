//! Train, checkpoint, reload and evaluate through the public API.

use skelnet_core::data::{generate_raw, load_dataset, write_dataset};
use skelnet_core::eval::{emit_report, evaluate, read_report, ModelPredictor};
use skelnet_core::models::{SequenceModel, SkelNet, SkelNetConfig};
use skelnet_core::numerics::checkpoint;
use skelnet_core::skeleton::{synthetic_skeleton, SchemeName};
use skelnet_core::training::{train_stage, CheckpointPlan};
use skelnet_core::{DatasetSplit, EvalOptions, SyntheticSpec, TrainConfig};

fn small_spec() -> SyntheticSpec {
    SyntheticSpec { count: 3, length: 80, ..SyntheticSpec::default() }
}

#[test]
fn dataset_files_round_trip_into_the_same_split() {
    let skel = synthetic_skeleton();
    let (train, test) = generate_raw(&small_spec(), &skel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &train, &test).unwrap();
    let from_disk = load_dataset(dir.path(), &skel, 1e-4).unwrap();
    let in_memory = DatasetSplit::from_raw(skel, &train, &test, 1e-4).unwrap();
    assert_eq!(from_disk.stats.retained, in_memory.stats.retained);
    assert_eq!(from_disk.train.len(), in_memory.train.len());
    for (a, b) in from_disk.test.iter().zip(&in_memory.test) {
        let diff = a.frames.data().iter().zip(b.frames.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }
}

#[test]
fn trained_checkpoint_reloads_and_scores_identically() {
    let skel = synthetic_skeleton();
    let (train, test) = generate_raw(&small_spec(), &skel).unwrap();
    let split = DatasetSplit::from_raw(skel, &train, &test, 1e-4).unwrap();
    let cfg = SkelNetConfig {
        branch_dims: vec![16],
        ..SkelNetConfig::new(split.spec.partition(SchemeName::FivePart, &split.stats.retained).unwrap())
    };
    let model = SequenceModel::SkelNet(SkelNet::new(cfg).unwrap());
    let tc = TrainConfig { iterations: 15, batch_size: 4, ..TrainConfig::skelnet(5) };
    let dir = tempfile::tempdir().unwrap();
    let plan = CheckpointPlan { dir: dir.path().into(), name: "skelnet".into(), meta: "{}".into() };
    let (store, log) = train_stage(&model, &split, &tc, Some(&plan)).unwrap();
    assert_eq!(log.records.len(), 15);

    let (loaded, meta) = checkpoint::load(&plan.final_path()).unwrap();
    assert_eq!(meta, "{}");
    assert_eq!(loaded.checksum(), store.checksum());

    let opts = EvalOptions { windows: 2, horizons_ms: vec![80.0, 200.0], ..EvalOptions::new(1, 5) };
    let score = |s| evaluate(&ModelPredictor { model: &model, store: s }, &split, &opts, vec![], 1).unwrap();
    let (a, b) = (score(&store), score(&loaded));
    assert_eq!(a, b);
    assert!(a.mof_average.is_finite() && a.mof_average > 0.0);

    emit_report(&a, dir.path()).unwrap();
    assert_eq!(read_report(&dir.path().join("report.json")).unwrap(), a);
}
