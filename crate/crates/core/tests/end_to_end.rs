use ndarray::{Array2, Axis};
use snode_core::diff::{init_mlp, Activation, WeightInit};
use snode_core::node::{
    evaluate_loss, read_checkpoint, rollout, train_from, write_checkpoint, PairSet, RhsModel, TrainConfig, TrainState,
    Variant,
};
use snode_core::rom::{basis_of, rom_integrate, RomConfig, RomMode, TrueRhs};
use snode_core::spectral::{generate_dataset, true_linear_operator, DatasetParams, KseParams, KseSolver, SnapshotDataset, VbeParams};
use snode_core::{Field, System};
use tempfile::TempDir;

fn small_vbe() -> SnapshotDataset {
    let p = VbeParams { d: 32, solver_d: 64, horizon: 0.5, n_train: 6, n_test: 2, seed: 3, ..VbeParams::default() };
    generate_dataset(&DatasetParams::Vbe(p)).unwrap()
}

fn fixed_linear(d: usize) -> RhsModel {
    let init = WeightInit::Normal { mean: 0.0, var: 1e-2 };
    let mlp = init_mlp(&[d, 16, d], &[Activation::Relu, Activation::Linear], init, 0).unwrap();
    RhsModel::fixed_linear(mlp, true_linear_operator(System::Vbe, d, 1.0, 8e-4), 1.0).unwrap()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 8, ..TrainConfig::defaults(System::Vbe, Variant::FixedLinear) }
}

#[test]
fn dataset_survives_a_disk_round_trip() {
    let ds = small_vbe();
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("vbe.snod");
    ds.save(&path, &[]).unwrap();
    let back = SnapshotDataset::load(&path).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.sha256(), ds.sha256());
    assert_eq!(ds.n_traj(), 8);
    assert_eq!(ds.n_snap(), 11);
}

#[test]
fn training_lowers_the_loss_and_resumes_from_disk_exactly() {
    let ds = small_vbe();
    let data = PairSet::from_dataset(&ds, true).unwrap();
    let model = fixed_linear(ds.dim());
    let before = evaluate_loss(&model, &data, 5).unwrap();

    let straight = train_from(TrainState::new(model.clone()), &data, &config(6)).unwrap();
    let after = evaluate_loss(&straight.state.model, &data, 5).unwrap();
    assert!(after < before, "{after} vs {before}");

    let mut half = TrainState::new(model);
    for _ in 0..3 {
        half.run_epoch(&data, &config(6)).unwrap();
    }
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("half.snck");
    write_checkpoint(&path, &half).unwrap();
    let resumed = train_from(read_checkpoint(&path).unwrap(), &data, &config(6)).unwrap();
    assert_eq!(resumed.state, straight.state);
    assert_eq!(resumed.history, straight.history[3..]);
}

#[test]
fn true_rhs_rollout_tracks_the_etdrk4_solver() {
    let ds = generate_dataset(&DatasetParams::Kse(KseParams { horizon: 0.0, transient: 100.0, ..KseParams::default() })).unwrap();
    let u0 = ds.field(0, 0);
    let truth = TrueRhs::new(System::Kse, 64, 22.0, 0.0).unwrap();
    let r = rollout(&truth, &u0, 2.0, 0.5, 200).unwrap();
    assert!(r.diverged_at.is_none());
    let reference = KseSolver::new(64, 22.0, 0.01).unwrap().advance(&u0, 200).unwrap();
    let last = r.states.last().unwrap();
    let rel = (&last.values - &reference.values).mapv(|v| v * v).sum().sqrt() / reference.values.mapv(|v| v * v).sum().sqrt();
    assert!(rel < 1e-6, "relative gap {rel}");
}

#[test]
fn nonlinear_galerkin_stays_on_the_attractor_scale() {
    let ds = generate_dataset(&DatasetParams::Kse(KseParams { horizon: 50.0, transient: 100.0, ..KseParams::default() })).unwrap();
    let truth = TrueRhs::new(System::Kse, 64, 22.0, 0.0).unwrap();
    let (basis, symmetrized) = basis_of(&truth).unwrap();
    assert!(!symmetrized);
    let u0 = ds.field(0, 0);
    let cfg = RomConfig { mode: RomMode::NonlinearGalerkin, total_time: 50.0, save_interval: 0.25, max_step: 0.01, iterations: 1 };
    let r = rom_integrate(&basis, 18, &truth, &u0, &cfg).unwrap();
    assert!(r.diverged_at.is_none());
    let rms = |rows: &Array2<f64>| (rows.mapv(|v| v * v).sum() / rows.len() as f64).sqrt();
    let views: Vec<_> = r.states.iter().map(|f: &Field| f.values.view()).collect();
    let rom = ndarray::stack(Axis(0), &views).unwrap();
    let (a, b) = (rms(&rom), rms(&ds.trajectories[0]));
    assert!((a / b - 1.0).abs() < 0.3, "rom rms {a} vs data rms {b}");
}
