use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::integrate::{rk4_backward, rk4_forward_traced, stable_substeps};
use super::model::{ModelGrad, RhsModel, Variant};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::spectral::{SnapshotDataset, System};

/// Elementwise-mean absolute difference.
pub fn l1_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape { expected: target.len(), got: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    Ok(pred.iter().zip(target.iter()).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn loss(predicted: &[Field], target: &[Field]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::Shape { expected: target.len(), got: predicted.len() });
    }
    if predicted.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let stack = |fs: &[Field]| -> Result<Array2<f64>> {
        let views: Vec<_> = fs.iter().map(|f| f.values.view()).collect();
        ndarray::stack(Axis(0), &views).map_err(|_| Error::Shape { expected: fs[0].dim(), got: 0 })
    };
    l1_loss(stack(predicted)?.view(), stack(target)?.view())
}

/// Loss of one interval of integration and its exact gradient with respect
/// to every trainable parameter. Rows of `inputs` map to rows of `targets`
/// over time `tau`, integrated with `substeps` RK4 steps.
pub fn loss_gradient(
    model: &RhsModel,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    tau: f64,
    substeps: usize,
) -> Result<(f64, ModelGrad)> {
    if inputs.nrows() == 0 {
        return Err(Error::Empty("training batch"));
    }
    let trace = rk4_forward_traced(model, inputs, tau, substeps)?;
    let value = l1_loss(trace.output.view(), targets)?;
    let n = trace.output.len() as f64;
    let ct = ndarray::Zip::from(&trace.output).and(targets).map_collect(|p, t| {
        let diff: f64 = p - t;
        if diff > 0.0 {
            1.0 / n
        } else if diff < 0.0 {
            -1.0 / n
        } else {
            0.0
        }
    });
    let (grad, _) = rk4_backward(model, trace, ct)?;
    Ok((value, grad))
}

/// Adaptive moment estimation over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let c2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_nonlinear: Vec<f64>,
    pub lr_linear: Vec<f64>,
    pub batch_size: usize,
    /// RK4 substeps per data interval (raised automatically if the linear
    /// branch is too stiff for that step).
    pub rollout_steps: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Learning-rate tables for each system and variant.
    pub fn defaults(system: System, variant: Variant) -> Self {
        let nl = match (system, variant) {
            (System::Vbe, Variant::LearnedLinear) => vec![1e-3, 1e-4],
            (System::Vbe, _) => vec![1e-3, 1e-4, 1e-5],
            (System::Kse, _) => vec![1e-3, 1e-4],
        };
        Self {
            epochs: match system {
                System::Vbe => 10_000,
                System::Kse => 40_000,
            },
            lr_nonlinear: nl,
            lr_linear: vec![1e0, 1e-1, 1e-2],
            batch_size: 256,
            rollout_steps: 5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.rollout_steps == 0 {
            return Err(Error::InvalidParameter("epochs, batch size and rollout steps must be positive".into()));
        }
        if self.lr_nonlinear.is_empty() || self.lr_linear.is_empty() {
            return Err(Error::InvalidParameter("learning-rate stages must be nonempty".into()));
        }
        Ok(())
    }

    /// Index of the active stage when `n_stages` partition the epochs evenly.
    pub fn stage(&self, epoch: usize, n_stages: usize) -> usize {
        (epoch * n_stages / self.epochs).min(n_stages - 1)
    }

    pub fn learning_rates(&self, epoch: usize) -> (f64, f64) {
        (
            self.lr_nonlinear[self.stage(epoch, self.lr_nonlinear.len())],
            self.lr_linear[self.stage(epoch, self.lr_linear.len())],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: usize,
    pub lr_nonlinear: f64,
    pub lr_linear: f64,
    pub loss: f64,
}

/// Training pairs: row `i` of `targets` is row `i` of `inputs` one interval later.
#[derive(Debug, Clone)]
pub struct PairSet {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub tau: f64,
}

impl PairSet {
    pub fn from_dataset(ds: &SnapshotDataset, train: bool) -> Result<Self> {
        let pairs = ds.pairs(train);
        if pairs.is_empty() {
            return Err(Error::Empty("training pairs"));
        }
        let a: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<_> = pairs.iter().map(|p| p.1).collect();
        let stack = |v: &[ndarray::ArrayView1<f64>]| ndarray::stack(Axis(0), v).expect("congruent rows");
        Ok(Self { inputs: stack(&a), targets: stack(&b), tau: ds.tau })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Model plus optimizer state; everything needed to resume bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: RhsModel,
    pub adam_nonlinear: Adam,
    pub adam_linear: Adam,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(model: RhsModel) -> Self {
        let (n, l) = (model.n_nonlinear_params(), model.n_linear_params());
        Self { model, adam_nonlinear: Adam::new(n), adam_linear: Adam::new(l), epoch: 0 }
    }

    /// One pass over shuffled minibatches. On divergence the state is rolled
    /// back to the start of the epoch and the error returned.
    pub fn run_epoch(&mut self, data: &PairSet, config: &TrainConfig) -> Result<EpochRecord> {
        config.validate()?;
        let saved = self.clone();
        match self.epoch_inner(data, config) {
            Ok(r) => Ok(r),
            Err(e) => {
                *self = saved;
                Err(e)
            }
        }
    }

    fn epoch_inner(&mut self, data: &PairSet, config: &TrainConfig) -> Result<EpochRecord> {
        if data.is_empty() {
            return Err(Error::Empty("training pairs"));
        }
        let epoch = self.epoch;
        let (lr_nl, lr_lin) = config.learning_rates(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let n_nl = self.model.n_nonlinear_params();
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = data.inputs.select(Axis(0), chunk);
            let y = data.targets.select(Axis(0), chunk);
            let m = stable_substeps(self.model.linear_spectral_radius(), data.tau, config.rollout_steps);
            let (value, grad) = loss_gradient(&self.model, x.view(), y.view(), data.tau, m)?;
            total += value * chunk.len() as f64;
            let g = grad.to_flat();
            let mut p = self.model.to_flat();
            self.adam_nonlinear.step(&mut p[..n_nl], &g[..n_nl], lr_nl);
            self.adam_linear.step(&mut p[n_nl..], &g[n_nl..], lr_lin);
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: epoch, time: f64::NAN });
            }
            self.model.set_flat(&p)?;
        }
        self.epoch += 1;
        Ok(EpochRecord {
            epoch,
            stage: config.stage(epoch, config.lr_nonlinear.len()),
            lr_nonlinear: lr_nl,
            lr_linear: lr_lin,
            loss: total / data.len() as f64,
        })
    }
}

/// Full-set loss of the current model without gradients.
pub fn evaluate_loss(model: &RhsModel, data: &PairSet, substeps: usize) -> Result<f64> {
    let m = stable_substeps(model.linear_spectral_radius(), data.tau, substeps);
    let pred = super::integrate::integrate_batch(model, data.inputs.view(), data.tau, m)?;
    l1_loss(pred.view(), data.targets.view())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<EpochRecord>,
}

/// Runs the remaining epochs of `config` from `state`.
pub fn train_from(mut state: TrainState, data: &PairSet, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut history = Vec::with_capacity(config.epochs.saturating_sub(state.epoch));
    while state.epoch < config.epochs {
        history.push(state.run_epoch(data, config)?);
    }
    Ok(TrainOutcome { state, history })
}

pub fn train(model: RhsModel, dataset: &SnapshotDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    if dataset.dim() != model.dim() {
        return Err(Error::Shape { expected: model.dim(), got: dataset.dim() });
    }
    train_from(TrainState::new(model), &PairSet::from_dataset(dataset, true)?, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{init_mlp, init_stencil, Activation, ConvStencil, MlpParams, WeightInit};
    use crate::spectral::{generate_dataset, true_linear_operator, DatasetParams, VbeParams};
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    #[test]
    fn loss_examples() {
        let a = Field { values: array![0.5, -0.5], length: 1.0, time: 0.0 };
        let z = Field { values: array![0.0, 0.0], length: 1.0, time: 0.0 };
        assert_eq!(loss(&[a.clone()], &[z.clone()]).unwrap(), 0.5);
        assert_eq!(loss(&[a.clone()], &[a.clone()]).unwrap(), 0.0);
        let b = Field { values: array![1.5, -1.5], ..a.clone() };
        assert_eq!(loss(&[b], &[z.clone()]).unwrap(), 1.5);
        assert!(loss(&[a], &[]).is_err());
    }

    #[test]
    fn schedule_switches_evenly() {
        let mut c = TrainConfig::defaults(System::Vbe, Variant::FixedLinear);
        assert_eq!(c.lr_nonlinear, vec![1e-3, 1e-4, 1e-5]);
        assert_eq!(c.lr_linear, vec![1e0, 1e-1, 1e-2]);
        c.epochs = 9000;
        let stages: Vec<usize> = [0, 2999, 3000, 5999, 6000, 8999].iter().map(|&e| c.stage(e, 3)).collect();
        assert_eq!(stages, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(c.learning_rates(8999), (1e-5, 1e-2));
        assert_eq!(TrainConfig::defaults(System::Kse, Variant::Nonlinear).lr_nonlinear, vec![1e-3, 1e-4]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut a = Adam::new(2);
        let mut p = [1.0, -1.0];
        a.step(&mut p, &[3.0, -0.01], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-9 && (p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn scalar_gradient_matches_amplification_derivative() {
        // du/dt = theta u via a 1-1 linear network; one RK4 step.
        let (theta, h, u0) = (-0.7_f64, 0.3_f64, 1.3_f64);
        let mut p = MlpParams::zeros(&[1, 1], &[Activation::Linear]).unwrap();
        p.weights[0][[0, 0]] = theta;
        let model = RhsModel { mlp: p, linear: super::super::model::LinearBranch::None, length: 1.0 };
        let z = theta * h;
        let amp = 1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0;
        let damp = h * (1.0 + z + z * z / 2.0 + z.powi(3) / 6.0);
        let target = amp * u0 - 0.25;
        let (value, g) = loss_gradient(&model, array![[u0]].view(), array![[target]].view(), h, 1).unwrap();
        assert!((value - 0.25).abs() < 1e-14);
        assert!((g.mlp.weights[0][[0, 0]] - damp * u0).abs() < 1e-14);
    }

    #[test]
    fn exact_fit_has_zero_gradient() {
        let init = WeightInit::Normal { mean: 0.0, var: 0.1 };
        let m = RhsModel::nonlinear(init_mlp(&[8, 6, 8], &[Activation::Relu, Activation::Linear], init, 0).unwrap(), 1.0).unwrap();
        let x = Array2::from_shape_fn((3, 8), |(i, j)| ((i + 2 * j) as f64).cos());
        let y = super::super::integrate::integrate_batch(&m, x.view(), 0.1, 2).unwrap();
        let (v, g) = loss_gradient(&m, x.view(), y.view(), 0.1, 2).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.is_zero());
    }

    fn models(d: usize, seed: u64) -> Vec<RhsModel> {
        let init = WeightInit::Normal { mean: 0.0, var: 0.2 };
        let mk = |act| init_mlp(&[d, 10, 10, d], &[act, act, Activation::Linear], init, seed).unwrap();
        let a = true_linear_operator(System::Vbe, d, 1.0, 8e-4);
        vec![
            RhsModel::nonlinear(mk(Activation::Relu), 1.0).unwrap(),
            RhsModel::fixed_linear(mk(Activation::Sigmoid), a, 1.0).unwrap(),
            RhsModel::learned_linear(mk(Activation::Relu), init_stencil(3, true, init, seed).unwrap(), 1.0).unwrap(),
            RhsModel::learned_linear(mk(Activation::Sigmoid), init_stencil(5, false, init, seed + 1).unwrap(), 1.0).unwrap(),
        ]
    }

    fn relative_fd_error(model: &RhsModel, x: &Array2<f64>, y: &Array2<f64>, dir: &[f64]) -> f64 {
        let (tau, steps) = (0.05, 2);
        let (_, g) = loss_gradient(model, x.view(), y.view(), tau, steps).unwrap();
        let analytic: f64 = g.to_flat().iter().zip(dir).map(|(a, b)| a * b).sum();
        let base = model.to_flat();
        let eval = |s: f64| {
            let mut m = model.clone();
            let p: Vec<f64> = base.iter().zip(dir).map(|(p, d)| p + s * d).collect();
            m.set_flat(&p).unwrap();
            let pred = super::super::integrate::integrate_batch(&m, x.view(), tau, steps).unwrap();
            l1_loss(pred.view(), y.view()).unwrap()
        };
        let h = 1e-5;
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        (fd - analytic).abs() / analytic.abs().max(1e-8)
    }

    /// Smallest |pre-activation| of any relu unit over every RK4 stage, and
    /// the smallest |prediction - target|: distances to the kinks.
    fn kink_margin(model: &RhsModel, x: &Array2<f64>, y: &Array2<f64>, tau: f64, steps: usize) -> f64 {
        let mut margin = f64::INFINITY;
        let mut probe = |z: &Array2<f64>| {
            let mut cur = z.clone();
            for ((w, b), act) in model.mlp.weights.iter().zip(&model.mlp.biases).zip(&model.mlp.activations) {
                let mut pre = cur.dot(w);
                pre += b;
                if *act == Activation::Relu {
                    margin = pre.iter().fold(margin, |m, v| m.min(v.abs()));
                    pre.mapv_inplace(|v| v.max(0.0));
                } else if *act == Activation::Sigmoid {
                    pre.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp()));
                }
                cur = pre;
            }
        };
        let h = tau / steps as f64;
        let mut u = x.clone();
        for _ in 0..steps {
            probe(&u);
            let k1 = model.eval_batch(u.view()).unwrap();
            let s2 = &u + &(&k1 * (h / 2.0));
            probe(&s2);
            let k2 = model.eval_batch(s2.view()).unwrap();
            let s3 = &u + &(&k2 * (h / 2.0));
            probe(&s3);
            let k3 = model.eval_batch(s3.view()).unwrap();
            let s4 = &u + &(&k3 * h);
            probe(&s4);
            let k4 = model.eval_batch(s4.view()).unwrap();
            u = &u + &((k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0));
        }
        (&u - y).iter().fold(margin, |m, v| m.min(v.abs()))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(25))]
        #[test]
        fn adjoint_matches_finite_differences(seed in 0u64..1000) {
            use rand::Rng;
            let d = 16;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for m in models(d, seed) {
                let (x, y) = loop {
                    let x = Array2::from_shape_fn((3, d), |_| rng.random_range(-1.0..1.0));
                    let y = Array2::from_shape_fn((3, d), |_| rng.random_range(-1.0..1.0));
                    if kink_margin(&m, &x, &y, 0.05, 2) >= 1e-4 {
                        break (x, y);
                    }
                };
                let mut dir: Vec<f64> = (0..m.to_flat().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                dir.iter_mut().for_each(|v| *v /= norm);
                let e = relative_fd_error(&m, &x, &y, &dir);
                prop_assert!(e < 1e-5, "{} rel err {e}", m.variant());
            }
        }
    }

    #[test]
    fn learned_linear_smoke_training_halves_loss() {
        let p = VbeParams { d: 32, solver_d: 256, n_train: 2, n_test: 0, horizon: 4.95, ..VbeParams::default() };
        let ds = generate_dataset(&DatasetParams::Vbe(p)).unwrap();
        assert_eq!(ds.n_traj() * ds.n_snap(), 200);
        let init = WeightInit::Normal { mean: 0.0, var: 1e-2 };
        let mlp = init_mlp(&[32, 32, 32, 32], &[Activation::Relu, Activation::Relu, Activation::Linear], init, 0).unwrap();
        let stencil = init_stencil(3, true, WeightInit::Normal { mean: 0.0, var: 1.0 }, 0).unwrap();
        let model = RhsModel::learned_linear(mlp, stencil, 1.0).unwrap();
        let config = TrainConfig { epochs: 200, batch_size: 64, rollout_steps: 2, ..TrainConfig::defaults(System::Vbe, Variant::LearnedLinear) };
        let data = PairSet::from_dataset(&ds, true).unwrap();
        let initial = evaluate_loss(&model, &data, 2).unwrap();
        let out = train(model, &ds, &config).unwrap();
        let last = evaluate_loss(&out.state.model, &data, 2).unwrap();
        assert_eq!(out.history.len(), 200);
        assert!(last < 0.5 * initial, "{initial} -> {last}");
    }

    #[test]
    fn training_is_reproducible_and_resumable() {
        let ds = generate_dataset(&DatasetParams::Vbe(VbeParams { d: 16, solver_d: 128, n_train: 1, n_test: 0, horizon: 1.0, ..VbeParams::default() })).unwrap();
        let init = WeightInit::Normal { mean: 0.0, var: 1e-2 };
        let model = RhsModel::learned_linear(
            init_mlp(&[16, 8, 16], &[Activation::Relu, Activation::Linear], init, 1).unwrap(),
            ConvStencil::new(Array1::zeros(3), true).unwrap(),
            1.0,
        )
        .unwrap();
        let config = TrainConfig { epochs: 6, batch_size: 7, rollout_steps: 1, ..TrainConfig::defaults(System::Vbe, Variant::LearnedLinear) };
        let a = train(model.clone(), &ds, &config).unwrap();
        let b = train(model.clone(), &ds, &config).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.history, b.history);
        let data = PairSet::from_dataset(&ds, true).unwrap();
        let mut partial = TrainState::new(model);
        for _ in 0..3 {
            partial.run_epoch(&data, &config).unwrap();
        }
        let resumed = train_from(partial, &data, &config).unwrap();
        assert_eq!(resumed.state, a.state);
        assert_eq!(resumed.history[..], a.history[3..]);
    }
}
