use ndarray::{Array2, ArrayView2, Axis};

use super::model::{ModelGrad, RhsModel, RhsTape};
use crate::error::{Error, Result};
use crate::field::Field;

/// Anything that can be stepped by the fixed-step integrator.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;
    /// Largest eigenvalue magnitude of the stiff linear part, 0 if unknown.
    fn stiffness(&self) -> f64 {
        0.0
    }
}

impl VectorField for RhsModel {
    fn dim(&self) -> usize {
        RhsModel::dim(self)
    }

    fn eval_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        RhsModel::eval_batch(self, x)
    }

    fn stiffness(&self) -> f64 {
        self.linear_spectral_radius()
    }
}

/// Real-axis stability limit of classical RK4 is about 2.785; keep a margin.
const RK4_STABLE_HLAMBDA: f64 = 2.5;

/// Number of RK4 substeps to cover `interval`: at least `requested`, and
/// enough that `h * stiffness` stays inside the stability region.
pub fn stable_substeps(stiffness: f64, interval: f64, requested: usize) -> usize {
    let needed = (interval * stiffness / RK4_STABLE_HLAMBDA).ceil();
    requested.max(1).max(if needed.is_finite() { needed as usize } else { usize::MAX / 2 })
}

fn check_finite(x: &Array2<f64>, step: usize, time: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { step, time })
    }
}

fn rk4_step(f: &impl VectorField, x: &Array2<f64>, h: f64) -> Result<Array2<f64>> {
    let k1 = f.eval_batch(x.view())?;
    let k2 = f.eval_batch((x + &(&k1 * (h / 2.0))).view())?;
    let k3 = f.eval_batch((x + &(&k2 * (h / 2.0))).view())?;
    let k4 = f.eval_batch((x + &(&k3 * h)).view())?;
    Ok(x + &((k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)))
}

/// Classical RK4 with `nsteps` equal steps over `horizon`, applied to every row.
pub fn integrate_batch(f: &impl VectorField, x0: ArrayView2<f64>, horizon: f64, nsteps: usize) -> Result<Array2<f64>> {
    if nsteps == 0 {
        return Err(Error::InvalidParameter("nsteps must be at least 1".into()));
    }
    if x0.ncols() != f.dim() {
        return Err(Error::Shape { expected: f.dim(), got: x0.ncols() });
    }
    let h = horizon / nsteps as f64;
    let mut x = x0.to_owned();
    for step in 0..nsteps {
        x = rk4_step(f, &x, h)?;
        check_finite(&x, step + 1, h * (step + 1) as f64)?;
    }
    Ok(x)
}

pub fn integrate(f: &impl VectorField, u0: &Field, horizon: f64, nsteps: usize) -> Result<Field> {
    let x = integrate_batch(f, u0.values.view().insert_axis(Axis(0)), horizon, nsteps)?;
    Ok(Field { values: x.index_axis_move(Axis(0), 0), length: u0.length, time: u0.time + horizon })
}

/// Retained stage state of one RK4 step.
struct StepTape {
    stages: [RhsTape; 4],
}

/// Forward RK4 pass over a batch, retaining every stage for the reverse pass.
pub struct Rk4Trace {
    steps: Vec<StepTape>,
    h: f64,
    pub output: Array2<f64>,
}

pub fn rk4_forward_traced(model: &RhsModel, x0: ArrayView2<f64>, horizon: f64, nsteps: usize) -> Result<Rk4Trace> {
    if nsteps == 0 {
        return Err(Error::InvalidParameter("nsteps must be at least 1".into()));
    }
    let h = horizon / nsteps as f64;
    let mut x = x0.to_owned();
    let mut steps = Vec::with_capacity(nsteps);
    for step in 0..nsteps {
        let (k1, t1) = model.forward_batch(x.view())?;
        let (k2, t2) = model.forward_batch((&x + &(&k1 * (h / 2.0))).view())?;
        let (k3, t3) = model.forward_batch((&x + &(&k2 * (h / 2.0))).view())?;
        let (k4, t4) = model.forward_batch((&x + &(&k3 * h)).view())?;
        x = &x + &((k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0));
        check_finite(&x, step + 1, h * (step + 1) as f64)?;
        steps.push(StepTape { stages: [t1, t2, t3, t4] });
    }
    Ok(Rk4Trace { steps, h, output: x })
}

/// Discrete adjoint: pulls the output cotangent back through every RK4 stage.
/// Returns the parameter gradient and the cotangent of the initial state.
pub fn rk4_backward(model: &RhsModel, trace: Rk4Trace, cotangent: Array2<f64>) -> Result<(ModelGrad, Array2<f64>)> {
    if cotangent.dim() != trace.output.dim() {
        return Err(Error::Shape { expected: trace.output.len(), got: cotangent.len() });
    }
    let h = trace.h;
    let mut grad = ModelGrad::zeros_like(model);
    let mut ubar = cotangent;
    for StepTape { stages } in trace.steps.into_iter().rev() {
        let [t1, t2, t3, t4] = stages;
        let mut k1bar = &ubar * (h / 6.0);
        let mut k2bar = &ubar * (h / 3.0);
        let mut k3bar = &ubar * (h / 3.0);
        let k4bar = &ubar * (h / 6.0);

        let (g, x4bar) = model.backward_batch(t4, k4bar.view())?;
        grad.add_assign(&g);
        ubar += &x4bar;
        k3bar.scaled_add(h, &x4bar);

        let (g, x3bar) = model.backward_batch(t3, k3bar.view())?;
        grad.add_assign(&g);
        ubar += &x3bar;
        k2bar.scaled_add(h / 2.0, &x3bar);

        let (g, x2bar) = model.backward_batch(t2, k2bar.view())?;
        grad.add_assign(&g);
        ubar += &x2bar;
        k1bar.scaled_add(h / 2.0, &x2bar);

        let (g, x1bar) = model.backward_batch(t1, k1bar.view())?;
        grad.add_assign(&g);
        ubar += &x1bar;
    }
    Ok((grad, ubar))
}

/// States saved along a long integration. If the run diverged, `states`
/// ends at the last finite save and `diverged_at` holds the failure time.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub states: Vec<Field>,
    pub diverged_at: Option<f64>,
}

/// Integrates for `total_time`, saving every `save_interval`, with at least
/// `substeps` RK4 steps per interval (more if the linear part demands it).
pub fn rollout(f: &impl VectorField, u0: &Field, total_time: f64, save_interval: f64, substeps: usize) -> Result<Rollout> {
    let n = intervals(total_time, save_interval)?;
    let m = stable_substeps(f.stiffness(), save_interval, substeps);
    let mut states = vec![u0.clone()];
    let mut cur = u0.values.clone().insert_axis(Axis(0));
    for i in 0..n {
        match integrate_batch(f, cur.view(), save_interval, m) {
            Ok(next) => cur = next,
            Err(e) if e.is_divergence() => {
                let Error::Divergence { step, .. } = e else { unreachable!() };
                let t = u0.time + i as f64 * save_interval + step as f64 * save_interval / m as f64;
                return Ok(Rollout { states, diverged_at: Some(t) });
            }
            Err(e) => return Err(e),
        }
        states.push(Field {
            values: cur.row(0).to_owned(),
            length: u0.length,
            time: u0.time + (i + 1) as f64 * save_interval,
        });
    }
    Ok(Rollout { states, diverged_at: None })
}

/// Ensemble rollout. Returns `n + 1` arrays of shape (members, d). Rows that
/// blow up keep going as non-finite values; other rows are unaffected.
pub fn rollout_batch(f: &impl VectorField, x0: ArrayView2<f64>, n_intervals: usize, interval: f64, substeps: usize) -> Result<Vec<Array2<f64>>> {
    if x0.ncols() != f.dim() {
        return Err(Error::Shape { expected: f.dim(), got: x0.ncols() });
    }
    let m = stable_substeps(f.stiffness(), interval, substeps);
    let h = interval / m as f64;
    let mut out = Vec::with_capacity(n_intervals + 1);
    let mut x = x0.to_owned();
    out.push(x.clone());
    for _ in 0..n_intervals {
        for _ in 0..m {
            x = rk4_step(f, &x, h)?;
            for mut row in x.rows_mut() {
                if row.iter().any(|v| !v.is_finite()) {
                    row.fill(f64::NAN);
                }
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

pub(crate) fn intervals(total: f64, interval: f64) -> Result<usize> {
    if !(interval > 0.0) || !(total >= 0.0) {
        return Err(Error::InvalidParameter(format!("total time {total}, interval {interval}")));
    }
    let n = (total / interval).round();
    if (n * interval - total).abs() > 1e-9 * total.max(1.0) {
        return Err(Error::InvalidParameter(format!("save interval {interval} does not divide {total}")));
    }
    Ok(n as usize)
}

/// Final state of every row after one data interval; convenience for evaluation.
pub fn advance_rows(f: &impl VectorField, x: ArrayView2<f64>, interval: f64, substeps: usize) -> Result<Array2<f64>> {
    integrate_batch(f, x, interval, stable_substeps(f.stiffness(), interval, substeps))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{init_mlp, Activation, ConvStencil, MlpParams, WeightInit};
    use crate::spectral::{true_linear_operator, System};
    use ndarray::array;

    struct Scalar(f64);

    impl VectorField for Scalar {
        fn dim(&self) -> usize {
            1
        }
        fn eval_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
            Ok(x.to_owned() * self.0)
        }
    }

    #[test]
    fn one_step_amplification_polynomial() {
        let x = integrate_batch(&Scalar(-1.0), array![[1.0]].view(), 0.1, 1).unwrap();
        let h: f64 = 0.1;
        let p = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((x[[0, 0]] - p).abs() < 1e-15);
        assert!((x[[0, 0]] - 0.9048375).abs() < 1e-7);
    }

    #[test]
    fn zero_rhs_is_identity() {
        let m = RhsModel::nonlinear(MlpParams::zeros(&[8, 4, 8], &[Activation::Relu, Activation::Linear]).unwrap(), 1.0).unwrap();
        let u = Field::from_fn(8, 1.0, |x| x.sin()).unwrap();
        assert_eq!(integrate(&m, &u, 1.0, 7).unwrap().values, u.values);
        let r = rollout(&m, &u, 2.0, 0.5, 2).unwrap();
        assert_eq!(r.states.len(), 5);
        assert!(r.states.iter().all(|s| s.values == u.values));
        let r = rollout(&m, &u, 0.5, 0.5, 2).unwrap();
        assert_eq!(r.states.len(), 2);
        assert!(rollout(&m, &u, 1.0, 0.3, 1).is_err());
    }

    #[test]
    fn fixed_linear_matches_matrix_exponential() {
        // A is circulant, so exp(tA) acts on each Fourier mode by exp(t * symbol).
        let (d, l, t) = (16, 22.0, 0.5);
        let a = true_linear_operator(System::Kse, d, l, 0.0);
        let m = RhsModel::fixed_linear(MlpParams::zeros(&[d, 4, d], &[Activation::Relu, Activation::Linear]).unwrap(), a, l).unwrap();
        let q = |k: f64| 2.0 * std::f64::consts::PI * k / l;
        let u0 = Field::from_fn(d, l, |x| (q(1.0) * x).sin() + 0.5 * (q(7.0) * x).cos()).unwrap();
        let g = |k: f64| (t * (q(k).powi(2) - q(k).powi(4))).exp();
        let exact = Field::from_fn(d, l, |x| g(1.0) * (q(1.0) * x).sin() + 0.5 * g(7.0) * (q(7.0) * x).cos()).unwrap();
        let err = |n: usize| {
            let u = integrate(&m, &u0, t, n).unwrap();
            (&u.values - &exact.values).iter().map(|v| v.abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(10), err(20));
        assert!(e1 < 1e-3, "{e1}");
        let order = (e1 / e2).log2();
        assert!((3.5..4.5).contains(&order), "{order}");
    }

    #[test]
    fn doubling_steps_gives_fourth_order() {
        let init = WeightInit::Normal { mean: 0.0, var: 0.3 };
        let m = RhsModel::nonlinear(init_mlp(&[8, 16, 8], &[Activation::Sigmoid, Activation::Linear], init, 5).unwrap(), 1.0).unwrap();
        let u0 = Field::from_fn(8, 1.0, |x| (6.0 * x).sin()).unwrap();
        let fine = integrate(&m, &u0, 2.0, 1024).unwrap();
        let err = |n| {
            let u = integrate(&m, &u0, 2.0, n).unwrap();
            (&u.values - &fine.values).iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let order = (err(16) / err(32)).log2();
        assert!((3.5..4.5).contains(&order), "{order}");
    }

    #[test]
    fn divergence_carries_step() {
        match integrate_batch(&Scalar(1e200), array![[1e200]].view(), 1.0, 3) {
            Err(Error::Divergence { step: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        let r = rollout(&Scalar(1e30), &Field { values: array![1.0], length: 1.0, time: 0.0 }, 10.0, 1.0, 1).unwrap();
        assert!(r.diverged_at.is_some());
        assert!(r.states.iter().all(|s| s.values[0].is_finite()));
    }

    #[test]
    fn substeps_respect_stiffness() {
        assert_eq!(stable_substeps(0.0, 0.05, 5), 5);
        assert_eq!(stable_substeps(2070.0, 0.05, 5), 42);
        let s = ConvStencil::new(array![100.0, -200.0, 100.0], false).unwrap();
        let m = RhsModel::learned_linear(MlpParams::zeros(&[8, 2, 8], &[Activation::Relu, Activation::Linear]).unwrap(), s, 1.0).unwrap();
        let x0 = Array2::from_shape_fn((2, 8), |(i, j)| if j == i { 1.0 } else { 0.0 });
        let out = rollout_batch(&m, x0.view(), 4, 0.1, 1).unwrap();
        assert!(out.iter().all(|x| x.iter().all(|v| v.is_finite())));
    }
}
