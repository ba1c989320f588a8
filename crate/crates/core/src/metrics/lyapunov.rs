use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::spectral::{KseSolver, VbeSolver};

/// A time-`t` flow map of a ground-truth solver.
pub trait Propagator {
    fn step_size(&self) -> f64;
    fn propagate(&self, u: ArrayView1<f64>, steps: usize) -> Result<Array1<f64>>;
}

impl Propagator for KseSolver {
    fn step_size(&self) -> f64 {
        self.h()
    }

    fn propagate(&self, u: ArrayView1<f64>, steps: usize) -> Result<Array1<f64>> {
        let f = Field::new(u.to_owned(), self.length())?;
        Ok(self.advance(&f, steps)?.values)
    }
}

impl Propagator for VbeSolver {
    fn step_size(&self) -> f64 {
        self.dt()
    }

    fn propagate(&self, u: ArrayView1<f64>, steps: usize) -> Result<Array1<f64>> {
        let f = Field::new(u.to_owned(), self.length())?;
        Ok(self.advance(&f, steps)?.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovConfig {
    pub perturbation: f64,
    pub renormalize_every: f64,
    pub total_time: f64,
    pub discard_fraction: f64,
    pub seed: u64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self { perturbation: 1e-8, renormalize_every: 1.0, total_time: 2000.0, discard_fraction: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    /// `1 / exponent`, only for a positive exponent.
    pub lyapunov_time: Option<f64>,
    pub intervals_used: usize,
}

/// Leading Lyapunov exponent by repeatedly rescaling the separation of a
/// companion trajectory back to the initial perturbation size.
pub fn lyapunov_exponent(flow: &impl Propagator, u0: ArrayView1<f64>, config: &LyapunovConfig) -> Result<LyapunovEstimate> {
    let h = flow.step_size();
    let steps = (config.renormalize_every / h).round() as usize;
    if steps == 0 || ((steps as f64 * h) - config.renormalize_every).abs() > 1e-9 * config.renormalize_every {
        return Err(Error::InvalidParameter(format!(
            "renormalization interval {} is not a multiple of the solver step {h}",
            config.renormalize_every
        )));
    }
    if !(config.perturbation > 0.0) || !(0.0..1.0).contains(&config.discard_fraction) {
        return Err(Error::InvalidParameter("perturbation must be positive and discard fraction in [0, 1)".into()));
    }
    let n = (config.total_time / config.renormalize_every).round() as usize;
    let skip = (n as f64 * config.discard_fraction).floor() as usize;
    if n <= skip {
        return Err(Error::InvalidParameter("no intervals left after discarding the transient".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dir: Array1<f64> = Array1::from_shape_fn(u0.len(), |_| StandardNormal.sample(&mut rng));
    dir *= config.perturbation / dir.dot(&dir).sqrt();
    let mut u = u0.to_owned();
    let mut w = &u + &dir;
    let mut sum = 0.0;
    for i in 0..n {
        u = flow.propagate(u.view(), steps)?;
        w = flow.propagate(w.view(), steps)?;
        let sep = &w - &u;
        let norm = sep.dot(&sep).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter(format!("separation collapsed to {norm} in interval {i}")));
        }
        if i >= skip {
            sum += (norm / config.perturbation).ln();
        }
        w = &u + &(sep * (config.perturbation / norm));
    }
    let used = n - skip;
    let exponent = sum / (used as f64 * config.renormalize_every);
    Ok(LyapunovEstimate { exponent, lyapunov_time: (exponent > 0.0).then(|| 1.0 / exponent), intervals_used: used })
}
