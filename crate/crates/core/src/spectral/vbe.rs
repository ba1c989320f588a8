//! Burgers solver: low-storage third-order Runge-Kutta for advection with
//! Crank-Nicolson diffusion, all in Fourier space.

use ndarray::Array1;
use num_complex::Complex64;

use super::{advection_hat, vbe_symbol};
use crate::error::{Error, Result};
use crate::field::{Field, Fourier};

const GAMMA: [f64; 3] = [8.0 / 15.0, 5.0 / 12.0, 3.0 / 4.0];
const ZETA: [f64; 3] = [0.0, -17.0 / 60.0, -5.0 / 12.0];
const ALPHA: [f64; 3] = [4.0 / 15.0, 1.0 / 15.0, 1.0 / 6.0];

#[derive(Debug, Clone)]
pub struct VbeSolver {
    fourier: Fourier,
    length: f64,
    dt: f64,
    symbol: Array1<f64>,
}

impl VbeSolver {
    pub fn new(d: usize, length: f64, viscosity: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step {dt}")));
        }
        if !(viscosity > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity {viscosity}")));
        }
        Ok(Self { fourier: Fourier::new(d)?, length, dt, symbol: vbe_symbol(d, length, viscosity) })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn fourier(&self) -> &Fourier {
        &self.fourier
    }

    /// One full time step on the one-sided spectrum, in place.
    pub fn step_hat(&self, coeffs: &mut [Complex64]) {
        let m = coeffs.len();
        let mut n_prev = vec![Complex64::new(0.0, 0.0); m];
        let mut n_cur = vec![Complex64::new(0.0, 0.0); m];
        for stage in 0..3 {
            advection_hat(&self.fourier, coeffs, self.length, &mut n_cur);
            let a = ALPHA[stage] * self.dt;
            for k in 0..m {
                let l = self.symbol[k];
                let explicit = coeffs[k] * (1.0 + a * l)
                    + (n_cur[k] * GAMMA[stage] + n_prev[k] * ZETA[stage]) * self.dt;
                coeffs[k] = explicit / (1.0 - a * l);
            }
            std::mem::swap(&mut n_prev, &mut n_cur);
        }
    }

    /// Advances `field` by `nsteps` steps.
    pub fn advance(&self, field: &Field, nsteps: usize) -> Result<Field> {
        let mut c = self.fourier.forward(field.values.view()).to_vec();
        for step in 0..nsteps {
            self.step_hat(&mut c);
            if c.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::Divergence { step, time: field.time + (step + 1) as f64 * self.dt });
            }
        }
        let values = self.fourier.inverse(&c);
        Ok(Field { values, length: field.length, time: field.time + nsteps as f64 * self.dt })
    }
}

pub fn step_vbe(field: &Field, dt: f64, viscosity: f64) -> Result<Field> {
    VbeSolver::new(field.dim(), field.length, viscosity, dt)?.advance(field, 1)
}
