//! Real periodic fields and their one-sided Fourier representation.
//!
//! The forward transform carries the `1/d` normalization, so a pure mode
//! `a cos(2 pi k x / L)` has coefficient `a/2` at wavenumber `k`. The inverse
//! is unnormalized and reproduces the grid values exactly up to rounding.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// State sampled at `d` equispaced points of a periodic domain `[0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Array1<f64>,
    pub length: f64,
    pub time: f64,
}

impl Field {
    pub fn new(values: Array1<f64>, length: f64) -> Result<Self> {
        check_grid(values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter(format!("domain length {length}")));
        }
        Ok(Self { values, length, time: 0.0 })
    }

    pub fn zeros(d: usize, length: f64) -> Result<Self> {
        Self::new(Array1::zeros(d), length)
    }

    /// Samples `f(x)` at the grid points `x_j = j L / d`.
    pub fn from_fn(d: usize, length: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = length / d as f64;
        Self::new(Array1::from_shape_fn(d, |j| f(j as f64 * dx)), length)
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.dim() as f64
    }

    pub fn grid(&self) -> Array1<f64> {
        let dx = self.spacing();
        Array1::from_shape_fn(self.dim(), |j| j as f64 * dx)
    }
}

/// One-sided transform `u_hat(k)`, `k = 0..=d/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub coeffs: Array1<Complex64>,
    pub length: f64,
}

impl SpectralField {
    pub fn zeros(d: usize, length: f64) -> Self {
        Self { coeffs: Array1::zeros(d / 2 + 1), length }
    }

    /// Grid size this spectrum corresponds to.
    pub fn grid_size(&self) -> usize {
        2 * (self.coeffs.len() - 1)
    }
}

pub(crate) fn check_grid(d: usize) -> Result<()> {
    if d < 4 || d % 2 != 0 {
        Err(Error::InvalidGrid(d))
    } else {
        Ok(())
    }
}

/// Angular wavenumber `2 pi k / L`.
pub fn wavenumber(k: usize, length: f64) -> f64 {
    2.0 * PI * k as f64 / length
}

/// Cached forward/inverse plans for one grid size.
#[derive(Clone)]
pub struct Fourier {
    d: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("d", &self.d).finish()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

impl Fourier {
    pub fn new(d: usize) -> Result<Self> {
        check_grid(d)?;
        let (forward, inverse) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(d), p.plan_fft_inverse(d))
        });
        Ok(Self { d, forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn modes(&self) -> usize {
        self.d / 2 + 1
    }

    /// Forward transform of `values` into `out` (length `d/2 + 1`).
    pub fn forward_into(&self, values: ArrayView1<f64>, out: &mut [Complex64]) {
        debug_assert_eq!(values.len(), self.d);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.d as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b * scale;
        }
        out[0].im = 0.0;
        out[self.d / 2].im = 0.0;
    }

    pub fn forward(&self, values: ArrayView1<f64>) -> Array1<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.modes()];
        self.forward_into(values, &mut out);
        Array1::from(out)
    }

    /// Inverse transform; the imaginary parts of `k = 0` and `k = d/2` are ignored.
    pub fn inverse_into(&self, coeffs: &[Complex64], out: &mut [f64]) {
        let d = self.d;
        debug_assert_eq!(coeffs.len(), self.modes());
        let mut buf = vec![Complex64::new(0.0, 0.0); d];
        buf[0] = Complex64::new(coeffs[0].re, 0.0);
        buf[d / 2] = Complex64::new(coeffs[d / 2].re, 0.0);
        for k in 1..d / 2 {
            buf[k] = coeffs[k];
            buf[d - k] = coeffs[k].conj();
        }
        self.inverse.process(&mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re;
        }
    }

    pub fn inverse(&self, coeffs: &[Complex64]) -> Array1<f64> {
        let mut out = vec![0.0; self.d];
        self.inverse_into(coeffs, &mut out);
        Array1::from(out)
    }
}

pub fn to_spectral(field: &Field) -> Result<SpectralField> {
    let fourier = Fourier::new(field.dim())?;
    Ok(SpectralField { coeffs: fourier.forward(field.values.view()), length: field.length })
}

pub fn from_spectral(sf: &SpectralField, d: usize) -> Result<Field> {
    check_grid(d)?;
    if sf.coeffs.len() != d / 2 + 1 {
        return Err(Error::Shape { expected: d / 2 + 1, got: sf.coeffs.len() });
    }
    let fourier = Fourier::new(d)?;
    let coeffs = sf.coeffs.as_slice().expect("contiguous");
    Field::new(fourier.inverse(coeffs), sf.length)
}
