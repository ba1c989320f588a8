use std::f64::consts::PI;

use ndarray::Array1;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{check_grid, Field, Fourier};

/// Random Burgers initial condition drawn from `E0(k) = A k^4 exp(-(k/k0)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcSpec {
    pub peak_wavenumber: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl IcSpec {
    pub fn new(peak_wavenumber: f64, amplitude: f64, seed: u64) -> Result<Self> {
        let spec = Self { peak_wavenumber, amplitude, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Chooses the amplitude so that `sum_k E0(k) = 0.5 L / (2 pi)` over the
    /// modes `k = 1..=d/2` of a `d`-point grid.
    pub fn normalized(peak_wavenumber: f64, d: usize, length: f64, seed: u64) -> Result<Self> {
        let shape: f64 = (1..=d / 2).map(|k| spectrum_shape(k as f64, peak_wavenumber)).sum();
        if !(shape > 0.0) {
            return Err(Error::InvalidParameter(format!("peak wavenumber {peak_wavenumber}")));
        }
        Self::new(peak_wavenumber, 0.5 * length / (2.0 * PI) / shape, seed)
    }

    fn validate(&self) -> Result<()> {
        if !(self.peak_wavenumber > 0.0) {
            return Err(Error::InvalidParameter("peak wavenumber must be positive".into()));
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::InvalidParameter("spectral amplitude must be positive".into()));
        }
        Ok(())
    }
}

fn spectrum_shape(k: f64, k0: f64) -> f64 {
    k.powi(4) * (-(k / k0).powi(2)).exp()
}

/// Target spectrum `E0(k)` for `k = 0..=d/2`.
pub fn ic_energy_spectrum(spec: &IcSpec, d: usize) -> Array1<f64> {
    Array1::from_shape_fn(d / 2 + 1, |k| spec.amplitude * spectrum_shape(k as f64, spec.peak_wavenumber))
}

pub fn generate_vbe_ic(spec: &IcSpec, d: usize, length: f64) -> Result<Field> {
    check_grid(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phases: Vec<f64> = (1..=d / 2).map(|_| rng.random::<f64>()).collect();
    generate_vbe_ic_with_phases(spec, d, length, &phases)
}

/// Same as [`generate_vbe_ic`] with explicit phases `Psi(k)` for `k = 1..=d/2`.
pub fn generate_vbe_ic_with_phases(
    spec: &IcSpec,
    d: usize,
    length: f64,
    phases: &[f64],
) -> Result<Field> {
    spec.validate()?;
    check_grid(d)?;
    if phases.len() != d / 2 {
        return Err(Error::Shape { expected: d / 2, got: phases.len() });
    }
    let e0 = ic_energy_spectrum(spec, d);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); d / 2 + 1];
    for k in 1..=d / 2 {
        let psi = 2.0 * PI * phases[k - 1];
        coeffs[k] = Complex64::new((2.0 * e0[k]).sqrt() * (psi.cos() - psi.sin()), 0.0);
    }
    let fourier = Fourier::new(d)?;
    Field::new(fourier.inverse(&coeffs), length)
}
