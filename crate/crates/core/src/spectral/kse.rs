//! Kuramoto-Sivashinsky solver: fourth-order exponential time differencing
//! (ETDRK4) with contour-averaged coefficients.

use ndarray::Array1;
use num_complex::Complex64;

use super::{advection_hat, kse_symbol};
use crate::error::{Error, Result};
use crate::field::{Field, Fourier, SpectralField};

/// Number of contour points used for the phi-function coefficients.
pub const CONTOUR_POINTS: usize = 32;

#[derive(Debug, Clone)]
pub struct KseSolver {
    fourier: Fourier,
    length: f64,
    h: f64,
    e: Array1<f64>,
    e2: Array1<f64>,
    q: Array1<f64>,
    f1: Array1<f64>,
    f2: Array1<f64>,
    f3: Array1<f64>,
}

impl KseSolver {
    pub fn new(d: usize, length: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("time step {h}")));
        }
        let fourier = Fourier::new(d)?;
        let sym = kse_symbol(d, length);
        let m = sym.len();
        let (mut q, mut f1, mut f2, mut f3) =
            (Array1::zeros(m), Array1::zeros(m), Array1::zeros(m), Array1::zeros(m));
        for k in 0..m {
            let lh = sym[k] * h;
            let (mut sq, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for j in 1..=CONTOUR_POINTS {
                let r = Complex64::from_polar(
                    1.0,
                    std::f64::consts::PI * (j as f64 - 0.5) / CONTOUR_POINTS as f64,
                );
                let z = r + lh;
                let ez = z.exp();
                let z3 = z * z * z;
                sq += (((z / 2.0).exp() - 1.0) / z).re;
                s1 += ((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3).re;
                s2 += ((2.0 + z + ez * (z - 2.0)) / z3).re;
                s3 += ((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3).re;
            }
            let n = CONTOUR_POINTS as f64;
            q[k] = h * sq / n;
            f1[k] = h * s1 / n;
            f2[k] = h * s2 / n;
            f3[k] = h * s3 / n;
        }
        Ok(Self {
            fourier,
            length,
            h,
            e: sym.mapv(|l| (l * h).exp()),
            e2: sym.mapv(|l| (l * h / 2.0).exp()),
            q,
            f1,
            f2,
            f3,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn fourier(&self) -> &Fourier {
        &self.fourier
    }

    fn nonlinear(&self, v: &[Complex64], out: &mut [Complex64]) {
        advection_hat(&self.fourier, v, self.length, out);
    }

    /// One ETDRK4 step of the one-sided spectrum, in place.
    pub fn step_hat(&self, v: &mut [Complex64]) {
        let m = v.len();
        let zero = Complex64::new(0.0, 0.0);
        let (mut nv, mut na, mut nb, mut nc) = (vec![zero; m], vec![zero; m], vec![zero; m], vec![zero; m]);
        let (mut a, mut b, mut c) = (vec![zero; m], vec![zero; m], vec![zero; m]);
        self.nonlinear(v, &mut nv);
        for k in 0..m {
            a[k] = v[k] * self.e2[k] + nv[k] * self.q[k];
        }
        self.nonlinear(&a, &mut na);
        for k in 0..m {
            b[k] = v[k] * self.e2[k] + na[k] * self.q[k];
        }
        self.nonlinear(&b, &mut nb);
        for k in 0..m {
            c[k] = a[k] * self.e2[k] + (nb[k] * 2.0 - nv[k]) * self.q[k];
        }
        self.nonlinear(&c, &mut nc);
        for k in 0..m {
            v[k] = v[k] * self.e[k]
                + nv[k] * self.f1[k]
                + (na[k] + nb[k]) * (2.0 * self.f2[k])
                + nc[k] * self.f3[k];
        }
    }

    /// Advances a spectrum `nsteps` steps, failing on the first non-finite mode.
    pub fn advance_hat(&self, v: &mut [Complex64], nsteps: usize) -> Result<()> {
        for step in 0..nsteps {
            self.step_hat(v);
            if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::Divergence { step, time: (step + 1) as f64 * self.h });
            }
        }
        Ok(())
    }

    pub fn advance(&self, field: &Field, nsteps: usize) -> Result<Field> {
        let mut c = self.fourier.forward(field.values.view()).to_vec();
        self.advance_hat(&mut c, nsteps).map_err(|e| match e {
            Error::Divergence { step, time } => Error::Divergence { step, time: field.time + time },
            e => e,
        })?;
        let values = self.fourier.inverse(&c);
        Ok(Field { values, length: field.length, time: field.time + nsteps as f64 * self.h })
    }
}

pub fn step_kse(sf: &SpectralField, h: f64) -> Result<SpectralField> {
    let solver = KseSolver::new(sf.grid_size(), sf.length, h)?;
    let mut c = sf.coeffs.to_vec();
    solver.advance_hat(&mut c, 1)?;
    Ok(SpectralField { coeffs: Array1::from(c), length: sf.length })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{from_spectral, to_spectral, wavenumber};
    use std::f64::consts::PI;

    const L: f64 = 22.0;

    #[test]
    fn zero_state_stays_zero() {
        let sf = SpectralField::zeros(64, L);
        let out = step_kse(&sf, 0.05).unwrap();
        assert!(out.coeffs.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn linear_growth_rate_of_first_mode() {
        let f = Field::from_fn(64, L, |x| 1e-8 * (2.0 * PI * x / L).sin()).unwrap();
        let solver = KseSolver::new(64, L, 0.05).unwrap();
        let t = 10.0;
        let g = solver.advance(&f, 200).unwrap();
        let a0 = to_spectral(&f).unwrap().coeffs[1].norm();
        let a1 = to_spectral(&g).unwrap().coeffs[1].norm();
        let rate = (a1 / a0).ln() / t;
        let q = wavenumber(1, L);
        let expected = q * q - q.powi(4);
        assert!((expected - 0.0749).abs() < 1e-4);
        assert!(((rate - expected) / expected).abs() < 1e-3, "{rate} vs {expected}");
    }

    #[test]
    fn fourth_order_self_convergence() {
        let f = Field::from_fn(64, L, |x| {
            let y = 2.0 * PI * x / L;
            y.cos() * (1.0 + y.sin()) + 0.5 * (2.0 * y).sin()
        })
        .unwrap();
        // start from a developed state so the stiff modes are in balance
        let f = KseSolver::new(64, L, 0.01).unwrap().advance(&f, 5000).unwrap();
        let run = |h: f64| {
            let n = (1.0 / h).round() as usize;
            KseSolver::new(64, L, h).unwrap().advance(&f, n).unwrap().values
        };
        // ETDRK4 shows stiff order reduction (about 3) for h >= 0.025 on this problem
        let hs = [0.0125, 0.00625, 0.003125, 0.0015625];
        let sols: Vec<_> = hs.iter().map(|&h| run(h)).collect();
        for w in sols.windows(3) {
            let e1 = (&w[0] - &w[1]).mapv(|v| v * v).sum().sqrt();
            let e2 = (&w[1] - &w[2]).mapv(|v| v * v).sum().sqrt();
            let order = (e1 / e2).log2();
            assert!((3.7..=4.3).contains(&order), "observed order {order}");
        }
    }

    #[test]
    fn spectral_round_trip_through_step() {
        let f = Field::from_fn(32, L, |x| (2.0 * PI * x / L).cos()).unwrap();
        let sf = to_spectral(&f).unwrap();
        let stepped = step_kse(&sf, 0.01).unwrap();
        let back = from_spectral(&stepped, 32).unwrap();
        assert!(back.values.iter().all(|v| v.is_finite()));
        assert!(step_kse(&sf, 0.0).is_err());
    }
}
