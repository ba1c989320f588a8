use ndarray::Array1;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::{Field, Fourier};

fn normal(epsilon: f64) -> Result<Normal<f64>> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("noise level {epsilon}")));
    }
    Normal::new(0.0, epsilon).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Independent `N(0, epsilon^2)` perturbation at every grid point.
pub fn add_noise_grid(field: &Field, epsilon: f64, seed: u64) -> Result<Field> {
    let dist = normal(epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = field.clone();
    if epsilon > 0.0 {
        out.values.iter_mut().for_each(|v| *v += dist.sample(&mut rng));
    }
    Ok(out)
}

/// One-sided spectrum holding `N(0, epsilon^2)` real and imaginary parts on
/// modes `k_lo..=k_hi` and exact zeros elsewhere. The Nyquist mode, being
/// real for a real field, only receives a real part.
pub fn fourier_noise_spectrum(d: usize, epsilon: f64, k_lo: usize, k_hi: usize, seed: u64) -> Result<Array1<Complex64>> {
    if k_lo == 0 || k_lo > k_hi || k_hi > d / 2 {
        return Err(Error::InvalidParameter(format!("mode band {k_lo}..={k_hi} outside 1..={}", d / 2)));
    }
    let dist = normal(epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Array1::from_elem(d / 2 + 1, Complex64::new(0.0, 0.0));
    if epsilon > 0.0 {
        for k in k_lo..=k_hi {
            let re = dist.sample(&mut rng);
            let im = dist.sample(&mut rng);
            c[k] = Complex64::new(re, if k == d / 2 { 0.0 } else { im });
        }
    }
    Ok(c)
}

/// Adds complex Gaussian noise to Fourier modes `k_lo..=k_hi`; the mirrored
/// negative modes follow from Hermitian symmetry, so the result is real.
pub fn add_noise_fourier(field: &Field, epsilon: f64, k_lo: usize, k_hi: usize, seed: u64) -> Result<Field> {
    let noise = fourier_noise_spectrum(field.dim(), epsilon, k_lo, k_hi, seed)?;
    if epsilon == 0.0 {
        return Ok(field.clone());
    }
    let fourier = Fourier::new(field.dim())?;
    let mut c = fourier.forward(field.values.view());
    c += &noise;
    let values = fourier.inverse(c.as_slice().expect("contiguous"));
    Ok(Field { values, length: field.length, time: field.time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rustfft::FftPlanner;

    #[test]
    fn zero_noise_is_identity() {
        let u = Field::from_fn(64, 22.0, |x| x.sin()).unwrap();
        assert_eq!(add_noise_grid(&u, 0.0, 3).unwrap(), u);
        assert_eq!(add_noise_fourier(&u, 0.0, 20, 31, 3).unwrap(), u);
        assert!(add_noise_grid(&u, -1.0, 0).is_err());
        assert!(add_noise_fourier(&u, 0.1, 0, 3, 0).is_err());
        assert!(add_noise_fourier(&u, 0.1, 20, 33, 0).is_err());
    }

    #[test]
    fn grid_noise_has_requested_spread() {
        let u = Field::zeros(4096, 1.0).unwrap();
        for eps in [0.1, 0.3, 0.5] {
            let n = add_noise_grid(&u, eps, 11).unwrap().values;
            let mean = n.sum() / n.len() as f64;
            let sd = (n.mapv(|v| (v - mean).powi(2)).sum() / (n.len() - 1) as f64).sqrt();
            assert!((sd - eps).abs() < 0.05 * eps, "{sd}");
        }
        let a = add_noise_grid(&u, 0.3, 5).unwrap();
        assert_eq!(a, add_noise_grid(&u, 0.3, 5).unwrap());
    }

    #[test]
    fn fourier_noise_only_touches_band() {
        let d = 64;
        let noise = fourier_noise_spectrum(d, 0.2, 20, 31, 1).unwrap();
        for (k, c) in noise.iter().enumerate() {
            if (20..=31).contains(&k) {
                assert!(c.re != 0.0 && c.im != 0.0);
            } else {
                assert_eq!(*c, Complex64::new(0.0, 0.0));
            }
        }
        let u = Field::from_fn(d, 22.0, |x| (2.0 * std::f64::consts::PI * x / 22.0).cos() + 0.3).unwrap();
        let v = add_noise_fourier(&u, 0.2, 20, 31, 1).unwrap();
        let f = Fourier::new(d).unwrap();
        let (cu, cv) = (f.forward(u.values.view()), f.forward(v.values.view()));
        for k in (0..20).chain(32..=32) {
            assert!((cu[k] - cv[k]).norm() < 1e-15, "mode {k}");
        }
        for k in 20..=31 {
            assert!((cv[k] - cu[k] - noise[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn fourier_noise_stays_real() {
        // Full complex inverse of the Hermitian extension: imaginary residue.
        let d = 64;
        let u = Field::from_fn(d, 22.0, |x| (x / 3.0).sin()).unwrap();
        let v = add_noise_fourier(&u, 0.5, 20, 32, 9).unwrap();
        let f = Fourier::new(d).unwrap();
        let half = f.forward(v.values.view());
        let mut full: Vec<Complex64> = (0..d).map(|k| if k <= d / 2 { half[k] } else { half[d - k].conj() }).collect();
        FftPlanner::new().plan_fft_inverse(d).process(&mut full);
        assert!(full.iter().all(|z| z.im.abs() < 1e-12));
        for (z, x) in full.iter().zip(v.values.iter()) {
            assert!((z.re - x).abs() < 1e-12);
        }
    }
}
