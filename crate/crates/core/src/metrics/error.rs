use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Field, Fourier};

/// `E(k) = < |u_hat(k)|^2 / 2 >` over the ensemble, for `k = 0..=d/2`.
pub fn energy_spectrum(ensemble: &[Field]) -> Result<Array1<f64>> {
    let first = ensemble.first().ok_or(Error::Empty("ensemble"))?;
    if ensemble.iter().any(|f| f.dim() != first.dim() || f.length != first.length) {
        return Err(Error::GridMismatch);
    }
    let views: Vec<_> = ensemble.iter().map(|f| f.values.view()).collect();
    energy_spectrum_rows(ndarray::stack(ndarray::Axis(0), &views).expect("congruent").view())
}

/// Same as [`energy_spectrum`] over the rows of a matrix.
pub fn energy_spectrum_rows(rows: ArrayView2<f64>) -> Result<Array1<f64>> {
    if rows.nrows() == 0 {
        return Err(Error::Empty("ensemble"));
    }
    let fourier = Fourier::new(rows.ncols())?;
    let mut e = Array1::zeros(fourier.modes());
    for r in rows.rows() {
        let c = fourier.forward(r);
        e.zip_mut_with(&c, |acc, z| *acc += 0.5 * z.norm_sqr());
    }
    Ok(e / rows.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// Mean of `||u - v|| / ||u||`.
    Relative,
    /// Mean of `||u - v||^2` divided by the attractor scale `D`.
    Attractor(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleError {
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    /// `D`, or 1 for relative errors.
    pub normalization: f64,
    /// Samples skipped because the reference state was zero.
    pub skipped: usize,
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Ensemble error curve. Each trajectory is a (time, grid) matrix; `truth[i]`
/// pairs with `model[i]`. A non-finite model state gives an infinite error.
pub fn relative_error(
    truth: &[ArrayView2<f64>],
    model: &[ArrayView2<f64>],
    times: &[f64],
    mode: Normalization,
) -> Result<EnsembleError> {
    if truth.len() != model.len() {
        return Err(Error::Shape { expected: truth.len(), got: model.len() });
    }
    if truth.is_empty() {
        return Err(Error::Empty("trajectory set"));
    }
    for (t, m) in truth.iter().zip(model) {
        if t.dim() != m.dim() || t.nrows() != times.len() {
            return Err(Error::Shape { expected: t.len(), got: m.len() });
        }
    }
    let mut errors = Vec::with_capacity(times.len());
    let mut skipped = 0;
    for i in 0..times.len() {
        let (mut sum, mut count) = (0.0, 0usize);
        for (t, m) in truth.iter().zip(model) {
            let (u, v) = (t.row(i), m.row(i));
            let diff = if v.iter().all(|x| x.is_finite()) { norm((&u - &v).view()) } else { f64::INFINITY };
            match mode {
                Normalization::Relative => {
                    let n = norm(u);
                    if n == 0.0 {
                        skipped += 1;
                        continue;
                    }
                    sum += diff / n;
                }
                Normalization::Attractor(_) => sum += diff * diff,
            }
            count += 1;
        }
        let mean = if count == 0 { 0.0 } else { sum / count as f64 };
        errors.push(match mode {
            Normalization::Relative => mean,
            Normalization::Attractor(d) => mean / d,
        });
    }
    let normalization = match mode {
        Normalization::Relative => 1.0,
        Normalization::Attractor(d) => d,
    };
    Ok(EnsembleError { times: times.to_vec(), errors, normalization, skipped })
}

/// `D = < ||u(t_i) - u(t_j)||^2 >` estimated from `pairs` random distinct
/// snapshot pairs.
pub fn attractor_scale(snapshots: ArrayView2<f64>, pairs: usize, seed: u64) -> Result<f64> {
    let n = snapshots.nrows();
    if n < 2 || pairs == 0 {
        return Err(Error::Empty("snapshot pairs"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..pairs {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let d = &snapshots.row(i) - &snapshots.row(j);
        sum += d.dot(&d);
    }
    Ok(sum / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn single_cosine_spectrum() {
        let u = Field::from_fn(64, 3.0, |x| 2.0 * (2.0 * std::f64::consts::PI * x / 3.0).cos()).unwrap();
        let e = energy_spectrum(&[u]).unwrap();
        assert!((e[1] - 0.5).abs() < 1e-14);
        assert!(e.iter().enumerate().all(|(k, &v)| k == 1 || v < 1e-28));
        let z = energy_spectrum(&vec![Field::zeros(8, 1.0).unwrap(); 3]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(energy_spectrum(&[]).is_err());
    }

    proptest! {
        #[test]
        fn spectrum_is_quadratic(vals in prop::collection::vec(-2.0f64..2.0, 32), c in 0.1f64..5.0) {
            let u = Array2::from_shape_vec((2, 16), vals).unwrap();
            let e1 = energy_spectrum_rows(u.view()).unwrap();
            let e2 = energy_spectrum_rows((&u * c).view()).unwrap();
            for (a, b) in e1.iter().zip(e2.iter()) {
                prop_assert!((b - c * c * a).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let t = Array2::from_shape_fn((3, 8), |(i, j)| (i * j) as f64);
        let e = relative_error(&[t.view()], &[t.view()], &[0.0, 1.0, 2.0], Normalization::Relative).unwrap();
        assert_eq!(e.errors, vec![0.0; 3]);
        assert_eq!(e.skipped, 1);
        let e = relative_error(&[t.view()], &[t.view()], &[0.0, 1.0, 2.0], Normalization::Attractor(2.0)).unwrap();
        assert_eq!(e.errors, vec![0.0; 3]);
        assert_eq!(e.normalization, 2.0);
    }

    #[test]
    fn relative_and_attractor_values() {
        let t = array![[3.0, 4.0]];
        let m = array![[3.0, 5.0]];
        let e = relative_error(&[t.view()], &[m.view()], &[0.0], Normalization::Relative).unwrap();
        assert!((e.errors[0] - 0.2).abs() < 1e-15);
        let e = relative_error(&[t.view()], &[m.view()], &[0.0], Normalization::Attractor(4.0)).unwrap();
        assert!((e.errors[0] - 0.25).abs() < 1e-15);
        let bad = array![[f64::NAN, 0.0]];
        let e = relative_error(&[t.view()], &[bad.view()], &[0.0], Normalization::Relative).unwrap();
        assert!(e.errors[0].is_infinite());
    }

    #[test]
    fn attractor_scale_of_two_points() {
        let s = array![[0.0, 0.0], [3.0, 4.0]];
        assert_eq!(attractor_scale(s.view(), 50, 1).unwrap(), 25.0);
        assert!(attractor_scale(s.slice(ndarray::s![..1, ..]), 5, 0).is_err());
    }
}
