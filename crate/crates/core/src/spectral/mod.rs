//! Ground-truth pseudospectral solvers, spectral differentiation and random
//! initial conditions for the two model systems.

mod dataset;
mod ic;
mod kse;
mod vbe;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{wavenumber, Field, Fourier};

pub use dataset::{
    generate_dataset, DatasetParams, KseParams, SnapshotDataset, Split, VbeParams,
};
pub use ic::{generate_vbe_ic, generate_vbe_ic_with_phases, ic_energy_spectrum, IcSpec};
pub use kse::{step_kse, KseSolver};
pub use vbe::{step_vbe, VbeSolver};

/// Which PDE a dataset or operator belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum System {
    Vbe,
    Kse,
}

impl System {
    pub fn tag(self) -> u8 {
        match self {
            System::Vbe => 0,
            System::Kse => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(System::Vbe),
            1 => Ok(System::Kse),
            t => Err(Error::Format(format!("unknown system tag {t}"))),
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::Vbe => "vbe",
            System::Kse => "kse",
        })
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vbe" | "burgers" => Ok(System::Vbe),
            "kse" | "ks" => Ok(System::Kse),
            other => Err(Error::InvalidParameter(format!("unknown system '{other}'"))),
        }
    }
}

/// Highest wavenumber kept by the 2/3 rule.
pub fn dealias_cutoff(d: usize) -> usize {
    d / 3
}

pub fn dealias(coeffs: &mut [Complex64]) {
    let d = 2 * (coeffs.len() - 1);
    for c in coeffs.iter_mut().skip(dealias_cutoff(d) + 1) {
        *c = Complex64::new(0.0, 0.0);
    }
}

/// `(i q)^order` for the one-sided modes of a grid of size `d`.
pub fn derivative_symbol(d: usize, length: f64, order: u32) -> Array1<Complex64> {
    let i_pow = match order % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    let mut sym = Array1::from_shape_fn(d / 2 + 1, |k| i_pow * wavenumber(k, length).powi(order as i32));
    if order % 2 == 1 {
        sym[d / 2] = Complex64::new(0.0, 0.0);
    }
    sym
}

pub fn spectral_derivative(field: &Field, order: u32) -> Result<Field> {
    if order == 0 {
        return Err(Error::InvalidParameter("derivative order must be positive".into()));
    }
    let fourier = Fourier::new(field.dim())?;
    let values = derivative_with(&fourier, field.values.view(), field.length, order);
    Ok(Field { values, length: field.length, time: field.time })
}

pub(crate) fn derivative_with(
    fourier: &Fourier,
    values: ArrayView1<f64>,
    length: f64,
    order: u32,
) -> Array1<f64> {
    let mut c = fourier.forward(values);
    let sym = derivative_symbol(fourier.len(), length, order);
    c *= &sym;
    fourier.inverse(c.as_slice().expect("contiguous"))
}

/// Diffusion symbol `-nu q^2` of the Burgers linear term.
pub fn vbe_symbol(d: usize, length: f64, viscosity: f64) -> Array1<f64> {
    Array1::from_shape_fn(d / 2 + 1, |k| -viscosity * wavenumber(k, length).powi(2))
}

/// Kuramoto-Sivashinsky linear symbol `q^2 - q^4`.
pub fn kse_symbol(d: usize, length: f64) -> Array1<f64> {
    Array1::from_shape_fn(d / 2 + 1, |k| {
        let q = wavenumber(k, length);
        q * q - q.powi(4)
    })
}

/// Dense circulant matrix of a real, even Fourier multiplier.
///
/// Multiplying a grid vector by the result equals transforming, scaling mode
/// `k` by `symbol[k]`, and transforming back.
pub fn circulant_from_symbol(symbol: ArrayView1<f64>, d: usize) -> Array2<f64> {
    assert_eq!(symbol.len(), d / 2 + 1);
    let column: Vec<f64> = (0..d)
        .map(|m| {
            let m = m.min(d - m);
            let mut s = symbol[0] + symbol[d / 2] * if m % 2 == 0 { 1.0 } else { -1.0 };
            for k in 1..d / 2 {
                let phase = 2.0 * std::f64::consts::PI * (k * m % d) as f64 / d as f64;
                s += 2.0 * symbol[k] * phase.cos();
            }
            s / d as f64
        })
        .collect();
    Array2::from_shape_fn((d, d), |(i, j)| column[(i + d - j) % d])
}

/// Exact linear operator of `system` on a `d`-point grid.
pub fn true_linear_operator(system: System, d: usize, length: f64, viscosity: f64) -> Array2<f64> {
    let sym = match system {
        System::Vbe => vbe_symbol(d, length, viscosity),
        System::Kse => kse_symbol(d, length),
    };
    circulant_from_symbol(sym.view(), d)
}

/// Central-difference stencil of the linear term on a `d`-point grid.
///
/// Burgers: `nu/dx^2 [1, -2, 1]`. Kuramoto-Sivashinsky: the three-point
/// `-u_xx` plus the five-point `-u_xxxx`, giving width 5.
pub fn central_difference_stencil(system: System, d: usize, length: f64, viscosity: f64) -> Array1<f64> {
    let dx = length / d as f64;
    match system {
        System::Vbe => Array1::from(vec![1.0, -2.0, 1.0]) * (viscosity / (dx * dx)),
        System::Kse => {
            let second = Array1::from(vec![0.0, 1.0, -2.0, 1.0, 0.0]) / (dx * dx);
            let fourth = Array1::from(vec![1.0, -4.0, 6.0, -4.0, 1.0]) / dx.powi(4);
            -(second + fourth)
        }
    }
}

/// Evaluates the advection term `-(1/2) d(u^2)/dx` in Fourier space with
/// 2/3-rule dealiasing of both the input and the product.
pub(crate) fn advection_hat(
    fourier: &Fourier,
    coeffs: &[Complex64],
    length: f64,
    out: &mut [Complex64],
) {
    let d = fourier.len();
    let mut filtered = coeffs.to_vec();
    dealias(&mut filtered);
    let mut u = vec![0.0; d];
    fourier.inverse_into(&filtered, &mut u);
    for v in u.iter_mut() {
        *v *= *v;
    }
    fourier.forward_into(ArrayView1::from(&u[..]), out);
    dealias(out);
    for (k, o) in out.iter_mut().enumerate() {
        let q = wavenumber(k, length);
        *o *= Complex64::new(0.0, -0.5 * q);
    }
    out[d / 2] = Complex64::new(0.0, 0.0);
}

/// Physical-space advection term `-u u_x` as evaluated by the solvers.
pub fn advection_term(fourier: &Fourier, u: ArrayView1<f64>, length: f64) -> Array1<f64> {
    let c = fourier.forward(u);
    let mut out = vec![Complex64::new(0.0, 0.0); c.len()];
    advection_hat(fourier, c.as_slice().expect("contiguous"), length, &mut out);
    fourier.inverse(&out)
}

/// Trigonometric interpolation of a field onto a finer even grid.
pub fn upsample(fourier_coarse: &Fourier, fourier_fine: &Fourier, u: ArrayView1<f64>) -> Array1<f64> {
    let c = fourier_coarse.forward(u);
    let mut fine = vec![Complex64::new(0.0, 0.0); fourier_fine.len() / 2 + 1];
    for (f, v) in fine.iter_mut().zip(c.iter().take(fourier_coarse.len() / 2)) {
        *f = *v;
    }
    fourier_fine.inverse(&fine)
}

/// Spectral truncation of a field onto a coarser even grid.
pub fn downsample(fourier_fine: &Fourier, fourier_coarse: &Fourier, u: ArrayView1<f64>) -> Array1<f64> {
    let c = fourier_fine.forward(u);
    let dc = fourier_coarse.len();
    let mut coarse: Vec<Complex64> = c.iter().take(dc / 2 + 1).copied().collect();
    coarse[dc / 2] = Complex64::new(0.0, 0.0);
    fourier_coarse.inverse(&coarse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn optimal_stencils_round_to_reference_values() {
        let vbe = central_difference_stencil(System::Vbe, 512, 1.0, 8e-4);
        assert_abs_diff_eq!(vbe[0], 209.7152, epsilon = 1e-10);
        assert_eq!(vbe[0].round(), 210.0);
        assert_eq!(vbe[1], -2.0 * vbe[0]);
        assert_eq!(vbe[2], vbe[0]);
        let kse = central_difference_stencil(System::Kse, 64, 22.0, 0.0);
        assert_eq!(kse.mapv(f64::round).to_vec(), vec![-72.0, 278.0, -413.0, 278.0, -72.0]);
    }

    #[test]
    fn upsample_then_downsample_is_identity_below_nyquist() {
        let l = 1.0;
        let f = Field::from_fn(32, l, |x| (2.0 * PI * x).sin() + 0.3 * (10.0 * PI * x).cos()).unwrap();
        let (coarse, fine) = (Fourier::new(32).unwrap(), Fourier::new(128).unwrap());
        let up = upsample(&coarse, &fine, f.values.view());
        let g = Field::from_fn(128, l, |x| (2.0 * PI * x).sin() + 0.3 * (10.0 * PI * x).cos()).unwrap();
        for (a, b) in up.iter().zip(g.values.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        let back = downsample(&fine, &coarse, up.view());
        for (a, b) in back.iter().zip(f.values.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_sine() {
        let l = 3.7;
        let f = Field::from_fn(64, l, |x| (2.0 * PI * x / l).sin()).unwrap();
        let df = spectral_derivative(&f, 1).unwrap();
        for (x, v) in f.grid().iter().zip(df.values.iter()) {
            assert_abs_diff_eq!(*v, 2.0 * PI / l * (2.0 * PI * x / l).cos(), epsilon = 1e-10);
        }
    }

    #[test]
    fn second_derivative_eigenfunction() {
        let l = 22.0;
        let f = Field::from_fn(64, l, |x| (4.0 * PI * x / l).sin()).unwrap();
        let d2 = spectral_derivative(&f, 2).unwrap();
        let q = 4.0 * PI / l;
        for (u, v) in f.values.iter().zip(d2.values.iter()) {
            assert_abs_diff_eq!(*v, -q * q * u, epsilon = 1e-10);
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let f = Field::from_fn(32, 1.0, |_| 4.2).unwrap();
        for order in [1, 2, 4] {
            let d = spectral_derivative(&f, order).unwrap();
            assert!(d.values.iter().all(|v| v.abs() < 1e-12));
        }
        assert!(spectral_derivative(&f, 0).is_err());
    }

    #[test]
    fn circulant_matches_spectral_application() {
        let d = 32;
        let l = 22.0;
        let a = true_linear_operator(System::Kse, d, l, 0.0);
        let u = Field::from_fn(d, l, |x| (2.0 * PI * x / l).cos() + 0.3 * (6.0 * PI * x / l).sin()).unwrap();
        let fourier = Fourier::new(d).unwrap();
        let mut c = fourier.forward(u.values.view());
        c *= &kse_symbol(d, l).mapv(|s| Complex64::new(s, 0.0));
        let spectral = fourier.inverse(c.as_slice().unwrap());
        let dense = a.dot(&u.values);
        for (x, y) in spectral.iter().zip(dense.iter()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-11);
        }
        for i in 0..d {
            for j in 0..d {
                assert_eq!(a[[i, j]], a[[j, i]]);
            }
        }
    }

    #[test]
    fn advection_of_single_mode() {
        // u = sin(qx): -u u_x = -q sin cos = -(q/2) sin(2qx)
        let l = 2.0 * PI;
        let f = Field::from_fn(32, l, |x| x.sin()).unwrap();
        let fourier = Fourier::new(32).unwrap();
        let n = advection_term(&fourier, f.values.view(), l);
        for (x, v) in f.grid().iter().zip(n.iter()) {
            assert_abs_diff_eq!(*v, -0.5 * (2.0 * x).sin(), epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn derivative_is_linear(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            u in prop::collection::vec(-1.0f64..1.0, 16),
            w in prop::collection::vec(-1.0f64..1.0, 16),
        ) {
            let l = 5.0;
            let fu = Field::new(Array1::from(u), l).unwrap();
            let fw = Field::new(Array1::from(w), l).unwrap();
            let mix = Field::new(&fu.values * a + &fw.values * b, l).unwrap();
            for order in [1u32, 2, 4] {
                let lhs = spectral_derivative(&mix, order).unwrap().values;
                let rhs = spectral_derivative(&fu, order).unwrap().values * a
                    + spectral_derivative(&fw, order).unwrap().values * b;
                let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (x, y) in lhs.iter().zip(rhs.iter()) {
                    prop_assert!((x - y).abs() <= 1e-12 * scale);
                }
            }
        }
    }
}
