use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::field::Field;

/// Single-filter, stride-one circular convolution (a banded circulant
/// matrix). With `symmetric` set the effective operator is `B + B^T`, whose
/// taps are `taps + reversed(taps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStencil {
    pub taps: Array1<f64>,
    pub symmetric: bool,
}

impl ConvStencil {
    pub fn new(taps: Array1<f64>, symmetric: bool) -> Result<Self> {
        if taps.len() % 2 == 0 {
            return Err(Error::InvalidParameter(format!("stencil width {} must be odd", taps.len())));
        }
        Ok(Self { taps, symmetric })
    }

    pub fn width(&self) -> usize {
        self.taps.len()
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn effective_taps(&self) -> Array1<f64> {
        if self.symmetric {
            let rev: Array1<f64> = self.taps.iter().rev().copied().collect();
            &self.taps + &rev
        } else {
            self.taps.clone()
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.width() >= d {
            return Err(Error::InvalidParameter(format!("stencil width {} not below grid size {d}", self.width())));
        }
        Ok(())
    }

    /// `out_j = sum_m e_m u_{(j + m) mod d}` for `m = -r..=r`, applied to every row.
    pub fn apply_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let d = x.ncols();
        self.check(d)?;
        let e = self.effective_taps();
        let r = self.radius() as isize;
        let mut out = Array2::zeros(x.dim());
        for (m, &em) in e.iter().enumerate() {
            if em == 0.0 {
                continue;
            }
            let shift = ((m as isize - r).rem_euclid(d as isize)) as usize;
            for (mut o, row) in out.rows_mut().into_iter().zip(x.rows()) {
                for j in 0..d {
                    o[j] += em * row[(j + shift) % d];
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.apply_batch(u.insert_axis(Axis(0)))?.index_axis_move(Axis(0), 0))
    }

    /// Reverse pass over a batch. Returns the gradient with respect to the raw
    /// taps (summed over rows) and the input cotangent.
    pub fn backward_batch(&self, x: ArrayView2<f64>, cotangent: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        if x.dim() != cotangent.dim() {
            return Err(Error::Shape { expected: x.len(), got: cotangent.len() });
        }
        let d = x.ncols();
        self.check(d)?;
        let e = self.effective_taps();
        let r = self.radius() as isize;
        let w = self.width();
        let mut g_eff = Array1::zeros(w);
        let mut input_ct = Array2::zeros(x.dim());
        for m in 0..w {
            let shift = ((m as isize - r).rem_euclid(d as isize)) as usize;
            let mut acc = 0.0;
            for ((row, ct), mut ict) in x.rows().into_iter().zip(cotangent.rows()).zip(input_ct.rows_mut()) {
                for j in 0..d {
                    let i = (j + shift) % d;
                    acc += ct[j] * row[i];
                    ict[i] += e[m] * ct[j];
                }
            }
            g_eff[m] = acc;
        }
        let g = if self.symmetric {
            let rev: Array1<f64> = g_eff.iter().rev().copied().collect();
            &g_eff + &rev
        } else {
            g_eff
        };
        Ok((g, input_ct))
    }

    /// Dense `d x d` circulant matrix of the effective operator.
    pub fn to_matrix(&self, d: usize) -> Result<Array2<f64>> {
        self.check(d)?;
        let e = self.effective_taps();
        let r = self.radius() as isize;
        let mut m = Array2::zeros((d, d));
        for j in 0..d {
            for (k, &ek) in e.iter().enumerate() {
                let col = (j as isize + k as isize - r).rem_euclid(d as isize) as usize;
                m[[j, col]] += ek;
            }
        }
        Ok(m)
    }
}

pub fn conv_apply(stencil: &ConvStencil, u: &Field) -> Result<Field> {
    Ok(Field { values: stencil.apply(u.values.view())?, length: u.length, time: u.time })
}

pub fn conv_backward(stencil: &ConvStencil, u: &Field, cotangent: &Field) -> Result<(Array1<f64>, Field)> {
    let (g, ct) = stencil.backward_batch(
        u.values.view().insert_axis(Axis(0)),
        cotangent.values.view().insert_axis(Axis(0)),
    )?;
    let values = ct.index_axis_move(Axis(0), 0);
    Ok((g, Field { values, length: cotangent.length, time: cotangent.time }))
}

pub fn stencil_to_matrix(stencil: &ConvStencil, d: usize) -> Result<Array2<f64>> {
    stencil.to_matrix(d)
}
