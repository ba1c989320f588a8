use std::fs;
use std::io::{BufReader, Cursor, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::field::Fourier;
use crate::io::{expect_eof, expect_magic, read_f64, read_f64s, read_u32, read_u64, write_f64, write_f64s, write_u32, write_u64};
use crate::spectral::derivative_with;

/// Fixed histogram grid over `(u_x, u_xx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfGrid {
    pub nx: usize,
    pub ny: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl PdfGrid {
    /// 100 x 100 bins over `[-2.5, 2.5] x [-5, 5]`, sized for KSE with L = 22.
    pub const KSE: PdfGrid = PdfGrid { nx: 100, ny: 100, x_range: (-2.5, 2.5), y_range: (-5.0, 5.0) };

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || !(self.x_range.0 < self.x_range.1) || !(self.y_range.0 < self.y_range.1) {
            return Err(Error::InvalidParameter(format!("bad histogram grid {self:?}")));
        }
        Ok(())
    }

    fn dx(&self) -> f64 {
        (self.x_range.1 - self.x_range.0) / self.nx as f64
    }

    fn dy(&self) -> f64 {
        (self.y_range.1 - self.y_range.0) / self.ny as f64
    }

    fn bin(v: f64, lo: f64, hi: f64, n: usize) -> Option<usize> {
        if !(v >= lo && v <= hi) {
            return None;
        }
        Some((((v - lo) / (hi - lo) * n as f64) as usize).min(n - 1))
    }
}

/// Density histogram. Masses are normalized by the total sample count, so
/// they integrate to one minus the out-of-range fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPdf2D {
    pub grid: PdfGrid,
    pub masses: Array2<f64>,
    pub samples: u64,
    pub out_of_range: u64,
}

impl JointPdf2D {
    pub fn x_edges(&self) -> Array1<f64> {
        Array1::linspace(self.grid.x_range.0, self.grid.x_range.1, self.grid.nx + 1)
    }

    pub fn y_edges(&self) -> Array1<f64> {
        Array1::linspace(self.grid.y_range.0, self.grid.y_range.1, self.grid.ny + 1)
    }

    pub fn bin_area(&self) -> f64 {
        self.grid.dx() * self.grid.dy()
    }

    pub fn integral(&self) -> f64 {
        self.masses.sum() * self.bin_area()
    }

    pub fn out_of_range_fraction(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.out_of_range as f64 / self.samples as f64
        }
    }

    pub fn from_counts(grid: PdfGrid, counts: &Array2<u64>, out_of_range: u64) -> Result<Self> {
        grid.validate()?;
        if counts.dim() != (grid.nx, grid.ny) {
            return Err(Error::GridMismatch);
        }
        let samples = counts.sum() + out_of_range;
        let scale = if samples == 0 { 0.0 } else { 1.0 / (samples as f64 * grid.dx() * grid.dy()) };
        Ok(Self { grid, masses: counts.mapv(|c| c as f64 * scale), samples, out_of_range })
    }

    /// Layout: magic "SNPD", u32 nx, u32 ny, f64 x range, f64 y range,
    /// u64 samples, u64 out-of-range, then row-major masses (x-major).
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"SNPD")?;
        write_u32(w, self.grid.nx as u32)?;
        write_u32(w, self.grid.ny as u32)?;
        for v in [self.grid.x_range.0, self.grid.x_range.1, self.grid.y_range.0, self.grid.y_range.1] {
            write_f64(w, v)?;
        }
        write_u64(w, self.samples)?;
        write_u64(w, self.out_of_range)?;
        write_f64s(w, self.masses.iter())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, b"SNPD")?;
        let nx = read_u32(r)? as usize;
        let ny = read_u32(r)? as usize;
        if nx == 0 || ny == 0 || nx * ny > 1 << 24 {
            return Err(Error::Format(format!("implausible grid {nx} x {ny}")));
        }
        let x_range = (read_f64(r)?, read_f64(r)?);
        let y_range = (read_f64(r)?, read_f64(r)?);
        let grid = PdfGrid { nx, ny, x_range, y_range };
        grid.validate().map_err(|e| Error::Format(e.to_string()))?;
        let samples = read_u64(r)?;
        let out_of_range = read_u64(r)?;
        let masses = Array2::from_shape_vec((nx, ny), read_f64s(r, nx * ny)?).map_err(|e| Error::Format(e.to_string()))?;
        expect_eof(r)?;
        Ok(Self { grid, masses, samples, out_of_range })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut Cursor::new(bytes))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(fs::File::open(path)?))
    }
}

/// Counts `(u_x, u_xx)` pairs at every grid point of every row. Spectral
/// derivatives on a periodic domain of the given length.
pub fn derivative_counts(states: ArrayView2<f64>, length: f64, grid: &PdfGrid) -> Result<(Array2<u64>, u64)> {
    grid.validate()?;
    let fourier = Fourier::new(states.ncols())?;
    let mut counts = Array2::zeros((grid.nx, grid.ny));
    let mut out = 0u64;
    for row in states.rows() {
        let ux = derivative_with(&fourier, row, length, 1);
        let uxx = derivative_with(&fourier, row, length, 2);
        for (&a, &b) in ux.iter().zip(uxx.iter()) {
            match (
                PdfGrid::bin(a, grid.x_range.0, grid.x_range.1, grid.nx),
                PdfGrid::bin(b, grid.y_range.0, grid.y_range.1, grid.ny),
            ) {
                (Some(i), Some(j)) => counts[[i, j]] += 1,
                _ => out += 1,
            }
        }
    }
    Ok((counts, out))
}

/// Joint PDF of the first and second spatial derivatives over a trajectory
/// (rows are snapshots).
pub fn joint_pdf(states: ArrayView2<f64>, length: f64, grid: &PdfGrid) -> Result<JointPdf2D> {
    let (counts, out) = derivative_counts(states, length, grid)?;
    JointPdf2D::from_counts(*grid, &counts, out)
}

/// `sum P_model ln(P_model / P_true) dx dy` over bins where both are positive.
pub fn kl_divergence(model: &JointPdf2D, truth: &JointPdf2D) -> Result<f64> {
    if model.grid != truth.grid {
        return Err(Error::GridMismatch);
    }
    let mut s = 0.0;
    for (&pm, &pt) in model.masses.iter().zip(truth.masses.iter()) {
        if pm > 0.0 && pt > 0.0 {
            s += pm * (pm / pt).ln();
        }
    }
    Ok(s * model.bin_area())
}

/// Fraction of the model's in-range mass that lands in bins where the
/// reference is positive; a KL near zero with low overlap is degenerate.
pub fn kl_overlap(model: &JointPdf2D, truth: &JointPdf2D) -> Result<f64> {
    if model.grid != truth.grid {
        return Err(Error::GridMismatch);
    }
    let total = model.masses.sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let shared: f64 = model.masses.iter().zip(truth.masses.iter()).filter(|(_, &t)| t > 0.0).map(|(&m, _)| m).sum();
    Ok(shared / total)
}
