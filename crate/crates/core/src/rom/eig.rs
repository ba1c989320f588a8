use std::fmt;
use std::fs;
use std::io::{BufReader, Cursor, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::io::{expect_eof, expect_magic, read_f64s, read_u32, read_u8, write_f64s, write_u32, write_u8};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ordering {
    ByEigenvalueDesc,
    ByVarianceDesc,
}

impl Ordering {
    pub fn tag(self) -> u8 {
        match self {
            Ordering::ByEigenvalueDesc => 0,
            Ordering::ByVarianceDesc => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Ordering::ByEigenvalueDesc),
            1 => Ok(Ordering::ByVarianceDesc),
            t => Err(Error::Format(format!("unknown ordering tag {t}"))),
        }
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ordering::ByEigenvalueDesc => "eigenvalue",
            Ordering::ByVarianceDesc => "variance",
        })
    }
}

impl FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "eigenvalue" => Ok(Ordering::ByEigenvalueDesc),
            "variance" => Ok(Ordering::ByVarianceDesc),
            other => Err(Error::InvalidParameter(format!("unknown ordering '{other}'"))),
        }
    }
}

/// Eigenpairs of a symmetric operator. Column `i` of `vectors` pairs with
/// `eigenvalues[i]`; the columns are orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub eigenvalues: Array1<f64>,
    pub vectors: Array2<f64>,
    pub ordering: Ordering,
}

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver. Eigenpairs come back sorted by decreasing
/// eigenvalue, each vector's largest-magnitude entry made positive.
pub fn eig_symmetric(matrix: ArrayView2<f64>) -> Result<EigenBasis> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::Shape { expected: n * n, got: matrix.len() });
    }
    if n == 0 {
        return Err(Error::Empty("matrix"));
    }
    let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = matrix.iter().zip(matrix.t().iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if asym > 1e-10 * scale {
        return Err(Error::Asymmetric(asym / scale));
    }
    let mut a = matrix.to_owned();
    // Symmetrize exactly so rotations keep it symmetric.
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &Array2<f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[[i, j]] * a[[i, j]];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..MAX_SWEEPS {
        if off(&a) <= OFF_DIAGONAL_TOL * frob {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let mut vectors = v.select(Axis(1), &order);
    for mut col in vectors.columns_mut() {
        let (mut best, mut idx) = (0.0, 0);
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                idx = i;
            }
        }
        if col[idx] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
    Ok(EigenBasis {
        eigenvalues: order.iter().map(|&i| values[i]).collect(),
        vectors,
        ordering: Ordering::ByEigenvalueDesc,
    })
}

const MAGIC: &[u8; 4] = b"SNEB";

impl EigenBasis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub(crate) fn check_dp(&self, dp: usize) -> Result<()> {
        if dp == 0 || dp > self.dim() {
            return Err(Error::InvalidParameter(format!("retained dimension {dp} outside 1..={}", self.dim())));
        }
        Ok(())
    }

    pub fn resolved(&self, dp: usize) -> ndarray::ArrayView2<'_, f64> {
        self.vectors.slice(s![.., ..dp])
    }

    pub fn unresolved(&self, dp: usize) -> ndarray::ArrayView2<'_, f64> {
        self.vectors.slice(s![.., dp..])
    }

    /// Same eigenpairs in a new order.
    pub fn permuted(&self, order: &[usize], ordering: Ordering) -> Self {
        Self {
            eigenvalues: order.iter().map(|&i| self.eigenvalues[i]).collect(),
            vectors: self.vectors.select(Axis(1), order),
            ordering,
        }
    }

    /// Layout: magic, u32 d, u8 ordering, d eigenvalues, d*d vector
    /// entries in column-major order.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(w, self.dim() as u32)?;
        write_u8(w, self.ordering.tag())?;
        write_f64s(w, self.eigenvalues.iter())?;
        write_f64s(w, self.vectors.t().iter())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, MAGIC)?;
        let d = read_u32(r)? as usize;
        if d == 0 || d > 1 << 14 {
            return Err(Error::Format(format!("implausible dimension {d}")));
        }
        let ordering = Ordering::from_tag(read_u8(r)?)?;
        let eigenvalues = Array1::from(read_f64s(r, d)?);
        let cols = Array2::from_shape_vec((d, d), read_f64s(r, d * d)?).map_err(|e| Error::Format(e.to_string()))?;
        expect_eof(r)?;
        Ok(Self { eigenvalues, vectors: cols.reversed_axes().as_standard_layout().to_owned(), ordering })
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

/// `P = Vp Vp^T` and `Q = Vq Vq^T` in the basis's current ordering.
pub fn projection(basis: &EigenBasis, dp: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    basis.check_dp(dp)?;
    let vp = basis.resolved(dp);
    let vq = basis.unresolved(dp);
    Ok((vp.dot(&vp.t()), vq.dot(&vq.t())))
}

/// Consecutive differences of the eigenvalues sorted increasing.
pub fn eigenvalue_gaps(basis: &EigenBasis) -> Vec<f64> {
    let mut v = basis.eigenvalues.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| w[1] - w[0]).collect()
}
