use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::eig::{EigenBasis, Ordering};
use crate::error::{Error, Result};
use crate::field::{Field, Fourier};
use crate::node::{rollout_batch, stable_substeps, LinearBranch, RhsModel, Rollout, VectorField};
use crate::spectral::{advection_term, kse_symbol, vbe_symbol, circulant_from_symbol, System};

/// A right-hand side with an explicit linear operator: `h(u) = A u + F(u)`.
pub trait SplitRhs {
    fn dim(&self) -> usize;
    fn length(&self) -> f64;
    /// The linear operator, and whether it had to be symmetrized.
    fn linear_operator(&self) -> Result<(Array2<f64>, bool)>;
    fn nonlinear_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;
    fn full_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;
}

impl SplitRhs for RhsModel {
    fn dim(&self) -> usize {
        RhsModel::dim(self)
    }

    fn length(&self) -> f64 {
        self.length
    }

    fn linear_operator(&self) -> Result<(Array2<f64>, bool)> {
        match &self.linear {
            LinearBranch::None => Err(Error::Unsupported("plain network has no separable linear term")),
            LinearBranch::Fixed(a) => Ok((a.clone(), false)),
            LinearBranch::Learned(s) => {
                let m = s.to_matrix(self.dim())?;
                if s.symmetric || m == m.t() {
                    Ok((m, false))
                } else {
                    Ok(((&m + &m.t()) * 0.5, true))
                }
            }
        }
    }

    fn nonlinear_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if matches!(self.linear, LinearBranch::None) {
            return Err(Error::Unsupported("plain network has no separable linear term"));
        }
        RhsModel::nonlinear_batch(self, x)
    }

    fn full_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.eval_batch(x)
    }
}

/// The exact governing equation: diagonal-in-Fourier linear term plus the
/// dealiased advection `-(1/2) d(u^2)/dx`.
#[derive(Debug, Clone)]
pub struct TrueRhs {
    pub system: System,
    pub matrix: Array2<f64>,
    symbol: Array1<f64>,
    fourier: Fourier,
    length: f64,
}

impl TrueRhs {
    pub fn new(system: System, d: usize, length: f64, viscosity: f64) -> Result<Self> {
        let fourier = Fourier::new(d)?;
        let symbol = match system {
            System::Vbe => vbe_symbol(d, length, viscosity),
            System::Kse => kse_symbol(d, length),
        };
        let matrix = circulant_from_symbol(symbol.view(), d);
        Ok(Self { system, matrix, symbol, fourier, length })
    }
}

impl SplitRhs for TrueRhs {
    fn dim(&self) -> usize {
        self.fourier.len()
    }

    fn length(&self) -> f64 {
        self.length
    }

    fn linear_operator(&self) -> Result<(Array2<f64>, bool)> {
        Ok((self.matrix.clone(), false))
    }

    fn nonlinear_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.fourier.len() {
            return Err(Error::Shape { expected: self.fourier.len(), got: x.ncols() });
        }
        let mut out = Array2::zeros(x.dim());
        for (row, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            o.assign(&advection_term(&self.fourier, row, self.length));
        }
        Ok(out)
    }

    fn full_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(x.dot(&self.matrix.t()) + self.nonlinear_batch(x)?)
    }
}

impl VectorField for TrueRhs {
    fn dim(&self) -> usize {
        SplitRhs::dim(self)
    }

    fn eval_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.full_batch(x)
    }

    fn stiffness(&self) -> f64 {
        self.symbol.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Eigenbasis of a model's linear operator, in eigenvalue order.
pub fn basis_of(model: &impl SplitRhs) -> Result<(EigenBasis, bool)> {
    let (a, symmetrized) = model.linear_operator()?;
    Ok((super::eig::eig_symmetric(a.view())?, symmetrized))
}

fn column_variance(col: ArrayView1<f64>) -> f64 {
    let n = col.len();
    if n < 2 || col.iter().all(|&v| v == col[0]) {
        return 0.0;
    }
    let mean = col.sum() / n as f64;
    col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Sample variance over `snapshots` (rows) of each modal rate `v_i^T h(u)`.
pub fn modal_rate_variances(basis: &EigenBasis, model: &impl SplitRhs, snapshots: ArrayView2<f64>) -> Result<Array1<f64>> {
    if snapshots.nrows() == 0 {
        return Err(Error::Empty("snapshot set"));
    }
    let rates = model.full_batch(snapshots)?.dot(&basis.vectors);
    Ok(rates.columns().into_iter().map(column_variance).collect())
}

/// Reorders eigenpairs by decreasing variance of the modal rates. Ties fall
/// back to decreasing eigenvalue, then original position.
pub fn variance_sort(basis: &EigenBasis, model: &impl SplitRhs, snapshots: ArrayView2<f64>) -> Result<EigenBasis> {
    let var = modal_rate_variances(basis, model, snapshots)?;
    let mut order: Vec<usize> = (0..basis.dim()).collect();
    order.sort_by(|&i, &j| {
        var[j].total_cmp(&var[i]).then(basis.eigenvalues[j].total_cmp(&basis.eigenvalues[i])).then(i.cmp(&j))
    });
    Ok(basis.permuted(&order, Ordering::ByVarianceDesc))
}

/// Reduced dynamics on the leading `dp` basis vectors.
pub struct Reduced<'a, M> {
    basis: &'a EigenBasis,
    dp: usize,
    model: &'a M,
    slaved: bool,
    iterations: usize,
}

impl<'a, M: SplitRhs> Reduced<'a, M> {
    pub fn new(basis: &'a EigenBasis, dp: usize, model: &'a M) -> Result<Self> {
        basis.check_dp(dp)?;
        if basis.dim() != model.dim() {
            return Err(Error::Shape { expected: model.dim(), got: basis.dim() });
        }
        Ok(Self { basis, dp, model, slaved: false, iterations: 1 })
    }

    /// Slave the unresolved coordinates through `iterations` fixed-point
    /// sweeps of `dq/dt = 0`.
    pub fn nonlinear_galerkin(mut self, iterations: usize) -> Result<Self> {
        self.check_trailing()?;
        self.slaved = true;
        self.iterations = iterations;
        Ok(self)
    }

    fn check_trailing(&self) -> Result<()> {
        for (i, &l) in self.basis.eigenvalues.iter().enumerate().skip(self.dp) {
            if l.abs() <= 1e-10 {
                return Err(Error::SingularMode { mode: i, value: l });
            }
        }
        Ok(())
    }

    fn lambda_p(&self) -> ArrayView1<'_, f64> {
        self.basis.eigenvalues.slice(ndarray::s![..self.dp])
    }

    pub fn lift(&self, p: ArrayView2<f64>, q: Option<ArrayView2<f64>>) -> Array2<f64> {
        let mut u = p.dot(&self.basis.resolved(self.dp).t());
        if let Some(q) = q {
            u += &q.dot(&self.basis.unresolved(self.dp).t());
        }
        u
    }

    /// Unresolved coordinates from `q_{m+1} = -Lq^{-1} Vq^T F(Vp p + Vq q_m)`, `q_0 = 0`.
    pub fn slaved_q(&self, p: ArrayView2<f64>, iterations: usize) -> Result<Array2<f64>> {
        self.check_trailing()?;
        let vq = self.basis.unresolved(self.dp);
        let lq = self.basis.eigenvalues.slice(ndarray::s![self.dp..]);
        let mut q = Array2::zeros((p.nrows(), vq.ncols()));
        for _ in 0..iterations {
            let f = self.model.nonlinear_batch(self.lift(p, Some(q.view())).view())?;
            q = f.dot(&vq);
            for mut row in q.rows_mut() {
                row.zip_mut_with(&lq, |x, l| *x = -*x / l);
            }
        }
        Ok(q)
    }

    /// `Lp p + Vp^T F(u)` with `u` the lifted state.
    pub fn rate(&self, p: ArrayView2<f64>) -> Result<Array2<f64>> {
        let q = if self.slaved { Some(self.slaved_q(p, self.iterations)?) } else { None };
        let u = self.lift(p, q.as_ref().map(|q| q.view()));
        let mut out = self.model.nonlinear_batch(u.view())?.dot(&self.basis.resolved(self.dp));
        out += &(&p * &self.lambda_p());
        Ok(out)
    }
}

impl<M: SplitRhs> VectorField for Reduced<'_, M> {
    fn dim(&self) -> usize {
        self.dp
    }

    fn eval_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.rate(x)
    }

    fn stiffness(&self) -> f64 {
        self.lambda_p().iter().fold(0.0, |m, l| m.max(l.abs()))
    }
}

pub fn galerkin_rhs(basis: &EigenBasis, dp: usize, model: &impl SplitRhs, p: ArrayView1<f64>) -> Result<Array1<f64>> {
    let r = Reduced::new(basis, dp, model)?;
    if p.len() != dp {
        return Err(Error::Shape { expected: dp, got: p.len() });
    }
    Ok(r.rate(p.insert_axis(Axis(0)))?.index_axis_move(Axis(0), 0))
}

pub fn nlg_q(basis: &EigenBasis, dp: usize, model: &impl SplitRhs, p: ArrayView1<f64>, iterations: usize) -> Result<Array1<f64>> {
    let r = Reduced::new(basis, dp, model)?;
    if p.len() != dp {
        return Err(Error::Shape { expected: dp, got: p.len() });
    }
    Ok(r.slaved_q(p.insert_axis(Axis(0)), iterations)?.index_axis_move(Axis(0), 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RomMode {
    Galerkin,
    NonlinearGalerkin,
    PostprocessingGalerkin,
}

impl fmt::Display for RomMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RomMode::Galerkin => "g",
            RomMode::NonlinearGalerkin => "nlg",
            RomMode::PostprocessingGalerkin => "pg",
        })
    }
}

impl FromStr for RomMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g" | "galerkin" => Ok(RomMode::Galerkin),
            "nlg" | "nonlinear-galerkin" => Ok(RomMode::NonlinearGalerkin),
            "pg" | "postprocessing-galerkin" => Ok(RomMode::PostprocessingGalerkin),
            other => Err(Error::InvalidParameter(format!("unknown ROM mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RomConfig {
    pub mode: RomMode,
    pub total_time: f64,
    pub save_interval: f64,
    /// Upper bound on the RK4 step; lowered further to stay stable for the
    /// retained eigenvalues.
    pub max_step: f64,
    pub iterations: usize,
}

/// Integrates the reduced model from the projection of `u0` and returns the
/// reconstructed full-space states at every save time.
pub fn rom_integrate(basis: &EigenBasis, dp: usize, model: &impl SplitRhs, u0: &Field, config: &RomConfig) -> Result<Rollout> {
    let mut reduced = Reduced::new(basis, dp, model)?;
    match config.mode {
        RomMode::Galerkin => {}
        RomMode::NonlinearGalerkin => reduced = reduced.nonlinear_galerkin(config.iterations)?,
        RomMode::PostprocessingGalerkin => reduced.check_trailing()?,
    }
    if u0.dim() != basis.dim() {
        return Err(Error::Shape { expected: basis.dim(), got: u0.dim() });
    }
    let n = crate::node::intervals_of(config.total_time, config.save_interval)?;
    let requested = (config.save_interval / config.max_step).ceil().max(1.0) as usize;
    let substeps = stable_substeps(reduced.stiffness(), config.save_interval, requested);
    let p0 = u0.values.view().insert_axis(Axis(0)).dot(&basis.resolved(dp));
    let saved = rollout_batch(&reduced, p0.view(), n, config.save_interval, substeps)?;
    let mut states = Vec::with_capacity(saved.len());
    let mut diverged_at = None;
    for (i, p) in saved.iter().enumerate() {
        let t = u0.time + i as f64 * config.save_interval;
        if p.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(t);
            break;
        }
        let q = match config.mode {
            RomMode::Galerkin => None,
            _ => Some(reduced.slaved_q(p.view(), config.iterations)?),
        };
        let u = reduced.lift(p.view(), q.as_ref().map(|q| q.view()));
        if u.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(t);
            break;
        }
        states.push(Field { values: u.index_axis_move(Axis(0), 0), length: u0.length, time: t });
    }
    Ok(Rollout { states, diverged_at })
}
