use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::diff::{ConvStencil, MlpGrad, MlpParams, MlpTape};
use crate::error::{Error, Result};
use crate::field::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Nonlinear,
    FixedLinear,
    LearnedLinear,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::Nonlinear => 0,
            Variant::FixedLinear => 1,
            Variant::LearnedLinear => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Variant::Nonlinear),
            1 => Ok(Variant::FixedLinear),
            2 => Ok(Variant::LearnedLinear),
            t => Err(Error::Format(format!("unknown variant tag {t}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Nonlinear => "nonlinear",
            Variant::FixedLinear => "fixed-linear",
            Variant::LearnedLinear => "learned-linear",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nonlinear" => Ok(Variant::Nonlinear),
            "fixed-linear" | "fixed" => Ok(Variant::FixedLinear),
            "learned-linear" | "learned" => Ok(Variant::LearnedLinear),
            other => Err(Error::InvalidParameter(format!("unknown variant '{other}'"))),
        }
    }
}

/// The explicit linear part of a stabilized right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearBranch {
    None,
    Fixed(Array2<f64>),
    Learned(ConvStencil),
}

/// Learned right-hand side `du/dt = h(u)`: either a plain network, or a
/// linear operator plus a network correction.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsModel {
    pub mlp: MlpParams,
    pub linear: LinearBranch,
    pub length: f64,
}

/// Gradient with the same shape tree as an [`RhsModel`]'s trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrad {
    pub mlp: MlpGrad,
    pub stencil: Option<Array1<f64>>,
}

#[derive(Debug)]
pub struct RhsTape {
    mlp: MlpTape,
    input: Option<Array2<f64>>,
}

impl RhsModel {
    pub fn nonlinear(mlp: MlpParams, length: f64) -> Result<Self> {
        Self::build(mlp, LinearBranch::None, length)
    }

    pub fn fixed_linear(mlp: MlpParams, a: Array2<f64>, length: f64) -> Result<Self> {
        Self::build(mlp, LinearBranch::Fixed(a), length)
    }

    pub fn learned_linear(mlp: MlpParams, stencil: ConvStencil, length: f64) -> Result<Self> {
        Self::build(mlp, LinearBranch::Learned(stencil), length)
    }

    fn build(mlp: MlpParams, linear: LinearBranch, length: f64) -> Result<Self> {
        let d = mlp.input_dim();
        if mlp.output_dim() != d {
            return Err(Error::Shape { expected: d, got: mlp.output_dim() });
        }
        match &linear {
            LinearBranch::Fixed(a) if a.dim() != (d, d) => {
                return Err(Error::Shape { expected: d * d, got: a.len() });
            }
            LinearBranch::Learned(s) if s.width() >= d => {
                return Err(Error::InvalidParameter(format!("stencil width {} not below {d}", s.width())));
            }
            _ => {}
        }
        if !(length > 0.0) {
            return Err(Error::InvalidParameter(format!("domain length {length}")));
        }
        Ok(Self { mlp, linear, length })
    }

    pub fn variant(&self) -> Variant {
        match self.linear {
            LinearBranch::None => Variant::Nonlinear,
            LinearBranch::Fixed(_) => Variant::FixedLinear,
            LinearBranch::Learned(_) => Variant::LearnedLinear,
        }
    }

    pub fn dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn stencil(&self) -> Option<&ConvStencil> {
        match &self.linear {
            LinearBranch::Learned(s) => Some(s),
            _ => None,
        }
    }

    /// Linear branch applied to each row; zero for the plain variant.
    pub fn linear_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match &self.linear {
            LinearBranch::None => Ok(Array2::zeros(x.dim())),
            LinearBranch::Fixed(a) => Ok(x.dot(&a.t())),
            LinearBranch::Learned(s) => s.apply_batch(x),
        }
    }

    /// The network branch, `f(u)` or `F(u)` depending on the variant.
    pub fn nonlinear_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.mlp.eval_batch(x)
    }

    pub fn eval_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut y = self.mlp.eval_batch(x)?;
        if !matches!(self.linear, LinearBranch::None) {
            y += &self.linear_batch(x)?;
        }
        Ok(y)
    }

    pub fn eval(&self, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.eval_batch(u.insert_axis(Axis(0)))?.index_axis_move(Axis(0), 0))
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, RhsTape)> {
        let (mut y, mlp) = self.mlp.forward_batch(x)?;
        let input = match &self.linear {
            LinearBranch::None => None,
            LinearBranch::Fixed(a) => {
                y += &x.dot(&a.t());
                None
            }
            LinearBranch::Learned(s) => {
                y += &s.apply_batch(x)?;
                Some(x.to_owned())
            }
        };
        Ok((y, RhsTape { mlp, input }))
    }

    /// Vector-Jacobian product of [`forward_batch`](Self::forward_batch);
    /// parameter gradients are summed over rows.
    pub fn backward_batch(&self, tape: RhsTape, cotangent: ArrayView2<f64>) -> Result<(ModelGrad, Array2<f64>)> {
        let (mlp, mut input_ct) = self.mlp.backward_batch(tape.mlp, cotangent)?;
        let stencil = match (&self.linear, tape.input) {
            (LinearBranch::None, None) => None,
            (LinearBranch::Fixed(a), None) => {
                input_ct += &cotangent.dot(a);
                None
            }
            (LinearBranch::Learned(s), Some(x)) => {
                let (g, ct) = s.backward_batch(x.view(), cotangent)?;
                input_ct += &ct;
                Some(g)
            }
            _ => return Err(Error::StaleTape),
        };
        Ok((ModelGrad { mlp, stencil }, input_ct))
    }

    /// Upper bound on the magnitude of the linear branch's eigenvalues, used
    /// to keep explicit integration inside its stability region.
    pub fn linear_spectral_radius(&self) -> f64 {
        match &self.linear {
            LinearBranch::None => 0.0,
            LinearBranch::Fixed(a) => spectral_radius_bound(a.view()),
            LinearBranch::Learned(s) => s.effective_taps().iter().map(|t| t.abs()).sum(),
        }
    }

    pub fn n_nonlinear_params(&self) -> usize {
        self.mlp.n_params()
    }

    pub fn n_linear_params(&self) -> usize {
        self.stencil().map_or(0, |s| s.width())
    }

    /// Trainable parameters, network first, then stencil taps.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.mlp.to_flat();
        if let Some(s) = self.stencil() {
            v.extend(s.taps.iter());
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.n_nonlinear_params();
        let expected = n + self.n_linear_params();
        if flat.len() != expected {
            return Err(Error::Shape { expected, got: flat.len() });
        }
        self.mlp.set_flat(&flat[..n])?;
        if let LinearBranch::Learned(s) = &mut self.linear {
            s.taps.iter_mut().zip(&flat[n..]).for_each(|(t, v)| *t = *v);
        }
        Ok(())
    }
}

/// Spectral radius of a dense matrix: exact for symmetric input via power
/// iteration, falling back to the max row-sum bound if iteration stalls.
fn spectral_radius_bound(a: ArrayView2<f64>) -> f64 {
    let d = a.nrows();
    let row_bound = a.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let symmetric = a.iter().zip(a.t().iter()).all(|(x, y)| (x - y).abs() <= 1e-10 * row_bound.max(1.0));
    if !symmetric || row_bound == 0.0 {
        return row_bound;
    }
    let mut v = Array1::from_shape_fn(d, |i| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    v /= v.dot(&v).sqrt();
    let mut rho = 0.0;
    for _ in 0..500 {
        let w = a.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let prev = rho;
        rho = norm;
        v = w / norm;
        if (rho - prev).abs() <= 1e-10 * rho {
            break;
        }
    }
    rho.min(row_bound)
}

impl ModelGrad {
    pub fn zeros_like(model: &RhsModel) -> Self {
        Self {
            mlp: MlpGrad::zeros_like(&model.mlp),
            stencil: model.stencil().map(|s| Array1::zeros(s.width())),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGrad) {
        self.mlp.add_assign(&other.mlp);
        if let (Some(a), Some(b)) = (&mut self.stencil, &other.stencil) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.mlp.scale(s);
        if let Some(g) = &mut self.stencil {
            *g *= s;
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.mlp.to_flat();
        if let Some(g) = &self.stencil {
            v.extend(g.iter());
        }
        v
    }

    pub fn is_zero(&self) -> bool {
        self.mlp.is_zero() && self.stencil.as_ref().is_none_or(|g| g.iter().all(|&v| v == 0.0))
    }
}

/// Evaluate the right-hand side on a single field.
pub fn rhs_eval(model: &RhsModel, u: &Field) -> Result<Field> {
    if u.dim() != model.dim() {
        return Err(Error::Shape { expected: model.dim(), got: u.dim() });
    }
    Ok(Field { values: model.eval(u.values.view())?, length: u.length, time: u.time })
}
