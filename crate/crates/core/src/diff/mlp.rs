use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::field::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Linear => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Sigmoid),
            2 => Ok(Activation::Linear),
            t => Err(Error::Format(format!("unknown activation tag {t}"))),
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Linear => {}
        }
    }

    /// Multiplies `delta` by the derivative, expressed through the output `y`.
    fn chain(self, delta: &mut Array2<f64>, y: &Array2<f64>) {
        match self {
            // derivative at exactly zero is taken as 0
            Activation::Relu => delta.zip_mut_with(y, |d, &y| if y <= 0.0 { *d = 0.0 }),
            Activation::Sigmoid => delta.zip_mut_with(y, |d, &y| *d *= y * (1.0 - y)),
            Activation::Linear => {}
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sig",
            Activation::Linear => "linear",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "sig" | "sigmoid" => Ok(Activation::Sigmoid),
            "linear" | "id" => Ok(Activation::Linear),
            other => Err(Error::InvalidParameter(format!("unknown activation '{other}'"))),
        }
    }
}

/// Fully connected network. Layer `l` maps row vectors as `y = act(x W + b)`
/// with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activations: Vec<Activation>,
}

/// Gradient with the same shapes as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Activations retained by a forward pass; consumed by the matching backward pass.
#[derive(Debug)]
pub struct MlpTape {
    values: Vec<Array2<f64>>,
}

impl MlpParams {
    /// Zero-initialized network with the given layer sizes (`n + 1` entries
    /// for `n` layers) and per-layer activations.
    pub fn zeros(layer_sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if layer_sizes.len() < 2 || activations.len() != layer_sizes.len() - 1 {
            return Err(Error::InvalidParameter(format!(
                "{} layer sizes need {} activations, got {}",
                layer_sizes.len(),
                layer_sizes.len().saturating_sub(1),
                activations.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidParameter("layer sizes must be positive".into()));
        }
        if activations.last() != Some(&Activation::Linear) {
            return Err(Error::InvalidParameter("final activation must be linear".into()));
        }
        Ok(Self {
            weights: layer_sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect(),
            activations: activations.to_vec(),
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].nrows()];
        s.extend(self.weights.iter().map(|w| w.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map(|w| w.ncols()).unwrap_or(0)
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters in declaration order: per layer, weights row-major, then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), got: flat.len() });
        }
        let mut it = flat.iter();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().chain(b.iter_mut()).zip(&mut it).for_each(|(p, v)| *p = *v);
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)) && self.biases.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpTape)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), got: x.ncols() });
        }
        let mut values = Vec::with_capacity(self.weights.len() + 1);
        values.push(x.to_owned());
        for ((w, b), act) in self.weights.iter().zip(&self.biases).zip(&self.activations) {
            let mut z = values.last().expect("nonempty").dot(w);
            z += b;
            act.apply(&mut z);
            values.push(z);
        }
        let out = values.last().expect("nonempty").clone();
        Ok((out, MlpTape { values }))
    }

    /// Forward pass without retaining intermediates.
    pub fn eval_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), got: x.ncols() });
        }
        let mut cur = x.to_owned();
        for ((w, b), act) in self.weights.iter().zip(&self.biases).zip(&self.activations) {
            cur = cur.dot(w);
            cur += b;
            act.apply(&mut cur);
        }
        Ok(cur)
    }

    pub fn eval(&self, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        let x = u.insert_axis(Axis(0));
        Ok(self.eval_batch(x)?.index_axis_move(Axis(0), 0))
    }

    /// Reverse pass: returns parameter gradients summed over the batch and
    /// the cotangent with respect to the inputs.
    pub fn backward_batch(&self, tape: MlpTape, cotangent: ArrayView2<f64>) -> Result<(MlpGrad, Array2<f64>)> {
        let layers = self.weights.len();
        if tape.values.len() != layers + 1
            || tape.values.iter().zip(self.layer_sizes()).any(|(v, n)| v.ncols() != n)
        {
            return Err(Error::StaleTape);
        }
        let out = &tape.values[layers];
        if cotangent.dim() != out.dim() {
            return Err(Error::Shape { expected: out.len(), got: cotangent.len() });
        }
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        let mut delta = cotangent.to_owned();
        for l in (0..layers).rev() {
            self.activations[l].chain(&mut delta, &tape.values[l + 1]);
            gw.push(tape.values[l].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&self.weights[l].t());
        }
        gw.reverse();
        gb.reverse();
        Ok((MlpGrad { weights: gw, biases: gb }, delta))
    }
}

impl MlpGrad {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: params.biases.iter().map(|b| Array1::zeros(b.dim())).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn add_assign(&mut self, other: &MlpGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|w| *w *= s);
        self.biases.iter_mut().for_each(|b| *b *= s);
    }

    pub fn is_zero(&self) -> bool {
        self.to_flat().iter().all(|&v| v == 0.0)
    }
}

pub fn mlp_forward(params: &MlpParams, u: &Field) -> Result<(Field, MlpTape)> {
    let (y, tape) = params.forward_batch(u.values.view().insert_axis(Axis(0)))?;
    let values = y.index_axis_move(Axis(0), 0);
    Ok((Field { values, length: u.length, time: u.time }, tape))
}

pub fn mlp_backward(params: &MlpParams, tape: MlpTape, cotangent: &Field) -> Result<(MlpGrad, Field)> {
    let (g, ct) = params.backward_batch(tape, cotangent.values.view().insert_axis(Axis(0)))?;
    let values = ct.index_axis_move(Axis(0), 0);
    Ok((g, Field { values, length: cotangent.length, time: cotangent.time }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{init_mlp, WeightInit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(v: Vec<f64>) -> Field {
        Field { values: Array1::from(v), length: 1.0, time: 0.0 }
    }

    /// Plain nested-loop evaluation used as an independent oracle.
    fn naive_forward(p: &MlpParams, u: &[f64]) -> Vec<f64> {
        let mut x = u.to_vec();
        for ((w, b), act) in p.weights.iter().zip(&p.biases).zip(&p.activations) {
            let mut y = vec![0.0; w.ncols()];
            for (j, yj) in y.iter_mut().enumerate() {
                let mut s = b[j];
                for (i, xi) in x.iter().enumerate() {
                    s += xi * w[[i, j]];
                }
                *yj = match act {
                    Activation::Relu => s.max(0.0),
                    Activation::Sigmoid => 1.0 / (1.0 + (-s).exp()),
                    Activation::Linear => s,
                };
            }
            x = y;
        }
        x
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = MlpParams::zeros(&[8, 5, 8], &[Activation::Relu, Activation::Linear]).unwrap();
        let (y, _) = mlp_forward(&p, &field(vec![1.5; 8])).unwrap();
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer() {
        let mut p = MlpParams::zeros(&[4, 4], &[Activation::Linear]).unwrap();
        p.weights[0] = Array2::eye(4);
        let u = field(vec![1.0, -2.0, 3.0, 0.5]);
        let (y, _) = mlp_forward(&p, &u).unwrap();
        assert_eq!(y.values, u.values);
    }

    #[test]
    fn matches_naive_reimplementation() {
        for act in [Activation::Relu, Activation::Sigmoid] {
            let p = init_mlp(&[16, 20, 20, 16], &[act, act, Activation::Linear], WeightInit::Normal { mean: 0.0, var: 0.1 }, 3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let u: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (y, _) = mlp_forward(&p, &field(u.clone())).unwrap();
            for (a, b) in y.values.iter().zip(naive_forward(&p, &u)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_linear_gradient() {
        let mut p = MlpParams::zeros(&[1, 1], &[Activation::Linear]).unwrap();
        p.weights[0][[0, 0]] = 2.5;
        let u = field(vec![-1.5]);
        let (_, tape) = mlp_forward(&p, &u).unwrap();
        let (g, ct) = mlp_backward(&p, tape, &field(vec![1.0])).unwrap();
        assert_eq!(g.weights[0][[0, 0]], -1.5);
        assert_eq!(g.biases[0][0], 1.0);
        assert_eq!(ct.values[0], 2.5);
    }

    #[test]
    fn zero_cotangent_zero_gradient() {
        let p = init_mlp(&[6, 7, 6], &[Activation::Sigmoid, Activation::Linear], WeightInit::Normal { mean: 0.0, var: 1.0 }, 1).unwrap();
        let (_, tape) = mlp_forward(&p, &field(vec![0.3; 6])).unwrap();
        let (g, ct) = mlp_backward(&p, tape, &field(vec![0.0; 6])).unwrap();
        assert!(g.is_zero());
        assert!(ct.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_tape_is_rejected() {
        let a = MlpParams::zeros(&[4, 3, 4], &[Activation::Relu, Activation::Linear]).unwrap();
        let b = MlpParams::zeros(&[4, 5, 4], &[Activation::Relu, Activation::Linear]).unwrap();
        let (_, tape) = mlp_forward(&a, &field(vec![1.0; 4])).unwrap();
        assert!(matches!(mlp_backward(&b, tape, &field(vec![1.0; 4])), Err(Error::StaleTape)));
    }

    #[test]
    fn construction_errors() {
        assert!(MlpParams::zeros(&[4, 4], &[Activation::Relu]).is_err());
        assert!(MlpParams::zeros(&[4, 4, 4], &[Activation::Relu]).is_err());
        assert!(MlpParams::zeros(&[4, 0, 4], &[Activation::Relu, Activation::Linear]).is_err());
        let p = MlpParams::zeros(&[3, 3], &[Activation::Linear]).unwrap();
        assert!(mlp_forward(&p, &field(vec![0.0; 4])).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let p = init_mlp(&[3, 4, 2], &[Activation::Relu, Activation::Linear], WeightInit::Uniform { lo: -1.0, hi: 1.0 }, 5).unwrap();
        let mut q = MlpParams::zeros(&[3, 4, 2], &[Activation::Relu, Activation::Linear]).unwrap();
        q.set_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[1.0]).is_err());
    }
}
