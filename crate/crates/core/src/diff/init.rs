use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Activation, ConvStencil, MlpParams};
use crate::error::{Error, Result};

/// Weight distribution. Biases are always zero-initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    Normal { mean: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl WeightInit {
    fn sampler(&self) -> Result<Box<dyn FnMut(&mut ChaCha8Rng) -> f64>> {
        match *self {
            WeightInit::Normal { mean, var } => {
                let n = Normal::new(mean, var.sqrt())
                    .map_err(|e| Error::InvalidParameter(format!("normal({mean}, {var}): {e}")))?;
                Ok(Box::new(move |rng| n.sample(rng)))
            }
            WeightInit::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::InvalidParameter(format!("uniform({lo}, {hi})")));
                }
                Ok(Box::new(move |rng| rng.random_range(lo..hi)))
            }
        }
    }
}

impl fmt::Display for WeightInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightInit::Normal { mean, var } => write!(f, "normal:{mean:?}:{var:?}"),
            WeightInit::Uniform { lo, hi } => write!(f, "uniform:{lo:?}:{hi:?}"),
        }
    }
}

/// Parses `normal:<mean>:<variance>` or `uniform:<lo>:<hi>`.
impl FromStr for WeightInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("bad weight init '{s}'"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[1].parse().map_err(|_| bad())?;
        let b: f64 = parts[2].parse().map_err(|_| bad())?;
        match parts[0] {
            "normal" => Ok(WeightInit::Normal { mean: a, var: b }),
            "uniform" => Ok(WeightInit::Uniform { lo: a, hi: b }),
            _ => Err(bad()),
        }
    }
}

pub fn init_mlp(layer_sizes: &[usize], activations: &[Activation], init: WeightInit, seed: u64) -> Result<MlpParams> {
    let mut p = MlpParams::zeros(layer_sizes, activations)?;
    let mut sample = init.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in p.weights.iter_mut() {
        w.iter_mut().for_each(|v| *v = sample(&mut rng));
    }
    Ok(p)
}

pub fn init_stencil(width: usize, symmetric: bool, init: WeightInit, seed: u64) -> Result<ConvStencil> {
    let mut sample = init.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ConvStencil::new(Array1::from_shape_fn(width, |_| sample(&mut rng)), symmetric)
}
