use std::fs;
use std::io::{BufReader, Cursor, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::model::{LinearBranch, RhsModel, Variant};
use super::train::{Adam, TrainState};
use crate::diff::{Activation, ConvStencil, MlpParams};
use crate::error::{Error, Result};
use crate::io::{expect_eof, expect_magic, read_f64, read_f64s, read_u32, read_u64, read_u8, write_f64, write_f64s, write_u32, write_u64, write_u8};

const MAGIC: &[u8; 4] = b"SNCK";
const VERSION: u32 = 1;

/// Layout: magic, version, variant tag, domain length, layer sizes,
/// activation tags, stencil width and symmetric flag, then the network
/// parameters, stencil taps, fixed operator (row-major) and finally the
/// optimizer state of both parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let m = &self.state.model;
        w.write_all(MAGIC)?;
        write_u32(w, VERSION)?;
        write_u8(w, m.variant().tag())?;
        write_f64(w, m.length)?;
        let sizes = m.mlp.layer_sizes();
        write_u32(w, sizes.len() as u32)?;
        for s in &sizes {
            write_u32(w, *s as u32)?;
        }
        for a in &m.mlp.activations {
            write_u8(w, a.tag())?;
        }
        let (width, symmetric) = m.stencil().map_or((0, false), |s| (s.width(), s.symmetric));
        write_u32(w, width as u32)?;
        write_u8(w, symmetric as u8)?;
        write_f64s(w, m.mlp.to_flat().iter())?;
        if let Some(s) = m.stencil() {
            write_f64s(w, s.taps.iter())?;
        }
        if let LinearBranch::Fixed(a) = &m.linear {
            write_f64s(w, a.iter())?;
        }
        write_u64(w, self.state.epoch as u64)?;
        for adam in [&self.state.adam_nonlinear, &self.state.adam_linear] {
            write_u64(w, adam.t)?;
            write_f64s(w, adam.m.iter())?;
            write_f64s(w, adam.v.iter())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, MAGIC)?;
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let variant = Variant::from_tag(read_u8(r)?)?;
        let length = read_f64(r)?;
        let n_sizes = read_u32(r)? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(Error::Format(format!("implausible layer count {n_sizes}")));
        }
        let sizes = (0..n_sizes).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let acts = (0..n_sizes - 1).map(|_| read_u8(r).and_then(Activation::from_tag)).collect::<Result<Vec<_>>>()?;
        let width = read_u32(r)? as usize;
        let symmetric = read_u8(r)? != 0;
        let mut mlp = MlpParams::zeros(&sizes, &acts)?;
        mlp.set_flat(&read_f64s(r, mlp.n_params())?)?;
        let d = sizes[0];
        let linear = match variant {
            Variant::Nonlinear => LinearBranch::None,
            Variant::LearnedLinear => LinearBranch::Learned(ConvStencil::new(Array1::from(read_f64s(r, width)?), symmetric)?),
            Variant::FixedLinear => {
                let a = Array2::from_shape_vec((d, d), read_f64s(r, d * d)?).map_err(|e| Error::Format(e.to_string()))?;
                LinearBranch::Fixed(a)
            }
        };
        let model = match linear {
            LinearBranch::None => RhsModel::nonlinear(mlp, length)?,
            LinearBranch::Fixed(a) => RhsModel::fixed_linear(mlp, a, length)?,
            LinearBranch::Learned(s) => RhsModel::learned_linear(mlp, s, length)?,
        };
        let epoch = read_u64(r)? as usize;
        let mut read_adam = |n: usize| -> Result<Adam> {
            let t = read_u64(r)?;
            Ok(Adam { t, m: read_f64s(r, n)?, v: read_f64s(r, n)? })
        };
        let adam_nonlinear = read_adam(model.n_nonlinear_params())?;
        let adam_linear = read_adam(model.n_linear_params())?;
        expect_eof(r)?;
        Ok(Self { state: TrainState { model, adam_nonlinear, adam_linear, epoch } })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut Cursor::new(bytes))
    }
}

pub fn write_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    let bytes = Checkpoint { state: state.clone() }.to_bytes();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<TrainState> {
    Ok(Checkpoint::read_from(&mut BufReader::new(fs::File::open(path)?))?.state)
}
