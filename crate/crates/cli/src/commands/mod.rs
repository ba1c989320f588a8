mod evaluate;
mod generate;
mod rom;
mod stencil;
mod train;

use std::path::{Path, PathBuf};

use snode_core::diff::{init_mlp, init_stencil, Activation, WeightInit};
use snode_core::node::{read_checkpoint, RhsModel, TrainState, Variant};
use snode_core::spectral::{true_linear_operator, SnapshotDataset};

use crate::config::{Command, Resolved};
use crate::error::{CliError, CliResult};
use crate::output::at;

pub use stencil::cosine_similarity;

/// Runs a resolved command inside a pool capped at `threads` workers and
/// returns the run manifest path.
pub fn dispatch(mut cfg: Resolved) -> CliResult<PathBuf> {
    let threads: usize = cfg.get("threads")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::config(format!("threads: {e}")))?;
    pool.install(|| match cfg.command {
        Command::Generate => generate::run(&mut cfg),
        Command::Train => train::run(&mut cfg),
        Command::Evaluate => evaluate::run(&mut cfg),
        Command::Rom => rom::run(&mut cfg),
        Command::StencilReport => stencil::run(&mut cfg),
    })
}

pub(crate) fn load_dataset(cfg: &mut Resolved) -> CliResult<SnapshotDataset> {
    let path = cfg.path("dataset");
    cfg.register_input("dataset", &path)?;
    let ds = SnapshotDataset::load(&path).map_err(at(&path))?;
    if ds.system != cfg.system() {
        return Err(CliError::config(format!(
            "dataset {} holds {} data but system = {}",
            path.display(),
            ds.system,
            cfg.system()
        )));
    }
    Ok(ds)
}

pub(crate) fn load_state(cfg: &mut Resolved, key: &str, path: &Path) -> CliResult<TrainState> {
    cfg.register_input(key, path)?;
    read_checkpoint(path).map_err(at(path))
}

pub(crate) fn load_model(cfg: &mut Resolved) -> CliResult<RhsModel> {
    let path = cfg.path("checkpoint");
    Ok(load_state(cfg, "checkpoint", &path)?.model)
}

/// Fresh model for `variant` on a `d`-point grid, initialized from `seed`.
pub(crate) fn build_model(cfg: &Resolved, d: usize, length: f64) -> CliResult<RhsModel> {
    let hidden: Vec<usize> = cfg.list("hidden")?;
    let act: Activation = cfg.get("activation")?;
    let init: WeightInit = cfg.get("weight_init")?;
    let seed: u64 = cfg.get("seed")?;
    let mut sizes = vec![d];
    sizes.extend(&hidden);
    sizes.push(d);
    let mut acts = vec![act; hidden.len()];
    acts.push(Activation::Linear);
    let mlp = init_mlp(&sizes, &acts, init, seed)?;
    let model = match cfg.variant() {
        Variant::Nonlinear => RhsModel::nonlinear(mlp, length)?,
        Variant::FixedLinear => {
            let a = true_linear_operator(cfg.system(), d, length, cfg.get("viscosity")?);
            RhsModel::fixed_linear(mlp, a, length)?
        }
        Variant::LearnedLinear => {
            let stencil = init_stencil(
                cfg.get("stencil_width")?,
                cfg.bool("symmetric")?,
                cfg.get("linear_init")?,
                seed.wrapping_add(1),
            )?;
            RhsModel::learned_linear(mlp, stencil, length)?
        }
    };
    Ok(model)
}
