use std::path::PathBuf;

use snode_core::node::{write_checkpoint, EpochRecord, PairSet, TrainConfig, TrainState};

use super::{build_model, load_dataset, load_state};
use crate::config::{manifest_path, Resolved};
use crate::error::{CliError, CliResult};
use crate::output::{at, ensure_parent, num, Csv};

pub(crate) fn train_config(cfg: &Resolved) -> CliResult<TrainConfig> {
    let tc = TrainConfig {
        epochs: cfg.get("epochs")?,
        lr_nonlinear: cfg.list("lr_nonlinear")?,
        lr_linear: cfg.list("lr_linear")?,
        batch_size: cfg.get("batch_size")?,
        rollout_steps: cfg.get("rollout_steps")?,
        seed: cfg.get("seed")?,
    };
    tc.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(tc)
}

fn loss_log(history: &[EpochRecord]) -> Csv {
    let mut csv = Csv::new(
        &[("quantity", "mean L1 one-interval loss per epoch".into())],
        &["epoch", "stage", "lr_nonlinear", "lr_linear", "loss"],
    );
    for r in history {
        csv.row(&[r.epoch.to_string(), r.stage.to_string(), num(r.lr_nonlinear), num(r.lr_linear), num(r.loss)]);
    }
    csv
}

pub(crate) fn run(cfg: &mut Resolved) -> CliResult<PathBuf> {
    let ds = load_dataset(cfg)?;
    let tc = train_config(cfg)?;
    let mut state = match cfg.optional_path("resume") {
        Some(p) => {
            let s = load_state(cfg, "resume", &p)?;
            if s.model.variant() != cfg.variant() {
                return Err(CliError::config(format!(
                    "resume checkpoint is {}, config says {}",
                    s.model.variant(),
                    cfg.variant()
                )));
            }
            s
        }
        None => TrainState::new(build_model(cfg, ds.dim(), ds.length)?),
    };
    if state.model.dim() != ds.dim() {
        return Err(CliError::config(format!("model width {} vs dataset grid {}", state.model.dim(), ds.dim())));
    }
    let data = PairSet::from_dataset(&ds, true)?;
    let every: usize = cfg.get("checkpoint_every")?;
    let stop = match cfg.str("stop_after") {
        "none" => tc.epochs,
        _ => cfg.get::<usize>("stop_after")?.min(tc.epochs),
    };
    let ckpt = cfg.path("checkpoint");
    let log = cfg.path("output");
    ensure_parent(&ckpt)?;

    let mut history = Vec::new();
    while state.epoch < stop {
        match state.run_epoch(&data, &tc) {
            Ok(rec) => history.push(rec),
            Err(e) if e.is_divergence() => {
                write_checkpoint(&ckpt, &state).map_err(at(&ckpt))?;
                loss_log(&history).write(&log)?;
                cfg.write_manifest(&manifest_path(&ckpt))?;
                return Err(CliError::Divergence(format!(
                    "training diverged in epoch {}; last good state saved to {}",
                    state.epoch,
                    ckpt.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        if every > 0 && state.epoch % every == 0 {
            write_checkpoint(&ckpt, &state).map_err(at(&ckpt))?;
        }
    }
    write_checkpoint(&ckpt, &state).map_err(at(&ckpt))?;
    loss_log(&history).write(&log)?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!("epochs {}..{}: loss {} -> {}", first.epoch, last.epoch, first.loss, last.loss);
    }
    let manifest = manifest_path(&ckpt);
    cfg.write_manifest(&manifest)?;
    Ok(manifest)
}
