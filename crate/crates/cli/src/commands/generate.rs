use std::path::PathBuf;

use snode_core::io::fmt_f64;
use snode_core::spectral::{generate_dataset, DatasetParams, KseParams, VbeParams};
use snode_core::System;

use crate::config::{manifest_path, Resolved};
use crate::error::CliResult;
use crate::output::{at, ensure_parent};

pub(crate) fn params(cfg: &Resolved) -> CliResult<DatasetParams> {
    Ok(match cfg.system() {
        System::Vbe => DatasetParams::Vbe(VbeParams {
            d: cfg.get("grid")?,
            solver_d: cfg.get("solver_grid")?,
            length: cfg.get("length")?,
            viscosity: cfg.get("viscosity")?,
            dt: cfg.get("dt")?,
            horizon: cfg.get("horizon")?,
            tau: cfg.get("tau")?,
            n_train: cfg.get("train_ics")?,
            n_test: cfg.get("test_ics")?,
            peak_wavenumber: cfg.get("peak_wavenumber")?,
            seed: cfg.get("seed")?,
        }),
        System::Kse => DatasetParams::Kse(KseParams {
            d: cfg.get("grid")?,
            length: cfg.get("length")?,
            h: cfg.get("dt")?,
            transient: cfg.get("transient")?,
            horizon: cfg.get("horizon")?,
            tau: cfg.get("tau")?,
            train_fraction: cfg.get("train_fraction")?,
            seed: cfg.get("seed")?,
        }),
    })
}

pub(crate) fn run(cfg: &mut Resolved) -> CliResult<PathBuf> {
    let ds = generate_dataset(&params(cfg)?)?;
    let path = cfg.path("dataset");
    ensure_parent(&path)?;
    let mut extra = vec![("seed".to_string(), cfg.str("seed").to_string())];
    match cfg.system() {
        System::Vbe => {
            for k in ["solver_grid", "viscosity", "dt", "horizon", "peak_wavenumber", "train_ics", "test_ics"] {
                extra.push((k.to_string(), cfg.str(k).to_string()));
            }
        }
        System::Kse => {
            for k in ["dt", "transient", "horizon", "train_fraction"] {
                extra.push((k.to_string(), cfg.str(k).to_string()));
            }
        }
    }
    ds.save(&path, &extra).map_err(at(&path))?;
    println!(
        "{}: {} trajectories x {} snapshots on {} points, tau {}",
        path.display(),
        ds.n_traj(),
        ds.n_snap(),
        ds.dim(),
        fmt_f64(ds.tau)
    );
    let manifest = manifest_path(&path);
    cfg.write_manifest(&manifest)?;
    Ok(manifest)
}
