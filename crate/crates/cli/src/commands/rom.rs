use std::path::PathBuf;
use std::time::Instant;

use ndarray::{stack, Array2, Axis};
use rayon::prelude::*;
use snode_core::metrics::{joint_pdf, kl_divergence, kl_overlap, JointPdf2D, PdfGrid};
use snode_core::node::{rollout, VectorField};
use snode_core::rom::{basis_of, rom_integrate, variance_sort, EigenBasis, RomConfig, RomMode, SplitRhs, TrueRhs};
use snode_core::Field;

use super::evaluate::{parse_grid, with_suffix};
use super::{load_dataset, load_model};
use crate::config::{manifest_path, Resolved};
use crate::error::{CliError, CliResult};
use crate::output::{at, num, Csv};

/// Parses `a..b` (inclusive), `a..b:step`, a comma list, or `d` for the full
/// grid dimension.
pub fn parse_dp(spec: &str, d: usize) -> CliResult<Vec<usize>> {
    let bad = || CliError::config(format!("dp = {spec}: expected a..b, a..b:step or a list"));
    let one = |s: &str| -> CliResult<usize> {
        match s.trim() {
            "d" => Ok(d),
            v => v.parse().map_err(|_| bad()),
        }
    };
    let out: Vec<usize> = if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((h, s)) => (h, one(s)?),
            None => (rest, 1),
        };
        let (lo, hi) = (one(lo)?, one(hi)?);
        if step == 0 || lo > hi {
            return Err(bad());
        }
        (lo..=hi).step_by(step).collect()
    } else {
        spec.split(',').map(one).collect::<CliResult<_>>()?
    };
    if out.iter().any(|&v| v == 0 || v > d) {
        return Err(CliError::config(format!("dp = {spec}: values must lie in 1..={d}")));
    }
    Ok(out)
}

struct Row {
    dp: usize,
    mode: RomMode,
    kl: f64,
    overlap: f64,
    out_of_range: f64,
    diverged_at: Option<f64>,
    seconds: f64,
}

fn states_matrix(states: &[Field]) -> Array2<f64> {
    let v: Vec<_> = states.iter().map(|f| f.values.view()).collect();
    stack(Axis(0), &v).expect("congruent states")
}

struct Sweep<'a> {
    basis: &'a EigenBasis,
    u0: &'a Field,
    cfg: RomConfig,
    grid: PdfGrid,
    reference: &'a JointPdf2D,
}

impl Sweep<'_> {
    fn one(&self, model: &(impl SplitRhs + Sync), dp: usize, mode: RomMode) -> CliResult<Row> {
        let start = Instant::now();
        let r = rom_integrate(self.basis, dp, model, self.u0, &RomConfig { mode, ..self.cfg })?;
        let pdf = joint_pdf(states_matrix(&r.states).view(), self.u0.length, &self.grid)?;
        // A truncated rollout's histogram is mostly out-of-range mass and its
        // KL can even come out negative, so divergence is scored as infinite.
        let kl = match r.diverged_at {
            Some(_) => f64::INFINITY,
            None => kl_divergence(&pdf, self.reference)?,
        };
        Ok(Row {
            dp,
            mode,
            kl,
            overlap: kl_overlap(&pdf, self.reference)?,
            out_of_range: pdf.out_of_range_fraction(),
            diverged_at: r.diverged_at,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn all(&self, model: &(impl SplitRhs + Sync), dps: &[usize], modes: &[RomMode]) -> CliResult<Vec<Row>> {
        let jobs: Vec<(RomMode, usize)> = modes.iter().flat_map(|&m| dps.iter().map(move |&d| (m, d))).collect();
        jobs.par_iter().map(|&(m, d)| self.one(model, d, m)).collect()
    }
}

fn full_reference<F: VectorField>(f: &F, u0: &Field, cfg: &RomConfig, grid: &PdfGrid) -> CliResult<JointPdf2D> {
    let substeps = (cfg.save_interval / cfg.max_step).ceil().max(1.0) as usize;
    let r = rollout(f, u0, cfg.total_time, cfg.save_interval, substeps)?;
    if let Some(t) = r.diverged_at {
        return Err(CliError::Divergence(format!("full reference rollout diverged at t = {t}")));
    }
    Ok(joint_pdf(states_matrix(&r.states).view(), u0.length, grid)?)
}

pub(crate) fn run(cfg: &mut Resolved) -> CliResult<PathBuf> {
    let ds = load_dataset(cfg)?;
    let d = ds.dim();
    let dps = parse_dp(cfg.str("dp"), d)?;
    let modes: Vec<RomMode> = cfg.list("rom_mode")?;
    if modes.is_empty() {
        return Err(CliError::config("rom_mode is empty"));
    }
    let grid = parse_grid(cfg.str("pdf_grid"))?;
    let rom_cfg = RomConfig {
        mode: modes[0],
        total_time: cfg.get("rom_time")?,
        save_interval: cfg.get("save_interval")?,
        max_step: cfg.get("max_step")?,
        iterations: cfg.get("nlg_iterations")?,
    };
    let test = ds.segments(false);
    let first = test.first().ok_or_else(|| CliError::config("dataset has no test data"))?;
    let u0 = Field::new(first.row(0).to_owned(), ds.length)?;
    let variance_rows = match cfg.str("variance_split") {
        "test" => ds.snapshots(false),
        "train" => ds.snapshots(true),
        v => return Err(CliError::config(format!("variance_split = {v}: expected test or train"))),
    };
    let sort = cfg.str("sort").to_string();
    let out = cfg.path("output");

    enum Rhs {
        True(TrueRhs),
        Model(snode_core::node::RhsModel),
    }
    let rhs = match cfg.str("rhs") {
        "true" => Rhs::True(TrueRhs::new(ds.system, d, ds.length, cfg.get("viscosity")?)?),
        "checkpoint" => Rhs::Model(load_model(cfg)?),
        v => return Err(CliError::config(format!("rhs = {v}: expected true or checkpoint"))),
    };
    let (basis, symmetrized) = match &rhs {
        Rhs::True(f) => basis_of(f)?,
        Rhs::Model(m) => basis_of(m)?,
    };
    if symmetrized {
        eprintln!("warning: learned stencil is not symmetric; using (A + A^T) / 2 for the eigenbasis");
    }
    let basis = match sort.as_str() {
        "eigenvalue" => basis,
        "variance" => match &rhs {
            Rhs::True(f) => variance_sort(&basis, f, variance_rows.view())?,
            Rhs::Model(m) => variance_sort(&basis, m, variance_rows.view())?,
        },
        v => return Err(CliError::config(format!("sort = {v}: expected eigenvalue or variance"))),
    };
    let basis_path = with_suffix(&out, "sneb");
    crate::output::ensure_parent(&out)?;
    basis.save(&basis_path).map_err(at(&basis_path))?;

    let reference = match cfg.str("reference") {
        "dataset" => {
            let views: Vec<_> = ds.trajectories.iter().map(|t| t.view()).collect();
            let all = ndarray::concatenate(Axis(0), &views).expect("congruent trajectories");
            joint_pdf(all.view(), ds.length, &grid)?
        }
        "model" => match &rhs {
            Rhs::True(f) => full_reference(f, &u0, &rom_cfg, &grid)?,
            Rhs::Model(m) => full_reference(m, &u0, &rom_cfg, &grid)?,
        },
        v => return Err(CliError::config(format!("reference = {v}: expected dataset or model"))),
    };
    let sweep = Sweep { basis: &basis, u0: &u0, cfg: rom_cfg, grid, reference: &reference };
    let rows = match &rhs {
        Rhs::True(f) => sweep.all(f, &dps, &modes)?,
        Rhs::Model(m) => sweep.all(m, &dps, &modes)?,
    };

    let mut csv = Csv::new(
        &[
            ("quantity", "KL divergence of ROM joint (u_x, u_xx) PDF against the reference".into()),
            ("rhs", cfg.str("rhs").into()),
            ("sort", sort.clone()),
            ("reference", cfg.str("reference").into()),
            ("symmetrized", symmetrized.to_string()),
            ("eigenvalues", basis.eigenvalues.iter().take(d.min(32)).map(|v| num(*v)).collect::<Vec<_>>().join(" ")),
            ("runtime_s", "wall clock; excluded from reproducibility checks".into()),
        ],
        &["dp", "mode", "kl", "overlap", "out_of_range", "diverged_at", "runtime_s"],
    );
    for r in &rows {
        csv.row(&[
            r.dp.to_string(),
            r.mode.to_string(),
            num(r.kl),
            num(r.overlap),
            num(r.out_of_range),
            r.diverged_at.map(num).unwrap_or_else(|| "none".into()),
            format!("{:.3}", r.seconds),
        ]);
        println!("{:>4} {:<4} KL {:.5}", r.dp, r.mode, r.kl);
    }
    csv.write(&out)?;
    let manifest = manifest_path(&out);
    cfg.write_manifest(&manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dp_specs() {
        assert_eq!(parse_dp("4..8", 64).unwrap(), vec![4, 5, 6, 7, 8]);
        assert_eq!(parse_dp("8..26:2", 64).unwrap(), vec![8, 10, 12, 14, 16, 18, 20, 22, 24, 26]);
        assert_eq!(parse_dp("8,18", 64).unwrap(), vec![8, 18]);
        assert_eq!(parse_dp("d", 64).unwrap(), vec![64]);
        assert!(parse_dp("0..4", 64).is_err());
        assert!(parse_dp("4..70", 64).is_err());
        assert!(parse_dp("9..4", 64).is_err());
        assert!(parse_dp("x", 64).is_err());
    }
}
