use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{concatenate, s, stack, Array2, ArrayView2, Axis};
use snode_core::io::{read_kv, sidecar_path};
use snode_core::metrics::{
    add_noise_fourier, add_noise_grid, attractor_scale, energy_spectrum_rows, joint_pdf, kl_divergence, kl_overlap,
    relative_error, Normalization, PdfGrid,
};
use snode_core::node::{rollout_batch, VectorField};
use snode_core::rom::TrueRhs;
use snode_core::spectral::{downsample, upsample, KseSolver, SnapshotDataset, VbeSolver};
use snode_core::{Field, Fourier, System};

use super::{load_dataset, load_model};
use crate::config::{manifest_path, Resolved};
use crate::error::{CliError, CliResult};
use crate::output::{at, num, Csv};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    None,
    Grid(f64),
    Fourier { eps: f64, k_lo: usize, k_hi: usize },
}

impl FromStr for Noise {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let f = |p: &str| p.parse::<f64>().map_err(|e| format!("{p}: {e}"));
        let n = |p: &str| p.parse::<usize>().map_err(|e| format!("{p}: {e}"));
        match parts.as_slice() {
            ["none"] => Ok(Noise::None),
            ["grid", eps] => Ok(Noise::Grid(f(eps)?)),
            ["fourier", eps, lo, hi] => Ok(Noise::Fourier { eps: f(eps)?, k_lo: n(lo)?, k_hi: n(hi)? }),
            _ => Err(format!("expected none, grid:EPS or fourier:EPS:KLO:KHI, got '{s}'")),
        }
    }
}

impl Noise {
    fn apply(&self, u: &Field, seed: u64) -> snode_core::Result<Field> {
        match *self {
            Noise::None => Ok(u.clone()),
            Noise::Grid(eps) => add_noise_grid(u, eps, seed),
            Noise::Fourier { eps, k_lo, k_hi } => add_noise_fourier(u, eps, k_lo, k_hi, seed),
        }
    }
}

pub(crate) fn parse_grid(s: &str) -> CliResult<PdfGrid> {
    let bad = || CliError::config(format!("pdf_grid = {s}: expected nx:ny:xlo:xhi:ylo:yhi"));
    let p: Vec<&str> = s.split(':').collect();
    if p.len() != 6 {
        return Err(bad());
    }
    let f = |i: usize| p[i].trim().parse::<f64>().map_err(|_| bad());
    let grid = PdfGrid {
        nx: p[0].trim().parse().map_err(|_| bad())?,
        ny: p[1].trim().parse().map_err(|_| bad())?,
        x_range: (f(2)?, f(3)?),
        y_range: (f(4)?, f(5)?),
    };
    grid.validate().map_err(|e| CliError::config(format!("pdf_grid: {e}")))?;
    Ok(grid)
}

/// Reference-solver settings: the dataset sidecar wins over the config,
/// since it describes how the data was actually produced.
struct Reference {
    system: System,
    d: usize,
    solver_d: usize,
    length: f64,
    viscosity: f64,
    dt: f64,
}

impl Reference {
    fn new(cfg: &Resolved, ds: &SnapshotDataset, dataset: &Path) -> CliResult<Self> {
        let side = sidecar_path(dataset);
        let recorded: BTreeMap<String, String> =
            if side.exists() { read_kv(&side).map_err(at(&side))?.into_iter().collect() } else { BTreeMap::new() };
        let pick = |k: &str| recorded.get(k).map(String::as_str).unwrap_or(cfg.str(k)).to_string();
        let parse = |k: &str| -> CliResult<f64> {
            pick(k).parse().map_err(|_| CliError::config(format!("{k} = {}", pick(k))))
        };
        let solver_d = match ds.system {
            System::Vbe => pick("solver_grid").parse().map_err(|_| CliError::config("solver_grid"))?,
            System::Kse => ds.dim(),
        };
        Ok(Self {
            system: ds.system,
            d: ds.dim(),
            solver_d: solver_d.max(ds.dim()),
            length: ds.length,
            viscosity: parse("viscosity")?,
            dt: parse("dt")?,
        })
    }

    /// True trajectory from `u0`, saved every `tau` for `n` intervals.
    fn trajectory(&self, u0: &Field, tau: f64, n: usize) -> CliResult<Array2<f64>> {
        let inner = ((tau / self.dt).round() as usize).max(1);
        let h = tau / inner as f64;
        let mut out = Array2::zeros((n + 1, self.d));
        out.row_mut(0).assign(&u0.values);
        let blow = |e: snode_core::Error| CliError::Divergence(format!("reference solver: {e}"));
        match self.system {
            System::Vbe => {
                let solver = VbeSolver::new(self.solver_d, self.length, self.viscosity, h)?;
                let (coarse, fine) = (Fourier::new(self.d)?, Fourier::new(self.solver_d)?);
                let mut u = Field::new(upsample(&coarse, &fine, u0.values.view()), self.length)?;
                for i in 1..=n {
                    u = solver.advance(&u, inner).map_err(blow)?;
                    out.row_mut(i).assign(&downsample(&fine, &coarse, u.values.view()));
                }
            }
            System::Kse => {
                let solver = KseSolver::new(self.d, self.length, h)?;
                let mut u = u0.clone();
                for i in 1..=n {
                    u = solver.advance(&u, inner).map_err(blow)?;
                    out.row_mut(i).assign(&u.values);
                }
            }
        }
        Ok(out)
    }
}

/// Test-data windows of `n + 1` snapshots: the start of each test trajectory,
/// or evenly spread starts inside a single long test segment.
fn windows<'a>(ds: &'a SnapshotDataset, count: Option<usize>, n: usize) -> CliResult<Vec<ArrayView2<'a, f64>>> {
    let segs = ds.segments(false);
    if segs.is_empty() {
        return Err(CliError::config("dataset has no test data"));
    }
    let too_short = || CliError::config(format!("test data shorter than {n} intervals"));
    if segs.len() > 1 {
        let k = count.unwrap_or(segs.len()).min(segs.len());
        return segs
            .into_iter()
            .take(k)
            .map(|v| if v.nrows() > n { Ok(v.slice_move(s![..=n, ..])) } else { Err(too_short()) })
            .collect();
    }
    let seg = segs[0];
    if seg.nrows() <= n {
        return Err(too_short());
    }
    let k = count.unwrap_or(1).max(1);
    let stride = ((seg.nrows() - n - 1) / k).max(1);
    Ok((0..k)
        .map(|i| (i * stride).min(seg.nrows() - n - 1))
        .map(|start| seg.slice_move(s![start..=start + n, ..]))
        .collect())
}

fn predict<F: VectorField>(f: &F, ics: &Array2<f64>, n: usize, tau: f64, substeps: usize) -> CliResult<Vec<Array2<f64>>> {
    let saved = rollout_batch(f, ics.view(), n, tau, substeps)?;
    let views: Vec<_> = saved.iter().map(|a| a.view()).collect();
    // (time, member, grid) -> one (time, grid) matrix per member
    let cube = stack(Axis(0), &views).expect("congruent saves");
    Ok((0..ics.nrows()).map(|m| cube.index_axis(Axis(1), m).to_owned()).collect())
}

pub(crate) fn run(cfg: &mut Resolved) -> CliResult<PathBuf> {
    let ds = load_dataset(cfg)?;
    let dataset_path = cfg.path("dataset");
    let reference = Reference::new(cfg, &ds, &dataset_path)?;
    let noise: Noise = cfg.get("noise")?;
    let seed: u64 = cfg.get("seed")?;
    let tau = ds.tau;
    let n = match cfg.str("eval_horizon") {
        "full" => ds.segments(false).iter().map(|v| v.nrows()).min().unwrap_or(1).saturating_sub(1),
        _ => (cfg.get::<f64>("eval_horizon")? / tau).round() as usize,
    };
    let count = match cfg.str("eval_ics") {
        "all" => None,
        v => Some(v.parse::<usize>().map_err(|_| CliError::config(format!("eval_ics = {v}")))?),
    };
    let wins = windows(&ds, count, n)?;

    let mut ics = Array2::zeros((wins.len(), ds.dim()));
    let mut truth = Vec::with_capacity(wins.len());
    for (i, w) in wins.iter().enumerate() {
        let clean = Field::new(w.row(0).to_owned(), ds.length)?;
        let u0 = noise.apply(&clean, seed.wrapping_add(i as u64))?;
        ics.row_mut(i).assign(&u0.values);
        truth.push(match noise {
            Noise::None => w.to_owned(),
            _ => reference.trajectory(&u0, tau, n)?,
        });
    }

    let substeps: usize = cfg.get("rollout_steps")?;
    let rhs = cfg.str("rhs").to_string();
    let model = match rhs.as_str() {
        "checkpoint" => predict(&load_model(cfg)?, &ics, n, tau, substeps)?,
        "true" => {
            let f = TrueRhs::new(ds.system, ds.dim(), ds.length, reference.viscosity)?;
            predict(&f, &ics, n, tau, substeps)?
        }
        "data" => truth.clone(),
        other => return Err(CliError::config(format!("rhs = {other}: expected checkpoint, true or data"))),
    };
    let diverged = model.iter().filter(|m| m.iter().any(|v| !v.is_finite())).count();
    if diverged > 0 {
        eprintln!("warning: {diverged} of {} rollouts diverged", model.len());
    }

    let out = cfg.path("output");
    let mut comments = vec![
        ("rhs", rhs.clone()),
        ("noise", cfg.str("noise").to_string()),
        ("noise_seed", format!("seed + member index, seed = {seed}")),
        ("members", wins.len().to_string()),
        ("diverged", diverged.to_string()),
    ];
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * tau).collect();
    let csv = match cfg.str("metric") {
        "error" => {
            let mode = match ds.system {
                System::Vbe => Normalization::Relative,
                System::Kse => {
                    let train = ds.snapshots(true);
                    Normalization::Attractor(attractor_scale(train.view(), cfg.get("attractor_pairs")?, seed)?)
                }
            };
            let tv: Vec<_> = truth.iter().map(|a| a.view()).collect();
            let mv: Vec<_> = model.iter().map(|a| a.view()).collect();
            let err = relative_error(&tv, &mv, &times, mode)?;
            let norm = match mode {
                Normalization::Relative => "mean of ||u - v||_2 / ||u||_2".to_string(),
                Normalization::Attractor(d) => format!("mean of ||u - v||_2^2 / D, D = {}", num(d)),
            };
            comments.insert(0, ("quantity", "ensemble error".into()));
            comments.push(("norm", norm));
            comments.push(("skipped_zero_norm", err.skipped.to_string()));
            let mut csv = Csv::new(&comments, &["time", "error"]);
            for (t, e) in err.times.iter().zip(&err.errors) {
                csv.row(&[num(*t), num(*e)]);
            }
            csv
        }
        "spectrum" => {
            let wanted: Vec<f64> = cfg.list("times")?;
            comments.insert(0, ("quantity", "E(k) = <|u_k|^2 / 2>, one-sided, 1/d forward transform".into()));
            let mut csv = Csv::new(&comments, &["time", "k", "e_true", "e_model"]);
            for t in wanted {
                let i = (t / tau).round() as usize;
                if i > n || ((i as f64) * tau - t).abs() > 1e-9 * t.max(1.0) {
                    return Err(CliError::config(format!("time {t} is not a saved time within eval_horizon")));
                }
                let rows = |set: &[Array2<f64>]| stack(Axis(0), &set.iter().map(|a| a.row(i)).collect::<Vec<_>>());
                let et = energy_spectrum_rows(rows(&truth).expect("rows").view())?;
                let em = energy_spectrum_rows(rows(&model).expect("rows").view())?;
                for (k, (a, b)) in et.iter().zip(em.iter()).enumerate() {
                    csv.row(&[num(t), k.to_string(), num(*a), num(*b)]);
                }
            }
            csv
        }
        "pdf" => {
            let grid = parse_grid(cfg.str("pdf_grid"))?;
            let finite: Vec<_> = model.iter().filter(|m| m.iter().all(|v| v.is_finite())).map(|m| m.view()).collect();
            if finite.is_empty() {
                return Err(CliError::Divergence("every model rollout diverged".into()));
            }
            let tv: Vec<_> = truth.iter().map(|a| a.view()).collect();
            let p_model = joint_pdf(concatenate(Axis(0), &finite).expect("rows").view(), ds.length, &grid)?;
            let p_true = joint_pdf(concatenate(Axis(0), &tv).expect("rows").view(), ds.length, &grid)?;
            for (suffix, p) in [("model.snpd", &p_model), ("true.snpd", &p_true)] {
                let path = with_suffix(&out, suffix);
                p.save(&path).map_err(at(&path))?;
            }
            comments.insert(0, ("quantity", "KL divergence of joint (u_x, u_xx) PDFs, model against truth".into()));
            let mut csv = Csv::new(&comments, &["kl", "overlap", "model_out_of_range", "true_out_of_range"]);
            csv.row(&[
                num(kl_divergence(&p_model, &p_true)?),
                num(kl_overlap(&p_model, &p_true)?),
                num(p_model.out_of_range_fraction()),
                num(p_true.out_of_range_fraction()),
            ]);
            csv
        }
        other => return Err(CliError::config(format!("metric = {other}: expected error, spectrum or pdf"))),
    };
    csv.write(&out)?;
    println!("{}", out.display());
    let manifest = manifest_path(&out);
    cfg.write_manifest(&manifest)?;
    Ok(manifest)
}

pub(crate) fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
