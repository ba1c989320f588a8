use std::path::PathBuf;

use ndarray::Array1;
use snode_core::node::{LinearBranch, RhsModel};
use snode_core::spectral::central_difference_stencil;

use super::load_model;
use crate::config::{manifest_path, Resolved};
use crate::error::{CliError, CliResult};
use crate::output::{num, Csv};

/// `<a, b> / (|a| |b|)` after centring the shorter stencil in a zero-padded
/// copy of the longer one. Zero if either is all zeros.
pub fn cosine_similarity(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let w = a.len().max(b.len());
    let (a, b) = (centred(a, w), centred(b, w));
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

fn centred(t: &Array1<f64>, w: usize) -> Array1<f64> {
    let mut out = Array1::zeros(w);
    let off = (w - t.len()) / 2;
    out.slice_mut(ndarray::s![off..off + t.len()]).assign(t);
    out
}

/// Taps of the model's linear branch at offsets `-r..=r`.
fn model_taps(model: &RhsModel, r: usize) -> Option<Array1<f64>> {
    match &model.linear {
        LinearBranch::None => None,
        LinearBranch::Learned(s) => Some(s.effective_taps()),
        LinearBranch::Fixed(a) => {
            let d = a.nrows();
            Some(Array1::from_shape_fn(2 * r + 1, |i| a[[0, (d + i - r) % d]]))
        }
    }
}

fn fmt_taps(t: &Array1<f64>) -> String {
    let cells: Vec<String> = t.iter().map(|v| format!("{v:.1}")).collect();
    format!("[{}]", cells.join(", "))
}

pub(crate) fn run(cfg: &mut Resolved) -> CliResult<PathBuf> {
    let system = cfg.system();
    let viscosity: f64 = cfg.get("viscosity")?;
    let model = match cfg.optional_path("checkpoint") {
        Some(_) => Some(load_model(cfg)?),
        None => None,
    };
    let (d, length) = match &model {
        Some(m) => (m.dim(), m.length),
        None => (cfg.get("grid")?, cfg.get("length")?),
    };
    let optimal = central_difference_stencil(system, d, length, viscosity);
    let learned = model.as_ref().and_then(|m| {
        let width = m.stencil().map_or(optimal.len(), |s| s.width());
        model_taps(m, width / 2)
    });
    if model.is_some() && learned.is_none() {
        return Err(CliError::config("checkpoint is a nonlinear model and has no linear branch"));
    }

    let width = learned.as_ref().map_or(optimal.len(), |l| l.len().max(optimal.len()));
    let half = width / 2;
    let mut header = vec!["row".to_string()];
    header.extend((0..width).map(|i| format!("t{:+}", i as i64 - half as i64)));
    header.push("cosine".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(
        &[
            ("quantity", "linear-branch stencil taps by offset".into()),
            ("system", system.to_string()),
            ("grid", format!("d = {d}, L = {}", num(length))),
        ],
        &header,
    );
    let row = |name: &str, t: &Array1<f64>, cos: f64| {
        let mut cells = vec![name.to_string()];
        cells.extend(centred(t, width).iter().map(|v| num(*v)));
        cells.push(num(cos));
        cells
    };
    csv.row(&row("optimal", &optimal, 1.0));
    println!("optimal  {}", fmt_taps(&optimal));
    if let Some(l) = &learned {
        let cos = cosine_similarity(l, &optimal);
        csv.row(&row("learned", l, cos));
        println!("learned  {}", fmt_taps(l));
        println!("cosine   {cos:.6}");
    }
    let out = cfg.path("output");
    csv.write(&out)?;
    let manifest = manifest_path(&out);
    cfg.write_manifest(&manifest)?;
    Ok(manifest)
}
