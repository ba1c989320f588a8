//! Snapshot datasets: generation from the ground-truth solvers and the
//! `SNOD` binary format.
//!
//! Layout (little-endian): `b"SNOD"`, `u32` version (1), `u32 d`,
//! `u32 n_traj`, `u32 n_snap_per_traj`, `f64 tau`, `f64 L`, `u8` system tag
//! (0 = Burgers, 1 = Kuramoto-Sivashinsky), then `f64` values ordered
//! trajectory-major, snapshot-major, grid-minor. The train/test split lives
//! in the plain-text sidecar.

use std::fs;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{downsample, generate_vbe_ic, IcSpec, KseSolver, System, VbeSolver};
use crate::error::{Error, Result};
use crate::field::{check_grid, Field, Fourier};
use crate::io::*;

const MAGIC: &[u8; 4] = b"SNOD";
const VERSION: u32 = 1;

/// How a dataset is divided into training and test data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    /// The first `train` trajectories are training data, the rest test data.
    Trajectories { train: usize },
    /// Within every trajectory the first `train` snapshots are training data.
    Snapshots { train: usize },
}

impl Split {
    pub fn encode(&self) -> String {
        match self {
            Split::Trajectories { train } => format!("trajectories:{train}"),
            Split::Snapshots { train } => format!("snapshots:{train}"),
        }
    }

    pub fn decode(s: &str) -> Result<Self> {
        let (kind, n) = s
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("bad split '{s}'")))?;
        let train = n.trim().parse().map_err(|_| Error::Format(format!("bad split '{s}'")))?;
        match kind.trim() {
            "trajectories" => Ok(Split::Trajectories { train }),
            "snapshots" => Ok(Split::Snapshots { train }),
            _ => Err(Error::Format(format!("bad split '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    pub system: System,
    pub length: f64,
    pub tau: f64,
    /// One `n_snap x d` array per trajectory.
    pub trajectories: Vec<Array2<f64>>,
    pub split: Split,
}

impl SnapshotDataset {
    pub fn new(system: System, length: f64, tau: f64, trajectories: Vec<Array2<f64>>, split: Split) -> Result<Self> {
        let first = trajectories.first().ok_or(Error::Empty("dataset has no trajectories"))?;
        let shape = first.dim();
        check_grid(shape.1)?;
        if shape.0 == 0 {
            return Err(Error::Empty("trajectory has no snapshots"));
        }
        for t in &trajectories {
            if t.dim() != shape {
                return Err(Error::Shape { expected: shape.0 * shape.1, got: t.len() });
            }
        }
        Ok(Self { system, length, tau, trajectories, split })
    }

    pub fn dim(&self) -> usize {
        self.trajectories[0].ncols()
    }

    pub fn n_traj(&self) -> usize {
        self.trajectories.len()
    }

    pub fn n_snap(&self) -> usize {
        self.trajectories[0].nrows()
    }

    pub fn field(&self, traj: usize, snap: usize) -> Field {
        Field {
            values: self.trajectories[traj].row(snap).to_owned(),
            length: self.length,
            time: snap as f64 * self.tau,
        }
    }

    fn traj_range(&self, train: bool) -> std::ops::Range<usize> {
        match self.split {
            Split::Trajectories { train: n } => {
                let n = n.min(self.n_traj());
                if train { 0..n } else { n..self.n_traj() }
            }
            Split::Snapshots { .. } => 0..self.n_traj(),
        }
    }

    fn snap_range(&self, train: bool) -> std::ops::Range<usize> {
        match self.split {
            Split::Snapshots { train: n } => {
                let n = n.min(self.n_snap());
                if train { 0..n } else { n..self.n_snap() }
            }
            Split::Trajectories { .. } => 0..self.n_snap(),
        }
    }

    /// Consecutive `(u(t_i), u(t_i + tau))` pairs of the requested part.
    pub fn pairs(&self, train: bool) -> Vec<(ArrayView1<'_, f64>, ArrayView1<'_, f64>)> {
        let snaps = self.snap_range(train);
        let mut out = Vec::new();
        for t in self.traj_range(train) {
            let traj = &self.trajectories[t];
            for s in snaps.start..snaps.end.saturating_sub(1) {
                out.push((traj.row(s), traj.row(s + 1)));
            }
        }
        out
    }

    /// Contiguous test-part trajectories as `n_snap x d` views.
    pub fn segments(&self, train: bool) -> Vec<ndarray::ArrayView2<'_, f64>> {
        let snaps = self.snap_range(train);
        self.traj_range(train)
            .map(|t| self.trajectories[t].slice(ndarray::s![snaps.clone(), ..]))
            .filter(|v| v.nrows() > 0)
            .collect()
    }

    /// All snapshots of one part stacked into an `n x d` array.
    pub fn snapshots(&self, train: bool) -> Array2<f64> {
        let segs = self.segments(train);
        let views: Vec<_> = segs.iter().map(|v| v.view()).collect();
        if views.is_empty() {
            return Array2::zeros((0, self.dim()));
        }
        ndarray::concatenate(ndarray::Axis(0), &views).expect("congruent segments")
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(w, VERSION)?;
        write_u32(w, self.dim() as u32)?;
        write_u32(w, self.n_traj() as u32)?;
        write_u32(w, self.n_snap() as u32)?;
        write_f64(w, self.tau)?;
        write_f64(w, self.length)?;
        write_u8(w, self.system.tag())?;
        for t in &self.trajectories {
            write_f64s(w, t.iter())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(37 + 8 * self.n_traj() * self.n_snap() * self.dim());
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    /// Reads the binary payload; the split defaults to "everything is training data".
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, MAGIC)?;
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let d = read_u32(r)? as usize;
        let n_traj = read_u32(r)? as usize;
        let n_snap = read_u32(r)? as usize;
        let tau = read_f64(r)?;
        let length = read_f64(r)?;
        let system = System::from_tag(read_u8(r)?)?;
        let mut trajectories = Vec::with_capacity(n_traj);
        for _ in 0..n_traj {
            let v = read_f64s(r, n_snap * d)?;
            trajectories.push(Array2::from_shape_vec((n_snap, d), v).map_err(|e| Error::Format(e.to_string()))?);
        }
        expect_eof(r)?;
        Self::new(system, length, tau, trajectories, Split::Trajectories { train: n_traj })
    }

    /// Writes the binary file and its sidecar manifest.
    pub fn save(&self, path: &Path, extra: &[(String, String)]) -> Result<()> {
        let bytes = self.to_bytes();
        let mut f = BufWriter::new(fs::File::create(path)?);
        f.write_all(&bytes)?;
        f.flush()?;
        let mut entries = vec![
            ("system".to_string(), self.system.to_string()),
            ("d".to_string(), self.dim().to_string()),
            ("n_traj".to_string(), self.n_traj().to_string()),
            ("n_snap".to_string(), self.n_snap().to_string()),
            ("tau".to_string(), fmt_f64(self.tau)),
            ("length".to_string(), fmt_f64(self.length)),
            ("split".to_string(), self.split.encode()),
        ];
        entries.extend_from_slice(extra);
        write_kv(&sidecar_path(path), &[format!("sha256 {}", sha256_hex(&bytes))], &entries)
    }

    /// Reads a dataset file, taking the split from its sidecar when present.
    pub fn load(path: &Path) -> Result<Self> {
        let mut ds = Self::read_from(&mut BufReader::new(fs::File::open(path)?))?;
        let side = sidecar_path(path);
        if side.exists() {
            if let Some((_, v)) = read_kv(&side)?.into_iter().find(|(k, _)| k == "split") {
                ds.split = Split::decode(&v)?;
            }
        }
        Ok(ds)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut Cursor::new(bytes))
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

/// Burgers ensemble: many random initial conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct VbeParams {
    /// Grid size of the stored snapshots.
    pub d: usize,
    /// Grid size the solver runs on; snapshots are spectrally truncated to `d`.
    pub solver_d: usize,
    pub length: f64,
    pub viscosity: f64,
    pub dt: f64,
    pub horizon: f64,
    pub tau: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub peak_wavenumber: f64,
    pub seed: u64,
}

impl Default for VbeParams {
    fn default() -> Self {
        Self {
            d: 512,
            solver_d: 512,
            length: 1.0,
            viscosity: 8e-4,
            dt: 1e-3,
            horizon: 5.0,
            tau: 0.05,
            n_train: 1000,
            n_test: 100,
            peak_wavenumber: 10.0,
            seed: 0,
        }
    }
}

/// Kuramoto-Sivashinsky: one long trajectory after a discarded transient.
#[derive(Debug, Clone, PartialEq)]
pub struct KseParams {
    pub d: usize,
    pub length: f64,
    pub h: f64,
    pub transient: f64,
    pub horizon: f64,
    pub tau: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for KseParams {
    fn default() -> Self {
        Self {
            d: 64,
            length: 22.0,
            h: 0.05,
            transient: 500.0,
            horizon: 1e5,
            tau: 0.25,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetParams {
    Vbe(VbeParams),
    Kse(KseParams),
}

impl DatasetParams {
    pub fn system(&self) -> System {
        match self {
            DatasetParams::Vbe(_) => System::Vbe,
            DatasetParams::Kse(_) => System::Kse,
        }
    }
}

fn steps_per(interval: f64, step: f64) -> Result<usize> {
    if !(interval > 0.0 && step > 0.0) {
        return Err(Error::InvalidParameter(format!("interval {interval} / step {step}")));
    }
    Ok(((interval / step).round() as usize).max(1))
}

fn snapshot_count(horizon: f64, tau: f64) -> Result<usize> {
    if !(horizon >= 0.0) {
        return Err(Error::InvalidParameter(format!("horizon {horizon}")));
    }
    Ok((horizon / tau).round() as usize + 1)
}

pub fn generate_dataset(params: &DatasetParams) -> Result<SnapshotDataset> {
    match params {
        DatasetParams::Vbe(p) => generate_vbe(p),
        DatasetParams::Kse(p) => generate_kse(p),
    }
}

fn generate_vbe(p: &VbeParams) -> Result<SnapshotDataset> {
    check_grid(p.d)?;
    if p.solver_d < p.d {
        return Err(Error::InvalidParameter("solver grid coarser than output grid".into()));
    }
    let n_snap = snapshot_count(p.horizon, p.tau)?;
    let inner = steps_per(p.tau, p.dt)?;
    let solver = VbeSolver::new(p.solver_d, p.length, p.viscosity, p.tau / inner as f64)?;
    let fine = Fourier::new(p.solver_d)?;
    let coarse = Fourier::new(p.d)?;
    let n = p.n_train + p.n_test;
    if n == 0 {
        return Err(Error::Empty("no trajectories requested"));
    }
    let trajectories = (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = p.seed.wrapping_add(i as u64);
            let spec = IcSpec::normalized(p.peak_wavenumber, p.solver_d, p.length, seed)?;
            let mut u = generate_vbe_ic(&spec, p.solver_d, p.length)?;
            let mut out = Array2::zeros((n_snap, p.d));
            for s in 0..n_snap {
                if s > 0 {
                    u = solver
                        .advance(&u, inner)
                        .map_err(|_| Error::TrajectoryBlowUp { seed, time: s as f64 * p.tau })?;
                }
                let row = if p.solver_d == p.d {
                    u.values.clone()
                } else {
                    downsample(&fine, &coarse, u.values.view())
                };
                out.row_mut(s).assign(&row);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    SnapshotDataset::new(System::Vbe, p.length, p.tau, trajectories, Split::Trajectories { train: p.n_train })
}

/// Small random low-mode state used to start the Kuramoto-Sivashinsky run.
pub(crate) fn kse_seed_state(d: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = vec![Complex64::new(0.0, 0.0); d / 2 + 1];
    for z in c.iter_mut().take(5).skip(1) {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *z = Complex64::new(0.1 * re, 0.1 * im);
    }
    c
}

fn generate_kse(p: &KseParams) -> Result<SnapshotDataset> {
    check_grid(p.d)?;
    if !(p.train_fraction > 0.0 && p.train_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("train fraction {}", p.train_fraction)));
    }
    let n_snap = snapshot_count(p.horizon, p.tau)?;
    let inner = steps_per(p.tau, p.h)?;
    let solver = KseSolver::new(p.d, p.length, p.tau / inner as f64)?;
    let blow = |time: f64| Error::TrajectoryBlowUp { seed: p.seed, time };
    let mut v = kse_seed_state(p.d, p.seed);
    let transient_steps = (p.transient / solver.h()).round() as usize;
    solver.advance_hat(&mut v, transient_steps).map_err(|_| blow(0.0))?;
    let mut out = Array2::zeros((n_snap, p.d));
    let fourier = solver.fourier();
    for s in 0..n_snap {
        if s > 0 {
            solver.advance_hat(&mut v, inner).map_err(|_| blow(s as f64 * p.tau))?;
        }
        out.row_mut(s).assign(&Array1::from(fourier.inverse(&v)));
    }
    let train = ((n_snap as f64) * p.train_fraction).floor() as usize;
    SnapshotDataset::new(System::Kse, p.length, p.tau, vec![out], Split::Snapshots { train })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_vbe() -> VbeParams {
        VbeParams { d: 64, solver_d: 128, n_train: 2, n_test: 1, horizon: 0.1, ..Default::default() }
    }

    #[test]
    fn defaults_follow_the_protocols() {
        let v = VbeParams::default();
        assert_eq!((v.tau, v.horizon, v.n_train, v.n_test, v.d), (0.05, 5.0, 1000, 100, 512));
        let k = KseParams::default();
        assert_eq!((k.length, k.d, k.tau, k.train_fraction), (22.0, 64, 0.25, 0.8));
    }

    #[test]
    fn bookkeeping_two_by_three() {
        let p = VbeParams { d: 32, solver_d: 32, n_train: 2, n_test: 0, horizon: 0.1, ..Default::default() };
        let ds = generate_dataset(&DatasetParams::Vbe(p)).unwrap();
        assert_eq!(ds.n_traj() * ds.n_snap(), 6);
        for t in 0..2 {
            let times: Vec<f64> = (0..3).map(|s| ds.field(t, s).time).collect();
            assert_eq!(times, vec![0.0, 0.05, 0.1]);
        }
        assert_eq!(ds.pairs(true).len(), 4);
        assert!(ds.pairs(false).is_empty());
    }

    #[test]
    fn binary_round_trip_and_determinism() {
        let ds = generate_dataset(&DatasetParams::Vbe(tiny_vbe())).unwrap();
        let again = generate_dataset(&DatasetParams::Vbe(tiny_vbe())).unwrap();
        assert_eq!(ds.to_bytes(), again.to_bytes());
        let bytes = ds.to_bytes();
        assert_eq!(&bytes[..4], b"SNOD");
        assert_eq!(bytes.len(), 4 + 4 * 4 + 16 + 1 + 8 * 3 * 3 * 64);
        let back = SnapshotDataset::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.snod");
        ds.save(&path, &[("seed".into(), "0".into())]).unwrap();
        let loaded = SnapshotDataset::load(&path).unwrap();
        assert_eq!(loaded.split, Split::Trajectories { train: 2 });
        assert_eq!(loaded, ds);
        assert_eq!(loaded.pairs(false).len(), 2);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let ds = generate_dataset(&DatasetParams::Vbe(tiny_vbe())).unwrap();
        let mut bytes = ds.to_bytes();
        assert!(SnapshotDataset::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes.push(0);
        assert!(SnapshotDataset::from_bytes(&bytes).is_err());
        bytes[0] = b'X';
        assert!(SnapshotDataset::from_bytes(&bytes).is_err());
    }

    #[test]
    fn kse_split_is_chronological() {
        let p = KseParams { transient: 10.0, horizon: 24.75, ..Default::default() };
        let ds = generate_dataset(&DatasetParams::Kse(p)).unwrap();
        assert_eq!(ds.n_snap(), 100);
        assert_eq!(ds.split, Split::Snapshots { train: 80 });
        assert_eq!(ds.pairs(true).len(), 79);
        assert_eq!(ds.pairs(false).len(), 19);
        assert_eq!(ds.snapshots(false).nrows(), 20);
        assert!(ds.trajectories[0].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn split_codec() {
        for s in [Split::Trajectories { train: 3 }, Split::Snapshots { train: 80 }] {
            assert_eq!(Split::decode(&s.encode()).unwrap(), s);
        }
        assert!(Split::decode("junk").is_err());
    }
}
