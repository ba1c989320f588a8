//! Flat `key = value` run configuration.
//!
//! A config file is a list of `key = value` lines. `include = other.cfg`
//! splices another file in place (paths relative to the including file);
//! later lines win. Every key must appear in [`KEYS`]. Values spelled `auto`
//! are resolved from the system and variant when a command starts, and the
//! fully resolved table is what gets written to the run manifest.

use std::collections::BTreeMap;
use std::env;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use snode_core::diff::WeightInit;
use snode_core::io::{file_sha256, fmt_f64, parse_kv, write_kv};
use snode_core::node::{TrainConfig, Variant};
use snode_core::System;

use crate::error::{CliError, CliResult};

pub struct KeySpec {
    pub name: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
    /// The value is a convention of this implementation rather than a
    /// documented experimental setting.
    pub assumed: bool,
}

const fn key(name: &'static str, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec { name, default, doc, assumed: false }
}

const fn assumed(name: &'static str, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec { name, default, doc, assumed: true }
}

pub const KEYS: &[KeySpec] = &[
    key("system", "vbe", "vbe or kse"),
    key("variant", "fixed-linear", "nonlinear, fixed-linear or learned-linear"),
    key("seed", "0", "master seed for data, initialization and shuffling"),
    key("threads", "0", "worker threads, 0 for all cores"),
    key("data_dir", "auto", "artifact root; SNODE_DATA_DIR or ./snode-data"),
    // data generation
    key("grid", "auto", "stored grid points (vbe 512, kse 64)"),
    key("solver_grid", "auto", "grid the reference solver runs on (defaults to grid)"),
    key("length", "auto", "domain length (vbe 1, kse 22)"),
    key("viscosity", "0.0008", "Burgers viscosity"),
    key("dt", "auto", "solver step (vbe 1e-3, kse 0.05)"),
    key("horizon", "auto", "simulated time per trajectory (vbe 5, kse 1e5)"),
    assumed("transient", "500", "discarded kse transient"),
    key("tau", "auto", "snapshot spacing (vbe 0.05, kse 0.25)"),
    key("train_ics", "1000", "vbe training initial conditions"),
    key("test_ics", "100", "vbe test initial conditions"),
    key("peak_wavenumber", "10", "vbe initial spectrum peak"),
    key("train_fraction", "0.8", "kse leading fraction used for training"),
    key("dataset", "auto", "dataset path (data_dir/<system>.snod)"),
    // model and training
    key("hidden", "200,200,200", "hidden layer widths"),
    key("activation", "auto", "hidden activation (vbe relu, kse sigmoid)"),
    key("weight_init", "normal:0:0.01", "network weight distribution"),
    key("linear_init", "auto", "stencil tap distribution"),
    key("stencil_width", "auto", "learned stencil width (vbe 3, kse 5)"),
    key("symmetric", "auto", "learned stencil uses taps + reversed taps (vbe true, kse false)"),
    key("epochs", "auto", "training epochs (vbe 1e4, kse 4e4)"),
    key("lr_nonlinear", "auto", "network learning-rate stages"),
    key("lr_linear", "1,0.1,0.01", "stencil learning-rate stages"),
    assumed("batch_size", "256", "minibatch size"),
    assumed("rollout_steps", "5", "RK4 substeps per snapshot interval"),
    key("checkpoint_every", "0", "epochs between checkpoint writes, 0 for end only"),
    key("checkpoint", "auto", "checkpoint path (data_dir/<system>-<variant>.snck)"),
    key("resume", "none", "checkpoint to continue training from"),
    key("stop_after", "none", "stop once this many epochs are done; resume later with the same epochs"),
    // evaluation
    key("metric", "error", "error, spectrum or pdf"),
    key("rhs", "checkpoint", "evaluate: checkpoint, true or data; rom: checkpoint or true"),
    key("times", "1,2,3,4,5", "spectrum output times"),
    key("noise", "none", "none, grid:EPS or fourier:EPS:KLO:KHI"),
    key("eval_ics", "auto", "evaluation initial conditions (vbe all, kse 20)"),
    key("eval_horizon", "auto", "evaluation rollout length, or full (vbe full, kse 100)"),
    assumed("attractor_pairs", "10000", "snapshot pairs for the attractor scale"),
    assumed("pdf_grid", "100:100:-2.5:2.5:-5:5", "joint PDF bins nx:ny:xlo:xhi:ylo:yhi"),
    // reduced-order models
    key("rom_mode", "nlg", "comma list of g, nlg, pg"),
    key("dp", "4..32", "resolved dimensions: a..b, a..b:step or a list"),
    key("sort", "eigenvalue", "eigenvalue or variance"),
    key("variance_split", "test", "snapshots used for variance ordering"),
    key("rom_time", "2000", "ROM integration time"),
    key("save_interval", "auto", "ROM save spacing (defaults to tau)"),
    assumed("max_step", "0.01", "upper bound on the ROM RK4 step"),
    key("nlg_iterations", "1", "fixed-point sweeps for the slaved modes"),
    key("reference", "dataset", "ROM PDF reference: dataset or model"),
    key("output", "auto", "primary CSV output"),
];

fn spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

/// Manifest-only keys: the command name and input hashes.
const META_PREFIX: &str = "input.";
const META_COMMAND: &str = "command";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Train,
    Evaluate,
    Rom,
    StencilReport,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Rom => "rom",
            Command::StencilReport => "stencil-report",
        })
    }
}

/// Explicitly given values, before defaults are applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    command: Option<String>,
    inputs: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        let value = value.into();
        if key == META_COMMAND {
            self.command = Some(value);
        } else if let Some(name) = key.strip_prefix(META_PREFIX) {
            self.inputs.insert(name.to_string(), value);
        } else if spec(key).is_some() {
            self.values.insert(key.to_string(), value);
        } else {
            return Err(CliError::config(format!("unknown key '{key}'")));
        }
        Ok(())
    }

    /// Applies a `KEY=VALUE` override.
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("expected KEY=VALUE, got '{pair}'")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg = Self::default();
        cfg.merge_file(path, &mut Vec::new())?;
        Ok(cfg)
    }

    fn merge_file(&mut self, path: &Path, stack: &mut Vec<PathBuf>) -> CliResult<()> {
        let canon = fs::canonicalize(path).map_err(|e| CliError::io(path, e))?;
        if stack.contains(&canon) {
            return Err(CliError::config(format!("include cycle through {}", path.display())));
        }
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let entries = parse_kv(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        stack.push(canon);
        for (k, v) in entries {
            if k == "include" {
                let base = path.parent().unwrap_or(Path::new("."));
                self.merge_file(&base.join(&v), stack)?;
            } else {
                self.set(&k, v).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            }
        }
        stack.pop();
        Ok(())
    }

    pub fn resolve(&self, command: Command) -> CliResult<Resolved> {
        if let Some(c) = &self.command {
            if c != &command.to_string() {
                return Err(CliError::config(format!("manifest is for '{c}', not '{command}'")));
            }
        }
        let explicit = |k: &str| -> String {
            self.values.get(k).cloned().unwrap_or_else(|| spec(k).expect("known key").default.to_string())
        };
        let system: System = parse_as("system", &explicit("system"))?;
        let variant: Variant = parse_as("variant", &explicit("variant"))?;
        let mut values = BTreeMap::new();
        values.insert("system".to_string(), system.to_string());
        values.insert("variant".to_string(), variant.to_string());
        let data_dir = match explicit("data_dir").as_str() {
            "auto" => env::var("SNODE_DATA_DIR").unwrap_or_else(|_| "snode-data".to_string()),
            d => d.to_string(),
        };
        values.insert("data_dir".to_string(), data_dir.clone());
        for k in KEYS {
            if values.contains_key(k.name) {
                continue;
            }
            let v = explicit(k.name);
            let v = if v == "auto" { auto_value(k.name, system, variant, command, &data_dir, &values)? } else { v };
            values.insert(k.name.to_string(), v);
        }
        Ok(Resolved { command, values, inputs: self.inputs.clone() })
    }
}

fn vbe_kse(system: System, vbe: &str, kse: &str) -> String {
    match system {
        System::Vbe => vbe.to_string(),
        System::Kse => kse.to_string(),
    }
}

fn join_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

/// Default for an `auto` key. Keys are visited in table order, so anything
/// referenced from `done` is already resolved.
fn auto_value(
    key: &str,
    system: System,
    variant: Variant,
    command: Command,
    data_dir: &str,
    done: &BTreeMap<String, String>,
) -> CliResult<String> {
    let dir = Path::new(data_dir);
    let path = |name: String| dir.join(name).to_string_lossy().into_owned();
    let sys = system.to_string();
    Ok(match key {
        "grid" => vbe_kse(system, "512", "64"),
        "solver_grid" => done["grid"].clone(),
        "length" => vbe_kse(system, "1.0", "22.0"),
        "dt" => vbe_kse(system, "0.001", "0.05"),
        "horizon" => vbe_kse(system, "5.0", "100000.0"),
        "tau" => vbe_kse(system, "0.05", "0.25"),
        "dataset" => path(format!("{sys}.snod")),
        "activation" => vbe_kse(system, "relu", "sigmoid"),
        "linear_init" => match system {
            // N(0, 1e4) taps make the first integrations stiff; the
            // variance is capped at 1 and the learning rate of 1 does the rest.
            System::Vbe => WeightInit::Normal { mean: 0.0, var: 1.0 }.to_string(),
            System::Kse => {
                let a = (1.0f64 / 3.0).sqrt();
                WeightInit::Uniform { lo: -a, hi: a }.to_string()
            }
        },
        "stencil_width" => vbe_kse(system, "3", "5"),
        "symmetric" => vbe_kse(system, "true", "false"),
        "epochs" => TrainConfig::defaults(system, variant).epochs.to_string(),
        "lr_nonlinear" => join_list(&TrainConfig::defaults(system, variant).lr_nonlinear),
        "checkpoint" => path(format!("{sys}-{variant}.snck")),
        "eval_ics" => vbe_kse(system, "all", "20"),
        "eval_horizon" => vbe_kse(system, "full", "100.0"),
        "save_interval" => done["tau"].clone(),
        "output" => match command {
            Command::Generate => path(format!("{sys}-generate.csv")),
            Command::Train => path(format!("{sys}-{variant}-loss.csv")),
            Command::Evaluate => {
                let rhs = output_label(&done["rhs"], variant);
                path(format!("{sys}-{rhs}-{}.csv", done["metric"]))
            }
            Command::Rom => {
                let rhs = output_label(&done["rhs"], variant);
                path(format!("{sys}-{rhs}-rom-{}.csv", done["sort"]))
            }
            Command::StencilReport => path(format!("{sys}-{variant}-stencil.csv")),
        },
        other => return Err(CliError::config(format!("key '{other}' has no automatic value"))),
    })
}

fn output_label(rhs: &str, variant: Variant) -> String {
    match rhs {
        "checkpoint" => variant.to_string(),
        other => other.to_string(),
    }
}

fn parse_as<T: FromStr>(key: &str, v: &str) -> CliResult<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| CliError::config(format!("{key} = {v}: {e}")))
}

/// Fully resolved configuration for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub command: Command,
    values: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
}

impl Resolved {
    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        parse_as(key, self.str(key))
    }

    pub fn bool(&self, key: &str) -> CliResult<bool> {
        match self.str(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(CliError::config(format!("{key} = {v}: expected true or false"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_as(key, s))
            .collect()
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.str(key))
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        match self.str(key) {
            "none" | "" => None,
            p => Some(PathBuf::from(p)),
        }
    }

    pub fn system(&self) -> System {
        self.get("system").expect("validated at resolve")
    }

    pub fn variant(&self) -> Variant {
        self.get("variant").expect("validated at resolve")
    }

    /// Records the hash of an input file and, when the config came from a
    /// manifest carrying a hash for it, checks that the file is unchanged.
    pub fn register_input(&mut self, name: &str, path: &Path) -> CliResult<()> {
        let hash = file_sha256(path).map_err(|e| match e {
            snode_core::Error::Io(io) => CliError::io(path, io),
            other => other.into(),
        })?;
        if let Some(expected) = self.inputs.get(name) {
            if expected != &hash {
                return Err(CliError::config(format!(
                    "input '{name}' ({}) has sha256 {hash}, manifest expects {expected}",
                    path.display()
                )));
            }
        }
        self.inputs.insert(name.to_string(), hash);
        Ok(())
    }

    pub fn manifest_entries(&self) -> Vec<(String, String)> {
        let mut out = vec![(META_COMMAND.to_string(), self.command.to_string())];
        out.extend(KEYS.iter().map(|k| (k.name.to_string(), self.values[k.name].clone())));
        out.extend(self.inputs.iter().map(|(k, v)| (format!("{META_PREFIX}{k}"), v.clone())));
        out
    }

    /// Writes the manifest that re-runs this command via `--config`.
    pub fn write_manifest(&self, path: &Path) -> CliResult<()> {
        let assumed: Vec<&str> = KEYS.iter().filter(|k| k.assumed).map(|k| k.name).collect();
        let comments = vec![
            format!("snode {} run manifest", self.command),
            format!("re-run with: snode {} --config <this file>", self.command),
            format!("assumed defaults: {}", assumed.join(", ")),
        ];
        write_kv(path, &comments, &self.manifest_entries()).map_err(|e| match e {
            snode_core::Error::Io(io) => CliError::io(path, io),
            other => other.into(),
        })
    }
}

/// Path of the run manifest that accompanies a command's primary output.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".run");
    PathBuf::from(s)
}

/// One line per key: name, default and description.
pub fn describe_keys() -> String {
    KEYS.iter()
        .map(|k| format!("{:<18} {:<22} {}{}\n", k.name, k.default, k.doc, if k.assumed { " [assumed]" } else { "" }))
        .collect()
}
