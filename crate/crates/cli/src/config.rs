use std::path::Path;

use bdkf::experiments::{BenchConfig, DecouplingConfig, SpeckleConfig};
use bdkf::model::{GeneratorDoc, SystemDoc};
use bdkf::steady_state::IterOptions;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Contents of a `--config` file, and of every JSON sidecar.
///
/// `system` entries inside `config` may be inline documents or paths to
/// one; sidecars always hold the resolved inline form.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config: Value,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Flag overrides shared by all subcommands. Flags win over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub beta: Option<f64>,
    pub n: Option<usize>,
    pub horizon: Option<usize>,
    pub seeds: Option<usize>,
    pub tol: Option<f64>,
}

impl Overrides {
    fn reject(&self, command: &str, allowed: &[&str]) -> Result<(), CliError> {
        let given = [
            ("beta", self.beta.is_some()),
            ("n", self.n.is_some()),
            ("horizon", self.horizon.is_some()),
            ("seeds", self.seeds.is_some()),
            ("tol", self.tol.is_some()),
        ];
        match given.iter().find(|(name, set)| *set && !allowed.contains(name)) {
            Some((name, _)) => Err(CliError::Config(format!("--{name} does not apply to `{command}`"))),
            None => Ok(()),
        }
    }
}

fn parse_section<T: DeserializeOwned + Default>(v: Value) -> Result<T, CliError> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("config: {e}")))
}

/// Inline document, or a path to one (relative paths resolve against `base`).
fn resolve_system(v: Value, base: &Path) -> Result<SystemDoc, CliError> {
    match v {
        Value::String(p) => {
            let path = base.join(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("reading system {}: {e}", path.display())))?;
            SystemDoc::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
        v => serde_json::from_value(v).map_err(|e| CliError::Config(format!("config.system: {e}"))),
    }
}

fn chain(beta: f64, n: usize) -> SystemDoc {
    SystemDoc {
        n,
        c: None,
        d: None,
        r: None,
        input_cov: None,
        subsystems: Vec::new(),
        generator: Some(GeneratorDoc::IdenticalChain { beta }),
    }
}

fn override_system(doc: &mut SystemDoc, o: &Overrides) -> Result<(), CliError> {
    if let Some(n) = o.n {
        doc.n = n;
    }
    if let Some(b) = o.beta {
        match &mut doc.generator {
            Some(GeneratorDoc::IdenticalChain { beta }) => *beta = b,
            _ => return Err(CliError::Config("--beta needs an identical_chain generator".into())),
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateFile {
    system: Value,
    #[serde(default = "default_horizon")]
    horizon: usize,
    #[serde(default)]
    x0: Option<Vec<f64>>,
}

fn default_horizon() -> usize {
    100
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateConfig {
    pub system: SystemDoc,
    pub horizon: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl SimulateConfig {
    pub fn from_parts(v: Value, base: &Path, o: &Overrides) -> Result<Self, CliError> {
        o.reject("simulate", &["beta", "n", "horizon"])?;
        let mut cfg = if v.is_null() {
            Self { system: chain(0.1, 4), horizon: default_horizon(), x0: None }
        } else {
            let f: SimulateFile =
                serde_json::from_value(v).map_err(|e| CliError::Config(format!("config: {e}")))?;
            Self { system: resolve_system(f.system, base)?, horizon: f.horizon, x0: f.x0 }
        };
        override_system(&mut cfg.system, o)?;
        if let Some(h) = o.horizon {
            cfg.horizon = h;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SteadyFile {
    system: Value,
    #[serde(default)]
    iter: IterOptions,
    #[serde(default = "yes")]
    with_full: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyConfig {
    pub system: SystemDoc,
    pub iter: IterOptions,
    /// Also solve the full Kalman steady state (dense).
    pub with_full: bool,
}

impl SteadyConfig {
    pub fn from_parts(v: Value, base: &Path, o: &Overrides) -> Result<Self, CliError> {
        o.reject("steady", &["beta", "n", "tol"])?;
        let mut cfg = if v.is_null() {
            Self { system: chain(0.1, 8), iter: IterOptions::default(), with_full: true }
        } else {
            let f: SteadyFile = serde_json::from_value(v).map_err(|e| CliError::Config(format!("config: {e}")))?;
            Self { system: resolve_system(f.system, base)?, iter: f.iter, with_full: f.with_full }
        };
        override_system(&mut cfg.system, o)?;
        if let Some(t) = o.tol {
            cfg.iter.tol = t;
        }
        cfg.iter.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn decouple_config(v: Value, o: &Overrides) -> Result<DecouplingConfig, CliError> {
    o.reject("decouple", &["beta", "n", "tol"])?;
    let mut cfg: DecouplingConfig = parse_section(v)?;
    if let Some(b) = o.beta {
        cfg.betas = vec![b];
    }
    if let Some(n) = o.n {
        cfg.ns = vec![n];
    }
    if let Some(t) = o.tol {
        cfg.iter.tol = t;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn speckle_config(v: Value, o: &Overrides) -> Result<SpeckleConfig, CliError> {
    o.reject("speckle", &["n", "horizon", "seeds"])?;
    let mut cfg: SpeckleConfig = parse_section(v)?;
    if let Some(n) = o.n {
        cfg.n_pixels = n;
    }
    if let Some(h) = o.horizon {
        cfg.horizon = h;
    }
    if let Some(s) = o.seeds {
        cfg.seeds = s;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn bench_config(v: Value, o: &Overrides) -> Result<BenchConfig, CliError> {
    o.reject("bench", &["n"])?;
    let mut cfg: BenchConfig = parse_section(v)?;
    if let Some(n) = o.n {
        cfg.ns_fast = vec![n];
        cfg.ns_full = vec![n];
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}
