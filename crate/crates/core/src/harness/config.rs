//! Experiment configuration, read from TOML with one flat table per module.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{RateKernel, RateTable};
use crate::meanfield::MeanFieldParams;
use crate::state::{InitScheme, TagPlacement};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Independent,
    ZeroRange,
    Inclusion,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub model: ModelName,
    pub b: Option<f64>,
    pub d: Option<f64>,
    /// CSV matrix `c(k, l)`, rows `k` and columns `l` from 0.
    pub table: Option<PathBuf>,
    /// Declared sublinearity constant for tables.
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub rho: f64,
    /// Lattice sizes, strictly increasing.
    pub sites: Vec<u64>,
    /// Fixed particle number; defaults to `floor(rho L)` per size.
    pub particles: Option<u64>,
    pub tag: TagPlacement,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            rho: 1.0,
            sites: vec![100],
            particles: None,
            tag: TagPlacement::Fixed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t_max: f64,
    /// Observation times; defaults to `[t_max]`.
    pub obs: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            obs: Vec::new(),
            n_paths: 1000,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanFieldSection {
    pub tol: f64,
    pub epsilon_tail: f64,
    pub eps_mass: f64,
    /// Output grid spacing; also the interpolation grid of the limit chain.
    pub dt: f64,
    /// `k,f_k` CSV; Poisson(rho) when absent.
    pub f0: Option<PathBuf>,
}

impl Default for MeanFieldSection {
    fn default() -> Self {
        let p = MeanFieldParams::default();
        Self {
            tol: p.tol,
            epsilon_tail: p.epsilon_tail,
            eps_mass: p.eps_mass,
            dt: 0.01,
            f0: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub sites: u64,
    pub particles: u64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { sites: 3, particles: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    /// Measure `err1` from untagged ensembles.
    pub empirical: bool,
    /// Measure `errW` from tagged ensembles.
    pub tagged: bool,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            empirical: true,
            tagged: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSection,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub meanfield: MeanFieldSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if cfg.run.obs.is_empty() {
            cfg.run.obs = vec![cfg.run.t_max];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> Result<()> {
        let s = &self.system;
        if !(s.rho > 0.0 && s.rho.is_finite()) {
            return Err(config_err(format!("system.rho = {} must be positive", s.rho)));
        }
        if s.sites.is_empty() {
            return Err(config_err("system.sites is empty"));
        }
        if s.sites.iter().any(|&l| l < 2) {
            return Err(config_err("every entry of system.sites must be >= 2"));
        }
        if s.sites.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("system.sites must be strictly increasing"));
        }
        for &l in &s.sites {
            let n = self.particles(l);
            if n == 0 {
                return Err(config_err(format!("no particles at L = {l}; raise rho")));
            }
            if n as f64 > s.rho * l as f64 {
                return Err(config_err(format!("N = {n} exceeds rho L = {} at L = {l}", s.rho * l as f64)));
            }
        }
        let r = &self.run;
        if !(r.t_max >= 0.0 && r.t_max.is_finite()) {
            return Err(config_err("run.t_max must be finite and >= 0"));
        }
        if r.obs.iter().any(|&t| !(t >= 0.0 && t <= r.t_max)) {
            return Err(config_err("run.obs must lie in [0, t_max]"));
        }
        if r.obs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("run.obs must be strictly increasing"));
        }
        if r.n_paths == 0 {
            return Err(config_err("run.n_paths must be >= 1"));
        }
        let m = &self.meanfield;
        if !(m.tol > 0.0 && m.epsilon_tail > 0.0 && m.eps_mass > 0.0 && m.dt > 0.0) {
            return Err(config_err("meanfield tolerances and dt must be positive"));
        }
        let k = &self.kernel;
        let need = |name: &str, v: Option<f64>| v.ok_or_else(|| config_err(format!("kernel.{name} is required")));
        match k.model {
            ModelName::Independent => {}
            ModelName::ZeroRange => {
                need("b", k.b)?;
            }
            ModelName::Inclusion => {
                need("d", k.d)?;
            }
            ModelName::Table => {
                if k.table.is_none() {
                    return Err(config_err("kernel.table is required"));
                }
            }
        }
        Ok(())
    }

    /// `N` for lattice size `L`: the configured value or `floor(rho L)`.
    pub fn particles(&self, sites: u64) -> u64 {
        self.system
            .particles
            .unwrap_or_else(|| (self.system.rho * sites as f64).floor() as u64)
    }

    pub fn kernel(&self) -> Result<RateKernel> {
        let k = &self.kernel;
        match k.model {
            ModelName::Independent => Ok(RateKernel::independent_walkers()),
            ModelName::ZeroRange => RateKernel::zero_range(k.b.unwrap_or_default()),
            ModelName::Inclusion => RateKernel::inclusion(k.d.unwrap_or_default()),
            ModelName::Table => {
                let path = self.resolve(k.table.as_deref().unwrap_or(Path::new("")));
                let table = RateTable::from_csv(&path)?;
                RateKernel::table(table, k.bound)
            }
        }
    }

    pub fn init_scheme(&self) -> InitScheme {
        InitScheme { tag: self.system.tag }
    }

    pub fn meanfield_params(&self) -> MeanFieldParams {
        MeanFieldParams {
            tol: self.meanfield.tol,
            epsilon_tail: self.meanfield.epsilon_tail,
            eps_mass: self.meanfield.eps_mass,
            ..MeanFieldParams::default()
        }
    }

    /// Uniform grid from 0 to `t_max` with spacing at most `meanfield.dt`.
    pub fn meanfield_grid(&self) -> Vec<f64> {
        let t = self.run.t_max;
        if t == 0.0 {
            return vec![0.0];
        }
        let n = (t / self.meanfield.dt).ceil().max(1.0) as usize;
        (0..=n).map(|i| if i == n { t } else { i as f64 * t / n as f64 }).collect()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }
}
