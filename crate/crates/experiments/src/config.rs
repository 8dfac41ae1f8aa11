//! Run configuration: TOML files with named presets and overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use kslocal_core::scheme::{Motility, Schedule, SchemeError, SchemeParams, DEFAULT_SOLVER_TOL};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("unknown preset {0:?} (available: {list})", list = preset_names().collect::<Vec<_>>().join(", "))]
    UnknownPreset(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Testcase {
    Testcase1,
    Testcase2,
    Testcase3,
    Testcase4,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeshConfig {
    /// Uniform grid of `(0, length)`.
    Interval {
        cells: usize,
        #[serde(default = "one")]
        length: f64,
    },
    Disk {
        radius: f64,
        boundary_points: usize,
        #[serde(default = "default_zeta")]
        zeta: f64,
    },
    Square {
        side: f64,
        points_per_side: usize,
        #[serde(default = "default_zeta")]
        zeta: f64,
    },
    Gmsh {
        path: PathBuf,
        #[serde(default = "default_zeta")]
        zeta: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_zeta() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MotilityConfig {
    Exponential,
    Algebraic { c: f64, k: f64 },
}

impl From<MotilityConfig> for Motility {
    fn from(m: MotilityConfig) -> Self {
        match m {
            MotilityConfig::Exponential => Motility::Exponential,
            MotilityConfig::Algebraic { c, k } => Motility::Algebraic { c, k },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    #[serde(default = "exponential")]
    pub motility: MotilityConfig,
}

fn exponential() -> MotilityConfig {
    MotilityConfig::Exponential
}

/// A fine time step used on `[0, until]` before switching to `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialLayer {
    pub dt: f64,
    pub until: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub initial_layer: Option<InitialLayer>,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
}

fn default_tol() -> f64 {
    DEFAULT_SOLVER_TOL
}

impl TimeConfig {
    pub fn schedule(&self) -> Result<Schedule, SchemeError> {
        match self.initial_layer {
            Some(layer) => Schedule::two_phase(layer.dt, layer.until, self.dt, self.t_final),
            None => Schedule::uniform(self.dt, self.t_final),
        }
    }
}

/// Initial data as expressions or named formulas; see [`crate::initial`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub u: String,
    pub v: String,
    /// Value of the variable `mu` in the expressions.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_quadrature")]
    pub quadrature_order: usize,
}

fn default_quadrature() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Keep every `stride`-th observable record.
    #[serde(default = "one_usize")]
    pub stride: usize,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "yes")]
    pub dual_norm: bool,
}

fn one_usize() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// Levels of the grid refinement study; the mesh section gives the
/// reference grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preparedness {
    /// Stationary `v0` for the given `u0`.
    Swp,
    /// Constant `v0 = <u0> / beta`.
    Wp,
    /// `v0 = 0`.
    Ip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    pub data: Vec<Preparedness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstabilityConfig {
    /// Multiples of the discrete stability threshold.
    pub factors: Vec<f64>,
    /// Formulas for `v0`, with `u0 = mu`.
    pub perturbations: Vec<String>,
    /// Start of the window where the relative entropy decay is fitted.
    #[serde(default = "default_transient")]
    pub transient: f64,
    /// The fit stops once the relative entropy falls below this fraction of
    /// its initial value.
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_transient() -> f64 {
    10.0
}

fn default_floor() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub testcase: Testcase,
    #[serde(default)]
    pub seed: u64,
    pub mesh: MeshConfig,
    pub model: ModelConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    pub output: OutputConfig,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub instability: Option<InstabilityConfig>,
}

const REQUIRED: &[&str] = &[
    "testcase",
    "mesh.kind",
    "model.eps",
    "model.delta",
    "model.beta",
    "time.dt",
    "time.t_final",
    "output.dir",
];

/// Shipped presets, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("testcase1", include_str!("../presets/testcase1.toml")),
    ("testcase1-paper", include_str!("../presets/testcase1-paper.toml")),
    ("testcase2", include_str!("../presets/testcase2.toml")),
    ("testcase2-paper", include_str!("../presets/testcase2-paper.toml")),
    ("testcase3", include_str!("../presets/testcase3.toml")),
    ("testcase3-paper", include_str!("../presets/testcase3-paper.toml")),
    ("testcase4", include_str!("../presets/testcase4.toml")),
    ("testcase4-paper", include_str!("../presets/testcase4-paper.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

fn preset_table(name: &str) -> Result<Table, ConfigError> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
    Ok(text.parse::<Table>()?)
}

/// Values of `overlay` replace those of `base`; tables merge key by key.
fn merge(base: &mut Table, overlay: Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn missing_keys(table: &Table) -> Vec<String> {
    REQUIRED
        .iter()
        .filter(|path| {
            let mut node = Some(table);
            let parts: Vec<&str> = path.split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let Some(t) = node else { return true };
                match t.get(*part) {
                    Some(Value::Table(inner)) if i + 1 < parts.len() => node = Some(inner),
                    Some(_) if i + 1 == parts.len() => return false,
                    _ => return true,
                }
            }
            true
        })
        .map(|p| p.to_string())
        .collect()
}

/// Parses configuration text. A top-level `preset = "name"` starts from that
/// preset and applies the remaining keys on top.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut table: Table = text.parse()?;
    let mut merged = match table.remove("preset") {
        Some(Value::String(name)) => preset_table(&name)?,
        Some(other) => return Err(ConfigError::Invalid(format!("preset must be a name, got {other}"))),
        None => Table::new(),
    };
    merge(&mut merged, table);
    let missing = missing_keys(&merged);
    if !missing.is_empty() {
        return Err(ConfigError::MissingKeys(missing));
    }
    let config: RunConfig = Value::Table(merged).try_into()?;
    config.validate()?;
    Ok(config)
}

/// Reads a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

/// A preset by name, or a configuration file.
pub fn load(preset_or_path: &str, paper_scale: bool) -> Result<RunConfig, ConfigError> {
    if let Some(name) = preset_names().find(|n| *n == preset_or_path) {
        let name = if paper_scale && !name.ends_with("-paper") {
            format!("{name}-paper")
        } else {
            name.to_string()
        };
        return parse_config_str(&format!("preset = {name:?}"));
    }
    let config = parse_config(Path::new(preset_or_path))?;
    if paper_scale {
        log::warn!("--paper-scale only applies to presets; using {preset_or_path} as written");
    }
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        self.time.schedule()?;
        if let MeshConfig::Gmsh { path, .. } = &self.mesh {
            if !path.exists() {
                return invalid(format!("mesh file {} does not exist", path.display()));
            }
        }
        if self.output.stride == 0 {
            return invalid("output.stride must be at least 1".into());
        }
        let is_interval = matches!(self.mesh, MeshConfig::Interval { .. });
        match self.testcase {
            Testcase::Testcase1 => {
                let Some(conv) = &self.convergence else {
                    return invalid("testcase1 needs a [convergence] section".into());
                };
                let MeshConfig::Interval { cells, .. } = self.mesh else {
                    return invalid("testcase1 runs on an interval mesh".into());
                };
                if conv.levels.is_empty() {
                    return invalid("convergence.levels is empty".into());
                }
                for &n in &conv.levels {
                    if n == 0 || n >= cells || cells % n != 0 || !(cells / n).is_power_of_two() {
                        return invalid(format!(
                            "level {n} is not nested in the reference grid of {cells} cells by a power of two"
                        ));
                    }
                }
                if self.initial.is_none() {
                    return invalid("testcase1 needs an [initial] section".into());
                }
            }
            Testcase::Testcase2 => {
                let Some(sweep) = &self.sweep else {
                    return invalid("testcase2 needs a [sweep] section".into());
                };
                if !is_interval {
                    return invalid("testcase2 runs on an interval mesh".into());
                }
                if sweep.eps.iter().any(|&e| !(e > 0.0)) {
                    return invalid("sweep.eps values must be positive (eps = 0 is always the reference)".into());
                }
                if sweep.data.is_empty() {
                    return invalid("sweep.data is empty".into());
                }
                if self.initial.is_none() {
                    return invalid("testcase2 needs an [initial] section for u0".into());
                }
            }
            Testcase::Testcase3 => {
                if !matches!(self.mesh, MeshConfig::Disk { .. } | MeshConfig::Gmsh { .. }) {
                    return invalid("testcase3 runs on a disk mesh".into());
                }
                let Some(inst) = &self.instability else {
                    return invalid("testcase3 needs an [instability] section".into());
                };
                if inst.factors.is_empty() || inst.perturbations.is_empty() {
                    return invalid("instability.factors and instability.perturbations must not be empty".into());
                }
            }
            Testcase::Testcase4 | Testcase::Custom => {
                if self.initial.is_none() {
                    return invalid(format!("{:?} needs an [initial] section", self.testcase).to_lowercase());
                }
            }
        }
        Ok(())
    }

    pub fn scheme_params(&self) -> Result<SchemeParams, ConfigError> {
        let mut p = SchemeParams::new(
            self.model.eps,
            self.model.delta,
            self.model.beta,
            self.model.motility.into(),
            self.time.schedule()?,
        );
        p.solver_tol = self.time.solver_tol;
        p.validate()?;
        Ok(p)
    }

    /// Sections used by this testcase, for the run manifest.
    pub fn sections(&self) -> BTreeSet<&'static str> {
        let mut s: BTreeSet<&'static str> = ["mesh", "model", "time", "output"].into();
        if self.initial.is_some() {
            s.insert("initial");
        }
        if self.convergence.is_some() {
            s.insert("convergence");
        }
        if self.sweep.is_some() {
            s.insert("sweep");
        }
        if self.instability.is_some() {
            s.insert("instability");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in preset_names() {
            parse_config_str(&format!("preset = {name:?}")).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn empty_file_lists_required_keys() {
        let err = parse_config_str("").unwrap_err();
        let ConfigError::MissingKeys(keys) = err else { panic!("{err}") };
        assert_eq!(keys.len(), REQUIRED.len());
    }

    #[test]
    fn overrides_merge_into_presets() {
        let c = parse_config_str("preset = \"testcase1\"\n[model]\nbeta = 0.2\n").unwrap();
        assert_eq!(c.model.beta, 0.2);
        assert_eq!(c.model.eps, 1e-3);
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        assert!(parse_config_str("preset = \"testcase1\"\n[model]\nbeta_typo = 0.2\n").is_err());
        assert!(parse_config_str("preset = \"testcase1\"\n[model]\nbeta = 0.2\nbeta = 0.3\n").is_err());
        assert!(parse_config_str("preset = \"testcase1\"\n[model]\nbeta = \"high\"\n").is_err());
        assert!(matches!(
            parse_config_str("preset = \"nope\""),
            Err(ConfigError::UnknownPreset(_))
        ));
    }
}
