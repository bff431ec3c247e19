//! Versioned TOML run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest Fock dimension 2^|Λ| accepted without `--override-guards`.
pub const MAX_SITES: usize = 12;

/// Largest tree order accepted without `--override-guards`.
pub const MAX_ORDER: usize = 9;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub batch: BatchConfig,
    #[serde(default)]
    pub multicomm: MulticommConfig,
    #[serde(default)]
    pub trees: TreeConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    /// Number of seeded cases; each suite has its own default.
    pub count: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MulticommConfig {
    pub orders: Vec<usize>,
    pub tree_decay_cases: usize,
}

impl Default for MulticommConfig {
    fn default() -> Self {
        MulticommConfig { orders: vec![2, 3], tree_decay_cases: 10 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    pub k_max: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { k_max: 7 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub l1: Vec<u32>,
    pub sweep: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig { l1: vec![2, 3], sweep: true }
    }
}

/// Disordered chain for the response suites.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub big_l: u32,
    pub l: u32,
    pub d: usize,
    pub beta: f64,
    /// Nearest-neighbour density coupling v in v n_x n_{x+e}.
    pub density: f64,
    pub lambda: Vec<f64>,
    pub realizations: usize,
    pub grid_points: usize,
    pub grid_step: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            big_l: 2,
            l: 1,
            d: 1,
            beta: 1.0,
            density: 1.0,
            lambda: vec![0.0, 0.5],
            realizations: 32,
            grid_points: 16,
            grid_step: 0.25,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub amplitude: f64,
    pub frequency: f64,
    pub duration: f64,
    pub time: f64,
    pub eta: f64,
    pub taylor_etas: Vec<f64>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig { amplitude: 0.5, frequency: 2.0, duration: 2.0, time: 2.5, eta: 1e-3, taylor_etas: vec![1e-1, 1e-2, 1e-3] }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub quadrature: f64,
    pub reconstruction: f64,
    pub psd: f64,
    pub symmetry: f64,
    pub odd_moment: f64,
    pub derivative: f64,
    pub linear_response: f64,
    pub slope_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            quadrature: 1e-8,
            reconstruction: 1e-8,
            psd: 1e-9,
            symmetry: 1e-9,
            odd_moment: 1e-9,
            derivative: 1e-6,
            linear_response: 1e-3,
            slope_margin: 0.9,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Debug)]
pub enum ConfigError {
    Schema(String),
    Guard(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Schema(m) => write!(f, "schema error: {m}"),
            ConfigError::Guard(m) => write!(f, "resource guard: {m}"),
        }
    }
}

impl RunConfig {
    /// Configuration with every block at its default.
    pub fn defaults(seed: u64) -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: Some(seed),
            batch: BatchConfig::default(),
            multicomm: MulticommConfig::default(),
            trees: TreeConfig::default(),
            convergence: ConvergenceConfig::default(),
            model: ModelConfig::default(),
            field: FieldConfig::default(),
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Schema(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Schema(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return bad(&format!("schema_version {} is not {SCHEMA_VERSION}", self.schema_version));
        }
        let m = &self.model;
        if m.d == 0 || m.l >= m.big_l {
            return bad("model needs d ≥ 1 and an active box strictly inside the working box");
        }
        if !(m.beta > 0.0) || m.lambda.iter().any(|v| !(*v >= 0.0)) || !m.density.is_finite() {
            return bad("model needs β > 0, λ ≥ 0 and a finite density coupling");
        }
        if m.realizations == 0 || m.grid_points == 0 || !(m.grid_step > 0.0) {
            return bad("model needs at least one realization and a nonempty time grid");
        }
        let f = &self.field;
        if !(f.duration > 0.0) || !f.eta.is_finite() || f.eta == 0.0 || f.taylor_etas.len() < 2 || f.taylor_etas.iter().any(|e| !(*e > 0.0)) {
            return bad("field needs a positive duration, η ≠ 0 and at least two positive Taylor steps");
        }
        if self.multicomm.orders.contains(&0) || self.trees.k_max == 0 {
            return bad("tree orders must be positive");
        }
        Ok(())
    }

    /// Fock dimension and tree-order guards.
    pub fn check_guards(&self) -> Result<(), ConfigError> {
        let sites = (2 * self.model.big_l as usize + 1).pow(self.model.d as u32);
        if sites > MAX_SITES {
            return Err(ConfigError::Guard(format!("Fock dimension 2^{sites} exceeds 2^{MAX_SITES}")));
        }
        let k = self.multicomm.orders.iter().copied().chain([self.trees.k_max]).max().unwrap_or(0);
        if k > MAX_ORDER {
            return Err(ConfigError::Guard(format!("tree order {k} exceeds {MAX_ORDER}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse("schema_version = 1\nseed = 4\n").unwrap();
        assert_eq!(cfg, RunConfig::defaults(4));
    }

    #[test]
    fn rejects_bad_schema() {
        assert!(matches!(RunConfig::parse("seed = 1\n"), Err(ConfigError::Schema(_))));
        assert!(matches!(RunConfig::parse("schema_version = 1\n[model]\nbeta = -1.0\n"), Err(ConfigError::Schema(_))));
        assert!(matches!(RunConfig::parse("schema_version = 1\n[model]\nl = 2\n"), Err(ConfigError::Schema(_))));
        assert!(matches!(RunConfig::parse("schema_version = 1\n[field]\nspeed = 1.0\n"), Err(ConfigError::Schema(_))));
    }

    #[test]
    fn guards_bound_dimension_and_order() {
        let mut cfg = RunConfig::defaults(0);
        assert!(cfg.check_guards().is_ok());
        cfg.model.big_l = 6;
        assert!(matches!(cfg.check_guards(), Err(ConfigError::Guard(_))));
        cfg.model.big_l = 2;
        cfg.multicomm.orders = vec![10];
        assert!(matches!(cfg.check_guards(), Err(ConfigError::Guard(_))));
    }
}
