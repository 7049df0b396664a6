//! Scenario configuration file (TOML).
//!
//! ```toml
//! t_f_hours = 5.0
//! rebalance_steps = 5
//! battery_unit_kw = 1.0
//! initial_kw = [20.0, 25.0]
//! correlation = [[1.0, 0.6], [0.6, 1.0]]
//! n_paths = 10000
//! seed = 42
//! case_filter = "ge,lt"        # optional
//!
//! [[microgrid]]
//! label = "mg1"
//! demand_kw = 20.0
//! mu = 0.006
//! sigma = 0.03
//! ```
//!
//! Units are fixed by key name: kW for powers, hours for times, per-hour
//! rates for `mu` and `sigma`.

use std::path::Path;

use gridhedge_core::lattice::{LatticeEngine, DEFAULT_MAX_NODES};
use gridhedge_core::process::{CorrelationMatrix, GbmParams};
use gridhedge_core::{CaseLabel, GridEnsemble, MicrogridSpec, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::error::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrogridEntry {
    pub label: String,
    pub demand_kw: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    #[default]
    Tree,
    Recombining,
}

fn default_paths() -> usize {
    10_000
}
fn default_resamples() -> usize {
    1000
}
fn default_level() -> f64 {
    0.95
}
fn default_max_nodes() -> usize {
    DEFAULT_MAX_NODES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub t_f_hours: f64,
    pub rebalance_steps: usize,
    pub battery_unit_kw: f64,
    pub initial_kw: Vec<f64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_filter: Option<String>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    /// Defaults to 50 candidates per requested path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_attempts: Option<usize>,
    #[serde(default)]
    pub engine: EngineKind,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    pub correlation: Vec<Vec<f64>>,
    #[serde(rename = "microgrid")]
    pub microgrids: Vec<MicrogridEntry>,
}

impl ConfigFile {
    /// Two microgrids, hourly rebalancing over five hours.
    pub fn reference() -> Self {
        ConfigFile {
            t_f_hours: 5.0,
            rebalance_steps: 5,
            battery_unit_kw: 1.0,
            initial_kw: vec![20.0, 25.0],
            n_paths: default_paths(),
            seed: 0,
            case_filter: None,
            bootstrap_resamples: default_resamples(),
            ci_level: default_level(),
            max_attempts: None,
            engine: EngineKind::Tree,
            max_nodes: DEFAULT_MAX_NODES,
            correlation: vec![vec![1.0, 0.6], vec![0.6, 1.0]],
            microgrids: vec![
                MicrogridEntry { label: "mg1".into(), demand_kw: 20.0, mu: 0.006, sigma: 0.03 },
                MicrogridEntry { label: "mg2".into(), demand_kw: 25.0, mu: 0.005, sigma: 0.04 },
            ],
        }
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::Input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, Failure> {
        toml::to_string(self).map_err(|e| Failure::Input(format!("config: {e}")))
    }

    pub fn grid(&self) -> Result<GridEnsemble, Failure> {
        let specs = self
            .microgrids
            .iter()
            .map(|m| MicrogridSpec::new(m.label.clone(), m.demand_kw, GbmParams::new(m.mu, m.sigma)?))
            .collect::<Result<Vec<_>, gridhedge_core::Error>>()?;
        let corr = CorrelationMatrix::new(&self.correlation)?;
        Ok(GridEnsemble::new(specs, corr, self.battery_unit_kw)?)
    }

    pub fn engine(&self) -> LatticeEngine {
        match self.engine {
            EngineKind::Tree => LatticeEngine::Tree { max_nodes: self.max_nodes },
            EngineKind::Recombining => LatticeEngine::Recombining,
        }
    }

    pub fn case_label(&self) -> Result<Option<CaseLabel>, Failure> {
        self.case_filter
            .as_deref()
            .map(|s| s.parse::<CaseLabel>().map_err(Failure::from))
            .transpose()
    }

    pub fn scenario(&self) -> Result<ScenarioConfig, Failure> {
        let cfg = ScenarioConfig {
            grid: self.grid()?,
            initial: self.initial_kw.clone(),
            t_f: self.t_f_hours,
            rebalance_steps: self.rebalance_steps,
            n_paths: self.n_paths,
            seed: self.seed,
            case_filter: self.case_label()?,
            bootstrap_resamples: self.bootstrap_resamples,
            ci_level: self.ci_level,
            max_attempts: self
                .max_attempts
                .unwrap_or_else(|| self.n_paths.saturating_mul(50).max(1000)),
            engine: self.engine(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip() {
        let mut c = ConfigFile::reference();
        c.case_filter = Some("ge,lt".into());
        c.max_attempts = Some(12345);
        let text = c.to_toml().unwrap();
        assert_eq!(ConfigFile::parse(&text).unwrap(), c);
        c.scenario().unwrap();
    }

    #[test]
    fn defaults_fill_in() {
        let text = r#"
            t_f_hours = 5.0
            rebalance_steps = 5
            battery_unit_kw = 1.0
            initial_kw = [20.0]
            correlation = [[1.0]]
            [[microgrid]]
            label = "a"
            demand_kw = 20.0
            mu = 0.0
            sigma = 0.03
        "#;
        let c = ConfigFile::parse(text).unwrap();
        assert_eq!(c.n_paths, 10_000);
        assert_eq!(c.engine, EngineKind::Tree);
        assert_eq!(c.scenario().unwrap().max_attempts, 500_000);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(ConfigFile::parse("t_f_hours = 5.0\nbogus = 1"), Err(Failure::Input(_))));
        let mut c = ConfigFile::reference();
        c.correlation = vec![vec![1.0, 1.5], vec![1.5, 1.0]];
        assert!(c.scenario().is_err());
        let mut c = ConfigFile::reference();
        c.microgrids[0].sigma = 0.0;
        assert!(c.scenario().is_err());
        let mut c = ConfigFile::reference();
        c.case_filter = Some("ge".into());
        assert!(c.scenario().is_err());
    }
}
