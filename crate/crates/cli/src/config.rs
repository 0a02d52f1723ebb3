//! JSON experiment configuration.

use std::path::Path;

use disg_core::{bsc, Belief, GameParams, MarkovModel};
use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub params: ParamsSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub itra: ItraSpec,
    pub simulate: Option<SimulateSpec>,
    pub bound: Option<BoundSpec>,
    pub finite_check: Option<FiniteCheckSpec>,
    pub sweep: Option<Vec<SweepEntry>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub num_states: usize,
    pub transition: Vec<Vec<f64>>,
    pub channels: [ChannelSpec; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    /// Binary symmetric channel, `p` on the diagonal.
    Bsc {
        p: f64,
    },
    Matrix {
        rows: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub delta: f64,
    pub costs: [f64; 2],
    #[serde(default = "default_tolerance")]
    pub vi_tolerance: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
}

fn default_tolerance() -> f64 {
    1e-9
}

fn default_iterations() -> usize {
    10_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub resolution: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { resolution: 200 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItraSpec {
    pub k: usize,
    #[serde(default = "default_agent")]
    pub agent: u8,
}

fn default_agent() -> u8 {
    1
}

impl Default for ItraSpec {
    fn default() -> Self {
        ItraSpec { k: 500, agent: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub horizon: usize,
    #[serde(default)]
    pub rollouts: usize,
    #[serde(default)]
    pub seed: u64,
    /// Common prior over the initial state.
    pub prior: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub epsilon_tilde: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteCheckSpec {
    pub horizon: usize,
    pub prior: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub label: Option<String>,
    pub cost: f64,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
}

impl SweepEntry {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            let mut s = format!("c={}", self.cost);
            if let Some(p) = self.p1 {
                s.push_str(&format!(" p1={p}"));
            }
            if let Some(p) = self.p2 {
                s.push_str(&format!(" p2={p}"));
            }
            s
        })
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                cfg.schema_version
            )));
        }
        if cfg.grid.resolution == 0 {
            return Err(CliError::Config(
                "grid resolution must be at least 1".into(),
            ));
        }
        if cfg.itra.k == 0 {
            return Err(CliError::Config("itra.k must be at least 1".into()));
        }
        if !matches!(cfg.itra.agent, 1 | 2) {
            return Err(CliError::Config("itra.agent must be 1 or 2".into()));
        }
        Ok(cfg)
    }

    fn channel(&self, index: usize, p_override: Option<f64>) -> Result<Vec<Vec<f64>>, CliError> {
        match (&self.model.channels[index], p_override) {
            (ChannelSpec::Bsc { p }, over) => {
                if self.model.num_states != 2 {
                    return Err(CliError::Config("bsc channels need num_states = 2".into()));
                }
                Ok(bsc(over.unwrap_or(*p)))
            }
            (ChannelSpec::Matrix { rows }, None) => Ok(rows.clone()),
            (ChannelSpec::Matrix { .. }, Some(_)) => Err(CliError::Config(format!(
                "channel {} is a matrix; sweep p{} overrides need a bsc channel",
                index + 1,
                index + 1
            ))),
        }
    }

    pub fn build_model(&self) -> Result<MarkovModel, CliError> {
        self.build_model_with(None, None)
    }

    pub fn build_model_with(
        &self,
        p1: Option<f64>,
        p2: Option<f64>,
    ) -> Result<MarkovModel, CliError> {
        if self.model.transition.len() != self.model.num_states {
            return Err(CliError::Core(disg_core::Error::DimensionMismatch(
                format!(
                    "num_states is {} but the transition has {} rows",
                    self.model.num_states,
                    self.model.transition.len()
                ),
            )));
        }
        let channels = [self.channel(0, p1)?, self.channel(1, p2)?];
        Ok(MarkovModel::new(self.model.transition.clone(), channels)?)
    }

    pub fn build_params(&self) -> Result<GameParams, CliError> {
        Ok(GameParams::new(
            self.params.delta,
            self.params.costs,
            self.params.vi_tolerance,
            self.params.max_iterations,
        )?)
    }
}

pub fn prior(probs: &[f64], num_states: usize) -> Result<Belief, CliError> {
    if probs.len() != num_states {
        return Err(CliError::Config(format!(
            "prior has {} entries, model has {num_states} states",
            probs.len()
        )));
    }
    Ok(Belief::new(probs.to_vec())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "schema_version": 1,
        "model": {
            "num_states": 2,
            "transition": [[0.8, 0.2], [0.15, 0.85]],
            "channels": [{"type": "bsc", "p": 0.6}, {"type": "matrix", "rows": [[0.6, 0.4], [0.4, 0.6]]}]
        },
        "params": {"delta": 0.9, "costs": [0.027, 0.027]}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.grid.resolution, 200);
        assert_eq!(cfg.itra.k, 500);
        let m = cfg.build_model().unwrap();
        assert_eq!(
            m.channel(disg_core::Agent::One),
            m.channel(disg_core::Agent::Two)
        );
        assert_eq!(cfg.build_params().unwrap().vi_tolerance, 1e-9);
    }

    #[test]
    fn rejects_unknown_fields_and_versions() {
        let extra = BASE.replace("\"delta\": 0.9", "\"delta\": 0.9, \"gamma\": 1");
        assert!(matches!(
            ExperimentConfig::parse(&extra),
            Err(CliError::Config(_))
        ));
        let old = BASE.replace("\"schema_version\": 1", "\"schema_version\": 0");
        assert!(matches!(
            ExperimentConfig::parse(&old),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn overrides_need_bsc() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert!(cfg.build_model_with(Some(0.65), None).is_ok());
        assert!(cfg.build_model_with(None, Some(0.65)).is_err());
    }

    #[test]
    fn bsc_needs_two_states() {
        let three = BASE
            .replace("\"num_states\": 2", "\"num_states\": 3")
            .replace(
                "[[0.8, 0.2], [0.15, 0.85]]",
                "[[0.8, 0.2, 0.0], [0.15, 0.85, 0.0], [0.0, 0.0, 1.0]]",
            );
        let cfg = ExperimentConfig::parse(&three).unwrap();
        assert!(matches!(cfg.build_model(), Err(CliError::Config(_))));
    }
}
