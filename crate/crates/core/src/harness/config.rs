//! Harness configuration file: JSON with `generator`, `eta`, `solver` and
//! `train` sections, every field defaulted.

use crate::error::{Error, Result};
use crate::eta::EtaConfig;
use crate::network::TrainConfig;
use crate::oracles::{GapGenParams, McndGenParams};
use crate::solver::SolverConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Mcnd,
    Gap,
}

impl ProblemKind {
    pub fn label(self) -> &'static str {
        match self {
            ProblemKind::Mcnd => "mcnd",
            ProblemKind::Gap => "gap",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub problem: ProblemKind,
    /// Dataset name; prefixes instance files and report rows.
    pub name: String,
    pub train_instances: usize,
    pub test_instances: usize,
    pub base_seed: u64,
    pub mcnd: McndGenParams,
    pub gap: GapGenParams,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            problem: ProblemKind::Mcnd,
            name: "mcnd-small".to_string(),
            train_instances: 50,
            test_instances: 20,
            base_seed: 1,
            mcnd: McndGenParams::default(),
            gap: GapGenParams::default(),
        }
    }
}

/// Solver section: everything of [`SolverConfig`] except the eta strategy,
/// which has its own section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSection {
    pub serious_m: f64,
    pub epsilon: f64,
    pub prune_window: usize,
    pub record_times: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let base = SolverConfig::default();
        SolverSection {
            serious_m: base.serious_m,
            epsilon: base.epsilon,
            prune_window: base.prune_window,
            record_times: base.record_times,
        }
    }
}

impl SolverSection {
    pub fn to_solver_config(&self, eta: EtaConfig, max_iter: usize) -> SolverConfig {
        SolverConfig {
            serious_m: self.serious_m,
            epsilon: self.epsilon,
            max_iter,
            eta,
            prune_window: self.prune_window,
            record_times: self.record_times,
            max_bundle_size: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct HarnessConfig {
    pub generator: GeneratorConfig,
    pub eta: EtaConfig,
    pub solver: SolverSection,
    pub train: TrainConfig,
}

impl HarnessConfig {
    /// Desk-scale generalized-assignment dataset preset.
    pub fn gap_small() -> Self {
        HarnessConfig {
            generator: GeneratorConfig {
                problem: ProblemKind::Gap,
                name: "gap-small".to_string(),
                ..GeneratorConfig::default()
            },
            ..HarnessConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: HarnessConfig = serde_json::from_str(&text)
            .map_err(|e| Error::contract(format!("{}: {e}", path.display())))?;
        config.eta.validate()?;
        config.train.validate()?;
        Ok(config)
    }
}

/// Solvers the harness can run. The four bundle variants differ only in the
/// long-term eta strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Bundle(crate::eta::EtaKind),
    Descent,
    Adam,
    Learned,
}

impl Method {
    pub fn parse(name: &str) -> Result<Method> {
        use crate::eta::EtaKind;
        Ok(match name {
            "bundle-constant" => Method::Bundle(EtaKind::Constant),
            "bundle-soft" => Method::Bundle(EtaKind::Soft),
            "bundle-hard" => Method::Bundle(EtaKind::Hard),
            "bundle-balancing" => Method::Bundle(EtaKind::Balancing),
            "descent" => Method::Descent,
            "adam" => Method::Adam,
            "learned" => Method::Learned,
            other => {
                return Err(Error::contract(format!(
                    "unknown method {other:?}; expected bundle-constant|bundle-soft|bundle-hard|bundle-balancing|descent|adam|learned"
                )))
            }
        })
    }

    pub fn label(&self) -> &'static str {
        use crate::eta::EtaKind;
        match self {
            Method::Bundle(EtaKind::Constant) => "bundle-constant",
            Method::Bundle(EtaKind::Soft) => "bundle-soft",
            Method::Bundle(EtaKind::Hard) => "bundle-hard",
            Method::Bundle(EtaKind::Balancing) => "bundle-balancing",
            Method::Descent => "descent",
            Method::Adam => "adam",
            Method::Learned => "learned",
        }
    }

    pub fn needs_checkpoint(&self) -> bool {
        matches!(self, Method::Learned)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_with_defaults() {
        let config = HarnessConfig::default();
        let text = serde_json::to_string(&config).unwrap();
        let back: HarnessConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.generator.name, "mcnd-small");
        assert_eq!(back.generator.train_instances, 50);

        // Sparse configs parse thanks to defaults.
        let sparse: HarnessConfig =
            serde_json::from_str(r#"{"eta":{"kind":"soft","eta0":10.0}}"#).unwrap();
        assert_eq!(sparse.eta.kind, crate::eta::EtaKind::Soft);
        assert_eq!(sparse.eta.eta0, 10.0);
        assert_eq!(sparse.train.epochs, 25);
    }

    #[test]
    fn method_names_round_trip() {
        for name in [
            "bundle-constant",
            "bundle-soft",
            "bundle-hard",
            "bundle-balancing",
            "descent",
            "adam",
            "learned",
        ] {
            assert_eq!(Method::parse(name).unwrap().label(), name);
        }
        assert!(Method::parse("simplex").is_err());
    }
}
