//! Experiment configuration: one strict JSON document per run.

use std::path::{Path, PathBuf};

use kelvin::analytic::{NoiseSpec, RateMode};
use kelvin::fock::DensityBlock;
use kelvin::linalg::{c, CMat};
use kelvin::model::{CouplingScheme, ModelParams};
use kelvin::optimize::{Mode, ParamVector, Phase};
use kelvin::protocol::{Engine, InitialState, ScheduleDescriptor};
use kelvin::{KelvinError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Vacuum,
    MostExcited,
    MaximallyMixed,
    /// Diagonal blocks given by their Fock-basis populations, one list per k = 0..=N/2.
    Custom { populations: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    ThetaSpecific,
    PhaseAveraged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub objective: ObjectiveKind,
    /// Required for phase-averaged runs.
    #[serde(default)]
    pub phase: Option<Phase>,
    pub mode: Mode,
    pub init: ParamVector,
    pub budget: usize,
    pub restarts: usize,
}

/// Physics sections have no defaults; each command states which it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub scheme: Option<CouplingScheme>,
    #[serde(default)]
    pub schedule: Option<ScheduleDescriptor>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub engine: Option<Engine>,
    #[serde(default)]
    pub dsp: Option<bool>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub cycles: Option<usize>,
    #[serde(default)]
    pub snapshot_stride: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub rate_mode: Option<RateMode>,
    #[serde(default)]
    pub optimize: Option<OptimizeSection>,
    /// Trajectory only: also run the other engine and report the largest gap.
    #[serde(default)]
    pub cross_check: bool,
    /// Trajectory only: add one E_k column per block.
    #[serde(default)]
    pub wide: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub const DEFAULT_STRIDE: usize = 10;

pub fn need<'a, T>(x: &'a Option<T>, name: &str) -> Result<&'a T> {
    x.as_ref().ok_or_else(|| KelvinError::Validation(format!("config is missing required section '{name}'")))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KelvinError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| KelvinError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every present section against the library invariants.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let Some(s) = &self.scheme {
            s.validate()?;
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        if let Some(d) = &self.schedule {
            kelvin::protocol::make_schedule(d, &self.model, 0)?;
        }
        if self.snapshot_stride == Some(0) {
            return Err(KelvinError::Validation("snapshot_stride must be >= 1".into()));
        }
        if let Some(o) = &self.optimize {
            o.init.scheme.validate()?;
            if o.budget < 1 || o.restarts < 1 {
                return Err(KelvinError::Validation("optimize.budget and optimize.restarts must be >= 1".into()));
            }
            if o.objective == ObjectiveKind::PhaseAveraged && o.phase.is_none() {
                return Err(KelvinError::Validation("phase-averaged optimization needs optimize.phase".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical re-serialization.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canon.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn initial_state(&self) -> Result<InitialState> {
        Ok(match need(&self.initial, "initial")? {
            InitialSpec::Vacuum => InitialState::Vacuum,
            InitialSpec::MostExcited => InitialState::MostExcited,
            InitialSpec::MaximallyMixed => InitialState::MaximallyMixed,
            InitialSpec::Custom { populations } => InitialState::Custom(
                populations
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let mut m = CMat::zeros(p.len(), p.len());
                        for (i, &x) in p.iter().enumerate() {
                            m[(i, i)] = c(x);
                        }
                        DensityBlock { matrix: m, k }
                    })
                    .collect(),
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"model": {"n": 20, "theta": 1.0}}"#;

    #[test]
    fn strict_parsing() {
        assert!(ExperimentConfig::parse(BASE).is_ok());
        assert!(ExperimentConfig::parse(r#"{"model": {"n": 20, "theta": 1.0}, "colour": 1}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"model": {"n": 20, "theta": 1.0, "g": 1}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"model": {"n": 21, "theta": 1.0}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"model": {"n": 20}}"#).is_err());
    }

    #[test]
    fn hash_is_canonical() {
        let a = ExperimentConfig::parse(BASE).unwrap();
        let b = ExperimentConfig::parse("{ \"model\" : { \"theta\": 1.0, \"n\": 20 } }").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = ExperimentConfig::parse(r#"{"model": {"n": 22, "theta": 1.0}}"#).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
