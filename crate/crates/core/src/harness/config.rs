//! The lab configuration file: one TOML document with a table per module.
//! Every table rejects unknown keys and fills missing keys with defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grpoloop::GrpoPipeline;
use crate::rewardlab::ExperimentConfig;
use crate::riskclust::{CorpusConfig, ProjectionConfig};
use crate::theorylab::{FamilyConfig, McConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryConfig {
    pub family: FamilyConfig,
    pub mc: McConfig,
    /// Covariate count for the Fisher identity check.
    pub fisher_n: usize,
    pub pair_bound_samples: usize,
    pub pair_bound_slack: f64,
    /// The prediction-error check runs on its own, low-dimensional family.
    pub cov_mse_family: FamilyConfig,
    pub cov_mse_n: usize,
    pub cov_mse_replicates: usize,
    pub cov_mse_probes: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            family: FamilyConfig::default(),
            mc: McConfig::default(),
            fisher_n: 300,
            pair_bound_samples: 100_000,
            pair_bound_slack: 1e-12,
            cov_mse_family: FamilyConfig {
                dim: 2,
                ..FamilyConfig::default()
            },
            cov_mse_n: 500,
            cov_mse_replicates: 1000,
            cov_mse_probes: 20,
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc.replicates == 0 || self.mc.n == 0 || self.fisher_n == 0 {
            return Err(Error::InvalidConfig(
                "theory replicates, n and fisher_n must be positive".into(),
            ));
        }
        if self.cov_mse_n == 0 || self.cov_mse_replicates < 2 || self.cov_mse_probes == 0 {
            return Err(Error::InvalidConfig(
                "cov_mse_n and cov_mse_probes must be positive and cov_mse_replicates at least 2".into(),
            ));
        }
        if !(self.pair_bound_slack >= 0.0) {
            return Err(Error::InvalidConfig("pair_bound_slack must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RiskConfig {
    pub corpus: CorpusConfig,
    pub projection: ProjectionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct LabConfig {
    pub reward: ExperimentConfig,
    pub theory: TheoryConfig,
    pub riskclust: RiskConfig,
    pub grpo: GrpoPipeline,
}

impl LabConfig {
    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        self.theory.validate()?;
        self.riskclust.corpus.validate()?;
        self.riskclust.projection.validate()?;
        self.grpo.reward.validate()?;
        self.grpo.grpo.validate()?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: LabConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::parse(&text).map_err(|e| match e {
                    Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }
}

/// Where a default value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Imported from the reference method's published setting.
    Cited,
    /// Chosen for this lab.
    Invented,
}

/// Key suffixes whose defaults are imported rather than chosen here.
const CITED: [&str; 6] = [
    "train.lambda",
    "split.bt_frac",
    "delta_min",
    "hard_negative_p",
    "grpo.group_size",
    "grpo.kl_coef",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub key: String,
    pub value: Value,
    pub provenance: Provenance,
    /// Whether the value equals the built-in default.
    pub is_default: bool,
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

fn leaves(cfg: &LabConfig) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    flatten("", &serde_json::to_value(cfg).expect("config serializes"), &mut out);
    out
}

/// Every leaf of the resolved config with its provenance.
pub fn config_entries(cfg: &LabConfig) -> Vec<ConfigEntry> {
    let defaults: std::collections::BTreeMap<String, Value> = leaves(&LabConfig::default()).into_iter().collect();
    leaves(cfg)
        .into_iter()
        .map(|(key, value)| ConfigEntry {
            provenance: if CITED.iter().any(|c| key == *c || key.ends_with(&format!(".{c}"))) {
                Provenance::Cited
            } else {
                Provenance::Invented
            },
            is_default: defaults.get(&key) == Some(&value),
            key,
            value,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = LabConfig::parse("").unwrap();
        assert_eq!(cfg, LabConfig::default());
        let entries = config_entries(&cfg);
        assert!(entries.len() > 50);
        assert!(entries.iter().all(|e| e.is_default));
        let lambda = entries.iter().find(|e| e.key == "reward.train.lambda").unwrap();
        assert_eq!(lambda.provenance, Provenance::Cited);
        assert_eq!(lambda.value, serde_json::json!(0.5));
        let seed = entries.iter().find(|e| e.key == "reward.world.n_contexts").unwrap();
        assert_eq!(seed.provenance, Provenance::Invented);
    }

    #[test]
    fn cited_defaults_have_their_values() {
        let entries = config_entries(&LabConfig::default());
        let get = |k: &str| entries.iter().find(|e| e.key == k).unwrap().value.clone();
        assert_eq!(get("reward.split.bt_frac"), serde_json::json!(0.85));
        assert_eq!(get("reward.delta_min"), serde_json::json!(3.6));
        assert_eq!(get("reward.hard_negative_p"), serde_json::json!(0.1));
        assert_eq!(get("grpo.grpo.group_size"), serde_json::json!(32));
        assert_eq!(get("grpo.grpo.kl_coef"), serde_json::json!(0.01));
    }

    #[test]
    fn overrides_are_marked() {
        let cfg = LabConfig::parse("[reward.train]\nlambda = 1.0\n").unwrap();
        assert_eq!(cfg.reward.train.lambda, 1.0);
        let e = config_entries(&cfg);
        let lambda = e.iter().find(|e| e.key == "reward.train.lambda").unwrap();
        assert!(!lambda.is_default);
        assert_eq!(e.iter().filter(|e| !e.is_default).count(), 1);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = LabConfig::parse("[reward.split]\nbt_frc = 0.5\n").unwrap_err();
        assert!(matches!(&err, Error::InvalidConfig(m) if m.contains("bt_frc")), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = LabConfig::parse("[reward]\ndelta_min = = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn out_of_range_values_rejected() {
        assert!(LabConfig::parse("[reward.split]\nbt_frac = 1.5\n").is_err());
        assert!(LabConfig::parse("[theory.mc]\nreplicates = 0\n").is_err());
    }
}
