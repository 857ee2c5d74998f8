//! Benchmark configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::WeightParams;
use crate::policy::episode::Strategy;
use crate::policy::DEFAULT_PLANNING_HORIZON;
use crate::sensorium::{AmbiguityProfile, WorldParams};
use crate::viewsphere::GridSpec;

/// How a view sequence is reduced to one predicted label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Average the single-view posteriors.
    Vote,
    /// Average all pair distributions uniformly.
    AllUnweighted,
    /// Average all pair distributions with learned pose weights.
    AllWeighted,
    /// Keep the min(M, N) best-weighted pairs, average uniformly.
    BestUnweighted,
    /// Keep the min(M, N) best-weighted pairs, average with weights.
    BestWeighted,
}

impl FusionMode {
    pub const ALL: [FusionMode; 5] = [
        FusionMode::Vote,
        FusionMode::AllUnweighted,
        FusionMode::AllWeighted,
        FusionMode::BestUnweighted,
        FusionMode::BestWeighted,
    ];

    /// The four pairwise variants compared in the ablation.
    pub const ABLATION: [FusionMode; 4] = [
        FusionMode::AllUnweighted,
        FusionMode::AllWeighted,
        FusionMode::BestUnweighted,
        FusionMode::BestWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::Vote => "vote",
            FusionMode::AllUnweighted => "all_unweighted",
            FusionMode::AllWeighted => "all_weighted",
            FusionMode::BestUnweighted => "best_unweighted",
            FusionMode::BestWeighted => "best_weighted",
        }
    }

    pub(crate) fn ordinal(self) -> u8 {
        Self::ALL.iter().position(|m| *m == self).unwrap() as u8
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown fusion mode {s:?}, expected one of: {}",
                    FusionMode::ALL.map(|m| m.name()).join(", ")
                ))
            })
    }
}

/// Full description of one benchmark: world, protocol, and output knobs.
/// Every field has a default, so a config file only overrides what it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub grid: GridSpec,
    pub world: WorldParams,
    /// Training objects per class; they drive weight learning only.
    pub train_objects_per_class: usize,
    /// Test objects per class; each runs one episode per grid viewpoint.
    pub test_objects_per_class: usize,
    /// Distinct view counts to benchmark.
    pub lengths: Vec<usize>,
    pub strategies: Vec<Strategy>,
    /// Master seeds; each gets its own world, weights, and policies.
    pub seeds: Vec<u64>,
    /// Fusion mode used outside the ablation sweep.
    pub fusion: FusionMode,
    /// Training pairs sampled per pose when learning fusion weights.
    pub weight_samples: usize,
    /// Sharpness of the cross-entropy to weight mapping.
    pub beta: f64,
    /// Observation pairs sampled per (class, view, target) quality cell.
    pub quality_samples: usize,
    /// Planner lookahead cap.
    pub horizon_cap: usize,
    /// Where result files land; `None` leaves the choice to the caller.
    pub out_dir: Option<std::path::PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            grid: GridSpec::default(),
            world: WorldParams {
                num_classes: 10,
                feature_dim: 3,
                noise_sigma: 0.8,
                ambiguity: AmbiguityProfile::Constant { value: 0.45 },
                view_correlation_length: 1.5,
            },
            train_objects_per_class: 20,
            test_objects_per_class: 2,
            lengths: vec![3, 6, 12],
            strategies: Strategy::ALL.to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
            fusion: FusionMode::AllWeighted,
            weight_samples: 200,
            beta: 2.0,
            quality_samples: 8,
            horizon_cap: DEFAULT_PLANNING_HORIZON,
            out_dir: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.lengths.is_empty() {
            return Err(Error::Config("lengths must not be empty".into()));
        }
        for &m in &self.lengths {
            if m == 0 || m > self.grid.num_views() {
                return Err(Error::Config(format!(
                    "length {m} is outside 1..={}",
                    self.grid.num_views()
                )));
            }
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.strategies {
            if !seen.insert(*s) {
                return Err(Error::Config(format!("strategy {s} listed twice")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.train_objects_per_class == 0 || self.test_objects_per_class == 0 {
            return Err(Error::Config(
                "train and test object counts must be at least 1".into(),
            ));
        }
        if self.weight_samples == 0 || self.quality_samples == 0 {
            return Err(Error::Config(
                "weight_samples and quality_samples must be at least 1".into(),
            ));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(Error::Config(format!(
                "beta must be finite and positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn weight_params(&self) -> WeightParams {
        WeightParams {
            min_samples: self.weight_samples,
            beta: self.beta,
        }
    }

    /// Loads a config from JSON, applying defaults for absent fields.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: BenchConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load_json<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        BenchConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_json_overrides_defaults() {
        let config = BenchConfig::from_json(
            r#"{"seeds": [7], "lengths": [3], "strategies": ["random", "optimised"]}"#,
        )
        .unwrap();
        assert_eq!(config.seeds, vec![7]);
        assert_eq!(config.lengths, vec![3]);
        assert_eq!(
            config.strategies,
            vec![Strategy::Random, Strategy::Optimised]
        );
        assert_eq!(config.world, BenchConfig::default().world);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for json in [
            r#"{"lengths": []}"#,
            r#"{"lengths": [0]}"#,
            r#"{"lengths": [61]}"#,
            r#"{"strategies": []}"#,
            r#"{"strategies": ["random", "random"]}"#,
            r#"{"seeds": []}"#,
            r#"{"test_objects_per_class": 0}"#,
            r#"{"beta": 0.0}"#,
            r#"{"quality_samples": 0}"#,
            r#"{"no_such_field": 1}"#,
            r#"{"fusion": "sum"}"#,
        ] {
            assert!(BenchConfig::from_json(json).is_err(), "{json}");
        }
    }

    #[test]
    fn fusion_and_strategy_names_round_trip() {
        for mode in FusionMode::ALL {
            assert_eq!(mode.name().parse::<FusionMode>().unwrap(), mode);
            let json = serde_json::to_string(&mode).unwrap();
            assert_eq!(json, format!("\"{}\"", mode.name()));
        }
        for strategy in Strategy::ALL {
            assert_eq!(strategy.name().parse::<Strategy>().unwrap(), strategy);
            let json = serde_json::to_string(&strategy).unwrap();
            assert_eq!(json, format!("\"{}\"", strategy.name()));
        }
        assert!("perfect".parse::<FusionMode>().is_err());
    }
}
