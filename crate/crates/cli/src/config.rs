//! The on-disk experiment configuration and its conversion into core types.
//!
//! The file model is TOML with one table per concern. It is deliberately
//! separate from the simulator's in-memory config: every table rejects
//! unknown keys, so a typo fails at parse time instead of silently falling
//! back to a default, and keys that would do nothing in the declared mode
//! (shuffle timing under direct reporting, say) are rejected too.
//!
//! Parsing and serialization round-trip: `parse(serialize(c))` equals `c`.
//! Optional keys serialize only when set, and keys with defaults serialize
//! with their effective values, so a snapshot written by `run` re-parses
//! into the exact configuration that produced it.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use fedldp_core::analysis::VerificationPlan;
use fedldp_core::data::{self, BlobConfig, Dataset};
use fedldp_core::federation::{
    FederationConfig, ModelSpec, PerturbationMode, ReportingMode, ShuffleSettings,
};
use fedldp_core::mechanism::{PrivacyBudget, WeightRange};
use fedldp_core::model::SgdConfig;
use fedldp_core::ranges::{RangeMode, RangePolicy};
use fedldp_core::shuffle::CompositionMode;

use crate::error::CliError;

/// Complete description of one experiment as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream of the run derives from it.
    pub seed: u64,
    /// Where run artifacts go. A `--out` flag or the `FEDLDP_OUT`
    /// environment variable takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub federation: FederationSection,
    pub sgd: SgdSection,
    pub privacy: PrivacySection,
    pub range: RangeSection,
    pub reporting: ReportingSection,
    #[serde(default)]
    pub verification: VerificationSection,
}

/// Exactly one source table must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DatasetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_blobs: Option<BlobSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist: Option<MnistSection>,
}

/// Gaussian-blob classification task generated on the fly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSection {
    pub train_samples: usize,
    pub test_samples: usize,
    pub feature_dim: usize,
    pub classes: usize,
    /// Spread of the class centers relative to unit within-class noise.
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
    /// Seed of the data draw, independent of the run seed so the same task
    /// can be replayed under different run randomness.
    pub seed: u64,
}

fn default_center_scale() -> f64 {
    2.0
}

/// MNIST in IDX format from a local directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistSection {
    /// Directory holding the four standard IDX files.
    pub path: PathBuf,
    /// Optional stratified subsample of the training split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `[input, hidden..., output]` layer widths.
    pub dims: Vec<usize>,
    /// Optional per-layer multipliers on the Xavier init limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_scales: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    pub total_clients: usize,
    pub selected_clients: usize,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    /// Per-report budget.
    pub epsilon: f64,
    pub perturbation: PerturbationMode,
    pub composition: CompositionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSection {
    pub mode: RangeMode,
    pub center: f64,
    pub radius: f64,
}

/// Transport selection. The timing keys are legal only under `shuffled`;
/// absent keys take the shuffler defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReportingSection {
    pub kind: ReportingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_compute: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_latency: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportingKind {
    Direct,
    Shuffled,
}

/// Post-run verification battery: which families run and at what cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerificationSection {
    pub samples: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub mechanism_checks: bool,
    pub privacy_checks: bool,
    pub shuffle_checks: bool,
}

impl Default for VerificationSection {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            repetitions: 10_000,
            seed: 500,
            mechanism_checks: true,
            privacy_checks: true,
            shuffle_checks: true,
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML document, rejecting unknown keys anywhere.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Serializes back to TOML. Re-parsing the result reproduces `self`.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self)
            .map_err(|e| CliError::config(format!("cannot serialize config: {e}")))
    }

    /// Structural checks that cross section boundaries. Value-level
    /// validation (positive radius, epsilon floor, dims vs data shape)
    /// happens in the conversions below and in the core config itself.
    fn validate(&self) -> Result<(), CliError> {
        match (&self.dataset.synthetic_blobs, &self.dataset.mnist) {
            (Some(_), Some(_)) => Err(CliError::config(
                "dataset declares both synthetic-blobs and mnist; pick one",
            )),
            (None, None) => Err(CliError::config(
                "dataset must declare either synthetic-blobs or mnist",
            )),
            _ => Ok(()),
        }?;
        if self.reporting.kind == ReportingKind::Direct {
            let stray = [
                ("window", self.reporting.window.is_some()),
                ("jitter", self.reporting.jitter.is_some()),
                ("drop-probability", self.reporting.drop_probability.is_some()),
                ("local-compute", self.reporting.local_compute.is_some()),
                ("comm-latency", self.reporting.comm_latency.is_some()),
            ];
            if let Some((key, _)) = stray.iter().find(|(_, set)| *set) {
                return Err(CliError::config(format!(
                    "reporting key `{key}` has no effect under direct reporting; remove it"
                )));
            }
        }
        Ok(())
    }

    /// Builds the train/test pair this config describes.
    pub fn datasets(&self) -> Result<(Dataset, Dataset), CliError> {
        if let Some(blobs) = &self.dataset.synthetic_blobs {
            let config = BlobConfig {
                train_samples: blobs.train_samples,
                test_samples: blobs.test_samples,
                feature_dim: blobs.feature_dim,
                classes: blobs.classes,
                center_scale: blobs.center_scale,
            };
            return data::synthetic_blobs(&config, blobs.seed)
                .map_err(|e| CliError::config(format!("synthetic dataset: {e}")));
        }
        let mnist = self.dataset.mnist.as_ref().expect("validated dataset");
        // Subset sampling is the only randomness here; tie it to the run
        // seed so a snapshot reproduces the exact subsample.
        data::load_mnist(&mnist.path, mnist.subset, self.seed)
            .map_err(|e| CliError::io(format!("mnist at {}: {e}", mnist.path.display())))
    }

    /// Converts to the simulator's run configuration.
    pub fn federation_config(&self) -> Result<FederationConfig, CliError> {
        let bad = |e: fedldp_core::Error| CliError::config(e.to_string());
        let initial = WeightRange::new(self.range.center, self.range.radius).map_err(bad)?;
        let range = match self.range.mode {
            RangeMode::Fixed => RangePolicy::fixed(initial),
            RangeMode::Adaptive => RangePolicy::adaptive(initial),
        };
        let reporting = match self.reporting.kind {
            ReportingKind::Direct => ReportingMode::Direct,
            ReportingKind::Shuffled => {
                let defaults = ShuffleSettings::default();
                ReportingMode::Shuffled(ShuffleSettings {
                    window: self.reporting.window.unwrap_or(defaults.window),
                    jitter: self.reporting.jitter.unwrap_or(defaults.jitter),
                    drop_probability: self
                        .reporting
                        .drop_probability
                        .unwrap_or(defaults.drop_probability),
                    local_compute: self.reporting.local_compute.unwrap_or(defaults.local_compute),
                    comm_latency: self.reporting.comm_latency.unwrap_or(defaults.comm_latency),
                })
            }
        };
        Ok(FederationConfig {
            model: ModelSpec {
                dims: self.model.dims.clone(),
                init_scales: self.model.init_scales.clone(),
            },
            total_clients: self.federation.total_clients,
            selected_clients: self.federation.selected_clients,
            rounds: self.federation.rounds,
            sgd: SgdConfig {
                learning_rate: self.sgd.learning_rate,
                batch_size: self.sgd.batch_size,
                epochs: self.sgd.epochs,
            },
            budget: PrivacyBudget::new(self.privacy.epsilon).map_err(bad)?,
            range,
            perturbation: self.privacy.perturbation,
            reporting,
            composition: self.privacy.composition,
            seed: self.seed,
        })
    }

    pub fn verification_plan(&self) -> VerificationPlan {
        let v = &self.verification;
        VerificationPlan {
            samples: v.samples,
            repetitions: v.repetitions,
            seed: v.seed,
            mechanism_checks: v.mechanism_checks,
            privacy_checks: v.privacy_checks,
            shuffle_checks: v.shuffle_checks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"
            seed = 7

            [dataset.synthetic-blobs]
            train_samples = 60
            test_samples = 30
            feature_dim = 4
            classes = 3
            seed = 1

            [model]
            dims = [4, 3]

            [federation]
            total_clients = 5
            selected_clients = 5
            rounds = 2

            [sgd]
            learning_rate = 0.1
            batch_size = 4
            epochs = 1

            [privacy]
            epsilon = 1.0
            perturbation = "two-point"
            composition = "parameter-shuffle"

            [range]
            mode = "fixed"
            center = 0.0
            radius = 0.5

            [reporting]
            kind = "direct"
        "#
    }

    #[test]
    fn parses_and_round_trips() {
        let config = ExperimentConfig::parse(minimal()).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.dataset.synthetic_blobs.as_ref().unwrap().center_scale, 2.0);
        let reparsed = ExperimentConfig::parse(&config.to_toml().unwrap()).unwrap();
        assert_eq!(config, reparsed);
    }

    #[test]
    fn rejects_unknown_keys_at_any_level() {
        let top = format!("typo = 1\n{}", minimal());
        assert!(ExperimentConfig::parse(&top).is_err());
        let nested = minimal().replace("epochs = 1", "epochs = 1\nmomentum = 0.9");
        assert!(ExperimentConfig::parse(&nested).is_err());
    }

    #[test]
    fn rejects_dataset_ambiguity() {
        let both = minimal().replace(
            "[model]",
            "[dataset.mnist]\npath = \"data\"\n\n[model]",
        );
        let err = ExperimentConfig::parse(&both).unwrap_err();
        assert!(err.to_string().contains("pick one"), "{err}");
    }

    #[test]
    fn rejects_inert_timing_keys_under_direct_reporting() {
        let stray = minimal().replace("kind = \"direct\"", "kind = \"direct\"\nwindow = 2.0");
        let err = ExperimentConfig::parse(&stray).unwrap_err();
        assert!(err.to_string().contains("no effect"), "{err}");
    }

    #[test]
    fn converts_to_a_runnable_core_config() {
        let config = ExperimentConfig::parse(minimal()).unwrap();
        let federation = config.federation_config().unwrap();
        let (train, test) = config.datasets().unwrap();
        federation.validate(&train, &test).unwrap();
        assert_eq!(federation.seed, 7);
        assert_eq!(train.len(), 60);
    }

    #[test]
    fn shuffled_reporting_fills_defaults() {
        let shuffled = minimal().replace("kind = \"direct\"", "kind = \"shuffled\"\nwindow = 0.5");
        let config = ExperimentConfig::parse(&shuffled).unwrap();
        match config.federation_config().unwrap().reporting {
            ReportingMode::Shuffled(s) => {
                assert_eq!(s.window, 0.5);
                assert_eq!(s.local_compute, ShuffleSettings::default().local_compute);
            }
            other => panic!("expected shuffled reporting, got {other:?}"),
        }
    }

    #[test]
    fn bad_range_is_a_config_error() {
        let bad = minimal().replace("radius = 0.5", "radius = -1.0");
        let config = ExperimentConfig::parse(&bad).unwrap();
        let err = config.federation_config().unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }
}
