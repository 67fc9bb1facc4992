//! Federated training loop: the cloud broadcasts global weights and
//! per-layer ranges, each selected client trains locally, clips its weights
//! into the declared ranges, perturbs every parameter (biases included) with
//! the two-level mechanism, and reports the scalars through the
//! split-and-shuffle channel. The cloud averages per parameter id, optionally
//! adapts the ranges to the aggregated model, and evaluates the aggregated
//! (post-noise) model — the only model anyone outside a client ever sees.
//!
//! Clients are stateless between rounds: selection hands them nothing but
//! the current broadcast. All randomness is derived from the run seed via
//! [`crate::seeds`], so a full run is reproducible bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mechanism::{self, PrivacyBudget, WeightRange};
use crate::model::{self, ModelWeights, SgdConfig};
use crate::ranges::{self, RangePolicy};
use crate::seeds;
use crate::shuffle::{
    self, composed_budget, CompositionMode, ShuffleConfig, TimingProfile, WeightId, WeightReport,
};

/// Architecture of the shared model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `[input, hidden..., output]` layer widths.
    pub dims: Vec<usize>,
    /// Optional per-layer multipliers on the Xavier init limit; `None` means
    /// plain Xavier everywhere.
    pub init_scales: Option<Vec<f64>>,
}

/// Whether client reports pass through the weight mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    /// Clip into the declared ranges, then randomize every parameter.
    TwoPoint,
    /// Report raw locally trained weights (baseline runs). Clipping is
    /// skipped too; it exists only to make perturbation inputs legal.
    Disabled,
}

/// Client-to-cloud transport.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ReportingMode {
    /// No timing simulation: batches arrive in client order. With
    /// perturbation disabled this is classical federated averaging.
    Direct,
    /// Parameter split-and-shuffle with the synchronized-start timing rule.
    Shuffled(ShuffleSettings),
}

/// Timing knobs for shuffled reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShuffleSettings {
    /// Length of the uniform send window.
    pub window: f64,
    /// Symmetric error on each client's estimate of the synchronized start.
    pub jitter: f64,
    /// Independent per-report loss probability (0 = lossless).
    pub drop_probability: f64,
    /// Range of per-client local compute times, sampled once per client.
    pub local_compute: (f64, f64),
    /// Range of per-client communication latencies, sampled once per client.
    pub comm_latency: (f64, f64),
}

impl Default for ShuffleSettings {
    fn default() -> Self {
        Self {
            window: 1.0,
            jitter: 0.0,
            drop_probability: 0.0,
            local_compute: (0.5, 2.0),
            comm_latency: (0.05, 0.3),
        }
    }
}

impl ShuffleSettings {
    fn validate(&self) -> Result<()> {
        for (what, got) in [
            ("shuffle window", self.window),
            ("start jitter", self.jitter),
        ] {
            if !got.is_finite() || got < 0.0 {
                return Err(Error::InvalidTiming { what, got });
            }
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(Error::InvalidConfig(format!(
                "drop probability must lie in [0, 1), got {}",
                self.drop_probability
            )));
        }
        for (what, (lo, hi)) in [
            ("local compute range", self.local_compute),
            ("communication latency range", self.comm_latency),
        ] {
            if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || hi < lo {
                return Err(Error::InvalidConfig(format!(
                    "{what} must satisfy 0 <= low <= high, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// Complete specification of one federated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub model: ModelSpec,
    /// Total client population; the training data is dealt across all of
    /// them up front.
    pub total_clients: usize,
    /// Clients drawn uniformly without replacement each round.
    pub selected_clients: usize,
    pub rounds: usize,
    pub sgd: SgdConfig,
    /// Per-report privacy budget.
    pub budget: PrivacyBudget,
    pub range: RangePolicy,
    pub perturbation: PerturbationMode,
    pub reporting: ReportingMode,
    pub composition: CompositionMode,
    pub seed: u64,
}

impl FederationConfig {
    pub fn validate(&self, train: &Dataset, test: &Dataset) -> Result<()> {
        self.sgd.validate()?;
        if let ReportingMode::Shuffled(settings) = &self.reporting {
            settings.validate()?;
        }
        if let Some(scales) = &self.model.init_scales {
            if scales.len() + 1 != self.model.dims.len() {
                return Err(Error::BadArchitecture(format!(
                    "{} init scales for {} layers",
                    scales.len(),
                    self.model.dims.len().saturating_sub(1)
                )));
            }
        }
        if self.total_clients == 0 {
            return Err(Error::CountTooSmall {
                what: "total client count",
                got: 0,
            });
        }
        if self.selected_clients == 0 || self.selected_clients > self.total_clients {
            return Err(Error::InvalidConfig(format!(
                "cannot select {} of {} clients",
                self.selected_clients, self.total_clients
            )));
        }
        if self.rounds == 0 {
            return Err(Error::CountTooSmall {
                what: "round count",
                got: 0,
            });
        }
        if train.len() < self.total_clients {
            return Err(Error::InvalidConfig(format!(
                "{} training rows cannot cover {} clients",
                train.len(),
                self.total_clients
            )));
        }
        let dims = &self.model.dims;
        if dims.len() < 2 {
            return Err(Error::BadArchitecture(format!(
                "need at least input and output dimensions, got {dims:?}"
            )));
        }
        if dims[0] != train.feature_dim() {
            return Err(Error::ShapeMismatch(format!(
                "model input {} vs dataset dimension {}",
                dims[0],
                train.feature_dim()
            )));
        }
        if *dims.last().expect("dims") != train.classes() {
            return Err(Error::ShapeMismatch(format!(
                "model output {} vs {} classes",
                dims.last().expect("dims"),
                train.classes()
            )));
        }
        if test.feature_dim() != train.feature_dim() || test.classes() != train.classes() {
            return Err(Error::ShapeMismatch(
                "train and test datasets disagree on shape".into(),
            ));
        }
        Ok(())
    }
}

/// IID partition: rows are shuffled once and dealt into `clients` contiguous
/// shards whose sizes differ by at most one (earlier shards get the extra).
pub fn partition_data(data: &Dataset, clients: usize, rng: &mut impl Rng) -> Result<Vec<Dataset>> {
    if clients == 0 {
        return Err(Error::CountTooSmall {
            what: "client count",
            got: 0,
        });
    }
    if data.len() < clients {
        return Err(Error::InvalidConfig(format!(
            "{} rows cannot cover {} clients",
            data.len(),
            clients
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let base = data.len() / clients;
    let extra = data.len() % clients;
    let mut shards = Vec::with_capacity(clients);
    let mut start = 0;
    for c in 0..clients {
        let size = base + usize::from(c < extra);
        shards.push(data.subset(&order[start..start + size])?);
        start += size;
    }
    Ok(shards)
}

/// How one client's finished reports are stamped with arrival information.
pub enum ClientReporting<'a> {
    /// Arrival = position in the round's client order; preserves classical
    /// aggregation order exactly.
    Direct { position: usize },
    /// Timed release through the shuffler.
    Shuffled {
        profile: TimingProfile,
        config: &'a ShuffleConfig,
        drop_probability: f64,
    },
}

/// Everything one client sends in one round.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub reports: Vec<WeightReport>,
    /// Parameters moved by clipping, out of `parameters`.
    pub clipped: usize,
    pub parameters: usize,
}

/// One client's round: local SGD from the broadcast weights, clip +
/// perturb (unless disabled), split into reports, stamp arrivals.
///
/// The caller supplies this client's dedicated generator; draws happen in a
/// fixed order (SGD shuffles, then one uniform per parameter, then
/// scheduling), so replaying the generator reproduces the update exactly.
pub fn local_update(
    global: &ModelWeights,
    layer_ranges: &[WeightRange],
    shard: &Dataset,
    sgd: &SgdConfig,
    budget: PrivacyBudget,
    perturbation: PerturbationMode,
    reporting: ClientReporting<'_>,
    rng: &mut impl Rng,
) -> Result<ClientUpdate> {
    if layer_ranges.len() != global.layer_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} ranges for a model with {} layers",
            layer_ranges.len(),
            global.layer_count()
        )));
    }
    let mut weights = global.clone();
    model::sgd_epochs(&mut weights, shard, sgd, rng)?;

    let parameters = weights.parameter_count();
    let mut clipped = 0;
    if let PerturbationMode::TwoPoint = perturbation {
        for (layer, range) in weights.layers.iter_mut().zip(layer_ranges) {
            for offset in 0..layer.parameter_count() {
                let raw = layer.param(offset);
                let inside = range.clip(raw);
                if inside != raw {
                    clipped += 1;
                }
                let noisy = mechanism::perturb(inside, *range, budget, rng)?;
                layer.set_param(offset, noisy);
            }
        }
    }

    let entries = shuffle::split(&weights);
    let reports = match reporting {
        ClientReporting::Direct { position } => entries
            .iter()
            .enumerate()
            .map(|(i, &(id, value))| WeightReport::at(id, value, position as f64, i as f64))
            .collect(),
        ClientReporting::Shuffled {
            profile,
            config,
            drop_probability,
        } => {
            let mut scheduled = shuffle::schedule(&entries, profile, config, rng)?;
            if drop_probability > 0.0 {
                scheduled.retain(|_| rng.random::<f64>() >= drop_probability);
            }
            scheduled
        }
    };
    Ok(ClientUpdate {
        reports,
        clipped,
        parameters,
    })
}

/// Cloud-side aggregation of one round's batches into the next global model.
///
/// Reports are pooled through the shuffler, grouped per parameter id, and
/// averaged in arrival order. With `expected_reports = Some(k)` every
/// parameter must have exactly `k` reports (the lossless case); with `None`
/// any non-empty group is averaged (lossy transport).
pub fn cloud_round(
    batches: &[Vec<WeightReport>],
    dims: &[usize],
    expected_reports: Option<usize>,
) -> Result<ModelWeights> {
    let stream = shuffle::collect(batches)?;
    let groups = shuffle::group_reports(&stream);
    let skeleton = ModelWeights::zeros(dims)?;
    // Every reported id must belong to the model.
    for id in groups.keys() {
        if id.layer >= skeleton.layers.len()
            || id.offset >= skeleton.layers[id.layer].parameter_count()
        {
            return Err(Error::UnknownWeightId {
                layer: id.layer,
                offset: id.offset,
            });
        }
    }
    let mut entries = Vec::with_capacity(skeleton.parameter_count());
    for (layer_index, layer) in skeleton.layers.iter().enumerate() {
        for offset in 0..layer.parameter_count() {
            let id = WeightId {
                layer: layer_index,
                offset,
            };
            let got = groups.get(&id).map_or(0, Vec::len);
            let expected = expected_reports.unwrap_or(got.max(1));
            if got != expected || got == 0 {
                return Err(Error::ReportCountMismatch {
                    layer: layer_index,
                    offset,
                    expected,
                    got,
                });
            }
            let values = &groups[&id];
            entries.push((id, values.iter().sum::<f64>() / values.len() as f64));
        }
    }
    shuffle::reassemble(dims, entries)
}

/// Metrics of one aggregated round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Test accuracy of the aggregated post-noise model.
    pub accuracy: f64,
    /// Fraction of reported parameters that clipping moved.
    pub clip_rate: f64,
    /// Total privacy budget consumed through this round under the
    /// configured composition mode.
    pub consumed_budget: f64,
}

/// Aggregated model, ranges and metrics after one round. Contains no
/// per-client data: reports lose their sender before they get here.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundState {
    pub metrics: RoundMetrics,
    pub layer_ranges: Vec<WeightRange>,
    pub weights: ModelWeights,
}

fn sample_in(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Runs the full federated loop and returns one state per round.
pub fn run_federated(
    config: &FederationConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<RoundState>> {
    config.validate(train, test)?;
    let dims = &config.model.dims;
    let shards = partition_data(train, config.total_clients, &mut seeds::partition_rng(config.seed))?;

    let mut weights = {
        let default_scales = vec![1.0; dims.len() - 1];
        let scales = config.model.init_scales.as_deref().unwrap_or(&default_scales);
        ModelWeights::xavier_scaled(dims, scales, &mut seeds::init_rng(config.seed))?
    };
    let mut layer_ranges = ranges::init_ranges(&config.range, weights.layer_count())?;

    // Fixed per-client hardware profiles and the resulting shared timing.
    let transport = match &config.reporting {
        ReportingMode::Direct => None,
        ReportingMode::Shuffled(settings) => {
            let profiles: Vec<TimingProfile> = (0..config.total_clients)
                .map(|client| {
                    let mut rng = seeds::profile_rng(config.seed, client as u64);
                    TimingProfile::new(
                        sample_in(&mut rng, settings.local_compute),
                        sample_in(&mut rng, settings.comm_latency),
                    )
                })
                .collect::<Result<_>>()?;
            let slowest = profiles
                .iter()
                .map(|p| p.response())
                .fold(0.0f64, f64::max);
            let shuffle_config =
                ShuffleConfig::with_jitter(slowest, settings.window, settings.jitter)?;
            Some((profiles, shuffle_config, settings.drop_probability))
        }
    };

    let parameter_count = weights.parameter_count();
    let mut states = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let mut selected = rand::seq::index::sample(
            &mut seeds::selection_rng(config.seed, round as u64),
            config.total_clients,
            config.selected_clients,
        )
        .into_vec();
        selected.sort_unstable();

        let mut batches = Vec::with_capacity(selected.len());
        let mut clipped = 0usize;
        let mut reported = 0usize;
        for (position, &client) in selected.iter().enumerate() {
            let reporting = match &transport {
                None => ClientReporting::Direct { position },
                Some((profiles, shuffle_config, drop_probability)) => {
                    ClientReporting::Shuffled {
                        profile: profiles[client],
                        config: shuffle_config,
                        drop_probability: *drop_probability,
                    }
                }
            };
            let mut rng = seeds::client_rng(config.seed, round as u64, client as u64);
            let update = local_update(
                &weights,
                &layer_ranges,
                &shards[client],
                &config.sgd,
                config.budget,
                config.perturbation,
                reporting,
                &mut rng,
            )?;
            clipped += update.clipped;
            reported += update.parameters;
            batches.push(update.reports);
        }

        let lossless = transport
            .as_ref()
            .map_or(true, |(_, _, drop_probability)| *drop_probability == 0.0);
        let expected = lossless.then_some(selected.len());
        weights = cloud_round(&batches, dims, expected)?;
        layer_ranges = ranges::update_ranges(&config.range, &layer_ranges, &weights)?;

        states.push(RoundState {
            metrics: RoundMetrics {
                round,
                accuracy: model::evaluate(&weights, test)?,
                clip_rate: clipped as f64 / reported.max(1) as f64,
                consumed_budget: composed_budget(
                    config.composition,
                    config.budget,
                    round + 1,
                    parameter_count,
                ),
            },
            layer_ranges: layer_ranges.clone(),
            weights: weights.clone(),
        });
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_blobs, BlobConfig};
    use crate::mechanism::{concentration_radius, mean_variance_bounds, output_levels};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blob_pair(train: usize, test: usize, seed: u64) -> (Dataset, Dataset) {
        synthetic_blobs(
            &BlobConfig {
                train_samples: train,
                test_samples: test,
                feature_dim: 5,
                classes: 3,
                center_scale: 2.5,
            },
            seed,
        )
        .unwrap()
    }

    fn base_config(dims: Vec<usize>, total: usize, selected: usize, rounds: usize) -> FederationConfig {
        FederationConfig {
            model: ModelSpec {
                dims,
                init_scales: None,
            },
            total_clients: total,
            selected_clients: selected,
            rounds,
            sgd: SgdConfig {
                learning_rate: 0.05,
                batch_size: 8,
                epochs: 2,
            },
            budget: PrivacyBudget::new(1.0).unwrap(),
            range: RangePolicy::fixed(WeightRange::new(0.0, 1.0).unwrap()),
            perturbation: PerturbationMode::TwoPoint,
            reporting: ReportingMode::Shuffled(ShuffleSettings::default()),
            composition: CompositionMode::ParameterShuffle,
            seed: 42,
        }
    }

    #[test]
    fn partition_deals_near_equal_shards() {
        let (train, _) = blob_pair(10, 3, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shards = partition_data(&train, 3, &mut rng).unwrap();
        let sizes: Vec<usize> = shards.iter().map(Dataset::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert!(partition_data(&train, 11, &mut rng).is_err());
        assert!(partition_data(&train, 0, &mut rng).is_err());
    }

    #[test]
    fn partition_rows_cover_the_dataset() {
        let (train, _) = blob_pair(23, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let shards = partition_data(&train, 4, &mut rng).unwrap();
        let mut rows: Vec<u64> = shards
            .iter()
            .flat_map(|s| (0..s.len()).map(|i| s.row(i)[0].to_bits()))
            .collect();
        let mut expected: Vec<u64> = (0..train.len()).map(|i| train.row(i)[0].to_bits()).collect();
        rows.sort_unstable();
        expected.sort_unstable();
        assert_eq!(rows, expected);
    }

    #[test]
    fn pure_perturbation_round_emits_only_mechanism_levels() {
        // lr = 0 turns local SGD off, so every report must be one of the two
        // mechanism outputs for its layer range.
        let (train, test) = blob_pair(40, 9, 2);
        let mut config = base_config(vec![5, 4, 3], 8, 8, 1);
        config.sgd.learning_rate = 0.0;
        let range = WeightRange::new(0.0, 1.0).unwrap();
        let budget = config.budget;
        let states = run_federated(&config, &train, &test).unwrap();
        // The aggregate of two-level outputs lies strictly between levels;
        // reports themselves are checked through a single client run.
        assert_eq!(states.len(), 1);
        let shard = partition_data(&train, 8, &mut seeds::partition_rng(config.seed))
            .unwrap()
            .remove(0);
        let global = ModelWeights::xavier(&[5, 4, 3], &mut seeds::init_rng(config.seed)).unwrap();
        let mut rng = seeds::client_rng(config.seed, 0, 0);
        let update = local_update(
            &global,
            &[range, range],
            &shard,
            &config.sgd,
            budget,
            PerturbationMode::TwoPoint,
            ClientReporting::Direct { position: 0 },
            &mut rng,
        )
        .unwrap();
        let (low, high) = output_levels(range, budget);
        for report in &update.reports {
            assert!(report.value == low || report.value == high);
        }
        assert_eq!(update.parameters, global.parameter_count());
    }

    #[test]
    fn reports_cover_every_parameter_exactly_once() {
        let (train, _) = blob_pair(40, 9, 3);
        let shard = partition_data(&train, 4, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap()
            .remove(0);
        let global = ModelWeights::xavier(&[5, 6, 3], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let range = WeightRange::new(0.0, 1.0).unwrap();
        let sgd = SgdConfig {
            learning_rate: 0.05,
            batch_size: 4,
            epochs: 1,
        };
        let shuffle_config = ShuffleConfig::new(1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let update = local_update(
            &global,
            &[range, range],
            &shard,
            &sgd,
            PrivacyBudget::new(1.0).unwrap(),
            PerturbationMode::TwoPoint,
            ClientReporting::Shuffled {
                profile: TimingProfile::new(0.1, 0.1).unwrap(),
                config: &shuffle_config,
                drop_probability: 0.0,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(update.reports.len(), global.parameter_count());
        let mut ids: Vec<WeightId> = update.reports.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), global.parameter_count());
    }

    #[test]
    fn cloud_round_averages_per_id() {
        // Two clients report constants 1.0 and 3.0 for every parameter.
        let dims = [2, 2];
        let model_a = {
            let mut m = ModelWeights::zeros(&dims).unwrap();
            m.layers[0].weights.iter_mut().for_each(|w| *w = 1.0);
            m.layers[0].bias.iter_mut().for_each(|b| *b = 1.0);
            m
        };
        let model_b = {
            let mut m = ModelWeights::zeros(&dims).unwrap();
            m.layers[0].weights.iter_mut().for_each(|w| *w = 3.0);
            m.layers[0].bias.iter_mut().for_each(|b| *b = 3.0);
            m
        };
        let batch = |m: &ModelWeights, pos: usize| -> Vec<WeightReport> {
            shuffle::split(m)
                .iter()
                .enumerate()
                .map(|(i, &(id, v))| WeightReport::at(id, v, pos as f64, i as f64))
                .collect()
        };
        let aggregated = cloud_round(&[batch(&model_a, 0), batch(&model_b, 1)], &dims, Some(2)).unwrap();
        for layer in &aggregated.layers {
            for offset in 0..layer.parameter_count() {
                assert_eq!(layer.param(offset), 2.0);
            }
        }
    }

    #[test]
    fn cloud_round_detects_missing_reports() {
        let dims = [2, 2];
        let model = ModelWeights::zeros(&dims).unwrap();
        let mut batch: Vec<WeightReport> = shuffle::split(&model)
            .iter()
            .enumerate()
            .map(|(i, &(id, v))| WeightReport::at(id, v, 0.0, i as f64))
            .collect();
        batch.pop();
        match cloud_round(&[batch], &dims, Some(1)).unwrap_err() {
            Error::ReportCountMismatch { expected: 1, got: 0, .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn cloud_round_rejects_foreign_ids() {
        let dims = [2, 2];
        let batch = vec![WeightReport::at(
            WeightId { layer: 5, offset: 0 },
            1.0,
            0.0,
            0.0,
        )];
        assert!(matches!(
            cloud_round(&[batch], &dims, None),
            Err(Error::UnknownWeightId { .. })
        ));
    }

    #[test]
    fn noise_free_direct_run_is_classical_federated_averaging() {
        // Oracle: plain FedAvg implemented from scratch with the same seed
        // derivations. Must match bit for bit.
        let (train, test) = blob_pair(60, 12, 4);
        let mut config = base_config(vec![5, 6, 3], 6, 6, 4);
        config.perturbation = PerturbationMode::Disabled;
        config.reporting = ReportingMode::Direct;
        let states = run_federated(&config, &train, &test).unwrap();

        let shards =
            partition_data(&train, config.total_clients, &mut seeds::partition_rng(config.seed))
                .unwrap();
        let mut global =
            ModelWeights::xavier(&config.model.dims, &mut seeds::init_rng(config.seed)).unwrap();
        for round in 0..config.rounds {
            let mut locals = Vec::new();
            for client in 0..config.total_clients {
                let mut w = global.clone();
                let mut rng = seeds::client_rng(config.seed, round as u64, client as u64);
                model::sgd_epochs(&mut w, &shards[client], &config.sgd, &mut rng).unwrap();
                locals.push(w);
            }
            let mut mean = ModelWeights::zeros(&config.model.dims).unwrap();
            for w in &locals {
                mean.add_scaled(w, 1.0).unwrap();
            }
            for layer in &mut mean.layers {
                for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                    *v /= locals.len() as f64;
                }
            }
            global = mean;
            assert_eq!(states[round].weights, global, "round {round} diverged");
        }
    }

    #[test]
    fn aggregation_is_unbiased_at_system_level() {
        // lr = 0 and a pinned global: repeated rounds re-perturb the same
        // weights, so the mean of the aggregates must approach them within
        // the variance envelope.
        let (train, _) = blob_pair(50, 10, 5);
        let clients = 25;
        let rounds = 160;
        let dims = [5, 3];
        let range = WeightRange::new(0.0, 0.5).unwrap();
        let budget = PrivacyBudget::new(1.0).unwrap();
        let sgd = SgdConfig {
            learning_rate: 0.0,
            batch_size: 8,
            epochs: 1,
        };
        let shards = partition_data(&train, clients, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let mut global = ModelWeights::xavier(&dims, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        // Keep the pinned weights strictly inside the range so clipping
        // stays out of the picture.
        for layer in &mut global.layers {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v *= 0.5;
            }
        }
        let mut sums = ModelWeights::zeros(&dims).unwrap();
        for round in 0..rounds {
            let batches: Vec<Vec<WeightReport>> = (0..clients)
                .map(|client| {
                    let mut rng = seeds::client_rng(99, round as u64, client as u64);
                    local_update(
                        &global,
                        &[range],
                        &shards[client],
                        &sgd,
                        budget,
                        PerturbationMode::TwoPoint,
                        ClientReporting::Direct { position: client },
                        &mut rng,
                    )
                    .unwrap()
                    .reports
                })
                .collect();
            let aggregated = cloud_round(&batches, &dims, Some(clients)).unwrap();
            sums.add_scaled(&aggregated, 1.0).unwrap();
        }
        // Mean over rounds: variance of each aggregated weight is bounded by
        // the per-round envelope divided by the number of rounds.
        let bounds = mean_variance_bounds(&vec![range.radius(); clients], budget).unwrap();
        let gate = 4.0 * (bounds.upper / rounds as f64).sqrt();
        for (sum_layer, true_layer) in sums.layers.iter().zip(&global.layers) {
            for offset in 0..sum_layer.parameter_count() {
                let mean = sum_layer.param(offset) / rounds as f64;
                let truth = true_layer.param(offset);
                assert!(
                    (mean - truth).abs() <= gate,
                    "offset {offset}: mean {mean} vs true {truth} (gate {gate})"
                );
            }
        }
    }

    #[test]
    fn aggregated_weight_concentrates_with_many_clients() {
        // 1000 clients all holding the same tiny model; the aggregated
        // parameters must sit within the closed-form deviation radius in at
        // least 95% of repetitions at beta = 0.05.
        let dims = [1, 1];
        let clients = 1000;
        let range = WeightRange::new(0.0, 1.0).unwrap();
        let budget = PrivacyBudget::new(1.0).unwrap();
        let mut truth = ModelWeights::zeros(&dims).unwrap();
        truth.layers[0].weights[0] = 0.4;
        truth.layers[0].bias[0] = -0.25;
        let radius = concentration_radius(1.0, budget, clients, 0.05).unwrap();
        let mut hits = 0;
        let reps = 200;
        for rep in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + rep);
            let batches: Vec<Vec<WeightReport>> = (0..clients)
                .map(|pos| {
                    let entries = shuffle::split(&truth);
                    entries
                        .iter()
                        .enumerate()
                        .map(|(i, &(id, w))| {
                            let noisy = mechanism::perturb(w, range, budget, &mut rng).unwrap();
                            WeightReport::at(id, noisy, pos as f64, i as f64)
                        })
                        .collect()
                })
                .collect();
            let aggregated = cloud_round(&batches, &dims, Some(clients)).unwrap();
            let within = (aggregated.layers[0].weights[0] - 0.4).abs() <= radius
                && (aggregated.layers[0].bias[0] + 0.25).abs() <= radius;
            hits += usize::from(within);
        }
        assert!(
            hits >= (0.95 * reps as f64) as usize,
            "only {hits}/{reps} repetitions inside the radius"
        );
    }

    #[test]
    fn adaptive_ranges_follow_the_aggregate() {
        let (train, test) = blob_pair(60, 12, 6);
        let mut config = base_config(vec![5, 4, 3], 6, 6, 3);
        config.range = RangePolicy::adaptive(WeightRange::new(0.0, 1.0).unwrap());
        let states = run_federated(&config, &train, &test).unwrap();
        for state in &states {
            for (layer_index, layer) in state.weights.layers.iter().enumerate() {
                let range = state.layer_ranges[layer_index];
                for offset in 0..layer.parameter_count() {
                    assert!(range.contains(layer.param(offset)));
                }
            }
        }
        // Ranges should have moved off the initial (0, 1).
        assert_ne!(states.last().unwrap().layer_ranges[0].radius(), 1.0);
    }

    #[test]
    fn runs_are_bit_identical_per_seed() {
        let (train, test) = blob_pair(60, 12, 7);
        let config = base_config(vec![5, 4, 3], 10, 5, 3);
        let a = run_federated(&config, &train, &test).unwrap();
        let b = run_federated(&config, &train, &test).unwrap();
        assert_eq!(a, b);
        let mut other = config;
        other.seed = 43;
        let c = run_federated(&other, &train, &test).unwrap();
        assert_ne!(a.last().unwrap().weights, c.last().unwrap().weights);
    }

    #[test]
    fn partial_selection_samples_without_replacement() {
        let (train, test) = blob_pair(60, 12, 8);
        let config = base_config(vec![5, 4, 3], 12, 5, 2);
        // Indirect check: the run completes and metrics exist per round;
        // selection correctness is covered by sampling k distinct indices.
        let states = run_federated(&config, &train, &test).unwrap();
        assert_eq!(states.len(), 2);
        for (i, s) in states.iter().enumerate() {
            assert_eq!(s.metrics.round, i);
            assert!(s.metrics.accuracy >= 0.0 && s.metrics.accuracy <= 1.0);
            assert!(s.metrics.clip_rate >= 0.0 && s.metrics.clip_rate <= 1.0);
        }
    }

    #[test]
    fn consumed_budget_tracks_composition_mode() {
        let (train, test) = blob_pair(40, 9, 9);
        let mut config = base_config(vec![5, 3], 4, 4, 2);
        let d = (5 * 3 + 3) as f64;
        config.composition = CompositionMode::NoShuffle;
        let states = run_federated(&config, &train, &test).unwrap();
        assert_eq!(states[0].metrics.consumed_budget, d);
        assert_eq!(states[1].metrics.consumed_budget, 2.0 * d);
        config.composition = CompositionMode::ParameterShuffle;
        let states = run_federated(&config, &train, &test).unwrap();
        assert_eq!(states[1].metrics.consumed_budget, 1.0);
    }

    #[test]
    fn round_state_serialization_carries_no_client_markers() {
        let (train, test) = blob_pair(40, 9, 10);
        let config = base_config(vec![5, 3], 4, 4, 1);
        let states = run_federated(&config, &train, &test).unwrap();
        let json = serde_json::to_string(&states).unwrap();
        assert!(!json.contains("client"));
    }

    #[test]
    fn config_validation_rejects_mismatches() {
        let (train, test) = blob_pair(40, 9, 11);
        let mut config = base_config(vec![4, 3], 4, 4, 1); // wrong input dim
        assert!(run_federated(&config, &train, &test).is_err());
        config.model.dims = vec![5, 4]; // wrong class count
        assert!(run_federated(&config, &train, &test).is_err());
        config.model.dims = vec![5, 3];
        config.selected_clients = 9;
        assert!(run_federated(&config, &train, &test).is_err());
        config.selected_clients = 4;
        config.total_clients = 100; // more clients than rows
        assert!(run_federated(&config, &train, &test).is_err());
    }

    #[test]
    fn dropped_reports_still_aggregate_when_allowed() {
        let (train, test) = blob_pair(200, 20, 12);
        let mut config = base_config(vec![5, 4, 3], 20, 20, 2);
        config.reporting = ReportingMode::Shuffled(ShuffleSettings {
            drop_probability: 0.1,
            ..ShuffleSettings::default()
        });
        // With 20 clients and 10% loss the chance that some parameter loses
        // all 20 reports is negligible; the run must succeed and stay sane.
        let states = run_federated(&config, &train, &test).unwrap();
        assert_eq!(states.len(), 2);
    }
}
