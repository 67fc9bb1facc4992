//! Parameter-level split and shuffle: each client tears its model into
//! individually addressed scalar reports, delays them so that send times
//! carry no information about the client, and the collector pools everything
//! into one anonymous arrival-ordered stream.
//!
//! The timing rule: every client knows the cohort's slowest response time
//! `T_S` and waits out the difference between `T_S` and its own compute +
//! communication time, then spreads its reports uniformly over a window of
//! length `T`. Arrival times are therefore i.i.d. `U(T_S, T_S + T)` for
//! every client regardless of hardware, which is what makes timing-based
//! linkage no better than guessing.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::PrivacyBudget;
use crate::model::ModelWeights;

/// Address of one scalar parameter: layer index plus flat offset within the
/// layer (row-major weights first, then biases).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WeightId {
    pub layer: usize,
    pub offset: usize,
}

/// One scalar report as the collector sees it: an address, a value and an
/// arrival time. Deliberately carries no sender identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightReport {
    pub id: WeightId,
    pub value: f64,
    pub arrival: f64,
    /// Secondary uniform draw that orders reports with equal arrival times
    /// (the degenerate window). Internal: not part of the wire format.
    #[serde(skip)]
    pub(crate) tiebreak: f64,
}

impl WeightReport {
    /// Report with an explicit arrival, for callers that stamp their own
    /// ordering (e.g. delay-free direct reporting).
    pub fn at(id: WeightId, value: f64, arrival: f64, tiebreak: f64) -> Self {
        Self {
            id,
            value,
            arrival,
            tiebreak,
        }
    }
}

/// Flattens a model into `(id, value)` pairs in canonical order: layers in
/// order, within a layer the row-major weight matrix then the biases.
pub fn split(model: &ModelWeights) -> Vec<(WeightId, f64)> {
    let mut entries = Vec::with_capacity(model.parameter_count());
    for (layer_index, layer) in model.layers.iter().enumerate() {
        for offset in 0..layer.parameter_count() {
            entries.push((
                WeightId {
                    layer: layer_index,
                    offset,
                },
                layer.param(offset),
            ));
        }
    }
    entries
}

/// Rebuilds a model of the given dims from `(id, value)` pairs in any order.
/// Every parameter must appear exactly once.
pub fn reassemble(
    dims: &[usize],
    entries: impl IntoIterator<Item = (WeightId, f64)>,
) -> Result<ModelWeights> {
    let mut model = ModelWeights::zeros(dims)?;
    let mut seen: Vec<Vec<bool>> = model
        .layers
        .iter()
        .map(|l| vec![false; l.parameter_count()])
        .collect();
    for (id, value) in entries {
        let valid = id.layer < model.layers.len()
            && id.offset < model.layers[id.layer].parameter_count();
        if !valid {
            return Err(Error::UnknownWeightId {
                layer: id.layer,
                offset: id.offset,
            });
        }
        if seen[id.layer][id.offset] {
            return Err(Error::DuplicateWeightId {
                layer: id.layer,
                offset: id.offset,
            });
        }
        seen[id.layer][id.offset] = true;
        model.layers[id.layer].set_param(id.offset, value);
    }
    for (layer, flags) in seen.iter().enumerate() {
        if let Some(offset) = flags.iter().position(|&s| !s) {
            return Err(Error::ReportCountMismatch {
                layer,
                offset,
                expected: 1,
                got: 0,
            });
        }
    }
    Ok(model)
}

/// Compute + communication time of one client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingProfile {
    pub local_compute: f64,
    pub comm_latency: f64,
}

impl TimingProfile {
    pub fn new(local_compute: f64, comm_latency: f64) -> Result<Self> {
        for (what, got) in [
            ("local compute time", local_compute),
            ("communication latency", comm_latency),
        ] {
            if !got.is_finite() || got < 0.0 {
                return Err(Error::InvalidTiming { what, got });
            }
        }
        Ok(Self {
            local_compute,
            comm_latency,
        })
    }

    /// Total time until this client could deliver its first report.
    pub fn response(self) -> f64 {
        self.local_compute + self.comm_latency
    }
}

/// Shared timing parameters of one reporting round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuffleConfig {
    /// Response time of the slowest cohort member; the synchronized start.
    pub slowest_response: f64,
    /// Length of the uniform send window after the synchronized start.
    pub window: f64,
    /// Optional symmetric error on each client's estimate of the start,
    /// modelling imperfect synchronization. Zero for the ideal rule.
    pub jitter: f64,
}

impl ShuffleConfig {
    pub fn new(slowest_response: f64, window: f64) -> Result<Self> {
        Self::with_jitter(slowest_response, window, 0.0)
    }

    pub fn with_jitter(slowest_response: f64, window: f64, jitter: f64) -> Result<Self> {
        for (what, got) in [
            ("slowest response", slowest_response),
            ("shuffle window", window),
            ("start jitter", jitter),
        ] {
            if !got.is_finite() || got < 0.0 {
                return Err(Error::InvalidTiming { what, got });
            }
        }
        Ok(Self {
            slowest_response,
            window,
            jitter,
        })
    }
}

/// Stamps one client's `(id, value)` entries with arrival times.
///
/// The client waits until the synchronized start (slowest response, plus its
/// jitter if configured) and then sends each report at an independent
/// uniform time inside the window. Returned reports are in send order. A
/// profile slower than the declared slowest response is a protocol violation
/// and fails loudly.
pub fn schedule(
    entries: &[(WeightId, f64)],
    profile: TimingProfile,
    config: &ShuffleConfig,
    rng: &mut impl Rng,
) -> Result<Vec<WeightReport>> {
    if profile.response() > config.slowest_response {
        return Err(Error::ProfileExceedsSlowest {
            response: profile.response(),
            slowest: config.slowest_response,
        });
    }
    let mut start = config.slowest_response;
    if config.jitter > 0.0 {
        start += config.jitter * (2.0 * rng.random::<f64>() - 1.0);
    }
    let mut reports: Vec<WeightReport> = entries
        .iter()
        .map(|&(id, value)| {
            let arrival = start + config.window * rng.random::<f64>();
            let tiebreak = rng.random::<f64>();
            WeightReport {
                id,
                value,
                arrival,
                tiebreak,
            }
        })
        .collect();
    sort_by_arrival(&mut reports);
    Ok(reports)
}

fn sort_by_arrival(reports: &mut [WeightReport]) {
    reports.sort_by(|a, b| {
        a.arrival
            .total_cmp(&b.arrival)
            .then(a.tiebreak.total_cmp(&b.tiebreak))
    });
}

/// Pools per-client batches into one anonymous stream ordered purely by
/// arrival time. Rejects a batch that reports the same parameter twice.
pub fn collect(batches: &[Vec<WeightReport>]) -> Result<Vec<WeightReport>> {
    let mut pooled = Vec::with_capacity(batches.iter().map(Vec::len).sum());
    for batch in batches {
        let mut ids: Vec<WeightId> = batch.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateWeightId {
                layer: w[0].layer,
                offset: w[0].offset,
            });
        }
        pooled.extend_from_slice(batch);
    }
    sort_by_arrival(&mut pooled);
    Ok(pooled)
}

/// Groups an arrival-ordered stream by parameter id, preserving arrival
/// order inside each group.
pub fn group_reports(stream: &[WeightReport]) -> BTreeMap<WeightId, Vec<f64>> {
    let mut groups: BTreeMap<WeightId, Vec<f64>> = BTreeMap::new();
    for report in stream {
        groups.entry(report.id).or_default().push(report.value);
    }
    groups
}

/// How per-report budgets compose into a total privacy cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositionMode {
    /// Reports stay linkable to their sender across weights and rounds:
    /// budgets add up over both.
    NoShuffle,
    /// Whole-model anonymization per round: budgets add up over the model
    /// dimension only.
    ModelShuffle,
    /// Per-parameter anonymization: a single per-report budget covers the
    /// whole training run.
    ParameterShuffle,
}

/// Total budget consumed after `rounds` rounds of reporting `dimension`
/// weights at `per_report` each.
pub fn composed_budget(
    mode: CompositionMode,
    per_report: PrivacyBudget,
    rounds: usize,
    dimension: usize,
) -> f64 {
    let eps = per_report.epsilon();
    match mode {
        CompositionMode::NoShuffle => eps * rounds as f64 * dimension as f64,
        CompositionMode::ModelShuffle => eps * dimension as f64,
        CompositionMode::ParameterShuffle => eps,
    }
}
