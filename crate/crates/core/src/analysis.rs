//! Statistical verification harness: Monte Carlo checks of every closed-form
//! guarantee, plus deliberately corrupted mechanism variants that prove the
//! checks would notice a wrong implementation.
//!
//! Every check returns a [`VerificationReport`] pairing the theoretical value
//! with the measured one and the gate that was applied, so a run can be
//! archived as structured records and audited later. Sample counts are
//! parameters: callers trade runtime for statistical power, while the gates
//! themselves live in [`tolerances`] and never move.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{synthetic_blobs, BlobConfig};
use crate::error::{Error, Result};
use crate::federation::{
    run_federated, FederationConfig, ModelSpec, PerturbationMode, ReportingMode, ShuffleSettings,
};
use crate::mechanism::{
    self, concentration_radius, mean_variance_bounds, mechanism_variance, variance_bound,
    PrivacyBudget, WeightRange,
};
use crate::model::SgdConfig;
use crate::ranges::RangePolicy;
use crate::seeds::{self, Stream};
use crate::shuffle::{schedule, CompositionMode, ShuffleConfig, TimingProfile, WeightId};

/// Statistical gates. Each constant documents why its value is safe: loose
/// enough that a correct implementation passes with high probability at the
/// standard sample sizes, tight enough that the mutation suite fails.
pub mod tolerances {
    /// Bias gate in units of `sigma / sqrt(samples)`. Four standard errors
    /// give a per-cell false-failure rate of ~6e-5.
    pub const BIAS_SIGMA_GATE: f64 = 4.0;

    /// Relative error allowed between empirical and closed-form variance.
    /// The sampling noise of the sample variance stays well under 1% at 1e6
    /// draws except at extreme success probabilities.
    pub const VARIANCE_RELATIVE: f64 = 0.01;

    /// Multiplicative slack when checking the worst-case variance bound.
    pub const VARIANCE_BOUND_SLACK: f64 = 1.01;

    /// The empirical variance of the estimated mean must fall inside
    /// `[low * lower_bound, high * upper_bound]`.
    pub const MEAN_VARIANCE_LOW: f64 = 0.9;
    pub const MEAN_VARIANCE_HIGH: f64 = 1.1;

    /// Slack on empirical tail frequency, in standard errors of a Bernoulli
    /// rate at the target level.
    pub const EXCEEDANCE_SE_GATE: f64 = 3.0;

    /// Relative gap allowed between the closed-form privacy ratio and
    /// `e^eps`.
    pub const LDP_ANALYTIC_RELATIVE: f64 = 1e-12;

    /// Gate on the empirical log-ratio, in delta-method standard errors.
    pub const LDP_EMPIRICAL_SE_GATE: f64 = 3.0;

    /// The endpoint histogram is only meaningful when the rarer outcome is
    /// expected at least this often.
    pub const LDP_MIN_EXPECTED_RARE: f64 = 100.0;

    /// Kolmogorov-Smirnov critical coefficient at significance 0.01; the
    /// critical value is this over sqrt(n).
    pub const KS_COEFFICIENT_ALPHA_01: f64 = 1.628;

    /// Gate on the timing-linkage attacker, in standard errors around the
    /// chance rate 1/k.
    pub const ATTACK_SE_GATE: f64 = 3.0;

    /// Accuracy-point margin the adaptive policy must win by on the
    /// heterogeneous-scale model.
    pub const ADAPTIVE_GAIN_POINTS: f64 = 0.10;

    /// Accuracy-point band within which fixed and adaptive must agree on the
    /// shallow homogeneous model.
    pub const ADAPTIVE_PARITY_POINTS: f64 = 0.03;
}

/// Which implementation of the weight mechanism a check runs against.
///
/// The two corrupted variants exist so the harness can demonstrate its own
/// power: a check that passes for `Standard` must fail for the variant that
/// breaks the property it claims to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    /// The real mechanism.
    Standard,
    /// High/low selection probabilities exchanged. Mirrors the output
    /// distribution around the range center: breaks bias away from the
    /// center, flips the privacy ratio, and leaves the variance untouched
    /// (the mirrored two-point law has the same second moment).
    SwappedProbabilities,
    /// Output levels at twice the correct distance. Preserves the privacy
    /// ratio but roughly quadruples the variance and doubles the deviation
    /// from the center.
    DoubledCoefficient,
}

impl MechanismKind {
    /// Kebab-case name, matching the serialized form.
    pub fn label(self) -> &'static str {
        match self {
            MechanismKind::Standard => "standard",
            MechanismKind::SwappedProbabilities => "swapped-probabilities",
            MechanismKind::DoubledCoefficient => "doubled-coefficient",
        }
    }

    fn index(self) -> u64 {
        match self {
            MechanismKind::Standard => 0,
            MechanismKind::SwappedProbabilities => 1,
            MechanismKind::DoubledCoefficient => 2,
        }
    }
}

/// One sample from the selected mechanism variant. `Standard` goes through
/// the production sampler; the variants corrupt it in controlled ways while
/// consuming randomness identically.
pub fn sample_mechanism(
    kind: MechanismKind,
    weight: f64,
    range: WeightRange,
    budget: PrivacyBudget,
    rng: &mut impl Rng,
) -> Result<f64> {
    match kind {
        MechanismKind::Standard => mechanism::perturb(weight, range, budget, rng),
        MechanismKind::SwappedProbabilities => {
            let p = mechanism::high_output_probability(weight, range, budget)?;
            let (low, high) = mechanism::output_levels(range, budget);
            let u: f64 = rng.random();
            Ok(if u < 1.0 - p { high } else { low })
        }
        MechanismKind::DoubledCoefficient => {
            let p = mechanism::high_output_probability(weight, range, budget)?;
            let k = budget.coefficient();
            let u: f64 = rng.random();
            Ok(if u < p {
                range.center() + 2.0 * range.radius() * k
            } else {
                range.center() - 2.0 * range.radius() * k
            })
        }
    }
}

/// Outcome of one statistical check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    /// Short name of the property checked.
    pub check: String,
    /// Mechanism variant the check ran against.
    pub mechanism: MechanismKind,
    pub passed: bool,
    /// Closed-form prediction the measurement was held to.
    pub theoretical: f64,
    /// The measurement.
    pub empirical: f64,
    /// Absolute half-width of the gate applied (0 when the gate is a
    /// one-sided or interval condition described in `detail`).
    pub tolerance: f64,
    /// Human-readable specifics: sample sizes, intermediate numbers,
    /// skipped sub-checks.
    pub detail: String,
}

fn verify_rng(seed: u64, check: u64, kind: MechanismKind) -> ChaCha8Rng {
    seeds::rng_for(seed, Stream::Verify, check, kind.index())
}

/// Unbiasedness: the sample mean of repeated perturbations of one weight
/// must sit within a few standard errors of that weight.
pub fn verify_bias(
    kind: MechanismKind,
    weight: f64,
    range: WeightRange,
    budget: PrivacyBudget,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if samples == 0 {
        return Err(Error::CountTooSmall {
            what: "sample count",
            got: 0,
        });
    }
    let mut rng = verify_rng(seed, 0, kind);
    let mut sum = 0.0;
    for _ in 0..samples {
        sum += sample_mechanism(kind, weight, range, budget, &mut rng)?;
    }
    let mean = sum / samples as f64;
    let sigma = mechanism_variance(weight, range, budget)?.sqrt();
    let gate = tolerances::BIAS_SIGMA_GATE * sigma / (samples as f64).sqrt();
    Ok(VerificationReport {
        check: "bias".into(),
        mechanism: kind,
        passed: (mean - weight).abs() <= gate,
        theoretical: weight,
        empirical: mean,
        tolerance: gate,
        detail: format!(
            "{samples} samples at w = {weight}, range ({}, {}), eps = {}",
            range.center(),
            range.radius(),
            budget.epsilon()
        ),
    })
}

/// Single-output variance: the sample variance must match the closed form to
/// a small relative error and respect the worst-case bound.
pub fn verify_variance(
    kind: MechanismKind,
    weight: f64,
    range: WeightRange,
    budget: PrivacyBudget,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if samples < 2 {
        return Err(Error::CountTooSmall {
            what: "sample count",
            got: samples,
        });
    }
    let mut rng = verify_rng(seed, 1, kind);
    // Welford's online variance; one pass, numerically stable.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..samples {
        let x = sample_mechanism(kind, weight, range, budget, &mut rng)?;
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let sample_variance = m2 / (samples - 1) as f64;
    let expected = mechanism_variance(weight, range, budget)?;
    let bound = variance_bound(range, budget);
    let gate = tolerances::VARIANCE_RELATIVE * expected;
    let within_form = (sample_variance - expected).abs() <= gate;
    let within_bound = sample_variance <= bound * tolerances::VARIANCE_BOUND_SLACK;
    Ok(VerificationReport {
        check: "variance".into(),
        mechanism: kind,
        passed: within_form && within_bound,
        theoretical: expected,
        empirical: sample_variance,
        tolerance: gate,
        detail: format!(
            "{samples} samples at w = {weight}; worst-case bound {bound:.6} (respected: {within_bound})"
        ),
    })
}

/// Variance of the estimated mean across a cohort with per-client radii:
/// the measurement must land inside the closed-form envelope.
pub fn verify_mean_variance(
    kind: MechanismKind,
    center: f64,
    weights: &[f64],
    radii: &[f64],
    budget: PrivacyBudget,
    repetitions: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if weights.len() != radii.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} radii",
            weights.len(),
            radii.len()
        )));
    }
    if repetitions < 2 {
        return Err(Error::CountTooSmall {
            what: "repetition count",
            got: repetitions,
        });
    }
    let ranges: Vec<WeightRange> = radii
        .iter()
        .map(|&r| WeightRange::new(center, r))
        .collect::<Result<_>>()?;
    let bounds = mean_variance_bounds(radii, budget)?;
    let mut rng = verify_rng(seed, 2, kind);
    let n = weights.len() as f64;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..repetitions {
        let mut sum = 0.0;
        for (&w, range) in weights.iter().zip(&ranges) {
            sum += sample_mechanism(kind, w, *range, budget, &mut rng)?;
        }
        let estimate = sum / n;
        let delta = estimate - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (estimate - mean);
    }
    let observed = m2 / (repetitions - 1) as f64;
    let low_gate = tolerances::MEAN_VARIANCE_LOW * bounds.lower;
    let high_gate = tolerances::MEAN_VARIANCE_HIGH * bounds.upper;
    Ok(VerificationReport {
        check: "mean-variance".into(),
        mechanism: kind,
        passed: observed >= low_gate && observed <= high_gate,
        theoretical: bounds.upper,
        empirical: observed,
        tolerance: 0.0,
        detail: format!(
            "{repetitions} repetitions, {} clients; envelope [{:.3e}, {:.3e}], gated to [{low_gate:.3e}, {high_gate:.3e}]",
            weights.len(),
            bounds.lower,
            bounds.upper
        ),
    })
}

/// Concentration: the estimated mean must leave the closed-form deviation
/// radius no more often than the radius promises.
///
/// Clients sit halfway between center and top of the range — a placement
/// the bound still covers comfortably, while both corrupted variants land
/// their mass outside the radius.
pub fn verify_concentration(
    kind: MechanismKind,
    radius: f64,
    budget: PrivacyBudget,
    clients: usize,
    beta: f64,
    repetitions: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if repetitions == 0 {
        return Err(Error::CountTooSmall {
            what: "repetition count",
            got: 0,
        });
    }
    let range = WeightRange::new(0.0, radius)?;
    let weight = 0.5 * radius;
    let lambda = concentration_radius(radius, budget, clients, beta)?;
    let mut rng = verify_rng(seed, 3, kind);
    let mut exceeded = 0usize;
    for _ in 0..repetitions {
        let mut sum = 0.0;
        for _ in 0..clients {
            sum += sample_mechanism(kind, weight, range, budget, &mut rng)?;
        }
        if (sum / clients as f64 - weight).abs() >= lambda {
            exceeded += 1;
        }
    }
    let rate = exceeded as f64 / repetitions as f64;
    let slack =
        tolerances::EXCEEDANCE_SE_GATE * (beta * (1.0 - beta) / repetitions as f64).sqrt();
    Ok(VerificationReport {
        check: "concentration".into(),
        mechanism: kind,
        passed: rate <= beta + slack,
        theoretical: beta,
        empirical: rate,
        tolerance: slack,
        detail: format!(
            "{repetitions} repetitions of {clients} clients at w = {weight}; radius {lambda:.6}"
        ),
    })
}

/// Empirical quantile of `|estimated mean - true weight|` over repeated
/// cohorts; used to watch the `1/sqrt(n)` scaling directly.
pub fn deviation_quantile(
    kind: MechanismKind,
    radius: f64,
    budget: PrivacyBudget,
    clients: usize,
    quantile: f64,
    repetitions: usize,
    seed: u64,
) -> Result<f64> {
    if repetitions == 0 {
        return Err(Error::CountTooSmall {
            what: "repetition count",
            got: 0,
        });
    }
    if !(0.0 < quantile && quantile < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "quantile must lie in (0, 1), got {quantile}"
        )));
    }
    let range = WeightRange::new(0.0, radius)?;
    let weight = 0.5 * radius;
    let mut rng = verify_rng(seed, 4, kind);
    let mut deviations = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let mut sum = 0.0;
        for _ in 0..clients {
            sum += sample_mechanism(kind, weight, range, budget, &mut rng)?;
        }
        deviations.push((sum / clients as f64 - weight).abs());
    }
    deviations.sort_by(f64::total_cmp);
    let index = ((quantile * repetitions as f64).ceil() as usize).clamp(1, repetitions) - 1;
    Ok(deviations[index])
}

/// Privacy ratio: the worst-case output-probability ratio must equal
/// `e^eps` analytically, and an endpoint histogram must reproduce it.
///
/// The analytic part uses the simplified endpoint probabilities and
/// cross-checks them against the generic affine probability, so a broken
/// probability function cannot hide behind the simplification. The
/// histogram compares the directed ratio `P(high | top) / P(high | bottom)`,
/// which a probability swap inverts to `e^-eps`.
pub fn verify_ldp(
    kind: MechanismKind,
    range: WeightRange,
    budget: PrivacyBudget,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if samples == 0 {
        return Err(Error::CountTooSmall {
            what: "sample count",
            got: 0,
        });
    }
    let target = budget.epsilon().exp();
    let e = target;
    let (closed_top, closed_bottom) = match kind {
        MechanismKind::SwappedProbabilities => (1.0 / (e + 1.0), e / (e + 1.0)),
        _ => (e / (e + 1.0), 1.0 / (e + 1.0)),
    };
    let analytic_ratio = closed_top / closed_bottom;
    let analytic_ok = (analytic_ratio - target).abs() <= tolerances::LDP_ANALYTIC_RELATIVE * target;

    // The closed endpoint forms must agree with the generic probability the
    // sampler actually uses (looser gate: the generic form loses digits to
    // cancellation at large eps).
    let generic = |w: f64| -> Result<f64> {
        let p = mechanism::high_output_probability(w, range, budget)?;
        Ok(match kind {
            MechanismKind::SwappedProbabilities => 1.0 - p,
            _ => p,
        })
    };
    let consistent = (generic(range.high())? - closed_top).abs() <= 1e-9
        && (generic(range.low())? - closed_bottom).abs() <= 1e-9;

    // Endpoint histogram, skipped when the rarer outcome would be too rare
    // to measure.
    let rare = closed_top
        .min(1.0 - closed_top)
        .min(closed_bottom)
        .min(1.0 - closed_bottom);
    let mut empirical_ratio = analytic_ratio;
    let mut empirical_ok = true;
    let detail_extra = if rare * samples as f64 >= tolerances::LDP_MIN_EXPECTED_RARE {
        let mut rng = verify_rng(seed, 5, kind);
        let mut count_high = [0usize; 2];
        for (slot, w) in [range.high(), range.low()].into_iter().enumerate() {
            for _ in 0..samples {
                if sample_mechanism(kind, w, range, budget, &mut rng)? > range.center() {
                    count_high[slot] += 1;
                }
            }
        }
        let p_top = count_high[0] as f64 / samples as f64;
        let p_bottom = count_high[1] as f64 / samples as f64;
        if p_top == 0.0 || p_bottom == 0.0 || p_top == 1.0 || p_bottom == 1.0 {
            empirical_ok = false;
            format!("; degenerate histogram (p_top {p_top}, p_bottom {p_bottom})")
        } else {
            empirical_ratio = p_top / p_bottom;
            let se_log = ((1.0 - p_top) / (samples as f64 * p_top)
                + (1.0 - p_bottom) / (samples as f64 * p_bottom))
                .sqrt();
            let gate = tolerances::LDP_EMPIRICAL_SE_GATE * se_log;
            empirical_ok = (empirical_ratio.ln() - budget.epsilon()).abs() <= gate;
            format!(
                "; histogram ratio {empirical_ratio:.6} from {samples} samples per endpoint (log gate {gate:.2e})"
            )
        }
    } else {
        format!(
            "; histogram skipped, rarer outcome expects {:.1} < {} occurrences",
            rare * samples as f64,
            tolerances::LDP_MIN_EXPECTED_RARE
        )
    };

    Ok(VerificationReport {
        check: "ldp-ratio".into(),
        mechanism: kind,
        passed: analytic_ok && consistent && empirical_ok,
        theoretical: target,
        empirical: empirical_ratio,
        tolerance: tolerances::LDP_ANALYTIC_RELATIVE * target,
        detail: format!(
            "eps = {}; analytic ratio {analytic_ratio:.12e} (closed/generic consistent: {consistent}){detail_extra}",
            budget.epsilon()
        ),
    })
}

/// One-sample Kolmogorov-Smirnov statistic against the uniform distribution
/// on `[low, high]`.
pub fn ks_uniform_statistic(values: &[f64], low: f64, high: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyAggregate("sample values"));
    }
    if !(high > low) || !low.is_finite() || !high.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "invalid uniform support [{low}, {high}]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        let f = ((v - low) / (high - low)).clamp(0.0, 1.0);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    Ok(d)
}

/// Mean accuracy of a timing-linkage attacker against the shuffled channel.
///
/// Each trial builds a cohort with heterogeneous hardware, schedules
/// `reports_per_client` reports per client under the synchronized-start
/// rule, pools them in arrival order and lets the attacker assign the i-th
/// block of reports to the i-th client. Arrival times are identically
/// distributed across clients, so no assignment beats chance `1/clients` in
/// expectation.
pub fn timing_linkage_accuracy(
    clients: usize,
    reports_per_client: usize,
    window: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if clients == 0 || reports_per_client == 0 || trials == 0 {
        return Err(Error::CountTooSmall {
            what: "attack dimensions",
            got: 0,
        });
    }
    let mut total_correct = 0usize;
    for trial in 0..trials {
        let mut setup_rng = seeds::rng_for(seed, Stream::Verify, 6, trial as u64);
        let profiles: Vec<TimingProfile> = (0..clients)
            .map(|_| {
                TimingProfile::new(
                    setup_rng.random_range(0.0..2.0),
                    setup_rng.random_range(0.0..0.3),
                )
            })
            .collect::<Result<_>>()?;
        let slowest = profiles.iter().map(|p| p.response()).fold(0.0f64, f64::max);
        let config = ShuffleConfig::new(slowest, window)?;
        let entries: Vec<(WeightId, f64)> = (0..reports_per_client)
            .map(|offset| (WeightId { layer: 0, offset }, 0.0))
            .collect();
        // (arrival, tiebreak, true sender)
        let mut pooled: Vec<(f64, f64, usize)> = Vec::with_capacity(clients * reports_per_client);
        for (client, profile) in profiles.iter().enumerate() {
            let mut rng = seeds::rng_for(seed, Stream::Verify, 7, (trial * clients + client) as u64);
            for report in schedule(&entries, *profile, &config, &mut rng)? {
                pooled.push((report.arrival, report.tiebreak, client));
            }
        }
        pooled.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for (position, &(_, _, truth)) in pooled.iter().enumerate() {
            if position / reports_per_client == truth {
                total_correct += 1;
            }
        }
    }
    Ok(total_correct as f64 / (trials * clients * reports_per_client) as f64)
}

/// Scenario shared by the adaptive-range experiments: a blob task, a model,
/// a federated configuration template, and the initial range both policies
/// start from.
#[derive(Debug, Clone)]
pub struct RangeComparisonScenario {
    pub blobs: BlobConfig,
    pub dims: Vec<usize>,
    pub init_scales: Option<Vec<f64>>,
    pub sgd: SgdConfig,
    pub epsilon: f64,
    pub total_clients: usize,
    pub rounds: usize,
    pub initial_radius: f64,
}

impl RangeComparisonScenario {
    /// Four dense layers initialised at scales a factor of twenty apart, on
    /// a task hard enough that noise-corrupted features do not suffice. A
    /// global unit range drowns the small layers in noise; per-layer
    /// adaptive ranges keep every layer's noise proportional to its scale.
    pub fn heterogeneous() -> Self {
        Self {
            blobs: BlobConfig {
                train_samples: 2000,
                test_samples: 1000,
                feature_dim: 16,
                classes: 10,
                center_scale: 1.8,
            },
            dims: vec![16, 32, 32, 32, 10],
            init_scales: Some(vec![1.0, 0.4, 0.15, 0.05]),
            sgd: SgdConfig {
                learning_rate: 0.05,
                batch_size: 8,
                epochs: 8,
            },
            epsilon: 5.0,
            total_clients: 200,
            rounds: 12,
            initial_radius: 1.0,
        }
    }

    /// One dense layer at a single scale with a well-chosen prior range:
    /// adapting the range should change nothing.
    pub fn homogeneous() -> Self {
        Self {
            blobs: BlobConfig {
                train_samples: 2000,
                test_samples: 1000,
                feature_dim: 16,
                classes: 10,
                center_scale: 2.2,
            },
            dims: vec![16, 10],
            init_scales: None,
            sgd: SgdConfig {
                learning_rate: 0.05,
                batch_size: 8,
                epochs: 5,
            },
            epsilon: 5.0,
            total_clients: 200,
            rounds: 12,
            initial_radius: 0.2,
        }
    }

    pub fn policy(&self, adaptive: bool) -> Result<RangePolicy> {
        let initial = WeightRange::new(0.0, self.initial_radius)?;
        Ok(if adaptive {
            RangePolicy::adaptive(initial)
        } else {
            RangePolicy::fixed(initial)
        })
    }

    /// Accuracy of the final aggregated model under the given range policy.
    pub fn run(&self, policy: RangePolicy, seed: u64) -> Result<f64> {
        let (train, test) = synthetic_blobs(&self.blobs, seed)?;
        let config = FederationConfig {
            model: ModelSpec {
                dims: self.dims.clone(),
                init_scales: self.init_scales.clone(),
            },
            total_clients: self.total_clients,
            selected_clients: self.total_clients,
            rounds: self.rounds,
            sgd: self.sgd,
            budget: PrivacyBudget::new(self.epsilon)?,
            range: policy,
            perturbation: PerturbationMode::TwoPoint,
            reporting: ReportingMode::Shuffled(ShuffleSettings::default()),
            composition: CompositionMode::ParameterShuffle,
            seed,
        };
        let states = run_federated(&config, &train, &test)?;
        Ok(states.last().expect("at least one round").metrics.accuracy)
    }

    /// Accuracy gap `adaptive - fixed` on this scenario.
    pub fn policy_gap(&self, seed: u64) -> Result<(f64, f64, f64)> {
        let fixed = self.run(self.policy(false)?, seed)?;
        let adaptive = self.run(self.policy(true)?, seed)?;
        Ok((fixed, adaptive, adaptive - fixed))
    }
}

/// On a model whose layers live at very different scales, the adaptive
/// range policy must beat the fixed unit range by a clear margin.
pub fn verify_adaptive_gain(seed: u64) -> Result<VerificationReport> {
    let scenario = RangeComparisonScenario::heterogeneous();
    let (fixed, adaptive, gap) = scenario.policy_gap(seed)?;
    Ok(VerificationReport {
        check: "adaptive-gain".into(),
        mechanism: MechanismKind::Standard,
        passed: gap >= tolerances::ADAPTIVE_GAIN_POINTS,
        theoretical: tolerances::ADAPTIVE_GAIN_POINTS,
        empirical: gap,
        tolerance: 0.0,
        detail: format!(
            "heterogeneous 4-layer model, eps = {}, {} clients, {} rounds: fixed {fixed:.4}, adaptive {adaptive:.4}",
            scenario.epsilon, scenario.total_clients, scenario.rounds
        ),
    })
}

/// On a shallow single-scale model, adaptive and fixed ranges must land at
/// practically the same accuracy.
pub fn verify_adaptive_parity(seed: u64) -> Result<VerificationReport> {
    let scenario = RangeComparisonScenario::homogeneous();
    let (fixed, adaptive, gap) = scenario.policy_gap(seed)?;
    Ok(VerificationReport {
        check: "adaptive-parity".into(),
        mechanism: MechanismKind::Standard,
        passed: gap.abs() < tolerances::ADAPTIVE_PARITY_POINTS,
        theoretical: 0.0,
        empirical: gap,
        tolerance: tolerances::ADAPTIVE_PARITY_POINTS,
        detail: format!(
            "shallow 1-layer model, eps = {}: fixed {fixed:.4}, adaptive {adaptive:.4}",
            scenario.epsilon
        ),
    })
}

/// Which families of the standard battery to run, and at what cost. The
/// full battery is the default; individual families can be switched off
/// when only part of the system is under scrutiny.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationPlan {
    /// Monte-Carlo draws per single-output check.
    pub samples: usize,
    /// Aggregate repetitions per mean/concentration check.
    pub repetitions: usize,
    pub seed: u64,
    /// Bias, variance, mean variance and concentration of the mechanism.
    pub mechanism_checks: bool,
    /// The differential-privacy ratio, analytic and empirical.
    pub privacy_checks: bool,
    /// Arrival uniformity and timing-linkage resistance of the channel.
    pub shuffle_checks: bool,
}

impl VerificationPlan {
    /// Every family enabled.
    pub fn all(samples: usize, repetitions: usize, seed: u64) -> Self {
        Self {
            samples,
            repetitions,
            seed,
            mechanism_checks: true,
            privacy_checks: true,
            shuffle_checks: true,
        }
    }

    /// Runs the enabled families against the real mechanism. All reports
    /// should come back `passed`.
    pub fn run(&self) -> Result<Vec<VerificationReport>> {
        let Self {
            samples,
            repetitions,
            seed,
            ..
        } = *self;
        let kind = MechanismKind::Standard;
        let budget = PrivacyBudget::new(1.0)?;
        let range = WeightRange::new(0.0, 1.0)?;
        let mut reports = Vec::new();
        if self.mechanism_checks {
            reports.push(verify_bias(kind, 0.3, range, budget, samples, seed)?);
            reports.push(verify_variance(kind, 0.5, range, budget, samples, seed)?);
            reports.push(verify_mean_variance(
                kind,
                0.0,
                &vec![0.0; 100],
                &vec![1.0; 100],
                budget,
                repetitions,
                seed,
            )?);
            reports.push(verify_concentration(
                kind,
                1.0,
                budget,
                100,
                0.05,
                repetitions,
                seed,
            )?);
        }
        if self.privacy_checks {
            reports.push(verify_ldp(kind, range, budget, samples, seed)?);
        }
        if self.shuffle_checks {
            reports.push(arrival_uniformity_report(repetitions, seed)?);
            reports.push(timing_linkage_report(seed)?);
        }
        Ok(reports)
    }
}

/// The full standard battery. All reports should come back `passed`.
pub fn standard_verification(
    samples: usize,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<VerificationReport>> {
    VerificationPlan::all(samples, repetitions, seed).run()
}

/// Channel check: scheduled arrivals are uniform over the send window.
fn arrival_uniformity_report(repetitions: usize, seed: u64) -> Result<VerificationReport> {
    let report = {
        let entries: Vec<(WeightId, f64)> = (0..64)
            .map(|offset| (WeightId { layer: 0, offset }, 0.0))
            .collect();
        let config = ShuffleConfig::new(1.0, 1.0)?;
        let mut values = Vec::new();
        let mut client = 0u64;
        while values.len() < repetitions.max(1000) {
            let mut rng = seeds::rng_for(seed, Stream::Verify, 8, client);
            let profile = TimingProfile::new(0.2 + 0.01 * (client % 50) as f64, 0.1)?;
            values.extend(
                schedule(&entries, profile, &config, &mut rng)?
                    .iter()
                    .map(|r| r.arrival),
            );
            client += 1;
        }
        let d = ks_uniform_statistic(&values, 1.0, 2.0)?;
        let critical = tolerances::KS_COEFFICIENT_ALPHA_01 / (values.len() as f64).sqrt();
        VerificationReport {
            check: "arrival-uniformity".into(),
            mechanism: MechanismKind::Standard,
            passed: d <= critical,
            theoretical: critical,
            empirical: d,
            tolerance: 0.0,
            detail: format!("KS statistic over {} arrivals vs U(1, 2)", values.len()),
        }
    };
    Ok(report)
}

/// Channel check: a timing-based linkage attacker does no better than
/// chance at assigning pooled reports to senders.
fn timing_linkage_report(seed: u64) -> Result<VerificationReport> {
    let clients = 10;
    let trials = 500;
    let accuracy = timing_linkage_accuracy(clients, 20, 1.0, trials, seed)?;
    let chance = 1.0 / clients as f64;
    // Per-report assignments within a trial are correlated; bound the
    // attacker's edge with the conservative per-trial standard error.
    let se = (chance * (1.0 - chance) / trials as f64).sqrt();
    let gate = tolerances::ATTACK_SE_GATE * se;
    Ok(VerificationReport {
        check: "timing-linkage".into(),
        mechanism: MechanismKind::Standard,
        passed: (accuracy - chance).abs() <= gate,
        theoretical: chance,
        empirical: accuracy,
        tolerance: gate,
        detail: format!("{trials} trials of {clients} clients x 20 reports"),
    })
}

/// The mutation battery: every report here must come back failed, proving
/// the corresponding check has teeth.
///
/// The probability swap is attacked where it is detectable (bias away from
/// the center, concentration, the privacy ratio). It provably cannot move
/// any variance — the mirrored two-point law has identical second moments —
/// so the variance checks demonstrate their power against the doubled
/// coefficient instead.
pub fn mutation_verification(
    samples: usize,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<VerificationReport>> {
    let budget = PrivacyBudget::new(1.0)?;
    let range = WeightRange::new(0.0, 1.0)?;
    let swapped = MechanismKind::SwappedProbabilities;
    let doubled = MechanismKind::DoubledCoefficient;
    Ok(vec![
        verify_bias(swapped, 0.6, range, budget, samples, seed)?,
        verify_bias(doubled, 0.6, range, budget, samples, seed)?,
        verify_variance(doubled, 0.5, range, budget, samples, seed)?,
        verify_mean_variance(
            doubled,
            0.0,
            &vec![0.0; 100],
            &vec![1.0; 100],
            budget,
            repetitions,
            seed,
        )?,
        verify_concentration(swapped, 1.0, budget, 100, 0.05, repetitions, seed)?,
        verify_concentration(doubled, 1.0, budget, 100, 0.05, repetitions, seed)?,
        verify_ldp(swapped, range, budget, samples, seed)?,
    ])
}
