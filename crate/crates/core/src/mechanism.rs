//! Two-level randomized response for bounded real values.
//!
//! A weight `w` inside a declared range `[c - r, c + r]` is replaced by one
//! of exactly two outputs, `c + r*k` or `c - r*k`, where
//! `k = (e^eps + 1) / (e^eps - 1) > 1`. The high output is chosen with
//! probability `1/2 + (w - c) / (2*r*k)`, which is affine in `w`, so
//!
//! * the output is an unbiased estimate of `w`,
//! * its variance is `r^2*k^2 - (w - c)^2`, at most `r^2*k^2`,
//! * the probability of either output changes by at most a factor `e^eps`
//!   across the whole input range, which is the local differential privacy
//!   guarantee.
//!
//! Averaging many independent outputs concentrates around the true mean at a
//! `1/sqrt(n)` rate; [`concentration_radius`] gives the closed-form
//! Bernstein-style deviation bound and [`mean_variance_bounds`] the exact
//! variance envelope for heterogeneous per-client radii.
//!
//! The mechanism never clips. Out-of-range inputs are a caller bug (ranges
//! too narrow, clipping skipped) and fail loudly with
//! [`Error::WeightOutOfRange`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Privacy budget for a single scalar report.
///
/// Budgets below [`PrivacyBudget::MIN_EPSILON`] are rejected: the noise
/// coefficient grows like `2/eps` as `eps -> 0` and overflow-prone budgets
/// are invariably configuration mistakes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrivacyBudget {
    epsilon: f64,
}

impl PrivacyBudget {
    /// Smallest accepted epsilon.
    pub const MIN_EPSILON: f64 = 1e-3;

    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() {
            return Err(Error::BudgetNotFinite(epsilon));
        }
        if epsilon < Self::MIN_EPSILON {
            return Err(Error::BudgetTooSmall {
                epsilon,
                minimum: Self::MIN_EPSILON,
            });
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(self) -> f64 {
        self.epsilon
    }

    /// Noise coefficient `k = (e^eps + 1) / (e^eps - 1)`.
    ///
    /// Computed as `1 + 2 / expm1(eps)`: algebraically identical, but free of
    /// the catastrophic cancellation the textbook form suffers for small
    /// `eps`, and it rounds cleanly to 1.0 for huge budgets instead of
    /// overflowing.
    pub fn coefficient(self) -> f64 {
        1.0 + 2.0 / self.epsilon.exp_m1()
    }
}

/// Symmetric weight range `[center - radius, center + radius]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRange {
    center: f64,
    radius: f64,
}

impl WeightRange {
    pub fn new(center: f64, radius: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::InvalidCenter(center));
        }
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn center(self) -> f64 {
        self.center
    }

    pub fn radius(self) -> f64 {
        self.radius
    }

    pub fn low(self) -> f64 {
        self.center - self.radius
    }

    pub fn high(self) -> f64 {
        self.center + self.radius
    }

    pub fn contains(self, weight: f64) -> bool {
        weight >= self.low() && weight <= self.high()
    }

    /// Projects `weight` onto the range. Idempotent; NaN stays NaN so that
    /// downstream range checks fail loudly instead of laundering bad values.
    pub fn clip(self, weight: f64) -> f64 {
        weight.clamp(self.low(), self.high())
    }
}

/// The two possible outputs `(low, high) = (c - r*k, c + r*k)`.
pub fn output_levels(range: WeightRange, budget: PrivacyBudget) -> (f64, f64) {
    let k = budget.coefficient();
    (
        range.center() - range.radius() * k,
        range.center() + range.radius() * k,
    )
}

/// Probability of the high output, `1/2 + (w - c) / (2*r*k)`.
///
/// This is the affine acceptance probability rearranged around its midpoint;
/// for in-range weights it always lies in `(0, 1)` because `k > 1`.
pub fn high_output_probability(
    weight: f64,
    range: WeightRange,
    budget: PrivacyBudget,
) -> Result<f64> {
    if !range.contains(weight) {
        return Err(Error::WeightOutOfRange {
            weight,
            low: range.low(),
            high: range.high(),
        });
    }
    let k = budget.coefficient();
    Ok(0.5 + (weight - range.center()) / (2.0 * range.radius() * k))
}

/// Perturbs one in-range weight, consuming exactly one uniform draw.
pub fn perturb(
    weight: f64,
    range: WeightRange,
    budget: PrivacyBudget,
    rng: &mut impl Rng,
) -> Result<f64> {
    let p_high = high_output_probability(weight, range, budget)?;
    let (low, high) = output_levels(range, budget);
    let u: f64 = rng.random();
    Ok(if u < p_high { high } else { low })
}

/// Mean of perturbed outputs; the unbiased estimate of the mean of the
/// underlying true weights.
pub fn estimate_mean(outputs: &[f64]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::EmptyAggregate("perturbed outputs"));
    }
    Ok(outputs.iter().sum::<f64>() / outputs.len() as f64)
}

/// Exact variance of a single perturbed output: `r^2*k^2 - (w - c)^2`.
///
/// Largest at the range center, smallest at the endpoints; never exceeds
/// [`variance_bound`].
pub fn mechanism_variance(weight: f64, range: WeightRange, budget: PrivacyBudget) -> Result<f64> {
    if !range.contains(weight) {
        return Err(Error::WeightOutOfRange {
            weight,
            low: range.low(),
            high: range.high(),
        });
    }
    let k = budget.coefficient();
    let r = range.radius();
    let d = weight - range.center();
    Ok(r * r * k * k - d * d)
}

/// Worst-case single-output variance `r^2*k^2`, attained at `w = c`.
pub fn variance_bound(range: WeightRange, budget: PrivacyBudget) -> f64 {
    let rk = range.radius() * budget.coefficient();
    rk * rk
}

/// Variance envelope for the mean of `n` independent reports with
/// per-client radii `radii`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanVarianceBounds {
    /// `(k^2 - 1) * sum(r_u^2) / n^2`; attained when every client sits at a
    /// range endpoint.
    pub lower: f64,
    /// `k^2 * sum(r_u^2) / n^2`; attained when every client sits at its
    /// range center.
    pub upper: f64,
}

/// Bounds on the variance of the estimated mean over clients with the given
/// perturbation radii.
pub fn mean_variance_bounds(radii: &[f64], budget: PrivacyBudget) -> Result<MeanVarianceBounds> {
    if radii.is_empty() {
        return Err(Error::EmptyAggregate("client radii"));
    }
    let mut sum_sq = 0.0;
    for &r in radii {
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::InvalidRadius(r));
        }
        sum_sq += r * r;
    }
    let n = radii.len() as f64;
    let k = budget.coefficient();
    let upper = k * k * sum_sq / (n * n);
    let lower = upper - sum_sq / (n * n);
    Ok(MeanVarianceBounds { lower, upper })
}

/// Deviation radius `lambda` such that the mean of `n` reports (common
/// radius `r`) leaves `[mean - lambda, mean + lambda]` with probability at
/// most `beta`.
///
/// Inverts the Bernstein-style tail bound
/// `2 * exp(-n*lambda^2 / (2*r^2*k^2 + a*lambda))` with
/// `a = 4*r*e^eps / (3*(e^eps - 1))`, which is quadratic in `lambda`, so the
/// inverse is closed-form: `lambda = (L*a + sqrt(L^2*a^2 + 8*n*L*r^2*k^2))
/// / (2*n)` where `L = ln(2/beta)`.
pub fn concentration_radius(
    radius: f64,
    budget: PrivacyBudget,
    clients: usize,
    beta: f64,
) -> Result<f64> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::InvalidRadius(radius));
    }
    if clients == 0 {
        return Err(Error::CountTooSmall {
            what: "client count",
            got: clients,
        });
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidBeta(beta));
    }
    if beta == 1.0 {
        // The tail event is allowed to happen always; the smallest radius
        // with that property is zero.
        return Ok(0.0);
    }
    let n = clients as f64;
    let k = budget.coefficient();
    let big_l = (2.0 / beta).ln();
    // e^eps / (e^eps - 1) = 1 / (1 - e^-eps), safe for every accepted eps.
    let a = 4.0 * radius / (3.0 * -(-budget.epsilon()).exp_m1());
    let v = 2.0 * radius * radius * k * k;
    let la = big_l * a;
    Ok((la + (la * la + 4.0 * n * big_l * v).sqrt()) / (2.0 * n))
}

/// Worst-case probability ratio between the two outputs across the input
/// range: exactly `e^eps`.
///
/// The high-output probability is affine in `w`, so the extremes sit at the
/// range endpoints, where it equals `e^eps / (e^eps + 1)` and
/// `1 / (e^eps + 1)`. The ratio of those two is returned; the shared
/// denominator cancels, making the result independent of the range.
pub fn ldp_ratio(budget: PrivacyBudget) -> f64 {
    let e = budget.epsilon().exp();
    if !e.is_finite() {
        // Beyond eps ~ 709 the ratio itself overflows f64.
        return f64::INFINITY;
    }
    let denom = e + 1.0;
    (e / denom) / (1.0 / denom)
}
