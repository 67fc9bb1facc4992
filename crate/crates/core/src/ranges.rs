//! Per-layer weight ranges and the policy that maintains them.
//!
//! Every layer carries one symmetric range `[c - r, c + r]` used for clipping
//! and perturbation. A `Fixed` policy keeps the configured range forever; an
//! `Adaptive` policy recenters and resizes each layer after every aggregation
//! from the min/max of that layer's aggregated parameters, so the declared
//! ranges track the scale the weights actually occupy. The update runs on the
//! aggregated (already privatized) model only — it never sees raw client
//! weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::WeightRange;
use crate::model::ModelWeights;

/// Smallest radius an adaptive update will emit. Guards the degenerate case
/// of a constant layer, where the observed half-width is zero and the
/// mechanism would reject the range outright.
pub const RADIUS_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeMode {
    /// The initial range applies to every layer in every round.
    Fixed,
    /// Ranges are recomputed from each aggregated model.
    Adaptive,
}

/// Range policy plus the range every layer starts from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangePolicy {
    pub mode: RangeMode,
    pub initial: WeightRange,
}

impl RangePolicy {
    pub fn fixed(initial: WeightRange) -> Self {
        Self {
            mode: RangeMode::Fixed,
            initial,
        }
    }

    pub fn adaptive(initial: WeightRange) -> Self {
        Self {
            mode: RangeMode::Adaptive,
            initial,
        }
    }
}

/// One starting range per layer.
pub fn init_ranges(policy: &RangePolicy, layer_count: usize) -> Result<Vec<WeightRange>> {
    if layer_count == 0 {
        return Err(Error::CountTooSmall {
            what: "layer count",
            got: 0,
        });
    }
    Ok(vec![policy.initial; layer_count])
}

/// Min and max over a layer's weights and biases, rejecting non-finite
/// values with their location.
fn layer_extent(model: &ModelWeights, layer: usize) -> Result<(f64, f64)> {
    let l = &model.layers[layer];
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (offset, &v) in l.weights.iter().chain(&l.bias).enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteWeight { layer, offset });
        }
        min = min.min(v);
        max = max.max(v);
    }
    Ok((min, max))
}

/// Next round's ranges given the freshly aggregated model.
///
/// Fixed policies return `current` unchanged. Adaptive policies set each
/// layer to `center = (min + max) / 2`, `radius = max((max - min) / 2,
/// RADIUS_FLOOR)`; every aggregated parameter of the layer is inside the new
/// range by construction.
pub fn update_ranges(
    policy: &RangePolicy,
    current: &[WeightRange],
    aggregated: &ModelWeights,
) -> Result<Vec<WeightRange>> {
    if current.len() != aggregated.layer_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} ranges for a model with {} layers",
            current.len(),
            aggregated.layer_count()
        )));
    }
    match policy.mode {
        RangeMode::Fixed => Ok(current.to_vec()),
        RangeMode::Adaptive => (0..aggregated.layer_count())
            .map(|layer| {
                let (min, max) = layer_extent(aggregated, layer)?;
                let center = 0.5 * (min + max);
                let mut radius = (0.5 * (max - min)).max(RADIUS_FLOOR);
                // Rounding can leave an endpoint a few ulps outside; the
                // coverage guarantee is exact, so widen until it holds.
                while center + radius < max || center - radius > min {
                    radius = radius.next_up();
                }
                WeightRange::new(center, radius)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_with_layer_values(values: &[f64]) -> ModelWeights {
        // One layer, `len - 1` weights plus one bias, so both pools are read.
        let mut model = ModelWeights::zeros(&[values.len() - 1, 1]).unwrap();
        model.layers[0].weights.copy_from_slice(&values[..values.len() - 1]);
        model.layers[0].bias[0] = values[values.len() - 1];
        model
    }

    fn adaptive() -> RangePolicy {
        RangePolicy::adaptive(WeightRange::new(0.0, 1.0).unwrap())
    }

    #[test]
    fn init_repeats_the_initial_range() {
        let policy = RangePolicy::fixed(WeightRange::new(0.5, 0.075).unwrap());
        let ranges = init_ranges(&policy, 3).unwrap();
        assert_eq!(ranges.len(), 3);
        for r in ranges {
            assert_eq!(r.center(), 0.5);
            assert_eq!(r.radius(), 0.075);
        }
        assert!(init_ranges(&policy, 0).is_err());
    }

    #[test]
    fn adaptive_update_tracks_min_and_max() {
        let model = model_with_layer_values(&[-1.0, 0.0, 3.0]);
        let current = init_ranges(&adaptive(), 1).unwrap();
        let updated = update_ranges(&adaptive(), &current, &model).unwrap();
        assert_eq!(updated[0].center(), 1.0);
        assert_eq!(updated[0].radius(), 2.0);
    }

    #[test]
    fn constant_layer_gets_the_floor_radius() {
        let model = model_with_layer_values(&[0.5, 0.5, 0.5]);
        let current = init_ranges(&adaptive(), 1).unwrap();
        let updated = update_ranges(&adaptive(), &current, &model).unwrap();
        assert_eq!(updated[0].center(), 0.5);
        assert_eq!(updated[0].radius(), RADIUS_FLOOR);
    }

    #[test]
    fn fixed_policy_never_moves() {
        let policy = RangePolicy::fixed(WeightRange::new(0.0, 1.0).unwrap());
        let model = model_with_layer_values(&[-7.0, 2.0, 9.0]);
        let current = init_ranges(&policy, 1).unwrap();
        let updated = update_ranges(&policy, &current, &model).unwrap();
        assert_eq!(updated, current);
    }

    #[test]
    fn update_covers_every_aggregated_weight() {
        let model = model_with_layer_values(&[0.3, -0.8, 0.05, 0.64]);
        let current = init_ranges(&adaptive(), 1).unwrap();
        let updated = update_ranges(&adaptive(), &current, &model).unwrap();
        for &v in model.layers[0].weights.iter().chain(&model.layers[0].bias) {
            assert!(updated[0].contains(v));
        }
    }

    #[test]
    fn non_finite_weights_are_rejected_with_location() {
        let model = model_with_layer_values(&[0.0, f64::NAN, 1.0]);
        let current = init_ranges(&adaptive(), 1).unwrap();
        match update_ranges(&adaptive(), &current, &model).unwrap_err() {
            Error::NonFiniteWeight { layer: 0, offset: 1 } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn range_count_must_match_layer_count() {
        let model = model_with_layer_values(&[0.0, 1.0]);
        assert!(update_ranges(&adaptive(), &[], &model).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Scaling all weights by s > 0 scales adaptive centers and radii
            /// by s (away from the floor).
            #[test]
            fn adaptive_ranges_are_scale_equivariant(
                values in proptest::collection::vec(-5.0..5.0f64, 3..20),
                scale in 0.1..10.0f64,
            ) {
                let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - values.iter().cloned().fold(f64::INFINITY, f64::min);
                prop_assume!(spread > 0.01); // keep clear of the radius floor
                let model = model_with_layer_values(&values);
                let scaled_values: Vec<f64> = values.iter().map(|v| v * scale).collect();
                let scaled_model = model_with_layer_values(&scaled_values);
                let current = init_ranges(&adaptive(), 1).unwrap();
                let base = update_ranges(&adaptive(), &current, &model).unwrap();
                let scaled = update_ranges(&adaptive(), &current, &scaled_model).unwrap();
                prop_assert!((scaled[0].center() - scale * base[0].center()).abs() < 1e-9 * scale.max(1.0));
                prop_assert!((scaled[0].radius() - scale * base[0].radius()).abs() < 1e-9 * scale.max(1.0));
            }

            /// Every update output is a valid mechanism range.
            #[test]
            fn updated_ranges_are_always_valid(
                values in proptest::collection::vec(-100.0..100.0f64, 2..30),
            ) {
                let model = model_with_layer_values(&values);
                let current = init_ranges(&adaptive(), 1).unwrap();
                let updated = update_ranges(&adaptive(), &current, &model).unwrap();
                prop_assert!(updated[0].radius() >= RADIUS_FLOOR);
            }
        }
    }
}
