//! Shared fixtures for unit tests.

use crate::env::{bernoulli_bandit, PartialFeedbackSpec};
use crate::prob::FiniteDistribution;

/// The canonical two-armed Bernoulli bandit: means (0.9, 0.1) under the
/// first parameter and (0.1, 0.9) under the second, uniform prior.
pub fn bernoulli2x2(horizon: usize) -> PartialFeedbackSpec {
    bernoulli_bandit(
        &[vec![0.9, 0.1], vec![0.1, 0.9]],
        &FiniteDistribution::uniform(2),
        horizon,
    )
    .unwrap()
}
