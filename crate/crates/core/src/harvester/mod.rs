//! Energy-harvester models: moment computation, the small-signal polynomial
//! model (A), the saturating logistic model (B), and a sampling cross-check.

mod model;
mod moments;
mod montecarlo;

pub use model::{
    model_a_partials, pdel_model_a, pdel_model_b, q_tilde, Harvester, ModelAParams, ModelBParams,
};
pub use moments::{MomentPartials, MomentSet};
pub use montecarlo::{pdel_monte_carlo_check, McEstimate, MIN_SAMPLES};

use num_complex::Complex64;

use crate::error::Result;
use crate::transceiver::Constellation;

/// Moments of a batch (arithmetic mean).
pub fn compute_moments(points: &[Complex64]) -> Result<MomentSet> {
    MomentSet::of_batch(points)
}

/// Moments of a constellation under its probabilities.
pub fn constellation_moments(c: &Constellation) -> Result<MomentSet> {
    MomentSet::weighted(&c.points, &c.probabilities)
}
