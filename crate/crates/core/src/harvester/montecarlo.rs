//! Sampling cross-check for the closed-form delivered power.
//!
//! Messages are drawn from the constellation's distribution; the empirical
//! symbol frequencies stand in for the exact probabilities. For Model A the
//! plug-in estimate uses the sampled moments and its standard error comes
//! from the delta method (the linearized per-symbol integrand). For Model B
//! the estimate is the sample mean of the per-symbol output.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use super::model::{model_a_partials, pdel_model_a, Harvester};
use super::moments::MomentSet;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::transceiver::Constellation;

pub const MIN_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub num_samples: usize,
}

pub fn pdel_monte_carlo_check(
    constellation: &Constellation,
    harvester: &Harvester,
    num_samples: usize,
    stream: &RngStream,
) -> Result<McEstimate> {
    if num_samples < MIN_SAMPLES {
        return Err(Error::InvalidConfig(format!(
            "Monte-Carlo check needs at least {MIN_SAMPLES} samples, got {num_samples}"
        )));
    }
    if constellation.is_empty() {
        return Err(Error::Empty("constellation"));
    }
    let dist = WeightedIndex::new(&constellation.probabilities)
        .map_err(|e| Error::InvalidConfig(format!("constellation probabilities: {e}")))?;
    let mut rng = stream.rng();
    let mut counts = vec![0usize; constellation.len()];
    for _ in 0..num_samples {
        counts[dist.sample(&mut rng)] += 1;
    }
    let n = num_samples as f64;
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let pts = &constellation.points;

    let (value, integrand): (f64, Vec<f64>) = match harvester {
        Harvester::ModelA(p) => {
            let m = MomentSet::weighted(pts, &freq)?;
            let d = model_a_partials(&m, p);
            (pdel_model_a(&m, p), pts.iter().map(|x| d.linearized(*x)).collect())
        }
        Harvester::ModelB(p) => {
            let per: Vec<f64> = pts.iter().map(|x| p.per_symbol(x.norm_sqr())).collect();
            (per.iter().zip(&freq).map(|(v, w)| v * w).sum(), per)
        }
    };
    let mean: f64 = integrand.iter().zip(&freq).map(|(v, w)| v * w).sum();
    let var: f64 = integrand
        .iter()
        .zip(&freq)
        .map(|(v, w)| w * (v - mean).powi(2))
        .sum();
    Ok(McEstimate {
        value,
        stderr: (var / n).sqrt(),
        num_samples,
    })
}
