//! Delivered-power models.
//!
//! Model A (small input power): `P_del = alpha (Q + Q~) + beta P + gamma`,
//! a polynomial in the second and fourth moments of the channel input.
//!
//! Model B (large input power): a logistic saturation curve normalized to
//! pass through the origin,
//! `P_del = (Psi(P_in) - L_s Omega) / (1 - Omega)` with
//! `Psi(P) = L_s / (1 + exp(-a (P - b)))` and `Omega = 1 / (1 + exp(a b))`.
//! It is applied to each symbol's instantaneous power `P_in = |x_k|^2` and
//! averaged over the symbol distribution.

use num_complex::Complex64;

use super::moments::{MomentPartials, MomentSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelAParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ModelAParams {
    /// Fourth-moment-dominated at `P_a = 1e-3`.
    fn default() -> Self {
        Self {
            alpha: 0.3829,
            beta: 0.0034,
            gamma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelBParams {
    /// Saturation level (W).
    pub ls: f64,
    /// Steepness (1/W).
    pub a: f64,
    /// Turn-on point (W).
    pub b: f64,
}

impl Default for ModelBParams {
    fn default() -> Self {
        Self {
            ls: 0.02,
            a: 6400.0,
            b: 0.003,
        }
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ModelBParams {
    pub fn omega(&self) -> f64 {
        logistic(-self.a * self.b)
    }

    pub fn psi(&self, p_in: f64) -> f64 {
        self.ls * logistic(self.a * (p_in - self.b))
    }

    /// Delivered power for a single instantaneous input power.
    pub fn per_symbol(&self, p_in: f64) -> f64 {
        let omega = self.omega();
        (self.psi(p_in) - self.ls * omega) / (1.0 - omega)
    }

    /// `d per_symbol / d p_in`.
    pub fn per_symbol_slope(&self, p_in: f64) -> f64 {
        let z = self.a * (p_in - self.b);
        self.ls * self.a * logistic(z) * logistic(-z) / (1.0 - self.omega())
    }
}

/// Either harvester model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Harvester {
    ModelA(ModelAParams),
    ModelB(ModelBParams),
}

impl Harvester {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Harvester::ModelA(p) => [p.alpha, p.beta, p.gamma].iter().all(|v| v.is_finite() && *v >= 0.0),
            Harvester::ModelB(p) => p.ls > 0.0 && p.a > 0.0 && p.b > 0.0 && p.ls.is_finite() && p.a.is_finite() && p.b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid harvester parameters {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Harvester::ModelA(_) => "A",
            Harvester::ModelB(_) => "B",
        }
    }

    /// Probability-weighted delivered power of a discrete input.
    pub fn delivered_power(&self, points: &[Complex64], weights: &[f64]) -> Result<f64> {
        match self {
            Harvester::ModelA(p) => Ok(pdel_model_a(&MomentSet::weighted(points, weights)?, p)),
            Harvester::ModelB(p) => {
                check_inputs(points, weights)?;
                Ok(points
                    .iter()
                    .zip(weights)
                    .map(|(x, w)| w * p.per_symbol(x.norm_sqr()))
                    .sum())
            }
        }
    }

    /// Like [`Self::delivered_power`], also writing `d P_del / d x_k` into
    /// `grad` (packed as `d/dRe + j d/dIm`).
    pub fn delivered_power_with_grad(
        &self,
        points: &[Complex64],
        weights: &[f64],
        grad: &mut [Complex64],
    ) -> Result<f64> {
        if grad.len() != points.len() {
            return Err(Error::Dimension("gradient buffer length".into()));
        }
        match self {
            Harvester::ModelA(p) => {
                let m = MomentSet::weighted(points, weights)?;
                let partials = model_a_partials(&m, p);
                for ((g, x), w) in grad.iter_mut().zip(points).zip(weights) {
                    *g = partials.point_gradient(*x, *w);
                }
                Ok(pdel_model_a(&m, p))
            }
            Harvester::ModelB(p) => {
                check_inputs(points, weights)?;
                let mut total = 0.0;
                for ((g, x), w) in grad.iter_mut().zip(points).zip(weights) {
                    let pin = x.norm_sqr();
                    total += w * p.per_symbol(pin);
                    *g = x * (2.0 * w * p.per_symbol_slope(pin));
                }
                Ok(total)
            }
        }
    }
}

fn check_inputs(points: &[Complex64], weights: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Empty("harvester input"));
    }
    if points.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    Ok(())
}

pub fn q_tilde(m: &MomentSet) -> f64 {
    m.q_tilde()
}

pub fn pdel_model_a(m: &MomentSet, p: &ModelAParams) -> f64 {
    p.alpha * (m.q + m.q_tilde()) + p.beta * m.p + p.gamma
}

/// Sensitivities of the Model A output with respect to the moments.
pub fn model_a_partials(m: &MomentSet, p: &ModelAParams) -> MomentPartials {
    let mut d = m.q_tilde_partials().scaled(p.alpha);
    d.q += p.alpha;
    d.p += p.beta;
    d
}

/// Batch-averaged Model B output for a list of instantaneous powers.
pub fn pdel_model_b(symbol_powers: &[f64], p: &ModelBParams) -> Result<f64> {
    if symbol_powers.is_empty() {
        return Err(Error::Empty("symbol powers"));
    }
    if symbol_powers.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidConfig("symbol powers must be non-negative".into()));
    }
    let n = symbol_powers.len() as f64;
    Ok(symbol_powers.iter().map(|&pin| p.per_symbol(pin)).sum::<f64>() / n)
}
