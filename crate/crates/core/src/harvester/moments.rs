//! Signal moments feeding the small-signal harvester model.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// `Q = E|x|^4`, `T = E|x|^3`, `P = E|x|^2`, `mu = E x`, and the matching
/// per-component moments of `x_r = Re x`, `x_i = Im x`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentSet {
    pub q: f64,
    pub t: f64,
    pub p: f64,
    pub mu_r: f64,
    pub mu_i: f64,
    pub q_r: f64,
    pub t_r: f64,
    pub p_r: f64,
    pub q_i: f64,
    pub t_i: f64,
    pub p_i: f64,
}

impl MomentSet {
    /// Probability-weighted moments. `weights` must match `points` in length.
    pub fn weighted(points: &[Complex64], weights: &[f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("moment input"));
        }
        if points.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let mut m = MomentSet::default();
        for (x, &w) in points.iter().zip(weights) {
            let (r, i) = (x.re, x.im);
            let pow = x.norm_sqr();
            m.q += w * pow * pow;
            m.t += w * pow * pow.sqrt();
            m.p += w * pow;
            m.mu_r += w * r;
            m.mu_i += w * i;
            m.q_r += w * r * r * r * r;
            m.t_r += w * r * r * r;
            m.p_r += w * r * r;
            m.q_i += w * i * i * i * i;
            m.t_i += w * i * i * i;
            m.p_i += w * i * i;
        }
        Ok(m)
    }

    /// Arithmetic-mean moments of a batch.
    pub fn of_batch(points: &[Complex64]) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        Self::weighted(points, &vec![w; points.len()])
    }

    pub fn q_tilde(&self) -> f64 {
        (self.q_r
            + self.q_i
            + 2.0 * (self.mu_r * self.t_r + self.mu_i * self.t_i)
            + 6.0 * self.p_r * self.p_i
            + 6.0 * self.p_r * (self.p_r - self.mu_r * self.mu_r)
            + 6.0 * self.p_i * (self.p_i - self.mu_i * self.mu_i))
            / 3.0
    }

    /// Partial derivatives of [`Self::q_tilde`] with respect to each moment.
    pub fn q_tilde_partials(&self) -> MomentPartials {
        let third = 1.0 / 3.0;
        MomentPartials {
            q_r: third,
            q_i: third,
            mu_r: (2.0 * self.t_r - 12.0 * self.p_r * self.mu_r) * third,
            mu_i: (2.0 * self.t_i - 12.0 * self.p_i * self.mu_i) * third,
            t_r: 2.0 * self.mu_r * third,
            t_i: 2.0 * self.mu_i * third,
            p_r: (6.0 * self.p_i + 12.0 * self.p_r - 6.0 * self.mu_r * self.mu_r) * third,
            p_i: (6.0 * self.p_r + 12.0 * self.p_i - 6.0 * self.mu_i * self.mu_i) * third,
            ..MomentPartials::default()
        }
    }
}

/// Sensitivities of a scalar with respect to the entries of a [`MomentSet`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentPartials {
    pub q: f64,
    pub t: f64,
    pub p: f64,
    pub mu_r: f64,
    pub mu_i: f64,
    pub q_r: f64,
    pub t_r: f64,
    pub p_r: f64,
    pub q_i: f64,
    pub t_i: f64,
    pub p_i: f64,
}

impl MomentPartials {
    pub fn scaled(self, k: f64) -> Self {
        Self {
            q: k * self.q,
            t: k * self.t,
            p: k * self.p,
            mu_r: k * self.mu_r,
            mu_i: k * self.mu_i,
            q_r: k * self.q_r,
            t_r: k * self.t_r,
            p_r: k * self.p_r,
            q_i: k * self.q_i,
            t_i: k * self.t_i,
            p_i: k * self.p_i,
        }
    }

    /// The per-point integrand whose weighted mean moves the scalar to first
    /// order: `sum_j partial_j * feature_j(x)`.
    pub fn linearized(&self, x: Complex64) -> f64 {
        let (r, i) = (x.re, x.im);
        let pow = x.norm_sqr();
        self.q * pow * pow
            + self.t * pow * pow.sqrt()
            + self.p * pow
            + self.mu_r * r
            + self.mu_i * i
            + self.q_r * r.powi(4)
            + self.t_r * r.powi(3)
            + self.p_r * r * r
            + self.q_i * i.powi(4)
            + self.t_i * i.powi(3)
            + self.p_i * i * i
    }

    /// Gradient with respect to `(Re x, Im x)` of a point carrying `weight`,
    /// packed as `d/dRe + j d/dIm`.
    pub fn point_gradient(&self, x: Complex64, weight: f64) -> Complex64 {
        let (r, i) = (x.re, x.im);
        let pow = x.norm_sqr();
        // d|x|^3 = 3|x| x ; zero at the origin
        let abs = pow.sqrt();
        let radial = 4.0 * self.q * pow + 3.0 * self.t * abs + 2.0 * self.p;
        let d_re = radial * r
            + self.mu_r
            + 4.0 * self.q_r * r * r * r
            + 3.0 * self.t_r * r * r
            + 2.0 * self.p_r * r;
        let d_im = radial * i
            + self.mu_i
            + 4.0 * self.q_i * i * i * i
            + 3.0 * self.t_i * i * i
            + 2.0 * self.p_i * i;
        Complex64::new(weight * d_re, weight * d_im)
    }
}
