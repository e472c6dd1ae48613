//! Adam with bias correction.

use super::params::NetworkParams;
use super::tape::GradientTape;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
    hyper: AdamHyper,
}

impl AdamState {
    pub fn new(params: &NetworkParams, hyper: AdamHyper) -> Self {
        let zeros: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            hyper,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn hyper(&self) -> AdamHyper {
        self.hyper
    }

    /// One update: `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut NetworkParams, tape: &GradientTape) -> Result<()> {
        let grads = tape.blocks();
        let mut blocks = params.blocks_mut();
        if grads.len() != blocks.len()
            || blocks.len() != self.first_moment.len()
            || grads
                .iter()
                .zip(&blocks)
                .zip(&self.first_moment)
                .any(|((g, p), m)| g.len() != p.len() || m.len() != p.len())
        {
            return Err(Error::Dimension("adam state, tape and parameters disagree".into()));
        }

        self.step_count += 1;
        let AdamHyper { learning_rate, beta1, beta2, epsilon } = self.hyper;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        for (((theta, g), m), v) in blocks
            .iter_mut()
            .zip(&grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for (((p, g), m), v) in theta.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
