//! Binomial negative log-likelihood with logit link, outcome coded 0/1.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::BinaryOutcome;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossFamily {
    #[default]
    #[serde(rename = "binomial-logit")]
    BinomialLogit,
}

impl LossFamily {
    pub fn name(&self) -> &'static str {
        match self {
            LossFamily::BinomialLogit => "binomial-logit",
        }
    }

    /// Response function `1 / (1 + e^(-f))`.
    pub fn link(&self, f: f64) -> f64 {
        if f >= 0.0 {
            1.0 / (1.0 + (-f).exp())
        } else {
            let e = f.exp();
            e / (1.0 + e)
        }
    }

    pub fn inverse_link(&self, p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    /// Per-observation loss `log(1 + e^f) - y f`.
    pub fn loss(&self, y: f64, f: f64) -> f64 {
        softplus(f) - y * f
    }

    /// `-∂loss/∂f = y - h(f)`.
    pub fn negative_gradient(&self, y: f64, f: f64) -> f64 {
        y - self.link(f)
    }

    /// Empirical risk: summed negative log-likelihood.
    pub fn risk(&self, y: &[f64], f: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), f.len());
        y.iter().zip(f).map(|(&yi, &fi)| self.loss(yi, fi)).sum()
    }

    pub fn mean_risk(&self, y: &[f64], f: &[f64]) -> f64 {
        self.risk(y, f) / y.len() as f64
    }
}

/// `log(1 + e^f)` without overflow.
fn softplus(f: f64) -> f64 {
    f.max(0.0) + (-f.abs()).exp().ln_1p()
}

/// Negative gradient of the risk at `f`, one entry per observation.
pub fn pseudo_residuals(family: LossFamily, y: &BinaryOutcome, f: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        f.len(),
        y.labels()
            .iter()
            .zip(f.iter())
            .map(|(&yi, &fi)| family.negative_gradient(yi, fi)),
    )
}
