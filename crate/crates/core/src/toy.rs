//! Binary latent toy model of an LLM's final layer.
//!
//! Two answers A and B are separated by a hyperplane `(w, b)` in latent space.
//! A query lands at `z_mean`; rephrasing and stochastic decoding add logistic noise
//! along `w`, and the emitted answer is A iff `w·z_mean + b + noise > 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ChoiceLabel, DecodeConfig};
use crate::stats::{sample_logistic, sigmoid, LogisticParams};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToyError {
    #[error("latent vector has length {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("latent dimension must be positive")]
    ZeroDimension,
    #[error("noise scales must be non-negative")]
    NegativeNoise,
    #[error("the two answer labels must differ")]
    SameLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentToyModel<F> {
    pub latent_dim: usize,
    /// Hyperplane normal `w_A - w_B`.
    pub w: Vec<F>,
    /// Bias `b_A - b_B`.
    pub b: F,
    pub z_mean: Vec<F>,
    /// Logistic scale of the rephrasing noise projected on `w`.
    pub s_rephrase: F,
    /// Logistic scale of the decoding noise projected on `w`.
    pub s_topk: F,
    /// (label emitted for A, label emitted for B)
    pub labels: (ChoiceLabel, ChoiceLabel),
}

fn default_labels() -> (ChoiceLabel, ChoiceLabel) {
    (
        ChoiceLabel::from_index(0).expect("A"),
        ChoiceLabel::from_index(1).expect("B"),
    )
}

impl<F: Real> LatentToyModel<F> {
    pub fn new(
        w: Vec<F>,
        b: F,
        z_mean: Vec<F>,
        s_rephrase: F,
        s_topk: F,
        labels: (ChoiceLabel, ChoiceLabel),
    ) -> Result<Self, ToyError> {
        if w.is_empty() {
            return Err(ToyError::ZeroDimension);
        }
        if z_mean.len() != w.len() {
            return Err(ToyError::DimensionMismatch {
                expected: w.len(),
                got: z_mean.len(),
            });
        }
        if s_rephrase < F::zero() || s_topk < F::zero() {
            return Err(ToyError::NegativeNoise);
        }
        if labels.0 == labels.1 {
            return Err(ToyError::SameLabels);
        }
        Ok(LatentToyModel {
            latent_dim: w.len(),
            w,
            b,
            z_mean,
            s_rephrase,
            s_topk,
            labels,
        })
    }

    /// One-dimensional model whose margin at `z_mean` is exactly `gap`.
    pub fn with_gap(gap: F, s_rephrase: F, s_topk: F) -> Self {
        Self::new(
            vec![F::one()],
            F::zero(),
            vec![gap],
            s_rephrase,
            s_topk,
            default_labels(),
        )
        .expect("valid one-dimensional model")
    }

    fn project(&self, z: &[F]) -> Result<F, ToyError> {
        if z.len() != self.latent_dim {
            return Err(ToyError::DimensionMismatch {
                expected: self.latent_dim,
                got: z.len(),
            });
        }
        Ok(self.w.iter().zip(z).fold(self.b, |acc, (&w, &z)| acc + w * z))
    }

    /// `w·z_mean + b`.
    pub fn gap(&self) -> F {
        self.project(&self.z_mean).expect("z_mean matches latent_dim")
    }

    /// Two-class logits `(w·z + b, 0)`; their softmax is the sigmoid of the margin.
    pub fn logits(&self, z: &[F]) -> Result<(F, F), ToyError> {
        Ok((self.project(z)?, F::zero()))
    }

    /// Softmax probability of A at `z_mean`.
    pub fn analytic_prob_a(&self) -> F {
        sigmoid(self.gap())
    }

    /// Latent noise scale seen by one answer draw.
    ///
    /// Greedy decoding only picks up rephrasing noise; sampling decoders add the
    /// decoding noise in quadrature.
    pub fn noise_scale(&self, decode: &DecodeConfig, rephrased: bool) -> F {
        let rephrase = if rephrased { self.s_rephrase } else { F::zero() };
        if decode.is_stochastic() {
            self.s_topk.hypot(rephrase)
        } else {
            rephrase
        }
    }

    /// P(A) for one draw under the given noise scale: `F(gap / s)`, or the hard
    /// decision when `s = 0`.
    pub fn prob_a_at_scale(&self, scale: F) -> F {
        let gap = self.gap();
        if scale > F::zero() {
            sigmoid(gap / scale)
        } else if gap > F::zero() {
            F::one()
        } else {
            F::zero()
        }
    }

    /// Noisy margin for one draw.
    pub fn sample_margin<R: Rng + ?Sized>(&self, rng: &mut R, scale: F) -> F {
        let noise = if scale > F::zero() {
            sample_logistic(
                rng,
                LogisticParams {
                    mu: F::zero(),
                    s: scale,
                },
            )
        } else {
            F::zero()
        };
        self.gap() + noise
    }

    /// Emitted label for one draw.
    pub fn sample_label<R: Rng + ?Sized>(&self, rng: &mut R, scale: F) -> ChoiceLabel {
        self.classify(self.sample_margin(rng, scale))
    }

    /// A if the margin is strictly positive, B otherwise.
    pub fn classify(&self, margin: F) -> ChoiceLabel {
        if margin > F::zero() {
            self.labels.0
        } else {
            self.labels.1
        }
    }
}

/// Softmax over a pair of logits; returns P(first).
pub fn softmax_pair<F: Real>(logits: (F, F)) -> F {
    sigmoid(logits.0 - logits.1)
}
