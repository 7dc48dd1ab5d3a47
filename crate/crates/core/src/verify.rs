//! Monte Carlo checks of the consistency estimator against the toy model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{temper_forward, total_scale, StatsError};
use crate::toy::{softmax_pair, LatentToyModel};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("need at least one draw")]
    NoDraws,
    #[error("consistency-equals-softmax check needs s_rephrase = 1 and s_topk = 0")]
    WrongRegime,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report<F> {
    pub gap: F,
    pub n_draws: usize,
    /// Frequency of the majority answer over the draws.
    pub mc_pa: F,
    /// Softmax probability of the analytically most probable answer.
    pub analytic_p: F,
    pub abs_error: F,
    pub argmax_agrees: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop2Report<F> {
    pub gap: F,
    pub total_scale: F,
    pub n_draws: usize,
    /// Softmax probability of the model's A label at `z_mean`.
    pub p: F,
    /// Frequency of the A label over the draws.
    pub mc_pa: F,
    pub linearized_pa: F,
    pub exact_pa: F,
    pub linearization_error: F,
}

fn count_a<F: Real>(model: &LatentToyModel<F>, n_draws: usize, scale: F, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_draws)
        .filter(|_| model.sample_label(&mut rng, scale) == model.labels.0)
        .count()
}

/// With standard-logistic rephrasing noise and greedy decoding, the frequency of
/// the majority answer should match the softmax probability of the top class.
pub fn verify_prop1<F: Real>(
    model: &LatentToyModel<F>,
    n_draws: usize,
    seed: u64,
) -> Result<Prop1Report<F>, VerifyError> {
    if n_draws < 1 {
        return Err(VerifyError::NoDraws);
    }
    if model.s_rephrase != F::one() || model.s_topk != F::zero() {
        return Err(VerifyError::WrongRegime);
    }
    let hits_a = count_a(model, n_draws, model.s_rephrase, seed);
    let n = F::of_usize(n_draws);
    let freq_a = F::of_usize(hits_a) / n;
    // majority with ties resolved toward A, as in aggregation
    let mc_majority_is_a = 2 * hits_a >= n_draws;
    let mc_pa = if mc_majority_is_a { freq_a } else { F::one() - freq_a };

    let p_a = softmax_pair(model.logits(&model.z_mean).expect("z_mean matches latent_dim"));
    let analytic_is_a = model.gap() > F::zero();
    let analytic_p = p_a.max(F::one() - p_a);
    // At gap 0 both classes are top-1; any majority is a correct identification.
    let argmax_agrees = model.gap() == F::zero() || mc_majority_is_a == analytic_is_a;

    Ok(Prop1Report {
        gap: model.gap(),
        n_draws,
        mc_pa,
        analytic_p,
        abs_error: (mc_pa - analytic_p).abs(),
        argmax_agrees,
    })
}

/// Compares simulated confidence under combined decoding and rephrasing noise with
/// the exact tempered value `F(gap / s)` and its first-order approximation.
pub fn verify_prop2<F: Real>(
    model: &LatentToyModel<F>,
    n_draws: usize,
    seed: u64,
) -> Result<Prop2Report<F>, VerifyError> {
    if n_draws < 1 {
        return Err(VerifyError::NoDraws);
    }
    let scale = total_scale(model.s_topk, model.s_rephrase)?;
    let hits_a = count_a(model, n_draws, scale, seed);
    let p = model.analytic_prob_a();
    let exact_pa = model.prob_a_at_scale(scale);
    let linearized_pa = temper_forward(p, model.s_topk, model.s_rephrase)?;
    Ok(Prop2Report {
        gap: model.gap(),
        total_scale: scale,
        n_draws,
        p,
        mc_pa: F::of_usize(hits_a) / F::of_usize(n_draws),
        linearized_pa,
        exact_pa,
        linearization_error: (exact_pa - linearized_pa).abs(),
    })
}
