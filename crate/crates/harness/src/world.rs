//! Synthetic datasets answered by the latent toy model.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reconf_client::ToyBackend;
use reconf_core::stats::sigmoid;
use reconf_core::toy::LatentToyModel;
use reconf_core::{ChoiceLabel, Question, ScoredItem64};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyQuestion {
    pub id: String,
    /// Latent margin `w·z_mean + b` of the question.
    pub gap: f64,
    pub gold: ChoiceLabel,
}

/// A population of two-choice toy questions with known latent margins. Gold
/// labels are drawn as A with probability `sigmoid(gap)`, so the softmax of the
/// toy logits is calibrated by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyWorld {
    pub s_rephrase: f64,
    pub s_topk: f64,
    pub questions: Vec<ToyQuestion>,
}

impl ToyWorld {
    /// `n` questions with margins uniform on `[-gap_range, gap_range]`.
    pub fn generate(n: usize, gap_range: f64, s_rephrase: f64, s_topk: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let questions = (0..n)
            .map(|i| {
                let gap = if gap_range > 0.0 {
                    rng.gen_range(-gap_range..=gap_range)
                } else {
                    0.0
                };
                let gold_is_a = rng.gen_bool(sigmoid(gap));
                ToyQuestion {
                    id: format!("toy-{i:05}"),
                    gap,
                    gold: ChoiceLabel::from_index(if gold_is_a { 0 } else { 1 }).expect("A or B"),
                }
            })
            .collect();
        ToyWorld {
            s_rephrase,
            s_topk,
            questions,
        }
    }

    pub fn model(&self, q: &ToyQuestion) -> LatentToyModel<f64> {
        LatentToyModel::with_gap(q.gap, self.s_rephrase, self.s_topk)
    }

    pub fn backend(&self) -> ToyBackend {
        ToyBackend::new(self.questions.iter().map(|q| (q.id.clone(), self.model(q))))
    }

    pub fn dataset(&self) -> Vec<Question> {
        self.questions
            .iter()
            .map(|q| {
                Question::with_texts(
                    q.id.clone(),
                    format!("Toy question {}: which option holds?", q.id),
                    ["alpha", "beta"],
                    Some(q.gold),
                )
                .expect("two-choice question")
            })
            .collect()
    }

    /// Scored items using the softmax of the toy logits as confidence.
    pub fn logits_items(&self) -> Vec<ScoredItem64> {
        self.questions
            .iter()
            .map(|q| {
                let (logit_a, logit_b) = self.model(q).logits(&[q.gap]).expect("one-dimensional");
                let p_a = sigmoid(logit_a - logit_b);
                let predicted = ChoiceLabel::from_index(if p_a >= 0.5 { 0 } else { 1 }).expect("A or B");
                ScoredItem64 {
                    confidence: p_a.max(1.0 - p_a),
                    correct: predicted == q.gold,
                    distribution: vec![p_a, 1.0 - p_a],
                    gold: q.gold,
                }
            })
            .collect()
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
