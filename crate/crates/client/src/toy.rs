use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reconf_core::toy::LatentToyModel;

use crate::{ClientError, CompletionBackend, CompletionRequest, Purpose};

/// Answers with labels sampled from per-question latent toy models.
///
/// The noise scale of a draw follows the decode mode and whether the request is
/// flagged as rephrased (see [`LatentToyModel::noise_scale`]). Every completion
/// is a pure function of the request seed. Rephrase requests get a placeholder
/// variant text, since the toy model has no language side.
#[derive(Debug, Clone, Default)]
pub struct ToyBackend {
    models: HashMap<String, LatentToyModel<f64>>,
    fallback: Option<LatentToyModel<f64>>,
}

impl ToyBackend {
    pub fn new(models: impl IntoIterator<Item = (String, LatentToyModel<f64>)>) -> Self {
        ToyBackend {
            models: models.into_iter().collect(),
            fallback: None,
        }
    }

    /// Backend that answers every question with the same model.
    pub fn single(model: LatentToyModel<f64>) -> Self {
        ToyBackend {
            models: HashMap::new(),
            fallback: Some(model),
        }
    }

    pub fn model(&self, question_id: Option<&str>) -> Option<&LatentToyModel<f64>> {
        question_id
            .and_then(|id| self.models.get(id))
            .or(self.fallback.as_ref())
    }

    /// Softmax logits `(w·z_mean + b, 0)` of a question's model.
    pub fn logits(&self, question_id: &str) -> Result<(f64, f64), ClientError> {
        let model = self
            .model(Some(question_id))
            .ok_or_else(|| ClientError::UnknownQuestion(Some(question_id.to_string())))?;
        model
            .logits(&model.z_mean)
            .map_err(|e| ClientError::Config(e.to_string()))
    }
}

impl CompletionBackend for ToyBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ClientError> {
        let ctx = &req.context;
        if ctx.purpose == Purpose::Rephrase {
            let id = ctx.question_id.as_deref().unwrap_or("question");
            return Ok(format!("Variant {} of {id}?", ctx.draw_index));
        }
        let model = self
            .model(ctx.question_id.as_deref())
            .ok_or_else(|| ClientError::UnknownQuestion(ctx.question_id.clone()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed.unwrap_or(0));
        let scale = model.noise_scale(&req.decode, ctx.rephrased);
        Ok(model.sample_label(&mut rng, scale).to_string())
    }

    fn describe(&self) -> String {
        format!(
            "toy({} models)",
            self.models.len() + usize::from(self.fallback.is_some())
        )
    }
}
