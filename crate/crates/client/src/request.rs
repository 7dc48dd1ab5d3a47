use reconf_core::DecodeConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    /// Produce a rephrasing of a question stem.
    Rephrase,
    /// Answer a (possibly rephrased) question.
    Answer,
}

/// Bookkeeping carried alongside a prompt. Remote endpoints ignore it; the toy
/// backend uses it to find the latent model of the question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestContext {
    pub purpose: Purpose,
    pub question_id: Option<String>,
    pub draw_index: u32,
    /// The query went through a randomized transformation.
    pub rephrased: bool,
}

impl Default for RequestContext {
    fn default() -> Self {
        RequestContext {
            purpose: Purpose::Answer,
            question_id: None,
            draw_index: 0,
            rephrased: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub decode: DecodeConfig,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub context: RequestContext,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, decode: DecodeConfig) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            decode,
            max_tokens: 64,
            seed: None,
            context: RequestContext::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_context(mut self, context: RequestContext) -> Self {
        self.context = context;
        self
    }
}
