//! Completion backends behind one blocking interface.
//!
//! * [`RemoteBackend`]: HTTP chat-completions endpoint with bounded retries.
//! * [`MockBackend`]: scripted completions keyed by prompt hash.
//! * [`ToyBackend`]: the latent toy model, answering with sampled labels.

mod error;
mod mock;
mod remote;
mod request;
mod toy;

pub use error::ClientError;
pub use mock::{prompt_hash, Fixture, MockBackend};
pub use remote::{
    build_request_body, parse_response, AttemptLog, EndpointConfig, RemoteBackend, RetryPolicy, DEFAULT_PATH,
    ENV_API_KEY, ENV_BASE_URL, ENV_MODEL,
};
pub use request::{CompletionRequest, Purpose, RequestContext};
pub use toy::ToyBackend;

/// A text-in/text-out model. Implementations must tolerate concurrent calls.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ClientError>;

    /// Short description for logs and run configs.
    fn describe(&self) -> String;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ClientError> {
        (**self).complete(req)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ClientError> {
        (**self).complete(req)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}
