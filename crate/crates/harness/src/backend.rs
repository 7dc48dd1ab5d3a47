//! Backend selection from command-line specs.
//!
//! * `toy:<world.json>`: latent toy model per question
//! * `mock:<fixtures.jsonl>`: scripted completions keyed by prompt hash
//! * `http://…` / `https://…`: chat-completions endpoint

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Result};
use reconf_client::{CompletionBackend, EndpointConfig, MockBackend, RemoteBackend};

use crate::world::ToyWorld;

pub const ENV_REPHRASER_URL: &str = "RECONF_REPHRASER_URL";
pub const ENV_ANSWERER_URL: &str = "RECONF_ANSWERER_URL";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Toy(PathBuf),
    Mock(PathBuf),
    Remote(String),
}

impl BackendSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(path) = spec.strip_prefix("toy:") {
            Ok(BackendSpec::Toy(path.into()))
        } else if let Some(path) = spec.strip_prefix("mock:") {
            Ok(BackendSpec::Mock(path.into()))
        } else if spec.starts_with("http://") || spec.starts_with("https://") {
            Ok(BackendSpec::Remote(spec.to_string()))
        } else {
            bail!("unrecognized backend {spec:?}: expected toy:<world.json>, mock:<fixtures.jsonl> or an http(s) URL")
        }
    }

    pub fn build(&self, model: Option<&str>) -> Result<Arc<dyn CompletionBackend>> {
        Ok(match self {
            BackendSpec::Toy(path) => Arc::new(ToyWorld::load(path)?.backend()),
            BackendSpec::Mock(path) => Arc::new(MockBackend::from_jsonl(path)?),
            BackendSpec::Remote(url) => Arc::new(RemoteBackend::new(EndpointConfig::from_env(Some(url), model)?)?),
        })
    }
}

/// Explicit flag, then the role-specific variable, then `RECONF_BASE_URL`.
pub fn resolve_spec(flag: Option<&str>, role_env: &str) -> Result<String> {
    flag.map(String::from)
        .or_else(|| std::env::var(role_env).ok())
        .or_else(|| std::env::var(reconf_client::ENV_BASE_URL).ok())
        .ok_or_else(|| anyhow::anyhow!("no backend given; pass a flag or set {role_env}"))
}
