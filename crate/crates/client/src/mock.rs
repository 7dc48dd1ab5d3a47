use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{ClientError, CompletionBackend, CompletionRequest};

/// Lowercase hex SHA-256 of the prompt text.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One line of a mock fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Fixture {
    pub prompt_hash: String,
    pub completion: String,
}

impl Fixture {
    pub fn for_prompt(prompt: &str, completion: impl Into<String>) -> Self {
        Fixture {
            prompt_hash: prompt_hash(prompt),
            completion: completion.into(),
        }
    }
}

/// Scripted backend. A prompt may have several fixtures; the request seed picks
/// one (`seed mod count`), so seeded runs stay reproducible.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fixtures: HashMap<String, Vec<String>>,
}

impl MockBackend {
    pub fn new(fixtures: impl IntoIterator<Item = Fixture>) -> Self {
        let mut map: HashMap<String, Vec<String>> = HashMap::new();
        for f in fixtures {
            map.entry(f.prompt_hash).or_default().push(f.completion);
        }
        MockBackend { fixtures: map }
    }

    pub fn from_jsonl(path: &Path) -> Result<Self, ClientError> {
        let reader = BufReader::new(File::open(path)?);
        let mut fixtures = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fixture: Fixture = serde_json::from_str(&line)
                .map_err(|e| ClientError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
            fixtures.push(fixture);
        }
        Ok(Self::new(fixtures))
    }

    pub fn len(&self) -> usize {
        self.fixtures.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ClientError> {
        let hash = prompt_hash(&req.prompt);
        let options = self.fixtures.get(&hash).ok_or(ClientError::FixtureMissing(hash))?;
        let pick = req.seed.unwrap_or(0) % options.len() as u64;
        Ok(options[pick as usize].clone())
    }

    fn describe(&self) -> String {
        format!("mock({} fixtures)", self.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use reconf_core::DecodeConfig;

    #[test]
    fn returns_fixture_text() {
        let mock = MockBackend::new([Fixture::for_prompt("Q?", "The answer is C")]);
        let req = CompletionRequest::new("Q?", DecodeConfig::Top1);
        assert_eq!(mock.complete(&req).unwrap(), "The answer is C");
    }

    #[test]
    fn missing_fixture_is_an_error() {
        let mock = MockBackend::default();
        let err = mock
            .complete(&CompletionRequest::new("other", DecodeConfig::Top1))
            .unwrap_err();
        assert!(matches!(err, ClientError::FixtureMissing(h) if h == prompt_hash("other")));
    }

    #[test]
    fn seed_selects_among_alternatives() {
        let mock = MockBackend::new([Fixture::for_prompt("p", "one"), Fixture::for_prompt("p", "two")]);
        let ask = |seed| {
            mock.complete(&CompletionRequest::new("p", DecodeConfig::Top1).with_seed(seed))
                .unwrap()
        };
        assert_eq!(ask(0), "one");
        assert_eq!(ask(1), "two");
        assert_eq!(ask(2), "one");
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(
            prompt_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn fixture_json_uses_camel_case() {
        let json = serde_json::to_string(&Fixture::for_prompt("abc", "A")).unwrap();
        assert!(json.starts_with(r#"{"promptHash":"ba7816bf"#));
    }
}
