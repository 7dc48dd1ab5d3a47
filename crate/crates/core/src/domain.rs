//! Domain types shared by every stage of the pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::metrics::ScoredItem;
use crate::Real;

pub const MIN_CHOICES: usize = 2;
pub const MAX_CHOICES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("invalid choice label {0:?}")]
    InvalidLabel(String),
    #[error("question {id}: {count} choices, expected between {MIN_CHOICES} and {MAX_CHOICES}")]
    ChoiceCount { id: String, count: usize },
    #[error("question {id}: duplicate label {label}")]
    DuplicateLabel { id: String, label: ChoiceLabel },
    #[error("question {id}: labels are not contiguous from A (found {found} at position {position})")]
    NonContiguousLabels {
        id: String,
        position: usize,
        found: ChoiceLabel,
    },
    #[error("question {id}: gold label {gold} is not among the choices")]
    GoldNotAmongChoices { id: String, gold: ChoiceLabel },
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("invalid decode config: {0}")]
    InvalidDecode(String),
    #[error("no answer records to aggregate")]
    NoRecords,
    #[error("answer records mix questions {0:?} and {1:?}")]
    MixedQuestions(String, String),
}

/// One of the uppercase labels `A` through `H`, stored as a zero-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChoiceLabel(u8);

impl ChoiceLabel {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < MAX_CHOICES).then_some(Self(index as u8))
    }

    pub fn from_char(c: char) -> Option<Self> {
        if c.is_ascii_uppercase() {
            Self::from_index((c as u8 - b'A') as usize)
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_char(self) -> char {
        (b'A' + self.0) as char
    }

    /// The first `k` labels in order.
    pub fn first(k: usize) -> impl Iterator<Item = ChoiceLabel> {
        (0..k.min(MAX_CHOICES)).map(|i| ChoiceLabel(i as u8))
    }
}

impl fmt::Display for ChoiceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for ChoiceLabel {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_char(c).ok_or_else(|| DomainError::InvalidLabel(s.into())),
            _ => Err(DomainError::InvalidLabel(s.into())),
        }
    }
}

impl Serialize for ChoiceLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut buf = [0u8; 4];
        serializer.serialize_str(self.as_char().encode_utf8(&mut buf))
    }
}

impl<'de> Deserialize<'de> for ChoiceLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: ChoiceLabel,
    pub text: String,
}

/// A multiple-choice item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub stem: String,
    pub choices: Vec<Choice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<ChoiceLabel>,
}

impl Question {
    /// Builds a question with labels assigned `A, B, C, …` in order, then validates it.
    pub fn with_texts<S: Into<String>>(
        id: impl Into<String>,
        stem: impl Into<String>,
        texts: impl IntoIterator<Item = S>,
        gold: Option<ChoiceLabel>,
    ) -> Result<Self, DomainError> {
        let id = id.into();
        let texts: Vec<String> = texts.into_iter().map(Into::into).collect();
        if texts.len() > MAX_CHOICES {
            return Err(DomainError::ChoiceCount { id, count: texts.len() });
        }
        let choices = texts
            .into_iter()
            .zip(ChoiceLabel::first(MAX_CHOICES))
            .map(|(text, label)| Choice { label, text })
            .collect();
        let q = Question {
            id,
            stem: stem.into(),
            choices,
            gold,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn num_choices(&self) -> usize {
        self.choices.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = ChoiceLabel> + '_ {
        self.choices.iter().map(|c| c.label)
    }

    /// Accepts iff the labels are exactly `A, B, …` for 2..=8 choices and the gold
    /// label, if any, is one of them.
    pub fn validate(&self) -> Result<(), DomainError> {
        let count = self.choices.len();
        if !(MIN_CHOICES..=MAX_CHOICES).contains(&count) {
            return Err(DomainError::ChoiceCount {
                id: self.id.clone(),
                count,
            });
        }
        let mut seen = [false; MAX_CHOICES];
        for choice in &self.choices {
            if std::mem::replace(&mut seen[choice.label.index()], true) {
                return Err(DomainError::DuplicateLabel {
                    id: self.id.clone(),
                    label: choice.label,
                });
            }
        }
        for (position, choice) in self.choices.iter().enumerate() {
            if choice.label.index() != position {
                return Err(DomainError::NonContiguousLabels {
                    id: self.id.clone(),
                    position,
                    found: choice.label,
                });
            }
        }
        if let Some(gold) = self.gold {
            if gold.index() >= count {
                return Err(DomainError::GoldNotAmongChoices {
                    id: self.id.clone(),
                    gold,
                });
            }
        }
        Ok(())
    }
}

/// Free-function form of [`Question::validate`].
pub fn validate_question(q: &Question) -> Result<(), DomainError> {
    q.validate()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Reword,
    Rephrase,
    Paraphrase,
    Expansion,
    Hint,
    Identity,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Reword,
        StrategyKind::Rephrase,
        StrategyKind::Paraphrase,
        StrategyKind::Expansion,
        StrategyKind::Hint,
        StrategyKind::Identity,
    ];

    /// The four kinds that go through a rephraser model.
    pub const LLM_REPHRASINGS: [StrategyKind; 4] = [
        StrategyKind::Reword,
        StrategyKind::Rephrase,
        StrategyKind::Paraphrase,
        StrategyKind::Expansion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Reword => "reword",
            StrategyKind::Rephrase => "rephrase",
            StrategyKind::Paraphrase => "paraphrase",
            StrategyKind::Expansion => "expansion",
            StrategyKind::Hint => "hint",
            StrategyKind::Identity => "identity",
        }
    }

    pub fn uses_rephraser(self) -> bool {
        Self::LLM_REPHRASINGS.contains(&self)
    }

    /// Whether the answering model sees a transformed query.
    pub fn transforms_query(self) -> bool {
        self != StrategyKind::Identity
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DomainError::UnknownStrategy(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    /// Sampling temperature of the rephraser model.
    pub rephrase_temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint_seed: Option<u64>,
}

impl Strategy {
    pub fn new(kind: StrategyKind, rephrase_temperature: f64) -> Self {
        Strategy {
            kind,
            rephrase_temperature: rephrase_temperature.max(0.0),
            hint_seed: None,
        }
    }

    pub fn identity() -> Self {
        Self::new(StrategyKind::Identity, 0.0)
    }
}

/// How the answering model decodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DecodeConfig {
    Top1,
    #[serde(rename = "topk")]
    TopK {
        k: u32,
    },
    Temperature {
        temperature: f64,
    },
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        match *self {
            DecodeConfig::Top1 => Ok(()),
            DecodeConfig::TopK { k } if k >= 1 => Ok(()),
            DecodeConfig::TopK { .. } => Err(DomainError::InvalidDecode("k must be positive".into())),
            DecodeConfig::Temperature { temperature } if temperature > 0.0 => Ok(()),
            DecodeConfig::Temperature { .. } => Err(DomainError::InvalidDecode(
                "sampling temperature must be positive".into(),
            )),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, DecodeConfig::Top1)
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            DecodeConfig::Top1 => "top1",
            DecodeConfig::TopK { .. } => "topk",
            DecodeConfig::Temperature { .. } => "temperature",
        }
    }
}

/// Result of scanning a completion for a choice label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Extracted {
    Label(ChoiceLabel),
    ParseFailure,
}

impl Extracted {
    pub fn label(self) -> Option<ChoiceLabel> {
        match self {
            Extracted::Label(l) => Some(l),
            Extracted::ParseFailure => None,
        }
    }
}

/// One query draw: the prompt sent to the answering model and what came back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub draw_index: u32,
    pub num_choices: usize,
    #[serde(default)]
    pub gold: Option<ChoiceLabel>,
    pub rephrased_prompt: String,
    pub raw_completion: String,
    pub extracted: Extracted,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

/// Majority answer of a question, or `Invalid` when no draw could be parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Label(ChoiceLabel),
    Invalid,
}

impl Prediction {
    pub fn label(self) -> Option<ChoiceLabel> {
        match self {
            Prediction::Label(l) => Some(l),
            Prediction::Invalid => None,
        }
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prediction::Label(l) => write!(f, "{l}"),
            Prediction::Invalid => f.write_str("invalid"),
        }
    }
}

impl Serialize for Prediction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Prediction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == "invalid" {
            Ok(Prediction::Invalid)
        } else {
            s.parse().map(Prediction::Label).map_err(serde::de::Error::custom)
        }
    }
}

/// Empirical answer distribution of one question over its draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub question_id: String,
    pub num_choices: usize,
    pub counts: BTreeMap<ChoiceLabel, u32>,
    pub valid_draws: u32,
    pub predicted: Prediction,
    pub confidence: f64,
    pub distribution: BTreeMap<ChoiceLabel, f64>,
}

impl PredictionSummary {
    /// Tallies extracted labels. Parse failures are dropped; the argmax breaks ties
    /// toward the lowest label. With no valid draw the prediction is `Invalid` and
    /// the distribution is uniform with confidence `1/K`.
    pub fn from_extractions(
        question_id: impl Into<String>,
        num_choices: usize,
        extractions: impl IntoIterator<Item = Extracted>,
    ) -> Self {
        let num_choices = num_choices.clamp(1, MAX_CHOICES);
        let mut tally = [0u32; MAX_CHOICES];
        for label in extractions.into_iter().filter_map(Extracted::label) {
            if label.index() < num_choices {
                tally[label.index()] += 1;
            }
        }
        let valid_draws: u32 = tally.iter().sum();
        let counts: BTreeMap<_, _> = ChoiceLabel::first(num_choices).map(|l| (l, tally[l.index()])).collect();

        if valid_draws == 0 {
            let uniform = 1.0 / num_choices as f64;
            return PredictionSummary {
                question_id: question_id.into(),
                num_choices,
                distribution: counts.keys().map(|&l| (l, uniform)).collect(),
                counts,
                valid_draws,
                predicted: Prediction::Invalid,
                confidence: uniform,
            };
        }

        // max_by_key keeps the last maximum, so scan in reverse to keep the lowest label
        let (best, best_count) = counts
            .iter()
            .rev()
            .max_by_key(|(_, &c)| c)
            .map(|(&l, &c)| (l, c))
            .expect("at least two labels");
        let n = valid_draws as f64;
        PredictionSummary {
            question_id: question_id.into(),
            num_choices,
            distribution: counts.iter().map(|(&l, &c)| (l, c as f64 / n)).collect(),
            counts,
            valid_draws,
            predicted: Prediction::Label(best),
            confidence: best_count as f64 / n,
        }
    }

    pub fn is_correct(&self, gold: ChoiceLabel) -> bool {
        self.predicted == Prediction::Label(gold)
    }

    /// Converts to a metric item; `None` when the question has no gold label.
    pub fn to_scored<F: Real>(&self, gold: Option<ChoiceLabel>) -> Option<ScoredItem<F>> {
        let gold = gold?;
        let mut distribution = vec![F::zero(); self.num_choices];
        for (&label, &p) in &self.distribution {
            distribution[label.index()] = F::of(p);
        }
        Some(ScoredItem {
            confidence: F::of(self.confidence),
            correct: self.is_correct(gold),
            distribution,
            gold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(s: &str) -> ChoiceLabel {
        s.parse().unwrap()
    }

    fn raw_question(labels: &[&str], gold: Option<&str>) -> Question {
        Question {
            id: "q".into(),
            stem: "stem".into(),
            choices: labels
                .iter()
                .map(|l| Choice {
                    label: label(l),
                    text: format!("text {l}"),
                })
                .collect(),
            gold: gold.map(label),
        }
    }

    #[test]
    fn four_choices_with_gold_is_valid() {
        assert!(validate_question(&raw_question(&["A", "B", "C", "D"], Some("B"))).is_ok());
    }

    #[test]
    fn gapped_labels_rejected() {
        let err = raw_question(&["A", "C"], None).validate().unwrap_err();
        assert!(matches!(err, DomainError::NonContiguousLabels { position: 1, .. }));
    }

    #[test]
    fn gold_outside_choices_rejected() {
        let err = raw_question(&["A", "B", "C", "D"], Some("E")).validate().unwrap_err();
        assert!(matches!(err, DomainError::GoldNotAmongChoices { .. }));
    }

    #[test]
    fn duplicate_and_count_errors() {
        assert!(matches!(
            raw_question(&["A", "A"], None).validate(),
            Err(DomainError::DuplicateLabel { .. })
        ));
        assert!(matches!(
            raw_question(&["A"], None).validate(),
            Err(DomainError::ChoiceCount { count: 1, .. })
        ));
        assert!(Question::with_texts("q", "s", ["x"; 9], None).is_err());
        assert!(Question::with_texts("q", "s", ["x"; 8], None).is_ok());
    }

    #[test]
    fn label_parsing() {
        assert_eq!(label("C").index(), 2);
        assert!("I".parse::<ChoiceLabel>().is_err());
        assert!("a".parse::<ChoiceLabel>().is_err());
        assert!("AB".parse::<ChoiceLabel>().is_err());
        assert_eq!(serde_json::to_string(&label("D")).unwrap(), "\"D\"");
    }

    #[test]
    fn extracted_serde() {
        let json = serde_json::to_string(&[Extracted::Label(label("B")), Extracted::ParseFailure]).unwrap();
        assert_eq!(json, r#"["B",null]"#);
        let back: Vec<Extracted> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Extracted::Label(label("B")), Extracted::ParseFailure]);
    }

    #[test]
    fn decode_config_serde_and_validation() {
        let json = serde_json::to_string(&DecodeConfig::TopK { k: 40 }).unwrap();
        assert_eq!(json, r#"{"mode":"topk","k":40}"#);
        assert!(DecodeConfig::TopK { k: 0 }.validate().is_err());
        assert!(DecodeConfig::Temperature { temperature: 0.0 }.validate().is_err());
    }

    #[test]
    fn all_failures_fall_back_to_uniform() {
        let s = PredictionSummary::from_extractions("q", 4, [Extracted::ParseFailure; 3]);
        assert_eq!(s.predicted, Prediction::Invalid);
        assert_eq!(s.confidence, 0.25);
        assert_eq!(s.valid_draws, 0);
        assert!(!s.is_correct(label("A")));
        assert_eq!(serde_json::to_value(s.predicted).unwrap(), "invalid");
    }

    #[test]
    fn tie_goes_to_lowest_label() {
        let draws = [label("C"), label("B"), label("C"), label("B")].map(Extracted::Label);
        let s = PredictionSummary::from_extractions("q", 4, draws);
        assert_eq!(s.predicted, Prediction::Label(label("B")));
        assert_eq!(s.confidence, 0.5);
    }
}
