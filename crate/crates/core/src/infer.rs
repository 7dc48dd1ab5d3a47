//! Answer extraction and per-question aggregation.

use crate::domain::{AnswerRecord, ChoiceLabel, DomainError, Extracted, PredictionSummary, Question};

/// Returns the first standalone uppercase label among the first `num_choices`
/// letters. A letter is standalone when neither neighbour is a letter, so the `B`
/// in `BANANA` is skipped but the one in `(B)` or `B.` is not.
pub fn extract_answer(text: &str, num_choices: usize) -> Extracted {
    let chars: Vec<char> = text.chars().collect();
    let is_boundary = |i: Option<usize>| i.and_then(|i| chars.get(i)).is_none_or(|c| !c.is_alphabetic());
    chars
        .iter()
        .enumerate()
        .find_map(|(i, &c)| {
            let label = ChoiceLabel::from_char(c).filter(|l| l.index() < num_choices)?;
            (is_boundary(i.checked_sub(1)) && is_boundary(Some(i + 1))).then_some(label)
        })
        .map_or(Extracted::ParseFailure, Extracted::Label)
}

/// Aggregates the draws of one question into its empirical answer distribution.
pub fn aggregate(records: &[AnswerRecord]) -> Result<PredictionSummary, DomainError> {
    let first = records.first().ok_or(DomainError::NoRecords)?;
    if let Some(other) = records.iter().find(|r| r.question_id != first.question_id) {
        return Err(DomainError::MixedQuestions(
            first.question_id.clone(),
            other.question_id.clone(),
        ));
    }
    Ok(PredictionSummary::from_extractions(
        first.question_id.clone(),
        first.num_choices,
        records.iter().map(|r| r.extracted),
    ))
}

/// Single deterministic answer taken at face value (100% confidence).
pub fn naive_summary(q: &Question, single: &AnswerRecord) -> PredictionSummary {
    PredictionSummary::from_extractions(q.id.clone(), q.num_choices(), [single.extracted])
}
