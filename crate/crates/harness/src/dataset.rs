//! ARC / OpenBookQA JSONL ingestion.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use reconf_core::{ChoiceLabel, Question};
use serde::Deserialize;
use thiserror::Error;

use reconf_core::domain::Choice;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: no valid questions ({skipped} lines skipped)")]
    Empty { path: String, skipped: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub questions: Vec<Question>,
    pub skipped: usize,
}

#[derive(Deserialize)]
struct ArcLine {
    id: Option<String>,
    question: ArcQuestion,
    #[serde(rename = "answerKey")]
    answer_key: Option<String>,
}

#[derive(Deserialize)]
struct ArcQuestion {
    stem: String,
    choices: Vec<ArcChoice>,
}

#[derive(Deserialize)]
struct ArcChoice {
    text: String,
    label: String,
}

/// Letters pass through; the digits `1`-`8` map to `A`-`H`.
fn normalize_label(raw: &str) -> Option<ChoiceLabel> {
    let raw = raw.trim();
    if let Ok(n) = raw.parse::<usize>() {
        return n.checked_sub(1).and_then(ChoiceLabel::from_index);
    }
    raw.parse().ok()
}

fn parse_line(line: &str, line_no: usize) -> Result<Question, String> {
    let parsed: ArcLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let choices = parsed
        .question
        .choices
        .into_iter()
        .map(|c| {
            normalize_label(&c.label)
                .map(|label| Choice { label, text: c.text })
                .ok_or_else(|| format!("bad label {:?}", c.label))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gold = match parsed.answer_key.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(key) => Some(normalize_label(key).ok_or_else(|| format!("bad answerKey {key:?}"))?),
    };
    let q = Question {
        id: parsed.id.unwrap_or_else(|| format!("line-{line_no}")),
        stem: parsed.question.stem,
        choices,
        gold,
    };
    q.validate().map_err(|e| e.to_string())?;
    Ok(q)
}

/// Loads ARC-format JSONL (`question.stem`, `question.choices[{text,label}]`,
/// `answerKey`). Invalid lines are skipped and counted.
pub fn load_arc_jsonl(path: &Path) -> Result<LoadedDataset, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut questions = Vec::new();
    let mut skipped = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, idx + 1) {
            Ok(q) => questions.push(q),
            Err(reason) => {
                warn!("{}:{}: skipping line: {reason}", path.display(), idx + 1);
                skipped += 1;
            }
        }
    }
    if questions.is_empty() {
        return Err(DatasetError::Empty {
            path: path.display().to_string(),
            skipped,
        });
    }
    Ok(LoadedDataset { questions, skipped })
}

/// One ARC-format JSONL line for a question.
pub fn to_arc_line(q: &Question) -> String {
    serde_json::json!({
        "id": q.id,
        "question": {
            "stem": q.stem,
            "choices": q.choices.iter().map(|c| serde_json::json!({"text": c.text, "label": c.label})).collect::<Vec<_>>(),
        },
        "answerKey": q.gold,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const ARC: &str = r#"{"id":"Mercury_1","question":{"stem":"Which surface produces the most heat?","choices":[{"text":"dry palms","label":"A"},{"text":"wet palms","label":"B"},{"text":"oily palms","label":"C"},{"text":"soapy palms","label":"D"}]},"answerKey":"A"}"#;
    const NUMERIC: &str = r#"{"id":"num","question":{"stem":"s","choices":[{"text":"a","label":"1"},{"text":"b","label":"2"},{"text":"c","label":"3"},{"text":"d","label":"4"}]},"answerKey":"3"}"#;

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn standard_line() {
        let f = write(&[ARC]);
        let ds = load_arc_jsonl(f.path()).unwrap();
        assert_eq!(ds.questions.len(), 1);
        let q = &ds.questions[0];
        assert_eq!(q.num_choices(), 4);
        assert_eq!(q.gold, Some("A".parse().unwrap()));
        assert_eq!(q.id, "Mercury_1");
    }

    #[test]
    fn numeric_labels_become_letters() {
        let f = write(&[NUMERIC]);
        let q = &load_arc_jsonl(f.path()).unwrap().questions[0];
        let labels: String = q.labels().map(|l| l.as_char()).collect();
        assert_eq!(labels, "ABCD");
        assert_eq!(q.gold, Some("C".parse().unwrap()));
    }

    #[test]
    fn malformed_lines_are_counted() {
        let mut lines = vec![ARC; 9];
        lines.insert(4, r#"{"question": 3}"#);
        let f = write(&lines);
        let ds = load_arc_jsonl(f.path()).unwrap();
        assert_eq!(ds.questions.len(), 9);
        assert_eq!(ds.skipped, 1);
    }

    #[test]
    fn invalid_gold_skipped_and_empty_is_error() {
        let bad = ARC.replace(r#""answerKey":"A""#, r#""answerKey":"E""#);
        let f = write(&[&bad]);
        assert!(matches!(
            load_arc_jsonl(f.path()),
            Err(DatasetError::Empty { skipped: 1, .. })
        ));
        assert!(matches!(
            load_arc_jsonl(Path::new("/no/such/file.jsonl")),
            Err(DatasetError::Io { .. })
        ));
    }

    #[test]
    fn arc_line_round_trip() {
        let f = write(&[ARC, NUMERIC]);
        let ds = load_arc_jsonl(f.path()).unwrap();
        let lines: Vec<String> = ds.questions.iter().map(to_arc_line).collect();
        let g = write(&lines.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(load_arc_jsonl(g.path()).unwrap(), ds);
    }
}
