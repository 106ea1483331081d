use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DatasetError;
use crate::questionnaire::{AnswerValue, Pack, QuestionKind};
use crate::simulator::InterviewRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Boolean,
    Number,
    /// Encoded as the 1-based index into `vocabulary`; 0 is reserved for "none".
    Category { vocabulary: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub questionnaire: String,
    pub question: String,
    /// Set for the per-option columns of a multi-choice question.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<String>,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl Column {
    /// Display name such as `injury-triage-pain-level`.
    pub fn name(&self) -> String {
        match &self.option {
            Some(option) => format!("{}-{}-{}", self.questionnaire, self.question, option),
            None => format!("{}-{}", self.questionnaire, self.question),
        }
    }

    fn sort_key(&self) -> (&str, &str, Option<&str>) {
        (&self.questionnaire, &self.question, self.option.as_deref())
    }
}

/// Columns in canonical `(questionnaire, question, option)` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<Column>,
}

pub(crate) type ColumnLookup<'a> = HashMap<(&'a str, &'a str, Option<&'a str>), usize>;

impl FeatureSchema {
    pub fn new(mut columns: Vec<Column>) -> Self {
        columns.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Self { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Hex digest of the canonical schema serialization.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&canonical);
        hex::encode(&digest[..16])
    }

    pub(crate) fn lookup(&self) -> ColumnLookup<'_> {
        self.columns
            .iter()
            .enumerate()
            .map(|(i, c)| ((c.questionnaire.as_str(), c.question.as_str(), c.option.as_deref()), i))
            .collect()
    }

    pub fn column_index(&self, questionnaire: &str, question: &str, option: Option<&str>) -> Option<usize> {
        self.columns.iter().position(|c| {
            c.questionnaire == questionnaire && c.question == question && c.option.as_deref() == option
        })
    }
}

#[derive(Default)]
struct Observed {
    kind: Option<QuestionKind>,
    options: std::collections::BTreeSet<String>,
}

/// Schema of every encodable answer seen in `records`. Text answers are dropped.
pub fn build_schema(records: &[InterviewRecord]) -> Result<FeatureSchema, DatasetError> {
    let mut observed: BTreeMap<(String, String), Observed> = BTreeMap::new();
    for record in records {
        for answer in &record.answers {
            let slot = observed
                .entry((answer.key.questionnaire.clone(), answer.key.question.clone()))
                .or_default();
            let kind = answer.value.kind();
            match slot.kind {
                Some(existing) if existing != kind => {
                    return Err(DatasetError::ConflictingKinds {
                        question: answer.key.to_string(),
                        first: existing,
                        second: kind,
                    })
                }
                _ => slot.kind = Some(kind),
            }
            match &answer.value {
                AnswerValue::Single(option) => {
                    slot.options.insert(option.clone());
                }
                AnswerValue::Multi(options) => slot.options.extend(options.iter().cloned()),
                _ => {}
            }
        }
    }

    let mut columns = Vec::new();
    for ((questionnaire, question), seen) in observed {
        let Some(kind) = seen.kind else { continue };
        push_columns(&mut columns, &questionnaire, &question, kind, seen.options.into_iter().collect());
    }
    Ok(FeatureSchema::new(columns))
}

/// Schema covering every encodable question and option a pack declares.
pub fn schema_from_pack(pack: &Pack) -> FeatureSchema {
    let mut columns = Vec::new();
    for (key, question) in pack.questions() {
        let mut options: Vec<String> = question.options.iter().map(|o| o.id.clone()).collect();
        options.sort();
        push_columns(&mut columns, &key.questionnaire, &key.question, question.kind, options);
    }
    FeatureSchema::new(columns)
}

fn push_columns(
    columns: &mut Vec<Column>,
    questionnaire: &str,
    question: &str,
    kind: QuestionKind,
    sorted_options: Vec<String>,
) {
    let column = |option: Option<String>, kind: ColumnKind| Column {
        questionnaire: questionnaire.to_string(),
        question: question.to_string(),
        option,
        kind,
    };
    match kind {
        QuestionKind::Boolean => columns.push(column(None, ColumnKind::Boolean)),
        QuestionKind::Number => columns.push(column(None, ColumnKind::Number)),
        QuestionKind::Single => columns.push(column(
            None,
            ColumnKind::Category {
                vocabulary: sorted_options,
            },
        )),
        QuestionKind::Multi => {
            for option in sorted_options {
                columns.push(column(Some(option), ColumnKind::Boolean));
            }
        }
        QuestionKind::Text => {}
    }
}
