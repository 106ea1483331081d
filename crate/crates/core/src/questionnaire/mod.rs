//! Questionnaire packs: parsing, validation and deterministic interview execution.

mod condition;
mod interview;
mod pack;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

pub use condition::{CompareOp, Condition, ConditionError, Literal, CONDITION_GRAMMAR};
pub use interview::{EngineError, InterviewState};
pub use pack::{BranchRule, BranchTarget, OutcomeRule, Pack, PackError, QuestionnaireDef};
pub use validate::ValidationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionKind {
    Boolean,
    Number,
    Single,
    Multi,
    Text,
}

impl QuestionKind {
    pub fn name(self) -> &'static str {
        match self {
            QuestionKind::Boolean => "boolean",
            QuestionKind::Number => "number",
            QuestionKind::Single => "single",
            QuestionKind::Multi => "multi",
            QuestionKind::Text => "text",
        }
    }

    pub fn has_options(self) -> bool {
        matches!(self, QuestionKind::Single | QuestionKind::Multi)
    }
}

impl fmt::Display for QuestionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub prompt: String,
    pub kind: QuestionKind,
    /// Declared from least to most severe; the simulator relies on this order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<Choice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
}

impl Question {
    pub fn option_index(&self, option_id: &str) -> Option<usize> {
        self.options.iter().position(|o| o.id == option_id)
    }
}

/// Fully qualified question identity: `questionnaire.question`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QuestionKey {
    pub questionnaire: String,
    pub question: String,
}

impl QuestionKey {
    pub fn new(questionnaire: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            questionnaire: questionnaire.into(),
            question: question.into(),
        }
    }

    /// Parses `questionnaire.question`.
    pub fn parse(qualified: &str) -> Option<Self> {
        let (questionnaire, question) = qualified.split_once('.')?;
        if questionnaire.is_empty() || question.is_empty() || question.contains('.') {
            return None;
        }
        Some(Self::new(questionnaire, question))
    }
}

impl fmt::Display for QuestionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.questionnaire, self.question)
    }
}

#[derive(Debug, Clone)]
pub enum AnswerValue {
    Boolean(bool),
    Number(f64),
    Single(String),
    Multi(BTreeSet<String>),
    Text(String),
}

impl AnswerValue {
    pub fn kind(&self) -> QuestionKind {
        match self {
            AnswerValue::Boolean(_) => QuestionKind::Boolean,
            AnswerValue::Number(_) => QuestionKind::Number,
            AnswerValue::Single(_) => QuestionKind::Single,
            AnswerValue::Multi(_) => QuestionKind::Multi,
            AnswerValue::Text(_) => QuestionKind::Text,
        }
    }

    pub fn multi<I, S>(options: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AnswerValue::Multi(options.into_iter().map(Into::into).collect())
    }

    /// Interchange representation: `bool | number | string | [string]`.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            AnswerValue::Boolean(b) => Value::Bool(*b),
            AnswerValue::Number(x) => serde_json::Number::from_f64(*x)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            AnswerValue::Single(s) | AnswerValue::Text(s) => Value::String(s.clone()),
            AnswerValue::Multi(set) => {
                Value::Array(set.iter().cloned().map(Value::String).collect())
            }
        }
    }

    /// Reads the interchange representation; the question kind disambiguates
    /// single-choice from free text.
    pub fn from_json(value: &serde_json::Value, kind: QuestionKind) -> Option<Self> {
        use serde_json::Value;
        match (kind, value) {
            (QuestionKind::Boolean, Value::Bool(b)) => Some(AnswerValue::Boolean(*b)),
            (QuestionKind::Number, Value::Number(n)) => n.as_f64().map(AnswerValue::Number),
            (QuestionKind::Single, Value::String(s)) => Some(AnswerValue::Single(s.clone())),
            (QuestionKind::Text, Value::String(s)) => Some(AnswerValue::Text(s.clone())),
            (QuestionKind::Multi, Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect::<Option<BTreeSet<_>>>()
                .map(AnswerValue::Multi),
            _ => None,
        }
    }
}

impl PartialEq for AnswerValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (AnswerValue::Boolean(a), AnswerValue::Boolean(b)) => a == b,
            (AnswerValue::Number(a), AnswerValue::Number(b)) => a.to_bits() == b.to_bits(),
            (AnswerValue::Single(a), AnswerValue::Single(b)) => a == b,
            (AnswerValue::Multi(a), AnswerValue::Multi(b)) => a == b,
            (AnswerValue::Text(a), AnswerValue::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for AnswerValue {}

impl Hash for AnswerValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            AnswerValue::Boolean(b) => b.hash(state),
            AnswerValue::Number(x) => x.to_bits().hash(state),
            AnswerValue::Single(s) | AnswerValue::Text(s) => s.hash(state),
            AnswerValue::Multi(set) => set.hash(state),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Answer {
    pub key: QuestionKey,
    pub value: AnswerValue,
}

impl Answer {
    pub fn new(key: QuestionKey, value: AnswerValue) -> Self {
        Self { key, value }
    }
}
