use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, ColumnLookup, FeatureSchema};
use super::DatasetError;
use crate::questionnaire::{Answer, AnswerValue, QuestionKey};
use crate::simulator::InterviewRecord;
use crate::UrgencyLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncodingMode {
    /// Unanswered questions stay missing.
    #[serde(rename = "missing")]
    MissingAware,
    /// Unanswered questions read as 0 / false / "none".
    #[serde(rename = "zero")]
    ZeroFilled,
}

impl EncodingMode {
    pub fn name(self) -> &'static str {
        match self {
            EncodingMode::MissingAware => "missing",
            EncodingMode::ZeroFilled => "zero",
        }
    }
}

impl std::str::FromStr for EncodingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "missing" | "missing-aware" | "nan" => Ok(EncodingMode::MissingAware),
            "zero" | "zero-filled" | "non-nan" => Ok(EncodingMode::ZeroFilled),
            other => Err(format!("unknown encoding mode {other:?} (expected missing or zero)")),
        }
    }
}

impl std::fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Compressed sparse rows. An absent entry is missing; what missing means is
/// decided by the [`EncodingMode`] of the owning dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseMatrix {
    n_cols: usize,
    row_offsets: Vec<usize>,
    columns: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(n_cols: usize) -> Self {
        Self {
            n_cols,
            row_offsets: vec![0],
            columns: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row; entries must have strictly increasing in-range columns
    /// and finite values.
    pub fn push_row(&mut self, entries: &[(u32, f64)]) -> Result<(), DatasetError> {
        let mut previous: Option<u32> = None;
        for &(col, value) in entries {
            if col as usize >= self.n_cols {
                return Err(DatasetError::InvalidRow(format!(
                    "column {col} out of range ({} columns)",
                    self.n_cols
                )));
            }
            if previous.is_some_and(|p| p >= col) {
                return Err(DatasetError::InvalidRow("columns must increase strictly".into()));
            }
            if !value.is_finite() {
                return Err(DatasetError::InvalidRow(format!("non-finite value in column {col}")));
            }
            previous = Some(col);
        }
        self.columns.extend(entries.iter().map(|e| e.0));
        self.values.extend(entries.iter().map(|e| e.1));
        self.row_offsets.push(self.columns.len());
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        SparseRow {
            columns: &self.columns[range.clone()],
            values: &self.values[range],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = SparseRow<'_>> {
        (0..self.n_rows()).map(|i| self.row(i))
    }

    pub fn select_rows(&self, indices: &[usize]) -> SparseMatrix {
        let mut out = SparseMatrix::new(self.n_cols);
        for &i in indices {
            let row = self.row(i);
            out.columns.extend_from_slice(row.columns);
            out.values.extend_from_slice(row.values);
            out.row_offsets.push(out.columns.len());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseRow<'a> {
    pub columns: &'a [u32],
    pub values: &'a [f64],
}

impl<'a> SparseRow<'a> {
    pub fn get(&self, col: u32) -> Option<f64> {
        self.columns
            .binary_search(&col)
            .ok()
            .map(|i| self.values[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, f64)> + 'a {
        self.columns.iter().copied().zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Logical dense view: missing entries are `None` in missing-aware mode
    /// and `Some(0.0)` in zero-filled mode.
    pub fn to_dense(&self, n_cols: usize, mode: EncodingMode) -> Vec<Option<f64>> {
        let fill = match mode {
            EncodingMode::MissingAware => None,
            EncodingMode::ZeroFilled => Some(0.0),
        };
        let mut dense = vec![fill; n_cols];
        for (col, value) in self.entries() {
            dense[col as usize] = Some(value);
        }
        dense
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub matrix: SparseMatrix,
    /// Urgency ordinals, one per row.
    pub labels: Vec<u8>,
    pub schema: FeatureSchema,
    pub mode: EncodingMode,
}

impl EncodedDataset {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn subset(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            matrix: self.matrix.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            schema: self.schema.clone(),
            mode: self.mode,
        }
    }

    pub fn label_counts(&self) -> [usize; UrgencyLevel::COUNT] {
        let mut counts = [0; UrgencyLevel::COUNT];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Encodes one answer sequence into sorted sparse entries.
pub(crate) fn encode_answers(
    answers: &[Answer],
    schema: &FeatureSchema,
    lookup: &ColumnLookup<'_>,
    mode: EncodingMode,
) -> Result<Vec<(u32, f64)>, DatasetError> {
    let mut entries: Vec<(u32, f64)> = Vec::with_capacity(answers.len() + 4);
    let unknown = |key: &QuestionKey, option: Option<&str>| DatasetError::UnknownColumn {
        question: key.to_string(),
        option: option.map(str::to_string),
    };
    for answer in answers {
        let key = &answer.key;
        let plain = || lookup.get(&(key.questionnaire.as_str(), key.question.as_str(), None));
        match &answer.value {
            AnswerValue::Text(_) => {}
            AnswerValue::Boolean(b) => {
                let col = *plain().ok_or_else(|| unknown(key, None))?;
                expect_kind(schema, col, key, |k| matches!(k, ColumnKind::Boolean))?;
                entries.push((col as u32, if *b { 1.0 } else { 0.0 }));
            }
            AnswerValue::Number(x) => {
                let col = *plain().ok_or_else(|| unknown(key, None))?;
                expect_kind(schema, col, key, |k| matches!(k, ColumnKind::Number))?;
                entries.push((col as u32, *x));
            }
            AnswerValue::Single(option) => {
                let col = *plain().ok_or_else(|| unknown(key, None))?;
                let ColumnKind::Category { vocabulary } = &schema.columns[col].kind else {
                    return Err(DatasetError::KindMismatch(key.to_string()));
                };
                let index = vocabulary
                    .iter()
                    .position(|v| v == option)
                    .ok_or_else(|| DatasetError::OutsideVocabulary {
                        question: key.to_string(),
                        value: option.clone(),
                    })?;
                entries.push((col as u32, (index + 1) as f64));
            }
            AnswerValue::Multi(selected) => {
                for option in selected {
                    if !lookup.contains_key(&(
                        key.questionnaire.as_str(),
                        key.question.as_str(),
                        Some(option.as_str()),
                    )) {
                        return Err(unknown(key, Some(option)));
                    }
                }
                // Every option column of an answered question is populated.
                for (col, column) in schema.columns.iter().enumerate() {
                    if column.questionnaire == key.questionnaire && column.question == key.question {
                        if let Some(option) = &column.option {
                            let value = if selected.contains(option) { 1.0 } else { 0.0 };
                            entries.push((col as u32, value));
                        }
                    }
                }
            }
        }
    }
    entries.sort_by_key(|e| e.0);
    if entries.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(DatasetError::InvalidRow("a question is answered twice".into()));
    }
    if mode == EncodingMode::ZeroFilled {
        // Dense semantics: only non-zero values are stored.
        entries.retain(|e| e.1 != 0.0);
    }
    Ok(entries)
}

fn expect_kind(
    schema: &FeatureSchema,
    col: usize,
    key: &QuestionKey,
    accept: impl Fn(&ColumnKind) -> bool,
) -> Result<(), DatasetError> {
    if accept(&schema.columns[col].kind) {
        Ok(())
    } else {
        Err(DatasetError::KindMismatch(key.to_string()))
    }
}

/// Encodes labelled answer sequences, in order.
pub fn encode_rows<'a, I>(rows: I, schema: &FeatureSchema, mode: EncodingMode) -> Result<EncodedDataset, DatasetError>
where
    I: IntoIterator<Item = (&'a [Answer], UrgencyLevel)>,
{
    let lookup = schema.lookup();
    let mut matrix = SparseMatrix::new(schema.len());
    let mut labels = Vec::new();
    for (answers, label) in rows {
        let entries = encode_answers(answers, schema, &lookup, mode)?;
        matrix.push_row(&entries)?;
        labels.push(label.ordinal());
    }
    Ok(EncodedDataset {
        matrix,
        labels,
        schema: schema.clone(),
        mode,
    })
}

pub fn encode(records: &[InterviewRecord], schema: &FeatureSchema, mode: EncodingMode) -> Result<EncodedDataset, DatasetError> {
    encode_rows(records.iter().map(|r| (r.answers.as_slice(), r.outcome)), schema, mode)
}

/// Recovers the encodable answers of a missing-aware row, sorted by question.
pub fn decode_row(schema: &FeatureSchema, row: SparseRow<'_>) -> Result<Vec<Answer>, DatasetError> {
    let mut answers: Vec<Answer> = Vec::new();
    let mut multi: Option<(QuestionKey, BTreeSet<String>)> = None;
    let flush = |multi: &mut Option<(QuestionKey, BTreeSet<String>)>, answers: &mut Vec<Answer>| {
        if let Some((key, selected)) = multi.take() {
            answers.push(Answer::new(key, AnswerValue::Multi(selected)));
        }
    };
    for (col, value) in row.entries() {
        let column = schema
            .columns
            .get(col as usize)
            .ok_or_else(|| DatasetError::InvalidRow(format!("column {col} out of range")))?;
        let key = QuestionKey::new(&column.questionnaire, &column.question);
        if multi.as_ref().is_some_and(|(k, _)| *k != key) {
            flush(&mut multi, &mut answers);
        }
        match (&column.kind, &column.option) {
            (ColumnKind::Boolean, Some(option)) => {
                let entry = multi.get_or_insert_with(|| (key, BTreeSet::new()));
                if value == 1.0 {
                    entry.1.insert(option.clone());
                }
            }
            (ColumnKind::Boolean, None) => answers.push(Answer::new(key, AnswerValue::Boolean(value == 1.0))),
            (ColumnKind::Number, _) => answers.push(Answer::new(key, AnswerValue::Number(value))),
            (ColumnKind::Category { vocabulary }, _) => {
                let option = vocabulary
                    .get((value as usize).wrapping_sub(1))
                    .filter(|_| value.fract() == 0.0 && value >= 1.0)
                    .ok_or_else(|| DatasetError::OutsideVocabulary {
                        question: key.to_string(),
                        value: value.to_string(),
                    })?;
                answers.push(Answer::new(key, AnswerValue::Single(option.clone())));
            }
        }
    }
    flush(&mut multi, &mut answers);
    Ok(answers)
}
