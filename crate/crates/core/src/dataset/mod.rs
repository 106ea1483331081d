//! Wide sparse encoding of interview records, stratified splits and
//! truncation of complete interviews into unfinished ones.

mod encode;
mod io;
mod schema;
mod split;
mod truncate;

use thiserror::Error;

use crate::questionnaire::QuestionKind;

pub use encode::{decode_row, encode, encode_rows, EncodedDataset, EncodingMode, SparseMatrix, SparseRow};
pub use io::{read_encoded, write_encoded, EncodedIoError};
pub use schema::{build_schema, schema_from_pack, Column, ColumnKind, FeatureSchema};
pub use split::{split_stratified, split_tiers, SplitSpec, Tiers};
pub use truncate::{kept_answers, truncate, TruncatedInterview, TruncationSpec, DEFAULT_SWEEP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("question {question} is answered as {first} in one record and {second} in another")]
    ConflictingKinds {
        question: String,
        first: QuestionKind,
        second: QuestionKind,
    },
    #[error("no schema column for {question}{}", option.as_ref().map(|o| format!(" option {o}")).unwrap_or_default())]
    UnknownColumn { question: String, option: Option<String> },
    #[error("value {value:?} of {question} is outside the column vocabulary")]
    OutsideVocabulary { question: String, value: String },
    #[error("answer to {0} does not match the schema column kind")]
    KindMismatch(String),
    #[error("invalid row: {0}")]
    InvalidRow(String),
    #[error("label {label} has {count} row(s); stratified splitting needs at least 2")]
    LabelTooRare { label: String, count: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("completeness must be in (0, 1], got {0}")]
    InvalidCompleteness(f64),
}

