use super::DatasetError;
use crate::questionnaire::Answer;
use crate::simulator::InterviewRecord;

pub const DEFAULT_SWEEP: [f64; 4] = [1.0, 0.8, 0.6, 0.4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSpec {
    completeness: f64,
}

impl TruncationSpec {
    pub fn new(completeness: f64) -> Result<Self, DatasetError> {
        if completeness > 0.0 && completeness <= 1.0 {
            Ok(Self { completeness })
        } else {
            Err(DatasetError::InvalidCompleteness(completeness))
        }
    }

    pub fn completeness(&self) -> f64 {
        self.completeness
    }
}

/// An interview cut short: the first answers of a record, no outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedInterview {
    pub dummy_id: u64,
    pub entry: String,
    pub answers: Vec<Answer>,
}

/// `max(1, round_half_up(n * completeness))`, capped at `n`.
pub fn kept_answers(n: usize, spec: &TruncationSpec) -> usize {
    if n == 0 {
        return 0;
    }
    // The epsilon keeps products like 2.5 from landing on 2.4999999.
    let k = (n as f64 * spec.completeness + 0.5 + 1e-9).floor() as usize;
    k.clamp(1, n)
}

pub fn truncate(record: &InterviewRecord, spec: &TruncationSpec) -> TruncatedInterview {
    let k = kept_answers(record.answers.len(), spec);
    TruncatedInterview {
        dummy_id: record.dummy_id,
        entry: record.entry.clone(),
        answers: record.answers[..k].to_vec(),
    }
}
