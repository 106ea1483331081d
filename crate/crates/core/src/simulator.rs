//! Synthetic interview cohorts with rule-engine ground truth.
//!
//! Every record draws a latent severity `s ~ Beta(c, c)`. Each question is
//! answered by a policy that leans towards the severe end of the question as
//! `s` grows; with probability `noise_rate` the policy is ignored and a
//! uniformly random valid answer is given instead. The outcome is whatever the
//! pack's outcome rules say about the resulting answers.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, EncodingMode};
use crate::questionnaire::{Answer, AnswerValue, Pack, Question, QuestionKey, QuestionKind};
use crate::UrgencyLevel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulatorError {
    #[error("complaint mix is empty")]
    EmptyComplaintMix,
    #[error("complaint mix is invalid: {0}")]
    InvalidComplaintMix(String),
    #[error("cohort must contain at least one interview")]
    ZeroInterviews,
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("interview engine failed: {0}")]
    Engine(#[from] crate::questionnaire::EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_interviews: usize,
    pub seed: u64,
    /// Probability of each entry questionnaire.
    pub complaint_mix: Vec<(String, f64)>,
    pub severity_concentration: f64,
    /// Probability that an answer ignores the latent severity.
    pub noise_rate: f64,
}

impl CohortSpec {
    pub const DESK_SCALE: usize = 50_000;
    pub const PAPER_SCALE: usize = 330_000;

    /// The 50k-interview cohort used as the reference dataset.
    pub fn golden() -> Self {
        Self {
            n_interviews: Self::DESK_SCALE,
            seed: 1,
            complaint_mix: crate::samples::default_complaint_mix(),
            severity_concentration: 2.0,
            noise_rate: 0.1,
        }
    }

    pub fn with_size(mut self, n_interviews: usize) -> Self {
        self.n_interviews = n_interviews;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, noise_rate: f64) -> Self {
        self.noise_rate = noise_rate;
        self
    }

    fn check(&self, pack: &Pack) -> Result<(), SimulatorError> {
        if self.n_interviews == 0 {
            return Err(SimulatorError::ZeroInterviews);
        }
        if self.complaint_mix.is_empty() {
            return Err(SimulatorError::EmptyComplaintMix);
        }
        let mut total = 0.0;
        for (id, p) in &self.complaint_mix {
            if pack.questionnaire(id).is_none() {
                return Err(SimulatorError::InvalidComplaintMix(format!(
                    "unknown questionnaire {id:?}"
                )));
            }
            if !(p.is_finite() && *p >= 0.0) {
                return Err(SimulatorError::InvalidComplaintMix(format!(
                    "probability of {id:?} is {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimulatorError::InvalidComplaintMix(format!(
                "probabilities sum to {total}"
            )));
        }
        if !(self.severity_concentration.is_finite() && self.severity_concentration > 0.0) {
            return Err(SimulatorError::InvalidSpec(
                "severity_concentration must be positive".into(),
            ));
        }
        if !(0.0..=0.5).contains(&self.noise_rate) {
            return Err(SimulatorError::InvalidSpec("noise_rate must lie in [0, 0.5]".into()));
        }
        Ok(())
    }
}

/// One completed synthetic interview.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterviewRecord {
    /// Sequential, unrelated to anything outside the cohort.
    pub dummy_id: u64,
    pub entry: String,
    pub answers: Vec<Answer>,
    pub outcome: UrgencyLevel,
}

/// Generates records lazily; each record depends only on the pack, the spec
/// and its own index.
pub struct CohortGenerator<'a> {
    pack: &'a Pack,
    spec: CohortSpec,
    severity: Beta<f64>,
    cumulative_mix: Vec<f64>,
}

impl<'a> CohortGenerator<'a> {
    pub fn new(pack: &'a Pack, spec: CohortSpec) -> Result<Self, SimulatorError> {
        spec.check(pack)?;
        let severity = Beta::new(spec.severity_concentration, spec.severity_concentration)
            .map_err(|e| SimulatorError::InvalidSpec(e.to_string()))?;
        let mut acc = 0.0;
        let cumulative_mix = spec
            .complaint_mix
            .iter()
            .map(|(_, p)| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            pack,
            spec,
            severity,
            cumulative_mix,
        })
    }

    pub fn len(&self) -> usize {
        self.spec.n_interviews
    }

    pub fn is_empty(&self) -> bool {
        self.spec.n_interviews == 0
    }

    pub fn record(&self, index: usize) -> Result<InterviewRecord, SimulatorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(index as u64);

        let u: f64 = rng.random();
        let pick = self
            .cumulative_mix
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative_mix.len() - 1);
        let entry = &self.spec.complaint_mix[pick].0;
        let severity = self.severity.sample(&mut rng);

        let mut state = self.pack.start(entry, format!("sim-{index}"))?;
        while let Some(key) = state.current.clone() {
            let question = self.pack.question(&key).expect("routing targets exist");
            let value = if rng.random::<f64>() < self.spec.noise_rate {
                uniform_answer(question, &mut rng)
            } else {
                policy_answer(question, severity, &mut rng)
            };
            self.pack.submit_answer_in_place(&mut state, value)?;
        }
        Ok(InterviewRecord {
            dummy_id: index as u64,
            entry: state.entry,
            answers: state.answers,
            outcome: state.outcome.expect("finished interviews carry an outcome"),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<InterviewRecord, SimulatorError>> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }
}

/// Generates the whole cohort; parallel, yet identical to sequential generation.
pub fn generate_cohort(pack: &Pack, spec: &CohortSpec) -> Result<Vec<InterviewRecord>, SimulatorError> {
    let generator = CohortGenerator::new(pack, spec.clone())?;
    (0..generator.len())
        .into_par_iter()
        .map(|i| generator.record(i))
        .collect()
}

const FREE_TEXT_ANSWERS: [&str; 5] = [
    "none",
    "paracetamol when needed",
    "insulin",
    "inhaler",
    "blood pressure tablets",
];

fn number_bounds(question: &Question) -> (f64, f64) {
    question.range.unwrap_or((0.0, 10.0))
}

fn snap(question: &Question, x: f64) -> f64 {
    let (lo, hi) = number_bounds(question);
    let x = x.clamp(lo, hi);
    if lo.fract() == 0.0 && hi.fract() == 0.0 {
        x.round()
    } else {
        x
    }
}

/// Severity-conditioned answer: options are ordered mild to severe and `true`
/// is the severe boolean answer.
fn policy_answer(question: &Question, severity: f64, rng: &mut ChaCha8Rng) -> AnswerValue {
    match question.kind {
        QuestionKind::Boolean => AnswerValue::Boolean(rng.random::<f64>() < 0.1 + 0.8 * severity),
        QuestionKind::Number => {
            let (lo, hi) = number_bounds(question);
            let jitter = Normal::new(0.0, 0.15).expect("valid sd").sample(rng);
            let position = (severity + jitter).clamp(0.0, 1.0);
            AnswerValue::Number(snap(question, lo + (hi - lo) * position))
        }
        QuestionKind::Single => {
            let weights = option_affinity(question.options.len(), severity);
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut choice = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    choice = i;
                    break;
                }
                u -= w;
            }
            AnswerValue::Single(question.options[choice].id.clone())
        }
        QuestionKind::Multi => {
            let weights = option_affinity(question.options.len(), severity);
            let mut selected: BTreeSet<String> = question
                .options
                .iter()
                .zip(&weights)
                .filter(|(_, w)| rng.random::<f64>() < 0.1 + 0.6 * **w)
                .map(|(o, _)| o.id.clone())
                .collect();
            if selected.is_empty() {
                let best = weights
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map_or(0, |(i, _)| i);
                selected.insert(question.options[best].id.clone());
            }
            AnswerValue::Multi(selected)
        }
        QuestionKind::Text => {
            AnswerValue::Text(FREE_TEXT_ANSWERS[rng.random_range(0..FREE_TEXT_ANSWERS.len())].into())
        }
    }
}

/// Affinity in (0, 1] of each option to the severity, peaking at the option
/// whose rank matches it.
fn option_affinity(n_options: usize, severity: f64) -> Vec<f64> {
    let span = (n_options.max(2) - 1) as f64;
    (0..n_options)
        .map(|i| {
            let d = i as f64 / span - severity;
            (-d * d / (2.0 * 0.3 * 0.3)).exp()
        })
        .collect()
}

fn uniform_answer(question: &Question, rng: &mut ChaCha8Rng) -> AnswerValue {
    match question.kind {
        QuestionKind::Boolean => AnswerValue::Boolean(rng.random()),
        QuestionKind::Number => {
            let (lo, hi) = number_bounds(question);
            AnswerValue::Number(snap(question, lo + (hi - lo) * rng.random::<f64>()))
        }
        QuestionKind::Single => AnswerValue::Single(
            question.options[rng.random_range(0..question.options.len())].id.clone(),
        ),
        QuestionKind::Multi => loop {
            let selected: BTreeSet<String> = question
                .options
                .iter()
                .filter(|_| rng.random::<bool>())
                .map(|o| o.id.clone())
                .collect();
            if !selected.is_empty() {
                break AnswerValue::Multi(selected);
            }
        },
        QuestionKind::Text => {
            AnswerValue::Text(FREE_TEXT_ANSWERS[rng.random_range(0..FREE_TEXT_ANSWERS.len())].into())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortStats {
    pub n_records: usize,
    pub mean_questions: f64,
    pub stddev_questions: f64,
    /// Columns of the schema built from the cohort.
    pub distinct_columns: usize,
    /// Mean populated entries per row in the missing-aware encoding.
    pub mean_populated_columns: f64,
    pub outcome_histogram: [usize; UrgencyLevel::COUNT],
}

impl CohortStats {
    pub fn outcome_fraction(&self, level: UrgencyLevel) -> f64 {
        self.outcome_histogram[level.ordinal() as usize] as f64 / self.n_records as f64
    }
}

pub fn cohort_stats(records: &[InterviewRecord]) -> Result<CohortStats, SimulatorError> {
    if records.is_empty() {
        return Err(SimulatorError::EmptyCohort);
    }
    let n = records.len() as f64;
    let lengths: Vec<f64> = records.iter().map(|r| r.answers.len() as f64).collect();
    let mean = lengths.iter().sum::<f64>() / n;
    let variance = lengths.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;

    let schema = dataset::build_schema(records)
        .map_err(|e| SimulatorError::InvalidSpec(format!("cohort does not encode: {e}")))?;
    let encoded = dataset::encode(records, &schema, EncodingMode::MissingAware)
        .map_err(|e| SimulatorError::InvalidSpec(format!("cohort does not encode: {e}")))?;

    let mut outcome_histogram = [0usize; UrgencyLevel::COUNT];
    for r in records {
        outcome_histogram[r.outcome.ordinal() as usize] += 1;
    }
    Ok(CohortStats {
        n_records: records.len(),
        mean_questions: mean,
        stddev_questions: variance.sqrt(),
        distinct_columns: schema.len(),
        mean_populated_columns: encoded.matrix.nnz() as f64 / n,
        outcome_histogram,
    })
}

/// Drops empty records and exact repeats of (answers, outcome), keeping the
/// first occurrence.
pub fn clean(records: Vec<InterviewRecord>) -> Vec<InterviewRecord> {
    let mut seen: HashSet<(Vec<Answer>, UrgencyLevel)> = HashSet::new();
    records
        .into_iter()
        .filter(|r| !r.answers.is_empty() && seen.insert((r.answers.clone(), r.outcome)))
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum CohortIoError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CohortLine {
    id: u64,
    entry: String,
    answers: Vec<AnswerLine>,
    outcome: UrgencyLevel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerLine {
    q: String,
    v: serde_json::Value,
}

/// One JSON object per line, in cohort order.
pub fn write_cohort<W: Write>(records: &[InterviewRecord], mut out: W) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, &record_line(record))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn record_line(record: &InterviewRecord) -> CohortLine {
    CohortLine {
        id: record.dummy_id,
        entry: record.entry.clone(),
        answers: record
            .answers
            .iter()
            .map(|a| AnswerLine {
                q: a.key.to_string(),
                v: a.value.to_json(),
            })
            .collect(),
        outcome: record.outcome,
    }
}

pub fn record_to_json(record: &InterviewRecord) -> String {
    serde_json::to_string(&record_line(record)).expect("records serialize")
}

/// Reads a cohort file; the pack resolves answer kinds.
pub fn read_cohort<R: BufRead>(pack: &Pack, input: R) -> Result<Vec<InterviewRecord>, CohortIoError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CohortIoError::Malformed { line: i + 1, message };
        let parsed: CohortLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let answers = parsed
            .answers
            .into_iter()
            .map(|a| {
                let key = QuestionKey::parse(&a.q)
                    .ok_or_else(|| malformed(format!("malformed question reference {:?}", a.q)))?;
                let question = pack
                    .question(&key)
                    .ok_or_else(|| malformed(format!("unknown question {key}")))?;
                let value = AnswerValue::from_json(&a.v, question.kind)
                    .ok_or_else(|| malformed(format!("answer to {key} is not a {}", question.kind)))?;
                Ok(Answer::new(key, value))
            })
            .collect::<Result<Vec<_>, CohortIoError>>()?;
        records.push(InterviewRecord {
            dummy_id: parsed.id,
            entry: parsed.entry,
            answers,
            outcome: parsed.outcome,
        });
    }
    Ok(records)
}
