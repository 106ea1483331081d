use std::collections::{HashMap, HashSet};

use serde::Deserialize;

use super::condition::{is_reserved, valid_identifier, CompareOp, Condition, ConditionError, Literal};
use super::{AnswerValue, Choice, Question, QuestionKey, QuestionKind};
use crate::UrgencyLevel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PackError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid condition in {context}: {source}")]
    Condition {
        context: String,
        source: ConditionError,
    },
    #[error("dangling reference to {reference} in {context}")]
    DanglingReference { reference: String, context: String },
    #[error("duplicate identifier {0}")]
    DuplicateId(String),
    #[error("routing cycle through {0}")]
    Cycle(String),
    #[error("question {0} has no unconditional default branch at its lowest priority")]
    MissingDefaultBranch(String),
    #[error("the lowest-priority outcome rule must be unconditional")]
    MissingFallbackOutcome,
    #[error("invalid pack: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchTarget {
    Question(QuestionKey),
    Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRule {
    pub from: String,
    /// Lower values are evaluated first.
    pub priority: i64,
    pub condition: Condition,
    pub target: BranchTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRule {
    pub priority: i64,
    pub condition: Condition,
    pub level: UrgencyLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionnaireDef {
    pub id: String,
    pub entry: String,
    pub questions: Vec<Question>,
    pub branches: Vec<BranchRule>,
    pub outcomes: Vec<OutcomeRule>,
}

impl QuestionnaireDef {
    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn entry_key(&self) -> QuestionKey {
        QuestionKey::new(&self.id, &self.entry)
    }
}

/// A parsed and cross-checked questionnaire pack. Immutable once built.
#[derive(Debug, Clone)]
pub struct Pack {
    questionnaires: Vec<QuestionnaireDef>,
    index: HashMap<QuestionKey, (usize, usize)>,
    /// Branch rules per source question, sorted by priority.
    routes: HashMap<QuestionKey, Vec<BranchRule>>,
    /// All outcome rules of the pack, sorted by priority.
    outcomes: Vec<OutcomeRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPack {
    pack_version: i64,
    questionnaires: Vec<RawQuestionnaire>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuestionnaire {
    id: String,
    entry: String,
    questions: Vec<RawQuestion>,
    #[serde(default)]
    branches: Vec<RawBranch>,
    #[serde(default)]
    outcomes: Vec<RawOutcome>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuestion {
    id: String,
    prompt: String,
    kind: QuestionKind,
    #[serde(default)]
    options: Vec<Choice>,
    range: Option<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    from: String,
    priority: i64,
    when: Option<String>,
    goto: Option<String>,
    terminal: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutcome {
    priority: i64,
    when: Option<String>,
    level: UrgencyLevel,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_when(when: Option<&str>, context: impl FnOnce() -> String) -> Result<Condition, PackError> {
    match when {
        None => Ok(Condition::Always),
        Some(src) => Condition::parse(src).map_err(|source| PackError::Condition {
            context: context(),
            source,
        }),
    }
}

impl Pack {
    /// Parses a pack document and resolves every cross-reference.
    pub fn parse(definition: &[u8]) -> Result<Pack, PackError> {
        let text = std::str::from_utf8(definition).map_err(|e| {
            let (line, column) = line_column(
                &String::from_utf8_lossy(&definition[..e.valid_up_to()]),
                e.valid_up_to(),
            );
            PackError::Syntax {
                line,
                column,
                message: "input is not valid UTF-8".into(),
            }
        })?;
        let raw: RawPack = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map_or((1, 1), |span| line_column(text, span.start));
            PackError::Syntax {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        if raw.pack_version != 1 {
            return Err(PackError::Invalid(format!(
                "unsupported pack_version {}",
                raw.pack_version
            )));
        }
        let questionnaires = raw
            .questionnaires
            .into_iter()
            .map(convert_questionnaire)
            .collect::<Result<Vec<_>, _>>()?;
        Pack::from_questionnaires(questionnaires)
    }

    pub fn from_questionnaires(questionnaires: Vec<QuestionnaireDef>) -> Result<Pack, PackError> {
        if questionnaires.is_empty() {
            return Err(PackError::Invalid("pack has no questionnaires".into()));
        }
        let mut index = HashMap::new();
        let mut seen_questionnaires = HashSet::new();
        for (qi, def) in questionnaires.iter().enumerate() {
            if !valid_identifier(&def.id) {
                return Err(PackError::Invalid(format!("malformed questionnaire id {:?}", def.id)));
            }
            if !seen_questionnaires.insert(def.id.as_str()) {
                return Err(PackError::DuplicateId(def.id.clone()));
            }
            for (xi, question) in def.questions.iter().enumerate() {
                check_question(&def.id, question)?;
                let key = QuestionKey::new(&def.id, &question.id);
                if index.insert(key.clone(), (qi, xi)).is_some() {
                    return Err(PackError::DuplicateId(key.to_string()));
                }
            }
            if def.question(&def.entry).is_none() {
                return Err(PackError::DanglingReference {
                    reference: def.entry.clone(),
                    context: format!("entry of {}", def.id),
                });
            }
        }

        let mut pack = Pack {
            questionnaires,
            index,
            routes: HashMap::new(),
            outcomes: Vec::new(),
        };

        for def in &pack.questionnaires {
            for rule in &def.branches {
                let context = format!("branch {}.{} priority {}", def.id, rule.from, rule.priority);
                let source = QuestionKey::new(&def.id, &rule.from);
                if !pack.index.contains_key(&source) {
                    return Err(PackError::DanglingReference {
                        reference: source.to_string(),
                        context,
                    });
                }
                if let BranchTarget::Question(target) = &rule.target {
                    if !pack.index.contains_key(target) {
                        return Err(PackError::DanglingReference {
                            reference: target.to_string(),
                            context,
                        });
                    }
                }
                pack.check_condition(&rule.condition, &context)?;
            }
            for rule in &def.outcomes {
                let context = format!("outcome rule priority {} in {}", rule.priority, def.id);
                pack.check_condition(&rule.condition, &context)?;
            }
        }

        let mut routes: HashMap<QuestionKey, Vec<BranchRule>> = HashMap::new();
        for def in &pack.questionnaires {
            for rule in &def.branches {
                routes
                    .entry(QuestionKey::new(&def.id, &rule.from))
                    .or_default()
                    .push(rule.clone());
            }
        }
        for (key, rules) in routes.iter_mut() {
            rules.sort_by_key(|r| r.priority);
            if let Some(w) = rules.windows(2).find(|w| w[0].priority == w[1].priority) {
                return Err(PackError::DuplicateId(format!(
                    "branch priority {} on {key}",
                    w[0].priority
                )));
            }
        }
        for key in pack.index.keys() {
            let has_default = routes
                .get(key)
                .and_then(|rules| rules.last())
                .is_some_and(|r| r.condition.is_always());
            if !has_default {
                return Err(PackError::MissingDefaultBranch(key.to_string()));
            }
        }
        pack.routes = routes;

        let mut outcomes: Vec<OutcomeRule> = pack
            .questionnaires
            .iter()
            .flat_map(|d| d.outcomes.iter().cloned())
            .collect();
        outcomes.sort_by_key(|r| r.priority);
        if let Some(w) = outcomes.windows(2).find(|w| w[0].priority == w[1].priority) {
            return Err(PackError::DuplicateId(format!(
                "outcome priority {}",
                w[0].priority
            )));
        }
        if !outcomes.last().is_some_and(|r| r.condition.is_always()) {
            return Err(PackError::MissingFallbackOutcome);
        }
        pack.outcomes = outcomes;

        pack.check_acyclic()?;
        Ok(pack)
    }

    fn check_condition(&self, condition: &Condition, context: &str) -> Result<(), PackError> {
        for key in condition.references() {
            if !self.index.contains_key(key) {
                return Err(PackError::DanglingReference {
                    reference: key.to_string(),
                    context: context.to_string(),
                });
            }
        }
        let mut failure = None;
        condition.for_each_comparison(&mut |key, op, literal| {
            if failure.is_some() {
                return;
            }
            let question = self.question(key).expect("checked above");
            failure = check_comparison(key, question, op, literal, context).err();
        });
        failure.map_or(Ok(()), Err)
    }

    fn check_acyclic(&self) -> Result<(), PackError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Fresh,
            Active,
            Done,
        }
        let mut keys: Vec<&QuestionKey> = self.index.keys().collect();
        keys.sort();
        let position: HashMap<&QuestionKey, usize> =
            keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let mut marks = vec![Mark::Fresh; keys.len()];
        for start in 0..keys.len() {
            if marks[start] != Mark::Fresh {
                continue;
            }
            // Iterative DFS: (node, next successor to visit).
            let mut stack = vec![(start, 0usize)];
            marks[start] = Mark::Active;
            while let Some((node, next)) = stack.pop() {
                let successors = self.successors(keys[node]);
                if next < successors.len() {
                    stack.push((node, next + 1));
                    let succ = position[successors[next]];
                    match marks[succ] {
                        Mark::Active => return Err(PackError::Cycle(keys[succ].to_string())),
                        Mark::Fresh => {
                            marks[succ] = Mark::Active;
                            stack.push((succ, 0));
                        }
                        Mark::Done => {}
                    }
                } else {
                    marks[node] = Mark::Done;
                }
            }
        }
        Ok(())
    }

    pub fn questionnaires(&self) -> &[QuestionnaireDef] {
        &self.questionnaires
    }

    pub fn questionnaire(&self, id: &str) -> Option<&QuestionnaireDef> {
        self.questionnaires.iter().find(|q| q.id == id)
    }

    pub fn question(&self, key: &QuestionKey) -> Option<&Question> {
        self.index
            .get(key)
            .map(|&(qi, xi)| &self.questionnaires[qi].questions[xi])
    }

    /// Every question of the pack in declaration order.
    pub fn questions(&self) -> impl Iterator<Item = (QuestionKey, &Question)> {
        self.questionnaires.iter().flat_map(|def| {
            def.questions
                .iter()
                .map(move |q| (QuestionKey::new(&def.id, &q.id), q))
        })
    }

    /// Branch rules leaving `key`, highest priority first.
    pub fn branches(&self, key: &QuestionKey) -> &[BranchRule] {
        self.routes.get(key).map_or(&[], Vec::as_slice)
    }

    /// Outcome rules of the whole pack, highest priority first.
    pub fn outcome_rules(&self) -> &[OutcomeRule] {
        &self.outcomes
    }

    /// Distinct question targets of `key`'s branches, in priority order.
    pub(crate) fn successors(&self, key: &QuestionKey) -> Vec<&QuestionKey> {
        let mut out: Vec<&QuestionKey> = Vec::new();
        for rule in self.branches(key) {
            if let BranchTarget::Question(target) = &rule.target {
                if !out.contains(&target) {
                    out.push(target);
                }
            }
        }
        out
    }

    pub(crate) fn has_terminal_branch(&self, key: &QuestionKey) -> bool {
        self.branches(key)
            .iter()
            .any(|r| r.target == BranchTarget::Terminal)
    }

    /// Checks that `value` is an admissible answer to `question`.
    pub fn check_answer(&self, key: &QuestionKey, value: &AnswerValue) -> Result<(), String> {
        let question = self
            .question(key)
            .ok_or_else(|| format!("unknown question {key}"))?;
        if value.kind() != question.kind {
            return Err(format!(
                "question {key} expects a {} answer, got {}",
                question.kind,
                value.kind()
            ));
        }
        match value {
            AnswerValue::Number(x) => {
                if !x.is_finite() {
                    return Err(format!("answer to {key} must be finite"));
                }
                if let Some((lo, hi)) = question.range {
                    if *x < lo || *x > hi {
                        return Err(format!("answer {x} to {key} is outside [{lo}, {hi}]"));
                    }
                }
            }
            AnswerValue::Single(option) => {
                if question.option_index(option).is_none() {
                    return Err(format!("{option:?} is not an option of {key}"));
                }
            }
            AnswerValue::Multi(options) => {
                if options.is_empty() {
                    return Err(format!("answer to {key} selects no option"));
                }
                if let Some(bad) = options.iter().find(|o| question.option_index(o).is_none()) {
                    return Err(format!("{bad:?} is not an option of {key}"));
                }
            }
            AnswerValue::Boolean(_) | AnswerValue::Text(_) => {}
        }
        Ok(())
    }
}

fn check_question(questionnaire: &str, question: &Question) -> Result<(), PackError> {
    let key = format!("{questionnaire}.{}", question.id);
    if !valid_identifier(&question.id) {
        return Err(PackError::Invalid(format!("malformed question id {key:?}")));
    }
    if question.kind.has_options() {
        if question.options.is_empty() {
            return Err(PackError::Invalid(format!("{key} declares no options")));
        }
    } else if !question.options.is_empty() {
        return Err(PackError::Invalid(format!(
            "{key} is a {} question and cannot declare options",
            question.kind
        )));
    }
    let mut seen = HashSet::new();
    for option in &question.options {
        if !valid_identifier(&option.id) || is_reserved(&option.id) {
            return Err(PackError::Invalid(format!(
                "malformed option id {:?} in {key}",
                option.id
            )));
        }
        if !seen.insert(option.id.as_str()) {
            return Err(PackError::DuplicateId(format!("{key} option {}", option.id)));
        }
    }
    if let Some((lo, hi)) = question.range {
        if question.kind != QuestionKind::Number {
            return Err(PackError::Invalid(format!("{key}: only number questions take a range")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(PackError::Invalid(format!("{key}: range must satisfy min < max")));
        }
    }
    Ok(())
}

fn check_comparison(
    key: &QuestionKey,
    question: &Question,
    op: CompareOp,
    literal: &Literal,
    context: &str,
) -> Result<(), PackError> {
    let mismatch = || {
        PackError::Invalid(format!(
            "{context}: '{key} {} {literal}' does not fit a {} question",
            op.symbol(),
            question.kind
        ))
    };
    if !op.accepts(question.kind) {
        return Err(mismatch());
    }
    match (question.kind, literal) {
        (QuestionKind::Boolean, Literal::Bool(_))
        | (QuestionKind::Number, Literal::Number(_))
        | (QuestionKind::Text, Literal::Str(_)) => Ok(()),
        (QuestionKind::Single | QuestionKind::Multi, Literal::Ident(option)) => {
            if question.option_index(option).is_some() {
                Ok(())
            } else {
                Err(PackError::DanglingReference {
                    reference: format!("{key} option {option}"),
                    context: context.to_string(),
                })
            }
        }
        _ => Err(mismatch()),
    }
}

fn convert_questionnaire(raw: RawQuestionnaire) -> Result<QuestionnaireDef, PackError> {
    let questionnaire_id = raw.id;
    let questions = raw
        .questions
        .into_iter()
        .map(|q| Question {
            id: q.id,
            prompt: q.prompt,
            kind: q.kind,
            options: q.options,
            range: q.range.map(|[lo, hi]| (lo, hi)),
        })
        .collect();
    let branches = raw
        .branches
        .into_iter()
        .map(|b| {
            let context = || format!("branch {questionnaire_id}.{} priority {}", b.from, b.priority);
            let target = match (b.goto, b.terminal) {
                (Some(goto), None | Some(false)) => {
                    let key = if goto.contains('.') {
                        QuestionKey::parse(&goto).ok_or_else(|| {
                            PackError::Invalid(format!("{}: malformed target {goto:?}", context()))
                        })?
                    } else {
                        QuestionKey::new(&questionnaire_id, goto)
                    };
                    BranchTarget::Question(key)
                }
                (None, Some(true)) => BranchTarget::Terminal,
                _ => {
                    return Err(PackError::Invalid(format!(
                        "{}: exactly one of `goto` or `terminal = true` is required",
                        context()
                    )))
                }
            };
            Ok(BranchRule {
                condition: parse_when(b.when.as_deref(), context)?,
                from: b.from,
                priority: b.priority,
                target,
            })
        })
        .collect::<Result<Vec<_>, PackError>>()?;
    let outcomes = raw
        .outcomes
        .into_iter()
        .map(|o| {
            Ok(OutcomeRule {
                condition: parse_when(o.when.as_deref(), || {
                    format!("outcome rule priority {} in {questionnaire_id}", o.priority)
                })?,
                priority: o.priority,
                level: o.level,
            })
        })
        .collect::<Result<Vec<_>, PackError>>()?;
    Ok(QuestionnaireDef {
        id: questionnaire_id,
        entry: raw.entry,
        questions,
        branches,
        outcomes,
    })
}
