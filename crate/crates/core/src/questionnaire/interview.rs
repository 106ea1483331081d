use std::collections::HashMap;

use super::{Answer, AnswerValue, BranchTarget, Pack, QuestionKey};
use crate::UrgencyLevel;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("unknown questionnaire {0:?}")]
    UnknownQuestionnaire(String),
    #[error("invalid answer: {0}")]
    InvalidAnswer(String),
    #[error("interview is already finished")]
    AlreadyFinished,
    #[error("interview is not finished")]
    NotFinished,
}

/// One interview in progress. A plain value: cloning it forks the interview.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterviewState {
    pub session_id: String,
    pub entry: String,
    /// In the order asked; no question appears twice.
    pub answers: Vec<Answer>,
    /// `None` once finished.
    pub current: Option<QuestionKey>,
    /// Set exactly when the interview is finished.
    pub outcome: Option<UrgencyLevel>,
}

impl InterviewState {
    pub fn is_finished(&self) -> bool {
        self.current.is_none()
    }
}

fn answer_lookup(answers: &[Answer]) -> HashMap<&QuestionKey, &AnswerValue> {
    answers.iter().map(|a| (&a.key, &a.value)).collect()
}

impl Pack {
    pub fn start(
        &self,
        entry_questionnaire: &str,
        session_id: impl Into<String>,
    ) -> Result<InterviewState, EngineError> {
        let def = self
            .questionnaire(entry_questionnaire)
            .ok_or_else(|| EngineError::UnknownQuestionnaire(entry_questionnaire.to_string()))?;
        Ok(InterviewState {
            session_id: session_id.into(),
            entry: def.id.clone(),
            answers: Vec::new(),
            current: Some(def.entry_key()),
            outcome: None,
        })
    }

    /// Returns the state after answering the current question.
    pub fn submit_answer(
        &self,
        state: &InterviewState,
        value: AnswerValue,
    ) -> Result<InterviewState, EngineError> {
        let mut next = state.clone();
        self.submit_answer_in_place(&mut next, value)?;
        Ok(next)
    }

    /// Like [`Pack::submit_answer`] but mutates `state`; on error the state is untouched.
    pub fn submit_answer_in_place(
        &self,
        state: &mut InterviewState,
        value: AnswerValue,
    ) -> Result<(), EngineError> {
        let current = state.current.clone().ok_or(EngineError::AlreadyFinished)?;
        self.check_answer(&current, &value)
            .map_err(EngineError::InvalidAnswer)?;
        state.answers.push(Answer::new(current.clone(), value));

        let target = {
            let lookup_map = answer_lookup(&state.answers);
            let lookup = |k: &QuestionKey| lookup_map.get(k).copied();
            self.branches(&current)
                .iter()
                .find(|rule| rule.condition.evaluate(&lookup))
                .map(|rule| rule.target.clone())
                // Validation guarantees an unconditional default rule.
                .expect("routing is total")
        };
        match target {
            BranchTarget::Question(key) => state.current = Some(key),
            BranchTarget::Terminal => {
                state.current = None;
                state.outcome = Some(self.outcome_for(&state.answers));
            }
        }
        Ok(())
    }

    pub fn evaluate_outcome(&self, state: &InterviewState) -> Result<UrgencyLevel, EngineError> {
        if !state.is_finished() {
            return Err(EngineError::NotFinished);
        }
        Ok(self.outcome_for(&state.answers))
    }

    /// Outcome of the first matching rule over a full answer set.
    pub fn outcome_for(&self, answers: &[Answer]) -> UrgencyLevel {
        let lookup_map = answer_lookup(answers);
        let lookup = |k: &QuestionKey| lookup_map.get(k).copied();
        self.outcome_rules()
            .iter()
            .find(|rule| rule.condition.evaluate(&lookup))
            .map(|rule| rule.level)
            .expect("the fallback outcome rule is unconditional")
    }

    /// Runs a whole interview from scripted answers.
    pub fn replay(
        &self,
        entry_questionnaire: &str,
        answers: impl IntoIterator<Item = AnswerValue>,
    ) -> Result<InterviewState, EngineError> {
        let mut state = self.start(entry_questionnaire, "replay")?;
        for value in answers {
            self.submit_answer_in_place(&mut state, value)?;
        }
        Ok(state)
    }
}
