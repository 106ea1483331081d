use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{Pack, QuestionKey};
use crate::UrgencyLevel;

/// Structural findings about a pack. Findings never make a pack unusable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    /// Questions not reachable from any questionnaire entry.
    pub unreachable: Vec<QuestionKey>,
    /// Questions from which no route reaches a terminal.
    pub no_terminal_path: Vec<QuestionKey>,
    /// Number of outcome rules per level (informational).
    pub outcome_coverage: BTreeMap<UrgencyLevel, usize>,
    /// Longest route, counted in questions, over all entries.
    pub max_path_length: usize,
    pub max_path_by_entry: BTreeMap<String, usize>,
}

impl ValidationReport {
    pub fn findings(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .unreachable
            .iter()
            .map(|k| format!("unreachable: {k}"))
            .collect();
        out.extend(self.no_terminal_path.iter().map(|k| format!("no terminal path: {k}")));
        out
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let findings = self.findings();
        if findings.is_empty() {
            writeln!(f, "findings: none")?;
        } else {
            writeln!(f, "findings:")?;
            for finding in findings {
                writeln!(f, "  {finding}")?;
            }
        }
        writeln!(f, "max path length: {}", self.max_path_length)?;
        for (entry, len) in &self.max_path_by_entry {
            writeln!(f, "  {entry}: {len}")?;
        }
        writeln!(f, "outcome rules per level:")?;
        for level in UrgencyLevel::ALL {
            writeln!(
                f,
                "  {level}: {}",
                self.outcome_coverage.get(&level).copied().unwrap_or(0)
            )?;
        }
        Ok(())
    }
}

impl Pack {
    pub fn validate(&self) -> ValidationReport {
        let entries: Vec<QuestionKey> = self
            .questionnaires()
            .iter()
            .map(|d| d.entry_key())
            .collect();

        let mut reachable: HashSet<QuestionKey> = HashSet::new();
        let mut stack = entries.clone();
        while let Some(key) = stack.pop() {
            if reachable.insert(key.clone()) {
                stack.extend(self.successors(&key).into_iter().cloned());
            }
        }

        let mut longest: HashMap<QuestionKey, usize> = HashMap::new();
        let mut terminates: HashMap<QuestionKey, bool> = HashMap::new();
        for (key, _) in self.questions() {
            self.longest_from(&key, &mut longest);
            self.reaches_terminal(&key, &mut terminates);
        }

        let mut unreachable = Vec::new();
        let mut no_terminal_path = Vec::new();
        for (key, _) in self.questions() {
            if !reachable.contains(&key) {
                unreachable.push(key.clone());
            }
            if !terminates[&key] {
                no_terminal_path.push(key);
            }
        }

        let mut outcome_coverage: BTreeMap<UrgencyLevel, usize> =
            UrgencyLevel::ALL.into_iter().map(|l| (l, 0)).collect();
        for rule in self.outcome_rules() {
            *outcome_coverage.entry(rule.level).or_default() += 1;
        }

        let max_path_by_entry: BTreeMap<String, usize> = self
            .questionnaires()
            .iter()
            .map(|d| (d.id.clone(), longest[&d.entry_key()]))
            .collect();
        ValidationReport {
            unreachable,
            no_terminal_path,
            outcome_coverage,
            max_path_length: max_path_by_entry.values().copied().max().unwrap_or(0),
            max_path_by_entry,
        }
    }

    /// Number of questions on the longest route starting at `key`. The
    /// routing graph is acyclic, so the recursion terminates.
    fn longest_from(&self, key: &QuestionKey, memo: &mut HashMap<QuestionKey, usize>) -> usize {
        if let Some(&n) = memo.get(key) {
            return n;
        }
        let tail = self
            .successors(key)
            .into_iter()
            .map(|succ| self.longest_from(succ, memo))
            .max()
            .unwrap_or(0);
        memo.insert(key.clone(), tail + 1);
        tail + 1
    }

    fn reaches_terminal(&self, key: &QuestionKey, memo: &mut HashMap<QuestionKey, bool>) -> bool {
        if let Some(&b) = memo.get(key) {
            return b;
        }
        let result = self.has_terminal_branch(key)
            || self
                .successors(key)
                .into_iter()
                .any(|succ| self.reaches_terminal(succ, memo));
        memo.insert(key.clone(), result);
        result
    }
}
