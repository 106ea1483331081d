//! The `when` mini-language used by branch and outcome rules.

use std::fmt;

use super::{AnswerValue, QuestionKey};

/// Grammar of the condition language, mirrored in `docs/condition-grammar.ebnf`.
pub const CONDITION_GRAMMAR: &str = r#"expr     := or
or       := and ('or' and)*
and      := not ('and' not)*
not      := 'not' not | atom
atom     := '(' expr ')' | ref op literal | 'answered(' ref ')'
ref      := qid '.' questionid
op       := '=' | '!=' | '<' | '<=' | '>' | '>=' | 'has'
literal  := 'true' | 'false' | number | identifier | string
number   := '-'? digit+ ('.' digit+)?
string   := '"' (char | '\"' | '\\')* '"'
qid, questionid, identifier := letter (letter | digit | '_' | '-')*
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Has,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Has => "has",
        }
    }

    fn is_ordering(self) -> bool {
        matches!(self, CompareOp::Lt | CompareOp::Le | CompareOp::Gt | CompareOp::Ge)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Bool(bool),
    Number(f64),
    /// Bare identifier, used for option ids.
    Ident(String),
    /// Quoted string, used for free-text answers.
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Number(x) => write!(f, "{x}"),
            Literal::Ident(s) => f.write_str(s),
            Literal::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    /// An omitted `when`.
    Always,
    Compare {
        key: QuestionKey,
        op: CompareOp,
        literal: Literal,
    },
    Answered(QuestionKey),
    Not(Box<Condition>),
    And(Vec<Condition>),
    Or(Vec<Condition>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("offset {offset}: {message}")]
pub struct ConditionError {
    pub offset: usize,
    pub message: String,
}

impl Condition {
    pub fn parse(source: &str) -> Result<Condition, ConditionError> {
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            end: source.len(),
        };
        let expr = parser.parse_or()?;
        if let Some(tok) = parser.peek() {
            return Err(ConditionError {
                offset: tok.offset,
                message: format!("unexpected {}", tok.kind.describe()),
            });
        }
        Ok(expr)
    }

    pub fn is_always(&self) -> bool {
        matches!(self, Condition::Always)
    }

    /// Evaluates over a partial answer map. Comparisons against an unanswered
    /// question are false; `answered(..)` tests presence explicitly.
    pub fn evaluate<'a, F>(&self, lookup: &F) -> bool
    where
        F: Fn(&QuestionKey) -> Option<&'a AnswerValue>,
    {
        match self {
            Condition::Always => true,
            Condition::Answered(key) => lookup(key).is_some(),
            Condition::Not(inner) => !inner.evaluate(lookup),
            Condition::And(parts) => parts.iter().all(|c| c.evaluate(lookup)),
            Condition::Or(parts) => parts.iter().any(|c| c.evaluate(lookup)),
            Condition::Compare { key, op, literal } => match lookup(key) {
                Some(answer) => compare(answer, *op, literal),
                None => false,
            },
        }
    }

    /// Every question referenced, in source order.
    pub fn references(&self) -> Vec<&QuestionKey> {
        let mut out = Vec::new();
        self.collect_references(&mut out);
        out
    }

    fn collect_references<'a>(&'a self, out: &mut Vec<&'a QuestionKey>) {
        match self {
            Condition::Always => {}
            Condition::Answered(key) | Condition::Compare { key, .. } => out.push(key),
            Condition::Not(inner) => inner.collect_references(out),
            Condition::And(parts) | Condition::Or(parts) => {
                parts.iter().for_each(|c| c.collect_references(out))
            }
        }
    }

    /// Visits every comparison atom.
    pub(crate) fn for_each_comparison<'a>(
        &'a self,
        f: &mut impl FnMut(&'a QuestionKey, CompareOp, &'a Literal),
    ) {
        match self {
            Condition::Always | Condition::Answered(_) => {}
            Condition::Compare { key, op, literal } => f(key, *op, literal),
            Condition::Not(inner) => inner.for_each_comparison(f),
            Condition::And(parts) | Condition::Or(parts) => {
                parts.iter().for_each(|c| c.for_each_comparison(f))
            }
        }
    }
}

fn compare(answer: &AnswerValue, op: CompareOp, literal: &Literal) -> bool {
    match (answer, literal) {
        (AnswerValue::Boolean(a), Literal::Bool(b)) => match op {
            CompareOp::Eq => a == b,
            CompareOp::Ne => a != b,
            _ => false,
        },
        (AnswerValue::Number(a), Literal::Number(b)) => match op {
            CompareOp::Eq => a == b,
            CompareOp::Ne => a != b,
            CompareOp::Lt => a < b,
            CompareOp::Le => a <= b,
            CompareOp::Gt => a > b,
            CompareOp::Ge => a >= b,
            CompareOp::Has => false,
        },
        (AnswerValue::Single(a), Literal::Ident(b) | Literal::Str(b))
        | (AnswerValue::Text(a), Literal::Ident(b) | Literal::Str(b)) => match op {
            CompareOp::Eq => a == b,
            CompareOp::Ne => a != b,
            _ => false,
        },
        (AnswerValue::Multi(set), Literal::Ident(b) | Literal::Str(b)) => {
            op == CompareOp::Has && set.contains(b)
        }
        _ => false,
    }
}

impl CompareOp {
    /// Whether the operator applies to a question of the given kind.
    pub fn accepts(self, kind: super::QuestionKind) -> bool {
        use super::QuestionKind::*;
        match kind {
            Boolean | Single | Text => matches!(self, CompareOp::Eq | CompareOp::Ne),
            Number => self != CompareOp::Has,
            Multi => self == CompareOp::Has,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, parts: &[Condition], sep: &str) -> fmt::Result {
            for (i, part) in parts.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "({part})")?;
            }
            Ok(())
        }
        match self {
            // Not part of the grammar; only ever displayed, never parsed.
            Condition::Always => f.write_str("<always>"),
            Condition::Compare { key, op, literal } => {
                write!(f, "{key} {} {literal}", op.symbol())
            }
            Condition::Answered(key) => write!(f, "answered({key})"),
            Condition::Not(inner) => write!(f, "not ({inner})"),
            Condition::And(parts) => join(f, parts, "and"),
            Condition::Or(parts) => join(f, parts, "or"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    LParen,
    RParen,
    And,
    Or,
    Not,
    Answered,
    Op(CompareOp),
    Ref(QuestionKey),
    Literal(Literal),
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::LParen => "'('".into(),
            TokenKind::RParen => "')'".into(),
            TokenKind::And => "'and'".into(),
            TokenKind::Or => "'or'".into(),
            TokenKind::Not => "'not'".into(),
            TokenKind::Answered => "'answered'".into(),
            TokenKind::Op(op) => format!("operator '{}'", op.symbol()),
            TokenKind::Ref(key) => format!("reference '{key}'"),
            TokenKind::Literal(lit) => format!("literal '{lit}'"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

/// Words with a meaning of their own; they cannot serve as option ids.
pub(crate) fn is_reserved(word: &str) -> bool {
    matches!(word, "and" | "or" | "not" | "has" | "answered" | "true" | "false")
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

pub(crate) fn valid_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic()) && chars.all(is_word_char)
}

fn lex(source: &str) -> Result<Vec<Token>, ConditionError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let err = |offset: usize, message: String| ConditionError { offset, message };

    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '(' => {
                tokens.push(Token { kind: TokenKind::LParen, offset: start });
                i += 1;
            }
            ')' => {
                tokens.push(Token { kind: TokenKind::RParen, offset: start });
                i += 1;
            }
            '=' => {
                tokens.push(Token { kind: TokenKind::Op(CompareOp::Eq), offset: start });
                i += 1;
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Token { kind: TokenKind::Op(CompareOp::Ne), offset: start });
                    i += 2;
                } else {
                    return Err(err(start, "expected '!='".into()));
                }
            }
            '<' | '>' => {
                let with_eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, with_eq) {
                    ('<', false) => CompareOp::Lt,
                    ('<', true) => CompareOp::Le,
                    ('>', false) => CompareOp::Gt,
                    _ => CompareOp::Ge,
                };
                tokens.push(Token { kind: TokenKind::Op(op), offset: start });
                i += if with_eq { 2 } else { 1 };
            }
            '"' => {
                i += 1;
                let mut text = String::new();
                loop {
                    let Some(ch) = source[i..].chars().next() else {
                        return Err(err(start, "unterminated string".into()));
                    };
                    i += ch.len_utf8();
                    match ch {
                        '"' => break,
                        '\\' => {
                            let Some(escaped) = source[i..].chars().next() else {
                                return Err(err(start, "unterminated string".into()));
                            };
                            if escaped != '"' && escaped != '\\' {
                                return Err(err(i - 1, format!("invalid escape '\\{escaped}'")));
                            }
                            text.push(escaped);
                            i += escaped.len_utf8();
                        }
                        other => text.push(other),
                    }
                }
                tokens.push(Token {
                    kind: TokenKind::Literal(Literal::Str(text)),
                    offset: start,
                });
            }
            c if c.is_ascii_digit()
                || (c == '-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) =>
            {
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                let text = &source[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| err(start, format!("invalid number '{text}'")))?;
                tokens.push(Token {
                    kind: TokenKind::Literal(Literal::Number(value)),
                    offset: start,
                });
            }
            c if c.is_ascii_alphabetic() => {
                while i < bytes.len() && (is_word_char(bytes[i] as char) || bytes[i] == b'.') {
                    i += 1;
                }
                let word = &source[start..i];
                let kind = if word.contains('.') {
                    match QuestionKey::parse(word) {
                        Some(key)
                            if valid_identifier(&key.questionnaire)
                                && valid_identifier(&key.question) =>
                        {
                            TokenKind::Ref(key)
                        }
                        _ => return Err(err(start, format!("malformed reference '{word}'"))),
                    }
                } else {
                    match word {
                        "and" => TokenKind::And,
                        "or" => TokenKind::Or,
                        "not" => TokenKind::Not,
                        "has" => TokenKind::Op(CompareOp::Has),
                        "answered" => TokenKind::Answered,
                        "true" => TokenKind::Literal(Literal::Bool(true)),
                        "false" => TokenKind::Literal(Literal::Bool(false)),
                        _ => TokenKind::Literal(Literal::Ident(word.to_string())),
                    }
                };
                tokens.push(Token { kind, offset: start });
            }
            other => return Err(err(start, format!("unexpected character '{other}'"))),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self, expected: &str) -> Result<Token, ConditionError> {
        match self.tokens.get(self.pos) {
            Some(tok) => {
                self.pos += 1;
                Ok(tok.clone())
            }
            None => Err(ConditionError {
                offset: self.end,
                message: format!("unexpected end of condition, expected {expected}"),
            }),
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek().map(|t| &t.kind) == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_or(&mut self) -> Result<Condition, ConditionError> {
        let mut parts = vec![self.parse_and()?];
        while self.eat(&TokenKind::Or) {
            parts.push(self.parse_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Condition::Or(parts) })
    }

    fn parse_and(&mut self) -> Result<Condition, ConditionError> {
        let mut parts = vec![self.parse_not()?];
        while self.eat(&TokenKind::And) {
            parts.push(self.parse_not()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Condition::And(parts) })
    }

    fn parse_not(&mut self) -> Result<Condition, ConditionError> {
        if self.eat(&TokenKind::Not) {
            Ok(Condition::Not(Box::new(self.parse_not()?)))
        } else {
            self.parse_atom()
        }
    }

    fn parse_atom(&mut self) -> Result<Condition, ConditionError> {
        let tok = self.next("a condition")?;
        match tok.kind {
            TokenKind::LParen => {
                let inner = self.parse_or()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Answered => {
                let open = self.next("'('")?;
                if open.kind != TokenKind::LParen {
                    return Err(unexpected(&open, "'(' after 'answered'"));
                }
                let key = self.expect_ref()?;
                self.expect_rparen()?;
                Ok(Condition::Answered(key))
            }
            TokenKind::Ref(key) => {
                let op_tok = self.next("an operator")?;
                let TokenKind::Op(op) = op_tok.kind else {
                    return Err(unexpected(&op_tok, "an operator"));
                };
                let lit_tok = self.next("a literal")?;
                let TokenKind::Literal(literal) = lit_tok.kind else {
                    return Err(unexpected(&lit_tok, "a literal"));
                };
                if op.is_ordering() && !matches!(literal, Literal::Number(_)) {
                    return Err(ConditionError {
                        offset: lit_tok.offset,
                        message: format!("operator '{}' needs a number", op.symbol()),
                    });
                }
                Ok(Condition::Compare { key, op, literal })
            }
            _ => Err(unexpected(&tok, "a condition")),
        }
    }

    fn expect_ref(&mut self) -> Result<QuestionKey, ConditionError> {
        let tok = self.next("a question reference")?;
        match tok.kind {
            TokenKind::Ref(key) => Ok(key),
            _ => Err(unexpected(&tok, "a question reference")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ConditionError> {
        let tok = self.next("')'")?;
        if tok.kind == TokenKind::RParen {
            Ok(())
        } else {
            Err(unexpected(&tok, "')'"))
        }
    }
}

fn unexpected(tok: &Token, expected: &str) -> ConditionError {
    ConditionError {
        offset: tok.offset,
        message: format!("unexpected {}, expected {expected}", tok.kind.describe()),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;

    use super::*;

    fn key(s: &str) -> QuestionKey {
        QuestionKey::parse(s).unwrap()
    }

    #[test]
    fn precedence_binds_and_tighter_than_or() {
        let c = Condition::parse("a.x = true or a.y = true and not a.z = true").unwrap();
        let Condition::Or(parts) = &c else { panic!("{c:?}") };
        assert_eq!(parts.len(), 2);
        assert!(matches!(&parts[1], Condition::And(inner) if inner.len() == 2));
    }

    #[test]
    fn parses_every_operator_and_literal() {
        for src in [
            "pain.level >= 7",
            "pain.level < -2.5",
            "head.cause = head-trauma",
            "head.cause != none",
            "head.kind has hit-against",
            "notes.free = \"a \\\"quoted\\\" note\"",
            "answered(head.cause)",
            "not (head.now = false)",
        ] {
            Condition::parse(src).unwrap_or_else(|e| panic!("{src}: {e}"));
        }
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let e = Condition::parse("a.x = true and").unwrap_err();
        assert_eq!(e.offset, 14);
        let e = Condition::parse("a.x ?? 1").unwrap_err();
        assert_eq!(e.offset, 4);
        let e = Condition::parse("a.x < yes").unwrap_err();
        assert!(e.message.contains("number"), "{e}");
        assert!(Condition::parse("(a.x = true").is_err());
        assert!(Condition::parse("a.b.c = true").is_err());
        assert!(Condition::parse("answered a.x").is_err());
        assert!(Condition::parse("\"open").is_err());
    }

    #[test]
    fn unanswered_references_are_false() {
        let answers: HashMap<QuestionKey, AnswerValue> = HashMap::new();
        let lookup = |k: &QuestionKey| answers.get(k);
        for src in ["a.x = true", "a.x != true", "a.n < 3", "a.m has o", "answered(a.x)"] {
            assert!(!Condition::parse(src).unwrap().evaluate(&lookup), "{src}");
        }
        assert!(Condition::parse("not answered(a.x)").unwrap().evaluate(&lookup));
    }

    #[test]
    fn evaluates_against_answers() {
        let mut answers = HashMap::new();
        answers.insert(key("a.n"), AnswerValue::Number(7.0));
        answers.insert(key("a.m"), AnswerValue::multi(["o1", "o2"]));
        answers.insert(key("a.s"), AnswerValue::Single("left".into()));
        let lookup = |k: &QuestionKey| answers.get(k);
        let t = |src: &str| Condition::parse(src).unwrap().evaluate(&lookup);
        assert!(t("a.n >= 7 and a.n < 8"));
        assert!(!t("a.n > 7"));
        assert!(t("a.m has o2"));
        assert!(!t("a.m has o3"));
        assert!(t("a.s = left or a.n = 0"));
        assert!(t("a.s != right"));
        // Kind mismatches are rejected at load time; at runtime they are false.
        assert!(!t("a.n = left"));
    }

    fn arb_condition() -> impl Strategy<Value = Condition> {
        let refs = prop::sample::select(vec!["q.a", "q.b", "other.c"]);
        let leaf = prop_oneof![
            (refs.clone(), any::<bool>()).prop_map(|(r, b)| Condition::Compare {
                key: key(r),
                op: CompareOp::Eq,
                literal: Literal::Bool(b),
            }),
            (refs.clone(), -50i32..50, 0usize..6).prop_map(|(r, n, op)| Condition::Compare {
                key: key(r),
                op: [CompareOp::Eq, CompareOp::Ne, CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge][op],
                literal: Literal::Number(n as f64 / 2.0),
            }),
            (refs.clone(), "[a-z][a-z0-9-]{0,6}".prop_filter("keyword", |o| !is_reserved(o))).prop_map(|(r, o)| Condition::Compare {
                key: key(r),
                op: CompareOp::Has,
                literal: Literal::Ident(o),
            }),
            (refs.clone(), "[ -~]{0,8}").prop_map(|(r, s)| Condition::Compare {
                key: key(r),
                op: CompareOp::Eq,
                literal: Literal::Str(s),
            }),
            refs.prop_map(|r| Condition::Answered(key(r))),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|c| Condition::Not(Box::new(c))),
                prop::collection::vec(inner.clone(), 2..4).prop_map(Condition::And),
                prop::collection::vec(inner, 2..4).prop_map(Condition::Or),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_parses_back_to_the_same_tree(c in arb_condition()) {
            let text = c.to_string();
            let parsed = Condition::parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
            prop_assert_eq!(parsed, c);
        }
    }
}
