//! Tool Planning Language.
//!
//! A plan is a sequence of tool tokens, each followed by the dependency
//! tokens naming where its inputs come from:
//!
//! ```text
//! [SoP] [deblur] <SoD> <task> <EoD> [caption] <SoD> <deblur> <EoD> [EoP]
//! ```
//!
//! A dependency token `<t>` binds to the most recent earlier instance of tool
//! `t`; `<task>` binds to the task's input data.

mod builder;
mod dag;
mod mask;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::universe::ToolUniverse;

pub use builder::PlanBuilder;
pub use dag::{decode_sequence, encode_plan, Edge, PlanDag, Producer};
pub use mask::{legal_next_tokens, random_valid_plan, Masker};
pub use validate::{covered_outputs, match_required_outputs, validate_dag, validate_sequence, Diagnostic, ValidationResult};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TplError {
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("token {pos}: expected {expected}, found `{found}`")]
    Unexpected { pos: usize, expected: &'static str, found: String },
    #[error("token {pos}: tokens after [EoP]")]
    TrailingTokens { pos: usize },
    #[error("sequence ends before [EoP]")]
    Incomplete,
    #[error("plan contains no tools")]
    EmptyPlan,
    #[error("token {pos}: dependency on `{tool}` which has no earlier instance")]
    UnresolvedDependency { pos: usize, tool: String },
    #[error("token {pos}: producer listed twice for one tool")]
    DuplicateDependency { pos: usize },
    #[error("token {pos}: `{tool}` takes only {arity} inputs")]
    TooManyDependencies { pos: usize, tool: String, arity: usize },
    #[error("token {pos}: input {port} of `{tool}` needs `{kind}`, producer does not supply it")]
    KindMismatch { pos: usize, tool: String, port: usize, kind: String },
    #[error("plan instance {0} has no dependencies")]
    NoDependencies(usize),
    #[error("plan graph contains a cycle")]
    Cyclic,
    #[error("edge references instance {0} which does not exist")]
    DanglingEdge(usize),
    #[error("instance {consumer} has two producers on input {port}")]
    PortConflict { consumer: usize, port: usize },
    #[error("instance {consumer} has no producer on input {port}")]
    PortGap { consumer: usize, port: usize },
    #[error("instance {consumer} lists the same producer twice")]
    RepeatedProducer { consumer: usize },
    #[error("plan cannot be written so that every dependency binds to the right instance")]
    Unrepresentable,
    #[error("requested {requested:?} head but the plan state expects {expected:?}")]
    HeadMismatch { requested: Head, expected: Option<Head> },
    #[error("no valid plan exists within {0} tools")]
    NoValidPlan(usize),
    #[error("no legal continuation from the current state")]
    DeadEnd,
}

/// A plan-language token. Tool and dependency tokens carry the tool's index
/// in the universe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Token {
    SoP,
    EoP,
    SoD,
    EoD,
    TaskDep,
    Tool(usize),
    Dep(usize),
}

impl Token {
    pub fn render(&self, u: &ToolUniverse) -> String {
        match *self {
            Token::SoP => "[SoP]".into(),
            Token::EoP => "[EoP]".into(),
            Token::SoD => "<SoD>".into(),
            Token::EoD => "<EoD>".into(),
            Token::TaskDep => "<task>".into(),
            Token::Tool(t) => format!("[{}]", u.tool(t).id),
            Token::Dep(t) => format!("<{}>", u.tool(t).id),
        }
    }

    pub fn parse(s: &str, u: &ToolUniverse) -> Result<Token, TplError> {
        let unknown = || TplError::UnknownToken(s.to_owned());
        if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            return match inner {
                "SoP" => Ok(Token::SoP),
                "EoP" => Ok(Token::EoP),
                id => u.tool_index(id).map(Token::Tool).ok_or_else(unknown),
            };
        }
        if let Some(inner) = s.strip_prefix('<').and_then(|r| r.strip_suffix('>')) {
            return match inner {
                "SoD" => Ok(Token::SoD),
                "EoD" => Ok(Token::EoD),
                "task" => Ok(Token::TaskDep),
                id => u.tool_index(id).map(Token::Dep).ok_or_else(unknown),
            };
        }
        Err(unknown())
    }

    pub fn is_structure(&self) -> bool {
        matches!(self, Token::SoP | Token::EoP | Token::SoD | Token::EoD)
    }
}

/// Which output head predicts the next token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Head {
    /// Tool tokens and `[EoP]`.
    Tool,
    /// Dependency tokens, `<task>` and `<EoD>`.
    Dep,
}

impl Head {
    /// Output width of the head for a universe of `n_tools` tools.
    pub fn width(self, n_tools: usize) -> usize {
        match self {
            Head::Tool => n_tools + 1,
            Head::Dep => n_tools + 2,
        }
    }

    /// Position of `tok` in this head's output space.
    pub fn index_of(self, tok: Token, n_tools: usize) -> Option<usize> {
        match (self, tok) {
            (Head::Tool, Token::Tool(t)) => Some(t),
            (Head::Tool, Token::EoP) => Some(n_tools),
            (Head::Dep, Token::Dep(t)) => Some(t),
            (Head::Dep, Token::TaskDep) => Some(n_tools),
            (Head::Dep, Token::EoD) => Some(n_tools + 1),
            _ => None,
        }
    }

    pub fn token_at(self, idx: usize, n_tools: usize) -> Token {
        match self {
            Head::Tool if idx < n_tools => Token::Tool(idx),
            Head::Tool => Token::EoP,
            Head::Dep if idx < n_tools => Token::Dep(idx),
            Head::Dep if idx == n_tools => Token::TaskDep,
            Head::Dep => Token::EoD,
        }
    }

    /// The head that predicts `tok`, if any head does.
    pub fn of(tok: Token) -> Option<Head> {
        match tok {
            Token::Tool(_) | Token::EoP => Some(Head::Tool),
            Token::Dep(_) | Token::TaskDep | Token::EoD => Some(Head::Dep),
            Token::SoP | Token::SoD => None,
        }
    }
}

/// Tokens a head may emit next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenMask {
    pub head: Head,
    /// Sorted, deduplicated.
    pub allowed: Vec<Token>,
}

impl TokenMask {
    pub fn contains(&self, tok: Token) -> bool {
        self.allowed.binary_search(&tok).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    /// Boolean mask over the head's output space.
    pub fn as_flags(&self, n_tools: usize) -> Vec<bool> {
        let mut flags = vec![false; self.head.width(n_tools)];
        for &tok in &self.allowed {
            if let Some(i) = self.head.index_of(tok, n_tools) {
                flags[i] = true;
            }
        }
        flags
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PlanSequence {
    pub tokens: Vec<Token>,
}

impl PlanSequence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Self { tokens }
    }

    /// Space-separated text form.
    pub fn render(&self, u: &ToolUniverse) -> String {
        self.tokens.iter().map(|t| t.render(u)).collect::<Vec<_>>().join(" ")
    }

    pub fn parse(text: &str, u: &ToolUniverse) -> Result<Self, TplError> {
        text.split_whitespace()
            .map(|s| Token::parse(s, u))
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }

    pub fn is_complete(&self) -> bool {
        self.tokens.first() == Some(&Token::SoP) && self.tokens.last() == Some(&Token::EoP)
    }

    pub fn n_tools(&self) -> usize {
        self.tokens.iter().filter(|t| matches!(t, Token::Tool(_))).count()
    }

    /// Tokens predicted by a head, i.e. everything except `[SoP]` and `<SoD>`.
    pub fn actions(&self) -> impl Iterator<Item = Token> + '_ {
        self.tokens.iter().copied().filter(|t| Head::of(*t).is_some())
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Head::Tool => f.write_str("tool"),
            Head::Dep => f.write_str("dependency"),
        }
    }
}
