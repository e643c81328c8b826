use super::{Head, PlanDag, PlanSequence, Producer, Token, TplError};
use crate::universe::ToolUniverse;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Tool,
    SoD,
    Dep,
    Done,
}

/// A plan prefix under construction, starting after `[SoP]`.
///
/// Tracks instance bindings so dependency tokens can be resolved as they
/// arrive.
#[derive(Clone, Debug)]
pub struct PlanBuilder {
    tokens: Vec<Token>,
    nodes: Vec<usize>,
    deps: Vec<Vec<Producer>>,
    n_consumers: Vec<usize>,
    latest: Vec<Option<usize>>,
    phase: Phase,
}

impl PlanBuilder {
    pub fn new(n_tools: usize) -> Self {
        Self {
            tokens: vec![Token::SoP],
            nodes: Vec::new(),
            deps: Vec::new(),
            n_consumers: Vec::new(),
            latest: vec![None; n_tools],
            phase: Phase::Tool,
        }
    }

    /// Replays a prefix that starts with `[SoP]`.
    pub fn from_prefix(seq: &PlanSequence, universe: &ToolUniverse) -> Result<Self, TplError> {
        let mut b = Self::new(universe.n_tools());
        match seq.tokens.first() {
            Some(Token::SoP) => {}
            Some(t) => return Err(TplError::Unexpected { pos: 0, expected: "[SoP]", found: t.render(universe) }),
            None => return Err(TplError::Unexpected { pos: 0, expected: "[SoP]", found: String::new() }),
        }
        for &tok in &seq.tokens[1..] {
            b.push_token(tok, universe)?;
        }
        Ok(b)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn sequence(&self) -> PlanSequence {
        PlanSequence::new(self.tokens.clone())
    }

    /// Tool index of every instance so far, including the one being wired.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn deps(&self, v: usize) -> &[Producer] {
        &self.deps[v]
    }

    pub fn n_consumers(&self, v: usize) -> usize {
        self.n_consumers[v]
    }

    /// The instance a `<tool>` token would currently resolve to.
    pub fn latest(&self, tool: usize) -> Option<usize> {
        self.latest[tool]
    }

    /// The instance whose dependency list is open, if any.
    pub fn open_node(&self) -> Option<usize> {
        match self.phase {
            Phase::SoD | Phase::Dep => Some(self.nodes.len() - 1),
            _ => None,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Done
    }

    /// The head that predicts the next token, or `None` when the next token
    /// is inserted automatically or the plan is complete.
    pub fn head(&self) -> Option<Head> {
        match self.phase {
            Phase::Tool => Some(Head::Tool),
            Phase::Dep => Some(Head::Dep),
            Phase::SoD | Phase::Done => None,
        }
    }

    pub fn resolve(&self, tok: Token) -> Option<Producer> {
        match tok {
            Token::TaskDep => Some(Producer::Task),
            Token::Dep(t) => self.latest.get(t).copied().flatten().map(Producer::Node),
            _ => None,
        }
    }

    /// Appends a predicted token; a tool token is followed by `<SoD>`.
    pub fn apply_action(&mut self, tok: Token, universe: &ToolUniverse) -> Result<(), TplError> {
        self.push_token(tok, universe)?;
        if matches!(tok, Token::Tool(_)) {
            self.push_token(Token::SoD, universe)?;
        }
        Ok(())
    }

    /// Appends one raw token, checking grammar, binding and port kinds.
    pub fn push_token(&mut self, tok: Token, universe: &ToolUniverse) -> Result<(), TplError> {
        let pos = self.tokens.len();
        let unexpected = |expected: &'static str| TplError::Unexpected { pos, expected, found: tok.render(universe) };
        if let Token::Tool(t) | Token::Dep(t) = tok {
            if t >= universe.n_tools() {
                return Err(TplError::UnknownToken(format!("{tok:?}")));
            }
        }
        match self.phase {
            Phase::Done => return Err(TplError::TrailingTokens { pos }),
            Phase::Tool => match tok {
                Token::Tool(t) => {
                    self.nodes.push(t);
                    self.deps.push(Vec::new());
                    self.n_consumers.push(0);
                    self.phase = Phase::SoD;
                }
                Token::EoP if self.nodes.is_empty() => return Err(TplError::EmptyPlan),
                Token::EoP => self.phase = Phase::Done,
                _ => return Err(unexpected("a tool or [EoP]")),
            },
            Phase::SoD => match tok {
                Token::SoD => self.phase = Phase::Dep,
                _ => return Err(unexpected("<SoD>")),
            },
            Phase::Dep => {
                let v = self.nodes.len() - 1;
                let tool = universe.tool(self.nodes[v]);
                match tok {
                    Token::EoD if self.deps[v].is_empty() => return Err(unexpected("a dependency")),
                    Token::EoD => {
                        self.latest[self.nodes[v]] = Some(v);
                        self.phase = Phase::Tool;
                    }
                    Token::TaskDep | Token::Dep(_) => {
                        let producer = self.resolve(tok).ok_or_else(|| TplError::UnresolvedDependency {
                            pos,
                            tool: match tok {
                                Token::Dep(t) => universe.tool(t).id.clone(),
                                _ => String::new(),
                            },
                        })?;
                        if self.deps[v].contains(&producer) {
                            return Err(TplError::DuplicateDependency { pos });
                        }
                        let port = self.deps[v].len();
                        if port >= tool.inputs.len() {
                            return Err(TplError::TooManyDependencies {
                                pos,
                                tool: tool.id.clone(),
                                arity: tool.inputs.len(),
                            });
                        }
                        if let Producer::Node(u) = producer {
                            let kind = &tool.inputs[port];
                            if !universe.tool(self.nodes[u]).outputs.contains(kind) {
                                return Err(TplError::KindMismatch {
                                    pos,
                                    tool: tool.id.clone(),
                                    port,
                                    kind: kind.0.clone(),
                                });
                            }
                            self.n_consumers[u] += 1;
                        }
                        self.deps[v].push(producer);
                    }
                    _ => return Err(unexpected("a dependency or <EoD>")),
                }
            }
        }
        self.tokens.push(tok);
        Ok(())
    }

    /// The plan graph so far. An open instance appears with the
    /// dependencies received so far.
    pub fn dag(&self) -> PlanDag {
        PlanDag::from_deps(self.nodes.clone(), &self.deps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpl::testutil::small_universe;

    #[test]
    fn apply_action_inserts_sod_and_switches_heads() {
        let u = small_universe();
        let deblur = u.tool_index("deblur").unwrap();
        let mut b = PlanBuilder::new(u.n_tools());
        assert_eq!(b.head(), Some(Head::Tool));
        b.apply_action(Token::Tool(deblur), &u).unwrap();
        assert_eq!(b.tokens(), &[Token::SoP, Token::Tool(deblur), Token::SoD]);
        assert_eq!(b.head(), Some(Head::Dep));
        assert_eq!(b.latest(deblur), None);
        b.apply_action(Token::TaskDep, &u).unwrap();
        b.apply_action(Token::EoD, &u).unwrap();
        assert_eq!(b.latest(deblur), Some(0));
        b.apply_action(Token::EoP, &u).unwrap();
        assert!(b.is_finished());
        assert_eq!(b.head(), None);
        assert!(matches!(b.apply_action(Token::EoP, &u), Err(TplError::TrailingTokens { .. })));
    }

    #[test]
    fn repeated_producer_is_rejected() {
        let u = small_universe();
        let mut b = PlanBuilder::new(u.n_tools());
        b.apply_action(Token::Tool(u.tool_index("deblur").unwrap()), &u).unwrap();
        b.apply_action(Token::TaskDep, &u).unwrap();
        assert!(matches!(b.apply_action(Token::TaskDep, &u), Err(TplError::DuplicateDependency { .. })));
    }
}
