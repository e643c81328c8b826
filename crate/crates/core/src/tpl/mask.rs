//! Adaptive masking.
//!
//! Whether a prefix can still be completed depends only on an abstract state:
//! for every tool, whether its latest instance is absent, a leaf or already
//! consumed, plus the tools of shadowed instances that stayed leaves. Shadowed
//! instances can no longer be referenced, so a shadowed leaf stays a leaf
//! forever. Feasibility over this state is decided exactly by memoized search.
//!
//! Turning a leaf into a consumed instance never helps: validity only needs
//! enough leaf outputs, and every move open to the consumed state is open to
//! the leaf state too. The search therefore only tries wirings whose set of
//! consumed leaves is minimal.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{validate::validate_dag, Head, PlanBuilder, PlanSequence, Producer, Token, TokenMask, TplError};
use crate::universe::{TaskSpec, ToolUniverse};

const ABSENT: u8 = 0;
const LEAF: u8 = 1;
const USED: u8 = 2;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct AbsState {
    status: Vec<u8>,
    /// Sorted tools of shadowed leaf instances.
    frozen: Vec<usize>,
}

impl AbsState {
    fn consume(&mut self, mask: u64) {
        for (s, st) in self.status.iter_mut().enumerate() {
            if mask & (1 << s) != 0 && *st == LEAF {
                *st = USED;
            }
        }
    }

    fn close(&mut self, tool: usize) {
        if self.status[tool] == LEAF {
            let at = self.frozen.partition_point(|&f| f <= tool);
            self.frozen.insert(at, tool);
        }
        self.status[tool] = LEAF;
    }
}

/// Abstract producer for one port.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Src {
    Task,
    Tool(usize),
}

/// Computes legal next tokens for one task.
///
/// With a tool budget, a token is legal iff some completion using at most
/// `budget` tools in total validates. Without one, the rules are local: tools
/// whose ports can all be fed, producers that exist and fit the next port,
/// `[EoP]` iff the plan already validates.
pub struct Masker<'a> {
    universe: &'a ToolUniverse,
    task: &'a TaskSpec,
    budget: Option<usize>,
    out_kinds: Vec<u64>,
    in_kinds: Vec<Vec<u64>>,
    task_kinds: u64,
    required: Vec<(u64, usize)>,
    memo: HashMap<(AbsState, usize), bool>,
}

impl<'a> Masker<'a> {
    pub fn new(universe: &'a ToolUniverse, task: &'a TaskSpec, budget: Option<usize>) -> Self {
        assert!(universe.n_tools() <= 64 && universe.kinds.len() <= 64, "masker supports at most 64 tools and kinds");
        let out_kinds = universe.tools().iter().map(|t| universe.kind_mask(&t.outputs)).collect();
        let in_kinds = universe
            .tools()
            .iter()
            .map(|t| t.inputs.iter().map(|k| universe.kind_mask([k])).collect())
            .collect();
        let task_kinds = universe.kind_mask(task.inputs.iter().map(|i| &i.kind));
        let mut required: Vec<(u64, usize)> = Vec::new();
        for r in &task.required_outputs {
            let m = universe.kind_mask([&r.kind]);
            match required.iter_mut().find(|(k, _)| *k == m) {
                Some(e) => e.1 += 1,
                None => required.push((m, 1)),
            }
        }
        Self { universe, task, budget, out_kinds, in_kinds, task_kinds, required, memo: HashMap::new() }
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    fn abs_state(&self, b: &PlanBuilder) -> AbsState {
        let n = self.universe.n_tools();
        let mut status = vec![ABSENT; n];
        let mut frozen = Vec::new();
        let open = b.open_node();
        for (v, &t) in b.nodes().iter().enumerate() {
            if Some(v) == open {
                continue;
            }
            let leaf = b.n_consumers(v) == 0;
            if b.latest(t) == Some(v) {
                status[t] = if leaf { LEAF } else { USED };
            } else if leaf {
                frozen.push(t);
            }
        }
        frozen.sort_unstable();
        AbsState { status, frozen }
    }

    fn is_valid(&self, s: &AbsState) -> bool {
        self.required.iter().all(|&(kind, need)| {
            let slots = |t: usize| {
                self.universe.tool(t).outputs.iter().filter(|k| self.universe.kind_mask([*k]) == kind).count()
            };
            let have: usize = (0..s.status.len()).filter(|&t| s.status[t] == LEAF).map(slots).sum::<usize>()
                + s.frozen.iter().map(|&t| slots(t)).sum::<usize>();
            have >= need
        })
    }

    fn supplies(&self, s: &AbsState, src: Src, port_kind: u64) -> bool {
        match src {
            Src::Task => self.task_kinds & port_kind != 0,
            Src::Tool(q) => s.status[q] != ABSENT && self.out_kinds[q] & port_kind != 0,
        }
    }

    fn sources(&self) -> impl Iterator<Item = Src> {
        std::iter::once(Src::Task).chain((0..self.universe.n_tools()).map(Src::Tool))
    }

    /// Minimal consumed-leaf sets over all ways to fill ports `port..` of
    /// `tool` with producers not in `attached`.
    fn wirings(&self, s: &AbsState, tool: usize, port: usize, attached: &mut Vec<Src>) -> Vec<u64> {
        let mut found = Vec::new();
        self.wire_rec(s, tool, port, attached, 0, &mut found);
        found.sort_unstable_by_key(|m| m.count_ones());
        found.dedup();
        let mut minimal: Vec<u64> = Vec::new();
        for m in found {
            if !minimal.iter().any(|&k| k & m == k) {
                minimal.push(m);
            }
        }
        minimal
    }

    fn wire_rec(&self, s: &AbsState, tool: usize, port: usize, attached: &mut Vec<Src>, used: u64, found: &mut Vec<u64>) {
        let ports = &self.in_kinds[tool];
        if port == ports.len() {
            found.push(used);
            return;
        }
        for src in self.sources() {
            if attached.contains(&src) || !self.supplies(s, src, ports[port]) {
                continue;
            }
            let add = match src {
                Src::Tool(q) if s.status[q] == LEAF => 1u64 << q,
                _ => 0,
            };
            attached.push(src);
            self.wire_rec(s, tool, port + 1, attached, used | add, found);
            attached.pop();
        }
    }

    fn successor(s: &AbsState, tool: usize, consumed: u64) -> AbsState {
        let mut next = s.clone();
        next.consume(consumed);
        next.close(tool);
        next
    }

    fn feasible(&mut self, s: &AbsState, remaining: usize) -> bool {
        if self.is_valid(s) {
            return true;
        }
        if remaining == 0 {
            return false;
        }
        let key = (s.clone(), remaining);
        if let Some(&hit) = self.memo.get(&key) {
            return hit;
        }
        let mut ok = false;
        'tools: for t in 0..self.universe.n_tools() {
            for consumed in self.wirings(s, t, 0, &mut Vec::new()) {
                if self.feasible(&Self::successor(s, t, consumed), remaining - 1) {
                    ok = true;
                    break 'tools;
                }
            }
        }
        self.memo.insert(key, ok);
        ok
    }

    fn remaining(&self, b: &PlanBuilder) -> Option<usize> {
        self.budget.map(|cap| cap.saturating_sub(b.nodes().len()))
    }

    /// Whether some completion of `b` validates within the budget.
    pub fn completable(&mut self, b: &PlanBuilder) -> bool {
        match b.head() {
            None => b.is_finished() && validate_dag(&b.dag(), self.universe, self.task).is_empty(),
            Some(_) => {
                let m = self.mask(b);
                m.map(|m| !m.is_empty()).unwrap_or(false)
            }
        }
    }

    /// Legal next tokens for the head `b` expects.
    pub fn mask(&mut self, b: &PlanBuilder) -> Result<TokenMask, TplError> {
        let head = b.head().ok_or(TplError::DeadEnd)?;
        let s = self.abs_state(b);
        let mut allowed = Vec::new();
        match head {
            Head::Tool => {
                if self.is_valid(&s) {
                    allowed.push(Token::EoP);
                }
                let remaining = self.remaining(b);
                if remaining != Some(0) {
                    for t in 0..self.universe.n_tools() {
                        let ws = self.wirings(&s, t, 0, &mut Vec::new());
                        let ok = match remaining {
                            None => !ws.is_empty(),
                            Some(r) => ws.into_iter().any(|c| self.feasible(&Self::successor(&s, t, c), r - 1)),
                        };
                        if ok {
                            allowed.push(Token::Tool(t));
                        }
                    }
                }
            }
            Head::Dep => {
                let v = b.open_node().expect("dependency head implies an open instance");
                let tool = b.nodes()[v];
                let mut attached: Vec<Src> = b
                    .deps(v)
                    .iter()
                    .map(|p| match *p {
                        Producer::Task => Src::Task,
                        Producer::Node(u) => Src::Tool(b.nodes()[u]),
                    })
                    .collect();
                let port = attached.len();
                let remaining = self.remaining(b);
                if port == self.in_kinds[tool].len() {
                    allowed.push(Token::EoD);
                } else {
                    let srcs: Vec<Src> = self.sources().collect();
                    for src in srcs {
                        if attached.contains(&src) || !self.supplies(&s, src, self.in_kinds[tool][port]) {
                            continue;
                        }
                        let mut after = s.clone();
                        if let Src::Tool(q) = src {
                            after.consume(1 << q);
                        }
                        attached.push(src);
                        let ws = self.wirings(&after, tool, port + 1, &mut attached);
                        attached.pop();
                        let ok = match remaining {
                            None => !ws.is_empty(),
                            Some(r) => ws.into_iter().any(|c| self.feasible(&Self::successor(&after, tool, c), r)),
                        };
                        if ok {
                            allowed.push(match src {
                                Src::Task => Token::TaskDep,
                                Src::Tool(q) => Token::Dep(q),
                            });
                        }
                    }
                }
            }
        }
        allowed.sort_unstable();
        Ok(TokenMask { head, allowed })
    }

    /// Whether any valid plan exists from an empty prefix.
    pub fn has_valid_plan(&mut self) -> bool {
        let b = PlanBuilder::new(self.universe.n_tools());
        let s = self.abs_state(&b);
        match self.budget {
            Some(r) => self.feasible(&s, r),
            None => true,
        }
    }
}

/// Local legality rules for the next token of `state` (no tool budget).
pub fn legal_next_tokens(
    state: &PlanSequence,
    head: Head,
    universe: &ToolUniverse,
    task: &TaskSpec,
) -> Result<TokenMask, TplError> {
    let b = PlanBuilder::from_prefix(state, universe)?;
    if b.head() != Some(head) {
        return Err(TplError::HeadMismatch { requested: head, expected: b.head() });
    }
    Masker::new(universe, task, None).mask(&b)
}

/// Samples uniformly among legal tokens until `[EoP]`, never using more than
/// `max_tools` tools. The result always validates.
pub fn random_valid_plan<R: Rng + ?Sized>(
    universe: &ToolUniverse,
    task: &TaskSpec,
    max_tools: usize,
    rng: &mut R,
) -> Result<PlanSequence, TplError> {
    if max_tools == 0 {
        return Err(TplError::NoValidPlan(0));
    }
    let mut masker = Masker::new(universe, task, Some(max_tools));
    if !masker.has_valid_plan() {
        return Err(TplError::NoValidPlan(max_tools));
    }
    let mut b = PlanBuilder::new(universe.n_tools());
    while !b.is_finished() {
        let m = masker.mask(&b)?;
        let &tok = m.allowed.choose(rng).ok_or(TplError::DeadEnd)?;
        b.apply_action(tok, universe)?;
    }
    Ok(b.sequence())
}
