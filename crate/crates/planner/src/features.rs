//! Numeric inputs of the policy.
//!
//! A task contributes memory rows: one cost-context row per tool and one
//! task descriptor row. Each step contributes a state vector summarizing the
//! partial plan built so far.

use catp_core::context::{build_cost_context, CostContext};
use catp_core::executor::ordered_prefix;
use catp_core::tpl::{Head, PlanBuilder, Producer};
use catp_core::universe::CostAttributes;
use catp_core::{DataKind, NormBounds, TaskSpec, Token, ToolUniverse};

use crate::tensor::Mat;
use crate::PlannerError;

/// Required outputs beyond this many are ignored by the task descriptor.
pub const MAX_OUTPUTS: usize = 4;
/// Capability chains are described up to this length.
pub const MAX_CHAIN: usize = 4;

/// Everything the policy knows about one task before planning starts.
#[derive(Clone, Debug)]
pub struct TaskContext {
    pub cost: CostContext,
    /// `|tools| x k` copy of the cost context.
    pub cost_rows: Mat,
    pub task_row: Vec<f64>,
    /// Noise-free price of each tool at the task's size level.
    pub nominal_prices: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Featurizer {
    n_tools: usize,
    kinds: Vec<DataKind>,
    capabilities: Vec<String>,
    k: usize,
    max_tools: usize,
}

impl Featurizer {
    pub fn new(universe: &ToolUniverse, max_tools: usize) -> Self {
        Self {
            n_tools: universe.n_tools(),
            kinds: universe.kinds.clone(),
            capabilities: universe.capabilities(),
            k: universe.k,
            max_tools: max_tools.max(1),
        }
    }

    fn n_kinds(&self) -> usize {
        self.kinds.len()
    }

    fn kind_slot(&self, kind: &DataKind) -> Option<usize> {
        self.kinds.iter().position(|k| k == kind)
    }

    fn cap_slot(&self, cap: &str) -> Option<usize> {
        self.capabilities.iter().position(|c| c == cap)
    }

    pub fn task_dim(&self) -> usize {
        MAX_OUTPUTS * (1 + self.n_kinds() + MAX_CHAIN * self.capabilities.len()) + self.n_kinds() + self.k
    }

    pub fn state_dim(&self) -> usize {
        let (n, nk) = (self.n_tools, self.n_kinds());
        2 + n + 1 + nk + 3 * n + nk + 2 + MAX_OUTPUTS * (2 + self.capabilities.len())
    }

    /// Required outputs (kind and capability chain), input kinds and size level.
    pub fn task_features(&self, task: &TaskSpec) -> Vec<f64> {
        let nk = self.n_kinds();
        let nc = self.capabilities.len();
        let mut f = Vec::with_capacity(self.task_dim());
        for j in 0..MAX_OUTPUTS {
            let mut slot = vec![0.0; 1 + nk + MAX_CHAIN * nc];
            if let Some(req) = task.required_outputs.get(j) {
                slot[0] = 1.0;
                if let Some(i) = self.kind_slot(&req.kind) {
                    slot[1 + i] = 1.0;
                }
                for (p, cap) in req.chain.iter().take(MAX_CHAIN).enumerate() {
                    if let Some(c) = self.cap_slot(cap) {
                        slot[1 + nk + p * nc + c] = 1.0;
                    }
                }
            }
            f.extend(slot);
        }
        let mut inputs = vec![0.0; nk];
        for input in &task.inputs {
            if let Some(i) = self.kind_slot(&input.kind) {
                inputs[i] = 1.0;
            }
        }
        f.extend(inputs);
        let mut level = vec![0.0; self.k];
        if (1..=self.k).contains(&task.size_level) {
            level[task.size_level - 1] = 1.0;
        }
        f.extend(level);
        f
    }

    pub fn task_context(
        &self,
        universe: &ToolUniverse,
        attrs: &[CostAttributes],
        task: &TaskSpec,
    ) -> Result<TaskContext, PlannerError> {
        let cost = build_cost_context(universe, attrs, task.size_level)?;
        let data = cost.matrix.iter().flatten().copied().collect();
        let cost_rows = Mat::from_vec(self.n_tools, self.k, data);
        let nominal_prices = universe
            .tools()
            .iter()
            .map(|t| {
                attrs
                    .iter()
                    .find(|a| a.tool_id == t.id)
                    .map(|a| a.levels[task.size_level - 1])
                    .ok_or_else(|| PlannerError::Config(format!("no cost attributes for tool {}", t.id)))
            })
            .collect::<Result<_, _>>()?;
        Ok(TaskContext { cost, cost_rows, task_row: self.task_features(task), nominal_prices })
    }

    /// Summary of the partial plan in `b`.
    ///
    /// `price_norm` is the normalized price of the tools placed so far.
    pub fn state_features(&self, universe: &ToolUniverse, task: &TaskSpec, b: &PlanBuilder, price_norm: f64) -> Vec<f64> {
        let (n, nk) = (self.n_tools, self.n_kinds());
        let mut f = Vec::with_capacity(self.state_dim());

        let head = b.head();
        f.push(f64::from(head == Some(Head::Tool)));
        f.push(f64::from(head == Some(Head::Dep)));

        // Tool being wired and the kind of its next unfilled port.
        let mut open = vec![0.0; n];
        let mut progress = 0.0;
        let mut next_kind = vec![0.0; nk];
        if let Some(v) = b.open_node() {
            let tool = b.nodes()[v];
            open[tool] = 1.0;
            let spec = universe.tool(tool);
            let filled = b.deps(v).len();
            progress = filled as f64 / spec.inputs.len().max(1) as f64;
            if let Some(kind) = spec.inputs.get(filled) {
                if let Some(i) = self.kind_slot(kind) {
                    next_kind[i] = 1.0;
                }
            }
        }
        f.extend(open);
        f.push(progress);
        f.extend(next_kind);

        // Status of the latest instance of each tool: absent, leaf or consumed.
        let closed = b.nodes().len() - usize::from(b.open_node().is_some());
        let mut status = vec![0.0; 3 * n];
        let mut leaf_kinds = vec![0.0; nk];
        for t in 0..n {
            let s = match b.latest(t) {
                None => 0,
                Some(v) if b.n_consumers(v) == 0 => 1,
                Some(_) => 2,
            };
            status[3 * t + s] = 1.0;
        }
        for v in 0..closed {
            if b.n_consumers(v) == 0 {
                for kind in &universe.tool(b.nodes()[v]).outputs {
                    if let Some(i) = self.kind_slot(kind) {
                        leaf_kinds[i] += 1.0 / self.max_tools as f64;
                    }
                }
            }
        }
        f.extend(status);
        f.extend(leaf_kinds);

        f.push(b.nodes().len() as f64 / self.max_tools as f64);
        f.push(price_norm);

        // Per required output: whether a leaf of the right kind completes it,
        // the best ordered chain coverage by any leaf, and the next
        // capability that coverage still lacks.
        let chains = node_chains(universe, b);
        let leaves: Vec<usize> = (0..closed).filter(|&v| b.n_consumers(v) == 0).collect();
        let nc = self.capabilities.len();
        for j in 0..MAX_OUTPUTS {
            let mut slot = vec![0.0; 2 + nc];
            if let Some(req) = task.required_outputs.get(j) {
                let len = req.chain.len().max(1);
                let done = leaves.iter().any(|&v| {
                    universe.tool(b.nodes()[v]).outputs.contains(&req.kind)
                        && ordered_prefix(&req.chain, &chains[v]) == req.chain.len()
                });
                let best = leaves.iter().map(|&v| ordered_prefix(&req.chain, &chains[v])).max().unwrap_or(0);
                slot[0] = f64::from(done);
                slot[1] = best as f64 / len as f64;
                if let Some(c) = req.chain.get(best).and_then(|cap| self.cap_slot(cap)) {
                    slot[2 + c] = 1.0;
                }
            }
            f.extend(slot);
        }
        debug_assert_eq!(f.len(), self.state_dim());
        f
    }
}

/// Capability chain reaching each node along first-port producers.
fn node_chains(universe: &ToolUniverse, b: &PlanBuilder) -> Vec<Vec<String>> {
    let mut chains: Vec<Vec<String>> = Vec::with_capacity(b.nodes().len());
    for (v, &tool) in b.nodes().iter().enumerate() {
        let mut chain = match b.deps(v).first() {
            Some(Producer::Node(u)) => chains[*u].clone(),
            _ => Vec::new(),
        };
        chain.push(universe.tool(tool).capability.clone());
        chains.push(chain);
    }
    chains
}

/// Normalized cumulative price after placing the tools in `b`.
pub fn partial_price(b: &PlanBuilder, ctx: &TaskContext, bounds: &NormBounds) -> f64 {
    bounds.price(b.nodes().iter().fold(0.0, |acc, &t| acc + ctx.nominal_prices[t]))
}

/// Index of `tok` in the shared action vocabulary: tools, dependencies,
/// `<task>`, `[EoP]`, `<EoD>`.
pub fn vocab_index(tok: Token, n_tools: usize) -> Option<usize> {
    match tok {
        Token::Tool(t) => Some(t),
        Token::Dep(t) => Some(n_tools + t),
        Token::TaskDep => Some(2 * n_tools),
        Token::EoP => Some(2 * n_tools + 1),
        Token::EoD => Some(2 * n_tools + 2),
        Token::SoP | Token::SoD => None,
    }
}

pub fn vocab_size(n_tools: usize) -> usize {
    2 * n_tools + 3
}

#[cfg(test)]
mod tests {
    use super::*;
    use catp_core::presets;

    #[test]
    fn dimensions_match() {
        let u = presets::desk5();
        let fz = Featurizer::new(&u, 3);
        let task = TaskSpec {
            id: "t".into(),
            inputs: vec![catp_core::TaskInput { kind: DataKind::new("image"), size: 1.0 }],
            required_outputs: vec![catp_core::RequiredOutput {
                kind: DataKind::new("text"),
                chain: vec!["deblur".into(), "caption".into()],
            }],
            size_level: 2,
        };
        assert_eq!(fz.task_features(&task).len(), fz.task_dim());
        let mut b = PlanBuilder::new(u.n_tools());
        assert_eq!(fz.state_features(&u, &task, &b, 0.0).len(), fz.state_dim());
        let deblur = u.tool_index("deblur_fast").unwrap();
        let caption = u.tool_index("caption_small").unwrap();
        for tok in [Token::Tool(deblur), Token::TaskDep, Token::EoD, Token::Tool(caption), Token::Dep(deblur), Token::EoD] {
            b.apply_action(tok, &u).unwrap();
        }
        let s = fz.state_features(&u, &task, &b, 0.3);
        let nc = u.capabilities().len();
        let first = &s[s.len() - MAX_OUTPUTS * (2 + nc)..][..2 + nc];
        assert_eq!(first[0], 1.0, "deblur then caption completes the output");
        assert_eq!(first[1], 1.0);
        assert!(first[2..].iter().all(|&x| x == 0.0), "nothing left to add");
    }

    #[test]
    fn vocabulary_is_dense() {
        let n = 4;
        let toks: Vec<Token> = (0..n)
            .map(Token::Tool)
            .chain((0..n).map(Token::Dep))
            .chain([Token::TaskDep, Token::EoP, Token::EoD])
            .collect();
        let mut idx: Vec<usize> = toks.iter().map(|&t| vocab_index(t, n).unwrap()).collect();
        idx.sort_unstable();
        assert_eq!(idx, (0..vocab_size(n)).collect::<Vec<_>>());
    }
}
