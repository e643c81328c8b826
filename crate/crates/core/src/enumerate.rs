//! Exhaustive search for valid plans.
//!
//! Plans are grown one instance at a time, wiring each port to the task or to
//! the latest instance of some tool, exactly as a token sequence would.
//! Appending `v` right after an independent `w` with a larger tool index is
//! skipped, since the swapped sequence describes the same graph. Remaining
//! duplicates are removed by canonical encoding. With repeated tools the
//! encoding depends on instance numbering, so a few isomorphic plans may
//! survive side by side.

use std::collections::BTreeMap;

use crate::tpl::{encode_plan, validate_dag, PlanDag, Producer, Token};
use crate::universe::{TaskSpec, ToolUniverse};

#[derive(Clone, Debug)]
pub struct EnumOptions {
    pub max_tools: usize,
    /// Whether a tool may appear more than once in a plan.
    pub allow_repeats: bool,
    /// Per-tool switch; `None` allows every tool.
    pub allowed: Option<Vec<bool>>,
}

impl EnumOptions {
    pub fn new(max_tools: usize) -> Self {
        Self { max_tools, allow_repeats: false, allowed: None }
    }
}

struct Search<'a> {
    universe: &'a ToolUniverse,
    task: &'a TaskSpec,
    opts: &'a EnumOptions,
    nodes: Vec<usize>,
    deps: Vec<Vec<Producer>>,
    latest: Vec<Option<usize>>,
    found: BTreeMap<Vec<Token>, PlanDag>,
}

impl Search<'_> {
    fn record(&mut self) {
        let dag = PlanDag::from_deps(self.nodes.clone(), &self.deps);
        if !validate_dag(&dag, self.universe, self.task).is_empty() {
            return;
        }
        let seq = encode_plan(&dag).expect("plans grown as sequences are representable");
        self.found.entry(seq.tokens).or_insert(dag);
    }

    /// Whether `w` and a new instance of `tool` wired to `deps` commute.
    fn independent(&self, w: usize, tool: usize, deps: &[Producer]) -> bool {
        let tw = self.nodes[w];
        tw != tool
            && !deps.contains(&Producer::Node(w))
            && !self.deps[w].iter().any(|p| matches!(*p, Producer::Node(u) if self.nodes[u] == tool))
    }

    fn wirings(&self, tool: usize) -> Vec<Vec<Producer>> {
        let spec = self.universe.tool(tool);
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(spec.inputs.len());
        self.wire(tool, 0, &mut cur, &mut out);
        out
    }

    fn wire(&self, tool: usize, port: usize, cur: &mut Vec<Producer>, out: &mut Vec<Vec<Producer>>) {
        let spec = self.universe.tool(tool);
        if port == spec.inputs.len() {
            out.push(cur.clone());
            return;
        }
        let kind = &spec.inputs[port];
        let mut cands = Vec::new();
        if self.task.provides(kind) {
            cands.push(Producer::Task);
        }
        for u in self.latest.iter().flatten() {
            if self.universe.tool(self.nodes[*u]).outputs.contains(kind) {
                cands.push(Producer::Node(*u));
            }
        }
        for p in cands {
            if cur.contains(&p) {
                continue;
            }
            cur.push(p);
            self.wire(tool, port + 1, cur, out);
            cur.pop();
        }
    }

    fn run(&mut self) {
        if !self.nodes.is_empty() {
            self.record();
        }
        if self.nodes.len() >= self.opts.max_tools {
            return;
        }
        for t in 0..self.universe.n_tools() {
            if self.opts.allowed.as_ref().is_some_and(|a| !a[t]) {
                continue;
            }
            if !self.opts.allow_repeats && self.nodes.contains(&t) {
                continue;
            }
            for deps in self.wirings(t) {
                if let Some(w) = self.nodes.len().checked_sub(1) {
                    if self.independent(w, t, &deps) && self.nodes[w] > t {
                        continue;
                    }
                }
                let v = self.nodes.len();
                let prev = self.latest[t];
                self.nodes.push(t);
                self.deps.push(deps);
                self.latest[t] = Some(v);
                self.run();
                self.latest[t] = prev;
                self.deps.pop();
                self.nodes.pop();
            }
        }
    }
}

/// Every valid plan for `task` with at most `opts.max_tools` instances,
/// sorted by canonical encoding. Without repeats there is exactly one plan
/// per isomorphism class.
pub fn enumerate_valid_plans(universe: &ToolUniverse, task: &TaskSpec, opts: &EnumOptions) -> Vec<PlanDag> {
    let mut s = Search {
        universe,
        task,
        opts,
        nodes: Vec::new(),
        deps: Vec::new(),
        latest: vec![None; universe.n_tools()],
        found: BTreeMap::new(),
    };
    s.run();
    s.found.into_values().collect()
}
