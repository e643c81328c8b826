//! Simulated plan execution, synthetic scoring and the brute-force oracle.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{self, CostError, CostRecord, NormBounds, QopReport};
use crate::enumerate::{enumerate_valid_plans, EnumOptions};
use crate::seed;
use crate::tpl::{encode_plan, PlanDag, Producer, Token, TplError};
use crate::universe::{DataKind, TaskSpec, ToolUniverse, UniverseError};

/// Largest universe the oracle will search.
pub const ORACLE_MAX_TOOLS: usize = 8;
/// Largest plan the oracle will search.
pub const ORACLE_MAX_PLAN: usize = 5;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Plan(#[from] TplError),
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("instance {node} (`{tool}`) input {port} needs `{kind}` but is wired to a producer without it")]
    Wiring { node: usize, tool: String, port: usize, kind: String },
    #[error("instance {node} (`{tool}`) has {found} inputs wired, needs {expected}")]
    Arity { node: usize, tool: String, expected: usize, found: usize },
    #[error("oracle limited to {max_tools} tools and plans of {max_plan} instances, got {tools} and {plan}")]
    OracleGuard { max_tools: usize, max_plan: usize, tools: usize, plan: usize },
    #[error("no valid plan within {0} tools")]
    NoValidPlan(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProducedOutput {
    pub node: usize,
    pub kind: DataKind,
    /// Capabilities applied along the producing path, in order.
    pub chain: Vec<String>,
    /// Product of tool qualities along the producing path.
    pub quality: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub records: Vec<CostRecord>,
    /// Per-instance price in USD.
    pub prices: Vec<f64>,
    /// Per-instance execution time in seconds.
    pub times_s: Vec<f64>,
    pub start_s: Vec<f64>,
    pub finish_s: Vec<f64>,
    /// Instances grouped by dependency depth; each group can run concurrently.
    pub schedule: Vec<Vec<usize>>,
    pub outputs: Vec<ProducedOutput>,
    pub price_usd: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub per_output: Vec<f64>,
    pub performance: f64,
}

fn check_wiring(dag: &PlanDag, task: &TaskSpec, universe: &ToolUniverse) -> Result<Vec<Vec<Producer>>, ExecError> {
    let deps = dag.check()?;
    for (v, ds) in deps.iter().enumerate() {
        let tool = universe.tool(dag.nodes[v]);
        if ds.len() != tool.inputs.len() {
            return Err(ExecError::Arity { node: v, tool: tool.id.clone(), expected: tool.inputs.len(), found: ds.len() });
        }
        for (port, (p, kind)) in ds.iter().zip(&tool.inputs).enumerate() {
            let ok = match *p {
                Producer::Task => task.provides(kind),
                Producer::Node(u) => universe.tool(dag.nodes[u]).outputs.contains(kind),
            };
            if !ok {
                return Err(ExecError::Wiring { node: v, tool: tool.id.clone(), port, kind: kind.0.clone() });
            }
        }
    }
    Ok(deps)
}

#[derive(PartialEq)]
struct Event(f64, usize);

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Min-heap on time, then instance.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Runs every instance once the last of its producers has finished and
/// returns `(start, finish)` per instance.
fn simulate(deps: &[Vec<Producer>], times: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = deps.len();
    let mut waiting = vec![0usize; n];
    let mut consumers = vec![Vec::new(); n];
    for (v, ds) in deps.iter().enumerate() {
        for p in ds {
            if let Producer::Node(u) = *p {
                waiting[v] += 1;
                consumers[u].push(v);
            }
        }
    }
    let mut start = vec![0.0; n];
    let mut finish = vec![0.0; n];
    let mut heap = BinaryHeap::new();
    for v in 0..n {
        if waiting[v] == 0 {
            heap.push(Event(times[v], v));
        }
    }
    while let Some(Event(now, u)) = heap.pop() {
        finish[u] = now;
        for &v in &consumers[u] {
            waiting[v] -= 1;
            if waiting[v] == 0 {
                start[v] = now;
                heap.push(Event(now + times[v], v));
            }
        }
    }
    (start, finish)
}

fn parallel_levels(deps: &[Vec<Producer>]) -> Vec<Vec<usize>> {
    let n = deps.len();
    let mut depth: Vec<Option<usize>> = vec![None; n];
    let mut queue: VecDeque<usize> = (0..n).collect();
    while let Some(v) = queue.pop_front() {
        let mut d = 0;
        let mut ready = true;
        for p in &deps[v] {
            if let Producer::Node(u) = *p {
                match depth[u] {
                    Some(du) => d = d.max(du + 1),
                    None => ready = false,
                }
            }
        }
        if ready {
            depth[v] = Some(d);
        } else {
            queue.push_back(v);
        }
    }
    let levels = depth.iter().flatten().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); levels];
    for (v, d) in depth.into_iter().enumerate() {
        out[d.expect("acyclic")].push(v);
    }
    out
}

/// Simulates `dag` at the task's size level.
///
/// The plan need not solve the task, but every port must be wired to a
/// producer of the right kind.
pub fn execute_plan<R: Rng + ?Sized>(
    dag: &PlanDag,
    task: &TaskSpec,
    universe: &ToolUniverse,
    rng: &mut R,
) -> Result<ExecutionTrace, ExecError> {
    let deps = if dag.is_empty() { Vec::new() } else { check_wiring(dag, task, universe)? };
    let mut records = Vec::with_capacity(dag.len());
    let mut prices = Vec::with_capacity(dag.len());
    for &t in &dag.nodes {
        let rec = universe.profile_index(t, task.size_level, 1, rng)?;
        prices.push(cost::tool_price(&rec, &universe.price_table)?);
        records.push(rec);
    }
    let times_s: Vec<f64> = records.iter().map(|r| r.time_ms / 1000.0).collect();
    let (start_s, finish_s) = simulate(&deps, &times_s);
    let wall_time_s = finish_s.iter().copied().fold(0.0, f64::max);

    // Capability chain and quality follow the primary (port 0) input.
    let order = if dag.is_empty() { Vec::new() } else { dag.topological_order()? };
    let mut chains: Vec<Vec<String>> = vec![Vec::new(); dag.len()];
    let mut quality = vec![1.0; dag.len()];
    for v in order {
        let tool = universe.tool(dag.nodes[v]);
        let (mut chain, q) = match deps[v].first() {
            Some(Producer::Node(u)) => (chains[*u].clone(), quality[*u]),
            _ => (Vec::new(), 1.0),
        };
        chain.push(tool.capability.clone());
        chains[v] = chain;
        quality[v] = q * tool.quality;
    }
    let mut outputs = Vec::new();
    for v in dag.leaves() {
        for kind in &universe.tool(dag.nodes[v]).outputs {
            outputs.push(ProducedOutput { node: v, kind: kind.clone(), chain: chains[v].clone(), quality: quality[v] });
        }
    }
    Ok(ExecutionTrace {
        price_usd: cost::plan_price(&prices),
        records,
        prices,
        times_s,
        start_s,
        finish_s,
        schedule: parallel_levels(&deps),
        outputs,
        wall_time_s,
    })
}

/// Length of the longest prefix of `required` that occurs in order in `chain`.
pub fn ordered_prefix(required: &[String], chain: &[String]) -> usize {
    let mut matched = 0;
    for c in chain {
        if matched < required.len() && *c == required[matched] {
            matched += 1;
        }
    }
    matched
}

/// Scores a trace: each required output takes its best produced output,
/// scored as kind match x ordered chain coverage x path quality.
pub fn score_plan(trace: &ExecutionTrace, task: &TaskSpec) -> ScoreBreakdown {
    let per_output: Vec<f64> = task
        .required_outputs
        .iter()
        .map(|req| {
            trace
                .outputs
                .iter()
                .filter(|o| o.kind == req.kind)
                .map(|o| ordered_prefix(&req.chain, &o.chain) as f64 / req.chain.len().max(1) as f64 * o.quality)
                .fold(0.0, f64::max)
        })
        .collect();
    let performance = if per_output.is_empty() { 0.0 } else { per_output.iter().sum::<f64>() / per_output.len() as f64 };
    ScoreBreakdown { per_output, performance }
}

/// Executes, scores and prices a plan.
pub fn evaluate<R: Rng + ?Sized>(
    dag: &PlanDag,
    task: &TaskSpec,
    universe: &ToolUniverse,
    alpha: f64,
    bounds: &NormBounds,
    rng: &mut R,
) -> Result<QopReport, ExecError> {
    let trace = execute_plan(dag, task, universe, rng)?;
    let score = score_plan(&trace, task);
    Ok(cost::qop(score.performance, trace.price_usd, alpha, bounds)?.with_exec_time(trace.wall_time_s))
}

/// A plan with its noise-free raw performance and price.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub dag: PlanDag,
    pub canonical: Vec<Token>,
    pub performance: f64,
    pub price_usd: f64,
    pub exec_time_s: f64,
}

/// Every valid plan within `max_tools`, evaluated without noise.
pub fn oracle_candidates(task: &TaskSpec, universe: &ToolUniverse, max_tools: usize) -> Result<Vec<Candidate>, ExecError> {
    if universe.n_tools() > ORACLE_MAX_TOOLS || max_tools > ORACLE_MAX_PLAN {
        return Err(ExecError::OracleGuard {
            max_tools: ORACLE_MAX_TOOLS,
            max_plan: ORACLE_MAX_PLAN,
            tools: universe.n_tools(),
            plan: max_tools,
        });
    }
    let quiet = universe.without_noise();
    let opts = EnumOptions { max_tools, allow_repeats: true, allowed: None };
    let mut rng = seed::rng(0);
    enumerate_valid_plans(&quiet, task, &opts)
        .into_iter()
        .map(|dag| {
            let trace = execute_plan(&dag, task, &quiet, &mut rng)?;
            let score = score_plan(&trace, task);
            Ok(Candidate {
                canonical: encode_plan(&dag)?.tokens,
                performance: score.performance,
                price_usd: trace.price_usd,
                exec_time_s: trace.wall_time_s,
                dag,
            })
        })
        .collect()
}

/// Highest-QoP candidate; ties go to fewer tools, then canonical order.
pub fn select_optimal<'c>(
    candidates: &'c [Candidate],
    alpha: f64,
    bounds: &NormBounds,
) -> Result<Option<(&'c Candidate, QopReport)>, ExecError> {
    let mut best: Option<(&Candidate, QopReport)> = None;
    for c in candidates {
        let rep = cost::qop(c.performance, c.price_usd, alpha, bounds)?.with_exec_time(c.exec_time_s);
        let better = match &best {
            None => true,
            Some((b, br)) => match rep.qop.total_cmp(&br.qop) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => (c.dag.len(), &c.canonical) < (b.dag.len(), &b.canonical),
            },
        };
        if better {
            best = Some((c, rep));
        }
    }
    Ok(best)
}

/// The best plan for `task` found by exhaustive search.
pub fn brute_force_optimal(
    task: &TaskSpec,
    universe: &ToolUniverse,
    max_tools: usize,
    alpha: f64,
    bounds: &NormBounds,
) -> Result<(PlanDag, QopReport), ExecError> {
    cost::check_alpha(alpha)?;
    let cands = oracle_candidates(task, universe, max_tools)?;
    select_optimal(&cands, alpha, bounds)?
        .map(|(c, r)| (c.dag.clone(), r))
        .ok_or(ExecError::NoValidPlan(max_tools))
}
