//! Task generation, plan search and offline trajectory assembly.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, IndexedRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{self, ContextError, SizeLevels};
use crate::cost::{self, CostError, NormBounds, QopReport};
use crate::enumerate::{enumerate_valid_plans, EnumOptions};
use crate::executor::{execute_plan, score_plan, ExecError};
use crate::seed;
use crate::tpl::{decode_sequence, encode_plan, validate_dag, validate_sequence, Head, Masker, PlanBuilder, PlanDag, Producer, Token, TplError};
use crate::universe::{RequiredOutput, TaskInput, TaskSpec, ToolUniverse, UniverseError};

pub const DATASET_VERSION: u32 = 1;
/// Upper bound on `k` tried by the elbow search.
pub const K_MAX: usize = 8;
const ATTEMPTS: usize = 500;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Plan(#[from] TplError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("cannot access {path}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("the universe cannot support {0} tasks")]
    Unsupported(Mode),
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("no valid plans were found")]
    NoPlans,
    #[error("dataset file is empty")]
    MissingHeader,
    #[error("dataset version {0} is not supported")]
    Version(u32),
    #[error("trajectory references unknown task `{0}`")]
    UnknownTask(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "seq")]
    Sequential,
    #[serde(rename = "nonseq")]
    Nonsequential,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sequential => "seq",
            Mode::Nonsequential => "nonseq",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq" | "sequential" => Ok(Mode::Sequential),
            "nonseq" | "nonsequential" => Ok(Mode::Nonsequential),
            other => Err(format!("unknown mode `{other}` (expected seq or nonseq)")),
        }
    }
}

/// Directed graph of tools; `u -> v` when some output kind of `u` is an
/// input kind of `v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToolGraph {
    pub nodes: Vec<String>,
    /// Sorted `(producer, consumer)` index pairs.
    pub edges: Vec<(usize, usize)>,
}

impl ToolGraph {
    pub fn successors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == u).map(|e| e.1)
    }
}

pub fn build_tool_graph(universe: &ToolUniverse) -> ToolGraph {
    let tools = universe.tools();
    let mut edges = Vec::new();
    for (u, a) in tools.iter().enumerate() {
        for (v, b) in tools.iter().enumerate() {
            if a.outputs.iter().any(|k| b.inputs.contains(k)) {
                edges.push((u, v));
            }
        }
    }
    ToolGraph { nodes: tools.iter().map(|t| t.id.clone()).collect(), edges }
}

fn sample_input_size<R: Rng + ?Sized>(k: usize, rng: &mut R) -> (usize, f64) {
    let level = rng.random_range(1..=k);
    let side = 256.0 * level as f64;
    (level, side * side * (1.0 + rng.random_range(-0.04..0.04)))
}

/// A sampled solving subgraph: per-instance tool and port-0 parent.
struct Sketch {
    nodes: Vec<usize>,
    parent: Vec<Option<usize>>,
}

impl Sketch {
    fn caps_to(&self, universe: &ToolUniverse, mut v: usize) -> Vec<String> {
        let mut chain = vec![universe.tool(self.nodes[v]).capability.clone()];
        while let Some(p) = self.parent[v] {
            chain.push(universe.tool(self.nodes[p]).capability.clone());
            v = p;
        }
        chain.reverse();
        chain
    }

    /// Extends the path ending at `from` (or starting at the task) by up to
    /// `len` tools with capabilities not yet on the path.
    fn grow<R: Rng + ?Sized>(
        &mut self,
        universe: &ToolUniverse,
        graph: &ToolGraph,
        from: Option<usize>,
        len: usize,
        rng: &mut R,
    ) -> Option<usize> {
        let mut last = from;
        for _ in 0..len {
            let used: BTreeSet<String> = last.map(|v| self.caps_to(universe, v)).unwrap_or_default().into_iter().collect();
            let cands: Vec<usize> = match last {
                None => (0..universe.n_tools()).collect(),
                Some(v) => graph
                    .successors(self.nodes[v])
                    .filter(|&t| universe.tool(self.nodes[v]).outputs.contains(&universe.tool(t).inputs[0]))
                    .collect(),
            };
            let cands: Vec<usize> = cands.into_iter().filter(|&t| !used.contains(&universe.tool(t).capability)).collect();
            let Some(&t) = cands.choose(rng) else { break };
            self.nodes.push(t);
            self.parent.push(last);
            last = Some(self.nodes.len() - 1);
        }
        (last != from).then_some(last).flatten()
    }

    fn into_task<R: Rng + ?Sized>(self, universe: &ToolUniverse, leaves: &[usize], id: String, rng: &mut R) -> Option<TaskSpec> {
        let mut kinds = BTreeSet::new();
        let mut deps = Vec::with_capacity(self.nodes.len());
        for (v, &t) in self.nodes.iter().enumerate() {
            let spec = universe.tool(t);
            let mut ds = Vec::with_capacity(spec.inputs.len());
            for (port, kind) in spec.inputs.iter().enumerate() {
                match (port, self.parent[v]) {
                    (0, Some(p)) => ds.push(Producer::Node(p)),
                    _ => {
                        kinds.insert(kind.clone());
                        ds.push(Producer::Task);
                    }
                }
            }
            deps.push(ds);
        }
        let required_outputs = leaves
            .iter()
            .map(|&v| RequiredOutput {
                kind: universe.tool(self.nodes[v]).outputs.choose(rng).expect("tools have outputs").clone(),
                chain: self.caps_to(universe, v),
            })
            .collect::<Vec<_>>();
        let distinct: BTreeSet<_> = required_outputs.iter().map(|r| (r.kind.clone(), r.chain.clone())).collect();
        if distinct.len() != required_outputs.len() {
            return None;
        }
        let (size_level, size) = sample_input_size(universe.k, rng);
        let task = TaskSpec {
            id,
            inputs: kinds.into_iter().map(|kind| TaskInput { kind, size }).collect(),
            required_outputs,
            size_level,
        };
        let dag = PlanDag::from_deps(self.nodes, &deps);
        (dag.check().is_ok() && validate_dag(&dag, universe, &task).is_empty()).then_some(task)
    }
}

/// Samples one task by first drawing a solving subgraph: a chain for
/// sequential tasks, a tree with two or three leaves otherwise.
pub fn generate_task<R: Rng + ?Sized>(
    universe: &ToolUniverse,
    graph: &ToolGraph,
    mode: Mode,
    index: usize,
    rng: &mut R,
) -> Result<TaskSpec, DatagenError> {
    let id = format!("{mode}-{index:04}");
    for _ in 0..ATTEMPTS {
        let mut sk = Sketch { nodes: Vec::new(), parent: Vec::new() };
        let leaves = match mode {
            Mode::Sequential => {
                let len = rng.random_range(1..=3);
                sk.grow(universe, graph, None, len, rng).into_iter().collect::<Vec<_>>()
            }
            Mode::Nonsequential => {
                let root = if rng.random_bool(0.5) { sk.grow(universe, graph, None, 1, rng) } else { None };
                let branches = if rng.random_bool(0.25) { 3 } else { 2 };
                let mut leaves = Vec::new();
                for _ in 0..branches {
                    let len = rng.random_range(1..=2);
                    if let Some(leaf) = sk.grow(universe, graph, root, len, rng) {
                        leaves.push(leaf);
                    }
                }
                leaves
            }
        };
        let want = if mode == Mode::Sequential { 1 } else { 2 };
        if leaves.len() < want {
            continue;
        }
        if let Some(task) = sk.into_task(universe, &leaves, id.clone(), rng) {
            return Ok(task);
        }
    }
    Err(DatagenError::Unsupported(mode))
}

pub fn generate_tasks<R: Rng + ?Sized>(
    universe: &ToolUniverse,
    count: usize,
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<TaskSpec>, DatagenError> {
    if count == 0 {
        return Err(DatagenError::ZeroCount);
    }
    let graph = build_tool_graph(universe);
    (0..count).map(|i| generate_task(universe, &graph, mode, i, rng)).collect()
}

/// Tools worth considering for `task`: their capability appears in some
/// required chain, their inputs can be derived from the task data, and
/// their output can lead to a required kind.
pub fn relevant_tools(universe: &ToolUniverse, graph: &ToolGraph, task: &TaskSpec) -> Vec<bool> {
    let n = universe.n_tools();
    let caps: BTreeSet<&str> = task.required_outputs.iter().flat_map(|r| r.chain.iter().map(String::as_str)).collect();

    let mut avail: BTreeSet<_> = task.inputs.iter().map(|i| i.kind.clone()).collect();
    let mut fwd = vec![false; n];
    loop {
        let mut changed = false;
        for (t, spec) in universe.tools().iter().enumerate() {
            if !fwd[t] && spec.inputs.iter().all(|k| avail.contains(k)) {
                fwd[t] = true;
                changed = true;
                avail.extend(spec.outputs.iter().cloned());
            }
        }
        if !changed {
            break;
        }
    }

    let mut back: Vec<bool> = universe
        .tools()
        .iter()
        .map(|s| task.required_outputs.iter().any(|r| s.outputs.contains(&r.kind)))
        .collect();
    loop {
        let mut changed = false;
        for &(u, v) in &graph.edges {
            if back[v] && !back[u] {
                back[u] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n)
        .map(|t| caps.contains(universe.tool(t).capability.as_str()) && fwd[t] && back[t])
        .collect()
}

/// Valid plans for `task` over relevant tools, each tool used at most once,
/// one plan per isomorphism class.
pub fn enumerate_plans(universe: &ToolUniverse, graph: &ToolGraph, task: &TaskSpec, max_tools: usize) -> Vec<PlanDag> {
    let opts = EnumOptions { max_tools, allow_repeats: false, allowed: Some(relevant_tools(universe, graph, task)) };
    enumerate_valid_plans(universe, task, &opts)
}

/// Keeps the plans whose encoding validates for `task`.
pub fn filter_valid(plans: Vec<PlanDag>, universe: &ToolUniverse, task: &TaskSpec) -> Vec<PlanDag> {
    plans
        .into_iter()
        .filter(|dag| encode_plan(dag).is_ok_and(|seq| validate_sequence(&seq, universe, task).is_valid()))
        .collect()
}

/// One plan replayed as head predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub plan: String,
    /// Predicted tokens (everything except `[SoP]` and `<SoD>`).
    pub actions: Vec<Token>,
    /// Number of plan tokens preceding each action; state `s_i` is that prefix.
    pub states: Vec<usize>,
    /// Legal actions at each step as a `0`/`1` string over the head's outputs.
    pub masks: Vec<String>,
    /// Price of each instance, in sequence order.
    pub tool_prices: Vec<f64>,
    /// Cumulative raw price of the partial plan after each action.
    pub prices: Vec<f64>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    pub report: QopReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub universe_digest: String,
    pub size_levels: SizeLevels,
    pub bounds: NormBounds,
    pub alpha: f64,
    pub seed: u64,
    pub mode: Mode,
    pub max_tools: usize,
    pub tasks: Vec<TaskSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanDataset {
    pub header: DatasetHeader,
    pub trajectories: Vec<Trajectory>,
}

impl PlanDataset {
    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.header.tasks.iter().find(|t| t.id == id)
    }

    pub fn max_return(&self) -> f64 {
        self.trajectories.iter().filter_map(|t| t.returns.first().copied()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for t in &self.trajectories {
            out.push_str(&serde_json::to_string(t).expect("trajectory serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DatagenError> {
        Self::read(text.as_bytes())
    }

    fn read(r: impl BufRead) -> Result<Self, DatagenError> {
        let mut lines = r.lines().enumerate();
        let header: DatasetHeader = match lines.next() {
            None => return Err(DatagenError::MissingHeader),
            Some((_, line)) => {
                let line = line.map_err(|source| DatagenError::Io { path: "<dataset>".into(), source })?;
                serde_json::from_str(&line).map_err(|source| DatagenError::Json { line: 1, source })?
            }
        };
        if header.version != DATASET_VERSION {
            return Err(DatagenError::Version(header.version));
        }
        let mut trajectories = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|source| DatagenError::Io { path: "<dataset>".into(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Trajectory = serde_json::from_str(&line).map_err(|source| DatagenError::Json { line: i + 1, source })?;
            if !header.tasks.iter().any(|task| task.id == t.task_id) {
                return Err(DatagenError::UnknownTask(t.task_id));
            }
            trajectories.push(t);
        }
        Ok(Self { header, trajectories })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatagenError> {
        let path = path.as_ref();
        let io = |source| DatagenError::Io { path: path.display().to_string(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatagenError> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|source| DatagenError::Io { path: path.display().to_string(), source })?;
        Self::read(BufReader::new(f))
    }
}

fn mask_string(flags: &[bool]) -> String {
    flags.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// A plan for one task, rewritten in sequence order.
struct Prepared {
    task: usize,
    seq: crate::tpl::PlanSequence,
    dag: PlanDag,
}

struct Executed {
    tool_prices: Vec<f64>,
    performance: f64,
    price: f64,
    exec_time_s: f64,
}

/// Executes every plan, fixes normalization bounds over the whole corpus,
/// then replays each plan token by token to assign rewards.
///
/// `plans` pairs a task index with a plan valid for that task. Masks are
/// recorded with a budget of `max_tools` tools.
pub fn build_trajectories<R: Rng + ?Sized>(
    plans: &[(usize, PlanDag)],
    tasks: &[TaskSpec],
    universe: &ToolUniverse,
    alpha: f64,
    max_tools: usize,
    rng: &mut R,
) -> Result<(NormBounds, Vec<Trajectory>), DatagenError> {
    cost::check_alpha(alpha)?;
    if plans.is_empty() {
        return Err(DatagenError::NoPlans);
    }
    let mut prepared = Vec::with_capacity(plans.len());
    for (task, dag) in plans {
        let seq = encode_plan(dag)?;
        let dag = decode_sequence(&seq, universe)?;
        prepared.push(Prepared { task: *task, seq, dag });
    }

    let mut executed = Vec::with_capacity(prepared.len());
    for p in &prepared {
        let trace = execute_plan(&p.dag, &tasks[p.task], universe, rng)?;
        let score = score_plan(&trace, &tasks[p.task]);
        executed.push(Executed {
            performance: score.performance,
            price: trace.price_usd,
            exec_time_s: trace.wall_time_s,
            tool_prices: trace.prices,
        });
    }
    let perfs: Vec<f64> = executed.iter().map(|e| e.performance).collect();
    let prices: Vec<f64> = executed.iter().map(|e| e.price).collect();
    let bounds = NormBounds::from_observations(&perfs, &prices);

    let n = universe.n_tools();
    let mut out = Vec::with_capacity(prepared.len());
    let mut masker_task = usize::MAX;
    let mut masker: Option<Masker> = None;
    for (p, e) in prepared.iter().zip(&executed) {
        let task = &tasks[p.task];
        if masker_task != p.task {
            masker = Some(Masker::new(universe, task, Some(max_tools)));
            masker_task = p.task;
        }
        let m = masker.as_mut().expect("masker set above");
        let perf_norm = bounds.perf(e.performance);
        let mut b = PlanBuilder::new(n);
        let mut t = Trajectory {
            task_id: task.id.clone(),
            plan: p.seq.render(universe),
            actions: Vec::new(),
            states: Vec::new(),
            masks: Vec::new(),
            tool_prices: e.tool_prices.clone(),
            prices: Vec::new(),
            rewards: Vec::new(),
            returns: Vec::new(),
            report: cost::qop(e.performance, e.price, alpha, &bounds)?.with_exec_time(e.exec_time_s),
        };
        let mut cum = 0.0;
        let mut inserted = 0;
        for &tok in &p.seq.tokens[1..] {
            if tok == Token::SoD {
                continue;
            }
            let mask = m.mask(&b)?;
            debug_assert!(mask.contains(tok), "corpus plan leaves the legal set");
            let head = Head::of(tok).expect("predicted token");
            debug_assert_eq!(mask.head, head);
            t.states.push(b.tokens().len());
            t.masks.push(mask_string(&mask.as_flags(n)));
            if let Token::Tool(_) = tok {
                cum += e.tool_prices[inserted];
                inserted += 1;
            }
            let is_eop = tok == Token::EoP;
            let r = cost::step_reward(bounds.price(cum), is_eop.then_some(perf_norm), is_eop, alpha)?;
            t.actions.push(tok);
            t.prices.push(cum);
            t.rewards.push(r);
            b.apply_action(tok, universe)?;
        }
        t.returns = cost::returns_to_go(&t.rewards);
        out.push(t);
    }
    Ok((bounds, out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatagenConfig {
    pub mode: Mode,
    /// Number of tasks, unless `target_plans` is set.
    pub count: usize,
    pub max_tools: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Keep generating tasks until this many plans are collected, then
    /// truncate to exactly this many.
    pub target_plans: Option<usize>,
    /// At most this many plans per task, sampled without replacement.
    pub per_task_cap: Option<usize>,
    pub jobs: usize,
}

impl DatagenConfig {
    pub fn new(mode: Mode, count: usize, max_tools: usize, seed: u64) -> Self {
        Self { mode, count, max_tools, seed, alpha: crate::DEFAULT_ALPHA, target_plans: None, per_task_cap: None, jobs: 1 }
    }

    /// 1,200 sequential plans, at most 12 per task.
    pub fn seq_preset(seed: u64) -> Self {
        Self { target_plans: Some(1200), per_task_cap: Some(12), ..Self::new(Mode::Sequential, 1, 4, seed) }
    }

    /// 780 non-sequential plans, at most 13 per task.
    pub fn nonseq_preset(seed: u64) -> Self {
        Self { target_plans: Some(780), per_task_cap: Some(13), ..Self::new(Mode::Nonsequential, 1, 6, seed) }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "seq" => Some(Self::seq_preset(seed)),
            "nonseq" => Some(Self::nonseq_preset(seed)),
            _ => None,
        }
    }
}

fn task_with_plans(
    universe: &ToolUniverse,
    graph: &ToolGraph,
    cfg: &DatagenConfig,
    index: usize,
) -> Result<(TaskSpec, Vec<PlanDag>), DatagenError> {
    let task = generate_task(universe, graph, cfg.mode, index, &mut seed::stream(cfg.seed, &format!("task-{index}")))?;
    let mut plans = enumerate_plans(universe, graph, &task, cfg.max_tools);
    if let Some(cap) = cfg.per_task_cap {
        if plans.len() > cap {
            let mut rng = seed::stream(cfg.seed, &format!("select-{index}"));
            let mut keep = index::sample(&mut rng, plans.len(), cap).into_vec();
            keep.sort_unstable();
            plans = keep.into_iter().map(|i| plans[i].clone()).collect();
        }
    }
    Ok((task, plans))
}

/// The full pipeline: tasks, size levels, plan search and trajectories.
pub fn run(universe: &ToolUniverse, cfg: &DatagenConfig) -> Result<PlanDataset, DatagenError> {
    if cfg.count == 0 || cfg.max_tools == 0 {
        return Err(DatagenError::ZeroCount);
    }
    let graph = build_tool_graph(universe);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs.max(1)).build().expect("thread pool");
    let batch = cfg.jobs.max(1) * 4;

    let mut tasks: Vec<TaskSpec> = Vec::new();
    let mut plans: Vec<(usize, PlanDag)> = Vec::new();
    let mut next = 0;
    let task_limit = match cfg.target_plans {
        Some(target) => target.saturating_mul(4).max(64),
        None => cfg.count,
    };
    loop {
        let done = match cfg.target_plans {
            Some(target) => plans.len() >= target,
            None => next >= cfg.count,
        };
        if done || next >= task_limit {
            break;
        }
        let end = (next + batch).min(task_limit);
        let results: Vec<Result<(TaskSpec, Vec<PlanDag>), DatagenError>> =
            pool.install(|| (next..end).into_par_iter().map(|i| task_with_plans(universe, &graph, cfg, i)).collect());
        for r in results {
            let (task, found) = r?;
            let stop = match cfg.target_plans {
                Some(target) => plans.len() >= target,
                None => tasks.len() >= cfg.count,
            };
            if stop || found.is_empty() {
                continue;
            }
            let ti = tasks.len();
            tasks.push(task);
            plans.extend(found.into_iter().map(|d| (ti, d)));
        }
        next = end;
    }
    if let Some(target) = cfg.target_plans {
        plans.truncate(target);
    }
    if plans.is_empty() {
        return Err(DatagenError::NoPlans);
    }

    let sizes: Vec<f64> = tasks.iter().map(TaskSpec::size).collect();
    let mut level_rng = seed::stream(cfg.seed, "levels");
    let distinct = sizes.iter().map(|s| s.to_bits()).collect::<BTreeSet<_>>().len();
    let levels = if distinct >= universe.k {
        let found = context::fit_size_levels(&sizes, K_MAX.min(sizes.len()), &mut level_rng)?;
        if found.k == universe.k {
            found
        } else {
            context::fit_k(&sizes, universe.k, &mut level_rng)?
        }
    } else {
        // Too few tasks to cluster; use the nominal bucket centres.
        SizeLevels { k: universe.k, centroids: (1..=universe.k).map(|l| (256.0 * l as f64).powi(2)).collect() }
    };
    for t in &mut tasks {
        t.size_level = levels.level_of(t.size());
    }

    let (bounds, trajectories) =
        build_trajectories(&plans, &tasks, universe, cfg.alpha, cfg.max_tools, &mut seed::stream(cfg.seed, "exec"))?;
    Ok(PlanDataset {
        header: DatasetHeader {
            version: DATASET_VERSION,
            universe_digest: universe.digest(),
            size_levels: levels,
            bounds,
            alpha: cfg.alpha,
            seed: cfg.seed,
            mode: cfg.mode,
            max_tools: cfg.max_tools,
            tasks,
        },
        trajectories,
    })
}
