//! The return-conditioned causal transformer policy.
//!
//! The input sequence starts with memory rows (one per tool, carrying its
//! cost-context row plus its tool-token embedding, then one task row),
//! followed by `(return-to-go, state, action)` triples. The action at step
//! `t` is predicted from the output at that step's state position, by the
//! tool head or the dependency head.

use catp_core::tpl::Head;
use catp_core::{Token, ToolUniverse};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::features::{vocab_index, vocab_size, Featurizer, TaskContext};
use crate::tensor::Mat;
use crate::PlannerError;

/// Half-width of the uniform initialization range.
pub const INIT_SCALE: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Context window in timesteps.
    pub window: usize,
    /// Timesteps at or beyond this share the last positional embedding.
    pub max_timestep: usize,
    /// Plans are at most this many tools long; used to scale state features.
    pub max_tools: usize,
    /// Returns-to-go are standardized as `(r - return_shift) / return_scale`
    /// before projection.
    pub return_shift: f64,
    pub return_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { d_model: 64, n_layers: 2, n_heads: 4, window: 20, max_timestep: 64, max_tools: 4, return_shift: 0.0, return_scale: 1.0 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: &str| Err(PlannerError::Config(m.into()));
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 {
            return bad("d_model, n_layers and n_heads must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if self.window == 0 || self.max_timestep == 0 || self.max_tools == 0 {
            return bad("window, max_timestep and max_tools must be positive");
        }
        if !(self.return_scale.is_finite() && self.return_scale > 0.0 && self.return_shift.is_finite()) {
            return bad("return_scale must be positive and return_shift finite");
        }
        Ok(())
    }
}

/// Sizes fixed by the universe.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub n_tools: usize,
    pub k: usize,
    pub state_dim: usize,
    pub task_dim: usize,
}

impl PolicyDims {
    pub fn of(universe: &ToolUniverse, cfg: &PolicyConfig) -> Self {
        let f = Featurizer::new(universe, cfg.max_tools);
        Self { n_tools: universe.n_tools(), k: universe.k, state_dim: f.state_dim(), task_dim: f.task_dim() }
    }
}

#[derive(Clone, Copy)]
enum Init {
    Uniform,
    Ones,
}

#[derive(Clone, Debug)]
struct BlockIds {
    ln1: (usize, usize),
    wq: Vec<usize>,
    wk: Vec<usize>,
    wv: Vec<usize>,
    wo: Vec<usize>,
    ln2: (usize, usize),
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug)]
struct Ids {
    tok_emb: usize,
    time_emb: usize,
    ret: (usize, usize),
    ret_ln: (usize, usize),
    state: (usize, usize),
    state_ln: (usize, usize),
    act_ln: (usize, usize),
    cost: (usize, usize),
    cost_ln: (usize, usize),
    task: (usize, usize),
    task_ln: (usize, usize),
    blocks: Vec<BlockIds>,
    final_ln: (usize, usize),
    tool_head: (usize, usize),
    dep_head: (usize, usize),
}

struct Layout {
    specs: Vec<(String, usize, usize, Init)>,
}

impl Layout {
    fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) -> usize {
        self.specs.push((name.into(), rows, cols, init));
        self.specs.len() - 1
    }

    fn linear(&mut self, name: &str, rows: usize, cols: usize) -> (usize, usize) {
        (self.add(format!("{name}.w"), rows, cols, Init::Uniform), self.add(format!("{name}.b"), 1, cols, Init::Uniform))
    }

    fn norm(&mut self, name: &str, d: usize) -> (usize, usize) {
        (self.add(format!("{name}.g"), 1, d, Init::Ones), self.add(format!("{name}.b"), 1, d, Init::Uniform))
    }

    fn build(cfg: &PolicyConfig, dims: &PolicyDims) -> (Self, Ids) {
        let d = cfg.d_model;
        let dh = d / cfg.n_heads;
        let n = dims.n_tools;
        let mut l = Layout { specs: Vec::new() };
        let tok_emb = l.add("tok_emb", vocab_size(n), d, Init::Uniform);
        let time_emb = l.add("time_emb", cfg.max_timestep, d, Init::Uniform);
        let ret = l.linear("ret", 1, d);
        let ret_ln = l.norm("ret_ln", d);
        let state = l.linear("state", dims.state_dim, d);
        let state_ln = l.norm("state_ln", d);
        let act_ln = l.norm("act_ln", d);
        let cost = l.linear("cost", dims.k, d);
        let cost_ln = l.norm("cost_ln", d);
        let task = l.linear("task", dims.task_dim, d);
        let task_ln = l.norm("task_ln", d);
        let mut blocks = Vec::new();
        for b in 0..cfg.n_layers {
            let ln1 = l.norm(&format!("block{b}.ln1"), d);
            let mut wq = Vec::new();
            let mut wk = Vec::new();
            let mut wv = Vec::new();
            let mut wo = Vec::new();
            for h in 0..cfg.n_heads {
                wq.push(l.add(format!("block{b}.head{h}.q"), d, dh, Init::Uniform));
                wk.push(l.add(format!("block{b}.head{h}.k"), d, dh, Init::Uniform));
                wv.push(l.add(format!("block{b}.head{h}.v"), d, dh, Init::Uniform));
                wo.push(l.add(format!("block{b}.head{h}.o"), dh, d, Init::Uniform));
            }
            let ln2 = l.norm(&format!("block{b}.ln2"), d);
            let (w1, b1) = l.linear(&format!("block{b}.mlp1"), d, 4 * d);
            let (w2, b2) = l.linear(&format!("block{b}.mlp2"), 4 * d, d);
            blocks.push(BlockIds { ln1, wq, wk, wv, wo, ln2, w1, b1, w2, b2 });
        }
        let final_ln = l.norm("final_ln", d);
        let tool_head = l.linear("tool_head", d, Head::Tool.width(n));
        let dep_head = l.linear("dep_head", d, Head::Dep.width(n));
        let ids = Ids {
            tok_emb,
            time_emb,
            ret,
            ret_ln,
            state,
            state_ln,
            act_ln,
            cost,
            cost_ln,
            task,
            task_ln,
            blocks,
            final_ln,
            tool_head,
            dep_head,
        };
        (l, ids)
    }
}

/// One timestep of policy input.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInput {
    pub rtg: f64,
    pub state: Vec<f64>,
    /// The action taken at this step, if already known. The prediction for
    /// this step never sees it.
    pub action: Option<Token>,
    pub timestep: usize,
    pub head: Head,
}

/// Head outputs of one forward pass on a tape: logits and, for each row,
/// the index of the step it predicts.
pub(crate) struct HeadOutputs {
    pub tool: Option<(Var, Vec<usize>)>,
    pub dep: Option<(Var, Vec<usize>)>,
}

#[derive(Clone, Debug)]
pub struct PolicyNet {
    pub config: PolicyConfig,
    pub dims: PolicyDims,
    pub names: Vec<String>,
    pub params: Vec<Mat>,
    ids: Ids,
}

impl PartialEq for PolicyNet {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.dims == other.dims && self.names == other.names && self.params == other.params
    }
}

/// A freshly initialized policy for `universe`.
pub fn init_policy<R: Rng + ?Sized>(universe: &ToolUniverse, config: &PolicyConfig, rng: &mut R) -> Result<PolicyNet, PlannerError> {
    config.validate()?;
    if universe.n_tools() == 0 {
        return Err(PlannerError::Config("universe has no tools".into()));
    }
    let dims = PolicyDims::of(universe, config);
    let (layout, ids) = Layout::build(config, &dims);
    let mut names = Vec::with_capacity(layout.specs.len());
    let mut params = Vec::with_capacity(layout.specs.len());
    for (name, rows, cols, init) in layout.specs {
        let m = match init {
            Init::Uniform => Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE)).collect()),
            Init::Ones => Mat::filled(rows, cols, 1.0),
        };
        names.push(name);
        params.push(m);
    }
    Ok(PolicyNet { config: config.clone(), dims, names, params, ids })
}

impl PolicyNet {
    /// Rebuilds a policy from stored tensors, checking names and shapes.
    pub fn from_parts(config: PolicyConfig, dims: PolicyDims, tensors: Vec<(String, Mat)>) -> Result<Self, PlannerError> {
        config.validate()?;
        let (layout, ids) = Layout::build(&config, &dims);
        if layout.specs.len() != tensors.len() {
            return Err(PlannerError::Shape(format!("expected {} tensors, found {}", layout.specs.len(), tensors.len())));
        }
        let mut names = Vec::with_capacity(tensors.len());
        let mut params = Vec::with_capacity(tensors.len());
        for ((name, rows, cols, _), (found, m)) in layout.specs.into_iter().zip(tensors) {
            if name != found || m.shape() != (rows, cols) || m.data.len() != rows * cols {
                return Err(PlannerError::Shape(format!(
                    "tensor {found} {:?} does not match expected {name} ({rows}, {cols})",
                    m.shape()
                )));
            }
            if !m.is_finite() {
                return Err(PlannerError::Shape(format!("tensor {name} has non-finite values")));
            }
            names.push(name);
            params.push(m);
        }
        Ok(Self { config, dims, names, params, ids })
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(|m| m.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(Mat::is_finite)
    }

    /// Checks that the policy was built for `universe`.
    pub fn check_universe(&self, universe: &ToolUniverse) -> Result<(), PlannerError> {
        let expected = PolicyDims::of(universe, &self.config);
        if expected != self.dims {
            return Err(PlannerError::Shape(format!("policy dims {:?} do not match universe {:?}", self.dims, expected)));
        }
        Ok(())
    }

    /// A copy with every parameter set to zero.
    pub fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for m in &mut z.params {
            m.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    fn linear(&self, t: &mut Tape, x: Var, (w, b): (usize, usize)) -> Var {
        let w = t.param(w, &self.params[w]);
        let b = t.param(b, &self.params[b]);
        let y = t.matmul(x, w);
        t.add_row(y, b)
    }

    fn norm(&self, t: &mut Tape, x: Var, (g, b): (usize, usize)) -> Var {
        let g = t.param(g, &self.params[g]);
        let b = t.param(b, &self.params[b]);
        t.layer_norm(x, g, b)
    }

    fn check_window(&self, ctx: &TaskContext, steps: &[StepInput]) -> Result<(), PlannerError> {
        if steps.is_empty() {
            return Err(PlannerError::Shape("empty window".into()));
        }
        if steps.len() > self.config.window {
            return Err(PlannerError::Shape(format!("window of {} steps exceeds {}", steps.len(), self.config.window)));
        }
        if ctx.cost_rows.shape() != (self.dims.n_tools, self.dims.k) || ctx.task_row.len() != self.dims.task_dim {
            return Err(PlannerError::Shape("task context does not match the policy".into()));
        }
        for (i, s) in steps.iter().enumerate() {
            if s.state.len() != self.dims.state_dim {
                return Err(PlannerError::Shape(format!("state {i} has {} features, expected {}", s.state.len(), self.dims.state_dim)));
            }
            if let Some(a) = s.action {
                if Head::of(a) != Some(s.head) {
                    return Err(PlannerError::Shape(format!("step {i} action does not belong to its head")));
                }
                if matches!(a, Token::Tool(t) | Token::Dep(t) if t >= self.dims.n_tools) {
                    return Err(PlannerError::Shape(format!("step {i} action names an unknown tool")));
                }
            } else if i + 1 < steps.len() {
                return Err(PlannerError::Shape(format!("step {i} lacks an action but is not the last step")));
            }
        }
        Ok(())
    }

    /// Records the forward pass on `tape`.
    pub(crate) fn forward_tape(&self, t: &mut Tape, ctx: &TaskContext, steps: &[StepInput]) -> Result<HeadOutputs, PlannerError> {
        self.check_window(ctx, steps)?;
        let ids = &self.ids;
        let n = self.dims.n_tools;
        let cfg = &self.config;

        let tok_emb = t.param(ids.tok_emb, &self.params[ids.tok_emb]);
        let time_emb = t.param(ids.time_emb, &self.params[ids.time_emb]);

        let cost_in = t.input(ctx.cost_rows.clone());
        let cost = self.linear(t, cost_in, ids.cost);
        let cost = self.norm(t, cost, ids.cost_ln);
        let tool_tok = t.gather(tok_emb, (0..n).collect());
        let tools = t.add(cost, tool_tok);
        let task_in = t.input(Mat::row_vec(ctx.task_row.clone()));
        let task = self.linear(t, task_in, ids.task);
        let task = self.norm(t, task, ids.task_ln);

        let times: Vec<usize> = steps.iter().map(|s| s.timestep.min(cfg.max_timestep - 1)).collect();
        let pos = t.gather(time_emb, times.clone());

        let rtg = steps.iter().map(|s| (s.rtg - cfg.return_shift) / cfg.return_scale).collect();
        let rtg = t.input(Mat::from_vec(steps.len(), 1, rtg));
        let r = self.linear(t, rtg, ids.ret);
        let r = t.add(r, pos);
        let r = self.norm(t, r, ids.ret_ln);

        let mut sdata = Vec::with_capacity(steps.len() * self.dims.state_dim);
        for s in steps {
            sdata.extend_from_slice(&s.state);
        }
        let s_in = t.input(Mat::from_vec(steps.len(), self.dims.state_dim, sdata));
        let s = self.linear(t, s_in, ids.state);
        let s = t.add(s, pos);
        let s = self.norm(t, s, ids.state_ln);

        let acted: Vec<usize> = (0..steps.len()).filter(|&i| steps[i].action.is_some()).collect();
        let mut parts = vec![tools, task, r, s];
        if !acted.is_empty() {
            let vocab: Vec<usize> = acted.iter().map(|&i| vocab_index(steps[i].action.expect("filtered"), n).expect("checked")).collect();
            let a = t.gather(tok_emb, vocab);
            let apos = t.gather(time_emb, acted.iter().map(|&i| times[i]).collect());
            let a = t.add(a, apos);
            parts.push(self.norm(t, a, ids.act_ln));
        }
        let stacked = t.concat(parts);

        // Interleave into memory, then (R, s, a) per step.
        let m = n + 1;
        let tsz = steps.len();
        let mut order: Vec<usize> = (0..m).collect();
        let mut state_rows = Vec::with_capacity(tsz);
        let mut next_action = 0;
        for i in 0..tsz {
            order.push(m + i);
            state_rows.push(order.len());
            order.push(m + tsz + i);
            if steps[i].action.is_some() {
                order.push(m + 2 * tsz + next_action);
                next_action += 1;
            }
        }
        let mut x = t.rows(stacked, order);

        let dh = cfg.d_model / cfg.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for b in &ids.blocks {
            let h = self.norm(t, x, b.ln1);
            let mut attn: Option<Var> = None;
            for hd in 0..cfg.n_heads {
                let wq = t.param(b.wq[hd], &self.params[b.wq[hd]]);
                let wk = t.param(b.wk[hd], &self.params[b.wk[hd]]);
                let wv = t.param(b.wv[hd], &self.params[b.wv[hd]]);
                let wo = t.param(b.wo[hd], &self.params[b.wo[hd]]);
                let q = t.matmul(h, wq);
                let k = t.matmul(h, wk);
                let v = t.matmul(h, wv);
                let sc = t.matmul_bt(q, k);
                let sc = t.scale(sc, scale);
                let p = t.causal_softmax(sc);
                let o = t.matmul(p, v);
                let o = t.matmul(o, wo);
                attn = Some(match attn {
                    Some(a) => t.add(a, o),
                    None => o,
                });
            }
            x = t.add(x, attn.expect("at least one head"));
            let h = self.norm(t, x, b.ln2);
            let h = self.linear(t, h, (b.w1, b.b1));
            let h = t.gelu(h);
            let h = self.linear(t, h, (b.w2, b.b2));
            x = t.add(x, h);
        }
        let x = self.norm(t, x, ids.final_ln);

        let mut out = HeadOutputs { tool: None, dep: None };
        for head in [Head::Tool, Head::Dep] {
            let which: Vec<usize> = (0..tsz).filter(|&i| steps[i].head == head).collect();
            if which.is_empty() {
                continue;
            }
            let rows = t.rows(x, which.iter().map(|&i| state_rows[i]).collect());
            let proj = match head {
                Head::Tool => ids.tool_head,
                Head::Dep => ids.dep_head,
            };
            let logits = self.linear(t, rows, proj);
            match head {
                Head::Tool => out.tool = Some((logits, which)),
                Head::Dep => out.dep = Some((logits, which)),
            }
        }
        Ok(out)
    }

    /// Logits of each step's head, predicted from the step's state position.
    pub fn forward(&self, ctx: &TaskContext, steps: &[StepInput]) -> Result<Vec<Vec<f64>>, PlannerError> {
        let mut t = Tape::new();
        let out = self.forward_tape(&mut t, ctx, steps)?;
        let mut logits = vec![Vec::new(); steps.len()];
        for (v, which) in [out.tool, out.dep].into_iter().flatten() {
            let m = t.value(v);
            for (r, &i) in which.iter().enumerate() {
                logits[i] = m.row(r).to_vec();
            }
        }
        if logits.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PlannerError::NonFinite("forward produced non-finite logits".into()));
        }
        Ok(logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use catp_core::presets;
    use catp_core::seed;

    pub(crate) fn tiny() -> PolicyConfig {
        PolicyConfig { d_model: 8, n_layers: 1, n_heads: 2, window: 6, max_timestep: 16, max_tools: 3, return_shift: 0.0, return_scale: 1.0 }
    }

    #[test]
    fn same_seed_same_parameters() {
        let u = presets::desk5();
        let a = init_policy(&u, &tiny(), &mut seed::rng(3)).unwrap();
        let b = init_policy(&u, &tiny(), &mut seed::rng(3)).unwrap();
        let c = init_policy(&u, &tiny(), &mut seed::rng(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.params.iter().flat_map(|m| &m.data).all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn zero_width_is_rejected() {
        let u = presets::desk5();
        let cfg = PolicyConfig { d_model: 0, ..tiny() };
        assert!(matches!(init_policy(&u, &cfg, &mut seed::rng(0)), Err(PlannerError::Config(_))));
    }

    #[test]
    fn head_widths_follow_universe() {
        let u = presets::opencatp10();
        let p = init_policy(&u, &tiny(), &mut seed::rng(0)).unwrap();
        let w = |name: &str| p.params[p.names.iter().position(|n| n == name).unwrap()].cols;
        assert_eq!(w("tool_head.w"), 11);
        assert_eq!(w("dep_head.w"), 12);
        assert_eq!(p.params[p.names.iter().position(|n| n == "tok_emb").unwrap()].rows, 23);
    }
}
