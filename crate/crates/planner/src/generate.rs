//! Autoregressive plan generation with a target return.

use std::collections::BTreeMap;

use catp_core::context::SizeLevels;
use catp_core::cost::{self, NormBounds, QopReport};
use catp_core::executor::evaluate;
use catp_core::tpl::{validate_sequence, Masker, PlanBuilder, PlanSequence};
use catp_core::universe::CostAttributes;
use catp_core::{TaskSpec, Token, ToolUniverse};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::{partial_price, Featurizer};
use crate::policy::{PolicyNet, StepInput};
use crate::train::TargetReturn;
use crate::PlannerError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Decoding {
    Greedy,
    Sampled { temperature: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Initial return-to-go; `None` uses the policy's target-return rule.
    pub target_return: Option<f64>,
    /// Generation stops after this many predicted tokens.
    pub max_tokens: usize,
    pub decoding: Decoding,
    /// Restrict every step to tokens that keep a valid plan reachable.
    pub masking: bool,
    /// Tool budget for masking; `None` uses the training budget.
    pub max_tools: Option<usize>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { target_return: None, max_tokens: 64, decoding: Decoding::Greedy, masking: true, max_tools: None }
    }
}

/// Dataset facts a trained policy plans with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningMeta {
    pub alpha: f64,
    pub bounds: NormBounds,
    pub size_levels: SizeLevels,
    pub max_tools: usize,
    pub max_return: f64,
    /// Best return observed per task id.
    pub task_returns: BTreeMap<String, f64>,
    pub target_return: TargetReturn,
}

/// A universe prepared for planning: noise disabled, cost attributes and
/// features precomputed.
#[derive(Clone, Debug)]
pub struct PlanningContext {
    pub universe: ToolUniverse,
    pub meta: PlanningMeta,
    attrs: Vec<CostAttributes>,
    featurizer: Featurizer,
}

impl PlanningContext {
    pub fn new(universe: &ToolUniverse, meta: PlanningMeta, policy: &PolicyNet) -> Result<Self, PlannerError> {
        policy.check_universe(universe)?;
        cost::check_alpha(meta.alpha)?;
        if meta.size_levels.k != universe.k {
            return Err(PlannerError::Config(format!(
                "size levels have k = {}, universe has k = {}",
                meta.size_levels.k, universe.k
            )));
        }
        let universe = universe.without_noise();
        let attrs = universe.all_cost_attributes()?;
        let featurizer = Featurizer::new(&universe, policy.config.max_tools);
        Ok(Self { universe, meta, attrs, featurizer })
    }

    /// `task` with its size level assigned from the fitted levels.
    pub fn prepare(&self, task: &TaskSpec) -> Result<TaskSpec, PlannerError> {
        task.validate(&self.universe)?;
        let mut t = task.clone();
        t.size_level = self.meta.size_levels.level_of(t.size());
        Ok(t)
    }

    pub fn target_for(&self, task_id: &str) -> f64 {
        match self.meta.target_return {
            TargetReturn::DatasetMax => self.meta.max_return,
            TargetReturn::TaskMax => self.meta.task_returns.get(task_id).copied().unwrap_or(self.meta.max_return),
            TargetReturn::Fixed(r) => r,
        }
    }
}

/// One generated plan and the quantities seen while producing it.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub sequence: PlanSequence,
    pub actions: Vec<Token>,
    /// Return-to-go fed to the policy at each step.
    pub conditioning: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Normalized cumulative price after each action.
    pub price_norms: Vec<f64>,
    pub valid: bool,
    pub diagnostics: Vec<String>,
    /// Present when the plan is valid.
    pub report: Option<QopReport>,
}

fn pick<R: Rng + ?Sized>(logits: &[f64], allowed: &[bool], decoding: Decoding, rng: &mut R) -> Option<usize> {
    let cands: Vec<usize> = (0..logits.len()).filter(|&i| allowed[i]).collect();
    let &first = cands.first()?;
    match decoding {
        Decoding::Greedy => Some(cands.iter().copied().fold(first, |b, i| if logits[i] > logits[b] { i } else { b })),
        Decoding::Sampled { temperature } => {
            let t = temperature.max(1e-6);
            let max = cands.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = cands.iter().map(|&i| ((logits[i] - max) / t).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (&i, w) in cands.iter().zip(&weights) {
                if u < *w {
                    return Some(i);
                }
                u -= w;
            }
            cands.last().copied()
        }
    }
}

/// Generates a plan for `task` token by token.
///
/// The tool head predicts after `[SoP]` and `<EoD>`, the dependency head
/// otherwise. With masking on, every step is restricted to tokens from
/// which a valid plan within the tool budget stays reachable, so the result
/// always validates. Without masking, the first token the plan grammar
/// rejects ends generation with an invalid plan.
///
/// The return-to-go starts at the target and is reduced by each step's
/// reward, computed from noise-free tool prices at the task's size level.
pub fn generate_plan<R: Rng + ?Sized>(
    policy: &PolicyNet,
    ctx: &PlanningContext,
    task: &TaskSpec,
    cfg: &InferenceConfig,
    rng: &mut R,
) -> Result<Generated, PlannerError> {
    let u = &ctx.universe;
    let n = u.n_tools();
    let alpha = ctx.meta.alpha;
    let bounds = &ctx.meta.bounds;
    let task = ctx.prepare(task)?;
    let tctx = ctx.featurizer.task_context(u, &ctx.attrs, &task)?;
    let budget = cfg.max_tools.unwrap_or(ctx.meta.max_tools);
    let mut masker = cfg.masking.then(|| Masker::new(u, &task, Some(budget)));
    if let Some(m) = masker.as_mut() {
        if !m.has_valid_plan() {
            return Err(PlannerError::NoValidPlan { task: task.id.clone(), max_tools: budget });
        }
    }

    let mut rtg = cfg.target_return.unwrap_or_else(|| ctx.target_for(&task.id));
    let mut b = PlanBuilder::new(n);
    let mut steps: Vec<StepInput> = Vec::new();
    let mut out = Generated {
        sequence: b.sequence(),
        actions: Vec::new(),
        conditioning: Vec::new(),
        rewards: Vec::new(),
        price_norms: Vec::new(),
        valid: false,
        diagnostics: Vec::new(),
        report: None,
    };
    let w = policy.config.window;
    while !b.is_finished() {
        if out.actions.len() >= cfg.max_tokens {
            out.diagnostics.push(format!("stopped after {} tokens without [EoP]", cfg.max_tokens));
            break;
        }
        let head = b.head().expect("unfinished plans have a head");
        let state = ctx.featurizer.state_features(u, &task, &b, partial_price(&b, &tctx, bounds));
        steps.push(StepInput { rtg, state, action: None, timestep: out.actions.len(), head });
        let window = &steps[steps.len().saturating_sub(w)..];
        let logits = policy.forward(&tctx, window)?.pop().expect("one row per step");
        let allowed = match masker.as_mut() {
            Some(m) => {
                let mask = m.mask(&b)?;
                if mask.is_empty() {
                    return Err(PlannerError::DeadEnd { task: task.id.clone(), step: out.actions.len() });
                }
                mask.as_flags(n)
            }
            None => vec![true; head.width(n)],
        };
        let idx = pick(&logits, &allowed, cfg.decoding, rng).expect("allowed set is nonempty");
        let tok = head.token_at(idx, n);
        steps.last_mut().expect("pushed above").action = Some(tok);
        out.conditioning.push(rtg);
        out.actions.push(tok);
        if let Err(e) = b.apply_action(tok, u) {
            out.diagnostics.push(format!("token {} rejected: {e}", tok.render(u)));
            break;
        }
        if tok == Token::EoP {
            break;
        }
        let price_norm = partial_price(&b, &tctx, bounds);
        let r = cost::step_reward(price_norm, None, false, alpha)?;
        out.price_norms.push(price_norm);
        out.rewards.push(r);
        rtg -= r;
    }
    out.sequence = b.sequence();

    if b.is_finished() {
        let validation = validate_sequence(&out.sequence, u, &task);
        out.diagnostics.extend(validation.diagnostics.iter().map(ToString::to_string));
        out.valid = validation.is_valid();
        let (perf_norm, price_norm) = if out.valid {
            let report = evaluate(&b.dag(), &task, u, alpha, bounds, rng)?;
            out.report = Some(report);
            (report.perf_norm, report.price_norm)
        } else {
            (0.0, partial_price(&b, &tctx, bounds))
        };
        out.price_norms.push(price_norm);
        out.rewards.push(cost::step_reward(price_norm, Some(perf_norm), true, alpha)?);
    }
    Ok(out)
}
