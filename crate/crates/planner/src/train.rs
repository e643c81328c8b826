//! Offline training on plan trajectories.

use std::collections::BTreeMap;

use catp_core::datagen::PlanDataset;
use catp_core::seed;
use catp_core::tpl::PlanBuilder;
use catp_core::{TaskSpec, ToolUniverse};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::features::{partial_price, Featurizer, TaskContext};
use crate::policy::{PolicyConfig, PolicyNet, StepInput};
use crate::tensor::Mat;
use crate::PlannerError;

/// How the initial return-to-go is chosen when planning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum TargetReturn {
    /// The largest return observed in the training data.
    DatasetMax,
    /// The largest return observed for the same task, falling back to
    /// [`TargetReturn::DatasetMax`] for unseen tasks.
    TaskMax,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Decays linearly from the base rate to zero over all updates.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub policy: PolicyConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub target_return: TargetReturn,
    pub lr_schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            policy: PolicyConfig::default(),
            learning_rate: 1e-2,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            target_return: TargetReturn::DatasetMax,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        self.policy.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(PlannerError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(PlannerError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// A window of consecutive steps from one trajectory. Loss is taken on the
/// steps from `counted_from` on; earlier steps only provide context.
#[derive(Clone, Debug)]
pub struct Example {
    pub task: usize,
    pub steps: Vec<StepInput>,
    /// Index of the taken action in its head's output space.
    pub targets: Vec<usize>,
    pub masks: Vec<Vec<bool>>,
    pub counted_from: usize,
}

impl Example {
    pub fn counted(&self) -> usize {
        self.steps.len() - self.counted_from
    }
}

/// Trajectories turned into policy inputs.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub tasks: Vec<TaskSpec>,
    pub contexts: Vec<TaskContext>,
    pub examples: Vec<Example>,
    pub max_return: f64,
    pub task_returns: BTreeMap<String, f64>,
}

/// Mean and standard deviation of every return-to-go in the dataset.
pub fn return_stats(dataset: &PlanDataset) -> (f64, f64) {
    let rs: Vec<f64> = dataset.trajectories.iter().flat_map(|t| t.returns.iter().copied()).collect();
    if rs.is_empty() {
        return (0.0, 1.0);
    }
    let mean = rs.iter().sum::<f64>() / rs.len() as f64;
    let var = rs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / rs.len() as f64;
    (mean, var.sqrt().max(1e-6))
}

/// Policy settings adapted to a dataset: plan length budget and return
/// standardization.
pub fn policy_config_for(dataset: &PlanDataset, base: &PolicyConfig) -> PolicyConfig {
    let (return_shift, return_scale) = return_stats(dataset);
    PolicyConfig { max_tools: dataset.header.max_tools, return_shift, return_scale, ..base.clone() }
}

fn parse_mask(s: &str) -> Vec<bool> {
    s.bytes().map(|b| b == b'1').collect()
}

impl TrainingSet {
    pub fn build(dataset: &PlanDataset, universe: &ToolUniverse, cfg: &PolicyConfig) -> Result<Self, PlannerError> {
        let digest = universe.digest();
        if dataset.header.universe_digest != digest {
            return Err(PlannerError::DigestMismatch { expected: digest, found: dataset.header.universe_digest.clone() });
        }
        if dataset.trajectories.is_empty() {
            return Err(PlannerError::EmptyDataset);
        }
        let featurizer = Featurizer::new(universe, cfg.max_tools);
        let attrs = universe.all_cost_attributes()?;
        let bounds = dataset.header.bounds;
        let tasks = dataset.header.tasks.clone();
        let contexts =
            tasks.iter().map(|t| featurizer.task_context(universe, &attrs, t)).collect::<Result<Vec<_>, _>>()?;
        let index: BTreeMap<&str, usize> = tasks.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
        let n = universe.n_tools();
        let w = cfg.window;

        let mut examples = Vec::new();
        let mut task_returns: BTreeMap<String, f64> = BTreeMap::new();
        for (ti, traj) in dataset.trajectories.iter().enumerate() {
            let &task_idx = index.get(traj.task_id.as_str()).ok_or_else(|| PlannerError::UnknownTask(traj.task_id.clone()))?;
            let task = &tasks[task_idx];
            let ctx = &contexts[task_idx];
            if let Some(&r) = traj.returns.first() {
                let e = task_returns.entry(traj.task_id.clone()).or_insert(f64::NEG_INFINITY);
                *e = e.max(r);
            }
            let mut b = PlanBuilder::new(n);
            let mut steps = Vec::with_capacity(traj.actions.len());
            let mut targets = Vec::with_capacity(traj.actions.len());
            let mut masks = Vec::with_capacity(traj.actions.len());
            for (i, &tok) in traj.actions.iter().enumerate() {
                let head = b.head().ok_or(PlannerError::ActionOutsideMask { trajectory: ti, step: i })?;
                let mask = parse_mask(&traj.masks[i]);
                let target = head
                    .index_of(tok, n)
                    .filter(|&j| mask.len() == head.width(n) && mask[j])
                    .ok_or(PlannerError::ActionOutsideMask { trajectory: ti, step: i })?;
                let state = featurizer.state_features(universe, task, &b, partial_price(&b, ctx, &bounds));
                steps.push(StepInput { rtg: traj.returns[i], state, action: Some(tok), timestep: i, head });
                targets.push(target);
                masks.push(mask);
                b.apply_action(tok, universe)?;
            }
            for (start, counted_from) in windows(steps.len(), w) {
                let end = (start + w).min(steps.len());
                examples.push(Example {
                    task: task_idx,
                    steps: steps[start..end].to_vec(),
                    targets: targets[start..end].to_vec(),
                    masks: masks[start..end].to_vec(),
                    counted_from: counted_from - start,
                });
            }
        }
        Ok(Self { tasks, contexts, examples, max_return: dataset.max_return(), task_returns })
    }

    pub fn n_steps(&self) -> usize {
        self.examples.iter().map(Example::counted).sum()
    }
}

/// `(start, first counted step)` pairs covering `len` steps with windows of
/// `w` steps. Each step is counted exactly once; later windows overlap
/// earlier ones by up to half a window of context.
fn windows(len: usize, w: usize) -> Vec<(usize, usize)> {
    if len == 0 {
        return Vec::new();
    }
    let mut out = vec![(0, 0)];
    let mut end = len.min(w);
    while end < len {
        let next_end = (end + (w / 2).max(1)).min(len);
        out.push((next_end.saturating_sub(w), end));
        end = next_end;
    }
    out
}

/// Summed cross-entropy of the counted steps of one example, on `tape`.
fn example_loss(policy: &PolicyNet, tape: &mut Tape, ctx: &TaskContext, ex: &Example, masked: bool) -> Result<Var, PlannerError> {
    let out = policy.forward_tape(tape, ctx, &ex.steps)?;
    let mut total: Option<Var> = None;
    for (logits, which) in [out.tool, out.dep].into_iter().flatten() {
        let rows: Vec<usize> = (0..which.len()).filter(|&r| which[r] >= ex.counted_from).collect();
        if rows.is_empty() {
            continue;
        }
        let targets = rows.iter().map(|&r| ex.targets[which[r]]).collect();
        let masks: Vec<Vec<bool>> = rows.iter().map(|&r| ex.masks[which[r]].clone()).collect();
        let picked = tape.rows(logits, rows);
        let l = tape.cross_entropy(picked, targets, masked.then_some(masks.as_slice()));
        total = Some(match total {
            Some(t) => tape.add(t, l),
            None => l,
        });
    }
    total.ok_or_else(|| PlannerError::Shape("example has no counted steps".into()))
}

/// Mean per-step cross-entropy over `examples`, with illegal actions masked
/// out of the softmax when `masked` is set.
pub fn loss(policy: &PolicyNet, set: &TrainingSet, examples: &[Example], masked: bool) -> Result<f64, PlannerError> {
    if examples.is_empty() {
        return Err(PlannerError::EmptyDataset);
    }
    let mut sum = 0.0;
    let mut count = 0;
    for ex in examples {
        let mut tape = Tape::new();
        let l = example_loss(policy, &mut tape, &set.contexts[ex.task], ex, masked)?;
        sum += tape.value(l).data[0];
        count += ex.counted();
    }
    Ok(sum / count as f64)
}

/// Mean loss over `examples` and its gradient for every parameter.
pub fn loss_and_grad(policy: &PolicyNet, set: &TrainingSet, examples: &[Example]) -> Result<(f64, Vec<Mat>), PlannerError> {
    let count: usize = examples.iter().map(Example::counted).sum();
    if count == 0 {
        return Err(PlannerError::EmptyDataset);
    }
    let mut grads: Vec<Mat> = policy.params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
    let mut sum = 0.0;
    for ex in examples {
        let mut tape = Tape::new();
        let l = example_loss(policy, &mut tape, &set.contexts[ex.task], ex, true)?;
        sum += tape.value(l).data[0];
        for (id, g) in tape.backward(l, 1.0 / count as f64) {
            grads[id].add_assign(&g);
        }
    }
    Ok((sum / count as f64, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the whole set before the first update.
    pub initial_loss: f64,
    /// Mean loss of each epoch, accumulated while training.
    pub epoch_losses: Vec<f64>,
    /// Mean loss over the whole set after the last update.
    pub final_loss: f64,
}

/// Minibatch SGD with an optional linear learning-rate decay. Example order is reshuffled each epoch from a stream
/// derived from `cfg.seed`.
pub fn train(mut policy: PolicyNet, set: &TrainingSet, cfg: &TrainConfig) -> Result<(PolicyNet, TrainReport), PlannerError> {
    cfg.validate()?;
    if set.examples.is_empty() {
        return Err(PlannerError::EmptyDataset);
    }
    let initial_loss = loss(&policy, set, &set.examples, true)?;
    let mut rng = seed::stream(cfg.seed, "train");
    let mut order: Vec<usize> = (0..set.examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let total_updates = cfg.epochs * set.examples.len().div_ceil(cfg.batch_size);
    let mut update = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Example> = chunk.iter().map(|&i| set.examples[i].clone()).collect();
            let (l, grads) = loss_and_grad(&policy, set, &batch)?;
            if !l.is_finite() {
                return Err(PlannerError::NonFinite(format!("loss {l} at epoch {epoch}, batch {b}")));
            }
            let n: usize = batch.iter().map(Example::counted).sum();
            sum += l * n as f64;
            count += n;
            let lr = match cfg.lr_schedule {
                LrSchedule::Constant => cfg.learning_rate,
                LrSchedule::Linear => cfg.learning_rate * (1.0 - update as f64 / total_updates as f64),
            };
            update += 1;
            for (p, g) in policy.params.iter_mut().zip(&grads) {
                for (x, d) in p.data.iter_mut().zip(&g.data) {
                    *x -= lr * d;
                }
            }
            if !policy.is_finite() {
                return Err(PlannerError::NonFinite(format!("parameters diverged at epoch {epoch}, batch {b}")));
            }
        }
        epoch_losses.push(sum / count as f64);
    }
    let final_loss = if cfg.epochs == 0 { initial_loss } else { loss(&policy, set, &set.examples, true)? };
    Ok((policy, TrainReport { initial_loss, epoch_losses, final_loss }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(tensor name, flat index, analytic, numeric)` for every sample.
    pub samples: Vec<(String, usize, f64, f64)>,
}

/// Relative errors use `max(|a| + |n|, GRAD_CHECK_FLOOR)` as denominator so
/// that parameters with (near) zero gradient compare absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares analytic gradients of the mean loss on `examples` against
/// central finite differences at `n_samples` randomly chosen parameters.
pub fn grad_check<R: Rng + ?Sized>(
    policy: &PolicyNet,
    set: &TrainingSet,
    examples: &[Example],
    epsilon: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<GradCheck, PlannerError> {
    if !(epsilon > 0.0) {
        return Err(PlannerError::Config("epsilon must be positive".into()));
    }
    let (_, grads) = loss_and_grad(policy, set, examples)?;
    let total = policy.n_parameters();
    let picks = rand::seq::index::sample(rng, total, n_samples.min(total)).into_vec();
    let mut probe = policy.clone();
    let mut samples = Vec::with_capacity(picks.len());
    let mut max_rel: f64 = 0.0;
    for flat in picks {
        let (tensor, idx) = locate(policy, flat);
        let orig = policy.params[tensor].data[idx];
        probe.params[tensor].data[idx] = orig + epsilon;
        let up = loss(&probe, set, examples, true)?;
        probe.params[tensor].data[idx] = orig - epsilon;
        let down = loss(&probe, set, examples, true)?;
        probe.params[tensor].data[idx] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let analytic = grads[tensor].data[idx];
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(GRAD_CHECK_FLOOR);
        max_rel = max_rel.max(rel);
        samples.push((policy.names[tensor].clone(), idx, analytic, numeric));
    }
    Ok(GradCheck { max_rel_error: max_rel, checked: samples.len(), samples })
}

fn locate(policy: &PolicyNet, mut flat: usize) -> (usize, usize) {
    for (i, p) in policy.params.iter().enumerate() {
        if flat < p.data.len() {
            return (i, flat);
        }
        flat -= p.data.len();
    }
    unreachable!("flat index within parameter count")
}
