use anyhow::{Context, Result};
use catp_core::{seed, TaskSpec, ToolUniverse};
use catp_planner::{generate_plan, Checkpoint, Decoding, Generated, InferenceConfig, PlanningContext, PolicyNet};
use serde_json::json;

use crate::args::{DecodeArgs, PlanArgs};
use crate::exit::Invalid;
use crate::inputs;

pub fn decoding_config(d: &DecodeArgs) -> Result<InferenceConfig> {
    let decoding = match d.temperature {
        None => Decoding::Greedy,
        Some(t) if t.is_finite() && t > 0.0 => Decoding::Sampled { temperature: t },
        Some(t) => return Err(Invalid(format!("temperature must be positive, got {t}")).into()),
    };
    if d.max_tokens == 0 {
        return Err(Invalid("max-tokens must be at least 1".into()).into());
    }
    Ok(InferenceConfig {
        target_return: d.target_return,
        max_tokens: d.max_tokens,
        decoding,
        masking: !d.no_mask,
        max_tools: None,
    })
}

/// Loads a checkpoint and prepares it for planning over `u`.
pub fn load_policy(u: &ToolUniverse, path: &std::path::Path) -> Result<(PolicyNet, PlanningContext)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let policy = ckpt.policy(u)?;
    let ctx = PlanningContext::new(u, ckpt.meta, &policy)?;
    Ok((policy, ctx))
}

/// Plans every task, task `i` drawing from its own seeded stream.
pub fn plan_tasks(
    policy: &PolicyNet,
    ctx: &PlanningContext,
    tasks: &[TaskSpec],
    cfg: &InferenceConfig,
    root_seed: u64,
) -> Result<Vec<Generated>> {
    tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = seed::stream(root_seed, &format!("plan/{i}"));
            generate_plan(policy, ctx, t, cfg, &mut rng).with_context(|| format!("planning task {}", t.id))
        })
        .collect()
}

pub fn run(a: PlanArgs) -> Result<()> {
    let u = inputs::universe(&a.universe.universe)?;
    let (policy, ctx) = load_policy(&u, &a.ckpt)?;
    let tasks = inputs::tasks(&a.task)?;
    let cfg = decoding_config(&a.decode)?;
    for (task, g) in tasks.iter().zip(plan_tasks(&policy, &ctx, &tasks, &cfg, a.decode.seed)?) {
        let line = json!({
            "task_id": task.id,
            "plan": g.sequence.render(&ctx.universe),
            "valid": g.valid,
            "n_tools": g.sequence.n_tools(),
            "report": g.report,
            "diagnostics": g.diagnostics,
        });
        println!("{line}");
    }
    Ok(())
}
