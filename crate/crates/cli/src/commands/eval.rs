use anyhow::{Context, Result};
use catp_core::cost::check_alpha;
use catp_core::executor::{brute_force_optimal, evaluate};
use catp_core::tpl::decode_sequence;
use catp_core::{seed, TaskSpec};
use catp_planner::{generate_plan, InferenceConfig, PlanningContext, PolicyNet};
use rayon::prelude::*;

use crate::args::EvalArgs;
use crate::commands::plan::{decoding_config, load_policy};
use crate::exit::Invalid;
use crate::inputs;
use crate::results::{self, EvalRow};

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub inference: InferenceConfig,
    /// Trade-off weights to score under; empty means the checkpoint's.
    pub alphas: Vec<f64>,
    pub oracle: bool,
    pub seed: u64,
    pub jobs: usize,
}

/// Plans each task once and scores the plan under every alpha.
///
/// Rows come out grouped by alpha, tasks in input order, followed by one
/// mean row per alpha. Scoring uses noise-free tool profiles.
pub fn evaluate_tasks(policy: &PolicyNet, ctx: &PlanningContext, tasks: &[TaskSpec], opts: &EvalOptions) -> Result<Vec<EvalRow>> {
    let alphas = if opts.alphas.is_empty() { vec![ctx.meta.alpha] } else { opts.alphas.clone() };
    for &a in &alphas {
        check_alpha(a)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .context("starting worker threads")?;
    let per_task: Vec<Vec<EvalRow>> = pool.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| score_task(policy, ctx, task, i, &alphas, opts))
            .collect::<Result<_>>()
    })?;

    let mut rows = Vec::with_capacity(alphas.len() * (tasks.len() + 1));
    for (j, _) in alphas.iter().enumerate() {
        rows.extend(per_task.iter().map(|r| r[j].clone()));
    }
    let means: Vec<EvalRow> = results::summarize(&rows).iter().map(|s| s.to_row()).collect();
    rows.extend(means);
    Ok(rows)
}

fn score_task(
    policy: &PolicyNet,
    ctx: &PlanningContext,
    task: &TaskSpec,
    i: usize,
    alphas: &[f64],
    opts: &EvalOptions,
) -> Result<Vec<EvalRow>> {
    let u = &ctx.universe;
    let bounds = &ctx.meta.bounds;
    let mut rng = seed::stream(opts.seed, &format!("eval/{i}"));
    let g = generate_plan(policy, ctx, task, &opts.inference, &mut rng).with_context(|| format!("planning task {}", task.id))?;
    let prepared = ctx.prepare(task)?;
    let dag = if g.valid { Some(decode_sequence(&g.sequence, u)?) } else { None };
    alphas
        .iter()
        .map(|&alpha| {
            let report = match &dag {
                Some(d) => Some(evaluate(d, &prepared, u, alpha, bounds, &mut rng)?),
                None => None,
            };
            let oracle_qop = if opts.oracle {
                Some(brute_force_optimal(&prepared, u, ctx.meta.max_tools, alpha, bounds)?.1.qop)
            } else {
                None
            };
            let qop = report.map(|r| r.qop);
            Ok(EvalRow {
                task_id: task.id.clone(),
                qop,
                task_score: report.map(|r| r.raw_performance),
                price_usd: report.map(|r| r.raw_price_usd),
                exec_time_s: report.map(|r| r.exec_time_s),
                n_tools: g.sequence.n_tools() as f64,
                valid: g.valid,
                alpha,
                oracle_qop,
                qop_ratio: oracle_qop.map(|o| qop.unwrap_or(0.0) / o),
            })
        })
        .collect()
}

pub fn run(a: EvalArgs) -> Result<()> {
    let u = inputs::universe(&a.universe.universe)?;
    let (policy, ctx) = load_policy(&u, &a.ckpt)?;
    let tasks = match (&a.data, &a.tasks) {
        (Some(d), _) => inputs::dataset(d)?.header.tasks,
        (None, Some(t)) => inputs::tasks(t)?,
        (None, None) => return Err(Invalid("pass --data or --tasks".into()).into()),
    };
    let opts = EvalOptions {
        inference: decoding_config(&a.decode)?,
        alphas: a.alpha.clone(),
        oracle: a.oracle,
        seed: a.decode.seed,
        jobs: a.jobs,
    };
    let rows = evaluate_tasks(&policy, &ctx, &tasks, &opts)?;
    let mut buf = Vec::new();
    results::write_csv(&rows, &mut buf)?;
    inputs::write(&a.out, &String::from_utf8(buf).expect("csv output is utf-8"))?;
    print!("{}", results::markdown(&results::summarize(&rows)));
    eprintln!("wrote {}", a.out.display());
    Ok(())
}
