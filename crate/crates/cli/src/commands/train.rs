use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use catp_core::seed;
use catp_planner::train::policy_config_for;
use catp_planner::{init_policy, train, Checkpoint, LrSchedule, PlanningMeta, TargetReturn, TrainConfig, TrainingSet};

use crate::args::{ScheduleArg, TrainArgs};
use crate::exit::Invalid;
use crate::inputs;

pub fn parse_target_return(s: &str) -> Result<TargetReturn> {
    match s {
        "dataset-max" => Ok(TargetReturn::DatasetMax),
        "task-max" => Ok(TargetReturn::TaskMax),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|r| r.is_finite())
            .map(TargetReturn::Fixed)
            .ok_or_else(|| Invalid(format!("target return must be dataset-max, task-max or a number, got `{other}`")).into()),
    }
}

/// The configuration file (if any) with command-line overrides applied.
pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TrainConfig::default(),
    };
    cfg.seed = a.seed;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr_schedule {
        cfg.lr_schedule = match v {
            ScheduleArg::Constant => LrSchedule::Constant,
            ScheduleArg::Linear => LrSchedule::Linear,
        };
    }
    if let Some(v) = a.d_model {
        cfg.policy.d_model = v;
    }
    if let Some(v) = a.layers {
        cfg.policy.n_layers = v;
    }
    if let Some(v) = a.heads {
        cfg.policy.n_heads = v;
    }
    if let Some(v) = a.window {
        cfg.policy.window = v;
    }
    if let Some(s) = &a.target_return {
        cfg.target_return = parse_target_return(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn metrics_path(a: &TrainArgs) -> PathBuf {
    a.metrics.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".loss.csv");
        p.into()
    })
}

pub fn run(a: TrainArgs) -> Result<()> {
    let u = inputs::universe(&a.universe.universe)?;
    let ds = inputs::dataset(&a.data)?;
    let mut cfg = train_config(&a)?;
    cfg.policy = policy_config_for(&ds, &cfg.policy);
    let set = TrainingSet::build(&ds, &u, &cfg.policy)?;
    let policy = init_policy(&u, &cfg.policy, &mut seed::stream(cfg.seed, "init"))?;
    eprintln!(
        "training {} parameters on {} steps from {} plans, {} epochs",
        policy.n_parameters(),
        set.n_steps(),
        ds.trajectories.len(),
        cfg.epochs
    );
    let (policy, report) = train(policy, &set, &cfg)?;

    let meta = PlanningMeta {
        alpha: ds.header.alpha,
        bounds: ds.header.bounds,
        size_levels: ds.header.size_levels.clone(),
        max_tools: ds.header.max_tools,
        max_return: set.max_return,
        task_returns: set.task_returns.clone(),
        target_return: cfg.target_return,
    };
    let mut csv = String::from("epoch,loss\n");
    csv.push_str(&format!("0,{}\n", report.initial_loss));
    for (i, l) in report.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", i + 1));
    }
    let metrics = metrics_path(&a);
    inputs::write(&metrics, &csv)?;
    inputs::write(&a.out, &Checkpoint::new(&policy, &u, cfg, meta, Some(report.clone())).to_json())?;
    eprintln!(
        "loss {:.4} -> {:.4}; wrote {} and {}",
        report.initial_loss,
        report.final_loss,
        a.out.display(),
        metrics.display()
    );
    Ok(())
}
