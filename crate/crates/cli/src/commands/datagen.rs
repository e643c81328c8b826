use anyhow::Result;
use catp_core::cost::check_alpha;
use catp_core::datagen::{self, DatagenConfig, Mode};

use crate::args::{DatagenArgs, ModeArg};
use crate::inputs;

fn mode(m: ModeArg) -> Mode {
    match m {
        ModeArg::Seq => Mode::Sequential,
        ModeArg::Nonseq => Mode::Nonsequential,
    }
}

pub fn config(a: &DatagenArgs) -> Result<DatagenConfig> {
    let mut cfg = match a.preset {
        Some(ModeArg::Seq) => DatagenConfig::seq_preset(a.seed),
        Some(ModeArg::Nonseq) => DatagenConfig::nonseq_preset(a.seed),
        None => DatagenConfig::new(mode(a.mode), a.tasks, 4, a.seed),
    };
    if let Some(m) = a.max_tools {
        cfg.max_tools = m;
    }
    if a.target_plans.is_some() {
        cfg.target_plans = a.target_plans;
    }
    if a.per_task_cap.is_some() {
        cfg.per_task_cap = a.per_task_cap;
    }
    if let Some(alpha) = a.alpha {
        check_alpha(alpha)?;
        cfg.alpha = alpha;
    }
    cfg.jobs = a.jobs.max(1);
    Ok(cfg)
}

pub fn run(a: DatagenArgs) -> Result<()> {
    let u = inputs::universe(&a.universe.universe)?;
    let cfg = config(&a)?;
    let ds = datagen::run(&u, &cfg)?;
    inputs::write(&a.out, &ds.to_jsonl())?;
    eprintln!(
        "wrote {}: {} plans over {} tasks ({} mode, max {} tools, k = {})",
        a.out.display(),
        ds.trajectories.len(),
        ds.header.tasks.len(),
        ds.header.mode,
        ds.header.max_tools,
        ds.header.size_levels.k
    );
    Ok(())
}
