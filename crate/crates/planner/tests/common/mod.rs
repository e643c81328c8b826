#![allow(dead_code)]

use catp_core::datagen::{self, DatagenConfig, Mode, PlanDataset};
use catp_core::{presets, seed, ToolUniverse};
use catp_planner::train::policy_config_for;
use catp_planner::*;

pub fn desk5_dataset(max_tools: usize) -> (ToolUniverse, PlanDataset) {
    let u = presets::desk5();
    let ds = datagen::run(&u, &DatagenConfig::new(Mode::Sequential, 20, max_tools, 7)).unwrap();
    (u, ds)
}

pub fn tiny() -> PolicyConfig {
    PolicyConfig { d_model: 8, n_layers: 1, n_heads: 2, window: 6, max_timestep: 32, ..PolicyConfig::default() }
}

/// Training set and freshly initialized policy for `cfg` on `ds`.
pub fn setup(u: &ToolUniverse, ds: &PlanDataset, cfg: &PolicyConfig, init_seed: u64) -> (TrainingSet, PolicyNet) {
    let pc = policy_config_for(ds, cfg);
    let set = TrainingSet::build(ds, u, &pc).unwrap();
    let policy = init_policy(u, &pc, &mut seed::rng(init_seed)).unwrap();
    (set, policy)
}

pub fn meta_for(ds: &PlanDataset, set: &TrainingSet, target_return: TargetReturn) -> PlanningMeta {
    PlanningMeta {
        alpha: ds.header.alpha,
        bounds: ds.header.bounds,
        size_levels: ds.header.size_levels.clone(),
        max_tools: ds.header.max_tools,
        max_return: set.max_return,
        task_returns: set.task_returns.clone(),
        target_return,
    }
}
