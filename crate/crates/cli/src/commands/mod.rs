mod datagen;
mod eval;
mod plan;
mod report;
mod train;
mod universe;

use anyhow::Result;

use crate::args::{Cli, Command};

pub use eval::{evaluate_tasks, EvalOptions};
pub use plan::{decoding_config, plan_tasks};
pub use train::{parse_target_return, train_config};

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Universe(cmd) => universe::run(cmd),
        Command::Datagen(a) => datagen::run(a),
        Command::Train(a) => train::run(a),
        Command::Plan(a) => plan::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Report(a) => report::run(a),
    }
}
