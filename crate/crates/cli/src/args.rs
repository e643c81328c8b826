use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "catp", version, about = "Cost-aware tool planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Inspect tool universe files.
    #[command(subcommand)]
    Universe(UniverseCmd),
    /// Generate a plan dataset.
    Datagen(DatagenArgs),
    /// Train a policy on a plan dataset.
    Train(TrainArgs),
    /// Plan one or more tasks with a trained policy.
    Plan(PlanArgs),
    /// Plan a task set and write per-task results as CSV.
    Eval(EvalArgs),
    /// Summarize an evaluation CSV.
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
pub enum UniverseCmd {
    /// Load and validate a universe file.
    Validate {
        path: PathBuf,
    },
    /// Write a built-in universe as canonical JSON.
    Export {
        /// Built-in universe name (desk5, opencatp10).
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct UniverseArg {
    /// Universe JSON file, or a built-in name (desk5, opencatp10).
    #[arg(long, short = 'u')]
    pub universe: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Seq,
    Nonseq,
}

#[derive(Args, Debug)]
pub struct DatagenArgs {
    #[command(flatten)]
    pub universe: UniverseArg,
    /// Size preset: seq (1,200 sequential plans) or nonseq (780 non-sequential plans).
    #[arg(long, value_enum, conflicts_with_all = ["mode", "tasks"])]
    pub preset: Option<ModeArg>,
    #[arg(long, value_enum, default_value = "seq")]
    pub mode: ModeArg,
    /// Number of tasks to generate.
    #[arg(long, default_value_t = 50)]
    pub tasks: usize,
    /// Largest plan size searched (overrides the preset's).
    #[arg(long)]
    pub max_tools: Option<usize>,
    /// Stop after this many plans.
    #[arg(long)]
    pub target_plans: Option<usize>,
    /// Keep at most this many plans per task.
    #[arg(long)]
    pub per_task_cap: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, env = "CATP_SEED")]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, short = 'o')]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleArg {
    Constant,
    Linear,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub universe: UniverseArg,
    /// Dataset written by `datagen`.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON training configuration; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "CATP_SEED")]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub lr_schedule: Option<ScheduleArg>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Context window in timesteps.
    #[arg(long)]
    pub window: Option<usize>,
    /// dataset-max, task-max, or a number.
    #[arg(long)]
    pub target_return: Option<String>,
    /// Checkpoint path.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Per-epoch loss CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DecodeArgs {
    /// Initial return-to-go; defaults to the checkpoint's target-return rule.
    #[arg(long)]
    pub target_return: Option<f64>,
    /// Sample with this temperature instead of greedy decoding.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Disable the validity mask.
    #[arg(long)]
    pub no_mask: bool,
    #[arg(long, default_value_t = 64)]
    pub max_tokens: usize,
    #[arg(long, env = "CATP_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    pub universe: UniverseArg,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Task JSON file: one task object or an array of tasks.
    #[arg(long)]
    pub task: PathBuf,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub universe: UniverseArg,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Dataset whose tasks are evaluated.
    #[arg(long, conflicts_with = "tasks", required_unless_present = "tasks")]
    pub data: Option<PathBuf>,
    /// Task JSON file (one object or an array).
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Also run the brute-force oracle and report the policy/oracle ratio.
    #[arg(long)]
    pub oracle: bool,
    /// Comma-separated trade-off weights; defaults to the checkpoint's.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, short = 'o')]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// CSV written by `eval`.
    pub results: PathBuf,
}
