//! Acceptance run: every criterion prints one PASS or FAIL line, and the
//! process exits nonzero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod core_common;

use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use catp_cli::commands::{evaluate_tasks, EvalOptions};
use catp_cli::results::{summarize, MEAN_ROW};
use catp_core::cost::{self, plan_exec_time, tier_price, tool_price, CostRecord, PriceTable};
use catp_core::datagen::{self, DatagenConfig, Mode, PlanDataset};
use catp_core::executor::brute_force_optimal;
use catp_core::tpl::{decode_sequence, encode_plan, Edge, PlanDag, PlanSequence, Producer, TplError};
use catp_core::{context, presets, seed, ToolUniverse};
use catp_planner::train::policy_config_for;
use catp_planner::{
    generate_plan, init_policy, train, Decoding, InferenceConfig, PlanningContext, PlanningMeta, PolicyConfig,
    LrSchedule, PolicyNet, TargetReturn, TrainConfig, TrainingSet,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// Default memory tiers and rates, written out independently of the library.
const CEILINGS: [f64; 13] =
    [128.0, 512.0, 1024.0, 1536.0, 2048.0, 3072.0, 4096.0, 5120.0, 6144.0, 7168.0, 8192.0, 9216.0, 10240.0];
const CPU_CONS: [f64; 13] =
    [2.1e-9, 8.3e-9, 1.67e-8, 2.5e-8, 3.33e-8, 5e-8, 6.67e-8, 8.83e-8, 1e-7, 1.167e-7, 1.333e-7, 1.5e-7, 1.667e-7];
const GPU_CONS: [f64; 13] = [
    6.3e-9, 2.49e-8, 5.01e-8, 7.5e-8, 9.99e-8, 1.5e-7, 2.001e-7, 2.499e-7, 3e-7, 3.501e-7, 3.999e-7, 4.5e-7, 5.001e-7,
];

fn pricing() -> Outcome {
    let table = PriceTable::default();
    let rec = CostRecord { time_ms: 1000.0, cpu_cons_mb: 1024.0, cpu_inst_mb: 512.0, gpu_cons_mb: 0.0, gpu_inst_mb: 0.0 };
    let expected = 2e-7 + 1000.0 * (1024.0 * 1.67e-8 + 512.0 * 3.02e-14);
    let got = tool_price(&rec, &table).map_err(|e| e.to_string())?;
    check(rel_eq(got, expected, 1e-12), || format!("hand case priced {got:e}, expected {expected:e}"))?;

    let mut boundaries = 0;
    for (tiers, prices) in [(&table.cpu_cons_tiers, &CPU_CONS), (&table.gpu_cons_tiers, &GPU_CONS)] {
        check(tiers.len() == 13, || format!("{} tiers", tiers.len()))?;
        for (i, t) in tiers.iter().enumerate() {
            check(t.mem_ceiling_mb == CEILINGS[i] && t.price == prices[i], || format!("tier {i} is {t:?}"))?;
            let at = tier_price(tiers, CEILINGS[i]).map_err(|e| e.to_string())?;
            check(at == prices[i], || format!("price at the {} MB ceiling is {at:e}", CEILINGS[i]))?;
            if i + 1 < tiers.len() {
                let above = tier_price(tiers, CEILINGS[i] + 1e-9).map_err(|e| e.to_string())?;
                check(above == prices[i + 1] && above > at, || format!("no increase past {} MB", CEILINGS[i]))?;
            } else {
                check(tier_price(tiers, CEILINGS[i] + 1.0).is_err(), || "memory past the last tier was priced".into())?;
            }
            boundaries += 1;
        }
    }
    Ok(format!("hand case {got:.12e} USD; {boundaries} tier boundaries monotone"))
}

fn exec_time() -> Outcome {
    let e = |producer, consumer| Edge { producer, consumer, port: 0 };
    let chain = PlanDag {
        nodes: vec![0, 1, 2],
        edges: vec![e(Producer::Task, 0), e(Producer::Node(0), 1), e(Producer::Node(1), 2)],
    };
    let seq = plan_exec_time(&chain, &[0.18, 3.46, 0.13]).map_err(|e| e.to_string())?;
    let fork = PlanDag {
        nodes: vec![0, 1, 2, 3],
        edges: vec![e(Producer::Task, 0), e(Producer::Node(0), 1), e(Producer::Node(1), 2), e(Producer::Node(0), 3)],
    };
    let par = plan_exec_time(&fork, &[0.18, 0.29, 0.16, 0.09]).map_err(|e| e.to_string())?;
    check((seq - 3.77).abs() <= 1e-12, || format!("sequential example took {seq} s"))?;
    check((par - 0.63).abs() <= 1e-12, || format!("parallel example took {par} s"))?;
    Ok(format!("sequential {seq:.2} s, parallel {par:.2} s"))
}

fn tpl_round_trip() -> Outcome {
    let u = core_common::mixed_universe();
    let mut rng = seed::rng(2024);
    let (mut checked, mut inexpressible) = (0, 0);
    while checked < 1000 {
        let dag = core_common::random_dag(&u, 6, &mut rng);
        let seq = match encode_plan(&dag) {
            Ok(s) => s,
            Err(TplError::Unrepresentable) => {
                inexpressible += 1;
                continue;
            }
            Err(e) => return Err(e.to_string()),
        };
        let back = decode_sequence(&seq, &u).map_err(|e| e.to_string())?;
        check(core_common::isomorphic(&dag, &back), || format!("decoded graph differs for {}", seq.render(&u)))?;
        check(encode_plan(&back).ok().as_ref() == Some(&seq), || format!("re-encoding changed {}", seq.render(&u)))?;
        let parsed = PlanSequence::parse(&seq.render(&u), &u).map_err(|e| e.to_string())?;
        check(parsed == seq, || format!("text form does not parse back: {}", seq.render(&u)))?;
        checked += 1;
    }
    Ok(format!(
        "{checked} DAGs of up to 6 tools round trip; {inexpressible} drawn DAGs skipped because a dependency names an older instance of a repeated tool"
    ))
}

fn desk5_data(max_tools: usize) -> (ToolUniverse, PlanDataset) {
    let u = presets::desk5();
    let ds = datagen::run(&u, &DatagenConfig::new(Mode::Sequential, 20, max_tools, 7)).expect("desk5 dataset");
    (u, ds)
}

fn meta_for(ds: &PlanDataset, set: &TrainingSet, target_return: TargetReturn) -> PlanningMeta {
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

fn untrained(u: &ToolUniverse, ds: &PlanDataset) -> (PolicyNet, PlanningContext) {
    let base = PolicyConfig { d_model: 8, n_layers: 1, n_heads: 2, window: 6, max_timestep: 32, ..PolicyConfig::default() };
    let pc = policy_config_for(ds, &base);
    let set = TrainingSet::build(ds, u, &pc).expect("training set");
    let policy = init_policy(u, &pc, &mut seed::rng(41)).expect("policy");
    let ctx = PlanningContext::new(u, meta_for(ds, &set, TargetReturn::DatasetMax), &policy).expect("context");
    (policy, ctx)
}

fn validity() -> Outcome {
    let (u, ds) = desk5_data(3);
    let (policy, ctx) = untrained(&u, &ds);
    let tasks = &ds.header.tasks;
    let sampled = InferenceConfig { decoding: Decoding::Sampled { temperature: 1.0 }, ..InferenceConfig::default() };
    let mut valid = 0;
    for i in 0..10_000 {
        let g = generate_plan(&policy, &ctx, &tasks[i % tasks.len()], &sampled, &mut seed::stream(1, &format!("masked/{i}")))
            .map_err(|e| e.to_string())?;
        valid += usize::from(g.valid);
    }
    check(valid == 10_000, || format!("{valid}/10000 masked plans valid"))?;

    let unmasked = InferenceConfig { masking: false, ..sampled };
    let mut unmasked_valid = 0;
    let n = 2_000;
    for i in 0..n {
        let g = generate_plan(&policy, &ctx, &tasks[i % tasks.len()], &unmasked, &mut seed::stream(2, &format!("unmasked/{i}")))
            .map_err(|e| e.to_string())?;
        unmasked_valid += usize::from(g.valid);
    }
    let frac = unmasked_valid as f64 / n as f64;
    check(frac < 1.0, || "every unmasked plan was valid".into())?;
    Ok(format!("masked 10000/10000 valid; unmasked untrained {:.1}% valid", 100.0 * frac))
}

fn reward_identity() -> Outcome {
    let (u, ds) = desk5_data(3);
    let (policy, ctx) = untrained(&u, &ds);
    let cfg = InferenceConfig { decoding: Decoding::Sampled { temperature: 1.0 }, ..InferenceConfig::default() };
    let alpha = ctx.meta.alpha;
    let mut worst: f64 = 0.0;
    let n = 2_000;
    for i in 0..n {
        let task = &ds.header.tasks[i % ds.header.tasks.len()];
        let g = generate_plan(&policy, &ctx, task, &cfg, &mut seed::stream(3, &format!("reward/{i}"))).map_err(|e| e.to_string())?;
        let r = g.report.ok_or("masked plan without a report")?;
        check(g.rewards.len() == g.price_norms.len(), || "one price per reward".into())?;
        let sum: f64 = g.rewards.iter().sum();
        let identity = alpha * r.perf_norm - (1.0 - alpha) * g.price_norms.iter().sum::<f64>();
        let last = *g.rewards.last().ok_or("empty trajectory")?;
        let terminal = cost::step_reward(r.price_norm, Some(r.perf_norm), true, alpha).map_err(|e| e.to_string())?;
        let final_price = *g.price_norms.last().expect("nonempty");
        worst = worst.max((sum - identity).abs()).max((last - r.qop).abs()).max((last - terminal).abs()).max((final_price - r.price_norm).abs());
    }
    check(worst <= 1e-12, || format!("largest deviation {worst:e}"))?;
    Ok(format!("{n} trajectories, largest deviation {worst:.1e}"))
}

fn gradients() -> Outcome {
    let (u, ds) = desk5_data(3);
    let base = PolicyConfig { d_model: 8, n_layers: 1, n_heads: 2, window: 6, max_timestep: 32, ..PolicyConfig::default() };
    let pc = policy_config_for(&ds, &base);
    let set = TrainingSet::build(&ds, &u, &pc).map_err(|e| e.to_string())?;
    let policy = init_policy(&u, &pc, &mut seed::rng(11)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let g = catp_planner::grad_check(&policy, &set, &set.examples[..8], 1e-4, 150, &mut seed::rng(5)).map_err(|e| e.to_string())?;
    check(g.checked >= 100, || format!("only {} parameters checked", g.checked))?;
    check(g.max_rel_error < 1e-3, || format!("max relative error {:e}", g.max_rel_error))?;
    check(start.elapsed() < Duration::from_secs(60), || format!("took {:?}", start.elapsed()))?;
    Ok(format!("{} parameters, max relative error {:.2e}, {:.1?}", g.checked, g.max_rel_error, start.elapsed()))
}

fn learning() -> Outcome {
    let start = Instant::now();
    let (u, ds) = desk5_data(3);
    let cfg = TrainConfig {
        policy: PolicyConfig { d_model: 32, n_layers: 2, n_heads: 4, ..PolicyConfig::default() },
        learning_rate: 0.1,
        epochs: 30,
        batch_size: 1,
        seed: 7,
        lr_schedule: LrSchedule::Linear,
        ..TrainConfig::default()
    };
    let pc = policy_config_for(&ds, &cfg.policy);
    let set = TrainingSet::build(&ds, &u, &pc).map_err(|e| e.to_string())?;
    let policy = init_policy(&u, &pc, &mut seed::stream(cfg.seed, "init")).map_err(|e| e.to_string())?;
    let (policy, report) = train(policy, &set, &TrainConfig { policy: pc, ..cfg.clone() }).map_err(|e| e.to_string())?;
    let ctx = PlanningContext::new(&u, meta_for(&ds, &set, cfg.target_return), &policy).map_err(|e| e.to_string())?;
    let opts = EvalOptions { inference: InferenceConfig::default(), alphas: Vec::new(), oracle: true, seed: 0, jobs: 1 };
    let rows = evaluate_tasks(&policy, &ctx, &ds.header.tasks, &opts).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let s = &summarize(&rows)[0];
    let ratio = s.qop_ratio.ok_or("no oracle column")?;
    check(rows.iter().filter(|r| r.task_id != MEAN_ROW).count() == 20, || "expected 20 tasks".into())?;
    check(ratio >= 0.9, || format!("policy/oracle QoP ratio {ratio:.3}"))?;
    check(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} plans, loss {:.3} -> {:.3}; mean QoP {:.4} vs oracle {:.4}, ratio {ratio:.3}; {elapsed:.1?}",
        ds.trajectories.len(),
        report.initial_loss,
        report.final_loss,
        s.qop,
        s.oracle_qop.unwrap_or(f64::NAN)
    ))
}

fn alpha_tradeoff() -> Outcome {
    let alphas = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut tasks_checked = 0;
    for (universe, cfg) in [
        (presets::desk5(), DatagenConfig::new(Mode::Sequential, 20, 3, 7)),
        (presets::desk5(), DatagenConfig::new(Mode::Sequential, 20, 4, 8)),
        (presets::desk5(), DatagenConfig::new(Mode::Nonsequential, 10, 4, 9)),
    ] {
        let ds = datagen::run(&universe, &cfg).map_err(|e| e.to_string())?;
        let u = universe.without_noise();
        for task in &ds.header.tasks {
            let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &a in &alphas {
                let (_, r) = brute_force_optimal(task, &u, cfg.max_tools, a, &ds.header.bounds).map_err(|e| e.to_string())?;
                check(r.raw_performance >= prev.0 && r.raw_price_usd >= prev.1, || {
                    format!("task {} at alpha {a}: score {} price {} after {prev:?}", task.id, r.raw_performance, r.raw_price_usd)
                })?;
                prev = (r.raw_performance, r.raw_price_usd);
            }
            tasks_checked += 1;
        }
    }
    Ok(format!("{tasks_checked} tasks, optimal score and price non-decreasing over alpha {alphas:?}"))
}

fn importance() -> Outcome {
    let v = context::importance_vector(2, 4).map_err(|e| e.to_string())?;
    // cos(pi/8) by the half-angle formula, cos(pi/4) = sqrt(2)/2.
    let c8 = (2.0 + 2f64.sqrt()).sqrt() / 2.0;
    let expected = [c8, 1.0, c8, 2f64.sqrt() / 2.0];
    for (i, (a, b)) in v.iter().zip(&expected).enumerate() {
        check((a - b).abs() <= 1e-12, || format!("v[{i}] = {a}, expected {b}"))?;
    }
    for l in 1..=4 {
        let v = context::importance_vector(l, 4).map_err(|e| e.to_string())?;
        check(v[l - 1] == 1.0, || format!("v at its own level {l} is {}", v[l - 1]))?;
        for i in 1..=4usize {
            for j in 1..=4usize {
                if i.abs_diff(l) < j.abs_diff(l) {
                    check(v[i - 1] > v[j - 1], || format!("level {l}: v[{i}] <= v[{j}]"))?;
                }
            }
        }
    }
    let direct: Vec<f64> = (1..=4).map(|i| (PI * (i as f64 - 2.0) / 8.0).cos()).collect();
    Ok(format!("k = 4, l = 2: {:?}", direct.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>()))
}

fn dataset_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_catp"))
            .args(args)
            .current_dir(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        check(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())
    };
    let mut counts = Vec::new();
    for (preset, target) in [("seq", 1200.0), ("nonseq", 780.0)] {
        let a = format!("{preset}-a.jsonl");
        let b = format!("{preset}-b.jsonl");
        run(&["datagen", "-u", "opencatp10", "--preset", preset, "--seed", "11", "-o", &a])?;
        run(&["datagen", "-u", "opencatp10", "--preset", preset, "--seed", "11", "--jobs", "4", "-o", &b])?;
        let bytes_a = fs::read(dir.path().join(&a)).map_err(|e| e.to_string())?;
        let bytes_b = fs::read(dir.path().join(&b)).map_err(|e| e.to_string())?;
        check(bytes_a == bytes_b, || format!("{preset} preset differs between runs"))?;
        let n = PlanDataset::load(dir.path().join(&a)).map_err(|e| e.to_string())?.trajectories.len();
        check((n as f64 - target).abs() <= 0.1 * target, || format!("{preset} preset produced {n} plans"))?;
        counts.push(format!("{preset} {n}"));
    }
    Ok(format!("identical bytes per seed; plan counts {}", counts.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("pricing arithmetic", pricing),
        ("execution-time examples", exec_time),
        ("plan language round trip", tpl_round_trip),
        ("validity guarantee", validity),
        ("reward identity", reward_identity),
        ("gradient correctness", gradients),
        ("learning efficacy", learning),
        ("alpha trade-off", alpha_tradeoff),
        ("importance vector", importance),
        ("dataset determinism", dataset_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
