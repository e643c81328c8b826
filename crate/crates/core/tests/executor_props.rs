mod common;

use catp_core::cost::{plan_exec_time, plan_price, qop, tool_price};
use catp_core::datagen::{generate_tasks, Mode};
use catp_core::executor::{brute_force_optimal, evaluate, execute_plan, oracle_candidates, score_plan};
use catp_core::tpl::{decode_sequence, encode_plan, random_valid_plan, PlanDag, Producer};
use catp_core::{presets, seed, NormBounds, PriceTable, ToolUniverse};
use common::*;
use proptest::prelude::*;

fn chain_dag(u: &ToolUniverse, ids: &[&str]) -> PlanDag {
    let nodes = ids.iter().map(|id| u.tool_index(id).unwrap()).collect();
    let deps: Vec<Vec<Producer>> =
        (0..ids.len()).map(|i| vec![if i == 0 { Producer::Task } else { Producer::Node(i - 1) }]).collect();
    PlanDag::from_deps(nodes, &deps)
}

#[test]
fn simulated_wall_time_matches_the_critical_path() {
    let u = mixed_universe();
    let t = task(&["image", "text"], &[("text", &["caption"])]);
    let mut rng = seed::rng(31);
    for _ in 0..500 {
        let dag = random_dag(&u, 6, &mut rng);
        let trace = execute_plan(&dag, &t, &u, &mut rng).unwrap();
        let expected = plan_exec_time(&dag, &trace.times_s).unwrap();
        assert!((trace.wall_time_s - expected).abs() < 1e-12, "{} vs {expected}", trace.wall_time_s);
        assert_eq!(trace.price_usd, plan_price(&trace.prices));
        for (v, ds) in dag.edges.iter().map(|e| (e.consumer, e.producer)) {
            if let Producer::Node(p) = ds {
                assert!(trace.start_s[v] >= trace.finish_s[p]);
            }
        }
    }
}

#[test]
fn noisy_universe_wall_time_matches_the_critical_path() {
    let u = presets::opencatp10();
    let tasks = generate_tasks(&u, 40, Mode::Nonsequential, &mut seed::rng(5)).unwrap();
    let mut rng = seed::rng(6);
    for t in &tasks {
        let dag = decode_sequence(&random_valid_plan(&u, t, 6, &mut rng).unwrap(), &u).unwrap();
        let trace = execute_plan(&dag, t, &u, &mut rng).unwrap();
        assert!((trace.wall_time_s - plan_exec_time(&dag, &trace.times_s).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn fork_runs_two_branches_in_parallel() {
    let u = mixed_universe();
    let idx = |id| u.tool_index(id).unwrap();
    let dag = PlanDag::from_deps(
        vec![idx("deblur"), idx("caption"), idx("denoise")],
        &[vec![Producer::Task], vec![Producer::Node(0)], vec![Producer::Node(0)]],
    );
    let t = task(&["image"], &[("text", &["deblur", "caption"]), ("image", &["deblur", "denoise"])]);
    let trace = execute_plan(&dag, &t, &u, &mut seed::rng(0)).unwrap();
    assert_eq!(trace.schedule, vec![vec![0], vec![1, 2]]);
    assert!((trace.wall_time_s - (0.2 + 0.12_f64.max(0.09))).abs() < 1e-12);
    assert_eq!(score_plan(&trace, &t).performance, (0.9 * 0.9 + 0.9 * 0.8) / 2.0);
}

#[test]
fn two_tool_plan_matches_hand_composition() {
    let u = presets::desk5().without_noise();
    let mut t = task(&["image"], &[("text", &["deblur", "caption"])]);
    t.size_level = 3;
    let dag = chain_dag(&u, &["deblur_fast", "caption_small"]);
    let bounds = NormBounds::new(0.1, 0.9, 0.0, 1e-5).unwrap();
    let alpha = 0.7;
    let report = evaluate(&dag, &t, &u, alpha, &bounds, &mut seed::rng(0)).unwrap();

    let table = PriceTable::default();
    let price: f64 = ["deblur_fast", "caption_small"]
        .iter()
        .map(|id| tool_price(&u.tool(u.tool_index(id).unwrap()).nominal_record(3), &table).unwrap())
        .sum();
    let perf = 0.74 * 0.78;
    let p_hat = (perf - 0.1) / 0.8;
    let c_hat = (price / 1e-5).min(1.0);
    assert!((report.raw_price_usd - price).abs() < 1e-18);
    assert!((report.raw_performance - perf).abs() < 1e-12);
    assert!((report.qop - (alpha * p_hat - (1.0 - alpha) * c_hat)).abs() < 1e-12);
    assert!((report.exec_time_s - (0.075 + 0.060)).abs() < 1e-12);
}

#[test]
fn oracle_beats_every_sampled_plan() {
    let u = presets::desk5();
    let tasks = generate_tasks(&u, 4, Mode::Nonsequential, &mut seed::rng(8)).unwrap();
    let quiet = u.without_noise();
    let bounds = NormBounds::new(0.0, 1.0, 0.0, 2e-4).unwrap();
    let mut rng = seed::rng(9);
    for t in &tasks {
        let (_, best) = brute_force_optimal(t, &u, 4, 0.5, &bounds).unwrap();
        for _ in 0..2500 {
            let dag = decode_sequence(&random_valid_plan(&u, t, 4, &mut rng).unwrap(), &u).unwrap();
            let r = evaluate(&dag, t, &quiet, 0.5, &bounds, &mut rng).unwrap();
            assert!(r.qop <= best.qop + 1e-15, "{} > {}", r.qop, best.qop);
        }
    }
}

fn two_option_universe() -> ToolUniverse {
    ToolUniverse::new(
        1,
        0,
        vec![catp_core::DataKind::new("image"), catp_core::DataKind::new("text")],
        PriceTable::default(),
        vec![
            tool("cheap_caption", &["image"], &["text"], "caption", 0.5, 20.0),
            tool("strong_caption", &["image"], &["text"], "caption", 1.0, 4000.0),
        ],
    )
    .unwrap()
}

#[test]
fn alpha_selects_between_cheap_and_strong() {
    let u = two_option_universe();
    let t = task(&["image"], &[("text", &["caption"])]);
    let cands = oracle_candidates(&t, &u, 1).unwrap();
    assert_eq!(cands.len(), 2);
    let perfs: Vec<f64> = cands.iter().map(|c| c.performance).collect();
    let prices: Vec<f64> = cands.iter().map(|c| c.price_usd).collect();
    let bounds = NormBounds::from_observations(&perfs, &prices);
    let pick = |alpha| {
        let (dag, _) = brute_force_optimal(&t, &u, 1, alpha, &bounds).unwrap();
        u.tool(dag.nodes[0]).id.clone()
    };
    assert_eq!(pick(0.99), "strong_caption");
    assert_eq!(pick(0.01), "cheap_caption");
}

#[test]
fn oracle_price_and_score_grow_with_alpha() {
    let u = presets::desk5();
    let tasks = generate_tasks(&u, 10, Mode::Nonsequential, &mut seed::rng(12)).unwrap();
    let bounds = NormBounds::new(0.0, 1.0, 0.0, 2e-4).unwrap();
    for t in &tasks {
        let mut last = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for alpha in [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95] {
            let (_, r) = brute_force_optimal(t, &u, 4, alpha, &bounds).unwrap();
            assert!(r.raw_performance >= last.0 && r.raw_price_usd >= last.1, "alpha {alpha}: {r:?}");
            last = (r.raw_performance, r.raw_price_usd);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_ignores_required_output_order(seed_value in any::<u64>(), rotate in 0usize..3) {
        let u = mixed_universe();
        let t = task(&["image", "text"], &[
            ("text", &["deblur", "caption"]),
            ("image", &["denoise"]),
            ("text", &["fuse", "translate"]),
        ]);
        let mut rng = seed::rng(seed_value);
        let dag = random_dag(&u, 6, &mut rng);
        let trace = execute_plan(&dag, &t, &u, &mut rng).unwrap();
        let mut shuffled = t.clone();
        shuffled.required_outputs.rotate_left(rotate);
        shuffled.required_outputs.swap(0, 1);
        let a = score_plan(&trace, &t);
        let b = score_plan(&trace, &shuffled);
        prop_assert!((a.performance - b.performance).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&a.performance));
    }

    #[test]
    fn oracle_choice_survives_increasing_affine_rescaling(
        scale in 1e-3f64..1e3,
        shift in -10.0f64..10.0,
        alpha in 0.05f64..0.95,
        task_seed in 0u64..50,
    ) {
        let u = presets::desk5();
        let t = &generate_tasks(&u, 1, Mode::Sequential, &mut seed::rng(task_seed)).unwrap()[0];
        let bounds = NormBounds::new(0.0, 1.0, 0.0, 2e-4).unwrap();
        let cands = oracle_candidates(t, &u, 3).unwrap();
        let (dag, _) = brute_force_optimal(t, &u, 3, alpha, &bounds).unwrap();
        // Independent argmax over rescaled values with the same tie-breaking.
        let key = |c: &catp_core::executor::Candidate| {
            scale * qop(c.performance, c.price_usd, alpha, &bounds).unwrap().qop + shift
        };
        let best = cands
            .iter()
            .max_by(|a, b| {
                key(a).total_cmp(&key(b)).then((b.dag.len(), &b.canonical).cmp(&(a.dag.len(), &a.canonical)))
            })
            .unwrap();
        prop_assert_eq!(encode_plan(&best.dag).unwrap(), encode_plan(&dag).unwrap());
    }
}
