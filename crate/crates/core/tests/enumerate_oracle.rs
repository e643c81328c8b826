mod common;

use catp_core::enumerate::{enumerate_valid_plans, EnumOptions};
use catp_core::tpl::{encode_plan, validate_sequence, PlanBuilder, PlanDag};
use catp_core::{TaskSpec, Token, ToolUniverse};
use common::*;

/// Every valid plan reachable by appending grammar-legal tokens, without the
/// enumerator's pruning or reduction.
fn naive_plans(u: &ToolUniverse, task: &TaskSpec, max_tools: usize, repeats: bool) -> Vec<PlanDag> {
    fn walk(u: &ToolUniverse, task: &TaskSpec, b: PlanBuilder, max: usize, repeats: bool, out: &mut Vec<PlanDag>) {
        let n = u.n_tools();
        let mut next: Vec<Token> = Vec::new();
        if b.open_node().is_some() {
            next.extend((0..n).map(Token::Dep));
            next.push(Token::TaskDep);
            next.push(Token::EoD);
        } else {
            if b.nodes().len() < max {
                next.extend((0..n).filter(|t| repeats || !b.nodes().contains(t)).map(Token::Tool));
            }
            next.push(Token::EoP);
        }
        for tok in next {
            let mut c = b.clone();
            if c.apply_action(tok, u).is_err() {
                continue;
            }
            if tok == Token::EoP {
                if validate_sequence(&c.sequence(), u, task).is_valid() {
                    out.push(c.dag());
                }
            } else {
                walk(u, task, c, max, repeats, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(u, task, PlanBuilder::new(u.n_tools()), max_tools, repeats, &mut out);
    out
}

fn tasks() -> Vec<TaskSpec> {
    vec![
        task(&["image"], &[("text", &["caption"])]),
        task(&["image"], &[("text", &["deblur", "caption"])]),
        task(&["image"], &[("text", &["caption"]), ("image", &["denoise"])]),
        task(&["image", "text"], &[("text", &["fuse", "translate"])]),
        task(&["image"], &[("image", &["overlay"])]),
    ]
}

#[test]
fn repeat_free_enumeration_matches_the_naive_walk() {
    let u = mixed_universe();
    let mut total = 0;
    for t in tasks() {
        for max in 1..=4 {
            let fast: Vec<Vec<Token>> = enumerate_valid_plans(&u, &t, &EnumOptions::new(max))
                .iter()
                .map(|d| encode_plan(d).unwrap().tokens)
                .collect();
            let mut slow: Vec<Vec<Token>> =
                naive_plans(&u, &t, max, false).iter().map(|d| encode_plan(d).unwrap().tokens).collect();
            slow.sort();
            slow.dedup();
            assert_eq!(fast, slow, "task {:?}, max_tools {max}", t.required_outputs);
            total += fast.len();
        }
    }
    assert!(total > 50, "only {total} plans");
}

#[test]
fn enumeration_with_repeats_covers_every_isomorphism_class() {
    let u = mixed_universe();
    let opts = |max| EnumOptions { max_tools: max, allow_repeats: true, allowed: None };
    for t in tasks() {
        let fast = enumerate_valid_plans(&u, &t, &opts(3));
        let slow = naive_plans(&u, &t, 3, true);
        assert!(!slow.is_empty());
        for d in &slow {
            assert!(fast.iter().any(|f| isomorphic(f, d)), "missing {:?}", encode_plan(d).unwrap());
        }
        for f in &fast {
            assert!(slow.iter().any(|d| isomorphic(f, d)));
        }
    }
}
