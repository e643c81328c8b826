mod common;

use catp_core::seed;
use catp_planner::*;
use common::*;

#[test]
fn identical_windows_give_identical_logits() {
    let (u, ds) = desk5_dataset(3);
    let (set, p) = setup(&u, &ds, &tiny(), 1);
    let ex = &set.examples[0];
    let a = p.forward(&set.contexts[ex.task], &ex.steps).unwrap();
    let b = p.forward(&set.contexts[ex.task], &ex.steps).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().flatten().all(|x| x.is_finite()));
}

#[test]
fn future_steps_do_not_change_past_logits() {
    let (u, ds) = desk5_dataset(3);
    let (set, p) = setup(&u, &ds, &tiny(), 2);
    let ex = set.examples.iter().find(|e| e.steps.len() >= 5).expect("a long example");
    let ctx = &set.contexts[ex.task];
    let base = p.forward(ctx, &ex.steps).unwrap();
    for cut in 1..ex.steps.len() {
        let mut steps = ex.steps.clone();
        // Perturb everything after `cut`: returns, states and actions.
        steps[cut..].reverse();
        for s in &mut steps[cut..] {
            s.rtg += 3.7;
            s.state.iter_mut().for_each(|x| *x = 1.0 - *x);
        }
        let steps: Vec<_> = steps.into_iter().map(|mut s| {
            if s.action.is_some_and(|a| catp_core::tpl::Head::of(a) != Some(s.head)) {
                s.action = None;
            }
            s
        }).collect();
        let out = p.forward(ctx, &steps).unwrap();
        for i in 0..cut {
            assert_eq!(out[i], base[i], "position {i} changed after perturbing from {cut}");
        }
    }
}

#[test]
fn the_last_action_is_never_read() {
    let (u, ds) = desk5_dataset(3);
    let (set, p) = setup(&u, &ds, &tiny(), 3);
    let ex = &set.examples[0];
    let ctx = &set.contexts[ex.task];
    let mut steps = ex.steps.clone();
    let with = p.forward(ctx, &steps).unwrap();
    steps.last_mut().unwrap().action = None;
    assert_eq!(p.forward(ctx, &steps).unwrap(), with);
}

#[test]
fn zero_parameters_give_uniform_logits() {
    let (u, ds) = desk5_dataset(3);
    let (set, p) = setup(&u, &ds, &tiny(), 4);
    let z = p.zeroed();
    for ex in set.examples.iter().take(10) {
        for row in z.forward(&set.contexts[ex.task], &ex.steps).unwrap() {
            assert!(row.iter().all(|&x| x == row[0]));
        }
    }
}

#[test]
fn windows_longer_than_configured_are_rejected() {
    let (u, ds) = desk5_dataset(3);
    let (set, p) = setup(&u, &ds, &tiny(), 5);
    let ex = &set.examples[0];
    let mut steps = ex.steps.clone();
    while steps.len() <= p.config.window {
        steps.push(steps[0].clone());
    }
    assert!(matches!(p.forward(&set.contexts[ex.task], &steps), Err(PlannerError::Shape(_))));
    assert!(matches!(p.forward(&set.contexts[ex.task], &[]), Err(PlannerError::Shape(_))));
}

#[test]
fn policy_for_another_universe_is_rejected() {
    let (u, ds) = desk5_dataset(3);
    let (_, p) = setup(&u, &ds, &tiny(), 6);
    assert!(p.check_universe(&u).is_ok());
    assert!(p.check_universe(&catp_core::presets::opencatp10()).is_err());
    let other = init_policy(&catp_core::presets::opencatp10(), &p.config, &mut seed::rng(0)).unwrap();
    assert_ne!(other.n_parameters(), p.n_parameters());
}
