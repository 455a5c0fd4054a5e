#![allow(clippy::approx_constant, clippy::excessive_precision)]

mod support {
    pub mod bench;
}

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use webnav_core::alignment::{
    dpo_loss, filter_preference_pairs, grad_dpo, mean_sft_loss, render_construction_prompt,
    render_construction_prompt_named, select_rft_traces, sft_loss, total_loss, ConstructionError, ConstructionKind,
    LossInputs, PreferencePair, SampleSet,
};
use webnav_core::episode::Outcome;

// tests/oracles/dpo_reference.py, mpmath at 50 digits
const LN2: f64 = 0.693_147_180_559_945_309_42;
const CASE: f64 = 0.642_024_672_948_695_433_88;
const BETA_GRID: [(f64, f64); 6] = [
    (0.05, 0.675_800_297_744_828_328_42),
    (0.15, 0.642_024_672_948_695_433_88),
    (0.5, 0.533_382_155_418_777_032_13),
    (1.0, 0.403_186_048_885_457_893_19),
    (2.0, 0.220_417_409_918_450_926_6),
    (5.0, 0.029_750_418_272_620_565_195),
];

fn random_inputs(rng: &mut StdRng) -> LossInputs {
    let mut lp = || -rng.random_range(0.01..20.0);
    let (a, b, c, d) = (lp(), lp(), lp(), lp());
    LossInputs::new(a, b, c, d)
        .with_beta(rng.random_range(0.05..5.0))
        .with_lambda(rng.random_range(0.0..3.0))
}

#[test]
fn dpo_reference_values() {
    let x = LossInputs::new(-4.0, -4.0, -9.5, -9.5);
    assert!((dpo_loss(&x).unwrap() - LN2).abs() < 1e-12);
    let case = LossInputs::new(-1.0, -1.2, -2.0, -1.5).with_beta(0.15);
    assert!((dpo_loss(&case).unwrap() - CASE).abs() < 1e-9);
    for (beta, expected) in BETA_GRID {
        let got = dpo_loss(&case.with_beta(beta)).unwrap();
        assert!((got - expected).abs() < 1e-12, "beta {beta}: {got} vs {expected}");
    }
}

#[test]
fn sft_batch_mean() {
    assert_eq!(mean_sft_loss(&[-1.0, -2.0, -3.0]).unwrap(), Some(2.0));
    assert_eq!(sft_loss(-2.5).unwrap(), 2.5);
}

fn finite_difference(x: &LossInputs, h: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let shifted = |delta: f64| {
            let mut y = *x;
            match k {
                0 => y.logp_policy_chosen += delta,
                1 => y.logp_ref_chosen += delta,
                2 => y.logp_policy_rejected += delta,
                _ => y.logp_ref_rejected += delta,
            }
            dpo_loss(&y).unwrap()
        };
        *slot = (shifted(h) - shifted(-h)) / (2.0 * h);
    }
    out
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = random_inputs(&mut rng);
        let g = grad_dpo(&x).unwrap();
        let fd = finite_difference(&x, 1e-6);
        for k in 0..4 {
            let rel = (g[k] - fd[k]).abs() / g[k].abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
    }
    assert!(worst < 1e-6, "worst relative error {worst}");
}

#[test]
fn beta_sweep_is_monotone_for_positive_margins() {
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..500 {
        let x = random_inputs(&mut rng).with_beta(rng.random_range(0.05..2.5));
        let doubled = x.with_beta(x.beta * 2.0);
        let (a, b) = (dpo_loss(&x).unwrap(), dpo_loss(&doubled).unwrap());
        if x.margin() > 0.0 {
            assert!(b < a, "{x:?}");
        } else if x.margin() < 0.0 {
            assert!(b > a, "{x:?}");
        }
    }
}

#[test]
fn total_loss_is_affine_in_lambda() {
    let mut rng = StdRng::seed_from_u64(6);
    for _ in 0..1000 {
        let x = random_inputs(&mut rng);
        let (l1, l2) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let lhs = total_loss(&x.with_lambda(l1 + l2)).unwrap() - total_loss(&x.with_lambda(l2)).unwrap();
        let rhs = l1 * dpo_loss(&x).unwrap();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }
    let x = LossInputs::new(-1.0, -1.0, -3.0, -3.0);
    assert_eq!(total_loss(&x.with_lambda(0.0)).unwrap(), sft_loss(-1.0).unwrap());
    assert!((total_loss(&x.with_lambda(1.0)).unwrap() - (LN2 + 1.0)).abs() < 1e-15);
}

proptest! {
    #[test]
    fn dpo_is_positive_and_decreasing(
        a in -30.0f64..0.0, b in -30.0f64..0.0, c in -30.0f64..0.0, d in -30.0f64..0.0,
        beta in 0.05f64..5.0, bump in 0.01f64..5.0,
    ) {
        let x = LossInputs::new(a, b, c, d).with_beta(beta);
        let l = dpo_loss(&x).unwrap();
        prop_assert!(l > 0.0);
        let better = LossInputs { logp_ref_chosen: b - bump, ..x };
        prop_assert!(dpo_loss(&better).unwrap() < l);
    }
}

#[test]
fn preference_pairs_match_enumeration() {
    let sets: Vec<SampleSet> = serde_json::from_str(include_str!("fixtures/sample_sets.json")).unwrap();
    let expected: Vec<PreferencePair> = serde_json::from_str(include_str!("fixtures/expected_pairs.json")).unwrap();
    assert!(sets.iter().all(|s| s.n() == 20));
    for set in &sets {
        let rejudged = SampleSet::judged(
            set.task_id.clone(),
            set.prompt.clone(),
            set.gold.clone(),
            set.samples.iter().map(|s| s.completion.clone()),
        );
        assert_eq!(&rejudged, set, "fixture correctness flags disagree with the judge");
    }
    assert_eq!(filter_preference_pairs(&sets), expected);
    assert!(filter_preference_pairs(&sets[..2]).is_empty());
    assert_eq!(filter_preference_pairs(&sets[2..3]).len(), 4);
}

#[test]
fn rft_selection() {
    let base = support::bench::trace(0, 3);
    let mut failing = base.clone();
    failing.outcome = Outcome::StepCap;
    let mut samples = vec![failing; 62];
    samples.insert(10, base.clone());
    samples.insert(40, base.clone());
    assert_eq!(samples.len(), 64);

    let finished = |t: &webnav_core::Trace| matches!(t.outcome, Outcome::Finished { .. });
    let picked = select_rft_traces(&samples, finished);
    assert_eq!(picked, vec![base.clone()]);
    assert!(select_rft_traces(&samples, |_| false).is_empty());

    let distinct: Vec<_> = (0..3).map(|i| support::bench::trace(i, 3)).collect();
    assert_eq!(select_rft_traces(&distinct, |_| true), distinct);
}

#[test]
fn construction_prompts() {
    let got = render_construction_prompt(ConstructionKind::Recognition, &[("html_content", "<p>x</p>")]).unwrap();
    assert_eq!(got, include_str!("golden/recognition_p_x.txt"));

    let trace = support::bench::trace(1, 3);
    let annotated: Vec<String> = trace.actions().map(|a| a.to_command_string()).collect();
    let steps = trace.steps.len().to_string();
    let prompt = render_construction_prompt(
        ConstructionKind::TraceIntent,
        &[
            ("task_description", &trace.task),
            ("annotated_action_trace", &annotated.join("; ")),
            ("number_of_steps_in_action", &steps),
        ],
    )
    .unwrap();
    assert!(prompt.contains("The number of user actions in this task is 3."));
    assert!(!prompt.contains("{number_of_steps_in_action}"));

    assert!(matches!(
        render_construction_prompt_named("summarize", &[]),
        Err(ConstructionError::UnknownKind(_))
    ));
    assert_eq!(
        render_construction_prompt(ConstructionKind::SimpleTask, &[]),
        Err(ConstructionError::MissingField("html_content".into()))
    );
}
