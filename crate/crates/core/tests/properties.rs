use proptest::prelude::*;

use takeover_core::gain_model::{
    best_response, choice_gain, following_gain, gain, opg_trial, session_aag, session_opg, switch_point, TrialDecision,
    TrialSuggestion,
};
use takeover_core::metrics::{follow_rate, conservative_rate, pearson, spearman, anti_follow_rate};
use takeover_core::policy::{logit_first, DecisionRecord};
use takeover_core::scenario::{generate_session, SessionConfig};
use takeover_core::{Accuracy, Choice, DecisionOption, PayoffMatrix, PayoffSet, Task};

fn task() -> impl Strategy<Value = Task> {
    prop::sample::select(Task::ALL.to_vec())
}

fn choice() -> impl Strategy<Value = Choice> {
    prop::sample::select(Choice::BOTH.to_vec())
}

fn prob() -> impl Strategy<Value = f64> {
    0.0f64..=1.0
}

fn matrix() -> impl Strategy<Value = PayoffMatrix> {
    (task(), prop::array::uniform2(prop::array::uniform2(-10.0f64..=10.0)))
        .prop_map(|(t, pg)| PayoffMatrix::new(t, pg).unwrap())
}

// Direct enumeration of both decisions from the raw table.
fn brute_force(m: &PayoffMatrix, v: Choice, p: f64) -> (Choice, f64) {
    let pg = m.pg();
    let value = |d: Choice| p * pg[d.index()][v.index()] + (1.0 - p) * pg[d.index()][1 - v.index()];
    let (follow, deviate) = (value(v), value(v.other()));
    if deviate > follow {
        (v.other(), deviate)
    } else {
        (v, follow)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn opg_matches_enumeration(t in task(), v in choice(), p in prob()) {
        let m = PayoffMatrix::preset(t);
        let (d, g) = opg_trial(&m, DecisionOption::new(t, v), Accuracy::new(p).unwrap()).unwrap();
        let (bd, bg) = brute_force(&m, v, p);
        prop_assert_eq!(d.choice, bd);
        prop_assert_eq!(g, bg);
    }

    #[test]
    fn opg_dominates_any_decision(m in matrix(), v in choice(), d in choice(), p in prob()) {
        let p = Accuracy::new(p).unwrap();
        prop_assert!(best_response(&m, v, p).1 >= gain(&m, d, v, p));
    }

    #[test]
    fn opg_dominates_aag_over_sessions(
        trials in prop::collection::vec((task(), choice(), choice(), prob()), 1..40)
    ) {
        let set = PayoffSet::presets();
        let decided: Vec<TrialDecision> = trials
            .iter()
            .map(|&(t, v, d, p)| TrialDecision {
                matrix: set.get(t),
                decision: DecisionOption::new(t, d),
                suggestion: DecisionOption::new(t, v),
                p: Accuracy::new(p).unwrap(),
            })
            .collect();
        let suggested: Vec<TrialSuggestion> = decided.iter().copied().map(Into::into).collect();
        prop_assert!(session_opg(&suggested).unwrap() >= session_aag(&decided).unwrap());
    }

    #[test]
    fn gain_collapses_at_certainty(m in matrix(), d in choice(), v in choice()) {
        prop_assert_eq!(gain(&m, d, v, Accuracy::new(1.0).unwrap()), m.entry(d, v));
        prop_assert_eq!(gain(&m, d, v, Accuracy::new(0.0).unwrap()), m.entry(d, v.other()));
    }

    #[test]
    fn gain_is_affine_in_accuracy(m in matrix(), d in choice(), v in choice(), p in 0.01f64..0.99) {
        let at = |x: f64| gain(&m, d, v, Accuracy::new(x).unwrap());
        let slope = m.entry(d, v) - m.entry(d, v.other());
        let h = 0.01;
        prop_assert!(((at(p + h) - at(p - h)) / (2.0 * h) - slope).abs() < 1e-9);
    }

    #[test]
    fn positive_scaling_keeps_decisions(m in matrix(), v in choice(), p in prob(), k in 0.05f64..1.0) {
        let p = Accuracy::new(p).unwrap();
        let scaled = m.scaled(k);
        let (d, g) = best_response(&m, v, p);
        let (ds, gs) = best_response(&scaled, v, p);
        // exact ties may be broken differently after rounding
        if (gain(&m, Choice::First, v, p) - gain(&m, Choice::Second, v, p)).abs() > 1e-9 {
            prop_assert_eq!(d, ds);
        }
        prop_assert!((gs - k * g).abs() < 1e-9);
        prop_assert!((following_gain(&scaled) - k * following_gain(&m)).abs() < 1e-9);
        prop_assert!((choice_gain(&scaled) - k * choice_gain(&m)).abs() < 1e-9);
    }

    #[test]
    fn switch_point_separates_regimes(m in matrix(), v in choice()) {
        if let Some(ps) = switch_point(&m, v) {
            prop_assert!(ps > 0.0 && ps < 1.0);
            let lo = (ps - 1e-3).max(0.0);
            let hi = (ps + 1e-3).min(1.0);
            let best = |p: f64| best_response(&m, v, Accuracy::new(p).unwrap()).0;
            let diff = |p: f64| {
                let p = Accuracy::new(p).unwrap();
                gain(&m, v, v, p) - gain(&m, v.other(), v, p)
            };
            if diff(lo).abs() > 1e-9 && diff(hi).abs() > 1e-9 {
                prop_assert_ne!(best(lo), best(hi));
            }
        }
    }

    #[test]
    fn logit_is_shift_invariant(g1 in -10.0f64..10.0, g2 in -10.0f64..10.0, c in -50.0f64..50.0, tau in 0.05f64..20.0) {
        prop_assert!((logit_first(g1, g2, tau) - logit_first(g1 + c, g2 + c, tau)).abs() < 1e-9);
        prop_assert!((logit_first(g1, g2, tau) + logit_first(g2, g1, tau) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rates_ignore_order(seed in any::<u64>(), decisions in prop::collection::vec(choice(), 36), rot in 0usize..36) {
        let trials = generate_session(&SessionConfig::study3(seed)).unwrap();
        let set = PayoffSet::presets();
        let mut records: Vec<DecisionRecord> = trials
            .iter()
            .zip(&decisions)
            .map(|(t, &d)| DecisionRecord::score(t, set.get(t.task), Some(d), None))
            .collect();
        let f = follow_rate(&records).unwrap();
        let c = conservative_rate(&records).unwrap();
        prop_assert!((f + anti_follow_rate(&records).unwrap() - 1.0).abs() < 1e-12);
        records.rotate_left(rot);
        records.reverse();
        prop_assert_eq!(follow_rate(&records).unwrap(), f);
        prop_assert_eq!(conservative_rate(&records).unwrap(), c);
    }
}

proptest! {
    #[test]
    fn correlations_are_symmetric_and_transform_invariant(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let (Ok(r), Ok(s)) = (pearson(&xs, &ys), spearman(&xs, &ys)) {
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((pearson(&ys, &xs).unwrap() - r).abs() < 1e-12);
            prop_assert!((spearman(&ys, &xs).unwrap() - s).abs() < 1e-12);
            let affine: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            prop_assert!((pearson(&affine, &ys).unwrap() - r).abs() < 1e-9);
            let cubed: Vec<f64> = xs.iter().map(|x| x.powi(3) + x).collect();
            prop_assert!((spearman(&cubed, &ys).unwrap() - s).abs() < 1e-12);
        }
    }
}
