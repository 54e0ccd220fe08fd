use std::cell::RefCell;

use causalnet_convnet::boost::{adaboost_train, adaboost_with_split, BaseLearner, BoostConfig, StopReason};
use causalnet_convnet::NetError;
use causalnet_core::image::Label;
use proptest::prelude::*;

use Label::{Left as L, Right as R};

/// Learner whose round `j` prediction for sample `i` is `table[j - 1][i]`.
struct Scripted {
    table: Vec<Vec<Label>>,
    seen: RefCell<Vec<Vec<f64>>>,
}

impl Scripted {
    fn new(table: Vec<Vec<Label>>) -> Self {
        Scripted {
            table,
            seen: RefCell::new(Vec::new()),
        }
    }
}

impl BaseLearner for Scripted {
    type Model = usize;

    fn fit(&self, _samples: &[usize], weights: &[f64], round: usize) -> causalnet_convnet::Result<usize> {
        self.seen.borrow_mut().push(weights.to_vec());
        Ok(round)
    }

    fn predict(&self, model: &usize, samples: &[usize]) -> causalnet_convnet::Result<Vec<Label>> {
        let row = &self.table[(*model - 1).min(self.table.len() - 1)];
        Ok(samples.iter().map(|&i| row[i]).collect())
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn two_round_hand_trace() {
    // Samples 0..5 train, 5..7 validate.
    let labels = [L, L, R, R, L, L, R];
    let learner = Scripted::new(vec![
        // Round 1 misses sample 4 and validation sample 5.
        vec![L, L, R, R, R, R, R],
        // Round 2 misses samples 0 and 1.
        vec![R, R, R, R, L, L, L],
    ]);
    let e = adaboost_with_split(&learner, &labels, (0..5).collect(), vec![5, 6], 2).unwrap();

    // Round 1: error 0.2, alpha = 0.5 ln 4.
    let a1 = 0.5 * 4f64.ln();
    assert!((e.members[0].error - 0.2).abs() < 1e-12);
    assert!((e.members[0].weight - a1).abs() < 1e-12);
    // Correct samples scale by 1/2 and the missed one by 2, normaliser 0.8.
    let w2 = [0.125, 0.125, 0.125, 0.125, 0.5];
    close(&learner.seen.borrow()[1], &w2, 1e-12);

    // Round 2: error 0.25, alpha = 0.5 ln 3; normaliser sqrt(3)/2.
    let a2 = 0.5 * 3f64.ln();
    assert!((e.members[1].error - 0.25).abs() < 1e-12);
    assert!((e.members[1].weight - a2).abs() < 1e-12);
    close(&e.weight_history[2], &[0.25, 0.25, 1.0 / 12.0, 1.0 / 12.0, 1.0 / 3.0], 1e-12);
    for w in &e.weight_history {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    // Validation: prefix 1 gets sample 6 only. Prefix 2 scores sample 5 as
    // -a1 + a2 < 0 (wrong) and sample 6 as -a1 + a2 < 0 (right).
    close(&e.prefix_accuracy, &[0.5, 0.5], 1e-12);
    assert_eq!(e.best_prefix, 1);
    assert_eq!(e.stop, StopReason::Rounds);
    assert!((e.score(&[R]) + a1).abs() < 1e-12);
}

#[test]
fn later_prefix_wins_on_strict_improvement() {
    let labels = [L, R, L, R, L, R];
    let learner = Scripted::new(vec![
        vec![L, R, L, L, R, L],
        vec![L, R, R, R, L, R],
        vec![R, R, L, R, L, R],
    ]);
    let e = adaboost_with_split(&learner, &labels, (0..4).collect(), vec![4, 5], 3).unwrap();
    assert_eq!(e.members.len(), 3);
    assert_eq!(e.prefix_accuracy[0], 0.0);
    let best = e
        .prefix_accuracy
        .iter()
        .enumerate()
        .fold((0, -1.0), |acc, (k, &a)| if a > acc.1 { (k + 1, a) } else { acc });
    assert_eq!((e.best_prefix, e.best_accuracy), best);
}

#[test]
fn perfect_member_is_clamped_and_stops() {
    let labels = [L, R, L, R, L];
    let learner = Scripted::new(vec![vec![L, R, L, R, L]]);
    let e = adaboost_with_split(&learner, &labels, (0..4).collect(), vec![4], 5).unwrap();
    assert_eq!(e.members.len(), 1);
    assert_eq!(e.stop, StopReason::PerfectMember);
    // Error clamped to 1 / (2 * 4).
    let clamp: f64 = 1.0 / 8.0;
    assert!((e.members[0].weight - 0.5 * ((1.0 - clamp) / clamp).ln()).abs() < 1e-12);
    assert!(e.members[0].weight.is_finite());
    assert_eq!(e.best_accuracy, 1.0);
}

#[test]
fn weak_member_is_discarded() {
    let labels = [L, R, L, R];
    let learner = Scripted::new(vec![vec![L, R, L, L], vec![L, L, R, L]]);
    let e = adaboost_with_split(&learner, &labels, (0..4).collect(), vec![], 5).unwrap();
    assert_eq!(e.members.len(), 1);
    match e.stop {
        StopReason::WeakMember { round, error } => {
            assert_eq!(round, 2);
            // After round 1 the weights are 1/6, 1/6, 1/6, 1/2; round 2 misses 1, 2, 3.
            assert!((error - 5.0 / 6.0).abs() < 1e-12, "{error}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn weak_first_member_is_an_error() {
    let labels = [L, R, L, R];
    let learner = Scripted::new(vec![vec![R, L, L, R]]);
    match adaboost_with_split(&learner, &labels, (0..4).collect(), vec![], 3) {
        Err(NetError::NoUsableMember(e)) => assert!((e - 0.5).abs() < 1e-12),
        other => panic!("{:?}", other.map(|e| e.members.len())),
    }
}

#[test]
fn grouped_split_keeps_trials_together() {
    // Twelve trials of three crops each.
    let labels: Vec<Label> = (0..36).map(|i| if (i / 3) % 2 == 0 { L } else { R }).collect();
    let groups: Vec<usize> = (0..36).map(|i| i / 3).collect();
    let learner = Scripted::new(vec![labels.clone()]);
    let cfg = BoostConfig {
        rounds: 3,
        validation_fraction: 0.25,
        seed: 4,
    };
    let e = adaboost_train(&learner, &labels, &groups, &(0..36).collect::<Vec<_>>(), &cfg).unwrap();
    for &v in &e.validation {
        assert!(e.train.iter().all(|&t| groups[t] != groups[v]));
    }
    assert_eq!(e.train.len() + e.validation.len(), 36);
    for class in [L, R] {
        assert!(e.validation.iter().any(|&i| labels[i] == class));
    }
}

proptest! {
    #[test]
    fn reweighting_moves_towards_mistakes(
        rows in prop::collection::vec(prop::collection::vec(any::<bool>(), 8), 1..5),
        truth in prop::collection::vec(any::<bool>(), 8),
    ) {
        let labels: Vec<Label> = truth.iter().map(|&b| if b { L } else { R }).collect();
        let table: Vec<Vec<Label>> = rows
            .iter()
            .map(|r| r.iter().zip(&labels).map(|(&flip, &l)| if flip { Label::from_sign(-l.sign()) } else { l }).collect())
            .collect();
        let learner = Scripted::new(table.clone());
        let Ok(e) = adaboost_with_split(&learner, &labels, (0..8).collect(), vec![], rows.len()) else {
            return Ok(());
        };
        for (j, m) in e.members.iter().enumerate() {
            let before = &e.weight_history[j];
            let after = &e.weight_history[j + 1];
            prop_assert!((after.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(m.weight > 0.0);
            // A perfect member, or an error a rounding step below one half,
            // leaves the normalised weights in place.
            if m.error == 0.0 || m.weight < 1e-9 {
                continue;
            }
            for i in 0..8 {
                if table[j][i] != labels[i] {
                    prop_assert!(after[i] > before[i]);
                } else {
                    prop_assert!(after[i] < before[i]);
                }
            }
        }
    }
}
