use causalnet_convnet::metrics::report_from_counts;
use causalnet_convnet::{evaluate, vote, VoteMode};
use causalnet_core::image::Label;
use proptest::prelude::*;

use Label::{Left as L, Right as R};

/// Published per-subject rows (SEN, SPE, ACC, kappa) on 72 + 72 test trials.
const ROWS: &[(f64, f64, f64, f64)] = &[
    (97.22, 68.06, 82.64, 0.6528),
    (86.11, 73.61, 79.86, 0.5972),
    (59.72, 98.61, 79.17, 0.5833),
    (77.78, 93.06, 85.42, 0.7083),
    (69.44, 45.83, 57.64, 0.1528),
    (79.17, 70.83, 75.00, 0.5000),
    (70.83, 80.56, 75.69, 0.5139),
    (75.00, 84.72, 79.86, 0.5972),
    (94.44, 87.50, 90.97, 0.8194),
    (76.39, 76.39, 76.39, 0.5278),
    (91.67, 77.78, 84.72, 0.6944),
    (97.22, 81.94, 89.58, 0.7917),
    (62.50, 72.22, 67.36, 0.3472),
    (87.50, 70.83, 79.17, 0.5833),
    (68.06, 80.56, 74.31, 0.4861),
    (76.39, 84.72, 80.56, 0.6111),
    (58.33, 88.89, 73.61, 0.4722),
    (62.50, 80.56, 71.53, 0.4306),
    (97.22, 63.89, 80.56, 0.6111),
    (100.00, 72.22, 86.11, 0.7222),
    (38.89, 80.56, 59.72, 0.1944),
    (80.56, 80.56, 80.56, 0.6111),
    (93.06, 70.83, 81.94, 0.6389),
    (77.78, 87.50, 82.64, 0.6528),
    (68.06, 97.22, 82.64, 0.6528),
    (97.22, 51.39, 74.31, 0.4861),
    (62.50, 100.00, 81.25, 0.6250),
    (83.33, 86.11, 84.72, 0.6944),
    (90.28, 90.28, 90.28, 0.8056),
    (95.83, 69.44, 82.64, 0.6528),
    (76.39, 88.89, 82.64, 0.6528),
    (84.72, 87.50, 86.11, 0.7222),
    (94.44, 55.56, 75.00, 0.5000),
    (86.11, 75.00, 80.56, 0.6111),
    (84.72, 76.39, 80.56, 0.6111),
    (84.72, 90.28, 87.50, 0.7500),
];

fn labels_for(tp: usize, tn: usize, per_class: usize) -> (Vec<Label>, Vec<Label>) {
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for k in 0..per_class {
        truth.push(L);
        pred.push(if k < tp { L } else { R });
        truth.push(R);
        pred.push(if k < tn { R } else { L });
    }
    (pred, truth)
}

#[test]
fn published_rows_are_reproduced_from_counts() {
    for &(sen, spe, acc, kappa) in ROWS {
        let tp = (sen * 0.72).round() as usize;
        let tn = (spe * 0.72).round() as usize;
        let (pred, truth) = labels_for(tp, tn, 72);
        let r = evaluate(&pred, &truth).unwrap();
        assert!((r.sensitivity - sen).abs() < 0.005, "{sen}");
        assert!((r.specificity - spe).abs() < 0.005, "{spe}");
        assert!((r.accuracy - acc).abs() < 0.005, "{acc} vs {}", r.accuracy);
        assert!((r.kappa - kappa).abs() < 5e-5, "{kappa} vs {}", r.kappa);
    }
}

#[test]
fn headline_examples() {
    let r = report_from_counts(56, 5, 67, 16);
    assert!((r.accuracy - 85.42).abs() < 0.005);
    assert!((r.kappa - 0.7083).abs() < 5e-5);
    // Mean accuracy with balanced classes: kappa = (acc - 0.5) / 0.5.
    let k: f64 = (0.8472 - 0.5) / 0.5;
    assert!((k - 0.6944).abs() < 1e-4);

    let perfect = report_from_counts(72, 0, 72, 0);
    assert_eq!((perfect.accuracy, perfect.kappa), (100.0, 1.0));
    assert_eq!((perfect.sensitivity, perfect.specificity), (100.0, 100.0));

    let one_sided = report_from_counts(72, 72, 0, 0);
    assert_eq!(one_sided.accuracy, 50.0);
    assert_eq!(one_sided.kappa, 0.0);
    assert_eq!(one_sided.specificity, 0.0);
}

#[test]
fn absent_class_gives_nan_rate() {
    let r = evaluate(&[L, R], &[L, L]).unwrap();
    assert_eq!(r.sensitivity, 50.0);
    assert!(r.specificity.is_nan());
    assert!(evaluate(&[L], &[L, R]).is_err());
}

#[test]
fn vote_ties_fall_back_to_scores() {
    assert_eq!(vote(&[0.9, -0.2], VoteMode::Majority).unwrap(), L);
    assert_eq!(vote(&[0.2, -0.9], VoteMode::Majority).unwrap(), R);
    assert_eq!(vote(&[0.5, -0.5], VoteMode::Majority).unwrap(), L);
    assert_eq!(vote(&[0.1, 0.1, -3.0], VoteMode::Majority).unwrap(), L);
    assert_eq!(vote(&[0.1, 0.1, -3.0], VoteMode::MeanScore).unwrap(), R);
    assert_eq!(VoteMode::parse("mean_score").unwrap(), VoteMode::MeanScore);
    assert!(VoteMode::parse("median").is_err());
}

proptest! {
    #[test]
    fn kappa_matches_definition(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
        prop_assume!(tp + fp + tn + fn_ > 0);
        let r = report_from_counts(tp, fp, tn, fn_);
        let n = (tp + fp + tn + fn_) as f64;
        let po = (tp + tn) as f64 / n;
        let pred_left = (tp + fp) as f64 / n;
        let true_left = (tp + fn_) as f64 / n;
        let pe = pred_left * true_left + (1.0 - pred_left) * (1.0 - true_left);
        prop_assert!((r.accuracy - 100.0 * po).abs() < 1e-9);
        if pe < 1.0 - 1e-12 {
            prop_assert!((r.kappa - (po - pe) / (1.0 - pe)).abs() < 1e-9);
        }
        prop_assert!(r.kappa <= 1.0 + 1e-12);
    }
}
