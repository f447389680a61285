//! Metrics checked against a confusion-matrix oracle written independently
//! of the one-vs-rest counting in the library.

use crisis_core::metrics::{accuracy, confusion, macro_f1, macro_f1_over, MetricsReport};
use proptest::prelude::*;

/// Full C×C matrix: rows are truth, columns are predictions.
fn matrix(pred: &[usize], truth: &[usize], c: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; c]; c];
    for (&p, &t) in pred.iter().zip(truth) {
        m[t][p] += 1;
    }
    m
}

fn oracle_f1(m: &[Vec<u64>], k: usize) -> f64 {
    let tp = m[k][k] as f64;
    let predicted: u64 = m.iter().map(|row| row[k]).sum();
    let actual: u64 = m[k].iter().sum();
    if predicted == 0 || actual == 0 {
        return 0.0;
    }
    let p = tp / predicted as f64;
    let r = tp / actual as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn oracle_macro(m: &[Vec<u64>], skip_first: bool) -> f64 {
    let start = usize::from(skip_first);
    let f: Vec<f64> = (start..m.len()).map(|k| oracle_f1(m, k)).collect();
    f.iter().sum::<f64>() / f.len() as f64
}

fn labelled(c: usize) -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (1usize..400).prop_flat_map(move |n| {
        (
            Just(c),
            proptest::collection::vec(0..c, n),
            proptest::collection::vec(0..c, n),
        )
    })
}

fn classes() -> impl Strategy<Value = usize> {
    prop_oneof![Just(2usize), Just(7usize), Just(37usize)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn macro_f1_matches_matrix_oracle((c, pred, truth) in classes().prop_flat_map(labelled)) {
        let counts = confusion(&pred, &truth, c).unwrap();
        let m = matrix(&pred, &truth, c);
        prop_assert!((macro_f1(&counts) - oracle_macro(&m, false)).abs() < 1e-12);
        prop_assert!((macro_f1_over(&counts, false) - oracle_macro(&m, true)).abs() < 1e-12);
        let diag: u64 = (0..c).map(|k| m[k][k]).sum();
        prop_assert_eq!(accuracy(&counts), Some(diag as f64 / pred.len() as f64));
    }

    #[test]
    fn counts_partition_every_sample((c, pred, truth) in classes().prop_flat_map(labelled)) {
        let counts = confusion(&pred, &truth, c).unwrap();
        for k in &counts.per_class {
            prop_assert_eq!(k.tp + k.fp + k.fn_ + k.tn, pred.len() as u64);
        }
        let fp: u64 = counts.per_class.iter().map(|k| k.fp).sum();
        let fn_: u64 = counts.per_class.iter().map(|k| k.fn_).sum();
        prop_assert_eq!(fp, fn_);
    }

    #[test]
    fn permuting_samples_changes_nothing(
        (c, pred, truth) in classes().prop_flat_map(labelled),
        shift in any::<usize>(),
    ) {
        let n = pred.len();
        let rot = shift % n;
        let mut p2 = pred.clone();
        let mut t2 = truth.clone();
        p2.rotate_left(rot);
        t2.rotate_left(rot);
        prop_assert_eq!(confusion(&pred, &truth, c).unwrap(), confusion(&p2, &t2, c).unwrap());
    }

    #[test]
    fn report_text_round_trips((c, pred, truth) in classes().prop_flat_map(labelled)) {
        let report = MetricsReport::evaluate(&pred, &truth, c).unwrap();
        let back = MetricsReport::from_text(&report.to_text(true)).unwrap();
        prop_assert_eq!(back, report);
    }
}

#[test]
fn perfect_predictions_score_one() {
    let truth: Vec<usize> = (0..50).map(|i| i % 5).collect();
    let counts = confusion(&truth, &truth, 5).unwrap();
    assert_eq!(macro_f1(&counts), 1.0);
    assert_eq!(accuracy(&counts), Some(1.0));
}

#[test]
fn out_of_range_label_is_rejected() {
    assert!(confusion(&[0, 3], &[0, 1], 3).is_err());
    assert!(confusion(&[0], &[0, 1], 3).is_err());
}
