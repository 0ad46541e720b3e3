mod common;

use approx::assert_abs_diff_eq;
use common::*;
use ovseg::metrics::{fps, segmentation_metrics, transfer_labels, ConfusionTally, MaccForm};

#[test]
fn matches_brute_force_counting() {
    let mut r = rng(21);
    for case in 0..100 {
        let (gt, pred) = random_labeling(&mut r, 10_000);
        let m = segmentation_metrics(&gt, &pred, MaccForm::Precision).unwrap();
        let (miou, fmiou, macc) = brute_metrics(&gt, &pred);
        assert_abs_diff_eq!(m.miou, miou, epsilon = 1e-12);
        assert_abs_diff_eq!(m.fmiou, fmiou, epsilon = 1e-12);
        assert_abs_diff_eq!(m.macc, macc, epsilon = 1e-12);
        assert!(m.per_class.iter().all(|c| (0.0..=1.0).contains(&c.iou)), "case {case}");
    }
}

#[test]
fn hand_case() {
    let m = segmentation_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], MaccForm::Precision).unwrap();
    assert_abs_diff_eq!(m.miou, 0.583_333_333, epsilon = 1e-6);
    assert_abs_diff_eq!(m.fmiou, 0.583_333_333, epsilon = 1e-6);
    assert_abs_diff_eq!(m.macc, 0.833_333_333, epsilon = 1e-6);
    let recall = segmentation_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], MaccForm::Recall).unwrap();
    assert_abs_diff_eq!(recall.macc, 0.75, epsilon = 1e-12);
}

#[test]
fn perfect_prediction_scores_one() {
    let mut r = rng(22);
    for _ in 0..20 {
        let (gt, _) = random_labeling(&mut r, 2000);
        let m = segmentation_metrics(&gt, &gt, MaccForm::Precision).unwrap();
        assert_eq!((m.miou, m.fmiou, m.macc), (1.0, 1.0, 1.0));
    }
}

#[test]
fn equal_class_sizes_make_fmiou_equal_miou() {
    let mut r = rng(23);
    for _ in 0..20 {
        let classes = 5;
        let gt: Vec<i32> = (0..classes * 200).map(|i| i % classes).collect();
        let pred: Vec<i32> = gt
            .iter()
            .map(|&g| if rand::Rng::random_bool(&mut r, 0.7) { g } else { rand::Rng::random_range(&mut r, 0..classes) })
            .collect();
        let m = segmentation_metrics(&gt, &pred, MaccForm::Precision).unwrap();
        assert_abs_diff_eq!(m.miou, m.fmiou, epsilon = 1e-12);
    }
}

#[test]
fn tally_merges_like_a_single_pass() {
    let mut r = rng(24);
    let (gt, pred) = random_labeling(&mut r, 10_000);
    let whole = ConfusionTally::count(&gt, &pred).unwrap();
    let single = ovseg::par::with_workers(1, || ConfusionTally::count(&gt, &pred).unwrap());
    assert_eq!(whole, single);
}

#[test]
fn transfer_uses_nearest_labeled_point() {
    let pred = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.01, 0.0, 0.0]];
    let gt = [[0.0, 0.0, 0.0], [0.98, 0.0, 0.0], [5.0, 0.0, 0.0]];
    let t = transfer_labels(&pred, &[3, 7, -1], &gt, 0.05).unwrap();
    assert_eq!(t, vec![3, 7, -1]);
}

#[test]
fn frames_per_second() {
    assert_abs_diff_eq!(fps(40, 240.0).unwrap(), 0.17, epsilon = 0.005);
    assert_abs_diff_eq!(fps(40, 115.0).unwrap(), 0.35, epsilon = 0.005);
    assert!(fps(40, 0.0).is_err());
}
