mod common;

use approx::assert_abs_diff_eq;
use common::rng;
use ovseg::features::{
    argmax, concept_distribution, entropy, ovpe, softmax, FeatureVector, PromptList, PromptRole,
};
use proptest::prelude::*;
use rand::Rng;

fn random_list(r: &mut impl Rng, n: usize, dim: usize) -> PromptList {
    let mut emb = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let row: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        emb.extend(FeatureVector::normalized(&row).unwrap().into_inner());
    }
    let labels = (0..n).map(|i| format!("label {i}")).collect();
    PromptList::new(labels, dim, emb, PromptRole::Entropy).unwrap()
}

#[test]
fn entropy_closed_forms() {
    assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
    for n in [2usize, 3, 10, 1687] {
        assert_abs_diff_eq!(entropy(&vec![1.0 / n as f64; n]), (n as f64).ln(), epsilon = 1e-9);
    }
    assert_abs_diff_eq!(entropy(&[0.7, 0.2, 0.1]), 0.8018, epsilon = 1e-4);
}

#[test]
fn distributions_are_normalized_and_bounded() {
    let mut r = rng(31);
    for _ in 0..10_000 {
        let n = r.random_range(1..=64);
        let dim = r.random_range(2..=32);
        let list = random_list(&mut r, n, dim);
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let Ok(f) = FeatureVector::normalized(&v) else { continue };
        let t = [1.0, 10.0, 100.0, 1000.0][r.random_range(0..4)];
        let d = concept_distribution(&f, &list, t).unwrap();
        assert_abs_diff_eq!(d.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-6);
        assert!(d.entropy >= 0.0 && d.entropy <= (n as f64).ln() + 1e-12);
        assert!(d.probs.iter().all(|p| p.is_finite() && *p >= 0.0));
    }
}

#[test]
fn ovpe_round_trip_is_bit_exact() {
    let mut r = rng(32);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..5 {
        let list = random_list(&mut r, 1 + i * 7, 16).with_role(PromptRole::Evaluation);
        let path = dir.path().join(format!("l{i}.ovpe"));
        ovpe::write(&list, &path).unwrap();
        let back = ovpe::read(&path, PromptRole::Evaluation).unwrap();
        assert_eq!(back.labels(), list.labels());
        assert_eq!(
            back.embeddings().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            list.embeddings().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}

proptest! {
    #[test]
    fn softmax_preserves_argmax(logits in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(argmax(&p), argmax(&logits));
    }

    #[test]
    fn entropy_is_shift_invariant(logits in prop::collection::vec(-20.0f64..20.0, 1..40), shift in -100.0f64..100.0) {
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        prop_assert!((entropy(&softmax(&logits)) - entropy(&softmax(&shifted))).abs() < 1e-9);
    }
}
