mod common;

use proptest::prelude::*;

use common::*;
use forge_core::classifier::{self, Example, SeedSet, SvmParams};
use forge_core::cca::PhraseEmbedding;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn objective_matches_dual_oracle(seed in any::<u64>(), n in 4usize..40, d in 1usize..6, c in prop::sample::select(vec![0.01, 0.1, 1.0, 10.0])) {
        let mut r = rng(seed);
        let ex = separable_instance(&mut r, n, d);
        let params = SvmParams::default().with_c(c);
        let model = classifier::train_svm(&ex, &params).unwrap();
        let got = classifier::primal_objective(&model, &ex, &params);
        let (_, _, want) = svm_oracle(&ex, c);
        prop_assert!((got - want).abs() <= 1e-4, "solver {} oracle {}", got, want);
    }

    #[test]
    fn scores_are_affine(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ex = separable_instance(&mut r, 20, 3);
        let m = classifier::train_svm(&ex, &SvmParams::default()).unwrap();
        let a = &ex[0].x;
        let b = &ex[1].x;
        let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| (p + q) / 2.0).collect();
        let s = (m.score(a).unwrap() + m.score(b).unwrap()) / 2.0;
        prop_assert!((m.score(&mid).unwrap() - s).abs() < 1e-9);
    }
}

#[test]
fn large_c_separates_training_data() {
    let mut r = rng(77);
    let ex = separable_instance(&mut r, 50, 4);
    let m = classifier::train_svm(&ex, &SvmParams::default().with_c(100.0)).unwrap();
    for e in &ex {
        assert_eq!(m.predict(&e.x).unwrap().entity, e.positive);
    }
}

#[test]
fn zero_score_counts_as_entity() {
    let ex = vec![
        Example { x: vec![1.0], positive: true },
        Example { x: vec![-1.0], positive: false },
    ];
    let m = classifier::train_svm(&ex, &SvmParams::default()).unwrap();
    assert!(m.bias.abs() < 1e-9);
    assert!(m.predict(&[0.0]).unwrap().entity);
}

#[test]
fn dictionary_is_ranked_by_score() {
    let emb: Vec<PhraseEmbedding> = [("alpha", 2.0), ("beta", -1.5), ("gamma", 0.7), ("delta", -0.1), ("eps", 1.2)]
        .iter()
        .map(|(p, v)| PhraseEmbedding { phrase: p.to_string(), vector: vec![*v] })
        .collect();
    let seeds = SeedSet::new(&["alpha", "eps"], &["beta"]).unwrap();
    let m = classifier::train_on_seeds(&emb, &seeds, &SvmParams::default().with_c(10.0)).unwrap();
    let d = classifier::build_dictionary(&emb, &m, 0.0, &[]).unwrap();
    let phrases: Vec<&str> = d.phrases().collect();
    assert_eq!(phrases[..3], ["alpha", "eps", "gamma"]);
    let scores: Vec<f64> = d.entries().iter().map(|e| e.score.unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn unresolved_seed_is_an_error() {
    let emb = vec![PhraseEmbedding { phrase: "alpha".into(), vector: vec![1.0] }];
    let seeds = SeedSet::new(&["alpha"], &["missing"]).unwrap();
    assert!(classifier::train_on_seeds(&emb, &seeds, &SvmParams::default()).is_err());
}
