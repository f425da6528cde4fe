mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use forge_core::crf::chain::{self, Encoded, Layout};
use forge_core::crf::{self, CrfModel, FeatureConfig};
use forge_core::dictionary::{Dictionary, Provenance};
use forge_core::synth::{self, SynthConfig};
use forge_core::tagger::Tag;

fn random_data(seed: u64, n_sent: usize, n_obs: usize) -> Vec<Encoded> {
    let mut r = rng(seed);
    (0..n_sent)
        .map(|_| {
            let len = r.random_range(1..6);
            let obs = (0..len)
                .map(|_| (0..3).map(|_| (r.random_range(0..n_obs as u32), r.random_range(-1.0..1.0))).collect())
                .collect();
            // Valid BIO: I only after B or I.
            let mut tags = Vec::with_capacity(len);
            for i in 0..len {
                let t = match r.random_range(0..3) {
                    0 => Tag::B,
                    1 if i > 0 && tags[i - 1] != Tag::O => Tag::I,
                    _ => Tag::O,
                };
                tags.push(t);
            }
            Encoded { obs, tags: Some(tags) }
        })
        .collect()
}

fn neg_objective(layout: &Layout, w: &[f64], data: &[Encoded], lambda: f64) -> f64 {
    -chain::log_likelihood_and_gradient(layout, w, data, lambda).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), prev2 in any::<bool>(), lambda in 0.0f64..1.0) {
        let layout = Layout { n_obs: 5, prev2 };
        let data = random_data(seed, 4, 5);
        let mut r = rng(seed ^ 1);
        let w: Vec<f64> = (0..layout.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, g) = chain::log_likelihood_and_gradient(&layout, &w, &data, lambda).unwrap();
        let h = 1e-5;
        let mut wp = w.clone();
        let mut diff = 0.0;
        for j in 0..w.len() {
            wp[j] = w[j] + h;
            let up = -neg_objective(&layout, &wp, &data, lambda);
            wp[j] = w[j] - h;
            let down = -neg_objective(&layout, &wp, &data, lambda);
            wp[j] = w[j];
            diff += ((up - down) / (2.0 * h) - g[j]).powi(2);
        }
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(diff.sqrt() <= 1e-4 * norm.max(1e-12), "{} vs {}", diff.sqrt(), norm);
    }

    #[test]
    fn negative_log_likelihood_is_convex(seed in any::<u64>(), prev2 in any::<bool>()) {
        let layout = Layout { n_obs: 5, prev2 };
        let data = random_data(seed, 5, 5);
        let mut r = rng(seed ^ 2);
        let a: Vec<f64> = (0..layout.dim()).map(|_| r.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..layout.dim()).map(|_| r.random_range(-2.0..2.0)).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (p + q) / 2.0).collect();
        let fa = neg_objective(&layout, &a, &data, 0.0);
        let fb = neg_objective(&layout, &b, &data, 0.0);
        let fm = neg_objective(&layout, &mid, &data, 0.0);
        prop_assert!(fm <= (fa + fb) / 2.0 + 1e-9);
    }

    #[test]
    fn inference_matches_enumeration(seed in any::<u64>(), prev2 in any::<bool>(), n in 1usize..=6) {
        let layout = Layout { n_obs: 4, prev2 };
        let mut r = rng(seed);
        let w: Vec<f64> = (0..layout.dim()).map(|_| r.random_range(-2.0..2.0)).collect();
        let obs: Vec<Vec<(u32, f64)>> = (0..n).map(|_| vec![(r.random_range(0..4u32), r.random_range(-1.0..1.0))]).collect();
        let (_, best) = brute_best_path(&layout, &w, &obs);
        let got = chain::viterbi(&layout, &w, &obs);
        prop_assert!((chain::path_score(&layout, &w, &obs, &got) - best).abs() < 1e-12);
        let z = chain::log_partition(&layout, &w, &obs);
        prop_assert!((z - brute_log_partition(&layout, &w, &obs)).abs() < 1e-10);
        let m = chain::forward_backward(&layout, &w, &obs);
        prop_assert!((m.log_z - z).abs() < 1e-12);
    }
}

fn small_corpus() -> synth::SynthCorpus {
    synth::generate(&SynthConfig {
        sentences: 500,
        train_sentences: 60,
        dev_sentences: 30,
        test_sentences: 60,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn training_fits_and_model_round_trips() {
    let corpus = small_corpus();
    let dict = Dictionary::from_phrases(Provenance::Manual, corpus.entities.iter());
    let cfg = FeatureConfig::baseline().with_dictionary("oracle", dict);
    let model = crf::train(&cfg, &corpus.train.sentences, 0.1).unwrap();
    let fit = model.evaluate(&corpus.train).unwrap();
    assert!(fit.f1 > 0.9, "training F1 {}", fit.f1);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.json");
    model.save(&p).unwrap();
    let back = CrfModel::load(&p).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.tag_all(&corpus.test.sentences), model.tag_all(&corpus.test.sentences));
}

#[test]
fn stronger_regularization_shrinks_weights() {
    let corpus = small_corpus();
    let cfg = FeatureConfig::baseline();
    let loose = crf::train(&cfg, &corpus.train.sentences[..20], 0.01).unwrap();
    let tight = crf::train(&cfg, &corpus.train.sentences[..20], 10.0).unwrap();
    assert!(tight.weight_norm() < loose.weight_norm());
}

#[test]
fn learning_curve_reports_every_point() {
    let corpus = small_corpus();
    let variants = vec![("baseline".to_string(), FeatureConfig::baseline())];
    let points = crf::learning_curve(&corpus.train, None, &corpus.test, &[5, 20], &variants, &[0.1]).unwrap();
    assert_eq!(points.iter().map(|p| p.size).collect::<Vec<_>>(), [5, 20]);
    assert!(points.iter().all(|p| p.lambda == 0.1));
    let mut out = Vec::new();
    crf::write_curve(&mut out, &points).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 3);
    assert!(crf::learning_curve(&corpus.train, None, &corpus.test, &[20, 5], &variants, &[0.1]).is_err());
    assert!(crf::learning_curve(&corpus.train, None, &corpus.test, &[5], &variants, &[0.1, 1.0]).is_err());
}
