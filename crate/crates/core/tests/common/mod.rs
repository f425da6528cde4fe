//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use forge_core::cca::{self, CcaParams, Regularization, WhiteningMode};
use forge_core::classifier::{self, Example, SvmParams};
use forge_core::corpus::{Document, DocumentReader, Segmenter, Sentence};
use forge_core::cotrain::{self, CotrainParams};
use forge_core::crf::chain::{path_score, Layout};
use forge_core::dictionary::Dictionary;
use forge_core::extract::{self, Extractor};
use forge_core::sparse::CsrMatrix;
use forge_core::synth::{self, SynthCorpus};
use forge_core::tagger::{self, DictionaryTagger, EvalReport, GoldCorpus, Tag};
use forge_core::views::{self, ViewOptions};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Top canonical correlations from the generalized symmetric eigenproblem
/// `[0 Cxz; Czx 0] v = ρ blockdiag(Cxx + κI, Czz + κI) v`, reduced to a
/// standard one with a Cholesky factor of the right-hand side.
pub fn cca_oracle(x: &DMatrix<f64>, z: &DMatrix<f64>, kappa: f64, centered: bool) -> Vec<f64> {
    let n = x.nrows() as f64;
    let (d1, d2) = (x.ncols(), z.ncols());
    let center = |m: &DMatrix<f64>| {
        let mut m = m.clone();
        if centered {
            for j in 0..m.ncols() {
                let mu = m.column(j).mean();
                m.column_mut(j).add_scalar_mut(-mu);
            }
        }
        m
    };
    let (x, z) = (center(x), center(z));
    let d = d1 + d2;
    let mut a = DMatrix::zeros(d, d);
    let mut b = DMatrix::zeros(d, d);
    let cxz = x.tr_mul(&z) / n;
    a.view_mut((0, d1), (d1, d2)).copy_from(&cxz);
    a.view_mut((d1, 0), (d2, d1)).copy_from(&cxz.transpose());
    b.view_mut((0, 0), (d1, d1)).copy_from(&(x.tr_mul(&x) / n + DMatrix::identity(d1, d1) * kappa));
    b.view_mut((d1, d1), (d2, d2)).copy_from(&(z.tr_mul(&z) / n + DMatrix::identity(d2, d2) * kappa));
    let l = b.cholesky().expect("regularized covariance is positive definite").l();
    let li = l.clone().try_inverse().expect("triangular factor inverts");
    let m = &li * a * li.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|p, q| q.total_cmp(p));
    ev.truncate(d1.min(d2));
    ev
}

pub fn solver_correlations(x: &DMatrix<f64>, z: &DMatrix<f64>, k: usize, kappa: f64, centered: bool) -> Vec<f64> {
    let summary = cca::accumulate_covariance(&CsrMatrix::from_dense(x), &CsrMatrix::from_dense(z), WhiteningMode::Full)
        .expect("summary");
    let params = CcaParams {
        centered,
        ..CcaParams::default().with_k(k).with_regularization(Regularization::Absolute(kappa))
    };
    cca::solve_cca(&summary, &params).expect("cca").singular_values
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Accelerated projected gradient on the box-constrained dual
/// `min ½ αᵀQα − 1ᵀα, 0 ≤ α ≤ C`, `Q_ij = y_i y_j (x_iᵀx_j + 1)`.
/// Returns the primal value at the recovered `(w, b)`.
pub fn svm_oracle(examples: &[Example], c: f64) -> (Vec<f64>, f64, f64) {
    let n = examples.len();
    let y: Vec<f64> = examples.iter().map(|e| if e.positive { 1.0 } else { -1.0 }).collect();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * (dot(&examples[i].x, &examples[j].x) + 1.0));
    let lip = SymmetricEigen::new(q.clone()).eigenvalues.max().max(1e-12);
    let step = 1.0 / lip;
    let proj = |v: f64| v.clamp(0.0, c);
    let mut alpha = nalgebra::DVector::<f64>::zeros(n);
    let mut prev = alpha.clone();
    let mut t = 1.0f64;
    let ones = nalgebra::DVector::from_element(n, 1.0);
    for it in 0..500_000 {
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = &alpha + (&alpha - &prev) * ((t - 1.0) / t_next);
        let grad = &q * &mom - &ones;
        prev = alpha;
        alpha = (&mom - grad * step).map(proj);
        t = t_next;
        if it % 200 == 199 {
            let g = &q * &alpha - &ones;
            let pg = (0..n)
                .map(|i| {
                    if alpha[i] <= 0.0 {
                        g[i].min(0.0)
                    } else if alpha[i] >= c {
                        g[i].max(0.0)
                    } else {
                        g[i]
                    }
                })
                .fold(0.0f64, |m, v| m.max(v.abs()));
            if pg < 1e-12 {
                break;
            }
            // Restart momentum so the iterates settle.
            prev = alpha.clone();
            t = 1.0;
        }
    }
    let d = examples[0].x.len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for i in 0..n {
        for j in 0..d {
            w[j] += alpha[i] * y[i] * examples[i].x[j];
        }
        b += alpha[i] * y[i];
    }
    let primal = 0.5 * (dot(&w, &w) + b * b)
        + examples
            .iter()
            .zip(&y)
            .map(|(e, yi)| c * (1.0 - yi * (dot(&w, &e.x) + b)).max(0.0))
            .sum::<f64>();
    (w, b, primal)
}

/// Linearly separable points with a margin around a random hyperplane.
pub fn separable_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Example> {
    let normal: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let offset: f64 = rng.random_range(-0.5..0.5);
    let mut out = Vec::new();
    while out.len() < n {
        let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let s = dot(&normal, &x) + offset;
        if s.abs() < 0.3 {
            continue;
        }
        let positive = if out.len() == 0 { true } else if out.len() == 1 { false } else { s > 0.0 };
        let x = if (s > 0.0) != positive { x.iter().map(|v| -v).collect() } else { x };
        out.push(Example { x, positive });
    }
    out
}

pub fn all_paths(n: usize) -> Vec<Vec<Tag>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p: Vec<Tag>| {
                Tag::ALL.iter().map(move |&t| {
                    let mut q = p.clone();
                    q.push(t);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn brute_log_partition(layout: &Layout, w: &[f64], obs: &[Vec<(u32, f64)>]) -> f64 {
    let scores: Vec<f64> = all_paths(obs.len()).iter().map(|p| path_score(layout, w, obs, p)).collect();
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

pub fn brute_best_path(layout: &Layout, w: &[f64], obs: &[Vec<(u32, f64)>]) -> (Vec<Tag>, f64) {
    all_paths(obs.len())
        .into_iter()
        .map(|p| {
            let s = path_score(layout, w, obs, &p);
            (p, s)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one path")
}

pub fn sentences_of(corpus: &SynthCorpus) -> Vec<Sentence> {
    let docs = corpus
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| Document::new(format!("doc{}", i), d))
        .collect();
    DocumentReader::from_documents(docs)
        .sentences(Segmenter::default())
        .collect::<forge_core::Result<_>>()
        .expect("synthetic text segments")
}

/// Occurrences of every extracted candidate in a synthetic corpus.
pub fn synthetic_views(corpus: &SynthCorpus) -> views::ViewData {
    let sents = sentences_of(corpus);
    let ex = Extractor::new(extract::parse_patterns(synth::PATTERN_TOML).unwrap()).unwrap();
    let matches: Vec<_> = sents.iter().flat_map(|s| ex.extract(s)).collect();
    let cands = extract::aggregate_candidates(&matches);
    let occ = views::collect_occurrences(sents.iter().cloned().map(Ok), &cands).unwrap();
    views::build_design_matrices(&occ, &ViewOptions::default()).unwrap()
}

/// extract, views, CCA at rank `k`, SVM on the seed set.
pub fn cca_dictionary(corpus: &SynthCorpus, vd: &views::ViewData, k: usize, c: f64) -> Dictionary {
    let summary = cca::accumulate_covariance(&vd.x, &vd.z, WhiteningMode::default()).unwrap();
    let model = cca::solve_cca(&summary, &CcaParams::default().with_k(k)).unwrap();
    let emb = cca::embed_phrases(&model, &vd.phrase_vectors().unwrap()).unwrap();
    let svm = classifier::train_on_seeds(&emb, &corpus.seeds, &SvmParams::default().with_c(c)).unwrap();
    classifier::build_dictionary(&emb, &svm, 0.0, &[]).unwrap()
}

pub fn dictionary_tagging_f1(dict: &Dictionary, gold: &GoldCorpus) -> EvalReport {
    let tagger = DictionaryTagger::new(dict);
    tagger::evaluate(&tagger.tag_all(&gold.sentences), gold).unwrap()
}

/// DL-CoTrain with θ picked by dictionary-tagging F1 on the dev split
/// (ties to the smaller θ).
pub fn cotrain_dictionary(corpus: &SynthCorpus, vd: &views::ViewData) -> (Dictionary, f64) {
    let state = cotrain::dl_cotrain(&vd.occurrences(), &corpus.seeds, &CotrainParams::default()).unwrap();
    let mut best: Option<(Dictionary, f64, f64)> = None;
    for i in 1..=9 {
        let theta = i as f64 / 10.0;
        let d = cotrain::dictionary_from_rules(&state, theta).unwrap();
        let f = dictionary_tagging_f1(&d, &corpus.dev).f1;
        if best.as_ref().is_none_or(|b| f > b.2) {
            best = Some((d, theta, f));
        }
    }
    let (d, theta, _) = best.unwrap();
    (d, theta)
}

pub fn truth_f1(dict: &Dictionary, corpus: &SynthCorpus) -> EvalReport {
    tagger::compare_phrase_sets(dict.phrases(), corpus.truth().iter().copied())
}
