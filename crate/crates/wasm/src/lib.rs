//! Browser bindings for the demo page in `www/`.
//!
//! Each exported function takes plain values and returns a JSON string; the
//! `*_json` functions are the same operations callable from Rust.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use forge_core::cca::{self, CcaParams, Regularization, WhiteningMode};
use forge_core::classifier::{self, SvmParams};
use forge_core::corpus::{Document, DocumentReader, Segmenter, Sentence};
use forge_core::dictionary::{Dictionary, Provenance};
use forge_core::extract::{self, Extractor};
use forge_core::sparse::CsrMatrix;
use forge_core::synth::{self, SynthConfig};
use forge_core::tagger::{self, DictionaryTagger, Tag};
use forge_core::views::{self, ViewOptions};
use forge_core::{Error, Result};

#[derive(Serialize)]
struct TaggedOut {
    tokens: Vec<String>,
    tags: Vec<&'static str>,
}

#[derive(Serialize)]
struct TagResult {
    sentences: Vec<TaggedOut>,
    entities: usize,
    dictionary_size: usize,
}

fn split(text: &str) -> Vec<Sentence> {
    DocumentReader::from_documents(vec![Document::new("input", text)])
        .sentences(Segmenter::default())
        .filter_map(|s| s.ok())
        .collect()
}

/// Dictionary lines are `phrase` or `phrase TAB score`.
pub fn tag_text_json(dictionary: &str, text: &str, case_sensitive: bool) -> Result<String> {
    let dict = Dictionary::parse(dictionary, "dictionary".as_ref(), Provenance::Manual)?;
    let tagger = DictionaryTagger::new(&dict).case_sensitive(case_sensitive);
    let mut entities = 0;
    let sentences = split(text)
        .iter()
        .map(|s| {
            let tokens: Vec<String> = s.texts().into_iter().map(str::to_string).collect();
            let tags = tagger.tag(&tokens);
            entities += tags.iter().filter(|t| **t == Tag::B).count();
            TaggedOut {
                tokens,
                tags: tags.into_iter().map(Tag::as_str).collect(),
            }
        })
        .collect();
    Ok(serde_json::to_string(&TagResult {
        sentences,
        entities,
        dictionary_size: dict.len(),
    })
    .expect("serializes"))
}

#[derive(Serialize)]
struct CorrelationResult {
    kappa: f64,
    correlations: Vec<f64>,
}

/// Two `d`-dimensional views sharing `shared` latent factors, with
/// per-view noise of standard deviation `noise`; returns every canonical
/// correlation under an absolute ridge `kappa`.
pub fn correlations_json(n: usize, d: usize, shared: usize, noise: f64, kappa: f64, seed: u64) -> Result<String> {
    if n == 0 || d == 0 || shared > d {
        return Err(Error::InvalidArgument("need n > 0 and 0 <= shared <= d".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
    let mix_x: Vec<f64> = (0..d * shared).map(|_| g()).collect();
    let mix_z: Vec<f64> = (0..d * shared).map(|_| g()).collect();
    let mut x = DMatrix::zeros(n, d);
    let mut z = DMatrix::zeros(n, d);
    for i in 0..n {
        let h: Vec<f64> = (0..shared).map(|_| g()).collect();
        for j in 0..d {
            let sx: f64 = (0..shared).map(|s| mix_x[j * shared + s] * h[s]).sum();
            let sz: f64 = (0..shared).map(|s| mix_z[j * shared + s] * h[s]).sum();
            x[(i, j)] = sx + noise * g();
            z[(i, j)] = sz + noise * g();
        }
    }
    let summary = cca::accumulate_covariance(&CsrMatrix::from_dense(&x), &CsrMatrix::from_dense(&z), WhiteningMode::Full)?;
    let model = cca::solve_cca(
        &summary,
        &CcaParams {
            centered: true,
            ..CcaParams::default().with_k(d).with_regularization(Regularization::Absolute(kappa))
        },
    )?;
    Ok(serde_json::to_string(&CorrelationResult {
        kappa,
        correlations: model.singular_values,
    })
    .expect("serializes"))
}

#[derive(Serialize)]
struct Point {
    phrase: String,
    x: f64,
    y: f64,
    score: f64,
    entity: bool,
    /// "positive", "negative" or "".
    seed: &'static str,
}

#[derive(Serialize)]
struct PipelineResult {
    sentences: usize,
    candidates: usize,
    occurrences: usize,
    correlations: Vec<f64>,
    dictionary_size: usize,
    precision: f64,
    recall: f64,
    f1: f64,
    points: Vec<Point>,
}

/// Generates a synthetic corpus, runs extraction, views, CCA and the seed
/// SVM, and scores the dictionary against the planted entities. Points are
/// the embeddings projected on their top two principal axes.
pub fn synthetic_pipeline_json(seed: u64, sentences: usize, k: usize, c: f64) -> Result<String> {
    let corpus = synth::generate(&SynthConfig {
        seed,
        sentences,
        train_sentences: 0,
        dev_sentences: 0,
        test_sentences: 0,
        ..SynthConfig::default()
    })?;
    let docs = corpus
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| Document::new(format!("doc{}", i), d))
        .collect();
    let sents: Vec<Sentence> = DocumentReader::from_documents(docs)
        .sentences(Segmenter::default())
        .collect::<Result<_>>()?;
    let ex = Extractor::new(extract::parse_patterns(synth::PATTERN_TOML)?)?;
    let matches: Vec<_> = sents.iter().flat_map(|s| ex.extract(s)).collect();
    let cands = extract::aggregate_candidates(&matches);
    let occ = views::collect_occurrences(sents.iter().cloned().map(Ok), &cands)?;
    let vd = views::build_design_matrices(&occ, &ViewOptions::default())?;
    let summary = cca::accumulate_covariance(&vd.x, &vd.z, WhiteningMode::default())?;
    let k = k.min(vd.x.ncols()).min(vd.z.ncols());
    let model = cca::solve_cca(&summary, &CcaParams::default().with_k(k))?;
    let emb = cca::embed_phrases(&model, &vd.phrase_vectors()?)?;
    let svm = classifier::train_on_seeds(&emb, &corpus.seeds, &SvmParams::default().with_c(c))?;
    let dict = classifier::build_dictionary(&emb, &svm, 0.0, &[])?;
    let truth = corpus.truth();
    let r = tagger::compare_phrase_sets(dict.phrases(), truth.iter().copied());

    let coords = principal_axes(&emb.iter().map(|e| e.vector.as_slice()).collect::<Vec<_>>());
    let points = emb
        .iter()
        .zip(coords)
        .map(|(e, (x, y))| Point {
            phrase: e.phrase.clone(),
            x,
            y,
            score: svm.score(&e.vector).unwrap_or(f64::NAN),
            entity: truth.contains(e.phrase.as_str()),
            seed: match corpus.seeds.label_of(&e.phrase) {
                Some(true) => "positive",
                Some(false) => "negative",
                None => "",
            },
        })
        .collect();
    Ok(serde_json::to_string(&PipelineResult {
        sentences: sents.len(),
        candidates: cands.len(),
        occurrences: vd.n(),
        correlations: model.singular_values,
        dictionary_size: dict.len(),
        precision: r.precision,
        recall: r.recall,
        f1: r.f1,
        points,
    })
    .expect("serializes"))
}

/// Coordinates on the two leading principal axes (zeros when degenerate).
fn principal_axes(rows: &[&[f64]]) -> Vec<(f64, f64)> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if n < 2 || d == 0 {
        return vec![(0.0, 0.0); n];
    }
    let mut m = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let mean = m.column(j).mean();
        m.column_mut(j).add_scalar_mut(-mean);
    }
    let svd = forge_core::linalg::exact_svd(&m, d.min(2));
    (0..n)
        .map(|i| {
            let at = |c: usize| {
                if c < svd.singular_values.len() {
                    svd.u[(i, c)] * svd.singular_values[c]
                } else {
                    0.0
                }
            };
            (at(0), at(1))
        })
        .collect()
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn tag_text(dictionary: &str, text: &str, case_sensitive: bool) -> std::result::Result<String, JsError> {
    js(tag_text_json(dictionary, text, case_sensitive))
}

#[wasm_bindgen]
pub fn correlations(
    n: usize,
    d: usize,
    shared: usize,
    noise: f64,
    kappa: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(correlations_json(n, d, shared, noise, kappa, seed as u64))
}

#[wasm_bindgen]
pub fn synthetic_pipeline(seed: u32, sentences: usize, k: usize, c: f64) -> std::result::Result<String, JsError> {
    js(synthetic_pipeline_json(seed as u64, sentences, k, c))
}
