//! Seed-supervised linear SVM over phrase embeddings.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cca::PhraseEmbedding;
use crate::dictionary::{normalize_phrase, Dictionary, Provenance};
use crate::error::{Error, Result};

/// Positive and negative seed phrases, lowercased.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedSet {
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

impl SeedSet {
    pub fn new<S: AsRef<str>>(positives: &[S], negatives: &[S]) -> Result<SeedSet> {
        let norm = |v: &[S]| -> Vec<String> {
            let mut out: Vec<String> = Vec::new();
            for p in v.iter().filter_map(|s| normalize_phrase(s.as_ref())) {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
            out
        };
        let seeds = SeedSet {
            positives: norm(positives),
            negatives: norm(negatives),
        };
        if let Some(p) = seeds.positives.iter().find(|p| seeds.negatives.contains(p)) {
            return Err(Error::ConflictingSeed(p.clone()));
        }
        Ok(seeds)
    }

    /// Sections `[positive]` and `[negative]`, one phrase per line; `#`
    /// starts a comment line.
    pub fn parse(text: &str, path: &Path) -> Result<SeedSet> {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut section: Option<bool> = None;
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.to_ascii_lowercase().as_str() {
                "[positive]" => section = Some(true),
                "[negative]" => section = Some(false),
                _ => match section {
                    Some(true) => pos.push(line.to_string()),
                    Some(false) => neg.push(line.to_string()),
                    None => return Err(Error::parse(path, no + 1, "seed outside a [positive]/[negative] section")),
                },
            }
        }
        SeedSet::new(&pos, &neg)
    }

    pub fn load(path: &Path) -> Result<SeedSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SeedSet::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("[positive]\n");
        for p in &self.positives {
            s.push_str(p);
            s.push('\n');
        }
        s.push_str("[negative]\n");
        for p in &self.negatives {
            s.push_str(p);
            s.push('\n');
        }
        s
    }

    /// Fails with every seed that `known` rejects.
    pub fn check_resolved(&self, known: impl Fn(&str) -> bool) -> Result<()> {
        let missing: Vec<String> = self
            .positives
            .iter()
            .chain(&self.negatives)
            .filter(|p| !known(p))
            .cloned()
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::UnresolvedSeeds(missing))
        }
    }

    pub fn label_of(&self, phrase: &str) -> Option<bool> {
        if self.positives.iter().any(|p| p == phrase) {
            Some(true)
        } else if self.negatives.iter().any(|p| p == phrase) {
            Some(false)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub tolerance: f64,
    pub max_epochs: usize,
    /// Scale C per class by n / (2 n_class).
    pub class_balanced: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 0.1,
            tolerance: 1e-6,
            max_epochs: 100_000,
            class_balanced: false,
        }
    }
}

impl SvmParams {
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub dims_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub entity: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub positive: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn class_costs(examples: &[Example], params: &SvmParams) -> (f64, f64) {
    if !params.class_balanced {
        return (params.c, params.c);
    }
    let n = examples.len() as f64;
    let np = examples.iter().filter(|e| e.positive).count() as f64;
    (params.c * n / (2.0 * np), params.c * n / (2.0 * (n - np)))
}

/// `½(‖w‖² + b²) + Σ C_i max(0, 1 − y_i(wᵀx_i + b))`. The bias is
/// regularized like any other weight (it is an appended constant feature).
pub fn primal_objective(model: &SvmModel, examples: &[Example], params: &SvmParams) -> f64 {
    let (cp, cn) = class_costs(examples, params);
    let reg = 0.5 * (dot(&model.weights, &model.weights) + model.bias * model.bias);
    let loss: f64 = examples
        .iter()
        .map(|e| {
            let y = if e.positive { 1.0 } else { -1.0 };
            let ci = if e.positive { cp } else { cn };
            ci * (1.0 - y * (dot(&model.weights, &e.x) + model.bias)).max(0.0)
        })
        .sum();
    reg + loss
}

/// Dual coordinate descent on the L1-loss SVM dual, sweeping examples in
/// their given order.
pub fn train_svm(examples: &[Example], params: &SvmParams) -> Result<SvmModel> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {}", params.c)));
    }
    let npos = examples.iter().filter(|e| e.positive).count();
    if npos == 0 || npos == examples.len() {
        return Err(Error::InvalidArgument(
            "training needs at least one positive and one negative seed".into(),
        ));
    }
    let d = examples[0].x.len();
    if let Some(e) = examples.iter().find(|e| e.x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: e.x.len(),
        });
    }
    let (cp, cn) = class_costs(examples, params);
    let n = examples.len();
    let y: Vec<f64> = examples.iter().map(|e| if e.positive { 1.0 } else { -1.0 }).collect();
    let upper: Vec<f64> = examples.iter().map(|e| if e.positive { cp } else { cn }).collect();
    let qii: Vec<f64> = examples.iter().map(|e| dot(&e.x, &e.x) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for epoch in 0..params.max_epochs {
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let g = y[i] * (dot(&w, &examples[i].x) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= upper[i] {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, upper[i]);
                let delta = (alpha[i] - old) * y[i];
                for (wj, xj) in w.iter_mut().zip(&examples[i].x) {
                    *wj += delta * xj;
                }
                b += delta;
            }
        }
        if pg_max - pg_min <= params.tolerance {
            log::debug!("svm converged after {} epochs", epoch + 1);
            break;
        }
        if epoch + 1 == params.max_epochs {
            log::warn!("svm stopped at the epoch limit ({}); gap {}", params.max_epochs, pg_max - pg_min);
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Numerical("non-finite SVM weights".into()));
    }
    Ok(SvmModel {
        weights: w,
        bias: b,
        c: params.c,
        dims_used: d,
    })
}

/// Pairs every seed with its embedding and trains.
pub fn train_on_seeds(embeddings: &[PhraseEmbedding], seeds: &SeedSet, params: &SvmParams) -> Result<SvmModel> {
    let table: HashMap<&str, &[f64]> = embeddings.iter().map(|e| (e.phrase.as_str(), e.vector.as_slice())).collect();
    seeds.check_resolved(|p| table.contains_key(p))?;
    let examples: Vec<Example> = seeds
        .positives
        .iter()
        .map(|p| (p, true))
        .chain(seeds.negatives.iter().map(|p| (p, false)))
        .map(|(p, positive)| Example {
            x: table[p.as_str()].to_vec(),
            positive,
        })
        .collect();
    train_svm(&examples, params)
}

impl SvmModel {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dims_used {
            return Err(Error::DimensionMismatch {
                expected: self.dims_used,
                found: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    /// Score ≥ 0 is an entity.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let score = self.score(x)?;
        Ok(Prediction {
            entity: score >= 0.0,
            score,
        })
    }
}

/// Candidates with score ≥ `threshold`, ordered by score descending then
/// phrase. Metadata pairs are copied onto the dictionary.
pub fn build_dictionary(
    embeddings: &[PhraseEmbedding],
    model: &SvmModel,
    threshold: f64,
    metadata: &[(&str, String)],
) -> Result<Dictionary> {
    fn score<'a>(model: &SvmModel, e: &'a PhraseEmbedding) -> Result<(&'a str, f64)> {
        model.score(&e.vector).map(|s| (e.phrase.as_str(), s))
    }
    #[cfg(feature = "parallel")]
    let scored: Result<Vec<(&str, f64)>> = {
        use rayon::prelude::*;
        embeddings.par_iter().map(|e| score(model, e)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let scored: Result<Vec<(&str, f64)>> = embeddings.iter().map(|e| score(model, e)).collect();
    let mut kept: Vec<(&str, f64)> = scored?.into_iter().filter(|&(_, s)| s >= threshold).collect();
    kept.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut dict = Dictionary::new(Provenance::Cca).with_meta("C", model.c).with_meta("dims", model.dims_used);
    for (k, v) in metadata {
        dict.metadata.insert(k.to_string(), v.clone());
    }
    for (p, s) in kept {
        dict.insert(p, Some(s));
    }
    if dict.is_empty() {
        log::warn!("no candidate was predicted to be an entity; dictionary is empty");
    }
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(x: &[f64], positive: bool) -> Example {
        Example { x: x.to_vec(), positive }
    }

    #[test]
    fn separable_line() {
        let data = vec![ex(&[1.0, 0.0], true), ex(&[2.0, 0.0], true), ex(&[-1.0, 0.0], false), ex(&[-2.0, 0.0], false)];
        let m = train_svm(&data, &SvmParams::default().with_c(10.0)).unwrap();
        assert!(m.weights[0] > 0.0);
        for e in &data {
            assert_eq!(m.predict(&e.x).unwrap().entity, e.positive);
        }
        let obj = primal_objective(&m, &data, &SvmParams::default().with_c(10.0));
        let zero = SvmModel { weights: vec![0.0; 2], bias: 0.0, c: 10.0, dims_used: 2 };
        assert!(obj <= primal_objective(&zero, &data, &SvmParams::default().with_c(10.0)) + 1e-8);
    }

    #[test]
    fn one_class_and_dimension_errors() {
        assert!(train_svm(&[ex(&[1.0], true), ex(&[2.0], true)], &SvmParams::default()).is_err());
        assert!(matches!(
            train_svm(&[ex(&[1.0], true), ex(&[2.0, 1.0], false)], &SvmParams::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(train_svm(&[ex(&[1.0], true), ex(&[-1.0], false)], &SvmParams::default().with_c(0.0)).is_err());
    }

    #[test]
    fn prediction_tie_goes_to_entity() {
        let m = SvmModel { weights: vec![1.0, 0.0], bias: 0.0, c: 1.0, dims_used: 2 };
        let p = m.predict(&[0.3, 9.0]).unwrap();
        assert!(p.entity);
        assert!((p.score - 0.3).abs() < 1e-15);
        assert!(m.predict(&[0.0, -4.0]).unwrap().entity);
        assert!(!m.predict(&[-1e-12, 0.0]).unwrap().entity);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn seed_file_parsing() {
        let text = "# seeds\n[positive]\nHuman immunodeficiency\nflu\n[negative]\nmutant\n";
        let s = SeedSet::parse(text, Path::new("s.txt")).unwrap();
        assert_eq!(s.positives, vec!["human immunodeficiency", "flu"]);
        assert_eq!(s.negatives, vec!["mutant"]);
        assert_eq!(SeedSet::parse(&s.to_text(), Path::new("s")).unwrap(), s);
        assert!(matches!(
            SeedSet::parse("[positive]\nflu\n[negative]\nFLU\n", Path::new("s")),
            Err(Error::ConflictingSeed(_))
        ));
        assert!(SeedSet::parse("flu\n", Path::new("s")).is_err());
    }

    #[test]
    fn unresolved_seeds_are_reported() {
        let emb = vec![PhraseEmbedding { phrase: "flu".into(), vector: vec![1.0] }];
        let seeds = SeedSet::new(&["flu", "ebola"], &["mutant"]).unwrap();
        match train_on_seeds(&emb, &seeds, &SvmParams::default()) {
            Err(Error::UnresolvedSeeds(v)) => assert_eq!(v, vec!["ebola", "mutant"]),
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn dictionary_ordering_and_threshold() {
        let m = SvmModel { weights: vec![1.0], bias: 0.0, c: 1.0, dims_used: 1 };
        let emb: Vec<PhraseEmbedding> = [("a", 0.5), ("b", 2.0), ("c", -1.0), ("d", 0.5), ("e", 0.0)]
            .iter()
            .map(|&(p, v)| PhraseEmbedding { phrase: p.into(), vector: vec![v] })
            .collect();
        let d = build_dictionary(&emb, &m, 0.0, &[("k", "1".into())]).unwrap();
        assert_eq!(d.phrases().collect::<Vec<_>>(), vec!["b", "a", "d", "e"]);
        assert_eq!(d.provenance, Provenance::Cca);
        assert_eq!(d.metadata["k"], "1");
        let mut last = usize::MAX;
        for t in [-2.0, -0.5, 0.0, 0.5, 1.0, 3.0] {
            let n = build_dictionary(&emb, &m, t, &[]).unwrap().len();
            assert!(n <= last);
            last = n;
        }
        assert!(build_dictionary(&emb, &m, 10.0, &[]).unwrap().is_empty());
    }
}
