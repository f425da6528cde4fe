//! Linear-chain CRF tagger over {B, I, O}.

pub mod chain;
pub mod features;
pub mod lbfgs;

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use chain::{Encoded, Layout};
pub use features::{
    sentinel_scale, EmbeddingFeatures, EmbeddingMode, Extractor, FeatureConfig, NamedDictionary, Observations,
    Templates,
};
pub use lbfgs::{LbfgsOutcome, LbfgsParams};

use crate::error::{Error, Result};
use crate::tagger::{evaluate, EvalReport, GoldCorpus, Tag, TaggedSentence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub config: FeatureConfig,
    pub layout: Layout,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub lambda: f64,
}

/// Observation features of one token conjoined with a candidate label, plus
/// the label-transition feature(s) for `prev` (`None` at sentence start).
pub fn extract_features<S: AsRef<str>>(
    config: &FeatureConfig,
    tokens: &[S],
    position: usize,
    prev: Option<Tag>,
    prev2: Option<Tag>,
    label: Tag,
) -> Vec<(String, f64)> {
    let obs = Extractor::new(config).observations(tokens);
    let mut out: Vec<(String, f64)> = obs[position]
        .iter()
        .map(|(n, v)| (format!("{}|y={}", n, label), *v))
        .collect();
    let name = |t: Option<Tag>| t.map_or("start", |t| t.as_str());
    out.push((format!("trans={}>{}", name(prev), label), 1.0));
    if config.templates.prev2 && position > 0 {
        out.push((format!("trans2={}>{}>{}", name(prev2), name(prev), label), 1.0));
    }
    out
}

fn encode_with(index: &HashMap<&str, u32>, obs: Observations, tags: Option<Vec<Tag>>) -> Encoded {
    Encoded {
        obs: obs
            .into_iter()
            .map(|tok| tok.into_iter().filter_map(|(n, v)| index.get(n.as_str()).map(|&i| (i, v))).collect())
            .collect(),
        tags,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub outcome_iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub gradient_norm: f64,
}

/// Feature index over the training data (sorted names) and encoded data.
pub fn prepare(config: &FeatureConfig, data: &[TaggedSentence]) -> (Vec<String>, Vec<Encoded>) {
    let ex = Extractor::new(config);
    let obs: Vec<Observations> = data.iter().map(|s| ex.observations(&s.tokens)).collect();
    let names: BTreeSet<&str> = obs.iter().flatten().flatten().map(|(n, _)| n.as_str()).collect();
    let names: Vec<String> = names.into_iter().map(String::from).collect();
    let index: HashMap<&str, u32> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i as u32)).collect();
    let encoded = obs
        .into_iter()
        .zip(data)
        .map(|(o, s)| encode_with(&index, o, Some(s.tags.clone())))
        .collect();
    (names, encoded)
}

/// Maximizes `Σ log p(y|x) − λ‖w‖²` from `init` (zeros when `None`).
pub fn train_from(
    config: &FeatureConfig,
    data: &[TaggedSentence],
    lambda: f64,
    params: &LbfgsParams,
    init: Option<Vec<f64>>,
) -> Result<(CrfModel, TrainReport)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no training sentences"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {}", lambda)));
    }
    let (names, encoded) = prepare(config, data);
    let layout = Layout {
        n_obs: names.len(),
        prev2: config.templates.prev2,
    };
    let x0 = init.unwrap_or_else(|| vec![0.0; layout.dim()]);
    if x0.len() != layout.dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            found: x0.len(),
        });
    }
    let objective = |w: &[f64]| {
        let (ll, g) = chain::log_likelihood_and_gradient(&layout, w, &encoded, lambda)?;
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("objective diverged to {}", ll)));
        }
        Ok((-ll, g.into_iter().map(|v| -v).collect()))
    };
    let out = lbfgs::minimize(objective, x0, params)?;
    if out.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite CRF weights".into()));
    }
    log::debug!(
        "crf: {} iterations, objective {:.6}, |g| = {:.2e}, {} features",
        out.iterations,
        -out.value,
        out.gradient_norm,
        names.len()
    );
    let report = TrainReport {
        outcome_iterations: out.iterations,
        converged: out.converged,
        objective: -out.value,
        gradient_norm: out.gradient_norm,
    };
    Ok((
        CrfModel {
            config: config.clone(),
            layout,
            feature_names: names,
            weights: out.x,
            lambda,
        },
        report,
    ))
}

pub fn train(config: &FeatureConfig, data: &[TaggedSentence], lambda: f64) -> Result<CrfModel> {
    train_from(config, data, lambda, &LbfgsParams::default(), None).map(|(m, _)| m)
}

/// Trains once per λ and keeps the model with the best dev F1 (ties go to
/// the smaller λ).
pub fn train_select(
    config: &FeatureConfig,
    train_data: &[TaggedSentence],
    dev: &GoldCorpus,
    lambdas: &[f64],
) -> Result<(CrfModel, Vec<(f64, EvalReport)>)> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(CrfModel, f64)> = None;
    let mut reports = Vec::new();
    for &l in &sorted {
        let m = train(config, train_data, l)?;
        let r = m.evaluate(dev)?;
        reports.push((l, r));
        if best.as_ref().is_none_or(|(_, f)| r.f1 > *f) {
            best = Some((m, r.f1));
        }
    }
    Ok((best.unwrap().0, reports))
}

impl CrfModel {
    fn index(&self) -> HashMap<&str, u32> {
        self.feature_names.iter().enumerate().map(|(i, n)| (n.as_str(), i as u32)).collect()
    }

    /// Unknown feature names are dropped.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Encoded {
        let obs = Extractor::new(&self.config).observations(tokens);
        encode_with(&self.index(), obs, None)
    }

    pub fn tag<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Tag> {
        chain::viterbi(&self.layout, &self.weights, &self.encode(tokens).obs)
    }

    pub fn tag_all(&self, sentences: &[TaggedSentence]) -> Vec<Vec<Tag>> {
        let ex = Extractor::new(&self.config);
        let index = self.index();
        let run = |s: &TaggedSentence| {
            let e = encode_with(&index, ex.observations(&s.tokens), None);
            chain::viterbi(&self.layout, &self.weights, &e.obs)
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            sentences.par_iter().map(run).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            sentences.iter().map(run).collect()
        }
    }

    pub fn evaluate(&self, gold: &GoldCorpus) -> Result<EvalReport> {
        evaluate(&self.tag_all(&gold.sentences), gold)
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        serde_json::to_writer(&mut w, self)
            .map_err(std::io::Error::other)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<CrfModel> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let m: CrfModel = serde_json::from_reader(std::io::BufReader::new(f))
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if m.weights.len() != m.layout.dim() || m.layout.n_obs != m.feature_names.len() {
            return Err(Error::parse(path, 0, "weight vector does not match the feature index"));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub variant: String,
    pub size: usize,
    pub lambda: f64,
    pub report: EvalReport,
}

/// Trains every variant on the first `size` training sentences and scores
/// it on `test`. With a dev set, λ is picked per point from `lambdas`;
/// without one the grid must hold a single value.
pub fn learning_curve(
    train_data: &GoldCorpus,
    dev: Option<&GoldCorpus>,
    test: &GoldCorpus,
    sizes: &[usize],
    variants: &[(String, FeatureConfig)],
    lambdas: &[f64],
) -> Result<Vec<CurvePoint>> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("training sizes must be ascending".into()));
    }
    if let Some(&s) = sizes.iter().find(|&&s| s > train_data.len() || s == 0) {
        return Err(Error::InvalidArgument(format!(
            "training size {} outside 1..={}",
            s,
            train_data.len()
        )));
    }
    if dev.is_none() && lambdas.len() != 1 {
        return Err(Error::InvalidArgument("a lambda grid needs a dev set".into()));
    }
    let mut out = Vec::new();
    for &size in sizes {
        let subset = &train_data.sentences[..size];
        for (name, cfg) in variants {
            let (model, lambda) = match dev {
                Some(d) => {
                    let (m, _) = train_select(cfg, subset, d, lambdas)?;
                    let l = m.lambda;
                    (m, l)
                }
                None => (train(cfg, subset, lambdas[0])?, lambdas[0]),
            };
            let report = model.evaluate(test)?;
            log::info!("curve {} n={} λ={} F1={:.4}", name, size, lambda, report.f1);
            out.push(CurvePoint {
                variant: name.clone(),
                size,
                lambda,
                report,
            });
        }
    }
    Ok(out)
}

/// `variant size lambda precision recall f1`, tab-separated with a header.
pub fn write_curve<W: Write>(out: &mut W, points: &[CurvePoint]) -> std::io::Result<()> {
    writeln!(out, "variant\tsize\tlambda\tprecision\trecall\tf1")?;
    for p in points {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            p.variant, p.size, p.lambda, p.report.precision, p.report.recall, p.report.f1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagger::parse_conll;

    fn corpus(text: &str) -> GoldCorpus {
        parse_conll(text, Path::new("t")).unwrap()
    }

    #[test]
    fn memorizes_one_sentence() {
        let g = corpus("patients\tO\nwith\tO\nhepatitis\tB\nb\tI\nrecovered\tO\n");
        let m = train(&FeatureConfig::baseline(), &g.sentences, 1e-4).unwrap();
        assert_eq!(m.tag(&g.sentences[0].tokens), g.sentences[0].tags);
    }

    #[test]
    fn heavy_regularization_shrinks_weights() {
        let g = corpus("the\tO\nflu\tB\nspread\tO\n\nno\tO\nflu\tB\n");
        let m = train(&FeatureConfig::baseline(), &g.sentences, 1e6).unwrap();
        assert!(m.weight_norm() <= 1e-3, "{}", m.weight_norm());
    }

    #[test]
    fn conjoined_feature_listing() {
        let f = extract_features(&FeatureConfig::baseline(), &["flu"], 0, None, None, Tag::B);
        assert!(f.iter().any(|(n, _)| n == "w=flu|y=B"));
        assert!(f.iter().any(|(n, _)| n == "trans=start>B"));
    }

    #[test]
    fn unknown_features_are_ignored_at_inference() {
        let g = corpus("the\tO\nflu\tB\n");
        let m = train(&FeatureConfig::baseline(), &g.sentences, 0.1).unwrap();
        let e = m.encode(&["zzz", "qqq"]);
        assert!(e.obs.iter().flatten().all(|&(i, _)| (i as usize) < m.feature_names.len()));
        assert_eq!(m.tag(&["zzz", "qqq"]).len(), 2);
    }

    #[test]
    fn save_and_load() {
        let g = corpus("the\tO\nflu\tB\n");
        let m = train(&FeatureConfig::baseline(), &g.sentences, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("crf.model");
        m.save(&p).unwrap();
        assert_eq!(CrfModel::load(&p).unwrap(), m);
    }

    #[test]
    fn empty_training_set_fails() {
        assert!(train(&FeatureConfig::baseline(), &[], 0.1).is_err());
    }
}
