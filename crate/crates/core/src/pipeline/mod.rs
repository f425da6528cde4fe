//! One-config orchestration of the whole workflow with memoized stages.
//!
//! Every stage reads its inputs from disk (the corpus, the config's files
//! and earlier stages' outputs under `out/`) and is keyed by a SHA-256 over
//! its parameters and input hashes. A stage whose key and recorded output
//! hashes match the previous manifest is skipped. Outputs are written to a
//! staging directory and moved into place only on success; a failed
//! stage's staging directory is moved under `out/quarantine/`.

mod config;
mod select;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cca::{self, CcaParams, PhraseEmbedding, Regularization};
use crate::classifier::{self, SeedSet, SvmParams};
use crate::corpus::{read_documents, Segmenter, Sentence, VocabCounter};
use crate::cotrain::{self, CotrainParams};
use crate::crf::{self, EmbeddingMode, FeatureConfig};
use crate::dictionary::{Dictionary, Provenance};
use crate::extract::{self, CandidateAggregator, ChunkIndex, Extractor};
use crate::linalg::RsvdParams;
use crate::tagger::{self, DictionaryTagger, EvalReport, GoldCorpus};
use crate::views::{self, ViewData, ViewOptions};
use crate::{Error, Result};

pub use config::{
    CcaSettings, CotrainSettings, CrfSettings, CrfVariant, EvalSettings, PipelineConfig, SvmSettings,
    DEFAULT_C_GRID, DEFAULT_K_GRID, DEFAULT_LAMBDA_GRID, DEFAULT_THETA_GRID,
};
pub use select::{model_select, GridPoint};

pub const TOOL_VERSION: &str = concat!("forge ", env!("CARGO_PKG_VERSION"));
pub const MANIFEST: &str = "manifest.json";

const CANDIDATES: &str = "candidates.tsv";
const VIEWS: &str = "views";
const CCA_MODEL: &str = "model/cca.bin";
const EMBEDDINGS: &str = "model/embeddings.tsv";
const DICT_CCA: &str = "dict.cca.tsv";
const CLASSIFY_REPORT: &str = "classify.json";
const DICT_COTRAIN: &str = "dict.cotrain.tsv";
const TRACE: &str = "trace.jsonl";
const COTRAIN_REPORT: &str = "cotrain.json";
const REPORT: &str = "report.json";
const CURVE: &str = "crf/curve.tsv";
const CURVE_JSON: &str = "crf/curve.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Views,
    Cca,
    Classify,
    Cotrain,
    Tag,
    Crf,
}

impl Stage {
    /// Dependency order.
    pub const ALL: [Stage; 7] = [
        Stage::Extract,
        Stage::Views,
        Stage::Cca,
        Stage::Classify,
        Stage::Cotrain,
        Stage::Tag,
        Stage::Crf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Views => "views",
            Stage::Cca => "cca",
            Stage::Classify => "classify",
            Stage::Cotrain => "cotrain",
            Stage::Tag => "tag",
            Stage::Crf => "crf",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Comma-separated stage names.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let st = Stage::parse(part).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown stage `{}` (expected one of {})",
                    part,
                    Stage::ALL.map(Stage::name).join(", ")
                ))
            })?;
            if !out.contains(&st) {
                out.push(st);
            }
        }
        out.sort();
        Ok(out)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Cached,
    /// Not requested this run; record kept from an earlier manifest.
    Carried,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub key: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Subset to execute; `None` runs every applicable stage.
    pub stages: Option<Vec<Stage>>,
    /// Worker threads for intra-stage parallelism.
    pub jobs: Option<usize>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-stage seed drawn from the top-level seed.
pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    let d = Sha256::digest(format!("{}:{}", seed, stage.name()).as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Hash of a file, or of a directory's sorted relative paths and contents.
pub fn hash_path(path: &Path) -> Result<String> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        return Ok(sha256_hex(&bytes));
    }
    let mut files = Vec::new();
    walk(path, path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let bytes = std::fs::read(path.join(&rel)).map_err(|e| Error::io(path.join(&rel), e))?;
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(Sha256::digest(&bytes));
    }
    Ok(hex::encode(h.finalize()))
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            walk(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("walk stays under root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

/// Stages that apply to this config, in dependency order.
pub fn applicable_stages(config: &PipelineConfig) -> Vec<Stage> {
    Stage::ALL
        .into_iter()
        .filter(|s| *s != Stage::Crf || config.crf.is_some())
        .collect()
}

fn outputs_of(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Extract => &[CANDIDATES],
        Stage::Views => &[VIEWS],
        Stage::Cca => &[CCA_MODEL, EMBEDDINGS],
        Stage::Classify => &[DICT_CCA, CLASSIFY_REPORT],
        Stage::Cotrain => &[DICT_COTRAIN, TRACE, COTRAIN_REPORT],
        Stage::Tag => &[REPORT],
        Stage::Crf => &[CURVE, CURVE_JSON],
    }
}

struct Ctx<'a> {
    config: &'a PipelineConfig,
    out: &'a Path,
    /// Where the running stage writes.
    staging: PathBuf,
}

impl Ctx<'_> {
    fn input(&self, rel: &str, producer: Stage) -> Result<PathBuf> {
        let p = self.out.join(rel);
        if !p.exists() {
            return Err(Error::InvalidArgument(format!(
                "{} is missing; run stage `{}` first",
                p.display(),
                producer
            )));
        }
        Ok(p)
    }

    fn output(&self, rel: &str) -> Result<PathBuf> {
        let p = self.staging.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(p)
    }
}

fn sentences(config: &PipelineConfig) -> Result<impl Iterator<Item = Result<Sentence>>> {
    Ok(read_documents(&config.corpus)?.sentences(Segmenter::default()))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("json value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

/// Parameters and input files that determine a stage's outputs.
fn stage_inputs(ctx: &Ctx, stage: Stage) -> Result<(Value, Vec<(String, PathBuf)>)> {
    let c = ctx.config;
    let file = |label: &str, p: &Path| (label.to_string(), p.to_path_buf());
    let mut inputs = Vec::new();
    let params = match stage {
        Stage::Extract => {
            inputs.push(file("corpus", &c.corpus));
            inputs.push(file("patterns", &c.patterns));
            if let Some(ch) = &c.chunks {
                inputs.push(file("chunks", ch));
            }
            json!({})
        }
        Stage::Views => {
            inputs.push(file("corpus", &c.corpus));
            inputs.push(file(CANDIDATES, &ctx.input(CANDIDATES, Stage::Extract)?));
            json!({ "context_min_count": c.context_min_count })
        }
        Stage::Cca => {
            inputs.push(file(VIEWS, &ctx.input(VIEWS, Stage::Views)?));
            json!({ "cca": c.cca, "k": cca_dims(c), "seed": cca_seed(c) })
        }
        Stage::Classify => {
            inputs.push(file(EMBEDDINGS, &ctx.input(EMBEDDINGS, Stage::Cca)?));
            inputs.push(file("seeds", &c.seeds));
            if let Some(d) = &c.eval.dev {
                inputs.push(file("dev", d));
            }
            json!({ "svm": c.svm, "k": c.cca.k, "kappa": c.cca.kappa })
        }
        Stage::Cotrain => {
            inputs.push(file(VIEWS, &ctx.input(VIEWS, Stage::Views)?));
            inputs.push(file("seeds", &c.seeds));
            if let Some(d) = &c.eval.dev {
                inputs.push(file("dev", d));
            }
            json!({ "cotrain": c.cotrain })
        }
        Stage::Tag => {
            inputs.push(file(CANDIDATES, &ctx.input(CANDIDATES, Stage::Extract)?));
            inputs.push(file(DICT_CCA, &ctx.input(DICT_CCA, Stage::Classify)?));
            inputs.push(file(DICT_COTRAIN, &ctx.input(DICT_COTRAIN, Stage::Cotrain)?));
            for (i, m) in c.eval.manual.iter().enumerate() {
                inputs.push(file(&format!("manual[{}]", i), m));
            }
            if let Some(d) = &c.eval.dev {
                inputs.push(file("dev", d));
            }
            if let Some(t) = &c.eval.test {
                inputs.push(file("test", t));
            }
            json!({})
        }
        Stage::Crf => {
            let crf = c
                .crf
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("the config has no [crf] section".into()))?;
            inputs.push(file("crf.train", &crf.train));
            inputs.push(file(DICT_CCA, &ctx.input(DICT_CCA, Stage::Classify)?));
            inputs.push(file(DICT_COTRAIN, &ctx.input(DICT_COTRAIN, Stage::Cotrain)?));
            inputs.push(file(EMBEDDINGS, &ctx.input(EMBEDDINGS, Stage::Cca)?));
            if crf.variants.contains(&CrfVariant::WordEmb) {
                inputs.push(file("corpus", &c.corpus));
            }
            if let Some(d) = &c.eval.dev {
                inputs.push(file("dev", d));
            }
            if let Some(t) = &c.eval.test {
                inputs.push(file("test", t));
            }
            json!({ "crf": crf, "cca": c.cca, "seed": cca_seed(c) })
        }
    };
    Ok((params, inputs))
}

/// Embedding width: enough for `cca.k` and every grid value.
fn cca_dims(c: &PipelineConfig) -> usize {
    c.svm.k_grid.iter().copied().chain([c.cca.k]).max().unwrap_or(c.cca.k)
}

fn cca_seed(c: &PipelineConfig) -> u64 {
    c.cca.seed.unwrap_or_else(|| stage_seed(c.seed, Stage::Cca))
}

fn cca_params(c: &PipelineConfig, k: usize) -> CcaParams {
    CcaParams {
        k,
        regularization: Regularization::Relative(c.cca.kappa),
        rsvd: RsvdParams {
            oversampling: c.cca.oversampling,
            power_iterations: c.cca.power_iterations,
            seed: cca_seed(c),
        },
        centered: false,
    }
}

fn run_extract(ctx: &Ctx) -> Result<Option<Value>> {
    let c = ctx.config;
    let mut ex = Extractor::new(extract::read_patterns(&c.patterns)?)?;
    if let Some(ch) = &c.chunks {
        ex = ex.with_chunks(ChunkIndex::read(ch)?);
    }
    let mut agg = CandidateAggregator::default();
    let mut n = 0usize;
    for s in sentences(c)? {
        let s = s?;
        n += 1;
        for m in ex.extract(&s) {
            agg.add(&m);
        }
    }
    let cands = agg.finish();
    log::info!("extract: {} sentences, {} candidates", n, cands.len());
    let p = ctx.output(CANDIDATES)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?);
    extract::write_candidates(&mut f, &cands)?;
    f.flush().map_err(|e| Error::io(&p, e))?;
    Ok(None)
}

fn run_views(ctx: &Ctx) -> Result<Option<Value>> {
    let c = ctx.config;
    let cands = extract::read_candidates(&ctx.input(CANDIDATES, Stage::Extract)?)?;
    let occ = views::collect_occurrences(sentences(c)?, &cands)?;
    let vd = views::build_design_matrices(
        &occ,
        &ViewOptions {
            context_min_count: c.context_min_count,
        },
    )?;
    log::info!("views: n={} d1={} d2={}", vd.n(), vd.x.ncols(), vd.z.ncols());
    vd.write(&ctx.output(VIEWS)?)?;
    Ok(None)
}

/// CCA on the stored views; `k` is clamped to the smaller view dimension.
fn fit_views(config: &PipelineConfig, vd: &ViewData, k: usize) -> Result<Vec<PhraseEmbedding>> {
    let (_, emb) = fit_cca(config, vd, k)?;
    Ok(emb)
}

fn fit_cca(config: &PipelineConfig, vd: &ViewData, k: usize) -> Result<(cca::CcaModel, Vec<PhraseEmbedding>)> {
    let max_k = vd.x.ncols().min(vd.z.ncols());
    let k = if k > max_k {
        log::warn!("cca: k={} exceeds the smaller view dimension {}; using {}", k, max_k, max_k);
        max_k
    } else {
        k
    };
    let summary = cca::accumulate_covariance(&vd.x, &vd.z, config.cca.whitening)?;
    let model = cca::solve_cca(&summary, &cca_params(config, k))?;
    let emb = cca::embed_phrases(&model, &vd.phrase_vectors()?)?;
    Ok((model, emb))
}

fn run_cca(ctx: &Ctx) -> Result<Option<Value>> {
    let c = ctx.config;
    let vd = ViewData::read(&ctx.input(VIEWS, Stage::Views)?)?;
    let (model, emb) = fit_cca(c, &vd, cca_dims(c))?;
    log::info!(
        "cca: k={} top correlations {:?}",
        model.k,
        &model.singular_values[..model.k.min(5)]
    );
    model.save(&ctx.output(CCA_MODEL)?)?;
    let p = ctx.output(EMBEDDINGS)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?);
    cca::write_embeddings(&mut f, &emb).map_err(|e| Error::io(&p, e))?;
    f.flush().map_err(|e| Error::io(&p, e))?;
    Ok(Some(json!({ "k": model.k, "singular_values": model.singular_values })))
}

/// First `k` coordinates of every embedding.
pub fn truncate_embeddings(emb: &[PhraseEmbedding], k: usize) -> Vec<PhraseEmbedding> {
    emb.iter()
        .map(|e| PhraseEmbedding {
            phrase: e.phrase.clone(),
            vector: e.vector[..k.min(e.vector.len())].to_vec(),
        })
        .collect()
}

fn dict_f1(dict: &Dictionary, gold: &GoldCorpus) -> Result<EvalReport> {
    tagger::evaluate(&DictionaryTagger::new(dict).tag_all(&gold.sentences), gold)
}

fn map_grid<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

fn run_classify(ctx: &Ctx) -> Result<Option<Value>> {
    let c = ctx.config;
    let emb = cca::read_embeddings(&ctx.input(EMBEDDINGS, Stage::Cca)?)?;
    let width = emb.first().map_or(0, |e| e.vector.len());
    let seeds = SeedSet::load(&c.seeds)?;
    let params = |cv: f64| SvmParams {
        class_balanced: c.svm.class_balanced,
        ..SvmParams::default().with_c(cv)
    };
    let (k, cv, grid) = match &c.eval.dev {
        Some(dev) => {
            let dev = tagger::read_conll(dev)?;
            let mut points = Vec::new();
            for &k in &c.svm.k_grid {
                if k > width {
                    log::warn!("classify: k={} exceeds the embedding width {}; skipped", k, width);
                    continue;
                }
                points.extend(c.svm.c_grid.iter().map(|&cv| (k, cv)));
            }
            let evaluated = map_grid(&points, |&(k, cv)| {
                let e = truncate_embeddings(&emb, k);
                let model = classifier::train_on_seeds(&e, &seeds, &params(cv))?;
                let dict = classifier::build_dictionary(&e, &model, c.svm.threshold, &[])?;
                let r = dict_f1(&dict, &dev)?;
                Ok(GridPoint {
                    k: Some(k),
                    reg: cv,
                    f1: r.f1,
                })
            })?;
            let best = model_select(evaluated.iter().copied())?;
            (best.k.unwrap_or(width), best.reg, evaluated)
        }
        None => (c.cca.k.min(width), c.svm.c, Vec::new()),
    };
    let e = truncate_embeddings(&emb, k);
    let model = classifier::train_on_seeds(&e, &seeds, &params(cv))?;
    let meta = [
        ("k", k.to_string()),
        ("kappa", c.cca.kappa.to_string()),
        ("seed_file_sha256", hash_path(&c.seeds)?),
    ];
    let dict = classifier::build_dictionary(&e, &model, c.svm.threshold, &meta)?;
    log::info!("classify: k={} C={} -> {} phrases", k, cv, dict.len());
    dict.save(&ctx.output(DICT_CCA)?)?;
    let selection = json!({ "k": k, "C": cv, "size": dict.len() });
    write_json(
        &ctx.output(CLASSIFY_REPORT)?,
        &json!({ "selection": selection, "grid": grid }),
    )?;
    Ok(Some(selection))
}

fn run_cotrain(ctx: &Ctx) -> Result<Option<Value>> {
    let c = ctx.config;
    let vd = ViewData::read(&ctx.input(VIEWS, Stage::Views)?)?;
    let seeds = SeedSet::load(&c.seeds)?;
    let params = CotrainParams {
        m: c.cotrain.m,
        epsilon: c.cotrain.epsilon,
        max_iterations: c.cotrain.max_iterations,
        ..CotrainParams::default()
    };
    let state = cotrain::dl_cotrain(&vd.occurrences(), &seeds, &params)?;
    let p = ctx.output(TRACE)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?);
    cotrain::write_trace(&mut f, &state).map_err(|e| Error::io(&p, e))?;
    f.flush().map_err(|e| Error::io(&p, e))?;
    let (theta, grid) = match &c.eval.dev {
        Some(dev) => {
            let dev = tagger::read_conll(dev)?;
            let evaluated = map_grid(&c.cotrain.theta_grid, |&t| {
                let d = cotrain::dictionary_from_rules(&state, t)?;
                Ok(GridPoint {
                    k: None,
                    reg: t,
                    f1: dict_f1(&d, &dev)?.f1,
                })
            })?;
            (model_select(evaluated.iter().copied())?.reg, evaluated)
        }
        None => (c.cotrain.theta, Vec::new()),
    };
    let mut dict = cotrain::dictionary_from_rules(&state, theta)?
        .with_meta("m", c.cotrain.m)
        .with_meta("epsilon", c.cotrain.epsilon);
    dict.metadata.insert("seed_file_sha256".into(), hash_path(&c.seeds)?);
    log::info!(
        "cotrain: {} iterations, θ={} -> {} phrases",
        state.iteration,
        theta,
        dict.len()
    );
    dict.save(&ctx.output(DICT_COTRAIN)?)?;
    let selection = json!({
        "theta": theta,
        "size": dict.len(),
        "iterations": state.iteration,
        "spelling_rules": state.spelling_rules.len(),
        "context_rules": state.context_rules.len(),
    });
    write_json(
        &ctx.output(COTRAIN_REPORT)?,
        &json!({ "selection": selection, "grid": grid }),
    )?;
    Ok(Some(selection))
}

fn run_tag(ctx: &Ctx) -> Result<Option<Value>> {
    let c = ctx.config;
    let cands = extract::read_candidates(&ctx.input(CANDIDATES, Stage::Extract)?)?;
    let mut dicts = vec![
        (
            "candidate-list".to_string(),
            Dictionary::from_phrases(Provenance::CandidateList, cands.iter().map(|c| c.lower.as_str())),
        ),
        (
            "cotrain".to_string(),
            Dictionary::load(&ctx.input(DICT_COTRAIN, Stage::Cotrain)?, Provenance::Cotrain)?,
        ),
        (
            "cca".to_string(),
            Dictionary::load(&ctx.input(DICT_CCA, Stage::Classify)?, Provenance::Cca)?,
        ),
    ];
    for m in &c.eval.manual {
        let name = m.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        dicts.push((format!("manual:{}", name), Dictionary::load(m, Provenance::Manual)?));
    }
    let dev = c.eval.dev.as_deref().map(tagger::read_conll).transpose()?;
    let test = c.eval.test.as_deref().map(tagger::read_conll).transpose()?;
    let mut rows = Vec::new();
    for (name, d) in &dicts {
        let mut row = json!({ "name": name, "provenance": d.provenance, "size": d.len() });
        for (split, gold) in [("dev", &dev), ("test", &test)] {
            if let Some(g) = gold {
                row[split] = serde_json::to_value(dict_f1(d, g)?).expect("report serializes");
            }
        }
        rows.push(row);
    }
    let report = json!({ "dictionaries": rows });
    write_json(&ctx.output(REPORT)?, &report)?;
    Ok(None)
}

fn word_embeddings(c: &PipelineConfig, k: usize, vocab_size: usize) -> Result<Vec<PhraseEmbedding>> {
    let mut counter = VocabCounter::default();
    for s in sentences(c)? {
        counter.add_sentence(&s?);
    }
    let occ = views::collect_word_occurrences(sentences(c)?, &counter.top(vocab_size))?;
    let vd = views::build_design_matrices(
        &occ,
        &ViewOptions {
            context_min_count: c.context_min_count,
        },
    )?;
    fit_views(c, &vd, k)
}

fn run_crf(ctx: &Ctx) -> Result<Option<Value>> {
    let c = ctx.config;
    let s = c
        .crf
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("the config has no [crf] section".into()))?;
    let train = tagger::read_conll(&s.train)?;
    let dev = c.eval.dev.as_deref().map(tagger::read_conll).transpose()?;
    let test = match &c.eval.test {
        Some(t) => tagger::read_conll(t)?,
        None => dev.clone().ok_or(Error::EmptyInput("crf needs a test or dev set"))?,
    };
    let mut base = FeatureConfig::baseline();
    base.templates.prev2 = s.prev2;
    let selected_k = read_json(&ctx.input(CLASSIFY_REPORT, Stage::Classify)?)?["selection"]["k"]
        .as_u64()
        .map(|k| k as usize)
        .unwrap_or(c.cca.k);
    let mut variants: Vec<(String, FeatureConfig)> = Vec::new();
    for v in &s.variants {
        match v {
            CrfVariant::Baseline => variants.push(("baseline".into(), base.clone())),
            CrfVariant::Dict => {
                for (name, rel, prov) in [("cca", DICT_CCA, Provenance::Cca), ("cotrain", DICT_COTRAIN, Provenance::Cotrain)] {
                    let d = Dictionary::load(&ctx.out.join(rel), prov)?;
                    variants.push((format!("dict-{}", name), base.clone().with_dictionary(name, d)));
                }
            }
            CrfVariant::PhraseEmb => {
                let emb = cca::read_embeddings(&ctx.input(EMBEDDINGS, Stage::Cca)?)?;
                let emb = truncate_embeddings(&emb, selected_k);
                variants.push(("cca-phrase".into(), base.clone().with_embeddings(EmbeddingMode::Phrase, emb)));
            }
            CrfVariant::WordEmb => {
                let emb = word_embeddings(c, selected_k, s.word_vocab)?;
                variants.push(("cca-word".into(), base.clone().with_embeddings(EmbeddingMode::Word, emb)));
            }
        }
    }
    let sizes = if s.sizes.is_empty() {
        vec![train.len()]
    } else {
        s.sizes.clone()
    };
    let points = crf::learning_curve(&train, dev.as_ref(), &test, &sizes, &variants, &s.lambda_grid)?;
    let p = ctx.output(CURVE)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?);
    crf::write_curve(&mut f, &points).map_err(|e| Error::io(&p, e))?;
    f.flush().map_err(|e| Error::io(&p, e))?;
    write_json(&ctx.output(CURVE_JSON)?, &json!({ "points": points }))?;
    Ok(None)
}

fn execute(ctx: &Ctx, stage: Stage) -> Result<Option<Value>> {
    match stage {
        Stage::Extract => run_extract(ctx),
        Stage::Views => run_views(ctx),
        Stage::Cca => run_cca(ctx),
        Stage::Classify => run_classify(ctx),
        Stage::Cotrain => run_cotrain(ctx),
        Stage::Tag => run_tag(ctx),
        Stage::Crf => run_crf(ctx),
    }
}

fn remove(p: &Path) -> Result<()> {
    let r = if p.is_dir() {
        std::fs::remove_dir_all(p)
    } else {
        std::fs::remove_file(p)
    };
    match r {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(p, e)),
        _ => Ok(()),
    }
}

fn quarantine(out: &Path, staging: &Path, stage: Stage) -> Option<PathBuf> {
    if !staging.exists() {
        return None;
    }
    let qdir = out.join("quarantine");
    std::fs::create_dir_all(&qdir).ok()?;
    let dest = (1..)
        .map(|i| qdir.join(format!("{}-{}", stage, i)))
        .find(|p| !p.exists())?;
    std::fs::rename(staging, &dest).ok()?;
    Some(dest)
}

fn cache_hit(out: &Path, prev: Option<&StageRecord>, key: &str) -> Result<bool> {
    let Some(rec) = prev else { return Ok(false) };
    if rec.key != key {
        return Ok(false);
    }
    for (rel, h) in &rec.outputs {
        let p = out.join(rel);
        if !p.exists() || hash_path(&p)? != *h {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs the requested stages (all applicable ones by default) and writes
/// `<out>/manifest.json`.
pub fn run_pipeline(config: &PipelineConfig, options: &RunOptions) -> Result<RunManifest> {
    #[cfg(feature = "parallel")]
    if let Some(n) = options.jobs {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {}", e)))?;
        return pool.install(|| run_serial(config, options));
    }
    run_serial(config, options)
}

fn run_serial(config: &PipelineConfig, options: &RunOptions) -> Result<RunManifest> {
    let out = config.out.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest_path = out.join(MANIFEST);
    let previous = if manifest_path.exists() {
        match RunManifest::load(&manifest_path) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("ignoring unreadable manifest: {}", e);
                None
            }
        }
    } else {
        None
    };
    let applicable = applicable_stages(config);
    let requested = match &options.stages {
        None => applicable.clone(),
        Some(s) => {
            if let Some(bad) = s.iter().find(|s| !applicable.contains(s)) {
                return Err(Error::InvalidArgument(format!(
                    "stage `{}` does not apply to this config",
                    bad
                )));
            }
            s.clone()
        }
    };

    let mut inputs = BTreeMap::new();
    inputs.insert("corpus".to_string(), hash_path(&config.corpus)?);
    inputs.insert("patterns".to_string(), hash_path(&config.patterns)?);
    inputs.insert("seeds".to_string(), hash_path(&config.seeds)?);
    for (label, p) in [("dev", &config.eval.dev), ("test", &config.eval.test), ("chunks", &config.chunks)] {
        if let Some(p) = p {
            inputs.insert(label.to_string(), hash_path(p)?);
        }
    }
    if let Some(crf) = &config.crf {
        inputs.insert("crf.train".to_string(), hash_path(&crf.train)?);
    }
    let mut manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config.hash(),
        seed: config.seed,
        stage_seeds: [(Stage::Cca.name().to_string(), cca_seed(config))].into(),
        inputs,
        stages: Vec::new(),
    };

    for stage in applicable {
        let prev = previous.as_ref().and_then(|m| m.record(stage));
        if !requested.contains(&stage) {
            if let Some(r) = prev {
                manifest.stages.push(StageRecord {
                    status: StageStatus::Carried,
                    ..r.clone()
                });
            }
            continue;
        }
        let staging = out.join(".staging").join(stage.name());
        let ctx = Ctx {
            config,
            out,
            staging: staging.clone(),
        };
        let tag = |e: Error| Error::Stage {
            stage: stage.name().to_string(),
            source: Box::new(e),
        };
        let (params, files) = stage_inputs(&ctx, stage).map_err(tag)?;
        let mut hashed = Vec::new();
        for (label, p) in files {
            hashed.push((label, hash_path(&p).map_err(tag)?));
        }
        let key = sha256_hex(
            serde_json::to_string(&json!({
                "stage": stage,
                "tool": TOOL_VERSION,
                "params": params,
                "inputs": hashed,
            }))
            .expect("key serializes")
            .as_bytes(),
        );
        if cache_hit(out, prev, &key).map_err(tag)? {
            log::info!("{}: cache hit", stage);
            manifest.stages.push(StageRecord {
                status: StageStatus::Cached,
                seconds: 0.0,
                ..prev.expect("hit implies a record").clone()
            });
            continue;
        }
        log::info!("{}: running", stage);
        remove(&staging).map_err(tag)?;
        std::fs::create_dir_all(&staging).map_err(|e| tag(Error::io(&staging, e)))?;
        let t0 = Instant::now();
        let selection = match execute(&ctx, stage) {
            Ok(s) => s,
            Err(e) => {
                if let Some(q) = quarantine(out, &staging, stage) {
                    log::error!("{}: partial outputs moved to {}", stage, q.display());
                }
                return Err(tag(e));
            }
        };
        let seconds = t0.elapsed().as_secs_f64();
        let mut outputs = BTreeMap::new();
        for rel in outputs_of(stage) {
            let src = staging.join(rel);
            let dst = out.join(rel);
            if let Some(parent) = dst.parent() {
                std::fs::create_dir_all(parent).map_err(|e| tag(Error::io(parent, e)))?;
            }
            remove(&dst).map_err(tag)?;
            std::fs::rename(&src, &dst).map_err(|e| tag(Error::io(&src, e)))?;
            outputs.insert(rel.to_string(), hash_path(&dst).map_err(tag)?);
        }
        remove(&staging).map_err(tag)?;
        manifest.stages.push(StageRecord {
            stage,
            key,
            status: StageStatus::Ran,
            seconds,
            outputs,
            selection,
        });
    }
    let _ = std::fs::remove_dir(out.join(".staging"));
    write_json(&manifest_path, &serde_json::to_value(&manifest).expect("manifest serializes"))?;
    Ok(manifest)
}
