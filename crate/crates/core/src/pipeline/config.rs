use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cca::{WhiteningMode, DEFAULT_MAX_FULL_DIM};
use crate::{Error, Result};

pub const DEFAULT_C_GRID: [f64; 7] = [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_K_GRID: [usize; 3] = [10, 20, 30];
pub const DEFAULT_THETA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    out: Option<PathBuf>,
    seed: Option<u64>,
    corpus: Option<RawCorpus>,
    #[serde(default)]
    cca: RawCca,
    #[serde(default)]
    svm: RawSvm,
    #[serde(default)]
    cotrain: RawCotrain,
    #[serde(default)]
    eval: RawEval,
    crf: Option<RawCrf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    path: Option<PathBuf>,
    patterns: Option<PathBuf>,
    seeds: Option<PathBuf>,
    chunks: Option<PathBuf>,
    context_min_count: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCca {
    k: Option<usize>,
    kappa: Option<f64>,
    seed: Option<u64>,
    p: Option<usize>,
    q: Option<usize>,
    whitening: Option<String>,
    max_full_dim: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSvm {
    c: Option<f64>,
    c_grid: Option<Vec<f64>>,
    k_grid: Option<Vec<usize>>,
    threshold: Option<f64>,
    class_balanced: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCotrain {
    m: Option<usize>,
    epsilon: Option<f64>,
    theta: Option<f64>,
    theta_grid: Option<Vec<f64>>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEval {
    dev: Option<PathBuf>,
    test: Option<PathBuf>,
    #[serde(default)]
    manual: Vec<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCrf {
    train: Option<PathBuf>,
    features: Option<Vec<String>>,
    lambda_grid: Option<Vec<f64>>,
    sizes: Option<Vec<usize>>,
    prev2: Option<bool>,
    word_vocab: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcaSettings {
    pub k: usize,
    /// Relative ridge factor: κ = kappa · trace(C) / d per view.
    pub kappa: f64,
    /// Explicit rSVD seed; otherwise derived from the top-level seed.
    pub seed: Option<u64>,
    pub oversampling: usize,
    pub power_iterations: usize,
    pub whitening: WhiteningMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvmSettings {
    /// Used when no dev set is configured.
    pub c: f64,
    pub c_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub threshold: f64,
    pub class_balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CotrainSettings {
    pub m: usize,
    pub epsilon: f64,
    /// Used when no dev set is configured.
    pub theta: f64,
    pub theta_grid: Vec<f64>,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSettings {
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub manual: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrfVariant {
    Baseline,
    Dict,
    WordEmb,
    PhraseEmb,
}

impl CrfVariant {
    pub fn parse(s: &str) -> Option<CrfVariant> {
        Some(match s {
            "baseline" => CrfVariant::Baseline,
            "dict" => CrfVariant::Dict,
            "word-emb" | "cca-word" => CrfVariant::WordEmb,
            "phrase-emb" | "emb" | "cca-phrase" => CrfVariant::PhraseEmb,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrfSettings {
    pub train: PathBuf,
    pub variants: Vec<CrfVariant>,
    pub lambda_grid: Vec<f64>,
    /// Learning-curve sizes; empty means the full training set only.
    pub sizes: Vec<usize>,
    pub prev2: bool,
    pub word_vocab: usize,
}

/// A validated pipeline configuration. Relative paths are resolved against
/// the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub corpus: PathBuf,
    pub patterns: PathBuf,
    pub seeds: PathBuf,
    pub chunks: Option<PathBuf>,
    pub context_min_count: usize,
    pub cca: CcaSettings,
    pub svm: SvmSettings,
    pub cotrain: CotrainSettings,
    pub eval: EvalSettings,
    pub crf: Option<CrfSettings>,
}

struct Checker {
    base: PathBuf,
    errors: Vec<String>,
}

impl Checker {
    fn fail(&mut self, field: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{}: {}", field, msg));
    }

    fn path(&mut self, field: &str, p: Option<PathBuf>, required: bool) -> Option<PathBuf> {
        match p {
            None => {
                if required {
                    self.fail(field, "required");
                }
                None
            }
            Some(p) => {
                let full = self.base.join(p);
                if !full.exists() {
                    self.fail(field, format_args!("file not found: {}", full.display()));
                }
                Some(full)
            }
        }
    }

    fn positive(&mut self, field: &str, v: f64) -> f64 {
        if !(v.is_finite() && v > 0.0) {
            self.fail(field, format_args!("must be a positive number, got {}", v));
        }
        v
    }

    fn unit(&mut self, field: &str, v: f64) -> f64 {
        if !(v > 0.0 && v <= 1.0) {
            self.fail(field, format_args!("must lie in (0, 1], got {}", v));
        }
        v
    }

    fn grid<T: Copy>(&mut self, field: &str, g: Option<Vec<T>>, default: &[T], ok: impl Fn(T) -> bool) -> Vec<T>
    where
        T: std::fmt::Display,
    {
        let g = g.unwrap_or_else(|| default.to_vec());
        if g.is_empty() {
            self.fail(field, "grid is empty");
        }
        for &v in &g {
            if !ok(v) {
                self.fail(field, format_args!("value {} out of range", v));
            }
        }
        g
    }
}

impl PipelineConfig {
    /// Reads TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let json = path.extension().is_some_and(|e| e == "json");
        PipelineConfig::parse(&text, json, &base)
    }

    pub fn parse(text: &str, json: bool, base: &Path) -> Result<PipelineConfig> {
        let raw: RawConfig = if json {
            serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim_end().to_string()]))?
        };
        validate(raw, base)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::pipeline::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

fn validate(raw: RawConfig, base: &Path) -> Result<PipelineConfig> {
    let mut ck = Checker {
        base: base.to_path_buf(),
        errors: Vec::new(),
    };
    let corpus = raw.corpus.unwrap_or_else(|| {
        ck.fail("corpus", "section is required");
        RawCorpus::default()
    });
    let corpus_path = ck.path("corpus.path", corpus.path, true);
    let patterns = ck.path("corpus.patterns", corpus.patterns, true);
    let seeds = ck.path("corpus.seeds", corpus.seeds, true);
    let chunks = ck.path("corpus.chunks", corpus.chunks, false);
    let context_min_count = corpus.context_min_count.unwrap_or(1);
    if context_min_count == 0 {
        ck.fail("corpus.context_min_count", "must be at least 1");
    }

    let c = raw.cca;
    let k = c.k.unwrap_or(30);
    if k == 0 {
        ck.fail("cca.k", "must be at least 1");
    }
    let kappa = ck.positive("cca.kappa", c.kappa.unwrap_or(1e-4));
    let whitening = match c.whitening.as_deref().unwrap_or("auto") {
        "auto" => WhiteningMode::Auto {
            max_full_dim: c.max_full_dim.unwrap_or(DEFAULT_MAX_FULL_DIM),
        },
        "full" => WhiteningMode::Full,
        "diagonal" => WhiteningMode::Diagonal,
        other => {
            ck.fail("cca.whitening", format_args!("expected auto, full or diagonal, got `{}`", other));
            WhiteningMode::default()
        }
    };
    let cca = CcaSettings {
        k,
        kappa,
        seed: c.seed,
        oversampling: c.p.unwrap_or(10),
        power_iterations: c.q.unwrap_or(4),
        whitening,
    };

    let s = raw.svm;
    let svm = SvmSettings {
        c: ck.positive("svm.c", s.c.unwrap_or(0.1)),
        c_grid: ck.grid("svm.c_grid", s.c_grid, &DEFAULT_C_GRID, |v| v.is_finite() && v > 0.0),
        k_grid: ck.grid("svm.k_grid", s.k_grid, &DEFAULT_K_GRID, |v| v > 0),
        threshold: s.threshold.unwrap_or(0.0),
        class_balanced: s.class_balanced.unwrap_or(false),
    };
    if !svm.threshold.is_finite() {
        ck.fail("svm.threshold", "must be finite");
    }

    let t = raw.cotrain;
    let m = t.m.unwrap_or(5);
    if m == 0 {
        ck.fail("cotrain.m", "must be at least 1");
    }
    let cotrain = CotrainSettings {
        m,
        epsilon: ck.unit("cotrain.epsilon", t.epsilon.unwrap_or(0.95)),
        theta: ck.unit("cotrain.theta", t.theta.unwrap_or(0.4)),
        theta_grid: ck.grid("cotrain.theta_grid", t.theta_grid, &DEFAULT_THETA_GRID, |v| v > 0.0 && v <= 1.0),
        max_iterations: t.max_iterations.unwrap_or(10_000),
    };

    let e = raw.eval;
    let eval = EvalSettings {
        dev: ck.path("eval.dev", e.dev, false),
        test: ck.path("eval.test", e.test, false),
        manual: e
            .manual
            .into_iter()
            .enumerate()
            .filter_map(|(i, p)| ck.path(&format!("eval.manual[{}]", i), Some(p), true))
            .collect(),
    };

    let crf = raw.crf.map(|r| {
        let train = ck.path("crf.train", r.train, true).unwrap_or_default();
        let names = r.features.unwrap_or_else(|| vec!["baseline".into(), "dict".into(), "phrase-emb".into()]);
        if names.is_empty() {
            ck.fail("crf.features", "list is empty");
        }
        let mut variants = Vec::new();
        for n in &names {
            match CrfVariant::parse(n) {
                Some(v) if !variants.contains(&v) => variants.push(v),
                Some(_) => {}
                None => ck.fail(
                    "crf.features",
                    format_args!("unknown variant `{}` (baseline, dict, word-emb, phrase-emb)", n),
                ),
            }
        }
        let sizes = r.sizes.unwrap_or_default();
        if sizes.contains(&0) || sizes.windows(2).any(|w| w[0] >= w[1]) {
            ck.fail("crf.sizes", "must be positive and strictly ascending");
        }
        let word_vocab = r.word_vocab.unwrap_or(10_000);
        if word_vocab == 0 {
            ck.fail("crf.word_vocab", "must be at least 1");
        }
        CrfSettings {
            train,
            variants,
            lambda_grid: ck.grid("crf.lambda_grid", r.lambda_grid, &DEFAULT_LAMBDA_GRID, |v| {
                v.is_finite() && v > 0.0
            }),
            sizes,
            prev2: r.prev2.unwrap_or(false),
            word_vocab,
        }
    });
    if let Some(c) = &crf {
        if eval.dev.is_none() && c.lambda_grid.len() > 1 {
            ck.fail("crf.lambda_grid", "a grid with several values needs eval.dev");
        }
        if eval.dev.is_none() && eval.test.is_none() {
            ck.fail("crf", "needs eval.test or eval.dev to score the learning curve");
        }
    }

    if !ck.errors.is_empty() {
        return Err(Error::Config(ck.errors));
    }
    Ok(PipelineConfig {
        out: base.join(raw.out.unwrap_or_else(|| PathBuf::from("forge-out"))),
        seed: raw.seed.unwrap_or(13),
        corpus: corpus_path.unwrap_or_default(),
        patterns: patterns.unwrap_or_default(),
        seeds: seeds.unwrap_or_default(),
        chunks,
        context_min_count,
        cca,
        svm,
        cotrain,
        eval,
        crf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> tempfile::TempDir {
        let d = tempfile::tempdir().unwrap();
        for f in ["corpus.txt", "patterns.toml", "seeds.txt"] {
            std::fs::write(d.path().join(f), "").unwrap();
        }
        d
    }

    const MINIMAL: &str = "[corpus]\npath = \"corpus.txt\"\npatterns = \"patterns.toml\"\nseeds = \"seeds.txt\"\n";

    #[test]
    fn minimal_gets_defaults() {
        let d = fixture();
        let c = PipelineConfig::parse(MINIMAL, false, d.path()).unwrap();
        assert_eq!(c.cca.k, 30);
        assert_eq!(c.cca.kappa, 1e-4);
        assert_eq!(c.cotrain.m, 5);
        assert_eq!(c.cotrain.epsilon, 0.95);
        assert_eq!(c.svm.k_grid, DEFAULT_K_GRID);
        assert_eq!(c.seeds, d.path().join("seeds.txt"));
        assert!(c.crf.is_none());
    }

    #[test]
    fn json_form() {
        let d = fixture();
        let j = r#"{"corpus": {"path": "corpus.txt", "patterns": "patterns.toml", "seeds": "seeds.txt"}, "cca": {"k": 5}}"#;
        assert_eq!(PipelineConfig::parse(j, true, d.path()).unwrap().cca.k, 5);
    }

    #[test]
    fn field_errors() {
        let d = fixture();
        let text = format!("{}[cotrain]\nepsilon = 1.5\n[svm]\nc_grid = []\n", MINIMAL.replace("seeds.txt", "nope.txt"));
        let Err(Error::Config(errs)) = PipelineConfig::parse(&text, false, d.path()) else {
            panic!("expected config error");
        };
        assert!(errs.iter().any(|e| e.starts_with("corpus.seeds: file not found")), "{:?}", errs);
        assert!(errs.iter().any(|e| e.starts_with("cotrain.epsilon")));
        assert!(errs.iter().any(|e| e.starts_with("svm.c_grid: grid is empty")));
    }

    #[test]
    fn unknown_key_rejected() {
        let d = fixture();
        assert!(PipelineConfig::parse(&format!("{}[cca]\nkk = 3\n", MINIMAL), false, d.path()).is_err());
    }
}
