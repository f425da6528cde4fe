use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use forge_core::cca::{self, CcaParams, PhraseEmbedding, Regularization, WhiteningMode};
use forge_core::classifier::{self, SeedSet, SvmParams};
use forge_core::corpus::{self, read_documents, Segmenter, Sentence, VocabCounter};
use forge_core::cotrain::{self, CotrainParams, StrengthEstimator};
use forge_core::crf::{self, CrfModel, EmbeddingMode, FeatureConfig, Templates};
use forge_core::dictionary::{Dictionary, Provenance};
use forge_core::extract::{self, CandidateAggregator, ChunkIndex, Extractor};
use forge_core::linalg::RsvdParams;
use forge_core::pipeline::{self, PipelineConfig, RunOptions, Stage};
use forge_core::synth::{self, SynthConfig};
use forge_core::tagger::{self, DictionaryTagger, GoldCorpus, Tag, TaggedSentence};
use forge_core::views::{self, ViewData, ViewOptions};

#[derive(Parser)]
#[command(name = "forge", version, about = "Build NER dictionaries from unlabeled text and a few seeds")]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment and tokenize a corpus.
    Corpus(CorpusArgs),
    /// Harvest candidate phrases with lexical patterns.
    Extract(ExtractArgs),
    /// Build the spelling and context design matrices.
    Views(ViewsArgs),
    /// Fit two-view CCA and embed every candidate phrase.
    Cca(CcaArgs),
    /// Train the seed SVM on phrase embeddings and write a dictionary.
    Classify(ClassifyArgs),
    /// Run DL-CoTrain and write the θ-filtered dictionary.
    Cotrain(CotrainArgs),
    /// Tag CoNLL data with a dictionary and score it.
    Tag(TagArgs),
    /// Linear-chain CRF training, tagging and learning curves.
    #[command(subcommand)]
    Crf(CrfCommand),
    /// Run the whole workflow from a config file.
    Run(RunArgs),
    /// Write the synthetic benchmark corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Tokens,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output format; `tokens` writes `doc TAB index TAB tok ...` lines.
    #[arg(long, value_enum, default_value = "tokens")]
    emit: Emit,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    patterns: PathBuf,
    /// Noun-phrase chunks (`doc TAB sentence TAB start TAB end`) for trigger patterns.
    #[arg(long)]
    chunks: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ViewsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, required_unless_present = "word_vocab")]
    candidates: Option<PathBuf>,
    /// Word-level mode: the most frequent N word types are the spellings.
    #[arg(long, conflicts_with = "candidates")]
    word_vocab: Option<usize>,
    #[arg(long, default_value_t = 1)]
    context_min_count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Whitening {
    Auto,
    Full,
    Diagonal,
}

#[derive(Args)]
struct CcaArgs {
    #[arg(long)]
    views: PathBuf,
    #[arg(short, default_value_t = 30)]
    k: usize,
    /// Ridge factor relative to the mean covariance diagonal.
    #[arg(long, default_value_t = 1e-4)]
    kappa: f64,
    /// Treat --kappa as an absolute ridge.
    #[arg(long)]
    absolute_kappa: bool,
    #[arg(long, default_value_t = 13)]
    seed: u64,
    #[arg(short, default_value_t = 10)]
    p: usize,
    #[arg(short, default_value_t = 4)]
    q: usize,
    #[arg(long, value_enum, default_value = "auto")]
    whitening: Whitening,
    /// Auto mode whitens fully up to this view dimension.
    #[arg(long, default_value_t = cca::DEFAULT_MAX_FULL_DIM)]
    max_full_dim: usize,
    #[arg(long)]
    centered: bool,
    /// Directory for cca.bin and embeddings.tsv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    seeds: PathBuf,
    #[arg(short = 'C', default_value_t = 0.1)]
    c: f64,
    /// Use only the first N embedding dimensions.
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long)]
    class_balanced: bool,
    /// Recorded in the dictionary header.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CotrainArgs {
    #[arg(long)]
    views: PathBuf,
    #[arg(long)]
    seeds: PathBuf,
    #[arg(short, default_value_t = 5)]
    m: usize,
    #[arg(long, default_value_t = 0.95)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.4)]
    theta: f64,
    /// Add-α smoothing of rule strength.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TagArgs {
    #[arg(long)]
    dict: PathBuf,
    /// Gold CoNLL file.
    #[arg(long, required_unless_present = "text")]
    input: Option<PathBuf>,
    /// Plain text corpus to tag instead of gold data.
    #[arg(long, conflicts_with = "input")]
    text: Option<PathBuf>,
    #[arg(long)]
    case_sensitive: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Predicted tags as CoNLL.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CrfCommand {
    /// Train a model, picking λ on dev when a grid is given.
    Train(CrfTrainArgs),
    /// Tag CoNLL or plain text with a trained model.
    Tag(CrfTagArgs),
    /// F1 against training-set size for several feature variants.
    Curve(CrfCurveArgs),
}

#[derive(Args)]
struct FeatureArgs {
    /// Comma list of baseline, dict, emb (phrase embeddings), word-emb.
    #[arg(long, default_value = "baseline")]
    features: String,
    /// Dictionary, optionally `name=path`; repeat for several.
    #[arg(long = "dict")]
    dicts: Vec<String>,
    /// Phrase embeddings TSV.
    #[arg(long)]
    emb: Option<PathBuf>,
    /// Word embeddings TSV.
    #[arg(long)]
    word_emb: Option<PathBuf>,
    /// Add second-order label features.
    #[arg(long)]
    prev2: bool,
}

#[derive(Args)]
struct CrfTrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureArgs,
    /// `a..b` for decades from a to b, or a comma list.
    #[arg(long, default_value = "1e-4..10")]
    lambda_grid: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CrfTagArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, required_unless_present = "text")]
    input: Option<PathBuf>,
    #[arg(long, conflicts_with = "input")]
    text: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CrfCurveArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "10,50,200")]
    sizes: String,
    /// Every listed family becomes its own variant next to the baseline;
    /// `dict` gives one variant per --dict.
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long, default_value = "1e-4..10")]
    lambda_grid: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma list of stages to execute (default: all).
    #[arg(long)]
    stages: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20_000)]
    sentences: usize,
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, v: &forge_core::tagger::EvalReport) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, v)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn sentences(path: &Path) -> Result<impl Iterator<Item = forge_core::Result<Sentence>>> {
    Ok(read_documents(path)?.sentences(Segmenter::default()))
}

fn cmd_corpus(a: CorpusArgs) -> Result<()> {
    let Emit::Tokens = a.emit;
    let n = match &a.out {
        Some(p) => {
            let mut f = create(p)?;
            let n = corpus::write_token_stream(&mut f, sentences(&a.corpus)?)?;
            f.flush()?;
            n
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = BufWriter::new(stdout.lock());
            let n = corpus::write_token_stream(&mut lock, sentences(&a.corpus)?)?;
            lock.flush()?;
            n
        }
    };
    log::info!("{} sentences", n);
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let mut ex = Extractor::new(extract::read_patterns(&a.patterns)?)?;
    if let Some(c) = &a.chunks {
        ex = ex.with_chunks(ChunkIndex::read(c)?);
    }
    let mut agg = CandidateAggregator::default();
    for s in sentences(&a.corpus)? {
        for m in ex.extract(&s?) {
            agg.add(&m);
        }
    }
    let cands = agg.finish();
    let mut f = create(&a.out)?;
    extract::write_candidates(&mut f, &cands)?;
    f.flush()?;
    eprintln!("{} candidates -> {}", cands.len(), a.out.display());
    Ok(())
}

fn cmd_views(a: ViewsArgs) -> Result<()> {
    let occ = match (&a.candidates, a.word_vocab) {
        (Some(c), _) => views::collect_occurrences(sentences(&a.corpus)?, &extract::read_candidates(c)?)?,
        (None, Some(n)) => {
            let mut counter = VocabCounter::default();
            for s in sentences(&a.corpus)? {
                counter.add_sentence(&s?);
            }
            views::collect_word_occurrences(sentences(&a.corpus)?, &counter.top(n))?
        }
        (None, None) => bail!("either --candidates or --word-vocab is required"),
    };
    let vd = views::build_design_matrices(
        &occ,
        &ViewOptions {
            context_min_count: a.context_min_count,
        },
    )?;
    vd.write(&a.out)?;
    eprintln!(
        "{} occurrences, d1={} d2={} -> {}",
        vd.n(),
        vd.x.ncols(),
        vd.z.ncols(),
        a.out.display()
    );
    Ok(())
}

fn cmd_cca(a: CcaArgs) -> Result<()> {
    let vd = ViewData::read(&a.views)?;
    let whitening = match a.whitening {
        Whitening::Auto => WhiteningMode::Auto {
            max_full_dim: a.max_full_dim,
        },
        Whitening::Full => WhiteningMode::Full,
        Whitening::Diagonal => WhiteningMode::Diagonal,
    };
    let summary = cca::accumulate_covariance(&vd.x, &vd.z, whitening)?;
    let params = CcaParams {
        k: a.k,
        regularization: if a.absolute_kappa {
            Regularization::Absolute(a.kappa)
        } else {
            Regularization::Relative(a.kappa)
        },
        rsvd: RsvdParams {
            oversampling: a.p,
            power_iterations: a.q,
            seed: a.seed,
        },
        centered: a.centered,
    };
    let model = cca::solve_cca(&summary, &params)?;
    std::fs::create_dir_all(&a.out)?;
    model.save(&a.out.join("cca.bin"))?;
    let emb = cca::embed_phrases(&model, &vd.phrase_vectors()?)?;
    let mut f = create(&a.out.join("embeddings.tsv"))?;
    cca::write_embeddings(&mut f, &emb)?;
    f.flush()?;
    eprintln!(
        "k={} top correlations {:?} -> {}",
        model.k,
        &model.singular_values[..model.k.min(5)],
        a.out.display()
    );
    Ok(())
}

fn cmd_classify(a: ClassifyArgs) -> Result<()> {
    let mut emb = cca::read_embeddings(&a.embeddings)?;
    if let Some(d) = a.dims {
        emb = pipeline::truncate_embeddings(&emb, d);
    }
    let seeds = SeedSet::load(&a.seeds)?;
    let params = SvmParams {
        class_balanced: a.class_balanced,
        ..SvmParams::default().with_c(a.c)
    };
    let model = classifier::train_on_seeds(&emb, &seeds, &params)?;
    let mut meta = vec![
        ("k", emb.first().map_or(0, |e| e.vector.len()).to_string()),
        ("seed_file_sha256", pipeline::hash_path(&a.seeds)?),
    ];
    if let Some(k) = a.kappa {
        meta.push(("kappa", k.to_string()));
    }
    let dict = classifier::build_dictionary(&emb, &model, a.threshold, &meta)?;
    dict.save(&a.out)?;
    eprintln!("{} of {} candidates -> {}", dict.len(), emb.len(), a.out.display());
    Ok(())
}

fn cmd_cotrain(a: CotrainArgs) -> Result<()> {
    let vd = ViewData::read(&a.views)?;
    let seeds = SeedSet::load(&a.seeds)?;
    let params = CotrainParams {
        m: a.m,
        epsilon: a.epsilon,
        estimator: a.alpha.map_or(StrengthEstimator::Unsmoothed, StrengthEstimator::AddAlpha),
        max_iterations: a.max_iterations,
    };
    let state = cotrain::dl_cotrain(&vd.occurrences(), &seeds, &params)?;
    if let Some(t) = &a.trace {
        let mut f = create(t)?;
        cotrain::write_trace(&mut f, &state)?;
        f.flush()?;
    }
    let mut dict = cotrain::dictionary_from_rules(&state, a.theta)?
        .with_meta("m", a.m)
        .with_meta("epsilon", a.epsilon);
    dict.metadata
        .insert("seed_file_sha256".into(), pipeline::hash_path(&a.seeds)?);
    dict.save(&a.out)?;
    eprintln!(
        "{} iterations, {} spelling / {} context rules, {} phrases -> {}",
        state.iteration,
        state.spelling_rules.len(),
        state.context_rules.len(),
        dict.len(),
        a.out.display()
    );
    Ok(())
}

/// Gold data, or plain text segmented into untagged sentences.
fn load_input(input: &Option<PathBuf>, text: &Option<PathBuf>) -> Result<(Vec<Vec<String>>, Option<GoldCorpus>)> {
    match (input, text) {
        (Some(p), _) => {
            let gold = tagger::read_conll(p)?;
            let tokens = gold.sentences.iter().map(|s| s.tokens.clone()).collect();
            Ok((tokens, Some(gold)))
        }
        (None, Some(p)) => {
            let mut out = Vec::new();
            for s in sentences(p)? {
                out.push(s?.texts().into_iter().map(str::to_string).collect());
            }
            Ok((out, None))
        }
        (None, None) => bail!("either --input or --text is required"),
    }
}

fn finish_tagging(
    tokens: Vec<Vec<String>>,
    predicted: Vec<Vec<Tag>>,
    gold: Option<GoldCorpus>,
    report: &Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<()> {
    if let Some(g) = &gold {
        let r = tagger::evaluate(&predicted, g)?;
        println!("precision {:.4}  recall {:.4}  F1 {:.4}", r.precision, r.recall, r.f1);
        if let Some(p) = report {
            write_json(p, &r)?;
        }
    } else if report.is_some() {
        bail!("--report needs gold tags (--input)");
    }
    if let Some(p) = out {
        let sents: Vec<TaggedSentence> = tokens
            .into_iter()
            .zip(predicted)
            .map(|(tokens, tags)| TaggedSentence { tokens, tags })
            .collect();
        let mut f = create(p)?;
        tagger::write_conll(&mut f, &sents)?;
        f.flush()?;
    }
    Ok(())
}

fn cmd_tag(a: TagArgs) -> Result<()> {
    let dict = Dictionary::load(&a.dict, Provenance::Manual)?;
    let t = DictionaryTagger::new(&dict).case_sensitive(a.case_sensitive);
    let (tokens, gold) = load_input(&a.input, &a.text)?;
    let predicted = tokens.iter().map(|s| t.tag(s)).collect();
    finish_tagging(tokens, predicted, gold, &a.report, &a.out)
}

/// `a..b` expands to a, 10a, 100a, … up to b; otherwise a comma list.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| anyhow!("bad number `{}` in grid", t));
    let grid = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if !(a > 0.0 && b >= a) {
            bail!("grid range needs 0 < a <= b, got {}", s);
        }
        let mut v = Vec::new();
        let mut e = a.log10().round() as i32;
        loop {
            let x: f64 = format!("1e{}", e).parse()?;
            if x > b * (1.0 + 1e-9) {
                break;
            }
            if x >= a * (1.0 - 1e-9) {
                v.push(x);
            }
            e += 1;
        }
        v
    } else {
        s.split(',').map(num).collect::<Result<_>>()?
    };
    if grid.is_empty() {
        bail!("empty grid `{}`", s);
    }
    Ok(grid)
}

struct Families {
    baseline: Templates,
    dicts: Vec<(String, Dictionary)>,
    phrase_emb: Option<Vec<PhraseEmbedding>>,
    word_emb: Option<Vec<PhraseEmbedding>>,
}

fn load_families(f: &FeatureArgs) -> Result<Families> {
    let names: Vec<&str> = f.features.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    for n in &names {
        if !["baseline", "dict", "emb", "phrase-emb", "word-emb"].contains(n) {
            bail!("unknown feature family `{}` (baseline, dict, emb, word-emb)", n);
        }
    }
    let mut baseline = if names.contains(&"baseline") {
        Templates::baseline()
    } else {
        Templates::none()
    };
    baseline.prev2 = f.prev2;
    let mut dicts = Vec::new();
    if names.contains(&"dict") {
        if f.dicts.is_empty() {
            bail!("feature `dict` needs at least one --dict");
        }
        for d in &f.dicts {
            let (name, path) = match d.split_once('=') {
                Some((n, p)) => (n.to_string(), PathBuf::from(p)),
                None => {
                    let p = PathBuf::from(d);
                    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    (stem, p)
                }
            };
            dicts.push((name, Dictionary::load(&path, Provenance::Manual)?));
        }
    }
    let phrase_emb = if names.contains(&"emb") || names.contains(&"phrase-emb") {
        let p = f.emb.as_ref().ok_or_else(|| anyhow!("feature `emb` needs --emb"))?;
        Some(cca::read_embeddings(p)?)
    } else {
        None
    };
    let word_emb = if names.contains(&"word-emb") {
        let p = f.word_emb.as_ref().ok_or_else(|| anyhow!("feature `word-emb` needs --word-emb"))?;
        Some(cca::read_embeddings(p)?)
    } else {
        None
    };
    Ok(Families {
        baseline,
        dicts,
        phrase_emb,
        word_emb,
    })
}

impl Families {
    fn base(&self) -> FeatureConfig {
        FeatureConfig {
            templates: self.baseline.clone(),
            ..FeatureConfig::baseline()
        }
    }

    /// Everything enabled in one config.
    fn combined(&self) -> FeatureConfig {
        let mut c = self.base();
        for (n, d) in &self.dicts {
            c = c.with_dictionary(n, d.clone());
        }
        if let Some(e) = &self.phrase_emb {
            c = c.with_embeddings(EmbeddingMode::Phrase, e.clone());
        } else if let Some(e) = &self.word_emb {
            c = c.with_embeddings(EmbeddingMode::Word, e.clone());
        }
        c
    }

    /// Baseline plus one variant per extra family.
    fn variants(&self) -> Vec<(String, FeatureConfig)> {
        let mut v = vec![("baseline".to_string(), self.base())];
        for (n, d) in &self.dicts {
            v.push((format!("dict-{}", n), self.base().with_dictionary(n, d.clone())));
        }
        if let Some(e) = &self.word_emb {
            v.push(("cca-word".into(), self.base().with_embeddings(EmbeddingMode::Word, e.clone())));
        }
        if let Some(e) = &self.phrase_emb {
            v.push(("cca-phrase".into(), self.base().with_embeddings(EmbeddingMode::Phrase, e.clone())));
        }
        v
    }
}

fn cmd_crf_train(a: CrfTrainArgs) -> Result<()> {
    let fam = load_families(&a.features)?;
    if fam.phrase_emb.is_some() && fam.word_emb.is_some() {
        bail!("train uses one embedding table; pick emb or word-emb");
    }
    let cfg = fam.combined();
    let data = tagger::read_conll(&a.data)?;
    let lambdas = parse_grid(&a.lambda_grid)?;
    let model = match &a.dev {
        Some(d) => {
            let dev = tagger::read_conll(d)?;
            let (m, reports) = crf::train_select(&cfg, &data.sentences, &dev, &lambdas)?;
            for (l, r) in reports {
                eprintln!("λ={:<8} dev F1 {:.4}", l, r.f1);
            }
            m
        }
        None if lambdas.len() == 1 => crf::train(&cfg, &data.sentences, lambdas[0])?,
        None => bail!("a λ grid needs --dev; pass a single value otherwise"),
    };
    model.save(&a.out)?;
    eprintln!(
        "λ={} {} features -> {}",
        model.lambda,
        model.feature_names.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_crf_tag(a: CrfTagArgs) -> Result<()> {
    let model = CrfModel::load(&a.model)?;
    let (tokens, gold) = load_input(&a.input, &a.text)?;
    let predicted = tokens.iter().map(|s| model.tag(s)).collect();
    finish_tagging(tokens, predicted, gold, &a.report, &a.out)
}

fn cmd_crf_curve(a: CrfCurveArgs) -> Result<()> {
    let fam = load_families(&a.features)?;
    let train = tagger::read_conll(&a.train)?;
    let dev = a.dev.as_deref().map(tagger::read_conll).transpose()?;
    let test = tagger::read_conll(&a.test)?;
    let sizes: Vec<usize> = a
        .sizes
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| anyhow!("bad size `{}`", s)))
        .collect::<Result<_>>()?;
    let points = crf::learning_curve(
        &train,
        dev.as_ref(),
        &test,
        &sizes,
        &fam.variants(),
        &parse_grid(&a.lambda_grid)?,
    )?;
    let mut f = create(&a.out)?;
    crf::write_curve(&mut f, &points)?;
    f.flush()?;
    for p in &points {
        println!("{:<14} n={:<5} λ={:<8} F1 {:.4}", p.variant, p.size, p.lambda, p.report.f1);
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let config = PipelineConfig::load(&a.config)?;
    let stages = a.stages.as_deref().map(Stage::parse_list).transpose()?;
    let manifest = pipeline::run_pipeline(&config, &RunOptions { stages, jobs: a.jobs })?;
    for r in &manifest.stages {
        eprintln!("{:<9} {:?} {:.2}s", r.stage.name(), r.status, r.seconds);
    }
    eprintln!("manifest -> {}", config.out.join(pipeline::MANIFEST).display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let c = synth::generate(&SynthConfig {
        seed: a.seed,
        sentences: a.sentences,
        ..SynthConfig::default()
    })?;
    c.write(&a.out)?;
    eprintln!(
        "{} entities, {} distractors, {} sentences -> {}",
        c.entities.len(),
        c.distractors.len(),
        a.sentences,
        a.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let r = match cli.command {
        Command::Corpus(a) => cmd_corpus(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Views(a) => cmd_views(a),
        Command::Cca(a) => cmd_cca(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Cotrain(a) => cmd_cotrain(a),
        Command::Tag(a) => cmd_tag(a),
        Command::Crf(CrfCommand::Train(a)) => cmd_crf_train(a),
        Command::Crf(CrfCommand::Tag(a)) => cmd_crf_tag(a),
        Command::Crf(CrfCommand::Curve(a)) => cmd_crf_curve(a),
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<forge_core::Error>() {
                Some(forge_core::Error::Stage { stage, source }) => eprintln!("error[{}]: {}", stage, source),
                _ => eprintln!("error: {:#}", e),
            }
            ExitCode::FAILURE
        }
    }
}
