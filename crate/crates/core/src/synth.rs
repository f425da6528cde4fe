//! Synthetic corpora with planted entities.
//!
//! Entities and distractor phrases are made-up words. Every phrase shows up
//! at least once in the harvesting frame `the X virus`, so the candidate
//! list holds both kinds. All other mentions sit inside context templates:
//! each phrase prefers a few templates of its own class, and a `noise`
//! fraction of its mentions uses templates of the other class instead.
//! Gold BIO sentences for tagger training and evaluation come from the
//! same process.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::SeedSet;
use crate::error::{Error, Result};
use crate::tagger::{write_conll, GoldCorpus, Tag, TaggedSentence};

pub const PATTERN_TOML: &str = "[[pattern]]\nkind = \"between\"\nleft = \"the\"\nright = \"virus\"\n";

type Template = (&'static [&'static str], &'static [&'static str]);

const ENTITY_TEMPLATES: [Template; 12] = [
    (&["patients", "infected", "with"], &["developed", "severe", "fever"]),
    (&["antibodies", "against"], &["were", "detected"]),
    (&["an", "outbreak", "of"], &["was", "reported"]),
    (&["transmission", "of"], &["between", "hosts"]),
    (&["a", "vaccine", "against"], &["proved", "effective"]),
    (&["cases", "of"], &["infection", "rose", "sharply"]),
    (&["replication", "of"], &["in", "host", "cells"]),
    (&["exposure", "to"], &["caused", "acute", "illness"]),
    (&["children", "carrying"], &["recovered", "within", "days"]),
    (&["symptoms", "of"], &["include", "cough"]),
    (&["spread", "of"], &["across", "borders"]),
    (&["screening", "for"], &["in", "travelers"]),
];

const DISTRACTOR_TEMPLATES: [Template; 12] = [
    (&["the", "purified"], &["protein", "was", "measured"]),
    (&["expression", "of"], &["gene", "increased"]),
    (&["a", "stable"], &["strain", "grew", "slowly"]),
    (&["samples", "containing"], &["were", "stored", "frozen"]),
    (&["levels", "of"], &["were", "elevated"]),
    (&["binding", "of"], &["to", "membrane", "receptors"]),
    (&["synthesis", "of"], &["requires", "two", "enzymes"]),
    (&["cultures", "treated", "with"], &["for", "six", "hours"]),
    (&["crystals", "of"], &["diffracted", "well"]),
    (&["mice", "lacking"], &["were", "viable"]),
    (&["a", "recombinant"], &["domain", "was", "cloned"]),
    (&["inhibition", "of"], &["reduced", "activity"]),
];

const FILLER: &[&str] = &[
    "we", "observed", "that", "in", "this", "study", "results", "data", "after", "during", "our", "analysis",
    "recent", "work", "shows", "clearly", "however", "moreover", "overall", "here", "further", "previous",
    "reports", "suggest", "indicate", "findings", "also", "these", "those", "several", "many", "some", "first",
    "second", "finally", "notably", "similarly", "thus", "therefore", "often", "rarely", "usually", "later",
    "earlier", "two", "three", "groups", "trials", "models", "experiments", "methods", "review", "survey",
    "hospital", "region", "year", "month", "week", "authors", "team", "laboratory", "clinic", "field", "site",
    "population", "cohort", "sample", "evidence", "figure", "table", "section", "phase", "stage", "baseline",
    "followup", "period", "series", "panel", "report", "note", "summary", "update", "protocol",
];

/// Group-specific context words, two per group template.
const GROUP_WORDS: &[&str] = &[
    "acquired", "adjacent", "airborne", "annual", "arterial", "atypical", "bacterial", "benign",
    "bilateral", "bovine", "canine", "cardiac", "cellular", "chronic", "clinical", "coastal", "congenital",
    "cranial", "cutaneous", "dental", "dermal", "distal", "dorsal", "enteric", "equine", "fatal", "feline",
    "fetal", "gastric", "genital", "hepatic", "nocturnal", "immune", "infantile", "intestinal", "juvenile",
    "lateral", "lethal", "lymphatic", "marine", "maternal", "medial", "mild", "mucosal", "muscular",
    "nasal", "neonatal", "neural", "ocular", "oral", "ovine", "pediatric", "pelvic", "porcine", "primary",
    "pulmonary", "renal", "respiratory", "rural", "seasonal", "secondary", "sporadic", "spinal", "systemic",
    "tidal", "topical", "toxic", "tropical", "urban", "urinary", "vascular", "venous", "viral", "zonal",
    "alpine", "arctic", "avian", "boreal", "desert", "lunar",
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "tu", "vex", "zor", "bi", "qua", "sel", "dra", "pho", "nim", "tal", "gri", "ox",
    "ul", "yen", "fer", "cos", "bry", "dun", "eph", "jol", "kri", "mav", "nox", "pel", "rho", "sut", "tev",
    "wix",
];

/// Pipeline config for a directory written by [`SynthCorpus::write`].
pub const PIPELINE_TOML: &str = r#"out = "run"
seed = 13

[corpus]
path = "corpus.txt"
patterns = "patterns.toml"
seeds = "seeds.txt"

[eval]
dev = "dev.conll"
test = "test.conll"

[crf]
train = "train.conll"
sizes = [10, 50, 200]
features = ["baseline", "dict", "phrase-emb"]
"#;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub entities: usize,
    pub distractors: usize,
    /// Unlabeled corpus size in sentences.
    pub sentences: usize,
    /// Fraction of mentions placed in the other class's templates.
    pub noise: f64,
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    pub seeds_per_class: usize,
    pub entity_groups: usize,
    pub distractor_groups: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            entities: 60,
            distractors: 240,
            sentences: 20_000,
            noise: 0.2,
            train_sentences: 400,
            dev_sentences: 300,
            test_sentences: 600,
            seeds_per_class: 10,
            entity_groups: 6,
            distractor_groups: 12,
        }
    }
}

#[derive(Debug, Clone)]
struct Phrase {
    tokens: Vec<String>,
    entity: bool,
    weight: f64,
    group: usize,
}

/// Group `g` owns two templates built from `GROUP_WORDS[4g..4g + 4]`, one
/// word on either side of the mention.
fn group_template(g: usize, which: usize) -> (Vec<String>, Vec<String>) {
    let i = 4 * g + 2 * which;
    (vec![GROUP_WORDS[i].to_string()], vec![GROUP_WORDS[i + 1].to_string()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    /// One document per entry, several sentences each.
    pub documents: Vec<String>,
    pub entities: Vec<String>,
    pub distractors: Vec<String>,
    pub seeds: SeedSet,
    pub train: GoldCorpus,
    pub dev: GoldCorpus,
    pub test: GoldCorpus,
}

fn pseudo_word(rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>) -> String {
    loop {
        let n = rng.random_range(2..=3);
        let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

fn make_phrases(
    rng: &mut ChaCha8Rng,
    n: usize,
    entity: bool,
    groups: std::ops::Range<usize>,
    taken: &mut BTreeSet<String>,
) -> Vec<Phrase> {
    let span = groups.len();
    (0..n)
        .map(|_| {
            let len = match rng.random_range(0..20) {
                0 => 3,
                1..=5 => 2,
                _ => 1,
            };
            let tokens: Vec<String> = (0..len).map(|_| pseudo_word(rng, taken)).collect();
            Phrase {
                tokens,
                entity,
                weight: rng.random_range(0.5..1.5),
                group: groups.start + rng.random_range(0..span),
            }
        })
        .collect()
}

fn weighted<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T], weight: impl Fn(&T) -> f64) -> &'a T {
    let total: f64 = items.iter().map(&weight).sum();
    let mut r = rng.random_range(0.0..total);
    for it in items {
        r -= weight(it);
        if r < 0.0 {
            return it;
        }
    }
    items.last().unwrap()
}

fn fillers(rng: &mut ChaCha8Rng, max: usize) -> Vec<String> {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| FILLER.choose(rng).unwrap().to_string()).collect()
}

/// One sentence mentioning `p`; returns tokens and the mention span.
/// Groups `0..entity_groups` are entity groups, the rest distractor groups.
struct Layout {
    entity_groups: usize,
    groups: usize,
}

fn shared(t: &Template) -> (Vec<String>, Vec<String>) {
    (t.0.iter().map(|s| s.to_string()).collect(), t.1.iter().map(|s| s.to_string()).collect())
}

/// Half of the in-class mentions use a class-wide template and half a
/// template of the phrase's group. Flipped mentions draw uniformly from
/// all templates of the other class.
fn sentence(rng: &mut ChaCha8Rng, p: &Phrase, noise: f64, neutral: bool, layout: &Layout) -> (Vec<String>, usize, usize) {
    let (left, right): (Vec<String>, Vec<String>) = if neutral {
        (vec!["the".into()], vec!["virus".into()])
    } else if rng.random_bool(noise) {
        let (shared_t, groups) = if p.entity {
            (&DISTRACTOR_TEMPLATES, layout.entity_groups..layout.groups)
        } else {
            (&ENTITY_TEMPLATES, 0..layout.entity_groups)
        };
        let k = rng.random_range(0..shared_t.len() + 2 * groups.len());
        if k < shared_t.len() {
            shared(&shared_t[k])
        } else {
            let j = k - shared_t.len();
            group_template(groups.start + j / 2, j % 2)
        }
    } else if rng.random_bool(0.5) {
        shared(if p.entity { ENTITY_TEMPLATES.choose(rng) } else { DISTRACTOR_TEMPLATES.choose(rng) }.unwrap())
    } else {
        group_template(p.group, rng.random_range(0..2))
    };
    let mut toks = fillers(rng, 3);
    toks.extend(left);
    let start = toks.len();
    toks.extend(p.tokens.iter().cloned());
    let end = toks.len();
    toks.extend(right);
    toks.extend(fillers(rng, 3));
    if let Some(c) = toks[0].chars().next() {
        toks[0] = c.to_uppercase().chain(toks[0].chars().skip(1)).collect();
    }
    toks.push(".".into());
    (toks, start, end)
}

fn gold(rng: &mut ChaCha8Rng, phrases: &[Phrase], n: usize, noise: f64, layout: &Layout) -> GoldCorpus {
    let sentences = (0..n)
        .map(|_| {
            let p = weighted(rng, phrases, |p| p.weight);
            let neutral = rng.random_bool(0.05);
            let (tokens, s, e) = sentence(rng, p, noise, neutral, layout);
            let mut tags = vec![Tag::O; tokens.len()];
            if p.entity {
                tags[s] = Tag::B;
                for t in &mut tags[s + 1..e] {
                    *t = Tag::I;
                }
            }
            TaggedSentence { tokens, tags }
        })
        .collect();
    GoldCorpus { sentences }
}

/// Takes phrases round-robin over the class's groups, in generation order.
fn stratified_seeds(phrases: &[Phrase], entity: bool, n: usize) -> Vec<String> {
    let mut by_group: std::collections::BTreeMap<usize, std::collections::VecDeque<&Phrase>> = Default::default();
    for p in phrases.iter().filter(|p| p.entity == entity) {
        by_group.entry(p.group).or_default().push_back(p);
    }
    let mut out = Vec::new();
    while out.len() < n && by_group.values().any(|q| !q.is_empty()) {
        for q in by_group.values_mut() {
            if out.len() < n {
                if let Some(p) = q.pop_front() {
                    out.push(p.tokens.join(" "));
                }
            }
        }
    }
    out
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    if config.entities < config.seeds_per_class || config.distractors < config.seeds_per_class {
        return Err(Error::InvalidArgument("fewer phrases than requested seeds".into()));
    }
    let layout = Layout {
        entity_groups: config.entity_groups,
        groups: config.entity_groups + config.distractor_groups,
    };
    if config.entity_groups == 0 || config.distractor_groups == 0 || 4 * layout.groups > GROUP_WORDS.len() {
        return Err(Error::InvalidArgument(format!(
            "need 1..={} groups in total with at least one per class",
            GROUP_WORDS.len() / 4
        )));
    }
    if !(0.0..=1.0).contains(&config.noise) {
        return Err(Error::InvalidArgument(format!("noise must lie in [0, 1], got {}", config.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken: BTreeSet<String> = ENTITY_TEMPLATES
        .iter()
        .chain(&DISTRACTOR_TEMPLATES)
        .flat_map(|(l, r)| l.iter().chain(r.iter()))
        .chain(FILLER)
        .chain(GROUP_WORDS)
        .map(|s| s.to_string())
        .collect();
    taken.insert("virus".into());
    let mut phrases = make_phrases(&mut rng, config.entities, true, 0..layout.entity_groups, &mut taken);
    phrases.extend(make_phrases(&mut rng, config.distractors, false, layout.entity_groups..layout.groups, &mut taken));

    let mut sents: Vec<Vec<String>> = Vec::with_capacity(config.sentences.max(phrases.len()));
    for p in &phrases {
        for _ in 0..rng.random_range(1..=2) {
            sents.push(sentence(&mut rng, p, config.noise, true, &layout).0);
        }
    }
    while sents.len() < config.sentences {
        let p = weighted(&mut rng, &phrases, |p| p.weight);
        sents.push(sentence(&mut rng, p, config.noise, false, &layout).0);
    }
    sents.shuffle(&mut rng);
    let documents = sents.chunks(10).map(|c| c.iter().map(|s| s.join(" ")).collect::<Vec<_>>().join(" ")).collect();

    let join = |p: &Phrase| p.tokens.join(" ");
    let entities: Vec<String> = phrases.iter().filter(|p| p.entity).map(join).collect();
    let distractors: Vec<String> = phrases.iter().filter(|p| !p.entity).map(join).collect();
    let seeds = SeedSet::new(
        &stratified_seeds(&phrases, true, config.seeds_per_class),
        &stratified_seeds(&phrases, false, config.seeds_per_class),
    )?;
    let train = gold(&mut rng, &phrases, config.train_sentences, config.noise, &layout);
    let dev = gold(&mut rng, &phrases, config.dev_sentences, config.noise, &layout);
    let test = gold(&mut rng, &phrases, config.test_sentences, config.noise, &layout);
    Ok(SynthCorpus {
        config: *config,
        documents,
        entities,
        distractors,
        seeds,
        train,
        dev,
        test,
    })
}

impl SynthCorpus {
    pub fn truth(&self) -> BTreeSet<&str> {
        self.entities.iter().map(String::as_str).collect()
    }

    /// Writes `corpus.txt`, `patterns.toml`, `seeds.txt`, `truth.txt`,
    /// `distractors.txt`, `{train,dev,test}.conll` and a `pipeline.toml`
    /// that wires them together into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, bytes: Vec<u8>| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
        };
        put("corpus.txt", (self.documents.join("\n") + "\n").into_bytes())?;
        put("patterns.toml", PATTERN_TOML.as_bytes().to_vec())?;
        put("pipeline.toml", PIPELINE_TOML.as_bytes().to_vec())?;
        put("seeds.txt", self.seeds.to_text().into_bytes())?;
        put("truth.txt", (self.entities.join("\n") + "\n").into_bytes())?;
        put("distractors.txt", (self.distractors.join("\n") + "\n").into_bytes())?;
        for (name, g) in [("train.conll", &self.train), ("dev.conll", &self.dev), ("test.conll", &self.test)] {
            let mut buf = Vec::new();
            write_conll(&mut buf, &g.sentences).expect("write to memory");
            put(name, buf)?;
        }
        Ok(())
    }
}
