//! Spelling and context views of candidate occurrences.
//!
//! Every occurrence of a candidate phrase contributes one row to each view:
//! the spelling row holds an identity feature for the phrase plus a
//! capitalization bit, the context row holds one indicator per
//! `(position, word)` for the three words on either side.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, VocabStats};
use crate::error::{Error, Result};
use crate::extract::CandidatePhrase;
use crate::matcher::PhraseMatcher;
use crate::sparse::{CsrMatrix, SparseVector};

pub const WINDOW: usize = 3;
/// Pads context windows at sentence edges.
pub const BOUNDARY: &str = "<b>";
pub const OOV: &str = "<oov>";
pub const CAPS_FEATURE: &str = "<caps>";
const POSITIONS: [i32; 6] = [-3, -2, -1, 1, 2, 3];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Locator {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateOccurrence {
    /// Lowercase phrase.
    pub phrase: String,
    /// Whether this occurrence's surface form starts with an uppercase letter.
    pub capitalized: bool,
    /// Positions -3, -2, -1 (lowercased, boundary-padded).
    pub left: [String; WINDOW],
    /// Positions +1, +2, +3.
    pub right: [String; WINDOW],
    pub locator: Locator,
}

impl CandidateOccurrence {
    pub fn from_span(sentence: &Sentence, start: usize, end: usize) -> CandidateOccurrence {
        let lower = sentence.lowers();
        let at = |i: isize| -> String {
            if i < 0 || i as usize >= lower.len() {
                BOUNDARY.to_string()
            } else {
                lower[i as usize].to_string()
            }
        };
        let s = start as isize;
        let e = end as isize;
        CandidateOccurrence {
            phrase: lower[start..end].join(" "),
            capitalized: sentence.tokens[start].is_capitalized(),
            left: [at(s - 3), at(s - 2), at(s - 1)],
            right: [at(e), at(e + 1), at(e + 2)],
            locator: Locator {
                doc_id: sentence.doc_id.clone(),
                sentence: sentence.index,
                start,
                end,
            },
        }
    }

    /// `(position, word)` for the six context slots.
    pub fn context(&self) -> impl Iterator<Item = (i32, &str)> {
        POSITIONS
            .iter()
            .copied()
            .zip(self.left.iter().chain(self.right.iter()).map(String::as_str))
    }
}

/// Occurrences of candidates in one sentence (longest match, leftmost
/// first, non-overlapping).
pub fn occurrences_in(sentence: &Sentence, matcher: &PhraseMatcher) -> Vec<CandidateOccurrence> {
    matcher
        .find(&sentence.lowers())
        .into_iter()
        .map(|(s, e, _)| CandidateOccurrence::from_span(sentence, s, e))
        .collect()
}

pub fn collect_occurrences<I>(sentences: I, candidates: &[CandidatePhrase]) -> Result<Vec<CandidateOccurrence>>
where
    I: IntoIterator<Item = Result<Sentence>>,
{
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate list"));
    }
    let matcher = PhraseMatcher::new(candidates.iter().map(|c| c.lower.as_str()));
    let mut out = Vec::new();
    for s in sentences {
        out.extend(occurrences_in(&s?, &matcher));
    }
    Ok(out)
}

/// Word-level mode: every token in the vocabulary is an occurrence whose
/// spelling is the single word.
pub fn collect_word_occurrences<I>(sentences: I, vocab: &VocabStats) -> Result<Vec<CandidateOccurrence>>
where
    I: IntoIterator<Item = Result<Sentence>>,
{
    if vocab.is_empty() {
        return Err(Error::EmptyInput("vocabulary"));
    }
    let mut out = Vec::new();
    for s in sentences {
        let s = s?;
        for (i, t) in s.tokens.iter().enumerate() {
            if vocab.contains(&t.lower) {
                out.push(CandidateOccurrence::from_span(&s, i, i + 1));
            }
        }
    }
    Ok(out)
}

/// Bidirectional feature-name/column map. Once frozen, unknown names fail.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureIndex {
    names: Vec<String>,
    ids: HashMap<String, usize>,
    frozen: bool,
}

impl FeatureIndex {
    pub fn from_names(names: Vec<String>) -> Result<FeatureIndex> {
        let mut ids = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if ids.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate feature `{}`", n)));
            }
        }
        Ok(FeatureIndex {
            names,
            ids,
            frozen: true,
        })
    }

    pub fn get_or_insert(&mut self, name: &str) -> Result<usize> {
        if let Some(&i) = self.ids.get(name) {
            return Ok(i);
        }
        if self.frozen {
            return Err(Error::UnknownFeature(name.to_string()));
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), i);
        Ok(i)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn lookup(&self, name: &str) -> Result<usize> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Spelling view index: one identity column per phrase (sorted), then the
/// capitalization column. The caps bit of a phrase is its majority casing
/// over the corpus, so every occurrence of a phrase gets the same vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpellingIndex {
    pub index: FeatureIndex,
    caps: BTreeMap<String, bool>,
}

fn identity_feature(phrase: &str) -> String {
    format!("phrase={}", phrase)
}

impl SpellingIndex {
    pub fn build(occurrences: &[CandidateOccurrence]) -> SpellingIndex {
        let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for o in occurrences {
            let e = tally.entry(o.phrase.as_str()).or_default();
            e.0 += usize::from(o.capitalized);
            e.1 += 1;
        }
        let caps: BTreeMap<String, bool> = tally
            .into_iter()
            .map(|(p, (c, n))| (p.to_string(), 2 * c > n))
            .collect();
        SpellingIndex::from_caps(caps)
    }

    pub fn from_caps(caps: BTreeMap<String, bool>) -> SpellingIndex {
        let mut names: Vec<String> = caps.keys().map(|p| identity_feature(p)).collect();
        names.push(CAPS_FEATURE.to_string());
        SpellingIndex {
            index: FeatureIndex::from_names(names).expect("phrases are unique"),
            caps,
        }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn caps_column(&self) -> usize {
        self.index.len() - 1
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.caps.keys().map(String::as_str)
    }

    pub fn is_capitalized(&self, phrase: &str) -> Option<bool> {
        self.caps.get(phrase).copied()
    }

    pub fn phrase_of_column(&self, col: usize) -> Option<&str> {
        self.index.name(col).and_then(|n| n.strip_prefix("phrase="))
    }

    /// Canonical spelling vector of a phrase.
    pub fn phrase_vector(&self, phrase: &str) -> Result<SparseVector> {
        let id = self.index.lookup(&identity_feature(phrase))?;
        let mut cols = vec![id];
        if self.caps.get(phrase).copied().unwrap_or(false) {
            cols.push(self.caps_column());
        }
        Ok(SparseVector::indicator(cols))
    }
}

pub fn featurize_spelling(occ: &CandidateOccurrence, index: &SpellingIndex) -> Result<SparseVector> {
    index.phrase_vector(&occ.phrase)
}

fn context_feature(pos: i32, word: &str) -> String {
    format!("{:+}|{}", pos, word)
}

/// Context view index over `(position, word)` names such as `-1|the`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextIndex {
    pub index: FeatureIndex,
}

impl ContextIndex {
    /// Features seen fewer than `min_count` times collapse into one OOV
    /// column per position.
    pub fn build(occurrences: &[CandidateOccurrence], min_count: usize) -> ContextIndex {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for o in occurrences {
            for (p, w) in o.context() {
                *counts.entry(context_feature(p, w)).or_default() += 1;
            }
        }
        let mut names: BTreeSet<String> = BTreeSet::new();
        for (name, c) in counts {
            if c >= min_count {
                names.insert(name);
            } else {
                let pos = name.split('|').next().unwrap();
                names.insert(format!("{}|{}", pos, OOV));
            }
        }
        ContextIndex {
            index: FeatureIndex::from_names(names.into_iter().collect()).expect("unique"),
        }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// Column for `(pos, word)`, falling back to the position's OOV column
    /// when one exists.
    pub fn column(&self, pos: i32, word: &str) -> Option<usize> {
        self.index
            .get(&context_feature(pos, word))
            .or_else(|| self.index.get(&context_feature(pos, OOV)))
    }

    /// `(position, word)` of a column.
    pub fn feature(&self, col: usize) -> Option<(i32, &str)> {
        let name = self.index.name(col)?;
        let (p, w) = name.split_once('|')?;
        Some((p.parse().ok()?, w))
    }
}

/// Up to six indicators; words missing from the frozen index with no OOV
/// column for their position contribute nothing.
pub fn featurize_context(occ: &CandidateOccurrence, index: &ContextIndex) -> SparseVector {
    SparseVector::indicator(occ.context().filter_map(|(p, w)| index.column(p, w)))
}

/// Row-aligned design matrices for both views.
#[derive(Debug, Clone)]
pub struct ViewData {
    pub x: CsrMatrix,
    pub z: CsrMatrix,
    pub spelling: SpellingIndex,
    pub context: ContextIndex,
    pub locators: Vec<Locator>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewOptions {
    pub context_min_count: usize,
}

impl Default for ViewOptions {
    fn default() -> Self {
        ViewOptions { context_min_count: 1 }
    }
}

pub fn build_design_matrices(occurrences: &[CandidateOccurrence], opts: &ViewOptions) -> Result<ViewData> {
    if occurrences.is_empty() {
        return Err(Error::EmptyInput("no candidate occurrences; CCA is undefined"));
    }
    let spelling = SpellingIndex::build(occurrences);
    let context = ContextIndex::build(occurrences, opts.context_min_count.max(1));
    let mut x = CsrMatrix::from_rows(&[], spelling.dim())?;
    let mut z = CsrMatrix::from_rows(&[], context.dim())?;
    for o in occurrences {
        x.push_row(&featurize_spelling(o, &spelling)?)?;
        z.push_row(&featurize_context(o, &context))?;
    }
    Ok(ViewData {
        x,
        z,
        spelling,
        context,
        locators: occurrences.iter().map(|o| o.locator.clone()).collect(),
    })
}

const SPELLING_FILE: &str = "spelling.mtx";
const CONTEXT_FILE: &str = "context.mtx";
const SPELLING_FEATURES: &str = "spelling_features.tsv";
const CONTEXT_FEATURES: &str = "context_features.tsv";
const LOCATORS: &str = "locators.tsv";

fn io(p: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(p, e)
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

impl ViewData {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Phrase of row `i`.
    pub fn row_phrase(&self, i: usize) -> Option<&str> {
        self.x.row(i).find_map(|(c, _)| self.spelling.phrase_of_column(c))
    }

    /// Rebuilds occurrences from the stored rows (context words that fell
    /// into OOV columns come back as the OOV symbol).
    pub fn occurrences(&self) -> Vec<CandidateOccurrence> {
        (0..self.n())
            .map(|i| {
                let phrase = self.row_phrase(i).unwrap_or_default().to_string();
                let mut slots: [String; 6] = Default::default();
                for (c, _) in self.z.row(i) {
                    if let Some((p, w)) = self.context.feature(c) {
                        if let Some(k) = POSITIONS.iter().position(|&q| q == p) {
                            slots[k] = w.to_string();
                        }
                    }
                }
                let [a, b, c, d, e, f] = slots;
                CandidateOccurrence {
                    capitalized: self.spelling.is_capitalized(&phrase).unwrap_or(false),
                    phrase,
                    left: [a, b, c],
                    right: [d, e, f],
                    locator: self.locators[i].clone(),
                }
            })
            .collect()
    }

    /// Canonical spelling vector of every phrase, sorted by phrase.
    pub fn phrase_vectors(&self) -> Result<Vec<(String, SparseVector)>> {
        self.spelling
            .phrases()
            .map(|p| Ok((p.to_string(), self.spelling.phrase_vector(p)?)))
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join(SPELLING_FILE);
        self.x.write_triplets(&mut create(&p)?).map_err(io(&p))?;
        let p = dir.join(CONTEXT_FILE);
        self.z.write_triplets(&mut create(&p)?).map_err(io(&p))?;
        let p = dir.join(SPELLING_FEATURES);
        let mut f = create(&p)?;
        for (col, name) in self.spelling.index.names().iter().enumerate() {
            let caps = name
                .strip_prefix("phrase=")
                .and_then(|ph| self.spelling.is_capitalized(ph))
                .map(|c| if c { "1" } else { "0" })
                .unwrap_or("-");
            writeln!(f, "{}\t{}\t{}", col, name, caps).map_err(io(&p))?;
        }
        f.flush().map_err(io(&p))?;
        let p = dir.join(CONTEXT_FEATURES);
        let mut f = create(&p)?;
        for (col, name) in self.context.index.names().iter().enumerate() {
            writeln!(f, "{}\t{}", col, name).map_err(io(&p))?;
        }
        f.flush().map_err(io(&p))?;
        let p = dir.join(LOCATORS);
        let mut f = create(&p)?;
        for (row, l) in self.locators.iter().enumerate() {
            let phrase = self.row_phrase(row).unwrap_or_default();
            writeln!(f, "{}\t{}\t{}\t{}\t{}\t{}", row, l.doc_id, l.sentence, l.start, l.end, phrase)
                .map_err(io(&p))?;
        }
        f.flush().map_err(io(&p))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<ViewData> {
        let x = CsrMatrix::read_triplets(&dir.join(SPELLING_FILE))?;
        let z = CsrMatrix::read_triplets(&dir.join(CONTEXT_FILE))?;
        if x.nrows() != z.nrows() {
            return Err(Error::Alignment(format!(
                "spelling view has {} rows, context view {}",
                x.nrows(),
                z.nrows()
            )));
        }
        let p = dir.join(SPELLING_FEATURES);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let mut caps = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(&p, no + 1, "expected `col TAB name TAB caps`"));
            }
            if let Some(ph) = cols[1].strip_prefix("phrase=") {
                caps.insert(ph.to_string(), cols[2] == "1");
            }
        }
        let spelling = SpellingIndex::from_caps(caps);
        if spelling.dim() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                found: spelling.dim(),
            });
        }
        let p = dir.join(CONTEXT_FEATURES);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let names: Vec<String> = text
            .lines()
            .map(|l| l.split_once('\t').map(|(_, n)| n.to_string()).unwrap_or_default())
            .collect();
        let context = ContextIndex {
            index: FeatureIndex::from_names(names)?,
        };
        if context.dim() != z.ncols() {
            return Err(Error::DimensionMismatch {
                expected: z.ncols(),
                found: context.dim(),
            });
        }
        let p = dir.join(LOCATORS);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let mut locators = Vec::with_capacity(x.nrows());
        for (no, line) in text.lines().enumerate() {
            let c: Vec<&str> = line.split('\t').collect();
            let bad = || Error::parse(&p, no + 1, "bad locator line");
            if c.len() < 5 {
                return Err(bad());
            }
            locators.push(Locator {
                doc_id: c[1].to_string(),
                sentence: c[2].parse().map_err(|_| bad())?,
                start: c[3].parse().map_err(|_| bad())?,
                end: c[4].parse().map_err(|_| bad())?,
            });
        }
        if locators.len() != x.nrows() {
            return Err(Error::Alignment(format!(
                "{} locators for {} rows",
                locators.len(),
                x.nrows()
            )));
        }
        Ok(ViewData {
            x,
            z,
            spelling,
            context,
            locators,
        })
    }
}
