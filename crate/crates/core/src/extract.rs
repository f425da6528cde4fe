//! Candidate phrase harvesting with lexical patterns.
//!
//! Two pattern shapes are supported: `between` collects the tokens framed by
//! a left and a right literal (`the ... virus`), and `after_trigger` collects
//! the noun-phrase-like spans following a trigger (`diseases such as ...`),
//! splitting coordinated lists into one candidate per conjunct.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_punctuation_token, Sentence};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_PHRASE_LEN: usize = 5;

/// Closed-class words that end a noun-phrase span.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "before", "being", "between", "both", "but", "by", "can", "could", "did", "do", "does",
    "during", "each", "either", "for", "from", "had", "has", "have", "having", "he", "her",
    "here", "his", "how", "however", "if", "in", "into", "is", "it", "its", "may", "might",
    "more", "most", "must", "neither", "no", "nor", "not", "of", "on", "or", "other", "our",
    "over", "shall", "she", "should", "since", "so", "some", "such", "than", "that", "the",
    "their", "them", "then", "there", "these", "they", "this", "those", "through", "to",
    "under", "until", "upon", "very", "was", "we", "were", "what", "when", "where", "whether",
    "which", "while", "who", "whom", "whose", "why", "will", "with", "within", "without",
    "would", "you", "your",
];

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "its", "their", "his", "her", "our",
    "your",
];

const CONJUNCTIONS: &[&str] = &["and", "or"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternKind {
    Between { left: Vec<String>, right: Vec<String> },
    AfterTrigger { trigger: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionPattern {
    pub kind: PatternKind,
    pub max_phrase_len: usize,
    pub case_sensitive: bool,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

impl ExtractionPattern {
    pub fn between(left: &str, right: &str) -> ExtractionPattern {
        ExtractionPattern {
            kind: PatternKind::Between {
                left: words(left),
                right: words(right),
            },
            max_phrase_len: DEFAULT_MAX_PHRASE_LEN,
            case_sensitive: false,
        }
    }

    pub fn after_trigger(trigger: &str) -> ExtractionPattern {
        ExtractionPattern {
            kind: PatternKind::AfterTrigger {
                trigger: words(trigger),
            },
            max_phrase_len: DEFAULT_MAX_PHRASE_LEN,
            case_sensitive: false,
        }
    }

    pub fn with_max_len(mut self, max_phrase_len: usize) -> Self {
        self.max_phrase_len = max_phrase_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_phrase_len == 0 {
            return Err(Error::InvalidArgument("max_phrase_len must be >= 1".into()));
        }
        let empty = match &self.kind {
            PatternKind::Between { left, right } => left.is_empty() || right.is_empty(),
            PatternKind::AfterTrigger { trigger } => trigger.is_empty(),
        };
        if empty {
            return Err(Error::InvalidArgument("pattern literals must be nonempty".into()));
        }
        Ok(())
    }
}

/// One pattern hit: a contiguous token span `[start, end)` of a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateMatch {
    pub tokens: Vec<String>,
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
}

impl CandidateMatch {
    fn new(sentence: &Sentence, start: usize, end: usize) -> CandidateMatch {
        CandidateMatch {
            tokens: sentence.tokens[start..end].iter().map(|t| t.text.clone()).collect(),
            doc_id: sentence.doc_id.clone(),
            sentence: sentence.index,
            start,
            end,
        }
    }

    pub fn lower(&self) -> String {
        self.tokens.join(" ").to_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePhrase {
    /// Surface form tokens.
    pub tokens: Vec<String>,
    /// Canonical lowercase form, tokens joined by single spaces.
    pub lower: String,
    pub freq: u64,
}

impl CandidatePhrase {
    pub fn from_lower(lower: &str, freq: u64) -> CandidatePhrase {
        CandidatePhrase {
            tokens: words(lower),
            lower: lower.to_string(),
            freq,
        }
    }

    pub fn lower_tokens(&self) -> Vec<String> {
        words(&self.lower)
    }

    /// Seen fewer than twice; kept, but flagged for downstream filtering.
    pub fn is_rare(&self) -> bool {
        self.freq < 2
    }
}

fn fold(token: &str, case_sensitive: bool) -> String {
    if case_sensitive {
        token.to_string()
    } else {
        token.to_lowercase()
    }
}

fn matches_at(tokens: &[String], at: usize, literal: &[String]) -> bool {
    at + literal.len() <= tokens.len() && tokens[at..at + literal.len()] == *literal
}

fn folded(sentence: &Sentence, pattern: &ExtractionPattern) -> Vec<String> {
    sentence
        .tokens
        .iter()
        .map(|t| fold(&t.text, pattern.case_sensitive))
        .collect()
}

/// Spans framed by `left ... right`, 1..=max_phrase_len tokens, with no
/// punctuation inside. The left literal closest to the right literal wins,
/// so `the mutant of the influenza virus` yields `influenza`.
pub fn extract_between(sentence: &Sentence, pattern: &ExtractionPattern) -> Vec<CandidateMatch> {
    let PatternKind::Between { left, right } = &pattern.kind else {
        return Vec::new();
    };
    let left: Vec<String> = left.iter().map(|w| fold(w, pattern.case_sensitive)).collect();
    let right: Vec<String> = right.iter().map(|w| fold(w, pattern.case_sensitive)).collect();
    let toks = folded(sentence, pattern);
    let mut out = Vec::new();
    for i in 0..toks.len() {
        if !matches_at(&toks, i, &left) {
            continue;
        }
        let start = i + left.len();
        for end in start + 1..=(start + pattern.max_phrase_len).min(toks.len()) {
            let last = end - 1;
            if is_punctuation_token(&toks[last]) || matches_at(&toks, last, &left) {
                break;
            }
            if matches_at(&toks, end, &right) {
                out.push(CandidateMatch::new(sentence, start, end));
                break;
            }
        }
    }
    out
}

/// Per-sentence chunk spans from an external chunker, overriding the
/// noun-phrase heuristic for sentences they cover.
#[derive(Debug, Clone, Default)]
pub struct ChunkIndex {
    spans: HashMap<(String, usize), Vec<(usize, usize)>>,
}

impl ChunkIndex {
    pub fn insert(&mut self, doc_id: &str, sentence: usize, start: usize, end: usize) {
        let v = self.spans.entry((doc_id.to_string(), sentence)).or_default();
        v.push((start, end));
        v.sort_unstable();
    }

    fn get(&self, sentence: &Sentence) -> Option<&[(usize, usize)]> {
        self.spans
            .get(&(sentence.doc_id.clone(), sentence.index))
            .map(Vec::as_slice)
    }

    /// Reads `doc_id TAB sentence_index TAB start TAB end` lines (token
    /// offsets, end exclusive).
    pub fn read(path: &Path) -> Result<ChunkIndex> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut index = ChunkIndex::default();
        for (no, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::parse(path, no + 1, "expected 4 tab-separated columns"));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse(path, no + 1, format!("bad integer `{}`", s)))
            };
            let (sent, start, end) = (num(cols[1])?, num(cols[2])?, num(cols[3])?);
            if start >= end {
                return Err(Error::parse(path, no + 1, "empty chunk span"));
            }
            index.insert(cols[0], sent, start, end);
        }
        Ok(index)
    }
}

fn is_stop(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

/// Heuristic noun phrase at `pos`: skip determiners, extend over content
/// tokens. Returns `(start, end, resume)` where `resume` is the end of the
/// untruncated content run.
fn heuristic_np(lower: &[String], pos: usize, max_len: usize) -> Option<(usize, usize, usize)> {
    let mut end = pos;
    while end < lower.len() && DETERMINERS.contains(&lower[end].as_str()) {
        end += 1;
    }
    while end < lower.len() && !is_stop(&lower[end]) && !is_punctuation_token(&lower[end]) {
        end += 1;
    }
    trim_np(lower, pos, end, max_len).map(|(s, e)| (s, e, end))
}

fn trim_np(lower: &[String], mut start: usize, mut end: usize, max_len: usize) -> Option<(usize, usize)> {
    while start < end && DETERMINERS.contains(&lower[start].as_str()) {
        start += 1;
    }
    end = end.min(start + max_len);
    while end > start && (is_stop(&lower[end - 1]) || is_punctuation_token(&lower[end - 1])) {
        end -= 1;
    }
    (end > start).then_some((start, end))
}

fn chunk_np(
    chunks: &[(usize, usize)],
    lower: &[String],
    pos: usize,
    max_len: usize,
) -> Option<(usize, usize, usize)> {
    let &(s, e) = chunks.iter().find(|&&(s, e)| s <= pos && pos < e)?;
    trim_np(lower, s.max(pos), e, max_len).map(|(a, b)| (a, b, e))
}

/// Noun-phrase-like spans after each trigger occurrence. Coordinated lists
/// (`X, Y and Z`) yield one match per conjunct.
pub fn extract_after_trigger(
    sentence: &Sentence,
    pattern: &ExtractionPattern,
    chunks: Option<&ChunkIndex>,
) -> Vec<CandidateMatch> {
    let PatternKind::AfterTrigger { trigger } = &pattern.kind else {
        return Vec::new();
    };
    let trigger: Vec<String> = trigger.iter().map(|w| fold(w, pattern.case_sensitive)).collect();
    let toks = folded(sentence, pattern);
    let lower: Vec<String> = sentence.lowers().into_iter().map(str::to_string).collect();
    let sentence_chunks = chunks.and_then(|c| c.get(sentence));
    let mut out = Vec::new();
    for i in 0..toks.len() {
        if !matches_at(&toks, i, &trigger) {
            continue;
        }
        let mut pos = i + trigger.len();
        loop {
            let np = match sentence_chunks {
                Some(ch) => chunk_np(ch, &lower, pos, pattern.max_phrase_len),
                None => heuristic_np(&lower, pos, pattern.max_phrase_len),
            };
            let Some((start, end, resume)) = np else { break };
            out.push(CandidateMatch::new(sentence, start, end));
            let mut next = resume;
            if lower.get(next).map(String::as_str) == Some(",") {
                next += 1;
            }
            if lower.get(next).is_some_and(|w| CONJUNCTIONS.contains(&w.as_str())) {
                next += 1;
            }
            if next == resume {
                break;
            }
            pos = next;
        }
    }
    out
}

/// Applies a set of patterns to sentences.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub patterns: Vec<ExtractionPattern>,
    pub chunks: Option<ChunkIndex>,
}

impl Extractor {
    pub fn new(patterns: Vec<ExtractionPattern>) -> Result<Extractor> {
        for p in &patterns {
            p.validate()?;
        }
        Ok(Extractor {
            patterns,
            chunks: None,
        })
    }

    pub fn with_chunks(mut self, chunks: ChunkIndex) -> Self {
        self.chunks = Some(chunks);
        self
    }

    pub fn extract(&self, sentence: &Sentence) -> Vec<CandidateMatch> {
        let mut out = Vec::new();
        for p in &self.patterns {
            match p.kind {
                PatternKind::Between { .. } => out.extend(extract_between(sentence, p)),
                PatternKind::AfterTrigger { .. } => {
                    out.extend(extract_after_trigger(sentence, p, self.chunks.as_ref()))
                }
            }
        }
        out
    }
}

/// Multiset of matches keyed by lowercase form. Merging is associative and
/// commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateAggregator {
    entries: BTreeMap<String, BTreeMap<Vec<String>, u64>>,
}

impl CandidateAggregator {
    pub fn add(&mut self, m: &CandidateMatch) {
        *self
            .entries
            .entry(m.lower())
            .or_default()
            .entry(m.tokens.clone())
            .or_default() += 1;
    }

    pub fn merge(mut self, other: CandidateAggregator) -> CandidateAggregator {
        for (lower, forms) in other.entries {
            let slot = self.entries.entry(lower).or_default();
            for (form, c) in forms {
                *slot.entry(form).or_default() += c;
            }
        }
        self
    }

    /// Sorted by frequency descending, then lowercase form. The surface form
    /// is the most frequent one (lexicographically smallest on ties), which
    /// keeps the result independent of match order.
    pub fn finish(self) -> Vec<CandidatePhrase> {
        let mut out: Vec<CandidatePhrase> = self
            .entries
            .into_iter()
            .map(|(lower, forms)| {
                let freq = forms.values().sum();
                let tokens = forms
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                    .map(|(f, _)| f.clone())
                    .unwrap_or_default();
                CandidatePhrase { tokens, lower, freq }
            })
            .collect();
        sort_candidates(&mut out);
        out
    }
}

pub fn sort_candidates(c: &mut [CandidatePhrase]) {
    c.sort_by(|a, b| b.freq.cmp(&a.freq).then_with(|| a.lower.cmp(&b.lower)));
}

pub fn aggregate_candidates<'a>(matches: impl IntoIterator<Item = &'a CandidateMatch>) -> Vec<CandidatePhrase> {
    let mut agg = CandidateAggregator::default();
    for m in matches {
        agg.add(m);
    }
    agg.finish()
}

#[derive(Debug, Deserialize)]
struct PatternFile {
    #[serde(default, rename = "pattern")]
    patterns: Vec<PatternEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternEntry {
    kind: String,
    left: Option<String>,
    right: Option<String>,
    trigger: Option<String>,
    max_phrase_len: Option<usize>,
    #[serde(default)]
    case_sensitive: bool,
}

/// Parses a pattern config:
///
/// ```toml
/// [[pattern]]
/// kind = "between"
/// left = "the"
/// right = "virus"
///
/// [[pattern]]
/// kind = "after_trigger"
/// trigger = "diseases such as"
/// max_phrase_len = 4
/// ```
pub fn parse_patterns(text: &str) -> Result<Vec<ExtractionPattern>> {
    let file: PatternFile = toml::from_str(text)
        .map_err(|e| Error::InvalidArgument(format!("pattern file: {}", e)))?;
    let mut out = Vec::new();
    for (i, e) in file.patterns.into_iter().enumerate() {
        let mut p = match e.kind.as_str() {
            "between" => match (&e.left, &e.right) {
                (Some(l), Some(r)) => ExtractionPattern::between(l, r),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "pattern {}: `between` needs `left` and `right`",
                        i
                    )))
                }
            },
            "after_trigger" => match &e.trigger {
                Some(t) => ExtractionPattern::after_trigger(t),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "pattern {}: `after_trigger` needs `trigger`",
                        i
                    )))
                }
            },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "pattern {}: unknown kind `{}`",
                    i, other
                )))
            }
        };
        if let Some(n) = e.max_phrase_len {
            p.max_phrase_len = n;
        }
        p.case_sensitive = e.case_sensitive;
        p.validate()?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("pattern file declares no patterns".into()));
    }
    Ok(out)
}

pub fn read_patterns(path: &Path) -> Result<Vec<ExtractionPattern>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_patterns(&text)
}

/// `lower TAB freq`, one candidate per line.
pub fn write_candidates<W: Write>(out: &mut W, candidates: &[CandidatePhrase]) -> Result<()> {
    for c in candidates {
        writeln!(out, "{}\t{}", c.lower, c.freq).map_err(|e| Error::io("<candidates>", e))?;
    }
    Ok(())
}

pub fn read_candidates(path: &Path) -> Result<Vec<CandidatePhrase>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (lower, freq) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, no + 1, "expected `phrase TAB freq`"))?;
        let freq = freq
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::parse(path, no + 1, "bad frequency"))?;
        out.push(CandidatePhrase::from_lower(lower, freq));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::segment_sentences;
    use proptest::prelude::*;

    fn sentence(text: &str) -> Sentence {
        segment_sentences(text).remove(0)
    }

    fn lowers(ms: &[CandidateMatch]) -> Vec<String> {
        ms.iter().map(CandidateMatch::lower).collect()
    }

    #[test]
    fn between_single_word() {
        let s = sentence("we studied the influenza virus in mice");
        let m = extract_between(&s, &ExtractionPattern::between("the", "virus"));
        assert_eq!(lowers(&m), ["influenza"]);
        assert_eq!((m[0].start, m[0].end), (3, 4));
    }

    #[test]
    fn between_multi_word() {
        let s = sentence("the human immunodeficiency virus replicates");
        let m = extract_between(&s, &ExtractionPattern::between("the", "virus"));
        assert_eq!(lowers(&m), ["human immunodeficiency"]);
    }

    #[test]
    fn between_empty_span_excluded() {
        let s = sentence("the virus mutates");
        assert!(extract_between(&s, &ExtractionPattern::between("the", "virus")).is_empty());
    }

    #[test]
    fn between_respects_punctuation_and_length() {
        let p = ExtractionPattern::between("the", "virus");
        let s = sentence("the mouse, a virus");
        assert!(extract_between(&s, &p).is_empty());
        let s = sentence("the a b c d e f virus");
        assert!(extract_between(&s, &p).is_empty());
        let s = sentence("the mutant of the influenza virus");
        assert_eq!(lowers(&extract_between(&s, &p)), ["influenza"]);
    }

    #[test]
    fn between_case_sensitivity() {
        let s = sentence("The Epstein-Barr Virus was found");
        assert_eq!(
            lowers(&extract_between(&s, &ExtractionPattern::between("the", "virus"))),
            ["epstein-barr"]
        );
        let mut p = ExtractionPattern::between("the", "virus");
        p.case_sensitive = true;
        assert!(extract_between(&s, &p).is_empty());
    }

    #[test]
    fn trigger_simple_np() {
        let s = sentence("patients with cystic fibrosis were enrolled");
        let m = extract_after_trigger(&s, &ExtractionPattern::after_trigger("patients with"), None);
        assert_eq!(lowers(&m), ["cystic fibrosis"]);
    }

    #[test]
    fn trigger_coordination() {
        let s = sentence("diseases such as measles, mumps and rubella");
        let m = extract_after_trigger(&s, &ExtractionPattern::after_trigger("diseases such as"), None);
        assert_eq!(lowers(&m), ["measles", "mumps", "rubella"]);
        let s = sentence("diseases including asthma, and chronic bronchitis.");
        let m = extract_after_trigger(&s, &ExtractionPattern::after_trigger("diseases including"), None);
        assert_eq!(lowers(&m), ["asthma", "chronic bronchitis"]);
    }

    #[test]
    fn trigger_stopword_only() {
        let s = sentence("patients with the");
        assert!(extract_after_trigger(&s, &ExtractionPattern::after_trigger("patients with"), None).is_empty());
        let s = sentence("diagnosed with the flu");
        let m = extract_after_trigger(&s, &ExtractionPattern::after_trigger("diagnosed with"), None);
        assert_eq!(lowers(&m), ["flu"]);
    }

    #[test]
    fn trigger_truncates_to_max_len() {
        let s = sentence("suffering from a b c d e f g");
        let p = ExtractionPattern::after_trigger("suffering from").with_max_len(3);
        let m = extract_after_trigger(&s, &p, None);
        assert_eq!(lowers(&m), ["b c d"]);
    }

    #[test]
    fn chunk_override() {
        let s = sentence("patients with cystic fibrosis were enrolled");
        let mut chunks = ChunkIndex::default();
        chunks.insert(&s.doc_id, s.index, 2, 3);
        let m = extract_after_trigger(&s, &ExtractionPattern::after_trigger("patients with"), Some(&chunks));
        assert_eq!(lowers(&m), ["cystic"]);
    }

    #[test]
    fn aggregate_merges_case() {
        let a = extract_between(&sentence("the influenza virus"), &ExtractionPattern::between("the", "virus"));
        let b = extract_between(&sentence("the Influenza virus"), &ExtractionPattern::between("the", "virus"));
        let agg = aggregate_candidates(a.iter().chain(b.iter()));
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].freq, 2);
        assert_eq!(agg[0].lower, "influenza");
        assert!(!agg[0].is_rare());
        assert!(aggregate_candidates(std::iter::empty()).is_empty());
    }

    #[test]
    fn parses_pattern_file() {
        let ps = parse_patterns(
            "[[pattern]]\nkind = \"between\"\nleft = \"the\"\nright = \"virus\"\n\n[[pattern]]\nkind = \"after_trigger\"\ntrigger = \"diseases such as\"\nmax_phrase_len = 4\n",
        )
        .unwrap();
        assert_eq!(ps[0], ExtractionPattern::between("the", "virus"));
        assert_eq!(ps[1].max_phrase_len, 4);
        assert!(parse_patterns("[[pattern]]\nkind = \"between\"\nleft = \"the\"\n").is_err());
        assert!(parse_patterns("[[pattern]]\nkind = \"between\"\nleft = \"the\"\nright = \"v\"\nmax_phrase_len = 0\n").is_err());
    }

    proptest! {
        #[test]
        fn aggregation_order_independent(
            words in proptest::collection::vec(prop_oneof!["Flu", "flu", "HIV", "hiv", "mumps"], 0..30),
            seed in any::<u64>(),
        ) {
            let ms: Vec<CandidateMatch> = words.iter().enumerate().map(|(i, w)| CandidateMatch {
                tokens: vec![w.to_string()], doc_id: "d".into(), sentence: i, start: 0, end: 1,
            }).collect();
            let mut shuffled = ms.clone();
            let n = shuffled.len();
            if n > 1 {
                for i in 0..n {
                    let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % n as u64) as usize;
                    shuffled.swap(i, j);
                }
            }
            prop_assert_eq!(aggregate_candidates(&ms), aggregate_candidates(&shuffled));
        }

        #[test]
        fn matches_are_faithful_spans(text in "(the|virus|flu|a|,|hiv|x) (the|virus|flu|a|,|hiv|x) (the|virus|flu|a|,|hiv|x) (the|virus|flu|a|,|hiv|x) (the|virus|flu|a|,|hiv|x)") {
            let s = sentence(&text);
            for m in extract_between(&s, &ExtractionPattern::between("the", "virus")) {
                let span: Vec<String> = s.tokens[m.start..m.end].iter().map(|t| t.text.clone()).collect();
                prop_assert_eq!(span, m.tokens);
            }
        }
    }
}
