//! BIO tags, exact-match dictionary tagging, and span-level scoring.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::matcher::PhraseMatcher;

/// Declaration order is the tie-break order used by decoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    B,
    I,
    O,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::B, Tag::I, Tag::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Tag {
        Tag::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::B => "B",
            Tag::I => "I",
            Tag::O => "O",
        }
    }

    /// Accepts `B`, `I`, `O` and typed forms such as `B-virus`.
    pub fn parse(s: &str) -> Option<Tag> {
        match s.split('-').next()? {
            "B" => Some(Tag::B),
            "I" => Some(Tag::I),
            "O" => Some(Tag::O),
            _ => None,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Token span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Fails unless every `I` continues a `B` or `I`.
pub fn validate_tags(tags: &[Tag], sentence: usize) -> Result<()> {
    let mut prev = Tag::O;
    for (i, &t) in tags.iter().enumerate() {
        if t == Tag::I && prev == Tag::O {
            return Err(Error::MalformedTags {
                sentence,
                message: format!("I at token {} does not continue an entity", i),
            });
        }
        prev = t;
    }
    Ok(())
}

/// Entity spans. An `I` that follows `O` (or starts the sentence) opens a
/// new entity, so malformed predictions are still scoreable.
pub fn spans(tags: &[Tag]) -> Vec<Span> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            Tag::B => {
                if let Some(s) = open {
                    out.push(Span { start: s, end: i });
                }
                open = Some(i);
            }
            Tag::I => {
                if open.is_none() {
                    open = Some(i);
                }
            }
            Tag::O => {
                if let Some(s) = open.take() {
                    out.push(Span { start: s, end: i });
                }
            }
        }
    }
    if let Some(s) = open {
        out.push(Span { start: s, end: tags.len() });
    }
    out
}

pub fn tags_from_spans(len: usize, spans: &[Span]) -> Vec<Tag> {
    let mut tags = vec![Tag::O; len];
    for s in spans {
        for (i, t) in tags.iter_mut().enumerate().take(s.end).skip(s.start) {
            *t = if i == s.start { Tag::B } else { Tag::I };
        }
    }
    tags
}

#[derive(Debug, Clone)]
pub struct DictionaryTagger {
    matcher: PhraseMatcher,
    case_sensitive: bool,
}

impl DictionaryTagger {
    pub fn new(dict: &Dictionary) -> DictionaryTagger {
        DictionaryTagger {
            matcher: PhraseMatcher::new(dict.phrases()),
            case_sensitive: false,
        }
    }

    /// Compares raw token text with the stored (lowercase) phrases instead
    /// of lowercasing tokens first.
    pub fn case_sensitive(mut self, yes: bool) -> DictionaryTagger {
        self.case_sensitive = yes;
        self
    }

    pub fn tag<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Tag> {
        let found = if self.case_sensitive {
            self.matcher.find(tokens)
        } else {
            let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
            self.matcher.find(&lower)
        };
        let spans: Vec<Span> = found.into_iter().map(|(start, end, _)| Span { start, end }).collect();
        tags_from_spans(tokens.len(), &spans)
    }

    pub fn tag_all(&self, sentences: &[TaggedSentence]) -> Vec<Vec<Tag>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            sentences.par_iter().map(|s| self.tag(&s.tokens)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            sentences.iter().map(|s| self.tag(&s.tokens)).collect()
        }
    }
}

/// Longest-match, leftmost-first, non-overlapping, case-insensitive.
pub fn tag_with_dictionary<S: AsRef<str>>(tokens: &[S], dict: &Dictionary) -> Vec<Tag> {
    DictionaryTagger::new(dict).tag(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
}

impl TaggedSentence {
    pub fn spans(&self) -> Vec<Span> {
        spans(&self.tags)
    }
}

/// Gold sentences with well-formed BIO tags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldCorpus {
    pub sentences: Vec<TaggedSentence>,
}

impl GoldCorpus {
    pub fn new(sentences: Vec<TaggedSentence>) -> Result<GoldCorpus> {
        for (i, s) in sentences.iter().enumerate() {
            if s.tokens.len() != s.tags.len() {
                return Err(Error::Alignment(format!(
                    "sentence {}: {} tokens but {} tags",
                    i,
                    s.tokens.len(),
                    s.tags.len()
                )));
            }
            validate_tags(&s.tags, i)?;
        }
        Ok(GoldCorpus { sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn truncated(&self, n: usize) -> GoldCorpus {
        GoldCorpus {
            sentences: self.sentences[..n.min(self.len())].to_vec(),
        }
    }

    /// Lowercased text of every gold entity.
    pub fn entity_phrases(&self) -> BTreeSet<String> {
        self.sentences
            .iter()
            .flat_map(|s| {
                s.spans()
                    .into_iter()
                    .map(|sp| s.tokens[sp.start..sp.end].join(" ").to_lowercase())
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Tokens are the first column and tags the last; blank lines separate
/// sentences and `-DOCSTART-` lines are skipped.
pub fn parse_conll(text: &str, path: &Path) -> Result<GoldCorpus> {
    let mut sentences = Vec::new();
    let mut cur = TaggedSentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    let mut flush = |cur: &mut TaggedSentence| {
        if !cur.tokens.is_empty() {
            sentences.push(std::mem::replace(
                cur,
                TaggedSentence {
                    tokens: Vec::new(),
                    tags: Vec::new(),
                },
            ));
        }
    };
    for (no, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            flush(&mut cur);
            continue;
        }
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = if line.contains('\t') {
            line.split('\t').collect()
        } else {
            line.split_whitespace().collect()
        };
        if cols.len() < 2 {
            return Err(Error::parse(path, no + 1, "expected `token TAB tag`"));
        }
        let tag = Tag::parse(cols[cols.len() - 1])
            .ok_or_else(|| Error::parse(path, no + 1, format!("unknown tag `{}`", cols[cols.len() - 1])))?;
        cur.tokens.push(cols[0].to_string());
        cur.tags.push(tag);
    }
    flush(&mut cur);
    GoldCorpus::new(sentences).map_err(|e| match e {
        Error::MalformedTags { sentence, message } => {
            Error::parse(path, 0, format!("sentence {}: {}", sentence + 1, message))
        }
        other => other,
    })
}

pub fn read_conll(path: &Path) -> Result<GoldCorpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, path)
}

pub fn write_conll<W: Write>(out: &mut W, sentences: &[TaggedSentence]) -> std::io::Result<()> {
    for s in sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            writeln!(out, "{}\t{}", tok, tag)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> EvalReport {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn add(self, other: EvalReport) -> EvalReport {
        EvalReport::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

/// Exact-extent span matching with set semantics per sentence.
pub fn evaluate(predicted: &[Vec<Tag>], gold: &GoldCorpus) -> Result<EvalReport> {
    if predicted.len() != gold.len() {
        return Err(Error::Alignment(format!(
            "{} predicted sentences vs {} gold",
            predicted.len(),
            gold.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (i, (p, g)) in predicted.iter().zip(&gold.sentences).enumerate() {
        if p.len() != g.tags.len() {
            return Err(Error::Alignment(format!(
                "sentence {}: {} predicted tags vs {} gold",
                i,
                p.len(),
                g.tags.len()
            )));
        }
        let ps: HashSet<Span> = spans(p).into_iter().collect();
        let gs: HashSet<Span> = g.spans().into_iter().collect();
        let hit = ps.intersection(&gs).count();
        tp += hit;
        fp += ps.len() - hit;
        fn_ += gs.len() - hit;
    }
    Ok(EvalReport::from_counts(tp, fp, fn_))
}

/// Precision/recall of a predicted phrase set against a reference set.
pub fn compare_phrase_sets<'a>(
    predicted: impl IntoIterator<Item = &'a str>,
    truth: impl IntoIterator<Item = &'a str>,
) -> EvalReport {
    let p: HashSet<&str> = predicted.into_iter().collect();
    let t: HashSet<&str> = truth.into_iter().collect();
    let tp = p.intersection(&t).count();
    EvalReport::from_counts(tp, p.len() - tp, t.len() - tp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Provenance;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<&str> {
        s.split(' ').collect()
    }

    #[test]
    fn dictionary_tagging() {
        let d = Dictionary::from_phrases(Provenance::Manual, ["human immunodeficiency"]);
        assert_eq!(tag_with_dictionary(&words("the human immunodeficiency virus"), &d), vec![Tag::O, Tag::B, Tag::I, Tag::O]);
        let d = Dictionary::from_phrases(Provenance::Manual, ["hepatitis", "hepatitis b"]);
        assert_eq!(tag_with_dictionary(&words("chronic Hepatitis B"), &d), vec![Tag::O, Tag::B, Tag::I]);
        let empty = Dictionary::new(Provenance::Manual);
        assert_eq!(tag_with_dictionary(&words("a b"), &empty), vec![Tag::O, Tag::O]);
        let d = Dictionary::from_phrases(Provenance::Manual, ["hiv"]);
        assert_eq!(DictionaryTagger::new(&d).case_sensitive(true).tag(&words("HIV hiv")), vec![Tag::O, Tag::B]);
    }

    #[test]
    fn adjacent_matches_start_new_entities() {
        let d = Dictionary::from_phrases(Provenance::Manual, ["flu"]);
        let tags = tag_with_dictionary(&words("flu flu"), &d);
        assert_eq!(tags, vec![Tag::B, Tag::B]);
        assert_eq!(spans(&tags).len(), 2);
    }

    #[test]
    fn scoring_examples() {
        let gold = GoldCorpus::new(vec![TaggedSentence {
            tokens: (0..8).map(|i| i.to_string()).collect(),
            tags: tags_from_spans(8, &[Span { start: 1, end: 3 }, Span { start: 6, end: 8 }]),
        }])
        .unwrap();
        let same = evaluate(&[gold.sentences[0].tags.clone()], &gold).unwrap();
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));
        let pred = tags_from_spans(8, &[Span { start: 1, end: 3 }, Span { start: 4, end: 5 }]);
        let r = evaluate(&[pred], &gold).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        assert!(evaluate(&[vec![Tag::O; 7]], &gold).is_err());
        assert!(evaluate(&[], &gold).is_err());
    }

    #[test]
    fn zero_denominators() {
        let r = EvalReport::from_counts(0, 0, 0);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn conll_round_trip_and_validation() {
        let text = "-DOCSTART-\tO\n\nthe\tO\nflu\tB-virus\nvirus\tO\n\nHIV\tB\ninfection\tO\n";
        let g = parse_conll(text, Path::new("g.conll")).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.sentences[0].tags, vec![Tag::O, Tag::B, Tag::O]);
        let mut buf = Vec::new();
        write_conll(&mut buf, &g.sentences).unwrap();
        assert_eq!(parse_conll(std::str::from_utf8(&buf).unwrap(), Path::new("x")).unwrap(), g);
        assert!(parse_conll("the\tO\nflu\tI\n", Path::new("bad")).is_err());
        assert!(parse_conll("flu\tX\n", Path::new("bad")).is_err());
        assert_eq!(g.entity_phrases().into_iter().collect::<Vec<_>>(), vec!["flu", "hiv"]);
    }

    #[test]
    fn lenient_span_reading() {
        assert_eq!(spans(&[Tag::I, Tag::I, Tag::O, Tag::B, Tag::I]), vec![Span { start: 0, end: 2 }, Span { start: 3, end: 5 }]);
    }

    proptest! {
        #[test]
        fn dictionary_output_is_well_formed(toks in proptest::collection::vec("[ab]{1,2}", 0..12)) {
            let d = Dictionary::from_phrases(Provenance::Manual, ["a", "a b", "b b a", "ab"]);
            let t = tag_with_dictionary(&toks, &d);
            prop_assert!(validate_tags(&t, 0).is_ok());
            prop_assert_eq!(&t, &tag_with_dictionary(&toks, &d));
            prop_assert_eq!(tags_from_spans(t.len(), &spans(&t)), t);
        }

        #[test]
        fn f1_is_harmonic_mean(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
            let r = EvalReport::from_counts(tp, fp, fn_);
            if r.precision + r.recall > 0.0 {
                let h = 2.0 * r.precision * r.recall / (r.precision + r.recall);
                prop_assert!((r.f1 - h).abs() < 1e-12);
            }
            prop_assert!(r.f1 <= r.precision.max(r.recall) + 1e-12);
        }
    }
}
