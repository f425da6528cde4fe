//! Entity dictionaries: lowercase phrase lists with provenance and metadata.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Cca,
    Cotrain,
    Manual,
    CandidateList,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Cca => "cca",
            Provenance::Cotrain => "cotrain",
            Provenance::Manual => "manual",
            Provenance::CandidateList => "candidate-list",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Provenance> {
        match s {
            "cca" => Ok(Provenance::Cca),
            "cotrain" => Ok(Provenance::Cotrain),
            "manual" => Ok(Provenance::Manual),
            "candidate-list" => Ok(Provenance::CandidateList),
            _ => Err(Error::InvalidArgument(format!("unknown provenance `{}`", s))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictEntry {
    /// Lowercase tokens joined by single spaces.
    pub phrase: String,
    pub score: Option<f64>,
}

/// Ordered phrase list with set semantics: the first occurrence of a
/// phrase wins and later duplicates are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    entries: Vec<DictEntry>,
    pub provenance: Provenance,
    pub metadata: BTreeMap<String, String>,
}

/// Lowercases and collapses whitespace; `None` for blank input.
pub fn normalize_phrase(s: &str) -> Option<String> {
    let p = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    (!p.is_empty()).then_some(p)
}

impl Dictionary {
    pub fn new(provenance: Provenance) -> Dictionary {
        Dictionary {
            entries: Vec::new(),
            provenance,
            metadata: BTreeMap::new(),
        }
    }

    pub fn from_phrases<I, S>(provenance: Provenance, phrases: I) -> Dictionary
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut d = Dictionary::new(provenance);
        for p in phrases {
            d.insert(p.as_ref(), None);
        }
        d
    }

    /// Returns false if the phrase was blank or already present.
    pub fn insert(&mut self, phrase: &str, score: Option<f64>) -> bool {
        let Some(phrase) = normalize_phrase(phrase) else {
            return false;
        };
        if self.entries.iter().any(|e| e.phrase == phrase) {
            return false;
        }
        self.entries.push(DictEntry { phrase, score });
        true
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Dictionary {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn entries(&self) -> &[DictEntry] {
        &self.entries
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.phrase.as_str())
    }

    pub fn phrase_set(&self) -> HashSet<&str> {
        self.phrases().collect()
    }

    pub fn contains(&self, phrase: &str) -> bool {
        normalize_phrase(phrase).is_some_and(|p| self.entries.iter().any(|e| e.phrase == p))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Header lines `# key: value` (provenance first), then
    /// `phrase TAB score` per entry (score column omitted when absent).
    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "# provenance: {}", self.provenance)?;
        for (k, v) in &self.metadata {
            writeln!(out, "# {}: {}", k, v)?;
        }
        for e in &self.entries {
            match e.score {
                Some(s) => writeln!(out, "{}\t{}", e.phrase, s)?,
                None => writeln!(out, "{}", e.phrase)?,
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("write to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Reads a dictionary file. Plain phrase lists without a header are
    /// accepted and get `default_provenance`.
    pub fn load(path: &Path, default_provenance: Provenance) -> Result<Dictionary> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, default_provenance)
    }

    pub fn parse(text: &str, path: &Path, default_provenance: Provenance) -> Result<Dictionary> {
        let mut d = Dictionary::new(default_provenance);
        for (no, line) in text.lines().enumerate() {
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once(':') {
                    let (k, v) = (k.trim(), v.trim());
                    if k == "provenance" {
                        d.provenance = v.parse().map_err(|e: Error| Error::parse(path, no + 1, e.to_string()))?;
                    } else {
                        d.metadata.insert(k.to_string(), v.to_string());
                    }
                }
                continue;
            }
            let mut cols = line.split('\t');
            let phrase = cols.next().unwrap_or_default();
            let score = match cols.next().map(str::trim).filter(|s| !s.is_empty()) {
                Some(s) => Some(
                    s.parse::<f64>()
                        .map_err(|_| Error::parse(path, no + 1, format!("bad score `{}`", s)))?,
                ),
                None => None,
            };
            d.insert(phrase, score);
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_semantics_and_normalization() {
        let mut d = Dictionary::new(Provenance::Manual);
        assert!(d.insert("Hepatitis  B", Some(1.0)));
        assert!(!d.insert("hepatitis b", Some(2.0)));
        assert!(!d.insert("   ", None));
        assert_eq!(d.len(), 1);
        assert!(d.contains("HEPATITIS B"));
        assert_eq!(d.entries()[0].score, Some(1.0));
    }

    #[test]
    fn round_trip_with_metadata() {
        let mut d = Dictionary::new(Provenance::Cca).with_meta("k", 20).with_meta("C", 0.1);
        d.insert("human immunodeficiency", Some(1.25));
        d.insert("hiv", Some(-0.0));
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# provenance: cca\n"));
        let back = Dictionary::parse(&text, Path::new("d.tsv"), Provenance::Manual).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn plain_lists_load_as_default_provenance() {
        let d = Dictionary::parse("flu\n\nMeasles\n", Path::new("m.txt"), Provenance::Manual).unwrap();
        assert_eq!(d.provenance, Provenance::Manual);
        assert_eq!(d.phrases().collect::<Vec<_>>(), vec!["flu", "measles"]);
        assert!(Dictionary::parse("x\tnope\n", Path::new("m.txt"), Provenance::Manual).is_err());
    }
}
