//! Observation features for the chain tagger.
//!
//! Every observation feature is conjoined with the candidate label by the
//! weight layout (one weight per feature and label), so extraction only
//! produces per-token `(name, value)` lists.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cca::PhraseEmbedding;
use crate::corpus::ShapeCaps;
use crate::dictionary::Dictionary;
use crate::matcher::PhraseMatcher;
use crate::tagger::{DictionaryTagger, Tag};

pub const AFFIX_LENGTHS: std::ops::RangeInclusive<usize> = 1..=4;
pub const WINDOW: isize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    pub word_identity: bool,
    pub caps_lexical: bool,
    pub prefix_suffix: bool,
    pub window_words: bool,
    pub window_caps: bool,
    /// Second-order label features `(y_{i-2}, y_{i-1}, y_i)`.
    pub prev2: bool,
}

impl Templates {
    pub fn baseline() -> Templates {
        Templates {
            word_identity: true,
            caps_lexical: true,
            prefix_suffix: true,
            window_words: true,
            window_caps: true,
            prev2: false,
        }
    }

    pub fn none() -> Templates {
        Templates {
            word_identity: false,
            caps_lexical: false,
            prefix_suffix: false,
            window_words: false,
            window_caps: false,
            prev2: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    /// Per-token word vectors; unknown words get the zero vector.
    Word,
    /// Candidate phrases carry their vector on the first token, `2x` on
    /// continuation tokens; every other token carries `4x`, where `x` is
    /// the largest absolute value in the table.
    Phrase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFeatures {
    pub mode: EmbeddingMode,
    pub table: Vec<PhraseEmbedding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDictionary {
    pub name: String,
    pub dictionary: Dictionary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub templates: Templates,
    pub dictionaries: Vec<NamedDictionary>,
    pub embeddings: Option<EmbeddingFeatures>,
}

impl FeatureConfig {
    pub fn baseline() -> FeatureConfig {
        FeatureConfig {
            templates: Templates::baseline(),
            dictionaries: Vec::new(),
            embeddings: None,
        }
    }

    pub fn with_dictionary(mut self, name: &str, dictionary: Dictionary) -> FeatureConfig {
        self.dictionaries.push(NamedDictionary {
            name: name.to_string(),
            dictionary,
        });
        self
    }

    pub fn with_embeddings(mut self, mode: EmbeddingMode, table: Vec<PhraseEmbedding>) -> FeatureConfig {
        self.embeddings = Some(EmbeddingFeatures { mode, table });
        self
    }
}

/// Per-token observation lists.
pub type Observations = Vec<Vec<(String, f64)>>;

/// Config with its lookup structures built.
pub struct Extractor<'a> {
    config: &'a FeatureConfig,
    taggers: Vec<DictionaryTagger>,
    embedding: Option<EmbeddingLookup<'a>>,
}

struct EmbeddingLookup<'a> {
    mode: EmbeddingMode,
    k: usize,
    table: HashMap<&'a str, &'a [f64]>,
    matcher: PhraseMatcher,
    phrases: Vec<&'a str>,
    x: f64,
}

/// Largest absolute embedding value.
pub fn sentinel_scale(table: &[PhraseEmbedding]) -> f64 {
    table.iter().flat_map(|e| e.vector.iter()).fold(0.0, |m: f64, v| m.max(v.abs()))
}

impl<'a> Extractor<'a> {
    pub fn new(config: &'a FeatureConfig) -> Extractor<'a> {
        let taggers = config.dictionaries.iter().map(|d| DictionaryTagger::new(&d.dictionary)).collect();
        let embedding = config.embeddings.as_ref().map(|e| {
            let phrases: Vec<&str> = e.table.iter().map(|p| p.phrase.as_str()).collect();
            EmbeddingLookup {
                mode: e.mode,
                k: e.table.first().map_or(0, |p| p.vector.len()),
                table: e.table.iter().map(|p| (p.phrase.as_str(), p.vector.as_slice())).collect(),
                matcher: PhraseMatcher::new(&phrases),
                phrases,
                x: sentinel_scale(&e.table),
            }
        });
        Extractor {
            config,
            taggers,
            embedding,
        }
    }

    pub fn observations<S: AsRef<str>>(&self, tokens: &[S]) -> Observations {
        let t = &self.config.templates;
        let n = tokens.len();
        let lower: Vec<String> = tokens.iter().map(|s| s.as_ref().to_lowercase()).collect();
        let shapes: Vec<&str> = tokens.iter().map(|s| ShapeCaps::of(s.as_ref()).code()).collect();
        let dict_tags: Vec<Vec<Tag>> = self.taggers.iter().map(|tg| tg.tag(tokens)).collect();
        let emb = self.embedding.as_ref().map(|e| e.vectors(&lower));
        (0..n)
            .map(|i| {
                let mut f: Vec<(String, f64)> = Vec::new();
                let w = &lower[i];
                if t.word_identity {
                    f.push((format!("w={}", w), 1.0));
                }
                if t.caps_lexical {
                    let raw = tokens[i].as_ref();
                    f.push((format!("caps={}", shapes[i]), 1.0));
                    if raw.chars().any(|c| c.is_ascii_digit()) {
                        f.push(("digit".into(), 1.0));
                    }
                    if raw.contains('-') {
                        f.push(("hyphen".into(), 1.0));
                    }
                }
                if t.prefix_suffix {
                    let chars: Vec<char> = w.chars().collect();
                    for len in AFFIX_LENGTHS.filter(|&l| l <= chars.len()) {
                        f.push((format!("pre{}={}", len, chars[..len].iter().collect::<String>()), 1.0));
                        f.push((format!("suf{}={}", len, chars[chars.len() - len..].iter().collect::<String>()), 1.0));
                    }
                }
                let at = |d: isize| -> Option<usize> {
                    let j = i as isize + d;
                    (j >= 0 && (j as usize) < n).then_some(j as usize)
                };
                if t.window_words {
                    for d in (-WINDOW..=WINDOW).filter(|&d| d != 0) {
                        let word = at(d).map_or("<b>", |j| lower[j].as_str());
                        f.push((format!("w{:+}={}", d, word), 1.0));
                    }
                }
                if t.window_caps {
                    let pat: Vec<&str> = (-WINDOW..=WINDOW).map(|d| at(d).map_or("_", |j| shapes[j])).collect();
                    f.push((format!("capsw={}", pat.join("|")), 1.0));
                }
                for (d, tags) in self.config.dictionaries.iter().zip(&dict_tags) {
                    f.push((format!("dict[{}]={}", d.name, tags[i]), 1.0));
                }
                if let Some(vecs) = &emb {
                    for (j, v) in vecs[i].iter().enumerate() {
                        f.push((format!("emb{}", j), *v));
                    }
                }
                f
            })
            .collect()
    }
}

impl EmbeddingLookup<'_> {
    fn vectors(&self, lower: &[String]) -> Vec<Vec<f64>> {
        match self.mode {
            EmbeddingMode::Word => lower
                .iter()
                .map(|w| self.table.get(w.as_str()).map_or_else(|| vec![0.0; self.k], |v| v.to_vec()))
                .collect(),
            EmbeddingMode::Phrase => {
                let mut out = vec![vec![4.0 * self.x; self.k]; lower.len()];
                for (s, e, id) in self.matcher.find(lower) {
                    out[s] = self.table[self.phrases[id]].to_vec();
                    for v in &mut out[s + 1..e] {
                        *v = vec![2.0 * self.x; self.k];
                    }
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Provenance;

    fn toks(s: &str) -> Vec<&str> {
        s.split(' ').collect()
    }

    #[test]
    fn disabled_families_produce_nothing() {
        let cfg = FeatureConfig {
            templates: Templates::none(),
            dictionaries: vec![],
            embeddings: None,
        };
        let obs = Extractor::new(&cfg).observations(&toks("the flu virus"));
        assert!(obs.iter().all(|o| o.is_empty()));
    }

    #[test]
    fn dictionary_feature_marks_entity_start() {
        let cfg = FeatureConfig {
            templates: Templates::none(),
            dictionaries: vec![],
            embeddings: None,
        }
        .with_dictionary("manual", Dictionary::from_phrases(Provenance::Manual, ["hiv"]));
        let obs = Extractor::new(&cfg).observations(&toks("the HIV virus"));
        assert_eq!(obs[1], vec![("dict[manual]=B".to_string(), 1.0)]);
        assert_eq!(obs[0], vec![("dict[manual]=O".to_string(), 1.0)]);
    }

    #[test]
    fn baseline_families() {
        let obs = Extractor::new(&FeatureConfig::baseline()).observations(&toks("Anti-HIV drugs"));
        let names: Vec<&str> = obs[0].iter().map(|(n, _)| n.as_str()).collect();
        for want in ["w=anti-hiv", "caps=xX", "hyphen", "pre1=a", "suf4=-hiv", "w-1=<b>", "w+1=drugs", "w+2=<b>", "capsw=_|_|xX|x|_"] {
            assert!(names.contains(&want), "missing {} in {:?}", want, names);
        }
        assert!(obs[1].iter().any(|(n, _)| n == "pre4=drug"));
        assert!(!obs[1].iter().any(|(n, _)| n.starts_with("pre5")));
    }

    #[test]
    fn word_embeddings_zero_for_unknown() {
        let table = vec![PhraseEmbedding { phrase: "flu".into(), vector: vec![0.5, -1.0] }];
        let cfg = FeatureConfig {
            templates: Templates::none(),
            dictionaries: vec![],
            embeddings: None,
        }
        .with_embeddings(EmbeddingMode::Word, table);
        let obs = Extractor::new(&cfg).observations(&toks("Flu now"));
        assert_eq!(obs[0], vec![("emb0".into(), 0.5), ("emb1".into(), -1.0)]);
        assert_eq!(obs[1], vec![("emb0".into(), 0.0), ("emb1".into(), 0.0)]);
    }
}
