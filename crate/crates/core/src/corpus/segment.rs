use std::collections::BTreeSet;

use super::{tokenize_at, Sentence, Token};

/// Abbreviations (lowercase, without the trailing period) that never end a
/// sentence.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "al", "approx", "ca", "cf", "dr", "e.g", "eq", "eqs", "etc", "fig", "figs", "i.e", "inc",
    "jr", "ltd", "mr", "mrs", "ms", "no", "nos", "prof", "ref", "refs", "sp", "spp", "sr", "st",
    "tab", "vs", "viz", "vol",
];

const TERMINALS: &[&str] = &[".", "?", "!"];
const CLOSERS: &[&str] = &[")", "]", "}", "\"", "'", "\u{201d}", "\u{2019}"];

/// Rule-based sentence splitter.
///
/// A boundary falls after `.`, `?` or `!` (plus any directly attached
/// closing brackets or quotes) when whitespace follows and the next token
/// starts with an uppercase letter or a digit. A period directly attached
/// to a stoplisted abbreviation never splits.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: BTreeSet<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::with_abbreviations(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl Segmenter {
    pub fn with_abbreviations<I, S>(abbreviations: I) -> Segmenter
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Segmenter {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.as_ref().trim_end_matches('.').to_lowercase())
                .collect(),
        }
    }

    pub fn segment(&self, doc_id: &str, document: &str) -> Vec<Sentence> {
        let tokens = tokenize_at(document, 0);
        let mut sentences = Vec::new();
        let mut current: Vec<Token> = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            current.push(tokens[i].clone());
            if TERMINALS.contains(&tokens[i].text.as_str()) && !self.is_abbreviation(&tokens, i) {
                let mut end = i;
                while end + 1 < tokens.len()
                    && tokens[end + 1].char_start == tokens[end].char_end
                    && CLOSERS.contains(&tokens[end + 1].text.as_str())
                {
                    end += 1;
                    current.push(tokens[end].clone());
                }
                i = end;
                if let Some(next) = tokens.get(end + 1) {
                    let gap = next.char_start > tokens[end].char_end;
                    let opener = next.text.chars().next().unwrap();
                    if gap && (opener.is_uppercase() || opener.is_ascii_digit()) {
                        sentences.push(Sentence {
                            doc_id: doc_id.to_string(),
                            index: sentences.len(),
                            tokens: std::mem::take(&mut current),
                        });
                    }
                }
            }
            i += 1;
        }
        if !current.is_empty() {
            sentences.push(Sentence {
                doc_id: doc_id.to_string(),
                index: sentences.len(),
                tokens: current,
            });
        }
        sentences
    }

    fn is_abbreviation(&self, tokens: &[Token], period: usize) -> bool {
        if tokens[period].text != "." || period == 0 {
            return false;
        }
        let prev = &tokens[period - 1];
        prev.char_end == tokens[period].char_start && self.abbreviations.contains(&prev.lower)
    }
}

/// Segments with the default abbreviation stoplist.
pub fn segment_sentences(document: &str) -> Vec<Sentence> {
    Segmenter::default().segment("doc", document)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word_counts(doc: &str) -> Vec<usize> {
        segment_sentences(doc)
            .iter()
            .map(|s| s.tokens.iter().filter(|t| t.text != ".").count())
            .collect()
    }

    #[test]
    fn two_sentences() {
        let s = segment_sentences("Viruses mutate. HIV is one.");
        assert_eq!(s.len(), 2);
        assert_eq!(word_counts("Viruses mutate. HIV is one."), [2, 3]);
        assert_eq!(s[1].index, 1);
    }

    #[test]
    fn abbreviation_suppresses_split() {
        assert_eq!(segment_sentences("Dr. Smith studied measles.").len(), 1);
        let no_stoplist = Segmenter::with_abbreviations(Vec::<String>::new());
        assert_eq!(no_stoplist.segment("d", "Dr. Smith studied measles.").len(), 2);
    }

    #[test]
    fn lowercase_or_no_space_does_not_split() {
        assert_eq!(segment_sentences("It rose to 3.5 mg. then fell.").len(), 1);
        assert_eq!(segment_sentences("See e.g. Smith.").len(), 1);
    }

    #[test]
    fn closers_stay_with_sentence() {
        let s = segment_sentences("It was mild (n=3.) Then it spread.");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].tokens.last().unwrap().text, ")");
        let q = segment_sentences("Is it viral? 12 cases were.");
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn empty_document() {
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("   \n ").is_empty());
    }

    #[test]
    fn covers_every_token_once() {
        let doc = "First one. Second (two) here! Third? yes. Fourth";
        let all: Vec<String> = tokenize_at(doc, 0).into_iter().map(|t| t.text).collect();
        let joined: Vec<String> = segment_sentences(doc)
            .into_iter()
            .flat_map(|s| s.tokens.into_iter().map(|t| t.text))
            .collect();
        assert_eq!(all, joined);
    }
}
