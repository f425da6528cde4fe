//! Text ingestion: tokenization, sentence segmentation, corpus streaming
//! and vocabulary statistics.

mod segment;
mod source;
mod tokenize;
mod vocab;

pub use segment::{segment_sentences, Segmenter, DEFAULT_ABBREVIATIONS};
pub use source::{read_documents, write_token_stream, Document, DocumentReader, SentenceStream};
pub use tokenize::{is_punctuation_token, tokenize, tokenize_at};
pub use vocab::{build_vocab, VocabCounter, VocabStats};

use serde::{Deserialize, Serialize};

/// Coarse capitalization class of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShapeCaps {
    AllLower,
    InitCap,
    AllCaps,
    Mixed,
    NonAlpha,
}

impl ShapeCaps {
    pub fn of(text: &str) -> ShapeCaps {
        let alpha: Vec<char> = text.chars().filter(|c| c.is_alphabetic()).collect();
        if alpha.is_empty() {
            return ShapeCaps::NonAlpha;
        }
        let first = text.chars().next().unwrap();
        let uppers = alpha.iter().filter(|c| c.is_uppercase()).count();
        if uppers == 0 {
            ShapeCaps::AllLower
        } else if uppers == alpha.len() && alpha.len() > 1 {
            ShapeCaps::AllCaps
        } else if first.is_uppercase() && uppers == 1 {
            ShapeCaps::InitCap
        } else {
            ShapeCaps::Mixed
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ShapeCaps::AllLower => "x",
            ShapeCaps::InitCap => "Xx",
            ShapeCaps::AllCaps => "X",
            ShapeCaps::Mixed => "xX",
            ShapeCaps::NonAlpha => "-",
        }
    }
}

/// A token with byte offsets into its source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub lower: String,
    pub char_start: usize,
    pub char_end: usize,
    pub shape_caps: ShapeCaps,
}

impl Token {
    pub fn new(text: &str, char_start: usize) -> Token {
        Token {
            text: text.to_string(),
            lower: text.to_lowercase(),
            char_start,
            char_end: char_start + text.len(),
            shape_caps: ShapeCaps::of(text),
        }
    }

    pub fn is_capitalized(&self) -> bool {
        self.text.chars().next().is_some_and(char::is_uppercase)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Builds a sentence from pre-split words, assigning offsets as if the
    /// words were joined by single spaces.
    pub fn from_words<S: AsRef<str>>(doc_id: &str, index: usize, words: &[S]) -> Sentence {
        let mut offset = 0;
        let tokens = words
            .iter()
            .map(|w| {
                let tok = Token::new(w.as_ref(), offset);
                offset = tok.char_end + 1;
                tok
            })
            .collect();
        Sentence {
            doc_id: doc_id.to_string(),
            index,
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lowers(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.lower.as_str()).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(ShapeCaps::of("virus"), ShapeCaps::AllLower);
        assert_eq!(ShapeCaps::of("Virus"), ShapeCaps::InitCap);
        assert_eq!(ShapeCaps::of("HIV"), ShapeCaps::AllCaps);
        assert_eq!(ShapeCaps::of("Epstein-Barr"), ShapeCaps::Mixed);
        assert_eq!(ShapeCaps::of("mRNA"), ShapeCaps::Mixed);
        assert_eq!(ShapeCaps::of("1996"), ShapeCaps::NonAlpha);
        assert_eq!(ShapeCaps::of("."), ShapeCaps::NonAlpha);
        assert_eq!(ShapeCaps::of("A"), ShapeCaps::InitCap);
    }

    #[test]
    fn from_words_offsets() {
        let s = Sentence::from_words("d", 0, &["the", "flu", "."]);
        assert_eq!(s.tokens[1].char_start, 4);
        assert_eq!(s.tokens[2].char_end, 9);
    }
}
