//! Longest-match, leftmost-first phrase lookup over token sequences.

use std::collections::HashMap;

/// Maps lowercase token sequences to phrase ids.
#[derive(Debug, Clone, Default)]
pub struct PhraseMatcher {
    phrases: HashMap<Vec<String>, usize>,
    max_len: usize,
}

impl PhraseMatcher {
    /// Phrases are whitespace-separated token strings; duplicates keep the
    /// first id.
    pub fn new<I, S>(phrases: I) -> PhraseMatcher
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut m = PhraseMatcher::default();
        for (id, p) in phrases.into_iter().enumerate() {
            let toks: Vec<String> = p.as_ref().split_whitespace().map(str::to_string).collect();
            if toks.is_empty() {
                continue;
            }
            m.max_len = m.max_len.max(toks.len());
            m.phrases.entry(toks).or_insert(id);
        }
        m
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Non-overlapping `(start, end, id)` spans. Scanning left to right, the
    /// longest phrase starting at each position wins.
    pub fn find<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<(usize, usize, usize)> {
        let toks: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
        let mut out = Vec::new();
        let mut key: Vec<String> = Vec::with_capacity(self.max_len);
        let mut i = 0;
        while i < toks.len() {
            let mut hit = None;
            for len in (1..=self.max_len.min(toks.len() - i)).rev() {
                key.clear();
                key.extend(toks[i..i + len].iter().map(|t| t.to_string()));
                if let Some(&id) = self.phrases.get(&key) {
                    hit = Some((len, id));
                    break;
                }
            }
            match hit {
                Some((len, id)) => {
                    out.push((i, i + len, id));
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longest_match_wins() {
        let m = PhraseMatcher::new(["hepatitis", "hepatitis b"]);
        assert_eq!(m.find(&["chronic", "hepatitis", "b", "infection"]), [(1, 3, 1)]);
        assert_eq!(m.find(&["hepatitis", "c"]), [(0, 1, 0)]);
    }

    #[test]
    fn leftmost_first_non_overlapping() {
        let m = PhraseMatcher::new(["a b", "b c"]);
        assert_eq!(m.find(&["a", "b", "c"]), [(0, 2, 0)]);
        assert_eq!(m.find(&["x", "b", "c", "a", "b"]), [(1, 3, 1), (3, 5, 0)]);
    }

    #[test]
    fn empty_matcher() {
        let m = PhraseMatcher::new(Vec::<String>::new());
        assert!(m.is_empty());
        assert!(m.find(&["a"]).is_empty());
    }
}
