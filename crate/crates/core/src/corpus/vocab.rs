use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::Sentence;

/// Full lowercase word counts; merges associatively so partial counts
/// from parallel workers combine deterministically.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VocabCounter {
    counts: HashMap<String, u64>,
    total: u64,
}

impl VocabCounter {
    pub fn add_sentence(&mut self, sentence: &Sentence) {
        for t in &sentence.tokens {
            *self.counts.entry(t.lower.clone()).or_default() += 1;
            self.total += 1;
        }
    }

    pub fn merge(mut self, other: VocabCounter) -> VocabCounter {
        for (w, c) in other.counts {
            *self.counts.entry(w).or_default() += c;
        }
        self.total += other.total;
        self
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    /// Keeps the `top_k` most frequent types; ties at the cutoff go to the
    /// lexicographically smaller word.
    pub fn top(&self, top_k: usize) -> VocabStats {
        let mut ranked: Vec<(&String, &u64)> = self.counts.iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(top_k);
        let counts: BTreeMap<String, u64> =
            ranked.into_iter().map(|(w, c)| (w.clone(), *c)).collect();
        let total_tokens = counts.values().sum();
        VocabStats {
            counts,
            total_tokens,
        }
    }
}

/// Counts for the retained word types. `total_tokens` is the sum of the
/// retained counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabStats {
    pub counts: BTreeMap<String, u64>,
    pub total_tokens: u64,
}

impl VocabStats {
    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

pub fn build_vocab<'a>(sentences: impl IntoIterator<Item = &'a Sentence>, top_k: usize) -> VocabStats {
    assert!(top_k >= 1, "top_k must be at least 1");
    let mut counter = VocabCounter::default();
    for s in sentences {
        counter.add_sentence(s);
    }
    counter.top(top_k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(words: &[&str]) -> Sentence {
        Sentence::from_words("d", 0, words)
    }

    #[test]
    fn top_one() {
        let s = sent(&["a", "a", "b"]);
        let v = build_vocab([&s], 1);
        assert_eq!(v.counts, BTreeMap::from([("a".to_string(), 2)]));
        assert_eq!(v.total_tokens, 2);
    }

    #[test]
    fn fewer_types_than_k() {
        let s = sent(&["a", "a", "b"]);
        let v = build_vocab([&s], 10);
        assert_eq!(
            v.counts,
            BTreeMap::from([("a".to_string(), 2), ("b".to_string(), 1)])
        );
    }

    #[test]
    fn ties_broken_lexicographically() {
        let s = sent(&["z", "y", "x", "x"]);
        let v = build_vocab([&s], 2);
        assert_eq!(v.counts.keys().collect::<Vec<_>>(), ["x", "y"]);
    }

    #[test]
    fn merge_is_order_independent() {
        let s1 = sent(&["The", "flu", "the"]);
        let s2 = sent(&["flu", "virus"]);
        let mut a = VocabCounter::default();
        a.add_sentence(&s1);
        let mut b = VocabCounter::default();
        b.add_sentence(&s2);
        let ab = a.clone().merge(b.clone());
        let ba = b.merge(a);
        assert_eq!(ab.top(10), ba.top(10));
        assert_eq!(ab.total_tokens(), 5);
        assert_eq!(ab.top(10).counts["the"], 2);
    }
}
