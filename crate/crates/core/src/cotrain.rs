//! DL-CoTrain: bootstrapped spelling and context decision lists.
//!
//! Spelling rules test the full lowercase phrase; context rules test a
//! pair of context slots (15 pairs over the six ±3 positions). Each
//! iteration labels occurrences with the spelling list, adds up to `i·m`
//! context rules per label whose strength exceeds ε, relabels with the
//! context list, and adds up to `i·m` spelling rules per label the same
//! way. The run ends when an iteration adds nothing.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classifier::SeedSet;
use crate::dictionary::{Dictionary, Provenance};
use crate::error::{Error, Result};
use crate::views::CandidateOccurrence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Spelling,
    Context,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

const LABELS: [Label; 2] = [Label::Positive, Label::Negative];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub view: View,
    /// `full-string=<phrase>` or `<pos>:<word>|<pos>:<word>`.
    pub condition: String,
    pub label: Label,
    pub count_match: usize,
    pub count_total: usize,
    pub strength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StrengthEstimator {
    Unsmoothed,
    /// `(match + α) / (total + 2α)`.
    AddAlpha(f64),
}

impl StrengthEstimator {
    /// `None` when the rule was never seen on labeled data.
    pub fn strength(self, count_match: usize, count_total: usize) -> Option<f64> {
        if count_total == 0 {
            return None;
        }
        let (m, t) = (count_match as f64, count_total as f64);
        Some(match self {
            StrengthEstimator::Unsmoothed => m / t,
            StrengthEstimator::AddAlpha(a) => (m + a) / (t + 2.0 * a),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CotrainParams {
    pub m: usize,
    pub epsilon: f64,
    pub estimator: StrengthEstimator,
    /// Safety cap; the run normally stops when an iteration adds no rule.
    pub max_iterations: usize,
}

impl Default for CotrainParams {
    fn default() -> Self {
        CotrainParams {
            m: 5,
            epsilon: 0.95,
            estimator: StrengthEstimator::Unsmoothed,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub labeled_by_spelling: usize,
    pub labeled_by_context: usize,
    pub added: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionListState {
    pub spelling_rules: Vec<Rule>,
    pub context_rules: Vec<Rule>,
    /// Final label per occurrence (from the context list), by input index.
    pub labeled: Vec<Option<Label>>,
    pub iteration: usize,
    pub trace: Vec<IterationTrace>,
}

/// The 15 slot-pair features of one occurrence.
pub fn context_bigrams(occ: &CandidateOccurrence) -> Vec<String> {
    let slots: Vec<(i32, &str)> = occ.context().collect();
    let mut out = Vec::with_capacity(15);
    for a in 0..slots.len() {
        for b in a + 1..slots.len() {
            out.push(format!("{}:{}|{}:{}", slots[a].0, slots[a].1, slots[b].0, slots[b].1));
        }
    }
    out
}

pub fn spelling_condition(phrase: &str) -> String {
    format!("full-string={}", phrase)
}

struct Interned {
    spelling: Vec<u32>,
    context: Vec<Vec<u32>>,
    names: Vec<String>,
}

fn intern(occurrences: &[CandidateOccurrence]) -> Interned {
    let mut ids: HashMap<String, u32> = HashMap::new();
    let mut names = Vec::new();
    let mut id = |s: String| -> u32 {
        let next = names.len() as u32;
        *ids.entry(s).or_insert_with_key(|k| {
            names.push(k.clone());
            next
        })
    };
    let mut spelling = Vec::with_capacity(occurrences.len());
    let mut context = Vec::with_capacity(occurrences.len());
    for o in occurrences {
        spelling.push(id(spelling_condition(&o.phrase)));
        let mut c: Vec<u32> = context_bigrams(o).into_iter().map(&mut id).collect();
        c.sort_unstable();
        c.dedup();
        context.push(c);
    }
    Interned { spelling, context, names }
}

/// `(positive count, negative count)` per feature over labeled occurrences.
fn feature_counts<'a, F>(features: F, labels: &[Option<Label>]) -> HashMap<u32, [usize; 2]>
where
    F: Fn(usize) -> &'a [u32] + Sync,
{
    let count = |range: std::ops::Range<usize>| {
        let mut m: HashMap<u32, [usize; 2]> = HashMap::new();
        for i in range {
            if let Some(l) = labels[i] {
                for &f in features(i) {
                    m.entry(f).or_default()[(l == Label::Negative) as usize] += 1;
                }
            }
        }
        m
    };
    const CHUNK: usize = 8192;
    let ranges: Vec<_> = (0..labels.len()).step_by(CHUNK).map(|s| s..(s + CHUNK).min(labels.len())).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<HashMap<u32, [usize; 2]>> = {
        use rayon::prelude::*;
        ranges.into_par_iter().map(count).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<HashMap<u32, [usize; 2]>> = ranges.into_iter().map(count).collect();
    let mut total: HashMap<u32, [usize; 2]> = HashMap::new();
    for p in parts {
        for (k, v) in p {
            let e = total.entry(k).or_default();
            e[0] += v[0];
            e[1] += v[1];
        }
    }
    total
}

struct ListState {
    view: View,
    rules: Vec<Rule>,
    /// Feature id → rule index.
    by_feature: HashMap<u32, usize>,
    /// Seed rules keep their fixed strength.
    pinned: usize,
}

impl ListState {
    fn refresh(&mut self, counts: &HashMap<u32, [usize; 2]>, est: StrengthEstimator) {
        for (&f, &r) in &self.by_feature {
            if r < self.pinned {
                continue;
            }
            let rule = &mut self.rules[r];
            let c = counts.get(&f).copied().unwrap_or([0, 0]);
            let idx = (rule.label == Label::Negative) as usize;
            rule.count_match = c[idx];
            rule.count_total = c[0] + c[1];
            if let Some(s) = est.strength(rule.count_match, rule.count_total) {
                rule.strength = s;
            }
        }
    }

    /// Adds up to `quota` new rules per label; returns the added rules.
    fn grow(
        &mut self,
        counts: &HashMap<u32, [usize; 2]>,
        names: &[String],
        quota: usize,
        params: &CotrainParams,
    ) -> Vec<Rule> {
        let mut added = Vec::new();
        let mut fresh: Vec<Rule> = Vec::new();
        let mut fresh_ids: Vec<u32> = Vec::new();
        for label in LABELS {
            let idx = (label == Label::Negative) as usize;
            let mut cands: Vec<(u32, usize, usize, f64)> = counts
                .iter()
                .filter(|(f, _)| !self.by_feature.contains_key(f) && !fresh_ids.contains(f))
                .filter_map(|(&f, c)| {
                    let total = c[0] + c[1];
                    let s = params.estimator.strength(c[idx], total)?;
                    (s > params.epsilon).then_some((f, c[idx], total, s))
                })
                .collect();
            cands.sort_by(|a, b| {
                b.1.cmp(&a.1)
                    .then(b.3.total_cmp(&a.3))
                    .then_with(|| names[a.0 as usize].cmp(&names[b.0 as usize]))
            });
            for (f, cm, ct, s) in cands.into_iter().take(quota) {
                fresh_ids.push(f);
                fresh.push(Rule {
                    view: self.view,
                    condition: names[f as usize].clone(),
                    label,
                    count_match: cm,
                    count_total: ct,
                    strength: s,
                });
            }
        }
        for (f, r) in fresh_ids.into_iter().zip(fresh) {
            self.by_feature.insert(f, self.rules.len());
            self.rules.push(r.clone());
            added.push(r);
        }
        added
    }

    /// Label from the strongest matching rule; ties go to the earlier rule.
    fn label<'a, F>(&self, n: usize, features: F) -> Vec<Option<Label>>
    where
        F: Fn(usize) -> &'a [u32],
    {
        (0..n)
            .map(|i| {
                let mut best: Option<usize> = None;
                for f in features(i) {
                    if let Some(&r) = self.by_feature.get(f) {
                        let better = match best {
                            None => true,
                            Some(b) => {
                                let (sr, sb) = (self.rules[r].strength, self.rules[b].strength);
                                sr > sb || (sr == sb && r < b)
                            }
                        };
                        if better {
                            best = Some(r);
                        }
                    }
                }
                best.map(|r| self.rules[r].label)
            })
            .collect()
    }
}

pub fn dl_cotrain(occurrences: &[CandidateOccurrence], seeds: &SeedSet, params: &CotrainParams) -> Result<DecisionListState> {
    if params.m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if !(params.epsilon > 0.0 && params.epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {}", params.epsilon)));
    }
    if let StrengthEstimator::AddAlpha(a) = params.estimator {
        if !(a > 0.0) {
            return Err(Error::InvalidArgument(format!("smoothing alpha must be positive, got {}", a)));
        }
    }
    let data = intern(occurrences);
    let known: std::collections::HashSet<&str> = occurrences.iter().map(|o| o.phrase.as_str()).collect();
    seeds.check_resolved(|p| known.contains(p))?;
    let ids: HashMap<&str, u32> = data.names.iter().enumerate().map(|(i, n)| (n.as_str(), i as u32)).collect();

    let mut spelling = ListState {
        view: View::Spelling,
        rules: Vec::new(),
        by_feature: HashMap::new(),
        pinned: 0,
    };
    for (phrases, label) in [(&seeds.positives, Label::Positive), (&seeds.negatives, Label::Negative)] {
        for p in phrases {
            let cond = spelling_condition(p);
            spelling.by_feature.insert(ids[cond.as_str()], spelling.rules.len());
            spelling.rules.push(Rule {
                view: View::Spelling,
                condition: cond,
                label,
                count_match: 0,
                count_total: 0,
                strength: 1.0,
            });
        }
    }
    spelling.pinned = spelling.rules.len();
    let mut context = ListState {
        view: View::Context,
        rules: Vec::new(),
        by_feature: HashMap::new(),
        pinned: 0,
    };

    let n = occurrences.len();
    let spell_feats = |i: usize| std::slice::from_ref(&data.spelling[i]);
    let ctx_feats = |i: usize| data.context[i].as_slice();
    let mut trace = Vec::new();
    let mut labeled = vec![None; n];
    let mut iteration = 1;
    loop {
        let by_spelling = spelling.label(n, spell_feats);
        let ccounts = feature_counts(ctx_feats, &by_spelling);
        context.refresh(&ccounts, params.estimator);
        let mut added = context.grow(&ccounts, &data.names, iteration * params.m, params);

        labeled = context.label(n, ctx_feats);
        let scounts = feature_counts(spell_feats, &labeled);
        spelling.refresh(&scounts, params.estimator);
        added.extend(spelling.grow(&scounts, &data.names, iteration * params.m, params));

        let step = IterationTrace {
            iteration,
            labeled_by_spelling: by_spelling.iter().flatten().count(),
            labeled_by_context: labeled.iter().flatten().count(),
            added,
        };
        log::debug!(
            "cotrain iteration {}: +{} rules ({} spelling, {} context)",
            iteration,
            step.added.len(),
            spelling.rules.len(),
            context.rules.len()
        );
        let done = step.added.is_empty();
        trace.push(step);
        if done || iteration >= params.max_iterations {
            break;
        }
        iteration += 1;
    }
    Ok(DecisionListState {
        spelling_rules: spelling.rules,
        context_rules: context.rules,
        labeled,
        iteration,
        trace,
    })
}

/// Positive spelling rules with strength above θ. At θ = 1 only rules
/// with strength exactly 1 are kept.
pub fn dictionary_from_rules(state: &DecisionListState, theta: f64) -> Result<Dictionary> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1], got {}", theta)));
    }
    let mut rules: Vec<&Rule> = state
        .spelling_rules
        .iter()
        .filter(|r| r.label == Label::Positive)
        .filter(|r| if theta >= 1.0 { r.strength >= 1.0 } else { r.strength > theta })
        .collect();
    rules.sort_by(|a, b| b.strength.total_cmp(&a.strength).then_with(|| a.condition.cmp(&b.condition)));
    let mut d = Dictionary::new(Provenance::Cotrain).with_meta("theta", theta);
    for r in rules {
        let phrase = r.condition.strip_prefix("full-string=").unwrap_or(&r.condition);
        d.insert(phrase, Some(r.strength));
    }
    Ok(d)
}

/// One JSON object per iteration.
pub fn write_trace<W: Write>(out: &mut W, state: &DecisionListState) -> std::io::Result<()> {
    for t in &state.trace {
        serde_json::to_writer(&mut *out, t)?;
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;

    fn occ(words: &str, start: usize, end: usize) -> CandidateOccurrence {
        let w: Vec<&str> = words.split(' ').collect();
        CandidateOccurrence::from_span(&Sentence::from_words("d", 0, &w), start, end)
    }

    #[test]
    fn strength_estimators() {
        assert_eq!(StrengthEstimator::Unsmoothed.strength(95, 100), Some(0.95));
        assert_eq!(StrengthEstimator::Unsmoothed.strength(1, 1), Some(1.0));
        assert!(StrengthEstimator::AddAlpha(0.1).strength(1, 1).unwrap() < 1.0);
        assert_eq!(StrengthEstimator::Unsmoothed.strength(0, 0), None);
    }

    #[test]
    fn fifteen_bigrams() {
        let b = context_bigrams(&occ("a b c X d e f", 3, 4));
        assert_eq!(b.len(), 15);
        assert!(b.contains(&"-1:c|1:d".to_string()));
        assert!(b.contains(&"-3:a|3:f".to_string()));
    }

    fn toy() -> Vec<CandidateOccurrence> {
        let mut v = Vec::new();
        for name in ["flu", "ebola", "measles", "hiv"] {
            for _ in 0..3 {
                v.push(occ(&format!("infected with the {} virus today", name), 3, 4));
            }
        }
        for name in ["mutant", "protein", "gene"] {
            for _ in 0..3 {
                v.push(occ(&format!("we measured a {} level here", name), 3, 4));
            }
        }
        v
    }

    #[test]
    fn perfect_context_predictor_is_found() {
        let seeds = SeedSet::new(&["flu"], &["mutant"]).unwrap();
        let s = dl_cotrain(&toy(), &seeds, &CotrainParams::default()).unwrap();
        let first = &s.trace[0].added;
        assert!(first.iter().any(|r| r.view == View::Context && r.label == Label::Positive && r.condition.contains("1:virus")));
        let d = dictionary_from_rules(&s, 0.5).unwrap();
        let mut got: Vec<&str> = d.phrases().collect();
        got.sort();
        assert_eq!(got, vec!["ebola", "flu", "hiv", "measles"]);
        assert!(s.trace.last().unwrap().added.is_empty());
    }

    #[test]
    fn rule_lists_grow_and_labels_have_rules() {
        let data = toy();
        let seeds = SeedSet::new(&["flu"], &["mutant"]).unwrap();
        let s = dl_cotrain(&data, &seeds, &CotrainParams { m: 1, ..Default::default() }).unwrap();
        let mut total = 0;
        for t in &s.trace {
            total += t.added.len();
            assert!(total <= s.spelling_rules.len() + s.context_rules.len());
        }
        for (o, l) in data.iter().zip(&s.labeled) {
            if let Some(l) = l {
                let feats = context_bigrams(o);
                assert!(s.context_rules.iter().any(|r| r.label == *l && feats.contains(&r.condition)));
            }
        }
        let again = dl_cotrain(&data, &seeds, &CotrainParams { m: 1, ..Default::default() }).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn parameter_and_seed_errors() {
        let seeds = SeedSet::new(&["flu"], &["nothing"]).unwrap();
        assert!(matches!(dl_cotrain(&toy(), &seeds, &CotrainParams::default()), Err(Error::UnresolvedSeeds(_))));
        let seeds = SeedSet::new(&["flu"], &["mutant"]).unwrap();
        assert!(dl_cotrain(&toy(), &seeds, &CotrainParams { m: 0, ..Default::default() }).is_err());
        assert!(dl_cotrain(&toy(), &seeds, &CotrainParams { epsilon: 1.0, ..Default::default() }).is_err());
    }

    #[test]
    fn theta_filter() {
        let rule = |p: &str, s: f64, l: Label| Rule {
            view: View::Spelling,
            condition: spelling_condition(p),
            label: l,
            count_match: 0,
            count_total: 0,
            strength: s,
        };
        let state = DecisionListState {
            spelling_rules: vec![
                rule("a", 1.0, Label::Positive),
                rule("b", 0.6, Label::Positive),
                rule("c", 0.5, Label::Positive),
                rule("d", 0.9, Label::Negative),
            ],
            context_rules: vec![],
            labeled: vec![],
            iteration: 1,
            trace: vec![],
        };
        let names = |t: f64| dictionary_from_rules(&state, t).unwrap().phrases().map(String::from).collect::<Vec<_>>();
        assert_eq!(names(0.5), vec!["a", "b"]);
        assert_eq!(names(1.0), vec!["a"]);
        assert!(dictionary_from_rules(&state, 0.0).is_err());
    }
}
