//! Linear-chain inference: forward-backward in log space, Viterbi, and
//! the regularized conditional log-likelihood with its gradient.
//!
//! Weight layout: one weight per (observation feature, label), then label
//! bigrams `(prev, y)` with `prev ∈ {B, I, O, start}`, then, when second
//! order is on, label trigrams `(prev2, prev, y)`. Second order runs a
//! first-order chain over composite states `(y_{i-1}, y_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagger::Tag;

const L: usize = 3;
const START: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n_obs: usize,
    pub prev2: bool,
}

/// A sentence as feature ids, with gold tags when available.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub obs: Vec<Vec<(u32, f64)>>,
    pub tags: Option<Vec<Tag>>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

fn lse(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.n_obs * L + 4 * L + if self.prev2 { 4 * L * L } else { 0 }
    }

    pub fn obs_index(&self, f: usize, y: usize) -> usize {
        f * L + y
    }

    /// `prev` is a label index or 3 for the sentence start.
    pub fn bigram_index(&self, prev: usize, y: usize) -> usize {
        self.n_obs * L + prev * L + y
    }

    pub fn trigram_index(&self, prev2: usize, prev: usize, y: usize) -> usize {
        self.n_obs * L + 4 * L + (prev2 * L + prev) * L + y
    }

    fn n_states(&self) -> usize {
        if self.prev2 {
            4 * L
        } else {
            L
        }
    }

    fn valid(&self, i: usize, s: usize) -> bool {
        !self.prev2 || ((i == 0) == (s / L == START))
    }

    fn state_of(&self, tags: &[Tag], i: usize) -> usize {
        let y = tags[i].index();
        if self.prev2 {
            let p = if i == 0 { START } else { tags[i - 1].index() };
            p * L + y
        } else {
            y
        }
    }

    /// Weights touched by state `s` at position `i` (start weight at i = 0).
    fn node_start(&self, i: usize, s: usize) -> Option<usize> {
        (i == 0).then(|| self.bigram_index(START, s % L))
    }

    fn edge_weights(&self, from: usize, to: usize) -> Option<(usize, Option<usize>)> {
        if self.prev2 {
            if from % L != to / L || to / L == START {
                return None;
            }
            Some((
                self.bigram_index(from % L, to % L),
                Some(self.trigram_index(from / L, from % L, to % L)),
            ))
        } else {
            Some((self.bigram_index(from, to), None))
        }
    }
}

struct Potentials {
    /// `[i][s]`, −∞ for invalid states.
    node: Vec<Vec<f64>>,
    /// `[from][to]`, −∞ for incompatible pairs.
    edge: Vec<Vec<f64>>,
}

fn potentials(layout: &Layout, w: &[f64], obs: &[Vec<(u32, f64)>]) -> Potentials {
    let ns = layout.n_states();
    let node = obs
        .iter()
        .enumerate()
        .map(|(i, feats)| {
            let mut u = [0.0; L];
            for &(f, v) in feats {
                for (y, uy) in u.iter_mut().enumerate() {
                    *uy += v * w[layout.obs_index(f as usize, y)];
                }
            }
            (0..ns)
                .map(|s| {
                    if !layout.valid(i, s) {
                        return f64::NEG_INFINITY;
                    }
                    u[s % L] + layout.node_start(i, s).map_or(0.0, |k| w[k])
                })
                .collect()
        })
        .collect();
    let edge = (0..ns)
        .map(|a| {
            (0..ns)
                .map(|b| match layout.edge_weights(a, b) {
                    Some((k1, k2)) => w[k1] + k2.map_or(0.0, |k| w[k]),
                    None => f64::NEG_INFINITY,
                })
                .collect()
        })
        .collect();
    Potentials { node, edge }
}

/// Unnormalized log score of a tag sequence.
pub fn path_score(layout: &Layout, w: &[f64], obs: &[Vec<(u32, f64)>], tags: &[Tag]) -> f64 {
    let p = potentials(layout, w, obs);
    let mut total = 0.0;
    for i in 0..tags.len() {
        let s = layout.state_of(tags, i);
        total += p.node[i][s];
        if i > 0 {
            total += p.edge[layout.state_of(tags, i - 1)][s];
        }
    }
    total
}

pub struct Marginals {
    pub log_z: f64,
    /// `[i][state]`.
    pub node: Vec<Vec<f64>>,
    /// `[i][from][to]` for `i ≥ 1`; index 0 is unused.
    pub edge: Vec<Vec<Vec<f64>>>,
}

fn forward_backward_with(p: &Potentials, ns: usize) -> Marginals {
    let n = p.node.len();
    if n == 0 {
        return Marginals {
            log_z: 0.0,
            node: vec![],
            edge: vec![],
        };
    }
    let mut alpha = vec![vec![f64::NEG_INFINITY; ns]; n];
    alpha[0].clone_from(&p.node[0]);
    for i in 1..n {
        for s in 0..ns {
            if p.node[i][s] == f64::NEG_INFINITY {
                continue;
            }
            alpha[i][s] = p.node[i][s] + lse((0..ns).map(|r| alpha[i - 1][r] + p.edge[r][s]));
        }
    }
    let mut beta = vec![vec![f64::NEG_INFINITY; ns]; n];
    beta[n - 1] = vec![0.0; ns];
    for i in (0..n - 1).rev() {
        for r in 0..ns {
            beta[i][r] = lse((0..ns).map(|s| p.edge[r][s] + p.node[i + 1][s] + beta[i + 1][s]));
        }
    }
    let log_z = lse(alpha[n - 1].iter().copied());
    let node = (0..n)
        .map(|i| (0..ns).map(|s| (alpha[i][s] + beta[i][s] - log_z).exp()).collect())
        .collect();
    let mut edge = vec![Vec::new()];
    for i in 1..n {
        edge.push(
            (0..ns)
                .map(|r| {
                    (0..ns)
                        .map(|s| (alpha[i - 1][r] + p.edge[r][s] + p.node[i][s] + beta[i][s] - log_z).exp())
                        .collect()
                })
                .collect(),
        );
    }
    Marginals { log_z, node, edge }
}

pub fn forward_backward(layout: &Layout, w: &[f64], obs: &[Vec<(u32, f64)>]) -> Marginals {
    forward_backward_with(&potentials(layout, w, obs), layout.n_states())
}

pub fn log_partition(layout: &Layout, w: &[f64], obs: &[Vec<(u32, f64)>]) -> f64 {
    forward_backward(layout, w, obs).log_z
}

/// Exact argmax. Among equally scored sequences the one that is smallest
/// position by position under B < I < O is returned.
pub fn viterbi(layout: &Layout, w: &[f64], obs: &[Vec<(u32, f64)>]) -> Vec<Tag> {
    let n = obs.len();
    if n == 0 {
        return vec![];
    }
    let ns = layout.n_states();
    let p = potentials(layout, w, obs);
    // best[i][s]: best score of positions i+1.. given state s at i.
    let mut best = vec![vec![0.0; ns]; n];
    for i in (0..n - 1).rev() {
        for r in 0..ns {
            best[i][r] = (0..ns)
                .map(|s| p.edge[r][s] + p.node[i + 1][s] + best[i + 1][s])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let pick = |score: &dyn Fn(usize) -> f64| -> usize {
        let mut arg = 0;
        let mut top = f64::NEG_INFINITY;
        for s in 0..ns {
            let v = score(s);
            if v > top {
                top = v;
                arg = s;
            }
        }
        arg
    };
    let mut states = Vec::with_capacity(n);
    states.push(pick(&|s| p.node[0][s] + best[0][s]));
    for i in 1..n {
        let prev = states[i - 1];
        states.push(pick(&|s| p.edge[prev][s] + p.node[i][s] + best[i][s]));
    }
    states.into_iter().map(|s| Tag::from_index(s % L)).collect()
}

fn add_features(layout: &Layout, grad: &mut [f64], obs: &[Vec<(u32, f64)>], i: usize, s: usize, scale: f64) {
    for &(f, v) in &obs[i] {
        grad[layout.obs_index(f as usize, s % L)] += scale * v;
    }
    if let Some(k) = layout.node_start(i, s) {
        grad[k] += scale;
    }
}

fn add_edge(layout: &Layout, grad: &mut [f64], from: usize, to: usize, scale: f64) {
    if let Some((k1, k2)) = layout.edge_weights(from, to) {
        grad[k1] += scale;
        if let Some(k) = k2 {
            grad[k] += scale;
        }
    }
}

/// `log p(y|x)` of one sentence; adds its gradient into `grad`.
fn sentence_term(layout: &Layout, w: &[f64], sent: &Encoded, grad: &mut [f64]) -> f64 {
    let tags = sent.tags.as_deref().expect("training sentences carry tags");
    let ns = layout.n_states();
    let p = potentials(layout, w, &sent.obs);
    let m = forward_backward_with(&p, ns);
    let mut score = 0.0;
    for i in 0..tags.len() {
        let s = layout.state_of(tags, i);
        score += p.node[i][s];
        add_features(layout, grad, &sent.obs, i, s, 1.0);
        if i > 0 {
            let r = layout.state_of(tags, i - 1);
            score += p.edge[r][s];
            add_edge(layout, grad, r, s, 1.0);
        }
        for t in 0..ns {
            if m.node[i][t] > 0.0 {
                add_features(layout, grad, &sent.obs, i, t, -m.node[i][t]);
            }
        }
        if i > 0 {
            for r in 0..ns {
                for t in 0..ns {
                    let q = m.edge[i][r][t];
                    if q > 0.0 {
                        add_edge(layout, grad, r, t, -q);
                    }
                }
            }
        }
    }
    score - m.log_z
}

/// `Σ log p(y|x) − λ‖w‖²` and its gradient.
pub fn log_likelihood_and_gradient(layout: &Layout, w: &[f64], data: &[Encoded], lambda: f64) -> Result<(f64, Vec<f64>)> {
    if w.len() != layout.dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            found: w.len(),
        });
    }
    for (i, s) in data.iter().enumerate() {
        let tags = s
            .tags
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("training sentence {} has no tags", i)))?;
        if tags.len() != s.obs.len() {
            return Err(Error::Alignment(format!("sentence {}: tag count differs from token count", i)));
        }
        crate::tagger::validate_tags(tags, i)?;
    }
    const CHUNK: usize = 64;
    let work = |chunk: &[Encoded]| {
        let mut g = vec![0.0; w.len()];
        let ll: f64 = chunk.iter().map(|s| sentence_term(layout, w, s, &mut g)).sum();
        (ll, g)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<(f64, Vec<f64>)> = {
        use rayon::prelude::*;
        data.par_chunks(CHUNK).map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(f64, Vec<f64>)> = data.chunks(CHUNK).map(work).collect();
    let mut ll = 0.0;
    let mut grad = vec![0.0; w.len()];
    for (l, g) in parts {
        ll += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    let sq: f64 = w.iter().map(|x| x * x).sum();
    ll -= lambda * sq;
    for (g, x) in grad.iter_mut().zip(w) {
        *g -= 2.0 * lambda * x;
    }
    Ok((ll, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_paths(n: usize) -> Vec<Vec<Tag>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p: Vec<Tag>| {
                    Tag::ALL.iter().map(move |&t| {
                        let mut q = p.clone();
                        q.push(t);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn random_sentence(rng: &mut ChaCha8Rng, n: usize, n_obs: usize) -> Vec<Vec<(u32, f64)>> {
        (0..n)
            .map(|_| (0..3).map(|_| (rng.random_range(0..n_obs) as u32, rng.random_range(-1.0..1.0))).collect())
            .collect()
    }

    #[test]
    fn single_token_zero_weights() {
        let layout = Layout { n_obs: 2, prev2: false };
        let w = vec![0.0; layout.dim()];
        let s = Encoded { obs: vec![vec![(0, 1.0)]], tags: Some(vec![Tag::O]) };
        let (ll, _) = log_likelihood_and_gradient(&layout, &w, &[s], 0.0).unwrap();
        assert!((ll + 3f64.ln()).abs() < 1e-12);
        assert_eq!(viterbi(&layout, &w, &[vec![], vec![]]), vec![Tag::B, Tag::B]);
    }

    #[test]
    fn normalization_and_viterbi_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for prev2 in [false, true] {
            let layout = Layout { n_obs: 6, prev2 };
            for n in 1..=5 {
                let w: Vec<f64> = (0..layout.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let obs = random_sentence(&mut rng, n, 6);
                let log_z = log_partition(&layout, &w, &obs);
                let paths = all_paths(n);
                let total: f64 = paths.iter().map(|p| (path_score(&layout, &w, &obs, p) - log_z).exp()).sum();
                assert!((total - 1.0).abs() < 1e-10, "prev2={} n={} total={}", prev2, n, total);
                let best = paths
                    .iter()
                    .max_by(|a, b| path_score(&layout, &w, &obs, a).total_cmp(&path_score(&layout, &w, &obs, b)))
                    .unwrap();
                assert_eq!(&viterbi(&layout, &w, &obs), best);
            }
        }
    }

    #[test]
    fn malformed_gold_is_rejected() {
        let layout = Layout { n_obs: 1, prev2: false };
        let s = Encoded { obs: vec![vec![], vec![]], tags: Some(vec![Tag::O, Tag::I]) };
        assert!(matches!(
            log_likelihood_and_gradient(&layout, &vec![0.0; layout.dim()], &[s], 0.0),
            Err(Error::MalformedTags { .. })
        ));
    }
}
