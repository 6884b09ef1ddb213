//! Exact k-nearest-neighbor search and attention-weighted label aggregation.
//!
//! Neighbors are ranked by Euclidean distance; attention weights are a
//! temperature softmax over cosine similarities. A query is never its own
//! neighbor, and equal distances are ordered by the smaller index.

use std::cmp::Ordering;

use crate::embed::Embeddings;
use crate::error::{Error, Result};
use crate::label::SoftLabel;
use crate::parallel;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub query: usize,
    pub indices: Vec<usize>,
    pub attention: Vec<f64>,
}

/// Attention weights plus the number of pairs whose cosine similarity was
/// undefined (a zero-norm embedding) and was replaced by 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub weights: Vec<f64>,
    pub zero_norm_pairs: usize,
}

/// Squared Euclidean distance, summed in four independent lanes.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Running list of the `k` smallest `(distance, index)` pairs, kept sorted.
/// The result does not depend on the order candidates are offered in.
struct TopK {
    k: usize,
    best: Vec<(f64, usize)>,
    /// Distance of the current k-th entry, infinite until the list is full.
    bound: f64,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            best: Vec::with_capacity(k + 1),
            bound: f64::INFINITY,
        }
    }

    #[inline]
    fn offer(&mut self, d: f64, j: usize) {
        if d > self.bound {
            return;
        }
        let cand = (d, j);
        if self.best.len() == self.k {
            match self.best.last() {
                Some(worst) if by_distance_then_index(&cand, worst) == Ordering::Less => {}
                _ => return,
            }
        }
        let pos = self
            .best
            .partition_point(|b| by_distance_then_index(b, &cand) == Ordering::Less);
        self.best.insert(pos, cand);
        self.best.truncate(self.k);
        if self.best.len() == self.k {
            self.bound = self.best[self.k - 1].0;
        }
    }

    fn into_indices(self) -> Vec<usize> {
        self.best.into_iter().map(|(_, j)| j).collect()
    }
}

/// The `min(k, |pool \ {query}|)` pool members closest to `query`.
pub fn knn(emb: &Embeddings, query: usize, k: usize, pool: &[usize]) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if query >= emb.len() {
        return Err(Error::domain(format!("query index {query} out of range")));
    }
    let q = emb.row(query);
    let mut cands = Vec::with_capacity(pool.len());
    for &j in pool {
        if j >= emb.len() {
            return Err(Error::domain(format!("pool index {j} out of range")));
        }
        if j != query {
            cands.push((squared_distance(q, emb.row(j)), j));
        }
    }
    if cands.is_empty() {
        return Err(Error::domain("neighbor pool is empty after excluding the query"));
    }
    cands.sort_unstable_by(by_distance_then_index);
    cands.truncate(k);
    Ok(cands.into_iter().map(|(_, j)| j).collect())
}

/// Like [`knn`], with the pool given as a membership mask over all rows.
pub fn knn_masked(emb: &Embeddings, query: usize, k: usize, in_pool: &[bool]) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    Error::check_dim("pool mask", emb.len(), in_pool.len())?;
    let q = emb.row(query);
    let mut top = TopK::new(k);
    for (j, &m) in in_pool.iter().enumerate() {
        if m && j != query {
            top.offer(squared_distance(q, emb.row(j)), j);
        }
    }
    if top.best.is_empty() {
        return Err(Error::domain("neighbor pool is empty after excluding the query"));
    }
    Ok(top.into_indices())
}

/// k nearest neighbors of every row against the whole set.
pub fn knn_all(emb: &Embeddings, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let n = emb.len();
    if n < 2 {
        return Err(Error::domain("need at least two points for neighbor search"));
    }
    if parallel::threads() > 1 {
        return Ok(parallel::map_range(n, |i| {
            let q = emb.row(i);
            let mut top = TopK::new(k);
            for j in (0..n).filter(|&j| j != i) {
                top.offer(squared_distance(q, emb.row(j)), j);
            }
            top.into_indices()
        }));
    }
    // Single thread: each distance is computed once and offered to both ends.
    let mut tops: Vec<TopK> = (0..n).map(|_| TopK::new(k)).collect();
    for i in 0..n {
        let q = emb.row(i);
        for j in i + 1..n {
            let d = squared_distance(q, emb.row(j));
            tops[i].offer(d, j);
            tops[j].offer(d, i);
        }
    }
    Ok(tops.into_iter().map(TopK::into_indices).collect())
}

/// Cosine similarity, or `None` when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some(dot / (na * nb))
}

pub fn attention_weights(
    emb: &Embeddings,
    query: usize,
    neighbors: &[usize],
    tau: f64,
) -> Result<Attention> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("temperature must be positive, got {tau}")));
    }
    if neighbors.is_empty() {
        return Err(Error::domain("attention over an empty neighbor set"));
    }
    let q = emb.row(query);
    let mut zero_norm_pairs = 0;
    let scores: Vec<f64> = neighbors
        .iter()
        .map(|&j| {
            cosine_similarity(q, emb.row(j)).unwrap_or_else(|| {
                zero_norm_pairs += 1;
                0.0
            }) / tau
        })
        .collect();
    Ok(Attention {
        weights: crate::embed::softmax(&scores),
        zero_norm_pairs,
    })
}

/// Neighbor sets with attention for every row. Returns the sets and the total
/// count of zero-norm substitutions.
pub fn neighbor_sets(emb: &Embeddings, k: usize, tau: f64) -> Result<(Vec<NeighborSet>, usize)> {
    let all = knn_all(emb, k)?;
    let mut zero_norm = 0;
    let mut sets = Vec::with_capacity(all.len());
    for (i, indices) in all.into_iter().enumerate() {
        let att = attention_weights(emb, i, &indices, tau)?;
        zero_norm += att.zero_norm_pairs;
        sets.push(NeighborSet {
            query: i,
            indices,
            attention: att.weights,
        });
    }
    if zero_norm > 0 {
        log::warn!("{zero_norm} neighbor pairs had a zero-norm embedding; similarity set to 0");
    }
    Ok((sets, zero_norm))
}

/// `sum_j alpha_j * labels[j]` over the neighbor set.
pub fn aggregate_labels(set: &NeighborSet, labels: &[SoftLabel]) -> Result<SoftLabel> {
    let first = set
        .indices
        .first()
        .ok_or_else(|| Error::domain("aggregate over an empty neighbor set"))?;
    let c = labels
        .get(*first)
        .ok_or_else(|| Error::domain(format!("neighbor index {first} out of range")))?
        .num_classes();
    let mut out = vec![0.0; c];
    for (&j, &a) in set.indices.iter().zip(&set.attention) {
        let y = labels
            .get(j)
            .ok_or_else(|| Error::domain(format!("neighbor index {j} out of range")))?;
        for (o, p) in out.iter_mut().zip(y.probs()) {
            *o += a * p;
        }
    }
    // Rounding can push an entry a hair past 1.
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(SoftLabel::from_simplex(out))
}
