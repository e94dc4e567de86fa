//! k-means with silhouette-driven choice of k.
//!
//! With `normalize` on, points are scaled to unit length and clustered with
//! spherical k-means (cosine assignment, re-normalized mean directions).
//! Otherwise plain Lloyd iterations under L2 are used. Either way the
//! returned centroids are the arithmetic means of the final members, so that
//! nearest-centroid assignment under L2 is consistent with them.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{self, Embedding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub min_cluster_size: usize,
    pub max_k: usize,
    pub seed: u64,
    pub normalize: bool,
    pub max_iter: usize,
    pub restarts: usize,
    /// Silhouette is scored on at most this many points.
    pub silhouette_sample: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            min_cluster_size: 5,
            max_k: 20,
            seed: 42,
            normalize: true,
            max_iter: 100,
            restarts: 4,
            silhouette_sample: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Mean of each cluster's members, row-major `k x dim`.
    pub centroids: Vec<Vec<f32>>,
    /// 0-based cluster of every input point.
    pub labels: Vec<usize>,
    /// Per-cluster assignment radius: mean + 2 sd of member distances.
    pub outlier_thresholds: Vec<f64>,
    /// Mean silhouette of the chosen k; `None` when the input was degenerate.
    pub silhouette: Option<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

struct Points {
    dim: usize,
    data: Vec<f32>,
}

impl Points {
    fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }
    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Uniform draw in `[0, bound)`.
fn below(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    (rng.next_u64() % bound as u64) as usize
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn fit(embeddings: &[Embedding], config: &ClusterConfig) -> Result<Clustering> {
    let n = embeddings.len();
    let needed = 2 * config.min_cluster_size.max(1);
    if n < needed {
        return Err(Error::TooFewSentences { got: n, needed });
    }
    let dim = embeddings[0].dimension();
    let mut data = Vec::with_capacity(n * dim);
    for e in embeddings {
        if e.dimension() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: e.dimension(),
            });
        }
        let mut row: Vec<f64> = e.values().iter().map(|&v| f64::from(v)).collect();
        if config.normalize {
            vector::normalize_f64(&mut row);
        }
        data.extend(row.into_iter().map(|v| v as f32));
    }
    let points = Points { dim, data };

    if (1..n).all(|i| points.row(i) == points.row(0)) {
        log::warn!("all {n} embeddings are identical; fitting a single topic");
        let labels = vec![0; n];
        return Ok(finish(&points, labels, 1, None));
    }

    let k_max = config.max_k.min(n / config.min_cluster_size.max(1)).max(2);
    let sample = silhouette_sample(n, config.silhouette_sample, config.seed);
    let dist = pairwise(&points, &sample);

    let mut best: Option<(f64, Vec<usize>, usize)> = None;
    for k in 2..=k_max {
        let labels = kmeans(&points, k, config);
        let s = silhouette(&dist, &sample, &labels);
        if best.as_ref().is_none_or(|(bs, _, _)| s > *bs) {
            best = Some((s, labels, k));
        }
    }
    let (score, labels, k) = best.expect("k range is non-empty");
    Ok(finish(&points, labels, k, Some(score)))
}

fn finish(points: &Points, labels: Vec<usize>, k: usize, silhouette: Option<f64>) -> Clustering {
    let dim = points.dim;
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut sizes = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        sizes[l] += 1;
        for (s, &v) in sums[l].iter_mut().zip(points.row(i)) {
            *s += f64::from(v);
        }
    }
    // Drop clusters that ended up empty and compact the labels.
    let mut remap = vec![usize::MAX; k];
    let mut centroids = Vec::new();
    for c in 0..k {
        if sizes[c] > 0 {
            remap[c] = centroids.len();
            centroids.push(sums[c].iter().map(|s| (s / sizes[c] as f64) as f32).collect::<Vec<f32>>());
        }
    }
    let labels: Vec<usize> = labels.into_iter().map(|l| remap[l]).collect();

    let k = centroids.len();
    let mut dsum = vec![0.0f64; k];
    let mut dsq = vec![0.0f64; k];
    let mut cnt = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        let d = vector::l2(points.row(i), &centroids[l]);
        dsum[l] += d;
        dsq[l] += d * d;
        cnt[l] += 1;
    }
    let outlier_thresholds = (0..k)
        .map(|c| {
            let n = cnt[c] as f64;
            let mean = dsum[c] / n;
            let var = (dsq[c] / n - mean * mean).max(0.0);
            // The epsilon keeps zero-spread clusters from rejecting their own members.
            mean + 2.0 * libm::sqrt(var) + 1e-9
        })
        .collect();
    Clustering {
        centroids,
        labels,
        outlier_thresholds,
        silhouette,
    }
}

/// Best of `config.restarts` seeded k-means runs (highest cohesion).
fn kmeans(points: &Points, k: usize, config: &ClusterConfig) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..config.restarts.max(1) {
        let seed = config
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((k as u64) << 32 | r as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (labels, cost) = lloyd(points, k, config, &mut rng);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}

/// Dissimilarity used inside k-means: `1 - cos` for spherical, squared L2 otherwise.
fn dissimilarity(spherical: bool, p: &[f32], c: &[f32]) -> f64 {
    if spherical {
        1.0 - vector::dot(p, c)
    } else {
        vector::squared_l2(p, c)
    }
}

fn nearest(spherical: bool, p: &[f32], centroids: &[Vec<f32>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dissimilarity(spherical, p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd(points: &Points, k: usize, config: &ClusterConfig, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let spherical = config.normalize;
    let n = points.len();

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f32>> = Vec::with_capacity(k);
    centroids.push(points.row(below(rng, n)).to_vec());
    let mut d2: Vec<f64> = (0..n)
        .map(|i| vector::squared_l2(points.row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = unit(rng) * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            below(rng, n)
        };
        let c = points.row(next).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(vector::squared_l2(points.row(i), &c));
        }
        centroids.push(c);
    }

    let mut labels = vec![usize::MAX; n];
    let mut cost = 0.0;
    for _ in 0..config.max_iter.max(1) {
        let mut changed = false;
        cost = 0.0;
        for (i, label) in labels.iter_mut().enumerate().take(n) {
            let (j, d) = nearest(spherical, points.row(i), &centroids);
            cost += d;
            if *label != j {
                *label = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0f64; points.dim]; k];
        let mut sizes = vec![0usize; k];
        for i in 0..n {
            sizes[labels[i]] += 1;
            for (s, &v) in sums[labels[i]].iter_mut().zip(points.row(i)) {
                *s += f64::from(v);
            }
        }
        for j in 0..k {
            if sizes[j] == 0 {
                // Re-seed an empty cluster at the worst-fitting point.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = dissimilarity(spherical, points.row(a), &centroids[labels[a]]);
                        let db = dissimilarity(spherical, points.row(b), &centroids[labels[b]]);
                        da.partial_cmp(&db).unwrap_or(core::cmp::Ordering::Equal).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                centroids[j] = points.row(far).to_vec();
                continue;
            }
            let mut mean: Vec<f64> = sums[j].iter().map(|s| s / sizes[j] as f64).collect();
            if spherical {
                vector::normalize_f64(&mut mean);
            }
            centroids[j] = mean.into_iter().map(|v| v as f32).collect();
        }
    }
    (labels, cost)
}

fn silhouette_sample(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if n <= cap.max(2) {
        return idx;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5111_0E77);
    for i in 0..cap {
        let j = i + below(&mut rng, n - i);
        idx.swap(i, j);
    }
    idx.truncate(cap);
    idx.sort_unstable();
    idx
}

/// Condensed L2 distance matrix over the sampled points.
fn pairwise(points: &Points, sample: &[usize]) -> Vec<f64> {
    let s = sample.len();
    let mut out = vec![0.0; s * s];
    for a in 0..s {
        for b in (a + 1)..s {
            let d = vector::l2(points.row(sample[a]), points.row(sample[b]));
            out[a * s + b] = d;
            out[b * s + a] = d;
        }
    }
    out
}

/// Mean silhouette over the sample. Points alone in their cluster score 0.
fn silhouette(dist: &[f64], sample: &[usize], labels: &[usize]) -> f64 {
    let s = sample.len();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    let mut sums = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    for a in 0..s {
        sums.iter_mut().for_each(|v| *v = 0.0);
        counts.iter_mut().for_each(|v| *v = 0);
        for b in 0..s {
            if a != b {
                let l = labels[sample[b]];
                sums[l] += dist[a * s + b];
                counts[l] += 1;
            }
        }
        let own = labels[sample[a]];
        if counts[own] == 0 {
            continue;
        }
        let intra = sums[own] / counts[own] as f64;
        let inter = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !inter.is_finite() {
            continue;
        }
        let denom = intra.max(inter);
        if denom > 0.0 {
            total += (inter - intra) / denom;
        }
    }
    if s == 0 {
        0.0
    } else {
        total / s as f64
    }
}
