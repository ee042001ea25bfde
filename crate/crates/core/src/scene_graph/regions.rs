use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BuildingNode, GvdMap};

const KMEANS_SEED: u64 = 0x5eed_0fc1_u64;
const KMEANS_RESTARTS: usize = 8;
const KMEANS_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionLayer {
    pub buildings: Vec<BuildingNode>,
    /// Symmetric building adjacency, row-major `n x n`; zero entries are the
    /// completion edges.
    pub adjacency: Vec<f64>,
    pub regions: Vec<Region>,
}

impl RegionLayer {
    pub fn len(&self) -> usize {
        self.buildings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buildings.is_empty()
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.adjacency[a * self.buildings.len() + b]
    }

    pub fn region_of(&self, building: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.members.iter().any(|m| m == building))
    }
}

/// Number of regions for `n` buildings: `max(1, round(sqrt(n)))`.
pub fn region_count(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(1)
}

/// Accumulate building adjacency from the diagram and partition it.
///
/// Every pair of buildings meeting at a diagram point gains, from each of the
/// two, that building's `1 / dist^2` to the point.
pub fn build_region_layer(gvd: &GvdMap, buildings: &[BuildingNode]) -> RegionLayer {
    let n = buildings.len();
    let mut w = vec![0.0; n * n];
    for p in &gvd.points {
        for (i, &(a, da)) in p.nearest.iter().enumerate() {
            for &(b, db) in &p.nearest[i + 1..] {
                if a == b || da <= 0.0 || db <= 0.0 {
                    continue;
                }
                let inc = 1.0 / (da * da) + 1.0 / (db * db);
                w[a * n + b] += inc;
                w[b * n + a] += inc;
            }
        }
    }
    let labels = spectral_partition(&w, n, region_count(n));
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut regions: Vec<Region> = (0..k)
        .map(|id| Region {
            id,
            members: Vec::new(),
        })
        .collect();
    for (bi, &l) in labels.iter().enumerate() {
        regions[l].members.push(buildings[bi].name.clone());
    }
    RegionLayer {
        buildings: buildings.to_vec(),
        adjacency: w,
        regions,
    }
}

/// Spectral clustering of a symmetric weight matrix into exactly `k`
/// non-empty clusters (normalized symmetric Laplacian, row-normalized
/// spectral embedding, seeded k-means). Labels are renumbered in order of
/// first appearance.
pub fn spectral_partition(weights: &[f64], n: usize, k: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, n);
    if k == 1 {
        return vec![0; n];
    }
    let deg: Vec<f64> = (0..n).map(|i| weights[i * n..(i + 1) * n].iter().sum()).collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * weights[i * n + j] * inv_sqrt[j]
    });
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| order[..k].iter().map(|&c| eig.eigenvectors[(i, c)]).collect())
        .collect();
    for r in rows.iter_mut() {
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            r.iter_mut().for_each(|x| *x /= norm);
        }
    }
    let labels = kmeans(&rows, k);
    canonical_labels(&labels)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(KMEANS_SEED);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (inertia, labels) = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| inertia < b.0 - 1e-12) {
            best = Some((inertia, labels));
        }
    }
    best.expect("at least one restart").1
}

fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = points.len();
    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        };
        centers.push(points[pick].clone());
    }
    let mut labels = vec![0usize; n];
    for _ in 0..KMEANS_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let l = nearest_center(p, &centers);
            if l != labels[i] {
                labels[i] = l;
                changed = true;
            }
        }
        ensure_nonempty(points, &mut labels, &centers, k);
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == c)
                .map(|(p, _)| p)
                .collect();
            let m = members.len() as f64;
            for (d, x) in center.iter_mut().enumerate() {
                *x = members.iter().map(|p| p[d]).sum::<f64>() / m;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
    (inertia, labels)
}

fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Give every empty cluster the point farthest from its current centre,
/// taken from a cluster with more than one member.
fn ensure_nonempty(points: &[Vec<f64>], labels: &mut [usize], centers: &[Vec<f64>], k: usize) {
    for c in 0..k {
        if labels.contains(&c) {
            continue;
        }
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let donor = (0..points.len()).filter(|&i| counts[labels[i]] > 1).max_by(|&a, &b| {
            sq_dist(&points[a], &centers[labels[a]])
                .total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                .then(b.cmp(&a))
        });
        if let Some(i) = donor {
            labels[i] = c;
        }
    }
}

fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}
