//! IVF_FLAT approximate nearest-neighbour index.
//!
//! Vectors are partitioned by k-means (k-means++ seeding) into `nlist`
//! clusters; a query scans the inverted lists of its `nprobe` nearest
//! centroids and scores the candidates exactly. Clustering always runs in L2
//! space; under COSINE the clustering space is the unit sphere (vectors are
//! normalized for assignment only). Scores are always computed on the raw
//! stored vectors with [`similarity`], so a full probe reproduces
//! [`brute_force_search`] exactly.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;

const MAX_ITERATIONS: usize = 50;
const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    Cosine,
    Ip,
    L2,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Cosine, Metric::Ip, Metric::L2];

    /// True when a larger score ranks first.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::L2)
    }

    /// Orders two scores best-first.
    pub fn compare(self, a: f64, b: f64) -> Ordering {
        if self.higher_is_better() {
            b.total_cmp(&a)
        } else {
            a.total_cmp(&b)
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "COSINE",
            Metric::Ip => "IP",
            Metric::L2 => "L2",
        })
    }
}

impl FromStr for Metric {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "COSINE" => Ok(Metric::Cosine),
            "IP" => Ok(Metric::Ip),
            "L2" => Ok(Metric::L2),
            _ => Err(IndexError::Input(format!("unknown metric '{s}' (expected cosine, ip or l2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// COSINE = dot/(‖a‖‖b‖) clamped to [-1, 1]; IP = dot; L2 = Euclidean distance.
pub fn similarity(a: &EmbeddingVector, b: &EmbeddingVector, metric: Metric) -> Result<f64, IndexError> {
    if a.dim() != b.dim() {
        return Err(IndexError::DimMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (a, b) = (a.values(), b.values());
    Ok(match metric {
        Metric::Ip => dot(a, b),
        Metric::L2 => squared_l2(a, b).sqrt(),
        Metric::Cosine => {
            let na = dot(a, a).sqrt();
            let nb = dot(b, b).sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(IndexError::Input("COSINE is undefined for a zero vector".into()));
            }
            (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
}

fn rank(hits: &mut [SearchHit], metric: Metric) {
    hits.sort_by(|a, b| metric.compare(a.score, b.score).then_with(|| a.id.cmp(&b.id)));
}

fn check_query(query: &EmbeddingVector, dim: usize, metric: Metric) -> Result<(), IndexError> {
    if query.dim() != dim {
        return Err(IndexError::DimMismatch {
            expected: dim,
            got: query.dim(),
        });
    }
    if metric == Metric::Cosine && query.norm() == 0.0 {
        return Err(IndexError::Input("COSINE is undefined for a zero query".into()));
    }
    Ok(())
}

/// Exact scan of all items; same ordering contract as [`IvfFlatIndex::search`].
pub fn brute_force_search(
    items: &[(String, EmbeddingVector)],
    query: &EmbeddingVector,
    k: usize,
    metric: Metric,
) -> Result<Vec<SearchHit>, IndexError> {
    if k == 0 {
        return Err(IndexError::Input("k must be at least 1".into()));
    }
    let Some((_, first)) = items.first() else {
        return Ok(Vec::new());
    };
    check_query(query, first.dim(), metric)?;
    let mut hits = items
        .iter()
        .map(|(id, v)| {
            Ok(SearchHit {
                id: id.clone(),
                score: similarity(v, query, metric)?,
            })
        })
        .collect::<Result<Vec<_>, IndexError>>()?;
    rank(&mut hits, metric);
    hits.truncate(k);
    Ok(hits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildReport {
    pub requested_nlist: usize,
    pub nlist: usize,
    pub iterations: usize,
    pub reseeded_clusters: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvfFlatIndex {
    metric: Metric,
    dim: usize,
    seed: u64,
    centroids: Vec<Vec<f64>>,
    lists: Vec<Vec<IndexEntry>>,
}

/// ⌈√N⌉, at least 1.
pub fn default_nlist(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(1)
}

/// max(1, ⌈nlist/4⌉).
pub fn default_nprobe(nlist: usize) -> usize {
    nlist.div_ceil(4).max(1)
}

impl IvfFlatIndex {
    pub fn build(
        items: &[(String, EmbeddingVector)],
        nlist: usize,
        metric: Metric,
        seed: u64,
    ) -> Result<(Self, BuildReport), IndexError> {
        if items.is_empty() {
            return Err(IndexError::Input("cannot build an index from zero items".into()));
        }
        if nlist == 0 {
            return Err(IndexError::Input("nlist must be at least 1".into()));
        }
        let dim = items[0].1.dim();
        let mut seen = std::collections::HashSet::new();
        for (id, v) in items {
            if v.dim() != dim {
                return Err(IndexError::DimMismatch { expected: dim, got: v.dim() });
            }
            if !seen.insert(id.as_str()) {
                return Err(IndexError::Input(format!("duplicate id '{id}'")));
            }
        }

        let mut report = BuildReport {
            requested_nlist: nlist,
            ..Default::default()
        };
        let nlist = if nlist > items.len() {
            report.warnings.push(format!(
                "nlist {nlist} exceeds the number of items {}; clamped",
                items.len()
            ));
            items.len()
        } else {
            nlist
        };
        report.nlist = nlist;

        let points = items
            .iter()
            .map(|(id, v)| {
                clustering_point(v, metric)
                    .ok_or_else(|| IndexError::Input(format!("item '{id}' is a zero vector under COSINE")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids = kmeans_plus_plus(&points, nlist, &mut rng);
        let mut assignment = assign(&points, &centroids);

        for iteration in 1..=MAX_ITERATIONS {
            report.iterations = iteration;
            let mut next = recompute(&points, &assignment, nlist, dim);
            // empty clusters take the farthest member of the largest cluster
            for c in 0..nlist {
                if next[c].is_none() {
                    let (point, _) = farthest_in_largest(&points, &assignment, &centroids);
                    next[c] = Some(points[point].clone());
                    assignment[point] = c;
                    report.reseeded_clusters += 1;
                }
            }
            let next: Vec<Vec<f64>> = next.into_iter().map(Option::unwrap).collect();
            let shift = centroids
                .iter()
                .zip(&next)
                .map(|(a, b)| squared_l2(a, b).sqrt())
                .fold(0.0, f64::max);
            centroids = next;
            assignment = assign(&points, &centroids);
            if shift < SHIFT_TOLERANCE {
                break;
            }
        }

        let mut lists = vec![Vec::new(); nlist];
        for ((id, v), c) in items.iter().zip(&assignment) {
            lists[*c].push(IndexEntry {
                id: id.clone(),
                vector: v.values().to_vec(),
            });
        }
        Ok((
            Self {
                metric,
                dim,
                seed,
                centroids,
                lists,
            },
            report,
        ))
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nlist(&self) -> usize {
        self.centroids.len()
    }

    pub fn len(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn lists(&self) -> &[Vec<IndexEntry>] {
        &self.lists
    }

    /// Position of the centroid nearest to `v` in clustering space.
    pub fn nearest_centroid(&self, v: &EmbeddingVector) -> Option<usize> {
        let p = clustering_point(v, self.metric)?;
        Some(nearest(&p, &self.centroids).0)
    }

    pub fn search(&self, query: &EmbeddingVector, k: usize, nprobe: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::Input("k must be at least 1".into()));
        }
        if nprobe == 0 || nprobe > self.nlist() {
            return Err(IndexError::Input(format!(
                "nprobe must be in 1..={}, got {nprobe}",
                self.nlist()
            )));
        }
        check_query(query, self.dim, self.metric)?;
        let point = clustering_point(query, self.metric).expect("checked non-zero");
        let mut order: Vec<(usize, f64)> = self
            .centroids
            .iter()
            .enumerate()
            .map(|(i, c)| (i, squared_l2(&point, c)))
            .collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

        let mut hits = Vec::new();
        for &(list, _) in order.iter().take(nprobe) {
            for entry in &self.lists[list] {
                let stored = EmbeddingVector::new(entry.vector.clone()).map_err(|e| IndexError::Snapshot(e.to_string()))?;
                hits.push(SearchHit {
                    id: entry.id.clone(),
                    score: similarity(&stored, query, self.metric)?,
                });
            }
        }
        rank(&mut hits, self.metric);
        hits.truncate(k);
        Ok(hits)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let json = serde_json::to_string(self).map_err(|e| IndexError::Snapshot(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| IndexError::Snapshot(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let text = std::fs::read_to_string(path).map_err(|e| IndexError::Snapshot(e.to_string()))?;
        let index: Self = serde_json::from_str(&text).map_err(|e| IndexError::Snapshot(e.to_string()))?;
        if index.centroids.len() != index.lists.len()
            || index.centroids.iter().any(|c| c.len() != index.dim)
            || index.lists.iter().flatten().any(|e| e.vector.len() != index.dim)
        {
            return Err(IndexError::Snapshot("inconsistent snapshot dimensions".into()));
        }
        Ok(index)
    }
}

fn clustering_point(v: &EmbeddingVector, metric: Metric) -> Option<Vec<f64>> {
    match metric {
        Metric::Cosine => v.normalized().map(Vec::from),
        Metric::Ip | Metric::L2 => Some(v.values().to_vec()),
    }
}

/// (index, squared distance) of the nearest centroid; ties go to the lower index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_l2(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids).0).collect()
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| squared_l2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = dist.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // rounding can land on an already-chosen point
            if dist[chosen] == 0.0 {
                chosen = dist
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
            }
            chosen
        } else {
            // all remaining points coincide with a centroid
            rng.gen_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(squared_l2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn recompute(points: &[Vec<f64>], assignment: &[usize], k: usize, dim: usize) -> Vec<Option<Vec<f64>>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

fn farthest_in_largest(points: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut counts = vec![0usize; centroids.len()];
    for &c in assignment {
        counts[c] += 1;
    }
    let largest = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    points
        .iter()
        .enumerate()
        .filter(|(i, _)| assignment[*i] == largest)
        .map(|(i, p)| (i, squared_l2(p, &centroids[largest])))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .unwrap_or((0, 0.0))
}
