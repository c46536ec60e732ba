//! State-space discretization: partition `R^N` into `K` labeled regions.
//!
//! Two partition kinds are supported. Per-axis partitions divide the domain
//! of each variable into bins and label cells by the Cartesian product
//! (mixed-radix encoding, axis 1 most significant). Representative-point
//! partitions assign each point to its nearest representative, i.e. the
//! Voronoi diagram induced by the representatives. Representatives come
//! from k-means cluster centers or from sampling observed points without
//! replacement.

use std::collections::HashSet;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{McscError, Result};

/// Distance function used for nearest-representative assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    Manhattan,
}

impl Distance {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Distance::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

/// How per-axis bin edges are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeRule {
    /// Equal-frequency bins: edges at quantiles of the observed data.
    Quantile,
    /// Equal-width bins spanning the observed data range.
    UniformRange,
}

/// A disjoint, exhaustive labeling of `R^N` into states `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    kind: PartitionKind,
    distance: Distance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionKind {
    /// `edges[d]` holds the `bins_d + 1` boundaries of axis `d`, strictly
    /// increasing. Points outside the outer edges clamp to the boundary bin.
    PerAxis { edges: Vec<Vec<f64>> },
    /// `K` distinct representative points; labels are nearest-representative
    /// indices with ties broken by the lowest index.
    Representatives { points: Vec<Vec<f64>> },
}

impl Partition {
    pub fn new_per_axis(edges: Vec<Vec<f64>>, distance: Distance) -> Result<Self> {
        if edges.is_empty() {
            return Err(McscError::InvalidPartition("no axes".into()));
        }
        for (d, axis) in edges.iter().enumerate() {
            if axis.len() < 2 {
                return Err(McscError::InvalidPartition(format!(
                    "axis {d}: need at least 2 edges"
                )));
            }
            if axis.iter().any(|e| !e.is_finite()) {
                return Err(McscError::InvalidPartition(format!(
                    "axis {d}: non-finite edge"
                )));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(McscError::InvalidPartition(format!(
                    "axis {d}: edges not strictly increasing"
                )));
            }
        }
        Ok(Self {
            kind: PartitionKind::PerAxis { edges },
            distance,
        })
    }

    pub fn new_representatives(points: Vec<Vec<f64>>, distance: Distance) -> Result<Self> {
        if points.is_empty() {
            return Err(McscError::EmptyInput("representative points"));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(McscError::InvalidPartition("zero-dimensional points".into()));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if p.len() != dim {
                return Err(McscError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(McscError::NonFinite("representative point"));
            }
            if !seen.insert(point_key(p)) {
                return Err(McscError::InvalidPartition(
                    "representative points must be distinct".into(),
                ));
            }
        }
        Ok(Self {
            kind: PartitionKind::Representatives { points },
            distance,
        })
    }

    pub fn kind(&self) -> &PartitionKind {
        &self.kind
    }

    pub fn distance(&self) -> Distance {
        self.distance
    }

    /// Number of states `K`.
    pub fn k(&self) -> usize {
        match &self.kind {
            PartitionKind::PerAxis { edges } => edges.iter().map(|e| e.len() - 1).product(),
            PartitionKind::Representatives { points } => points.len(),
        }
    }

    /// Dimension `N` of the underlying space.
    pub fn dim(&self) -> usize {
        match &self.kind {
            PartitionKind::PerAxis { edges } => edges.len(),
            PartitionKind::Representatives { points } => points[0].len(),
        }
    }

    /// Map a point to its state label in `1..=K`.
    pub fn assign(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.dim() {
            return Err(McscError::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(McscError::NonFinite("point"));
        }
        match &self.kind {
            PartitionKind::PerAxis { edges } => {
                let mut label0 = 0usize;
                for (x, axis) in point.iter().zip(edges) {
                    let bins = axis.len() - 1;
                    // Bin i covers [edges[i], edges[i+1]); out-of-range points
                    // clamp to the boundary bins.
                    let idx = axis[1..bins].partition_point(|e| x >= e);
                    label0 = label0 * bins + idx;
                }
                Ok(label0 + 1)
            }
            PartitionKind::Representatives { points } => {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (i, rep) in points.iter().enumerate() {
                    let d = self.distance.eval(point, rep);
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                Ok(best + 1)
            }
        }
    }

    /// Representative coordinates of a state: the representative point
    /// itself, or the cell center for per-axis partitions.
    pub fn representative(&self, label: usize) -> Result<Vec<f64>> {
        let k = self.k();
        if label < 1 || label > k {
            return Err(McscError::LabelOutOfRange { label, k });
        }
        match &self.kind {
            PartitionKind::PerAxis { edges } => {
                let mut rem = label - 1;
                let mut idx0 = vec![0usize; edges.len()];
                for (d, axis) in edges.iter().enumerate().rev() {
                    let bins = axis.len() - 1;
                    idx0[d] = rem % bins;
                    rem /= bins;
                }
                Ok(idx0
                    .iter()
                    .zip(edges)
                    .map(|(&i, axis)| 0.5 * (axis[i] + axis[i + 1]))
                    .collect())
            }
            PartitionKind::Representatives { points } => Ok(points[label - 1].clone()),
        }
    }

    /// Representative coordinates of every state, in label order.
    pub fn all_representatives(&self) -> Vec<Vec<f64>> {
        (1..=self.k())
            .map(|l| self.representative(l).expect("label in range"))
            .collect()
    }

    /// Pairwise distances between state representatives.
    pub fn pairwise_distances(&self) -> DistanceMatrix {
        let reps = self.all_representatives();
        DistanceMatrix::from_points(&reps, self.distance).expect("representatives are valid points")
    }
}

fn point_key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|x| x.to_bits()).collect()
}

/// Symmetric zero-diagonal matrix of distances between state representatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: Array2<f64>,
}

impl DistanceMatrix {
    pub fn new(d: Array2<f64>) -> Result<Self> {
        let k = d.nrows();
        if d.ncols() != k {
            return Err(McscError::InvalidDistanceMatrix("not square".into()));
        }
        for i in 0..k {
            if d[[i, i]] != 0.0 {
                return Err(McscError::InvalidDistanceMatrix("nonzero diagonal".into()));
            }
            for j in 0..k {
                let v = d[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return Err(McscError::InvalidDistanceMatrix(format!(
                        "entry ({i},{j}) = {v}"
                    )));
                }
                if (v - d[[j, i]]).abs() > 1e-12 {
                    return Err(McscError::InvalidDistanceMatrix("not symmetric".into()));
                }
            }
        }
        Ok(Self { d })
    }

    pub fn from_points(points: &[Vec<f64>], distance: Distance) -> Result<Self> {
        if points.is_empty() {
            return Err(McscError::EmptyInput("distance matrix points"));
        }
        let k = points.len();
        let mut d = Array2::zeros((k, k));
        for i in 0..k {
            for j in (i + 1)..k {
                let v = distance.eval(&points[i], &points[j]);
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        Self::new(d)
    }

    pub fn k(&self) -> usize {
        self.d.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.d
    }

    /// Distance between states `i` and `j` (1-based labels).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[[i - 1, j - 1]]
    }
}

/// One labeled observation: individual `m` was in state `label` at `time`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledRecord {
    pub individual: String,
    pub time: i64,
    pub label: usize,
}

/// Discretized longitudinal data over states `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    records: Vec<LabeledRecord>,
    k: usize,
}

impl LabeledSeries {
    /// Validates labels and `(individual, time)` uniqueness; records are
    /// sorted by individual, then time.
    pub fn new(mut records: Vec<LabeledRecord>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(McscError::InvalidConfig("K must be >= 1".into()));
        }
        for r in &records {
            if r.label < 1 || r.label > k {
                return Err(McscError::LabelOutOfRange { label: r.label, k });
            }
        }
        records.sort_by(|a, b| (&a.individual, a.time).cmp(&(&b.individual, b.time)));
        for w in records.windows(2) {
            if w[0].individual == w[1].individual && w[0].time == w[1].time {
                return Err(McscError::DuplicateObservation {
                    individual: w[0].individual.clone(),
                    time: w[0].time,
                });
            }
        }
        Ok(Self { records, k })
    }

    pub fn records(&self) -> &[LabeledRecord] {
        &self.records
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Normalized histogram of state labels over all records.
    pub fn label_histogram(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.k];
        for r in &self.records {
            h[r.label - 1] += 1.0;
        }
        let total: f64 = h.iter().sum();
        if total > 0.0 {
            for v in &mut h {
                *v /= total;
            }
        }
        h
    }
}

/// Build a per-axis partition with `bins_per_axis[d]` bins on axis `d`.
///
/// `K` is the product of the bin counts; cell labels use mixed-radix
/// encoding with axis 1 most significant.
pub fn partition_per_axis(
    data_points: &[Vec<f64>],
    bins_per_axis: &[usize],
    edge_rule: EdgeRule,
) -> Result<Partition> {
    if bins_per_axis.is_empty() {
        return Err(McscError::InvalidConfig("need at least one axis".into()));
    }
    if bins_per_axis.iter().any(|&b| b == 0) {
        return Err(McscError::InvalidConfig("bin counts must be >= 1".into()));
    }
    if data_points.is_empty() {
        return Err(McscError::EmptyInput("data points"));
    }
    let n = bins_per_axis.len();
    for p in data_points {
        if p.len() != n {
            return Err(McscError::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(McscError::NonFinite("data point"));
        }
    }

    let mut edges = Vec::with_capacity(n);
    for (d, &bins) in bins_per_axis.iter().enumerate() {
        let mut vals: Vec<f64> = data_points.iter().map(|p| p[d]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let axis_edges = match edge_rule {
            EdgeRule::Quantile => (0..=bins)
                .map(|j| quantile_sorted(&vals, j as f64 / bins as f64))
                .collect::<Vec<_>>(),
            EdgeRule::UniformRange => {
                let lo = vals[0];
                let hi = vals[vals.len() - 1];
                (0..=bins)
                    .map(|j| lo + (hi - lo) * j as f64 / bins as f64)
                    .collect::<Vec<_>>()
            }
        };
        if axis_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(McscError::InvalidPartition(format!(
                "axis {d}: degenerate bin edges (too many bins for the data spread?)"
            )));
        }
        edges.push(axis_edges);
    }
    Partition::new_per_axis(edges, Distance::Euclidean)
}

/// Linear-interpolation quantile of pre-sorted values at probability `q`.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Result of Lloyd's algorithm, with per-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub partition: Partition,
    pub assignments: Vec<usize>,
    /// Inertia after each assignment step (never increases while no
    /// empty-cluster repair fires).
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub empty_cluster_repairs: usize,
}

/// K-means clustering: k-means++ seeding then Lloyd iterations, stopping at
/// an assignment fixpoint or `max_iter`. Deterministic given `seed`. Empty
/// clusters are repaired by moving the center to the point farthest from
/// its assigned center.
pub fn fit_kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<Partition> {
    Ok(fit_kmeans_detailed(points, k, seed, max_iter)?.partition)
}

pub fn fit_kmeans_detailed(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansFit> {
    validate_cloud(points, k)?;
    if max_iter == 0 {
        return Err(McscError::InvalidConfig("max_iter must be >= 1".into()));
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_plusplus(points, k, &mut rng);

    let mut assignments = vec![usize::MAX; points.len()];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;
    let mut repairs = 0;

    for _ in 0..max_iter {
        iterations += 1;
        // Assignment step.
        let mut changed = false;
        let mut inertia = 0.0;
        for (pi, p) in points.iter().enumerate() {
            let (ci, d2) = nearest_center(p, &centers);
            inertia += d2;
            if assignments[pi] != ci {
                assignments[pi] = ci;
                changed = true;
            }
        }
        inertia_trace.push(inertia);
        if !changed {
            break;
        }

        // Update step: centers become the means of their assigned points.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &ci) in points.iter().zip(&assignments) {
            counts[ci] += 1;
            for (s, x) in sums[ci].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ci in 0..k {
            if counts[ci] > 0 {
                for s in &mut sums[ci] {
                    *s /= counts[ci] as f64;
                }
                centers[ci] = sums[ci].clone();
            }
        }

        // Empty-cluster repair: take the point currently farthest from its
        // own center (lowest index on ties).
        for ci in 0..k {
            if counts[ci] == 0 {
                repairs += 1;
                let mut far_pi = 0;
                let mut far_d2 = -1.0;
                for (pi, p) in points.iter().enumerate() {
                    let d2 = sq_dist(p, &centers[assignments[pi]]);
                    if d2 > far_d2 {
                        far_d2 = d2;
                        far_pi = pi;
                    }
                }
                centers[ci] = points[far_pi].clone();
                counts[ci] = 1;
                assignments[far_pi] = ci;
            }
        }
    }

    let partition = Partition::new_representatives(centers, Distance::Euclidean)?;
    Ok(KMeansFit {
        partition,
        assignments,
        inertia_trace,
        iterations,
        empty_cluster_repairs: repairs,
    })
}

fn validate_cloud(points: &[Vec<f64>], k: usize) -> Result<()> {
    if points.is_empty() {
        return Err(McscError::EmptyInput("points"));
    }
    if k == 0 {
        return Err(McscError::InvalidConfig("K must be >= 1".into()));
    }
    let dim = points[0].len();
    let mut distinct = HashSet::new();
    for p in points {
        if p.len() != dim {
            return Err(McscError::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(McscError::NonFinite("point"));
        }
        distinct.insert(point_key(p));
    }
    if distinct.len() < k {
        return Err(McscError::InsufficientPoints {
            distinct: distinct.len(),
            k,
        });
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (ci, c) in centers.iter().enumerate() {
        let d2 = sq_dist(p, c);
        if d2 < best_d2 {
            best_d2 = d2;
            best = ci;
        }
    }
    (best, best_d2)
}

/// k-means++ seeding: first center uniform, then each next center sampled
/// with probability proportional to the squared distance to the nearest
/// chosen center.
fn kmeans_plusplus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..points.len());
    let mut centers = vec![points[first].clone()];
    let mut min_d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();

    while centers.len() < k {
        let total: f64 = min_d2.iter().sum();
        // total > 0 is guaranteed while fewer than `k` distinct points are
        // covered (the caller checked distinct >= k).
        let mut target = rng.random::<f64>() * total;
        let mut chosen = None;
        for (pi, &d2) in min_d2.iter().enumerate() {
            if d2 > 0.0 {
                chosen = Some(pi);
                target -= d2;
                if target <= 0.0 {
                    break;
                }
            }
        }
        let chosen = chosen.expect("an uncovered point remains");
        centers.push(points[chosen].clone());
        for (pi, p) in points.iter().enumerate() {
            let d2 = sq_dist(p, centers.last().unwrap());
            if d2 < min_d2[pi] {
                min_d2[pi] = d2;
            }
        }
    }
    centers
}

/// Choose `K` distinct observed points uniformly without replacement.
/// Deterministic given `seed`.
pub fn sample_representatives(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Partition> {
    validate_cloud(points, k)?;
    // Deduplicate preserving first-occurrence order so the draw is over
    // distinct points.
    let mut seen = HashSet::new();
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if seen.insert(point_key(p)) {
            distinct.push(p);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, distinct.len(), k);
    let reps: Vec<Vec<f64>> = idx.iter().map(|i| distinct[i].clone()).collect();
    Partition::new_representatives(reps, Distance::Euclidean)
}
