//! Classification, clustering, and embedding over root vectors.
//!
//! Models embed as stacked real/imaginary pole coordinates, where Euclidean
//! distance coincides with the root distance. Nearest-neighbor queries run
//! through a KD-tree whose results are bit-identical to a linear scan;
//! clustering alternates transport assignments with free-support barycenter
//! updates; the principal-component embedding is plain centered SVD.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::interpolation::{barycenter_ot_from, root_vector, BarycentricCoordinates};
use crate::model::{pole_order, RationalModel};
use crate::transport::{exact_ot, DiscreteMeasure, TransportConfig};

/// A model rendered as the vector of sorted pole coordinates, real parts
/// stacked above imaginary parts, optionally tagged with a class.
#[derive(Debug, Clone)]
pub struct RootEmbedding {
    vector: Vec<f64>,
    pub label: Option<String>,
}

impl RootEmbedding {
    pub fn from_model(model: &RationalModel, label: Option<String>) -> Self {
        Self { vector: root_vector(model), label }
    }

    /// A raw embedding vector; `len` must be twice the model order when the
    /// vector is meant to round-trip back to poles.
    pub fn from_vector(vector: Vec<f64>, label: Option<String>) -> Self {
        Self { vector, label }
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }
}

/// Static KD-tree over fixed-dimension points. Queries return exactly the
/// neighbors a linear scan would, with ties broken by insertion index.
pub struct KdTree {
    points: Vec<Vec<f64>>,
    /// Balanced implicit tree: `nodes[k]` is the point index at tree slot k.
    nodes: Vec<usize>,
    dim: usize,
}

impl KdTree {
    pub fn build(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch { index: 0, got: 0, expected: 1 });
        }
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { index, got: p.len(), expected: dim });
            }
        }
        let mut nodes: Vec<usize> = (0..points.len()).collect();
        build_recursive(&points, &mut nodes, 0, dim);
        Ok(Self { points, nodes, dim })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of the `k` nearest points by squared Euclidean distance, best
    /// first; ties resolve to the smaller index, exactly as a stable linear
    /// scan over (distance, index) keys.
    pub fn nearest(&self, query: &[f64], k: usize) -> Result<Vec<usize>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch { index: 0, got: query.len(), expected: self.dim });
        }
        if k == 0 || k > self.points.len() {
            return Err(Error::BadNeighborCount { k, len: self.points.len() });
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search(query, k, 0, self.nodes.len(), 0, &mut best);
        Ok(best.into_iter().map(|(_, idx)| idx).collect())
    }

    fn search(
        &self,
        query: &[f64],
        k: usize,
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut Vec<(f64, usize)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.nodes[mid];
        let point = &self.points[idx];
        let d2: f64 = query.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
        let key = (d2, idx);
        let pos = best.partition_point(|&b| b < key);
        if pos < k {
            best.insert(pos, key);
            best.truncate(k);
        }
        let axis = depth % self.dim;
        let delta = query[axis] - point[axis];
        let (near, far) = if delta < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(query, k, near.0, near.1, depth + 1, best);
        // The far half can still hold a winner when the splitting plane is
        // closer than the current k-th best, or the heap is not full. Ties on
        // distance must descend too: a smaller index can displace an equal one.
        let plane = delta * delta;
        if best.len() < k || plane <= best[best.len() - 1].0 {
            self.search(query, k, far.0, far.1, depth + 1, best);
        }
    }
}

fn build_recursive(points: &[Vec<f64>], nodes: &mut [usize], depth: usize, dim: usize) {
    if nodes.len() <= 1 {
        return;
    }
    let axis = depth % dim;
    let mid = nodes.len() / 2;
    nodes.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let (left, rest) = nodes.split_at_mut(mid);
    build_recursive(points, left, depth + 1, dim);
    build_recursive(points, &mut rest[1..], depth + 1, dim);
}

/// Majority label among the `k` Euclidean nearest training embeddings. Vote
/// ties resolve to the label of the nearer neighbor.
pub fn knn_classify(query: &RootEmbedding, training: &[RootEmbedding], k: usize) -> Result<String> {
    if training.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    for (index, e) in training.iter().enumerate() {
        if e.label.is_none() {
            return Err(Error::UnlabeledTrainingPoint { index });
        }
    }
    let tree = KdTree::build(training.iter().map(|e| e.vector.clone()).collect())?;
    let neighbors = tree.nearest(query.vector(), k)?;
    let mut counts: Vec<(&str, usize, usize)> = Vec::new();
    for (rank, &idx) in neighbors.iter().enumerate() {
        let label = training[idx].label.as_deref().unwrap();
        match counts.iter_mut().find(|c| c.0 == label) {
            Some(c) => c.1 += 1,
            None => counts.push((label, 1, rank)),
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    Ok(counts[0].0.to_string())
}

/// A clustering of measures: per-point cluster labels, the cluster
/// barycenters, the final objective, and its per-iteration trace.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub barycenters: Vec<DiscreteMeasure>,
    /// Sum of transport objectives from each point to its barycenter.
    pub objective: f64,
    /// Objective after each alternation, nonincreasing.
    pub trace: Vec<f64>,
}

/// K-barycenter clustering under the transport distance.
///
/// Farthest-first seeding from a content-canonical start makes the result
/// deterministic and invariant to input order (up to cluster relabeling).
/// Each alternation assigns points to their transport-nearest barycenter,
/// then updates every barycenter by the free-support fixed point warm-started
/// at its previous value, so the objective never increases. Clusters that
/// come up empty are re-seeded from the point farthest from its assigned
/// barycenter.
pub fn kbarycenter_cluster(
    measures: &[DiscreteMeasure],
    k: usize,
    config: &TransportConfig,
    iterations: usize,
) -> Result<ClusterAssignment> {
    if measures.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if k == 0 || k > measures.len() {
        return Err(Error::BadClusterCount { k, len: measures.len() });
    }
    let p = config.cost_exponent;
    let measures: Vec<DiscreteMeasure> = measures.iter().map(DiscreteMeasure::normalized).collect();

    let distance = |a: &DiscreteMeasure, b: &DiscreteMeasure| -> Result<f64> {
        Ok(exact_ot(a, b, p)?.objective)
    };

    // Farthest-first seeding.
    let mut center_ids = vec![canonical_min(&measures)];
    while center_ids.len() < k {
        let mut far = (f64::NEG_INFINITY, 0usize);
        for (i, m) in measures.iter().enumerate() {
            if center_ids.contains(&i) {
                continue;
            }
            let mut near = f64::INFINITY;
            for &c in &center_ids {
                near = near.min(distance(m, &measures[c])?);
            }
            if near > far.0 {
                far = (near, i);
            }
        }
        center_ids.push(far.1);
    }
    let mut barycenters: Vec<DiscreteMeasure> =
        center_ids.iter().map(|&i| measures[i].clone()).collect();

    let mut labels = vec![0usize; measures.len()];
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        // Assignment phase.
        let mut objective = 0.0;
        let mut point_cost = vec![0.0; measures.len()];
        for (i, m) in measures.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (c, b) in barycenters.iter().enumerate() {
                let d = distance(m, b)?;
                if d < best.0 {
                    best = (d, c);
                }
            }
            labels[i] = best.1;
            point_cost[i] = best.0;
            objective += best.0;
        }
        // Re-seed empty clusters from the worst-served point.
        for c in 0..k {
            if labels.iter().any(|&l| l == c) {
                continue;
            }
            let (worst, _) = point_cost
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            barycenters[c] = measures[worst].clone();
            labels[worst] = c;
            objective -= point_cost[worst];
            point_cost[worst] = 0.0;
        }
        trace.push(objective);
        // Update phase: free-support barycenter per cluster, warm-started at
        // the previous barycenter so the cluster cost cannot increase.
        for c in 0..k {
            let members: Vec<DiscreteMeasure> = measures
                .iter()
                .zip(&labels)
                .filter(|&(_, &l)| l == c)
                .map(|(m, _)| m.clone())
                .collect();
            let lambda = BarycentricCoordinates::uniform(members.len())?;
            let result = barycenter_ot_from(&members, &lambda, config, Some(&barycenters[c]))?;
            barycenters[c] = result.measure;
        }
        if trace.len() >= 2 && trace[trace.len() - 2] - trace[trace.len() - 1] <= config.tolerance
        {
            break;
        }
    }
    // Final assignment against the last barycenter update.
    let mut objective = 0.0;
    for (i, m) in measures.iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (c, b) in barycenters.iter().enumerate() {
            let d = distance(m, b)?;
            if d < best.0 {
                best = (d, c);
            }
        }
        labels[i] = best.1;
        objective += best.0;
    }
    trace.push(objective);
    Ok(ClusterAssignment { labels, barycenters, objective, trace })
}

/// Index of the measure with the smallest canonical content key, independent
/// of input order.
fn canonical_min(measures: &[DiscreteMeasure]) -> usize {
    let key = |m: &DiscreteMeasure| -> Vec<(f64, f64, f64)> {
        let mut order: Vec<usize> = (0..m.len()).collect();
        order.sort_by(|&a, &b| pole_order(&m.atoms()[a], &m.atoms()[b]));
        order
            .into_iter()
            .map(|i| (m.atoms()[i].im, m.atoms()[i].re, m.masses()[i]))
            .collect()
    };
    let mut best = 0;
    let mut best_key = key(&measures[0]);
    for (i, m) in measures.iter().enumerate().skip(1) {
        let k = key(m);
        let less = k
            .iter()
            .zip(&best_key)
            .find_map(|(a, b)| {
                let ord = a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2));
                (ord != std::cmp::Ordering::Equal).then_some(ord)
            })
            .unwrap_or(k.len().cmp(&best_key.len()));
        if less == std::cmp::Ordering::Less {
            best = i;
            best_key = k;
        }
    }
    best
}

/// A principal-component embedding of root vectors.
#[derive(Debug, Clone)]
pub struct PcaEmbedding {
    /// One row per input, `components` columns.
    pub coordinates: Vec<Vec<f64>>,
    /// Fraction of total variance captured by each component, nonincreasing.
    pub explained_variance: Vec<f64>,
    /// Principal directions, one row per component.
    pub directions: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Set when the request exceeded the numerical rank and was truncated.
    pub truncated: bool,
}

impl PcaEmbedding {
    /// Coordinates of an arbitrary vector under the fitted directions.
    pub fn project(&self, vector: &[f64]) -> Result<Vec<f64>> {
        if vector.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                index: 0,
                got: vector.len(),
                expected: self.mean.len(),
            });
        }
        Ok(self
            .directions
            .iter()
            .map(|d| d.iter().zip(vector).zip(&self.mean).map(|((d, v), m)| d * (v - m)).sum())
            .collect())
    }
}

/// Mean-centered projection onto the leading principal directions.
pub fn pca_embed(embeddings: &[RootEmbedding], components: usize) -> Result<PcaEmbedding> {
    if embeddings.len() < 2 {
        return Err(Error::EmptyTrainingSet);
    }
    let dim = embeddings[0].len();
    for (index, e) in embeddings.iter().enumerate() {
        if e.len() != dim {
            return Err(Error::DimensionMismatch { index, got: e.len(), expected: dim });
        }
    }
    if components == 0 || components > dim {
        return Err(Error::BadComponentCount { components, dim });
    }
    let n = embeddings.len();
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e.vector()) {
            *m += v / n as f64;
        }
    }
    let mut centered = DMatrix::zeros(n, dim);
    for (i, e) in embeddings.iter().enumerate() {
        for (j, v) in e.vector().iter().enumerate() {
            centered[(i, j)] = v - mean[j];
        }
    }
    let svd = centered.clone().svd(true, true);
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12 * smax.max(1e-300)).count();
    let keep = components.min(rank.max(1));
    let truncated = keep < components;
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let explained_variance: Vec<f64> = (0..keep)
        .map(|c| {
            let s = svd.singular_values[c];
            if total > 0.0 { s * s / total } else { 0.0 }
        })
        .collect();
    let directions: Vec<Vec<f64>> =
        (0..keep).map(|c| (0..dim).map(|j| vt[(c, j)]).collect()).collect();
    let coordinates: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            directions
                .iter()
                .map(|d| (0..dim).map(|j| centered[(i, j)] * d[j]).sum())
                .collect()
        })
        .collect();
    Ok(PcaEmbedding { coordinates, explained_variance, directions, mean, truncated })
}
