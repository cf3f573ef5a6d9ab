use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::correlation::correlation_graph;
use super::graph::GraphEstimate;
use super::partial::{partial_corr_graph, PartialMethod};
use super::EstimateOptions;
use crate::error::{Error, Result};
use crate::linalg::{covariance_of, DataMatrix};
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// `1 - |r_ij|`.
    #[default]
    OneMinusAbsCorr,
    /// Euclidean distance between standardized columns.
    EuclideanOnStandardized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Prototype features in selection order; cluster `c` is led by
    /// `prototypes[c]`.
    pub prototypes: Vec<usize>,
    /// Cluster index of every feature.
    pub cluster_of: Vec<usize>,
    pub distance_kind: DistanceKind,
}

impl ClusterAssignment {
    pub fn num_clusters(&self) -> usize {
        self.prototypes.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.cluster_of.len())
            .filter(|&f| self.cluster_of[f] == cluster)
            .collect()
    }
}

/// Pairwise feature distances. A constant column has no defined
/// correlation; it is treated as uncorrelated with everything.
pub fn distance_matrix(x: &DataMatrix, kind: DistanceKind) -> DMatrix<f64> {
    let d = x.dim();
    let cov = covariance_of(x.values());
    let inv_sd: Vec<f64> = (0..d)
        .map(|j| {
            if cov[(j, j)] > 0.0 {
                1.0 / cov[(j, j)].sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let corr = |i: usize, j: usize| {
        if i == j {
            1.0
        } else {
            (cov[(i, j)] * inv_sd[i] * inv_sd[j]).clamp(-1.0, 1.0)
        }
    };
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            return 0.0;
        }
        match kind {
            DistanceKind::OneMinusAbsCorr => 1.0 - corr(i, j).abs(),
            DistanceKind::EuclideanOnStandardized => {
                // ||z_i - z_j||^2 = n (v_i + v_j - 2 r_ij) with v = 1 for
                // non-constant standardized columns, 0 otherwise
                let v = |f: usize| if inv_sd[f] > 0.0 { 1.0 } else { 0.0 };
                let r = if inv_sd[i] > 0.0 && inv_sd[j] > 0.0 {
                    corr(i, j)
                } else {
                    0.0
                };
                (x.n() as f64 * (v(i) + v(j) - 2.0 * r)).max(0.0).sqrt()
            }
        }
    })
}

/// Farthest-point traversal from `first`, then nearest-prototype assignment.
/// Ties go to the smallest feature index when choosing prototypes and to the
/// earliest prototype when assigning.
pub fn l_centers_from_distances(dist: &DMatrix<f64>, l: usize, first: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let d = dist.nrows();
    if l == 0 || l > d {
        return Err(Error::InvalidArgument(format!("L must lie in 1..={d}, got {l}")));
    }
    if first >= d {
        return Err(Error::InvalidArgument(format!("first prototype {first} out of range")));
    }
    let mut prototypes = vec![first];
    let mut chosen = vec![false; d];
    chosen[first] = true;
    let mut min_dist: Vec<f64> = (0..d).map(|j| dist[(first, j)]).collect();
    while prototypes.len() < l {
        let mut best: Option<usize> = None;
        for j in (0..d).filter(|&j| !chosen[j]) {
            if best.is_none_or(|b| min_dist[j] > min_dist[b]) {
                best = Some(j);
            }
        }
        let next = best.expect("fewer prototypes than features");
        prototypes.push(next);
        chosen[next] = true;
        for j in 0..d {
            min_dist[j] = min_dist[j].min(dist[(next, j)]);
        }
    }
    let cluster_of = (0..d)
        .map(|j| {
            if let Some(c) = prototypes.iter().position(|&p| p == j) {
                return c;
            }
            let mut best = 0;
            for c in 1..prototypes.len() {
                if dist[(prototypes[c], j)] < dist[(prototypes[best], j)] {
                    best = c;
                }
            }
            best
        })
        .collect();
    Ok((prototypes, cluster_of))
}

/// L-centers clustering of the features of `x`: a seeded random first
/// prototype, then greedy farthest-point selection.
pub fn l_centers(x: &DataMatrix, l: usize, kind: DistanceKind, seed: u64) -> Result<ClusterAssignment> {
    let d = x.dim();
    if l == 0 || l > d {
        return Err(Error::InvalidArgument(format!("L must lie in 1..={d}, got {l}")));
    }
    let first = substream(seed, Purpose::Prototypes, 0).random_range(0..d);
    let (prototypes, cluster_of) = l_centers_from_distances(&distance_matrix(x, kind), l, first)?;
    Ok(ClusterAssignment {
        prototypes,
        cluster_of,
        distance_kind: kind,
    })
}

/// Averages the raw features within each cluster; `assignment[f]` is the
/// cluster of feature `f`. Every cluster index below the maximum must be
/// used.
pub fn average_clusters(x: &DataMatrix, assignment: &[usize]) -> Result<DataMatrix> {
    DataMatrix::new(average_columns(x.values(), assignment)?)
}

pub(crate) fn average_columns(v: &DMatrix<f64>, assignment: &[usize]) -> Result<DMatrix<f64>> {
    if assignment.len() != v.ncols() {
        return Err(Error::InvalidArgument(format!(
            "assignment covers {} features, data has {}",
            assignment.len(),
            v.ncols()
        )));
    }
    let clusters = assignment.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; clusters];
    for &c in assignment {
        sizes[c] += 1;
    }
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!("cluster {c} is empty")));
    }
    let n = v.nrows();
    let mut out = DMatrix::zeros(n, clusters);
    for (f, &c) in assignment.iter().enumerate() {
        let w = 1.0 / sizes[c] as f64;
        for i in 0..n {
            out[(i, c)] += w * v[(i, f)];
        }
    }
    Ok(out)
}

/// Result of [`cluster_graph_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGraph {
    pub graph: GraphEstimate,
    pub assignment: ClusterAssignment,
    /// Rows used for clustering; the rest were used for inference.
    pub selection_rows: Vec<usize>,
    pub inference_rows: Vec<usize>,
}

/// Cluster graph with data splitting: a seeded permutation sends the first
/// `floor(n/2)` rows to clustering and the rest to inference on the
/// cluster averages. Requires `2 <= L < floor(n/2)`.
pub fn cluster_graph_detailed(
    x: &DataMatrix,
    l: usize,
    alpha: f64,
    method: PartialMethod,
    opts: &EstimateOptions,
) -> Result<ClusterGraph> {
    let n = x.n();
    let half = n / 2;
    if l >= half {
        return Err(Error::ClusterTooLarge { clusters: l, half });
    }
    if l < 2 || l > x.dim() {
        return Err(Error::InvalidArgument(format!(
            "L must lie in 2..={}, got {l}",
            x.dim()
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(opts.seed, Purpose::DataSplit, 0));
    let (first, second) = perm.split_at(half);
    let (selection_rows, inference_rows) = (first.to_vec(), second.to_vec());

    let assignment = l_centers(&x.select_rows(&selection_rows), l, opts.distance_kind, opts.seed)?;
    let inference = x.select_rows(&inference_rows);
    let labels = assignment.prototypes.iter().map(|&p| x.labels()[p].clone()).collect();
    let averaged = DataMatrix::with_labels(
        average_clusters(&inference, &assignment.cluster_of)?.values().clone(),
        labels,
    )?;

    let mut graph = partial_corr_graph(&averaged, alpha, method, opts)?;
    graph.method = super::graph::GraphMethod::Cluster;
    graph.meta.insert("inner_method".into(), json!(method));
    graph.meta.insert("L".into(), json!(l));
    graph.meta.insert("seed".into(), json!(opts.seed));
    graph.meta.insert(
        "clusters".into(),
        json!(assignment
            .prototypes
            .iter()
            .enumerate()
            .map(|(c, _)| assignment
                .members(c)
                .iter()
                .map(|&f| x.labels()[f].clone())
                .collect::<Vec<_>>())
            .collect::<Vec<_>>()),
    );
    graph.meta.insert("distance".into(), json!(opts.distance_kind));

    if opts.cluster_subgraphs {
        let mut subgraphs = Vec::new();
        for c in 0..assignment.num_clusters() {
            let members = assignment.members(c);
            if members.len() < 2 {
                continue;
            }
            let sub = inference.select_columns(&members)?;
            // each subgraph spends its own alpha; there is no joint guarantee
            let g = correlation_graph(&sub, alpha, opts.epsilon, opts.b, opts.seed)?;
            subgraphs.push(json!({
                "cluster": x.labels()[assignment.prototypes[c]],
                "graph": serde_json::to_value(g.to_export()).expect("graph serializes"),
            }));
        }
        graph.meta.insert("cluster_subgraphs".into(), json!(subgraphs));
    }
    Ok(ClusterGraph {
        graph,
        assignment,
        selection_rows,
        inference_rows,
    })
}

pub fn cluster_graph(
    x: &DataMatrix,
    l: usize,
    alpha: f64,
    method: PartialMethod,
    opts: &EstimateOptions,
) -> Result<GraphEstimate> {
    Ok(cluster_graph_detailed(x, l, alpha, method, opts)?.graph)
}
