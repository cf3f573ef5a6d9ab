use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::linalg::{num_pairs, pair_index, pairs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMethod {
    Delta,
    Bootstrap,
    SuperAccurate,
    Correlation,
    Cluster,
    Restricted,
    FiniteSample,
    /// A population graph from a known model.
    Truth,
}

/// When an interval counts as evidence for an edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRule {
    /// The interval excludes 0.
    ExcludeZero,
    /// The interval is disjoint from `[-eps, eps]`.
    ExcludeBand(f64),
}

impl EdgeRule {
    pub fn admits(self, iv: &PairInterval) -> bool {
        let eps = match self {
            EdgeRule::ExcludeZero => 0.0,
            EdgeRule::ExcludeBand(e) => e,
        };
        iv.ci_lo > eps || iv.ci_hi < -eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairInterval {
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// An estimated (or true) undirected graph with an interval for every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEstimate {
    node_labels: Vec<String>,
    /// Intervals for all pairs `j < k` in [`pairs`] order.
    per_pair: Vec<PairInterval>,
    edges: Vec<(usize, usize)>,
    rule: EdgeRule,
    pub alpha: f64,
    pub method: GraphMethod,
    pub n: usize,
    pub meta: Map<String, Value>,
}

impl GraphEstimate {
    /// Builds the graph, placing an edge on every pair whose interval passes
    /// `rule`.
    pub fn from_intervals(
        node_labels: Vec<String>,
        per_pair: Vec<PairInterval>,
        rule: EdgeRule,
        alpha: f64,
        method: GraphMethod,
        n: usize,
    ) -> Result<Self> {
        let d = node_labels.len();
        if per_pair.len() != num_pairs(d) {
            return Err(Error::InvalidArgument(format!(
                "{} intervals for {} nodes (expected {})",
                per_pair.len(),
                d,
                num_pairs(d)
            )));
        }
        let edges = pairs(d)
            .zip(&per_pair)
            .filter(|(_, iv)| rule.admits(iv))
            .map(|(p, _)| p)
            .collect();
        Ok(Self {
            node_labels,
            per_pair,
            edges,
            rule,
            alpha,
            method,
            n,
            meta: Map::new(),
        })
    }

    pub fn node_labels(&self) -> &[String] {
        &self.node_labels
    }

    pub fn num_nodes(&self) -> usize {
        self.node_labels.len()
    }

    /// Edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let p = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search(&p).is_ok()
    }

    pub fn per_pair(&self) -> &[PairInterval] {
        &self.per_pair
    }

    pub fn interval(&self, i: usize, j: usize) -> PairInterval {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.per_pair[pair_index(self.num_nodes(), a, b)]
    }

    pub fn rule(&self) -> EdgeRule {
        self.rule
    }

    /// True when the edge set is exactly the set of pairs passing the rule.
    pub fn edges_consistent(&self) -> bool {
        let d = self.num_nodes();
        pairs(d)
            .zip(&self.per_pair)
            .all(|((i, j), iv)| self.rule.admits(iv) == self.has_edge(i, j))
    }

    pub fn with_meta(mut self, key: &str, value: Value) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }

    pub fn to_export(&self) -> ExportedGraph {
        ExportedGraph {
            nodes: self.node_labels.clone(),
            alpha: self.alpha,
            method: self.method,
            n: self.n,
            edges: self
                .edges
                .iter()
                .map(|&(i, j)| {
                    let iv = self.interval(i, j);
                    EdgeRecord {
                        i,
                        j,
                        estimate: iv.estimate,
                        ci_lo: iv.ci_lo,
                        ci_hi: iv.ci_hi,
                    }
                })
                .collect(),
            meta: self.meta.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// The JSON form of a graph: nodes, metadata, and the emitted edges with
/// their intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedGraph {
    pub nodes: Vec<String>,
    pub alpha: f64,
    pub method: GraphMethod,
    pub n: usize,
    pub edges: Vec<EdgeRecord>,
    pub meta: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuaranteeCheck {
    pub false_edges: usize,
    pub missed_edges: usize,
    pub any_false: bool,
}

/// Compares an estimate against the true graph: false edges are in
/// `g_hat` but not `g_true`, missed edges the reverse.
pub fn graph_guarantee_check(g_hat: &GraphEstimate, g_true: &GraphEstimate) -> Result<GuaranteeCheck> {
    if g_hat.num_nodes() != g_true.num_nodes() {
        return Err(Error::NodeMismatch {
            left: g_hat.num_nodes(),
            right: g_true.num_nodes(),
        });
    }
    let false_edges = g_hat.edges().iter().filter(|&&(i, j)| !g_true.has_edge(i, j)).count();
    let missed_edges = g_true.edges().iter().filter(|&&(i, j)| !g_hat.has_edge(i, j)).count();
    Ok(GuaranteeCheck {
        false_edges,
        missed_edges,
        any_false: false_edges > 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(d: usize) -> Vec<String> {
        (1..=d).map(|i| i.to_string()).collect()
    }

    fn graph(d: usize, edge_pairs: &[(usize, usize)]) -> GraphEstimate {
        let per_pair = pairs(d)
            .map(|p| {
                let v = if edge_pairs.contains(&p) { 0.5 } else { 0.0 };
                PairInterval {
                    estimate: v,
                    ci_lo: v - 0.1,
                    ci_hi: v + 0.1,
                }
            })
            .collect();
        GraphEstimate::from_intervals(labels(d), per_pair, EdgeRule::ExcludeZero, 0.1, GraphMethod::Delta, 10).unwrap()
    }

    #[test]
    fn edge_rules() {
        let iv = PairInterval {
            estimate: 0.3,
            ci_lo: 0.1,
            ci_hi: 0.5,
        };
        assert!(EdgeRule::ExcludeZero.admits(&iv));
        assert!(!EdgeRule::ExcludeBand(0.1).admits(&iv));
        assert!(EdgeRule::ExcludeBand(0.05).admits(&iv));
        let neg = PairInterval {
            estimate: -0.3,
            ci_lo: -0.5,
            ci_hi: -0.2,
        };
        assert!(EdgeRule::ExcludeBand(0.1).admits(&neg));
        let straddle = PairInterval {
            estimate: 0.0,
            ci_lo: -0.1,
            ci_hi: 0.1,
        };
        assert!(!EdgeRule::ExcludeZero.admits(&straddle));
    }

    #[test]
    fn edges_follow_intervals() {
        let g = graph(4, &[(0, 2), (1, 3)]);
        assert_eq!(g.edges(), &[(0, 2), (1, 3)]);
        assert!(g.has_edge(2, 0));
        assert!(g.edges_consistent());
        assert_eq!(g.interval(3, 1).estimate, 0.5);
    }

    #[test]
    fn guarantee_check_cases() {
        let truth = graph(3, &[(0, 1)]);
        let empty = graph(3, &[]);
        let c = graph_guarantee_check(&empty, &truth).unwrap();
        assert_eq!((c.false_edges, c.missed_edges, c.any_false), (0, 1, false));
        let c = graph_guarantee_check(&truth, &truth).unwrap();
        assert_eq!((c.false_edges, c.missed_edges), (0, 0));
        let extra = graph(3, &[(0, 1), (1, 2)]);
        let c = graph_guarantee_check(&extra, &truth).unwrap();
        assert_eq!((c.false_edges, c.any_false), (1, true));
        assert_eq!(
            graph_guarantee_check(&graph(4, &[]), &truth).unwrap_err(),
            Error::NodeMismatch { left: 4, right: 3 }
        );
    }

    #[test]
    fn interval_count_is_checked() {
        assert!(
            GraphEstimate::from_intervals(labels(3), vec![], EdgeRule::ExcludeZero, 0.1, GraphMethod::Delta, 5)
                .is_err()
        );
    }
}
