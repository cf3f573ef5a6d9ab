use serde_json::json;

use super::graph::{EdgeRule, GraphEstimate, GraphMethod};
use super::partial::graph_from_rectangle;
use crate::bootstrap::{bootstrap_rectangle, StatisticSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, DataMatrix};

/// Correlation graph: a bootstrap max-norm rectangle over all marginal
/// correlations, with an edge wherever the interval misses `[-epsilon,
/// epsilon]`. Does not need `D < n`.
pub fn correlation_graph(x: &DataMatrix, alpha: f64, epsilon: f64, b: usize, seed: u64) -> Result<GraphEstimate> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    // surface ZeroVariance on the data itself rather than as failed resamples
    linalg::sample_correlations(&linalg::sample_covariance(x))?;
    let rect = bootstrap_rectangle(x, &StatisticSpec::Correlations, alpha, b, seed)?;
    Ok(graph_from_rectangle(
        x.labels().to_vec(),
        &rect,
        rect.center(),
        EdgeRule::ExcludeBand(epsilon),
        GraphMethod::Correlation,
    )?
    .with_meta("epsilon", json!(epsilon))
    .with_meta("B", json!(b))
    .with_meta("seed", json!(seed)))
}
