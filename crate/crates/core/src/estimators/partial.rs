use serde::{Deserialize, Serialize};
use serde_json::json;

use super::graph::{EdgeRule, GraphEstimate, GraphMethod, PairInterval};
use super::EstimateOptions;
use crate::asymptotics::{
    delta_rectangle, gradient_rows, standard_errors, t_empirical, t_finite_sample_literal, t_gaussian_plugin,
    TEstimatorKind,
};
use crate::bootstrap::{bootstrap_rectangle, super_accurate_intervals, StatisticSpec};
use crate::error::Result;
use crate::linalg::{self, DataMatrix};
use crate::rectangle::ConfidenceRectangle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartialMethod {
    #[default]
    Delta,
    Bootstrap,
    SuperAccurate,
}

pub(crate) fn graph_from_rectangle(
    labels: Vec<String>,
    rect: &ConfidenceRectangle,
    estimates: &[f64],
    rule: EdgeRule,
    method: GraphMethod,
) -> Result<GraphEstimate> {
    let per_pair = (0..rect.len())
        .map(|i| {
            let (ci_lo, ci_hi) = rect.interval(i);
            PairInterval {
                estimate: estimates[i],
                ci_lo,
                ci_hi,
            }
        })
        .collect();
    GraphEstimate::from_intervals(labels, per_pair, rule, rect.alpha(), method, rect.n())
}

/// Delta-method rectangle for the partial correlations of `x`.
pub fn delta_partial_rectangle(x: &DataMatrix, alpha: f64, opts: &EstimateOptions) -> Result<ConfidenceRectangle> {
    let s = linalg::sample_covariance(x);
    let omega = linalg::precision(&s)?;
    let theta = linalg::partial_correlations(&omega)?;
    let rows = gradient_rows(&omega, &theta)?;
    let t = match opts.t_estimator {
        TEstimatorKind::GaussianPlugin => t_gaussian_plugin(&s),
        TEstimatorKind::Empirical => t_empirical(x)?,
        TEstimatorKind::FiniteSampleLiteral => t_finite_sample_literal(&s, x.n())?,
    };
    let e = standard_errors(&rows, &t)?;
    delta_rectangle(&theta, &e, alpha, x.n(), opts.multiplicity)
}

/// Partial-correlation graph: an edge wherever the simultaneous interval
/// for `theta_jk` excludes 0. Needs an invertible sample covariance.
pub fn partial_corr_graph(
    x: &DataMatrix,
    alpha: f64,
    method: PartialMethod,
    opts: &EstimateOptions,
) -> Result<GraphEstimate> {
    let labels = x.labels().to_vec();
    let graph = match method {
        PartialMethod::Delta => {
            let rect = delta_partial_rectangle(x, alpha, opts)?;
            graph_from_rectangle(labels, &rect, rect.center(), EdgeRule::ExcludeZero, GraphMethod::Delta)?
                .with_meta("multiplicity", json!(opts.multiplicity))
                .with_meta("t_estimator", json!(opts.t_estimator))
        }
        PartialMethod::Bootstrap => {
            // fail fast with the precondition error rather than after B redraws
            linalg::precision(&linalg::sample_covariance(x))?;
            let rect = bootstrap_rectangle(x, &StatisticSpec::PartialCorrelations, alpha, opts.b, opts.seed)?;
            graph_from_rectangle(
                labels,
                &rect,
                rect.center(),
                EdgeRule::ExcludeZero,
                GraphMethod::Bootstrap,
            )?
            .with_meta("B", json!(opts.b))
            .with_meta("seed", json!(opts.seed))
        }
        PartialMethod::SuperAccurate => {
            linalg::precision(&linalg::sample_covariance(x))?;
            let sa = super_accurate_intervals(x, alpha, opts.b, opts.uniform_draws, opts.super_variant, opts.seed)?;
            let per_pair = sa
                .intervals
                .iter()
                .zip(&sa.theta_hat)
                .map(|(&(ci_lo, ci_hi), &estimate)| PairInterval { estimate, ci_lo, ci_hi })
                .collect();
            GraphEstimate::from_intervals(
                labels,
                per_pair,
                EdgeRule::ExcludeZero,
                alpha,
                GraphMethod::SuperAccurate,
                x.n(),
            )?
            .with_meta("B", json!(opts.b))
            .with_meta("seed", json!(opts.seed))
            .with_meta("variant", json!(opts.super_variant))
            .with_meta("retained", json!(sa.retained))
            .with_meta("rejected", json!(sa.rejected))
        }
    };
    Ok(graph)
}
