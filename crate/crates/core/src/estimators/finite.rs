use serde::{Deserialize, Serialize};
use serde_json::json;

use super::graph::{EdgeRule, GraphEstimate, GraphMethod, PairInterval};
use crate::error::{Error, Result};
use crate::linalg::{self, DataMatrix, PartialCorrMatrix};

/// The finite-sample band `Theta_hat +/- Delta_n J`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSampleBand {
    pub theta_hat: PartialCorrMatrix,
    pub delta_n: f64,
    pub epsilon_n: f64,
    pub c_alpha: f64,
    pub lambda_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteSampleWidth {
    pub epsilon_n: f64,
    pub delta_n: f64,
}

/// `eps_n = (c/lambda^2) sqrt(D/n) / (1 - (c/lambda) sqrt(D/n))` and
/// `Delta_n = 2 eps_n / (1 - eps_n)`. Requires `lambda > c sqrt(D/n)` and
/// `eps_n < 1`.
pub fn finite_sample_width(lambda_hat: f64, c_alpha: f64, d: usize, n: usize) -> Result<FiniteSampleWidth> {
    if !(c_alpha >= 0.0) || !c_alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "c_alpha must be a finite non-negative number, got {c_alpha}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let root = (d as f64 / n as f64).sqrt();
    let threshold = c_alpha * root;
    if !(lambda_hat > threshold) {
        return Err(Error::BandUndefined { lambda_hat, threshold });
    }
    let epsilon_n = (c_alpha / (lambda_hat * lambda_hat)) * root / (1.0 - (c_alpha / lambda_hat) * root);
    if !(epsilon_n < 1.0) {
        return Err(Error::BandUndefined { lambda_hat, threshold });
    }
    Ok(FiniteSampleWidth {
        epsilon_n,
        delta_n: 2.0 * epsilon_n / (1.0 - epsilon_n),
    })
}

/// Finite-sample graph: an edge wherever `[theta_jk - Delta_n, theta_jk +
/// Delta_n]` excludes 0. `c_alpha` has no default; the valid constant is
/// only known to exist.
pub fn finite_sample_graph(x: &DataMatrix, alpha: f64, c_alpha: f64) -> Result<(FiniteSampleBand, GraphEstimate)> {
    let s = linalg::sample_covariance(x);
    let lambda_hat = s.values().clone().symmetric_eigenvalues().min();
    let width = finite_sample_width(lambda_hat, c_alpha, x.dim(), x.n())?;
    let omega = linalg::precision(&s)?;
    let theta_hat = linalg::partial_correlations(&omega)?;
    let per_pair = theta_hat
        .upper()
        .into_iter()
        .map(|estimate| PairInterval {
            estimate,
            ci_lo: estimate - width.delta_n,
            ci_hi: estimate + width.delta_n,
        })
        .collect();
    let graph = GraphEstimate::from_intervals(
        x.labels().to_vec(),
        per_pair,
        EdgeRule::ExcludeZero,
        alpha,
        GraphMethod::FiniteSample,
        x.n(),
    )?
    .with_meta("c_alpha", json!(c_alpha))
    .with_meta("lambda_hat", json!(lambda_hat))
    .with_meta("epsilon_n", json!(width.epsilon_n))
    .with_meta("delta_n", json!(width.delta_n));
    Ok((
        FiniteSampleBand {
            theta_hat,
            delta_n: width.delta_n,
            epsilon_n: width.epsilon_n,
            c_alpha,
            lambda_hat,
        },
        graph,
    ))
}
