//! Gaussian simulation models with known covariance, precision and
//! partial-correlation graph.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimators::graph::{EdgeRule, GraphEstimate, GraphMethod, PairInterval};
use crate::linalg::{self, CovMatrix, DataMatrix, PartialCorrMatrix, PrecisionMatrix};
use crate::rng::{substream, Purpose};

fn default_within_corr() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `Omega_jk = a` off the diagonal, unit diagonal.
    Dense { a: f64 },
    /// `X_D = e_D`, `X_j = a X_{j+1} + e_j`.
    Markov { a: f64 },
    /// `X_1 = e_1`, `X_j = a sum_{s<j} X_s + e_j`.
    Sem { a: f64 },
    /// Independent standard Normal features.
    Null,
    /// Equicorrelated blocks of equal size; the last block takes the
    /// remainder.
    Block {
        num_blocks: usize,
        #[serde(default = "default_within_corr")]
        within_corr: f64,
    },
    /// The Markov chain keeping only the couplings `(j, j+1)` for
    /// `j < num_edges`.
    PartialMarkov { num_edges: usize, a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(rename = "D")]
    pub d: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, d: usize) -> Result<Self> {
        let spec = Self { kind, d };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d < 2 {
            return Err(Error::InvalidArgument(format!("models need D >= 2, got {d}")));
        }
        let finite = |a: f64| {
            if a.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("coefficient must be finite, got {a}")))
            }
        };
        match self.kind {
            ModelKind::Dense { a } => {
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::NotPositiveDefinite(format!(
                        "dense model needs 0 < a < 1 with a unit diagonal, got a = {a}"
                    )));
                }
            }
            ModelKind::Markov { a } | ModelKind::Sem { a } => finite(a)?,
            ModelKind::Null => {}
            ModelKind::Block {
                num_blocks,
                within_corr,
            } => {
                if num_blocks == 0 || num_blocks > d {
                    return Err(Error::InvalidArgument(format!(
                        "num_blocks must lie in 1..={d}, got {num_blocks}"
                    )));
                }
                finite(within_corr)?;
            }
            ModelKind::PartialMarkov { num_edges, a } => {
                if num_edges >= d {
                    return Err(Error::InvalidArgument(format!(
                        "a chain on {d} features has at most {} edges, got {num_edges}",
                        d - 1
                    )));
                }
                finite(a)?;
            }
        }
        Ok(())
    }

    /// Sizes of the blocks of the block model.
    fn block_sizes(&self, num_blocks: usize) -> Vec<usize> {
        let base = self.d / num_blocks;
        let mut sizes = vec![base; num_blocks];
        sizes[num_blocks - 1] += self.d - base * num_blocks;
        sizes
    }

    /// Coefficient matrix `A` of a recursive model `X = A X + e`, if any.
    fn recursion(&self) -> Option<DMatrix<f64>> {
        let d = self.d;
        match self.kind {
            ModelKind::Markov { a } => Some(DMatrix::from_fn(d, d, |i, j| if j == i + 1 { a } else { 0.0 })),
            ModelKind::PartialMarkov { num_edges, a } => Some(DMatrix::from_fn(d, d, |i, j| {
                if j == i + 1 && i < num_edges {
                    a
                } else {
                    0.0
                }
            })),
            ModelKind::Sem { a } => Some(DMatrix::from_fn(d, d, |i, j| if j < i { a } else { 0.0 })),
            _ => None,
        }
    }

    /// Population covariance and precision.
    fn moments(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.validate()?;
        let d = self.d;
        let identity = DMatrix::<f64>::identity(d, d);
        if let Some(a) = self.recursion() {
            let m = &identity - a;
            let omega = m.tr_mul(&m);
            let m_inv = m
                .try_inverse()
                .ok_or_else(|| Error::NotPositiveDefinite("recursion is not invertible".into()))?;
            let sigma = &m_inv * m_inv.transpose();
            return Ok((sigma, omega));
        }
        let (sigma, omega) = match self.kind {
            ModelKind::Null => (identity.clone(), identity),
            ModelKind::Dense { a } => {
                let omega = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { a });
                let sigma = omega
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::NotPositiveDefinite(format!("dense model with a = {a}")))?
                    .inverse();
                (sigma, omega)
            }
            ModelKind::Block {
                num_blocks,
                within_corr,
            } => {
                let mut block_of = Vec::with_capacity(d);
                for (b, size) in self.block_sizes(num_blocks).into_iter().enumerate() {
                    block_of.extend(std::iter::repeat_n(b, size));
                }
                let sigma = DMatrix::from_fn(d, d, |i, j| {
                    if i == j {
                        1.0
                    } else if block_of[i] == block_of[j] {
                        within_corr
                    } else {
                        0.0
                    }
                });
                let omega = sigma
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::NotPositiveDefinite(format!("block model with within_corr = {within_corr}")))?
                    .inverse();
                (sigma, omega)
            }
            _ => unreachable!("recursive models handled above"),
        };
        Ok((sigma, omega))
    }

    /// Modelling choices not fixed by the model definitions, recorded with
    /// experiment output.
    pub fn conventions(&self) -> serde_json::Value {
        json!({
            "innovations": "standard_normal",
            "dense_diagonal": 1.0,
            "block_within_corr_default": default_within_corr(),
        })
    }
}

/// Population quantities of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub sigma: CovMatrix,
    pub omega: PrecisionMatrix,
    pub theta: PartialCorrMatrix,
    /// Edge wherever `|theta_jk| > 1e-12`.
    pub graph: GraphEstimate,
}

pub const TRUE_EDGE_TOL: f64 = 1e-12;

pub fn ground_truth(spec: &ModelSpec) -> Result<GroundTruth> {
    let (sigma, omega) = spec.moments()?;
    let sigma = CovMatrix::new(sigma)?;
    let min_eig = sigma.values().clone().symmetric_eigenvalues().min();
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {min_eig:e}")));
    }
    let omega = linalg::precision_from_parts((&omega + omega.transpose()) * 0.5, min_eig);
    let theta = linalg::partial_correlations(&omega)?;
    let per_pair = theta
        .upper()
        .into_iter()
        .map(|t| PairInterval {
            estimate: t,
            ci_lo: t,
            ci_hi: t,
        })
        .collect();
    let labels = (1..=spec.d).map(|i| i.to_string()).collect();
    let graph = GraphEstimate::from_intervals(
        labels,
        per_pair,
        EdgeRule::ExcludeBand(TRUE_EDGE_TOL),
        0.0,
        GraphMethod::Truth,
        0,
    )?
    .with_meta("model", serde_json::to_value(spec).expect("model serializes"));
    Ok(GroundTruth {
        sigma,
        omega,
        theta,
        graph,
    })
}

/// Draws `n` observations. Innovations are standard Normal, generated row by
/// row from the seed's model-sampling stream.
pub fn sample(spec: &ModelSpec, n: usize, seed: u64) -> Result<DataMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    spec.validate()?;
    let d = spec.d;
    let mut rng = substream(seed, Purpose::ModelSample, 0);
    let mut z = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let x = match spec.kind {
        ModelKind::Null => z,
        ModelKind::Markov { a } | ModelKind::PartialMarkov { a, .. } => {
            let couples = |j: usize| match spec.kind {
                ModelKind::PartialMarkov { num_edges, .. } => j < num_edges,
                _ => true,
            };
            for i in 0..n {
                for j in (0..d - 1).rev() {
                    if couples(j) {
                        z[(i, j)] += a * z[(i, j + 1)];
                    }
                }
            }
            z
        }
        ModelKind::Sem { a } => {
            for i in 0..n {
                let mut running = 0.0;
                for j in 0..d {
                    z[(i, j)] += a * running;
                    running += z[(i, j)];
                }
            }
            z
        }
        ModelKind::Dense { .. } | ModelKind::Block { .. } => {
            let (sigma, _) = spec.moments()?;
            let eig = sigma.symmetric_eigen();
            let root_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            let root = &eig.eigenvectors * DMatrix::from_diagonal(&root_vals) * eig.eigenvectors.transpose();
            // rows are z_i^T, so X = Z Sigma^{1/2}
            z * root
        }
    };
    DataMatrix::new(x)
}
