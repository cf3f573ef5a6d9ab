//! Nonparametric bootstrap: max-norm quantile rectangles for a vector
//! statistic, and the super-accurate variant that maps a covariance
//! rectangle through the partial-correlation map.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::cluster::average_columns;
use crate::estimators::restricted::restricted_statistics;
use crate::linalg::{self, covariance_of, CovMatrix, DataMatrix};
use crate::rectangle::{ConfidenceRectangle, HalfWidth, RectangleMethod};
use crate::rng::{substream, Purpose, StreamRng};

pub const DEFAULT_REPLICATES: usize = 1000;
pub const MIN_REPLICATES: usize = 100;

/// Which vector statistic the bootstrap is run on. Every statistic is a
/// deterministic function of the data matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StatisticSpec {
    /// Off-diagonal partial correlations, in [`linalg::pairs`] order.
    PartialCorrelations,
    /// Off-diagonal marginal correlations.
    Correlations,
    /// `max_{|S| <= l} |theta_jk.S|` for every pair.
    RestrictedPartial { l: usize },
    /// Upper triangle of the covariance including the diagonal, row by row.
    CovarianceEntries,
    /// Partial correlations of within-cluster feature averages;
    /// `assignment[feature]` is the cluster index.
    ClusterPartial { assignment: Vec<usize> },
}

impl StatisticSpec {
    pub fn extract(&self, x: &DataMatrix) -> Result<Vec<f64>> {
        self.extract_values(x.values())
    }

    fn extract_values(&self, v: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            StatisticSpec::ClusterPartial { assignment } => {
                StatisticSpec::PartialCorrelations.extract_values(&average_columns(v, assignment)?)
            }
            StatisticSpec::Correlations => Ok(linalg::upper_triangle(&linalg::correlations_of(&covariance_of(v))?)),
            _ => self.extract_from_cov(&CovMatrix::new(covariance_of(v))?),
        }
    }

    fn extract_from_cov(&self, s: &CovMatrix) -> Result<Vec<f64>> {
        match self {
            StatisticSpec::PartialCorrelations => {
                let omega = linalg::precision(s)?;
                Ok(linalg::partial_correlations(&omega)?.upper())
            }
            StatisticSpec::Correlations => Ok(linalg::upper_triangle(&linalg::sample_correlations(s)?)),
            StatisticSpec::RestrictedPartial { l } => restricted_statistics(s, *l),
            StatisticSpec::CovarianceEntries => {
                let d = s.dim();
                let v = s.values();
                Ok((0..d).flat_map(|j| (j..d).map(move |k| v[(j, k)])).collect())
            }
            StatisticSpec::ClusterPartial { .. } => unreachable!("handled on the data matrix"),
        }
    }
}

/// Draws `n` rows uniformly with replacement.
pub fn resample(x: &DataMatrix, rng: &mut StreamRng) -> DataMatrix {
    x.select_rows(&resample_rows(x.n(), rng))
}

fn resample_rows(n: usize, rng: &mut StreamRng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Values of a resample, without copying labels.
fn resample_values(x: &DataMatrix, rng: &mut StreamRng) -> DMatrix<f64> {
    let rows = resample_rows(x.n(), rng);
    let v = x.values();
    DMatrix::from_fn(rows.len(), x.dim(), |i, j| v[(rows[i], j)])
}

/// Runs `b` replicates, mapping each successful statistic through `map`.
/// Replicate `i` draws from its own substream and redraws on extractor
/// failure. The whole run fails once the pooled number of failures exceeds
/// `9b` (at most `10b` attempts); that outcome does not depend on scheduling
/// because each replicate's failure sequence is fixed by its stream.
fn replicate_map<T, F>(x: &DataMatrix, spec: &StatisticSpec, b: usize, seed: u64, map: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Vec<f64>) -> T + Sync,
{
    let failure_cap = 9 * b;
    let failures = AtomicUsize::new(0);
    let out: Vec<Option<T>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Purpose::Bootstrap, i as u64);
            loop {
                if failures.load(Ordering::Relaxed) > failure_cap {
                    return None;
                }
                match spec.extract_values(&resample_values(x, &mut rng)) {
                    Ok(stat) => return Some(map(stat)),
                    Err(_) => {
                        failures.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
        })
        .collect();
    if failures.load(Ordering::Relaxed) > failure_cap {
        return Err(Error::TooManyDegenerateResamples {
            attempts: 10 * b,
            failures: failure_cap + 1,
        });
    }
    Ok(out.into_iter().map(|v| v.expect("replicate finished")).collect())
}

fn check_replicates(b: usize) -> Result<()> {
    if b < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_REPLICATES} bootstrap replicates, got {b}"
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// The `ceil((1 - alpha) B)`-th smallest value of `sorted`.
pub fn order_statistic_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let b = sorted.len();
    let k = (((1.0 - alpha) * b as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(b) - 1]
}

/// Sorted bootstrap draws of `sqrt(n) ||stat* - stat||_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDistribution {
    pub center: Vec<f64>,
    pub sorted_distances: Vec<f64>,
    pub n: usize,
}

impl BootstrapDistribution {
    pub fn quantile(&self, alpha: f64) -> f64 {
        order_statistic_quantile(&self.sorted_distances, alpha)
    }
}

pub fn bootstrap_distribution(
    x: &DataMatrix,
    spec: &StatisticSpec,
    b: usize,
    seed: u64,
) -> Result<BootstrapDistribution> {
    check_replicates(b)?;
    let center = spec.extract(x)?;
    let root_n = (x.n() as f64).sqrt();
    let mut sorted_distances = replicate_map(x, spec, b, seed, |stat| root_n * max_abs_diff(&stat, &center))?;
    sorted_distances.sort_by(f64::total_cmp);
    Ok(BootstrapDistribution {
        center,
        sorted_distances,
        n: x.n(),
    })
}

/// `Z_alpha`: the `ceil((1 - alpha) B)`-th order statistic of
/// `sqrt(n) ||stat*_b - stat||_max`.
pub fn bootstrap_max_quantile(x: &DataMatrix, spec: &StatisticSpec, b: usize, alpha: f64, seed: u64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(bootstrap_distribution(x, spec, b, seed)?.quantile(alpha))
}

/// `stat(X) +/- Z_alpha / sqrt(n)` in every coordinate.
pub fn bootstrap_rectangle(
    x: &DataMatrix,
    spec: &StatisticSpec,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<ConfidenceRectangle> {
    check_alpha(alpha)?;
    let dist = bootstrap_distribution(x, spec, b, seed)?;
    let width = dist.quantile(alpha) / (x.n() as f64).sqrt();
    ConfidenceRectangle::new(
        dist.center,
        HalfWidth::Uniform(width),
        alpha,
        RectangleMethod::Bootstrap,
        x.n(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SuperVariant {
    /// Keep the bootstrap covariance replicates that fall in the rectangle.
    #[default]
    ReuseReps,
    /// Draw points uniformly from the rectangle and keep the positive
    /// definite ones.
    UniformSample,
}

/// Per-pair intervals `[min g_j, max g_j]` over the retained covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperAccurateIntervals {
    pub theta_hat: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    /// Covariance-rectangle radius `Z_alpha / sqrt(n)`.
    pub radius: f64,
    /// Points mapped (the center included).
    pub retained: usize,
    /// Candidates dropped as not positive definite.
    pub rejected: usize,
    /// Candidates considered (excluding the center).
    pub candidates: usize,
}

impl SuperAccurateIntervals {
    pub fn to_rectangle(&self, alpha: f64, n: usize) -> Result<ConfidenceRectangle> {
        // the rectangle is stored as the interval midpoints; per-pair bounds
        // are asymmetric around theta_hat in general
        let center = self.intervals.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        let widths = self.intervals.iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect();
        ConfidenceRectangle::new(
            center,
            HalfWidth::PerCoordinate(widths),
            alpha,
            RectangleMethod::SuperAccurate,
            n,
        )
    }
}

fn cov_from_upper(entries: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut idx = 0;
    for j in 0..d {
        for k in j..d {
            m[(j, k)] = entries[idx];
            m[(k, j)] = entries[idx];
            idx += 1;
        }
    }
    m
}

fn theta_of_upper(entries: &[f64], d: usize) -> Option<Vec<f64>> {
    let m = cov_from_upper(entries, d);
    m.clone().cholesky()?;
    let s = CovMatrix::new(m).ok()?;
    let omega = linalg::precision(&s).ok()?;
    Some(linalg::partial_correlations(&omega).ok()?.upper())
}

/// Range of each partial correlation over the candidate covariances (upper
/// triangles) that are positive definite, seeded with `theta_hat`. Also
/// returns the number of rejected candidates.
fn image_intervals(theta_hat: &[f64], candidates: &[Vec<f64>], d: usize) -> (Vec<(f64, f64)>, usize) {
    let mapped: Vec<Option<Vec<f64>>> = candidates.par_iter().map(|c| theta_of_upper(c, d)).collect();
    let rejected = mapped.iter().filter(|m| m.is_none()).count();
    let mut intervals: Vec<(f64, f64)> = theta_hat.iter().map(|&t| (t, t)).collect();
    for theta in mapped.iter().flatten() {
        for (iv, t) in intervals.iter_mut().zip(theta) {
            iv.0 = iv.0.min(*t);
            iv.1 = iv.1.max(*t);
        }
    }
    (intervals, rejected)
}

/// Super-accurate bootstrap. First builds the bootstrap rectangle for the
/// covariance entries, then maps covariances inside it through the
/// partial-correlation map. `uniform_draws` is only used by
/// [`SuperVariant::UniformSample`].
pub fn super_accurate_intervals(
    x: &DataMatrix,
    alpha: f64,
    b: usize,
    uniform_draws: usize,
    variant: SuperVariant,
    seed: u64,
) -> Result<SuperAccurateIntervals> {
    check_alpha(alpha)?;
    check_replicates(b)?;
    let d = x.dim();
    let spec = StatisticSpec::CovarianceEntries;
    let s_hat = spec.extract(x)?;
    let theta_hat = StatisticSpec::PartialCorrelations.extract(x)?;
    let root_n = (x.n() as f64).sqrt();

    let (radius, candidates): (f64, Vec<Vec<f64>>) = match variant {
        SuperVariant::ReuseReps => {
            let reps = replicate_map(x, &spec, b, seed, |stat| {
                let dist = root_n * max_abs_diff(&stat, &s_hat);
                (dist, stat)
            })?;
            let mut sorted: Vec<f64> = reps.iter().map(|r| r.0).collect();
            sorted.sort_by(f64::total_cmp);
            let z = order_statistic_quantile(&sorted, alpha);
            let kept = reps
                .into_iter()
                .filter(|(dist, _)| *dist <= z)
                .map(|(_, s)| s)
                .collect();
            (z / root_n, kept)
        }
        SuperVariant::UniformSample => {
            if uniform_draws < MIN_REPLICATES {
                return Err(Error::InvalidArgument(format!(
                    "need at least {MIN_REPLICATES} uniform draws, got {uniform_draws}"
                )));
            }
            let dist = bootstrap_distribution(x, &spec, b, seed)?;
            let radius = dist.quantile(alpha) / root_n;
            let draws = (0..uniform_draws)
                .into_par_iter()
                .map(|i| {
                    let mut rng = substream(seed, Purpose::UniformRectangle, i as u64);
                    s_hat
                        .iter()
                        .map(|c| c + radius * rng.random_range(-1.0..=1.0))
                        .collect()
                })
                .collect();
            (radius, draws)
        }
    };

    let (intervals, rejected) = image_intervals(&theta_hat, &candidates, d);
    if variant == SuperVariant::UniformSample && rejected * 100 > candidates.len() * 99 {
        return Err(Error::AllDrawsNonPd {
            rejected,
            drawn: candidates.len(),
        });
    }
    Ok(SuperAccurateIntervals {
        theta_hat,
        intervals,
        radius,
        retained: candidates.len() - rejected + 1,
        rejected,
        candidates: candidates.len(),
    })
}
