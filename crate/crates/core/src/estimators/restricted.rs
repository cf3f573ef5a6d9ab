use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use super::graph::{EdgeRule, GraphEstimate, GraphMethod};
use super::partial::graph_from_rectangle;
use crate::bootstrap::{bootstrap_rectangle, StatisticSpec};
use crate::error::{Error, Result};
use crate::linalg::{pairs, CovMatrix, DataMatrix};

pub const DEFAULT_BUDGET_CAP: u128 = 10_000_000;

/// Relative floor on Cholesky pivots of a conditioning submatrix.
const PIVOT_REL_TOL: f64 = 1e-12;

/// `|r_jk|`, with the same arithmetic as the marginal correlation matrix.
fn abs_correlation(s: &DMatrix<f64>, j: usize, k: usize) -> f64 {
    (s[(j, k)] * (1.0 / s[(j, j)].sqrt()) * (1.0 / s[(k, k)].sqrt()))
        .clamp(-1.0, 1.0)
        .abs()
}

/// `|theta_jk . cond|` from the inverse of the `{j, k} + cond` submatrix.
fn conditional_abs_partial(s: &DMatrix<f64>, j: usize, k: usize, cond: &[usize]) -> Result<f64> {
    let idx: Vec<usize> = [j, k].iter().chain(cond).copied().collect();
    let m = idx.len();
    let sub = DMatrix::from_fn(m, m, |a, b| s[(idx[a], idx[b])]);
    let singular = || Error::SingularSubmatrix {
        j,
        k,
        conditioning: cond.to_vec(),
    };
    let chol = sub.clone().cholesky().ok_or_else(singular)?;
    let l = chol.l_dirty();
    if (0..m).any(|i| !(l[(i, i)] * l[(i, i)] > PIVOT_REL_TOL * sub[(i, i)])) {
        return Err(singular());
    }
    let p = chol.inverse();
    Ok((-p[(0, 1)] / (p[(0, 0)] * p[(1, 1)]).sqrt()).clamp(-1.0, 1.0).abs())
}

/// Advances `c` to the next `r`-subset of `0..m` in lexicographic order.
fn next_combination(c: &mut [usize], m: usize) -> bool {
    let r = c.len();
    for i in (0..r).rev() {
        if c[i] < m - r + i {
            c[i] += 1;
            for t in i + 1..r {
                c[t] = c[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `max_{|S| <= L} |partial correlation of (j, k) given S|` over subsets of
/// the other features, starting from `S` empty. `l` is clamped to `D - 2`.
pub fn restricted_partial_corr(s: &CovMatrix, j: usize, k: usize, l: usize) -> Result<f64> {
    let d = s.dim();
    if j == k || j >= d || k >= d {
        return Err(Error::InvalidArgument(format!("bad pair ({j}, {k}) for D = {d}")));
    }
    let v = s.values();
    for i in [j, k] {
        if !(v[(i, i)] > 0.0) {
            return Err(Error::ZeroVariance { index: i });
        }
    }
    let others: Vec<usize> = (0..d).filter(|&i| i != j && i != k).collect();
    let l = l.min(others.len());
    let mut best = abs_correlation(v, j, k);
    let done = |b: f64| b >= 1.0 - 1e-12;
    let mut cond = Vec::with_capacity(l);
    for r in 1..=l {
        if done(best) {
            break;
        }
        let mut c: Vec<usize> = (0..r).collect();
        loop {
            cond.clear();
            cond.extend(c.iter().map(|&i| others[i]));
            best = best.max(conditional_abs_partial(v, j, k, &cond)?);
            if done(best) || !next_combination(&mut c, others.len()) {
                break;
            }
        }
    }
    Ok(best)
}

/// Restricted statistics for every pair in [`pairs`] order.
pub fn restricted_statistics(s: &CovMatrix, l: usize) -> Result<Vec<f64>> {
    let d = s.dim();
    let pair_list: Vec<(usize, usize)> = pairs(d).collect();
    pair_list
        .par_iter()
        .map(|&(j, k)| restricted_partial_corr(s, j, k, l))
        .collect()
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Subset evaluations per replicate, `D^2 C(D-2, L)`.
pub fn restricted_budget(d: usize, l: usize) -> u128 {
    let d = d as u128;
    let l = (l as u128).min(d.saturating_sub(2));
    (d * d).saturating_mul(binomial(d.saturating_sub(2), l))
}

/// Restricted partial-correlation graph. The statistics are non-negative, so
/// an edge means the lower end of the bootstrap interval is above 0.
pub fn restricted_graph(
    x: &DataMatrix,
    l: usize,
    alpha: f64,
    b: usize,
    seed: u64,
    budget_cap: u128,
) -> Result<GraphEstimate> {
    let needed = restricted_budget(x.dim(), l);
    if needed > budget_cap {
        return Err(Error::BudgetExceeded {
            needed,
            cap: budget_cap,
        });
    }
    let spec = StatisticSpec::RestrictedPartial { l };
    // surface data-level failures before bootstrapping
    spec.extract(x)?;
    let rect = bootstrap_rectangle(x, &spec, alpha, b, seed)?;
    Ok(graph_from_rectangle(
        x.labels().to_vec(),
        &rect,
        rect.center(),
        EdgeRule::ExcludeZero,
        GraphMethod::Restricted,
    )?
    .with_meta("L", json!(l))
    .with_meta("B", json!(b))
    .with_meta("seed", json!(seed)))
}
