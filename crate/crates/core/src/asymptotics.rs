//! Delta-method machinery: the asymptotic covariance of `sqrt(n)(s - sigma)`,
//! gradients of the partial-correlation map, standard errors, Normal-quantile
//! rectangles and plug-in error-term diagnostics.
//!
//! Covariances are handled in their full `D^2` vectorized form. The map
//! `g_j(sigma)` treats all `D^2` coordinates as free, so the gradient of
//! `theta_st` only involves `Omega_st`, never `Omega_ts`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{
    self, centered, pairs, unvec, CommutationMatrix, CovMatrix, DataMatrix, PartialCorrMatrix, PrecisionMatrix,
};
use crate::rectangle::{ConfidenceRectangle, HalfWidth, RectangleMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TEstimatorKind {
    #[default]
    GaussianPlugin,
    Empirical,
    FiniteSampleLiteral,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Dense(DMatrix<f64>),
    /// `(I + K)(S (x) S)`, kept implicit.
    GaussianPlugin(DMatrix<f64>),
}

/// A `D^2 x D^2` fourth-moment matrix: the (asymptotic or finite-sample)
/// covariance of `sqrt(n)(s - sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourthMomentMatrix {
    repr: Repr,
    dim: usize,
    kind: TEstimatorKind,
}

impl FourthMomentMatrix {
    pub fn kind(&self) -> TEstimatorKind {
        self.kind
    }

    /// Feature dimension `D`; the matrix is `D^2 x D^2`.
    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::GaussianPlugin(s) => plugin_dense(s),
        }
    }

    /// Returns a copy scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let repr = match &self.repr {
            Repr::Dense(m) => Repr::Dense(m * c),
            Repr::GaussianPlugin(s) => Repr::GaussianPlugin(s * c.sqrt()),
        };
        Self { repr, ..*self }
    }

    /// `v^T T v` for a vectorized `D x D` direction `v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        match &self.repr {
            Repr::Dense(m) => {
                let v = nalgebra::DVector::from_column_slice(v);
                v.dot(&(m * &v))
            }
            Repr::GaussianPlugin(s) => plugin_quadratic_form(s, &unvec(v, self.dim, self.dim)),
        }
    }

    /// Smallest eigenvalue on the subspace of vectorized symmetric matrices.
    /// On the antisymmetric complement a covariance of `vec(S)` is always 0.
    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        let d = self.dim;
        let basis = symmetric_basis(d);
        let t = self.to_dense();
        let reduced = basis.transpose() * t * &basis;
        reduced.symmetric_eigen().eigenvalues.min()
    }
}

fn plugin_dense(s: &DMatrix<f64>) -> DMatrix<f64> {
    let d = s.nrows();
    let kron = linalg::kronecker(s, s);
    let k = CommutationMatrix::new(d, d);
    &kron + k.apply_rows(&kron)
}

/// `vec(M)^T (I + K)(A (x) A) vec(M) = <M + M^T, A M A^T>`.
fn plugin_quadratic_form(a: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let ama = a * m * a.transpose();
    (m + m.transpose()).dot(&ama)
}

/// Orthonormal basis of vectorized symmetric `d x d` matrices, as columns.
fn symmetric_basis(d: usize) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(d * d, d * (d + 1) / 2);
    let mut col = 0;
    for j in 0..d {
        for i in j..d {
            if i == j {
                basis[(i + d * j, col)] = 1.0;
            } else {
                basis[(i + d * j, col)] = std::f64::consts::FRAC_1_SQRT_2;
                basis[(j + d * i, col)] = std::f64::consts::FRAC_1_SQRT_2;
            }
            col += 1;
        }
    }
    basis
}

/// Gaussian plug-in `T = (I + K)(S (x) S)`.
pub fn t_gaussian_plugin(s: &CovMatrix) -> FourthMomentMatrix {
    FourthMomentMatrix {
        repr: Repr::GaussianPlugin(s.values().clone()),
        dim: s.dim(),
        kind: TEstimatorKind::GaussianPlugin,
    }
}

/// Empirical covariance of `vec((Y_i - Ybar)(Y_i - Ybar)^T) - s`.
pub fn t_empirical(x: &DataMatrix) -> Result<FourthMomentMatrix> {
    let n = x.n();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need n >= 3 observations, got {n}")));
    }
    let d = x.dim();
    let c = centered(x.values());
    let mut w = DMatrix::zeros(n, d * d);
    for i in 0..n {
        for b in 0..d {
            for a in 0..d {
                w[(i, a + d * b)] = c[(i, a)] * c[(i, b)];
            }
        }
    }
    // subtract the column means (V-bar); they equal s
    let wc = centered(&w);
    let t = wc.tr_mul(&wc) / n as f64;
    Ok(FourthMomentMatrix {
        repr: Repr::Dense((&t + t.transpose()) * 0.5),
        dim: d,
        kind: TEstimatorKind::Empirical,
    })
}

/// The finite-sample variance of `sqrt(n)(s - sigma)` exactly as printed,
/// with `c1 = D(1 - 1/n)` and the Gaussian fourth moment:
/// `c1/(n-1) (I + K)(S (x) S) + (1 - c1/(n-1)) (I - K)(S (x) S)`.
///
/// The printed constants do not reduce to the asymptotic form; this is kept
/// for comparison only.
pub fn t_finite_sample_literal(s: &CovMatrix, n: usize) -> Result<FourthMomentMatrix> {
    let d = s.dim();
    if n <= d {
        return Err(Error::InvalidArgument(format!("need n > D, got n = {n}, D = {d}")));
    }
    let nf = n as f64;
    let c1 = d as f64 * (1.0 - 1.0 / nf);
    let kron = linalg::kronecker(s.values(), s.values());
    let swapped = CommutationMatrix::new(d, d).apply_rows(&kron);
    // E(ee^T (x) ee^T) - sigma sigma^T = (I + K)(S (x) S) for Gaussian e
    let fourth = &kron + &swapped;
    let second = &kron - &swapped;
    let t = fourth * (c1 / (nf - 1.0)) + second * (1.0 - c1 / (nf - 1.0));
    Ok(FourthMomentMatrix {
        repr: Repr::Dense((&t + t.transpose()) * 0.5),
        dim: d,
        kind: TEstimatorKind::FiniteSampleLiteral,
    })
}

/// Derivative of `theta_st` with respect to the three entries of `Omega` it
/// depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientFactor {
    pub pair: (usize, usize),
    /// `d theta / d Omega_ss = -theta / (2 Omega_ss)`
    pub d_ss: f64,
    /// `d theta / d Omega_tt = -theta / (2 Omega_tt)`
    pub d_tt: f64,
    /// `d theta / d Omega_st = -1 / sqrt(Omega_ss Omega_tt)`
    pub d_st: f64,
}

impl GradientFactor {
    fn new(omega: &DMatrix<f64>, s: usize, t: usize) -> Result<Self> {
        let (oss, ott) = (omega[(s, s)], omega[(t, t)]);
        if !(oss > 0.0) {
            return Err(Error::NonPositiveDiagonal { index: s });
        }
        if !(ott > 0.0) {
            return Err(Error::NonPositiveDiagonal { index: t });
        }
        let inv_root = 1.0 / (oss * ott).sqrt();
        let theta = -omega[(s, t)] * inv_root;
        Ok(Self {
            pair: (s, t),
            d_ss: -theta / (2.0 * oss),
            d_tt: -theta / (2.0 * ott),
            d_st: -inv_root,
        })
    }

    /// Structural nonzeros as `(row, col, value)` in omega-space.
    pub fn entries(&self) -> [(usize, usize, f64); 3] {
        let (s, t) = self.pair;
        [(s, s, self.d_ss), (t, t, self.d_tt), (s, t, self.d_st)]
    }

    /// `d theta / d sigma^T` as a `D x D` matrix (column-major it is the row
    /// `l_j`). Uses `d vec(A^-1) = -(A^-T (x) A^-1) d vec(A)`, so for
    /// symmetric `Omega` this is `-Omega F Omega`.
    fn gradient_matrix(&self, omega: &DMatrix<f64>) -> DMatrix<f64> {
        let d = omega.nrows();
        let mut m = DMatrix::zeros(d, d);
        for (u, v, f) in self.entries() {
            // dOmega_uv / dsigma_(l, j) = -Omega[u, l] Omega[j, v]
            for j in 0..d {
                let right = omega[(j, v)];
                if right == 0.0 {
                    continue;
                }
                for l in 0..d {
                    m[(l, j)] -= f * omega[(u, l)] * right;
                }
            }
        }
        m
    }
}

/// Gradient rows `l_j = d theta_j / d sigma^T` for every off-diagonal pair,
/// in [`linalg::pairs`] order. Dense rows are built on request.
#[derive(Debug, Clone)]
pub struct GradientRows {
    omega: DMatrix<f64>,
    factors: Vec<GradientFactor>,
}

impl GradientRows {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn factor(&self, j: usize) -> &GradientFactor {
        &self.factors[j]
    }

    pub fn factors(&self) -> &[GradientFactor] {
        &self.factors
    }

    /// `l_j` as a `D x D` matrix; `vec` of it is the dense row.
    pub fn row_matrix(&self, j: usize) -> DMatrix<f64> {
        self.factors[j].gradient_matrix(&self.omega)
    }

    /// Dense row `l_j` of length `D^2`.
    pub fn row(&self, j: usize) -> Vec<f64> {
        linalg::vec(&self.row_matrix(j))
    }
}

pub fn gradient_rows(omega: &PrecisionMatrix, theta: &PartialCorrMatrix) -> Result<GradientRows> {
    let d = omega.dim();
    if theta.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "precision is {d}x{d} but partial correlations are {0}x{0}",
            theta.dim()
        )));
    }
    let om = omega.values();
    let factors = pairs(d)
        .map(|(s, t)| GradientFactor::new(om, s, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientRows {
        omega: om.clone(),
        factors,
    })
}

/// Off-diagonal partial correlations of an arbitrary (not necessarily
/// symmetric) vectorized covariance. Fails when the symmetric part is not
/// positive definite.
pub(crate) fn theta_of_sigma(sigma: &[f64], d: usize) -> Result<Vec<f64>> {
    let omega = general_precision(sigma, d)?;
    pairs(d)
        .map(|(s, t)| {
            let (oss, ott) = (omega[(s, s)], omega[(t, t)]);
            if !(oss > 0.0) {
                return Err(Error::NonPositiveDiagonal { index: s });
            }
            if !(ott > 0.0) {
                return Err(Error::NonPositiveDiagonal { index: t });
            }
            Ok(-omega[(s, t)] / (oss * ott).sqrt())
        })
        .collect()
}

fn general_precision(sigma: &[f64], d: usize) -> Result<DMatrix<f64>> {
    let a = unvec(sigma, d, d);
    let sym = (&a + a.transpose()) * 0.5;
    if sym.cholesky().is_none() {
        return Err(Error::SingularCovariance {
            min_eigenvalue: f64::NAN,
            tolerance: 0.0,
        });
    }
    a.try_inverse().ok_or(Error::SingularCovariance {
        min_eigenvalue: f64::NAN,
        tolerance: 0.0,
    })
}

/// Central-difference Hessian of a scalar function.
pub fn hessian_fd<F>(f: F, x: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let vf = |p: &[f64]| f(p).map(|v| vec![v]);
    let mut out = DMatrix::zeros(x.len(), x.len());
    hessian_fd_visit(&vf, x, step, |i, k, h| {
        out[(i, k)] = h[0];
        out[(k, i)] = h[0];
    })?;
    Ok(out)
}

/// Second differences of a vector-valued function; `visit(i, k, h)` gets
/// `d^2 f / dx_i dx_k` for every output, once per `i <= k`.
fn hessian_fd_visit<F, V>(f: &F, x: &[f64], step: f64, mut visit: V) -> Result<()>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    V: FnMut(usize, usize, &[f64]),
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let m = x.len();
    let f0 = f(x)?;
    let mut point = x.to_vec();
    let mut eval = |di: (usize, f64), dk: Option<(usize, f64)>| -> Result<Vec<f64>> {
        point.copy_from_slice(x);
        point[di.0] += di.1;
        if let Some((k, dv)) = dk {
            point[k] += dv;
        }
        f(&point)
    };
    let h2 = step * step;
    let mut buf = vec![0.0; f0.len()];
    for i in 0..m {
        let plus = eval((i, step), None)?;
        let minus = eval((i, -step), None)?;
        for (b, ((p, q), c)) in buf.iter_mut().zip(plus.iter().zip(&minus).zip(&f0)) {
            *b = (p - 2.0 * c + q) / h2;
        }
        visit(i, i, &buf);
        for k in i + 1..m {
            let pp = eval((i, step), Some((k, step)))?;
            let pm = eval((i, step), Some((k, -step)))?;
            let mp = eval((i, -step), Some((k, step)))?;
            let mm = eval((i, -step), Some((k, -step)))?;
            for (o, b) in buf.iter_mut().enumerate() {
                *b = (pp[o] - pm[o] - mp[o] + mm[o]) / (4.0 * h2);
            }
            visit(i, k, &buf);
        }
    }
    Ok(())
}

fn default_step(sigma_vec: &[f64]) -> f64 {
    1e-4 * sigma_vec
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE)
}

/// Finite-difference Hessian of `theta_jk` as a function of the `D^2`
/// coordinates of `sigma`. When a perturbed matrix leaves the positive
/// definite cone the step is cut by 10 and retried once.
pub fn hessian_fd_pair(sigma_vec: &[f64], pair: (usize, usize), step: Option<f64>) -> Result<DMatrix<f64>> {
    let d = (sigma_vec.len() as f64).sqrt().round() as usize;
    if d * d != sigma_vec.len() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a square length",
            sigma_vec.len()
        )));
    }
    let (j, k) = if pair.0 < pair.1 { pair } else { (pair.1, pair.0) };
    if j == k || k >= d {
        return Err(Error::InvalidArgument(format!("bad pair {pair:?} for D = {d}")));
    }
    let idx = linalg::pair_index(d, j, k);
    let g = |p: &[f64]| theta_of_sigma(p, d).map(|v| v[idx]);
    let step = step.unwrap_or_else(|| default_step(sigma_vec));
    match hessian_fd(g, sigma_vec, step) {
        Err(Error::SingularCovariance { .. }) => hessian_fd(g, sigma_vec, step / 10.0),
        other => other,
    }
}

/// `e_j = sqrt(l_j^T T l_j)` for every pair.
pub fn standard_errors(rows: &GradientRows, t: &FourthMomentMatrix) -> Result<Vec<f64>> {
    if t.feature_dim() != rows.dim() {
        return Err(Error::InvalidArgument(format!(
            "T is for D = {} but gradients are for D = {}",
            t.feature_dim(),
            rows.dim()
        )));
    }
    (0..rows.len())
        .into_par_iter()
        .map(|j| {
            let pair = rows.factor(j).pair;
            let mut q = t.quadratic_form(&rows.row(j));
            if q < 0.0 {
                if q >= -1e-10 {
                    q = 0.0;
                } else {
                    return Err(Error::NegativeQuadraticForm { pair, value: q });
                }
            }
            let e = q.sqrt();
            if e < 1e-12 {
                return Err(Error::DegenerateVariance { pair });
            }
            Ok(e)
        })
        .collect()
}

/// The full `Gamma = L T L^T` over off-diagonal pairs.
pub fn gamma_matrix(rows: &GradientRows, t: &FourthMomentMatrix) -> DMatrix<f64> {
    let dense_rows: Vec<Vec<f64>> = (0..rows.len()).map(|j| rows.row(j)).collect();
    let l = DMatrix::from_fn(rows.len(), rows.dim().pow(2), |r, c| dense_rows[r][c]);
    let tl = t.to_dense() * l.transpose();
    let g = &l * tl;
    (&g + g.transpose()) * 0.5
}

/// Number of simultaneous comparisons used to set the Normal quantile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    /// `m = D^2`, counting every entry of the vectorized matrix.
    #[default]
    DSquared,
    /// `m = D(D-1)/2`, one per unordered pair.
    OffdiagPairs,
}

impl Multiplicity {
    pub fn count(self, d: usize) -> usize {
        match self {
            Multiplicity::DSquared => d * d,
            Multiplicity::OffdiagPairs => linalg::num_pairs(d),
        }
    }
}

/// Inverse standard Normal cdf.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must lie in (0, 1), got {p}"
        )));
    }
    let std = Normal::standard();
    let mut z = std.inverse_cdf(p);
    // one Newton step against the cdf tightens the tails
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if pdf > 0.0 {
        z -= (std.cdf(z) - p) / pdf;
    }
    Ok(z)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Simultaneous rectangle `theta_hat_jk +/- z e_jk / sqrt(n)` with
/// `z = -Phi^-1(alpha / m)`.
pub fn delta_rectangle(
    theta_hat: &PartialCorrMatrix,
    e: &[f64],
    alpha: f64,
    n: usize,
    multiplicity: Multiplicity,
) -> Result<ConfidenceRectangle> {
    normal_rectangle(
        theta_hat,
        e,
        alpha,
        n,
        multiplicity.count(theta_hat.dim()),
        RectangleMethod::Delta,
    )
}

/// Single-entry Normal intervals joined by a union bound over all `D^2`
/// entries. Same arithmetic as [`delta_rectangle`] with the default
/// multiplicity; labelled separately in output.
pub fn appendix_union_rectangle(
    theta_hat: &PartialCorrMatrix,
    e: &[f64],
    alpha: f64,
    n: usize,
) -> Result<ConfidenceRectangle> {
    let d = theta_hat.dim();
    normal_rectangle(theta_hat, e, alpha, n, d * d, RectangleMethod::AppendixUnion)
}

/// Two-sided `1 - alpha` interval for one partial correlation.
pub fn single_entry_interval(theta_hat: f64, e: f64, alpha: f64, n: usize) -> Result<(f64, f64)> {
    let z = -normal_quantile(alpha / 2.0)?;
    let w = z * e / (n as f64).sqrt();
    Ok((theta_hat - w, theta_hat + w))
}

fn normal_rectangle(
    theta_hat: &PartialCorrMatrix,
    e: &[f64],
    alpha: f64,
    n: usize,
    m: usize,
    method: RectangleMethod,
) -> Result<ConfidenceRectangle> {
    let center = theta_hat.upper();
    if e.len() != center.len() {
        return Err(Error::InvalidArgument(format!(
            "{} standard errors for {} pairs",
            e.len(),
            center.len()
        )));
    }
    if let Some(bad) = e.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "standard errors must be positive, got {bad}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let z = -normal_quantile(alpha / m as f64)?;
    let root_n = (n as f64).sqrt();
    let widths = e.iter().map(|ej| z * ej / root_n).collect();
    ConfidenceRectangle::new(center, HalfWidth::PerCoordinate(widths), alpha, method, n)
}

/// Plug-in readouts of the error terms governing delta-method accuracy,
/// evaluated at the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaDiagnostics {
    /// `max_j |||H_j(s)||| / e_j` (entrywise absolute sum of the Hessian).
    pub gamma_hat: f64,
    /// `max_j ||l_j(s)||_1 / e_j`.
    pub xi_hat: f64,
    /// `max_j ||U'_j(s)||_1 / e_j` with `U_j = sqrt(l_j^T T l_j)`.
    pub rho_hat: f64,
    /// Smallest eigenvalue of `T(s)` on symmetric directions.
    pub min_eig_t: f64,
}

pub fn delta_diagnostics(s: &CovMatrix) -> Result<DeltaDiagnostics> {
    let d = s.dim();
    let omega = linalg::precision(s)?;
    let theta = linalg::partial_correlations(&omega)?;
    let rows = gradient_rows(&omega, &theta)?;
    let t = t_gaussian_plugin(s);
    let e = standard_errors(&rows, &t)?;

    let xi_hat = (0..rows.len())
        .map(|j| linalg::entry_sum(&rows.row(j)) / e[j])
        .fold(0.0, f64::max);

    let sigma = linalg::vec(s.values());
    let step = default_step(&sigma);

    let theta_fn = |p: &[f64]| theta_of_sigma(p, d);
    let mut hess_sums = vec![0.0; rows.len()];
    let accumulate = |sums: &mut Vec<f64>, i: usize, k: usize, h: &[f64]| {
        let w = if i == k { 1.0 } else { 2.0 };
        for (acc, v) in sums.iter_mut().zip(h) {
            *acc += w * v.abs();
        }
    };
    let first = hessian_fd_visit(&theta_fn, &sigma, step, |i, k, h| accumulate(&mut hess_sums, i, k, h));
    if let Err(Error::SingularCovariance { .. }) = first {
        hess_sums.iter_mut().for_each(|v| *v = 0.0);
        hessian_fd_visit(&theta_fn, &sigma, step / 10.0, |i, k, h| {
            accumulate(&mut hess_sums, i, k, h)
        })?;
    } else {
        first?;
    }
    let gamma_hat = hess_sums.iter().zip(&e).map(|(h, ej)| h / ej).fold(0.0, f64::max);

    let u_fn = |p: &[f64]| plugin_standard_errors_general(p, d);
    let mut grad_sums = vec![0.0; rows.len()];
    let mut point = sigma.clone();
    for i in 0..sigma.len() {
        point[i] = sigma[i] + step;
        let plus = u_fn(&point)?;
        point[i] = sigma[i] - step;
        let minus = u_fn(&point)?;
        point[i] = sigma[i];
        for (acc, (p, m)) in grad_sums.iter_mut().zip(plus.iter().zip(&minus)) {
            *acc += ((p - m) / (2.0 * step)).abs();
        }
    }
    let rho_hat = grad_sums.iter().zip(&e).map(|(g, ej)| g / ej).fold(0.0, f64::max);

    Ok(DeltaDiagnostics {
        gamma_hat,
        xi_hat,
        rho_hat,
        min_eig_t: t.min_symmetric_eigenvalue().max(0.0),
    })
}

/// `U_j(a) = sqrt(l_j(a)^T T(a) l_j(a))` at an arbitrary vectorized `a`,
/// with `T(a) = (I + K)(A (x) A)`.
fn plugin_standard_errors_general(a_vec: &[f64], d: usize) -> Result<Vec<f64>> {
    let omega = general_precision(a_vec, d)?;
    let a = unvec(a_vec, d, d);
    pairs(d)
        .map(|(s, t)| {
            let m = GradientFactor::new(&omega, s, t)?.gradient_matrix(&omega);
            Ok(plugin_quadratic_form(&a, &m).max(0.0).sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{precision, sample_covariance};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cov(rows: usize, vals: &[f64]) -> CovMatrix {
        CovMatrix::new(DMatrix::from_row_slice(rows, rows, vals)).unwrap()
    }

    fn random_pd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        a.tr_mul(&a) + DMatrix::identity(d, d) * 0.3
    }

    fn gaussian_data(rng: &mut ChaCha8Rng, sigma: &DMatrix<f64>, n: usize) -> DataMatrix {
        let chol = sigma.clone().cholesky().unwrap().l();
        let z = DMatrix::from_fn(n, sigma.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
        DataMatrix::new(z * chol.transpose()).unwrap()
    }

    /// Central-difference gradient of theta_jk over all D^2 coordinates.
    fn fd_gradient(sigma: &[f64], d: usize, idx: usize, h: f64) -> Vec<f64> {
        let mut p = sigma.to_vec();
        (0..sigma.len())
            .map(|i| {
                p[i] = sigma[i] + h;
                let plus = theta_of_sigma(&p, d).unwrap()[idx];
                p[i] = sigma[i] - h;
                let minus = theta_of_sigma(&p, d).unwrap()[idx];
                p[i] = sigma[i];
                (plus - minus) / (2.0 * h)
            })
            .collect()
    }

    fn assert_gradient_matches_fd(sigma: &DMatrix<f64>) {
        let d = sigma.nrows();
        let s = CovMatrix::new(sigma.clone()).unwrap();
        let omega = precision(&s).unwrap();
        let theta = linalg::partial_correlations(&omega).unwrap();
        let rows = gradient_rows(&omega, &theta).unwrap();
        let flat = linalg::vec(sigma);
        for j in 0..rows.len() {
            let fd = fd_gradient(&flat, d, j, 1e-6);
            let an = rows.row(j);
            let scale = an.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let err = an.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(err <= 1e-5 * scale, "pair {j}: err {err} scale {scale}");
        }
    }

    #[test]
    fn plugin_t_closed_forms() {
        let t = t_gaussian_plugin(&cov(1, &[2.0])).to_dense();
        assert_eq!(t[(0, 0)], 8.0);

        let t = t_gaussian_plugin(&cov(2, &[1.0, 0.0, 0.0, 1.0])).to_dense();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0,
            ],
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn plugin_t_doubles_symmetric_directions() {
        // (I + K) v = 2v for vec of a symmetric matrix, so T v = 2 (S(x)S) v
        let s = cov(3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]);
        let t = t_gaussian_plugin(&s).to_dense();
        let kron = linalg::kronecker(s.values(), s.values());
        let sym = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let v = DVector::from_vec(linalg::vec(&sym));
        assert!((&t * &v - (&kron * &v) * 2.0).amax() < 1e-12);
    }

    #[test]
    fn plugin_t_scalar_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 1_000_000;
        let sd = 2f64.sqrt();
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..draws {
            let e: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            let v = e * e;
            m1 += v;
            m2 += v * v;
        }
        let var = m2 / draws as f64 - (m1 / draws as f64).powi(2);
        assert!((var - 8.0).abs() / 8.0 < 0.02, "var {var}");
    }

    #[test]
    fn quadratic_form_fast_path_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = CovMatrix::new(random_pd(&mut rng, 4)).unwrap();
        let t = t_gaussian_plugin(&s);
        let dense = t.to_dense();
        for _ in 0..5 {
            let v = DVector::from_fn(16, |_, _| rng.random_range(-1.0..1.0));
            let q = t.quadratic_form(v.as_slice());
            assert!((q - v.dot(&(&dense * &v))).abs() < 1e-10 * q.abs().max(1.0));
        }
    }

    #[test]
    fn empirical_t_constant_column_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let raw = DMatrix::from_fn(30, 3, |_, j| if j == 1 { 4.0 } else { rng.random_range(-1.0..1.0) });
        let t = t_empirical(&DataMatrix::new(raw).unwrap()).unwrap().to_dense();
        for a in 0..3 {
            // every vec index touching feature 1
            for idx in [1 + 3 * a, a + 3] {
                assert!(t.row(idx).amax() < 1e-15);
                assert!(t.column(idx).amax() < 1e-15);
            }
        }
    }

    #[test]
    fn empirical_t_matches_brute_force_tiny() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.3], vec![2.0, -1.0]]).unwrap();
        let t = t_empirical(&x).unwrap().to_dense();
        let n = 3;
        let xv = x.values();
        let mean: Vec<f64> = (0..2)
            .map(|j| (0..n).map(|i| xv[(i, j)]).sum::<f64>() / n as f64)
            .collect();
        let s = sample_covariance(&x);
        let sv = linalg::vec(s.values());
        let v: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut out = vec![0.0; 4];
                for b in 0..2 {
                    for a in 0..2 {
                        out[a + 2 * b] = (xv[(i, a)] - mean[a]) * (xv[(i, b)] - mean[b]) - sv[a + 2 * b];
                    }
                }
                out
            })
            .collect();
        let vbar: Vec<f64> = (0..4).map(|p| v.iter().map(|r| r[p]).sum::<f64>() / n as f64).collect();
        for p in 0..4 {
            for q in 0..4 {
                let oracle: f64 = v.iter().map(|r| (r[p] - vbar[p]) * (r[q] - vbar[q])).sum::<f64>() / n as f64;
                assert!((t[(p, q)] - oracle).abs() < 1e-12);
            }
        }
        assert!(t_empirical(&x.select_rows(&[0, 1])).is_err());
    }

    #[test]
    fn finite_sample_literal_scalar_case() {
        let t = t_finite_sample_literal(&cov(1, &[1.0]), 100).unwrap().to_dense();
        // c1 = 0.99, c1/(n-1) = 0.01, fourth moment block = 2, (I - K) = 0 for D = 1
        assert!((t[(0, 0)] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn finite_sample_literal_is_symmetric_and_finite() {
        let t = t_finite_sample_literal(&cov(2, &[1.0, 0.0, 0.0, 1.0]), 50).unwrap();
        assert_eq!(t.kind(), TEstimatorKind::FiniteSampleLiteral);
        let m = t.to_dense();
        assert_eq!(m, m.transpose());
        for n in [10, 1_000, 1_000_000] {
            let m = t_finite_sample_literal(&cov(2, &[1.0, 0.2, 0.2, 1.0]), n)
                .unwrap()
                .to_dense();
            assert!(m.iter().all(|v| v.is_finite() && v.abs() < 10.0));
        }
        assert!(t_finite_sample_literal(&cov(2, &[1.0, 0.0, 0.0, 1.0]), 2).is_err());
    }

    #[test]
    fn gradient_at_independence() {
        let omega = linalg::precision_from_parts(DMatrix::identity(3, 3), 1.0);
        let theta = linalg::partial_correlations(&omega).unwrap();
        let rows = gradient_rows(&omega, &theta).unwrap();
        for (j, (s, t)) in pairs(3).enumerate() {
            let f = rows.factor(j);
            assert_eq!((f.d_ss, f.d_tt, f.d_st), (0.0, 0.0, -1.0));
            let row = rows.row(j);
            let nonzero: Vec<usize> = (0..9).filter(|&i| row[i] != 0.0).collect();
            assert_eq!(nonzero, vec![s + 3 * t]);
            assert_eq!(row[s + 3 * t], 1.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_examples() {
        assert_gradient_matches_fd(&DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        let omega = DMatrix::from_row_slice(3, 3, &[1.0, -0.9, 0.0, -0.9, 1.81, -0.9, 0.0, -0.9, 1.81]);
        assert_gradient_matches_fd(&omega.try_inverse().unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for i in 0..50 {
            let d = 2 + i % 3;
            assert_gradient_matches_fd(&random_pd(&mut rng, d));
        }
    }

    #[test]
    fn hessian_recovers_quadratic() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, -1.0, 0.5, 1.0, 0.25, -1.0, 0.25, 3.0]);
        let f = |x: &[f64]| {
            let v = DVector::from_column_slice(x);
            Ok(0.5 * v.dot(&(&a * &v)) + v[0])
        };
        let h = hessian_fd(f, &[0.3, -0.2, 1.0], 1e-3).unwrap();
        assert!((h - &a).amax() < 1e-8);
    }

    #[test]
    fn hessian_of_theta_at_identity() {
        let sigma = linalg::vec(&DMatrix::identity(2, 2));
        let h1 = hessian_fd_pair(&sigma, (0, 1), Some(1e-3)).unwrap();
        let h2 = hessian_fd_pair(&sigma, (0, 1), Some(5e-4)).unwrap();
        // sigma_(0,1) enters linearly at the identity: theta = x
        assert!(h1[(2, 2)].abs() < 1e-6);
        assert!((&h1 - &h2).amax() < 1e-3);
        assert_eq!(h1, h1.transpose());
    }

    #[test]
    fn hessian_rows_match_gradient_differences() {
        let sigma_m = DMatrix::from_row_slice(3, 3, &[1.5, 0.4, 0.2, 0.4, 1.0, 0.3, 0.2, 0.3, 1.2]);
        let sigma = linalg::vec(&sigma_m);
        let pair = (0, 2);
        let idx = linalg::pair_index(3, 0, 2);
        let h = hessian_fd_pair(&sigma, pair, None).unwrap();
        let step = 1e-5;
        let grad_at = |p: &[f64]| {
            let s = CovMatrix::new(unvec(p, 3, 3)).unwrap();
            let om = precision(&s).unwrap();
            let th = linalg::partial_correlations(&om).unwrap();
            gradient_rows(&om, &th).unwrap().row(idx)
        };
        // symmetric perturbations keep the analytic gradient valid
        for (a, b) in [(0usize, 0usize), (1, 2), (0, 2)] {
            let mut up = sigma.clone();
            let mut dn = sigma.clone();
            for (r, c) in [(a, b), (b, a)] {
                let i = r + 3 * c;
                up[i] += step;
                dn[i] -= step;
                if a == b {
                    break;
                }
            }
            let gu = grad_at(&up);
            let gd = grad_at(&dn);
            let cols: Vec<usize> = if a == b {
                vec![a + 3 * b]
            } else {
                vec![a + 3 * b, b + 3 * a]
            };
            for row in 0..9 {
                let fd = (gu[row] - gd[row]) / (2.0 * step);
                let hs: f64 = cols.iter().map(|&c| h[(row, c)]).sum();
                assert!((fd - hs).abs() < 1e-3, "row {row}: {fd} vs {hs}");
            }
        }
    }

    #[test]
    fn standard_errors_at_independence_are_one() {
        let s = CovMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let omega = precision(&s).unwrap();
        let theta = linalg::partial_correlations(&omega).unwrap();
        let rows = gradient_rows(&omega, &theta).unwrap();
        let e = standard_errors(&rows, &t_gaussian_plugin(&s)).unwrap();
        assert!(e.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let e4 = standard_errors(&rows, &t_gaussian_plugin(&s).scaled(4.0)).unwrap();
        assert!(e.iter().zip(&e4).all(|(a, b)| (2.0 * a - b).abs() < 1e-12));
    }

    #[test]
    fn standard_errors_homogeneous_for_dense_t() {
        let s = cov(3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]);
        let omega = precision(&s).unwrap();
        let theta = linalg::partial_correlations(&omega).unwrap();
        let rows = gradient_rows(&omega, &theta).unwrap();
        let t = t_finite_sample_literal(&s, 500).unwrap();
        let e = standard_errors(&rows, &t).unwrap();
        let e3 = standard_errors(&rows, &t.scaled(9.0)).unwrap();
        assert!(e.iter().zip(&e3).all(|(a, b)| (3.0 * a - b).abs() < 1e-12 * b));
    }

    #[test]
    fn standard_errors_flag_degenerate_t() {
        let s = CovMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let omega = precision(&s).unwrap();
        let theta = linalg::partial_correlations(&omega).unwrap();
        let rows = gradient_rows(&omega, &theta).unwrap();
        let zero = t_gaussian_plugin(&s).scaled(0.0);
        assert_eq!(
            standard_errors(&rows, &zero).unwrap_err(),
            Error::DegenerateVariance { pair: (0, 1) }
        );
        let neg = FourthMomentMatrix {
            repr: Repr::Dense(-DMatrix::identity(4, 4)),
            dim: 2,
            kind: TEstimatorKind::Empirical,
        };
        assert!(matches!(
            standard_errors(&rows, &neg).unwrap_err(),
            Error::NegativeQuadraticForm { .. }
        ));
    }

    #[test]
    fn standard_errors_match_monte_carlo_sd() {
        let d = 3;
        let n = 10_000;
        let reps = 2_000;
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let sigma = DMatrix::identity(d, d);
        let mut values = vec![Vec::with_capacity(reps); linalg::num_pairs(d)];
        for _ in 0..reps {
            let x = gaussian_data(&mut rng, &sigma, n);
            let th = linalg::partial_correlations(&precision(&sample_covariance(&x)).unwrap()).unwrap();
            for (v, t) in values.iter_mut().zip(th.upper()) {
                v.push(t * (n as f64).sqrt());
            }
        }
        for v in values {
            let mean = v.iter().sum::<f64>() / reps as f64;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
            assert!((sd - 1.0).abs() < 0.05, "sd {sd}");
        }
    }

    #[test]
    fn correlation_sd_at_zero_is_one_for_two_features() {
        let n = 2_000;
        let reps = 3_000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let sigma = DMatrix::identity(2, 2);
        let v: Vec<f64> = (0..reps)
            .map(|_| {
                let x = gaussian_data(&mut rng, &sigma, n);
                let th = linalg::partial_correlations(&precision(&sample_covariance(&x)).unwrap()).unwrap();
                th.get(0, 1) * (n as f64).sqrt()
            })
            .collect();
        let sd = (v.iter().map(|x| x * x).sum::<f64>() / reps as f64).sqrt();
        let s = CovMatrix::new(sigma).unwrap();
        let om = precision(&s).unwrap();
        let rows = gradient_rows(&om, &linalg::partial_correlations(&om).unwrap()).unwrap();
        let e = standard_errors(&rows, &t_gaussian_plugin(&s)).unwrap()[0];
        assert!((sd - e).abs() / e < 0.03, "sd {sd} vs e {e}");
    }

    #[test]
    fn normal_quantile_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-9);
        for p in [1e-12, 1e-6, 0.001, 0.025, 0.3, 0.7, 0.999] {
            let z = normal_quantile(p).unwrap();
            assert!((normal_cdf(z) - p).abs() <= 1e-10, "p {p}");
        }
        // 1 - p is exact for these
        for p in [0.25, 0.125, 0.0625, 0.001953125] {
            assert!((normal_quantile(p).unwrap() + normal_quantile(1.0 - p).unwrap()).abs() < 1e-12);
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn delta_rectangle_quantile_and_scaling() {
        let theta = linalg::partial_correlations(&linalg::precision_from_parts(
            DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 1.0]),
            0.8,
        ))
        .unwrap();
        let r = delta_rectangle(&theta, &[1.0], 0.1, 100, Multiplicity::DSquared).unwrap();
        assert!((r.half_width_at(0) * 10.0 - 1.959963984540054).abs() < 1e-9);
        assert!(r.contains(r.center()));

        let r4 = delta_rectangle(&theta, &[1.0], 0.1, 400, Multiplicity::DSquared).unwrap();
        assert!((r.half_width_at(0) - 2.0 * r4.half_width_at(0)).abs() < 1e-15);

        let pairs_only = delta_rectangle(&theta, &[1.0], 0.1, 100, Multiplicity::OffdiagPairs).unwrap();
        assert!(pairs_only.half_width_at(0) < r.half_width_at(0));

        let mut last = f64::INFINITY;
        for alpha in [0.01, 0.05, 0.1, 0.3, 0.9] {
            let w = delta_rectangle(&theta, &[0.7], alpha, 100, Multiplicity::DSquared)
                .unwrap()
                .half_width_at(0);
            assert!(w < last);
            last = w;
        }
        assert!(delta_rectangle(&theta, &[0.0], 0.1, 100, Multiplicity::DSquared).is_err());
        assert_eq!(
            appendix_union_rectangle(&theta, &[1.0], 0.1, 100)
                .unwrap()
                .half_width_at(0),
            r.half_width_at(0)
        );
        let (lo, hi) = single_entry_interval(0.0, 1.0, 0.05, 100).unwrap();
        assert!((hi - 0.1959963984540054).abs() < 1e-9 && (lo + hi).abs() < 1e-15);
    }

    #[test]
    fn diagnostics_at_identity() {
        let s = CovMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let diag = delta_diagnostics(&s).unwrap();
        assert!(diag.xi_hat < 10.0);
        assert!((diag.xi_hat - 1.0).abs() < 1e-12);
        assert!(diag.gamma_hat.is_finite() && diag.rho_hat.is_finite());
        assert!((diag.min_eig_t - 2.0).abs() < 1e-10);
    }

    #[test]
    fn diagnostics_scale_homogeneously() {
        // theta is scale free, so l scales like 1/c, H like 1/c^2 and U' like 1/c
        // when S is multiplied by c
        let s = cov(3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]);
        let base = delta_diagnostics(&s).unwrap();
        let c = 4.0;
        let scaled = delta_diagnostics(&s.scaled(c).unwrap()).unwrap();
        assert!((scaled.xi_hat * c / base.xi_hat - 1.0).abs() < 1e-8);
        assert!((scaled.gamma_hat * c * c / base.gamma_hat - 1.0).abs() < 1e-3);
        assert!((scaled.rho_hat * c / base.rho_hat - 1.0).abs() < 1e-3);
    }

    #[test]
    fn diagnostics_two_features() {
        let diag = delta_diagnostics(&cov(2, &[1.0, 0.6, 0.6, 2.0])).unwrap();
        for v in [diag.gamma_hat, diag.xi_hat, diag.rho_hat, diag.min_eig_t] {
            assert!(v.is_finite() && v >= 0.0);
        }
    }
}
