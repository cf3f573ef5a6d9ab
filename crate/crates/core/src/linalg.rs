//! Matrix primitives: column-major vectorization, commutation and Kronecker
//! operators, sample moments, precision and partial-correlation matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue floor used by [`precision`] when no tolerance is given.
pub const DEFAULT_MIN_EIG_REL_TOL: f64 = 1e-10;

/// An `n x D` observation matrix; rows are samples, columns are features.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let labels = (1..=values.ncols()).map(|j| j.to_string()).collect();
        Self::with_labels(values, labels)
    }

    pub fn with_labels(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 observations, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 features, got {}",
                values.ncols()
            )));
        }
        if labels.len() != values.ncols() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} features",
                labels.len(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::InvalidArgument(format!(
                "non-finite value at row {i}, column {j}"
            )));
        }
        Ok(Self { values, labels })
    }

    /// Builds from row vectors. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("rows have unequal lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Rows picked by index, repeats allowed. Labels are kept.
    pub fn select_rows(&self, rows: &[usize]) -> DataMatrix {
        let d = self.dim();
        let values = DMatrix::from_fn(rows.len(), d, |i, j| self.values[(rows[i], j)]);
        DataMatrix {
            values,
            labels: self.labels.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<DataMatrix> {
        let values = self.values.select_columns(cols);
        let labels = cols.iter().map(|&c| self.labels[c].clone()).collect();
        DataMatrix::with_labels(values, labels)
    }

    pub fn scaled(&self, c: f64) -> Result<DataMatrix> {
        DataMatrix::with_labels(&self.values * c, self.labels.clone())
    }
}

/// A symmetric `D x D` covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    values: DMatrix<f64>,
}

impl CovMatrix {
    /// Symmetrizes the input. Fails on non-square, non-finite or negative
    /// diagonal input.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "covariance must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariance has non-finite entries".into()));
        }
        if let Some(j) = (0..values.nrows()).find(|&j| values[(j, j)] < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "covariance has negative diagonal at {j}"
            )));
        }
        Ok(Self {
            values: symmetrize(&values),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn scaled(&self, c: f64) -> Result<CovMatrix> {
        CovMatrix::new(&self.values * c)
    }
}

/// Inverse of a positive definite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    values: DMatrix<f64>,
    source_min_eigenvalue: f64,
}

impl PrecisionMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Smallest eigenvalue of the covariance that was inverted.
    pub fn source_min_eigenvalue(&self) -> f64 {
        self.source_min_eigenvalue
    }
}

/// Partial correlations. The diagonal is fixed at 1; only off-diagonal
/// entries carry meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCorrMatrix {
    values: DMatrix<f64>,
}

impl PartialCorrMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[(j, k)]
    }

    /// Off-diagonal entries in [`pairs`] order.
    pub fn upper(&self) -> Vec<f64> {
        upper_triangle(&self.values)
    }
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Unordered pairs `(j, k)` with `j < k`, in lexicographic order.
pub fn pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |j| (j + 1..d).map(move |k| (j, k)))
}

pub fn num_pairs(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

/// Position of `(j, k)`, `j < k`, within [`pairs`].
pub fn pair_index(d: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < d);
    j * (2 * d - j - 1) / 2 + (k - j - 1)
}

pub fn upper_triangle(a: &DMatrix<f64>) -> Vec<f64> {
    pairs(a.nrows()).map(|(j, k)| a[(j, k)]).collect()
}

/// Column-major stacking: `vec(A)[i + m*j] = A[i, j]`.
pub fn vec(a: &DMatrix<f64>) -> Vec<f64> {
    a.as_slice().to_vec()
}

pub fn unvec(v: &[f64], m: usize, n: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), m * n, "unvec: length {} != {m}x{n}", v.len());
    DMatrix::from_column_slice(m, n, v)
}

/// The permutation `K` with `K vec(A) = vec(A^T)` for every `m x n` matrix
/// `A`, stored as an index map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommutationMatrix {
    m: usize,
    n: usize,
    // out[p] = input[source[p]]
    source: Vec<usize>,
}

impl CommutationMatrix {
    pub fn new(m: usize, n: usize) -> Self {
        assert!(m >= 1 && n >= 1, "commutation matrix needs m, n >= 1");
        let mut source = vec![0; m * n];
        for i in 0..m {
            for j in 0..n {
                // vec(A^T)[j + n*i] = A[i, j] = vec(A)[i + m*j]
                source[j + n * i] = i + m * j;
            }
        }
        Self { m, n, source }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn size(&self) -> usize {
        self.source.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.source
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.size());
        self.source.iter().map(|&s| v[s]).collect()
    }

    /// `K * M`: permutes the rows of `M`.
    pub fn apply_rows(&self, mat: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(mat.nrows(), self.size());
        DMatrix::from_fn(mat.nrows(), mat.ncols(), |r, c| mat[(self.source[r], c)])
    }

    /// `M * K`: permutes the columns of `M`.
    pub fn apply_cols(&self, mat: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(mat.ncols(), self.size());
        // (M K)[r, c] = sum_p M[r, p] K[p, c]; K[p, c] = 1 iff source[p] == c
        let mut out = DMatrix::zeros(mat.nrows(), mat.ncols());
        for (p, &c) in self.source.iter().enumerate() {
            out.set_column(c, &mat.column(p));
        }
        out
    }
}

pub fn commutation_matrix(m: usize, n: usize) -> CommutationMatrix {
    CommutationMatrix::new(m, n)
}

/// Block `(i, j)` of the result is `A[i, j] * B`.
pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let (p, q) = b.shape();
    let mut out = DMatrix::zeros(m * p, n * q);
    for j in 0..n {
        for i in 0..m {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            out.view_mut((i * p, j * q), (p, q)).copy_from(&(b * aij));
        }
    }
    out
}

/// Sample covariance with divisor `n`.
pub fn sample_covariance(x: &DataMatrix) -> CovMatrix {
    CovMatrix {
        values: covariance_of(x.values()),
    }
}

pub(crate) fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub(crate) fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let mut c = x.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    c
}

pub(crate) fn covariance_of(x: &DMatrix<f64>) -> DMatrix<f64> {
    let c = centered(x);
    let s = c.tr_mul(&c) / x.nrows() as f64;
    symmetrize(&s)
}

/// Inverts `S` after checking its smallest eigenvalue against
/// `1e-10 * lambda_max`.
pub fn precision(s: &CovMatrix) -> Result<PrecisionMatrix> {
    precision_impl(s.values(), None)
}

/// Inverts `S`, failing when `lambda_min(S) <= min_eig_tol`.
pub fn precision_with_tolerance(s: &CovMatrix, min_eig_tol: f64) -> Result<PrecisionMatrix> {
    precision_impl(s.values(), Some(min_eig_tol))
}

fn precision_impl(s: &DMatrix<f64>, tol: Option<f64>) -> Result<PrecisionMatrix> {
    let eig = s.clone().symmetric_eigen();
    let lambda_min = eig.eigenvalues.min();
    let lambda_max = eig.eigenvalues.max();
    let tolerance = tol.unwrap_or(DEFAULT_MIN_EIG_REL_TOL * lambda_max.max(0.0));
    if !(lambda_min > tolerance) || lambda_max <= 0.0 {
        return Err(Error::SingularCovariance {
            min_eigenvalue: lambda_min,
            tolerance,
        });
    }
    let v = &eig.eigenvectors;
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let omega = v * inv_diag * v.transpose();
    Ok(PrecisionMatrix {
        values: symmetrize(&omega),
        source_min_eigenvalue: lambda_min,
    })
}

/// Wraps an already-inverted matrix. The caller vouches for `values` being
/// the inverse of a positive definite matrix whose smallest eigenvalue is
/// `source_min_eigenvalue`.
pub fn precision_from_parts(values: DMatrix<f64>, source_min_eigenvalue: f64) -> PrecisionMatrix {
    PrecisionMatrix {
        values: symmetrize(&values),
        source_min_eigenvalue,
    }
}

/// `theta_jk = -Omega_jk / sqrt(Omega_jj Omega_kk)`, unit diagonal.
pub fn partial_correlations(omega: &PrecisionMatrix) -> Result<PartialCorrMatrix> {
    Ok(PartialCorrMatrix {
        values: standardize_offdiag(omega.values(), -1.0).map_err(|index| Error::NonPositiveDiagonal { index })?,
    })
}

/// Marginal correlations `r_jk = S_jk / sqrt(S_jj S_kk)`, unit diagonal.
pub fn sample_correlations(s: &CovMatrix) -> Result<DMatrix<f64>> {
    correlations_of(s.values())
}

/// Correlations of an already symmetric covariance matrix.
pub(crate) fn correlations_of(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    standardize_offdiag(s, 1.0).map_err(|index| Error::ZeroVariance { index })
}

/// `sign * A_jk / sqrt(A_jj A_kk)` off the diagonal, clamped to [-1, 1];
/// ones on the diagonal. Returns the first index with a non-positive
/// diagonal on failure.
fn standardize_offdiag(a: &DMatrix<f64>, sign: f64) -> std::result::Result<DMatrix<f64>, usize> {
    let d = a.nrows();
    if let Some(j) = (0..d).find(|&j| !(a[(j, j)] > 0.0)) {
        return Err(j);
    }
    let inv_sd: Vec<f64> = (0..d).map(|j| 1.0 / a[(j, j)].sqrt()).collect();
    Ok(DMatrix::from_fn(d, d, |j, k| {
        if j == k {
            1.0
        } else {
            (sign * a[(j, k)] * inv_sd[j] * inv_sd[k]).clamp(-1.0, 1.0)
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub frobenius: f64,
    /// Largest singular value.
    pub operator: f64,
    pub max: f64,
    /// Largest absolute column sum.
    pub col_sum_l1: f64,
    /// Sum of absolute entries.
    pub entry_sum: f64,
}

pub fn norms(a: &DMatrix<f64>) -> Norms {
    let operator = if a.is_empty() {
        0.0
    } else {
        a.clone().singular_values().max()
    };
    Norms {
        frobenius: a.norm(),
        operator,
        max: a.amax(),
        col_sum_l1: a
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        entry_sum: entry_sum(a.as_slice()),
    }
}

pub(crate) fn entry_sum(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::assert_close;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    mod approx_eq {
        macro_rules! assert_close {
            ($a:expr, $b:expr, $tol:expr) => {{
                let (a, b): (f64, f64) = ($a, $b);
                assert!((a - b).abs() <= $tol, "{} vs {} (tol {})", a, b, $tol);
            }};
        }
        pub(crate) use assert_close;
    }

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn vec_is_column_major() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(vec(&a), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&DMatrix::identity(2, 2)), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn vec_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 3, 2);
            assert_eq!(unvec(&vec(&a), 3, 2), a);
        }
    }

    #[test]
    fn commutation_small_cases() {
        assert_eq!(commutation_matrix(1, 1).permutation(), &[0]);
        assert_eq!(commutation_matrix(2, 2).permutation(), &[0, 2, 1, 3]);
    }

    #[test]
    fn commutation_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = commutation_matrix(2, 3);
        for _ in 0..100 {
            let a = random_matrix(&mut rng, 2, 3);
            assert_eq!(k.apply(&vec(&a)), vec(&a.transpose()));
        }
    }

    #[test]
    fn commutation_inverse_is_transposed_dims() {
        let k = commutation_matrix(3, 5);
        let kt = commutation_matrix(5, 3);
        let v: Vec<f64> = (0..15).map(|i| i as f64).collect();
        assert_eq!(kt.apply(&k.apply(&v)), v);
    }

    #[test]
    fn commutation_row_and_column_application_match_dense() {
        let k = commutation_matrix(3, 3);
        let mut dense = DMatrix::zeros(9, 9);
        for (p, &s) in k.permutation().iter().enumerate() {
            dense[(p, s)] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 9, 9);
        assert_eq!(k.apply_rows(&m), &dense * &m);
        assert_eq!(k.apply_cols(&m), &m * &dense);
    }

    #[test]
    fn kronecker_identities() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(kronecker(&i2, &i2), DMatrix::identity(4, 4));
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(kronecker(&DMatrix::from_element(1, 1, 2.0), &b), &b * 2.0);
    }

    #[test]
    fn kronecker_mixed_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 2, 3);
            let b = random_matrix(&mut rng, 3, 2);
            let c = random_matrix(&mut rng, 3, 2);
            let d = random_matrix(&mut rng, 2, 4);
            let lhs = kronecker(&a, &b) * kronecker(&c, &d);
            let rhs = kronecker(&(&a * &c), &(&b * &d));
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn kronecker_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 3, 2);
        let b = random_matrix(&mut rng, 2, 4);
        assert_eq!(kronecker(&a, &b), a.kronecker(&b));
    }

    #[test]
    fn covariance_small_cases() {
        let x = DataMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(sample_covariance(&x).values(), &DMatrix::from_element(2, 2, 1.0));

        let x = DataMatrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![4.0, 5.0]]).unwrap();
        let s = sample_covariance(&x);
        assert_eq!(s.values()[(1, 1)], 0.0);
        assert_eq!(s.values()[(0, 1)], 0.0);
    }

    #[test]
    fn covariance_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let raw = DMatrix::from_fn(50, 4, |_, j| rng.random_range(-1.0..1.0) * (j + 1) as f64 + 10.0);
        let x = DataMatrix::new(raw.clone()).unwrap();
        let s = sample_covariance(&x);
        // two-pass with compensated summation
        let kahan = |it: &mut dyn Iterator<Item = f64>| {
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for v in it {
                let y = v - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            sum
        };
        let means: Vec<f64> = (0..4)
            .map(|j| kahan(&mut (0..50).map(|i| raw[(i, j)])) / 50.0)
            .collect();
        for j in 0..4 {
            for k in 0..4 {
                let oracle = kahan(&mut (0..50).map(|i| (raw[(i, j)] - means[j]) * (raw[(i, k)] - means[k]))) / 50.0;
                let got = s.values()[(j, k)];
                assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300) + 1e-15);
            }
        }
    }

    #[test]
    fn precision_examples() {
        let id = CovMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert!((precision(&id).unwrap().values() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);

        let s = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]) / 0.75;
        assert!((precision(&s).unwrap().values() - expected).amax() < 1e-12);
    }

    #[test]
    fn precision_rejects_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DataMatrix::new(random_matrix(&mut rng, 4, 4)).unwrap();
        // centering removes one rank: D = n is singular
        let err = precision(&sample_covariance(&x)).unwrap_err();
        assert!(matches!(err, Error::SingularCovariance { .. }));
    }

    #[test]
    fn precision_respects_explicit_tolerance() {
        let s = CovMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.01]))).unwrap();
        assert!(precision_with_tolerance(&s, 0.001).is_ok());
        assert!(precision_with_tolerance(&s, 0.1).is_err());
    }

    #[test]
    fn partial_correlation_examples() {
        let omega = precision_from_parts(DMatrix::identity(3, 3), 1.0);
        assert_eq!(partial_correlations(&omega).unwrap().values(), &DMatrix::identity(3, 3));

        let s = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let theta = partial_correlations(&precision(&s).unwrap()).unwrap();
        assert_close!(theta.get(0, 1), 0.5, 1e-12);

        let omega = DMatrix::from_row_slice(3, 3, &[1.0, -0.9, 0.0, -0.9, 1.81, -0.9, 0.0, -0.9, 1.81]);
        let theta = partial_correlations(&precision_from_parts(omega, 0.1)).unwrap();
        assert_close!(theta.get(0, 1), 0.9 / 1.81f64.sqrt(), 1e-12);
        assert_close!(theta.get(0, 1), 0.66897, 1e-5);
        assert_eq!(theta.get(0, 2), 0.0);
    }

    #[test]
    fn partial_correlations_reject_bad_diagonal() {
        let omega = precision_from_parts(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), 1.0);
        assert_eq!(
            partial_correlations(&omega).unwrap_err(),
            Error::NonPositiveDiagonal { index: 1 }
        );
    }

    #[test]
    fn correlation_examples() {
        let s = CovMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0]))).unwrap();
        let r = sample_correlations(&s).unwrap();
        assert_eq!(r, DMatrix::identity(3, 3));

        let s = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0])).unwrap();
        assert_close!(sample_correlations(&s).unwrap()[(0, 1)], 1.0, 1e-15);

        let s = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(sample_correlations(&s).unwrap_err(), Error::ZeroVariance { index: 0 });
    }

    #[test]
    fn correlations_match_standardized_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let raw = DMatrix::from_fn(40, 5, |_, j| rng.random_range(-1.0..1.0) * (j + 1) as f64);
        let x = DataMatrix::new(raw.clone()).unwrap();
        let r = sample_correlations(&sample_covariance(&x)).unwrap();
        let mut z = centered(&raw);
        for mut col in z.column_iter_mut() {
            let sd = (col.norm_squared() / 40.0).sqrt();
            col /= sd;
        }
        let oracle = z.tr_mul(&z) / 40.0;
        assert!((r - oracle).amax() < 1e-12);
    }

    #[test]
    fn norms_examples() {
        let n = norms(&DMatrix::identity(3, 3));
        assert_close!(n.frobenius, 3f64.sqrt(), 1e-15);
        assert_close!(n.operator, 1.0, 1e-14);
        assert_eq!((n.max, n.col_sum_l1, n.entry_sum), (1.0, 1.0, 3.0));

        let n = norms(&DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]));
        assert_close!(n.operator, 2.0, 1e-14);
    }

    #[test]
    fn operator_norm_is_spectral_radius_for_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 5, 5);
            let sym = &a + a.transpose();
            let radius = sym.clone().symmetric_eigen().eigenvalues.amax();
            assert_close!(norms(&sym).operator, radius, 1e-10);
        }
    }

    #[test]
    fn pair_index_matches_enumeration() {
        for d in 2..7 {
            for (idx, (j, k)) in pairs(d).enumerate() {
                assert_eq!(pair_index(d, j, k), idx);
            }
            assert_eq!(pairs(d).count(), num_pairs(d));
        }
    }

    #[test]
    fn data_matrix_rejects_bad_input() {
        assert!(DataMatrix::from_rows(&[vec![1.0, 2.0]]).is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0], vec![2.0]]).is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0, f64::NAN], vec![2.0, 1.0]]).is_err());
    }
}
