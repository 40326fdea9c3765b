//! Comparison algorithms and the subspace error metric.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, ops, sym_eigh, DenseVector, EigenPairs, SymmetricMatrix};

/// Column means of a data matrix (rows are samples).
pub fn column_mean(x: &DMatrix<f64>) -> DenseVector {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// The `m` leading eigenpairs of the column-centered scatter `XᵀX`.
pub fn batch_pca(x: &DMatrix<f64>, m: usize) -> Result<EigenPairs> {
    batch_pca_with_mean(x, Some(&column_mean(x)), m)
}

/// Like [`batch_pca`] but centered by `mean`, or not centered at all.
///
/// With fewer rows than columns the eigenproblem is solved on the `n × n`
/// Gram matrix instead of the `d × d` scatter.
pub fn batch_pca_with_mean(x: &DMatrix<f64>, mean: Option<&DenseVector>, m: usize) -> Result<EigenPairs> {
    let (n, d) = x.shape();
    if m == 0 || m > d {
        return Err(Error::invalid(format!("need 1 <= m <= d, got m = {m}, d = {d}")));
    }
    if n < m + 1 {
        return Err(Error::InsufficientData { rows: n, m });
    }
    linalg::check_finite("data", x.as_slice())?;
    if let Some(mu) = mean {
        if mu.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: mu.len() });
        }
    }
    if n >= d {
        return Ok(sym_eigh(&SymmetricMatrix::scatter(x, mean))?.truncate(m));
    }
    let mut xc = x.clone();
    if let Some(mu) = mean {
        for mut row in xc.row_iter_mut() {
            row -= mu.transpose();
        }
    }
    let gram = SymmetricMatrix::from_matrix(&xc * xc.transpose())?;
    let small = sym_eigh(&gram)?;
    let top = small.value(0).max(0.0);
    let mut values = Vec::with_capacity(m);
    let mut columns: Vec<DenseVector> = Vec::with_capacity(m);
    for i in 0..n.min(m) {
        let lambda = small.value(i);
        if lambda <= 1e-13 * top || lambda <= 0.0 {
            break;
        }
        let q = xc.tr_mul(&small.vector(i)) / lambda.sqrt();
        values.push(lambda);
        columns.push(q);
    }
    let mut basis = linalg::orthonormalize(&columns)?.basis;
    if basis.ncols() < m {
        basis = complete_basis(basis, m)?;
    }
    values.resize(m, 0.0);
    EigenPairs::new(values, basis)
}

/// Pads an orthonormal `d × k` basis to `m` columns with directions from its
/// orthogonal complement.
pub fn complete_basis(basis: DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let d = basis.nrows();
    let mut cols: Vec<DenseVector> = basis.column_iter().map(|c| c.into_owned()).collect();
    let mut k = 0;
    while cols.len() < m && k < d {
        let mut e = DVector::zeros(d);
        e[k] = 1.0;
        k += 1;
        let mut trial = cols.clone();
        trial.push(e);
        let o = linalg::orthonormalize(&trial)?;
        if o.basis.ncols() == trial.len() {
            cols = o.basis.column_iter().map(|c| c.into_owned()).collect();
        }
    }
    if cols.len() < m {
        return Err(Error::Degenerate(format!("cannot extend basis to {m} columns in dimension {d}")));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Orthonormal basis for the span of `pairs`' vectors, taken in order,
/// keeping the eigenvalue estimates. Used to score estimators whose vectors
/// are only approximately orthogonal.
pub fn orthonormal_estimate(pairs: &EigenPairs) -> Result<EigenPairs> {
    if pairs.gram_deviation() <= 1e-12 {
        return Ok(pairs.clone());
    }
    let cols: Vec<DenseVector> = pairs.vectors().column_iter().map(|c| c.into_owned()).collect();
    let o = linalg::orthonormalize(&cols)?;
    let m = cols.len();
    let mut values: Vec<f64> = o.kept.iter().map(|&j| pairs.value(j)).collect();
    let basis = if o.basis.ncols() < m { complete_basis(o.basis, m)? } else { o.basis };
    values.resize(m, 0.0);
    EigenPairs::new(values, basis)
}

/// Subspace distance `‖P̃ − P‖²_F / ‖P‖²_F` between the spans of two
/// orthonormal bases, in `[0, 2]`.
pub fn eigenspace_error(estimate: &EigenPairs, reference: &EigenPairs) -> Result<f64> {
    if estimate.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.dim(),
            got: estimate.dim(),
        });
    }
    if estimate.count() != reference.count() {
        return Err(Error::DimensionMismatch {
            expected: reference.count(),
            got: estimate.count(),
        });
    }
    for (what, p) in [("estimate", estimate), ("reference", reference)] {
        let dev = p.gram_deviation();
        if dev > 1e-6 {
            return Err(Error::invalid(format!("{what} basis is not orthonormal (deviation {dev:e})")));
        }
    }
    let m = reference.count() as f64;
    let cross = reference.vectors().tr_mul(estimate.vectors());
    let overlap = cross.norm_squared();
    Ok(((2.0 * m - 2.0 * overlap) / m).clamp(0.0, 2.0))
}

/// Incremental truncated eigendecomposition: each sample is split into its
/// projection on the current basis and a residual direction, and the
/// bordered `(m+1) × (m+1)` problem is solved exactly.
#[derive(Clone, Debug)]
pub struct Ipca {
    pairs: EigenPairs,
    mean0: DenseVector,
    n: usize,
}

impl Ipca {
    pub fn from_batch(x0: &DMatrix<f64>, m: usize) -> Result<Self> {
        let mean = column_mean(x0);
        Self::from_batch_centered(x0, mean, m)
    }

    /// Warm start with a fixed centering vector.
    pub fn from_batch_centered(x0: &DMatrix<f64>, mean0: DenseVector, m: usize) -> Result<Self> {
        let pairs = batch_pca_with_mean(x0, Some(&mean0), m)?;
        Ok(Ipca { pairs, mean0, n: x0.nrows() })
    }

    pub fn ingest(&mut self, x: &DenseVector) -> Result<()> {
        let d = self.pairs.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        linalg::check_finite("sample", x.as_slice())?;
        self.n += 1;
        let xc = x - &self.mean0;
        let q = self.pairs.vectors();
        let m = self.pairs.count();
        let c = ops::project(q, &xc);
        let mut res = xc.clone();
        ops::axpy(-1.0, ops::combine(q, &c).as_slice(), res.as_mut_slice());
        let beta = res.norm();
        let bordered = beta > 1e-12 * xc.norm();
        let k = if bordered { m + 1 } else { m };
        let mut small = DMatrix::zeros(k, k);
        for i in 0..m {
            small[(i, i)] = self.pairs.value(i);
            for j in 0..m {
                small[(i, j)] += c[i] * c[j];
            }
            if bordered {
                small[(i, m)] = beta * c[i];
                small[(m, i)] = beta * c[i];
            }
        }
        if bordered {
            small[(m, m)] = beta * beta;
        }
        ops::tally(k * k);
        let eig = sym_eigh(&SymmetricMatrix::from_matrix(small)?)?.truncate(m);
        let (values, u) = eig.into_parts();
        let vectors = if bordered {
            let mut basis = q.clone().insert_column(m, 0.0);
            basis.set_column(m, &(res / beta));
            &basis * u
        } else {
            q * u
        };
        ops::tally(d * k * m);
        self.pairs = EigenPairs::new(values, vectors)?;
        Ok(())
    }

    /// Eigenpairs at scatter scale.
    pub fn eigenpairs(&self) -> &EigenPairs {
        &self.pairs
    }

    /// Eigenpairs with eigenvalues at covariance scale.
    pub fn components(&self) -> EigenPairs {
        let mut p = self.pairs.clone();
        p.scale_values(1.0 / self.n.max(1) as f64);
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Candid covariance-free incremental PCA with amnesic averaging.
#[derive(Clone, Debug)]
pub struct Ccipca {
    v: Vec<DenseVector>,
    mean0: DenseVector,
    n: usize,
    ell: f64,
}

impl Ccipca {
    /// Default amnesic parameter.
    pub const DEFAULT_ELL: f64 = 2.0;

    /// Seeds the direction estimates with `(λⱼ/n₀) qⱼ` from batch PCA.
    pub fn from_batch(x0: &DMatrix<f64>, m: usize, ell: f64) -> Result<Self> {
        Self::from_batch_centered(x0, column_mean(x0), m, ell)
    }

    pub fn from_batch_centered(x0: &DMatrix<f64>, mean0: DenseVector, m: usize, ell: f64) -> Result<Self> {
        let pairs = batch_pca_with_mean(x0, Some(&mean0), m)?;
        let n = x0.nrows();
        let v = (0..m)
            .map(|j| {
                // A zero eigenvalue would leave the direction undefined.
                let scale = (pairs.value(j) / n as f64).max(f64::MIN_POSITIVE.sqrt());
                pairs.vector(j) * scale
            })
            .collect();
        Self::from_directions(v, mean0, n, ell)
    }

    /// Starts from explicit (unnormalized) direction estimates after `n`
    /// samples.
    pub fn from_directions(v: Vec<DenseVector>, mean0: DenseVector, n: usize, ell: f64) -> Result<Self> {
        if !(ell >= 0.0) || !ell.is_finite() {
            return Err(Error::invalid(format!("amnesic parameter must be >= 0, got {ell}")));
        }
        if let Some(bad) = v.iter().find(|x| x.len() != mean0.len()) {
            return Err(Error::DimensionMismatch { expected: mean0.len(), got: bad.len() });
        }
        Ok(Ccipca { v, mean0, n, ell })
    }

    pub fn ingest(&mut self, x: &DenseVector) -> Result<()> {
        let d = self.mean0.len();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        linalg::check_finite("sample", x.as_slice())?;
        self.n += 1;
        let n = self.n as f64;
        // Early on the amnesic weight would make the old estimate negative.
        let ell = self.ell.min(n - 1.0).max(0.0);
        let mut u = x - &self.mean0;
        for v in &mut self.v {
            let vn = v.norm();
            ops::tally(d);
            if vn == 0.0 {
                *v = u.clone() * ((1.0 + ell) / n) * u.norm();
            } else {
                let proj = ops::dot(u.as_slice(), v.as_slice()) / vn;
                ops::scale((n - 1.0 - ell) / n, v.as_mut_slice());
                ops::axpy((1.0 + ell) / n * proj, u.as_slice(), v.as_mut_slice());
            }
            let vn = v.norm();
            ops::tally(d);
            if vn > 0.0 {
                let coef = ops::dot(u.as_slice(), v.as_slice()) / (vn * vn);
                ops::axpy(-coef, v.as_slice(), u.as_mut_slice());
            }
        }
        Ok(())
    }

    /// Raw direction estimates.
    pub fn directions(&self) -> &[DenseVector] {
        &self.v
    }

    /// Orthonormalized directions with eigenvalue estimates `‖vⱼ‖`.
    pub fn components(&self) -> Result<EigenPairs> {
        let norms: Vec<f64> = self.v.iter().map(|v| v.norm()).collect();
        let o = linalg::orthonormalize(&self.v)?;
        let mut values: Vec<f64> = o.kept.iter().map(|&j| norms[j]).collect();
        let m = self.v.len();
        let basis = if o.basis.ncols() < m {
            complete_basis(o.basis, m)?
        } else {
            o.basis
        };
        values.resize(m, 0.0);
        EigenPairs::new(values, basis)
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projector_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn line_through_origin() {
        let dir = DVector::from_vec(vec![3.0, 4.0]) / 5.0;
        let x = DMatrix::from_fn(6, 2, |i, j| (i as f64 - 2.5) * dir[j]);
        let p = batch_pca(&x, 1).unwrap();
        assert!(projector_distance(p.vector(0), dir.column(0)) < 1e-12);
    }

    #[test]
    fn full_rank_reconstructs_scatter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_data(100, 6, &mut rng);
        let p = batch_pca(&x, 6).unwrap();
        let s = SymmetricMatrix::scatter(&x, Some(&column_mean(&x)));
        let err = (p.reconstruct() - s.as_matrix()).norm();
        assert!(err <= 1e-10 * s.as_matrix().norm().max(1.0));
    }

    #[test]
    fn gram_route_matches_scatter_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_data(12, 30, &mut rng);
        let mean = column_mean(&x);
        let gram = batch_pca_with_mean(&x, Some(&mean), 4).unwrap();
        let direct = sym_eigh(&SymmetricMatrix::scatter(&x, Some(&mean))).unwrap().truncate(4);
        for i in 0..4 {
            assert!((gram.value(i) - direct.value(i)).abs() < 1e-10);
        }
        assert!(eigenspace_error(&gram, &direct).unwrap() < 1e-12);
    }

    #[test]
    fn rank_deficient_gram_is_completed() {
        let x = DMatrix::from_fn(4, 10, |i, j| if j == 0 { i as f64 } else { 0.0 });
        let p = batch_pca_with_mean(&x, None, 3).unwrap();
        assert_eq!(p.count(), 3);
        assert!(p.gram_deviation() < 1e-12);
        assert_eq!(p.value(1), 0.0);
    }

    #[test]
    fn insufficient_rows() {
        let x = DMatrix::zeros(3, 5);
        assert!(matches!(batch_pca(&x, 3), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn metric_examples() {
        let id = EigenPairs::new(vec![1.0, 1.0], DMatrix::identity(4, 2)).unwrap();
        assert_eq!(eigenspace_error(&id, &id).unwrap(), 0.0);
        let other = EigenPairs::new(vec![1.0, 1.0], DMatrix::identity(4, 4).columns(2, 2).into_owned()).unwrap();
        assert!((eigenspace_error(&id, &other).unwrap() - 2.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = EigenPairs::new(vec![1.0], DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let b = EigenPairs::new(vec![1.0], DMatrix::from_column_slice(2, 1, &[s, s])).unwrap();
        assert!((eigenspace_error(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_rejects_non_orthonormal() {
        let bad = EigenPairs::new(vec![1.0, 1.0], DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 1.0])).unwrap();
        assert!(eigenspace_error(&bad, &bad).is_err());
    }

    #[test]
    fn ipca_in_span_keeps_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let x0 = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-1.0..1.0)) * basis.transpose();
        let mut ipca = Ipca::from_batch_centered(&x0, DVector::zeros(6), 2).unwrap();
        let before = ipca.eigenpairs().clone();
        let x = &basis * DVector::from_vec(vec![0.3, -0.7]);
        ipca.ingest(&x).unwrap();
        assert!(eigenspace_error(ipca.eigenpairs(), &before).unwrap() < 1e-14);
    }

    #[test]
    fn ccipca_single_sample_fixed_point() {
        let x = DVector::from_vec(vec![3.0, 4.0]);
        let mut c = Ccipca::from_directions(vec![x.clone()], DVector::zeros(2), 0, 0.0).unwrap();
        c.ingest(&x).unwrap();
        // v ← (xᵀx̂) x = ‖x‖² x̂
        assert!((c.directions()[0].clone() - &x * 5.0).norm() < 1e-12);
    }

    #[test]
    fn ccipca_repeated_sample_converges() {
        let x = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let start = DVector::from_vec(vec![0.2, -0.5, 1.0]);
        let mut c = Ccipca::from_directions(vec![start], DVector::zeros(3), 1, 2.0).unwrap();
        for _ in 0..1000 {
            c.ingest(&x).unwrap();
        }
        let got = c.components().unwrap();
        assert!(projector_distance(got.vector(0), x.normalize().column(0)) <= 1e-3);
    }

    #[test]
    fn ccipca_alternating_orthogonal_samples() {
        let e1 = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let v0 = vec![DVector::from_vec(vec![1.0, 0.0, 0.0]), DVector::from_vec(vec![0.0, 1.0, 0.0])];
        let mut c = Ccipca::from_directions(v0, DVector::zeros(3), 10, 2.0).unwrap();
        for k in 0..200 {
            c.ingest(if k % 2 == 0 { &e1 } else { &e2 }).unwrap();
            let v = c.directions();
            assert!(v[0].normalize().dot(&v[1].normalize()).abs() <= 1e-10);
        }
    }
}
