//! Dense linear algebra shared by the rest of the crate.
//!
//! Vectors are plain `nalgebra` column vectors. Symmetric matrices and
//! eigenpair sets are thin newtypes that hold their invariants (exact
//! symmetry, descending eigenvalues, orthonormal columns) at construction.
//!
//! The [`ops`] submodule carries the multiply-accumulate counter used to
//! check per-update cost; every kernel that touches O(d) or more data goes
//! through it.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};

use crate::error::{Error, Result};

pub type DenseVector = DVector<f64>;

/// Multiply-accumulate accounting.
///
/// The counter is thread-local, so concurrent streams on different threads
/// never see each other's work.
pub mod ops {
    use std::cell::Cell;

    use nalgebra::{DMatrix, DVector};

    thread_local! {
        static MACS: Cell<u64> = const { Cell::new(0) };
    }

    #[inline]
    pub fn tally(n: usize) {
        MACS.with(|c| c.set(c.get() + n as u64));
    }

    pub fn count() -> u64 {
        MACS.with(|c| c.get())
    }

    pub fn reset() {
        MACS.with(|c| c.set(0));
    }

    /// Runs `f` and returns its result with the number of multiply-accumulates
    /// it performed on this thread.
    pub fn measure<R>(f: impl FnOnce() -> R) -> (R, u64) {
        let before = count();
        let out = f();
        (out, count() - before)
    }

    #[inline]
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        tally(a.len());
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[inline]
    pub fn norm_squared(a: &[f64]) -> f64 {
        dot(a, a)
    }

    /// `y += alpha * x`
    #[inline]
    pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), y.len());
        tally(x.len());
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += alpha * xi;
        }
    }

    #[inline]
    pub fn scale(alpha: f64, x: &mut [f64]) {
        tally(x.len());
        for xi in x.iter_mut() {
            *xi *= alpha;
        }
    }

    /// `Qᵀ v` for a d×m basis.
    pub fn project(q: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
        tally(q.nrows() * q.ncols());
        q.tr_mul(v)
    }

    /// `Q c` for a d×m basis.
    pub fn combine(q: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
        tally(q.nrows() * q.ncols());
        q * c
    }

    /// `Q c + alpha x` in one pass.
    pub fn combine_axpy(q: &DMatrix<f64>, c: &DVector<f64>, alpha: f64, x: &DVector<f64>) -> DVector<f64> {
        tally(q.nrows() * (q.ncols() + 1));
        let mut out = x * alpha;
        out.gemv(1.0, q, c, 1.0);
        out
    }
}

/// Unit-length copy of `v`, or `None` when its norm is zero or not finite.
pub fn normalized(v: &DenseVector) -> Option<DenseVector> {
    let norm = ops::norm_squared(v.as_slice()).sqrt();
    if norm > 0.0 && norm.is_finite() {
        let mut out = v.clone();
        ops::scale(1.0 / norm, out.as_mut_slice());
        Some(out)
    } else {
        None
    }
}

/// Frobenius distance between the rank-one projectors of two unit vectors,
/// `‖aaᵀ − bbᵀ‖_F = √(2 − 2(aᵀb)²)`. Sign-blind. Evaluated as
/// `√2 ‖b − (aᵀb) a‖` so that nearly parallel vectors do not lose digits.
pub fn projector_distance(a: DVectorView<'_, f64>, b: DVectorView<'_, f64>) -> f64 {
    let c = a.dot(&b);
    std::f64::consts::SQRT_2 * (b - a * c).norm()
}

pub(crate) fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

/// A real symmetric matrix. Symmetry holds bit-for-bit: every constructor
/// writes both triangles from the same value.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    pub fn zeros(d: usize) -> Self {
        SymmetricMatrix(DMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymmetricMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Builds the matrix from the lower triangle of `f(i, j)`, `i >= j`.
    pub fn from_lower_fn(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            for i in j..d {
                let x = f(i, j);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        SymmetricMatrix(m)
    }

    /// Accepts a square matrix whose triangles agree to within `1e-12`
    /// relative and averages them.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, not square",
                m.nrows(),
                m.ncols()
            )));
        }
        check_finite("matrix", m.as_slice())?;
        let scale = m.amax().max(1.0);
        let d = m.nrows();
        for j in 0..d {
            for i in j + 1..d {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::from_lower_fn(d, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
    }

    /// `Σ (x − mean)(x − mean)ᵀ` over the rows of `data`.
    pub fn scatter(data: &DMatrix<f64>, mean: Option<&DenseVector>) -> Self {
        let d = data.ncols();
        let centered = match mean {
            Some(mu) => {
                let mut c = data.clone();
                for mut row in c.row_iter_mut() {
                    row -= mu.transpose();
                }
                c
            }
            None => data.clone(),
        };
        let s = centered.tr_mul(&centered);
        Self::from_lower_fn(d, |i, j| s[(i, j)])
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn mul_vec(&self, x: &DenseVector) -> DenseVector {
        ops::tally(self.dim() * self.dim());
        &self.0 * x
    }

    /// `self += rho · v vᵀ`
    pub fn rank_one_update(&mut self, rho: f64, v: &DenseVector) {
        let d = self.dim();
        ops::tally(d * (d + 1) / 2);
        for j in 0..d {
            let a = rho * v[j];
            for i in j..d {
                let x = self.0[(i, j)] + a * v[i];
                self.0[(i, j)] = x;
                self.0[(j, i)] = x;
            }
        }
    }
}

/// `m` eigenpairs of a symmetric `d×d` matrix: eigenvalues descending,
/// eigenvectors stored as the columns of a `d×m` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPairs {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl EigenPairs {
    /// Pairs `values[k]` with column `k` of `vectors` and sorts descending.
    pub fn new(values: Vec<f64>, vectors: DMatrix<f64>) -> Result<Self> {
        if values.len() != vectors.ncols() {
            return Err(Error::DimensionMismatch {
                expected: vectors.ncols(),
                got: values.len(),
            });
        }
        check_finite("eigenvalues", &values)?;
        check_finite("eigenvectors", vectors.as_slice())?;
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        if order.iter().enumerate().all(|(i, &k)| i == k) {
            return Ok(EigenPairs { values, vectors });
        }
        let sorted_values = order.iter().map(|&k| values[k]).collect();
        let sorted_vectors = vectors.select_columns(order.iter());
        Ok(EigenPairs {
            values: sorted_values,
            vectors: sorted_vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> DVectorView<'_, f64> {
        self.vectors.column(i)
    }

    pub fn into_parts(self) -> (Vec<f64>, DMatrix<f64>) {
        (self.values, self.vectors)
    }

    /// Keeps the leading `m` pairs.
    pub fn truncate(mut self, m: usize) -> Self {
        if m < self.count() {
            self.values.truncate(m);
            self.vectors = self.vectors.columns(0, m).into_owned();
        }
        self
    }

    pub fn scale_values(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub(crate) fn vectors_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.vectors
    }

    /// `max |QᵀQ − I|` over all entries.
    pub fn gram_deviation(&self) -> f64 {
        let g = self.vectors.tr_mul(&self.vectors);
        let m = g.nrows();
        let mut worst: f64 = 0.0;
        for j in 0..m {
            for i in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `Q Λ Qᵀ`
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.dim(), self.count(), |i, j| {
            self.vectors[(i, j)] * self.values[j]
        });
        &scaled * self.vectors.transpose()
    }
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eigh(m: &SymmetricMatrix) -> Result<EigenPairs> {
    let d = m.dim();
    if d == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    check_finite("matrix", m.as_matrix().as_slice())?;
    let eig = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, 0).ok_or(
        Error::Convergence {
            lo: f64::NAN,
            hi: f64::NAN,
            iterations: 0,
        },
    )?;
    EigenPairs::new(eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors)
}

/// Result of [`orthonormalize`]: the kept vectors as orthonormal columns,
/// plus the input positions that were numerically dependent.
#[derive(Clone, Debug)]
pub struct Orthonormalized {
    pub basis: DMatrix<f64>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Modified Gram–Schmidt with one re-pass. A vector whose remainder falls to
/// `1e-14` of the largest input norm is dropped and reported.
pub fn orthonormalize(vectors: &[DenseVector]) -> Result<Orthonormalized> {
    let d = vectors.first().map_or(0, |v| v.len());
    if let Some(bad) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let largest = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut basis: Vec<DenseVector> = Vec::with_capacity(vectors.len());
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (idx, v) in vectors.iter().enumerate() {
        let mut w = v.clone();
        for _pass in 0..2 {
            for q in &basis {
                let c = ops::dot(q.as_slice(), w.as_slice());
                ops::axpy(-c, q.as_slice(), w.as_mut_slice());
            }
        }
        let norm = w.norm();
        if norm <= 1e-14 * largest || norm == 0.0 {
            dropped.push(idx);
            continue;
        }
        w /= norm;
        basis.push(w);
        kept.push(idx);
    }
    let basis = if basis.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&basis)
    };
    Ok(Orthonormalized {
        basis,
        kept,
        dropped,
    })
}

/// Orthonormalizes the columns of `q` in place, in column order. Columns are
/// expected to be independent; a dependent column is an error.
pub fn reorthonormalize_columns(q: &mut DMatrix<f64>) -> Result<()> {
    let cols: Vec<DenseVector> = q.column_iter().map(|c| c.into_owned()).collect();
    let out = orthonormalize(&cols)?;
    if !out.dropped.is_empty() {
        return Err(Error::Degenerate(format!(
            "basis columns {:?} became linearly dependent",
            out.dropped
        )));
    }
    *q = out.basis;
    Ok(())
}
