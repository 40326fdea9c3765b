//! Streaming PCA built on truncated rank-one updates of the scatter matrix.
//!
//! The state tracks the `m` leading eigenpairs of `XₙᵀXₙ`, where `Xₙ` holds
//! every sample seen so far centered by `mean0`. A new sample `x` enters as
//! the update `ρ v vᵀ` with `ρ = ‖x − mean0‖²`. Changing the centering vector
//! is itself two rank-one updates (see [`SpectralState::recenter`]).

use nalgebra::{DMatrix, DVector};

use crate::baselines::{batch_pca_with_mean, column_mean};
use crate::error::{Error, Result};
use crate::linalg::{self, ops, reorthonormalize_columns, DenseVector, EigenPairs, SymmetricMatrix};
use crate::rank_one::{update_spectrum, EigvecFormula, Order, RankOneUpdate, TruncatedSpectrum};

/// Which bookkeeping the stream keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Eigenpairs, trace and means only. First order, `μ ∈ {0, mean}`.
    CovarianceFree,
    /// Also stores the `d × d` scatter, enabling second order and `μ*`.
    CovarianceBacked,
}

/// Choice of the surrogate `μ` for the unknown eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MuPolicy {
    /// Data assumed to be rank `m`.
    Zero,
    /// Average unknown eigenvalue, from the running trace.
    Mean,
    /// `s / (1 − Σzᵢ²)`; needs the stored scatter.
    Star,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlinePcaConfig {
    pub m: usize,
    pub algorithm: Algorithm,
    pub order: Order,
    pub eigvec_formula: EigvecFormula,
    pub mu_policy: MuPolicy,
    /// Recenter on the running mean every this many ingests.
    pub recenter_every: Option<usize>,
    pub reorthonormalize_every: usize,
}

impl OnlinePcaConfig {
    /// Covariance-free, first order, truncated eigenvectors, `μ = mean`.
    pub fn new(m: usize) -> Self {
        OnlinePcaConfig {
            m,
            algorithm: Algorithm::CovarianceFree,
            order: Order::First,
            eigvec_formula: EigvecFormula::Truncated,
            mu_policy: MuPolicy::Mean,
            recenter_every: None,
            reorthonormalize_every: 100,
        }
    }

    /// Covariance-backed, second order.
    pub fn covariance_backed(m: usize) -> Self {
        OnlinePcaConfig {
            algorithm: Algorithm::CovarianceBacked,
            order: Order::Second,
            ..Self::new(m)
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn with_order(mut self, order: Order) -> Self {
        self.order = order;
        self
    }

    pub fn with_formula(mut self, formula: EigvecFormula) -> Self {
        self.eigvec_formula = formula;
        self
    }

    pub fn with_mu(mut self, mu: MuPolicy) -> Self {
        self.mu_policy = mu;
        self
    }

    pub fn with_recenter_every(mut self, every: Option<usize>) -> Self {
        self.recenter_every = every;
        self
    }

    pub fn with_reorthonormalize_every(mut self, every: usize) -> Self {
        self.reorthonormalize_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("m must be positive"));
        }
        if self.reorthonormalize_every == 0 {
            return Err(Error::config("reorthonormalize_every must be positive"));
        }
        if self.recenter_every == Some(0) {
            return Err(Error::config("recenter_every must be positive"));
        }
        if self.algorithm == Algorithm::CovarianceFree {
            if self.order == Order::Second {
                return Err(Error::config("second order needs the covariance-backed algorithm"));
            }
            if self.mu_policy == MuPolicy::Star {
                return Err(Error::config("mu = star needs the covariance-backed algorithm"));
            }
        }
        Ok(())
    }
}

/// What happened to one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IngestOutcome {
    Updated,
    /// The centered sample was zero and only the counters moved.
    Skipped,
}

/// The online model.
#[derive(Clone, Debug)]
pub struct SpectralState {
    cfg: OnlinePcaConfig,
    pairs: EigenPairs,
    n: usize,
    trace: f64,
    trace_carry: f64,
    mean0: DenseVector,
    running_mean: DenseVector,
    colsum: DenseVector,
    scatter: Option<SymmetricMatrix>,
    skipped: usize,
    ingests: usize,
}

impl SpectralState {
    /// Warm start from the batch PCA of `x0` centered by its column means.
    pub fn init_from_batch(x0: &DMatrix<f64>, cfg: OnlinePcaConfig) -> Result<Self> {
        let mean = column_mean(x0);
        Self::init_from_batch_centered(x0, mean, cfg)
    }

    /// Warm start with an explicit centering vector (zero for data known to
    /// be centered).
    pub fn init_from_batch_centered(x0: &DMatrix<f64>, mean0: DenseVector, cfg: OnlinePcaConfig) -> Result<Self> {
        cfg.validate()?;
        let (n, d) = x0.shape();
        if cfg.m > d {
            return Err(Error::config(format!("m = {} exceeds dimension {d}", cfg.m)));
        }
        if n <= cfg.m {
            return Err(Error::InsufficientData { rows: n, m: cfg.m });
        }
        if mean0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: mean0.len() });
        }
        linalg::check_finite("data", x0.as_slice())?;
        linalg::check_finite("mean", mean0.as_slice())?;
        let pairs = batch_pca_with_mean(x0, Some(&mean0), cfg.m)?;
        let mut colsum = DVector::zeros(d);
        let mut trace = 0.0;
        for row in x0.row_iter() {
            let xc = row.transpose() - &mean0;
            trace += xc.norm_squared();
            colsum += xc;
        }
        let scatter = match cfg.algorithm {
            Algorithm::CovarianceBacked => Some(SymmetricMatrix::scatter(x0, Some(&mean0))),
            Algorithm::CovarianceFree => None,
        };
        Ok(SpectralState {
            cfg,
            pairs,
            n,
            trace,
            trace_carry: 0.0,
            running_mean: column_mean(x0),
            mean0,
            colsum,
            scatter,
            skipped: 0,
            ingests: 0,
        })
    }

    pub fn config(&self) -> &OnlinePcaConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.pairs.dim()
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

    /// Running `tr(XₙᵀXₙ)`.
    pub fn trace(&self) -> f64 {
        self.trace + self.trace_carry
    }

    pub fn mean0(&self) -> &DenseVector {
        &self.mean0
    }

    pub fn running_mean(&self) -> &DenseVector {
        &self.running_mean
    }

    /// Column sums of the centered data.
    pub fn colsum(&self) -> &DenseVector {
        &self.colsum
    }

    pub fn scatter(&self) -> Option<&SymmetricMatrix> {
        self.scatter.as_ref()
    }

    /// Number of samples that coincided with `mean0`.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Adds `‖x_centered‖²` to the running trace with compensated summation.
    pub fn update_trace(&mut self, x_centered: &DenseVector) {
        self.add_trace(ops::norm_squared(x_centered.as_slice()));
    }

    fn add_trace(&mut self, delta: f64) {
        let sum = self.trace + delta;
        if self.trace.abs() >= delta.abs() {
            self.trace_carry += (self.trace - sum) + delta;
        } else {
            self.trace_carry += (delta - sum) + self.trace;
        }
        self.trace = sum;
    }

    /// Mean of the eigenvalues outside the retained set, from the trace.
    fn tail_mean(&self) -> f64 {
        let d = self.dim();
        let m = self.pairs.count();
        if d == m {
            return 0.0;
        }
        let kept: f64 = self.pairs.values().iter().sum();
        (self.trace() - kept) / (d - m) as f64
    }

    /// `μ` under the configured policy for update direction `v`.
    pub fn mu_value(&self, v: &DenseVector) -> Result<f64> {
        let mut spec = TruncatedSpectrum::new(&self.pairs, v, 0.0)?;
        if self.cfg.mu_policy == MuPolicy::Star {
            let a = self.scatter.as_ref().ok_or_else(|| Error::config("mu = star needs the scatter"))?;
            spec = spec.with_scatter(a)?;
        }
        Ok(self.mu_for(&spec))
    }

    fn mu_for(&self, spec: &TruncatedSpectrum<'_>) -> f64 {
        match self.cfg.mu_policy {
            MuPolicy::Zero => 0.0,
            MuPolicy::Mean => self.tail_mean(),
            MuPolicy::Star => match spec.s {
                Some(s) if spec.zres > 1e-14 => s / spec.zres,
                _ => self.tail_mean(),
            },
        }
    }

    /// Absorbs `scale · b bᵀ` into the eigenpairs, trace and scatter.
    fn absorb(&mut self, scale: f64, b: &DenseVector) -> Result<()> {
        let Some(upd) = RankOneUpdate::from_outer(scale, b) else {
            return Ok(());
        };
        let needs_scatter = self.cfg.order == Order::Second || self.cfg.mu_policy == MuPolicy::Star;
        let mut spec = TruncatedSpectrum::new(&self.pairs, upd.v(), 0.0)?;
        if needs_scatter {
            let a = self.scatter.as_ref().ok_or_else(|| Error::config("this configuration needs the scatter"))?;
            spec = spec.with_scatter(a)?;
        }
        spec.mu = self.mu_for(&spec);
        let pairs = update_spectrum(spec, upd.rho(), self.cfg.order, self.cfg.eigvec_formula)?;
        self.pairs = pairs;
        self.add_trace(upd.rho());
        if let Some(a) = self.scatter.as_mut() {
            a.rank_one_update(upd.rho(), upd.v());
        }
        Ok(())
    }

    /// Absorbs one sample.
    pub fn ingest(&mut self, x: &DenseVector) -> Result<IngestOutcome> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        linalg::check_finite("sample", x.as_slice())?;
        let xc = x - &self.mean0;
        self.n += 1;
        let step = (x - &self.running_mean) / self.n as f64;
        self.running_mean += step;
        self.colsum += &xc;
        self.ingests += 1;

        let norm = xc.norm();
        let outcome = if norm <= 1e-14 * x.norm().max(1.0) {
            self.skipped += 1;
            IngestOutcome::Skipped
        } else {
            self.absorb(1.0, &xc)?;
            IngestOutcome::Updated
        };

        if self.ingests.is_multiple_of(self.cfg.reorthonormalize_every) {
            self.reorthonormalize()?;
        }
        if let Some(every) = self.cfg.recenter_every {
            if self.ingests.is_multiple_of(every) {
                let target = self.running_mean.clone();
                self.recenter(&target)?;
            }
        }
        Ok(outcome)
    }

    /// Re-orthonormalizes the eigenvector basis.
    pub fn reorthonormalize(&mut self) -> Result<()> {
        reorthonormalize_columns(self.pairs.vectors_mut())
    }

    /// Re-centers the accumulated data on `mu2`.
    ///
    /// With `μ₃ = μ₂ − mean0` and `a` the centered column sums,
    /// `X̄ᵀX̄ = XᵀX − aμ₃ᵀ − μ₃aᵀ + nμ₃μ₃ᵀ`, and the symmetric 2×2 core
    /// `[[n, −1], [−1, 0]]` splits this into two rank-one updates along
    /// `(ρμ₃ − a)/√(ρ² + 1)` for its eigenvalues `ρ = (n ± √(n² + 4))/2`.
    pub fn recenter(&mut self, mu2: &DenseVector) -> Result<()> {
        let d = self.dim();
        if mu2.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: mu2.len() });
        }
        linalg::check_finite("centering vector", mu2.as_slice())?;
        let mu3 = mu2 - &self.mean0;
        if mu3.norm() <= 1e-14 {
            return Ok(());
        }
        let n = self.n as f64;
        let root = (n * n + 4.0).sqrt();
        // Both roots without cancellation: ρ₁ρ₂ = −1.
        let rho2 = 0.5 * (n + root);
        let rho1 = -1.0 / rho2;
        let a = self.colsum.clone();
        for rho in [rho1, rho2] {
            let mut b = &mu3 * rho - &a;
            b /= (rho * rho + 1.0).sqrt();
            ops::tally(2 * d);
            self.absorb(rho, &b)?;
        }
        self.colsum = a - &mu3 * n;
        self.mean0 = mu2.clone();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigh;

    #[test]
    fn config_validation() {
        assert!(OnlinePcaConfig::new(2).validate().is_ok());
        assert!(OnlinePcaConfig::new(2).with_order(Order::Second).validate().is_err());
        assert!(OnlinePcaConfig::new(2).with_mu(MuPolicy::Star).validate().is_err());
        assert!(OnlinePcaConfig::covariance_backed(2).with_mu(MuPolicy::Star).validate().is_ok());
        assert!(OnlinePcaConfig::new(0).validate().is_err());
        assert!(OnlinePcaConfig::new(1).with_recenter_every(Some(0)).validate().is_err());
    }

    #[test]
    fn alternating_axis_batch() {
        let x0 = DMatrix::from_fn(6, 3, |i, j| if j == 0 { if i % 2 == 0 { 1.0 } else { -1.0 } } else { 0.0 });
        let s = SpectralState::init_from_batch(&x0, OnlinePcaConfig::new(1)).unwrap();
        assert!((s.eigenpairs().value(0) - 6.0).abs() < 1e-12);
        assert!((s.eigenpairs().vector(0)[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn insufficient_batch() {
        let x0 = DMatrix::zeros(2, 4);
        assert!(matches!(
            SpectralState::init_from_batch(&x0, OnlinePcaConfig::new(2)),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn mean_policy_from_trace() {
        // Scatter diag(3, 2, 1, 1) from four axis-aligned samples.
        let x0 = DMatrix::from_row_slice(
            4,
            4,
            &[
                3f64.sqrt(), 0.0, 0.0, 0.0,
                0.0, 2f64.sqrt(), 0.0, 0.0,
                0.0, 0.0, 1.0, 0.0,
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        let s = SpectralState::init_from_batch_centered(&x0, DVector::zeros(4), OnlinePcaConfig::new(2)).unwrap();
        let v = DVector::from_element(4, 0.5);
        assert!((s.mu_value(&v).unwrap() - 1.0).abs() < 1e-12);

        let full = SpectralState::init_from_batch_centered(
            &DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            DVector::zeros(2),
            OnlinePcaConfig::new(2),
        )
        .unwrap();
        assert_eq!(full.mu_value(&DVector::from_vec(vec![1.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn star_policy_orthogonal_direction() {
        let x0 = DMatrix::identity(3, 3);
        let cfg = OnlinePcaConfig::covariance_backed(1).with_mu(MuPolicy::Star);
        let s = SpectralState::init_from_batch_centered(&x0, DVector::zeros(3), cfg).unwrap();
        // Scatter is I; take v orthogonal to the retained eigenvector.
        let q = s.eigenpairs().vector(0).into_owned();
        let mut v = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        v -= &q * q.dot(&v);
        let v = v.normalize();
        assert!((s.mu_value(&v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_updates() {
        let x0 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let mut s = SpectralState::init_from_batch_centered(&x0, DVector::zeros(2), OnlinePcaConfig::new(1)).unwrap();
        assert_eq!(s.trace(), 10.0);
        s.update_trace(&DVector::from_vec(vec![0.0, 2.0]));
        assert_eq!(s.trace(), 14.0);
        s.update_trace(&DVector::zeros(2));
        assert_eq!(s.trace(), 14.0);
    }

    #[test]
    fn sample_at_mean_is_skipped() {
        let x0 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, -1.0, -2.0]);
        let mut s = SpectralState::init_from_batch(&x0, OnlinePcaConfig::new(1)).unwrap();
        let before = s.eigenpairs().clone();
        let x = s.mean0().clone();
        assert_eq!(s.ingest(&x).unwrap(), IngestOutcome::Skipped);
        assert_eq!(s.n(), 4);
        assert_eq!(s.skipped(), 1);
        assert_eq!(s.eigenpairs().values(), before.values());
    }

    #[test]
    fn toy_recenter() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 3.0, 0.0]);
        let cfg = OnlinePcaConfig::covariance_backed(1).with_mu(MuPolicy::Zero);
        let mut s = SpectralState::init_from_batch_centered(&x, DVector::zeros(2), cfg).unwrap();
        s.recenter(&DVector::from_vec(vec![2.0, 0.0])).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        assert!((s.eigenpairs().reconstruct() - &want).norm() < 1e-10);
        assert!((s.scatter().unwrap().as_matrix() - want).norm() < 1e-12);
        assert!((s.trace() - 2.0).abs() < 1e-12);
        assert!(s.colsum().norm() < 1e-12);
    }

    #[test]
    fn recenter_onto_same_mean_is_noop() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 3.0, 0.0, 0.0, 1.0]);
        let mut s = SpectralState::init_from_batch(&x, OnlinePcaConfig::new(2)).unwrap();
        let before = s.eigenpairs().clone();
        let mean = s.mean0().clone();
        s.recenter(&mean).unwrap();
        assert_eq!(s.eigenpairs().values(), before.values());
    }

    #[test]
    fn components_scale() {
        let x0 = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, -1.0, 0.0, 2.0, 1.0, -2.0, -1.0, 0.0, 0.0]);
        let s = SpectralState::init_from_batch(&x0, OnlinePcaConfig::new(2)).unwrap();
        let c = s.components();
        let e = sym_eigh(&SymmetricMatrix::scatter(&x0, Some(&column_mean(&x0)))).unwrap();
        for i in 0..2 {
            assert!((c.value(i) - e.value(i) / 5.0).abs() < 1e-12);
        }
    }
}
