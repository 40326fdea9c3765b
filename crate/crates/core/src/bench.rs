//! Experiment harness: synthetic generators, CSV datasets, the streaming
//! runner and result emission.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::{batch_pca_with_mean, column_mean, eigenspace_error, orthonormal_estimate, Ccipca, Ipca};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigh, DenseVector, EigenPairs, SymmetricMatrix};
use crate::online::{Algorithm, MuPolicy, OnlinePcaConfig, SpectralState};
use crate::rank_one::{EigvecFormula, Order};

/// Dimension up to which the reference is computed from a running scatter.
const INCREMENTAL_REFERENCE_MAX_D: usize = 400;

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for one trial, decorrelated from neighbouring trials.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed ^ (trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Rows with covariance `Γ[k][l] = min(k, l)/d`.
///
/// `Γ = L Lᵀ / d` with `L` the lower-triangular matrix of ones, so a row is a
/// scaled cumulative sum of standard normals.
pub fn gen_gaussian_gamma(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..d {
            let g: f64 = rng.sample(StandardNormal);
            acc += g;
            x[(i, j)] = acc * scale;
        }
    }
    x
}

/// The covariance matrix sampled by [`gen_gaussian_gamma`].
pub fn gamma_covariance(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |k, l| (k.min(l) + 1) as f64 / d as f64)
}

/// Rows with diagonal covariance: `spikes` leading variances uniform in
/// `spike_range`, the rest uniform in `bulk_range`.
pub fn gen_spiked_diag(
    d: usize,
    spikes: usize,
    spike_range: (f64, f64),
    bulk_range: (f64, f64),
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if spikes > d {
        return Err(Error::invalid(format!("{spikes} spikes exceed dimension {d}")));
    }
    for (lo, hi) in [spike_range, bulk_range] {
        if !(lo <= hi) || lo < 0.0 || !hi.is_finite() {
            return Err(Error::invalid(format!("bad variance range [{lo}, {hi}]")));
        }
    }
    let mut rng = rng_for(seed);
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..hi) };
    let variances: Vec<f64> = (0..d)
        .map(|k| uniform(&mut rng, if k < spikes { spike_range } else { bulk_range }))
        .collect();
    let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let g: f64 = rng.sample(StandardNormal);
            x[(i, j)] = sd[j] * g;
        }
    }
    Ok(x)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvOptions {
    pub header: bool,
    /// Zero-based column to drop (class labels).
    pub label_column: Option<usize>,
}

/// Reads a numeric CSV file, one sample per row.
pub fn load_csv_dataset(path: &Path, options: &CsvOptions) -> Result<DMatrix<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut data: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let mut fields = 0;
        for (k, field) in record.iter().enumerate() {
            if Some(k) == options.label_column {
                continue;
            }
            let value: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("field {} is not a number: {field:?}", k + 1)))?;
            if !value.is_finite() {
                return Err(parse_err(line, format!("field {} is not finite", k + 1)));
            }
            data.push(value);
            fields += 1;
        }
        match width {
            None => width = Some(fields),
            Some(w) if w != fields => {
                return Err(parse_err(line, format!("expected {w} numeric fields, found {fields}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let width = match width {
        Some(w) if w > 0 && rows > 0 => w,
        _ => return Err(parse_err(1, "no numeric data".into())),
    };
    Ok(DMatrix::from_row_slice(rows, width, &data))
}

/// Data source of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    GaussianGamma { d: usize },
    SpikedDiag { d: usize, spikes: usize, spike_range: (f64, f64), bulk_range: (f64, f64) },
    /// Spikes uniform in `[1, 2]`, no bulk: exactly rank `spikes`.
    RuntimeDiag { d: usize, spikes: usize },
    Csv { path: PathBuf, options: CsvOptions },
}

impl Generator {
    /// `n` rows for one trial. CSV data are shuffled per trial and must hold
    /// at least `n` rows.
    pub fn rows(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        match self {
            Generator::GaussianGamma { d } => Ok(gen_gaussian_gamma(*d, n, seed)),
            Generator::SpikedDiag { d, spikes, spike_range, bulk_range } => {
                gen_spiked_diag(*d, *spikes, *spike_range, *bulk_range, n, seed)
            }
            Generator::RuntimeDiag { d, spikes } => gen_spiked_diag(*d, *spikes, (1.0, 2.0), (0.0, 0.0), n, seed),
            Generator::Csv { path, options } => {
                let all = load_csv_dataset(path, options)?;
                if all.nrows() < n {
                    return Err(Error::invalid(format!(
                        "{} has {} rows, experiment needs {n}",
                        path.display(),
                        all.nrows()
                    )));
                }
                let mut order: Vec<usize> = (0..all.nrows()).collect();
                order.shuffle(&mut rng_for(seed));
                Ok(all.select_rows(&order[..n]))
            }
        }
    }
}

/// Settings of one ROIPCA variant (everything but `m`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoipcaVariant {
    pub algorithm: Algorithm,
    pub order: Order,
    pub formula: EigvecFormula,
    pub mu: MuPolicy,
    pub recenter_every: Option<usize>,
    pub reorthonormalize_every: usize,
}

impl RoipcaVariant {
    pub fn config(&self, m: usize) -> OnlinePcaConfig {
        OnlinePcaConfig {
            m,
            algorithm: self.algorithm,
            order: self.order,
            eigvec_formula: self.formula,
            mu_policy: self.mu,
            recenter_every: self.recenter_every,
            reorthonormalize_every: self.reorthonormalize_every,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Roipca(RoipcaVariant),
    Ipca,
    Ccipca { ell: f64 },
    /// Batch PCA recomputed after every sample.
    Batch,
}

/// A labelled algorithm configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmSpec {
    pub label: String,
    pub method: Method,
}

impl AlgorithmSpec {
    /// Parses `roipca1`, `roipca2`, `froipca1`, `froipca2`, `ipca`, `ccipca`
    /// or `batch`, optionally followed by `:key=value` modifiers (`mu`,
    /// `order`, `recenter`, `reortho`, `ell`).
    pub fn parse(token: &str) -> Result<Self> {
        let token = token.trim();
        let mut parts = token.split(':');
        let name = parts.next().unwrap_or_default().to_ascii_lowercase();
        let mut method = match name.as_str() {
            "roipca1" | "froipca1" | "roipca2" | "froipca2" => {
                let backed = name.ends_with('2');
                Method::Roipca(RoipcaVariant {
                    algorithm: if backed { Algorithm::CovarianceBacked } else { Algorithm::CovarianceFree },
                    order: if backed { Order::Second } else { Order::First },
                    formula: if name.starts_with('f') { EigvecFormula::Fast } else { EigvecFormula::Truncated },
                    mu: MuPolicy::Mean,
                    recenter_every: None,
                    reorthonormalize_every: 100,
                })
            }
            "ipca" => Method::Ipca,
            "ccipca" => Method::Ccipca { ell: Ccipca::DEFAULT_ELL },
            "batch" => Method::Batch,
            other => return Err(Error::config(format!("unknown algorithm {other:?}"))),
        };
        for modifier in parts {
            let (key, value) = modifier
                .split_once('=')
                .ok_or_else(|| Error::config(format!("modifier {modifier:?} is not key=value")))?;
            match (&mut method, key.trim()) {
                (Method::Roipca(v), "mu") => v.mu = parse_mu(value)?,
                (Method::Roipca(v), "order") => v.order = parse_order(value)?,
                (Method::Roipca(v), "recenter") => v.recenter_every = Some(parse_positive(key, value)?),
                (Method::Roipca(v), "reortho") => v.reorthonormalize_every = parse_positive(key, value)?,
                (Method::Ccipca { ell }, "ell") => {
                    *ell = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::config(format!("ell must be a number, got {value:?}")))?
                }
                _ => return Err(Error::config(format!("modifier {key:?} does not apply to {name}"))),
            }
        }
        if let Method::Roipca(v) = &method {
            v.config(1).validate()?;
        }
        Ok(AlgorithmSpec {
            label: token.to_string(),
            method,
        })
    }
}

pub fn parse_mu(s: &str) -> Result<MuPolicy> {
    match s.trim().to_ascii_lowercase().as_str() {
        "zero" | "0" => Ok(MuPolicy::Zero),
        "mean" => Ok(MuPolicy::Mean),
        "star" => Ok(MuPolicy::Star),
        other => Err(Error::config(format!("mu must be zero, mean or star, got {other:?}"))),
    }
}

pub fn parse_order(s: &str) -> Result<Order> {
    s.trim()
        .parse()
        .ok()
        .and_then(Order::from_int)
        .ok_or_else(|| Error::config(format!("order must be 1 or 2, got {s:?}")))
}

fn parse_positive(key: &str, s: &str) -> Result<usize> {
    match s.trim().parse::<usize>() {
        Ok(k) if k > 0 => Ok(k),
        _ => Err(Error::config(format!("{key} must be a positive integer, got {s:?}"))),
    }
}

/// Declarative experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub generator: Generator,
    pub n0: usize,
    pub n_stream: usize,
    pub m: usize,
    pub algorithms: Vec<AlgorithmSpec>,
    pub trials: usize,
    pub seed: u64,
    /// Treat the data as already centered: every algorithm and the reference
    /// use the zero vector as centering (CSV data are centered by their full
    /// mean first). Otherwise the warm-start mean is used throughout and the
    /// reference is the prefix-centered batch PCA.
    pub assume_centered: bool,
    /// Steps between reference recomputations; `None` picks 1 for `d ≤ 100`
    /// and 10 above.
    pub error_stride: Option<usize>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("m must be positive"));
        }
        if self.n0 < self.m + 1 {
            return Err(Error::config(format!("n0 = {} must be at least m + 1 = {}", self.n0, self.m + 1)));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.error_stride == Some(0) {
            return Err(Error::config("error stride must be positive"));
        }
        Ok(())
    }

    fn stride_for(&self, d: usize) -> usize {
        self.error_stride.unwrap_or(if d <= 100 { 1 } else { 10 })
    }
}

/// One algorithm on one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub algorithm: String,
    pub trial: usize,
    /// Error after each streamed sample.
    pub errors: Vec<f64>,
    /// Wall time of each ingest in seconds.
    pub iter_times: Vec<f64>,
    /// Samples absorbed by the final state.
    pub samples: usize,
}

impl TrialRecord {
    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(f64::NAN)
    }

    pub fn mean_iter_time(&self) -> f64 {
        mean(&self.iter_times)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub d: usize,
    pub n0: usize,
    pub n_stream: usize,
    pub stride: usize,
    /// Ordered by algorithm (spec order), then trial.
    pub records: Vec<TrialRecord>,
}

/// Per-algorithm aggregate over trials.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub median_final_error: f64,
    pub mean_final_error: f64,
    /// Median over trials of the mean per-ingest time.
    pub median_iter_time: f64,
    pub mean_iter_time: f64,
}

impl ExperimentResult {
    pub fn algorithms(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.algorithm) {
                out.push(r.algorithm.clone());
            }
        }
        out
    }

    pub fn summary(&self) -> Vec<AlgorithmSummary> {
        self.algorithms()
            .into_iter()
            .map(|name| {
                let recs: Vec<&TrialRecord> = self.records.iter().filter(|r| r.algorithm == name).collect();
                let finals: Vec<f64> = recs.iter().map(|r| r.final_error()).collect();
                let times: Vec<f64> = recs.iter().map(|r| r.mean_iter_time()).collect();
                AlgorithmSummary {
                    algorithm: name,
                    median_final_error: median(&finals),
                    mean_final_error: mean(&finals),
                    median_iter_time: median(&times),
                    mean_iter_time: mean(&times),
                }
            })
            .collect()
    }

    pub fn summary_for(&self, algorithm: &str) -> Option<AlgorithmSummary> {
        self.summary().into_iter().find(|s| s.algorithm == algorithm)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Batch PCA of growing prefixes of a data matrix.
struct Reference<'a> {
    data: &'a DMatrix<f64>,
    m: usize,
    center: bool,
    running: Option<(SymmetricMatrix, DenseVector)>,
    rows: usize,
}

impl<'a> Reference<'a> {
    fn new(data: &'a DMatrix<f64>, m: usize, center: bool) -> Self {
        let d = data.ncols();
        let running = (d <= INCREMENTAL_REFERENCE_MAX_D).then(|| (SymmetricMatrix::zeros(d), DVector::zeros(d)));
        Reference {
            data,
            m,
            center,
            running,
            rows: 0,
        }
    }

    /// Batch PCA of the first `rows` rows (non-decreasing across calls).
    fn at(&mut self, rows: usize) -> Result<EigenPairs> {
        let prefix = self.data.rows(0, rows).into_owned();
        let Some((scatter, sum)) = self.running.as_mut() else {
            let mean = self.center.then(|| column_mean(&prefix));
            return batch_pca_with_mean(&prefix, mean.as_ref(), self.m);
        };
        while self.rows < rows {
            let x = self.data.row(self.rows).transpose();
            let norm_sq = x.norm_squared();
            if norm_sq > 0.0 {
                scatter.rank_one_update(norm_sq, &(&x / norm_sq.sqrt()));
            }
            *sum += x;
            self.rows += 1;
        }
        let mut s = scatter.clone();
        if self.center {
            let mean = &*sum / rows as f64;
            let norm_sq = mean.norm_squared();
            if norm_sq > 0.0 {
                s.rank_one_update(-(rows as f64) * norm_sq, &(&mean / norm_sq.sqrt()));
            }
        }
        Ok(sym_eigh(&s)?.truncate(self.m))
    }
}

/// Repeated batch PCA, used as an "algorithm" in comparisons.
struct BatchTracker {
    scatter: SymmetricMatrix,
    mean0: DenseVector,
    m: usize,
    n: usize,
    pairs: EigenPairs,
}

impl BatchTracker {
    fn new(x0: &DMatrix<f64>, mean0: DenseVector, m: usize) -> Result<Self> {
        let scatter = SymmetricMatrix::scatter(x0, Some(&mean0));
        let pairs = sym_eigh(&scatter)?.truncate(m);
        Ok(BatchTracker {
            scatter,
            mean0,
            m,
            n: x0.nrows(),
            pairs,
        })
    }

    fn ingest(&mut self, x: &DenseVector) -> Result<()> {
        self.n += 1;
        let xc = x - &self.mean0;
        let norm_sq = xc.norm_squared();
        if norm_sq > 0.0 {
            self.scatter.rank_one_update(norm_sq, &(xc / norm_sq.sqrt()));
        }
        self.pairs = sym_eigh(&self.scatter)?.truncate(self.m);
        Ok(())
    }
}

enum Runner {
    Online(Box<SpectralState>),
    Ipca(Ipca),
    Ccipca(Ccipca),
    Batch(BatchTracker),
}

impl Runner {
    fn start(method: &Method, x0: &DMatrix<f64>, mean0: &DenseVector, m: usize) -> Result<Self> {
        Ok(match method {
            Method::Roipca(v) => Runner::Online(Box::new(SpectralState::init_from_batch_centered(
                x0,
                mean0.clone(),
                v.config(m),
            )?)),
            Method::Ipca => Runner::Ipca(Ipca::from_batch_centered(x0, mean0.clone(), m)?),
            Method::Ccipca { ell } => Runner::Ccipca(Ccipca::from_batch_centered(x0, mean0.clone(), m, *ell)?),
            Method::Batch => Runner::Batch(BatchTracker::new(x0, mean0.clone(), m)?),
        })
    }

    fn ingest(&mut self, x: &DenseVector) -> Result<()> {
        match self {
            Runner::Online(s) => s.ingest(x).map(|_| ()),
            Runner::Ipca(s) => s.ingest(x),
            Runner::Ccipca(s) => s.ingest(x),
            Runner::Batch(s) => s.ingest(x),
        }
    }

    fn estimate(&self) -> Result<EigenPairs> {
        match self {
            Runner::Online(s) => orthonormal_estimate(s.eigenpairs()),
            Runner::Ipca(s) => Ok(s.eigenpairs().clone()),
            Runner::Ccipca(s) => s.components(),
            Runner::Batch(s) => Ok(s.pairs.clone()),
        }
    }

    fn samples(&self) -> usize {
        match self {
            Runner::Online(s) => s.n(),
            Runner::Ipca(s) => s.n(),
            Runner::Ccipca(s) => s.n(),
            Runner::Batch(s) => s.n,
        }
    }
}

/// Any [`Method`] behind one streaming interface.
pub struct Tracker(Runner);

impl Tracker {
    /// Warm-starts `method` on `x0`, centering by `mean0`.
    pub fn start(method: &Method, x0: &DMatrix<f64>, mean0: &DenseVector, m: usize) -> Result<Self> {
        Runner::start(method, x0, mean0, m).map(Tracker)
    }

    pub fn ingest(&mut self, x: &DenseVector) -> Result<()> {
        self.0.ingest(x)
    }

    pub fn samples(&self) -> usize {
        self.0.samples()
    }

    /// Orthonormal components, eigenvalues at covariance scale.
    pub fn components(&self) -> Result<EigenPairs> {
        match &self.0 {
            Runner::Online(s) => orthonormal_estimate(&s.components()),
            Runner::Ipca(s) => Ok(s.components()),
            Runner::Ccipca(s) => s.components(),
            Runner::Batch(s) => {
                let mut p = s.pairs.clone();
                p.scale_values(1.0 / s.n.max(1) as f64);
                Ok(p)
            }
        }
    }
}

/// Data of one trial, centered if the spec asks for it.
fn trial_data(spec: &ExperimentSpec, trial: usize) -> Result<DMatrix<f64>> {
    let n = spec.n0 + spec.n_stream;
    let mut data = spec.generator.rows(n, trial_seed(spec.seed, trial))?;
    if spec.assume_centered {
        if let Generator::Csv { path, options } = &spec.generator {
            let mean = column_mean(&load_csv_dataset(path, options)?);
            for mut row in data.row_iter_mut() {
                row -= mean.transpose();
            }
        }
    }
    Ok(data)
}

/// Runs every algorithm of `spec` on every trial.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut per_trial: Vec<Vec<TrialRecord>> = Vec::with_capacity(spec.trials);
    let mut d = 0;
    let mut stride = 1;
    for trial in 0..spec.trials {
        let data = trial_data(spec, trial)?;
        d = data.ncols();
        if spec.m > d {
            return Err(Error::config(format!("m = {} exceeds dimension {d}", spec.m)));
        }
        stride = spec.stride_for(d);
        let x0 = data.rows(0, spec.n0).into_owned();
        let mean0 = if spec.assume_centered { DVector::zeros(d) } else { column_mean(&x0) };

        let mut reference = Reference::new(&data, spec.m, !spec.assume_centered);
        let mut refs: Vec<(usize, EigenPairs)> = vec![(0, reference.at(spec.n0)?)];
        for step in 1..=spec.n_stream {
            if step % stride == 0 || step == spec.n_stream {
                refs.push((step, reference.at(spec.n0 + step)?));
            }
        }

        let mut records = Vec::with_capacity(spec.algorithms.len());
        for alg in &spec.algorithms {
            let mut runner = Runner::start(&alg.method, &x0, &mean0, spec.m)?;
            let mut errors = Vec::with_capacity(spec.n_stream);
            let mut times = Vec::with_capacity(spec.n_stream);
            let mut current = 0;
            for step in 1..=spec.n_stream {
                let x = data.row(spec.n0 + step - 1).transpose();
                let start = Instant::now();
                runner.ingest(&x)?;
                times.push(start.elapsed().as_secs_f64());
                while current + 1 < refs.len() && refs[current + 1].0 <= step {
                    current += 1;
                }
                errors.push(eigenspace_error(&runner.estimate()?, &refs[current].1)?);
            }
            let samples = runner.samples();
            records.push(TrialRecord {
                algorithm: alg.label.clone(),
                trial,
                errors,
                iter_times: times,
                samples,
            });
        }
        per_trial.push(records);
    }
    let mut records = Vec::with_capacity(spec.trials * spec.algorithms.len());
    for a in 0..spec.algorithms.len() {
        for trial in &per_trial {
            records.push(trial[a].clone());
        }
    }
    Ok(ExperimentResult {
        d,
        n0: spec.n0,
        n_stream: spec.n_stream,
        stride,
        records,
    })
}

/// Per-ingest wall time of one algorithm at one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct RuntimePoint {
    pub d: usize,
    pub algorithm: String,
    pub median_iter_time: f64,
    pub mean_iter_time: f64,
}

/// Times each algorithm on exactly low-rank data (`m` spikes in `[1, 2]`)
/// for each dimension in `dims`. No errors are computed.
pub fn runtime_sweep(
    dims: &[usize],
    m: usize,
    n0: usize,
    n_stream: usize,
    algorithms: &[AlgorithmSpec],
    seed: u64,
) -> Result<Vec<RuntimePoint>> {
    let mut out = Vec::new();
    for &d in dims {
        let data = Generator::RuntimeDiag { d, spikes: m.min(d) }.rows(n0 + n_stream, trial_seed(seed, d))?;
        let x0 = data.rows(0, n0).into_owned();
        let mean0 = DVector::zeros(d);
        for alg in algorithms {
            let mut runner = Runner::start(&alg.method, &x0, &mean0, m)?;
            let mut times = Vec::with_capacity(n_stream);
            for i in n0..n0 + n_stream {
                let x = data.row(i).transpose();
                let start = Instant::now();
                runner.ingest(&x)?;
                times.push(start.elapsed().as_secs_f64());
            }
            out.push(RuntimePoint {
                d,
                algorithm: alg.label.clone(),
                median_iter_time: median(&times),
                mean_iter_time: mean(&times),
            });
        }
    }
    Ok(out)
}

/// Least-squares line with its coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// `step,algorithm,trial,error,iter_time_s`, one row per streamed sample.
pub fn write_trajectories_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "algorithm", "trial", "error", "iter_time_s"])
        .map_err(csv_io)?;
    for r in &result.records {
        for (k, (e, t)) in r.errors.iter().zip(&r.iter_times).enumerate() {
            w.write_record([
                (k + 1).to_string(),
                r.algorithm.clone(),
                r.trial.to_string(),
                format!("{e:.5e}"),
                format!("{t:.5e}"),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-algorithm aggregates plus the reference stride.
pub fn write_summary_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algorithm",
        "median_final_error",
        "mean_final_error",
        "median_iter_time_s",
        "mean_iter_time_s",
        "reference_stride",
    ])
    .map_err(csv_io)?;
    for s in result.summary() {
        w.write_record([
            s.algorithm.clone(),
            format!("{:.5e}", s.median_final_error),
            format!("{:.5e}", s.mean_final_error),
            format!("{:.5e}", s.median_iter_time),
            format!("{:.5e}", s.mean_iter_time),
            result.stride.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Median error over trials against step, log₁₀ y-axis, one polyline per
/// algorithm.
pub fn render_svg(result: &ExperimentResult, title: &str) -> String {
    let (width, height) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let floor = 1e-17;

    let series: Vec<(String, Vec<f64>)> = result
        .algorithms()
        .into_iter()
        .map(|name| {
            let recs: Vec<&TrialRecord> = result.records.iter().filter(|r| r.algorithm == name).collect();
            let steps = recs.iter().map(|r| r.errors.len()).min().unwrap_or(0);
            let med = (0..steps)
                .map(|k| median(&recs.iter().map(|r| r.errors[k]).collect::<Vec<_>>()).max(floor))
                .collect();
            (name, med)
        })
        .collect();
    let all = series.iter().flat_map(|s| s.1.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (ylo, yhi) = if lo.is_finite() {
        let (a, b) = (lo.log10().floor(), hi.log10().ceil());
        (a, if b > a { b } else { a + 1.0 })
    } else {
        (-3.0, 0.0)
    };
    let steps = series.iter().map(|s| s.1.len()).max().unwrap_or(0).max(2);
    let px = |k: usize| left + plot_w * k as f64 / (steps - 1) as f64;
    let py = |y: f64| top + plot_h * (yhi - y.log10()) / (yhi - ylo);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        left + plot_w / 2.0,
        escape_xml(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let mut e = ylo as i32;
    while e as f64 <= yhi {
        let y = py(10f64.powi(e));
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            left + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">1e{e}</text>"#,
            left - 6.0,
            y + 4.0
        );
        e += 1;
    }
    for k in [0, steps / 2, steps - 1] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            px(k),
            top + plot_h + 16.0,
            k + 1
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">step</text>"#,
        left + plot_w / 2.0,
        height - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">error</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    for (i, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !ys.is_empty() {
            let points: Vec<String> = ys.iter().enumerate().map(|(k, &y)| format!("{:.2},{:.2}", px(k), py(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                points.join(" ")
            );
        }
        let ly = top + 16.0 + 18.0 * i as f64;
        let lx = left + plot_w + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape_xml(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<stem>.csv`, `<stem>_summary.csv` and `<stem>.svg` into `dir`.
pub fn emit_results(result: &ExperimentResult, dir: &Path, stem: &str, title: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let traj = dir.join(format!("{stem}.csv"));
    let summary = dir.join(format!("{stem}_summary.csv"));
    let svg = dir.join(format!("{stem}.svg"));
    write_trajectories_csv(result, fs::File::create(&traj)?)?;
    write_summary_csv(result, fs::File::create(&summary)?)?;
    fs::write(&svg, render_svg(result, title))?;
    Ok(vec![traj, summary, svg])
}
