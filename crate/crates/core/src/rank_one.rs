//! Symmetric rank-one eigendecomposition updates.
//!
//! Given eigenpairs `(λᵢ, qᵢ)` of a symmetric `A` and an update `ρ v vᵀ`
//! with unit `v`, the updated eigenvalues are the roots of the secular
//! function
//!
//! ```text
//! w(t) = 1 + ρ Σ zᵢ² / (λᵢ − t),    z = Qᵀ v
//! ```
//!
//! and the eigenvector of root `t` is `Q (Λ − tI)⁻¹ z`, normalized. When only
//! the leading `m` pairs are known, the unknown tail is summarized by a single
//! scalar `μ` and the residual `r = v − Q z`:
//!
//! * first order: the tail contributes `(1 − Σ zᵢ²) / (μ − t)`;
//! * second order: additionally `−(s − μ(1 − Σ zᵢ²)) / (μ − t)²` where
//!   `s = vᵀ A r`.
//!
//! Roots are located one pole interval at a time. Each root is stored as an
//! offset from the nearest pole so that the gaps `λₖ − t` feeding the
//! eigenvector formulas keep full relative precision even when a root sits
//! within rounding distance of a pole.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, ops, DenseVector, EigenPairs, SymmetricMatrix};

/// Default relative deflation tolerance.
pub const DEFLATION_TOL: f64 = 1e-12;
/// `μ` closer than this (relative to `max(1, |λ₁|)`) to a retained eigenvalue
/// is treated as sitting on the pole.
pub const MU_POLE_TOL: f64 = 1e-10;
/// Distance `μ` is moved off a pole, relative to `max(1, |λ₁|)`.
pub const MU_NUDGE: f64 = 1e-8;
const MAX_ITER: usize = 200;

/// `A + ρ v vᵀ` with `‖v‖ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOneUpdate {
    rho: f64,
    v: DenseVector,
}

impl RankOneUpdate {
    pub fn new(rho: f64, v: DenseVector) -> Result<Self> {
        if !rho.is_finite() || rho == 0.0 {
            return Err(Error::invalid(format!("rho must be finite and nonzero, got {rho}")));
        }
        linalg::check_finite("update vector", v.as_slice())?;
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("update vector has norm {norm}, expected 1")));
        }
        Ok(RankOneUpdate { rho, v })
    }

    /// `scale · x xᵀ` written as `ρ v vᵀ`. `None` when `x` is zero.
    pub fn from_outer(scale: f64, x: &DenseVector) -> Option<Self> {
        let norm_sq = ops::norm_squared(x.as_slice());
        if norm_sq == 0.0 || !norm_sq.is_finite() || scale == 0.0 {
            return None;
        }
        let norm = norm_sq.sqrt();
        let mut v = x.clone();
        ops::scale(1.0 / norm, v.as_mut_slice());
        Some(RankOneUpdate {
            rho: scale * norm_sq,
            v,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn v(&self) -> &DenseVector {
        &self.v
    }
}

/// Order of the truncated secular equation and eigenvector formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Order {
    First,
    Second,
}

impl Order {
    pub fn from_int(k: u32) -> Option<Self> {
        match k {
            1 => Some(Order::First),
            2 => Some(Order::Second),
            _ => None,
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            Order::First => 1,
            Order::Second => 2,
        }
    }
}

/// Which eigenvector formula to use after the roots are known.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EigvecFormula {
    /// Full recombination over the retained basis, O(m·d) per vector.
    Truncated,
    /// Off-diagonal resolvent weights collapsed into one scalar `η`, O(d)
    /// per vector.
    Fast,
}

/// The retained spectrum of `A` projected against one update direction.
#[derive(Clone, Debug)]
pub struct TruncatedSpectrum<'a> {
    pub pairs: &'a EigenPairs,
    pub v: &'a DenseVector,
    /// `Qᵀ v`
    pub z: DenseVector,
    /// `v − Q z`
    pub r: DenseVector,
    /// `‖r‖² = 1 − Σ zᵢ²`, clamped to `[0, 1]`.
    pub zres: f64,
    pub mu: f64,
    /// `vᵀ A r`, present only when `A` itself is available.
    pub s: Option<f64>,
    /// `A r`
    pub ar: Option<DenseVector>,
}

impl<'a> TruncatedSpectrum<'a> {
    pub fn new(pairs: &'a EigenPairs, v: &'a DenseVector, mu: f64) -> Result<Self> {
        if v.len() != pairs.dim() {
            return Err(Error::DimensionMismatch {
                expected: pairs.dim(),
                got: v.len(),
            });
        }
        let q = pairs.vectors();
        let z = ops::project(q, v);
        let qz = ops::combine(q, &z);
        let mut r = v.clone();
        ops::axpy(-1.0, qz.as_slice(), r.as_mut_slice());
        // ‖r‖² is the accurate form of 1 − Σzᵢ² when v is almost in span(Q).
        let zres = ops::norm_squared(r.as_slice()).clamp(0.0, 1.0);
        Ok(TruncatedSpectrum {
            pairs,
            v,
            z,
            r,
            zres,
            mu,
            s: None,
            ar: None,
        })
    }

    /// Attaches `A r` and `s = vᵀ A r`, enabling second-order formulas.
    pub fn with_scatter(mut self, scatter: &SymmetricMatrix) -> Result<Self> {
        if scatter.dim() != self.pairs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.pairs.dim(),
                got: scatter.dim(),
            });
        }
        let mut ar = scatter.mul_vec(&self.r);
        self.s = Some(ops::dot(self.v.as_slice(), ar.as_slice()));
        // Qᵀ A r vanishes when Q spans eigenvectors of A. Removing what an
        // inexact Q leaves there keeps A's top eigenvalues out of the tail term.
        let q = self.pairs.vectors();
        let leak = ops::project(q, &ar);
        ar -= ops::combine(q, &leak);
        self.ar = Some(ar);
        Ok(self)
    }
}

/// `s = vᵀ A (I − Q Qᵀ) v`, evaluated as `vᵀ (A r)` with `r = v − Q Qᵀ v`.
pub fn compute_s(v: &DenseVector, scatter: &SymmetricMatrix, basis: &EigenPairs) -> Result<f64> {
    if scatter.dim() != v.len() || basis.dim() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            got: if scatter.dim() != v.len() { scatter.dim() } else { basis.dim() },
        });
    }
    let z = ops::project(basis.vectors(), v);
    let r = v - ops::combine(basis.vectors(), &z);
    let ar = scatter.mul_vec(&r);
    Ok(ops::dot(v.as_slice(), ar.as_slice()))
}

/// An eigenpair left untouched by the update.
#[derive(Clone, Debug)]
pub struct Passthrough {
    pub index: usize,
    pub value: f64,
    pub vector: DenseVector,
}

/// Givens rotation applied to two (numerically) equal eigenvalues so that the
/// update vector has no component along the second one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairRotation {
    pub kept: usize,
    pub deflated: usize,
    pub cos: f64,
    pub sin: f64,
}

/// Secular problem left after removing zero components and repeated
/// eigenvalues. `values` are strictly descending.
#[derive(Clone, Debug)]
pub struct DeflatedProblem {
    pub values: Vec<f64>,
    pub z: Vec<f64>,
    pub index: Vec<usize>,
    /// `d × k` eigenvectors of the active components.
    pub basis: DMatrix<f64>,
    pub passthrough: Vec<Passthrough>,
    pub rotations: Vec<PairRotation>,
    /// Tail weight; zero when the tail pole was dropped.
    pub zres: f64,
    pub mu: f64,
    pub s: Option<f64>,
    /// Number of eigenpairs in the spectrum that was deflated.
    pub m: usize,
    r: DenseVector,
    ar: Option<DenseVector>,
    qz: DenseVector,
    has_tail: bool,
}

impl DeflatedProblem {
    /// Whether the unknown tail contributes a pole at `μ`.
    pub fn has_tail(&self) -> bool {
        self.has_tail
    }

    pub fn r(&self) -> &DenseVector {
        &self.r
    }

    /// Coefficient of the double pole at `μ`: `s − μ · zres`.
    fn second_order_weight(&self) -> Option<f64> {
        self.s.map(|s| if self.has_tail { s - self.mu * self.zres } else { 0.0 })
    }

    pub fn active_len(&self) -> usize {
        self.values.len()
    }
}

/// Splits the spectrum into components the update leaves alone and a
/// strictly separated active problem.
pub fn deflate(spec: TruncatedSpectrum<'_>, tol: f64) -> DeflatedProblem {
    let pairs = spec.pairs;
    let m = pairs.count();
    let znorm = spec.z.norm();
    let gap_tol = tol * pairs.values().first().map_or(1.0, |l| l.abs()).max(1.0);

    let mut passthrough = Vec::new();
    let mut rotations = Vec::new();
    // (original index, value, z, vector)
    let mut active: Vec<(usize, f64, f64, DenseVector)> = Vec::with_capacity(m);

    for i in 0..m {
        let zi = spec.z[i];
        if znorm == 0.0 || zi.abs() <= tol * znorm {
            passthrough.push(Passthrough {
                index: i,
                value: pairs.value(i),
                vector: pairs.vector(i).into_owned(),
            });
            continue;
        }
        let q = pairs.vector(i).into_owned();
        match active.last_mut() {
            Some(last) if (last.1 - pairs.value(i)).abs() <= gap_tol => {
                let h = last.2.hypot(zi);
                let (c, s) = (last.2 / h, zi / h);
                let kept = &last.3 * c + &q * s;
                let dropped = &q * c - &last.3 * s;
                ops::tally(2 * q.len());
                rotations.push(PairRotation {
                    kept: last.0,
                    deflated: i,
                    cos: c,
                    sin: s,
                });
                last.2 = h;
                last.3 = kept;
                passthrough.push(Passthrough {
                    index: i,
                    value: pairs.value(i),
                    vector: dropped,
                });
            }
            _ => active.push((i, pairs.value(i), zi, q)),
        }
    }

    let d = pairs.dim();
    let basis = if active.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&active.iter().map(|a| a.3.clone()).collect::<Vec<_>>())
    };
    let has_tail = spec.zres > tol * tol;
    let mut qz = spec.v.clone();
    ops::axpy(-1.0, spec.r.as_slice(), qz.as_mut_slice());

    DeflatedProblem {
        values: active.iter().map(|a| a.1).collect(),
        z: active.iter().map(|a| a.2).collect(),
        index: active.iter().map(|a| a.0).collect(),
        basis,
        passthrough,
        rotations,
        zres: if has_tail { spec.zres } else { 0.0 },
        mu: spec.mu,
        s: spec.s,
        m,
        r: spec.r,
        ar: spec.ar,
        qz,
        has_tail,
    }
}

/// The pole a root is paired with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoleRef {
    /// Index into the active components of a [`DeflatedProblem`].
    Lambda(usize),
    Mu,
}

/// A root of a secular function together with its isolating interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecularRoot {
    pub t: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    pub pole: Option<PoleRef>,
    origin: f64,
    delta: f64,
}

impl SecularRoot {
    /// `pole − t`, computed from the stored pole offset.
    pub fn gap_from(&self, pole: f64) -> f64 {
        (pole - self.origin) - self.delta
    }
}

#[derive(Clone, Copy, Debug)]
struct Pole {
    value: f64,
    weight: f64,
    kind: PoleRef,
}

/// Secular function of a deflated problem, evaluated relative to one pole.
struct Secular<'p> {
    poles: &'p [Pole],
    rho: f64,
    /// Double-pole coefficient at `μ` (second order only).
    c2: f64,
}

impl Secular<'_> {
    fn is_double(&self, k: usize) -> bool {
        self.poles[k].kind == PoleRef::Mu && self.c2 != 0.0
    }

    fn offsets(&self, origin: usize) -> Vec<f64> {
        let o = self.poles[origin].value;
        self.poles.iter().map(|p| p.value - o).collect()
    }

    /// `w(origin + δ)` with the origin pole's singularity multiplied out:
    /// `−δ · w` for a simple pole, `δ² · w` for the double pole. Finite at
    /// `δ = 0` and with the same roots as `w` on either side of the origin.
    fn psi(&self, origin: usize, offsets: &[f64], delta: f64) -> f64 {
        ops::tally(self.poles.len());
        let mut sum = 0.0;
        for (k, p) in self.poles.iter().enumerate() {
            if k == origin {
                continue;
            }
            let g = offsets[k] - delta;
            sum += p.weight / g;
            if self.is_double(k) {
                sum -= self.c2 / (g * g);
            }
        }
        let rest = 1.0 + self.rho * sum;
        let w0 = self.poles[origin].weight;
        if self.is_double(origin) {
            delta * delta * rest - delta * self.rho * w0 - self.rho * self.c2
        } else {
            -delta * rest + self.rho * w0
        }
    }

    /// Plain value of the secular function at `t`.
    fn value(&self, t: f64) -> f64 {
        let mut sum = 0.0;
        for (k, p) in self.poles.iter().enumerate() {
            let g = p.value - t;
            sum += p.weight / g;
            if self.is_double(k) {
                sum -= self.c2 / (g * g);
            }
        }
        1.0 + self.rho * sum
    }

    /// Distance past the outermost pole beyond which `w` has the sign of 1.
    fn outer_reach(&self) -> f64 {
        let w: f64 = self.poles.iter().map(|p| p.weight.abs()).sum();
        let reach = if self.c2 == 0.0 {
            self.rho.abs() * w * (1.0 + 1e-12)
        } else {
            (2.0 * self.rho.abs() * w).max(2.0 * (self.rho * self.c2).abs().sqrt())
        };
        let scale = self.poles.iter().map(|p| p.value.abs()).fold(1.0, f64::max);
        reach.max(1e-12 * scale)
    }

    /// Roots of `psi` on the half-open interval between `origin` (δ = 0) and
    /// `origin + far`. `scan` also looks for pairs of roots that leave the
    /// end signs equal.
    fn roots_from(
        &self,
        origin: usize,
        far: f64,
        bracket: (f64, f64),
        pole: PoleRef,
        scan: bool,
        out: &mut Vec<SecularRoot>,
    ) -> Result<usize> {
        let offsets = self.offsets(origin);
        let o = self.poles[origin].value;
        let f = |delta: f64| self.psi(origin, &offsets, delta);
        let f0 = f(0.0);
        let ff = f(far);
        let mut found = 0;
        let push = |delta: f64, iterations: usize, out: &mut Vec<SecularRoot>| {
            out.push(SecularRoot {
                t: o + delta,
                bracket,
                iterations,
                pole: Some(pole),
                origin: o,
                delta,
            });
        };
        if f0 != 0.0 && f0.signum() != ff.signum() {
            let (delta, it) = brent(f, 0.0, far, f0, ff)?;
            push(delta, it, out);
            return Ok(1);
        }
        if ff == 0.0 {
            push(far, 0, out);
            return Ok(1);
        }
        if !scan {
            return Ok(0);
        }
        // Geometric samples toward the pole plus a uniform sweep.
        let mut grid: Vec<f64> = (0..48).map(|j| far * 0.5f64.powi(j)).collect();
        grid.extend((1..16).map(|j| far * j as f64 / 16.0));
        grid.push(0.0);
        grid.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        grid.dedup();
        let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        for k in 0..grid.len() - 1 {
            let (a, b) = (grid[k], grid[k + 1]);
            let (fa, fb) = (vals[k], vals[k + 1]);
            if fb == 0.0 {
                push(b, 0, out);
                found += 1;
            } else if fa != 0.0 && fa.signum() != fb.signum() {
                let (delta, it) = brent(f, a, b, fa, fb)?;
                push(delta, it, out);
                found += 1;
            }
        }
        Ok(found)
    }
}

/// Brent's method on a sign-changing bracket. Returns the root and the
/// number of function evaluations.
fn brent(
    mut f: impl FnMut(f64) -> f64,
    a0: f64,
    b0: f64,
    fa0: f64,
    fb0: f64,
) -> Result<(f64, usize)> {
    let (mut a, mut b, mut fa, mut fb) = (a0, b0, fa0, fb0);
    if fa == 0.0 {
        return Ok((a, 0));
    }
    if fb == 0.0 {
        return Ok((b, 0));
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRoot {
            lo: a.min(b),
            hi: a.max(b),
        });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 1e-300;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol || fb == 0.0 {
            return Ok((b, iter));
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let bound1 = 3.0 * xm * q - (tol * q).abs();
            let bound2 = (e * q).abs();
            if 2.0 * p < bound1.min(bound2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(xm) };
        fb = f(b);
    }
    Err(Error::Convergence {
        lo: b.min(c),
        hi: b.max(c),
        iterations: MAX_ITER,
    })
}

/// Finds a root of `f` on the open interval `(lo, hi)`. Endpoints are never
/// evaluated, so `f` may have poles there.
pub fn solve_secular_in_bracket(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<SecularRoot> {
    if !(lo < hi) {
        return Err(Error::invalid(format!("empty bracket ({lo}, {hi})")));
    }
    let inward = |from: f64, toward: f64| -> Option<(f64, f64)> {
        let mut x = if toward > from { from.next_up() } else { from.next_down() };
        for k in 0..1100 {
            let fx = f(x);
            if fx.is_finite() {
                return Some((x, fx));
            }
            // Step further in, doubling the offset each time.
            let step = (toward - from) * 2f64.powi(-1074 + k).min(0.5);
            x = from + step;
        }
        None
    };
    let (a, fa) = inward(lo, hi).ok_or(Error::NoRoot { lo, hi })?;
    let (b, fb) = inward(hi, lo).ok_or(Error::NoRoot { lo, hi })?;
    let (t, iterations) = brent(&f, a, b, fa, fb)?;
    Ok(SecularRoot {
        t,
        bracket: (lo, hi),
        iterations,
        pole: None,
        origin: 0.0,
        delta: t,
    })
}

fn poles_of(problem: &DeflatedProblem) -> Vec<Pole> {
    let mut poles: Vec<Pole> = problem
        .values
        .iter()
        .zip(&problem.z)
        .enumerate()
        .map(|(k, (&value, &z))| Pole {
            value,
            weight: z * z,
            kind: PoleRef::Lambda(k),
        })
        .collect();
    if problem.has_tail {
        poles.push(Pole {
            value: problem.mu,
            weight: problem.zres,
            kind: PoleRef::Mu,
        });
        poles.sort_by(|a, b| b.value.total_cmp(&a.value));
    }
    poles
}

/// Value of the (truncated) secular function of `problem` at `t`.
pub fn secular_value(problem: &DeflatedProblem, order: Order, rho: f64, t: f64) -> f64 {
    let poles = poles_of(problem);
    let c2 = match order {
        Order::First => 0.0,
        Order::Second => problem.second_order_weight().unwrap_or(0.0),
    };
    Secular {
        poles: &poles,
        rho,
        c2,
    }
    .value(t)
}

/// The largest roots of the truncated secular equation, descending. Returns
/// `min(m, #poles)` roots where `m` is the size of the deflated spectrum.
pub fn truncated_roots(problem: &DeflatedProblem, order: Order, rho: f64) -> Result<Vec<SecularRoot>> {
    if !rho.is_finite() || rho == 0.0 {
        return Err(Error::invalid(format!("rho must be finite and nonzero, got {rho}")));
    }
    let c2 = match order {
        Order::First => 0.0,
        Order::Second => problem
            .second_order_weight()
            .ok_or_else(|| Error::invalid("second order needs s (no scatter attached)"))?,
    };
    if problem.has_tail {
        let scale = problem.values.first().map_or(1.0, |l| l.abs()).max(1.0);
        if let Some(&lambda) = problem
            .values
            .iter()
            .find(|&&l| (l - problem.mu).abs() <= MU_POLE_TOL * scale)
        {
            return Err(Error::MuAtPole {
                mu: problem.mu,
                lambda,
            });
        }
    }
    let poles = poles_of(problem);
    let k = poles.len();
    let need = problem.m.min(k);
    let mut roots = Vec::with_capacity(need);
    if k == 0 {
        return Ok(roots);
    }
    let sec = Secular {
        poles: &poles,
        rho,
        c2,
    };
    let second = order == Order::Second;
    let reach = sec.outer_reach();

    // Top outer interval.
    if rho > 0.0 || (second && sec.is_double(0)) {
        let top = poles[0].value;
        sec.roots_from(0, reach, (top, top + reach), poles[0].kind, false, &mut roots)?;
    }
    // Interior intervals, top-down.
    for j in 0..k.saturating_sub(1) {
        if roots.len() >= need {
            break;
        }
        let (hi, lo) = (j, j + 1);
        let (ph, pl) = (poles[hi].value, poles[lo].value);
        let half = 0.5 * (ph - pl);
        // The root belongs to the pole it moved away from.
        let paired = if rho > 0.0 { poles[lo].kind } else { poles[hi].kind };
        let before = roots.len();
        let found_lo = sec.roots_from(lo, half, (pl, ph), paired, false, &mut roots)?;
        let found_hi = sec.roots_from(hi, -(ph - pl - half), (pl, ph), paired, false, &mut roots)?;
        if found_lo + found_hi == 0 {
            if !second {
                return Err(Error::NoRoot { lo: pl, hi: ph });
            }
            sec.roots_from(lo, half, (pl, ph), paired, true, &mut roots)?;
            sec.roots_from(hi, -(ph - pl - half), (pl, ph), paired, true, &mut roots)?;
        }
        roots[before..].sort_by(|a, b| b.t.total_cmp(&a.t));
    }
    // Bottom outer interval.
    if roots.len() < need && (rho < 0.0 || (second && sec.is_double(k - 1))) {
        let bottom = poles[k - 1].value;
        sec.roots_from(
            k - 1,
            -reach,
            (bottom - reach, bottom),
            poles[k - 1].kind,
            false,
            &mut roots,
        )?;
    }
    roots.sort_by(|a, b| b.t.total_cmp(&a.t));
    roots.truncate(need);
    Ok(roots)
}

/// Returns `μ`, moved off any retained eigenvalue it sits on.
pub fn nudge_mu(mu: f64, values: &[f64]) -> f64 {
    let scale = values.first().map_or(1.0, |l| l.abs()).max(1.0);
    let near = |x: f64| values.iter().any(|&l| (l - x).abs() <= MU_POLE_TOL * scale);
    if !near(mu) {
        return mu;
    }
    let step = MU_NUDGE * scale;
    for k in 1..=64 {
        for cand in [mu - step * k as f64, mu + step * k as f64] {
            if !near(cand) {
                return cand;
            }
        }
    }
    mu - step
}

fn tail_gap(problem: &DeflatedProblem, root: &SecularRoot) -> Result<f64> {
    let g = root.gap_from(problem.mu);
    if g == 0.0 || !(1.0 / g).is_finite() {
        return Err(Error::Degenerate(format!(
            "root {} coincides with mu = {}",
            root.t, problem.mu
        )));
    }
    Ok(g)
}

/// Adds the tail terms `α r − β A r` to `p`.
/// Weights of `r` and `A r` in the eigenvector of `root`.
fn tail_weights(problem: &DeflatedProblem, root: &SecularRoot, order: Order) -> Result<(f64, f64)> {
    if !problem.has_tail {
        return Ok((0.0, 0.0));
    }
    let g = tail_gap(problem, root)?;
    Ok(match order {
        Order::First => (1.0 / g, 0.0),
        Order::Second => {
            let g2 = g * g;
            (1.0 / g + problem.mu / g2, -1.0 / g2)
        }
    })
}

fn add_tail_terms(problem: &DeflatedProblem, root: &SecularRoot, order: Order, p: &mut DenseVector) -> Result<()> {
    let (wr, war) = tail_weights(problem, root, order)?;
    if wr != 0.0 {
        ops::axpy(wr, problem.r.as_slice(), p.as_mut_slice());
    }
    if war != 0.0 {
        let ar = problem
            .ar
            .as_ref()
            .ok_or_else(|| Error::invalid("second-order eigenvector needs A r"))?;
        ops::axpy(war, ar.as_slice(), p.as_mut_slice());
    }
    Ok(())
}

fn unit(p: DenseVector) -> Result<DenseVector> {
    linalg::normalized(&p).ok_or_else(|| Error::Degenerate("eigenvector formula produced a zero vector".into()))
}

/// `Q (Λ − tI)⁻¹ z + (tail terms)`, normalized.
pub fn truncated_eigenvector(problem: &DeflatedProblem, root: &SecularRoot, order: Order) -> Result<DenseVector> {
    let mut coeffs = DVector::zeros(problem.active_len());
    ops::tally(problem.active_len());
    for (k, (&lam, &z)) in problem.values.iter().zip(&problem.z).enumerate() {
        let g = root.gap_from(lam);
        if g == 0.0 {
            return Err(Error::Degenerate(format!("root {} sits on pole {lam}", root.t)));
        }
        coeffs[k] = z / g;
    }
    if order == Order::Second && problem.has_tail {
        let mut p = ops::combine(&problem.basis, &coeffs);
        add_tail_terms(problem, root, order, &mut p)?;
        return unit(p);
    }
    // r is orthogonal to the basis, so the norm is known before assembly.
    let (wr, _) = tail_weights(problem, root, order)?;
    let norm = (coeffs.norm_squared() + wr * wr * problem.zres).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Degenerate("eigenvector formula produced a zero vector".into()));
    }
    coeffs /= norm;
    Ok(ops::combine_axpy(&problem.basis, &coeffs, wr / norm, &problem.r))
}

/// `η*ᵢ = Σ_{k≠i} zₖ²/(λₖ − tᵢ) / Σ_{k≠i} zₖ²`, or 0 when every off-`i`
/// weight has been deflated away. `exclude = None` sums over all components.
pub fn optimal_eta(problem: &DeflatedProblem, root: &SecularRoot, exclude: Option<usize>) -> f64 {
    ops::tally(problem.active_len());
    let (mut num, mut den) = (0.0, 0.0);
    for (k, (&lam, &z)) in problem.values.iter().zip(&problem.z).enumerate() {
        if Some(k) == exclude {
            continue;
        }
        let w = z * z;
        num += w / root.gap_from(lam);
        den += w;
    }
    if den <= 1e-30 {
        0.0
    } else {
        num / den
    }
}

/// Eigenvector in O(d): the retained-basis sum is replaced by its own
/// diagonal term plus `η (v − r)`.
pub fn fast_eigenvector(problem: &DeflatedProblem, root: &SecularRoot, order: Order, eta: f64) -> Result<DenseVector> {
    let mut p = problem.qz.clone();
    ops::scale(eta, p.as_mut_slice());
    if let Some(PoleRef::Lambda(i)) = root.pole {
        let g = root.gap_from(problem.values[i]);
        if g == 0.0 {
            return Err(Error::Degenerate(format!(
                "root {} sits on pole {}",
                root.t, problem.values[i]
            )));
        }
        let coeff = (1.0 / g - eta) * problem.z[i];
        ops::axpy(coeff, problem.basis.column(i).as_slice(), p.as_mut_slice());
    }
    add_tail_terms(problem, root, order, &mut p)?;
    unit(p)
}

fn pole_index(root: &SecularRoot) -> Option<usize> {
    match root.pole {
        Some(PoleRef::Lambda(i)) => Some(i),
        _ => None,
    }
}

/// Merges updated pairs with the passthrough pairs and keeps the top `m`.
fn assemble(problem: DeflatedProblem, updated: Vec<(f64, DenseVector)>) -> Result<EigenPairs> {
    let m = problem.m;
    let mut all: Vec<(f64, DenseVector)> = updated;
    all.extend(problem.passthrough.into_iter().map(|p| (p.value, p.vector)));
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    all.truncate(m);
    let values = all.iter().map(|p| p.0).collect();
    let vectors = DMatrix::from_columns(&all.into_iter().map(|p| p.1).collect::<Vec<_>>());
    EigenPairs::new(values, vectors)
}

/// Leading eigenpairs of `A + ρ v vᵀ` from the leading eigenpairs of `A`.
///
/// `scatter` is `A` itself and is required for [`Order::Second`]. `mu` is
/// moved off any retained eigenvalue it coincides with.
pub fn truncated_update(
    pairs: &EigenPairs,
    upd: &RankOneUpdate,
    mu: f64,
    scatter: Option<&SymmetricMatrix>,
    order: Order,
    formula: EigvecFormula,
) -> Result<EigenPairs> {
    let mut spec = TruncatedSpectrum::new(pairs, upd.v(), mu)?;
    if order == Order::Second {
        let a = scatter.ok_or_else(|| Error::invalid("second-order update needs the scatter matrix"))?;
        spec = spec.with_scatter(a)?;
    }
    update_spectrum(spec, upd.rho(), order, formula)
}

/// Runs deflation, root finding and eigenvector reconstruction on an
/// already projected spectrum.
pub fn update_spectrum(
    mut spec: TruncatedSpectrum<'_>,
    rho: f64,
    order: Order,
    formula: EigvecFormula,
) -> Result<EigenPairs> {
    spec.mu = nudge_mu(spec.mu, spec.pairs.values());
    let problem = deflate(spec, DEFLATION_TOL);
    let roots = truncated_roots(&problem, order, rho)?;
    let mut updated = Vec::with_capacity(roots.len());
    for root in &roots {
        let p = match formula {
            EigvecFormula::Truncated => truncated_eigenvector(&problem, root, order)?,
            EigvecFormula::Fast => {
                let eta = optimal_eta(&problem, root, pole_index(root));
                fast_eigenvector(&problem, root, order, eta)?
            }
        };
        updated.push((root.t, p));
    }
    assemble(problem, updated)
}

/// Eigendecomposition of `A + ρ v vᵀ` from the full eigendecomposition of `A`.
///
/// Eigenvectors use weights recomputed from the computed roots (the Löwner
/// construction), which keeps them orthogonal to working precision.
pub fn exact_update(full: &EigenPairs, upd: &RankOneUpdate) -> Result<EigenPairs> {
    if full.count() != full.dim() {
        return Err(Error::invalid(format!(
            "exact update needs the full spectrum ({} of {} pairs given)",
            full.count(),
            full.dim()
        )));
    }
    let spec = TruncatedSpectrum::new(full, upd.v(), 0.0)?;
    let mut problem = deflate(spec, DEFLATION_TOL);
    // Whatever mass is left outside span(Q) is rounding noise.
    problem.has_tail = false;
    problem.zres = 0.0;
    let roots = truncated_roots(&problem, Order::First, upd.rho())?;
    let rho = upd.rho();
    let k = problem.active_len();
    let zhat: Vec<f64> = (0..k)
        .map(|i| {
            let di = problem.values[i];
            // ẑᵢ² = Πⱼ(tⱼ − dᵢ) / (ρ Π_{j≠i}(dⱼ − dᵢ))
            let mut prod = -roots[i].gap_from(di) / rho;
            for j in 0..k {
                if j != i {
                    prod *= -roots[j].gap_from(di) / (problem.values[j] - di);
                }
            }
            prod.max(0.0).sqrt().copysign(problem.z[i])
        })
        .collect();
    let mut updated = Vec::with_capacity(k);
    for root in &roots {
        let coeffs = DVector::from_fn(k, |j, _| zhat[j] / root.gap_from(problem.values[j]));
        let p = unit(ops::combine(&problem.basis, &coeffs))?;
        updated.push((root.t, p));
    }
    assemble(problem, updated)
}
