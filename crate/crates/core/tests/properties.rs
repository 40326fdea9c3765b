use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use roipca::baselines::{batch_pca, eigenspace_error, Ipca};
use roipca::linalg::{projector_distance, sym_eigh};
use roipca::rank_one::{deflate, exact_update, truncated_roots, TruncatedSpectrum, DEFLATION_TOL};
use roipca::{Algorithm, EigenPairs, MuPolicy, OnlinePcaConfig, Order, RankOneUpdate, SpectralState, SymmetricMatrix};

fn matrix(d: usize, entries: &[f64]) -> SymmetricMatrix {
    SymmetricMatrix::from_lower_fn(d, |i, j| entries[(i * 31 + j * 17) % entries.len()])
}

fn unit(d: usize, entries: &[f64]) -> Option<DVector<f64>> {
    let v = DVector::from_fn(d, |i, _| entries[i % entries.len()] + 0.01 * i as f64);
    let n = v.norm();
    (n > 1e-3).then(|| v / n)
}

fn data(rows: usize, cols: usize, entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| entries[(i * cols + j) % entries.len()] * (1.0 + (i * 3 + j) as f64 * 0.013).sin())
}

fn orthogonal(m: usize, angles: &[f64]) -> DMatrix<f64> {
    let mut q = DMatrix::identity(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in i + 1..m {
            let (c, s) = (angles[k % angles.len()].cos(), angles[k % angles.len()].sin());
            k += 1;
            for r in 0..m {
                let (a, b) = (q[(r, i)], q[(r, j)]);
                q[(r, i)] = c * a - s * b;
                q[(r, j)] = s * a + c * b;
            }
        }
    }
    q
}

fn rho_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![0.05f64..2.0, -2.0f64..-0.05]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_update_matches_dense_solver(
        d in 2usize..9,
        entries in prop::collection::vec(-1.0f64..1.0, 16..40),
        ventries in prop::collection::vec(-1.0f64..1.0, 9),
        rho in rho_strategy(),
    ) {
        let a = matrix(d, &entries);
        let Some(v) = unit(d, &ventries) else { return Ok(()) };
        let full = sym_eigh(&a).unwrap();
        let got = exact_update(&full, &RankOneUpdate::new(rho, v.clone()).unwrap()).unwrap();
        let mut b = a.clone();
        b.rank_one_update(rho, &v);
        let want = sym_eigh(&b).unwrap();
        let scale = want.value(0).abs().max(1.0);
        for i in 0..d {
            prop_assert!((got.value(i) - want.value(i)).abs() <= 1e-8 * scale);
        }
        prop_assert!(got.gram_deviation() < 1e-10);
        let trace_before: f64 = full.values().iter().sum();
        let trace_after: f64 = got.values().iter().sum();
        prop_assert!((trace_after - trace_before - rho).abs() <= 1e-8 * (trace_before.abs() + rho.abs() + 1.0));
    }

    #[test]
    fn truncated_roots_interlace(
        d in 3usize..9,
        m_frac in 0.2f64..0.9,
        entries in prop::collection::vec(-1.0f64..1.0, 16..40),
        ventries in prop::collection::vec(-1.0f64..1.0, 9),
        rho in rho_strategy(),
        mu_frac in 0.0f64..0.9,
    ) {
        let m = ((d as f64 * m_frac) as usize).clamp(1, d - 1);
        let a = matrix(d, &entries);
        let Some(v) = unit(d, &ventries) else { return Ok(()) };
        let pairs = sym_eigh(&a).unwrap().truncate(m);
        let lowest = pairs.value(m - 1);
        let mu = lowest - (1.0 + mu_frac) * 0.5;
        let spec = TruncatedSpectrum::new(&pairs, &v, mu).unwrap();
        let problem = deflate(spec, DEFLATION_TOL);
        let roots = truncated_roots(&problem, Order::First, rho).unwrap();
        for (i, r) in roots.iter().enumerate() {
            prop_assert!(r.bracket.0 < r.t && r.t < r.bracket.1, "root {} outside {:?}", r.t, r.bracket);
            if rho > 0.0 {
                prop_assert!(r.t > problem.values[i]);
                if i > 0 {
                    prop_assert!(r.t < problem.values[i - 1]);
                }
            } else {
                prop_assert!(r.t < problem.values[i]);
                if i + 1 < problem.values.len() {
                    prop_assert!(r.t > problem.values[i + 1]);
                }
            }
        }
        if rho > 0.0 && !roots.is_empty() {
            prop_assert!(roots[0].t <= problem.values[0].max(mu) + rho * (1.0 + 1e-12));
        }
    }

    #[test]
    fn metric_is_symmetric_bounded_and_basis_free(
        d in 3usize..10,
        m_frac in 0.1f64..1.0,
        e1 in prop::collection::vec(-1.0f64..1.0, 16..40),
        e2 in prop::collection::vec(-1.0f64..1.0, 16..40),
        angles in prop::collection::vec(-3.0f64..3.0, 10),
    ) {
        let m = ((d as f64 * m_frac) as usize).clamp(1, d);
        let a = sym_eigh(&matrix(d, &e1)).unwrap().truncate(m);
        let b = sym_eigh(&matrix(d, &e2)).unwrap().truncate(m);
        let ab = eigenspace_error(&a, &b).unwrap();
        let ba = eigenspace_error(&b, &a).unwrap();
        prop_assert!((0.0..=2.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(eigenspace_error(&a, &a).unwrap() < 1e-12);
        let mixed = EigenPairs::new(a.values().to_vec(), a.vectors() * orthogonal(m, &angles)).unwrap();
        prop_assert!((eigenspace_error(&mixed, &b).unwrap() - ab).abs() < 1e-10);
    }

    #[test]
    fn stream_keeps_trace_and_spectrum_bounds(
        entries in prop::collection::vec(-2.0f64..2.0, 30..80),
        m in 1usize..4,
        fast in any::<bool>(),
    ) {
        let x = data(60, 6, &entries);
        // The fast formula only keeps Σλ ≤ trace while its basis stays orthonormal.
        let cfg = if fast {
            OnlinePcaConfig::new(m)
                .with_formula(roipca::EigvecFormula::Fast)
                .with_reorthonormalize_every(1)
        } else {
            OnlinePcaConfig::new(m)
        };
        let mut st = SpectralState::init_from_batch(&x.rows(0, 10).into_owned(), cfg).unwrap();
        let mut prev = st.trace();
        for i in 10..60 {
            st.ingest(&x.row(i).transpose()).unwrap();
            let t = st.trace();
            prop_assert!(t >= prev);
            prev = t;
            let vals = st.eigenpairs().values();
            prop_assert!(vals.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(vals.iter().all(|&l| l >= -1e-8 * t));
            prop_assert!(t >= vals.iter().sum::<f64>() - 1e-8 * t, "trace {} sum {} step {}", t, vals.iter().sum::<f64>(), i);
        }
    }

    #[test]
    fn scaling_samples_scales_eigenvalues(
        entries in prop::collection::vec(-2.0f64..2.0, 30..80),
        s in 0.1f64..10.0,
    ) {
        let x = data(40, 5, &entries);
        let cfg = OnlinePcaConfig::new(2);
        let run = |x: &DMatrix<f64>| {
            let mut st = SpectralState::init_from_batch(&x.rows(0, 10).into_owned(), cfg.clone()).unwrap();
            for i in 10..40 {
                st.ingest(&x.row(i).transpose()).unwrap();
            }
            st
        };
        let a = run(&x);
        let b = run(&(&x * s));
        for j in 0..2 {
            let (la, lb) = (a.eigenpairs().value(j), b.eigenpairs().value(j));
            prop_assert!((lb - s * s * la).abs() <= 1e-9 * lb.abs().max(1.0));
            prop_assert!(projector_distance(a.eigenpairs().vector(j), b.eigenpairs().vector(j)) <= 1e-8);
        }
    }

    #[test]
    fn ipca_full_rank_equals_batch(entries in prop::collection::vec(-2.0f64..2.0, 30..80)) {
        let x = data(30, 4, &entries);
        let mean0 = DVector::zeros(4);
        let mut ipca = Ipca::from_batch_centered(&x.rows(0, 8).into_owned(), mean0, 4).unwrap();
        let mut scatter = SymmetricMatrix::scatter(&x.rows(0, 8).into_owned(), Some(&DVector::zeros(4)));
        for i in 8..30 {
            let row = x.row(i).transpose();
            ipca.ingest(&row).unwrap();
            let n = row.norm();
            if n > 0.0 {
                scatter.rank_one_update(n * n, &(&row / n));
            }
            let want = sym_eigh(&scatter).unwrap();
            for j in 0..4 {
                prop_assert!((ipca.eigenpairs().value(j) - want.value(j)).abs() <= 1e-8 * want.value(0).max(1.0));
            }
        }
    }

    #[test]
    fn full_spectrum_second_order_is_exact(
        entries in prop::collection::vec(-2.0f64..2.0, 30..80),
        mu in prop_oneof![Just(MuPolicy::Zero), Just(MuPolicy::Mean), Just(MuPolicy::Star)],
    ) {
        let d = 5;
        let x = data(40, d, &entries);
        let x0 = x.rows(0, 10).into_owned();
        let cfg = OnlinePcaConfig::covariance_backed(d).with_mu(mu);
        prop_assume!(cfg.algorithm == Algorithm::CovarianceBacked && cfg.order == Order::Second);
        let mut st = SpectralState::init_from_batch(&x0, cfg).unwrap();
        for i in 10..40 {
            st.ingest(&x.row(i).transpose()).unwrap();
        }
        let want = sym_eigh(st.scatter().unwrap()).unwrap();
        let scale = want.value(0).max(1.0);
        for j in 0..d {
            prop_assert!((st.eigenpairs().value(j) - want.value(j)).abs() <= 1e-6 * scale);
        }
        prop_assert!(eigenspace_error(&st.eigenpairs().clone().truncate(2), &want.truncate(2)).unwrap() < 1e-6);
    }
}

#[test]
fn batch_spectrum_sums_to_centered_trace() {
    let entries: Vec<f64> = (0..57).map(|k| ((k * 37) % 19) as f64 / 7.0 - 1.3).collect();
    let x = data(50, 6, &entries);
    let pairs = batch_pca(&x, 6).unwrap();
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(50, 6, |i, j| x[(i, j)] - mean[j]);
    let trace = (centered.transpose() * &centered).trace();
    let sum: f64 = pairs.values().iter().sum();
    assert!((sum - trace).abs() <= 1e-10 * trace);
    assert!(pairs.values().windows(2).all(|w| w[0] >= w[1]));
    assert!(pairs.values().iter().all(|&l| l >= -1e-12 * trace));
}
