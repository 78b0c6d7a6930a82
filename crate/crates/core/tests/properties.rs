//! Randomised properties of the analysis, design and simulation layers.

mod common;

use async_lab::bounds::{theorem1_margin, BoundQuery, SearchParams};
use async_lab::design::{design_constants, riccati_design, riccati_residual, verify_lyapunov_family};
use async_lab::graphs::{algebraic_connectivity, build_algebra, build_algebra_oriented};
use async_lab::matan::{expm, expm_integral, sym_eigenvalues};
use async_lab::sampling::{
    apply_multiplicative_error, generate_schedule, log_quantize_scalar, saturation_scale,
    validate_schedule, ErrorModel,
};
use async_lab::sim::presets::example3_scenario;
use async_lab::sim::{average_invariance_error, run, EventKind, Mode, ScheduleSpec};
use async_lab::{LtiModel, Matrix, Vector};
use common::{random_connected_graph, random_matrix, random_scenario, rng};
use proptest::prelude::*;
use rand::Rng;

fn spectral_norm_sym_product(left: &[f64], right: &[f64], shift: f64) -> f64 {
    // For symmetric L and S, eig(L ⊗ S - cI) = {l·s - c}.
    left.iter()
        .flat_map(|l| right.iter().map(move |s| (l * s - shift).abs()))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn orientation_leaves_laplacian_unchanged(seed in any::<u64>(), n in 2usize..9) {
        let mut r = rng(seed);
        let g = random_connected_graph(&mut r, n);
        let flip: Vec<bool> = (0..g.edge_count()).map(|_| r.random_bool(0.5)).collect();
        let a = build_algebra(&g);
        let b = build_algebra_oriented(&g, &flip);
        prop_assert_eq!(&a.graph_laplacian, &b.graph_laplacian);
        prop_assert_eq!(&a.spectrum, &b.spectrum);
        // Column sums of D vanish, so DDᵀ·1 = 0.
        for col in b.incidence.column_iter() {
            prop_assert_eq!(col.sum(), 0.0);
        }
        let ones = Vector::from_element(n, 1.0);
        prop_assert_eq!((&b.graph_laplacian * ones).amax(), 0.0);
    }

    #[test]
    fn edge_and_graph_laplacians_share_nonzero_spectrum(seed in any::<u64>(), n in 2usize..9) {
        let g = random_connected_graph(&mut rng(seed), n);
        let a = build_algebra(&g);
        let nonzero = |v: Vec<f64>| -> Vec<f64> { v.into_iter().filter(|x| x.abs() > 1e-9).collect() };
        let lhs = nonzero(a.spectrum.clone());
        let rhs = nonzero(sym_eigenvalues(&a.edge_laplacian));
        prop_assert_eq!(lhs.len(), rhs.len());
        for (x, y) in lhs.iter().zip(&rhs) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn expm_semigroup(seed in any::<u64>(), n in 1usize..7, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let m = random_matrix(&mut rng(seed), n, n, -2.0, 2.0);
        let lhs = expm(&m, s).unwrap() * expm(&m, t).unwrap();
        let rhs = expm(&m, s + t).unwrap();
        prop_assert!((lhs - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
    }

    #[test]
    fn expm_integral_derivative(seed in any::<u64>(), n in 1usize..7, t in 0.01f64..2.0) {
        let m = random_matrix(&mut rng(seed), n, n, -2.0, 2.0);
        let d = 1e-5;
        let fd = (expm_integral(&m, t + d).unwrap() - expm_integral(&m, t - d).unwrap()) / (2.0 * d);
        let e = expm(&m, t).unwrap();
        prop_assert!((fd - &e).norm() <= 1e-6 * (1.0 + e.norm()));
    }

    #[test]
    fn quantizer_relative_error(xi in prop::num::f64::NORMAL, level in prop::sample::select(vec![1.05, 1.1, 2.0])) {
        let q = log_quantize_scalar(xi, level);
        prop_assert_eq!(q.signum(), xi.signum());
        prop_assert!((xi - q).abs() <= (level - 1.0) * q.abs() * (1.0 + 1e-12));
    }

    #[test]
    fn saturation_limits(v in prop::collection::vec(-1e6f64..1e6, 1..6), rho_s in 0.01f64..100.0) {
        let v = Vector::from_vec(v);
        let (rho, out) = saturation_scale(&v, rho_s);
        prop_assert!(rho > 0.0 && rho <= 1.0);
        prop_assert!(out.amax() <= rho_s * (1.0 + 1e-12));
    }

    #[test]
    fn multiplicative_errors_are_admissible(
        seed in any::<u64>(),
        v in prop::collection::vec(-10.0f64..10.0, 1..6),
        omega in 0.0f64..4.0,
        adversarial in any::<bool>(),
    ) {
        let v = Vector::from_vec(v);
        let (held, e) = apply_multiplicative_error(&v, omega, adversarial, &mut rng(seed));
        prop_assert!((&held + &e - &v).amax() <= 1e-12 * (1.0 + v.amax()));
        prop_assert!(e.norm_squared() <= omega * held.norm_squared() * (1.0 + 1e-9) + 1e-300);
    }

    #[test]
    fn generated_schedules_are_admissible(
        seed in any::<u64>(),
        h_min in 0.001f64..0.1,
        spread in 1.0f64..3.0,
        tau_frac in 0.0f64..1.5,
    ) {
        let h_max = h_min * spread;
        let tau = h_min * tau_frac;
        let s = generate_schedule(h_min, h_max, tau, 5.0, seed, 0).unwrap();
        prop_assert!(validate_schedule(&s, h_max * (1.0 + 1e-12), tau).is_ok());
    }

    #[test]
    fn margin_is_non_increasing_in_omega(
        omega in 0.0f64..1.0,
        extra in 0.0f64..1.0,
        s in 0.0f64..0.5,
        alpha in 0.01f64..10.0,
        beta in 0.01f64..10.0,
    ) {
        let q = |omega| BoundQuery {
            mu: 1.0, eps: 1.0, omega, lambda_as: 0.3, sigma_a: 1.0,
            sigma_g: 2.0, sigma_k: 1.0, h: s, tau: 0.0, tau_in: 0.0,
        };
        let p = SearchParams { alpha, beta, ..SearchParams::default() };
        let lo = theorem1_margin(&q(omega), &p);
        let hi = theorem1_margin(&q(omega + extra), &p);
        prop_assert!(hi <= lo + 1e-12);
    }
}

/// Random stabilizable pair of size ≤ 4; generic random pairs are
/// controllable, so this only filters the degenerate draws.
fn random_pair(r: &mut impl Rng) -> LtiModel {
    let nn = r.random_range(1..=4);
    let mm = r.random_range(1..=nn);
    LtiModel::new(random_matrix(r, nn, nn, -1.0, 1.0), random_matrix(r, nn, mm, -1.0, 1.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn riccati_design_certifies_lyapunov_family(seed in any::<u64>(), n in 2usize..8, frac in 0.05f64..=1.0, mu in 0.1f64..2.0) {
        let mut r = rng(seed);
        let model = random_pair(&mut r);
        let alg = build_algebra(&random_connected_graph(&mut r, n));
        let l2 = algebraic_connectivity(&alg);
        let Ok(d) = riccati_design(&model, frac * l2, mu) else {
            return Err(TestCaseError::reject("ill-conditioned pair"));
        };
        prop_assert_eq!(&d.p, &d.p.transpose());
        let res = riccati_residual(&model, &d.p, frac * l2, mu).norm();
        prop_assert!(res <= 1e-8 * (1.0 + d.p.norm()));
        prop_assert!(verify_lyapunov_family(&d, &model, alg.nonzero_modes()));
    }

    /// The Kronecker-structured constants agree with the spectral identity
    /// eig(L ⊗ S) = {l·s} for symmetric factors.
    #[test]
    fn kronecker_constants_match_spectral_oracle(seed in any::<u64>(), n in 2usize..7) {
        let mut r = rng(seed);
        let model = random_pair(&mut r);
        prop_assume!(model.state_dim() <= 3);
        let alg = build_algebra(&random_connected_graph(&mut r, n));
        let Ok(d) = riccati_design(&model, algebraic_connectivity(&alg), 1.0) else {
            return Err(TestCaseError::reject("ill-conditioned pair"));
        };
        let dc = design_constants(&d, &model, &alg).unwrap();
        let pbk: Matrix = &d.p * model.b() * &d.k;
        let edge_eigs = sym_eigenvalues(&alg.edge_laplacian);
        let oracle = spectral_norm_sym_product(&edge_eigs, &sym_eigenvalues(&pbk), 2.0 * d.mu);
        prop_assert!((dc.sigma_edge - oracle).abs() <= 1e-8 * (1.0 + oracle));
    }
}

#[test]
fn event_triggered_runs_are_zeno_free() {
    for seed in 0..100u64 {
        let mut s = example3_scenario(seed).unwrap();
        s.horizon = 2.0;
        if seed % 2 == 1 {
            s.schedule = ScheduleSpec::Continuous;
        }
        let ErrorModel::EventTrigger { dwell, .. } = s.error_model else { unreachable!() };
        let tr = run(&s).unwrap();
        if let Some(g) = tr.min_update_gap() {
            assert!(g >= dwell * (1.0 - 1e-9), "seed {seed}: gap {g} < dwell {dwell}");
        }
    }
}

#[test]
fn random_runs_keep_average_and_replay_identically() {
    for seed in 0..40u64 {
        let s = random_scenario(5000 + seed);
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        assert!(a.events.iter().zip(&b.events).all(|(x, y)| x.time.to_bits() == y.time.to_bits()
            && x.channel == y.channel
            && x.kind == y.kind));
        assert_eq!(a.states, b.states);
        if matches!(s.mode, Mode::RelativeEdges | Mode::Broadcast) {
            let err = average_invariance_error(&a, &s).unwrap();
            assert!(err <= 1e-9, "seed {seed}: average drift {err}");
        }
        // Every change of a held value coincides with a delivery.
        let deliveries: Vec<(u64, usize)> = a
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Deliver)
            .map(|e| (e.time.to_bits(), e.channel))
            .collect();
        for (c, holds) in a.holds.iter().enumerate() {
            for h in holds {
                assert!(deliveries.contains(&(h.time.to_bits(), c)), "seed {seed}: hold at {} on {c}", h.time);
            }
        }
    }
}
