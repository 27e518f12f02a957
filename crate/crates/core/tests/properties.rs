use std::f64::consts::PI;

use fock_spectra::birman_schwinger::{assemble_discrete_h, assemble_t, count_h_below};
use fock_spectra::config::{parse_config, Coupling, CouplingKeyword, RunConfig};
use fock_spectra::efimov::{count_sphere, s_hat_eigenvalue, u_of_mu, EfimovParams};
use fock_spectra::friedrichs::{delta, delta_difference, tune_coupling};
use fock_spectra::linalg::{bunch_kaufman_inertia, count_above, eigenvalues, SymmetricMatrix};
use fock_spectra::model::{
    assumption_params, m_w_closed, threshold_geometry, w_raw, Channel, ModelParams,
};
use fock_spectra::torus::{integrate, make_graded_grid, make_grid, wrap, Grid, TorusPoint};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -PI..PI
}

fn point() -> impl Strategy<Value = TorusPoint> {
    (angle(), angle(), angle()).prop_map(|(a, b, c)| TorusPoint::new([a, b, c]).unwrap())
}

fn weights() -> impl Strategy<Value = (f64, f64)> {
    (0.2f64..5.0, 0.2f64..5.0).prop_filter("l1 != l2", |(a, b)| (a - b).abs() > 1e-3)
}

fn small_grid() -> Grid {
    make_graded_grid(6, 3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wrap_lands_in_half_open_interval(x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0) {
        let p = wrap([x, y, z]).unwrap();
        for (c, raw) in p.coords().iter().zip([x, y, z]) {
            prop_assert!(*c > -PI && *c <= PI);
            // same point on the circle
            prop_assert!(((c - raw) / (2.0 * PI)).round() * 2.0 * PI - (c - raw) < 1e-9);
        }
        prop_assert_eq!(wrap(p.coords()).unwrap(), p);
    }

    #[test]
    fn group_law(p in point(), q in point()) {
        prop_assert_eq!(p.add(&q), q.add(&p));
        let zero = p.add(&p.neg());
        prop_assert!(zero.norm() < 1e-12);
    }

    #[test]
    fn even_integrands_see_symmetric_nodes(n in 2usize..9, a in 0.1f64..3.0) {
        let grid = make_graded_grid(n, 3).unwrap();
        let f = |p: &TorusPoint| (a * p.coords()[0].cos() + p.coords()[1].sin().powi(2)).exp();
        let g = |p: &TorusPoint| f(&p.neg());
        prop_assert_eq!(integrate(f, &grid).unwrap(), integrate(g, &grid).unwrap());
    }

    #[test]
    fn excess_is_exact_decomposition((l1, l2) in weights(), p in point(), t in point()) {
        let m = ModelParams::remark27(l1, l2, Channel::ConstantOne, 0.0).unwrap();
        let geo = threshold_geometry(&m, &p);
        let w = w_raw(&m, p.coords(), t.coords());
        let scale = 1.0 + w.abs();
        prop_assert!((w - geo.m_w - geo.excess(t.coords())).abs() < 1e-12 * scale);
        prop_assert!(geo.excess(t.coords()) >= 0.0);
        prop_assert!(w <= geo.top() + 1e-12 * scale);
        prop_assert!((m_w_closed(&m, &p) - m_w_closed(&m, &p.neg())).abs() < 1e-14 * scale);
    }

    #[test]
    fn hessian_ratio_invariant_under_scaling((l1, l2) in weights(), k in 0.1f64..10.0) {
        let a = assumption_params(&ModelParams::remark27(l1, l2, Channel::ConstantOne, 0.0).unwrap()).unwrap();
        let b = assumption_params(&ModelParams::remark27(k * l1, k * l2, Channel::ConstantOne, 0.0).unwrap()).unwrap();
        prop_assert!((a.s - b.s).abs() < 1e-14);
        prop_assert!((a.l - 1.0 / (1.0 - a.s * a.s).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn inertia_matches_eigensolver(seed in any::<u64>(), n in 1usize..30, mu in -1.0f64..1.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = SymmetricMatrix::from_lower_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let ev = eigenvalues(&a);
        let c = count_above(&a, mu).unwrap();
        if !c.ambiguous {
            prop_assert_eq!(c.count, ev.iter().filter(|x| **x > mu).count());
        }
        if let Some(i) = bunch_kaufman_inertia(&a, mu) {
            prop_assert_eq!(i.positive + i.negative + i.zero, n);
        }
    }

    #[test]
    fn spherical_symbol_is_even(ell in 0usize..6, lambda in -8.0f64..8.0) {
        let ep = EfimovParams::from_ratio(1.0 / 3.0).unwrap();
        prop_assert_eq!(s_hat_eigenvalue(&ep, ell, lambda), s_hat_eigenvalue(&ep, ell, -lambda));
        prop_assert_eq!(count_sphere(&ep, 0.5, lambda).unwrap(), count_sphere(&ep, 0.5, -lambda).unwrap());
    }

    #[test]
    fn config_round_trip(
        n in 2usize..40,
        gamma in prop::sample::select(vec![1u32, 3, 5]),
        c in prop::option::of(-50.0f64..50.0),
        zs in prop::collection::vec(-2.0f64..-1e-6, 0..5),
        u0 in -3.0f64..3.0,
        tol in prop::option::of(1e-12f64..1e-3),
    ) {
        let mut cfg = parse_config("[model]\npreset = \"remark27\"\nl1 = 2.0\nl2 = 1.0\nc = \"tuned\"\n").unwrap();
        cfg.grid.n = n;
        cfg.grid.graded_gamma = gamma;
        cfg.model.c = c.map_or(Coupling::Keyword(CouplingKeyword::Tuned), Coupling::Value);
        cfg.model.u0 = u0;
        cfg.bs.z_list = zs;
        cfg.tolerances.classify_tol = tol;
        let back: RunConfig = parse_config(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn delta_is_even_in_p((l1, l2) in weights(), p in point(), z in -5.0f64..-0.01) {
        let grid = small_grid();
        let m = ModelParams::remark27(l1, l2, Channel::ConstantOne, 3.0).unwrap();
        let a = delta(&m, &p, z, &grid).unwrap();
        let b = delta(&m, &p.neg(), z, &grid).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn delta_decreases_in_z((l1, l2) in weights(), p in point(), z in -5.0f64..-0.01, dz in 0.001f64..1.0) {
        let grid = small_grid();
        let m = ModelParams::remark27(l1, l2, Channel::ConstantOne, 3.0).unwrap();
        let lo = z - dz;
        // Delta(p, lo) - Delta(p, z) > 0 without cancellation
        prop_assert!(delta_difference(&m, &p, lo, z, &grid).unwrap() > 0.0);
        prop_assert!(delta(&m, &p, lo, &grid).unwrap() > delta(&m, &p, z, &grid).unwrap());
    }

    #[test]
    fn kernel_matrix_symmetric_and_grows_toward_threshold(z in -2.0f64..-0.05, dz in 0.01f64..0.5) {
        let grid = make_graded_grid(4, 3).unwrap();
        let base = ModelParams::remark27(2.0, 1.0, Channel::ConstantOne, 0.0).unwrap();
        let m = base.with_c(tune_coupling(&base, &grid).unwrap());
        let far = assemble_t(&m, z - dz, &grid).unwrap();
        let near = assemble_t(&m, z, &grid).unwrap();
        prop_assert_eq!(near.matrix.max_asymmetry(), 0.0);
        for (a, b) in far.matrix.as_slice().iter().zip(near.matrix.as_slice()) {
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn discrete_count_monotone_in_z(z in -3.0f64..-0.05, dz in 0.01f64..1.0, c in 0.0f64..40.0) {
        let grid = make_grid(2).unwrap();
        let m = ModelParams::remark27(2.0, 1.0, Channel::ConstantOne, c).unwrap();
        let fock = assemble_discrete_h(&m, &grid).unwrap();
        let lo = count_h_below(&fock, z - dz).unwrap().count;
        let hi = count_h_below(&fock, z).unwrap().count;
        prop_assert!(lo <= hi);
    }
}

#[test]
fn u0_positive_for_every_ratio() {
    for s in [0.1, 0.3, 0.5, 0.9] {
        let ep = EfimovParams::from_ratio(s).unwrap();
        let r = u_of_mu(&ep, 1.0).unwrap();
        assert!(r.u0_coefficient > 0.0, "s = {s}");
        assert!(ep.l * s.asin() / s > 1.0);
    }
}

#[test]
fn u_of_mu_nonincreasing() {
    let ep = EfimovParams::from_ratio(1.0 / 3.0).unwrap();
    let values: Vec<f64> = [0.3, 0.5, 0.8, 1.0, 1.05, 1.2]
        .iter()
        .map(|&mu| u_of_mu(&ep, mu).unwrap().u_of_mu)
        .collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
}

#[test]
fn degree_symbols_decay() {
    let ep = EfimovParams::from_ratio(1.0 / 3.0).unwrap();
    let s: Vec<f64> = (0..=6).map(|l| s_hat_eigenvalue(&ep, l, 0.0)).collect();
    // odd degrees are negative, so the decay is in magnitude
    assert!(s.windows(2).all(|w| w[1].abs() < w[0].abs()), "{s:?}");
    assert!(s.iter().skip(1).step_by(2).all(|x| *x < 0.0));
}

#[test]
fn uniform_grid_refinement_keeps_counts_flat() {
    use fock_spectra::birman_schwinger::n_of_z;
    let base = ModelParams::remark27(2.0, 1.0, Channel::ConstantOne, 0.0).unwrap();
    let counts: Vec<usize> = [8, 10, 12]
        .iter()
        .map(|&n| {
            let g = make_grid(n).unwrap();
            let m = base.with_c(tune_coupling(&base, &make_graded_grid(16, 3).unwrap()).unwrap());
            n_of_z(&m, -1e-3, &g).unwrap().count
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[0] == w[1]), "{counts:?}");
}

#[test]
fn smooth_integrand_converges_spectrally() {
    let exact = {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            term *= 0.25 / (k * k) as f64;
            sum += term;
        }
        fock_spectra::torus::VOLUME * sum
    };
    let err = |n| (integrate(|p| p.coords()[0].cos().exp(), &make_grid(n).unwrap()).unwrap() - exact).abs();
    assert!(err(16) < 1e-6 * err(8));
}
