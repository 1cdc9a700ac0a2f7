use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use decaylab::advdiff::{
    linfty_bound_certificate, lp_growth_certificate, mass_law_certificate, problem_from_presets, APreset,
    AdvDiffState, BPreset, FPreset, SolverOptions, U0Preset,
};
use decaylab::grid::{
    hdot_norm, lp_norm, random_smooth_field, read_field, spectral_derivative, transform_roundtrip, write_field, Field,
    GridSpec,
};
use decaylab::heat::apply_semigroup;
use decaylab::inequality::{registry, scaling_audit, ConstantSet, CorpusSpec};
use decaylab::moser::{c_jm, lambda_q, recursion_bound, telescoping_check, IterationParams};
use decaylab::navier_stokes::{
    inner_product, leray_project, nonlinear_term_of, random_divergence_free, spectral_divergence, tstar_bound,
    NSState, NsOptions,
};

fn smooth(n: usize, npts: usize, comps: usize, seed: u64) -> Field {
    let grid = GridSpec::new(n, npts, 2.0 * std::f64::consts::PI).unwrap();
    random_smooth_field(&grid, comps, 3.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn dim_and_npts() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![Just((1, 64)), Just((2, 32)), Just((3, 16))]
}

fn max_diff(a: &Field, b: &Field) -> f64 {
    a.sub(b).unwrap().max_abs()
}

/// `n kappa < p / 2` so every constant of the iteration is defined.
fn iteration_params() -> impl Strategy<Value = (usize, f64, f64)> {
    (1usize..=3, 1.0f64..6.0, 0.0f64..0.98).prop_map(|(n, p, frac)| (n, frac * p / (2.0 * n as f64), p))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn transform_round_trip((n, npts) in dim_and_npts(), seed in any::<u64>()) {
        let u = smooth(n, npts, 1, seed);
        let back = transform_roundtrip(&u).unwrap();
        prop_assert!(max_diff(&u, &back) < 1e-12 * u.max_abs());
    }

    #[test]
    fn parseval((n, npts) in dim_and_npts(), seed in any::<u64>(), vector in any::<bool>()) {
        let u = smooth(n, npts, if vector { n } else { 1 }, seed);
        let l2 = lp_norm(&u, 2.0).unwrap();
        prop_assert!((l2 - hdot_norm(&u, 0.0).unwrap()).abs() < 1e-10 * l2);
    }

    #[test]
    fn mixed_derivatives_commute(seed in any::<u64>()) {
        let u = smooth(3, 16, 1, seed);
        let a = spectral_derivative(&spectral_derivative(&u, &[1, 0, 0]).unwrap(), &[0, 0, 1]).unwrap();
        let b = spectral_derivative(&spectral_derivative(&u, &[0, 0, 1]).unwrap(), &[1, 0, 0]).unwrap();
        prop_assert!(max_diff(&a, &b) < 1e-12 * a.max_abs().max(1.0));
    }

    #[test]
    fn single_mode_hdot_scales_like_k(m in 1i32..10, s in 0.0f64..3.0) {
        let grid = GridSpec::new(1, 64, 2.0 * std::f64::consts::PI).unwrap();
        let u = Field::scalar_from_fn(&grid, |x| (m as f64 * x[0]).cos());
        let ratio = hdot_norm(&u, s).unwrap() / hdot_norm(&u, 0.0).unwrap();
        prop_assert!((ratio / (m as f64).powf(s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn field_binary_round_trip((n, npts) in dim_and_npts(), seed in any::<u64>()) {
        let u = smooth(n, npts, n, seed);
        let mut bytes = Vec::new();
        write_field(&u, &mut bytes).unwrap();
        prop_assert_eq!(bytes.len(), 32 + 8 * n * u.grid().len());
        let back = read_field(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.comps(), u.comps());
    }

    #[test]
    fn heat_semigroup_property((n, npts) in dim_and_npts(), seed in any::<u64>(), t1 in 0.0f64..0.5, t2 in 0.0f64..0.5) {
        let u = smooth(n, npts, 1, seed);
        let two = apply_semigroup(&apply_semigroup(&u, 1.0, t1).unwrap(), 1.0, t2).unwrap();
        let one = apply_semigroup(&u, 1.0, t1 + t2).unwrap();
        prop_assert!(max_diff(&two, &one) < 1e-12 * u.max_abs());
    }

    #[test]
    fn heat_contracts_l2((n, npts) in dim_and_npts(), seed in any::<u64>(), tau in 0.0f64..2.0) {
        let u = smooth(n, npts, 1, seed);
        let v = apply_semigroup(&u, 0.7, tau).unwrap();
        prop_assert!(hdot_norm(&v, 0.0).unwrap() <= hdot_norm(&u, 0.0).unwrap());
    }

    #[test]
    fn heat_commutes_with_derivatives(seed in any::<u64>(), tau in 0.0f64..1.0) {
        let u = smooth(2, 32, 1, seed);
        let a = spectral_derivative(&apply_semigroup(&u, 1.0, tau).unwrap(), &[1, 1]).unwrap();
        let b = apply_semigroup(&spectral_derivative(&u, &[1, 1]).unwrap(), 1.0, tau).unwrap();
        prop_assert!(max_diff(&a, &b) < 1e-12 * a.max_abs().max(1e-300) + 1e-14);
    }

    #[test]
    fn leray_projection_is_divergence_free_and_idempotent(n in 2usize..=3, seed in any::<u64>()) {
        let u = smooth(n, if n == 2 { 32 } else { 16 }, n, seed);
        let p = leray_project(&u).unwrap();
        prop_assert!(spectral_divergence(p.spectrum()) < 1e-11 * p.max_abs());
        let pp = leray_project(&p).unwrap();
        prop_assert!(max_diff(&p, &pp) < 1e-12 * p.max_abs());
    }

    #[test]
    fn nonlinearity_does_no_work(n in 2usize..=3, seed in any::<u64>()) {
        let grid = GridSpec::new(n, if n == 2 { 32 } else { 16 }, 2.0 * std::f64::consts::PI).unwrap();
        let u = random_divergence_free(&grid, 3.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let q = nonlinear_term_of(&u).unwrap();
        let scale = lp_norm(&q, 2.0).unwrap() * lp_norm(&u, 2.0).unwrap();
        prop_assert!(inner_product(&q, &u).abs() <= 1e-10 * scale.max(1e-300));
    }

    #[test]
    fn steps_stay_divergence_free(seed in any::<u64>()) {
        let grid = GridSpec::new(2, 32, 2.0 * std::f64::consts::PI).unwrap();
        let u = random_divergence_free(&grid, 3.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut s = NSState::new(&u, 0.1, NsOptions::default()).unwrap();
        for _ in 0..5 {
            s.step(1e-3).unwrap();
            prop_assert!(spectral_divergence(s.spectrum()) < 1e-11 * s.velocity().max_abs());
        }
        let times: Vec<f64> = s.history().grad().iter().map(|(t, _)| t).collect();
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tstar_below_stated_coefficient(lnu in -3.0f64..2.0, lu in -4.0f64..4.0) {
        let (nu, l2) = (10f64.powf(lnu), 10f64.powf(lu));
        prop_assert!(tstar_bound(nu, l2).unwrap() < 0.000753026 * nu.powi(-5) * l2.powi(4));
    }

    #[test]
    fn iteration_constant_below_closed_bound((n, kappa, p) in iteration_params(), m in 1usize..=25) {
        let params = IterationParams::new(n, kappa, p, 1.0).unwrap();
        let bound = (2.0 * p).powf(n as f64 / (p - n as f64 * kappa));
        for j in 1..=m {
            prop_assert!(c_jm(&params, j, m).unwrap() < bound);
        }
    }

    #[test]
    fn telescoping_holds((n, kappa, p) in iteration_params(), m in 1usize..=30) {
        let params = IterationParams::new(n, kappa, p, 1.0).unwrap();
        let (a, b) = telescoping_check(&params, m).unwrap();
        prop_assert!(a.passed() && b.passed());
        prop_assert!((a.lhs - a.rhs).abs() <= 1e-12 * a.rhs.abs());
        prop_assert!((b.lhs - b.rhs).abs() <= 1e-12 * b.rhs.abs());
    }

    #[test]
    fn lambda_tends_to_one((n, kappa, p) in iteration_params()) {
        let params = IterationParams::new(n, kappa, p, 1.0).unwrap();
        let gaps: Vec<f64> = (4..30).map(|l| lambda_q(&params, params.level_q(l)).unwrap() - 1.0).collect();
        prop_assert!(gaps.iter().all(|g| *g >= 0.0));
        prop_assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(gaps[gaps.len() - 1] < 1e-6);
    }

    #[test]
    fn recursion_bound_is_monotone_and_below_closed_form(
        (n, kappa, p) in iteration_params(),
        m in 1usize..=12,
        bmu in 0.0f64..5.0,
        (a, b, va, vb) in (0.01f64..3.0, 0.01f64..3.0, 0.1f64..5.0, 0.1f64..5.0),
        growth in 0.0f64..1.0,
        db in 0.0f64..2.0,
        du in 0.0f64..2.0,
    ) {
        // Norms of a two-valued datum, so the sequence is one an actual function produces.
        let params = IterationParams::new(n, kappa, p, 1.0).unwrap();
        let norms: Vec<f64> = (0..=m)
            .map(|l| {
                let q = params.level_q(l);
                let top = a.max(b);
                top * ((a / top).powf(q) * va + (b / top).powf(q) * vb).powf(1.0 / q)
            })
            .collect();
        let up = norms[0] * (1.0 + growth);
        let base = recursion_bound(&params, &norms, bmu, up, m).unwrap();
        let more_b = recursion_bound(&params, &norms, bmu + db, up, m).unwrap();
        let more_u = recursion_bound(&params, &norms, bmu, up + du, m).unwrap();
        let slack = |x: f64| 1e-12 * x.abs().max(1e-300);
        prop_assert!(more_b.recursive >= base.recursive - slack(base.recursive));
        prop_assert!(more_u.recursive >= base.recursive - slack(base.recursive));
        prop_assert!(more_b.closed >= base.closed - slack(base.closed));
        prop_assert!(more_u.closed >= base.closed - slack(base.closed));
        prop_assert!(base.recursive <= base.closed + slack(base.closed), "{} > {}", base.recursive, base.closed);
    }
}

#[derive(Debug, Clone)]
struct Scenario {
    kappa: f64,
    b: BPreset,
    f: FPreset,
    a: APreset,
    u0: U0Preset,
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (
        0.0f64..0.45,
        0.2f64..2.0,
        any::<u64>(),
        0.0f64..0.5,
        0.0f64..1.0,
        0.3f64..1.5,
        0.0f64..1.0,
        0.3f64..2.0,
        any::<bool>(),
    )
        .prop_map(|(kappa, amp, seed, mods, burgers, mu0, contrast, u_amp, signed)| Scenario {
            kappa,
            b: BPreset::Random { amp, seed, time_mod: mods, u_mod: mods },
            f: FPreset::Burgers { c: vec![burgers] },
            a: APreset::Random { mu0, contrast, seed: seed ^ 1 },
            u0: U0Preset::Bumps { amp: u_amp, width: 0.6, count: 3, seed: seed ^ 2, signed },
        })
}

fn run(s: &Scenario) -> AdvDiffState {
    let grid = GridSpec::new(1, 64, 10.0).unwrap();
    let spec = problem_from_presets(&grid, s.kappa, 1.0, &s.b, &s.f, &s.a, &s.u0).unwrap();
    let opts = SolverOptions { track_p: vec![1.0, 2.0, 4.0], ..SolverOptions::default() };
    let mut state = AdvDiffState::new(spec, opts).unwrap();
    state.run_until(0.3).unwrap();
    state
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn advdiff_structural_laws(s in scenario()) {
        let state = run(&s);
        let mass = &state.trackers().mass_series;
        let m0 = mass[0].1;
        for (_, m) in mass {
            prop_assert!((m - m0).abs() <= 1e-13 * state.trackers().lp(1.0).unwrap().iter().next().unwrap().1);
        }
        prop_assert!(mass_law_certificate(&state, 1e-10).unwrap().passed());

        let u0_sup = state.spec().u0.max_abs();
        if matches!(s.u0, U0Preset::Bumps { signed: false, .. }) {
            prop_assert!(state.values().iter().all(|v| *v >= -1e-12 * u0_sup));
        }

        let tr = state.trackers();
        for series in tr.up_running.iter().chain([&tr.bmu_running]) {
            let v: Vec<f64> = series.iter().map(|(_, v)| v).collect();
            prop_assert!(v.windows(2).all(|w| w[1] >= w[0]));
        }

        for p in [1.0, 2.0, 4.0] {
            if lp_growth_certificate(&state, p, 1e-9).unwrap().passed() && p > s.kappa {
                prop_assert!(linfty_bound_certificate(&state, p, 1e-9).unwrap().passed());
            }
        }
    }
}

#[test]
fn scaling_balance_holds_for_registry() {
    let corpus = CorpusSpec::default();
    for ineq in registry(&ConstantSet::default()) {
        let c = scaling_audit(&ineq, &corpus).unwrap();
        assert!(c.passed(), "{}: {}", ineq.name, c.lhs);
    }
}

#[test]
fn field_binary_layout() {
    let grid = GridSpec::new(1, 8, 2.0).unwrap();
    let u = Field::new(grid, vec![(0..8).map(|i| i as f64 * 0.5).collect()]).unwrap();
    let mut bytes = Vec::new();
    write_field(&u, &mut bytes).unwrap();
    let mut expected = Vec::new();
    for w in [1u64, 8] {
        expected.extend_from_slice(&w.to_le_bytes());
    }
    expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 0x40]);
    expected.extend_from_slice(&1u64.to_le_bytes());
    for i in 0..8 {
        expected.extend_from_slice(&(i as f64 * 0.5).to_bits().to_le_bytes());
    }
    assert_eq!(bytes, expected);
    assert!(read_field(&bytes[..40]).is_err());
}
