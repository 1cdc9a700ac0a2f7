//! Acceptance suite: eleven criteria, one PASS/FAIL line each.
//!
//! Tolerances and budgets are pinned below. Criteria run one at a time so their
//! wall-clock budgets are measured on an otherwise idle process.

use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use decaylab::advdiff::{fujita_contrast_run, APreset, BPreset, ContrastMode, ContrastSetup, ContrastSummary, FPreset, U0Preset};
use decaylab::grid::GridSpec;
use decaylab::inequality::{ConstantSet, K0, K1};
use decaylab::moser::{c_jm, linfty_constant, telescoping_check, IterationParams};
use decaylab::navier_stokes::{
    q_estimate_certificate, random_divergence_free, taylor_green, tstar_bound, tstar_coefficient_is_below_bound,
    NSState, NsOptions, K3,
};
use decaylab::runner::{
    run_advdiff, run_heat_check, run_ineq_suite, run_phase_scan, AdvDiffConfig, CellVerdict, HeatCheckConfig,
    IneqSuiteConfig, PhaseScanConfig, RunOptions, RunReport,
};
use decaylab::CertStatus;

const ENERGY_DEFECT_TOL: f64 = 1e-6;
const Q_ESTIMATE_TOL: f64 = 5e-2;
const TSTAR_COEFFICIENT: f64 = 0.000753026;
const INEQUALITY_TOL: f64 = 1e-3;
const TELESCOPING_TOL: f64 = 1e-12;
const LINFTY_TOL: f64 = 0.0;
const SLOPE_TOL: f64 = 0.1;
const MASS_TOL: f64 = 1e-10;
const CONTRAST_HORIZON: f64 = 50.0;

const BUDGET_1: Duration = Duration::from_secs(10);
const BUDGET_2: Duration = Duration::from_secs(60);
const BUDGET_3: Duration = Duration::from_secs(1);
const BUDGET_4: Duration = Duration::from_secs(120);
const BUDGET_5: Duration = Duration::from_secs(1);
const BUDGET_6: Duration = Duration::from_secs(1);
const BUDGET_7: Duration = Duration::from_secs(300);
const BUDGET_8: Duration = Duration::from_secs(600);
const BUDGET_9: Duration = Duration::from_secs(120);
const BUDGET_10: Duration = Duration::from_secs(120);

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written straight to the process stdout so the line survives test-output capture.
fn verdict(id: usize, title: &str, pass: bool, detail: &str) {
    let line = format!("acceptance {id:>2} [{}] {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn quiet() -> RunOptions {
    RunOptions::default()
}

#[test]
fn criterion_01_energy_identity_taylor_green() {
    let _g = serial();
    let start = Instant::now();
    let grid = GridSpec::new(2, 64, 2.0 * std::f64::consts::PI).unwrap();
    let u0 = taylor_green(&grid).unwrap();
    let mut state = NSState::new(&u0, 0.1, NsOptions::default()).unwrap();
    state.run_until(1.0, 1e-3).unwrap();
    let worst = state.energy_defects().into_iter().map(|(_, d)| d).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let pass = worst < ENERGY_DEFECT_TOL && elapsed < BUDGET_1;
    verdict(
        1,
        "energy identity, Taylor-Green 64^2",
        pass,
        &format!("max defect {worst:.3e} < {ENERGY_DEFECT_TOL:e}, {} steps, {:.2} s", state.steps(), elapsed.as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn criterion_02_projected_nonlinearity_heat_estimate() {
    let _g = serial();
    let start = Instant::now();
    let grid = GridSpec::new(3, 32, 2.0 * std::f64::consts::PI).unwrap();
    let k = (8.0 * std::f64::consts::PI).powf(-0.75);
    let mut checked = 0;
    let mut failed = 0;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let u = random_divergence_free(&grid, 3.0, 1.0, &mut rng).unwrap();
        for gap in [0.1, 1.0] {
            let c = q_estimate_certificate(&u, 1.0, gap, Q_ESTIMATE_TOL).unwrap();
            assert!((c.constant - k).abs() < 1e-15);
            checked += 1;
            failed += usize::from(!c.passed());
            worst = worst.max(c.ratio());
        }
    }
    let elapsed = start.elapsed();
    let pass = failed == 0 && elapsed < BUDGET_2;
    verdict(
        2,
        "projected-nonlinearity heat estimate, 20 fields at 32^3",
        pass,
        &format!("{checked} checks, {failed} failures, worst lhs/rhs {worst:.4}, K = {k:.6}, {:.2} s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn criterion_03_gradient_monotonicity_time_constant() {
    let _g = serial();
    let start = Instant::now();
    // K3^12 / 2 < 753026e-9 with K3 = 581862001307e-12, cleared of denominators.
    let oracle = BigUint::from(581_862_001_307u64).pow(12) * BigUint::from(10u32).pow(9)
        < BigUint::from(1_506_052u32) * BigUint::from(10u32).pow(144);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for _ in 0..1000 {
        let nu = 10f64.powf(rng.random_range(-2.0..1.0));
        let l2 = 10f64.powf(rng.random_range(-3.0..3.0));
        let t = tstar_bound(nu, l2).unwrap();
        let formula = 0.5 * K3.powi(12) * nu.powi(-5) * l2.powi(4);
        let assertion = TSTAR_COEFFICIENT * nu.powi(-5) * l2.powi(4);
        if !((t - formula).abs() <= 1e-14 * formula && t < assertion) {
            bad += 1;
        }
    }
    let exact = tstar_coefficient_is_below_bound();
    let elapsed = start.elapsed();
    let pass = bad == 0 && exact && oracle && elapsed < BUDGET_3;
    verdict(
        3,
        "gradient-monotonicity time constant",
        pass,
        &format!(
            "K3^12/2 = {:.9e} < {TSTAR_COEFFICIENT:e} exactly: {exact}, 1000 pairs, {bad} violations, {:.3} s",
            0.5 * K3.powi(12),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_inequality_corpora() {
    let _g = serial();
    let start = Instant::now();
    let cfg = IneqSuiteConfig { count: 100, tol: INEQUALITY_TOL, ..Default::default() };
    let c = cfg.constants();
    assert_eq!((K0, K1, c.k0, c.k1, c.k3, c.k_nash), (0.678, 1.0, 0.678, 1.0, 0.581862001307, 1.0));
    assert_eq!(c, ConstantSet::default());
    assert!(cfg.inequalities.iter().any(|n| n == "trilinear-gradient"));
    let report = run_ineq_suite(&cfg, &quiet()).unwrap();
    let elapsed = start.elapsed();
    let failed: Vec<&str> =
        report.certificates.iter().filter(|c| c.status != CertStatus::Pass).map(|c| c.name.as_str()).collect();
    let worst = report.certificates.iter().map(|c| c.lhs / c.constant).fold(0.0, f64::max);
    let pass = failed.is_empty() && report.certificates.len() == cfg.inequalities.len() && elapsed < BUDGET_4;
    verdict(
        4,
        "functional-inequality corpora, 100 samples each",
        pass,
        &format!(
            "{} inequalities, failing {failed:?}, worst ratio/K {worst:.4}, {:.1} s",
            report.certificates.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass, "{:#?}", report.verdicts);
}

/// `(n, kappa, p)` with `n kappa < p / 2`.
fn parameter_grid() -> Vec<(usize, f64, f64)> {
    let kappas = [0.0, 0.05, 0.1, 0.2, 0.3, 0.45, 0.7, 1.0, 1.2, 1.6, 2.4];
    let mut out = Vec::new();
    for p in [1.0, 2.0, 5.0] {
        for n in 1..=3usize {
            for &k in &kappas {
                if (n as f64) * k < 0.5 * p {
                    out.push((n, k, p));
                }
            }
        }
    }
    out
}

/// Direct sums and closed forms of the two telescoping identities.
fn telescoping_oracle(n: usize, kappa: f64, p: f64, m: usize) -> [(f64, f64); 2] {
    let nk = n as f64 * kappa;
    let (mut a, mut b, mut tail) = (0.0, 0.0, 0.0);
    for l in 1..=m {
        let q = 2f64.powi(l as i32) * p;
        let term = q / ((q - 2.0 * nk) * (q - nk));
        a += term;
        b += l as f64 * term;
        tail += 1.0 / (q - nk);
    }
    let qm = 2f64.powi(m as i32) * p;
    let ra = 1.0 / (p - nk) - 1.0 / (qm - nk);
    let rb = 1.0 / (p - nk) - (m as f64 + 1.0) / (qm - nk) + tail;
    [(a, ra), (b, rb)]
}

#[test]
fn criterion_05_telescoping_identities() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checks = 0;
    for (n, kappa, p) in parameter_grid() {
        let params = IterationParams::new(n, kappa, p, 1.0).unwrap();
        for m in 1..=20 {
            for (lhs, rhs) in telescoping_oracle(n, kappa, p, m) {
                worst = worst.max((lhs - rhs).abs() / rhs.abs());
                checks += 1;
            }
            let (a, b) = telescoping_check(&params, m).unwrap();
            for c in [a, b] {
                worst = worst.max((c.lhs - c.rhs).abs() / c.rhs.abs());
                checks += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < TELESCOPING_TOL && elapsed < BUDGET_5;
    verdict(
        5,
        "telescoping identities",
        pass,
        &format!("{checks} checks, worst relative defect {worst:.2e} < {TELESCOPING_TOL:e}, {:.3} s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

/// `ln C(j, m)` summed level by level from `lambda(q) = (q/2)^{n/(q - 2 n kappa)}`.
fn ln_c_oracle(n: usize, kappa: f64, p: f64, j: usize, m: usize) -> f64 {
    let nk = n as f64 * kappa;
    let nf = n as f64;
    (j..=m)
        .map(|l| {
            let q = 2f64.powi(l as i32) * p;
            let ln_lambda = nf / (q - 2.0 * nk) * (0.5 * q).ln();
            let weight = (p - nk / 2f64.powi(m as i32)) / (p - nk / 2f64.powi(l as i32));
            weight * ln_lambda
        })
        .sum()
}

#[test]
fn criterion_06_iteration_constant_bound() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut mismatch = 0.0f64;
    let mut violations = 0;
    let mut checks = 0;
    for (n, kappa, p) in parameter_grid() {
        let params = IterationParams::new(n, kappa, p, 1.0).unwrap();
        let bound = (2.0 * p).powf(n as f64 / (p - n as f64 * kappa));
        assert!((linfty_constant(n, kappa, p).unwrap() - bound).abs() <= 1e-15 * bound);
        for m in 1..=20 {
            for j in 1..=m {
                let c = c_jm(&params, j, m).unwrap();
                let oracle = ln_c_oracle(n, kappa, p, j, m).exp();
                mismatch = mismatch.max((c - oracle).abs() / oracle);
                worst = worst.max(c / bound);
                violations += usize::from(!(c < bound));
                checks += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && mismatch < 1e-12 && elapsed < BUDGET_6;
    verdict(
        6,
        "iteration constants below (2p)^{n/(p - n kappa)}",
        pass,
        &format!(
            "{checks} pairs (j, m), {violations} violations, max C/bound {worst:.6}, oracle mismatch {mismatch:.1e}, {:.3} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

struct Scenarios {
    runs: Vec<(String, RunReport)>,
    elapsed: Duration,
}

fn heterogeneous_scenarios() -> Vec<(&'static str, AdvDiffConfig)> {
    let base = |dim: usize, kappa: f64| AdvDiffConfig {
        dim,
        npts: if dim == 1 { 256 } else { 128 },
        length: 10.0,
        kappa,
        p0: 1.0,
        t_final: 1.0,
        track_p: vec![1.0, 2.0],
        bound_p: 1.0,
        tol: LINFTY_TOL,
        mass_tol: MASS_TOL,
        certificates: vec!["mass".into(), "linfty".into()],
        ..Default::default()
    };
    vec![
        (
            "1d kappa 0, random b and A",
            AdvDiffConfig {
                b: BPreset::Random { amp: 1.5, seed: 11, time_mod: 0.3, u_mod: 0.0 },
                a: APreset::Random { mu0: 0.5, contrast: 1.0, seed: 12 },
                u0: U0Preset::Gaussian { amp: 1.0, width: 0.8 },
                ..base(1, 0.0)
            },
        ),
        (
            "1d kappa 0.3, random b, Burgers flux, signed bumps",
            AdvDiffConfig {
                b: BPreset::Random { amp: 1.0, seed: 21, time_mod: 0.2, u_mod: 0.3 },
                f: FPreset::Burgers { c: vec![0.5] },
                a: APreset::Random { mu0: 0.4, contrast: 0.8, seed: 22 },
                u0: U0Preset::Bumps { amp: 1.5, width: 0.5, count: 4, seed: 23, signed: true },
                ..base(1, 0.3)
            },
        ),
        (
            "1d kappa 0.3, compressive sine b",
            AdvDiffConfig {
                b: BPreset::Sine { amp: 2.0 },
                a: APreset::Identity { mu0: 0.5 },
                u0: U0Preset::Bumps { amp: 2.0, width: 0.6, count: 3, seed: 31, signed: false },
                ..base(1, 0.3)
            },
        ),
        (
            "2d kappa 0, random b and A",
            AdvDiffConfig {
                b: BPreset::Random { amp: 1.0, seed: 41, time_mod: 0.3, u_mod: 0.0 },
                a: APreset::Random { mu0: 0.5, contrast: 1.0, seed: 42 },
                u0: U0Preset::Gaussian { amp: 1.0, width: 1.0 },
                ..base(2, 0.0)
            },
        ),
        (
            "2d kappa 0.3, random b, Burgers flux, signed bumps",
            AdvDiffConfig {
                b: BPreset::Random { amp: 1.0, seed: 51, time_mod: 0.2, u_mod: 0.3 },
                f: FPreset::Burgers { c: vec![0.5, -0.25] },
                a: APreset::Random { mu0: 0.5, contrast: 0.6, seed: 52 },
                u0: U0Preset::Bumps { amp: 1.5, width: 0.7, count: 3, seed: 53, signed: true },
                ..base(2, 0.3)
            },
        ),
    ]
}

fn scenario_runs() -> &'static Scenarios {
    static CELL: OnceLock<Scenarios> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let runs = heterogeneous_scenarios()
            .into_iter()
            .map(|(name, cfg)| (name.to_string(), run_advdiff(&cfg, &quiet()).unwrap()))
            .collect();
        Scenarios { runs, elapsed: start.elapsed() }
    })
}

#[test]
fn criterion_07_sup_norm_bound() {
    let _g = serial();
    let s = scenario_runs();
    let mut worst = 0.0f64;
    let mut failing = Vec::new();
    for (name, r) in &s.runs {
        let c = r.certificate("linfty").unwrap();
        worst = worst.max(c.ratio());
        if !c.passed() || r.exit_code() == 3 {
            failing.push(name.as_str());
        }
    }
    let pass = failing.is_empty() && s.runs.len() == 5 && s.elapsed < BUDGET_7;
    verdict(
        7,
        "sup-norm bound on five heterogeneous runs",
        pass,
        &format!("failing {failing:?}, worst |u|_inf / bound {worst:.4}, {:.1} s", s.elapsed.as_secs_f64()),
    );
    assert!(pass);
}

struct Scan {
    report: RunReport,
    elapsed: Duration,
}

fn phase_scan() -> &'static Scan {
    static CELL: OnceLock<Scan> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let cfg = PhaseScanConfig {
            dim: 1,
            kappas: vec![0.5, 1.0, 2.0],
            amplitudes: vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4],
            horizon: 50.0,
            mass_tol: MASS_TOL,
            ..Default::default()
        };
        let report = run_phase_scan(&cfg, &quiet()).unwrap();
        Scan { report, elapsed: start.elapsed() }
    })
}

#[test]
fn criterion_08_global_existence_soundness() {
    let _g = serial();
    let s = phase_scan();
    let cells = &s.report.cells;
    let inside = cells.iter().filter(|c| c.sufficient.is_global()).count();
    let unsound: Vec<(f64, f64)> =
        cells.iter().filter(|c| c.violates_soundness()).map(|c| (c.kappa, c.amplitude)).collect();
    let blowups = cells.iter().filter(|c| c.verdict == CellVerdict::BlowUp).count();
    let pass = cells.len() == 24 && unsound.is_empty() && s.elapsed < BUDGET_8;
    verdict(
        8,
        "phase scan soundness, n = 1, 3 x 8 cells to t = 50",
        pass,
        &format!(
            "{inside} cells in the sufficient region, unsound {unsound:?}, {blowups} blow-ups overall, {:.1} s",
            s.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

struct Contrast {
    reaction: ContrastSummary,
    conservative: ContrastSummary,
    elapsed: Duration,
}

fn contrast() -> &'static Contrast {
    static CELL: OnceLock<Contrast> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let setup = ContrastSetup { horizon: CONTRAST_HORIZON, ..Default::default() };
        let reaction = fujita_contrast_run(1.0, 1.0, ContrastMode::Reaction, &setup).unwrap();
        let conservative = fujita_contrast_run(0.5, 1.0, ContrastMode::Conservative, &setup).unwrap();
        Contrast { reaction, conservative, elapsed: start.elapsed() }
    })
}

#[test]
fn criterion_09_reaction_versus_conservative() {
    let _g = serial();
    let c = contrast();
    let r = &c.reaction.outcome;
    let v = &c.conservative.outcome;
    let pass = r.blew_up()
        && r.t < CONTRAST_HORIZON
        && !v.blew_up()
        && v.t >= CONTRAST_HORIZON
        && c.elapsed < BUDGET_9;
    verdict(
        9,
        "reaction blow-up against bounded conservative analogue",
        pass,
        &format!(
            "reaction kappa 1 blew up at t = {:.3}; conservative kappa 0.5 reached t = {} with max |u| {:.4}; {:.1} s",
            r.t,
            v.t,
            v.max_sup,
            c.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_heat_decay_slopes() {
    let _g = serial();
    let start = Instant::now();
    let cfg = HeatCheckConfig {
        dims: vec![1, 2, 3],
        npts: vec![4096, 512, 128],
        box_factor: 40.0,
        slope_tol: SLOPE_TOL,
        certificates: vec!["decay-slope".into()],
        ..Default::default()
    };
    let report = run_heat_check(&cfg, &quiet()).unwrap();
    let elapsed = start.elapsed();
    let slopes: Vec<String> = (1..=3)
        .map(|n| {
            let s: f64 = report.verdicts[&format!("slope-{n}d")].parse().unwrap();
            format!("n={n}: {s:.4} vs {:.2}", -(0.25 * n as f64 + 0.5))
        })
        .collect();
    let pass = report.certificate("decay-slope").unwrap().passed() && elapsed < BUDGET_10;
    verdict(10, "heat decay of a mean-zero dipole", pass, &format!("{}, {:.1} s", slopes.join(", "), elapsed.as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_11_mass_law() {
    let _g = serial();
    let mut runs = 0;
    let mut failing = Vec::new();
    for (name, r) in &scenario_runs().runs {
        runs += 1;
        let c = r.certificate("mass").unwrap();
        if !(c.passed() && c.tol == MASS_TOL) {
            failing.push(name.clone());
        }
    }
    for cell in &phase_scan().report.cells {
        runs += 1;
        if cell.mass_law != Some(CertStatus::Pass) {
            failing.push(format!("scan kappa {} amplitude {}", cell.kappa, cell.amplitude));
        }
    }
    let m = contrast().conservative.mass_law.as_ref().unwrap();
    runs += 1;
    if !(m.passed() && m.tol == MASS_TOL) {
        failing.push("conservative contrast".into());
    }
    let pass = failing.is_empty();
    verdict(
        11,
        "L1 mass law on every advection-diffusion run",
        pass,
        &format!("{runs} runs, |u(t)|_1 <= |u0|_1 (1 + {MASS_TOL:e}); failing {failing:?}"),
    );
    assert!(pass);
}
