//! Conservative finite-volume solver for
//! `u_t + div(b(x,t,u)|u|^kappa u) + div f(t,u) = div(A(x,t,u) grad u)` on a periodic box.
//!
//! Cells sit at the grid points of a [`GridSpec`]; fluxes live on the faces between
//! neighbours. The convective flux is a local Lax-Friedrichs flux whose numerical viscosity
//! is reduced by the physical face diffusion (cell Peclet number), so resolved runs are
//! centered and unresolved ones fall back to full LLF. Time stepping is SSP-RK3.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificate::BoundCertificate;
use crate::error::{LabError, Result};
use crate::grid::{Field, GridSpec, NormSeries};
use crate::moser::{linfty_constant, StepSample};

/// `b(x, t, u, out)` fills the `n` components of the advective field.
pub type VectorCoef = Arc<dyn Fn(&[f64], f64, f64, &mut [f64]) + Send + Sync>;
/// `f(t, u, value, derivative)` fills `f_j(t,u)` and `d f_j / du`.
pub type FluxCoef = Arc<dyn Fn(f64, f64, &mut [f64], &mut [f64]) + Send + Sync>;
/// `A(x, t, u, diag)` fills the diagonal of the diffusion matrix.
pub type DiagCoef = Arc<dyn Fn(&[f64], f64, f64, &mut [f64]) + Send + Sync>;
pub type TimeCoef = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Pointwise source `s(t, u)`; only the reaction contrast run uses one.
pub type SourceCoef = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Coefficients, exponent and datum of one problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub kappa: f64,
    pub b: VectorCoef,
    pub f: FluxCoef,
    pub a: DiagCoef,
    pub mu: TimeCoef,
    pub u0: Field,
    pub p0: f64,
    /// Analytic upper bound for `sup_t B(t)/mu(t)`, used for global-existence verdicts.
    pub bmu_bound: Option<f64>,
    pub source: Option<SourceCoef>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("n", &self.dim())
            .field("kappa", &self.kappa)
            .field("p0", &self.p0)
            .field("bmu_bound", &self.bmu_bound)
            .field("source", &self.source.is_some())
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Build and audit a problem: ellipticity `A_jj >= mu(0)` and finite `b` at every cell
    /// for `u` in `{min u0, 0, max u0}`.
    pub fn new(
        kappa: f64,
        b: VectorCoef,
        f: FluxCoef,
        a: DiagCoef,
        mu: TimeCoef,
        u0: Field,
        p0: f64,
    ) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(LabError::domain(format!("kappa must be nonnegative, got {kappa}")));
        }
        if !(p0 >= 1.0 && p0.is_finite()) {
            return Err(LabError::domain(format!("p0 must be at least 1, got {p0}")));
        }
        if u0.components() != 1 {
            return Err(LabError::InvalidField("initial datum must be scalar".into()));
        }
        u0.ensure_finite()?;
        let spec = Self { kappa, b, f, a, mu, u0, p0, bmu_bound: None, source: None };
        spec.audit_coefficients(0.0)?;
        Ok(spec)
    }

    pub fn with_bmu_bound(mut self, bound: f64) -> Self {
        self.bmu_bound = Some(bound);
        self
    }

    pub fn with_source(mut self, source: SourceCoef) -> Self {
        self.source = Some(source);
        self
    }

    pub fn grid(&self) -> &GridSpec {
        self.u0.grid()
    }

    pub fn dim(&self) -> usize {
        self.u0.grid().dim()
    }

    pub fn audit_coefficients(&self, t: f64) -> Result<()> {
        let mu = (self.mu)(t);
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(LabError::InvalidCoefficient(format!("mu({t}) = {mu} is not positive")));
        }
        let n = self.dim();
        let u = self.u0.comp(0);
        let lo = u.iter().copied().fold(0.0, f64::min);
        let hi = u.iter().copied().fold(0.0, f64::max);
        let grid = self.grid();
        let mut bv = [0.0; 3];
        let mut ad = [0.0; 3];
        for idx in 0..grid.len() {
            let x = grid.coords(idx);
            for uu in [lo, 0.0, hi] {
                (self.b)(&x[..n], t, uu, &mut bv[..n]);
                if bv[..n].iter().any(|v| !v.is_finite()) {
                    return Err(LabError::InvalidCoefficient(format!(
                        "b is not finite at x = {:?}, u = {uu}",
                        &x[..n]
                    )));
                }
                (self.a)(&x[..n], t, uu, &mut ad[..n]);
                if let Some(d) = ad[..n].iter().find(|d| !(**d >= mu * (1.0 - 1e-12))) {
                    return Err(LabError::InvalidCoefficient(format!(
                        "ellipticity fails: A_jj = {d} < mu = {mu} at x = {:?}",
                        &x[..n]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Named coefficient presets used by scenario files and the test suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BPreset {
    Zero,
    Constant { value: Vec<f64> },
    /// `b_j = -amp sin(2 pi x_j / L)`.
    Sine { amp: f64 },
    /// Seeded sum of Fourier modes with `|b_j| <= amp`, optionally modulated in `t` and `u`.
    Random { amp: f64, seed: u64, time_mod: f64, u_mod: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum APreset {
    /// `A = mu0 I`.
    Identity { mu0: f64 },
    /// Diagonal with entries in `[mu0, mu0 (1 + contrast)]`.
    Random { mu0: f64, contrast: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FPreset {
    Zero,
    /// `f_j = c_j u^2 / 2`.
    Burgers { c: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum U0Preset {
    /// `amp exp(-|x|^2 / width^2)`.
    Gaussian { amp: f64, width: f64 },
    /// Sum of `count` seeded Gaussians centred in the middle half of the box.
    Bumps { amp: f64, width: f64, count: usize, seed: u64, signed: bool },
}

fn random_modes(n: usize, length: f64, rng: &mut ChaCha8Rng) -> Vec<([f64; 3], f64, f64)> {
    let mut modes = Vec::new();
    while modes.len() < 4 {
        let mut k = [0.0; 3];
        for kk in k.iter_mut().take(n) {
            *kk = 2.0 * PI * rng.random_range(-3i32..=3) as f64 / length;
        }
        if k.iter().all(|v| *v == 0.0) {
            continue;
        }
        modes.push((k, rng.random_range(0.5..1.0), rng.random_range(0.0..2.0 * PI)));
    }
    let total: f64 = modes.iter().map(|m| m.1).sum();
    for m in modes.iter_mut() {
        m.1 /= total;
    }
    modes
}

fn eval_modes(modes: &[([f64; 3], f64, f64)], x: &[f64]) -> f64 {
    modes
        .iter()
        .map(|(k, c, phi)| {
            let arg: f64 = x.iter().zip(k).map(|(xi, ki)| xi * ki).sum();
            c * (arg + phi).sin()
        })
        .sum()
}

impl BPreset {
    pub fn build(&self, n: usize, length: f64) -> Result<VectorCoef> {
        Ok(match self.clone() {
            BPreset::Zero => Arc::new(|_x: &[f64], _t, _u, out: &mut [f64]| out.fill(0.0)),
            BPreset::Constant { value } => {
                if value.len() != n {
                    return Err(LabError::InvalidCoefficient(format!(
                        "constant b needs {n} components, got {}",
                        value.len()
                    )));
                }
                Arc::new(move |_x: &[f64], _t, _u, out: &mut [f64]| out.copy_from_slice(&value))
            }
            BPreset::Sine { amp } => Arc::new(move |x: &[f64], _t, _u, out: &mut [f64]| {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -amp * (2.0 * PI * xi / length).sin();
                }
            }),
            BPreset::Random { amp, seed, time_mod, u_mod } => {
                if time_mod < 0.0 || !(0.0..1.0).contains(&u_mod) {
                    return Err(LabError::InvalidCoefficient(
                        "modulation depths must lie in [0, 1)".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let modes: Vec<_> = (0..n).map(|_| random_modes(n, length, &mut rng)).collect();
                let norm = (1.0 + time_mod) * (1.0 + u_mod);
                Arc::new(move |x: &[f64], t, u, out: &mut [f64]| {
                    let s = amp * (1.0 + time_mod * t.sin()) * (1.0 + u_mod * u.tanh()) / norm;
                    for (o, m) in out.iter_mut().zip(&modes) {
                        *o = s * eval_modes(m, x);
                    }
                })
            }
        })
    }

    /// Upper bound for `B(t) = |(B_1, .., B_n)|`, from `B_j <= sup |b_j|`.
    pub fn b_bound(&self, n: usize) -> f64 {
        match self {
            BPreset::Zero | BPreset::Constant { .. } => 0.0,
            BPreset::Sine { amp } | BPreset::Random { amp, .. } => amp.abs() * (n as f64).sqrt(),
        }
    }
}

impl APreset {
    pub fn build(&self, n: usize, length: f64) -> Result<(DiagCoef, TimeCoef)> {
        match self.clone() {
            APreset::Identity { mu0 } => {
                check_mu0(mu0)?;
                Ok((
                    Arc::new(move |_x: &[f64], _t, _u, out: &mut [f64]| out.fill(mu0)),
                    Arc::new(move |_t| mu0),
                ))
            }
            APreset::Random { mu0, contrast, seed } => {
                check_mu0(mu0)?;
                if !(contrast >= 0.0 && contrast.is_finite()) {
                    return Err(LabError::InvalidCoefficient(format!(
                        "contrast must be nonnegative, got {contrast}"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5_5a5a);
                let modes: Vec<_> = (0..n).map(|_| random_modes(n, length, &mut rng)).collect();
                Ok((
                    Arc::new(move |x: &[f64], _t, _u, out: &mut [f64]| {
                        for (o, m) in out.iter_mut().zip(&modes) {
                            *o = mu0 * (1.0 + 0.5 * contrast * (1.0 + eval_modes(m, x)));
                        }
                    }),
                    Arc::new(move |_t| mu0),
                ))
            }
        }
    }

    pub fn mu0(&self) -> f64 {
        match self {
            APreset::Identity { mu0 } | APreset::Random { mu0, .. } => *mu0,
        }
    }
}

fn check_mu0(mu0: f64) -> Result<()> {
    if mu0 > 0.0 && mu0.is_finite() {
        Ok(())
    } else {
        Err(LabError::InvalidCoefficient(format!("mu0 must be positive, got {mu0}")))
    }
}

impl FPreset {
    pub fn build(&self, n: usize) -> Result<FluxCoef> {
        Ok(match self.clone() {
            FPreset::Zero => Arc::new(|_t, _u, v: &mut [f64], d: &mut [f64]| {
                v.fill(0.0);
                d.fill(0.0);
            }),
            FPreset::Burgers { c } => {
                if c.len() != n {
                    return Err(LabError::InvalidCoefficient(format!(
                        "Burgers flux needs {n} coefficients, got {}",
                        c.len()
                    )));
                }
                Arc::new(move |_t, u, v: &mut [f64], d: &mut [f64]| {
                    for j in 0..v.len() {
                        v[j] = 0.5 * c[j] * u * u;
                        d[j] = c[j] * u;
                    }
                })
            }
        })
    }
}

impl U0Preset {
    pub fn build(&self, grid: &GridSpec) -> Result<Field> {
        match *self {
            U0Preset::Gaussian { amp, width } => {
                check_width(width)?;
                Ok(Field::scalar_from_fn(grid, |x| {
                    amp * (-x.iter().map(|v| v * v).sum::<f64>() / (width * width)).exp()
                }))
            }
            U0Preset::Bumps { amp, width, count, seed, signed } => {
                check_width(width)?;
                if count == 0 {
                    return Err(LabError::InvalidField("bump count must be positive".into()));
                }
                let n = grid.dim();
                let quarter = 0.25 * grid.length();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let bumps: Vec<([f64; 3], f64, f64)> = (0..count)
                    .map(|_| {
                        let mut c = [0.0; 3];
                        for ci in c.iter_mut().take(n) {
                            *ci = rng.random_range(-quarter..quarter);
                        }
                        let w = rng.random_range(0.5 * width..=width);
                        let a = if signed {
                            rng.random_range(-amp..=amp)
                        } else {
                            rng.random_range(0.2 * amp..=amp)
                        };
                        (c, w, a)
                    })
                    .collect();
                Ok(Field::scalar_from_fn(grid, |x| {
                    bumps
                        .iter()
                        .map(|(c, w, a)| {
                            let r2: f64 = x.iter().zip(c).map(|(xi, ci)| (xi - ci).powi(2)).sum();
                            a * (-r2 / (w * w)).exp()
                        })
                        .sum()
                }))
            }
        }
    }
}

fn check_width(width: f64) -> Result<()> {
    if width > 0.0 && width.is_finite() {
        Ok(())
    } else {
        Err(LabError::InvalidField(format!("bump width must be positive, got {width}")))
    }
}

/// Problem assembled from presets; the `B/mu` bound comes from the declared coefficient ranges.
pub fn problem_from_presets(
    grid: &GridSpec,
    kappa: f64,
    p0: f64,
    b: &BPreset,
    f: &FPreset,
    a: &APreset,
    u0: &U0Preset,
) -> Result<ProblemSpec> {
    let n = grid.dim();
    let (a_coef, mu) = a.build(n, grid.length())?;
    let spec = ProblemSpec::new(
        kappa,
        b.build(n, grid.length())?,
        f.build(n)?,
        a_coef,
        mu,
        u0.build(grid)?,
        p0,
    )?;
    Ok(spec.with_bmu_bound(b.b_bound(n) / a.mu0()))
}

/// `(B_1, .., B_n)` and `B = |(B_j)|_2`, with `B_j` half the range of `b_j(x, t, u(x))` over cells.
pub fn oscillation_b(spec: &ProblemSpec, u: &Field, t: f64) -> Result<(Vec<f64>, f64)> {
    u.ensure_finite()?;
    let (bj, _) = b_ranges(spec, u.comp(0), t)?;
    let b = bj.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((bj, b))
}

/// Half-ranges and midranges of each `b_j` over the cells.
fn b_ranges(spec: &ProblemSpec, u: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = spec.dim();
    let grid = spec.grid();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut bv = [0.0; 3];
    for (idx, &ui) in u.iter().enumerate() {
        let x = grid.coords(idx);
        (spec.b)(&x[..n], t, ui, &mut bv[..n]);
        for j in 0..n {
            if !bv[j].is_finite() {
                return Err(LabError::InvalidCoefficient(format!(
                    "b_{} = {} at x = {:?}, t = {t}",
                    j + 1,
                    bv[j],
                    &x[..n]
                )));
            }
            lo[j] = lo[j].min(bv[j]);
            hi[j] = hi[j].max(bv[j]);
        }
    }
    let half = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)).collect();
    let mid = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h + l)).collect();
    Ok((half, mid))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub cfl: f64,
    /// Upper limit for the adaptive step.
    pub dt_max: f64,
    /// Blow-up is declared once `|u|_inf` exceeds `cap_factor * |u0|_inf`.
    pub cap_factor: f64,
    pub dt_floor: f64,
    pub max_steps: usize,
    /// Record series every this many steps; the running suprema see every step.
    pub sample_every: usize,
    /// Finite exponents whose `L^p` norms and running suprema are tracked.
    pub track_p: Vec<f64>,
    /// Exponents `q` whose energy-identity terms are recorded.
    pub audit_q: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            dt_max: f64::INFINITY,
            cap_factor: 1e6,
            dt_floor: 1e-10,
            max_steps: 5_000_000,
            sample_every: 1,
            track_p: vec![1.0, 2.0],
            audit_q: Vec::new(),
        }
    }
}

/// Terms of the `L^q` energy identity at one sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    /// `|u|_q^q`.
    pub lqq: f64,
    /// `q(q-1) int |u|^{q-2} <A grad u, grad u>`.
    pub dissipation: f64,
    /// `q(q-1) int |u|^{q-2+kappa} u <b - beta, grad u>`.
    pub advection: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub b_series: NormSeries,
    pub mu_series: NormSeries,
    /// Running sup of `B(t)/mu(t)`.
    pub bmu_running: NormSeries,
    /// `int_0^t mu`.
    pub mu_integral: NormSeries,
    /// `(t, int u dx)`; signed.
    pub mass_series: Vec<(f64, f64)>,
    /// One series per tracked `p`, followed by the sup norm.
    pub lp_series: Vec<NormSeries>,
    /// Running suprema of the norms in `lp_series`.
    pub up_running: Vec<NormSeries>,
    pub p_values: Vec<f64>,
    pub energy: Vec<(f64, Vec<EnergySample>)>,
}

impl TrackerState {
    fn index_of(&self, p: f64) -> Option<usize> {
        if p.is_infinite() {
            return Some(self.p_values.len());
        }
        self.p_values.iter().position(|&q| q == p)
    }

    /// `|u(t)|_p` series; `p = inf` gives the sup norm.
    pub fn lp(&self, p: f64) -> Option<&NormSeries> {
        self.index_of(p).map(|i| &self.lp_series[i])
    }

    pub fn up(&self, p: f64) -> Option<&NormSeries> {
        self.index_of(p).map(|i| &self.up_running[i])
    }

    pub fn energy_samples(&self, q: f64) -> Option<&[EnergySample]> {
        self.energy.iter().find(|(qq, _)| *qq == q).map(|(_, s)| s.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    BlowUp { t: f64, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub termination: Termination,
    pub t: f64,
    pub steps: usize,
    pub rejections: usize,
    pub max_sup: f64,
}

impl RunOutcome {
    pub fn blew_up(&self) -> bool {
        matches!(self.termination, Termination::BlowUp { .. })
    }
}

/// Running solution with its trackers.
pub struct AdvDiffState {
    spec: ProblemSpec,
    opts: SolverOptions,
    u: Vec<f64>,
    t: f64,
    steps: usize,
    rejections: usize,
    cap: f64,
    neighbours: Vec<Vec<usize>>,
    centers: Vec<[f64; 3]>,
    trackers: TrackerState,
    running: Vec<f64>,
    bmu_sup: f64,
    mu_int: f64,
    last_mu: f64,
    max_sup: f64,
}

impl AdvDiffState {
    pub fn new(spec: ProblemSpec, opts: SolverOptions) -> Result<Self> {
        if !(opts.cfl > 0.0 && opts.cfl <= 1.0) {
            return Err(LabError::domain(format!("cfl must lie in (0, 1], got {}", opts.cfl)));
        }
        if opts.sample_every == 0 {
            return Err(LabError::domain("sample_every must be positive"));
        }
        if let Some(p) = opts.track_p.iter().find(|p| !(**p >= 1.0 && p.is_finite())) {
            return Err(LabError::domain(format!("tracked exponent {p} is not finite and >= 1")));
        }
        if let Some(q) = opts.audit_q.iter().find(|q| !(**q >= spec.p0 + 1.0 && q.is_finite())) {
            return Err(LabError::domain(format!(
                "energy exponent {q} must be at least p0 + 1 = {}",
                spec.p0 + 1.0
            )));
        }
        let grid = spec.grid().clone();
        let n = grid.dim();
        let npts = grid.npts();
        let neighbours = (0..n)
            .map(|a| {
                (0..grid.len())
                    .map(|idx| {
                        let mut mi = grid.multi_index(idx);
                        mi[a] = (mi[a] + 1) % npts;
                        grid.flat_index(&mi[..n])
                    })
                    .collect()
            })
            .collect();
        let centers = (0..grid.len()).map(|i| grid.coords(i)).collect();
        let u = spec.u0.comp(0).to_vec();
        let sup0 = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // p below p0 is skipped: those norms need not be finite for the problem class
        let p_values: Vec<f64> = opts.track_p.iter().copied().filter(|p| *p >= spec.p0).collect();
        let mut trackers = TrackerState {
            b_series: NormSeries::new("B"),
            mu_series: NormSeries::new("mu"),
            bmu_running: NormSeries::new("Bmu"),
            mu_integral: NormSeries::new("int_mu"),
            p_values: p_values.clone(),
            ..Default::default()
        };
        for p in &p_values {
            trackers.lp_series.push(NormSeries::new(format!("L{p}")));
            trackers.up_running.push(NormSeries::new(format!("U{p}")));
        }
        trackers.lp_series.push(NormSeries::new("Linf"));
        trackers.up_running.push(NormSeries::new("Uinf"));
        trackers.energy = opts.audit_q.iter().map(|q| (*q, Vec::new())).collect();
        let last_mu = (spec.mu)(0.0);
        let mut state = Self {
            cap: opts.cap_factor * if sup0 > 0.0 { sup0 } else { 1.0 },
            running: vec![0.0; p_values.len() + 1],
            spec,
            opts,
            u,
            t: 0.0,
            steps: 0,
            rejections: 0,
            neighbours,
            centers,
            trackers,
            bmu_sup: 0.0,
            mu_int: 0.0,
            last_mu,
            max_sup: sup0,
        };
        state.update_trackers(true)?;
        Ok(state)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rejections(&self) -> usize {
        self.rejections
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn trackers(&self) -> &TrackerState {
        &self.trackers
    }

    pub fn max_sup(&self) -> f64 {
        self.max_sup
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn solution(&self) -> Field {
        Field::new(self.spec.grid().clone(), vec![self.u.clone()]).expect("matching grid")
    }

    pub fn mass(&self) -> f64 {
        self.u.iter().sum::<f64>() * self.spec.grid().cell_volume()
    }

    fn kpow(&self, u: f64) -> f64 {
        if self.spec.kappa == 0.0 {
            1.0
        } else {
            u.abs().powf(self.spec.kappa)
        }
    }

    /// Semi-discrete right-hand side; returns the largest stable explicit step at `u`.
    fn rhs(&self, u: &[f64], t: f64, out: &mut [f64]) -> f64 {
        let spec = &self.spec;
        let grid = spec.grid();
        let n = grid.dim();
        let h = grid.dx();
        let kappa = spec.kappa;
        out.fill(0.0);
        let mut bl = [0.0; 3];
        let mut br = [0.0; 3];
        let mut fl = [0.0; 3];
        let mut fr = [0.0; 3];
        let mut dfl = [0.0; 3];
        let mut dfr = [0.0; 3];
        let mut ad = [0.0; 3];
        let mut rate = 0.0;
        for a in 0..n {
            let mut axis_rate: f64 = 0.0;
            for (i, &j) in self.neighbours[a].iter().enumerate() {
                let mut xf = self.centers[i];
                xf[a] += 0.5 * h;
                let (ul, ur) = (u[i], u[j]);
                (spec.b)(&xf[..n], t, ul, &mut bl[..n]);
                (spec.b)(&xf[..n], t, ur, &mut br[..n]);
                (spec.f)(t, ul, &mut fl[..n], &mut dfl[..n]);
                (spec.f)(t, ur, &mut fr[..n], &mut dfr[..n]);
                let (kl, kr) = (self.kpow(ul), self.kpow(ur));
                let gl = bl[a] * kl * ul + fl[a];
                let gr = br[a] * kr * ur + fr[a];
                (spec.a)(&xf[..n], t, 0.5 * (ul + ur), &mut ad[..n]);
                let diff = ad[a];
                let du = ur - ul;
                let mut alpha = ((kappa + 1.0) * bl[a].abs() * kl + dfl[a].abs())
                    .max((kappa + 1.0) * br[a].abs() * kr + dfr[a].abs());
                if du != 0.0 {
                    alpha = alpha.max(((gr - gl) / du).abs());
                }
                let visc = (alpha - 2.0 * diff / h).max(0.0);
                let flux = 0.5 * (gl + gr) - 0.5 * visc * du - diff * du / h;
                out[i] -= flux / h;
                out[j] += flux / h;
                axis_rate = axis_rate.max(alpha / h + 2.0 * diff / (h * h));
            }
            rate += axis_rate;
        }
        if let Some(src) = &spec.source {
            let mut src_rate: f64 = 0.0;
            for (o, &ui) in out.iter_mut().zip(u) {
                let s = src(t, ui);
                *o += s;
                if ui != 0.0 {
                    src_rate = src_rate.max((s / ui).abs());
                }
            }
            rate += 10.0 * src_rate;
        }
        if rate > 0.0 {
            self.opts.cfl / rate
        } else {
            f64::INFINITY
        }
    }

    /// Largest step accepted by [`step`](Self::step) from the current state.
    pub fn max_stable_dt(&self) -> f64 {
        let mut scratch = vec![0.0; self.u.len()];
        self.rhs(&self.u, self.t, &mut scratch)
    }

    /// One SSP-RK3 step. Rejects steps above the stability limit; an overflow past the cap or a
    /// non-finite value yields [`LabError::BlowUpSuspected`].
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(LabError::domain(format!("time step must be positive, got {dt}")));
        }
        let len = self.u.len();
        let mut k = vec![0.0; len];
        let stable = self.rhs(&self.u, self.t, &mut k);
        if dt > stable * (1.0 + 1e-12) {
            self.rejections += 1;
            return Err(LabError::StepRejected { dt, suggested: stable });
        }
        let t = self.t;
        let u1: Vec<f64> = self.u.iter().zip(&k).map(|(u, k)| u + dt * k).collect();
        self.rhs(&u1, t + dt, &mut k);
        let u2: Vec<f64> = self
            .u
            .iter()
            .zip(&u1)
            .zip(&k)
            .map(|((u, v), k)| 0.75 * u + 0.25 * (v + dt * k))
            .collect();
        self.rhs(&u2, t + 0.5 * dt, &mut k);
        let next: Vec<f64> = self
            .u
            .iter()
            .zip(&u2)
            .zip(&k)
            .map(|((u, v), k)| u / 3.0 + 2.0 / 3.0 * (v + dt * k))
            .collect();
        let sup = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !sup.is_finite() {
            return Err(LabError::BlowUpSuspected { t: t + dt, reason: "non-finite values".into() });
        }
        self.u = next;
        self.t = t + dt;
        self.steps += 1;
        self.max_sup = self.max_sup.max(sup);
        if sup > self.cap {
            return Err(LabError::BlowUpSuspected {
                t: self.t,
                reason: format!("sup norm {sup:.3e} exceeds cap {:.3e}", self.cap),
            });
        }
        let record = self.steps.is_multiple_of(self.opts.sample_every);
        self.update_trackers(record)
    }

    /// Advance to `t_final` with adaptive steps `min(dt_max, stable, remaining)`.
    pub fn run_until(&mut self, t_final: f64) -> Result<RunOutcome> {
        while self.t < t_final * (1.0 - 1e-14) {
            if self.steps >= self.opts.max_steps {
                return Err(LabError::BudgetExhausted(self.opts.max_steps));
            }
            let stable = self.max_stable_dt();
            if stable < self.opts.dt_floor {
                return Ok(self.outcome(Termination::BlowUp {
                    t: self.t,
                    reason: format!("stable step {stable:.3e} below floor"),
                }));
            }
            let dt = stable.min(self.opts.dt_max).min(t_final - self.t);
            let last = dt >= t_final - self.t;
            match self.step(dt) {
                Ok(()) => {
                    if last && !self.steps.is_multiple_of(self.opts.sample_every) {
                        self.update_trackers(true)?;
                    }
                }
                Err(LabError::BlowUpSuspected { t, reason }) => {
                    return Ok(self.outcome(Termination::BlowUp { t, reason }));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(self.outcome(Termination::Completed))
    }

    fn outcome(&self, termination: Termination) -> RunOutcome {
        RunOutcome {
            termination,
            t: self.t,
            steps: self.steps,
            rejections: self.rejections,
            max_sup: self.max_sup,
        }
    }

    fn update_trackers(&mut self, record: bool) -> Result<()> {
        let t = self.t;
        let (half, mid) = b_ranges(&self.spec, &self.u, t)?;
        let b = half.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mu = (self.spec.mu)(t);
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(LabError::InvalidCoefficient(format!("mu({t}) = {mu} is not positive")));
        }
        if let Some(&(t_prev, _)) = self.trackers.mass_series.last() {
            self.mu_int += 0.5 * (mu + self.last_mu) * (t - t_prev).max(0.0);
        }
        self.last_mu = mu;
        self.bmu_sup = self.bmu_sup.max(b / mu);
        let vol = self.spec.grid().cell_volume();
        let mut norms: Vec<f64> = self
            .trackers
            .p_values
            .iter()
            .map(|&p| (self.u.iter().map(|v| v.abs().powf(p)).sum::<f64>() * vol).powf(1.0 / p))
            .collect();
        norms.push(self.u.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for (r, v) in self.running.iter_mut().zip(&norms) {
            *r = r.max(*v);
        }
        if !record {
            // the running suprema above still see this step; only the stored series skip it
            return Ok(());
        }
        let tr = &mut self.trackers;
        tr.b_series.push(t, b)?;
        tr.mu_series.push(t, mu)?;
        tr.bmu_running.push(t, self.bmu_sup)?;
        tr.mu_integral.push(t, self.mu_int)?;
        tr.mass_series.push((t, self.u.iter().sum::<f64>() * vol));
        for ((s, r), (v, run)) in
            tr.lp_series.iter_mut().zip(tr.up_running.iter_mut()).zip(norms.iter().zip(&self.running))
        {
            s.push(t, *v)?;
            r.push(t, *run)?;
        }
        let qs: Vec<f64> = self.trackers.energy.iter().map(|(q, _)| *q).collect();
        for (k, q) in qs.into_iter().enumerate() {
            let sample = self.energy_terms(q, t, &mid);
            self.trackers.energy[k].1.push(sample);
        }
        Ok(())
    }

    /// Identity terms with face-centred gradients.
    fn energy_terms(&self, q: f64, t: f64, beta: &[f64]) -> EnergySample {
        let grid = self.spec.grid();
        let n = grid.dim();
        let h = grid.dx();
        let vol = grid.cell_volume();
        let mut bv = [0.0; 3];
        let mut ad = [0.0; 3];
        let mut diss = 0.0;
        let mut adv = 0.0;
        for a in 0..n {
            for (i, &j) in self.neighbours[a].iter().enumerate() {
                let mut xf = self.centers[i];
                xf[a] += 0.5 * h;
                let um = 0.5 * (self.u[i] + self.u[j]);
                let grad = (self.u[j] - self.u[i]) / h;
                let w = if q == 2.0 { 1.0 } else { um.abs().powf(q - 2.0) };
                (self.spec.a)(&xf[..n], t, um, &mut ad[..n]);
                (self.spec.b)(&xf[..n], t, um, &mut bv[..n]);
                diss += w * ad[a] * grad * grad;
                adv += w * self.kpow(um) * um * (bv[a] - beta[a]) * grad;
            }
        }
        let c = q * (q - 1.0) * vol;
        let lqq = self.u.iter().map(|v| v.abs().powf(q)).sum::<f64>() * vol;
        EnergySample { t, lqq, dissipation: c * diss, advection: c * adv }
    }
}

fn require_p(state: &AdvDiffState, p: f64) -> Result<()> {
    if p < state.spec.p0 {
        return Err(LabError::domain(format!(
            "exponent p = {p} is below the integrability class p0 = {}",
            state.spec.p0
        )));
    }
    if state.trackers.lp(p).is_none() {
        return Err(LabError::InsufficientData(format!("L^{p} norm is not tracked")));
    }
    Ok(())
}

/// `|u(t)|_p <= |u0|_p exp{(p-1)/4 Bmu(0;t)^2 U_inf(0;t)^{2 kappa} int_0^t mu}` at every sample.
pub fn lp_growth_certificate(state: &AdvDiffState, p: f64, tol: f64) -> Result<BoundCertificate> {
    require_p(state, p)?;
    let tr = &state.trackers;
    let lp = tr.lp(p).expect("checked");
    let uinf = tr.up(f64::INFINITY).expect("always tracked");
    let base = lp.values[0];
    let kappa = state.spec.kappa;
    let certs: Vec<BoundCertificate> = (0..lp.len())
        .map(|k| {
            let bmu = tr.bmu_running.values[k];
            let growth = 0.25
                * (p - 1.0)
                * bmu
                * bmu
                * uinf.values[k].powf(2.0 * kappa)
                * tr.mu_integral.values[k];
            let factor = growth.exp();
            BoundCertificate::compare(format!("lp-growth-p{p}"), lp.values[k], base * factor, factor, tol)
        })
        .collect();
    Ok(BoundCertificate::aggregate(format!("lp-growth-p{p}"), &certs))
}

/// `|u(t)|_1 <= |u0|_1 (1 + tol)` at every sample.
pub fn mass_law_certificate(state: &AdvDiffState, tol: f64) -> Result<BoundCertificate> {
    let l1 = state
        .trackers
        .lp(1.0)
        .ok_or_else(|| LabError::InsufficientData("L^1 norm is not tracked".into()))?;
    let base = l1.values[0];
    let certs: Vec<BoundCertificate> = l1
        .values
        .iter()
        .map(|v| BoundCertificate::compare("l1-nonincrease", *v, base, 1.0, tol))
        .collect();
    Ok(BoundCertificate::aggregate("l1-nonincrease", &certs))
}

/// `|u(t)|_inf <= K max{|u0|_inf; Bmu^{n/(p-n kappa)} U_p^{p/(p-n kappa)}}`,
/// `K = (2p)^{n/(p - n kappa)}`, at every sample.
pub fn linfty_bound_certificate(state: &AdvDiffState, p: f64, tol: f64) -> Result<BoundCertificate> {
    let n = state.spec.dim();
    let kappa = state.spec.kappa;
    let nk = n as f64 * kappa;
    if !(p > nk) {
        return Err(LabError::domain(format!(
            "the sup-norm bound needs the criticality condition p > n kappa, got p = {p}, n kappa = {nk}"
        )));
    }
    require_p(state, p)?;
    let k = linfty_constant(n, kappa, p)?;
    let tr = &state.trackers;
    let sup = tr.lp(f64::INFINITY).expect("always tracked");
    let up = tr.up(p).expect("checked");
    let sup0 = sup.values[0];
    let certs: Vec<BoundCertificate> = (0..sup.len())
        .map(|i| {
            let bmu = tr.bmu_running.values[i];
            let inner = sup0.max(bmu.powf(n as f64 / (p - nk)) * up.values[i].powf(p / (p - nk)));
            BoundCertificate::compare(format!("linfty-bound-p{p}"), sup.values[i], k * inner, k, tol)
        })
        .collect();
    Ok(BoundCertificate::aggregate(format!("linfty-bound-p{p}"), &certs))
}

/// Largest relative residual of `d/dt |u|_q^q + D_q - S_q = 0` over interior samples,
/// normalised by `max(|d/dt|, |D_q|, |S_q|)`.
pub fn energy_residuals(state: &AdvDiffState, q: f64) -> Result<Vec<(f64, f64)>> {
    if q < state.spec.p0 + 1.0 {
        return Err(LabError::domain(format!(
            "energy identity needs q >= p0 + 1 = {}, got {q}",
            state.spec.p0 + 1.0
        )));
    }
    let s = state
        .trackers
        .energy_samples(q)
        .ok_or_else(|| LabError::InsufficientData(format!("energy terms for q = {q} not recorded")))?;
    if s.len() < 3 {
        return Err(LabError::InsufficientData(format!(
            "energy audit needs at least 3 samples, have {}",
            s.len()
        )));
    }
    Ok(s.windows(3)
        .map(|w| {
            let (h0, h1) = (w[1].t - w[0].t, w[2].t - w[1].t);
            let d = -h1 / (h0 * (h0 + h1)) * w[0].lqq
                + (h1 - h0) / (h0 * h1) * w[1].lqq
                + h0 / (h1 * (h0 + h1)) * w[2].lqq;
            let scale = d.abs().max(w[1].dissipation.abs()).max(w[1].advection.abs());
            let res = d + w[1].dissipation - w[1].advection;
            (w[1].t, if scale > 0.0 { res.abs() / scale } else { 0.0 })
        })
        .collect())
}

pub fn energy_identity_audit(state: &AdvDiffState, q: f64, tol: f64) -> Result<BoundCertificate> {
    let worst = energy_residuals(state, q)?.into_iter().map(|(_, r)| r).fold(0.0, f64::max);
    Ok(BoundCertificate::compare(format!("energy-identity-q{q}"), worst, tol, 1.0, 0.0))
}

/// Growth-episode samples for exponent `q`, using the tracked `L^q` and `L^{q/2}` norms
/// and a centred difference of `|u|_q^q`.
pub fn growth_episode_samples(state: &AdvDiffState, q: f64) -> Result<Vec<StepSample>> {
    let tr = &state.trackers;
    let (lq, lh) = match (tr.lp(q), tr.lp(0.5 * q)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(LabError::InsufficientData(format!(
                "growth episodes need L^{q} and L^{} tracked",
                0.5 * q
            )))
        }
    };
    if lq.len() < 3 {
        return Err(LabError::InsufficientData("growth episodes need at least 3 samples".into()));
    }
    Ok((1..lq.len() - 1)
        .map(|k| {
            let dt = lq.times[k + 1] - lq.times[k - 1];
            let d = (lq.values[k + 1].powf(q) - lq.values[k - 1].powf(q)) / dt;
            StepSample {
                t: lq.times[k],
                q,
                dlq_dt: d,
                lq: lq.values[k],
                lq_half: lh.values[k],
                b: tr.b_series.values[k],
                mu: tr.mu_series.values[k],
            }
        })
        .collect())
}

/// Sufficient condition under which solutions are global.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GlobalVerdict {
    #[serde(rename = "global-by-(i)")]
    SubcriticalKappa,
    #[serde(rename = "global-by-(ii)")]
    CriticalSmallMass,
    #[serde(rename = "global-by-(iii)")]
    SupercriticalSmallData,
    #[serde(rename = "unknown")]
    Unknown,
}

impl GlobalVerdict {
    pub fn is_global(self) -> bool {
        self != GlobalVerdict::Unknown
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub verdict: GlobalVerdict,
    pub n: usize,
    pub kappa: f64,
    pub bmu_bound: Option<f64>,
    pub l1: f64,
    pub linf: f64,
    /// Left and right sides of the size condition, when one applies.
    pub condition: Option<(f64, f64)>,
}

/// Global-existence classification from `kappa`, the datum and the declared `B/mu` bound.
pub fn global_existence_verdict(spec: &ProblemSpec) -> VerdictRecord {
    let n = spec.dim();
    let vol = spec.grid().cell_volume();
    let u = spec.u0.comp(0);
    let l1 = u.iter().map(|v| v.abs()).sum::<f64>() * vol;
    let linf = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    classify_global(n, spec.kappa, spec.bmu_bound, l1, linf)
}

/// Classification from the datum norms directly.
pub fn classify_global(n: usize, kappa: f64, bmu: Option<f64>, l1: f64, linf: f64) -> VerdictRecord {
    const SLACK: f64 = 1e-12;
    let nk = n as f64 * kappa;
    let mut rec = VerdictRecord {
        verdict: GlobalVerdict::Unknown,
        n,
        kappa,
        bmu_bound: bmu,
        l1,
        linf,
        condition: None,
    };
    if nk < 1.0 {
        rec.verdict = GlobalVerdict::SubcriticalKappa;
        return rec;
    }
    let Some(bmu) = bmu else {
        return rec;
    };
    if (nk - 1.0).abs() <= SLACK {
        let rhs = bmu.powi(-(n as i32));
        rec.condition = Some((l1, rhs));
        if l1 <= rhs * (1.0 + SLACK) {
            rec.verdict = GlobalVerdict::CriticalSmallMass;
        }
    } else {
        let lhs = l1 * linf.powf(nk - 1.0);
        let rhs = (nk * bmu).powi(-(n as i32));
        rec.condition = Some((lhs, rhs));
        if lhs <= rhs * (1.0 + SLACK) {
            rec.verdict = GlobalVerdict::SupercriticalSmallData;
        }
    }
    rec
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContrastMode {
    /// `w_t = Laplacian w + |w|^kappa w`.
    Reaction,
    /// `v_t + div(b |v|^kappa v) = Laplacian v` with a compressive `b`.
    Conservative,
}

/// Box, resolution and field for the contrast and phase-scan runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastSetup {
    pub dim: usize,
    /// Points per axis.
    pub npts: usize,
    pub length: f64,
    pub horizon: f64,
    /// `b = -b_amp sin(2 pi x / L)`, compressive around the origin.
    pub b_amp: f64,
    pub width: f64,
    pub opts: SolverOptions,
}

impl Default for ContrastSetup {
    fn default() -> Self {
        Self {
            dim: 1,
            npts: 256,
            length: 20.0,
            horizon: 50.0,
            b_amp: 1.0,
            width: 1.0,
            opts: SolverOptions { track_p: vec![1.0], ..Default::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastSummary {
    pub mode: ContrastMode,
    pub kappa: f64,
    pub amplitude: f64,
    pub outcome: RunOutcome,
    pub verdict: VerdictRecord,
    /// `None` for the reaction run, whose mass is not conserved.
    pub mass_law: Option<BoundCertificate>,
}

pub fn contrast_problem(
    kappa: f64,
    amplitude: f64,
    mode: ContrastMode,
    setup: &ContrastSetup,
) -> Result<ProblemSpec> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(LabError::domain(format!("amplitude must be nonnegative, got {amplitude}")));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(LabError::domain(format!("kappa must be positive, got {kappa}")));
    }
    let grid = GridSpec::new(setup.dim, setup.npts, setup.length)?;
    let u0 = U0Preset::Gaussian { amp: amplitude, width: setup.width };
    let a = APreset::Identity { mu0: 1.0 };
    match mode {
        ContrastMode::Conservative => {
            let b = BPreset::Sine { amp: setup.b_amp };
            problem_from_presets(&grid, kappa, 1.0, &b, &FPreset::Zero, &a, &u0)
        }
        ContrastMode::Reaction => {
            let spec = problem_from_presets(&grid, kappa, 1.0, &BPreset::Zero, &FPreset::Zero, &a, &u0)?;
            Ok(spec.with_source(Arc::new(move |_t, w: f64| w.abs().powf(kappa) * w)))
        }
    }
}

/// Run the reaction equation or its conservative analogue from a Gaussian datum.
pub fn fujita_contrast_run(
    kappa: f64,
    amplitude: f64,
    mode: ContrastMode,
    setup: &ContrastSetup,
) -> Result<ContrastSummary> {
    let spec = contrast_problem(kappa, amplitude, mode, setup)?;
    let verdict = global_existence_verdict(&spec);
    let mut state = AdvDiffState::new(spec, setup.opts.clone())?;
    let outcome = state.run_until(setup.horizon)?;
    let mass_law = match mode {
        ContrastMode::Conservative => Some(mass_law_certificate(&state, 1e-10)?),
        ContrastMode::Reaction => None,
    };
    Ok(ContrastSummary { mode, kappa, amplitude, outcome, verdict, mass_law })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat_problem(npts: usize, length: f64, width: f64) -> ProblemSpec {
        let grid = GridSpec::new(1, npts, length).unwrap();
        problem_from_presets(
            &grid,
            0.0,
            1.0,
            &BPreset::Zero,
            &FPreset::Zero,
            &APreset::Identity { mu0: 1.0 },
            &U0Preset::Gaussian { amp: 1.0, width },
        )
        .unwrap()
    }

    #[test]
    fn oscillation_examples() {
        let grid = GridSpec::new(1, 64, 10.0).unwrap();
        let spec = problem_from_presets(
            &grid,
            0.0,
            1.0,
            &BPreset::Sine { amp: 1.0 },
            &FPreset::Zero,
            &APreset::Identity { mu0: 1.0 },
            &U0Preset::Gaussian { amp: 1.0, width: 1.0 },
        )
        .unwrap();
        let (bj, b) = oscillation_b(&spec, &spec.u0, 0.0).unwrap();
        assert!((bj[0] - 1.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);

        let g2 = GridSpec::new(2, 16, 4.0).unwrap();
        let spec2 = problem_from_presets(
            &g2,
            0.0,
            1.0,
            &BPreset::Constant { value: vec![0.3, -1.0] },
            &FPreset::Zero,
            &APreset::Identity { mu0: 1.0 },
            &U0Preset::Gaussian { amp: 1.0, width: 1.0 },
        )
        .unwrap();
        assert_eq!(oscillation_b(&spec2, &spec2.u0, 0.0).unwrap().1, 0.0);

        let ramp: VectorCoef = Arc::new(|x: &[f64], _t, _u, out: &mut [f64]| {
            out[0] = 1.0 + x[0].clamp(-1.0, 1.0);
            out[1] = 1.0 - x[1].clamp(-1.0, 1.0);
        });
        let (a, mu) = APreset::Identity { mu0: 1.0 }.build(2, 4.0).unwrap();
        let u0 = U0Preset::Gaussian { amp: 1.0, width: 1.0 }.build(&g2).unwrap();
        let spec3 = ProblemSpec::new(0.0, ramp, FPreset::Zero.build(2).unwrap(), a, mu, u0, 1.0).unwrap();
        let (_, b) = oscillation_b(&spec3, &spec3.u0, 0.0).unwrap();
        assert!((b - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn nan_coefficient_rejected() {
        let grid = GridSpec::new(1, 16, 4.0).unwrap();
        let (a, mu) = APreset::Identity { mu0: 1.0 }.build(1, 4.0).unwrap();
        let bad: VectorCoef = Arc::new(|_x: &[f64], _t, _u, out: &mut [f64]| out[0] = f64::NAN);
        let u0 = U0Preset::Gaussian { amp: 1.0, width: 1.0 }.build(&grid).unwrap();
        let r = ProblemSpec::new(0.0, bad, FPreset::Zero.build(1).unwrap(), a, mu, u0, 1.0);
        assert!(matches!(r, Err(LabError::InvalidCoefficient(_))));
    }

    #[test]
    fn ellipticity_enforced() {
        let grid = GridSpec::new(1, 16, 4.0).unwrap();
        let a: DiagCoef = Arc::new(|_x: &[f64], _t, _u, out: &mut [f64]| out[0] = 0.5);
        let u0 = U0Preset::Gaussian { amp: 1.0, width: 1.0 }.build(&grid).unwrap();
        let r = ProblemSpec::new(
            0.0,
            BPreset::Zero.build(1, 4.0).unwrap(),
            FPreset::Zero.build(1).unwrap(),
            a,
            Arc::new(|_t| 1.0),
            u0,
            1.0,
        );
        assert!(matches!(r, Err(LabError::InvalidCoefficient(_))));
    }

    #[test]
    fn step_rejection_suggests_dt() {
        let mut st = AdvDiffState::new(heat_problem(64, 10.0, 1.0), SolverOptions::default()).unwrap();
        let stable = st.max_stable_dt();
        match st.step(10.0 * stable) {
            Err(LabError::StepRejected { suggested, .. }) => assert!((suggested - stable).abs() < 1e-15),
            other => panic!("expected rejection, got {other:?}"),
        }
        assert_eq!(st.rejections(), 1);
    }

    #[test]
    fn pure_heat_matches_spectral_propagator() {
        let spec = heat_problem(512, 20.0, 2.0);
        let u0 = spec.u0.clone();
        let mut st = AdvDiffState::new(spec, SolverOptions::default()).unwrap();
        st.run_until(0.5).unwrap();
        let exact = crate::heat::apply_semigroup(&u0, 1.0, 0.5).unwrap();
        let err = st.solution().sub(&exact).unwrap().max_abs();
        assert!(err < 1e-4, "error {err}");
    }

    #[test]
    fn pure_heat_energy_identity() {
        let opts = SolverOptions { audit_q: vec![2.0], ..Default::default() };
        let mut st = AdvDiffState::new(heat_problem(128, 20.0, 1.0), opts).unwrap();
        st.run_until(0.2).unwrap();
        let cert = energy_identity_audit(&st, 2.0, 1e-3).unwrap();
        assert!(cert.passed(), "{cert:?}");
        // b = 0 means the advective term vanishes identically
        assert!(st.trackers().energy_samples(2.0).unwrap().iter().all(|s| s.advection == 0.0));
    }

    #[test]
    fn constant_b_energy_identity() {
        let grid = GridSpec::new(1, 128, 20.0).unwrap();
        let spec = problem_from_presets(
            &grid,
            0.0,
            1.0,
            &BPreset::Constant { value: vec![0.7] },
            &FPreset::Zero,
            &APreset::Identity { mu0: 1.0 },
            &U0Preset::Gaussian { amp: 1.0, width: 1.0 },
        )
        .unwrap();
        let opts = SolverOptions { audit_q: vec![2.0], ..Default::default() };
        let mut st = AdvDiffState::new(spec, opts).unwrap();
        st.run_until(0.2).unwrap();
        assert!(energy_identity_audit(&st, 2.0, 1e-3).unwrap().passed());
    }

    #[test]
    fn insufficient_history() {
        let opts = SolverOptions { audit_q: vec![2.0], ..Default::default() };
        let st = AdvDiffState::new(heat_problem(32, 10.0, 1.0), opts).unwrap();
        assert!(matches!(energy_residuals(&st, 2.0), Err(LabError::InsufficientData(_))));
        assert!(energy_residuals(&st, 1.5).is_err());
    }

    #[test]
    fn mass_conserved_and_linf_bound() {
        let grid = GridSpec::new(1, 128, 10.0).unwrap();
        let spec = problem_from_presets(
            &grid,
            0.3,
            1.0,
            &BPreset::Random { amp: 0.5, seed: 3, time_mod: 0.2, u_mod: 0.2 },
            &FPreset::Burgers { c: vec![0.2] },
            &APreset::Random { mu0: 0.5, contrast: 1.0, seed: 3 },
            &U0Preset::Bumps { amp: 1.0, width: 1.0, count: 3, seed: 3, signed: false },
        )
        .unwrap();
        let m0 = spec.u0.integral(0);
        let mut st = AdvDiffState::new(spec, SolverOptions::default()).unwrap();
        st.run_until(1.0).unwrap();
        assert!((st.mass() - m0).abs() < 1e-13 * m0);
        assert!(mass_law_certificate(&st, 1e-10).unwrap().passed());
        assert!(linfty_bound_certificate(&st, 1.0, 0.0).unwrap().passed());
        assert!(lp_growth_certificate(&st, 2.0, 1e-10).unwrap().passed());
        assert!(st.values().iter().all(|v| *v >= -1e-12));
        assert!(linfty_bound_certificate(&st, 0.3, 0.0).is_err());
    }

    #[test]
    fn verdict_examples() {
        assert_eq!(classify_global(2, 0.25, None, 1.0, 1.0).verdict, GlobalVerdict::SubcriticalKappa);
        assert_eq!(classify_global(1, 1.0, Some(2.0), 0.5, 9.0).verdict, GlobalVerdict::CriticalSmallMass);
        assert_eq!(classify_global(1, 1.0, Some(2.0), 0.6, 9.0).verdict, GlobalVerdict::Unknown);
        assert_eq!(
            classify_global(1, 2.0, Some(1.0), 0.8, 0.5).verdict,
            GlobalVerdict::SupercriticalSmallData
        );
        assert_eq!(classify_global(1, 2.0, None, 0.8, 0.5).verdict, GlobalVerdict::Unknown);
    }

    #[test]
    fn reaction_zero_datum_stays_zero() {
        let setup = ContrastSetup { horizon: 1.0, npts: 64, ..Default::default() };
        let s = fujita_contrast_run(1.0, 0.0, ContrastMode::Reaction, &setup).unwrap();
        assert!(!s.outcome.blew_up());
        assert_eq!(s.outcome.max_sup, 0.0);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let opts = SolverOptions { max_steps: 3, ..Default::default() };
        let mut st = AdvDiffState::new(heat_problem(64, 10.0, 1.0), opts).unwrap();
        assert!(matches!(st.run_until(10.0), Err(LabError::BudgetExhausted(3))));
    }
}
