//! Pseudospectral incompressible Navier–Stokes on the periodic box (n = 2, 3).
//!
//! Time stepping is integrating-factor RK4: diffusion is exact through
//! `exp(-nu |k|^2 h)`, the projected nonlinearity `Q = -P[u . grad u]` is explicit.
//! The state is kept in spectral space, two-thirds dealiased and divergence-free.

use num_bigint::BigUint;
use num_complex::Complex64;
use rand::Rng;

use crate::certificate::BoundCertificate;
use crate::error::{LabError, Result};
use crate::grid::{random_smooth_field, Field, GridSpec, NormSeries, Spectrum};
use crate::heat::apply_semigroup_spectrum;

/// Constant of the three-dimensional L3 Gagliardo–Nirenberg inequality used for the
/// trilinear estimate and the gradient-monotonicity time.
pub const K3: f64 = 0.581862001307;
/// Published upper bound for `K3^12 / 2`.
pub const TSTAR_COEFFICIENT_BOUND: f64 = 0.000753026;
/// Decrease violations below this relative size are treated as step noise.
pub const MONOTONICITY_TOL: f64 = 1e-9;
/// Default number of derivative orders tracked in the history.
pub const DEFAULT_M_MAX: usize = 4;

/// Constant `(8 pi)^{-3/4}` of the projected-nonlinearity heat estimate.
pub fn q_estimate_constant() -> f64 {
    (8.0 * std::f64::consts::PI).powf(-0.75)
}

#[derive(Clone, Debug)]
pub struct NsOptions {
    pub cfl: f64,
    pub m_max: usize,
    /// Keep a spectral snapshot every this many steps (0 disables).
    pub snapshot_every: usize,
}

impl Default for NsOptions {
    fn default() -> Self {
        Self { cfl: 0.5, m_max: DEFAULT_M_MAX, snapshot_every: 0 }
    }
}

/// Norm histories recorded after every step.
#[derive(Clone, Debug)]
pub struct NsHistory {
    /// `W(t) = |u|_2^2`.
    pub energy: NormSeries,
    /// `|D^m u|_2` for `m = 1..=m_max` (index `m - 1`).
    pub dm: Vec<NormSeries>,
    /// `2 nu int_0^t |Du|_2^2 ds` by the trapezoid rule.
    pub dissipation: NormSeries,
}

impl NsHistory {
    pub fn grad(&self) -> &NormSeries {
        &self.dm[0]
    }

    pub fn all(&self) -> Vec<&NormSeries> {
        let mut v = vec![&self.energy];
        v.extend(self.dm.iter());
        v.push(&self.dissipation);
        v
    }
}

/// Snapshot of the solution at a reference time.
#[derive(Clone, Debug)]
pub struct LerayCheckpoint {
    pub t0: f64,
    pub u_at_t0: Spectrum,
}

#[derive(Clone, Debug)]
pub struct NSState {
    u_hat: Spectrum,
    t: f64,
    nu: f64,
    opts: NsOptions,
    steps: usize,
    history: NsHistory,
    snapshots: Vec<(f64, Spectrum)>,
}

fn check_vector(field: &Field) -> Result<()> {
    let n = field.grid().dim();
    if n < 2 {
        return Err(LabError::UnsupportedDimension {
            n,
            reason: "the flow solver needs n = 2 or 3".into(),
        });
    }
    if field.components() != n {
        return Err(LabError::InvalidField(format!(
            "velocity needs {n} components, got {}",
            field.components()
        )));
    }
    Ok(())
}

/// Per mode `v_hat - k (k . v_hat) / |k|^2`; the zero mode is untouched.
pub fn project_spectrum(spec: &mut Spectrum) {
    let grid = spec.grid().clone();
    let n = grid.dim();
    let ksq = grid.ksq();
    for idx in 0..grid.len() {
        let k2 = ksq[idx];
        if k2 == 0.0 {
            continue;
        }
        let k = grid.wavevector(idx);
        let mut dot = Complex64::new(0.0, 0.0);
        for a in 0..n {
            dot += spec.comp(a)[idx] * k[a];
        }
        for a in 0..n {
            spec.comp_mut(a)[idx] -= dot * (k[a] / k2);
        }
    }
}

/// Helmholtz–Leray projection onto divergence-free fields.
pub fn leray_project(v: &Field) -> Result<Field> {
    check_vector(v)?;
    let mut spec = v.spectrum().clone();
    project_spectrum(&mut spec);
    Ok(spec.to_field())
}

/// Largest `|k . u_hat(k)|` over modes, relative to the largest coefficient magnitude.
pub fn spectral_divergence(spec: &Spectrum) -> f64 {
    let grid = spec.grid();
    let n = grid.dim();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for idx in 0..grid.len() {
        let k = grid.wavevector(idx);
        let mut dot = Complex64::new(0.0, 0.0);
        let mut mag = 0.0;
        for a in 0..n {
            let c = spec.comp(a)[idx];
            dot += c * k[a];
            mag += c.norm_sqr();
        }
        worst = worst.max(dot.norm());
        scale = scale.max(mag.sqrt() * grid.ksq()[idx].sqrt());
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

/// `-P[u . grad u]` from a dealiased velocity spectrum, dealiased on output.
fn nonlinear_hat(u_hat: &Spectrum) -> Spectrum {
    let grid = u_hat.grid().clone();
    let n = grid.dim();
    let len = grid.len();
    let u: Vec<Vec<f64>> = (0..n).map(|i| grid.inverse_real(u_hat.comp(i))).collect();
    let mut adv = vec![vec![0.0; len]; n];
    for j in 0..n {
        let mut alpha = vec![0usize; n];
        alpha[j] = 1;
        let du = u_hat.derivative(&alpha);
        for i in 0..n {
            let dju_i = grid.inverse_real(du.comp(i));
            for x in 0..len {
                adv[i][x] += u[j][x] * dju_i[x];
            }
        }
    }
    let comps: Vec<Vec<Complex64>> = adv
        .iter()
        .map(|a| grid.forward_real(a).into_iter().map(|c| -c).collect())
        .collect();
    let mut out = Spectrum::new(grid, comps).expect("shape preserved");
    out.dealias();
    project_spectrum(&mut out);
    out
}

/// Projected nonlinearity `Q(u) = -P[u . grad u]` of a velocity field.
pub fn nonlinear_term_of(u: &Field) -> Result<Field> {
    check_vector(u)?;
    let mut spec = u.spectrum().clone();
    spec.dealias();
    Ok(nonlinear_hat(&spec).to_field())
}

/// L2 inner product of two vector fields via their spectra.
pub fn inner_product(a: &Field, b: &Field) -> f64 {
    let (sa, sb) = (a.spectrum(), b.spectrum());
    let mut acc = 0.0;
    for c in 0..sa.components() {
        for (x, y) in sa.comp(c).iter().zip(sb.comp(c)) {
            acc += (x * y.conj()).re;
        }
    }
    acc * a.grid().parseval_weight()
}

fn axpy(out: &mut Spectrum, a: &Spectrum, scale: Complex64) {
    for c in 0..out.components() {
        for (o, v) in out.comp_mut(c).iter_mut().zip(a.comp(c)) {
            *o += v * scale;
        }
    }
}

fn scale_modes(spec: &mut Spectrum, factors: &[f64]) {
    for c in 0..spec.components() {
        for (v, f) in spec.comp_mut(c).iter_mut().zip(factors) {
            *v *= *f;
        }
    }
}

impl NSState {
    /// Initial state from `u0`, projected and dealiased so the nonlinearity does no work.
    pub fn new(u0: &Field, nu: f64, opts: NsOptions) -> Result<Self> {
        check_vector(u0)?;
        u0.ensure_finite()?;
        if !(nu > 0.0) {
            return Err(LabError::domain(format!("viscosity must be positive, got {nu}")));
        }
        if opts.m_max == 0 || opts.m_max > crate::grid::MAX_DERIVATIVE_ORDER {
            return Err(LabError::UnsupportedOrder {
                order: opts.m_max,
                max: crate::grid::MAX_DERIVATIVE_ORDER,
            });
        }
        let mut u_hat = u0.spectrum().clone();
        u_hat.dealias();
        project_spectrum(&mut u_hat);
        let history = NsHistory {
            energy: NormSeries::new("W"),
            dm: (1..=opts.m_max).map(|m| NormSeries::new(format!("D{m}_L2"))).collect(),
            dissipation: NormSeries::new("dissipation"),
        };
        let mut state = Self { u_hat, t: 0.0, nu, opts, steps: 0, history, snapshots: Vec::new() };
        state.record(0.0)?;
        if state.opts.snapshot_every > 0 {
            state.snapshots.push((0.0, state.u_hat.clone()));
        }
        Ok(state)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn grid(&self) -> &GridSpec {
        self.u_hat.grid()
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.u_hat
    }

    pub fn velocity(&self) -> Field {
        self.u_hat.to_field()
    }

    pub fn history(&self) -> &NsHistory {
        &self.history
    }

    pub fn snapshots(&self) -> &[(f64, Spectrum)] {
        &self.snapshots
    }

    pub fn checkpoint(&self) -> LerayCheckpoint {
        LerayCheckpoint { t0: self.t, u_at_t0: self.u_hat.clone() }
    }

    /// `Q(u)` of the current state.
    pub fn nonlinear_term(&self) -> Field {
        nonlinear_hat(&self.u_hat).to_field()
    }

    /// Largest stable step `cfl * dx / |u|_inf`, or infinity for the zero field.
    pub fn max_stable_dt(&self) -> f64 {
        let umax = self.velocity().max_abs();
        if umax == 0.0 {
            f64::INFINITY
        } else {
            self.opts.cfl * self.grid().dx() / umax
        }
    }

    fn record(&mut self, dt: f64) -> Result<()> {
        let t = self.t;
        let w = self.u_hat.hdot_norm_sq(0.0);
        let grad_sq = self.u_hat.hdot_norm_sq(1.0);
        self.history.energy.push(t, w)?;
        let prev_grad_sq = self.history.dm[0].last().map(|(_, g)| g * g);
        for m in 1..=self.opts.m_max {
            let v = if m == 1 { grad_sq } else { self.u_hat.hdot_norm_sq(m as f64) };
            self.history.dm[m - 1].push(t, v.sqrt())?;
        }
        let diss = match (self.history.dissipation.last(), prev_grad_sq) {
            (Some((_, d)), Some(g0)) => d + self.nu * dt * (g0 + grad_sq),
            _ => 0.0,
        };
        self.history.dissipation.push(t, diss)?;
        Ok(())
    }

    /// Advance by one integrating-factor RK4 step.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(LabError::domain(format!("time step must be positive, got {dt}")));
        }
        let limit = self.max_stable_dt();
        if dt > limit {
            return Err(LabError::StepRejected { dt, suggested: limit });
        }
        let ksq = self.grid().ksq().to_vec();
        let e_full: Vec<f64> = ksq.iter().map(|k2| (-self.nu * k2 * dt).exp()).collect();
        let e_half: Vec<f64> = ksq.iter().map(|k2| (-0.5 * self.nu * k2 * dt).exp()).collect();
        let h = Complex64::new(dt, 0.0);
        let half = Complex64::new(0.5 * dt, 0.0);

        let u0 = &self.u_hat;
        let k1 = nonlinear_hat(u0);

        let mut ua = u0.clone();
        axpy(&mut ua, &k1, half);
        scale_modes(&mut ua, &e_half);
        let k2 = nonlinear_hat(&ua);

        let mut e2u = u0.clone();
        scale_modes(&mut e2u, &e_half);
        let mut ub = e2u.clone();
        axpy(&mut ub, &k2, half);
        let k3 = nonlinear_hat(&ub);

        let mut uc = u0.clone();
        scale_modes(&mut uc, &e_full);
        let mut e2k3 = k3.clone();
        scale_modes(&mut e2k3, &e_half);
        axpy(&mut uc, &e2k3, h);
        let k4 = nonlinear_hat(&uc);

        let mut next = u0.clone();
        scale_modes(&mut next, &e_full);
        let mut ek1 = k1;
        scale_modes(&mut ek1, &e_full);
        let mut mid = k2;
        axpy(&mut mid, &k3, Complex64::new(1.0, 0.0));
        scale_modes(&mut mid, &e_half);
        axpy(&mut next, &ek1, Complex64::new(dt / 6.0, 0.0));
        axpy(&mut next, &mid, Complex64::new(dt / 3.0, 0.0));
        axpy(&mut next, &k4, Complex64::new(dt / 6.0, 0.0));
        project_spectrum(&mut next);

        let finite = (0..next.components())
            .all(|c| next.comp(c).iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        if !finite {
            return Err(LabError::BlowUpSuspected {
                t: self.t + dt,
                reason: "non-finite velocity coefficients".into(),
            });
        }
        self.u_hat = next;
        self.t += dt;
        self.steps += 1;
        self.record(dt)?;
        if self.opts.snapshot_every > 0 && self.steps.is_multiple_of(self.opts.snapshot_every) {
            self.snapshots.push((self.t, self.u_hat.clone()));
        }
        Ok(())
    }

    /// Step with fixed `dt` until `t_final`, shortening the last step to land exactly.
    pub fn run_until(&mut self, t_final: f64, dt: f64) -> Result<()> {
        while self.t < t_final * (1.0 - 1e-14) {
            let h = dt.min(t_final - self.t);
            self.step(h)?;
        }
        Ok(())
    }

    /// Relative energy-identity defects `|W + D - W0| / W0` at every recorded sample.
    pub fn energy_defects(&self) -> Vec<(f64, f64)> {
        let w0 = self.history.energy.values[0];
        self.history
            .energy
            .iter()
            .zip(self.history.dissipation.values.iter())
            .map(|((t, w), d)| (t, if w0 == 0.0 { (w + d).abs() } else { (w + d - w0).abs() / w0 }))
            .collect()
    }
}

/// `|u(t)|^2 + 2 nu int |Du|^2 <= |u0|^2` at the latest sample.
pub fn energy_certificate(state: &NSState, tol: f64) -> Result<BoundCertificate> {
    let h = state.history();
    let (Some((_, w)), Some((_, d))) = (h.energy.last(), h.dissipation.last()) else {
        return Err(LabError::InsufficientData("empty flow history".into()));
    };
    let w0 = h.energy.values[0];
    let mut cert = BoundCertificate::compare("energy-inequality", w + d, w0, 1.0, tol);
    if w + d == 0.0 && w0 == 0.0 {
        cert.margin = 0.0;
    }
    Ok(cert)
}

/// `|e^{nu Lap (t-s)} Q(s)|_2 <= (8 pi)^{-3/4} nu^{-3/4} (t-s)^{-3/4} |u(s)|_2 |Du(s)|_2` (n = 3).
pub fn q_estimate_certificate(u: &Field, nu: f64, gap: f64, tol: f64) -> Result<BoundCertificate> {
    check_vector(u)?;
    let n = u.grid().dim();
    if n != 3 {
        return Err(LabError::UnsupportedDimension {
            n,
            reason: "the projected-nonlinearity constant is three-dimensional".into(),
        });
    }
    if !(gap > 0.0) {
        return Err(LabError::domain("need t > s"));
    }
    let mut spec = u.spectrum().clone();
    spec.dealias();
    project_spectrum(&mut spec);
    let q = nonlinear_hat(&spec);
    let lhs = apply_semigroup_spectrum(&q, nu, gap)?.hdot_norm_sq(0.0).sqrt();
    let k = q_estimate_constant();
    let rhs = k
        * nu.powf(-0.75)
        * gap.powf(-0.75)
        * spec.hdot_norm_sq(0.0).sqrt()
        * spec.hdot_norm_sq(1.0).sqrt();
    Ok(BoundCertificate::compare("projected-nonlinearity-heat-estimate", lhs, rhs, k, tol))
}

/// Same estimate evaluated on a running state between times `s` (current) and `t`.
pub fn q_estimate_certificate_state(state: &NSState, t: f64, tol: f64) -> Result<BoundCertificate> {
    if !(t > state.t()) {
        return Err(LabError::domain(format!("need t > s = {}", state.t())));
    }
    q_estimate_certificate(&state.velocity(), state.nu(), t - state.t(), tol)
}

/// Weighted decay series from the recorded snapshots after `checkpoint.t0`:
/// `t^{m/2} |D^m u|_2` and `t^{(n-2)/4 + m/2} |D^m (u - e^{nu Lap (t - t0)} u(t0))|_2`.
pub fn decay_monitor(
    state: &NSState,
    checkpoint: &LerayCheckpoint,
    m: usize,
) -> Result<(NormSeries, NormSeries)> {
    if m > state.opts.m_max {
        return Err(LabError::UnsupportedOrder { order: m, max: state.opts.m_max });
    }
    if !(state.t() > checkpoint.t0) {
        return Err(LabError::domain("current time must exceed the checkpoint time"));
    }
    let n = state.grid().dim() as f64;
    let mut weighted = NormSeries::new(format!("t^{}/2 D{m}_L2", m));
    let mut error = NormSeries::new(format!("heat-deviation D{m}_L2"));
    for (t, u_hat) in state.snapshots().iter().filter(|(t, _)| *t > checkpoint.t0) {
        let w = u_hat.hdot_norm_sq(m as f64).sqrt();
        weighted.push(*t, t.powf(0.5 * m as f64) * w)?;
        let heat = apply_semigroup_spectrum(&checkpoint.u_at_t0, state.nu(), t - checkpoint.t0)?;
        let mut diff = u_hat.clone();
        axpy(&mut diff, &heat, Complex64::new(-1.0, 0.0));
        let e = diff.hdot_norm_sq(m as f64).sqrt();
        error.push(*t, t.powf(0.25 * (n - 2.0) + 0.5 * m as f64) * e)?;
    }
    if weighted.is_empty() {
        return Err(LabError::InsufficientData("no snapshots after the checkpoint".into()));
    }
    Ok((weighted, error))
}

/// Earliest recorded time after which `|Du|_2` never increases by more than
/// [`MONOTONICITY_TOL`] relative; `None` if the last recorded interval increases.
pub fn gradient_monotonicity_onset(state: &NSState) -> Option<f64> {
    onset_of(state.history().grad())
}

/// Onset of monotone decrease of an arbitrary series.
pub fn onset_of(series: &NormSeries) -> Option<f64> {
    let v = &series.values;
    if v.is_empty() {
        return None;
    }
    let mut onset = 0;
    for i in 0..v.len().saturating_sub(1) {
        if v[i + 1] > v[i] * (1.0 + MONOTONICITY_TOL) {
            onset = i + 1;
        }
    }
    if onset == v.len() - 1 && v.len() > 1 {
        None
    } else {
        Some(series.times[onset])
    }
}

/// `K3^12 / 2 * nu^{-5} |u0|_2^4`.
pub fn tstar_bound(nu: f64, u0_l2: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(LabError::domain(format!("viscosity must be positive, got {nu}")));
    }
    if !(u0_l2 >= 0.0) {
        return Err(LabError::domain(format!("initial energy norm must be nonnegative, got {u0_l2}")));
    }
    Ok(0.5 * K3.powi(12) * nu.powi(-5) * u0_l2.powi(4))
}

/// Exact rational comparison `K3^12 / 2 < 0.000753026` with `K3 = 581862001307 / 10^12`.
pub fn tstar_coefficient_is_below_bound() -> bool {
    // K3^12 / 2 < 753026 / 10^9  <=>  581862001307^12 * 10^9 < 2 * 753026 * 10^144
    let k3 = BigUint::from(581_862_001_307u64);
    let lhs = k3.pow(12) * BigUint::from(10u32).pow(9);
    let rhs = BigUint::from(2u32 * 753_026u32) * BigUint::from(10u32).pow(144);
    lhs < rhs
}

/// `int sum_{i,j,l} |D_l u_i| |D_l u_j| |D_j u_i| <= K3^3 |Du|_2^{3/2} |D^2 u|_2^{3/2}` (n = 3).
pub fn trilinear_certificate(u: &Field, tol: f64) -> Result<BoundCertificate> {
    check_vector(u)?;
    let n = u.grid().dim();
    if n != 3 {
        return Err(LabError::UnsupportedDimension {
            n,
            reason: "the trilinear constant is three-dimensional".into(),
        });
    }
    let (lhs, du, d2u) = trilinear_parts(u);
    let k = K3.powi(3);
    let rhs = k * du.powf(1.5) * d2u.powf(1.5);
    Ok(BoundCertificate::compare("trilinear-gradient", lhs, rhs, k, tol))
}

/// Returns `(trilinear integral, |Du|_2, |D^2 u|_2)`.
pub fn trilinear_parts(u: &Field) -> (f64, f64, f64) {
    let grid = u.grid();
    let n = grid.dim();
    let spec = u.spectrum();
    // grad[l][i] = D_l u_i
    let grad: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|l| {
            let mut alpha = vec![0usize; n];
            alpha[l] = 1;
            let d = spec.derivative(&alpha);
            (0..n).map(|i| grid.inverse_real(d.comp(i))).collect()
        })
        .collect();
    let mut acc = 0.0;
    for x in 0..grid.len() {
        for i in 0..n {
            for j in 0..n {
                let dji = grad[j][i][x].abs();
                for l in 0..n {
                    acc += grad[l][i][x].abs() * grad[l][j][x].abs() * dji;
                }
            }
        }
    }
    let lhs = acc * grid.cell_volume();
    (lhs, spec.hdot_norm_sq(1.0).sqrt(), spec.hdot_norm_sq(2.0).sqrt())
}

/// Two-dimensional Taylor–Green field `(sin x cos y, -cos x sin y)`.
pub fn taylor_green(grid: &GridSpec) -> Result<Field> {
    if grid.dim() != 2 {
        return Err(LabError::UnsupportedDimension { n: grid.dim(), reason: "Taylor-Green is planar".into() });
    }
    Ok(Field::vector_from_fn(grid, |x, out| {
        out[0] = x[0].sin() * x[1].cos();
        out[1] = -x[0].cos() * x[1].sin();
    }))
}

/// Random smooth divergence-free field, dealiased and scaled to `|u|_2 = l2`.
pub fn random_divergence_free<R: Rng + ?Sized>(
    grid: &GridSpec,
    kwidth: f64,
    l2: f64,
    rng: &mut R,
) -> Result<Field> {
    let raw = random_smooth_field(grid, grid.dim(), kwidth, rng)?;
    let mut spec = raw.spectrum().clone();
    spec.dealias();
    project_spectrum(&mut spec);
    let norm = spec.hdot_norm_sq(0.0).sqrt();
    if norm == 0.0 {
        return Err(LabError::InvalidField("random field vanished after projection".into()));
    }
    Ok(spec.to_field().scaled(l2 / norm))
}
