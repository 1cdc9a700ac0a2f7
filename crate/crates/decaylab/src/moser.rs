//! Constants of the L^p–L^q doubling iteration `q = 2^l p`.
//!
//! Products are accumulated as sums of logarithms so large `m` cannot overflow.

use serde::{Deserialize, Serialize};

use crate::certificate::BoundCertificate;
use crate::error::{LabError, Result};

/// Relative tolerance of the telescoping identities.
pub const TELESCOPING_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationParams {
    pub n: usize,
    pub kappa: f64,
    pub p: f64,
    /// Nash constant; 1 is a rigorous upper bound in every dimension.
    pub k_nash: f64,
}

impl IterationParams {
    pub fn new(n: usize, kappa: f64, p: f64, k_nash: f64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(LabError::domain(format!("dimension {n} not in 1..=3")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(LabError::domain(format!("kappa must be nonnegative, got {kappa}")));
        }
        if !(k_nash > 0.0 && k_nash.is_finite()) {
            return Err(LabError::domain(format!("Nash constant must be positive, got {k_nash}")));
        }
        if !(p >= 1.0) {
            return Err(LabError::domain(format!("p must be at least 1, got {p}")));
        }
        if !(p > n as f64 * kappa) {
            return Err(LabError::domain(format!(
                "criticality requires p > n kappa, got p = {p}, n kappa = {}",
                n as f64 * kappa
            )));
        }
        Ok(Self { n, kappa, p, k_nash })
    }

    fn nk(&self) -> f64 {
        self.n as f64 * self.kappa
    }

    /// `q_l = 2^l p`.
    pub fn level_q(&self, level: usize) -> f64 {
        self.p * 2f64.powi(level as i32)
    }

    /// `K(n, kappa, p) = (2p)^{n / (p - n kappa)}`.
    pub fn k_bound(&self) -> f64 {
        linfty_constant(self.n, self.kappa, self.p).expect("validated parameters")
    }
}

/// `(2p)^{n / (p - n kappa)}`, the constant of the sup-norm bound.
pub fn linfty_constant(n: usize, kappa: f64, p: f64) -> Result<f64> {
    let nk = n as f64 * kappa;
    if !(p > nk) {
        return Err(LabError::domain(format!(
            "criticality requires p > n kappa, got p = {p}, n kappa = {nk}"
        )));
    }
    Ok((2.0 * p).powf(n as f64 / (p - nk)))
}

fn ln_lambda_raw(params: &IterationParams, q: f64) -> Result<f64> {
    let nk = params.nk();
    if !(q > 2.0 * nk) {
        return Err(LabError::domain(format!("lambda(q) needs q > 2 n kappa, got q = {q}")));
    }
    Ok(2.0 / q * params.k_nash.ln() + params.n as f64 / (q - 2.0 * nk) * (0.5 * q).ln())
}

/// `lambda(q) = K(n)^{2/q} (q/2)^{n / (q - 2 n kappa)}`.
pub fn lambda_q(params: &IterationParams, q: f64) -> Result<f64> {
    if q < 2.0 * params.p * (1.0 - 1e-15) {
        return Err(LabError::domain(format!("lambda(q) needs q >= 2p, got q = {q}")));
    }
    Ok(ln_lambda_raw(params, q)?.exp())
}

fn ln_c_jm(params: &IterationParams, j: usize, m: usize) -> Result<f64> {
    if j < 1 || j > m {
        return Err(LabError::domain(format!("C(j, m) needs 1 <= j <= m, got j = {j}, m = {m}")));
    }
    let nk = params.nk();
    let p = params.p;
    let top = p - nk * 0.5f64.powi(m as i32);
    let mut acc = 0.0;
    for l in j..=m {
        let exponent = top / (p - nk * 0.5f64.powi(l as i32));
        acc += exponent * ln_lambda_raw(params, params.level_q(l))?;
    }
    Ok(acc)
}

/// `C(j, m) = prod_{l=j}^{m} lambda(2^l p)^{(p - 2^{-m} n kappa) / (p - 2^{-l} n kappa)}`.
pub fn c_jm(params: &IterationParams, j: usize, m: usize) -> Result<f64> {
    Ok(ln_c_jm(params, j, m)?.exp())
}

/// Direct sums and closed forms of the two telescoping identities.
pub fn telescoping_sums(params: &IterationParams, m: usize) -> Result<[(f64, f64); 2]> {
    if m < 1 {
        return Err(LabError::domain("telescoping sums need m >= 1"));
    }
    let p = params.p;
    let nk = params.nk();
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    let mut tail = 0.0;
    for l in 1..=m {
        let q = params.level_q(l);
        let term = q / ((q - 2.0 * nk) * (q - nk));
        sum_a += term;
        sum_b += l as f64 * term;
        tail += 1.0 / (q - nk);
    }
    let qm = params.level_q(m);
    let rhs_a = 1.0 / (p - nk) - 1.0 / (qm - nk);
    let rhs_b = 1.0 / (p - nk) - (m as f64 + 1.0) / (qm - nk) + tail;
    Ok([(sum_a, rhs_a), (sum_b, rhs_b)])
}

/// Both telescoping identities as equality certificates with relative tolerance 1e-12.
pub fn telescoping_check(
    params: &IterationParams,
    m: usize,
) -> Result<(BoundCertificate, BoundCertificate)> {
    let [(la, ra), (lb, rb)] = telescoping_sums(params, m)?;
    Ok((
        BoundCertificate::equality("telescoping-sum", la, ra, TELESCOPING_TOL),
        BoundCertificate::equality("telescoping-weighted-sum", lb, rb, TELESCOPING_TOL),
    ))
}

/// Exponents `(n (1 - 2^{-m}) / (p - n kappa), (p - n kappa 2^{-m}) / (p - n kappa))`
/// of the closed-form level-`m` bound.
pub fn closed_form_exponents(params: &IterationParams, m: usize) -> (f64, f64) {
    let nk = params.nk();
    let p = params.p;
    let h = 0.5f64.powi(m as i32);
    (params.n as f64 * (1.0 - h) / (p - nk), (p - nk * h) / (p - nk))
}

/// Limits `(n / (p - n kappa), p / (p - n kappa))` as `m -> inf`.
pub fn limit_exponents(params: &IterationParams) -> (f64, f64) {
    let nk = params.nk();
    (params.n as f64 / (params.p - nk), params.p / (params.p - nk))
}

/// One level of the iteration ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub q: f64,
    pub lambda: f64,
    /// `C(1, level)`.
    pub c_1l: f64,
    /// Recursive bound on the running sup of `|u|_q`.
    pub bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundLedger {
    pub levels: Vec<LevelRecord>,
}

/// Closed-form and recursive evaluations of the level-`m` bound.
#[derive(Clone, Debug, PartialEq)]
pub struct RecursionResult {
    /// `K max{|u0|_{2^m p}; Bmu^{a_m} Up^{b_m}}`.
    pub closed: f64,
    /// Level-by-level recursion `R_l = max{|u0|_{2^l p}; lambda(2^l p) Bmu^{..} R_{l-1}^{..}}`.
    pub recursive: f64,
    /// The recursion unrolled into the maximum over its branches.
    pub expanded: f64,
    pub ledger: BoundLedger,
}

/// Level-`m` bound on the running sup of `|u|_{2^m p}`.
///
/// `u0_norms[l]` is `|u0|_{2^l p}` for `l = 0..=m`; `up` is the running sup of `|u|_p`.
pub fn recursion_bound(
    params: &IterationParams,
    u0_norms: &[f64],
    bmu: f64,
    up: f64,
    m: usize,
) -> Result<RecursionResult> {
    if m < 1 {
        return Err(LabError::domain("iteration depth must satisfy m >= 1"));
    }
    if u0_norms.len() < m + 1 {
        return Err(LabError::domain(format!(
            "need {} datum norms for depth {m}, got {}",
            m + 1,
            u0_norms.len()
        )));
    }
    if bmu < 0.0 || up < 0.0 || u0_norms.iter().any(|v| !(*v >= 0.0)) {
        return Err(LabError::domain("norms and oscillation ratios must be nonnegative"));
    }
    let nk = params.nk();
    let n = params.n as f64;
    let (a_m, b_m) = closed_form_exponents(params, m);
    let closed = params.k_bound() * u0_norms[m].max(bmu.powf(a_m) * up.powf(b_m));

    let mut r = up;
    let mut ledger = BoundLedger::default();
    for l in 1..=m {
        let q = params.level_q(l);
        let lam = lambda_q(params, q)?;
        let branch = lam * bmu.powf(n / (q - 2.0 * nk)) * r.powf((q - nk) / (q - 2.0 * nk));
        r = u0_norms[l].max(branch);
        ledger.levels.push(LevelRecord { level: l, q, lambda: lam, c_1l: c_jm(params, 1, l)?, bound: r });
    }

    let p = params.p;
    let hm = 0.5f64.powi(m as i32);
    let mut expanded = u0_norms[m];
    for j in 1..=m {
        let c = c_jm(params, j, m)?;
        let term = if j == 1 {
            c * bmu.powf(a_m) * up.powf(b_m)
        } else {
            let hj = 0.5f64.powi(j as i32 - 1);
            let e = n * (hj - hm) / (p - hj * nk);
            let f = (p - hm * nk) / (p - hj * nk);
            c * bmu.powf(e) * u0_norms[j - 1].powf(f)
        };
        expanded = expanded.max(term);
    }
    Ok(RecursionResult { closed, recursive: r, expanded, ledger })
}

/// Ledger rows `(l, q, lambda, C(1, l), closed-form bound)` for `l = 1..=m_max`, with
/// datum norms, oscillation ratio and `Up` held at the given values.
pub fn moser_table(
    params: &IterationParams,
    m_max: usize,
    u0_norm: f64,
    bmu: f64,
    up: f64,
) -> Result<Vec<LevelRecord>> {
    let norms = vec![u0_norm; m_max + 1];
    (1..=m_max)
        .map(|l| {
            let q = params.level_q(l);
            let closed = recursion_bound(params, &norms[..=l], bmu, up, l)?.closed;
            Ok(LevelRecord {
                level: l,
                q,
                lambda: lambda_q(params, q)?,
                c_1l: c_jm(params, 1, l)?,
                bound: closed,
            })
        })
        .collect()
}

/// Inputs of the per-time growth-episode estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSample {
    pub t: f64,
    pub q: f64,
    /// Discrete time derivative of `|u|_q^q`.
    pub dlq_dt: f64,
    /// `|u(t)|_q`.
    pub lq: f64,
    /// `|u(t)|_{q/2}`.
    pub lq_half: f64,
    pub b: f64,
    pub mu: f64,
}

/// When `|u|_q^q` is not decreasing:
/// `|u|_q <= K^{2/q} (q/2)^{n/(q-2nk)} (B/mu)^{n/(q-2nk)} |u|_{q/2}^{(q-nk)/(q-2nk)}`.
/// Decreasing samples are inert (indeterminate).
pub fn growth_episode_certificate(
    params: &IterationParams,
    sample: &StepSample,
    tol: f64,
) -> Result<BoundCertificate> {
    let nk = params.nk();
    let q = sample.q;
    let ln_lam = ln_lambda_raw(params, q)?;
    if sample.dlq_dt < 0.0 {
        return Ok(BoundCertificate::indeterminate("growth-episode-bound", ln_lam.exp(), tol));
    }
    let n = params.n as f64;
    let ratio = sample.b / sample.mu;
    let rhs = ln_lam.exp()
        * ratio.powf(n / (q - 2.0 * nk))
        * sample.lq_half.powf((q - nk) / (q - 2.0 * nk));
    Ok(BoundCertificate::compare("growth-episode-bound", sample.lq, rhs, ln_lam.exp(), tol))
}
