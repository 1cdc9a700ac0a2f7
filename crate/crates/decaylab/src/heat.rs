//! Exact heat semigroup `e^{nu Laplacian tau}` in spectral space and its decay/smoothing checks.

use num_complex::Complex64;

use crate::certificate::BoundCertificate;
use crate::grid::{lp_norm, Field, GridSpec, NormSeries, Spectrum};
use crate::error::{LabError, Result};

/// Diffusivity paired with the grid it acts on.
#[derive(Clone, Debug)]
pub struct HeatParams {
    pub nu: f64,
    pub grid: GridSpec,
}

impl HeatParams {
    pub fn new(nu: f64, grid: GridSpec) -> Result<Self> {
        check_nu(nu)?;
        Ok(Self { nu, grid })
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(LabError::domain(format!("diffusivity must be positive, got {nu}")))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(LabError::domain(format!("heat time must be nonnegative, got {tau}")))
    }
}

/// Multiply every coefficient by `exp(-nu |k|^2 tau)`.
pub fn apply_semigroup_spectrum(spec: &Spectrum, nu: f64, tau: f64) -> Result<Spectrum> {
    check_nu(nu)?;
    check_tau(tau)?;
    let mut out = spec.clone();
    if tau == 0.0 {
        return Ok(out);
    }
    let factors: Vec<f64> = spec.grid().ksq().iter().map(|k2| (-nu * k2 * tau).exp()).collect();
    for c in 0..out.components() {
        for (v, f) in out.comp_mut(c).iter_mut().zip(&factors) {
            *v *= *f;
        }
    }
    Ok(out)
}

pub fn apply_semigroup(field: &Field, nu: f64, tau: f64) -> Result<Field> {
    field.ensure_finite()?;
    if tau == 0.0 {
        check_nu(nu)?;
        return Ok(field.clone());
    }
    Ok(apply_semigroup_spectrum(field.spectrum(), nu, tau)?.to_field())
}

/// Exponent `n/2 (1/r - 1/2) + |alpha|/2` of the smoothing estimate.
pub fn smoothing_exponent(n: usize, r: f64, order: usize) -> f64 {
    0.5 * n as f64 * (1.0 / r - 0.5) + 0.5 * order as f64
}

/// `|D^alpha e^{nu Laplacian tau} u|_2 <= K |u|_r (nu tau)^{-gamma}`.
///
/// The certificate's `rhs` includes `k_const`; [`empirical_constant`] recovers
/// the ratio `lhs / (|u|_r (nu tau)^{-gamma})`.
pub fn smoothing_certificate(
    u: &Field,
    nu: f64,
    tau: f64,
    alpha: &[usize],
    r: f64,
    k_const: f64,
) -> Result<BoundCertificate> {
    if !(1.0..=2.0).contains(&r) {
        return Err(LabError::domain(format!("smoothing estimate needs r in [1, 2], got {r}")));
    }
    if !(tau > 0.0) {
        return Err(LabError::domain(format!("smoothing estimate needs tau > 0, got {tau}")));
    }
    check_nu(nu)?;
    let smoothed = apply_semigroup_spectrum(u.spectrum(), nu, tau)?;
    let order: usize = alpha.iter().sum();
    let d = smoothed.derivative(alpha);
    let lhs = d.hdot_norm_sq(0.0).sqrt();
    let gamma = smoothing_exponent(u.grid().dim(), r, order);
    let base = lp_norm(u, r)? * (nu * tau).powf(-gamma);
    Ok(BoundCertificate::compare("heat-smoothing", lhs, k_const * base, k_const, 0.0))
}

/// Sharp whole-space constant of the smoothing estimate for `r` in {1, 2} and
/// `alpha` zero or a single first derivative.
///
/// `r = 2`: `sup_k |k_1|^a e^{-|k|^2}` in units of `(nu tau)`; `r = 1`: the `L^2` norm
/// of the differentiated heat kernel, `(a/4 + (1-a)) (8 pi)^{-n/2}` squared.
pub fn smoothing_constant(n: usize, r: f64, order: usize) -> Result<f64> {
    if order > 1 {
        return Err(LabError::UnsupportedOrder { order, max: 1 });
    }
    let first = order == 1;
    if r == 2.0 {
        Ok(if first { (2.0 * std::f64::consts::E).powf(-0.5) } else { 1.0 })
    } else if r == 1.0 {
        let base = (8.0 * std::f64::consts::PI).powf(-0.5 * n as f64);
        Ok((if first { 0.25 * base } else { base }).sqrt())
    } else {
        Err(LabError::domain(format!("sharp smoothing constant is tabulated for r = 1, 2 only, got {r}")))
    }
}

/// `lhs / (rhs / K)` of a smoothing certificate; 0 when both vanish.
pub fn empirical_constant(cert: &BoundCertificate) -> f64 {
    if cert.lhs == 0.0 {
        0.0
    } else {
        cert.lhs * cert.constant / cert.rhs
    }
}

/// Norm tracked by [`heat_decay_series`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayNorm {
    /// `t^{s/2} |v(t)|_{Hdot^s}`.
    Hdot(f64),
    /// `t^{n/4} |v(t)|_inf`.
    Sup,
}

/// Weighted decay series of the heat flow from `u0`.
pub fn heat_decay_series(u0: &Field, nu: f64, times: &[f64], norm: DecayNorm) -> Result<NormSeries> {
    u0.ensure_finite()?;
    check_nu(nu)?;
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(LabError::domain("decay times must be positive"));
    }
    let n = u0.grid().dim() as f64;
    let mut series = match norm {
        DecayNorm::Hdot(s) => {
            if s < 0.0 {
                return Err(LabError::domain(format!("Hdot^s needs s >= 0, got {s}")));
            }
            NormSeries::new(format!("Hdot_{s}"))
        }
        DecayNorm::Sup => NormSeries::new("sup"),
    };
    let spec = u0.spectrum();
    let ksq = u0.grid().ksq();
    let weight = u0.grid().parseval_weight();
    for &t in times {
        let value = match norm {
            DecayNorm::Hdot(s) => {
                let mut acc = 0.0;
                for c in 0..spec.components() {
                    for (v, &k2) in spec.comp(c).iter().zip(ksq) {
                        let w = if s == 0.0 { 1.0 } else { k2.powf(s) };
                        acc += w * (-2.0 * nu * k2 * t).exp() * v.norm_sqr();
                    }
                }
                t.powf(0.5 * s) * (acc * weight).sqrt()
            }
            DecayNorm::Sup => {
                let v = apply_semigroup_spectrum(spec, nu, t)?.to_field();
                t.powf(0.25 * n) * v.max_abs()
            }
        };
        series.push(t, value)?;
    }
    Ok(series)
}

/// `per_decade` geometrically spaced times covering `[t0, t1]` inclusive.
pub fn geometric_times(t0: f64, t1: f64, per_decade: usize) -> Vec<f64> {
    let decades = (t1 / t0).log10();
    let count = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=count).map(|i| t0 * (t1 / t0).powf(i as f64 / count as f64)).collect()
}

/// Least-squares slope of `log value` against `log t` over samples in `[t_min, t_max]`.
pub fn fit_loglog_slope(series: &NormSeries, t_min: f64, t_max: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|&(t, v)| t >= t_min && t <= t_max && v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(LabError::InsufficientData("fewer than two samples in fit window".into()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Box side `factor * sqrt(nu * t_final)` keeping wrap-around negligible for diffusive runs.
pub fn diffusive_box_length(nu: f64, t_final: f64, factor: f64) -> f64 {
    factor * (nu * t_final).sqrt()
}

/// Mean-zero dipole `x_1 exp(-|x|^2 / sigma^2)` built from its exact Fourier
/// transform on the resolved modes, so `sigma` may sit below the grid spacing.
pub fn gaussian_dipole(grid: &GridSpec, sigma: f64) -> Result<Field> {
    if !(sigma > 0.0) {
        return Err(LabError::domain("dipole width must be positive"));
    }
    let n = grid.dim();
    let nyq = -(grid.npts() as i64) / 2;
    let scale = grid.len() as f64 / grid.volume();
    let mass = (std::f64::consts::PI * sigma * sigma).powf(0.5 * n as f64);
    let coeffs: Vec<Complex64> = (0..grid.len())
        .map(|idx| {
            let m = grid.mode_numbers(idx);
            if m[0] == nyq {
                return Complex64::new(0.0, 0.0);
            }
            let k = grid.wavevector(idx);
            let k2: f64 = grid.ksq()[idx];
            let sign = if m[..n].iter().sum::<i64>().rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let amp = -0.5 * k[0] * sigma * sigma * mass * (-0.25 * sigma * sigma * k2).exp();
            Complex64::new(0.0, sign * scale * amp)
        })
        .collect();
    Ok(Spectrum::new(grid.clone(), vec![coeffs])?.to_field())
}

/// Isotropic Gaussian `amp * exp(-|x - c|^2 / w^2)` sampled on the grid.
pub fn gaussian(grid: &GridSpec, amp: f64, width: f64, center: &[f64]) -> Field {
    Field::scalar_from_fn(grid, |x| {
        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        amp * (-r2 / (width * width)).exp()
    })
}
