//! Periodic pseudospectral grid: fields, transforms, spectral derivatives and norms.
//!
//! Storage is row-major with the last axis fastest. The forward transform is
//! unnormalized and the inverse divides by `N^n`, so a coefficient `c_k`
//! relates to the Fourier-series coefficient by `c_k / N^n`.

use std::fmt;
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::certificate::BoundCertificate;
use crate::error::{LabError, Result};

/// Highest derivative order accepted by [`spectral_derivative`].
pub const MAX_DERIVATIVE_ORDER: usize = 4;

struct Tables {
    /// Integer wavenumber per FFT index along one axis.
    m1d: Vec<i64>,
    /// Physical wavenumber `2 pi m / L` per FFT index.
    k1d: Vec<f64>,
    /// `|k|^2` per flattened mode.
    ksq: Vec<f64>,
    /// True when every `|m_j| <= N/3` (two-thirds rule).
    keep: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid on `[-L/2, L/2)^n`.
#[derive(Clone)]
pub struct GridSpec {
    n: usize,
    npts: usize,
    length: f64,
    tables: Arc<Tables>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("n", &self.n)
            .field("npts", &self.npts)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.npts == other.npts && self.length == other.length
    }
}

impl GridSpec {
    pub fn new(n: usize, npts: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(LabError::InvalidGrid(format!("dimension {n} not in 1..=3")));
        }
        if npts < 8 || !npts.is_power_of_two() {
            return Err(LabError::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {npts}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(LabError::InvalidGrid(format!("box length must be positive, got {length}")));
        }
        let half = npts as i64 / 2;
        let m1d: Vec<i64> =
            (0..npts as i64).map(|i| if i < half { i } else { i - npts as i64 }).collect();
        let k1d: Vec<f64> =
            m1d.iter().map(|&m| 2.0 * std::f64::consts::PI * m as f64 / length).collect();
        let total = npts.pow(n as u32);
        let cut = npts as i64 / 3;
        let mut ksq = vec![0.0; total];
        let mut keep = vec![true; total];
        for idx in 0..total {
            let mut s = 0.0;
            let mut ok = true;
            let mut rem = idx;
            for _ in 0..n {
                let i = rem % npts;
                rem /= npts;
                s += k1d[i] * k1d[i];
                ok &= m1d[i].abs() <= cut;
            }
            ksq[idx] = s;
            keep[idx] = ok;
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(npts);
        let inv = planner.plan_fft_inverse(npts);
        Ok(Self { n, npts, length, tables: Arc::new(Tables { m1d, k1d, ksq, keep, fwd, inv }) })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn npts(&self) -> usize {
        self.npts
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of samples `N^n`.
    pub fn len(&self) -> usize {
        self.tables.ksq.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.length / self.npts as f64
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.n as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.n as i32)
    }

    /// Per-axis sample indices of a flattened index.
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = idx;
        for a in (0..self.n).rev() {
            out[a] = rem % self.npts;
            rem /= self.npts;
        }
        out
    }

    pub fn flat_index(&self, mi: &[usize]) -> usize {
        mi.iter().take(self.n).fold(0, |acc, &i| acc * self.npts + i)
    }

    /// Physical coordinates of a flattened sample index.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; 3];
        let h = self.dx();
        for a in 0..self.n {
            x[a] = -0.5 * self.length + mi[a] as f64 * h;
        }
        x
    }

    /// Physical wavevector of a flattened mode index.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let mi = self.multi_index(idx);
        let mut k = [0.0; 3];
        for a in 0..self.n {
            k[a] = self.tables.k1d[mi[a]];
        }
        k
    }

    /// Integer wavenumbers of a flattened mode index.
    pub fn mode_numbers(&self, idx: usize) -> [i64; 3] {
        let mi = self.multi_index(idx);
        let mut m = [0i64; 3];
        for a in 0..self.n {
            m[a] = self.tables.m1d[mi[a]];
        }
        m
    }

    pub fn ksq(&self) -> &[f64] {
        &self.tables.ksq
    }

    /// Two-thirds-rule mask: true for retained modes.
    pub fn dealias_mask(&self) -> &[bool] {
        &self.tables.keep
    }

    /// Whether the sample sits on the outermost layer of the box.
    pub fn on_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.n).any(|a| mi[a] == 0 || mi[a] == self.npts - 1)
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let fft = if inverse { &self.tables.inv } else { &self.tables.fwd };
        let npts = self.npts;
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut line = vec![Complex64::new(0.0, 0.0); npts];
        for axis in 0..self.n {
            let stride = npts.pow((self.n - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let outer = data.len() / (npts * stride);
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * npts * stride + inner;
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[base + j * stride] = *v;
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / data.len() as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Normalized inverse transform in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Forward transform of real samples.
    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse transform keeping the real part.
    pub fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = coeffs.to_vec();
        self.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Quadrature weight converting `sum |c_k|^2` into an L2 integral.
    pub fn parseval_weight(&self) -> f64 {
        self.volume() / (self.len() as f64).powi(2)
    }
}

/// Spectral coefficients of every component of a field.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: GridSpec,
    comps: Vec<Vec<Complex64>>,
}

impl Spectrum {
    pub fn new(grid: GridSpec, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        check_components(&grid, comps.len())?;
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(LabError::InvalidField("coefficient count does not match grid".into()));
        }
        Ok(Self { grid, comps })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, c: usize) -> &[Complex64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.comps[c]
    }

    pub fn into_comps(self) -> Vec<Vec<Complex64>> {
        self.comps
    }

    /// `sum_i sum_k |k|^{2s} |c_k|^2` times the Parseval weight.
    pub fn hdot_norm_sq(&self, s: f64) -> f64 {
        let ksq = self.grid.ksq();
        let mut acc = 0.0;
        for comp in &self.comps {
            for (c, &k2) in comp.iter().zip(ksq) {
                let w = if s == 0.0 { 1.0 } else { k2.powf(s) };
                acc += w * c.norm_sqr();
            }
        }
        acc * self.grid.parseval_weight()
    }

    /// Multiply every mode by `(i k)^alpha`; odd orders zero the Nyquist plane of their axis.
    pub fn derivative(&self, alpha: &[usize]) -> Spectrum {
        let grid = &self.grid;
        let nyq = -(grid.npts() as i64) / 2;
        let symbols: Vec<Complex64> = (0..grid.len())
            .map(|idx| {
                let k = grid.wavevector(idx);
                let m = grid.mode_numbers(idx);
                let mut sym = Complex64::new(1.0, 0.0);
                for a in 0..grid.dim() {
                    let order = alpha.get(a).copied().unwrap_or(0);
                    if order == 0 {
                        continue;
                    }
                    if order % 2 == 1 && m[a] == nyq {
                        return Complex64::new(0.0, 0.0);
                    }
                    sym *= Complex64::new(0.0, k[a]).powu(order as u32);
                }
                sym
            })
            .collect();
        let comps = self
            .comps
            .iter()
            .map(|comp| comp.iter().zip(&symbols).map(|(c, s)| c * s).collect())
            .collect();
        Spectrum { grid: grid.clone(), comps }
    }

    /// Zero every mode outside the two-thirds band.
    pub fn dealias(&mut self) {
        let keep = self.grid.dealias_mask();
        for comp in &mut self.comps {
            for (c, &k) in comp.iter_mut().zip(keep) {
                if !k {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    pub fn to_field(&self) -> Field {
        let comps = self.comps.iter().map(|c| self.grid.inverse_real(c)).collect();
        Field::from_parts(self.grid.clone(), comps)
    }
}

/// Real samples of a scalar or `n`-component vector field.
#[derive(Clone, Debug)]
pub struct Field {
    grid: GridSpec,
    comps: Vec<Vec<f64>>,
    spectral: OnceLock<Spectrum>,
}

fn check_components(grid: &GridSpec, count: usize) -> Result<()> {
    if count == 1 || count == grid.dim() {
        Ok(())
    } else {
        Err(LabError::InvalidField(format!(
            "{count} components on a {}-dimensional grid (expected 1 or {})",
            grid.dim(),
            grid.dim()
        )))
    }
}

impl Field {
    pub fn new(grid: GridSpec, comps: Vec<Vec<f64>>) -> Result<Self> {
        check_components(&grid, comps.len())?;
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(LabError::InvalidField("sample count does not match grid".into()));
        }
        Ok(Self::from_parts(grid, comps))
    }

    fn from_parts(grid: GridSpec, comps: Vec<Vec<f64>>) -> Self {
        Self { grid, comps, spectral: OnceLock::new() }
    }

    pub fn zeros(grid: &GridSpec, components: usize) -> Result<Self> {
        check_components(grid, components)?;
        Ok(Self::from_parts(grid.clone(), vec![vec![0.0; grid.len()]; components]))
    }

    /// Scalar field sampled from `f(x)`.
    pub fn scalar_from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let n = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.coords(i)[..n])).collect();
        Self::from_parts(grid.clone(), vec![values])
    }

    /// Vector field sampled from `f(x, out)`, one slot per component.
    pub fn vector_from_fn(grid: &GridSpec, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let n = grid.dim();
        let mut comps = vec![vec![0.0; grid.len()]; n];
        for i in 0..grid.len() {
            let mut out = [0.0; 3];
            f(&grid.coords(i)[..n], &mut out[..n]);
            for (c, comp) in comps.iter_mut().enumerate() {
                comp[i] = out[c];
            }
        }
        Self::from_parts(grid.clone(), comps)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    /// Mutable access to samples; drops the cached spectrum.
    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        self.spectral = OnceLock::new();
        &mut self.comps[c]
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(LabError::InvalidField("non-finite samples".into()))
        }
    }

    /// Spectral coefficients, computed on first use.
    pub fn spectrum(&self) -> &Spectrum {
        self.spectral.get_or_init(|| Spectrum {
            grid: self.grid.clone(),
            comps: self.comps.iter().map(|c| self.grid.forward_real(c)).collect(),
        })
    }

    pub fn scaled(&self, a: f64) -> Field {
        let comps = self.comps.iter().map(|c| c.iter().map(|v| a * v).collect()).collect();
        Self::from_parts(self.grid.clone(), comps)
    }

    /// `self - other`, componentwise.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        if self.grid != other.grid || self.components() != other.components() {
            return Err(LabError::InvalidField("shape mismatch in subtraction".into()));
        }
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(Self::from_parts(self.grid.clone(), comps))
    }

    /// Euclidean magnitude at one sample.
    pub fn magnitude_at(&self, idx: usize) -> f64 {
        self.comps.iter().map(|c| c[idx] * c[idx]).sum::<f64>().sqrt()
    }

    /// Scalar field holding the pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> Field {
        let values = (0..self.grid.len()).map(|i| self.magnitude_at(i)).collect();
        Self::from_parts(self.grid.clone(), vec![values])
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.grid.len()).map(|i| self.magnitude_at(i)).fold(0.0, f64::max)
    }

    /// Largest magnitude on the outermost sample layer.
    pub fn boundary_max(&self) -> f64 {
        (0..self.grid.len())
            .filter(|&i| self.grid.on_boundary(i))
            .map(|i| self.magnitude_at(i))
            .fold(0.0, f64::max)
    }

    /// Sum of samples times cell volume, per component.
    pub fn integral(&self, c: usize) -> f64 {
        self.comps[c].iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// Inverse of the forward transform of `field`; used to audit the transform pair.
pub fn transform_roundtrip(field: &Field) -> Result<Field> {
    field.ensure_finite()?;
    let spec = Spectrum {
        grid: field.grid.clone(),
        comps: field.comps.iter().map(|c| field.grid.forward_real(c)).collect(),
    };
    Ok(spec.to_field())
}

/// L^p norm with componentwise aggregation; `p = inf` is the sup of the Euclidean magnitude.
pub fn lp_norm(field: &Field, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(LabError::domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(field.max_abs());
    }
    let mut acc = 0.0;
    for comp in &field.comps {
        if p == 2.0 {
            acc += comp.iter().map(|v| v * v).sum::<f64>();
        } else if p == 1.0 {
            acc += comp.iter().map(|v| v.abs()).sum::<f64>();
        } else {
            acc += comp.iter().map(|v| v.abs().powf(p)).sum::<f64>();
        }
    }
    Ok((acc * field.grid.cell_volume()).powf(1.0 / p))
}

/// Homogeneous Sobolev norm `(sum |k|^{2s} |u_hat|^2)^{1/2}` with the L2 quadrature weight.
pub fn hdot_norm(field: &Field, s: f64) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(LabError::domain(format!("Hdot^s norm needs s >= 0, got {s}")));
    }
    Ok(field.spectrum().hdot_norm_sq(s).sqrt())
}

/// `D^alpha u` with `alpha` a multi-index of length `n`.
pub fn spectral_derivative(field: &Field, alpha: &[usize]) -> Result<Field> {
    let order: usize = alpha.iter().sum();
    if order > MAX_DERIVATIVE_ORDER {
        return Err(LabError::UnsupportedOrder { order, max: MAX_DERIVATIVE_ORDER });
    }
    if alpha.len() != field.grid.dim() {
        return Err(LabError::domain(format!(
            "multi-index of length {} on a {}-dimensional grid",
            alpha.len(),
            field.grid.dim()
        )));
    }
    Ok(field.spectrum().derivative(alpha).to_field())
}

/// Checks `|u|_{Hdot^s} <= |u|_{Hdot^s1}^{a1} |u|_{Hdot^s2}^{a2}` with
/// `a1 = th1 s/s1`, `a2 = th2 s/s2`, `1/s = th1/s1 + th2/s2`, `th1 + th2 = 1`.
pub fn interpolation_check(field: &Field, s1: f64, s: f64, s2: f64) -> Result<BoundCertificate> {
    if !(0.0 <= s1 && s1 < s && s < s2) {
        return Err(LabError::domain(format!("need 0 <= s1 < s < s2, got {s1}, {s}, {s2}")));
    }
    let (a1, a2) = interpolation_exponents(s1, s, s2);
    let lhs = hdot_norm(field, s)?;
    let n1 = hdot_norm(field, s1)?;
    let n2 = hdot_norm(field, s2)?;
    let rhs = n1.powf(a1) * n2.powf(a2);
    Ok(BoundCertificate::compare_nondegenerate("hdot-interpolation", lhs, rhs, 1.0, 1e-12))
}

/// Exponents `(a1, a2)` of the interpolation inequality; `s1 = 0` uses the limiting form.
pub fn interpolation_exponents(s1: f64, s: f64, s2: f64) -> (f64, f64) {
    if s1 == 0.0 {
        return (1.0 - s / s2, s / s2);
    }
    let th1 = (1.0 / s - 1.0 / s2) / (1.0 / s1 - 1.0 / s2);
    let th2 = 1.0 - th1;
    (th1 * s / s1, th2 * s / s2)
}

/// Random smooth field: Gaussian-enveloped random spectrum of width `kwidth`, real part,
/// restricted to the two-thirds band.
pub fn random_smooth_field<R: Rng + ?Sized>(
    grid: &GridSpec,
    components: usize,
    kwidth: f64,
    rng: &mut R,
) -> Result<Field> {
    check_components(grid, components)?;
    let ksq = grid.ksq();
    let keep = grid.dealias_mask();
    let mut comps = Vec::with_capacity(components);
    for _ in 0..components {
        let mut coeffs: Vec<Complex64> = (0..grid.len())
            .map(|i| {
                let env = (-0.5 * ksq[i] / (kwidth * kwidth)).exp();
                if !keep[i] || env < 1e-300 {
                    return Complex64::new(0.0, 0.0);
                }
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * env
            })
            .collect();
        coeffs[0] = Complex64::new(0.0, 0.0);
        grid.inverse(&mut coeffs);
        comps.push(coeffs.into_iter().map(|c| c.re).collect());
    }
    Field::new(grid.clone(), comps)
}

/// Time-stamped values of one tracked quantity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub quantity: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl NormSeries {
    pub fn new(quantity: impl Into<String>) -> Self {
        Self { quantity: quantity.into(), times: Vec::new(), values: Vec::new() }
    }

    /// Append a sample; time must increase strictly and the value be finite and nonnegative.
    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(LabError::domain(format!(
                    "series {}: time {t} does not exceed {last}",
                    self.quantity
                )));
            }
        }
        if !value.is_finite() || value < 0.0 {
            return Err(LabError::InvalidField(format!(
                "series {}: value {value} at t = {t} is not finite and nonnegative",
                self.quantity
            )));
        }
        self.times.push(t);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        Some((*self.times.last()?, *self.values.last()?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }
}

const HEADER_BYTES: usize = 32;

/// Write a field as a 32-byte header (`n`, `N`, `L`, components) followed by
/// little-endian f64 samples, component after component.
pub fn write_field<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let g = field.grid();
    out.write_all(&(g.dim() as u64).to_le_bytes())?;
    out.write_all(&(g.npts() as u64).to_le_bytes())?;
    out.write_all(&g.length().to_le_bytes())?;
    out.write_all(&(field.components() as u64).to_le_bytes())?;
    for comp in field.comps() {
        for v in comp {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_field<R: Read>(mut input: R) -> Result<Field> {
    let mut header = [0u8; HEADER_BYTES];
    input.read_exact(&mut header)?;
    let word = |i: usize| -> [u8; 8] { header[8 * i..8 * i + 8].try_into().expect("8 bytes") };
    let n = u64::from_le_bytes(word(0)) as usize;
    let npts = u64::from_le_bytes(word(1)) as usize;
    let length = f64::from_le_bytes(word(2));
    let components = u64::from_le_bytes(word(3)) as usize;
    let grid = GridSpec::new(n, npts, length)?;
    check_components(&grid, components)?;
    let mut comps = Vec::with_capacity(components);
    let mut buf = [0u8; 8];
    for _ in 0..components {
        let mut comp = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            input.read_exact(&mut buf)?;
            comp.push(f64::from_le_bytes(buf));
        }
        comps.push(comp);
    }
    Field::new(grid, comps)
}
