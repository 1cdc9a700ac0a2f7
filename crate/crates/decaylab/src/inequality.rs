//! Registry and corpus auditor for the Nash and Gagliardo–Nirenberg inequalities on R^n.
//!
//! Samples live on a periodic box; a sample stands in for a function on R^n only when its
//! boundary layer is below `TAIL_THRESHOLD` relative to its peak. Gradient norms are spectral.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::BoundCertificate;
use crate::error::{LabError, Result};
use crate::grid::{hdot_norm, lp_norm, random_smooth_field, Field, GridSpec};
use crate::navier_stokes::{trilinear_parts, K3};

pub const TAIL_THRESHOLD: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const SCALING_TOL: f64 = 1e-8;
/// Literature upper bound for the sup-norm constant in three dimensions.
pub const K0: f64 = 0.678;
pub const K1: f64 = 1.0;

/// Sharp constant of `|u|_6 <= S |grad u|_2` in three dimensions.
pub fn sobolev_constant_3d() -> f64 {
    4f64.cbrt() / (3f64.sqrt() * std::f64::consts::PI.powf(2.0 / 3.0))
}

/// `S^{3/4}`, a rigorous constant for `|u|_4 <= K |u|_2^{1/4} |Du|_2^{3/4}` via Hölder.
pub fn l4_constant() -> f64 {
    sobolev_constant_3d().powf(0.75)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm {
    Lp(f64),
    Sup,
    /// `|Du|_2`, all first derivatives of all components.
    Grad,
    /// `|D^2 u|_2`.
    Hess,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub norm: Norm,
    pub power: f64,
}

const fn term(norm: Norm, power: f64) -> Term {
    Term { norm, power }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeftSide {
    Product(Vec<Term>),
    /// `int sum_{i,j,l} |D_l u_i| |D_l u_j| |D_j u_i|` for a vector field.
    Trilinear,
}

/// Where the constant comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantKind {
    /// Upper bound quoted from the literature.
    Literature,
    /// Follows from Fourier/Hölder arguments.
    Exact,
    /// User supplied.
    Configured,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalitySpec {
    pub name: String,
    pub n: usize,
    /// 1 for scalar inequalities, `n` for the vector versions.
    pub components: usize,
    pub lhs: LeftSide,
    pub rhs: Vec<Term>,
    pub constant: f64,
    pub kind: ConstantKind,
}

fn check_dim(n: usize) -> Result<()> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(LabError::UnsupportedDimension { n, reason: "dimensions 1 to 3 only".into() })
    }
}

impl InequalitySpec {
    /// `|v|_2 <= K |v|_1^{2/(n+2)} |grad v|_2^{n/(n+2)}`.
    pub fn nash(n: usize, k: f64) -> Result<Self> {
        check_dim(n)?;
        let nf = n as f64;
        Ok(Self {
            name: format!("nash-{n}d"),
            n,
            components: 1,
            lhs: LeftSide::Product(vec![term(Norm::Lp(2.0), 1.0)]),
            rhs: vec![term(Norm::Lp(1.0), 2.0 / (nf + 2.0)), term(Norm::Grad, nf / (nf + 2.0))],
            constant: k,
            kind: if k == 1.0 { ConstantKind::Exact } else { ConstantKind::Configured },
        })
    }

    /// `|u|_inf <= K0 |u|_2^{1/4} |D^2 u|_2^{3/4}` in three dimensions.
    pub fn sup_hessian(k0: f64) -> Self {
        Self {
            name: "gn-sup-hessian".into(),
            n: 3,
            components: 1,
            lhs: LeftSide::Product(vec![term(Norm::Sup, 1.0)]),
            rhs: vec![term(Norm::Lp(2.0), 0.25), term(Norm::Hess, 0.75)],
            constant: k0,
            kind: ConstantKind::Literature,
        }
    }

    /// `|Du|_2 <= K1 |u|_2^{1/2} |D^2 u|_2^{1/2}` in three dimensions.
    pub fn gradient_interpolation(k1: f64) -> Self {
        Self {
            name: "gn-gradient-interpolation".into(),
            n: 3,
            components: 1,
            lhs: LeftSide::Product(vec![term(Norm::Grad, 1.0)]),
            rhs: vec![term(Norm::Lp(2.0), 0.5), term(Norm::Hess, 0.5)],
            constant: k1,
            kind: ConstantKind::Exact,
        }
    }

    /// `|u|_inf |Du|_2^{1/2} <= K0 K1^{1/2} |u|_2^{1/2} |D^2 u|_2`.
    pub fn sup_product(k0: f64, k1: f64) -> Self {
        Self {
            name: "gn-sup-product".into(),
            n: 3,
            components: 1,
            lhs: LeftSide::Product(vec![term(Norm::Sup, 1.0), term(Norm::Grad, 0.5)]),
            rhs: vec![term(Norm::Lp(2.0), 0.5), term(Norm::Hess, 1.0)],
            constant: k0 * k1.sqrt(),
            kind: ConstantKind::Literature,
        }
    }

    /// `|v|_r <= |v|_1^{1-theta} |grad v|_2^theta`, `theta = (1 - 1/r)/(1/2 + 1/n)`,
    /// for `2 <= r < 2 + 2/n`.
    pub fn l1_gradient(n: usize, r: f64) -> Result<Self> {
        check_dim(n)?;
        let nf = n as f64;
        if !(2.0..2.0 + 2.0 / nf).contains(&r) {
            return Err(LabError::domain(format!("need 2 <= r < {}, got r = {r}", 2.0 + 2.0 / nf)));
        }
        let theta = (1.0 - 1.0 / r) / (0.5 + 1.0 / nf);
        Ok(Self {
            name: format!("gn-l1-gradient-{n}d-r{r}"),
            n,
            components: 1,
            lhs: LeftSide::Product(vec![term(Norm::Lp(r), 1.0)]),
            rhs: vec![term(Norm::Lp(1.0), 1.0 - theta), term(Norm::Grad, theta)],
            constant: 1.0,
            kind: ConstantKind::Literature,
        })
    }

    /// `|u|_4 <= K |u|_2^{1/4} |Du|_2^{3/4}` in three dimensions.
    pub fn l4(k: f64) -> Self {
        Self {
            name: "gn-l4".into(),
            n: 3,
            components: 1,
            lhs: LeftSide::Product(vec![term(Norm::Lp(4.0), 1.0)]),
            rhs: vec![term(Norm::Lp(2.0), 0.25), term(Norm::Grad, 0.75)],
            constant: k,
            kind: if k == l4_constant() { ConstantKind::Exact } else { ConstantKind::Configured },
        }
    }

    /// `|u|_3 <= K3 |u|_2^{1/2} |Du|_2^{1/2}` in three dimensions.
    pub fn l3(k3: f64) -> Self {
        Self {
            name: "gn-l3".into(),
            n: 3,
            components: 1,
            lhs: LeftSide::Product(vec![term(Norm::Lp(3.0), 1.0)]),
            rhs: vec![term(Norm::Lp(2.0), 0.5), term(Norm::Grad, 0.5)],
            constant: k3,
            kind: ConstantKind::Literature,
        }
    }

    /// Trilinear gradient integral `<= K3^3 |Du|_2^{3/2} |D^2 u|_2^{3/2}` for vector fields on R^3.
    pub fn trilinear(k3: f64) -> Self {
        Self {
            name: "trilinear-gradient".into(),
            n: 3,
            components: 3,
            lhs: LeftSide::Trilinear,
            rhs: vec![term(Norm::Grad, 1.5), term(Norm::Hess, 1.5)],
            constant: k3.powi(3),
            kind: ConstantKind::Literature,
        }
    }

    /// Same inequality and constant for `n`-component fields with componentwise norms.
    /// Only inequalities built from `L^p` norms and `|Du|_2` transfer.
    pub fn vector(&self) -> Result<Self> {
        let LeftSide::Product(lhs) = &self.lhs else {
            return Err(LabError::domain(format!("{} is already a vector inequality", self.name)));
        };
        let transferable = |t: &Term| matches!(t.norm, Norm::Lp(_) | Norm::Grad);
        if self.components != 1 || !lhs.iter().chain(&self.rhs).all(transferable) {
            return Err(LabError::domain(format!("{} does not transfer to vector fields", self.name)));
        }
        Ok(Self { name: format!("{}-vector", self.name), components: self.n, ..self.clone() })
    }

    /// Sum of the exponents of length and amplitude on both sides; both vanish for a
    /// dimensionally balanced inequality.
    pub fn balance(&self) -> (f64, f64) {
        let n = self.n as f64;
        let dims = |t: &Term| -> (f64, f64) {
            let len = match t.norm {
                Norm::Lp(p) => n / p,
                Norm::Sup => 0.0,
                Norm::Grad => n / 2.0 - 1.0,
                Norm::Hess => n / 2.0 - 2.0,
            };
            (t.power * len, t.power)
        };
        let (mut len, mut amp) = match &self.lhs {
            LeftSide::Product(ts) => ts.iter().map(dims).fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1)),
            LeftSide::Trilinear => (n - 3.0, 3.0),
        };
        for t in &self.rhs {
            let (l, a) = dims(t);
            len -= l;
            amp -= a;
        }
        (len, amp)
    }

    /// Left side and the right side without the constant.
    pub fn evaluate(&self, field: &Field) -> Result<(f64, f64)> {
        self.check_field(field)?;
        let lhs = match &self.lhs {
            LeftSide::Product(ts) => product(field, ts)?,
            LeftSide::Trilinear => trilinear_parts(field).0,
        };
        Ok((lhs, product(field, &self.rhs)?))
    }

    /// `lhs / rhs`, without the constant; 0 for the zero field.
    pub fn ratio(&self, field: &Field) -> Result<f64> {
        let (l, r) = self.evaluate(field)?;
        Ok(if l == 0.0 { 0.0 } else { l / r })
    }

    fn check_field(&self, field: &Field) -> Result<()> {
        if field.grid().dim() != self.n || field.components() != self.components {
            return Err(LabError::InvalidField(format!(
                "{} needs a {}-component field in {} dimensions, got {} components in {}",
                self.name,
                self.components,
                self.n,
                field.components(),
                field.grid().dim()
            )));
        }
        field.ensure_finite()
    }
}

fn norm_value(field: &Field, norm: Norm) -> Result<f64> {
    match norm {
        Norm::Lp(p) => lp_norm(field, p),
        Norm::Sup => Ok(field.max_abs()),
        Norm::Grad => hdot_norm(field, 1.0),
        Norm::Hess => hdot_norm(field, 2.0),
    }
}

fn product(field: &Field, terms: &[Term]) -> Result<f64> {
    terms.iter().try_fold(1.0, |acc, t| Ok(acc * norm_value(field, t.norm)?.powf(t.power)))
}

/// Constants used to build the registry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub k0: f64,
    pub k1: f64,
    pub k3: f64,
    pub k_nash: f64,
    pub k_l4: f64,
}

impl Default for ConstantSet {
    fn default() -> Self {
        Self { k0: K0, k1: K1, k3: K3, k_nash: 1.0, k_l4: l4_constant() }
    }
}

/// Every norm-product inequality in each dimension where it applies, plus the vector versions.
///
/// The trilinear integral is left out: its integrand has kinks, so its grid value is only
/// second-order accurate and cannot meet the scaling tolerance.
pub fn registry(c: &ConstantSet) -> Vec<InequalitySpec> {
    let mut out = Vec::new();
    for n in 1..=3 {
        out.push(InequalitySpec::nash(n, c.k_nash).expect("valid dimension"));
        let nf = n as f64;
        for r in [2.0, 2.0 + 1.0 / nf] {
            out.push(InequalitySpec::l1_gradient(n, r).expect("valid exponent"));
        }
    }
    out.push(InequalitySpec::sup_hessian(c.k0));
    out.push(InequalitySpec::gradient_interpolation(c.k1));
    out.push(InequalitySpec::sup_product(c.k0, c.k1));
    out.push(InequalitySpec::l4(c.k_l4));
    out.push(InequalitySpec::l3(c.k3));
    for n in 2..=3 {
        out.push(InequalitySpec::nash(n, c.k_nash).and_then(|s| s.vector()).expect("transferable"));
    }
    out.push(InequalitySpec::l3(c.k3).vector().expect("transferable"));
    out.push(InequalitySpec::l4(c.k_l4).vector().expect("transferable"));
    out
}

/// Registered inequality by name; the trilinear integral is also found here.
pub fn lookup(name: &str, c: &ConstantSet) -> Option<InequalitySpec> {
    registry(c)
        .into_iter()
        .chain(std::iter::once(InequalitySpec::trilinear(c.k3)))
        .find(|s| s.name == name)
}

/// `lhs <= K rhs (1 + tol)` on one sample, rejecting samples with boundary tails.
pub fn audit(ineq: &InequalitySpec, field: &Field, tol: f64) -> Result<BoundCertificate> {
    ineq.check_field(field)?;
    let peak = field.max_abs();
    let edge = field.boundary_max();
    if edge > TAIL_THRESHOLD * peak {
        return Err(LabError::RejectedSample(format!(
            "boundary magnitude {edge:.3e} exceeds {TAIL_THRESHOLD:e} of the peak {peak:.3e}"
        )));
    }
    let (lhs, rhs) = ineq.evaluate(field)?;
    Ok(BoundCertificate::compare(ineq.name.clone(), lhs, ineq.constant * rhs, ineq.constant, tol))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    /// Anisotropic Gaussian with random centre, widths and amplitude.
    Gaussian,
    /// Random band-limited field times a Gaussian window.
    Windowed,
    /// Sum of two to four signed Gaussians.
    Bumps,
}

/// Seeded corpus generator; sample `i` depends only on `(seed, i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub length: f64,
    /// Points per axis for n = 1, 2, 3.
    pub npts: [usize; 3],
    pub kinds: Vec<SampleKind>,
    pub tol: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            length: 16.0,
            npts: [256, 128, 64],
            kinds: vec![SampleKind::Gaussian, SampleKind::Windowed, SampleKind::Bumps],
            tol: DEFAULT_TOL,
        }
    }
}

impl CorpusSpec {
    pub fn grid(&self, n: usize) -> Result<GridSpec> {
        check_dim(n)?;
        GridSpec::new(n, self.npts[n - 1], self.length)
    }

    fn rng(&self, i: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64))
    }

    /// Sample `i` on `grid` with `components` components.
    pub fn sample(&self, grid: &GridSpec, components: usize, i: usize) -> Result<Field> {
        if self.kinds.is_empty() {
            return Err(LabError::EmptyCorpus);
        }
        let mut rng = self.rng(i);
        let n = grid.dim();
        let scale = self.length / 16.0;
        match self.kinds[i % self.kinds.len()] {
            SampleKind::Gaussian => {
                let params: Vec<GaussianParams> =
                    (0..components).map(|_| GaussianParams::random(n, scale, 1.0, &mut rng)).collect();
                Ok(gaussian_field(grid, &params, 1.0))
            }
            SampleKind::Bumps => {
                let count = rng.random_range(2..=4);
                let comps: Vec<Vec<GaussianParams>> = (0..components)
                    .map(|_| (0..count).map(|_| GaussianParams::random(n, scale, 0.8, &mut rng)).collect())
                    .collect();
                Ok(bumps_field(grid, &comps))
            }
            SampleKind::Windowed => {
                let base = random_smooth_field(grid, components, rng.random_range(0.8..1.6) / scale, &mut rng)?;
                let w = 1.3 * scale;
                let mut c = [0.0; 3];
                for ci in c.iter_mut().take(n) {
                    *ci = rng.random_range(-0.5..0.5) * scale;
                }
                let comps = base
                    .comps()
                    .iter()
                    .map(|comp| {
                        comp.iter()
                            .enumerate()
                            .map(|(idx, v)| {
                                let x = grid.coords(idx);
                                let r2: f64 = (0..n).map(|a| (x[a] - c[a]).powi(2)).sum();
                                v * (-r2 / (w * w)).exp()
                            })
                            .collect()
                    })
                    .collect();
                Field::new(grid.clone(), comps)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct GaussianParams {
    amp: f64,
    center: [f64; 3],
    width: [f64; 3],
}

impl GaussianParams {
    fn random(n: usize, scale: f64, width_factor: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut center = [0.0; 3];
        let mut width = [1.0; 3];
        for a in 0..n {
            center[a] = rng.random_range(-1.5..1.5) * scale;
            width[a] = rng.random_range(0.8..1.3) * scale * width_factor;
        }
        let amp = rng.random_range(0.2..5.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        Self { amp, center, width }
    }

    fn eval(&self, x: &[f64], dilation: f64) -> f64 {
        let e: f64 = x
            .iter()
            .enumerate()
            .map(|(a, xa)| ((dilation * xa - self.center[a]) / self.width[a]).powi(2))
            .sum();
        self.amp * (-e).exp()
    }
}

fn gaussian_field(grid: &GridSpec, params: &[GaussianParams], dilation: f64) -> Field {
    let n = grid.dim();
    let comps = params
        .iter()
        .map(|p| (0..grid.len()).map(|i| p.eval(&grid.coords(i)[..n], dilation)).collect())
        .collect();
    Field::new(grid.clone(), comps).expect("matching grid")
}

fn bumps_field(grid: &GridSpec, comps: &[Vec<GaussianParams>]) -> Field {
    let n = grid.dim();
    let values = comps
        .iter()
        .map(|ps| {
            (0..grid.len())
                .map(|i| {
                    let x = grid.coords(i);
                    ps.iter().map(|p| p.eval(&x[..n], 1.0)).sum()
                })
                .collect()
        })
        .collect();
    Field::new(grid.clone(), values).expect("matching grid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: usize,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub name: String,
    pub n: usize,
    pub constant: f64,
    pub requested: usize,
    pub rejected: usize,
    pub passed: usize,
    pub failures: Vec<usize>,
    /// Largest `lhs / rhs` without the constant.
    pub max_ratio: f64,
    pub records: Vec<SampleRecord>,
}

impl CorpusSummary {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Audit `count` corpus samples in parallel; rejected samples are counted, not failed.
pub fn corpus_audit(ineq: &InequalitySpec, corpus: &CorpusSpec, count: usize) -> Result<CorpusSummary> {
    if count == 0 {
        return Err(LabError::domain("corpus size must be at least 1"));
    }
    let grid = corpus.grid(ineq.n)?;
    let results: Vec<Result<Option<(f64, bool)>>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let field = corpus.sample(&grid, ineq.components, i)?;
            match audit(ineq, &field, corpus.tol) {
                Ok(cert) => Ok(Some((cert.ratio() * ineq.constant, cert.passed()))),
                Err(LabError::RejectedSample(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut summary = CorpusSummary {
        name: ineq.name.clone(),
        n: ineq.n,
        constant: ineq.constant,
        requested: count,
        rejected: 0,
        passed: 0,
        failures: Vec::new(),
        max_ratio: 0.0,
        records: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            None => summary.rejected += 1,
            Some((ratio, pass)) => {
                summary.max_ratio = summary.max_ratio.max(ratio);
                if pass {
                    summary.passed += 1;
                } else {
                    summary.failures.push(i);
                }
                summary.records.push(SampleRecord { sample_id: i, ratio, pass });
            }
        }
    }
    if summary.records.is_empty() {
        return Err(LabError::EmptyCorpus);
    }
    Ok(summary)
}

/// Reference field for the scaling audit: centred anisotropic Gaussians, one per component.
fn scaling_reference(grid: &GridSpec, components: usize, amp: f64, dilation: f64) -> Field {
    let n = grid.dim();
    let scale = grid.length() / 16.0;
    let params: Vec<GaussianParams> = (0..components)
        .map(|c| {
            let mut width = [1.0; 3];
            for (a, w) in width.iter_mut().enumerate().take(n) {
                *w = scale * (1.6 + 0.1 * ((a + 2 * c) % 4) as f64);
            }
            GaussianParams { amp: amp * [1.0, 0.7, 0.5][c], center: [0.0; 3], width }
        })
        .collect();
    gaussian_field(grid, &params, dilation)
}

/// Ratio invariance under `v -> c v` and `v(x) -> v(2x)`; the certificate's left side is the
/// largest relative change of the ratio and passes below `SCALING_TOL`.
pub fn scaling_audit(ineq: &InequalitySpec, corpus: &CorpusSpec) -> Result<BoundCertificate> {
    let grid = corpus.grid(ineq.n)?;
    let base = ineq.ratio(&scaling_reference(&grid, ineq.components, 1.0, 1.0))?;
    let mut worst: f64 = 0.0;
    for (amp, dil) in [(2.0, 1.0), (-3.0, 1.0), (1.0, 2.0), (0.5, 2.0)] {
        let r = ineq.ratio(&scaling_reference(&grid, ineq.components, amp, dil))?;
        worst = worst.max((r - base).abs() / base);
    }
    Ok(BoundCertificate::compare(format!("scaling-{}", ineq.name), worst, SCALING_TOL, 1.0, 0.0))
}
