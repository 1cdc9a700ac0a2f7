//! Flat TOML scenario files, one shape per command.
//!
//! Every key is optional and has a default; unknown keys are rejected. Coefficient
//! presets are inline tables tagged by `kind`, e.g. `b = { kind = "sine", amp = 1.0 }`.

use std::f64::consts::PI;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::advdiff::{APreset, BPreset, FPreset, U0Preset};
use crate::error::{LabError, Result};
use crate::inequality::{self, ConstantSet, SampleKind, DEFAULT_TOL};
use crate::navier_stokes::DEFAULT_M_MAX;

/// A validation failure tied to the key that caused it.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyError {
    pub key: &'static str,
    pub message: String,
}

fn key_err(key: &'static str, message: impl Into<String>) -> KeyError {
    KeyError { key, message: message.into() }
}

type Checked = std::result::Result<(), KeyError>;

/// Semantic checks run after parsing.
pub trait Validate {
    fn validate(&self) -> Checked;
}

/// Parse and validate a scenario file. Syntax and type errors carry the line of the
/// offending token; semantic errors carry the line where the key is set, if any.
pub fn parse_config<T: DeserializeOwned + Validate>(text: &str) -> Result<T> {
    let cfg: T = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        LabError::config(line, e.message().trim().to_string())
    })?;
    cfg.validate().map_err(|e| LabError::config(key_line(text, e.key), format!("{}: {}", e.key, e.message)))?;
    Ok(cfg)
}

/// Run the semantic checks on an already built config.
pub fn check<T: Validate>(cfg: &T) -> Result<()> {
    cfg.validate().map_err(|e| LabError::config(None, format!("{}: {}", e.key, e.message)))
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn positive(key: &'static str, v: f64) -> Checked {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(key_err(key, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(key: &'static str, v: f64) -> Checked {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(key_err(key, format!("must be nonnegative and finite, got {v}")))
    }
}

fn power_of_two(key: &'static str, v: usize) -> Checked {
    if v >= 8 && v.is_power_of_two() {
        Ok(())
    } else {
        Err(key_err(key, format!("must be a power of two >= 8, got {v}")))
    }
}

fn dimension(key: &'static str, n: usize) -> Checked {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(key_err(key, format!("dimension must be 1, 2 or 3, got {n}")))
    }
}

/// Names must be known and listed at most once.
fn certificate_set(list: &[String], known: &[&str]) -> Checked {
    for (i, name) in list.iter().enumerate() {
        if !known.contains(&name.as_str()) {
            return Err(key_err("certificates", format!("unknown certificate `{name}`, expected one of {known:?}")));
        }
        if list[..i].contains(name) {
            return Err(key_err("certificates", format!("certificate `{name}` listed twice")));
        }
    }
    Ok(())
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NsPreset {
    /// Planar `(sin x cos y, -cos x sin y)`.
    TaylorGreen,
    #[serde(rename = "random-2d")]
    Random2d,
    #[serde(rename = "random-3d-small")]
    Random3dSmall,
    Zero,
}

pub const NS_CERTIFICATES: [&str; 4] = ["energy", "tstar", "gradient-onset", "q-estimate"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NsDecayConfig {
    pub id: String,
    pub preset: NsPreset,
    /// Dimension of the zero preset; the other presets fix their own.
    pub dim: usize,
    pub npts: usize,
    pub length: f64,
    pub nu: f64,
    /// `|u0|_2` of the random presets.
    pub l2: f64,
    /// Spectral envelope width of the random presets.
    pub kwidth: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Reference time of the heat-deviation monitor.
    pub checkpoint: f64,
    /// Derivative order of the decay monitor.
    pub m: usize,
    pub snapshot_every: usize,
    pub seed: u64,
    pub energy_tol: f64,
    pub q_gaps: Vec<f64>,
    pub q_tol: f64,
    pub certificates: Vec<String>,
}

impl Default for NsDecayConfig {
    fn default() -> Self {
        Self {
            id: "ns-decay".into(),
            preset: NsPreset::TaylorGreen,
            dim: 2,
            npts: 64,
            length: 2.0 * PI,
            nu: 0.1,
            l2: 1.0,
            kwidth: 2.0,
            dt: 1e-3,
            t_final: 1.0,
            checkpoint: 0.0,
            m: 1,
            snapshot_every: 10,
            seed: 0,
            energy_tol: 1e-6,
            q_gaps: vec![0.1, 1.0],
            q_tol: 5e-2,
            certificates: names(&NS_CERTIFICATES),
        }
    }
}

impl NsDecayConfig {
    pub fn dim(&self) -> usize {
        match self.preset {
            NsPreset::TaylorGreen | NsPreset::Random2d => 2,
            NsPreset::Random3dSmall => 3,
            NsPreset::Zero => self.dim,
        }
    }
}

impl Validate for NsDecayConfig {
    fn validate(&self) -> Checked {
        if !(2..=3).contains(&self.dim()) {
            return Err(key_err("dim", format!("the flow solver needs n = 2 or 3, got {}", self.dim())));
        }
        power_of_two("npts", self.npts)?;
        positive("length", self.length)?;
        positive("nu", self.nu)?;
        nonnegative("l2", self.l2)?;
        positive("kwidth", self.kwidth)?;
        positive("dt", self.dt)?;
        positive("t_final", self.t_final)?;
        nonnegative("checkpoint", self.checkpoint)?;
        if self.checkpoint >= self.t_final {
            return Err(key_err("checkpoint", "must be earlier than t_final"));
        }
        if !(1..=DEFAULT_M_MAX).contains(&self.m) {
            return Err(key_err("m", format!("must lie in 1..={DEFAULT_M_MAX}, got {}", self.m)));
        }
        if self.snapshot_every == 0 {
            return Err(key_err("snapshot_every", "must be at least 1"));
        }
        positive("energy_tol", self.energy_tol)?;
        self.q_gaps.iter().try_for_each(|&g| positive("q_gaps", g))?;
        nonnegative("q_tol", self.q_tol)?;
        certificate_set(&self.certificates, &NS_CERTIFICATES)
    }
}

pub const HEAT_CERTIFICATES: [&str; 2] = ["decay-slope", "smoothing"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatCheckConfig {
    pub id: String,
    pub dims: Vec<usize>,
    /// Points per axis, one entry per dimension in `dims`.
    pub npts: Vec<usize>,
    pub nu: f64,
    pub t_final: f64,
    /// Box side is `box_factor * sqrt(nu * t_final)`.
    pub box_factor: f64,
    /// Dipole width in grid spacings.
    pub sigma_cells: f64,
    /// Fit window as fractions of `t_final`.
    pub window: [f64; 2],
    pub per_decade: usize,
    pub slope_tol: f64,
    /// Exponents `r` of the smoothing check (1 or 2).
    pub smoothing_r: Vec<f64>,
    /// Smoothing time as a fraction of `t_final`.
    pub smoothing_tau: f64,
    pub smoothing_tol: f64,
    pub seed: u64,
    pub certificates: Vec<String>,
}

impl Default for HeatCheckConfig {
    fn default() -> Self {
        Self {
            id: "heat-check".into(),
            dims: vec![1, 2, 3],
            npts: vec![4096, 512, 128],
            nu: 1.0,
            t_final: 1.0,
            box_factor: 40.0,
            sigma_cells: 0.5,
            window: [0.1, 1.0],
            per_decade: 10,
            slope_tol: 0.1,
            smoothing_r: vec![1.0, 2.0],
            smoothing_tau: 0.1,
            smoothing_tol: 1e-9,
            seed: 0,
            certificates: names(&HEAT_CERTIFICATES),
        }
    }
}

impl Validate for HeatCheckConfig {
    fn validate(&self) -> Checked {
        if self.dims.is_empty() {
            return Err(key_err("dims", "at least one dimension is required"));
        }
        self.dims.iter().try_for_each(|&n| dimension("dims", n))?;
        if self.npts.len() != self.dims.len() {
            return Err(key_err("npts", format!("needs {} entries, one per dimension", self.dims.len())));
        }
        self.npts.iter().try_for_each(|&n| power_of_two("npts", n))?;
        positive("nu", self.nu)?;
        positive("t_final", self.t_final)?;
        positive("box_factor", self.box_factor)?;
        positive("sigma_cells", self.sigma_cells)?;
        let [w0, w1] = self.window;
        if !(w0 > 0.0 && w0 < w1 && w1.is_finite()) {
            return Err(key_err("window", format!("needs 0 < start < end, got [{w0}, {w1}]")));
        }
        if self.per_decade == 0 {
            return Err(key_err("per_decade", "must be at least 1"));
        }
        positive("slope_tol", self.slope_tol)?;
        if let Some(r) = self.smoothing_r.iter().find(|&&r| r != 1.0 && r != 2.0) {
            return Err(key_err("smoothing_r", format!("only r = 1 and r = 2 have tabulated constants, got {r}")));
        }
        positive("smoothing_tau", self.smoothing_tau)?;
        nonnegative("smoothing_tol", self.smoothing_tol)?;
        certificate_set(&self.certificates, &HEAT_CERTIFICATES)
    }
}

pub const ADVDIFF_CERTIFICATES: [&str; 5] = ["mass", "lp-growth", "linfty", "energy", "growth-episode"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdvDiffConfig {
    pub id: String,
    pub dim: usize,
    pub npts: usize,
    pub length: f64,
    pub kappa: f64,
    pub p0: f64,
    pub b: BPreset,
    pub f: FPreset,
    pub a: APreset,
    pub u0: U0Preset,
    pub t_final: f64,
    pub cfl: f64,
    pub max_steps: usize,
    pub sample_every: usize,
    pub track_p: Vec<f64>,
    /// Exponents of the energy-identity and growth-episode audits.
    pub audit_q: Vec<f64>,
    /// Exponent of the growth and sup-norm bounds.
    pub bound_p: f64,
    pub tol: f64,
    pub energy_tol: f64,
    pub mass_tol: f64,
    pub episode_tol: f64,
    /// Nash constant of the growth-episode estimate.
    pub k_nash: f64,
    /// Reseeds every random preset when set.
    pub seed: Option<u64>,
    pub certificates: Vec<String>,
}

impl Default for AdvDiffConfig {
    fn default() -> Self {
        Self {
            id: "advdiff-run".into(),
            dim: 1,
            npts: 256,
            length: 10.0,
            kappa: 0.0,
            p0: 1.0,
            b: BPreset::Sine { amp: 1.0 },
            f: FPreset::Zero,
            a: APreset::Identity { mu0: 1.0 },
            u0: U0Preset::Gaussian { amp: 1.0, width: 1.0 },
            t_final: 1.0,
            cfl: 0.5,
            max_steps: 5_000_000,
            sample_every: 1,
            track_p: vec![1.0, 2.0],
            audit_q: Vec::new(),
            bound_p: 1.0,
            tol: 1e-9,
            energy_tol: 1e-2,
            mass_tol: 1e-10,
            episode_tol: 1e-3,
            k_nash: 1.0,
            seed: None,
            certificates: names(&["mass", "lp-growth", "linfty"]),
        }
    }
}

impl Validate for AdvDiffConfig {
    fn validate(&self) -> Checked {
        dimension("dim", self.dim)?;
        power_of_two("npts", self.npts)?;
        positive("length", self.length)?;
        nonnegative("kappa", self.kappa)?;
        if !(self.p0 >= 1.0 && self.p0.is_finite()) {
            return Err(key_err("p0", format!("must be at least 1, got {}", self.p0)));
        }
        positive("t_final", self.t_final)?;
        positive("cfl", self.cfl)?;
        if self.max_steps == 0 {
            return Err(key_err("max_steps", "must be at least 1"));
        }
        if self.sample_every == 0 {
            return Err(key_err("sample_every", "must be at least 1"));
        }
        if let Some(p) = self.track_p.iter().find(|&&p| !(p >= self.p0 && p.is_finite())) {
            return Err(key_err("track_p", format!("exponents must be finite and at least p0, got {p}")));
        }
        if !self.track_p.contains(&1.0) && self.certificates.iter().any(|c| c == "mass") {
            return Err(key_err("track_p", "the mass certificate needs p = 1 tracked"));
        }
        let wants_bound = self.certificates.iter().any(|c| c == "lp-growth" || c == "linfty");
        if wants_bound && !self.track_p.contains(&self.bound_p) {
            return Err(key_err("bound_p", format!("p = {} is not in track_p", self.bound_p)));
        }
        let nk = self.dim as f64 * self.kappa;
        if self.certificates.iter().any(|c| c == "linfty") && !(self.bound_p > nk) {
            return Err(key_err("bound_p", format!("the sup-norm bound needs p > n kappa = {nk}")));
        }
        let wants_q = self.certificates.iter().any(|c| c == "energy" || c == "growth-episode");
        if wants_q && self.audit_q.is_empty() {
            return Err(key_err("audit_q", "the energy and growth-episode certificates need audit exponents"));
        }
        if self.certificates.iter().any(|c| c == "growth-episode") {
            for &q in &self.audit_q {
                if !self.track_p.contains(&q) || !self.track_p.contains(&(0.5 * q)) {
                    return Err(key_err("audit_q", format!("growth episodes at q = {q} need q and q/2 in track_p")));
                }
                if !(0.5 * q > nk) {
                    return Err(key_err("audit_q", format!("growth episodes need q/2 > n kappa, got q = {q}")));
                }
            }
        }
        nonnegative("tol", self.tol)?;
        positive("energy_tol", self.energy_tol)?;
        nonnegative("mass_tol", self.mass_tol)?;
        nonnegative("episode_tol", self.episode_tol)?;
        positive("k_nash", self.k_nash)?;
        certificate_set(&self.certificates, &ADVDIFF_CERTIFICATES)
    }
}

pub const SCAN_CERTIFICATES: [&str; 2] = ["soundness", "mass"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseScanConfig {
    pub id: String,
    pub dim: usize,
    pub npts: usize,
    pub length: f64,
    pub horizon: f64,
    /// Compressive drift `b = -b_amp sin(2 pi x / L)`.
    pub b_amp: f64,
    pub width: f64,
    pub kappas: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Reaction-equation rows run at the same amplitudes.
    pub reaction_kappas: Vec<f64>,
    pub cfl: f64,
    pub max_steps: usize,
    pub mass_tol: f64,
    pub seed: u64,
    pub certificates: Vec<String>,
}

impl Default for PhaseScanConfig {
    fn default() -> Self {
        Self {
            id: "phase-scan".into(),
            dim: 1,
            npts: 256,
            length: 20.0,
            horizon: 50.0,
            b_amp: 1.0,
            width: 1.0,
            kappas: vec![0.5, 1.0, 2.0],
            amplitudes: vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4],
            reaction_kappas: Vec::new(),
            cfl: 0.5,
            max_steps: 5_000_000,
            mass_tol: 1e-10,
            seed: 0,
            certificates: names(&SCAN_CERTIFICATES),
        }
    }
}

impl Validate for PhaseScanConfig {
    fn validate(&self) -> Checked {
        dimension("dim", self.dim)?;
        power_of_two("npts", self.npts)?;
        positive("length", self.length)?;
        positive("horizon", self.horizon)?;
        nonnegative("b_amp", self.b_amp)?;
        positive("width", self.width)?;
        if self.kappas.is_empty() && self.reaction_kappas.is_empty() {
            return Err(key_err("kappas", "the scan needs at least one row"));
        }
        self.kappas.iter().try_for_each(|&k| positive("kappas", k))?;
        self.reaction_kappas.iter().try_for_each(|&k| positive("reaction_kappas", k))?;
        if self.amplitudes.is_empty() {
            return Err(key_err("amplitudes", "the scan needs at least one amplitude"));
        }
        self.amplitudes.iter().try_for_each(|&a| nonnegative("amplitudes", a))?;
        positive("cfl", self.cfl)?;
        if self.max_steps == 0 {
            return Err(key_err("max_steps", "must be at least 1"));
        }
        nonnegative("mass_tol", self.mass_tol)?;
        certificate_set(&self.certificates, &SCAN_CERTIFICATES)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IneqSuiteConfig {
    pub id: String,
    pub seed: u64,
    /// Samples per inequality.
    pub count: usize,
    pub tol: f64,
    pub length: f64,
    pub npts: [usize; 3],
    pub kinds: Vec<SampleKind>,
    /// Inequalities to audit by name; each one is a certificate of the report.
    pub inequalities: Vec<String>,
    /// Also run the dilation/amplitude invariance audit.
    pub scaling: bool,
    pub k0: f64,
    pub k1: f64,
    pub k3: f64,
    pub k_nash: f64,
    pub k_l4: f64,
}

impl Default for IneqSuiteConfig {
    fn default() -> Self {
        let c = ConstantSet::default();
        let mut all: Vec<String> = inequality::registry(&c).into_iter().map(|s| s.name).collect();
        all.push("trilinear-gradient".into());
        Self {
            id: "ineq-suite".into(),
            seed: 0,
            count: 100,
            tol: DEFAULT_TOL,
            length: 16.0,
            npts: [256, 128, 64],
            kinds: vec![SampleKind::Gaussian, SampleKind::Windowed, SampleKind::Bumps],
            inequalities: all,
            scaling: false,
            k0: c.k0,
            k1: c.k1,
            k3: c.k3,
            k_nash: c.k_nash,
            k_l4: c.k_l4,
        }
    }
}

impl IneqSuiteConfig {
    pub fn constants(&self) -> ConstantSet {
        ConstantSet { k0: self.k0, k1: self.k1, k3: self.k3, k_nash: self.k_nash, k_l4: self.k_l4 }
    }
}

impl Validate for IneqSuiteConfig {
    fn validate(&self) -> Checked {
        if self.count == 0 {
            return Err(key_err("count", "must be at least 1"));
        }
        nonnegative("tol", self.tol)?;
        positive("length", self.length)?;
        self.npts.iter().try_for_each(|&n| power_of_two("npts", n))?;
        if self.kinds.is_empty() {
            return Err(key_err("kinds", "at least one sample kind is required"));
        }
        if self.inequalities.is_empty() {
            return Err(key_err("inequalities", "at least one inequality is required"));
        }
        for key in [("k0", self.k0), ("k1", self.k1), ("k3", self.k3), ("k_nash", self.k_nash), ("k_l4", self.k_l4)] {
            positive(key.0, key.1)?;
        }
        let c = self.constants();
        for (i, name) in self.inequalities.iter().enumerate() {
            if inequality::lookup(name, &c).is_none() {
                return Err(key_err("inequalities", format!("unknown inequality `{name}`")));
            }
            if self.inequalities[..i].contains(name) {
                return Err(key_err("inequalities", format!("inequality `{name}` listed twice")));
            }
        }
        Ok(())
    }
}

pub const MOSER_CERTIFICATES: [&str; 2] = ["c-bound", "telescoping"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoserTableConfig {
    pub id: String,
    /// Parameter sets are the product `n x kappa x p`; sets with `p <= n kappa` are skipped.
    pub n: Vec<usize>,
    pub kappa: Vec<f64>,
    pub p: Vec<f64>,
    pub k_nash: f64,
    pub m_max: usize,
    pub u0_norm: f64,
    pub bmu: f64,
    pub up: f64,
    pub seed: u64,
    pub certificates: Vec<String>,
}

impl Default for MoserTableConfig {
    fn default() -> Self {
        Self {
            id: "moser-table".into(),
            n: vec![1],
            kappa: vec![0.0],
            p: vec![1.0],
            k_nash: 1.0,
            m_max: 10,
            u0_norm: 1.0,
            bmu: 1.0,
            up: 1.0,
            seed: 0,
            certificates: names(&MOSER_CERTIFICATES),
        }
    }
}

impl Validate for MoserTableConfig {
    fn validate(&self) -> Checked {
        if self.n.is_empty() || self.kappa.is_empty() || self.p.is_empty() {
            return Err(key_err("n", "n, kappa and p each need at least one value"));
        }
        self.n.iter().try_for_each(|&n| dimension("n", n))?;
        self.kappa.iter().try_for_each(|&k| nonnegative("kappa", k))?;
        if let Some(p) = self.p.iter().find(|&&p| !(p >= 1.0 && p.is_finite())) {
            return Err(key_err("p", format!("exponents must be at least 1, got {p}")));
        }
        positive("k_nash", self.k_nash)?;
        if self.m_max == 0 {
            return Err(key_err("m_max", "must be at least 1"));
        }
        nonnegative("u0_norm", self.u0_norm)?;
        nonnegative("bmu", self.bmu)?;
        nonnegative("up", self.up)?;
        certificate_set(&self.certificates, &MOSER_CERTIFICATES)
    }
}
