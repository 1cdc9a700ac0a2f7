//! Batch orchestration: one scenario file in, certificates and series files out.
//!
//! Each command writes `report.json` (schema `v1`), CSV series with a header row and
//! 17-significant-digit floats, optional SVG charts, and `timing.json` with the
//! wall-clock time. Everything except `timing.json` is a pure function of the
//! scenario file and the seed.

mod config;
mod emit;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    check, parse_config, AdvDiffConfig, HeatCheckConfig, IneqSuiteConfig, MoserTableConfig, NsDecayConfig,
    NsPreset, PhaseScanConfig, Validate, ADVDIFF_CERTIFICATES, HEAT_CERTIFICATES, MOSER_CERTIFICATES,
    NS_CERTIFICATES, SCAN_CERTIFICATES,
};
pub use emit::{format_float, line_chart, Cell, Line, Scale, Table};

use crate::advdiff::{
    energy_identity_audit, fujita_contrast_run, global_existence_verdict, growth_episode_samples,
    linfty_bound_certificate, lp_growth_certificate, mass_law_certificate, problem_from_presets, APreset,
    AdvDiffState, BPreset, ContrastMode, ContrastSetup, GlobalVerdict, SolverOptions, U0Preset,
};
use crate::certificate::{BoundCertificate, CertStatus};
use crate::error::{LabError, Result};
use crate::grid::{write_field, Field, GridSpec, NormSeries};
use crate::heat::{
    diffusive_box_length, fit_loglog_slope, gaussian_dipole, geometric_times, heat_decay_series,
    smoothing_certificate, smoothing_constant, DecayNorm,
};
use crate::inequality::{self, corpus_audit, scaling_audit, CorpusSpec};
use crate::moser::{growth_episode_certificate, linfty_constant, moser_table, telescoping_check, IterationParams};
use crate::navier_stokes::{
    decay_monitor, energy_certificate, gradient_monotonicity_onset, q_estimate_certificate, random_divergence_free,
    taylor_green, tstar_bound, tstar_coefficient_is_below_bound, NSState, NsOptions, DEFAULT_M_MAX,
    TSTAR_COEFFICIENT_BOUND,
};

pub const SCHEMA: &str = "v1";
pub const EXIT_PASS: i32 = 0;
pub const EXIT_CERTIFICATE_FAILURE: i32 = 2;
pub const EXIT_SOLVER_FAILURE: i32 = 3;
pub const EXIT_CONFIG_ERROR: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    NsDecay,
    HeatCheck,
    AdvdiffRun,
    PhaseScan,
    IneqSuite,
    MoserTable,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::NsDecay,
        Command::HeatCheck,
        Command::AdvdiffRun,
        Command::PhaseScan,
        Command::IneqSuite,
        Command::MoserTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::NsDecay => "ns-decay",
            Command::HeatCheck => "heat-check",
            Command::AdvdiffRun => "advdiff-run",
            Command::PhaseScan => "phase-scan",
            Command::IneqSuite => "ineq-suite",
            Command::MoserTable => "moser-table",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Pass,
    CertificateFailure,
    SolverFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Pass => EXIT_PASS,
            RunStatus::CertificateFailure => EXIT_CERTIFICATE_FAILURE,
            RunStatus::SolverFailure => EXIT_SOLVER_FAILURE,
        }
    }
}

/// Process exit code for a runner error.
pub fn exit_code_of(err: &LabError) -> i32 {
    match err {
        LabError::Config { .. } => EXIT_CONFIG_ERROR,
        _ => EXIT_SOLVER_FAILURE,
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Output directory; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Worker threads for scans and corpora; `None` uses one per core.
    pub workers: Option<usize>,
    pub svg: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps: usize,
    pub rejections: usize,
    pub t_end: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellVerdict {
    /// Bounded through the horizon with the sufficient conditions met.
    Global,
    /// Bounded through the horizon without a sufficient condition.
    HorizonReached,
    BlowUp,
    /// The cell could not be run; see its error.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub mode: ContrastMode,
    pub kappa: f64,
    pub amplitude: f64,
    pub verdict: CellVerdict,
    /// Sufficient-region overlay; always `unknown` for reaction rows.
    pub sufficient: GlobalVerdict,
    pub condition: Option<(f64, f64)>,
    pub t_end: f64,
    pub max_sup: f64,
    pub steps: usize,
    pub mass_law: Option<CertStatus>,
    pub error: Option<String>,
}

impl ScanCell {
    /// Inside the sufficient region but not certified bounded.
    pub fn violates_soundness(&self) -> bool {
        self.sufficient.is_global() && self.verdict != CellVerdict::Global
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub command: Command,
    pub scenario: String,
    pub seed: u64,
    pub status: RunStatus,
    pub verdicts: BTreeMap<String, String>,
    /// One entry per configured certificate, in configuration order.
    pub certificates: Vec<BoundCertificate>,
    /// Files written next to the report.
    pub series: Vec<String>,
    pub stats: SolverStats,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<ScanCell>,
    /// Kept out of `report.json` so the report is reproducible; see `timing.json`.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl RunReport {
    fn new(command: Command, scenario: &str, seed: u64) -> Self {
        Self {
            schema: SCHEMA.into(),
            command,
            scenario: scenario.into(),
            seed,
            status: RunStatus::Pass,
            verdicts: BTreeMap::new(),
            certificates: Vec::new(),
            series: Vec::new(),
            stats: SolverStats::default(),
            notes: Vec::new(),
            cells: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    pub fn command_name(&self) -> &'static str {
        self.command.name()
    }

    pub fn certificate(&self, name: &str) -> Option<&BoundCertificate> {
        self.certificates.iter().find(|c| c.name == name)
    }

    fn verdict(&mut self, key: impl Into<String>, value: impl ToString) {
        self.verdicts.insert(key.into(), value.to_string());
    }

    fn number(&mut self, key: impl Into<String>, value: f64) {
        self.verdicts.insert(key.into(), format_float(value));
    }

    /// Record a certificate under its configured name; evaluation errors become failures.
    fn add(&mut self, name: &str, cert: Result<BoundCertificate>) {
        let cert = match cert {
            Ok(mut c) => {
                c.name = name.to_string();
                c
            }
            Err(e) => {
                self.notes.push(format!("{name}: {e}"));
                BoundCertificate::compare(name, f64::NAN, 0.0, 1.0, 0.0)
            }
        };
        self.certificates.push(cert);
    }

    fn settle(&mut self, solver_failed: bool) {
        self.status = if solver_failed {
            RunStatus::SolverFailure
        } else if self.certificates.iter().any(|c| c.status == CertStatus::Fail) {
            RunStatus::CertificateFailure
        } else {
            RunStatus::Pass
        };
    }
}

/// Collects output files; writes only when a directory was given.
struct Outputs {
    dir: Option<PathBuf>,
    svg: bool,
    files: Vec<String>,
    start: Instant,
}

impl Outputs {
    fn new(opts: &RunOptions) -> Result<Self> {
        if let Some(dir) = &opts.out_dir {
            fs::create_dir_all(dir)?;
        }
        Ok(Self { dir: opts.out_dir.clone(), svg: opts.svg, files: Vec::new(), start: Instant::now() })
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_deref().map(|d| d.join(name))
    }

    fn text(&mut self, name: &str, contents: impl FnOnce() -> String) -> Result<()> {
        if let Some(p) = self.path(name) {
            fs::write(p, contents())?;
        }
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.text(name, || table.to_csv())
    }

    fn chart(&mut self, name: &str, contents: impl FnOnce() -> String) -> Result<()> {
        if self.svg {
            self.text(name, contents)?;
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let body = to_json(value)?;
        self.text(name, || body)
    }

    fn field(&mut self, name: &str, field: &Field) -> Result<()> {
        if let Some(p) = self.path(name) {
            write_field(field, std::io::BufWriter::new(fs::File::create(p)?))?;
        }
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(self, mut report: RunReport) -> Result<RunReport> {
        report.series = self.files;
        report.wall_clock_s = self.start.elapsed().as_secs_f64();
        if let Some(dir) = &self.dir {
            fs::write(dir.join("report.json"), to_json(&report)?)?;
            let timing = serde_json::json!({ "schema": SCHEMA, "wall_clock_s": report.wall_clock_s });
            fs::write(dir.join("timing.json"), to_json(&timing)?)?;
        }
        Ok(report)
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| LabError::InvalidField(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn as_config(e: LabError) -> LabError {
    match e {
        LabError::Config { .. } | LabError::Io(_) => e,
        other => LabError::config(None, other.to_string()),
    }
}

fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| LabError::config(None, format!("worker pool: {e}")))
}

fn wants(list: &[String], name: &str) -> bool {
    list.iter().any(|c| c == name)
}

/// Parse `text` as the scenario file of `command` and run it.
pub fn run_command(command: Command, text: &str, opts: &RunOptions) -> Result<RunReport> {
    match command {
        Command::NsDecay => run_ns_decay(&parse_config(text)?, opts),
        Command::HeatCheck => run_heat_check(&parse_config(text)?, opts),
        Command::AdvdiffRun => run_advdiff(&parse_config(text)?, opts),
        Command::PhaseScan => run_phase_scan(&parse_config(text)?, opts),
        Command::IneqSuite => run_ineq_suite(&parse_config(text)?, opts),
        Command::MoserTable => run_moser_table(&parse_config(text)?, opts),
    }
}

/// Default scenario file of `command`, with every key spelled out.
pub fn default_config(command: Command) -> Result<String> {
    fn render<T: Serialize>(cfg: &T) -> Result<String> {
        toml::to_string(cfg).map_err(|e| LabError::config(None, e.to_string()))
    }
    match command {
        Command::NsDecay => render(&NsDecayConfig::default()),
        Command::HeatCheck => render(&HeatCheckConfig::default()),
        Command::AdvdiffRun => render(&AdvDiffConfig::default()),
        Command::PhaseScan => render(&PhaseScanConfig::default()),
        Command::IneqSuite => render(&IneqSuiteConfig::default()),
        Command::MoserTable => render(&MoserTableConfig::default()),
    }
}

/// Read a scenario file from disk and run it.
pub fn run_file(command: Command, path: &Path, opts: &RunOptions) -> Result<RunReport> {
    let text = fs::read_to_string(path)
        .map_err(|e| LabError::config(None, format!("cannot read {}: {e}", path.display())))?;
    run_command(command, &text, opts)
}

fn series_points(s: &NormSeries) -> Vec<(f64, f64)> {
    s.iter().collect()
}

pub fn run_ns_decay(cfg: &NsDecayConfig, opts: &RunOptions) -> Result<RunReport> {
    check(cfg)?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let mut out = Outputs::new(opts)?;
    let mut report = RunReport::new(Command::NsDecay, &cfg.id, seed);

    let n = cfg.dim();
    let grid = GridSpec::new(n, cfg.npts, cfg.length).map_err(as_config)?;
    let u0 = match cfg.preset {
        NsPreset::TaylorGreen => taylor_green(&grid),
        NsPreset::Random2d | NsPreset::Random3dSmall => {
            random_divergence_free(&grid, cfg.kwidth, cfg.l2, &mut ChaCha8Rng::seed_from_u64(seed))
        }
        NsPreset::Zero => Field::zeros(&grid, n),
    }
    .map_err(as_config)?;
    let ns_opts = NsOptions { m_max: DEFAULT_M_MAX, snapshot_every: cfg.snapshot_every, ..Default::default() };
    let mut state = NSState::new(&u0, cfg.nu, ns_opts).map_err(as_config)?;

    let mut failure = None;
    if cfg.checkpoint > 0.0 {
        failure = state.run_until(cfg.checkpoint, cfg.dt).err();
    }
    let checkpoint = state.checkpoint();
    if failure.is_none() {
        failure = state.run_until(cfg.t_final, cfg.dt).err();
    }
    if let Some(e) = &failure {
        report.notes.push(format!("solver stopped at t = {}: {e}", state.t()));
    }

    let u0_l2 = state.history().energy.values[0].sqrt();
    let tstar = tstar_bound(cfg.nu, u0_l2)?;
    let onset = gradient_monotonicity_onset(&state);
    let max_defect = state.energy_defects().into_iter().map(|(_, d)| d.abs()).fold(0.0, f64::max);
    report.number("u0-l2", u0_l2);
    report.number("tstar-bound", tstar);
    report.verdict("gradient-onset", onset.map(format_float).unwrap_or_else(|| "none".into()));
    report.number("energy-max-defect", max_defect);

    for name in &cfg.certificates {
        let cert = match name.as_str() {
            "energy" => energy_certificate(&state, cfg.energy_tol),
            "tstar" => Ok(tstar_certificate(cfg.nu, u0_l2, tstar)),
            "gradient-onset" => Ok(onset_certificate(onset, tstar, state.t())),
            "q-estimate" if n == 3 => {
                let end = state.velocity();
                let certs: Result<Vec<BoundCertificate>> = cfg
                    .q_gaps
                    .iter()
                    .flat_map(|&g| [(&u0, g), (&end, g)])
                    .map(|(u, g)| q_estimate_certificate(u, cfg.nu, g, cfg.q_tol))
                    .collect();
                certs.map(|c| BoundCertificate::aggregate(name.as_str(), &c))
            }
            "q-estimate" => {
                report.notes.push("q-estimate: the heat estimate of the nonlinearity is three-dimensional".into());
                Ok(BoundCertificate::indeterminate(name.as_str(), crate::navier_stokes::q_estimate_constant(), cfg.q_tol))
            }
            _ => unreachable!("validated certificate name"),
        };
        report.add(name, cert);
    }

    let h = state.history();
    let mut header = vec!["t".to_string(), "energy".into(), "dissipation".into()];
    header.extend((1..=h.dm.len()).map(|m| format!("d{m}_l2")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new(&header_refs);
    for (k, &t) in h.energy.times.iter().enumerate() {
        let mut row: Vec<Cell> = vec![t.into(), h.energy.values[k].into(), h.dissipation.values[k].into()];
        row.extend(h.dm.iter().map(|s| Cell::from(s.values[k])));
        table.push(row);
    }
    out.csv("history.csv", &table)?;
    out.chart("history.svg", || {
        let lines = vec![Line::new("energy", series_points(&h.energy)), Line::new("|Du|", series_points(h.grad()))];
        line_chart(&cfg.id, "t", "norm", &lines, Scale::Linear, Scale::Log)
    })?;

    match decay_monitor(&state, &checkpoint, cfg.m) {
        Ok((weighted, deviation)) => {
            let mut table = Table::new(&["t", "weighted", "heat_deviation"]);
            for (k, &t) in weighted.times.iter().enumerate() {
                table.push(vec![t.into(), weighted.values[k].into(), deviation.values[k].into()]);
            }
            let worst = deviation.values.iter().copied().fold(0.0, f64::max);
            report.number("heat-deviation-max", worst);
            out.csv("decay_monitor.csv", &table)?;
            out.chart("decay_monitor.svg", || {
                let lines = vec![
                    Line::new("weighted", series_points(&weighted)),
                    Line::new("heat deviation", series_points(&deviation)),
                ];
                line_chart(&cfg.id, "t", "weighted norm", &lines, Scale::Log, Scale::Log)
            })?;
        }
        Err(e) => report.notes.push(format!("decay monitor: {e}")),
    }

    report.stats = SolverStats { steps: state.steps(), rejections: 0, t_end: state.t() };
    report.settle(failure.is_some());
    out.finish(report)
}

/// `K3^12 / 2 nu^{-5} |u0|^4 < 0.000753026 nu^{-5} |u0|^4`, with the coefficient
/// comparison done in exact arithmetic. Zero data is a degenerate pass.
fn tstar_certificate(nu: f64, u0_l2: f64, tstar: f64) -> BoundCertificate {
    let rhs = TSTAR_COEFFICIENT_BOUND * nu.powi(-5) * u0_l2.powi(4);
    let mut c = BoundCertificate::compare("tstar", tstar, rhs, TSTAR_COEFFICIENT_BOUND, 0.0);
    let strict = tstar_coefficient_is_below_bound() && (tstar < rhs || u0_l2 == 0.0);
    c.status = if strict { CertStatus::Pass } else { CertStatus::Fail };
    c
}

/// Measured onset of monotone `|Du|` decrease against the bound. A run that ends before
/// the bound with `|Du|` still rising is inconclusive.
fn onset_certificate(onset: Option<f64>, tstar: f64, t_end: f64) -> BoundCertificate {
    match onset {
        Some(t) => BoundCertificate::compare("gradient-onset", t, tstar, 1.0, 0.0),
        None if t_end < tstar => BoundCertificate::indeterminate("gradient-onset", 1.0, 0.0),
        None => BoundCertificate::compare("gradient-onset", t_end, tstar, 1.0, 0.0),
    }
}

pub fn run_heat_check(cfg: &HeatCheckConfig, opts: &RunOptions) -> Result<RunReport> {
    check(cfg)?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let mut out = Outputs::new(opts)?;
    let mut report = RunReport::new(Command::HeatCheck, &cfg.id, seed);
    let [w0, w1] = cfg.window;
    let (t0, t1) = (w0 * cfg.t_final, w1 * cfg.t_final);
    let times = geometric_times(t0, t1, cfg.per_decade);

    let mut slopes = Vec::new();
    let mut smoothing = Vec::new();
    let mut table = Table::new(&["n", "t", "l2"]);
    let mut lines = Vec::new();
    for (&n, &npts) in cfg.dims.iter().zip(&cfg.npts) {
        let length = diffusive_box_length(cfg.nu, cfg.t_final, cfg.box_factor);
        let grid = GridSpec::new(n, npts, length).map_err(as_config)?;
        let dipole = gaussian_dipole(&grid, cfg.sigma_cells * grid.dx()).map_err(as_config)?;
        let series = heat_decay_series(&dipole, cfg.nu, &times, DecayNorm::Hdot(0.0))?;
        for (t, v) in series.iter() {
            table.push(vec![n.into(), t.into(), v.into()]);
        }
        let expected = -(0.25 * n as f64 + 0.5);
        match fit_loglog_slope(&series, t0, t1) {
            Ok(slope) => {
                report.number(format!("slope-{n}d"), slope);
                report.number(format!("expected-slope-{n}d"), expected);
                slopes.push(BoundCertificate::compare(
                    format!("decay-slope-{n}d"),
                    (slope - expected).abs(),
                    cfg.slope_tol,
                    1.0,
                    0.0,
                ));
            }
            Err(e) => {
                report.notes.push(format!("decay-slope {n}d: {e}"));
                slopes.push(BoundCertificate::compare(format!("decay-slope-{n}d"), f64::NAN, cfg.slope_tol, 1.0, 0.0));
            }
        }
        lines.push(Line::new(format!("n = {n}"), series_points(&series)));

        if wants(&cfg.certificates, "smoothing") {
            // A well-resolved datum keeps the Riemann sum for |u|_1 accurate.
            let smooth = gaussian_dipole(&grid, 4.0 * grid.dx().max(cfg.sigma_cells * grid.dx()))?;
            let tau = cfg.smoothing_tau * cfg.t_final;
            for &r in &cfg.smoothing_r {
                for order in 0..=1 {
                    let alpha: Vec<usize> = (0..n).map(|i| usize::from(i == 0 && order == 1)).collect();
                    let k = smoothing_constant(n, r, order)?;
                    let c = smoothing_certificate(&smooth, cfg.nu, tau, &alpha, r, k)?;
                    smoothing.push(BoundCertificate::compare(c.name, c.lhs, c.rhs, k, cfg.smoothing_tol));
                }
            }
        }
    }
    for name in &cfg.certificates {
        let cert = match name.as_str() {
            "decay-slope" => BoundCertificate::aggregate(name.as_str(), &slopes),
            "smoothing" => BoundCertificate::aggregate(name.as_str(), &smoothing),
            _ => unreachable!("validated certificate name"),
        };
        report.add(name, Ok(cert));
    }
    out.csv("heat_decay.csv", &table)?;
    out.chart("heat_decay.svg", || line_chart(&cfg.id, "t", "|v(t)|_2", &lines, Scale::Log, Scale::Log))?;
    report.settle(false);
    out.finish(report)
}

fn reseed(cfg: &AdvDiffConfig, seed: u64) -> (BPreset, APreset, U0Preset) {
    let b = match cfg.b.clone() {
        BPreset::Random { amp, time_mod, u_mod, .. } => BPreset::Random { amp, seed, time_mod, u_mod },
        other => other,
    };
    let a = match cfg.a.clone() {
        APreset::Random { mu0, contrast, .. } => APreset::Random { mu0, contrast, seed: seed.wrapping_add(1) },
        other => other,
    };
    let u0 = match cfg.u0.clone() {
        U0Preset::Bumps { amp, width, count, signed, .. } => {
            U0Preset::Bumps { amp, width, count, seed: seed.wrapping_add(2), signed }
        }
        other => other,
    };
    (b, a, u0)
}

fn verdict_name(v: GlobalVerdict) -> &'static str {
    match v {
        GlobalVerdict::SubcriticalKappa => "global-by-(i)",
        GlobalVerdict::CriticalSmallMass => "global-by-(ii)",
        GlobalVerdict::SupercriticalSmallData => "global-by-(iii)",
        GlobalVerdict::Unknown => "unknown",
    }
}

/// Build the solver state of an advection-diffusion scenario.
pub fn advdiff_state(cfg: &AdvDiffConfig, seed: Option<u64>) -> Result<AdvDiffState> {
    check(cfg)?;
    let (b, a, u0) = match seed {
        Some(s) => reseed(cfg, s),
        None => (cfg.b.clone(), cfg.a.clone(), cfg.u0.clone()),
    };
    let grid = GridSpec::new(cfg.dim, cfg.npts, cfg.length).map_err(as_config)?;
    let spec = problem_from_presets(&grid, cfg.kappa, cfg.p0, &b, &cfg.f, &a, &u0).map_err(as_config)?;
    let opts = SolverOptions {
        cfl: cfg.cfl,
        max_steps: cfg.max_steps,
        sample_every: cfg.sample_every,
        track_p: cfg.track_p.clone(),
        audit_q: cfg.audit_q.clone(),
        ..Default::default()
    };
    AdvDiffState::new(spec, opts).map_err(as_config)
}

pub fn run_advdiff(cfg: &AdvDiffConfig, opts: &RunOptions) -> Result<RunReport> {
    let seed_override = opts.seed.or(cfg.seed);
    let mut state = advdiff_state(cfg, seed_override)?;
    let mut out = Outputs::new(opts)?;
    let mut report = RunReport::new(Command::AdvdiffRun, &cfg.id, seed_override.unwrap_or(0));
    let verdict = global_existence_verdict(state.spec());
    report.verdict("global-existence", verdict_name(verdict.verdict));
    if let Some(b) = verdict.bmu_bound {
        report.number("bmu-bound", b);
    }

    let solver_failed = match state.run_until(cfg.t_final) {
        Ok(o) => {
            report.verdict("termination", if o.blew_up() { "blow-up" } else { "completed" });
            if let crate::advdiff::Termination::BlowUp { t, reason } = &o.termination {
                report.notes.push(format!("blow-up at t = {t}: {reason}"));
            }
            o.blew_up()
        }
        Err(e) => {
            report.verdict("termination", "failed");
            report.notes.push(format!("solver stopped at t = {}: {e}", state.t()));
            true
        }
    };
    report.number("max-sup", state.max_sup());

    for name in &cfg.certificates {
        let cert = match name.as_str() {
            "mass" => mass_law_certificate(&state, cfg.mass_tol),
            "lp-growth" => lp_growth_certificate(&state, cfg.bound_p, cfg.tol),
            "linfty" => linfty_bound_certificate(&state, cfg.bound_p, cfg.tol),
            "energy" => cfg
                .audit_q
                .iter()
                .map(|&q| energy_identity_audit(&state, q, cfg.energy_tol))
                .collect::<Result<Vec<_>>>()
                .map(|c| BoundCertificate::aggregate(name.as_str(), &c)),
            "growth-episode" => growth_episodes(&state, cfg).map(|c| BoundCertificate::aggregate(name.as_str(), &c)),
            _ => unreachable!("validated certificate name"),
        };
        report.add(name, cert);
    }

    let tr = state.trackers();
    let mut table = Table::new(&["quantity", "t", "value"]);
    let mut push = |s: &NormSeries| {
        for (t, v) in s.iter() {
            table.push(vec![s.quantity.as_str().into(), t.into(), v.into()]);
        }
    };
    tr.lp_series.iter().for_each(&mut push);
    tr.up_running.iter().for_each(&mut push);
    for s in [&tr.b_series, &tr.mu_series, &tr.bmu_running, &tr.mu_integral] {
        push(s);
    }
    for &(t, m) in &tr.mass_series {
        table.push(vec!["mass".into(), t.into(), m.into()]);
    }
    out.csv("advdiff_series.csv", &table)?;
    out.field("solution.bin", &state.solution())?;
    out.chart("advdiff_norms.svg", || {
        let lines: Vec<Line> =
            tr.lp_series.iter().map(|s| Line::new(s.quantity.clone(), series_points(s))).collect();
        line_chart(&cfg.id, "t", "norm", &lines, Scale::Linear, Scale::Log)
    })?;

    report.stats = SolverStats { steps: state.steps(), rejections: state.rejections(), t_end: state.t() };
    report.settle(solver_failed);
    out.finish(report)
}

fn growth_episodes(state: &AdvDiffState, cfg: &AdvDiffConfig) -> Result<Vec<BoundCertificate>> {
    let mut certs = Vec::new();
    for &q in &cfg.audit_q {
        let params = IterationParams::new(cfg.dim, cfg.kappa, 0.5 * q, cfg.k_nash)?;
        for s in growth_episode_samples(state, q)? {
            certs.push(growth_episode_certificate(&params, &s, cfg.episode_tol)?);
        }
    }
    Ok(certs)
}

fn scan_cell(kappa: f64, amplitude: f64, mode: ContrastMode, setup: &ContrastSetup) -> ScanCell {
    let mut cell = ScanCell {
        mode,
        kappa,
        amplitude,
        verdict: CellVerdict::Failed,
        sufficient: GlobalVerdict::Unknown,
        condition: None,
        t_end: 0.0,
        max_sup: 0.0,
        steps: 0,
        mass_law: None,
        error: None,
    };
    match fujita_contrast_run(kappa, amplitude, mode, setup) {
        Ok(sum) => {
            if mode == ContrastMode::Conservative {
                cell.sufficient = sum.verdict.verdict;
                cell.condition = sum.verdict.condition;
            }
            cell.verdict = if sum.outcome.blew_up() {
                CellVerdict::BlowUp
            } else if cell.sufficient.is_global() {
                CellVerdict::Global
            } else {
                CellVerdict::HorizonReached
            };
            cell.t_end = sum.outcome.t;
            cell.max_sup = sum.outcome.max_sup;
            cell.steps = sum.outcome.steps;
            cell.mass_law = sum.mass_law.map(|c| c.status);
        }
        Err(e) => {
            if mode == ContrastMode::Conservative {
                if let Ok(spec) = crate::advdiff::contrast_problem(kappa, amplitude, mode, setup) {
                    let v = global_existence_verdict(&spec);
                    cell.sufficient = v.verdict;
                    cell.condition = v.condition;
                }
            }
            cell.error = Some(e.to_string());
        }
    }
    cell
}

pub fn run_phase_scan(cfg: &PhaseScanConfig, opts: &RunOptions) -> Result<RunReport> {
    check(cfg)?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let mut out = Outputs::new(opts)?;
    let mut report = RunReport::new(Command::PhaseScan, &cfg.id, seed);
    let setup = ContrastSetup {
        dim: cfg.dim,
        npts: cfg.npts,
        length: cfg.length,
        horizon: cfg.horizon,
        b_amp: cfg.b_amp,
        width: cfg.width,
        opts: SolverOptions { cfl: cfg.cfl, max_steps: cfg.max_steps, track_p: vec![1.0], ..Default::default() },
    };
    GridSpec::new(cfg.dim, cfg.npts, cfg.length).map_err(as_config)?;

    let rows = cfg
        .kappas
        .iter()
        .map(|&k| (k, ContrastMode::Conservative))
        .chain(cfg.reaction_kappas.iter().map(|&k| (k, ContrastMode::Reaction)));
    let jobs: Vec<(f64, f64, ContrastMode)> =
        rows.flat_map(|(k, m)| cfg.amplitudes.iter().map(move |&a| (k, a, m))).collect();
    let pool = worker_pool(opts.workers)?;
    let cells: Vec<ScanCell> =
        pool.install(|| jobs.par_iter().map(|&(k, a, m)| scan_cell(k, a, m, &setup)).collect());

    let count = |v: CellVerdict| cells.iter().filter(|c| c.verdict == v).count();
    report.verdict("cells", cells.len());
    report.verdict("cells-global", count(CellVerdict::Global));
    report.verdict("cells-horizon-reached", count(CellVerdict::HorizonReached));
    report.verdict("cells-blow-up", count(CellVerdict::BlowUp));
    report.verdict("cells-failed", count(CellVerdict::Failed));
    for c in cells.iter().filter(|c| c.error.is_some()) {
        report.notes.push(format!(
            "{} kappa = {} amplitude = {}: {}",
            mode_name(c.mode),
            c.kappa,
            c.amplitude,
            c.error.as_deref().unwrap_or_default()
        ));
    }

    for name in &cfg.certificates {
        let cert = match name.as_str() {
            "soundness" => {
                let bad = cells.iter().filter(|c| c.violates_soundness()).count();
                BoundCertificate::compare(name.as_str(), bad as f64, 0.0, 1.0, 0.0)
            }
            "mass" => {
                let certs: Vec<BoundCertificate> = cells
                    .iter()
                    .filter_map(|c| c.mass_law)
                    .map(|s| {
                        let v = if s == CertStatus::Fail { 1.0 } else { 0.0 };
                        BoundCertificate::compare("mass", v, 0.0, 1.0, 0.0)
                    })
                    .collect();
                BoundCertificate::aggregate(name.as_str(), &certs)
            }
            _ => unreachable!("validated certificate name"),
        };
        report.add(name, Ok(cert));
    }

    let mut table = Table::new(&[
        "mode",
        "kappa",
        "amplitude",
        "verdict",
        "sufficient",
        "condition_lhs",
        "condition_rhs",
        "t_end",
        "max_sup",
        "steps",
        "mass_law",
        "error",
    ]);
    for c in &cells {
        let (cl, cr) = c.condition.map_or((Cell::from(""), Cell::from("")), |(l, r)| (l.into(), r.into()));
        let mass = c.mass_law.map_or(Cell::from(""), |s| Cell::from(s == CertStatus::Pass));
        table.push(vec![
            mode_name(c.mode).into(),
            c.kappa.into(),
            c.amplitude.into(),
            cell_name(c.verdict).into(),
            verdict_name(c.sufficient).into(),
            cl,
            cr,
            c.t_end.into(),
            c.max_sup.into(),
            c.steps.into(),
            mass,
            c.error.clone().unwrap_or_default().into(),
        ]);
    }
    out.csv("phase_scan.csv", &table)?;
    out.chart("phase_scan.svg", || {
        let mut lines = Vec::new();
        for (k, m) in cells.iter().map(|c| (c.kappa, c.mode)).fold(Vec::new(), |mut acc, key| {
            if !acc.contains(&key) {
                acc.push(key);
            }
            acc
        }) {
            let pts = cells.iter().filter(|c| c.kappa == k && c.mode == m).map(|c| (c.amplitude, c.max_sup)).collect();
            lines.push(Line::new(format!("{} kappa = {k}", mode_name(m)), pts));
        }
        line_chart(&cfg.id, "amplitude", "max |u|_inf", &lines, Scale::Log, Scale::Log)
    })?;

    report.stats = SolverStats {
        steps: cells.iter().map(|c| c.steps).sum(),
        rejections: 0,
        t_end: cfg.horizon,
    };
    let failed = cells.iter().any(|c| c.verdict == CellVerdict::Failed);
    report.cells = cells;
    report.settle(failed);
    out.finish(report)
}

fn mode_name(m: ContrastMode) -> &'static str {
    match m {
        ContrastMode::Reaction => "reaction",
        ContrastMode::Conservative => "conservative",
    }
}

fn cell_name(v: CellVerdict) -> &'static str {
    match v {
        CellVerdict::Global => "global",
        CellVerdict::HorizonReached => "horizon-reached",
        CellVerdict::BlowUp => "blow-up",
        CellVerdict::Failed => "failed",
    }
}

pub fn run_ineq_suite(cfg: &IneqSuiteConfig, opts: &RunOptions) -> Result<RunReport> {
    check(cfg)?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let mut out = Outputs::new(opts)?;
    let mut report = RunReport::new(Command::IneqSuite, &cfg.id, seed);
    let corpus = CorpusSpec { seed, length: cfg.length, npts: cfg.npts, kinds: cfg.kinds.clone(), tol: cfg.tol };
    let constants = cfg.constants();
    let pool = worker_pool(opts.workers)?;

    let mut table = Table::new(&["inequality", "n", "sample_id", "ratio", "pass"]);
    let mut summaries = Vec::new();
    let mut scaling = Vec::new();
    for name in &cfg.inequalities {
        let ineq = inequality::lookup(name, &constants).expect("validated inequality name");
        match pool.install(|| corpus_audit(&ineq, &corpus, cfg.count)) {
            Ok(mut sum) => {
                for r in &sum.records {
                    table.push(vec![name.as_str().into(), sum.n.into(), r.sample_id.into(), r.ratio.into(), r.pass.into()]);
                }
                let mut cert =
                    BoundCertificate::compare(name.as_str(), sum.max_ratio, sum.constant, sum.constant, cfg.tol);
                if !sum.all_passed() {
                    cert.status = CertStatus::Fail;
                }
                report.verdict(
                    name.as_str(),
                    format!("{} passed, {} failed, {} rejected of {}", sum.passed, sum.failures.len(), sum.rejected, sum.requested),
                );
                report.add(name, Ok(cert));
                sum.records.clear();
                summaries.push(sum);
            }
            Err(e) => report.add(name, Err(e)),
        }
        if cfg.scaling {
            let label = format!("{name}-scaling");
            scaling.push((label, pool.install(|| scaling_audit(&ineq, &corpus))));
        }
    }
    for (label, cert) in scaling {
        report.add(&label, cert);
    }

    out.csv("ineq_suite.csv", &table)?;
    let summary = serde_json::json!({ "schema": SCHEMA, "scenario": cfg.id, "seed": seed, "summaries": summaries });
    out.json("ineq_summary.json", &summary)?;
    report.settle(false);
    out.finish(report)
}

pub fn run_moser_table(cfg: &MoserTableConfig, opts: &RunOptions) -> Result<RunReport> {
    check(cfg)?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let mut out = Outputs::new(opts)?;
    let mut report = RunReport::new(Command::MoserTable, &cfg.id, seed);
    let mut table = Table::new(&["n", "kappa", "p", "level", "q", "lambda", "c_1l", "bound"]);
    let mut c_bound = Vec::new();
    let mut telescoping = Vec::new();
    let mut sets = 0;
    for &n in &cfg.n {
        for &kappa in &cfg.kappa {
            for &p in &cfg.p {
                if !(p > n as f64 * kappa) {
                    report.notes.push(format!("skipped n = {n}, kappa = {kappa}, p = {p}: needs p > n kappa"));
                    continue;
                }
                sets += 1;
                let params = IterationParams::new(n, kappa, p, cfg.k_nash).map_err(as_config)?;
                let k = linfty_constant(n, kappa, p)?;
                for row in moser_table(&params, cfg.m_max, cfg.u0_norm, cfg.bmu, cfg.up)? {
                    table.push(vec![
                        n.into(),
                        kappa.into(),
                        p.into(),
                        row.level.into(),
                        row.q.into(),
                        row.lambda.into(),
                        row.c_1l.into(),
                        row.bound.into(),
                    ]);
                    let mut c = BoundCertificate::compare("c-bound", row.c_1l, k, k, 0.0);
                    if row.c_1l >= k {
                        c.status = CertStatus::Fail;
                    }
                    c_bound.push(c);
                }
                for m in 1..=cfg.m_max {
                    let (a, b) = telescoping_check(&params, m)?;
                    telescoping.push(a);
                    telescoping.push(b);
                }
            }
        }
    }
    if sets == 0 {
        return Err(LabError::config(None, "no parameter set satisfies p > n kappa"));
    }
    report.verdict("parameter-sets", sets);
    for name in &cfg.certificates {
        let cert = match name.as_str() {
            "c-bound" if cfg.k_nash != 1.0 => {
                report.notes.push("c-bound: the (2p)^{n/(p - n kappa)} bound assumes k_nash = 1".into());
                BoundCertificate::indeterminate(name.as_str(), 1.0, 0.0)
            }
            "c-bound" => BoundCertificate::aggregate(name.as_str(), &c_bound),
            "telescoping" => BoundCertificate::aggregate(name.as_str(), &telescoping),
            _ => unreachable!("validated certificate name"),
        };
        report.add(name, Ok(cert));
    }
    out.csv("moser_table.csv", &table)?;
    report.settle(false);
    out.finish(report)
}
