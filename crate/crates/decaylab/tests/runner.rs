use std::fs;
use std::path::Path;

use decaylab::advdiff::GlobalVerdict;
use decaylab::runner::{
    exit_code_of, run_command, CellVerdict, Command, RunOptions, RunStatus, EXIT_CONFIG_ERROR,
};
use decaylab::CertStatus;

fn quiet() -> RunOptions {
    RunOptions { workers: Some(1), ..Default::default() }
}

fn to_dir(dir: &Path) -> RunOptions {
    RunOptions { out_dir: Some(dir.to_path_buf()), workers: Some(1), svg: true, ..Default::default() }
}

fn names(report: &decaylab::runner::RunReport) -> Vec<&str> {
    report.certificates.iter().map(|c| c.name.as_str()).collect()
}

#[test]
fn moser_table_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_command(Command::MoserTable, "m_max = 10\n", &to_dir(dir.path())).unwrap();
    assert_eq!(report.status, RunStatus::Pass);
    let csv = fs::read_to_string(dir.path().join("moser_table.csv")).unwrap();
    let golden = include_str!("golden/moser_table.csv");
    assert_eq!(csv, golden);
}

#[test]
fn moser_table_c_column_bounded_by_two() {
    let dir = tempfile::tempdir().unwrap();
    run_command(Command::MoserTable, "", &to_dir(dir.path())).unwrap();
    let csv = fs::read_to_string(dir.path().join("moser_table.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "c_1l").unwrap();
    let mut rows = 0;
    for line in lines {
        let c: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!((1.0..2.0).contains(&c), "{c}");
        rows += 1;
    }
    assert_eq!(rows, 10);
}

#[test]
fn moser_table_skips_supercritical_sets() {
    let text = "n = [1, 3]\nkappa = [0.5]\np = [1.0]\nm_max = 3\n";
    let report = run_command(Command::MoserTable, text, &quiet()).unwrap();
    assert_eq!(report.verdicts["parameter-sets"], "1");
    assert_eq!(report.notes.len(), 1);
    let err = run_command(Command::MoserTable, "n = [3]\nkappa = [0.5]\n", &quiet()).unwrap_err();
    assert_eq!(exit_code_of(&err), EXIT_CONFIG_ERROR);
}

#[test]
fn taylor_green_energy_and_zero_heat_deviation() {
    let text = "npts = 32\nt_final = 0.2\ndt = 1e-3\nsnapshot_every = 20\n";
    let report = run_command(Command::NsDecay, text, &quiet()).unwrap();
    assert_eq!(names(&report), ["energy", "tstar", "gradient-onset", "q-estimate"]);
    assert!(report.certificate("energy").unwrap().passed());
    assert_eq!(report.certificate("q-estimate").unwrap().status, CertStatus::Indeterminate);
    let dev: f64 = report.verdicts["heat-deviation-max"].parse().unwrap();
    assert!(dev < 1e-12, "{dev}");
    assert_eq!(report.exit_code(), 0);
}

#[test]
fn zero_flow_is_degenerate_pass() {
    let text = "preset = \"zero\"\ndim = 3\nnpts = 16\nt_final = 0.05\nsnapshot_every = 5\n";
    let report = run_command(Command::NsDecay, text, &quiet()).unwrap();
    assert_eq!(report.status, RunStatus::Pass);
    assert!(report.certificates.iter().all(|c| c.not_failed()));
    assert_eq!(report.verdicts["u0-l2"].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn small_3d_data_onset_before_bound() {
    let text = "preset = \"random-3d-small\"\nnpts = 16\nnu = 1.0\nl2 = 1.0\nt_final = 0.005\ndt = 2.5e-4\nsnapshot_every = 4\nq_gaps = [0.1]\n";
    let report = run_command(Command::NsDecay, text, &quiet()).unwrap();
    let tstar: f64 = report.verdicts["tstar-bound"].parse().unwrap();
    assert!(tstar < 0.000753026);
    assert!(report.certificate("tstar").unwrap().passed());
    assert!(report.certificate("gradient-onset").unwrap().passed());
    assert!(report.certificate("q-estimate").unwrap().passed());
    assert_eq!(report.exit_code(), 0);
}

#[test]
fn heat_check_small_box() {
    let text = "dims = [1, 2]\nnpts = [1024, 128]\ncertificates = [\"decay-slope\", \"smoothing\"]\n";
    let report = run_command(Command::HeatCheck, text, &quiet()).unwrap();
    assert_eq!(report.status, RunStatus::Pass, "{:?}", report.certificates);
    let s1: f64 = report.verdicts["slope-1d"].parse().unwrap();
    assert!((s1 + 0.75).abs() < 0.1);
}

#[test]
fn advdiff_run_reports_every_certificate() {
    let text = r#"
npts = 128
kappa = 0.3
t_final = 0.5
track_p = [1.0, 2.0, 4.0]
audit_q = [4.0]
b = { kind = "random", amp = 1.0, seed = 1, time_mod = 0.2, u_mod = 0.2 }
a = { kind = "random", mu0 = 1.0, contrast = 0.5, seed = 2 }
certificates = ["mass", "lp-growth", "linfty", "energy", "growth-episode"]
"#;
    let report = run_command(Command::AdvdiffRun, text, &quiet()).unwrap();
    assert_eq!(names(&report), ["mass", "lp-growth", "linfty", "energy", "growth-episode"]);
    assert_eq!(report.status, RunStatus::Pass, "{:#?}", report.certificates);
    assert_eq!(report.verdicts["global-existence"], "global-by-(i)");
    assert!(report.stats.steps > 0);
}

#[test]
fn advdiff_solver_failure_is_a_report() {
    let text = "t_final = 10.0\nmax_steps = 5\n";
    let report = run_command(Command::AdvdiffRun, text, &quiet()).unwrap();
    assert_eq!(report.status, RunStatus::SolverFailure);
    assert_eq!(report.exit_code(), 3);
    assert_eq!(report.verdicts["termination"], "failed");
    assert_eq!(report.certificates.len(), 3);
}

#[test]
fn subcritical_planar_row_is_global() {
    let text = "dim = 2\nnpts = 32\nlength = 10.0\nhorizon = 0.5\nkappas = [0.2]\namplitudes = [0.5, 2.0, 8.0]\n";
    let report = run_command(Command::PhaseScan, text, &quiet()).unwrap();
    assert_eq!(report.cells.len(), 3);
    for c in &report.cells {
        assert_eq!(c.sufficient, GlobalVerdict::SubcriticalKappa);
        assert_eq!(c.verdict, CellVerdict::Global, "{c:?}");
    }
    assert_eq!(report.status, RunStatus::Pass);
}

#[test]
fn reaction_row_blows_up() {
    let text = "npts = 128\nkappas = []\nreaction_kappas = [1.0]\namplitudes = [1.0, 2.0, 4.0]\ncertificates = [\"soundness\"]\n";
    let report = run_command(Command::PhaseScan, text, &quiet()).unwrap();
    assert!(report.cells.iter().all(|c| c.verdict == CellVerdict::BlowUp), "{:?}", report.cells);
    assert!(report.cells.iter().all(|c| c.sufficient == GlobalVerdict::Unknown));
    assert!(report.certificate("soundness").unwrap().passed());
}

#[test]
fn ineq_suite_small_corpus() {
    let text = "count = 6\ninequalities = [\"nash-1d\", \"gn-sup-hessian\"]\n";
    let dir = tempfile::tempdir().unwrap();
    let report = run_command(Command::IneqSuite, text, &to_dir(dir.path()));
    let report = match report {
        Ok(r) => r,
        Err(e) => panic!("{e}"),
    };
    assert_eq!(report.status, RunStatus::Pass);
    let csv = fs::read_to_string(dir.path().join("ineq_suite.csv")).unwrap();
    assert!(csv.starts_with("inequality,n,sample_id,ratio,pass\n"));
    assert_eq!(csv.lines().count(), 13);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ineq_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], "v1");
}

#[test]
fn outputs_are_byte_identical() {
    let text = "npts = 64\nt_final = 0.2\nu0 = { kind = \"bumps\", amp = 1.0, width = 0.5, count = 3, seed = 9, signed = true }\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let opts = |d: &Path| RunOptions { seed: Some(11), ..to_dir(d) };
    let ra = run_command(Command::AdvdiffRun, text, &opts(a.path())).unwrap();
    run_command(Command::AdvdiffRun, text, &opts(b.path())).unwrap();
    for name in ra.series.iter().map(String::as_str).chain(["report.json"]) {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "v1");
    assert_eq!(report["seed"], 11);
    assert!(report.get("wall_clock_s").is_none());
    assert!(a.path().join("timing.json").exists());
}

#[test]
fn seed_changes_random_outputs() {
    let text = "npts = 64\nt_final = 0.05\nu0 = { kind = \"bumps\", amp = 1.0, width = 0.5, count = 3, seed = 9, signed = true }\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_command(Command::AdvdiffRun, text, &RunOptions { seed: Some(1), ..to_dir(a.path()) }).unwrap();
    run_command(Command::AdvdiffRun, text, &RunOptions { seed: Some(2), ..to_dir(b.path()) }).unwrap();
    let x = fs::read(a.path().join("advdiff_series.csv")).unwrap();
    let y = fs::read(b.path().join("advdiff_series.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn config_errors_carry_lines_and_exit_four() {
    for cmd in Command::ALL {
        let err = run_command(cmd, "id = \"x\"\nnot_a_key = 1\n", &quiet()).unwrap_err();
        assert_eq!(exit_code_of(&err), EXIT_CONFIG_ERROR, "{}", cmd.name());
        assert!(err.to_string().contains("line 2"), "{}: {err}", cmd.name());
    }
}

#[test]
fn default_configs_round_trip() {
    use decaylab::runner::*;
    for cmd in Command::ALL {
        let text = default_config(cmd).unwrap();
        let ok = match cmd {
            Command::NsDecay => parse_config::<NsDecayConfig>(&text).map(|c| c == NsDecayConfig::default()),
            Command::HeatCheck => parse_config::<HeatCheckConfig>(&text).map(|c| c == HeatCheckConfig::default()),
            Command::AdvdiffRun => parse_config::<AdvDiffConfig>(&text).map(|c| c == AdvDiffConfig::default()),
            Command::PhaseScan => parse_config::<PhaseScanConfig>(&text).map(|c| c == PhaseScanConfig::default()),
            Command::IneqSuite => parse_config::<IneqSuiteConfig>(&text).map(|c| c == IneqSuiteConfig::default()),
            Command::MoserTable => parse_config::<MoserTableConfig>(&text).map(|c| c == MoserTableConfig::default()),
        };
        assert!(ok.unwrap_or_else(|e| panic!("{}: {e}\n{text}", cmd.name())), "{}", cmd.name());
    }
}
