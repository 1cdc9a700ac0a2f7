use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decaylab::runner::{self, Command, RunOptions, RunReport, EXIT_CONFIG_ERROR};

#[derive(Parser)]
#[command(name = "decaylab", version, about = "Decay and sup-norm bound experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Navier-Stokes energy, decay-monitor and gradient-onset run.
    NsDecay(RunArgs),
    /// Heat-flow dipole decay slopes and smoothing constants.
    HeatCheck(RunArgs),
    /// Single advection-diffusion run with its certificates.
    AdvdiffRun(RunArgs),
    /// (kappa, amplitude) scan with the global-existence overlay.
    PhaseScan(RunArgs),
    /// Functional-inequality corpus audit.
    IneqSuite(RunArgs),
    /// Iteration constants per level.
    MoserTable(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", env = "DECAYLAB_OUT", default_value = "decaylab-out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for scans and corpora.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
    /// Print the default scenario file and exit.
    #[arg(long, conflicts_with = "config")]
    print_defaults: bool,
}

fn split(cmd: Cmd) -> (Command, RunArgs) {
    match cmd {
        Cmd::NsDecay(a) => (Command::NsDecay, a),
        Cmd::HeatCheck(a) => (Command::HeatCheck, a),
        Cmd::AdvdiffRun(a) => (Command::AdvdiffRun, a),
        Cmd::PhaseScan(a) => (Command::PhaseScan, a),
        Cmd::IneqSuite(a) => (Command::IneqSuite, a),
        Cmd::MoserTable(a) => (Command::MoserTable, a),
    }
}

fn summarize(report: &RunReport, out: &std::path::Path) {
    println!("{} [{}] seed {}", report.command_name(), report.scenario, report.seed);
    for c in &report.certificates {
        println!(
            "  {:<13} {:<28} lhs {:>12.5e}  rhs {:>12.5e}  margin {:>12.5e}",
            format!("{:?}", c.status).to_uppercase(),
            c.name,
            c.lhs,
            c.rhs,
            c.margin
        );
    }
    for (k, v) in &report.verdicts {
        println!("  {k} = {v}");
    }
    for n in &report.notes {
        println!("  note: {n}");
    }
    println!(
        "  steps {}  rejections {}  wall {:.2} s",
        report.stats.steps, report.stats.rejections, report.wall_clock_s
    );
    println!("  status {:?}, outputs in {}", report.status, out.display());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG_ERROR as u8) } else { ExitCode::SUCCESS };
        }
    };
    let (command, args) = split(cli.command);
    if args.print_defaults {
        return match runner::default_config(command) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG_ERROR as u8)
            }
        };
    }
    let opts = RunOptions {
        out_dir: Some(args.out.clone()),
        seed: args.seed,
        workers: args.workers.map(usize::from),
        svg: args.svg,
    };
    let result = match &args.config {
        Some(path) => runner::run_file(command, path, &opts),
        None => runner::run_command(command, "", &opts),
    };
    match result {
        Ok(report) => {
            summarize(&report, &args.out);
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            match &args.config {
                Some(p) => eprintln!("error: {}: {e}", p.display()),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(runner::exit_code_of(&e) as u8)
        }
    }
}
