//! Command-line front end: classify, solve, and certify scenarios, and
//! re-judge previously written reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dglab::degiorgi::CertifyOptions;
use dglab::harness::{self, GridSpec, RunMode, RunReport, Scenario};
use dglab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dglab",
    version,
    about = "Hypothesis checks, Dirichlet solves, and boundedness certificates \
             for non-uniformly elliptic problems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify scenarios and judge them against declared expectations.
    Check(Common),
    /// Solve scenarios; judge refinement order and maximum principles.
    Solve(Common),
    /// Full pipeline: checks, solve, level audits, certificate, estimate.
    Certify(Common),
    /// Recompute verdicts from report files written earlier.
    Report(Common),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    /// Report JSON plus trace, solution, and solve-log CSV files.
    Csv,
    /// Report JSON only.
    Json,
}

#[derive(Args)]
struct Common {
    /// Scenario names; default is every library scenario the subcommand
    /// applies to.
    names: Vec<String>,

    /// Scenario file replacing the built-in library.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory output files are written into.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out_dir: PathBuf,

    /// Override the sampling seed of every selected scenario.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the hypothesis-check sample count.
    #[arg(long)]
    samples: Option<usize>,

    /// Override the scenario grid.
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    grid: Option<Vec<usize>>,

    /// Cap on the level-ladder length used for certificates.
    #[arg(long)]
    max_h: Option<usize>,

    /// What to write next to the report.
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            harness::exit_code(&err)
        }
    };
    ExitCode::from(code as u8)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Check(c) => batch(c, RunMode::Check),
        Cmd::Solve(c) => batch(c, RunMode::Solve),
        Cmd::Certify(c) => batch(c, RunMode::Certify),
        Cmd::Report(c) => rejudge(c),
    }
}

fn library(c: &Common) -> Result<Vec<Scenario>> {
    match &c.config {
        Some(path) => harness::load_config(path),
        None => Ok(harness::builtin_scenarios()),
    }
}

fn selected(c: &Common, mode: RunMode) -> Result<Vec<Scenario>> {
    let lib = library(c)?;
    if c.names.is_empty() {
        // Check-only scenarios exist to exercise the classifier; keep them
        // out of default solve and certify batches.
        return Ok(lib
            .into_iter()
            .filter(|s| mode == RunMode::Check || !s.check_only)
            .collect());
    }
    Ok(harness::select(&lib, &c.names)?.into_iter().cloned().collect())
}

fn batch(c: Common, mode: RunMode) -> Result<i32> {
    let mut copts = CertifyOptions::default();
    if let Some(h) = c.max_h {
        copts.h_max = h;
    }
    let mut all_pass = true;
    for mut s in selected(&c, mode)? {
        if let Some(seed) = c.seed {
            s.problem.domain.seed = seed;
        }
        if let Some(n) = c.samples {
            s.problem.domain.n_samples = n;
        }
        if let Some(g) = &c.grid {
            s.grid = GridSpec { nx: g[0], ny: g[1] };
        }
        let outcome = match mode {
            RunMode::Check => harness::run_checks(&s)?,
            RunMode::Solve => harness::run_solve(&s)?,
            RunMode::Certify => harness::run_certify(&s, &copts)?,
        };
        harness::write_outputs(&outcome, &c.out_dir, c.format == OutputFormat::Csv)?;
        print_report(&outcome.report);
        all_pass &= outcome.report.passed;
    }
    Ok(if all_pass { 0 } else { 1 })
}

fn print_report(r: &RunReport) {
    println!("{}: {}", r.scenario, if r.passed { "PASS" } else { "FAIL" });
    for v in &r.verdicts {
        println!("  {:<22} {}", v.name, if v.passed { "pass" } else { "fail" });
    }
    if let Some(reason) = &r.certificate_failure {
        println!("  certificate failure: {reason}");
    }
}

fn rejudge(c: Common) -> Result<i32> {
    let mut paths: Vec<PathBuf> = Vec::new();
    if c.names.is_empty() {
        for entry in std::fs::read_dir(&c.out_dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("report_") && name.ends_with(".json") {
                paths.push(path);
            }
        }
        paths.sort();
    } else {
        for n in &c.names {
            paths.push(c.out_dir.join(format!("report_{n}.json")));
        }
    }
    if paths.is_empty() {
        return Err(Error::input(format!(
            "no report files found in {}",
            c.out_dir.display()
        )));
    }
    let mut all_pass = true;
    for path in &paths {
        let (report, consistent) = harness::reevaluate_report(path)?;
        print_report(&report);
        if !consistent {
            println!("  stored verdicts disagree with the recomputation");
        }
        all_pass &= report.passed && consistent;
    }
    Ok(if all_pass { 0 } else { 1 })
}
