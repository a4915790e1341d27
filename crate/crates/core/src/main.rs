use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use transverse::chart::write_snapshot;
use transverse::config::RunConfig;
use transverse::harness::{self, ManufacturedReport};
use transverse::solver::{parabolic_flow, solve, SolveRun};
use transverse::subsolution::{c_subsolution_report, quotient_cone_condition};
use transverse::symfunc::Family;
use transverse::{thread_count, Error, Result};

#[derive(Parser)]
#[command(name = "transverse", version, about = "Eigenvalue-type elliptic equations on periodic charts")]
struct Cli {
    /// Directory for JSON reports, CSV tables and field snapshots.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded identity, derivative and cone suites.
    Identities {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Certify the configured candidate subsolution.
    Subsolution { config: PathBuf },
    /// Solve the configured equation by continuation and Newton.
    Solve { config: PathBuf },
    /// Run the explicit parabolic flow.
    Flow { config: PathBuf },
    /// Run a manufactured-solution case, or all of them.
    Manufacture {
        #[arg(required_unless_present = "all")]
        case: Option<String>,
        #[arg(long, conflicts_with = "case")]
        all: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Continuation { .. } => 2,
        Error::Admissibility { .. } | Error::SubsolutionDomain { .. } | Error::FlowAbort { .. } | Error::Domain { .. } => 3,
        _ => 1,
    }
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_run(dir: &Path, stem: &str, cfg: &RunConfig, run: &SolveRun) -> Result<()> {
    write_csv(&dir.join(format!("{stem}_newton.csv")), &run.history)?;
    write_csv(&dir.join(format!("{stem}_path.csv")), &run.path)?;
    let meta = [
        ("family", format!("{:?}", cfg.family)),
        ("b", format!("{:e}", run.b)),
        ("residual", format!("{:e}", run.residual)),
        ("layout", "row-major over (x1, y1, x2, y2, ...)".to_string()),
    ];
    write_snapshot(&dir.join(format!("{stem}_u.f64")), &run.u, &meta)
}

fn identities(out: &Path, seed: u64) -> Result<bool> {
    let report = harness::verify_identities(seed);
    for e in &report.entries {
        let verdict = if e.passed { "PASS" } else { "FAIL" };
        let note = e.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
        println!(
            "{verdict} {:<36} samples {:>5}  max error {:.3e}  bound {:.0e}  violations {}{note}",
            e.name, e.samples, e.max_error, e.bound, e.violations
        );
        if !e.passed {
            println!("     contradicts: {}", e.anchor);
        }
    }
    println!("identities: {} in {:.2} s", if report.passed { "all passed" } else { "FAILED" }, report.elapsed_seconds);
    write_json(out, "identities.json", &report)?;
    Ok(report.passed)
}

fn subsolution(out: &Path, path: &Path) -> Result<bool> {
    let cfg = RunConfig::load(path)?;
    let spec = cfg.problem()?;
    let under = cfg.field(&spec.chart, cfg.subsolution_u.as_deref())?;
    let a = spec.beta().add(&spec.chart.complex_hessian(&under));
    let report = c_subsolution_report(&spec.op, &spec.chart, &a, &spec.psi)?;
    println!(
        "subsolution: {}  worst margin {:.6e} at point {}{}",
        if report.is_subsolution { "yes" } else { "no" },
        report.worst_margin,
        report.worst_point,
        if report.unbounded { " (unbounded at infinity)" } else { "" }
    );
    let cone = if spec.op.family == Family::HessianQuotient {
        let r = quotient_cone_condition(&spec.form, &spec.chart.metric_field(), spec.op.k, spec.op.ell, spec.op.c)?;
        println!(
            "quotient cone condition: {}  margin {:.6e} (forms route {:.6e}) at point {}",
            if r.holds { "holds" } else { "fails" },
            r.margin,
            r.forms_margin,
            r.worst_point
        );
        Some(r)
    } else {
        None
    };
    write_json(out, "subsolution.json", &json!({ "c_subsolution": report, "quotient_cone": cone, "c": spec.op.c }))?;
    Ok(report.is_subsolution && cone.map_or(true, |c| c.holds))
}

fn run_solve(out: &Path, path: &Path) -> Result<bool> {
    let cfg = RunConfig::load(path)?;
    let spec = cfg.problem()?;
    let opts = cfg.solve_options(&spec.chart)?;
    let run = solve(&spec, &opts)?;
    println!(
        "solve: converged {}  b = {:.12e}  residual {:.3e}  newton steps {}  rejected {}  {:.2} s",
        run.converged,
        run.b,
        run.residual,
        run.history.len(),
        run.rejected_steps,
        run.elapsed_seconds
    );
    write_json(
        out,
        "solve.json",
        &json!({
            "converged": run.converged,
            "b": run.b,
            "residual": run.residual,
            "c": spec.op.c,
            "tau_min": run.tau_min,
            "kappa_min": run.kappa_min,
            "rejected_steps": run.rejected_steps,
            "elapsed_seconds": run.elapsed_seconds,
            "path": run.path,
            "config": cfg,
        }),
    )?;
    write_run(out, "solve", &cfg, &run)?;
    Ok(run.converged)
}

#[derive(Serialize)]
struct FlowRow {
    step: usize,
    residual: f64,
}

fn run_flow(out: &Path, path: &Path) -> Result<bool> {
    let cfg = RunConfig::load(path)?;
    let spec = cfg.problem()?;
    let u0 = cfg.field(&spec.chart, cfg.flow_u0.as_deref())?;
    let run = parabolic_flow(&spec, &u0, cfg.dt, cfg.steps)?;
    let first = run.residuals[0];
    let last = *run.residuals.last().expect("at least one residual");
    println!(
        "flow: {} steps at dt = {:e}  residual {:.6e} -> {:.6e}  strictly decreasing {}",
        run.steps, cfg.dt, first, last, run.strictly_decreasing
    );
    let rows: Vec<FlowRow> = run.residuals.iter().enumerate().map(|(step, &residual)| FlowRow { step, residual }).collect();
    write_csv(&out.join("flow.csv"), &rows)?;
    write_json(
        out,
        "flow.json",
        &json!({ "steps": run.steps, "dt": cfg.dt, "strictly_decreasing": run.strictly_decreasing, "residuals": run.residuals }),
    )?;
    write_snapshot(&out.join("flow_u.f64"), &run.u, &[("dt", format!("{:e}", cfg.dt)), ("steps", run.steps.to_string())])?;
    Ok(run.strictly_decreasing)
}

fn summarize(r: &ManufacturedReport) {
    println!("{} {}  ({:.2} s)", if r.passed { "PASS" } else { "FAIL" }, r.case, r.elapsed_seconds);
    for c in &r.checks {
        println!(
            "    {:<5} {:<14} {:.3e} < {:.0e}",
            if c.passed { "ok" } else { "FAIL" },
            c.quantity,
            c.achieved,
            c.bound
        );
    }
}

fn manufacture(out: &Path, name: Option<&str>) -> Result<bool> {
    let cases = match name {
        Some(n) => vec![harness::case(n).ok_or_else(|| {
            Error::Argument(format!("unknown case {n:?}; known: {}", harness::CASE_NAMES.join(", ")))
        })?],
        None => harness::all_cases(),
    };
    let mut reports = Vec::new();
    for c in &cases {
        let r = harness::run_manufactured(c)?;
        summarize(&r);
        write_run(out, c.name, &c.config, &r.run)?;
        reports.push(r);
    }
    write_json(out, "manufacture.json", &reports)?;
    Ok(reports.iter().all(|r| r.passed))
}

fn run(cli: Cli) -> Result<bool> {
    fs::create_dir_all(&cli.out)?;
    eprintln!("threads: {}", thread_count());
    match &cli.command {
        Command::Identities { seed } => identities(&cli.out, *seed),
        Command::Subsolution { config } => subsolution(&cli.out, config),
        Command::Solve { config } => run_solve(&cli.out, config),
        Command::Flow { config } => run_flow(&cli.out, config),
        Command::Manufacture { case, all } => manufacture(&cli.out, if *all { None } else { case.as_deref() }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
