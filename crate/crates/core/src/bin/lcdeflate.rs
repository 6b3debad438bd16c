use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lc_deflation::driver::{run, RunReport};
use lc_deflation::export::export_solution;
use lc_deflation::presets::{ExperimentPreset, PresetName};
use lc_deflation::selfcheck::{derivative_check, sherman_morrison_check, CheckCase};
use lc_deflation::sweep::{sweep, SweepParameter, SweepSpec};
use lc_deflation::Error;

/// Multiple liquid crystal equilibria by deflated Newton iteration.
#[derive(Parser)]
#[command(name = "lcdeflate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nested iteration with deflation for one preset.
    Run {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        levels: Option<usize>,
        /// Deflation shift α.
        #[arg(long)]
        alpha: Option<f64>,
        /// Deflation power p.
        #[arg(long)]
        p: Option<f64>,
        /// Dotted-key override, e.g. `params.k2=2.7`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Branch diagnostics over a range of K2 or V.
    Sweep {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Nested-iteration depth per point.
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Finite-difference and dense-oracle self tests.
    Check,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn preset(name: &str, levels: Option<usize>, set: &[String]) -> Result<ExperimentPreset, Failure> {
    let name: PresetName = name.parse()?;
    let mut p = ExperimentPreset::new(name);
    if let Some(l) = levels {
        p.levels = l;
    }
    p.apply_overrides(set.iter().map(String::as_str))?;
    p.validate()?;
    Ok(p)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source }.into())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source }.into())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn summarize(report: &RunReport) {
    for s in &report.solutions {
        println!(
            "solution {:>2}  {:?} from guess {} on level {}  energy {:.6}  newton {}",
            s.id,
            s.provenance,
            s.guess,
            s.discovery_level,
            s.final_energy(),
            s.newton_iterations()
        );
    }
    println!(
        "{} solutions, {} Newton iterations ({} anonymous)",
        report.solutions.len(),
        report.total_newton_iterations,
        report.anonymous_iterations()
    );
}

fn cmd_run(p: ExperimentPreset, out: &Path) -> Result<(), Failure> {
    create_dir(out)?;
    let result = match run(&p) {
        Ok(r) => r,
        Err(e @ Error::Config(_)) => return Err(e.into()),
        Err(e) => {
            let doc = serde_json::json!({ "config": p, "error": e.to_string() });
            write(&out.join("report.json"), &json(&doc))?;
            return Err(Failure::Numerical(e.to_string()));
        }
    };
    let report = &result.report;
    write(&out.join("report.json"), &json(report))?;
    for (rec, state) in report.solutions.iter().zip(&result.states) {
        export_solution(state, &out.join(format!("solution_{}.csv", rec.id)))?;
    }
    summarize(report);
    let warned = report.solutions.iter().filter(|s| !s.warnings.is_empty()).count();
    if report.solutions.is_empty() {
        return Err(Failure::Numerical("no solution converged".into()));
    }
    if warned > 0 {
        return Err(Failure::Numerical(format!("{warned} solutions failed to converge on some level")));
    }
    Ok(())
}

fn cmd_sweep(spec: SweepSpec, out: &Path) -> Result<(), Failure> {
    create_dir(out)?;
    let r = sweep(&spec)?;
    let mut csv = Vec::new();
    r.write_csv(&mut csv).map_err(|source| Error::Io { path: out.join("sweep.csv"), source })?;
    write(&out.join("sweep.csv"), &String::from_utf8(csv).expect("ascii"))?;
    write(&out.join("sweep.json"), &json(&r))?;
    for s in &r.summary {
        match &s.error {
            None => println!("{} = {:.6}: {} branches", spec.parameter, s.parameter, s.branches),
            Some(e) => println!("{} = {:.6}: failed ({e})", spec.parameter, s.parameter),
        }
    }
    match r.bracket {
        Some((a, b)) => println!("bifurcation in [{a:.6}, {b:.6}], estimate {:.6}", 0.5 * (a + b)),
        None => println!("no bifurcation bracket found"),
    }
    if r.summary.iter().any(|s| s.error.is_some()) {
        return Err(Failure::Numerical("some sweep points failed".into()));
    }
    Ok(())
}

fn cmd_check() -> Result<(), Failure> {
    let mut ok = true;
    for case in CheckCase::ALL {
        let c = derivative_check(case, 10, 2024)?;
        let pass = c.max_gradient_error <= 1e-6
            && c.max_hessian_error <= 1e-5
            && c.gradient_order > 1.8
            && c.hessian_order > 1.8;
        ok &= pass;
        println!(
            "{} derivatives {:?}: gradient {:.2e} (order {:.2}), hessian {:.2e} (order {:.2})",
            if pass { "PASS" } else { "FAIL" },
            case,
            c.max_gradient_error,
            c.gradient_order,
            c.max_hessian_error,
            c.hessian_order
        );
    }
    for (level, roots) in [(0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3)] {
        let c = sherman_morrison_check(level, roots, 40 + roots as u64)?;
        let pass = c.relative_error <= 1e-8;
        ok &= pass;
        println!(
            "{} rank-one update, level {level}, {roots} roots: {:.2e}",
            if pass { "PASS" } else { "FAIL" },
            c.relative_error
        );
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Numerical("self checks failed".into()))
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { preset: name, levels, alpha, p, set, out } => {
            let mut items = Vec::new();
            if let Some(a) = alpha {
                items.push(format!("deflation.alpha={a}"));
            }
            if let Some(p) = p {
                items.push(format!("deflation.p={p}"));
            }
            items.extend(set);
            cmd_run(preset(&name, levels, &items)?, &out)
        }
        Command::Sweep { preset: name, param, from, to, steps, levels, set, out } => {
            let base = preset(&name, None, &set)?;
            let parameter: SweepParameter = param.parse()?;
            let mut spec = SweepSpec::new(base, parameter, from, to, steps);
            spec.levels = levels;
            spec.validate()?;
            cmd_sweep(spec, &out)
        }
        Command::Check => cmd_check(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
