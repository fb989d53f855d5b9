use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use degenctl::config::{parse_config, ConfigError, RunConfig};
use degenctl::experiments::{
    form_comparison, k_sweep, named_scenarios, run_suite, verify_battery, Scenario,
};
use degenctl::hum::{penalty_sweep, solve_penalized};
use degenctl::svg::{emit_svg, Plot, Series};

/// Null-control synthesis for degenerate parabolic equations with memory.
#[derive(Parser, Debug)]
#[command(name = "degenctl", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.directory`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized checks (overrides `output.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Print the canonical configuration with all defaults and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Command {
    Simulate,
    Hum,
    Sweep,
    Ksweep,
    CompareForms,
    Verify,
    Suite,
}

const K_VALUES: [f64; 6] = [0.0, 0.5, 1.0, 1.5, 1.9, 2.0];

enum Failure {
    Config(String),
    Compute(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<degenctl::Error> for Failure {
    fn from(e: degenctl::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let mut config = parse_config(&cli.config)?;
    if let Some(out) = &cli.out {
        config.output.directory = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.output.seed = seed;
    }
    if cli.dump_config {
        print!("{}", config.to_json());
        return Ok(());
    }
    let out = config.output.directory.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("run_config.json"), config.to_json())?;
    match cli.command {
        Command::Simulate => simulate(&config, &out),
        Command::Hum => hum(&config, &out),
        Command::Sweep => sweep(&config, &out),
        Command::Ksweep => ksweep(&config, &out),
        Command::CompareForms => compare_forms(&config, &out),
        Command::Verify => verify(&config),
        Command::Suite => suite(&out),
    }
}

fn writer(dir: &Path, name: &str) -> Result<BufWriter<fs::File>, Failure> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn simulate(config: &RunConfig, out: &Path) -> Outcome {
    let a = config.assemble()?;
    let traj = a.system.simulate(&a.u0, &a.system.zero_control())?;
    let target = a.system.target_of(&traj);
    let mut w = writer(out, "simulate_trajectory.csv")?;
    traj.write_csv(&mut w, a.system.factory().grid(), a.system.schedule())?;
    w.flush()?;
    let m = a.system.state_metric();
    println!("|u0|_H     = {:.6e}", m.norm(&a.u0));
    println!("|u(T)|_H   = {:.6e}", m.norm(&target.terminal));
    println!("|memory|_H = {:.6e}", m.norm(&target.memory));
    Ok(())
}

fn hum(config: &RunConfig, out: &Path) -> Outcome {
    let a = config.assemble()?;
    let eps = config.hum.smallest_epsilon();
    let s = solve_penalized(&a.system, &a.u0, eps, &config.hum)?;
    let traj = a.system.simulate(&a.u0, &s.control)?;
    let mut w = writer(out, "hum_trajectory.csv")?;
    traj.write_csv(&mut w, a.system.factory().grid(), a.system.schedule())?;
    w.flush()?;
    println!("epsilon         = {:e}", s.epsilon);
    println!("cost            = {:.6e}", s.cost);
    println!("cost_constant   = {:.6e}", s.cost_constant);
    println!("state_residual  = {:.6e}", s.state_residual);
    println!("memory_residual = {:.6e}", s.memory_residual);
    println!("cg_iterations   = {}", s.cg_iterations);
    println!("converged       = {}", s.converged);
    if !s.converged {
        return Err(Failure::Compute(format!(
            "conjugate gradient hit the iteration cap ({})",
            config.hum.cg_max_iter
        )));
    }
    Ok(())
}

fn sweep(config: &RunConfig, out: &Path) -> Outcome {
    let a = config.assemble()?;
    let report = penalty_sweep(&a.system, &a.u0, &config.hum)?;
    let mut w = writer(out, "sweep.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let points: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.cost > 0.0)
        .map(|r| (1.0 / r.epsilon, r.cost))
        .collect();
    if !points.is_empty() {
        let plot = Plot {
            title: "penalized control cost".into(),
            x_label: "1/epsilon".into(),
            y_label: "control cost".into(),
            x_log: true,
            y_log: true,
            series: vec![Series {
                label: "cost".into(),
                points,
            }],
        };
        fs::write(out.join("sweep_cost.svg"), emit_svg(&plot)?)?;
    }
    for r in &report.rows {
        println!(
            "eps={:.0e} cost={:.6e} state_residual={:.3e} memory_residual={:.3e} iterations={}{}",
            r.epsilon,
            r.cost,
            r.state_residual,
            r.memory_residual,
            r.cg_iterations,
            if r.converged { "" } else { " NOT CONVERGED" }
        );
    }
    println!(
        "signature: {} (slope {:.4})",
        report.signature.name(),
        report.slope
    );
    if report.rows.iter().any(|r| !r.converged) {
        return Err(Failure::Compute("some penalties did not converge".into()));
    }
    Ok(())
}

fn ksweep(config: &RunConfig, out: &Path) -> Outcome {
    let base = Scenario::new("ksweep", config.clone());
    let table = k_sweep(&base, &K_VALUES)?;
    let mut w = writer(out, "ksweep.csv")?;
    table.write_csv(&mut w)?;
    w.flush()?;
    let plot = table.plot();
    if plot
        .series
        .iter()
        .all(|s| !s.points.is_empty() && s.points.iter().all(|p| p.1 > 0.0))
    {
        fs::write(out.join("ksweep.svg"), emit_svg(&plot)?)?;
    }
    let mut text = Vec::new();
    table.write_csv(&mut text)?;
    print!("{}", String::from_utf8_lossy(&text));
    Ok(())
}

fn compare_forms(config: &RunConfig, out: &Path) -> Outcome {
    let base = Scenario::new("forms", config.clone());
    let c = form_comparison(&base)?;
    let mut w = writer(out, "forms.csv")?;
    c.write_csv(&mut w)?;
    w.flush()?;
    let mut text = Vec::new();
    c.write_csv(&mut text)?;
    print!("{}", String::from_utf8_lossy(&text));
    println!("operator gap (Frobenius) = {:.3e}", c.operator_gap);
    Ok(())
}

fn verify(config: &RunConfig) -> Outcome {
    let checks = verify_battery(config, config.output.seed);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        return Err(Failure::Compute(format!("{failed} checks failed")));
    }
    Ok(())
}

fn suite(out: &Path) -> Outcome {
    let records = run_suite(&named_scenarios(), out)?;
    for r in &records {
        println!(
            "{:<30} {:<14} slope={:.4} cost={:.4e} refined={:.4e} state={:.3e} memory={:.3e}",
            r.scenario,
            r.signature.name(),
            r.slope,
            r.cost_base,
            r.cost_refined,
            r.state_residual,
            r.memory_residual
        );
    }
    Ok(())
}
