//! Named scenarios, refinement verdicts, K-sweeps and form comparisons, with
//! CSV and SVG artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::coefficients::{classify_exponent, Endpoint, Regime};
use crate::config::{
    ControlSpec, GridConfig, InitialDatum, KernelSpec, OutputConfig, PathSpec, ProblemConfig,
    ProfileSpec, RunConfig, TimeCoefficientSpec,
};
use crate::discretization::{BoundaryTreatment, Form};
use crate::duality::TargetMode;
use crate::error::{Error, Result};
use crate::hum::{penalty_sweep, solve_penalized, HumConfig, Signature, SweepReport};
use crate::svg::{emit_svg, Plot, Series};

pub const VERDICT_CSV_HEADER: &str =
    "scenario,signature,slope,cost_base,cost_refined,state_residual,memory_residual";

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: RunConfig,
}

impl Scenario {
    pub fn new(name: impl Into<String>, config: RunConfig) -> Self {
        Self {
            name: name.into(),
            config,
        }
    }

    /// Same scenario with `N` and `Nt` doubled.
    pub fn refined(&self) -> Self {
        let mut c = self.config.clone();
        c.grid.n *= 2;
        c.grid.nt *= 2;
        Self::new(self.name.clone(), c)
    }

    pub fn with_profile(&self, profile: ProfileSpec) -> Self {
        let mut c = self.config.clone();
        c.problem.profile = profile;
        Self::new(self.name.clone(), c)
    }

    pub fn with_form(&self, form: Form) -> Self {
        let mut c = self.config.clone();
        c.problem.form = form;
        Self::new(self.name.clone(), c)
    }

    /// Penalty sweep on this scenario's own initial datum.
    pub fn sweep(&self) -> Result<(SweepReport, f64)> {
        let a = self.config.assemble()?;
        let report = penalty_sweep(&a.system, &a.u0, &self.config.hum)?;
        Ok((report, a.system.state_metric().norm(&a.u0)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRecord {
    pub scenario: String,
    pub signature: Signature,
    pub slope: f64,
    /// Cost at the smallest penalty on the base mesh.
    pub cost_base: f64,
    /// Same on the mesh with `N` and `Nt` doubled.
    pub cost_refined: f64,
    pub refined_signature: Signature,
    /// Residuals at the smallest penalty on the base mesh.
    pub state_residual: f64,
    pub memory_residual: f64,
    /// `|u0|_H` on the base mesh.
    pub u0_norm: f64,
}

impl VerdictRecord {
    pub fn refinement_ratio(&self) -> f64 {
        self.cost_refined / self.cost_base
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e}",
            self.scenario,
            self.signature.name(),
            self.slope,
            self.cost_base,
            self.cost_refined,
            self.state_residual,
            self.memory_residual
        )
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn cost_plot(title: &str, series: &[(&str, &SweepReport)]) -> Plot {
    Plot {
        title: title.to_string(),
        x_label: "1/epsilon".into(),
        y_label: "control cost".into(),
        x_log: true,
        y_log: true,
        series: series
            .iter()
            .map(|(label, r)| Series {
                label: label.to_string(),
                points: r
                    .rows
                    .iter()
                    .filter(|s| s.cost > 0.0)
                    .map(|s| (1.0 / s.epsilon, s.cost))
                    .collect(),
            })
            .filter(|s| !s.points.is_empty())
            .collect(),
    }
}

fn write_artifacts(
    dir: &Path,
    scenario: &Scenario,
    base: &SweepReport,
    refined: &SweepReport,
    record: &VerdictRecord,
) -> Result<()> {
    let name = &scenario.name;
    base.write_csv(&mut create(dir, &format!("{name}_sweep.csv"))?)?;
    refined.write_csv(&mut create(dir, &format!("{name}_sweep_refined.csv"))?)?;

    let a = scenario.config.assemble()?;
    let traj = a.system.simulate(&a.u0, &base.smallest().control)?;
    let mut out = create(dir, &format!("{name}_trajectory.csv"))?;
    traj.write_csv(&mut out, a.system.factory().grid(), a.system.schedule())?;
    out.flush()?;

    let plot = cost_plot(name, &[("base", base), ("refined", refined)]);
    if !plot.series.is_empty() {
        fs::write(dir.join(format!("{name}_cost.svg")), emit_svg(&plot)?)?;
    }

    let mut v = create(dir, &format!("{name}_verdict.csv"))?;
    writeln!(v, "{VERDICT_CSV_HEADER}")?;
    writeln!(v, "{}", record.csv_row())?;
    v.flush()?;
    Ok(())
}

fn write_error_marker(dir: &Path, name: &str, err: &Error) {
    if let Ok(mut v) = create(dir, &format!("{name}_verdict.csv")) {
        let msg = err.to_string().replace([',', '\n'], " ");
        let _ = writeln!(v, "{VERDICT_CSV_HEADER}");
        let _ = writeln!(v, "{name},error: {msg},NaN,NaN,NaN,NaN,NaN");
        let _ = v.flush();
    }
}

/// Penalty sweeps on the base and refined meshes. When `out` is given, the
/// sweep CSVs, the trajectory of the smallest-penalty control, a cost plot
/// and the verdict row are written there.
pub fn run_scenario(scenario: &Scenario, out: Option<&Path>) -> Result<VerdictRecord> {
    let run = || -> Result<VerdictRecord> {
        let refined_scenario = scenario.refined();
        let (base, refined) = rayon::join(|| scenario.sweep(), || refined_scenario.sweep());
        let ((base, u0_norm), (refined, _)) = (base?, refined?);
        let best = base.smallest();
        let record = VerdictRecord {
            scenario: scenario.name.clone(),
            signature: base.signature,
            slope: base.slope,
            cost_base: best.cost,
            cost_refined: refined.smallest().cost,
            refined_signature: refined.signature,
            state_residual: best.state_residual,
            memory_residual: best.memory_residual,
            u0_norm,
        };
        if let Some(dir) = out {
            write_artifacts(dir, scenario, &base, &refined, &record)?;
        }
        Ok(record)
    };
    run().inspect_err(|e| {
        if let Some(dir) = out {
            write_error_marker(dir, &scenario.name, e);
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum KSweepOutcome {
    Inadmissible,
    Ran {
        cost_constant: f64,
        cost_constant_refined: f64,
        state_residual: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSweepRow {
    pub k: f64,
    pub regime: Regime,
    pub outcome: KSweepOutcome,
}

impl KSweepRow {
    pub fn cost_constant(&self) -> Option<f64> {
        match self.outcome {
            KSweepOutcome::Ran { cost_constant, .. } => Some(cost_constant),
            KSweepOutcome::Inadmissible => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSweepTable {
    pub rows: Vec<KSweepRow>,
}

pub const KSWEEP_CSV_HEADER: &str = "k,regime,cost_constant,cost_constant_refined,state_residual";

impl KSweepTable {
    /// Cost constants of the admissible rows, in row order.
    pub fn admissible_costs(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.cost_constant().map(|c| (r.k, c)))
            .collect()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.admissible_costs().windows(2).all(|w| w[1].1 > w[0].1)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{KSWEEP_CSV_HEADER}")?;
        for r in &self.rows {
            match r.outcome {
                KSweepOutcome::Inadmissible => writeln!(
                    out,
                    "{},{},Inadmissible,Inadmissible,",
                    r.k,
                    r.regime.short_name()
                )?,
                KSweepOutcome::Ran {
                    cost_constant,
                    cost_constant_refined,
                    state_residual,
                } => writeln!(
                    out,
                    "{},{},{:e},{:e},{:e}",
                    r.k,
                    r.regime.short_name(),
                    cost_constant,
                    cost_constant_refined,
                    state_residual
                )?,
            }
        }
        Ok(())
    }

    pub fn plot(&self) -> Plot {
        let ran: Vec<&KSweepRow> = self
            .rows
            .iter()
            .filter(|r| r.cost_constant().is_some())
            .collect();
        let pick = |refined: bool| -> Vec<(f64, f64)> {
            ran.iter()
                .filter_map(|r| match r.outcome {
                    KSweepOutcome::Ran {
                        cost_constant,
                        cost_constant_refined,
                        ..
                    } => Some((
                        r.k,
                        if refined {
                            cost_constant_refined
                        } else {
                            cost_constant
                        },
                    )),
                    KSweepOutcome::Inadmissible => None,
                })
                .collect()
        };
        Plot {
            title: "cost constant against degeneracy exponent".into(),
            x_label: "K".into(),
            y_label: "cost / |u0|".into(),
            x_log: false,
            y_log: true,
            series: vec![
                Series {
                    label: "base".into(),
                    points: pick(false),
                },
                Series {
                    label: "refined".into(),
                    points: pick(true),
                },
            ],
        }
    }
}

fn cost_constant_at(scenario: &Scenario) -> Result<(f64, f64)> {
    let a = scenario.config.assemble()?;
    let hum = &scenario.config.hum;
    let s = solve_penalized(&a.system, &a.u0, hum.smallest_epsilon(), hum)?;
    Ok((s.cost_constant, s.state_residual))
}

/// Cost constant at the smallest penalty for each exponent, on the base and
/// refined meshes. Exponents `K >= 2` are recorded as inadmissible without
/// running.
pub fn k_sweep(base: &Scenario, ks: &[f64]) -> Result<KSweepTable> {
    let rows = ks
        .par_iter()
        .map(|&k| {
            let regime = classify_exponent(k)?;
            if !regime.is_admissible() {
                return Ok(KSweepRow {
                    k,
                    regime,
                    outcome: KSweepOutcome::Inadmissible,
                });
            }
            let s = base.with_profile(base.config.problem.profile.with_exponent(k));
            let r = s.refined();
            let (coarse, fine) = rayon::join(|| cost_constant_at(&s), || cost_constant_at(&r));
            let ((cost_constant, state_residual), (cost_constant_refined, _)) = (coarse?, fine?);
            Ok(KSweepRow {
                k,
                regime,
                outcome: KSweepOutcome::Ran {
                    cost_constant,
                    cost_constant_refined,
                    state_residual,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KSweepTable { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormOutcome {
    pub form: Form,
    pub boundary: [BoundaryTreatment; 2],
    pub signature: Signature,
    pub slope: f64,
    pub cost_constant: f64,
    pub state_residual: f64,
    pub memory_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormComparison {
    pub non_divergence: FormOutcome,
    pub divergence: FormOutcome,
    /// Frobenius norm of the difference of the unit operators.
    pub operator_gap: f64,
}

pub const FORMS_CSV_HEADER: &str =
    "form,boundary_left,boundary_right,signature,slope,cost_constant,state_residual,memory_residual";

impl FormComparison {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{FORMS_CSV_HEADER}")?;
        for o in [&self.non_divergence, &self.divergence] {
            writeln!(
                out,
                "{},{:?},{:?},{},{:e},{:e},{:e},{:e}",
                o.form.index(),
                o.boundary[0],
                o.boundary[1],
                o.signature.name(),
                o.slope,
                o.cost_constant,
                o.state_residual,
                o.memory_residual
            )?;
        }
        Ok(())
    }
}

/// Runs the scenario in both forms with identical geometry and settings.
pub fn form_comparison(base: &Scenario) -> Result<FormComparison> {
    let run = |form: Form| -> Result<(FormOutcome, crate::tridiag::Tridiagonal)> {
        let s = base.with_form(form);
        let a = s.config.assemble()?;
        let report = penalty_sweep(&a.system, &a.u0, &s.config.hum)?;
        let best = report.smallest();
        let f = a.system.factory();
        Ok((
            FormOutcome {
                form,
                boundary: [f.boundary(Endpoint::Left), f.boundary(Endpoint::Right)],
                signature: report.signature,
                slope: report.slope,
                cost_constant: best.cost_constant,
                state_residual: best.state_residual,
                memory_residual: best.memory_residual,
            },
            f.unit_operator().clone(),
        ))
    };
    let (nd, dv) = rayon::join(|| run(Form::NonDivergence), || run(Form::Divergence));
    let ((non_divergence, a1), (divergence, a2)) = (nd?, dv?);
    let operator_gap = a1
        .lower
        .iter()
        .zip(&a2.lower)
        .chain(a1.diag.iter().zip(&a2.diag))
        .chain(a1.upper.iter().zip(&a2.upper))
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(FormComparison {
        non_divergence,
        divergence,
        operator_gap,
    })
}

fn scenario_config(
    form: Form,
    profile: ProfileSpec,
    b: TimeCoefficientSpec,
    kernel: KernelSpec,
    grid: GridConfig,
    control: ControlSpec,
    target_mode: TargetMode,
) -> RunConfig {
    RunConfig {
        problem: ProblemConfig {
            form,
            profile,
            b,
            kernel,
            target_kernel: None,
            horizon: 1.0,
            u0: InitialDatum::SineMode(1),
        },
        grid,
        control,
        hum: HumConfig {
            target_mode,
            ..HumConfig::default()
        },
        output: OutputConfig::default(),
    }
}

/// Weakly degenerate divergence-form problem without memory, fixed region.
pub fn s2_degenerate_baseline() -> Scenario {
    Scenario::new(
        "S2_degenerate_baseline",
        scenario_config(
            Form::Divergence,
            ProfileSpec::Power {
                endpoint: Endpoint::Left,
                k: 0.75,
            },
            TimeCoefficientSpec::Affine {
                intercept: 1.0,
                slope: 0.5,
            },
            KernelSpec::Zero,
            GridConfig {
                n: 32,
                nt: 64,
                gamma: 2.0,
                theta: 1.0,
            },
            ControlSpec::Fixed {
                left: 0.3,
                right: 0.8,
            },
            TargetMode::ClassicalOnly,
        ),
    )
}

/// Heat equation with constant memory and a fixed region, memory-type target.
pub fn s3_fixed_memory_obstruction() -> Scenario {
    Scenario::new(
        "S3_fixed_memory_obstruction",
        scenario_config(
            Form::Divergence,
            ProfileSpec::Constant,
            TimeCoefficientSpec::Constant { value: 1.0 },
            KernelSpec::Constant { value: 1.0 },
            GridConfig {
                n: 32,
                nt: 64,
                gamma: 1.0,
                theta: 1.0,
            },
            ControlSpec::Fixed {
                left: 0.3,
                right: 0.8,
            },
            TargetMode::MemoryType,
        ),
    )
}

/// Strongly degenerate non-divergence problem with exponential memory and a
/// region sweeping the domain.
pub fn s4_moving_memory() -> Scenario {
    Scenario::new(
        "S4_moving_memory",
        scenario_config(
            Form::NonDivergence,
            ProfileSpec::Power {
                endpoint: Endpoint::Left,
                k: 1.5,
            },
            TimeCoefficientSpec::Sinusoidal {
                mean: 2.0,
                amplitude: 0.5,
                frequency: 1.0,
            },
            KernelSpec::Exponential {
                amplitude: 1.0,
                rate: 1.0,
            },
            GridConfig {
                n: 64,
                nt: 128,
                gamma: 2.0,
                theta: 1.0,
            },
            ControlSpec::Moving {
                delta: 0.15,
                path: PathSpec::Sweep,
            },
            TargetMode::MemoryType,
        ),
    )
}

pub fn named_scenarios() -> Vec<Scenario> {
    vec![
        s2_degenerate_baseline(),
        s3_fixed_memory_obstruction(),
        s4_moving_memory(),
    ]
}

pub fn scenario_by_name(name: &str) -> Option<Scenario> {
    named_scenarios().into_iter().find(|s| s.name == name)
}

/// Runs every scenario concurrently and writes `suite_verdicts.csv` in input
/// order. Artifacts of different scenarios never share a file.
pub fn run_suite(scenarios: &[Scenario], out: &Path) -> Result<Vec<VerdictRecord>> {
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("scenario names must be unique".into()));
    }
    fs::create_dir_all(out)?;
    let results: Vec<Result<VerdictRecord>> = scenarios
        .par_iter()
        .map(|s| run_scenario(s, Some(out)))
        .collect();
    let mut v = create(out, "suite_verdicts.csv")?;
    writeln!(v, "{VERDICT_CSV_HEADER}")?;
    let mut records = Vec::with_capacity(results.len());
    let mut first_err = None;
    for (s, r) in scenarios.iter().zip(results) {
        match r {
            Ok(rec) => {
                writeln!(v, "{}", rec.csv_row())?;
                records.push(rec);
            }
            Err(e) => {
                writeln!(v, "{},error,NaN,NaN,NaN,NaN,NaN", s.name)?;
                first_err.get_or_insert(e);
            }
        }
    }
    v.flush()?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(records),
    }
}

/// Temporal errors of the manufactured solution `u = exp(-t) sin(pi x)` for
/// `a = 1`, `b = 1 + t/2`, no memory, on `T = 1`.
///
/// The source uses the eigenvalue of the discrete operator for the sampled
/// sine mode, so the sampled exact solution solves the semi-discrete problem
/// exactly and the measured error is purely temporal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub theta: f64,
    pub steps: Vec<usize>,
    /// Relative `H`-norm error at the final time.
    pub errors: Vec<f64>,
    /// `log2(e_k / e_{k+1})` for consecutive step counts.
    pub pairwise_orders: Vec<f64>,
    /// Least-squares slope of `log e` against `log dt`.
    pub fitted_order: f64,
}

pub fn temporal_convergence(theta: f64, n: usize, steps: &[usize]) -> Result<ConvergenceStudy> {
    use crate::coefficients::{DegeneracyProfile, MemoryKernel, TimeCoefficient};
    use crate::discretization::{build_grid, DiscreteOperatorFactory};
    use crate::evolution::{rasterize_schedule, ScheduleKind, Stepper, TimeGrid};
    use std::f64::consts::PI;

    if steps.len() < 2 {
        return Err(Error::InvalidInput("need at least two step counts".into()));
    }
    let profile = DegeneracyProfile::power(Endpoint::Left, 0.0)?;
    let grid = build_grid(n, &profile, 1.0)?;
    let b = TimeCoefficient::Affine {
        intercept: 1.0,
        slope: 0.5,
    };
    let factory = DiscreteOperatorFactory::new(Form::Divergence, profile, b, grid.clone(), 1.0)?;
    let metric = factory.metric();
    let u0 = grid.sample(|x| (PI * x).sin());
    let exact = grid.sample(|x| (-1.0f64).exp() * (PI * x).sin());
    let mid = n / 2;
    let lambda_h = -factory.unit_operator().apply(&u0)[mid] / u0[mid];
    let source = |t: f64, x: f64| (-t).exp() * (PI * x).sin() * ((1.0 + 0.5 * t) * lambda_h - 1.0);
    let errors = steps
        .par_iter()
        .map(|&nt| {
            let tgrid = TimeGrid::new(1.0, nt)?;
            let schedule = rasterize_schedule(
                ScheduleKind::Fixed {
                    left: 0.25,
                    right: 0.75,
                },
                &grid,
                &tgrid,
            )?;
            let stepper = Stepper::new(&factory, &MemoryKernel::Zero, tgrid, &schedule, theta)?;
            let zero = vec![vec![0.0; n]; nt + 1];
            let traj = stepper.run_with_source(&u0, &zero, source)?;
            let diff: Vec<f64> = traj
                .terminal()
                .iter()
                .zip(&exact)
                .map(|(a, b)| a - b)
                .collect();
            Ok(metric.norm(&diff) / metric.norm(&exact))
        })
        .collect::<Result<Vec<f64>>>()?;
    let pairwise_orders = errors
        .windows(2)
        .zip(steps.windows(2))
        .map(|(e, s)| (e[0] / e[1]).ln() / (s[1] as f64 / s[0] as f64).ln())
        .collect();
    let log_dt: Vec<f64> = steps.iter().map(|&s| (1.0 / s as f64).ln()).collect();
    let log_e: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(ConvergenceStudy {
        theta,
        steps: steps.to_vec(),
        fitted_order: crate::hum::fit_slope(&log_dt, &log_e),
        errors,
        pairwise_orders,
    })
}

/// One line of the invariant battery.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
    pub note: String,
}

impl CheckResult {
    fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            passed: measured <= threshold,
            note: String::new(),
        }
    }

    fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        Self {
            passed: measured >= threshold,
            ..Self::at_most(name, measured, threshold)
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self {
            name: name.into(),
            measured: f64::NAN,
            threshold: f64::NAN,
            passed: false,
            note: err.to_string(),
        }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<40} measured={:.3e} threshold={:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold
        )?;
        if !self.note.is_empty() {
            write!(f, " ({})", self.note)?;
        }
        Ok(())
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn oracle_gap(config: &RunConfig) -> Result<f64> {
    let mut small = config.clone();
    small.grid.n = 8;
    small.grid.nt = 8;
    let a = small.assemble()?;
    let mut worst = 0.0_f64;
    for eps in [1e-3, 1e-6] {
        let cg = solve_penalized(&a.system, &a.u0, eps, &small.hum)?;
        let dense = crate::hum::solve_dense_oracle(&a.system, &a.u0, eps)?.solution;
        worst = worst
            .max(relative_gap(cg.cost, dense.cost))
            .max(relative_gap(cg.state_residual, dense.state_residual))
            .max(relative_gap(cg.memory_residual, dense.memory_residual));
    }
    Ok(worst)
}

/// Invariant battery for a configuration: degeneracy condition,
/// self-adjointness, adjoint consistency, oracle equivalence on a reduced
/// mesh, penalization monotonicity and temporal convergence orders.
pub fn verify_battery(config: &RunConfig, seed: u64) -> Vec<CheckResult> {
    use crate::coefficients::verify_degeneracy_condition;
    use crate::discretization::self_adjointness_check;
    use crate::duality::adjoint_consistency_test;

    let mut out = Vec::new();
    let a = match config.assemble() {
        Ok(a) => a,
        Err(e) => return vec![CheckResult::failed("assemble", &e)],
    };
    let factory = a.system.factory();
    let nodes = factory.grid().nodes();
    let deg = verify_degeneracy_condition(factory.profile(), nodes);
    let a_max = nodes
        .iter()
        .map(|&x| factory.profile().eval(x))
        .fold(0.0, f64::max);
    out.push(CheckResult {
        passed: deg.holds,
        ..CheckResult::at_most(
            "degeneracy condition violation",
            deg.max_violation,
            1e-12 * a_max,
        )
    });

    let horizon = config.problem.horizon;
    let sa = [0.0, 0.5 * horizon, horizon]
        .iter()
        .map(|&t| self_adjointness_check(factory, t, 10, seed))
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max));
    out.push(match sa {
        Ok(d) => CheckResult::at_most("operator self-adjointness", d, 1e-12),
        Err(e) => CheckResult::failed("operator self-adjointness", &e),
    });

    out.push(match adjoint_consistency_test(&a.system, 20, seed) {
        Ok(d) => CheckResult::at_most("adjoint consistency", d, 1e-10),
        Err(e) => CheckResult::failed("adjoint consistency", &e),
    });

    out.push(match oracle_gap(config) {
        Ok(d) => CheckResult::at_most("CG vs dense oracle (N=Nt=8)", d, 1e-6),
        Err(e) => CheckResult::failed("CG vs dense oracle (N=Nt=8)", &e),
    });

    let mono = solve_penalized(&a.system, &a.u0, 1e-4, &config.hum).and_then(|coarse| {
        solve_penalized(&a.system, &a.u0, 1e-6, &config.hum)
            .map(|fine| fine.state_residual - coarse.state_residual)
    });
    out.push(match mono {
        Ok(d) => CheckResult::at_most("residual(1e-6) - residual(1e-4)", d, 0.0),
        Err(e) => CheckResult::failed("residual(1e-6) - residual(1e-4)", &e),
    });

    for (theta, need) in [(1.0, 0.9), (0.5, 1.9)] {
        let name = format!("temporal order (theta = {theta})");
        out.push(match temporal_convergence(theta, 512, &[32, 64, 128]) {
            Ok(c) => CheckResult::at_least(&name, c.fitted_order, need),
            Err(e) => CheckResult::failed(&name, &e),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(mut s: Scenario) -> Scenario {
        s.config.grid.n = 8;
        s.config.grid.nt = 8;
        s.config.hum.epsilons = vec![1e-2, 1e-3, 1e-4];
        s
    }

    #[test]
    fn named_scenarios_assemble() {
        for s in named_scenarios() {
            s.config.validate().unwrap();
        }
        assert!(scenario_by_name("S3_fixed_memory_obstruction").is_some());
        assert!(scenario_by_name("nope").is_none());
    }

    #[test]
    fn run_scenario_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let s = tiny(s2_degenerate_baseline());
        let rec = run_scenario(&s, Some(dir.path())).unwrap();
        assert!(rec.cost_base > 0.0);
        for f in [
            "sweep.csv",
            "sweep_refined.csv",
            "trajectory.csv",
            "cost.svg",
            "verdict.csv",
        ] {
            assert!(dir.path().join(format!("{}_{f}", s.name)).exists(), "{f}");
        }
        let verdict =
            fs::read_to_string(dir.path().join(format!("{}_verdict.csv", s.name))).unwrap();
        assert!(verdict.starts_with(VERDICT_CSV_HEADER));
        assert_eq!(verdict.lines().count(), 2);
    }

    #[test]
    fn failing_scenario_leaves_marker() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = tiny(s2_degenerate_baseline());
        s.config.grid.n = 1;
        assert!(run_scenario(&s, Some(dir.path())).is_err());
        let verdict =
            fs::read_to_string(dir.path().join(format!("{}_verdict.csv", s.name))).unwrap();
        assert!(verdict.lines().nth(1).unwrap().contains("error"));
    }

    #[test]
    fn k_sweep_marks_inadmissible_rows() {
        let s = tiny(s2_degenerate_baseline());
        let t = k_sweep(&s, &[0.5, 2.0, 2.5]).unwrap();
        assert!(t.rows[0].cost_constant().is_some());
        assert_eq!(t.rows[1].outcome, KSweepOutcome::Inadmissible);
        assert_eq!(t.rows[2].outcome, KSweepOutcome::Inadmissible);
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(
            csv.lines().filter(|l| l.contains("Inadmissible")).count(),
            2
        );
    }

    #[test]
    fn forms_coincide_for_constant_coefficient() {
        let s = tiny(s3_fixed_memory_obstruction());
        let c = form_comparison(&s).unwrap();
        assert!(c.operator_gap < 1e-12);
        assert_eq!(c.divergence.signature, c.non_divergence.signature);
        let r = (c.divergence.cost_constant - c.non_divergence.cost_constant).abs()
            / c.divergence.cost_constant;
        assert!(r < 1e-10);
    }

    #[test]
    fn strongly_degenerate_forms_use_different_boundaries() {
        let s = tiny(s2_degenerate_baseline()).with_profile(ProfileSpec::Power {
            endpoint: Endpoint::Left,
            k: 1.5,
        });
        let c = form_comparison(&s).unwrap();
        assert_eq!(c.non_divergence.boundary[0], BoundaryTreatment::Dirichlet);
        assert_eq!(c.divergence.boundary[0], BoundaryTreatment::ZeroFlux);
        assert!(c.operator_gap > 0.0);
    }
}
