//! Penalized Hilbert Uniqueness Method.
//!
//! For a penalty `eps > 0` the control minimizing
//! `1/2 |f|_U^2 + 1/(2 eps) |L f + d|_Z^2` is `f = L* lambda` with
//! `(L L* + eps I) lambda = -d`. The Gram system lives on the target space
//! (dimension `2N`) and is solved by conjugate gradient in the target inner
//! product, where it is symmetric positive definite.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::duality::{ControlSystem, TargetMode, TargetVector};
use crate::error::{Error, Result};
use crate::evolution::GridFunction;

/// Largest `N * Nt` accepted by [`solve_dense_oracle`].
pub const DENSE_ORACLE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumConfig {
    /// Strictly decreasing penalties.
    pub epsilons: Vec<f64>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Memory block weight; ignored (zero) for classical targets.
    pub rho: f64,
    pub target_mode: TargetMode,
    /// Slope at or below which the sweep reports bounded cost.
    pub bounded_slope: f64,
    /// Slope at or above which the sweep reports cost blow-up.
    pub blowup_slope: f64,
}

impl Default for HumConfig {
    fn default() -> Self {
        Self {
            epsilons: (2..=8).map(|e| 10f64.powi(-e)).collect(),
            cg_tol: 1e-10,
            cg_max_iter: 5000,
            rho: 1.0,
            target_mode: TargetMode::MemoryType,
            bounded_slope: 0.05,
            blowup_slope: 0.25,
        }
    }
}

impl HumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidInput("epsilon schedule is empty".into()));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidInput(
                "penalties must be positive and finite".into(),
            ));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput(
                "penalties must be strictly decreasing".into(),
            ));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::InvalidInput(format!(
                "cg_tol must lie in (0, 1), got {}",
                self.cg_tol
            )));
        }
        if self.cg_max_iter == 0 {
            return Err(Error::InvalidInput("cg_max_iter must be >= 1".into()));
        }
        if self.target_mode == TargetMode::MemoryType && !(self.rho > 0.0) {
            return Err(Error::InvalidInput(format!(
                "rho must be positive for memory-type targets, got {}",
                self.rho
            )));
        }
        if !(self.bounded_slope < self.blowup_slope) {
            return Err(Error::InvalidInput(
                "bounded_slope must be below blowup_slope".into(),
            ));
        }
        Ok(())
    }

    /// Memory block weight actually used: zero for classical targets.
    pub fn effective_rho(&self) -> f64 {
        match self.target_mode {
            TargetMode::ClassicalOnly => 0.0,
            TargetMode::MemoryType => self.rho,
        }
    }

    pub fn smallest_epsilon(&self) -> f64 {
        *self
            .epsilons
            .last()
            .expect("validated schedule is non-empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumSolution {
    pub epsilon: f64,
    pub control: Vec<GridFunction>,
    /// `|f|_U`
    pub cost: f64,
    /// `|f|_U / |u0|_H`, zero for `u0 = 0`.
    pub cost_constant: f64,
    /// `|u(T)|_H` of the re-simulated trajectory.
    pub state_residual: f64,
    /// `|m|_H` of the re-simulated trajectory.
    pub memory_residual: f64,
    pub cg_iterations: usize,
    pub converged: bool,
}

fn finish(
    system: &ControlSystem,
    u0: &[f64],
    epsilon: f64,
    control: Vec<GridFunction>,
    cg_iterations: usize,
    converged: bool,
) -> Result<HumSolution> {
    let reached = system.target(u0, &control)?;
    let metric = system.state_metric();
    let cost = system.control_norm(&control);
    let u0_norm = metric.norm(u0);
    Ok(HumSolution {
        epsilon,
        cost,
        cost_constant: if u0_norm > 0.0 { cost / u0_norm } else { 0.0 },
        state_residual: metric.norm(&reached.terminal),
        memory_residual: metric.norm(&reached.memory),
        control,
        cg_iterations,
        converged,
    })
}

/// `(L L* + eps I) z`, with the memory block removed for classical targets.
fn gram_apply(system: &ControlSystem, z: &TargetVector, epsilon: f64) -> Result<TargetVector> {
    let mut out = system.apply_l(&system.apply_lstar(z)?)?;
    out.axpy(epsilon, z);
    system.project_target(&mut out);
    Ok(out)
}

/// Penalized HUM control for `u0` by conjugate gradient on the Gram system.
pub fn solve_penalized(
    system: &ControlSystem,
    u0: &[f64],
    epsilon: f64,
    config: &HumConfig,
) -> Result<HumSolution> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "penalty must be positive, got {epsilon}"
        )));
    }
    let mut rhs = system.free_drift(u0)?;
    rhs.scale(-1.0);
    system.project_target(&mut rhs);
    let n = system.len();
    let rhs_norm = system.target_norm(&rhs);
    if rhs_norm == 0.0 {
        return finish(system, u0, epsilon, system.zero_control(), 0, true);
    }

    let mut lambda = TargetVector::zeros(n);
    let mut r = rhs;
    let mut p = r.clone();
    let mut rr = system.target_inner(&r, &r);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.cg_max_iter {
        let ap = gram_apply(system, &p, epsilon)?;
        let curvature = system.target_inner(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::CgBreakdown {
                iteration: iterations,
                curvature,
            });
        }
        let alpha = rr / curvature;
        lambda.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        iterations += 1;
        let rr_next = system.target_inner(&r, &r);
        if rr_next.sqrt() <= config.cg_tol * rhs_norm {
            converged = true;
            break;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        let mut next = r.clone();
        next.axpy(beta, &p);
        p = next;
    }
    let control = system.apply_lstar(&lambda)?;
    finish(system, u0, epsilon, control, iterations, converged)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOracleSolution {
    pub solution: HumSolution,
    /// Relative residual of the metric-weighted normal equations.
    pub normal_residual: f64,
    pub singular_values: Vec<f64>,
}

/// Dense `L` in coordinates.
#[derive(Debug, Clone)]
pub struct DenseMap {
    /// Active control nodes `(k, j)`, one per column.
    pub active: Vec<(usize, usize)>,
    /// `2N` rows: terminal state, then accumulated memory.
    pub matrix: DMatrix<f64>,
}

pub fn dense_matrix(system: &ControlSystem) -> Result<DenseMap> {
    let n = system.len();
    let steps = system.time_grid().steps();
    let active: Vec<(usize, usize)> = (0..=steps)
        .flat_map(|k| (0..n).map(move |j| (k, j)))
        .filter(|&(k, j)| system.schedule().mask(k)[j])
        .collect();
    let columns: Vec<Vec<f64>> = active
        .par_iter()
        .map(|&(k, j)| {
            let mut e = system.zero_control();
            e[k][j] = 1.0;
            system.apply_l(&e).map(|z| z.to_vec())
        })
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(2 * n, active.len());
    for (c, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    Ok(DenseMap { active, matrix: m })
}

/// Brute-force penalized HUM: dense `L` and a singular value decomposition of
/// the metric-scaled map.
pub fn solve_dense_oracle(
    system: &ControlSystem,
    u0: &[f64],
    epsilon: f64,
) -> Result<DenseOracleSolution> {
    let n = system.len();
    let steps = system.time_grid().steps();
    let size = n * steps;
    if size > DENSE_ORACLE_LIMIT {
        return Err(Error::SizeGuard {
            size,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "penalty must be positive, got {epsilon}"
        )));
    }
    let DenseMap {
        active,
        matrix: lmat,
    } = dense_matrix(system)?;
    let w = &system.state_metric().weights;
    let rho = system.block_weight();
    let dt = system.time_grid().dt();
    let wz: Vec<f64> = w.iter().copied().chain(w.iter().map(|v| rho * v)).collect();
    let wu: Vec<f64> = active.iter().map(|&(_, j)| dt * w[j]).collect();

    let mut g = lmat.clone();
    for r in 0..g.nrows() {
        for c in 0..g.ncols() {
            g[(r, c)] *= wz[r].sqrt() / wu[c].sqrt();
        }
    }
    let drift = system.free_drift(u0)?.to_vec();
    let d = DVector::from_iterator(2 * n, drift.iter().zip(&wz).map(|(v, s)| v * s.sqrt()));

    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let sigma = &svd.singular_values;
    let ud = u.transpose() * &d;
    let coeff = DVector::from_iterator(
        sigma.len(),
        sigma
            .iter()
            .zip(ud.iter())
            .map(|(s, c)| -c / (s * s + epsilon)),
    );
    // lambda = U coeff - (I - U U^T) d / eps
    let range = u * &ud;
    let lambda = u * &coeff - (&d - &range) / epsilon;
    let normal = &g * (g.transpose() * &lambda) + &lambda * epsilon + &d;
    let d_norm = d.norm();
    let normal_residual = if d_norm > 0.0 {
        normal.norm() / d_norm
    } else {
        0.0
    };

    let scaled = DVector::from_iterator(
        sigma.len(),
        sigma.iter().zip(coeff.iter()).map(|(s, c)| s * c),
    );
    let f_tilde = vt.transpose() * scaled;
    let mut control = system.zero_control();
    for (c, &(k, j)) in active.iter().enumerate() {
        control[k][j] = f_tilde[c] / wu[c].sqrt();
    }
    let solution = finish(system, u0, epsilon, control, 0, true)?;
    Ok(DenseOracleSolution {
        solution,
        normal_residual,
        singular_values: sigma.iter().copied().collect(),
    })
}

/// Numerical controllability signature of a penalty sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Signature {
    BoundedCost,
    CostBlowup,
    Indeterminate,
}

impl Signature {
    pub fn name(self) -> &'static str {
        match self {
            Signature::BoundedCost => "BoundedCost",
            Signature::CostBlowup => "CostBlowup",
            Signature::Indeterminate => "Indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<HumSolution>,
    /// Least-squares slope of `log cost` against `log(1/eps)` over the last
    /// three penalties.
    pub slope: f64,
    pub signature: Signature,
}

pub const SWEEP_CSV_HEADER: &str =
    "epsilon,cost,cost_constant,state_residual,memory_residual,cg_iterations,converged";

impl SweepReport {
    pub fn smallest(&self) -> &HumSolution {
        self.rows.last().expect("sweep has rows")
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{SWEEP_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{},{}",
                r.epsilon,
                r.cost,
                r.cost_constant,
                r.state_residual,
                r.memory_residual,
                r.cg_iterations,
                r.converged
            )?;
        }
        Ok(())
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

pub fn classify_slope(slope: f64, config: &HumConfig) -> Signature {
    if slope <= config.bounded_slope {
        Signature::BoundedCost
    } else if slope >= config.blowup_slope {
        Signature::CostBlowup
    } else {
        Signature::Indeterminate
    }
}

/// Solves for every penalty of the schedule (concurrently) and classifies the
/// growth of the cost as the penalty vanishes.
pub fn penalty_sweep(
    system: &ControlSystem,
    u0: &[f64],
    config: &HumConfig,
) -> Result<SweepReport> {
    config.validate()?;
    if config.epsilons.len() < 3 {
        return Err(Error::InvalidInput(
            "a penalty sweep needs at least 3 penalties".into(),
        ));
    }
    let rows: Vec<HumSolution> = config
        .epsilons
        .par_iter()
        .map(|&eps| solve_penalized(system, u0, eps, config))
        .collect::<Result<_>>()?;
    let tail = &rows[rows.len() - 3..];
    let slope = if tail.iter().any(|r| r.cost == 0.0) {
        0.0
    } else {
        let x: Vec<f64> = tail.iter().map(|r| (1.0 / r.epsilon).ln()).collect();
        let y: Vec<f64> = tail.iter().map(|r| r.cost.ln()).collect();
        fit_slope(&x, &y)
    };
    Ok(SweepReport {
        signature: classify_slope(slope, config),
        rows,
        slope,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityEstimate {
    /// Largest observed `|f|_U / |u0|_H`: a lower estimate of the cost constant.
    pub constant: f64,
    pub trial: usize,
    /// The maximizing unit-norm initial datum.
    pub initial_datum: Vec<f64>,
    pub per_trial: Vec<f64>,
}

/// Lower estimate of the control cost constant from random unit-norm initial
/// data, solved at the smallest penalty of the schedule.
pub fn observability_constant_probe(
    system: &ControlSystem,
    trials: usize,
    config: &HumConfig,
    seed: u64,
) -> Result<ObservabilityEstimate> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    config.validate()?;
    let eps = config.smallest_epsilon();
    let metric = system.state_metric();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Vec<f64>> = (0..trials)
        .map(|_| {
            let v: Vec<f64> = (0..system.len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let nrm = metric.norm(&v);
            v.into_iter().map(|x| x / nrm).collect()
        })
        .collect();
    let per_trial: Vec<f64> = data
        .par_iter()
        .map(|u0| solve_penalized(system, u0, eps, config).map(|s| s.cost_constant))
        .collect::<Result<_>>()?;
    let (trial, constant) =
        per_trial
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, c)| {
                if c > best.1 {
                    (i, c)
                } else {
                    best
                }
            });
    Ok(ObservabilityEstimate {
        constant,
        trial,
        initial_datum: data[trial].clone(),
        per_trial,
    })
}
