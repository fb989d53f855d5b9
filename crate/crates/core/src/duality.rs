//! The control-to-target map `L : f -> (u(T), m)` and its exact discrete
//! adjoint.
//!
//! `L*` is the transpose of the time-stepping recurrence, obtained by a
//! reverse sweep
//!
//! ```text
//! S_nᵀ q^n = e_n + (I + dt (1 - theta) A_n)ᵀ q^{n+1} - dt^2 sum_{m > n} M(t_m, t_n) q^m
//! ```
//!
//! with `e_n` collecting the terminal and memory-target sensitivities. The
//! control is read off as `P_k (theta q^k + (1 - theta) q^{k+1}) / W`, which
//! is the Riesz representer in the control metric `dt * W` on the masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::MemoryKernel;
use crate::discretization::{DiscreteOperatorFactory, StateSpaceMetric};
use crate::error::{check_len, Error, Result};
use crate::evolution::{
    target_weights, ControlSchedule, GridFunction, History, Stepper, TimeGrid, Trajectory,
};

/// Which target the control must reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// `u(T) = 0` only.
    ClassicalOnly,
    /// `u(T) = 0` and the accumulated memory vanishes.
    MemoryType,
}

/// Terminal state and accumulated memory.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub terminal: GridFunction,
    pub memory: GridFunction,
}

impl TargetVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            terminal: vec![0.0; n],
            memory: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }

    pub fn scale(&mut self, s: f64) {
        self.terminal.iter_mut().for_each(|v| *v *= s);
        self.memory.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &TargetVector) {
        for (a, b) in self.terminal.iter_mut().zip(&other.terminal) {
            *a += s * b;
        }
        for (a, b) in self.memory.iter_mut().zip(&other.memory) {
            *a += s * b;
        }
    }

    /// Flattened `[terminal, memory]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.terminal.iter().chain(&self.memory).copied().collect()
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let n = v.len() / 2;
        Self {
            terminal: v[..n].to_vec(),
            memory: v[n..].to_vec(),
        }
    }
}

/// Discrete `L2(0, T; H_i)` restricted to the control masks: weight
/// `dt * W_j` on every active `(k, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpaceMetric {
    pub time_weight: f64,
    pub node_weights: Vec<f64>,
    pub masks: Vec<Vec<bool>>,
}

impl ControlSpaceMetric {
    pub fn inner_product(&self, f: &[GridFunction], g: &[GridFunction]) -> f64 {
        let mut s = 0.0;
        for ((fk, gk), mk) in f.iter().zip(g).zip(&self.masks) {
            for j in 0..fk.len() {
                if mk[j] {
                    s += self.node_weights[j] * fk[j] * gk[j];
                }
            }
        }
        self.time_weight * s
    }

    pub fn norm(&self, f: &[GridFunction]) -> f64 {
        self.inner_product(f, f).max(0.0).sqrt()
    }
}

/// A fully discretized control problem: forward scheme, masks, target kernel
/// and the metrics on control and target spaces.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    factory: DiscreteOperatorFactory,
    schedule: ControlSchedule,
    stepper: Stepper,
    kernel: MemoryKernel,
    target_kernel: MemoryKernel,
    target_weights: Vec<f64>,
    block_weight: f64,
    control_metric: ControlSpaceMetric,
}

impl ControlSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        factory: DiscreteOperatorFactory,
        kernel: MemoryKernel,
        target_kernel: MemoryKernel,
        tgrid: TimeGrid,
        schedule: ControlSchedule,
        theta: f64,
        mode: TargetMode,
        block_weight: f64,
    ) -> Result<Self> {
        let block_weight = match mode {
            TargetMode::ClassicalOnly => 0.0,
            TargetMode::MemoryType => {
                if !(block_weight > 0.0) || !block_weight.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "memory block weight must be positive, got {block_weight}"
                    )));
                }
                block_weight
            }
        };
        check_len(
            "schedule time nodes",
            tgrid.steps() + 1,
            schedule.masks().len(),
        )?;
        target_kernel.check_bounded(&tgrid.times())?;
        let stepper = Stepper::new(&factory, &kernel, tgrid, &schedule, theta)?;
        let target_weights = target_weights(&target_kernel, &tgrid);
        let control_metric = ControlSpaceMetric {
            time_weight: tgrid.dt(),
            node_weights: factory.metric().weights.clone(),
            masks: schedule.masks().to_vec(),
        };
        Ok(Self {
            factory,
            schedule,
            stepper,
            kernel,
            target_kernel,
            target_weights,
            block_weight,
            control_metric,
        })
    }

    pub fn factory(&self) -> &DiscreteOperatorFactory {
        &self.factory
    }

    pub fn schedule(&self) -> &ControlSchedule {
        &self.schedule
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    pub fn kernel(&self) -> &MemoryKernel {
        &self.kernel
    }

    pub fn target_kernel(&self) -> &MemoryKernel {
        &self.target_kernel
    }

    pub fn time_grid(&self) -> &TimeGrid {
        self.stepper.time_grid()
    }

    pub fn state_metric(&self) -> &StateSpaceMetric {
        self.factory.metric()
    }

    pub fn control_metric(&self) -> &ControlSpaceMetric {
        &self.control_metric
    }

    /// Relative weight `rho` of the memory block; zero for classical targets.
    pub fn block_weight(&self) -> f64 {
        self.block_weight
    }

    pub fn mode(&self) -> TargetMode {
        if self.block_weight == 0.0 {
            TargetMode::ClassicalOnly
        } else {
            TargetMode::MemoryType
        }
    }

    pub fn len(&self) -> usize {
        self.stepper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stepper.is_empty()
    }

    pub fn zero_control(&self) -> Vec<GridFunction> {
        vec![vec![0.0; self.len()]; self.time_grid().steps() + 1]
    }

    pub fn target_inner(&self, a: &TargetVector, b: &TargetVector) -> f64 {
        let m = self.state_metric();
        let mut s = m.dot(&a.terminal, &b.terminal);
        if self.block_weight != 0.0 {
            s += self.block_weight * m.dot(&a.memory, &b.memory);
        }
        s
    }

    pub fn target_norm(&self, a: &TargetVector) -> f64 {
        self.target_inner(a, a).max(0.0).sqrt()
    }

    pub fn control_inner(&self, f: &[GridFunction], g: &[GridFunction]) -> f64 {
        self.control_metric.inner_product(f, g)
    }

    pub fn control_norm(&self, f: &[GridFunction]) -> f64 {
        self.control_metric.norm(f)
    }

    /// Zeroes the memory block when it carries no weight.
    pub(crate) fn project_target(&self, z: &mut TargetVector) {
        if self.block_weight == 0.0 {
            z.memory.fill(0.0);
        }
    }

    pub fn simulate(&self, u0: &[f64], f: &[GridFunction]) -> Result<Trajectory> {
        self.stepper.run(u0, f)
    }

    /// Terminal state and accumulated memory of a trajectory.
    pub fn target_of(&self, trajectory: &Trajectory) -> TargetVector {
        let n = self.len();
        let mut memory = vec![0.0; n];
        for (w, u) in self.target_weights.iter().zip(&trajectory.states) {
            for (m, v) in memory.iter_mut().zip(u) {
                *m += w * v;
            }
        }
        TargetVector {
            terminal: trajectory.terminal().to_vec(),
            memory,
        }
    }

    /// Full target reached from `u0` under control `f`.
    pub fn target(&self, u0: &[f64], f: &[GridFunction]) -> Result<TargetVector> {
        Ok(self.target_of(&self.simulate(u0, f)?))
    }

    /// `L f`: the target reached from rest.
    pub fn apply_l(&self, f: &[GridFunction]) -> Result<TargetVector> {
        self.target(&vec![0.0; self.len()], f)
    }

    /// Uncontrolled contribution `d`; null control solves `L f = -d`.
    pub fn free_drift(&self, u0: &[f64]) -> Result<TargetVector> {
        self.target(u0, &self.zero_control())
    }

    /// `L* z`, the adjoint of [`ControlSystem::apply_l`] with respect to the
    /// control and target metrics.
    pub fn apply_lstar(&self, z: &TargetVector) -> Result<Vec<GridFunction>> {
        let n = self.len();
        check_len("target terminal block", n, z.terminal.len())?;
        check_len("target memory block", n, z.memory.len())?;
        let st = &self.stepper;
        let steps = st.tgrid.steps();
        let dt = st.tgrid.dt();
        let theta = st.theta;
        let w = &self.state_metric().weights;
        let rho = self.block_weight;

        let weighted_terminal: Vec<f64> = z.terminal.iter().zip(w).map(|(a, b)| a * b).collect();
        let weighted_memory: Vec<f64> = z.memory.iter().zip(w).map(|(a, b)| rho * a * b).collect();

        // q[n] for n = 1..=steps, plus q[steps + 1] = 0; q[0] stays zero
        let mut q: Vec<GridFunction> = vec![vec![0.0; n]; steps + 2];
        let mut hist = vec![0.0; n];
        for step in (1..=steps).rev() {
            let mut rhs = vec![0.0; n];
            if step == steps {
                rhs.copy_from_slice(&weighted_terminal);
            }
            if rho != 0.0 {
                let tw = self.target_weights[step];
                for (r, m) in rhs.iter_mut().zip(&weighted_memory) {
                    *r += tw * m;
                }
            }
            if step < steps {
                let next = &q[step + 1];
                for (r, v) in rhs.iter_mut().zip(next) {
                    *r += v;
                }
                if theta < 1.0 {
                    let at = st.operators[step].transpose().apply(next);
                    for (r, v) in rhs.iter_mut().zip(&at) {
                        *r += dt * (1.0 - theta) * v;
                    }
                }
            }
            self.adjoint_history(&q, step, &mut hist);
            for (r, h) in rhs.iter_mut().zip(&hist) {
                *r -= dt * dt * h;
            }
            q[step] = st.lhs[step].transpose().solve(&rhs)?;
        }

        let mut out = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let mask = &st.masks[k];
            let g: GridFunction = (0..n)
                .map(|j| {
                    if !mask[j] {
                        return 0.0;
                    }
                    let cur = if k >= 1 { theta * q[k][j] } else { 0.0 };
                    let nxt = if k < steps {
                        (1.0 - theta) * q[k + 1][j]
                    } else {
                        0.0
                    };
                    (cur + nxt) / w[j]
                })
                .collect();
            out.push(g);
        }
        Ok(out)
    }

    /// Writes `sum_{m > n} M(t_m, t_n) q^m` into `out`. For exponential
    /// kernels `out` must carry the value from step `n + 1`.
    fn adjoint_history(&self, q: &[GridFunction], n: usize, out: &mut [f64]) {
        let steps = self.stepper.tgrid.steps();
        match &self.stepper.history {
            History::None => {}
            History::Exponential { amplitude, decay } => {
                if n == steps {
                    out.fill(0.0);
                } else {
                    for (o, v) in out.iter_mut().zip(&q[n + 1]) {
                        *o = decay * (*o + amplitude * v);
                    }
                }
            }
            History::Dense(table) => {
                out.fill(0.0);
                for (m, row) in table.iter().enumerate().skip(n + 1) {
                    let c = row[n];
                    for (o, v) in out.iter_mut().zip(&q[m]) {
                        *o += c * v;
                    }
                }
            }
        }
    }

    /// Random control supported on the masks.
    pub fn random_control(&self, rng: &mut impl Rng) -> Vec<GridFunction> {
        let mut f: Vec<GridFunction> = (0..=self.time_grid().steps())
            .map(|_| (0..self.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        self.schedule.project_trajectory(&mut f);
        f
    }

    pub fn random_target(&self, rng: &mut impl Rng) -> TargetVector {
        let n = self.len();
        TargetVector {
            terminal: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            memory: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }
}

/// Largest `|<Lf, z> - <f, L*z>| / (|Lf| |z| + |f| |L*z|)` over random pairs.
pub fn adjoint_consistency_test(system: &ControlSystem, trials: usize, seed: u64) -> Result<f64> {
    adjoint_consistency_with(system, system.control_metric(), trials, seed)
}

/// As [`adjoint_consistency_test`], pairing controls in an arbitrary metric.
pub fn adjoint_consistency_with(
    system: &ControlSystem,
    control_metric: &ControlSpaceMetric,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let f = system.random_control(&mut rng);
        let z = system.random_target(&mut rng);
        let lf = system.apply_l(&f)?;
        let lsz = system.apply_lstar(&z)?;
        let lhs = system.target_inner(&lf, &z);
        let rhs = control_metric.inner_product(&f, &lsz);
        let scale = system.target_norm(&lf) * system.target_norm(&z)
            + control_metric.norm(&f) * control_metric.norm(&lsz);
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{DegeneracyProfile, Endpoint, TimeCoefficient};
    use crate::discretization::{build_grid, Form};
    use crate::evolution::{rasterize_schedule, CenterPath, ScheduleKind};

    fn system(mode: TargetMode, kernel: MemoryKernel, theta: f64) -> ControlSystem {
        let p = DegeneracyProfile::power(Endpoint::Left, 1.5).unwrap();
        let grid = build_grid(8, &p, 2.0).unwrap();
        let b = TimeCoefficient::Sinusoidal {
            mean: 2.0,
            amplitude: 0.5,
            frequency: 1.0,
        };
        let f = DiscreteOperatorFactory::new(Form::NonDivergence, p, b, grid.clone(), 1.0).unwrap();
        let tg = TimeGrid::new(1.0, 8).unwrap();
        let s = rasterize_schedule(
            ScheduleKind::Moving {
                half_width: 0.2,
                path: CenterPath::Sweep,
            },
            &grid,
            &tg,
        )
        .unwrap();
        ControlSystem::new(f, kernel.clone(), kernel, tg, s, theta, mode, 1.0).unwrap()
    }

    fn exp_kernel() -> MemoryKernel {
        MemoryKernel::Exponential {
            amplitude: 1.0,
            rate: 2.0,
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let s = system(TargetMode::MemoryType, exp_kernel(), 1.0);
        let z = s.apply_l(&s.zero_control()).unwrap();
        assert!(z.to_vec().iter().all(|&v| v == 0.0));
        let f = s.apply_lstar(&TargetVector::zeros(8)).unwrap();
        assert!(f.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_identity_holds() {
        for theta in [1.0, 0.5] {
            for mode in [TargetMode::MemoryType, TargetMode::ClassicalOnly] {
                let s = system(mode, exp_kernel(), theta);
                let d = adjoint_consistency_test(&s, 20, 3).unwrap();
                assert!(d <= 1e-11, "{theta} {mode:?} {d}");
            }
        }
        let general = MemoryKernel::General(std::sync::Arc::new(|t, s| (t - s).cos() + 0.5 * s));
        let s = system(TargetMode::MemoryType, general, 1.0);
        assert!(adjoint_consistency_test(&s, 20, 4).unwrap() <= 1e-11);
    }

    #[test]
    fn mismatched_metric_is_detected() {
        let s = system(TargetMode::MemoryType, exp_kernel(), 1.0);
        let mut unit = s.control_metric().clone();
        unit.node_weights.fill(1.0);
        unit.time_weight = 1.0;
        assert!(adjoint_consistency_with(&s, &unit, 20, 3).unwrap() > 1e-6);
    }

    #[test]
    fn zero_block_weight_ignores_memory() {
        let s = system(TargetMode::ClassicalOnly, exp_kernel(), 1.0);
        let z = TargetVector {
            terminal: vec![0.0; 8],
            memory: vec![1.0; 8],
        };
        let f = s.apply_lstar(&z).unwrap();
        assert!(f.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn l_is_linear() {
        let s = system(TargetMode::MemoryType, exp_kernel(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = s.random_control(&mut rng);
        let f2: Vec<GridFunction> = f
            .iter()
            .map(|v| v.iter().map(|x| 2.0 * x).collect())
            .collect();
        let a = s.apply_l(&f).unwrap().to_vec();
        let b = s.apply_l(&f2).unwrap().to_vec();
        let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn dense_column_matches_unit_control() {
        let s = system(TargetMode::MemoryType, exp_kernel(), 1.0);
        let (k, j) = (0..=8)
            .flat_map(|k| (0..8).map(move |j| (k, j)))
            .filter(|&(k, j)| k > 0 && s.schedule().mask(k)[j])
            .nth(3)
            .unwrap();
        let mut e = s.zero_control();
        e[k][j] = 1.0;
        let col = s.apply_l(&e).unwrap();
        // superposition of two half-controls reproduces the column
        let mut half = s.zero_control();
        half[k][j] = 0.5;
        let mut sum = s.apply_l(&half).unwrap();
        sum.axpy(1.0, &s.apply_l(&half).unwrap());
        for (a, b) in col.to_vec().iter().zip(sum.to_vec()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(col.terminal.iter().any(|&v| v != 0.0));
    }
}
