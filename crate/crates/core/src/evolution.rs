//! Forward time stepping of `u_t - A(t) u + int_0^t M(t, s) u(s) ds = f chi_omega(t)`
//! and rasterization of (moving) control regions.
//!
//! Each step solves
//!
//! ```text
//! (I - dt theta A_{k+1} + dt^2/2 M_{k+1,k+1}) u^{k+1}
//!     = (I + dt (1 - theta) A_k) u^k + dt F_{k+1/2} - dt Q_k
//! ```
//!
//! where `Q_k` is the trapezoidal sum of the memory integral over the known
//! history `u^0 .. u^k` and `F_{k+1/2}` the theta-weighted forcing. The memory
//! endpoint enters the diagonal only, so every step is one tridiagonal solve.
//! A general kernel costs `O(Nt^2 N)` per run; exponential and constant
//! kernels use an `O(Nt N)` recursion.

use std::fmt;
use std::io::Write;

use crate::coefficients::{MemoryKernel, ScalarFn};
use crate::discretization::{DiscreteOperatorFactory, SpatialGrid};
use crate::error::{check_len, Error, Result};
use crate::tridiag::Tridiagonal;

pub type GridFunction = Vec<f64>;

/// Uniform time grid `t_k = k T / Nt`, `k = 0..=Nt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidInput(format!(
                "time grid needs Nt >= 2 steps, got {steps}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Trapezoidal weights `dt/2, dt, ..., dt, dt/2`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.steps + 1];
        w[0] = 0.5 * dt;
        w[self.steps] = 0.5 * dt;
        w
    }
}

/// Path of the centre of a moving control region.
#[derive(Clone)]
pub enum CenterPath {
    /// Built-in sweep from the left boundary to the right one, inset by half
    /// the boundary node distance so the region stays inside `(0, 1)`.
    Sweep,
    /// `c(t) = start + (end - start) t / T`, no inset.
    Linear {
        start: f64,
        end: f64,
    },
    Custom(ScalarFn),
}

impl fmt::Debug for CenterPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CenterPath::Sweep => write!(f, "Sweep"),
            CenterPath::Linear { start, end } => write!(f, "Linear({start} -> {end})"),
            CenterPath::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ScheduleKind {
    Fixed { left: f64, right: f64 },
    Moving { half_width: f64, path: CenterPath },
}

/// Control region rasterized onto the grid, one boolean mask per time node.
#[derive(Debug, Clone)]
pub struct ControlSchedule {
    kind: ScheduleKind,
    intervals: Vec<(f64, f64)>,
    masks: Vec<Vec<bool>>,
}

impl ControlSchedule {
    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn mask(&self, k: usize) -> &[bool] {
        &self.masks[k]
    }

    /// Open interval `(left, right)` at time node `k`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        self.intervals[k]
    }

    /// True iff every node lies in the control region at some time node.
    pub fn coverage_check(&self) -> bool {
        let n = self.masks.first().map_or(0, Vec::len);
        (0..n).all(|j| self.masks.iter().any(|m| m[j]))
    }

    /// Zeroes `f` outside the mask at time node `k`.
    pub fn project(&self, k: usize, f: &mut [f64]) {
        for (v, &inside) in f.iter_mut().zip(&self.masks[k]) {
            if !inside {
                *v = 0.0;
            }
        }
    }

    pub fn project_trajectory(&self, f: &mut [GridFunction]) {
        for (k, fk) in f.iter_mut().enumerate() {
            self.project(k, fk);
        }
    }

    pub fn active_count(&self) -> usize {
        self.masks.iter().flatten().filter(|&&b| b).count()
    }
}

/// Rasterizes a control region: node `x_j` is controlled at `t_k` iff
/// `x_j` lies in the open interval `(left(t_k), right(t_k))`.
pub fn rasterize_schedule(
    kind: ScheduleKind,
    grid: &SpatialGrid,
    tgrid: &TimeGrid,
) -> Result<ControlSchedule> {
    let nodes = grid.nodes();
    let n = nodes.len();
    let horizon = tgrid.horizon();
    let inset = 0.5 * nodes[0].min(1.0 - nodes[n - 1]);
    let interval_at = |t: f64| -> Result<(f64, f64)> {
        match &kind {
            ScheduleKind::Fixed { left, right } => Ok((*left, *right)),
            ScheduleKind::Moving { half_width, path } => {
                let delta = *half_width;
                if !(delta > 0.0) || !delta.is_finite() {
                    return Err(Error::Geometry(format!(
                        "half-width must be positive, got {delta}"
                    )));
                }
                match path {
                    CenterPath::Sweep => {
                        // the width saturates at the inset interval when 2 delta
                        // exceeds it; the region then covers every node
                        let span = 1.0 - 2.0 * inset;
                        let width = (2.0 * delta).min(span);
                        let left = inset + (span - width) * t / horizon;
                        Ok((left, left + width))
                    }
                    CenterPath::Linear { start, end } => {
                        let c = start + (end - start) * t / horizon;
                        Ok((c - delta, c + delta))
                    }
                    CenterPath::Custom(c) => {
                        let c = c(t);
                        Ok((c - delta, c + delta))
                    }
                }
            }
        }
    };
    let mut intervals = Vec::with_capacity(tgrid.steps() + 1);
    let mut masks = Vec::with_capacity(tgrid.steps() + 1);
    for k in 0..=tgrid.steps() {
        let t = tgrid.time(k);
        let (left, right) = interval_at(t)?;
        if !(left > 0.0 && right < 1.0 && left < right) {
            return Err(Error::Geometry(format!(
                "control region ({left}, {right}) at t = {t} is not compactly contained in (0, 1)"
            )));
        }
        let mask: Vec<bool> = nodes.iter().map(|&x| x > left && x < right).collect();
        if !mask.iter().any(|&b| b) {
            return Err(Error::Resolution(format!(
                "control region ({left}, {right}) at t = {t} contains no grid node; increase N or the region width"
            )));
        }
        intervals.push((left, right));
        masks.push(mask);
    }
    Ok(ControlSchedule {
        kind,
        intervals,
        masks,
    })
}

/// States and applied (masked) controls at every time node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    pub controls: Vec<GridFunction>,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    /// CSV with one row per `(k, j)`: `t,x,u,f,in_omega`.
    pub fn write_csv<W: Write>(
        &self,
        out: &mut W,
        grid: &SpatialGrid,
        schedule: &ControlSchedule,
    ) -> Result<()> {
        writeln!(out, "t,x,u,f,in_omega")?;
        for (k, t) in self.times.iter().enumerate() {
            for (j, x) in grid.nodes().iter().enumerate() {
                writeln!(
                    out,
                    "{t:e},{x:e},{:e},{:e},{}",
                    self.states[k][j],
                    self.controls[k][j],
                    u8::from(schedule.mask(k)[j])
                )?;
            }
        }
        Ok(())
    }
}

/// Trapezoidal `sum_k w_k Mt(T - t_k) u^k`, pointwise in space.
pub fn memory_accumulator(
    target_kernel: &MemoryKernel,
    tgrid: &TimeGrid,
    trajectory: &Trajectory,
) -> Result<GridFunction> {
    check_len(
        "memory accumulator",
        tgrid.steps() + 1,
        trajectory.states.len(),
    )?;
    let weights = target_weights(target_kernel, tgrid);
    let n = trajectory.states[0].len();
    let mut m = vec![0.0; n];
    for (w, u) in weights.iter().zip(&trajectory.states) {
        for (mj, uj) in m.iter_mut().zip(u) {
            *mj += w * uj;
        }
    }
    Ok(m)
}

/// Quadrature weights `w_k Mt(T - t_k)` of the memory target.
pub(crate) fn target_weights(target_kernel: &MemoryKernel, tgrid: &TimeGrid) -> Vec<f64> {
    let horizon = tgrid.horizon();
    tgrid
        .trapezoid_weights()
        .iter()
        .enumerate()
        .map(|(k, w)| w * target_kernel.lag(horizon - tgrid.time(k)))
        .collect()
}

/// History part of the discrete memory term.
#[derive(Debug, Clone)]
pub(crate) enum History {
    None,
    /// `M(t_k, t_l) = amplitude * decay^(k - l)`
    Exponential {
        amplitude: f64,
        decay: f64,
    },
    /// `table[k][l] = M(t_k, t_l)` for `l <= k`.
    Dense(Vec<Vec<f64>>),
}

impl History {
    fn new(kernel: &MemoryKernel, tgrid: &TimeGrid) -> Self {
        if kernel.is_zero() {
            return History::None;
        }
        if let Some((amplitude, rate)) = kernel.as_exponential() {
            return History::Exponential {
                amplitude,
                decay: (-rate * tgrid.dt()).exp(),
            };
        }
        let times = tgrid.times();
        History::Dense(
            times
                .iter()
                .enumerate()
                .map(|(k, &t)| times[..=k].iter().map(|&s| kernel.eval(t, s)).collect())
                .collect(),
        )
    }

    pub(crate) fn diagonal(&self, k: usize) -> f64 {
        match self {
            History::None => 0.0,
            History::Exponential { amplitude, .. } => *amplitude,
            History::Dense(table) => table[k][k],
        }
    }
}

/// Theta-scheme for the memory equation on a fixed discretization.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub(crate) tgrid: TimeGrid,
    pub(crate) theta: f64,
    pub(crate) nodes: Vec<f64>,
    /// `A(t_k)` for every time node.
    pub(crate) operators: Vec<Tridiagonal>,
    /// Left-hand matrices `S_k`, index 0 unused.
    pub(crate) lhs: Vec<Tridiagonal>,
    pub(crate) history: History,
    pub(crate) masks: Vec<Vec<bool>>,
}

impl Stepper {
    pub fn new(
        factory: &DiscreteOperatorFactory,
        kernel: &MemoryKernel,
        tgrid: TimeGrid,
        schedule: &ControlSchedule,
        theta: f64,
    ) -> Result<Self> {
        if (factory.horizon() - tgrid.horizon()).abs() > 1e-12 * tgrid.horizon() {
            return Err(Error::InvalidInput(format!(
                "operator horizon {} differs from time grid horizon {}",
                factory.horizon(),
                tgrid.horizon()
            )));
        }
        factory.time_coefficient().validate(&tgrid.times())?;
        let operators = tgrid
            .times()
            .iter()
            .map(|&t| factory.assemble(t.min(factory.horizon())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(
            operators,
            factory.grid().nodes().to_vec(),
            schedule.masks().to_vec(),
            kernel,
            tgrid,
            theta,
        )
    }

    /// Stepper from explicit per-node operators, for tests and reduced models.
    pub fn from_parts(
        operators: Vec<Tridiagonal>,
        nodes: Vec<f64>,
        masks: Vec<Vec<bool>>,
        kernel: &MemoryKernel,
        tgrid: TimeGrid,
        theta: f64,
    ) -> Result<Self> {
        if !(0.5..=1.0).contains(&theta) {
            return Err(Error::InvalidInput(format!(
                "theta must lie in [0.5, 1], got {theta}"
            )));
        }
        let n = nodes.len();
        check_len(
            "operators per time node",
            tgrid.steps() + 1,
            operators.len(),
        )?;
        check_len("masks per time node", tgrid.steps() + 1, masks.len())?;
        for (a, m) in operators.iter().zip(&masks) {
            check_len("operator size", n, a.len())?;
            check_len("mask size", n, m.len())?;
        }
        kernel.check_bounded(&tgrid.times())?;
        let history = History::new(kernel, &tgrid);
        let dt = tgrid.dt();
        let mut lhs = vec![Tridiagonal::zeros(0)];
        for (k, a) in operators.iter().enumerate().skip(1) {
            lhs.push(a.shifted(1.0 + 0.5 * dt * dt * history.diagonal(k), -dt * theta));
        }
        Ok(Self {
            tgrid,
            theta,
            nodes,
            operators,
            lhs,
            history,
            masks,
        })
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn run(&self, u0: &[f64], controls: &[GridFunction]) -> Result<Trajectory> {
        self.run_with_source(u0, controls, |_, _| 0.0)
    }

    /// Runs the scheme with an additional unmasked source term `g(t, x)`.
    pub fn run_with_source(
        &self,
        u0: &[f64],
        controls: &[GridFunction],
        source: impl Fn(f64, f64) -> f64,
    ) -> Result<Trajectory> {
        let n = self.len();
        let steps = self.tgrid.steps();
        check_len("initial datum", n, u0.len())?;
        check_len("control time nodes", steps + 1, controls.len())?;
        for f in controls {
            check_len("control grid function", n, f.len())?;
        }
        let dt = self.tgrid.dt();
        let theta = self.theta;
        let times = self.tgrid.times();

        let applied: Vec<GridFunction> = controls
            .iter()
            .zip(&self.masks)
            .map(|(f, m)| {
                f.iter()
                    .zip(m)
                    .map(|(&v, &b)| if b { v } else { 0.0 })
                    .collect()
            })
            .collect();
        let forcing = |k: usize| -> GridFunction {
            applied[k]
                .iter()
                .zip(&self.nodes)
                .map(|(f, &x)| f + source(times[k], x))
                .collect()
        };

        let mut states: Vec<GridFunction> = Vec::with_capacity(steps + 1);
        states.push(u0.to_vec());
        let mut running = vec![0.0; n];
        let mut f_prev = forcing(0);
        for k in 0..steps {
            let f_next = forcing(k + 1);
            let uk = &states[k];
            let mut rhs = uk.clone();
            if theta < 1.0 {
                let au = self.operators[k].apply(uk);
                for (r, v) in rhs.iter_mut().zip(&au) {
                    *r += dt * (1.0 - theta) * v;
                }
            }
            for j in 0..n {
                rhs[j] += dt * (theta * f_next[j] + (1.0 - theta) * f_prev[j]);
            }
            self.memory_history(&states, k, &mut running);
            for (r, q) in rhs.iter_mut().zip(&running) {
                *r -= dt * dt * q;
            }
            let next = self.lhs[k + 1].solve(&rhs)?;
            states.push(next);
            f_prev = f_next;
        }
        Ok(Trajectory {
            times,
            states,
            controls: applied,
        })
    }

    /// Writes `sum_{l <= k} c_l M(t_{k+1}, t_l) u^l` into `out`, with
    /// `c_0 = 1/2` and `c_l = 1` otherwise. For exponential kernels `out` must
    /// carry the previous call's value (zero before the first step).
    fn memory_history(&self, states: &[GridFunction], k: usize, out: &mut [f64]) {
        match &self.history {
            History::None => {}
            History::Exponential { amplitude, decay } => {
                let c = if k == 0 { 0.5 } else { 1.0 };
                for (o, u) in out.iter_mut().zip(&states[k]) {
                    *o = decay * (*o + amplitude * c * u);
                }
            }
            History::Dense(table) => {
                out.fill(0.0);
                let row = &table[k + 1];
                for (l, u) in states.iter().enumerate().take(k + 1) {
                    let c = if l == 0 { 0.5 } else { 1.0 } * row[l];
                    for (o, v) in out.iter_mut().zip(u) {
                        *o += c * v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{DegeneracyProfile, Endpoint, TimeCoefficient};
    use crate::discretization::{build_grid, Form};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn uniform_grid(n: usize) -> SpatialGrid {
        let p = DegeneracyProfile::power(Endpoint::Left, 0.0).unwrap();
        build_grid(n, &p, 1.0).unwrap()
    }

    fn heat(n: usize, steps: usize, horizon: f64, kernel: MemoryKernel) -> (Stepper, SpatialGrid) {
        let p = DegeneracyProfile::power(Endpoint::Left, 0.0).unwrap();
        let grid = build_grid(n, &p, 1.0).unwrap();
        let f = DiscreteOperatorFactory::new(
            Form::Divergence,
            p,
            TimeCoefficient::Constant(1.0),
            grid.clone(),
            horizon,
        )
        .unwrap();
        let tg = TimeGrid::new(horizon, steps).unwrap();
        let s = rasterize_schedule(
            ScheduleKind::Fixed {
                left: 0.3,
                right: 0.7,
            },
            &grid,
            &tg,
        )
        .unwrap();
        (Stepper::new(&f, &kernel, tg, &s, 1.0).unwrap(), grid)
    }

    #[test]
    fn fixed_mask_membership() {
        let g = uniform_grid(4);
        let tg = TimeGrid::new(1.0, 4).unwrap();
        let s = rasterize_schedule(
            ScheduleKind::Fixed {
                left: 0.3,
                right: 0.7,
            },
            &g,
            &tg,
        )
        .unwrap();
        for m in s.masks() {
            assert_eq!(m, &[false, true, true, false]);
        }
    }

    #[test]
    fn geometry_and_resolution_errors() {
        let g = uniform_grid(64);
        let tg = TimeGrid::new(1.0, 64).unwrap();
        let raw = ScheduleKind::Moving {
            half_width: 0.2,
            path: CenterPath::Linear {
                start: 0.2,
                end: 0.8,
            },
        };
        assert!(matches!(
            rasterize_schedule(raw, &g, &tg),
            Err(Error::Geometry(_))
        ));
        let inset = ScheduleKind::Moving {
            half_width: 0.2,
            path: CenterPath::Sweep,
        };
        let s = rasterize_schedule(inset, &g, &tg).unwrap();
        assert!(s.interval(0).0 > 0.0);
        assert!(s.interval(64).1 < 1.0);
        let touching = ScheduleKind::Fixed {
            left: 0.0,
            right: 0.5,
        };
        assert!(matches!(
            rasterize_schedule(touching, &g, &tg),
            Err(Error::Geometry(_))
        ));
        let coarse = uniform_grid(4);
        let thin = ScheduleKind::Fixed {
            left: 0.41,
            right: 0.59,
        };
        let err = rasterize_schedule(thin, &coarse, &tg).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)));
        assert!(err.to_string().contains("increase N"));
    }

    #[test]
    fn coverage_examples() {
        let g = uniform_grid(9);
        let tg = TimeGrid::new(1.0, 8).unwrap();
        let fixed = rasterize_schedule(
            ScheduleKind::Fixed {
                left: 0.3,
                right: 0.7,
            },
            &g,
            &tg,
        )
        .unwrap();
        assert!(!fixed.coverage_check());

        let g = uniform_grid(64);
        let tg = TimeGrid::new(1.0, 64).unwrap();
        let sweep = rasterize_schedule(
            ScheduleKind::Moving {
                half_width: 0.15,
                path: CenterPath::Sweep,
            },
            &g,
            &tg,
        )
        .unwrap();
        assert!(sweep.coverage_check());

        let tg = TimeGrid::new(1.0, 2).unwrap();
        let wide = rasterize_schedule(
            ScheduleKind::Moving {
                half_width: 0.6,
                path: CenterPath::Sweep,
            },
            &g,
            &tg,
        )
        .unwrap();
        assert!(wide.coverage_check());
        assert!(wide.mask(0).iter().all(|&b| b));
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let (s, _) = heat(16, 16, 1.0, MemoryKernel::Constant(1.0));
        let tr = s.run(&[0.0; 16], &vec![vec![0.0; 16]; 17]).unwrap();
        assert!(tr.states.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn heat_energy_decays_monotonically() {
        let (s, g) = heat(32, 64, 1.0, MemoryKernel::Zero);
        let u0 = g.sample(|x| (PI * x).sin());
        let tr = s.run(&u0, &vec![vec![0.0; 32]; 65]).unwrap();
        let energy: Vec<f64> = tr
            .states
            .iter()
            .map(|u| u.iter().map(|v| v * v).sum::<f64>())
            .collect();
        assert!(energy.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn first_mode_decays_by_discrete_eigenvalue() {
        let n = 31;
        let (s, g) = heat(n, 20, 0.5, MemoryKernel::Zero);
        let h = 1.0 / (n + 1) as f64;
        let lambda = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        let dt = 0.5 / 20.0;
        let u0 = g.sample(|x| (PI * x).sin());
        let tr = s.run(&u0, &vec![vec![0.0; n]; 21]).unwrap();
        for k in 0..20 {
            for j in 0..n {
                let expected = tr.states[k][j] / (1.0 + dt * lambda);
                assert!((tr.states[k + 1][j] - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn scalar_volterra_reduction() {
        let exact = {
            let w = 3f64.sqrt() / 2.0;
            (-0.5f64).exp() * (w.cos() - w.sin() / 3f64.sqrt())
        };
        let run = |steps: usize| {
            let tg = TimeGrid::new(1.0, steps).unwrap();
            let op = Tridiagonal {
                lower: vec![0.0],
                diag: vec![-1.0],
                upper: vec![0.0],
            };
            let s = Stepper::from_parts(
                vec![op; steps + 1],
                vec![0.5],
                vec![vec![false]; steps + 1],
                &MemoryKernel::Constant(1.0),
                tg,
                1.0,
            )
            .unwrap();
            *s.run(&[1.0], &vec![vec![0.0]; steps + 1])
                .unwrap()
                .terminal()
                .first()
                .unwrap()
        };
        let e256 = (run(256) - exact).abs();
        assert!(e256 < 1e-3, "{e256}");
        let e512 = (run(512) - exact).abs();
        let order = (e256 / e512).log2();
        assert!((order - 1.0).abs() < 0.1, "{order}");
    }

    #[test]
    fn dense_history_matches_exponential_recursion() {
        let (rec, g) = heat(
            12,
            24,
            1.0,
            MemoryKernel::Exponential {
                amplitude: 1.3,
                rate: 0.7,
            },
        );
        let (dense, _) = heat(
            12,
            24,
            1.0,
            MemoryKernel::General(Arc::new(|t, s| 1.3 * (-0.7 * (t - s)).exp())),
        );
        let u0 = g.sample(|x| x * (1.0 - x));
        let f: Vec<GridFunction> = (0..25).map(|k| vec![k as f64 * 0.1; 12]).collect();
        let a = rec.run(&u0, &f).unwrap();
        let b = dense.run(&u0, &f).unwrap();
        for (u, v) in a.states.iter().flatten().zip(b.states.iter().flatten()) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn memory_accumulator_examples() {
        let tg = TimeGrid::new(1.0, 128).unwrap();
        let tr = Trajectory {
            times: tg.times(),
            states: vec![vec![1.0; 3]; 129],
            controls: vec![vec![0.0; 3]; 129],
        };
        let m = memory_accumulator(&MemoryKernel::Constant(1.0), &tg, &tr).unwrap();
        assert!(m.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let m = memory_accumulator(&MemoryKernel::Zero, &tg, &tr).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
        let e = MemoryKernel::Exponential {
            amplitude: 1.0,
            rate: 1.0,
        };
        let m = memory_accumulator(&e, &tg, &tr).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        assert!(m.iter().all(|v| (v - exact).abs() < 1e-4));
    }

    #[test]
    fn controls_are_masked() {
        let (s, _) = heat(10, 8, 1.0, MemoryKernel::Constant(0.5));
        let f = vec![vec![1.0; 10]; 9];
        let tr = s.run(&[0.0; 10], &f).unwrap();
        for (c, m) in tr.controls.iter().zip(&s.masks) {
            for (v, &b) in c.iter().zip(m) {
                assert_eq!(*v, if b { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn csv_has_one_row_per_node_and_step() {
        let g = uniform_grid(4);
        let tg = TimeGrid::new(1.0, 2).unwrap();
        let s = rasterize_schedule(
            ScheduleKind::Fixed {
                left: 0.3,
                right: 0.7,
            },
            &g,
            &tg,
        )
        .unwrap();
        let tr = Trajectory {
            times: tg.times(),
            states: vec![vec![0.0; 4]; 3],
            controls: vec![vec![0.0; 4]; 3],
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, &g, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 4);
        assert!(text.starts_with("t,x,u,f,in_omega\n"));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (s, _) = heat(8, 4, 1.0, MemoryKernel::Zero);
        assert!(s.run(&[0.0; 7], &vec![vec![0.0; 8]; 5]).is_err());
        assert!(s.run(&[0.0; 8], &vec![vec![0.0; 8]; 4]).is_err());
    }
}
