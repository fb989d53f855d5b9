//! Graded grids, weighted state-space inner products and the assembled
//! tridiagonal operators for both forms of the degenerate operator.
//!
//! The state space of the non-divergence form is the `1/a`-weighted L2
//! space, that of the divergence form is plain L2. Under these weights the
//! assembled operator is exactly self-adjoint and dissipative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::{DegeneracyProfile, Endpoint, Regime, TimeCoefficient};
use crate::error::{check_len, Error, Result};
use crate::tridiag::Tridiagonal;

/// Which operator: `b a u_xx` or `b (a u_x)_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    NonDivergence,
    Divergence,
}

impl Form {
    /// 1 for non-divergence, 2 for divergence.
    pub fn index(self) -> u8 {
        match self {
            Form::NonDivergence => 1,
            Form::Divergence => 2,
        }
    }
}

/// Interior nodes of `(0, 1)` with their finite-volume cells.
///
/// Faces are the midpoints between consecutive points of
/// `{0, x_1, ..., x_N, 1}`; cell `j` spans faces `j` and `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    nodes: Vec<f64>,
    faces: Vec<f64>,
    cell_widths: Vec<f64>,
    grading_exponent: f64,
}

impl SpatialGrid {
    /// Grid from explicit, strictly increasing interior nodes.
    pub fn from_nodes(nodes: Vec<f64>, grading_exponent: f64) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "a grid needs at least 3 nodes, got {}",
                nodes.len()
            )));
        }
        if !(nodes[0] > 0.0 && *nodes.last().unwrap() < 1.0) {
            return Err(Error::InvalidInput(
                "grid nodes must lie strictly inside (0, 1)".into(),
            ));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "grid nodes must be strictly increasing".into(),
            ));
        }
        let n = nodes.len();
        let point = |i: usize| -> f64 {
            if i == 0 {
                0.0
            } else if i == n + 1 {
                1.0
            } else {
                nodes[i - 1]
            }
        };
        let faces: Vec<f64> = (0..=n).map(|i| 0.5 * (point(i) + point(i + 1))).collect();
        let cell_widths = (0..n).map(|j| 0.5 * (point(j + 2) - point(j))).collect();
        Ok(Self {
            nodes,
            faces,
            cell_widths,
            grading_exponent,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn cell_widths(&self) -> &[f64] {
        &self.cell_widths
    }

    pub fn grading_exponent(&self) -> f64 {
        self.grading_exponent
    }

    /// Distance from node `j` to its left neighbour (the boundary for `j = 0`).
    pub fn left_spacing(&self, j: usize) -> f64 {
        if j == 0 {
            self.nodes[0]
        } else {
            self.nodes[j] - self.nodes[j - 1]
        }
    }

    /// Distance from node `j` to its right neighbour (the boundary for the
    /// last node).
    pub fn right_spacing(&self, j: usize) -> f64 {
        if j + 1 == self.nodes.len() {
            1.0 - self.nodes[j]
        } else {
            self.nodes[j + 1] - self.nodes[j]
        }
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }
}

/// Grid of `n` interior nodes graded toward every degeneracy point of the
/// profile. One point at 0 gives `x_j = (j / (n + 1))^gamma`, one point at 1
/// the mirror image, two points the symmetric map `s^g / (s^g + (1 - s)^g)`.
pub fn build_grid(n: usize, profile: &DegeneracyProfile, gamma: f64) -> Result<SpatialGrid> {
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "grid needs N >= 3 nodes, got {n}"
        )));
    }
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "grading exponent must be >= 1, got {gamma}"
        )));
    }
    let left = profile.point_at(Endpoint::Left).is_some();
    let right = profile.point_at(Endpoint::Right).is_some();
    let m = (n + 1) as f64;
    let nodes = (1..=n)
        .map(|j| {
            let s = j as f64 / m;
            if gamma == 1.0 {
                return s;
            }
            match (left, right) {
                (true, false) => s.powf(gamma),
                (false, true) => 1.0 - ((n + 1 - j) as f64 / m).powf(gamma),
                _ => {
                    let p = s.powf(gamma);
                    let q = ((n + 1 - j) as f64 / m).powf(gamma);
                    p / (p + q)
                }
            }
        })
        .collect();
    SpatialGrid::from_nodes(nodes, gamma)
}

/// Diagonal quadrature weights defining the discrete `H_i` inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceMetric {
    pub form: Form,
    pub weights: Vec<f64>,
}

impl StateSpaceMetric {
    pub fn new(form: Form, grid: &SpatialGrid, profile: &DegeneracyProfile) -> Self {
        let weights = match form {
            Form::NonDivergence => grid
                .nodes()
                .iter()
                .zip(grid.cell_widths())
                .map(|(&x, &w)| w / profile.eval(x))
                .collect(),
            Form::Divergence => grid.cell_widths().to_vec(),
        };
        Self { form, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn inner_product(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_len("inner product (u)", self.len(), u.len())?;
        check_len("inner product (v)", self.len(), v.len())?;
        Ok(self.dot(u, v))
    }

    /// Unchecked inner product for internal hot loops.
    pub(crate) fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u)
            .zip(v)
            .map(|((w, a), b)| w * a * b)
            .sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.dot(u, u).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryTreatment {
    Dirichlet,
    /// Zero flux through the boundary face; used for the divergence form at
    /// a strongly degenerate endpoint.
    ZeroFlux,
}

/// Assembles `A_i(t)` on a fixed grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperatorFactory {
    form: Form,
    profile: DegeneracyProfile,
    time_coefficient: TimeCoefficient,
    grid: SpatialGrid,
    horizon: f64,
    boundary: [BoundaryTreatment; 2],
    unit: Tridiagonal,
    metric: StateSpaceMetric,
}

impl DiscreteOperatorFactory {
    pub fn new(
        form: Form,
        profile: DegeneracyProfile,
        time_coefficient: TimeCoefficient,
        grid: SpatialGrid,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if let Some((j, x)) = grid
            .nodes()
            .iter()
            .enumerate()
            .find(|(_, &x)| !(profile.eval(x) > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "diffusion coefficient is not positive at node {j} (x = {x})"
            )));
        }
        let boundary = [Endpoint::Left, Endpoint::Right].map(|e| match form {
            Form::NonDivergence => BoundaryTreatment::Dirichlet,
            Form::Divergence => match profile.point_at(e).map(|p| p.regime) {
                Some(Regime::StronglyDegenerate) => BoundaryTreatment::ZeroFlux,
                _ => BoundaryTreatment::Dirichlet,
            },
        });
        let unit = assemble_unit(form, &profile, &grid, boundary);
        let metric = StateSpaceMetric::new(form, &grid, &profile);
        Ok(Self {
            form,
            profile,
            time_coefficient,
            grid,
            horizon,
            boundary,
            unit,
            metric,
        })
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn profile(&self) -> &DegeneracyProfile {
        &self.profile
    }

    pub fn time_coefficient(&self) -> &TimeCoefficient {
        &self.time_coefficient
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn boundary(&self, endpoint: Endpoint) -> BoundaryTreatment {
        match endpoint {
            Endpoint::Left => self.boundary[0],
            Endpoint::Right => self.boundary[1],
        }
    }

    pub fn metric(&self) -> &StateSpaceMetric {
        &self.metric
    }

    /// Operator with `b = 1`.
    pub fn unit_operator(&self) -> &Tridiagonal {
        &self.unit
    }

    /// `A_i(t) = b(t) A_unit`.
    pub fn assemble(&self, t: f64) -> Result<Tridiagonal> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::InvalidInput(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(self.unit.scaled(self.time_coefficient.eval(t)))
    }
}

fn assemble_unit(
    form: Form,
    profile: &DegeneracyProfile,
    grid: &SpatialGrid,
    boundary: [BoundaryTreatment; 2],
) -> Tridiagonal {
    let n = grid.len();
    let mut m = Tridiagonal::zeros(n);
    for j in 0..n {
        let hl = grid.left_spacing(j);
        let hr = grid.right_spacing(j);
        let w = grid.cell_widths()[j];
        let (al, ar) = match form {
            Form::NonDivergence => {
                let a = profile.eval(grid.nodes()[j]);
                (a, a)
            }
            Form::Divergence => (
                profile.eval(grid.faces()[j]),
                profile.eval(grid.faces()[j + 1]),
            ),
        };
        let mut cl = al / (hl * w);
        let mut cr = ar / (hr * w);
        if j == 0 && boundary[0] == BoundaryTreatment::ZeroFlux {
            cl = 0.0;
        }
        if j + 1 == n && boundary[1] == BoundaryTreatment::ZeroFlux {
            cr = 0.0;
        }
        m.diag[j] = -cl - cr;
        if j > 0 {
            m.lower[j] = cl;
        }
        if j + 1 < n {
            m.upper[j] = cr;
        }
    }
    m
}

/// Largest normalized defect `|<Au, v> - <u, Av>| / (|A| |u| |v|)` over
/// random pairs, measured in the factory's own metric.
pub fn self_adjointness_check(
    factory: &DiscreteOperatorFactory,
    t: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    self_adjointness_defect(factory, factory.metric(), t, trials, seed)
}

/// As [`self_adjointness_check`] but in an arbitrary metric.
pub fn self_adjointness_defect(
    factory: &DiscreteOperatorFactory,
    metric: &StateSpaceMetric,
    t: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let a = factory.assemble(t)?;
    let n = a.len();
    check_len("self-adjointness metric", n, metric.len())?;
    // Frobenius norm of W^{1/2} A W^{-1/2}, an upper bound of the operator norm
    let sq: Vec<f64> = metric.weights.iter().map(|w| w.sqrt()).collect();
    let op_norm = (0..n)
        .flat_map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let sq = &sq;
            let a = &a;
            (lo..=hi).map(move |j| (sq[i] * a.get(i, j) / sq[j]).powi(2))
        })
        .sum::<f64>()
        .sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs = metric.dot(&a.apply(&u), &v);
        let rhs = metric.dot(&u, &a.apply(&v));
        let scale = op_norm * metric.norm(&u) * metric.norm(&v);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat() -> DegeneracyProfile {
        DegeneracyProfile::power(Endpoint::Left, 0.0).unwrap()
    }

    fn factory(
        form: Form,
        profile: DegeneracyProfile,
        n: usize,
        gamma: f64,
    ) -> DiscreteOperatorFactory {
        let grid = build_grid(n, &profile, gamma).unwrap();
        DiscreteOperatorFactory::new(form, profile, TimeCoefficient::Constant(1.0), grid, 1.0)
            .unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(3, &flat(), 1.0).unwrap();
        assert_eq!(g.nodes(), &[0.25, 0.5, 0.75]);
        let p = DegeneracyProfile::power(Endpoint::Left, 1.5).unwrap();
        let g = build_grid(3, &p, 2.0).unwrap();
        for (x, e) in g.nodes().iter().zip([0.0625, 0.25, 0.5625]) {
            assert!((x - e).abs() < 1e-15);
        }
        let d = DegeneracyProfile::double_power(0.5, 1.5).unwrap();
        let g = build_grid(63, &d, 2.0).unwrap();
        let x = g.nodes();
        for j in 0..63 {
            assert!((x[j] + x[62 - j] - 1.0).abs() < 1e-14);
        }
        assert!(build_grid(2, &flat(), 1.0).is_err());
        assert!(build_grid(5, &flat(), 0.5).is_err());
    }

    #[test]
    fn grid_right_endpoint_grading() {
        let p = DegeneracyProfile::power(Endpoint::Right, 0.5).unwrap();
        let g = build_grid(7, &p, 2.0).unwrap();
        let x = g.nodes();
        assert!((1.0 - x[6] - (1.0f64 / 8.0).powi(2)).abs() < 1e-15);
        assert!(x[6] - x[5] < x[1] - x[0]);
    }

    #[test]
    fn cells_tile_the_span_between_boundary_midpoints() {
        let p = DegeneracyProfile::power(Endpoint::Left, 0.5).unwrap();
        let g = build_grid(40, &p, 2.0).unwrap();
        let total: f64 = g.cell_widths().iter().sum();
        let span = g.faces()[40] - g.faces()[0];
        assert!((total - span).abs() < 1e-14);
        assert!(g.cell_widths().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn inner_product_examples() {
        let g = build_grid(4, &flat(), 1.0).unwrap();
        let m = StateSpaceMetric::new(Form::Divergence, &g, &flat());
        let ones = vec![1.0; 4];
        assert!((m.inner_product(&ones, &ones).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(m.inner_product(&[0.0; 4], &ones).unwrap(), 0.0);
        assert!(m.inner_product(&[1.0; 3], &ones).is_err());

        let p = DegeneracyProfile::power(Endpoint::Left, 0.5).unwrap();
        let g = build_grid(1024, &p, 2.0).unwrap();
        let m = StateSpaceMetric::new(Form::NonDivergence, &g, &p);
        let ones = vec![1.0; 1024];
        let v = m.inner_product(&ones, &ones).unwrap();
        assert!((v - 2.0).abs() < 0.04, "{v}");
    }

    #[test]
    fn constant_coefficient_stencil() {
        for form in [Form::NonDivergence, Form::Divergence] {
            let f = factory(form, flat(), 9, 1.0);
            let a = f.assemble(0.5).unwrap();
            let h2 = 0.1f64 * 0.1;
            for j in 1..8 {
                assert!((a.lower[j] - 1.0 / h2).abs() < 1e-9);
                assert!((a.diag[j] + 2.0 / h2).abs() < 1e-9);
                assert!((a.upper[j] - 1.0 / h2).abs() < 1e-9);
            }
        }
        let f = factory(Form::NonDivergence, flat(), 9, 1.0);
        assert!(f.assemble(1.5).is_err());
        assert!(f.assemble(-0.1).is_err());
    }

    #[test]
    fn strongly_degenerate_divergence_form_has_zero_left_flux() {
        let p = DegeneracyProfile::power(Endpoint::Left, 1.5).unwrap();
        let f = factory(Form::Divergence, p.clone(), 4, 1.0);
        assert_eq!(f.boundary(Endpoint::Left), BoundaryTreatment::ZeroFlux);
        assert_eq!(f.boundary(Endpoint::Right), BoundaryTreatment::Dirichlet);
        let a = f.unit_operator();
        // independent dense finite-volume assembly
        let x = [0.2, 0.4, 0.6, 0.8];
        let face = |i: usize| match i {
            0 => 0.1,
            4 => 0.9,
            _ => 0.5 * (x[i - 1] + x[i]),
        };
        let w = 0.2;
        let h = 0.2;
        let flux_coeff = |i: usize| p.eval(face(i)) / h / w;
        assert!((a.diag[0] + flux_coeff(1)).abs() < 1e-14);
        assert_eq!(a.lower[0], 0.0);
        assert!((a.upper[0] - flux_coeff(1)).abs() < 1e-14);
        assert!((a.diag[3] + flux_coeff(3) + flux_coeff(4)).abs() < 1e-12);
        // weak degeneracy keeps Dirichlet
        let wd = factory(
            Form::Divergence,
            DegeneracyProfile::power(Endpoint::Left, 0.5).unwrap(),
            4,
            1.0,
        );
        assert_eq!(wd.boundary(Endpoint::Left), BoundaryTreatment::Dirichlet);
        let nd = factory(Form::NonDivergence, p, 4, 1.0);
        assert_eq!(nd.boundary(Endpoint::Left), BoundaryTreatment::Dirichlet);
    }

    #[test]
    fn self_adjoint_in_own_metric() {
        let profiles = [
            DegeneracyProfile::power(Endpoint::Left, 0.5).unwrap(),
            DegeneracyProfile::power(Endpoint::Left, 1.5).unwrap(),
            DegeneracyProfile::power(Endpoint::Right, 1.9).unwrap(),
            DegeneracyProfile::double_power(0.5, 1.5).unwrap(),
        ];
        for p in profiles {
            for form in [Form::NonDivergence, Form::Divergence] {
                let f = factory(form, p.clone(), 33, 2.0);
                let d = self_adjointness_check(&f, 0.3, 10, 1).unwrap();
                assert!(d <= 1e-12, "{form:?} {p:?}: {d}");
            }
        }
    }

    #[test]
    fn wrong_metric_is_detected() {
        let p = DegeneracyProfile::power(Endpoint::Left, 0.5).unwrap();
        // on the gamma = 2 grid w_j / a(x_j) happens to be constant for K = 1/2
        let f = factory(Form::NonDivergence, p, 33, 1.0);
        let plain = StateSpaceMetric {
            form: Form::Divergence,
            weights: vec![1.0; 33],
        };
        let d = self_adjointness_defect(&f, &plain, 0.3, 10, 1).unwrap();
        assert!(d > 1e-6, "{d}");
    }

    #[test]
    fn second_order_consistency_on_uniform_grids() {
        let mut errors = Vec::new();
        for n in [31, 63, 127, 255] {
            let f = factory(Form::NonDivergence, flat(), n, 1.0);
            let u = f.grid().sample(|x| (std::f64::consts::PI * x).sin());
            let au = f.unit_operator().apply(&u);
            let pi2 = std::f64::consts::PI.powi(2);
            let err = au
                .iter()
                .zip(&u)
                .map(|(a, v)| (a + pi2 * v).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.9, "{order}");
        }
    }
}
