//! Diffusion coefficient `a(x)`, time coefficient `b(t)` and memory kernels.
//!
//! A degenerate coefficient vanishes at one or both endpoints of `(0, 1)`.
//! Near a degeneracy point `x0` it must satisfy `(x - x0) a'(x) <= K a(x)`
//! for some exponent `K`; `K` in `[0, 1)` is weak degeneracy, `K` in `[1, 2)`
//! strong degeneracy, and `K >= 2` is rejected because null controllability
//! fails there.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degeneracy class of an exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    WeaklyDegenerate,
    StronglyDegenerate,
    Inadmissible,
}

impl Regime {
    pub fn is_admissible(self) -> bool {
        self != Regime::Inadmissible
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Regime::WeaklyDegenerate => "WD",
            Regime::StronglyDegenerate => "SD",
            Regime::Inadmissible => "inadmissible",
        }
    }
}

/// Classifies a degeneracy exponent. The boundaries are `1` (first SD value)
/// and `2` (first inadmissible value).
pub fn classify_exponent(k: f64) -> Result<Regime> {
    if !k.is_finite() {
        return Err(Error::InvalidInput(format!(
            "degeneracy exponent must be finite, got {k}"
        )));
    }
    if k < 0.0 {
        return Err(Error::InvalidInput(format!(
            "degeneracy exponent must be nonnegative, got {k}"
        )));
    }
    Ok(if k < 1.0 {
        Regime::WeaklyDegenerate
    } else if k < 2.0 {
        Regime::StronglyDegenerate
    } else {
        Regime::Inadmissible
    })
}

fn admissible_exponent(k: f64) -> Result<Regime> {
    let regime = classify_exponent(k)?;
    if regime.is_admissible() {
        Ok(regime)
    } else {
        Err(Error::InadmissibleExponent {
            exponent: k,
            regime,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Left,
    Right,
}

impl Endpoint {
    pub fn position(self) -> f64 {
        match self {
            Endpoint::Left => 0.0,
            Endpoint::Right => 1.0,
        }
    }

    pub fn other(self) -> Endpoint {
        match self {
            Endpoint::Left => Endpoint::Right,
            Endpoint::Right => Endpoint::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyPoint {
    pub endpoint: Endpoint,
    pub exponent: f64,
    pub regime: Regime,
}

impl DegeneracyPoint {
    pub fn new(endpoint: Endpoint, exponent: f64) -> Result<Self> {
        let regime = admissible_exponent(exponent)?;
        Ok(Self {
            endpoint,
            exponent,
            regime,
        })
    }

    pub fn x0(&self) -> f64 {
        self.endpoint.position()
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Power { x0: f64, k: f64 },
    DoublePower { k0: f64, k1: f64 },
    Custom { eval: ScalarFn, deriv: ScalarFn },
}

/// Diffusion coefficient together with its degeneracy points.
#[derive(Clone)]
pub struct DegeneracyProfile {
    points: Vec<DegeneracyPoint>,
    shape: Shape,
}

impl fmt::Debug for DegeneracyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            Shape::Power { x0, k } => format!("|x - {x0}|^{k}"),
            Shape::DoublePower { k0, k1 } => format!("x^{k0} (1 - x)^{k1}"),
            Shape::Custom { .. } => "custom".to_string(),
        };
        f.debug_struct("DegeneracyProfile")
            .field("shape", &shape)
            .field("points", &self.points)
            .finish()
    }
}

impl DegeneracyProfile {
    /// `a(x) = |x - x0|^K`.
    pub fn power(endpoint: Endpoint, k: f64) -> Result<Self> {
        let point = DegeneracyPoint::new(endpoint, k)?;
        Ok(Self {
            points: vec![point],
            shape: Shape::Power {
                x0: endpoint.position(),
                k,
            },
        })
    }

    /// `a(x) = x^K0 (1 - x)^K1`, degenerate at both endpoints.
    pub fn double_power(k0: f64, k1: f64) -> Result<Self> {
        let left = DegeneracyPoint::new(Endpoint::Left, k0)?;
        let right = DegeneracyPoint::new(Endpoint::Right, k1)?;
        Ok(Self {
            points: vec![left, right],
            shape: Shape::DoublePower { k0, k1 },
        })
    }

    /// A user-supplied coefficient with claimed degeneracy exponents. The
    /// claim is not checked here; see [`verify_degeneracy_condition`].
    pub fn custom(
        claims: &[(Endpoint, f64)],
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if claims.is_empty() || claims.len() > 2 {
            return Err(Error::InvalidInput(format!(
                "a profile needs one or two degeneracy points, got {}",
                claims.len()
            )));
        }
        if claims.len() == 2 && claims[0].0 == claims[1].0 {
            return Err(Error::InvalidInput(
                "two degeneracy points must sit at different endpoints".into(),
            ));
        }
        let points = claims
            .iter()
            .map(|&(e, k)| DegeneracyPoint::new(e, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            points,
            shape: Shape::Custom {
                eval: Arc::new(eval),
                deriv: Arc::new(deriv),
            },
        })
    }

    pub fn points(&self) -> &[DegeneracyPoint] {
        &self.points
    }

    pub fn point_at(&self, endpoint: Endpoint) -> Option<&DegeneracyPoint> {
        self.points.iter().find(|p| p.endpoint == endpoint)
    }

    /// True when `a` is identically one, i.e. every exponent is zero on a
    /// power-type shape.
    pub fn is_constant(&self) -> bool {
        match self.shape {
            Shape::Power { k, .. } => k == 0.0,
            Shape::DoublePower { k0, k1 } => k0 == 0.0 && k1 == 0.0,
            Shape::Custom { .. } => false,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Power { x0, k } => (x - x0).abs().powf(*k),
            Shape::DoublePower { k0, k1 } => x.powf(*k0) * (1.0 - x).powf(*k1),
            Shape::Custom { eval, .. } => eval(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Power { x0, k } => {
                if *k == 0.0 {
                    0.0
                } else {
                    let d = x - x0;
                    k * d.abs().powf(k - 1.0) * d.signum()
                }
            }
            Shape::DoublePower { k0, k1 } => {
                let left = if *k0 == 0.0 {
                    0.0
                } else {
                    k0 * x.powf(k0 - 1.0) * (1.0 - x).powf(*k1)
                };
                let right = if *k1 == 0.0 {
                    0.0
                } else {
                    k1 * x.powf(*k0) * (1.0 - x).powf(k1 - 1.0)
                };
                left - right
            }
            Shape::Custom { deriv, .. } => deriv(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyReport {
    /// Largest positive value of `(x - x0) a'(x) - K a(x)` over all nodes and
    /// points; zero when the inequality holds everywhere.
    pub max_violation: f64,
    pub holds: bool,
}

/// Checks `(x - x0) a'(x) <= K a(x)` at every node for every degeneracy point.
/// Tolerance is `1e-12 * max(a)` over the nodes.
pub fn verify_degeneracy_condition(profile: &DegeneracyProfile, nodes: &[f64]) -> DegeneracyReport {
    let a_max = nodes
        .iter()
        .map(|&x| profile.eval(x))
        .fold(0.0_f64, f64::max);
    let mut max_violation = 0.0_f64;
    for p in profile.points() {
        for &x in nodes {
            let lhs = (x - p.x0()) * profile.deriv(x);
            let rhs = p.exponent * profile.eval(x);
            let v = lhs - rhs;
            if v.is_nan() {
                max_violation = f64::INFINITY;
            } else {
                max_violation = max_violation.max(v);
            }
        }
    }
    DegeneracyReport {
        max_violation,
        holds: max_violation <= 1e-12 * a_max,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrabilityReport {
    /// `(cells, estimate)` for `2^6 ..= 2^14` midpoint cells.
    pub estimates: Vec<(usize, f64)>,
    pub diverges: bool,
}

const GROWTH_FACTOR: f64 = 1.05;

/// Midpoint-rule estimates of the integral of `1/a` over `(0, 1)` on
/// `2^6 ..= 2^14` cells. Divergence is declared when both of the two finest
/// refinements grow the estimate by more than 5%.
pub fn reciprocal_integrability_probe(profile: &DegeneracyProfile) -> Result<IntegrabilityReport> {
    if profile.points().len() != 1 {
        return Err(Error::InvalidInput(
            "the integrability probe expects a single degeneracy point".into(),
        ));
    }
    let estimates: Vec<(usize, f64)> = (6..=14)
        .map(|level| {
            let cells = 1usize << level;
            let h = 1.0 / cells as f64;
            let sum: f64 = (0..cells)
                .map(|i| 1.0 / profile.eval((i as f64 + 0.5) * h))
                .sum();
            (cells, sum * h)
        })
        .collect();
    let n = estimates.len();
    let diverges = estimates[n - 3..]
        .windows(2)
        .all(|w| w[1].1 > GROWTH_FACTOR * w[0].1);
    Ok(IntegrabilityReport {
        estimates,
        diverges,
    })
}

/// Strictly positive time coefficient `b(t)`.
#[derive(Clone)]
pub enum TimeCoefficient {
    Constant(f64),
    /// `intercept + slope * t`
    Affine {
        intercept: f64,
        slope: f64,
    },
    /// `mean + amplitude * sin(2 pi frequency t)`
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        frequency: f64,
    },
    General {
        eval: ScalarFn,
        lower_bound: f64,
    },
}

impl fmt::Debug for TimeCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeCoefficient::Constant(c) => write!(f, "Constant({c})"),
            TimeCoefficient::Affine { intercept, slope } => {
                write!(f, "Affine({intercept} + {slope} t)")
            }
            TimeCoefficient::Sinusoidal {
                mean,
                amplitude,
                frequency,
            } => write!(f, "Sinusoidal({mean} + {amplitude} sin(2pi {frequency} t))"),
            TimeCoefficient::General { lower_bound, .. } => {
                write!(f, "General(b >= {lower_bound})")
            }
        }
    }
}

impl TimeCoefficient {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeCoefficient::Constant(c) => *c,
            TimeCoefficient::Affine { intercept, slope } => intercept + slope * t,
            TimeCoefficient::Sinusoidal {
                mean,
                amplitude,
                frequency,
            } => mean + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
            TimeCoefficient::General { eval, .. } => eval(t),
        }
    }

    /// Analytic lower bound of `b` on `[0, horizon]`.
    pub fn lower_bound(&self, horizon: f64) -> f64 {
        match self {
            TimeCoefficient::Constant(c) => *c,
            TimeCoefficient::Affine { intercept, slope } => {
                intercept.min(intercept + slope * horizon)
            }
            TimeCoefficient::Sinusoidal {
                mean, amplitude, ..
            } => mean - amplitude.abs(),
            TimeCoefficient::General { lower_bound, .. } => *lower_bound,
        }
    }

    /// Checks `b(t) >= b_min > 0` at every supplied time node.
    pub fn validate(&self, times: &[f64]) -> Result<()> {
        let horizon = times.last().copied().unwrap_or(0.0);
        let b_min = self.lower_bound(horizon);
        if !(b_min > 0.0) {
            return Err(Error::InvalidInput(format!(
                "time coefficient must be strictly positive, lower bound is {b_min}"
            )));
        }
        for &t in times {
            let b = self.eval(t);
            if !b.is_finite() || b < b_min {
                return Err(Error::InvalidInput(format!(
                    "time coefficient b({t}) = {b} violates its lower bound {b_min}"
                )));
            }
        }
        Ok(())
    }
}

/// Scalar memory kernel `M(t, s)` on the triangle `0 <= s <= t <= T`.
///
/// The convolution kinds depend on `t - s` only; as a memory-target kernel
/// they are evaluated through [`MemoryKernel::lag`].
#[derive(Clone)]
pub enum MemoryKernel {
    Zero,
    Constant(f64),
    /// `amplitude * exp(-rate (t - s))`
    Exponential {
        amplitude: f64,
        rate: f64,
    },
    General(KernelFn),
}

impl fmt::Debug for MemoryKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryKernel::Zero => write!(f, "Zero"),
            MemoryKernel::Constant(c) => write!(f, "Constant({c})"),
            MemoryKernel::Exponential { amplitude, rate } => {
                write!(f, "Exponential({amplitude} e^(-{rate} tau))")
            }
            MemoryKernel::General(_) => write!(f, "General"),
        }
    }
}

impl MemoryKernel {
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        match self {
            MemoryKernel::Zero => 0.0,
            MemoryKernel::Constant(c) => *c,
            MemoryKernel::Exponential { amplitude, rate } => amplitude * (-rate * (t - s)).exp(),
            MemoryKernel::General(f) => f(t, s),
        }
    }

    /// One-argument form `M(tau) = M(tau, 0)`.
    pub fn lag(&self, tau: f64) -> f64 {
        self.eval(tau, 0.0)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MemoryKernel::Zero => true,
            MemoryKernel::Constant(c) => *c == 0.0,
            MemoryKernel::Exponential { amplitude, .. } => *amplitude == 0.0,
            MemoryKernel::General(_) => false,
        }
    }

    /// `(amplitude, rate)` when the kernel is `amplitude * exp(-rate (t - s))`.
    pub fn as_exponential(&self) -> Option<(f64, f64)> {
        match self {
            MemoryKernel::Zero => Some((0.0, 0.0)),
            MemoryKernel::Constant(c) => Some((*c, 0.0)),
            MemoryKernel::Exponential { amplitude, rate } => Some((*amplitude, *rate)),
            MemoryKernel::General(_) => None,
        }
    }

    /// Samples the kernel on the lower triangle of `times` and rejects
    /// non-finite values.
    pub fn check_bounded(&self, times: &[f64]) -> Result<f64> {
        let mut sup = 0.0_f64;
        for (k, &t) in times.iter().enumerate() {
            for &s in &times[..=k] {
                let v = self.eval(t, s);
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "memory kernel is not finite at (t, s) = ({t}, {s})"
                    )));
                }
                sup = sup.max(v.abs());
            }
        }
        Ok(sup)
    }
}
