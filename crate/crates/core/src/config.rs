//! JSON run configuration with strict schema checking.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::{DegeneracyProfile, Endpoint, MemoryKernel, TimeCoefficient};
use crate::discretization::{build_grid, DiscreteOperatorFactory, Form, SpatialGrid};
use crate::duality::ControlSystem;
use crate::evolution::{rasterize_schedule, CenterPath, ScheduleKind, TimeGrid};
use crate::hum::HumConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `a = 1`
    Constant,
    Power {
        endpoint: Endpoint,
        k: f64,
    },
    DoublePower {
        k0: f64,
        k1: f64,
    },
}

impl ProfileSpec {
    pub fn build(&self) -> crate::Result<DegeneracyProfile> {
        match *self {
            ProfileSpec::Constant => DegeneracyProfile::power(Endpoint::Left, 0.0),
            ProfileSpec::Power { endpoint, k } => DegeneracyProfile::power(endpoint, k),
            ProfileSpec::DoublePower { k0, k1 } => DegeneracyProfile::double_power(k0, k1),
        }
    }

    /// Same shape with every exponent replaced by `k`.
    pub fn with_exponent(&self, k: f64) -> Self {
        match *self {
            ProfileSpec::Constant => ProfileSpec::Power {
                endpoint: Endpoint::Left,
                k,
            },
            ProfileSpec::Power { endpoint, .. } => ProfileSpec::Power { endpoint, k },
            ProfileSpec::DoublePower { .. } => ProfileSpec::DoublePower { k0: k, k1: k },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeCoefficientSpec {
    Constant {
        value: f64,
    },
    Affine {
        intercept: f64,
        slope: f64,
    },
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        frequency: f64,
    },
}

impl Default for TimeCoefficientSpec {
    fn default() -> Self {
        TimeCoefficientSpec::Constant { value: 1.0 }
    }
}

impl TimeCoefficientSpec {
    pub fn build(&self) -> TimeCoefficient {
        match *self {
            TimeCoefficientSpec::Constant { value } => TimeCoefficient::Constant(value),
            TimeCoefficientSpec::Affine { intercept, slope } => {
                TimeCoefficient::Affine { intercept, slope }
            }
            TimeCoefficientSpec::Sinusoidal {
                mean,
                amplitude,
                frequency,
            } => TimeCoefficient::Sinusoidal {
                mean,
                amplitude,
                frequency,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Exponential {
        amplitude: f64,
        rate: f64,
    },
}

impl KernelSpec {
    pub fn build(&self) -> MemoryKernel {
        match *self {
            KernelSpec::Zero => MemoryKernel::Zero,
            KernelSpec::Constant { value } => MemoryKernel::Constant(value),
            KernelSpec::Exponential { amplitude, rate } => {
                MemoryKernel::Exponential { amplitude, rate }
            }
        }
    }
}

/// Named initial data: `sine_mode:k`, `bump:center,width`, `random:seed`,
/// `zero`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitialDatum {
    SineMode(u32),
    Bump { center: f64, width: f64 },
    Random(u64),
    Zero,
}

impl Default for InitialDatum {
    fn default() -> Self {
        InitialDatum::SineMode(1)
    }
}

impl fmt::Display for InitialDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialDatum::SineMode(k) => write!(f, "sine_mode:{k}"),
            InitialDatum::Bump { center, width } => write!(f, "bump:{center},{width}"),
            InitialDatum::Random(seed) => write!(f, "random:{seed}"),
            InitialDatum::Zero => write!(f, "zero"),
        }
    }
}

impl FromStr for InitialDatum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || {
            format!("invalid initial datum `{s}` (expected sine_mode:k, bump:center,width, random:seed or zero)")
        };
        if s.trim() == "zero" {
            return Ok(InitialDatum::Zero);
        }
        let (tag, args) = s.split_once(':').ok_or_else(bad)?;
        match tag.trim() {
            "sine_mode" => {
                let k: u32 = args.trim().parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(format!("sine mode must be >= 1 in `{s}`"));
                }
                Ok(InitialDatum::SineMode(k))
            }
            "bump" => {
                let (c, w) = args.split_once(',').ok_or_else(bad)?;
                let center: f64 = c.trim().parse().map_err(|_| bad())?;
                let width: f64 = w.trim().parse().map_err(|_| bad())?;
                if !(center > 0.0 && center < 1.0 && width > 0.0) {
                    return Err(format!(
                        "bump needs center in (0, 1) and width > 0 in `{s}`"
                    ));
                }
                Ok(InitialDatum::Bump { center, width })
            }
            "random" => Ok(InitialDatum::Random(
                args.trim().parse().map_err(|_| bad())?,
            )),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for InitialDatum {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<InitialDatum> for String {
    fn from(d: InitialDatum) -> String {
        d.to_string()
    }
}

impl InitialDatum {
    pub fn sample(&self, grid: &SpatialGrid) -> Vec<f64> {
        match *self {
            InitialDatum::SineMode(k) => {
                grid.sample(|x| (k as f64 * std::f64::consts::PI * x).sin())
            }
            InitialDatum::Bump { center, width } => grid.sample(|x| {
                let r = (x - center) / width;
                if r.abs() < 1.0 {
                    (1.0 - r * r).powi(2)
                } else {
                    0.0
                }
            }),
            InitialDatum::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                grid.nodes()
                    .iter()
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect()
            }
            InitialDatum::Zero => vec![0.0; grid.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub form: Form,
    pub profile: ProfileSpec,
    #[serde(default)]
    pub b: TimeCoefficientSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    /// Defaults to `kernel`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_kernel: Option<KernelSpec>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub u0: InitialDatum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Nt")]
    pub nt: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_gamma() -> f64 {
    2.0
}

fn default_theta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    Sweep,
    Linear { start: f64, end: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Fixed {
        left: f64,
        right: f64,
    },
    /// Region of half-width `delta` whose centre follows `path`.
    Moving {
        delta: f64,
        path: PathSpec,
    },
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec::Fixed {
            left: 0.3,
            right: 0.8,
        }
    }
}

impl ControlSpec {
    pub fn kind(&self) -> ScheduleKind {
        match self {
            ControlSpec::Fixed { left, right } => ScheduleKind::Fixed {
                left: *left,
                right: *right,
            },
            ControlSpec::Moving { delta, path } => ScheduleKind::Moving {
                half_width: *delta,
                path: match path {
                    PathSpec::Sweep => CenterPath::Sweep,
                    PathSpec::Linear { start, end } => CenterPath::Linear {
                        start: *start,
                        end: *end,
                    },
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub hum: HumConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A fully assembled problem: control system plus initial datum.
pub struct Assembled {
    pub system: ControlSystem,
    pub u0: Vec<f64>,
}

impl RunConfig {
    /// Builds every numerical object the configuration describes.
    pub fn assemble(&self) -> crate::Result<Assembled> {
        let p = &self.problem;
        let profile = p.profile.build()?;
        let grid = build_grid(self.grid.n, &profile, self.grid.gamma)?;
        let factory =
            DiscreteOperatorFactory::new(p.form, profile, p.b.build(), grid.clone(), p.horizon)?;
        let tgrid = TimeGrid::new(p.horizon, self.grid.nt)?;
        let schedule = rasterize_schedule(self.control.kind(), &grid, &tgrid)?;
        let kernel = p.kernel.build();
        let target = p.target_kernel.as_ref().unwrap_or(&p.kernel).build();
        let system = ControlSystem::new(
            factory,
            kernel,
            target,
            tgrid,
            schedule,
            self.grid.theta,
            self.hum.target_mode,
            self.hum.effective_rho(),
        )?;
        Ok(Assembled {
            u0: p.u0.sample(&grid),
            system,
        })
    }

    /// Semantic checks: everything [`RunConfig::assemble`] would reject.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.hum
            .validate()
            .map_err(|e| ConfigError::Semantic(e.to_string()))?;
        if self.hum.epsilons.len() < 3 {
            return Err(ConfigError::Semantic(
                "hum.epsilons needs at least 3 penalties".into(),
            ));
        }
        self.assemble()
            .map(|_| ())
            .map_err(|e| ConfigError::Semantic(e.to_string()))
    }

    /// Canonical JSON with every default written out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid config: {0}")]
    Semantic(String),
}

fn suggestion(message: &str) -> Option<String> {
    let start = message
        .find("unknown field `")
        .or_else(|| message.find("unknown variant `"))?;
    let rest = &message[start..];
    let open = rest.find('`')? + 1;
    let close = open + rest[open..].find('`')?;
    let unknown = &rest[open..close];
    let expected = &rest[close + 1..];
    expected
        .split('`')
        .skip(1)
        .step_by(2)
        .map(|cand| (strsim::levenshtein(unknown, cand), cand))
        .filter(|(d, _)| *d <= 3)
        .min()
        .map(|(_, c)| format!("did you mean `{c}`?"))
}

/// Parses and validates a configuration from JSON text.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = match serde_path_to_error::deserialize(de) {
        Ok(c) => c,
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            use serde_json::error::Category;
            return Err(match inner.classify() {
                Category::Syntax | Category::Eof | Category::Io => ConfigError::Syntax {
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                },
                Category::Data => {
                    let mut message = inner.to_string();
                    if let Some(hint) = suggestion(&message) {
                        message = format!("{message}; {hint}");
                    }
                    ConfigError::Schema { path, message }
                }
            });
        }
    };
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text)
}
