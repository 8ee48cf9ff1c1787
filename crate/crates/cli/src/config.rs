//! Declarative run configuration (TOML).

use std::path::PathBuf;

use parametrix::catalog::ModelSpec;
use parametrix::levy::{LevyMixture, LevyModel};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    EstimateDensity,
    EstimateExpectation,
    EstimateGradient,
    Benchmark,
    ConvergenceStudy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Forward,
    Backward,
    Levy,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Forward => "forward",
            Engine::Backward => "backward",
            Engine::Levy => "levy",
        }
    }
}

/// A scalar or a vector coordinate.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Coord {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Coord {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Coord::Scalar(v) => vec![*v],
            Coord::Vector(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: Coord,
    pub y: Option<Coord>,
    /// Test function key for expectations.
    pub f: Option<String>,
    #[serde(rename = "T")]
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    pub dim: Option<usize>,
    pub sigma: Option<f64>,
    pub drift: Option<f64>,
    pub kappa: Option<f64>,
    pub mean: Option<f64>,
    pub s0: Option<f64>,
    pub s1: Option<f64>,
    pub omega: Option<f64>,
    pub a0: Option<f64>,
    pub a1: Option<f64>,
    pub alpha: Option<f64>,
    /// Enables finite-difference derivatives for the forward engine.
    #[serde(default)]
    pub fd_fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    pub kind: String,
    pub rho: Option<f64>,
    pub truncation: Option<usize>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_workers() -> usize {
    1
}

fn default_inner_m() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub command: Command,
    pub engine: Engine,
    pub model: Option<ModelSection>,
    pub levy: Option<LevySection>,
    #[serde(default)]
    pub points: Vec<Point>,
    /// Built-in benchmark name for the `benchmark` command.
    pub benchmark: Option<String>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub n_samples: u64,
    pub seed: Option<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_inner_m")]
    pub inner_m: usize,
    /// Euler paths for the kernel density reference of benchmarks without a
    /// closed form.
    pub kde_paths: Option<u64>,
    pub output: Option<PathBuf>,
}

/// Discrete atoms kept explicitly by default.
pub const DEFAULT_TRUNCATION: usize = 256;
/// Default small-jump cutoff of the power mixture.
pub const DEFAULT_EPSILON: f64 = 1e-3;

fn need(v: Option<f64>, key: &str, kind: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Config(format!("model kind `{kind}` requires `{key}`")))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(CliError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.n_samples < 2 {
            return Err(CliError::Config("n_samples must be at least 2".into()));
        }
        if self.inner_m == 0 {
            return Err(CliError::Config("inner_m must be at least 1".into()));
        }
        if self.command == Command::Benchmark {
            if self.benchmark.is_none() {
                return Err(CliError::Config("benchmark command requires `benchmark`".into()));
            }
            if self.engine == Engine::Levy {
                return Err(CliError::Config("benchmarks are defined for diffusion engines".into()));
            }
        } else {
            if self.model.is_none() {
                return Err(CliError::Config("missing [model] section".into()));
            }
            if self.points.is_empty() {
                return Err(CliError::Config("at least one [[points]] entry is required".into()));
            }
        }
        for (i, p) in self.points.iter().enumerate() {
            if !(p.horizon > 0.0) {
                return Err(CliError::Config(format!("point {i}: T must be positive")));
            }
            match self.command {
                Command::EstimateExpectation if p.f.is_none() => {
                    return Err(CliError::Config(format!("point {i}: expectation requires `f`")));
                }
                Command::EstimateExpectation => {}
                _ if p.y.is_none() => {
                    return Err(CliError::Config(format!("point {i}: `y` is required")));
                }
                _ => {}
            }
        }
        if self.command == Command::EstimateExpectation && self.engine != Engine::Forward {
            return Err(CliError::Config("expectations are estimated by the forward engine".into()));
        }
        let levy_model = self
            .model
            .as_ref()
            .is_some_and(|m| m.kind.starts_with("levy-"));
        if self.engine == Engine::Levy && self.model.is_some() && !levy_model {
            return Err(CliError::Config("the levy engine requires a levy-* model kind".into()));
        }
        if self.engine != Engine::Levy && levy_model {
            return Err(CliError::Config(format!(
                "model kind `{}` requires the levy engine",
                self.model.as_ref().map(|m| m.kind.as_str()).unwrap_or_default()
            )));
        }
        Ok(())
    }

    /// Catalog diffusion model described by the `[model]` section.
    pub fn diffusion_spec(&self) -> Result<ModelSpec, CliError> {
        let m = self
            .model
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [model] section".into()))?;
        let k = m.kind.as_str();
        let spec = match k {
            "constant" => ModelSpec::Constant {
                dim: m.dim.unwrap_or(1),
                sigma: need(m.sigma, "sigma", k)?,
                drift: m.drift.unwrap_or(0.0),
            },
            "ou" => ModelSpec::OrnsteinUhlenbeck {
                dim: m.dim.unwrap_or(1),
                kappa: need(m.kappa, "kappa", k)?,
                mean: m.mean.unwrap_or(0.0),
                sigma: need(m.sigma, "sigma", k)?,
            },
            "sin-vol" => ModelSpec::SinusoidalVolatility {
                s0: need(m.s0, "s0", k)?,
                s1: need(m.s1, "s1", k)?,
                omega: m.omega.unwrap_or(1.0),
                drift: m.drift.unwrap_or(0.0),
            },
            "holder-vol" => ModelSpec::HolderVolatility {
                a0: need(m.a0, "a0", k)?,
                a1: need(m.a1, "a1", k)?,
                alpha: need(m.alpha, "alpha", k)?,
                drift: m.drift.unwrap_or(0.0),
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown model kind `{other}`; expected one of {:?} or levy-constant, levy-holder",
                    ModelSpec::KEYS
                )))
            }
        };
        if m.kind != "constant" && m.kind != "ou" && m.dim.is_some_and(|d| d != 1) {
            return Err(CliError::Config(format!("model kind `{}` is one-dimensional", m.kind)));
        }
        Ok(spec)
    }

    pub fn mixture(&self) -> Result<LevyMixture, CliError> {
        let l = self
            .levy
            .as_ref()
            .ok_or_else(|| CliError::Config("levy engine requires a [levy] section".into()))?;
        let r = match l.kind.as_str() {
            "discrete" => LevyMixture::discrete(
                l.rho.ok_or_else(|| CliError::Config("discrete mixture requires `rho`".into()))?,
                l.truncation.unwrap_or(DEFAULT_TRUNCATION),
            ),
            "power" => LevyMixture::power(
                l.beta.ok_or_else(|| CliError::Config("power mixture requires `beta`".into()))?,
                l.epsilon.unwrap_or(DEFAULT_EPSILON),
            ),
            other => {
                return Err(CliError::Config(format!(
                    "unknown mixture kind `{other}`; expected discrete or power"
                )))
            }
        };
        r.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn levy_model(&self) -> Result<LevyModel<f64>, CliError> {
        let m = self
            .model
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [model] section".into()))?;
        let mix = self.mixture()?;
        let k = m.kind.as_str();
        let r = match k {
            "levy-constant" => LevyModel::constant(need(m.sigma, "sigma", k)?, mix),
            "levy-holder" => LevyModel::holder(
                need(m.s0, "s0", k)?,
                need(m.s1, "s1", k)?,
                need(m.alpha, "alpha", k)?,
                mix,
            ),
            other => return Err(CliError::Config(format!("unknown levy model kind `{other}`"))),
        };
        r.map_err(|e| CliError::Config(e.to_string()))
    }
}
