//! Configuration-driven runs of the parametrix estimators with CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use parametrix::backward::{estimate_density_backward, estimate_density_x_gradient_backward};
use parametrix::forward::{
    estimate_density_forward, estimate_density_gradient_forward, estimate_expectation_forward,
};
use parametrix::levy::{estimate_density_levy, estimate_density_x_gradient_levy, LevyModel};
use parametrix::oracles::{benchmark, euler_kde_density, Benchmark, KdeOptions, OracleKind};
use parametrix::{EstimatorResult, Model, RunConfig};
use thiserror::Error;

pub use config::{Command, Config, Engine};

/// Exact CSV header.
pub const CSV_HEADER: [&str; 14] = [
    "point_id",
    "engine",
    "x",
    "y",
    "T",
    "lambda",
    "estimate",
    "std_error",
    "n_samples",
    "max_abs_weight",
    "kurtosis",
    "nan_count",
    "wall_time_ms",
    "seed",
];

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "PARAMETRIX_SEED";

/// Test functions available to `estimate-expectation`.
pub const F_KEYS: [&str; 5] = ["one", "identity", "square", "indicator-positive", "cos"];

/// Doublings performed by `convergence-study`.
pub const CONVERGENCE_STEPS: u32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Estimation(_) => 3,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

impl From<parametrix::Error> for CliError {
    fn from(e: parametrix::Error) -> Self {
        match e {
            parametrix::Error::Estimation(_) => CliError::Estimation(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
}

/// One output line.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub point_id: String,
    pub engine: Engine,
    pub x: Vec<f64>,
    /// Target point, or the test function key for expectations.
    pub y: String,
    pub horizon: f64,
    pub lambda: f64,
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
    pub n_samples: u64,
    pub max_abs_weight: f64,
    pub kurtosis: Vec<f64>,
    pub nan_count: u64,
    pub wall_time_ms: u128,
    pub seed: u64,
}

/// Round-trip exact rendering with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_float(x)).collect::<Vec<_>>().join(";")
}

impl Row {
    fn fields(&self) -> [String; 14] {
        [
            self.point_id.clone(),
            self.engine.name().to_string(),
            fmt_vec(&self.x),
            self.y.clone(),
            fmt_float(self.horizon),
            fmt_float(self.lambda),
            fmt_vec(&self.estimate),
            fmt_vec(&self.std_error),
            self.n_samples.to_string(),
            fmt_float(self.max_abs_weight),
            fmt_vec(&self.kurtosis),
            self.nan_count.to_string(),
            self.wall_time_ms.to_string(),
            self.seed.to_string(),
        ]
    }
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Seed precedence: flag, then environment, then file, then zero.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(e) = env {
        return e
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV} is not a decimal u64: `{e}`")));
    }
    Ok(file.unwrap_or(0))
}

fn test_function(key: &str) -> Result<fn(&[f64]) -> f64, CliError> {
    Ok(match key {
        "one" => |_| 1.0,
        "identity" => |x| x[0],
        "square" => |x| x.iter().map(|v| v * v).sum(),
        "indicator-positive" => |x| if x[0] > 0.0 { 1.0 } else { 0.0 },
        "cos" => |x| x[0].cos(),
        other => {
            return Err(CliError::Config(format!("unknown test function `{other}`; expected one of {F_KEYS:?}")))
        }
    })
}

enum Target<'a> {
    Density(&'a [f64]),
    Gradient(&'a [f64]),
    Expectation(&'a str),
}

enum Engines {
    Diffusion(Model),
    Levy(LevyModel<f64>),
}

struct Job {
    x: Vec<f64>,
    y: Option<Vec<f64>>,
    f: Option<String>,
    horizon: f64,
}

struct Runner<'a> {
    cfg: &'a Config,
    engine: Engines,
    seed: u64,
    workers: usize,
}

impl Runner<'_> {
    fn estimate(&self, job: &Job, target: Target<'_>, n: u64) -> Result<EstimatorResult, CliError> {
        let run = RunConfig::new(n, self.seed).lambda(self.cfg.lambda).workers(self.workers);
        let (x, t) = (job.x.as_slice(), job.horizon);
        let r = match (&self.engine, self.cfg.engine, target) {
            (Engines::Diffusion(m), Engine::Forward, Target::Density(y)) => estimate_density_forward(m, x, y, t, &run),
            (Engines::Diffusion(m), Engine::Forward, Target::Gradient(y)) => {
                estimate_density_gradient_forward(m, x, y, t, &run)
            }
            (Engines::Diffusion(m), Engine::Forward, Target::Expectation(key)) => {
                let f = test_function(key)?;
                estimate_expectation_forward(m, &f, x, t, &run)
            }
            (Engines::Diffusion(m), Engine::Backward, Target::Density(y)) => estimate_density_backward(m, x, y, t, &run),
            (Engines::Diffusion(m), Engine::Backward, Target::Gradient(y)) => {
                estimate_density_x_gradient_backward(m, x, y, t, &run)
            }
            (Engines::Levy(m), Engine::Levy, Target::Density(y)) => {
                estimate_density_levy(m, x[0], y[0], t, self.cfg.inner_m, &run)
            }
            (Engines::Levy(m), Engine::Levy, Target::Gradient(y)) => {
                estimate_density_x_gradient_levy(m, x[0], y[0], t, self.cfg.inner_m, &run)
            }
            _ => return Err(CliError::Config("engine does not support this command".into())),
        };
        Ok(r?)
    }

    fn row(&self, id: String, job: &Job, n: u64) -> Result<Row, CliError> {
        let target = match (self.cfg.command, &job.y, &job.f) {
            (Command::EstimateExpectation, _, Some(f)) => Target::Expectation(f),
            (Command::EstimateGradient, Some(y), _) => Target::Gradient(y),
            (_, Some(y), _) => Target::Density(y),
            _ => return Err(CliError::Config(format!("point {id} has no target"))),
        };
        let y = match &target {
            Target::Expectation(f) => f.to_string(),
            Target::Density(y) | Target::Gradient(y) => fmt_vec(y),
        };
        let start = Instant::now();
        let r = self.estimate(job, target, n)?;
        Ok(Row {
            point_id: id,
            engine: self.cfg.engine,
            x: job.x.clone(),
            y,
            horizon: job.horizon,
            lambda: self.cfg.lambda,
            estimate: r.mean,
            std_error: r.std_error,
            n_samples: r.n_samples,
            max_abs_weight: r.max_abs_weight,
            kurtosis: r.sample_kurtosis,
            nan_count: r.nan_count,
            wall_time_ms: start.elapsed().as_millis(),
            seed: self.seed,
        })
    }
}

fn check_dims(jobs: &[Job], dim: usize) -> Result<(), CliError> {
    for (i, j) in jobs.iter().enumerate() {
        let bad = j.x.len() != dim || j.y.as_ref().is_some_and(|y| y.len() != dim);
        if bad {
            return Err(CliError::Config(format!("point {i}: coordinates must have dimension {dim}")));
        }
    }
    Ok(())
}

fn benchmark_reference(
    b: &Benchmark,
    model: &Model,
    i: usize,
    cfg: &Config,
    seed: u64,
    workers: usize,
) -> Result<(f64, f64, f64), CliError> {
    if let Some(exact) = &b.exact_values {
        return Ok((exact[i], 0.0, 0.0));
    }
    let (x, y, t) = &b.points[i];
    let opts = KdeOptions {
        n_paths: cfg.kde_paths.unwrap_or(400_000),
        n_steps: 200,
        bandwidth: None,
        seed: seed ^ 0x6b64_655f_6f72_6163,
        workers,
    };
    let k = euler_kde_density(model, x[0], y[0], *t, &opts)?;
    Ok((k.value, k.std_error, k.bias_budget()))
}

/// Executes a parsed configuration. Diagnostics (benchmark z-scores and
/// convergence slopes) go to `diag`.
pub fn run<D: Write>(cfg: &Config, over: &Overrides, env_seed: Option<&str>, diag: &mut D) -> Result<Vec<Row>, CliError> {
    let seed = resolve_seed(over.seed, env_seed, cfg.seed)?;
    let workers = over.workers.unwrap_or(cfg.workers);
    let bench = match cfg.command {
        Command::Benchmark => {
            let name = cfg.benchmark.as_deref().unwrap_or_default();
            Some(benchmark(name).ok_or_else(|| CliError::Config(format!("unknown benchmark `{name}`")))?)
        }
        _ => None,
    };
    let (engine, jobs) = if let Some(b) = &bench {
        let m: Model = b.model.build()?;
        let jobs = b
            .points
            .iter()
            .map(|(x, y, t)| Job { x: x.clone(), y: Some(y.clone()), f: None, horizon: *t })
            .collect();
        (Engines::Diffusion(m), jobs)
    } else {
        let jobs: Vec<Job> = cfg
            .points
            .iter()
            .map(|p| Job {
                x: p.x.to_vec(),
                y: p.y.as_ref().map(|c| c.to_vec()),
                f: p.f.clone(),
                horizon: p.horizon,
            })
            .collect();
        let engine = if cfg.engine == Engine::Levy {
            check_dims(&jobs, 1)?;
            Engines::Levy(cfg.levy_model()?)
        } else {
            let fd = cfg.model.as_ref().is_some_and(|m| m.fd_fallback);
            let m: Model = cfg.diffusion_spec()?.build::<f64>()?.with_fd_fallback(fd);
            check_dims(&jobs, m.dim())?;
            Engines::Diffusion(m)
        };
        (engine, jobs)
    };
    if let (Engines::Diffusion(m), Engine::Forward) = (&engine, cfg.engine) {
        m.require_derivatives()
            .map_err(|e| CliError::Config(format!("forward engine needs coefficient derivatives: {e}")))?;
    }
    let runner = Runner { cfg, engine, seed, workers };
    let mut rows = Vec::new();
    match cfg.command {
        Command::ConvergenceStudy => {
            for (i, job) in jobs.iter().enumerate() {
                let mut pts = Vec::new();
                for k in 0..=CONVERGENCE_STEPS {
                    let row = runner.row(format!("{i}:{k}"), job, cfg.n_samples << k)?;
                    pts.push(((row.n_samples as f64).ln(), row.std_error[0].ln()));
                    rows.push(row);
                }
                writeln!(diag, "point {i}: log-log slope of std_error vs n = {:.4}", fitted_slope(&pts))?;
            }
        }
        _ => {
            for (i, job) in jobs.iter().enumerate() {
                rows.push(runner.row(i.to_string(), job, cfg.n_samples)?);
            }
        }
    }
    if let (Some(b), Engines::Diffusion(m)) = (&bench, &runner.engine) {
        let mut inside = 0;
        for (i, row) in rows.iter().enumerate() {
            let (reference, ref_se, bias) = benchmark_reference(b, m, i, cfg, seed, workers)?;
            let se = row.std_error[0].hypot(ref_se);
            let z = ((row.estimate[0] - reference).abs() - bias).max(0.0) / se;
            if z <= 3.0 {
                inside += 1;
            }
            writeln!(
                diag,
                "{} point {i}: estimate {:.6} reference {:.6} z {:.3}",
                b.name, row.estimate[0], reference, z
            )?;
        }
        let label = match b.oracle {
            OracleKind::ClosedForm => "closed form",
            OracleKind::EulerKde => "Euler+KDE",
            OracleKind::Quadrature => "quadrature",
        };
        writeln!(diag, "{}: {inside}/{} points within 3 std errors of the {label} reference", b.name, rows.len())?;
    }
    Ok(rows)
}

/// Least-squares slope of `(ln n, ln std_error)` pairs.
pub fn fitted_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Reads, runs and writes a configuration file. Output goes to the override
/// path, the configured path, or stdout.
pub fn run_file(path: &Path, over: &Overrides, env_seed: Option<&str>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = Config::parse(&text)?;
    let rows = run(&cfg, over, env_seed, &mut std::io::stderr())?;
    match over.output.as_ref().or(cfg.output.as_ref()) {
        Some(p) => write_csv(&rows, std::fs::File::create(p)?),
        None => write_csv(&rows, std::io::stdout().lock()),
    }
}

/// Lines printed by `benchmark list`.
pub fn benchmark_listing() -> Vec<String> {
    parametrix::oracles::benchmarks()
        .iter()
        .map(|b| {
            let oracle = match b.oracle {
                OracleKind::ClosedForm => "closed-form",
                OracleKind::EulerKde => "euler-kde",
                OracleKind::Quadrature => "quadrature",
            };
            format!("{}\t{}\t{} points\t{oracle}", b.name, b.model.key(), b.points.len())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some("2"), Some(3)).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some("2"), Some(3)).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some(3)).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), 0);
        assert_eq!(resolve_seed(None, Some("x"), None).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<_> = (0..6).map(|k| ((1000.0 * 2f64.powi(k)).ln(), -0.5 * (1000.0 * 2f64.powi(k)).ln())).collect();
        assert!((fitted_slope(&pts) + 0.5).abs() < 1e-12);
    }
}
