//! Reference values independent of the parametrix engines: closed-form
//! densities, a brute-force Euler–Maruyama kernel density estimate, and the
//! benchmark catalog used by the command-line tool.

use crate::catalog::ModelSpec;
use crate::error::{Error, Result};
use crate::estimator::{run_estimator, EstimatorOptions, EstimatorResult, SampleInfo};
use crate::quadrature::gauss_legendre;
use crate::kernels::{gauss_1d, gauss_isotropic};
use crate::levy::{LevyModel, MixtureKind};
use crate::model::DiffusionModel;
use crate::scalar::Scalar;

/// `q_{T σ² I}(y - x - b T)` for constant `σ I` and drift `b`.
pub fn exact_gaussian_density(sigma: f64, drift: &[f64], x: &[f64], y: &[f64], horizon: f64) -> f64 {
    let w: Vec<f64> = y
        .iter()
        .zip(x)
        .zip(drift)
        .map(|((y, x), b)| y - x - b * horizon)
        .collect();
    gauss_isotropic(horizon * sigma * sigma, &w)
}

/// Ornstein–Uhlenbeck density for `dX = -κ(X - μ) dt + σ dW`, coordinatewise.
pub fn exact_ou_density_about(kappa: f64, mean: f64, sigma: f64, x: &[f64], y: &[f64], horizon: f64) -> f64 {
    let var = if kappa.abs() < 1e-12 {
        sigma * sigma * horizon
    } else {
        sigma * sigma * (-(-2.0 * kappa * horizon).exp_m1()) / (2.0 * kappa)
    };
    let decay = (-kappa * horizon).exp();
    y.iter()
        .zip(x)
        .map(|(&y, &x)| gauss_1d(var, y - mean - (x - mean) * decay))
        .product()
}

/// Ornstein–Uhlenbeck density with mean reversion to the origin.
pub fn exact_ou_density(kappa: f64, sigma: f64, x: &[f64], y: &[f64], horizon: f64) -> f64 {
    exact_ou_density_about(kappa, 0.0, sigma, x, y, horizon)
}

/// Closed-form transition density of a catalog model when one exists.
pub fn exact_density(spec: &ModelSpec, x: &[f64], y: &[f64], horizon: f64) -> Option<f64> {
    match *spec {
        ModelSpec::Constant { dim, sigma, drift } => {
            Some(exact_gaussian_density(sigma, &vec![drift; dim], x, y, horizon))
        }
        ModelSpec::OrnsteinUhlenbeck { kappa, mean, sigma, .. } => {
            Some(exact_ou_density_about(kappa, mean, sigma, x, y, horizon))
        }
        ModelSpec::SinusoidalVolatility { s0, s1, drift, .. } if s1 == 0.0 && drift == 0.0 => {
            Some(exact_gaussian_density(s0, &[0.0], x, y, horizon))
        }
        ModelSpec::HolderVolatility { a0, a1, drift, .. } if a1 == 0.0 && drift == 0.0 => {
            Some(exact_gaussian_density(a0.sqrt(), &[0.0], x, y, horizon))
        }
        _ => None,
    }
}

/// Kernel density estimate of `p_T(x, y)` from Euler–Maruyama paths.
#[derive(Clone, Debug, PartialEq)]
pub struct KdeEstimate {
    pub value: f64,
    pub std_error: f64,
    pub bandwidth: f64,
    /// `|½ h² p''(y)|` with `p''` from a wider-bandwidth kernel estimate.
    pub smoothing_bias: f64,
    /// `|p̂_n - p̂_{n/2}|` from the same Brownian paths on a grid twice as coarse.
    pub discretization_bias: f64,
}

impl KdeEstimate {
    /// Total bias allowance: smoothing plus discretization estimates.
    pub fn bias_budget(&self) -> f64 {
        self.smoothing_bias + self.discretization_bias
    }
}

/// Options of the Euler + kernel density oracle.
#[derive(Clone, Debug)]
pub struct KdeOptions {
    pub n_paths: u64,
    pub n_steps: usize,
    /// Fixed bandwidth; `None` uses half of Silverman's rule.
    pub bandwidth: Option<f64>,
    pub seed: u64,
    pub workers: usize,
}

fn euler_paths<F: Scalar>(
    model: &DiffusionModel<F>,
    x: f64,
    horizon: f64,
    n_steps: usize,
    rng: &mut crate::estimator::SampleRng,
) -> (f64, f64) {
    let c = model.coefficients();
    let dt = horizon / n_steps as f64;
    let sq = dt.sqrt();
    let (mut fine, mut coarse) = (x, x);
    let (mut s, mut b) = ([F::zero()], [F::zero()]);
    let mut pending = 0.0;
    for k in 0..n_steps {
        let xi = F::sample_standard_normal(rng).as_f64();
        c.sigma(&[F::of(fine)], &mut s);
        c.drift(&[F::of(fine)], &mut b);
        fine += s[0].as_f64() * sq * xi + b[0].as_f64() * dt;
        pending += xi;
        if k % 2 == 1 {
            c.sigma(&[F::of(coarse)], &mut s);
            c.drift(&[F::of(coarse)], &mut b);
            coarse += s[0].as_f64() * sq * pending + b[0].as_f64() * 2.0 * dt;
            pending = 0.0;
        }
    }
    (fine, coarse)
}

/// Brute-force density oracle in one dimension.
pub fn euler_kde_density<F: Scalar>(
    model: &DiffusionModel<F>,
    x: f64,
    y: f64,
    horizon: f64,
    options: &KdeOptions,
) -> Result<KdeEstimate> {
    if model.dim() != 1 {
        return Err(Error::Capability("kernel density oracle is one-dimensional".into()));
    }
    if options.n_steps < 100 || !options.n_steps.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "n_steps must be even and at least 100, got {}",
            options.n_steps
        )));
    }
    let opts = EstimatorOptions::with_workers(options.workers);
    let n = options.n_steps;
    let bandwidth = match options.bandwidth {
        Some(h) => h,
        None => {
            let pilot = run_estimator(2, 20_000, options.seed ^ 0xa5a5, &opts, |rng, out| {
                let (v, _) = euler_paths(model, x, horizon, n, rng);
                out[0] = v;
                out[1] = v * v;
                SampleInfo::weight(1.0)
            })?;
            let sd = (pilot.mean[1] - pilot.mean[0].powi(2)).max(0.0).sqrt();
            0.5 * 1.06 * sd * (options.n_paths as f64).powf(-0.2)
        }
    };
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let wide = 3.0 * bandwidth;
    let r = run_estimator(3, options.n_paths, options.seed, &opts, |rng, out| {
        let (fine, coarse) = euler_paths(model, x, horizon, n, rng);
        out[0] = gauss_1d(bandwidth * bandwidth, fine - y);
        out[1] = gauss_1d(bandwidth * bandwidth, coarse - y);
        let u = (fine - y) / wide;
        out[2] = (u * u - 1.0) / (wide * wide) * gauss_1d(wide * wide, fine - y);
        SampleInfo::weight(1.0)
    })?;
    Ok(KdeEstimate {
        value: r.mean[0],
        std_error: r.std_error[0],
        bandwidth,
        smoothing_bias: 0.5 * bandwidth * bandwidth * (r.mean[2].abs() + 3.0 * r.std_error[2]),
        discretization_bias: (r.mean[0] - r.mean[1]).abs(),
    })
}

/// `θ̂_t(x, y) φ_t^y(x) = ∫ E[q_{σ²(x)c + σ²(y)V_t}(x - y) - q_{σ²(y)c + σ²(y)V_t}(x - y)] ν(dc)`
/// with the `c` integral done deterministically and Monte Carlo over `V_t` only.
///
/// Discrete atoms are summed up to `10⁴`; beyond that the bracket is replaced by
/// its first-order expansion in `c`. The power density is integrated by
/// Gauss–Legendre after `c = r^{1/(1-β)}`, which makes the integrand bounded.
pub fn levy_theta_phi<F: Scalar>(
    model: &LevyModel<F>,
    x: f64,
    y: f64,
    t: f64,
    n_v: u64,
    seed: u64,
    workers: usize,
) -> Result<EstimatorResult> {
    let sx = model.sigma(F::of(x)).as_f64().powi(2);
    let sy = model.sigma(F::of(y)).as_f64().powi(2);
    let w = x - y;
    let mix = model.mixture().clone();
    let (nodes, weights) = gauss_legendre(96);
    let atoms: Vec<f64> = match mix.kind() {
        MixtureKind::Discrete { rho, .. } => (1..=10_000).map(|k| (k as f64).powf(-rho)).collect(),
        MixtureKind::Power { .. } => Vec::new(),
    };
    let tail = match mix.kind() {
        MixtureKind::Discrete { rho, .. } => crate::levy::zeta(*rho) - atoms.iter().sum::<f64>(),
        MixtureKind::Power { .. } => 0.0,
    };
    let opts = EstimatorOptions::with_workers(workers);
    run_estimator(1, n_v, seed, &opts, |rng, out| {
        let v = mix.sample_increment(t, rng);
        let base = sy * v;
        let bracket = |c: f64| gauss_1d(sx * c + base, w) - gauss_1d(sy * c + base, w);
        let ds_q = 0.5 * (w * w / (base * base) - 1.0 / base) * gauss_1d(base, w);
        out[0] = match mix.kind() {
            MixtureKind::Discrete { .. } => {
                atoms.iter().map(|&c| bracket(c)).sum::<f64>() + (sx - sy) * ds_q * tail
            }
            MixtureKind::Power { beta, .. } => {
                let p = 1.0 / (1.0 - beta);
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&u, &wt)| {
                        let r = 0.5 * (u + 1.0);
                        let c = r.powf(p);
                        let f = if c > 1e-9 { bracket(c) / c } else { (sx - sy) * ds_q };
                        0.5 * wt * p * f
                    })
                    .sum()
            }
        };
        SampleInfo::weight(1.0)
    })
}

/// Reference used to judge a benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    ClosedForm,
    EulerKde,
    Quadrature,
}

/// A named model with evaluation points `(x, y, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub name: &'static str,
    pub model: ModelSpec,
    pub points: Vec<(Vec<f64>, Vec<f64>, f64)>,
    pub oracle: OracleKind,
    /// Closed-form densities at `points`, present iff `oracle` is closed form.
    pub exact_values: Option<Vec<f64>>,
}

fn grid_points(xs: &[f64], ys: &[f64], ts: &[f64]) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    let mut out = Vec::new();
    for &t in ts {
        for &x in xs {
            for &y in ys {
                out.push((vec![x], vec![y], t));
            }
        }
    }
    out
}

fn closed_form(name: &'static str, model: ModelSpec, points: Vec<(Vec<f64>, Vec<f64>, f64)>) -> Benchmark {
    let exact = points
        .iter()
        .map(|(x, y, t)| exact_density(&model, x, y, *t).expect("closed-form model"))
        .collect();
    Benchmark {
        name,
        model,
        points,
        oracle: OracleKind::ClosedForm,
        exact_values: Some(exact),
    }
}

/// Built-in benchmarks.
pub fn benchmarks() -> Vec<Benchmark> {
    vec![
        closed_form(
            "constant-1d",
            ModelSpec::Constant { dim: 1, sigma: 1.0, drift: 0.0 },
            grid_points(&[0.0], &[-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0], &[0.5, 1.0]),
        ),
        closed_form(
            "constant-drift-1d",
            ModelSpec::Constant { dim: 1, sigma: 1.0, drift: 0.5 },
            grid_points(&[0.0], &[-1.0, 0.0, 0.5, 1.0, 2.0], &[1.0]),
        ),
        closed_form(
            "constant-2d",
            ModelSpec::Constant { dim: 2, sigma: 0.8, drift: 0.0 },
            vec![
                (vec![0.0, 0.0], vec![0.0, 0.0], 1.0),
                (vec![0.0, 0.0], vec![0.5, -0.5], 1.0),
                (vec![0.2, 0.1], vec![1.0, 0.3], 0.5),
            ],
        ),
        closed_form(
            "ou-1d",
            ModelSpec::OrnsteinUhlenbeck { dim: 1, kappa: 0.5, mean: 0.0, sigma: 1.0 },
            grid_points(&[-1.0, 0.0, 1.0], &[-1.0, 0.0, 1.0], &[0.25, 1.0]),
        ),
        Benchmark {
            name: "sin-vol",
            model: ModelSpec::SinusoidalVolatility { s0: 1.0, s1: 0.3, omega: 1.0, drift: 0.3 },
            points: grid_points(&[0.2], &[-0.5, 0.2, 0.7], &[0.5, 1.0]),
            oracle: OracleKind::EulerKde,
            exact_values: None,
        },
        Benchmark {
            name: "holder-vol",
            model: ModelSpec::HolderVolatility { a0: 1.0, a1: 0.25, alpha: 0.5, drift: 0.0 },
            points: grid_points(&[0.0], &[-0.6, -0.3, 0.0, 0.3, 0.6], &[1.0]),
            oracle: OracleKind::EulerKde,
            exact_values: None,
        },
    ]
}

/// Looks up a built-in benchmark by name.
pub fn benchmark(name: &str) -> Option<Benchmark> {
    benchmarks().into_iter().find(|b| b.name == name)
}
