//! Backward parametrix estimators. They need no coefficient derivatives and
//! apply to a Hölder continuous diffusion coefficient with a bounded measurable
//! drift.
//!
//! The chain starts at the target point `y` and moves with reversed drift.
//! Each interval contributes
//!
//! ```text
//! θ̂_t(x, z) = ½ Σ_ij (a^{ij}(x) - a^{ij}(z)) ĥ^{ij} - Σ_i (b^i(x) - b^i(z)) ĥ^i
//! ```
//!
//! with `ĥ = H_{t a(z)}(z - x - b(z) t)`, evaluated at (new state, old state).

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimator::{EstimatorResult, RunConfig, SampleInfo, SampleRng};
use crate::kernels::{gauss_isotropic, GaussianKernel};
use crate::model::{euler_step, DiffusionModel, Scratch};
use crate::poisson::{sample_poisson_grid, PoissonGrid};
use crate::scalar::Scalar;

/// One draw of the backward chain.
#[derive(Clone, Debug)]
pub struct BackwardPath<F> {
    pub grid: PoissonGrid<F>,
    /// `X*_{τ_0} = y, …, X*_{τ_J}`.
    pub states: Vec<Vec<F>>,
    /// `Γ* = Π_j θ̂_{τ_{j+1}-τ_j}(X*_{τ_{j+1}}, X*_{τ_j})`.
    pub weight: F,
}

impl<F: Scalar> BackwardPath<F> {
    pub fn last_state(&self) -> &[F] {
        self.states.last().expect("path holds its start point")
    }
}

pub(crate) fn theta_hat_with<F: Scalar>(
    model: &DiffusionModel<F>,
    t: F,
    x: &[F],
    z: &[F],
    s: &mut Scratch<F>,
) -> Result<F> {
    let c = model.coefficients();
    let d = model.dim();
    c.diffusion(x, &mut s.a_x);
    c.drift(x, &mut s.b_x);
    c.diffusion(z, &mut s.a_y);
    c.drift(z, &mut s.b_y);
    let k = GaussianKernel::from_covariance(d, &s.a_y, t)?;
    for i in 0..d {
        s.w[i] = z[i] - x[i] - s.b_y[i] * t;
    }
    k.solve(&s.w, &mut s.solved);
    let u = &s.solved;
    let mut second = F::zero();
    let mut first = F::zero();
    for i in 0..d {
        for j in 0..d {
            let ij = i * d + j;
            second = second + (s.a_x[ij] - s.a_y[ij]) * (u[i] * u[j] - k.inverse(i, j));
        }
        first = first + (s.b_x[i] - s.b_y[i]) * (-u[i]);
    }
    Ok(F::of(0.5) * second - first)
}

/// `θ̂_t(x, z)`.
pub fn theta_hat<F: Scalar>(model: &DiffusionModel<F>, t: F, x: &[F], z: &[F]) -> Result<F> {
    model.check_point(x)?;
    model.check_point(z)?;
    if !(t > F::zero()) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    theta_hat_with(model, t, x, z, &mut Scratch::for_model(model))
}

/// `q_{t a(z)}(z - x - b(z) t)` and optionally `ĥ^i` of the same argument.
fn backward_terminal<F: Scalar>(
    model: &DiffusionModel<F>,
    t: F,
    x: &[F],
    z: &[F],
    s: &mut Scratch<F>,
    hermite: Option<&mut [F]>,
) -> Result<F> {
    let c = model.coefficients();
    let d = model.dim();
    c.diffusion(z, &mut s.a_y);
    c.drift(z, &mut s.b_y);
    let k = GaussianKernel::from_covariance(d, &s.a_y, t)?;
    for i in 0..d {
        s.w[i] = z[i] - x[i] - s.b_y[i] * t;
    }
    k.solve(&s.w, &mut s.solved);
    if let Some(h) = hermite {
        for (hi, &v) in h.iter_mut().zip(&s.solved) {
            *hi = -v;
        }
    }
    Ok(k.density_with_solved(&s.w, &s.solved))
}

fn run_chain<F: Scalar, R: Rng + ?Sized>(
    model: &DiffusionModel<F>,
    y: &[F],
    grid: &PoissonGrid<F>,
    rng: &mut R,
    s: &mut Scratch<F>,
    states: &mut Vec<F>,
    stop_on_zero: bool,
) -> Result<F> {
    let d = model.dim();
    let c = model.coefficients().as_ref();
    states.clear();
    states.extend_from_slice(y);
    let mut weight = F::one();
    let mut next = vec![F::zero(); d];
    let mut cur = y.to_vec();
    for dt in grid.jump_increments() {
        euler_step(c, &cur, &cur, dt, -F::one(), rng, s, &mut next);
        weight = weight * theta_hat_with(model, dt, &next, &cur, s)?;
        states.extend_from_slice(&next);
        cur.copy_from_slice(&next);
        if stop_on_zero && weight == F::zero() {
            break;
        }
    }
    Ok(weight)
}

/// Samples the Poisson grid and the reversed-drift chain started at `y`.
pub fn sample_backward_path<F: Scalar, R: Rng + ?Sized>(
    model: &DiffusionModel<F>,
    y: &[F],
    horizon: F,
    lambda: F,
    rng: &mut R,
) -> Result<BackwardPath<F>> {
    model.check_point(y)?;
    let grid = sample_poisson_grid(lambda, horizon, rng)?;
    let mut s = Scratch::for_model(model);
    let mut flat = Vec::new();
    let weight = run_chain(model, y, &grid, rng, &mut s, &mut flat, false)?;
    Ok(BackwardPath {
        grid,
        states: flat.chunks(model.dim()).map(|c| c.to_vec()).collect(),
        weight,
    })
}

/// Per-sample density value `e^{λT} λ^{-J} Γ* φ` of a sampled backward path,
/// where `φ` is the kernel frozen at the last state and evaluated at `x`.
pub fn backward_density_term<F: Scalar>(
    model: &DiffusionModel<F>,
    path: &BackwardPath<F>,
    x: &[F],
) -> Result<F> {
    model.check_point(x)?;
    let mut s = Scratch::for_model(model);
    let q = backward_terminal(model, path.grid.terminal_gap(), x, path.last_state(), &mut s, None)?;
    Ok(path.grid.normalization() * path.weight * q)
}

/// A probability density that can be sampled and evaluated.
pub trait SamplableDensity<F>: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut SampleRng, out: &mut [F]);
    fn density(&self, y: &[F]) -> F;
}

/// Isotropic Gaussian `N(mean, var·I)`.
#[derive(Clone, Debug)]
pub struct GaussianDensity<F> {
    pub mean: Vec<F>,
    pub var: F,
}

impl<F: Scalar> SamplableDensity<F> for GaussianDensity<F> {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, rng: &mut SampleRng, out: &mut [F]) {
        let sd = self.var.sqrt();
        for (o, &m) in out.iter_mut().zip(&self.mean) {
            *o = m + sd * F::sample_standard_normal(rng);
        }
    }

    fn density(&self, y: &[F]) -> F {
        let w: Vec<F> = y.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        gauss_isotropic(self.var, &w)
    }
}

/// Uniform density on the box `[lo, hi]^d`.
#[derive(Clone, Debug)]
pub struct UniformDensity<F> {
    pub dim: usize,
    pub lo: F,
    pub hi: F,
}

impl<F: Scalar> SamplableDensity<F> for UniformDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut SampleRng, out: &mut [F]) {
        for o in out.iter_mut() {
            *o = self.lo + (self.hi - self.lo) * F::sample_unit(rng);
        }
    }

    fn density(&self, y: &[F]) -> F {
        if y.iter().all(|&v| v >= self.lo && v <= self.hi) {
            (self.hi - self.lo).powi(-(self.dim as i32))
        } else {
            F::zero()
        }
    }
}

enum Target<'a, F> {
    Density(&'a [F]),
    Gradient(&'a [F]),
    Semigroup(&'a dyn SamplableDensity<F>),
}

fn estimate<F: Scalar>(
    model: &DiffusionModel<F>,
    x: &[F],
    horizon: F,
    run: &RunConfig,
    target: Target<'_, F>,
) -> Result<EstimatorResult> {
    model.check_point(x)?;
    match &target {
        Target::Density(y) | Target::Gradient(y) => model.check_point(y)?,
        Target::Semigroup(h) => {
            if h.dim() != model.dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.dim(),
                    got: h.dim(),
                });
            }
        }
    }
    if !(horizon > F::zero()) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let d = model.dim();
    let lambda = F::of(run.lambda);
    let out_dim = if matches!(target, Target::Gradient(_)) { d } else { 1 };
    let mut r = run.run(out_dim, |rng, out| {
        let mut s = Scratch::for_model(model);
        let mut states = Vec::with_capacity(4 * d);
        let mut hermite = vec![F::zero(); d];
        let mut start = vec![F::zero(); d];
        match &target {
            Target::Density(y) | Target::Gradient(y) => start.copy_from_slice(y),
            Target::Semigroup(h) => h.sample(rng, &mut start),
        }
        let grid = match sample_poisson_grid(lambda, horizon, rng) {
            Ok(g) => g,
            Err(_) => {
                out[0] = f64::NAN;
                return SampleInfo::weight(f64::NAN);
            }
        };
        let info = |w: F| SampleInfo {
            weight: w.as_f64(),
            resampled: grid.resampled,
        };
        let weight = match run_chain(model, &start, &grid, rng, &mut s, &mut states, true) {
            Ok(w) if w == F::zero() => return info(w),
            Ok(w) => grid.normalization() * w,
            Err(_) => {
                out[0] = f64::NAN;
                return info(F::nan());
            }
        };
        let jd = grid.jump_count() * d;
        let z = states[jd..jd + d].to_vec();
        let gap = grid.terminal_gap();
        let grad = matches!(target, Target::Gradient(_));
        match backward_terminal(model, gap, x, &z, &mut s, grad.then_some(&mut hermite[..])) {
            Ok(q) if grad => {
                for i in 0..d {
                    out[i] = (-weight * q * hermite[i]).as_f64();
                }
            }
            Ok(q) => out[0] = (weight * q).as_f64(),
            Err(_) => out[0] = f64::NAN,
        }
        info(weight)
    })?;
    r.note("engine", "backward");
    Ok(r)
}

/// Unbiased estimate of `p_T(x, y)` from the chain started at `y`.
pub fn estimate_density_backward<F: Scalar>(
    model: &DiffusionModel<F>,
    x: &[F],
    y: &[F],
    horizon: F,
    run: &RunConfig,
) -> Result<EstimatorResult> {
    estimate(model, x, horizon, run, Target::Density(y))
}

/// Unbiased estimate of `∇_x p_T(x, y)`.
pub fn estimate_density_x_gradient_backward<F: Scalar>(
    model: &DiffusionModel<F>,
    x: &[F],
    y: &[F],
    horizon: F,
    run: &RunConfig,
) -> Result<EstimatorResult> {
    estimate(model, x, horizon, run, Target::Gradient(y))
}

/// Unbiased estimate of `∫ h(y) p_T(x, y) dy`, starting the chain at `Z ~ h`.
pub fn estimate_semigroup_on_density<F: Scalar>(
    model: &DiffusionModel<F>,
    h: &dyn SamplableDensity<F>,
    x: &[F],
    horizon: F,
    run: &RunConfig,
) -> Result<EstimatorResult> {
    estimate(model, x, horizon, run, Target::Semigroup(h))
}
