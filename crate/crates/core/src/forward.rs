//! Forward parametrix estimators for diffusions with smooth coefficients.
//!
//! Along an Euler chain on Poisson times the chain is frozen at its current
//! state, and the weight
//!
//! ```text
//! θ_t(x, y) = ½ Σ_ij θ^{ij} - Σ_i ρ^i
//! θ^{ij} = ∂²_ij a^{ij}(y) + ∂_j a^{ij}(y) h^i + ∂_i a^{ij}(y) h^j + (a^{ij}(y) - a^{ij}(x)) h^{ij}
//! ρ^i    = ∂_i b^i(y) + (b^i(y) - b^i(x)) h^i
//! ```
//!
//! with `h = H_{t a(x)}(y - x - b(x) t)` corrects for the freezing.

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimator::{EstimatorResult, RunConfig, SampleInfo};
use crate::kernels::GaussianKernel;
use crate::model::{euler_step, DiffusionModel, Scratch};
use crate::poisson::{sample_poisson_grid, PoissonGrid};
use crate::quadrature::gauss_legendre;
use crate::scalar::Scalar;

/// One draw of the forward chain.
#[derive(Clone, Debug)]
pub struct ParametrixPath<F> {
    pub grid: PoissonGrid<F>,
    /// `X_{τ_0} = x, …, X_{τ_J}` and, when requested, `X_T`.
    pub states: Vec<Vec<F>>,
    /// `Γ = Π_j θ_{τ_{j+1}-τ_j}(X_{τ_j}, X_{τ_{j+1}})`.
    pub weight: F,
    /// `λ^{-J}`.
    pub lambda_correction: F,
}

impl<F: Scalar> ParametrixPath<F> {
    /// `X_{τ_J}`.
    pub fn last_jump_state(&self) -> &[F] {
        &self.states[self.grid.jump_count()]
    }

    /// `X_T`, present only when the terminal step was sampled.
    pub fn terminal_state(&self) -> Option<&[F]> {
        self.states.get(self.grid.jump_count() + 1).map(|v| v.as_slice())
    }
}

pub(crate) fn theta_with<F: Scalar>(
    model: &DiffusionModel<F>,
    t: F,
    x: &[F],
    y: &[F],
    s: &mut Scratch<F>,
) -> Result<F> {
    let c = model.coefficients();
    let d = model.dim();
    model.derivatives(y, &mut s.grad_a, &mut s.hess_a, &mut s.jac_b)?;
    c.diffusion(x, &mut s.a_x);
    c.drift(x, &mut s.b_x);
    c.diffusion(y, &mut s.a_y);
    c.drift(y, &mut s.b_y);
    let k = GaussianKernel::from_covariance(d, &s.a_x, t)?;
    for i in 0..d {
        s.w[i] = y[i] - x[i] - s.b_x[i] * t;
    }
    k.solve(&s.w, &mut s.solved);
    let u = &s.solved;
    let mut second = F::zero();
    let mut first = F::zero();
    for i in 0..d {
        let hi = -u[i];
        for j in 0..d {
            let hj = -u[j];
            let hij = u[i] * u[j] - k.inverse(i, j);
            let ij = i * d + j;
            second = second
                + s.hess_a[((i * d + j) * d + i) * d + j]
                + s.grad_a[(j * d + i) * d + j] * hi
                + s.grad_a[(i * d + i) * d + j] * hj
                + (s.a_y[ij] - s.a_x[ij]) * hij;
        }
        first = first + s.jac_b[i * d + i] + (s.b_y[i] - s.b_x[i]) * hi;
    }
    Ok(F::of(0.5) * second - first)
}

/// `θ_t(x, y)`. Requires coefficient derivatives (supplied or by finite
/// differences when the model enables the fallback).
pub fn theta_forward<F: Scalar>(model: &DiffusionModel<F>, t: F, x: &[F], y: &[F]) -> Result<F> {
    model.check_point(x)?;
    model.check_point(y)?;
    if !(t > F::zero()) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    theta_with(model, t, x, y, &mut Scratch::for_model(model))
}

/// Evaluates `q_{t a(z)}(y - z - b(z) t)` and optionally `H^i` of the same
/// argument.
pub(crate) fn frozen_terminal<F: Scalar>(
    model: &DiffusionModel<F>,
    t: F,
    z: &[F],
    y: &[F],
    s: &mut Scratch<F>,
    hermite: Option<&mut [F]>,
) -> Result<F> {
    let c = model.coefficients();
    let d = model.dim();
    c.diffusion(z, &mut s.a_x);
    c.drift(z, &mut s.b_x);
    let k = GaussianKernel::from_covariance(d, &s.a_x, t)?;
    for i in 0..d {
        s.w[i] = y[i] - z[i] - s.b_x[i] * t;
    }
    k.solve(&s.w, &mut s.solved);
    if let Some(h) = hermite {
        for (hi, &v) in h.iter_mut().zip(&s.solved) {
            *hi = -v;
        }
    }
    Ok(k.density_with_solved(&s.w, &s.solved))
}

/// Runs the chain over the jump times of `grid`. States are written flat into
/// `states`. With `stop_on_zero` the chain halts as soon as the weight vanishes.
fn run_chain<F: Scalar, R: Rng + ?Sized>(
    model: &DiffusionModel<F>,
    x: &[F],
    grid: &PoissonGrid<F>,
    rng: &mut R,
    s: &mut Scratch<F>,
    states: &mut Vec<F>,
    stop_on_zero: bool,
) -> Result<F> {
    let d = model.dim();
    let c = model.coefficients().as_ref();
    states.clear();
    states.extend_from_slice(x);
    let mut weight = F::one();
    let mut next = vec![F::zero(); d];
    for (j, dt) in grid.jump_increments().enumerate() {
        let cur = &states[j * d..(j + 1) * d];
        euler_step(c, cur, cur, dt, F::one(), rng, s, &mut next);
        let cur = cur.to_vec();
        weight = weight * theta_with(model, dt, &cur, &next, s)?;
        states.extend_from_slice(&next);
        if stop_on_zero && weight == F::zero() {
            break;
        }
    }
    Ok(weight)
}

/// Samples the Poisson grid and the forward Euler chain started at `x`, frozen
/// at the current state on every interval.
pub fn sample_forward_path<F: Scalar, R: Rng + ?Sized>(
    model: &DiffusionModel<F>,
    x: &[F],
    horizon: F,
    lambda: F,
    rng: &mut R,
    include_terminal: bool,
) -> Result<ParametrixPath<F>> {
    model.check_point(x)?;
    model.require_derivatives()?;
    let d = model.dim();
    let grid = sample_poisson_grid(lambda, horizon, rng)?;
    let mut s = Scratch::for_model(model);
    let mut flat = Vec::new();
    let weight = run_chain(model, x, &grid, rng, &mut s, &mut flat, false)?;
    if include_terminal {
        let z = flat[grid.jump_count() * d..].to_vec();
        let mut out = vec![F::zero(); d];
        euler_step(model.coefficients().as_ref(), &z, &z, grid.terminal_gap(), F::one(), rng, &mut s, &mut out);
        flat.extend_from_slice(&out);
    }
    let lambda_correction = F::one() / lambda.powi(grid.jump_count() as i32);
    Ok(ParametrixPath {
        grid,
        states: flat.chunks(d).map(|c| c.to_vec()).collect(),
        weight,
        lambda_correction,
    })
}

/// Per-sample density value `e^{λT} λ^{-J} Γ q_{(T-τ_J) a(X)}(y - X - b(X)(T-τ_J))`
/// of a sampled path, with `X = X_{τ_J}`.
pub fn forward_density_term<F: Scalar>(
    model: &DiffusionModel<F>,
    path: &ParametrixPath<F>,
    y: &[F],
) -> Result<F> {
    model.check_point(y)?;
    let mut s = Scratch::for_model(model);
    let q = frozen_terminal(model, path.grid.terminal_gap(), path.last_jump_state(), y, &mut s, None)?;
    Ok(path.grid.normalization() * path.weight * q)
}

fn check_inputs<F: Scalar>(model: &DiffusionModel<F>, points: &[&[F]], horizon: F) -> Result<()> {
    for p in points {
        model.check_point(p)?;
    }
    if !(horizon > F::zero()) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    model.require_derivatives()?;
    Ok(())
}

fn annotate<F: Scalar>(mut r: EstimatorResult, model: &DiffusionModel<F>) -> EstimatorResult {
    r.note("engine", "forward");
    r.note("derivatives", model.derivative_source());
    r
}

enum Target<'a, F> {
    Density,
    Gradient,
    Expectation(&'a (dyn Fn(&[F]) -> F + Sync)),
}

fn estimate<F: Scalar>(
    model: &DiffusionModel<F>,
    x: &[F],
    y: &[F],
    horizon: F,
    run: &RunConfig,
    target: Target<'_, F>,
) -> Result<EstimatorResult> {
    let d = model.dim();
    let lambda = F::of(run.lambda);
    let out_dim = if matches!(target, Target::Gradient) { d } else { 1 };
    let r = run.run(out_dim, |rng, out| {
        let mut s = Scratch::for_model(model);
        let mut states = Vec::with_capacity(4 * d);
        let mut hermite = vec![F::zero(); d];
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
        let weight = match run_chain(model, x, &grid, rng, &mut s, &mut states, true) {
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
        match &target {
            Target::Density => match frozen_terminal(model, gap, &z, y, &mut s, None) {
                Ok(q) => out[0] = (weight * q).as_f64(),
                Err(_) => out[0] = f64::NAN,
            },
            Target::Gradient => match frozen_terminal(model, gap, &z, y, &mut s, Some(&mut hermite)) {
                Ok(q) => {
                    for i in 0..d {
                        out[i] = (weight * q * hermite[i]).as_f64();
                    }
                }
                Err(_) => out[0] = f64::NAN,
            },
            Target::Expectation(f) => {
                let mut xt = vec![F::zero(); d];
                euler_step(model.coefficients().as_ref(), &z, &z, gap, F::one(), rng, &mut s, &mut xt);
                out[0] = (weight * f(&xt)).as_f64();
            }
        }
        info(weight)
    })?;
    Ok(annotate(r, model))
}

/// Unbiased estimate of `E[f(X_T) | X_0 = x] = e^{λT} E[λ^{-J} f(X_T^π) Γ]`.
///
/// `f` only needs to be bounded and measurable.
pub fn estimate_expectation_forward<F: Scalar>(
    model: &DiffusionModel<F>,
    f: &(dyn Fn(&[F]) -> F + Sync),
    x: &[F],
    horizon: F,
    run: &RunConfig,
) -> Result<EstimatorResult> {
    check_inputs(model, &[x], horizon)?;
    estimate(model, x, x, horizon, run, Target::Expectation(f))
}

/// Unbiased estimate of the transition density `p_T(x, y)`.
pub fn estimate_density_forward<F: Scalar>(
    model: &DiffusionModel<F>,
    x: &[F],
    y: &[F],
    horizon: F,
    run: &RunConfig,
) -> Result<EstimatorResult> {
    check_inputs(model, &[x, y], horizon)?;
    estimate(model, x, y, horizon, run, Target::Density)
}

/// Unbiased estimate of `∇_y p_T(x, y)`.
pub fn estimate_density_gradient_forward<F: Scalar>(
    model: &DiffusionModel<F>,
    x: &[F],
    y: &[F],
    horizon: F,
    run: &RunConfig,
) -> Result<EstimatorResult> {
    check_inputs(model, &[x, y], horizon)?;
    estimate(model, x, y, horizon, run, Target::Gradient)
}

/// Deterministic quadrature of the first two terms of the parametrix series in
/// one dimension: `I⁰ = p^x_T(x, y)` and
///
/// ```text
/// I¹ = ∫_0^T dt ∫ θ_t(x, z) p^x_t(x, z) p^z_{T-t}(z, y) dz.
/// ```
///
/// Time uses 64-point Gauss–Legendre after the substitution `t = T(3u² - 2u³)`,
/// which removes the endpoint singularities; space uses a trapezoid rule on
/// the region where both Gaussian factors are non-negligible, with a spacing
/// resolving the narrower of the two.
pub fn series_term_quadrature<F: Scalar>(
    model: &DiffusionModel<F>,
    x: F,
    y: F,
    horizon: F,
    order: u32,
) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::Capability(format!(
            "series quadrature is one-dimensional, model has dimension {}",
            model.dim()
        )));
    }
    if !(horizon > F::zero()) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let mut s = Scratch::for_model(model);
    match order {
        0 => Ok(frozen_terminal(model, horizon, &[x], &[y], &mut s, None)?.as_f64()),
        1 => first_order_term(model, x.as_f64(), y.as_f64(), horizon.as_f64(), &mut s),
        n => Err(Error::Capability(format!("series term of order {n} is not available"))),
    }
}

fn first_order_term<F: Scalar>(
    model: &DiffusionModel<F>,
    x: f64,
    y: f64,
    horizon: f64,
    s: &mut Scratch<F>,
) -> Result<f64> {
    model.require_derivatives()?;
    let c = model.coefficients();
    let (a_min, a_max) = (model.a_min().as_f64(), model.a_max().as_f64());
    let mut b = [F::zero()];
    c.drift(&[F::of(x)], &mut b);
    let bx = b[0].as_f64();
    let (u, w) = gauss_legendre(64);
    let mut total = 0.0;
    for (&ui, &wi) in u.iter().zip(&w) {
        let v = 0.5 * (ui + 1.0);
        let t = horizon * v * v * (3.0 - 2.0 * v);
        let jac = 0.5 * horizon * 6.0 * v * (1.0 - v);
        let rest = horizon - t;
        if !(t > 0.0) || !(rest > 0.0) {
            continue;
        }
        let (s1, s2) = ((a_max * t).sqrt(), (a_max * rest).sqrt());
        let mut lo = x + bx * t - 10.0 * s1;
        let mut hi = x + bx * t + 10.0 * s1;
        let mut bmax: f64 = 0.0;
        for k in 0..=64 {
            let z = lo + (hi - lo) * k as f64 / 64.0;
            c.drift(&[F::of(z)], &mut b);
            bmax = bmax.max(b[0].as_f64().abs());
        }
        lo = lo.max(y - 10.0 * s2 - bmax * rest);
        hi = hi.min(y + 10.0 * s2 + bmax * rest);
        if !(hi > lo) {
            continue;
        }
        let h = (a_min * t).sqrt().min((a_min * rest).sqrt()) / 8.0;
        let n = (((hi - lo) / h).ceil() as usize).max(16) + 1;
        let step = (hi - lo) / (n - 1) as f64;
        let mut inner = 0.0;
        for k in 0..n {
            let z = [F::of(lo + step * k as f64)];
            let th = theta_with(model, F::of(t), &[F::of(x)], &z, s)?;
            let p1 = frozen_terminal(model, F::of(t), &[F::of(x)], &z, s, None)?;
            let p2 = frozen_terminal(model, F::of(rest), &z, &[F::of(y)], s, None)?;
            let f = (th * p1 * p2).as_f64();
            inner += if k == 0 || k == n - 1 { 0.5 * f } else { f };
        }
        total += wi * jac * inner * step;
    }
    Ok(total)
}
