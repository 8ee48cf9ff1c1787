//! Backward parametrix for the one-dimensional pure-jump equation
//! `dX = σ(X_-) dZ`, where `Z` is a Gaussian variance mixture driven by the
//! subordinator `V_t = ∫∫ c N(dx, dc, ds)`.
//!
//! Conditionally on `V` the frozen process is Gaussian, so the frozen kernel is
//! `p_t^z(x, y) = E[q_{σ²(z) V_t}(x - y)]`. The per-jump weight of the chain is
//! randomized over `U ~ Unif[σ_min², σ_max²]` and `Z ~ ν̄(dc) = c ν(dc) / C_ν`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Error, Result};
use crate::estimator::{EstimatorResult, RunConfig, SampleInfo};
use crate::kernels::gauss_1d;
use crate::poisson::{sample_poisson_grid, PoissonGrid};
use crate::scalar::Scalar;

/// Mixing measure `ν` of the jump variances.
#[derive(Clone, Debug, PartialEq)]
pub enum MixtureKind {
    /// `ν = Σ_k δ_{k^{-ρ}}`, atoms beyond `truncation` replaced by their mean.
    Discrete { rho: f64, truncation: usize },
    /// `ν(dc) = 1_{(0,1]}(c) c^{-1-β} dc`, jumps below `epsilon` replaced by their mean.
    Power { beta: f64, epsilon: f64 },
}

/// A mixing measure with the precomputed quantities needed for simulation.
#[derive(Clone, Debug)]
pub struct LevyMixture {
    kind: MixtureKind,
    c_nu: f64,
    compensation: f64,
    residual_variance: f64,
    atoms: Arc<[f64]>,
    /// Cumulative `Σ_{j≤k} c_j` for the atoms kept explicitly.
    cumulative: Arc<[f64]>,
}

/// `Σ_{k≥n} k^{-s}` by Euler–Maclaurin, for `n ≥ 1` and `s > 1`.
fn zeta_tail(s: f64, n: usize) -> f64 {
    let m = n.max(64);
    let head: f64 = (n..m).map(|k| (k as f64).powf(-s)).sum();
    let x = m as f64;
    head + x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s) + s * x.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * x.powf(-s - 3.0) / 720.0
}

/// Riemann zeta function for real `s > 1`.
pub fn zeta(s: f64) -> f64 {
    zeta_tail(s, 1)
}

impl LevyMixture {
    pub fn discrete(rho: f64, truncation: usize) -> Result<Self> {
        if !(rho > 1.0) || !rho.is_finite() {
            return Err(invalid(format!("discrete mixture needs rho > 1, got {rho}")));
        }
        if truncation == 0 {
            return Err(invalid("discrete mixture needs a positive truncation"));
        }
        let atoms: Vec<f64> = (1..=truncation).map(|k| (k as f64).powf(-rho)).collect();
        let mut acc = 0.0;
        let cumulative: Vec<f64> = atoms
            .iter()
            .map(|c| {
                acc += c;
                acc
            })
            .collect();
        Ok(Self {
            kind: MixtureKind::Discrete { rho, truncation },
            c_nu: zeta(rho),
            compensation: zeta_tail(rho, truncation + 1),
            residual_variance: zeta_tail(2.0 * rho, truncation + 1),
            atoms: atoms.into(),
            cumulative: cumulative.into(),
        })
    }

    pub fn power(beta: f64, epsilon: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid(format!("power mixture needs beta in (0, 1), got {beta}")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("power mixture needs epsilon in (0, 1), got {epsilon}")));
        }
        Ok(Self {
            kind: MixtureKind::Power { beta, epsilon },
            c_nu: 1.0 / (1.0 - beta),
            compensation: epsilon.powf(1.0 - beta) / (1.0 - beta),
            residual_variance: epsilon.powf(2.0 - beta) / (2.0 - beta),
            atoms: Arc::from(Vec::new()),
            cumulative: Arc::from(Vec::new()),
        })
    }

    pub fn kind(&self) -> &MixtureKind {
        &self.kind
    }

    /// `C_ν = ∫ c ν(dc)`.
    pub fn c_nu(&self) -> f64 {
        self.c_nu
    }

    /// Tail exponent `h` of `η_ν(u) = ν(u, ∞)`.
    pub fn h_exponent(&self) -> f64 {
        match self.kind {
            MixtureKind::Discrete { rho, .. } => 1.0 / rho,
            MixtureKind::Power { beta, .. } => beta,
        }
    }

    /// Mean per unit time of the jumps replaced by their compensator.
    pub fn compensation_rate(&self) -> f64 {
        self.compensation
    }

    /// Variance per unit time removed by the truncation.
    pub fn residual_variance_rate(&self) -> f64 {
        self.residual_variance
    }

    /// A draw of `V_dt`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        let mut v = dt * self.compensation;
        match self.kind {
            MixtureKind::Discrete { truncation, .. } => {
                let n = poisson(truncation as f64 * dt, rng);
                for _ in 0..n {
                    v += self.atoms[rng.random_range(0..truncation)];
                }
            }
            MixtureKind::Power { beta, epsilon } => {
                let top = epsilon.powf(-beta);
                let n = poisson(dt * (top - 1.0) / beta, rng);
                for _ in 0..n {
                    let u: f64 = rng.random();
                    v += (1.0 + u * (top - 1.0)).powf(-1.0 / beta);
                }
            }
        }
        v
    }

    /// A draw from the size-biased law `ν̄(dc) = c ν(dc) / C_ν`, over the full
    /// (untruncated) measure.
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            MixtureKind::Discrete { rho, truncation } => {
                let head = self.cumulative[truncation - 1];
                let u = rng.random::<f64>() * self.c_nu;
                if u < head {
                    let k = self.cumulative.partition_point(|&c| c <= u);
                    return self.atoms[k.min(truncation - 1)];
                }
                // k > K: floor of a Pareto draw on [K+1, ∞), thinned to k^{-ρ}.
                let k0 = (truncation + 1) as f64;
                let bound = (1.0 + 1.0 / k0).powf(rho);
                loop {
                    let x = k0 * rng.random::<f64>().powf(-1.0 / (rho - 1.0));
                    let k = x.floor();
                    if !k.is_finite() {
                        continue;
                    }
                    let cell = (k.powf(1.0 - rho) - (k + 1.0).powf(1.0 - rho)) / (rho - 1.0);
                    let ratio = k.powf(-rho) / (bound * cell);
                    if rng.random::<f64>() < ratio {
                        return k.powf(-rho);
                    }
                }
            }
            MixtureKind::Power { beta, .. } => rng.random::<f64>().powf(1.0 / (1.0 - beta)),
        }
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

/// Jump coefficient `σ` of the Lévy-driven equation.
pub type Volatility<F> = Arc<dyn Fn(F) -> F + Send + Sync>;

/// `dX = σ(X_-) dZ` with `σ_min ≤ σ ≤ σ_max`, `σ` α-Hölder.
#[derive(Clone)]
pub struct LevyModel<F: Scalar> {
    sigma: Volatility<F>,
    sigma_min: F,
    sigma_max: F,
    holder_alpha: F,
    mixture: LevyMixture,
}

impl<F: Scalar> fmt::Debug for LevyModel<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyModel")
            .field("sigma_min", &self.sigma_min)
            .field("sigma_max", &self.sigma_max)
            .field("holder_alpha", &self.holder_alpha)
            .field("mixture", &self.mixture.kind)
            .finish()
    }
}

impl<F: Scalar> LevyModel<F> {
    /// Validates the bounds of `σ` on a probe grid of `[-10, 10]` and the
    /// tail condition `h > 1 - α/2`.
    pub fn new(
        sigma: Volatility<F>,
        sigma_min: F,
        sigma_max: F,
        holder_alpha: F,
        mixture: LevyMixture,
    ) -> Result<Self> {
        if !(sigma_min > F::zero()) || !(sigma_max >= sigma_min) || !sigma_max.is_finite() {
            return Err(invalid(format!(
                "volatility bounds must satisfy 0 < sigma_min <= sigma_max, got [{sigma_min}, {sigma_max}]"
            )));
        }
        if !(holder_alpha > F::zero() && holder_alpha <= F::one()) {
            return Err(invalid(format!("holder_alpha must lie in (0, 1], got {holder_alpha}")));
        }
        let h = mixture.h_exponent();
        let need = 1.0 - 0.5 * holder_alpha.as_f64();
        if !(h > need) {
            return Err(Error::Configuration(format!(
                "tail exponent h = {h} must exceed 1 - alpha/2 = {need}"
            )));
        }
        let tol = F::of(1e-9).max(F::of(64.0) * F::epsilon());
        for p in 0..=1000 {
            let x = F::of(-10.0 + 0.02 * p as f64);
            let s = sigma(x);
            if !(s >= sigma_min * (F::one() - tol) && s <= sigma_max * (F::one() + tol)) {
                return Err(Error::ModelBounds(format!(
                    "sigma({x}) = {s} outside declared [{sigma_min}, {sigma_max}]"
                )));
            }
        }
        Ok(Self {
            sigma,
            sigma_min,
            sigma_max,
            holder_alpha,
            mixture,
        })
    }

    /// `σ(x) = s0 + s1 |sin x|^α`.
    pub fn holder(s0: f64, s1: f64, alpha: f64, mixture: LevyMixture) -> Result<Self> {
        if !(s0 > 0.0) || s1 < 0.0 {
            return Err(invalid("holder volatility needs s0 > 0 and s1 >= 0"));
        }
        let (a, b, al) = (F::of(s0), F::of(s1), F::of(alpha));
        let sigma: Volatility<F> = Arc::new(move |x: F| a + b * x.sin().abs().powf(al));
        Self::new(sigma, F::of(s0), F::of(s0 + s1), F::of(alpha), mixture)
    }

    /// `σ ≡ s`.
    pub fn constant(s: f64, mixture: LevyMixture) -> Result<Self> {
        let v = F::of(s);
        Self::new(Arc::new(move |_| v), v, v, F::one(), mixture)
    }

    pub fn sigma(&self, x: F) -> F {
        (self.sigma)(x)
    }

    pub fn sigma_min(&self) -> F {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> F {
        self.sigma_max
    }

    pub fn holder_alpha(&self) -> F {
        self.holder_alpha
    }

    pub fn mixture(&self) -> &LevyMixture {
        &self.mixture
    }

    /// `(C_ν / 2)(σ_max² - σ_min²)`.
    fn jump_scale(&self) -> F {
        let (lo, hi) = (self.sigma_min * self.sigma_min, self.sigma_max * self.sigma_max);
        F::of(0.5 * self.mixture.c_nu) * (hi - lo)
    }
}

/// Inner Monte Carlo average of `q_{σ²(z) V_t}(x - y)` over `inner_m` draws of `V_t`.
pub fn frozen_density_levy<F: Scalar, R: Rng + ?Sized>(
    model: &LevyModel<F>,
    z: F,
    t: F,
    x: F,
    y: F,
    inner_m: usize,
    rng: &mut R,
) -> Result<F> {
    check_time(t)?;
    if inner_m == 0 {
        return Err(invalid("inner_m must be at least 1"));
    }
    Ok(frozen_kernel(model, z, t, x, y, inner_m, rng, false))
}

fn check_time<F: Scalar>(t: F) -> Result<()> {
    if !(t > F::zero()) || !t.is_finite() {
        return Err(invalid(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// Density (or its `x` derivative) of the frozen kernel, averaged over `m`
/// independent `V_t`.
#[allow(clippy::too_many_arguments)]
fn frozen_kernel<F: Scalar, R: Rng + ?Sized>(
    model: &LevyModel<F>,
    z: F,
    t: F,
    x: F,
    y: F,
    m: usize,
    rng: &mut R,
    gradient: bool,
) -> F {
    let s2 = model.sigma(z).powi(2);
    let w = x - y;
    let mut acc = F::zero();
    for _ in 0..m {
        let var = s2 * F::of(model.mixture.sample_increment(t.as_f64(), rng));
        let q = gauss_1d(var, w);
        acc = acc + if gradient { -w / var * q } else { q };
    }
    acc / F::of(m as f64)
}

/// One randomized draw of the jump weight times its transition density at a
/// fixed state pair: `(C_ν/2)(σ_max² - σ_min²) sgn_σ(x, y) 1{U between σ²(x), σ²(y)}
/// h^{1,1}_s(x - y) q_s(x - y)` with `s = U Z + σ²(y) V_t`.
///
/// Its expectation is `θ̂_t(x, y) φ_t^y(x)`.
pub fn sample_jump_kernel<F: Scalar, R: Rng + ?Sized>(
    model: &LevyModel<F>,
    x: F,
    y: F,
    t: F,
    rng: &mut R,
) -> Result<F> {
    check_time(t)?;
    let (u, z, dv) = draw_jump_inputs(model, t, rng);
    let s = u * z + model.sigma(y).powi(2) * dv;
    let w = x - y;
    Ok(jump_factor(model, x, y, u, s, w) * gauss_1d(s, w))
}

fn draw_jump_inputs<F: Scalar, R: Rng + ?Sized>(model: &LevyModel<F>, t: F, rng: &mut R) -> (F, F, F) {
    let (lo, hi) = (model.sigma_min.powi(2), model.sigma_max.powi(2));
    let u = lo + (hi - lo) * F::sample_unit(rng);
    let z = F::of(model.mixture.sample_size_biased(rng));
    let dv = F::of(model.mixture.sample_increment(t.as_f64(), rng));
    (u, z, dv)
}

/// Weight factor for the move `y → x` (new state first).
fn jump_factor<F: Scalar>(model: &LevyModel<F>, x: F, y: F, u: F, s: F, w: F) -> F {
    let (sx, sy) = (model.sigma(x).powi(2), model.sigma(y).powi(2));
    if !(u >= sx.min(sy) && u <= sx.max(sy)) {
        return F::zero();
    }
    let sign = if sx > sy { F::one() } else { -F::one() };
    model.jump_scale() * sign * (w * w / (s * s) - F::one() / s)
}

/// One draw of the Lévy backward chain.
#[derive(Clone, Debug)]
pub struct LevyPath<F> {
    pub grid: PoissonGrid<F>,
    /// `Y*_{τ_0} = y, …, Y*_{τ_J}`.
    pub states: Vec<F>,
    /// Randomized weight `Γ^π`.
    pub weight: F,
}

fn run_chain<F: Scalar, R: Rng + ?Sized>(
    model: &LevyModel<F>,
    y: F,
    grid: &PoissonGrid<F>,
    rng: &mut R,
    states: &mut Vec<F>,
    stop_on_zero: bool,
) -> F {
    states.clear();
    states.push(y);
    let mut cur = y;
    let mut weight = F::one();
    for dt in grid.jump_increments() {
        let (u, z, dv) = draw_jump_inputs(model, dt, rng);
        let s = u * z + model.sigma(cur).powi(2) * dv;
        let w = s.sqrt() * F::sample_standard_normal(rng);
        let next = cur + w;
        weight = weight * jump_factor(model, next, cur, u, s, w);
        states.push(next);
        cur = next;
        if stop_on_zero && weight == F::zero() {
            break;
        }
    }
    weight
}

/// Samples the Poisson grid and the chain
/// `Y' = Y + ξ (U Z + σ²(Y) ΔV)^{1/2}` started at `y`, with its weight.
pub fn sample_levy_backward_chain<F: Scalar, R: Rng + ?Sized>(
    model: &LevyModel<F>,
    y: F,
    horizon: F,
    lambda: F,
    rng: &mut R,
) -> Result<LevyPath<F>> {
    let grid = sample_poisson_grid(lambda, horizon, rng)?;
    let mut states = Vec::new();
    let weight = run_chain(model, y, &grid, rng, &mut states, false);
    Ok(LevyPath {
        grid,
        states,
        weight,
    })
}

fn estimate<F: Scalar>(
    model: &LevyModel<F>,
    x: F,
    y: F,
    horizon: F,
    inner_m: usize,
    run: &RunConfig,
    gradient: bool,
) -> Result<EstimatorResult> {
    check_time(horizon)?;
    if inner_m == 0 {
        return Err(invalid("inner_m must be at least 1"));
    }
    let lambda = F::of(run.lambda);
    let mut r = run.run(1, |rng, out| {
        let mut states = Vec::with_capacity(4);
        let grid = match sample_poisson_grid(lambda, horizon, rng) {
            Ok(g) => g,
            Err(_) => {
                out[0] = f64::NAN;
                return SampleInfo::weight(f64::NAN);
            }
        };
        let raw = run_chain(model, y, &grid, rng, &mut states, true);
        let weight = if raw == F::zero() { raw } else { grid.normalization() * raw };
        let info = SampleInfo {
            weight: weight.as_f64(),
            resampled: grid.resampled,
        };
        if weight == F::zero() {
            return info;
        }
        let z = states[grid.jump_count()];
        let k = frozen_kernel(model, z, grid.terminal_gap(), x, z, inner_m, rng, gradient);
        out[0] = (weight * k).as_f64();
        info
    })?;
    r.note("engine", "levy");
    r.note("inner_m", inner_m);
    r.note("residual_variance_rate", model.mixture.residual_variance_rate());
    Ok(r)
}

/// Estimate of `p_T(x, y)`; the terminal kernel is averaged over `inner_m`
/// draws of the subordinator.
pub fn estimate_density_levy<F: Scalar>(
    model: &LevyModel<F>,
    x: F,
    y: F,
    horizon: F,
    inner_m: usize,
    run: &RunConfig,
) -> Result<EstimatorResult> {
    estimate(model, x, y, horizon, inner_m, run, false)
}

/// Estimate of `∂_x p_T(x, y)`.
pub fn estimate_density_x_gradient_levy<F: Scalar>(
    model: &LevyModel<F>,
    x: F,
    y: F,
    horizon: F,
    inner_m: usize,
    run: &RunConfig,
) -> Result<EstimatorResult> {
    estimate(model, x, y, horizon, inner_m, run, true)
}
