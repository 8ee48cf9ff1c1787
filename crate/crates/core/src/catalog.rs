//! Built-in diffusion models addressable by name from configuration files.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::model::{Coefficients, DiffusionModel};
use crate::scalar::Scalar;

/// `σ = s·I`, `b = c·1` on `R^d`.
#[derive(Clone, Debug)]
pub struct ConstantCoefficients<F> {
    dim: usize,
    sigma: F,
    drift: F,
}

impl<F: Scalar> ConstantCoefficients<F> {
    pub fn new(dim: usize, sigma: f64, drift: f64) -> Self {
        Self {
            dim,
            sigma: F::of(sigma),
            drift: F::of(drift),
        }
    }

    pub fn into_model(self) -> Result<DiffusionModel<F>> {
        let a = self.sigma * self.sigma;
        DiffusionModel::new(Arc::new(self), a, a, F::one())
    }
}

impl<F: Scalar> Coefficients<F> for ConstantCoefficients<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sigma(&self, _x: &[F], out: &mut [F]) {
        out.iter_mut().for_each(|v| *v = F::zero());
        for i in 0..self.dim {
            out[i * self.dim + i] = self.sigma;
        }
    }

    fn drift(&self, _x: &[F], out: &mut [F]) {
        out.iter_mut().for_each(|v| *v = self.drift);
    }

    fn diffusion_gradient(&self, _x: &[F], out: &mut [F]) -> bool {
        out.iter_mut().for_each(|v| *v = F::zero());
        true
    }

    fn diffusion_hessian(&self, _x: &[F], out: &mut [F]) -> bool {
        out.iter_mut().for_each(|v| *v = F::zero());
        true
    }

    fn drift_jacobian(&self, _x: &[F], out: &mut [F]) -> bool {
        out.iter_mut().for_each(|v| *v = F::zero());
        true
    }
}

/// Ornstein–Uhlenbeck: `b(x) = -κ (x - μ)`, `σ = s·I`.
#[derive(Clone, Debug)]
pub struct OrnsteinUhlenbeck<F> {
    dim: usize,
    kappa: F,
    mean: F,
    sigma: F,
}

impl<F: Scalar> OrnsteinUhlenbeck<F> {
    pub fn new(dim: usize, kappa: f64, mean: f64, sigma: f64) -> Self {
        Self {
            dim,
            kappa: F::of(kappa),
            mean: F::of(mean),
            sigma: F::of(sigma),
        }
    }

    pub fn into_model(self) -> Result<DiffusionModel<F>> {
        let a = self.sigma * self.sigma;
        DiffusionModel::new(Arc::new(self), a, a, F::one())
    }
}

impl<F: Scalar> Coefficients<F> for OrnsteinUhlenbeck<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sigma(&self, _x: &[F], out: &mut [F]) {
        out.iter_mut().for_each(|v| *v = F::zero());
        for i in 0..self.dim {
            out[i * self.dim + i] = self.sigma;
        }
    }

    fn drift(&self, x: &[F], out: &mut [F]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = -self.kappa * (xi - self.mean);
        }
    }

    fn diffusion_gradient(&self, _x: &[F], out: &mut [F]) -> bool {
        out.iter_mut().for_each(|v| *v = F::zero());
        true
    }

    fn diffusion_hessian(&self, _x: &[F], out: &mut [F]) -> bool {
        out.iter_mut().for_each(|v| *v = F::zero());
        true
    }

    fn drift_jacobian(&self, _x: &[F], out: &mut [F]) -> bool {
        out.iter_mut().for_each(|v| *v = F::zero());
        for i in 0..self.dim {
            out[i * self.dim + i] = -self.kappa;
        }
        true
    }
}

/// One-dimensional smooth local volatility: `σ(x) = s0 + s1 sin(ω x)`,
/// `b(x) = c cos(x)`.
#[derive(Clone, Debug)]
pub struct SinusoidalVolatility<F> {
    s0: F,
    s1: F,
    omega: F,
    drift: F,
}

impl<F: Scalar> SinusoidalVolatility<F> {
    pub fn new(s0: f64, s1: f64, omega: f64, drift: f64) -> Self {
        Self {
            s0: F::of(s0),
            s1: F::of(s1),
            omega: F::of(omega),
            drift: F::of(drift),
        }
    }

    pub fn into_model(self) -> Result<DiffusionModel<F>> {
        if !(self.s0 > self.s1.abs()) {
            return Err(invalid("sin-vol requires s0 > |s1|"));
        }
        let lo = self.s0 - self.s1.abs();
        let hi = self.s0 + self.s1.abs();
        DiffusionModel::new(Arc::new(self), lo * lo, hi * hi, F::one())
    }

    fn parts(&self, x: F) -> (F, F, F) {
        let (s, c) = (self.omega * x).sin_cos();
        let sig = self.s0 + self.s1 * s;
        let d1 = self.s1 * self.omega * c;
        let d2 = -self.s1 * self.omega * self.omega * s;
        (sig, d1, d2)
    }
}

impl<F: Scalar> Coefficients<F> for SinusoidalVolatility<F> {
    fn dim(&self) -> usize {
        1
    }

    fn sigma(&self, x: &[F], out: &mut [F]) {
        out[0] = self.parts(x[0]).0;
    }

    fn drift(&self, x: &[F], out: &mut [F]) {
        out[0] = self.drift * x[0].cos();
    }

    fn diffusion_gradient(&self, x: &[F], out: &mut [F]) -> bool {
        let (s, d1, _) = self.parts(x[0]);
        out[0] = F::of(2.0) * s * d1;
        true
    }

    fn diffusion_hessian(&self, x: &[F], out: &mut [F]) -> bool {
        let (s, d1, d2) = self.parts(x[0]);
        out[0] = F::of(2.0) * (d1 * d1 + s * d2);
        true
    }

    fn drift_jacobian(&self, x: &[F], out: &mut [F]) -> bool {
        out[0] = -self.drift * x[0].sin();
        true
    }
}

/// One-dimensional Hölder model: `a(x) = a0 + a1 |sin x|^α`, `b(x) = c·sgn(x)`.
///
/// No derivatives are supplied; the coefficient is only `α`-Hölder at the zeros
/// of `sin` and the drift is discontinuous at the origin.
#[derive(Clone, Debug)]
pub struct HolderVolatility<F> {
    a0: F,
    a1: F,
    alpha: F,
    drift: F,
}

impl<F: Scalar> HolderVolatility<F> {
    pub fn new(a0: f64, a1: f64, alpha: f64, drift: f64) -> Self {
        Self {
            a0: F::of(a0),
            a1: F::of(a1),
            alpha: F::of(alpha),
            drift: F::of(drift),
        }
    }

    pub fn into_model(self) -> Result<DiffusionModel<F>> {
        if !(self.a0 > F::zero()) || self.a1 < F::zero() {
            return Err(invalid("holder-vol requires a0 > 0 and a1 >= 0"));
        }
        let (lo, hi, alpha) = (self.a0, self.a0 + self.a1, self.alpha);
        DiffusionModel::new(Arc::new(self), lo, hi, alpha)
    }

    fn a(&self, x: F) -> F {
        self.a0 + self.a1 * x.sin().abs().powf(self.alpha)
    }
}

impl<F: Scalar> Coefficients<F> for HolderVolatility<F> {
    fn dim(&self) -> usize {
        1
    }

    fn sigma(&self, x: &[F], out: &mut [F]) {
        out[0] = self.a(x[0]).sqrt();
    }

    fn drift(&self, x: &[F], out: &mut [F]) {
        out[0] = if x[0] > F::zero() {
            self.drift
        } else if x[0] < F::zero() {
            -self.drift
        } else {
            F::zero()
        };
    }

    fn diffusion(&self, x: &[F], out: &mut [F]) {
        out[0] = self.a(x[0]);
    }
}

/// Catalog entry: a model key plus its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Constant { dim: usize, sigma: f64, drift: f64 },
    OrnsteinUhlenbeck { dim: usize, kappa: f64, mean: f64, sigma: f64 },
    SinusoidalVolatility { s0: f64, s1: f64, omega: f64, drift: f64 },
    HolderVolatility { a0: f64, a1: f64, alpha: f64, drift: f64 },
}

impl ModelSpec {
    pub const KEYS: [&'static str; 4] = ["constant", "ou", "sin-vol", "holder-vol"];

    pub fn key(&self) -> &'static str {
        match self {
            ModelSpec::Constant { .. } => "constant",
            ModelSpec::OrnsteinUhlenbeck { .. } => "ou",
            ModelSpec::SinusoidalVolatility { .. } => "sin-vol",
            ModelSpec::HolderVolatility { .. } => "holder-vol",
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ModelSpec::Constant { dim, .. } | ModelSpec::OrnsteinUhlenbeck { dim, .. } => dim,
            _ => 1,
        }
    }

    /// Whether the model carries C² coefficients with supplied derivatives.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, ModelSpec::HolderVolatility { .. })
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            ModelSpec::Constant { .. } => true,
            ModelSpec::SinusoidalVolatility { s1, drift, .. } => s1 == 0.0 && drift == 0.0,
            ModelSpec::HolderVolatility { a1, drift, .. } => a1 == 0.0 && drift == 0.0,
            ModelSpec::OrnsteinUhlenbeck { kappa, .. } => kappa == 0.0,
        }
    }

    pub fn build<F: Scalar>(&self) -> Result<DiffusionModel<F>> {
        match *self {
            ModelSpec::Constant { dim, sigma, drift } => {
                ConstantCoefficients::new(dim, sigma, drift).into_model()
            }
            ModelSpec::OrnsteinUhlenbeck {
                dim,
                kappa,
                mean,
                sigma,
            } => OrnsteinUhlenbeck::new(dim, kappa, mean, sigma).into_model(),
            ModelSpec::SinusoidalVolatility {
                s0,
                s1,
                omega,
                drift,
            } => SinusoidalVolatility::new(s0, s1, omega, drift).into_model(),
            ModelSpec::HolderVolatility {
                a0,
                a1,
                alpha,
                drift,
            } => HolderVolatility::new(a0, a1, alpha, drift).into_model(),
        }
    }
}
