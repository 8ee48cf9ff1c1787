//! Diffusion models `dX = σ(X) dW + b(X) dt` and their frozen-coefficient
//! Gaussian proxies `p_t^z(x, y) = q_{t a(z)}(y - x - b(z) t)`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::kernels::{GaussianKernel, SpdMatrix};
use crate::scalar::Scalar;

/// Coefficient functions of a diffusion on `R^d` driven by an `m`-dimensional
/// Brownian motion.
///
/// Derivative methods return `false` when the model does not provide them.
/// Layouts (all row-major, `d = dim()`):
/// * `sigma`: `d × m`
/// * `diffusion_gradient`: `∂_k a^{ij}` at `(k·d + i)·d + j`
/// * `diffusion_hessian`: `∂²_{kl} a^{ij}` at `((k·d + l)·d + i)·d + j`
/// * `drift_jacobian`: `∂_k b^i` at `i·d + k`
pub trait Coefficients<F: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn noise_dim(&self) -> usize {
        self.dim()
    }

    fn sigma(&self, x: &[F], out: &mut [F]);

    fn drift(&self, x: &[F], out: &mut [F]);

    /// `a = σ σ^T`.
    fn diffusion(&self, x: &[F], out: &mut [F]) {
        let d = self.dim();
        let m = self.noise_dim();
        let mut s = vec![F::zero(); d * m];
        self.sigma(x, &mut s);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum();
            }
        }
    }

    fn diffusion_gradient(&self, _x: &[F], _out: &mut [F]) -> bool {
        false
    }

    fn diffusion_hessian(&self, _x: &[F], _out: &mut [F]) -> bool {
        false
    }

    fn drift_jacobian(&self, _x: &[F], _out: &mut [F]) -> bool {
        false
    }
}

/// Where coefficient derivatives come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeSource {
    Supplied,
    FiniteDifference,
    Unavailable,
}

impl fmt::Display for DerivativeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DerivativeSource::Supplied => "supplied",
            DerivativeSource::FiniteDifference => "finite-difference",
            DerivativeSource::Unavailable => "unavailable",
        })
    }
}

/// Box and count of the deterministic probe points used to verify a model.
#[derive(Clone, Copy, Debug)]
pub struct ProbeConfig {
    pub half_width: f64,
    pub points: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            points: 1000,
            seed: 0x5ee_d0f9_b0be,
        }
    }
}

/// A uniformly elliptic diffusion with declared bounds `a_min I ≤ a(x) ≤ a_max I`.
///
/// The bounds are verified at construction by probing, never inferred.
#[derive(Clone)]
pub struct DiffusionModel<F: Scalar> {
    coeffs: Arc<dyn Coefficients<F>>,
    a_min: F,
    a_max: F,
    holder_alpha: F,
    fd_fallback: bool,
    supplied: bool,
}

impl<F: Scalar> fmt::Debug for DiffusionModel<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("dim", &self.dim())
            .field("a_min", &self.a_min)
            .field("a_max", &self.a_max)
            .field("holder_alpha", &self.holder_alpha)
            .field("derivatives", &self.derivative_source())
            .finish()
    }
}

impl<F: Scalar> DiffusionModel<F> {
    pub fn new(
        coeffs: Arc<dyn Coefficients<F>>,
        a_min: F,
        a_max: F,
        holder_alpha: F,
    ) -> Result<Self> {
        Self::with_probe(coeffs, a_min, a_max, holder_alpha, ProbeConfig::default())
    }

    pub fn with_probe(
        coeffs: Arc<dyn Coefficients<F>>,
        a_min: F,
        a_max: F,
        holder_alpha: F,
        probe: ProbeConfig,
    ) -> Result<Self> {
        if coeffs.dim() == 0 || coeffs.noise_dim() == 0 {
            return Err(invalid("model dimensions must be positive"));
        }
        if !(a_min > F::zero()) || !(a_max >= a_min) || !a_max.is_finite() {
            return Err(invalid(format!(
                "ellipticity bounds must satisfy 0 < a_min <= a_max, got [{a_min}, {a_max}]"
            )));
        }
        if !(holder_alpha > F::zero() && holder_alpha <= F::one()) {
            return Err(invalid(format!("holder_alpha must lie in (0, 1], got {holder_alpha}")));
        }
        let d = coeffs.dim();
        let mut x = vec![F::zero(); d];
        let supplied = coeffs.diffusion_gradient(&x, &mut vec![F::zero(); d * d * d])
            && coeffs.diffusion_hessian(&x, &mut vec![F::zero(); d * d * d * d])
            && coeffs.drift_jacobian(&x, &mut vec![F::zero(); d * d]);
        let model = Self {
            coeffs,
            a_min,
            a_max,
            holder_alpha,
            fd_fallback: false,
            supplied,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
        let mut a = vec![F::zero(); d * d];
        let tol = F::of(1e-9).max(F::of(64.0) * F::epsilon());
        for p in 0..probe.points.max(1) {
            if p > 0 {
                for xi in x.iter_mut() {
                    *xi = F::of(probe.half_width * (2.0 * rng.random::<f64>() - 1.0));
                }
            }
            model.coeffs.diffusion(&x, &mut a);
            let spd = SpdMatrix::new(d, a.clone()).map_err(|e| {
                Error::ModelBounds(format!("a(x) at {:?} is not SPD: {e}", to_f64(&x)))
            })?;
            let (lo, hi) = spd.eigen_bounds();
            if lo < a_min * (F::one() - tol) || hi > a_max * (F::one() + tol) {
                return Err(Error::ModelBounds(format!(
                    "eigenvalues of a(x) at {:?} lie in [{lo}, {hi}], outside declared [{a_min}, {a_max}]",
                    to_f64(&x)
                )));
            }
            if supplied && p < 50 {
                model.check_derivatives(&x)?;
            }
        }
        Ok(model)
    }

    /// Allows finite-difference derivatives when the coefficients supply none.
    /// Results produced this way are flagged in estimator metadata.
    pub fn with_fd_fallback(mut self, enabled: bool) -> Self {
        self.fd_fallback = enabled;
        self
    }

    pub fn coefficients(&self) -> &Arc<dyn Coefficients<F>> {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.coeffs.noise_dim()
    }

    pub fn a_min(&self) -> F {
        self.a_min
    }

    pub fn a_max(&self) -> F {
        self.a_max
    }

    pub fn holder_alpha(&self) -> F {
        self.holder_alpha
    }

    pub fn derivative_source(&self) -> DerivativeSource {
        if self.supplied {
            DerivativeSource::Supplied
        } else if self.fd_fallback {
            DerivativeSource::FiniteDifference
        } else {
            DerivativeSource::Unavailable
        }
    }

    /// Diffusion matrix `a(x)` as a validated SPD matrix.
    pub fn diffusion_matrix(&self, x: &[F]) -> Result<SpdMatrix<F>> {
        self.check_point(x)?;
        let d = self.dim();
        let mut a = vec![F::zero(); d * d];
        self.coeffs.diffusion(x, &mut a);
        SpdMatrix::new(d, a)
    }

    pub fn drift(&self, x: &[F]) -> Result<Vec<F>> {
        self.check_point(x)?;
        let mut b = vec![F::zero(); self.dim()];
        self.coeffs.drift(x, &mut b);
        Ok(b)
    }

    pub(crate) fn check_point(&self, x: &[F]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Fills `∂a`, `∂²a` and `∂b` at `x`, from the coefficients or by central
    /// differences when the fallback is enabled.
    pub fn derivatives(
        &self,
        x: &[F],
        grad_a: &mut [F],
        hess_a: &mut [F],
        jac_b: &mut [F],
    ) -> Result<DerivativeSource> {
        match self.derivative_source() {
            DerivativeSource::Supplied => {
                self.coeffs.diffusion_gradient(x, grad_a);
                self.coeffs.diffusion_hessian(x, hess_a);
                self.coeffs.drift_jacobian(x, jac_b);
                Ok(DerivativeSource::Supplied)
            }
            DerivativeSource::FiniteDifference => {
                fd_derivatives(self.coeffs.as_ref(), x, grad_a, hess_a, jac_b);
                Ok(DerivativeSource::FiniteDifference)
            }
            DerivativeSource::Unavailable => Err(Error::Capability(
                "coefficient derivatives are required and no finite-difference fallback is enabled".into(),
            )),
        }
    }

    pub fn require_derivatives(&self) -> Result<DerivativeSource> {
        match self.derivative_source() {
            DerivativeSource::Unavailable => Err(Error::Capability(
                "coefficient derivatives are required and no finite-difference fallback is enabled".into(),
            )),
            s => Ok(s),
        }
    }

    fn check_derivatives(&self, x: &[F]) -> Result<()> {
        let d = self.dim();
        let (mut g, mut h, mut j) = (vec![F::zero(); d * d * d], vec![F::zero(); d.pow(4)], vec![F::zero(); d * d]);
        let (mut gf, mut hf, mut jf) = (g.clone(), h.clone(), j.clone());
        self.coeffs.diffusion_gradient(x, &mut g);
        self.coeffs.diffusion_hessian(x, &mut h);
        self.coeffs.drift_jacobian(x, &mut j);
        fd_derivatives(self.coeffs.as_ref(), x, &mut gf, &mut hf, &mut jf);
        let close = |a: &[F], b: &[F], rel: f64| {
            let scale = b.iter().fold(1.0f64, |m, v| m.max(v.as_f64().abs()));
            a.iter()
                .zip(b)
                .all(|(u, v)| (u.as_f64() - v.as_f64()).abs() <= rel * scale)
        };
        // f32 finite differences cannot resolve to 1e-4
        let rel = if F::epsilon().as_f64() > 1e-10 { 5e-2 } else { 1e-4 };
        let rel_h = if F::epsilon().as_f64() > 1e-10 { 0.5 } else { 1e-3 };
        if !close(&g, &gf, rel) || !close(&j, &jf, rel) || !close(&h, &hf, rel_h) {
            return Err(Error::ModelBounds(format!(
                "supplied derivatives disagree with finite differences at {:?}",
                to_f64(x)
            )));
        }
        Ok(())
    }
}

fn to_f64<F: Scalar>(x: &[F]) -> Vec<f64> {
    x.iter().map(|v| v.as_f64()).collect()
}

/// Central differences of `a` and `b`; step `ε^{1/3}(1+|x|)` for first order,
/// `ε^{1/4}(1+|x|)` for second order, with `ε` the machine epsilon of `F`.
pub(crate) fn fd_derivatives<F: Scalar>(
    c: &dyn Coefficients<F>,
    x: &[F],
    grad_a: &mut [F],
    hess_a: &mut [F],
    jac_b: &mut [F],
) {
    let d = c.dim();
    let dd = d * d;
    let norm = x.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
    let eps = F::epsilon().as_f64();
    let h1 = F::of(eps.cbrt() * (1.0 + norm));
    let h2 = F::of(eps.powf(0.25) * (1.0 + norm));
    let mut xp = x.to_vec();
    let (mut ap, mut am, mut a0) = (vec![F::zero(); dd], vec![F::zero(); dd], vec![F::zero(); dd]);
    let (mut bp, mut bm) = (vec![F::zero(); d], vec![F::zero(); d]);
    c.diffusion(x, &mut a0);
    for k in 0..d {
        xp[k] = x[k] + h1;
        c.diffusion(&xp, &mut ap);
        c.drift(&xp, &mut bp);
        xp[k] = x[k] - h1;
        c.diffusion(&xp, &mut am);
        c.drift(&xp, &mut bm);
        xp[k] = x[k];
        for ij in 0..dd {
            grad_a[k * dd + ij] = (ap[ij] - am[ij]) / (h1 + h1);
        }
        for i in 0..d {
            jac_b[i * d + k] = (bp[i] - bm[i]) / (h1 + h1);
        }
    }
    let (mut app, mut apm, mut amp, mut amm) =
        (vec![F::zero(); dd], vec![F::zero(); dd], vec![F::zero(); dd], vec![F::zero(); dd]);
    for k in 0..d {
        for l in 0..d {
            let base = (k * d + l) * dd;
            if k == l {
                xp[k] = x[k] + h2;
                c.diffusion(&xp, &mut ap);
                xp[k] = x[k] - h2;
                c.diffusion(&xp, &mut am);
                xp[k] = x[k];
                for ij in 0..dd {
                    hess_a[base + ij] = (ap[ij] - a0[ij] - a0[ij] + am[ij]) / (h2 * h2);
                }
            } else {
                xp[k] = x[k] + h2;
                xp[l] = x[l] + h2;
                c.diffusion(&xp, &mut app);
                xp[l] = x[l] - h2;
                c.diffusion(&xp, &mut apm);
                xp[k] = x[k] - h2;
                c.diffusion(&xp, &mut amm);
                xp[l] = x[l] + h2;
                c.diffusion(&xp, &mut amp);
                xp[k] = x[k];
                xp[l] = x[l];
                let four = F::of(4.0);
                for ij in 0..dd {
                    hess_a[base + ij] = (app[ij] - apm[ij] - amp[ij] + amm[ij]) / (four * h2 * h2);
                }
            }
        }
    }
}

/// The Gaussian transition of the process with coefficients frozen at `z`:
/// covariance `t·a(z)` and mean shift `b(z)·t`.
#[derive(Clone, Debug)]
pub struct FrozenKernel<F: Scalar> {
    pub freeze_point: Vec<F>,
    pub time: F,
    pub covariance: SpdMatrix<F>,
    pub mean_shift: Vec<F>,
    kernel: GaussianKernel<F>,
    sigma: Vec<F>,
    noise_dim: usize,
}

impl<F: Scalar> FrozenKernel<F> {
    pub fn new(model: &DiffusionModel<F>, z: &[F], t: F) -> Result<Self> {
        if !(t > F::zero()) || !t.is_finite() {
            return Err(invalid(format!("time must be positive, got {t}")));
        }
        let a = model.diffusion_matrix(z)?;
        let d = model.dim();
        let cov: Vec<F> = a.entries().iter().map(|&v| v * t).collect();
        let covariance = SpdMatrix::new(d, cov)?;
        let kernel = covariance.kernel();
        let mean_shift = model.drift(z)?.into_iter().map(|v| v * t).collect();
        let m = model.noise_dim();
        let mut sigma = vec![F::zero(); d * m];
        model.coefficients().sigma(z, &mut sigma);
        Ok(Self {
            freeze_point: z.to_vec(),
            time: t,
            covariance,
            mean_shift,
            kernel,
            sigma,
            noise_dim: m,
        })
    }

    /// `q_{t a(z)}(y - x - b(z) t)`.
    pub fn density(&self, x: &[F], y: &[F]) -> F {
        let w: Vec<F> = y
            .iter()
            .zip(x)
            .zip(&self.mean_shift)
            .map(|((&yi, &xi), &m)| yi - xi - m)
            .collect();
        self.kernel.density(&w)
    }

    /// `x + σ(z) √t ξ + b(z) t`.
    pub fn sample<R: Rng + ?Sized>(&self, from_x: &[F], rng: &mut R) -> Vec<F> {
        let d = from_x.len();
        let m = self.noise_dim;
        let sq = self.time.sqrt();
        let xi: Vec<F> = (0..m).map(|_| F::sample_standard_normal(rng)).collect();
        (0..d)
            .map(|i| {
                let noise: F = (0..m).map(|k| self.sigma[i * m + k] * xi[k]).sum();
                from_x[i] + sq * noise + self.mean_shift[i]
            })
            .collect()
    }
}

/// `p_t^z(x, y) = q_{t a(z)}(y - x - b(z) t)`.
pub fn frozen_density<F: Scalar>(
    model: &DiffusionModel<F>,
    z: &[F],
    t: F,
    x: &[F],
    y: &[F],
) -> Result<F> {
    model.check_point(x)?;
    model.check_point(y)?;
    Ok(FrozenKernel::new(model, z, t)?.density(x, y))
}

/// One Euler step of the frozen process: `from_x + σ(z)√dt ξ + b(z) dt`.
pub fn sample_frozen_step<F: Scalar, R: Rng + ?Sized>(
    model: &DiffusionModel<F>,
    z: &[F],
    from_x: &[F],
    dt: F,
    rng: &mut R,
) -> Result<Vec<F>> {
    model.check_point(from_x)?;
    Ok(FrozenKernel::new(model, z, dt)?.sample(from_x, rng))
}

/// Reusable buffers for the per-step coefficient evaluations in the engines.
#[derive(Clone, Debug)]
pub(crate) struct Scratch<F> {
    pub sigma: Vec<F>,
    pub noise: Vec<F>,
    pub a_x: Vec<F>,
    pub a_y: Vec<F>,
    pub b_x: Vec<F>,
    pub b_y: Vec<F>,
    pub grad_a: Vec<F>,
    pub hess_a: Vec<F>,
    pub jac_b: Vec<F>,
    pub w: Vec<F>,
    pub solved: Vec<F>,
}

impl<F: Scalar> Scratch<F> {
    pub fn new(d: usize, m: usize) -> Self {
        Self {
            sigma: vec![F::zero(); d * m],
            noise: vec![F::zero(); m],
            a_x: vec![F::zero(); d * d],
            a_y: vec![F::zero(); d * d],
            b_x: vec![F::zero(); d],
            b_y: vec![F::zero(); d],
            grad_a: vec![F::zero(); d * d * d],
            hess_a: vec![F::zero(); d * d * d * d],
            jac_b: vec![F::zero(); d * d],
            w: vec![F::zero(); d],
            solved: vec![F::zero(); d],
        }
    }

    pub fn for_model(model: &DiffusionModel<F>) -> Self {
        Self::new(model.dim(), model.noise_dim())
    }
}

/// In-place Euler step `out = from + σ(z)√dt ξ + drift_sign·b(z) dt`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn euler_step<F: Scalar, R: Rng + ?Sized>(
    c: &dyn Coefficients<F>,
    z: &[F],
    from: &[F],
    dt: F,
    drift_sign: F,
    rng: &mut R,
    s: &mut Scratch<F>,
    out: &mut [F],
) {
    let d = c.dim();
    let m = c.noise_dim();
    c.sigma(z, &mut s.sigma);
    c.drift(z, &mut s.b_x);
    for k in 0..m {
        s.noise[k] = F::sample_standard_normal(rng);
    }
    let sq = dt.sqrt();
    for i in 0..d {
        let mut acc = F::zero();
        for k in 0..m {
            acc = acc + s.sigma[i * m + k] * s.noise[k];
        }
        out[i] = from[i] + sq * acc + drift_sign * s.b_x[i] * dt;
    }
}
