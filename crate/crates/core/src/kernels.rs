//! Gaussian kernels with general covariance, their first and second order
//! Hermite polynomials, and the Beta-type time-simplex constants.
//!
//! For a symmetric positive definite covariance `a` on `R^d`,
//!
//! ```text
//! q_a(y)       = (2π)^{-d/2} (det a)^{-1/2} exp(-<a^{-1} y, y> / 2)
//! H_a^i(y)     = -(a^{-1} y)_i
//! H_a^{ij}(y)  = (a^{-1} y)_i (a^{-1} y)_j - (a^{-1})_{ij}
//! ```
//!
//! so that `∂_i q_a = H_a^i q_a` and `∂_ij q_a = H_a^{ij} q_a`.

use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Symmetric positive definite `d × d` matrix, stored row-major.
///
/// Construction checks symmetry and strict positive definiteness (smallest
/// eigenvalue at least `1e-14` times the largest).
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix<F> {
    dim: usize,
    entries: Vec<F>,
}

impl<F: Scalar> SpdMatrix<F> {
    pub fn new(dim: usize, entries: Vec<F>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("matrix dimension must be positive"));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let scale = entries.iter().fold(F::zero(), |m, v| m.max(v.abs()));
        let tol = F::of(1e-12).max(F::of(16.0) * F::epsilon() * scale);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (entries[i * dim + j] - entries[j * dim + i]).abs() > tol {
                    return Err(Error::NotPositiveDefinite(format!(
                        "entry ({i},{j}) differs from ({j},{i})"
                    )));
                }
            }
        }
        let eig = symmetric_eigenvalues(dim, &entries);
        let (lo, hi) = eig
            .iter()
            .fold((F::infinity(), F::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(lo > F::zero()) || lo < F::of(1e-14) * hi {
            return Err(Error::NotPositiveDefinite(format!(
                "eigenvalues in [{lo}, {hi}]"
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, F::one())
    }

    /// `s · I`; panics unless `s > 0`.
    pub fn scaled_identity(dim: usize, s: F) -> Self {
        assert!(s > F::zero(), "scale must be positive");
        let mut entries = vec![F::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = s;
        }
        Self { dim, entries }
    }

    /// 1×1 matrix `[v]`.
    pub fn scalar(v: F) -> Result<Self> {
        Self::new(1, vec![v])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[F] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.entries[i * self.dim + j]
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_bounds(&self) -> (F, F) {
        symmetric_eigenvalues(self.dim, &self.entries)
            .iter()
            .fold((F::infinity(), F::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Cholesky-backed kernel for this covariance.
    pub fn kernel(&self) -> GaussianKernel<F> {
        GaussianKernel::from_covariance(self.dim, &self.entries, F::one())
            .expect("validated SPD matrix must factorize")
    }
}

/// Gaussian kernel `q_a` with a precomputed Cholesky factorization of `a`.
///
/// Engines build one of these per time step for `t · a(z)`, then evaluate the
/// density and both Hermite polynomials from the same factorization.
#[derive(Clone, Debug)]
pub struct GaussianKernel<F> {
    dim: usize,
    chol: Vec<F>,
    inverse: Vec<F>,
    log_norm: F,
}

impl<F: Scalar> GaussianKernel<F> {
    /// Kernel with covariance `scale · a` where `a` is a row-major `dim × dim` matrix.
    ///
    /// Only a Cholesky factorization is attempted; callers that need the full
    /// eigenvalue check go through [`SpdMatrix::new`].
    pub fn from_covariance(dim: usize, a: &[F], scale: F) -> Result<Self> {
        if a.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: a.len(),
            });
        }
        let mut chol = vec![F::zero(); dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut s = scale * a[i * dim + j];
                for k in 0..j {
                    s = s - chol[i * dim + k] * chol[j * dim + k];
                }
                if i == j {
                    if !(s > F::zero()) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite(format!(
                            "non-positive pivot {s} at {i}"
                        )));
                    }
                    chol[i * dim + i] = s.sqrt();
                } else {
                    chol[i * dim + j] = s / chol[j * dim + j];
                }
            }
        }
        let mut log_det = F::zero();
        for i in 0..dim {
            log_det = log_det + chol[i * dim + i].ln();
        }
        log_det = log_det + log_det;
        let mut inverse = vec![F::zero(); dim * dim];
        let mut col = vec![F::zero(); dim];
        for c in 0..dim {
            col.iter_mut().for_each(|v| *v = F::zero());
            col[c] = F::one();
            cholesky_solve(dim, &chol, &mut col);
            for r in 0..dim {
                inverse[r * dim + c] = col[r];
            }
        }
        let half = F::of(0.5);
        let log_norm = -half * F::of(dim as f64) * (F::of(2.0) * F::PI()).ln() - half * log_det;
        Ok(Self {
            dim,
            chol,
            inverse,
            log_norm,
        })
    }

    /// One-dimensional kernel with variance `var`.
    pub fn scalar(var: F) -> Result<Self> {
        Self::from_covariance(1, &[var], F::one())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(a^{-1})_{ij}`.
    #[inline]
    pub fn inverse(&self, i: usize, j: usize) -> F {
        self.inverse[i * self.dim + j]
    }

    /// Lower Cholesky factor `L` with `L L^T = a`, row-major.
    pub fn cholesky(&self) -> &[F] {
        &self.chol
    }

    /// Writes `a^{-1} y` into `out`.
    pub fn solve(&self, y: &[F], out: &mut [F]) {
        out.copy_from_slice(y);
        cholesky_solve(self.dim, &self.chol, out);
    }

    pub fn density(&self, y: &[F]) -> F {
        let mut buf = [F::zero(); 4];
        if self.dim <= 4 {
            let w = &mut buf[..self.dim];
            self.solve(y, w);
            self.density_with_solved(y, w)
        } else {
            let mut w = vec![F::zero(); self.dim];
            self.solve(y, &mut w);
            self.density_with_solved(y, &w)
        }
    }

    /// Density given `a^{-1} y` already computed.
    #[inline]
    pub fn density_with_solved(&self, y: &[F], a_inv_y: &[F]) -> F {
        let quad: F = y.iter().zip(a_inv_y).map(|(&u, &v)| u * v).sum();
        (self.log_norm - F::of(0.5) * quad).exp()
    }

    /// `H^i` given `a^{-1} y`.
    #[inline]
    pub fn hermite1_with_solved(&self, a_inv_y: &[F], i: usize) -> F {
        -a_inv_y[i]
    }

    /// `H^{ij}` given `a^{-1} y`.
    #[inline]
    pub fn hermite2_with_solved(&self, a_inv_y: &[F], i: usize, j: usize) -> F {
        a_inv_y[i] * a_inv_y[j] - self.inverse(i, j)
    }
}

fn cholesky_solve<F: Scalar>(dim: usize, chol: &[F], x: &mut [F]) {
    for i in 0..dim {
        let mut s = x[i];
        for k in 0..i {
            s = s - chol[i * dim + k] * x[k];
        }
        x[i] = s / chol[i * dim + i];
    }
    for i in (0..dim).rev() {
        let mut s = x[i];
        for k in (i + 1)..dim {
            s = s - chol[k * dim + i] * x[k];
        }
        x[i] = s / chol[i * dim + i];
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub(crate) fn symmetric_eigenvalues<F: Scalar>(dim: usize, entries: &[F]) -> Vec<F> {
    let mut m = entries.to_vec();
    let two = F::of(2.0);
    for _sweep in 0..64 {
        let off: F = (0..dim)
            .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * dim + j] * m[i * dim + j])
            .sum();
        let diag: F = (0..dim).map(|i| m[i * dim + i] * m[i * dim + i]).sum();
        if off <= F::epsilon() * F::epsilon() * diag || off == F::zero() {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = m[p * dim + q];
                if apq == F::zero() {
                    continue;
                }
                let app = m[p * dim + p];
                let aqq = m[q * dim + q];
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = m[k * dim + p];
                    let akq = m[k * dim + q];
                    m[k * dim + p] = c * akp - s * akq;
                    m[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = m[p * dim + k];
                    let aqk = m[q * dim + k];
                    m[p * dim + k] = c * apk - s * aqk;
                    m[q * dim + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..dim).map(|i| m[i * dim + i]).collect()
}

fn check_len<F>(a: &SpdMatrix<F>, y: &[F]) -> Result<()> {
    if y.len() != a.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: y.len(),
        });
    }
    Ok(())
}

/// Gaussian density `q_a(y)` with mean zero and covariance `a`.
pub fn gauss_density<F: Scalar>(a: &SpdMatrix<F>, y: &[F]) -> Result<F> {
    check_len(a, y)?;
    Ok(a.kernel().density(y))
}

/// First order Hermite polynomial `H_a^i(y) = -(a^{-1}y)_i`; `i` is zero-based.
pub fn hermite1<F: Scalar>(a: &SpdMatrix<F>, y: &[F], i: usize) -> Result<F> {
    check_len(a, y)?;
    if i >= a.dim {
        return Err(invalid(format!("index {i} out of range for dimension {}", a.dim)));
    }
    let k = a.kernel();
    let mut w = vec![F::zero(); a.dim];
    k.solve(y, &mut w);
    Ok(k.hermite1_with_solved(&w, i))
}

/// Second order Hermite polynomial `H_a^{ij}(y)`; indices are zero-based.
pub fn hermite2<F: Scalar>(a: &SpdMatrix<F>, y: &[F], i: usize, j: usize) -> Result<F> {
    check_len(a, y)?;
    if i >= a.dim || j >= a.dim {
        return Err(invalid(format!(
            "index ({i},{j}) out of range for dimension {}",
            a.dim
        )));
    }
    let k = a.kernel();
    let mut w = vec![F::zero(); a.dim];
    k.solve(y, &mut w);
    Ok(k.hermite2_with_solved(&w, i, j))
}

/// One-dimensional `q_s(y)` for variance `s > 0`.
#[inline]
pub fn gauss_1d<F: Scalar>(var: F, y: F) -> F {
    (-(y * y) / (var + var)).exp() / (F::of(2.0) * F::PI() * var).sqrt()
}

/// Isotropic `q_{s I}(y)` on `R^d`.
pub fn gauss_isotropic<F: Scalar>(var: F, y: &[F]) -> F {
    let d = F::of(y.len() as f64);
    let r2: F = y.iter().map(|&v| v * v).sum();
    (-(r2) / (var + var)).exp() / (F::of(2.0) * F::PI() * var).powf(d / F::of(2.0))
}

/// Closed form of the nested simplex integral
///
/// ```text
/// c_n(t0, a, b) = ∫_0^{t0} dt_1 … ∫_0^{t_{n-1}} dt_n  t_n^b ∏_{j<n} (t_j - t_{j+1})^{-a}
///               = t0^{b + n(1-a)} Γ(1+b) Γ(1-a)^n / Γ(1 + b + n(1-a))
/// ```
///
/// evaluated through log-gamma so that large `n` does not overflow.
pub fn beta_coefficient(t0: f64, a: f64, b: f64, n: u32) -> Result<f64> {
    if !(t0 > 0.0) || !t0.is_finite() {
        return Err(invalid(format!("t0 must be positive, got {t0}")));
    }
    if !(0.0..1.0).contains(&a) {
        return Err(invalid(format!("a must lie in [0, 1), got {a}")));
    }
    if !(b > -1.0) || !b.is_finite() {
        return Err(invalid(format!("b must exceed -1, got {b}")));
    }
    let n = n as f64;
    let expo = b + n * (1.0 - a);
    let ln = expo * t0.ln() + ln_gamma(1.0 + b) + n * ln_gamma(1.0 - a) - ln_gamma(1.0 + expo);
    Ok(ln.exp())
}
