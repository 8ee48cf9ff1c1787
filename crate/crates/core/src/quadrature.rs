//! Deterministic one-dimensional quadrature rules.

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton iteration on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `∫_a^b f` by an `n`-point Gauss–Legendre rule.
pub fn integrate_gl(f: impl FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let mut f = f;
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(&w).map(|(&xi, &wi)| wi * f(c + h * xi)).sum::<f64>() * h
}

/// Composite trapezoid rule on `n ≥ 2` equispaced points of `[a, b]`.
pub fn trapezoid(f: impl FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2, "at least two points");
    let mut f = f;
    let h = (b - a) / (n - 1) as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for k in 1..n - 1 {
        s += f(a + h * k as f64);
    }
    s * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(64);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        let moment: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(126)).sum();
        assert!((moment - 2.0 / 127.0).abs() < 1e-13);
        let v = integrate_gl(|t| t.sin(), 0.0, std::f64::consts::PI, 20);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_is_spectral_for_gaussians() {
        let v = trapezoid(|y| (-0.5 * y * y).exp(), -12.0, 12.0, 97);
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
    }
}
