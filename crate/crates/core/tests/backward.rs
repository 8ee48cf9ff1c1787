use std::sync::Arc;

use parametrix::backward::{
    backward_density_term, estimate_density_backward, estimate_density_x_gradient_backward,
    estimate_semigroup_on_density, sample_backward_path, theta_hat, GaussianDensity, UniformDensity,
};
use parametrix::catalog::ModelSpec;
use parametrix::forward::estimate_density_forward;
use parametrix::kernels::gauss_1d;
use parametrix::model::{Coefficients, DiffusionModel};
use parametrix::oracles::{euler_kde_density, exact_density, exact_ou_density, KdeOptions};
use parametrix::quadrature::trapezoid;
use parametrix::{sample_rng, EstimatorResult, Model, RunConfig, SampleInfo};

const OU: ModelSpec = ModelSpec::OrnsteinUhlenbeck { dim: 1, kappa: 0.5, mean: 0.0, sigma: 1.0 };
const UNIT: ModelSpec = ModelSpec::Constant { dim: 1, sigma: 1.0, drift: 0.0 };
const HOLDER: ModelSpec = ModelSpec::HolderVolatility { a0: 1.0, a1: 0.25, alpha: 0.5, drift: 0.2 };

fn within(r: &EstimatorResult, target: f64) -> bool {
    (r.value() - target).abs() <= 3.0 * r.error().max(1e-14)
}

/// `σ(x) = 1 + 0.2 sin x` and a drift that jumps at the origin; no derivatives.
struct Kinked;

impl Coefficients<f64> for Kinked {
    fn dim(&self) -> usize {
        1
    }

    fn sigma(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0 + 0.2 * x[0].sin();
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = if x[0] > 0.0 { -0.4 } else { 0.3 };
    }
}

/// Both sides of `∫ f θ̂_t(·, z) φ_t^z = ∫ f (L^x - L^z) applied to the kernel`,
/// with the generator derivatives of `φ_t^z(x) = q_{t a(z)}(z - x - b(z) t)`
/// taken analytically.
fn backward_identity(model: &Model, f: &dyn Fn(f64) -> f64, z: f64, t: f64) -> (f64, f64) {
    let a = |v: f64| model.diffusion_matrix(&[v]).unwrap().get(0, 0);
    let b = |v: f64| model.drift(&[v]).unwrap()[0];
    let v = t * a(z);
    let phi = |x: f64| gauss_1d(v, z - x - b(z) * t);
    let c = z - b(z) * t;
    let w = 14.0 * (2.0 * t).sqrt();
    let lhs = trapezoid(|x| f(x) * theta_hat(model, t, &[x], &[z]).unwrap() * phi(x), c - w, c + w, 6001);
    let rhs = trapezoid(
        |x| {
            let u = z - x - b(z) * t;
            let d1 = u / v * phi(x);
            let d2 = (u * u / (v * v) - 1.0 / v) * phi(x);
            f(x) * (0.5 * (a(x) - a(z)) * d2 + (b(x) - b(z)) * d1)
        },
        c - w,
        c + w,
        6001,
    );
    (lhs, rhs)
}

#[test]
fn theta_hat_values() {
    let flat: Model = ModelSpec::Constant { dim: 1, sigma: 0.6, drift: -0.3 }.build().unwrap();
    assert_eq!(theta_hat(&flat, 0.7, &[2.0], &[-1.0]).unwrap(), 0.0);
    let holder: Model = ModelSpec::HolderVolatility { a0: 1.0, a1: 0.5, alpha: 0.5, drift: 0.0 }.build().unwrap();
    assert!(theta_hat(&holder, 1.0, &[1.0], &[0.0]).unwrap().abs() < 1e-15);
    assert!(theta_hat(&holder, 1.0, &[0.3], &[0.0]).unwrap().abs() > 1e-3);
}

#[test]
fn integration_by_parts() {
    let model: Model = ModelSpec::SinusoidalVolatility { s0: 1.0, s1: 0.3, omega: 1.3, drift: 0.3 }.build().unwrap();
    let (lhs, rhs) = backward_identity(&model, &|x: f64| (-x * x).exp(), -0.2, 0.3);
    assert!((lhs - rhs).abs() <= 1e-5 * rhs.abs(), "{lhs} vs {rhs}");
    let holder: Model = HOLDER.build().unwrap();
    for (k, &(amp, m, s)) in [(1.0, 0.3, 0.5), (1.7, -0.8, 1.2), (0.6, 0.0, 0.8), (1.2, 0.9, 0.4), (0.9, -0.4, 1.5)]
        .iter()
        .enumerate()
    {
        let f = move |x: f64| amp * (-(x - m).powi(2) / (2.0 * s * s)).exp();
        let (lhs, rhs) = backward_identity(&holder, &f, 0.4, 0.5);
        assert!((lhs - rhs).abs() <= 1e-5 * rhs.abs().max(1e-3), "function {k}: {lhs} vs {rhs}");
    }
}

#[test]
fn path_structure() {
    let flat: Model = ModelSpec::Constant { dim: 1, sigma: 1.0, drift: 0.5 }.build().unwrap();
    for i in 0..2000 {
        let p = sample_backward_path(&flat, &[0.3], 1.0, 1.0, &mut sample_rng(2, i)).unwrap();
        assert_eq!(p.states.len(), p.grid.jump_count() + 1);
        assert_eq!(p.states[0], vec![0.3]);
        let expect = if p.grid.jump_count() == 0 { 1.0 } else { 0.0 };
        assert_eq!(p.weight, expect);
    }
}

#[test]
fn densities_match_closed_forms() {
    let unit: Model = UNIT.build().unwrap();
    let r = estimate_density_backward(&unit, &[0.0], &[0.5], 1.0, &RunConfig::new(20_000, 1)).unwrap();
    assert!(within(&r, 0.352065), "{} ± {}", r.value(), r.error());

    let ou: Model = OU.build().unwrap();
    let r = estimate_density_backward(&ou, &[0.0], &[0.0], 1.0, &RunConfig::new(200_000, 2)).unwrap();
    assert!(within(&r, exact_ou_density(0.5, 1.0, &[0.0], &[0.0], 1.0)), "{} ± {}", r.value(), r.error());

    let bench = parametrix::oracles::benchmark("constant-drift-1d").unwrap();
    let model: Model = bench.model.build().unwrap();
    for (k, (x, y, t)) in bench.points.iter().enumerate() {
        let r = estimate_density_backward(&model, x, y, *t, &RunConfig::new(20_000, 10 + k as u64)).unwrap();
        let exact = exact_density(&bench.model, x, y, *t).unwrap();
        assert!(within(&r, exact), "{y:?}: {} ± {} vs {exact}", r.value(), r.error());
    }
}

#[test]
fn gradients() {
    let unit: Model = UNIT.build().unwrap();
    let r = estimate_density_x_gradient_backward(&unit, &[0.0], &[0.0], 1.0, &RunConfig::new(20_000, 3)).unwrap();
    assert!(within(&r, 0.0));
    let r = estimate_density_x_gradient_backward(&unit, &[0.5], &[0.0], 1.0, &RunConfig::new(20_000, 4)).unwrap();
    let h: f64 = 1e-6;
    let analytic = (gauss_1d(1.0, -0.5 - h) - gauss_1d(1.0, -0.5 + h)) / (2.0 * h);
    assert!((analytic + 0.176033).abs() < 1e-6);
    assert!(within(&r, analytic), "{} ± {}", r.value(), r.error());
}

#[test]
fn holder_gradient_matches_finite_differences() {
    let model: Model = HOLDER.build().unwrap();
    let (x, y, t, h) = (0.3, -0.2, 0.8, 1e-3);
    let grad = estimate_density_x_gradient_backward(&model, &[x], &[y], t, &RunConfig::new(100_000, 5)).unwrap();
    let fd = RunConfig::new(100_000, 5)
        .run(1, |rng, out| {
            let p = sample_backward_path(&model, &[y], t, 1.0, rng).unwrap();
            let u = backward_density_term(&model, &p, &[x + h]).unwrap();
            let d = backward_density_term(&model, &p, &[x - h]).unwrap();
            out[0] = (u - d) / (2.0 * h);
            SampleInfo::weight(p.weight)
        })
        .unwrap();
    let se = (grad.error().powi(2) + fd.error().powi(2)).sqrt();
    assert!((grad.value() - fd.value()).abs() <= 3.0 * se, "{} vs {} (se {se})", grad.value(), fd.value());
}

#[test]
fn semigroup_on_densities() {
    let unit: Model = UNIT.build().unwrap();
    let normal = GaussianDensity { mean: vec![0.0], var: 1.0 };
    let r = estimate_semigroup_on_density(&unit, &normal, &[0.0], 1.0, &RunConfig::new(50_000, 6)).unwrap();
    assert!(within(&r, 1.0 / (4.0 * std::f64::consts::PI).sqrt()), "{} ± {}", r.value(), r.error());
    assert!((1.0 / (4.0 * std::f64::consts::PI).sqrt() - 0.282095).abs() < 1e-6);

    let ou: Model = OU.build().unwrap();
    let quad = trapezoid(|y| gauss_1d(1.0, y) * exact_ou_density(0.5, 1.0, &[0.4], &[y], 1.0), -12.0, 12.0, 4001);
    let r = estimate_semigroup_on_density(&ou, &normal, &[0.4], 1.0, &RunConfig::new(100_000, 7)).unwrap();
    assert!(within(&r, quad), "{} ± {} vs {quad}", r.value(), r.error());

    let box1 = UniformDensity { dim: 1, lo: -1.0, hi: 1.0 };
    let quad = trapezoid(|y| 0.5 * gauss_1d(1.0, y - 0.3), -1.0, 1.0, 4001);
    let r = estimate_semigroup_on_density(&unit, &box1, &[0.3], 1.0, &RunConfig::new(50_000, 8)).unwrap();
    assert!(within(&r, quad), "{} ± {} vs {quad}", r.value(), r.error());

    let plane = UniformDensity { dim: 2, lo: -1.0, hi: 1.0 };
    assert!(estimate_semigroup_on_density(&unit, &plane, &[0.3], 1.0, &RunConfig::new(10, 8)).is_err());
}

#[test]
fn runs_without_derivatives_and_with_discontinuous_drift() {
    let model = DiffusionModel::new(Arc::new(Kinked), 0.64, 1.44, 1.0).unwrap();
    let (x, y, t) = (0.4, -0.3, 0.7);
    let r = estimate_density_backward(&model, &[x], &[y], t, &RunConfig::new(100_000, 9)).unwrap();
    let kde = euler_kde_density(
        &model,
        x,
        y,
        t,
        &KdeOptions { n_paths: 200_000, n_steps: 200, bandwidth: None, seed: 10, workers: 1 },
    )
    .unwrap();
    let se = (r.error().powi(2) + kde.std_error.powi(2)).sqrt();
    assert!(
        (r.value() - kde.value).abs() <= 3.0 * se + kde.bias_budget(),
        "{} ± {} vs {} (bias {})",
        r.value(),
        r.error(),
        kde.value,
        kde.bias_budget()
    );
}

/// The chain weight must use `θ̂(new, old)`; the reversed order leaves the
/// constant-drift benchmark with state-dependent volatility far off.
#[test]
fn theta_hat_argument_order() {
    let model: Model = ModelSpec::SinusoidalVolatility { s0: 1.0, s1: 0.3, omega: 1.0, drift: 0.5 }.build().unwrap();
    let (x, y, t) = (0.0, 1.0, 0.5);
    let run = RunConfig::new(100_000, 3);
    let reference = estimate_density_forward(&model, &[x], &[y], t, &run).unwrap();
    let right = estimate_density_backward(&model, &[x], &[y], t, &RunConfig::new(100_000, 4)).unwrap();
    let swapped = run
        .run(1, |rng, out| {
            let mut p = sample_backward_path(&model, &[y], t, 1.0, rng).unwrap();
            p.weight = (0..p.grid.jump_count())
                .map(|j| theta_hat(&model, p.grid.times[j + 1] - p.grid.times[j], &p.states[j], &p.states[j + 1]).unwrap())
                .product();
            out[0] = backward_density_term(&model, &p, &[x]).unwrap();
            SampleInfo::weight(p.weight)
        })
        .unwrap();
    let z = |r: &EstimatorResult| {
        (r.value() - reference.value()).abs() / (r.error().powi(2) + reference.error().powi(2)).sqrt()
    };
    assert!(z(&right) <= 3.0, "correct order z {}", z(&right));
    assert!(z(&swapped) > 5.0, "swapped order z {}", z(&swapped));
}

#[test]
fn forward_and_backward_agree() {
    let spec = ModelSpec::SinusoidalVolatility { s0: 1.0, s1: 0.3, omega: 1.0, drift: 0.3 };
    let model: Model = spec.build().unwrap();
    let mut rng = sample_rng(99, 0);
    for k in 0..3u64 {
        use rand::Rng;
        let x: f64 = rng.random_range(-1.0..1.0);
        let y: f64 = x + rng.random_range(-1.0..1.0);
        let t: f64 = rng.random_range(0.3..1.0);
        let f = estimate_density_forward(&model, &[x], &[y], t, &RunConfig::new(100_000, 70 + k)).unwrap();
        let b = estimate_density_backward(&model, &[x], &[y], t, &RunConfig::new(100_000, 80 + k)).unwrap();
        let se = (f.error().powi(2) + b.error().powi(2)).sqrt();
        assert!((f.value() - b.value()).abs() <= 3.0 * se, "({x}, {y}, {t}): {} vs {}", f.value(), b.value());
    }
}
