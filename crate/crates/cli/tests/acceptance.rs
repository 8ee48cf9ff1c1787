//! Acceptance suite: one PASS/FAIL line per criterion.

use std::time::Instant;

use parametrix::backward::{
    backward_density_term, estimate_density_backward, estimate_density_x_gradient_backward, sample_backward_path,
    theta_hat,
};
use parametrix::catalog::ModelSpec;
use parametrix::forward::{
    estimate_density_forward, estimate_density_gradient_forward, forward_density_term, sample_forward_path,
    series_term_quadrature, theta_forward,
};
use parametrix::kernels::gauss_1d;
use parametrix::levy::{
    estimate_density_levy, frozen_density_levy, sample_jump_kernel, sample_levy_backward_chain, LevyMixture,
    LevyModel,
};
use parametrix::model::frozen_density;
use parametrix::oracles::{
    benchmark, euler_kde_density, exact_gaussian_density, levy_theta_phi, KdeOptions,
};
use parametrix::quadrature::{gauss_legendre, trapezoid};
use parametrix::{
    beta_coefficient, gauss_density, hermite1, hermite2, sample_rng, EstimatorResult, Matrix, Model, RunConfig,
    SampleInfo,
};
use parametrix_cli::{run, Config, Overrides};
use rand::Rng;

const Z: f64 = 3.0;
const COVERAGE: f64 = 0.95;
const COLLAPSE_N: u64 = 100_000;
const COLLAPSE_SECONDS: f64 = 10.0;
const OU_N: u64 = 1_000_000;
const OU_SECONDS: f64 = 300.0;
const IBP_REL: f64 = 1e-4;
const BETA_REL: f64 = 1e-4;
const HERMITE_REL: f64 = 1e-5;
const LEVY_MASS_TOL: f64 = 0.02;

type Outcome = (bool, String);

fn combined(a: &EstimatorResult, b: &EstimatorResult) -> (f64, f64) {
    let diff = (a.value() - b.value()).abs();
    (diff, diff / a.error().hypot(b.error()))
}

fn collapse() -> Outcome {
    let (sigma, drift, x, y, t) = (1.3, 0.4, 0.2, 0.9, 1.0);
    let model: Model = ModelSpec::Constant { dim: 1, sigma, drift }.build().unwrap();
    let mut nonzero = 0;
    let mut with_jumps = 0;
    for i in 0..COLLAPSE_N {
        let mut rng = sample_rng(99, i);
        let p = sample_forward_path(&model, &[x], t, 1.0, &mut rng, false).unwrap();
        if p.grid.jump_count() >= 1 {
            with_jumps += 1;
            if p.weight != 0.0 {
                nonzero += 1;
            }
        }
    }
    let start = Instant::now();
    let r = estimate_density_forward(&model, &[x], &[y], t, &RunConfig::new(COLLAPSE_N, 5)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let exact = exact_gaussian_density(sigma, &[drift], &[x], &[y], t);
    let z = r.z_score(exact);
    (
        nonzero == 0 && z <= Z && secs < COLLAPSE_SECONDS,
        format!(
            "{nonzero}/{with_jumps} jump paths with nonzero weight; estimate {:.6} vs exact {exact:.6} (z {z:.2}); {secs:.2}s",
            r.value()
        ),
    )
}

fn ou_benchmark() -> Outcome {
    let b = benchmark("ou-1d").unwrap();
    let model: Model = b.model.build().unwrap();
    let exact = b.exact_values.as_ref().unwrap();
    let run = RunConfig::new(OU_N, 11).workers(0);
    let start = Instant::now();
    let (mut inside, mut total) = (0, 0);
    let mut worst: f64 = 0.0;
    for ((x, y, t), &e) in b.points.iter().zip(exact) {
        for forward in [true, false] {
            let r = if forward {
                estimate_density_forward(&model, x, y, *t, &run)
            } else {
                estimate_density_backward(&model, x, y, *t, &run)
            }
            .unwrap();
            let z = r.z_score(e);
            worst = worst.max(z);
            total += 1;
            if z <= Z {
                inside += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = inside as f64 / total as f64;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    (
        frac >= COVERAGE && secs < OU_SECONDS,
        format!("{inside}/{total} within 3 std errors (max z {worst:.2}); {secs:.1}s on {cores} core(s)"),
    )
}

fn cross_agreement() -> Outcome {
    let specs = [
        ModelSpec::Constant { dim: 1, sigma: 0.9, drift: 0.3 },
        ModelSpec::Constant { dim: 2, sigma: 0.8, drift: -0.2 },
        ModelSpec::OrnsteinUhlenbeck { dim: 1, kappa: 0.7, mean: 0.2, sigma: 1.1 },
        ModelSpec::SinusoidalVolatility { s0: 1.0, s1: 0.3, omega: 1.0, drift: 0.3 },
    ];
    let mut pick = sample_rng(2024, 0);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    let mut count = 0;
    for (m, spec) in specs.iter().enumerate() {
        assert!(spec.is_smooth());
        let model: Model = spec.build().unwrap();
        for k in 0..5 {
            let d = spec.dim();
            let x: Vec<f64> = (0..d).map(|_| pick.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| v + pick.random_range(-1.2..1.2)).collect();
            let t = pick.random_range(0.3..1.0);
            let run = RunConfig::new(200_000, 100 + (m * 10 + k) as u64);
            let f = estimate_density_forward(&model, &x, &y, t, &run).unwrap();
            let b = estimate_density_backward(&model, &x, &y, t, &run).unwrap();
            let (_, z) = combined(&f, &b);
            worst = worst.max(z);
            count += 1;
            if z > Z {
                bad += 1;
            }
        }
    }
    (bad == 0, format!("{}/{count} pairs agree; max combined z {worst:.2}", count - bad))
}

fn holder_vs_kde() -> Outcome {
    let b = benchmark("holder-vol").unwrap();
    let model: Model = b.model.build().unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, (x, y, t)) in b.points.iter().enumerate() {
        let r = estimate_density_backward(&model, x, y, *t, &RunConfig::new(400_000, 300 + i as u64)).unwrap();
        let opts = KdeOptions { n_paths: 400_000, n_steps: 200, bandwidth: None, seed: 900 + i as u64, workers: 0 };
        let k = euler_kde_density(&model, x[0], y[0], *t, &opts).unwrap();
        let allowed = Z * r.error().hypot(k.std_error) + k.bias_budget();
        let diff = (r.value() - k.value).abs();
        ok &= diff <= allowed;
        lines.push(format!("{:.4}/{:.4}", diff, allowed));
    }
    (ok, format!("|backward - kde| / allowance at 5 points: {}", lines.join(" ")))
}

fn gradients() -> Outcome {
    let h = 1e-4;
    let mut ok = true;
    let mut notes = Vec::new();
    let cases = [
        (ModelSpec::SinusoidalVolatility { s0: 1.0, s1: 0.3, omega: 1.0, drift: 0.3 }, 0.1, 0.6, 0.7),
        (ModelSpec::OrnsteinUhlenbeck { dim: 1, kappa: 0.5, mean: 0.0, sigma: 1.0 }, -0.4, 0.3, 1.0),
    ];
    for (c, (spec, x, y, t)) in cases.iter().enumerate() {
        let model: Model = spec.build().unwrap();
        let n = 300_000;
        let grad = estimate_density_gradient_forward(&model, &[*x], &[*y], *t, &RunConfig::new(n, 40 + c as u64)).unwrap();
        let fd = RunConfig::new(n, 50 + c as u64)
            .run(1, |rng, out| {
                let p = sample_forward_path(&model, &[*x], *t, 1.0, rng, false).unwrap();
                let up = forward_density_term(&model, &p, &[y + h]).unwrap();
                let dn = forward_density_term(&model, &p, &[y - h]).unwrap();
                out[0] = (up - dn) / (2.0 * h);
                SampleInfo::weight(p.weight)
            })
            .unwrap();
        let (_, zf) = combined(&grad, &fd);
        let gradb =
            estimate_density_x_gradient_backward(&model, &[*x], &[*y], *t, &RunConfig::new(n, 60 + c as u64)).unwrap();
        let fdb = RunConfig::new(n, 70 + c as u64)
            .run(1, |rng, out| {
                let p = sample_backward_path(&model, &[*y], *t, 1.0, rng).unwrap();
                let up = backward_density_term(&model, &p, &[x + h]).unwrap();
                let dn = backward_density_term(&model, &p, &[x - h]).unwrap();
                out[0] = (up - dn) / (2.0 * h);
                SampleInfo::weight(p.weight)
            })
            .unwrap();
        let (_, zb) = combined(&gradb, &fdb);
        ok &= zf <= Z && zb <= Z;
        notes.push(format!(
            "{}: d/dy {:.4} vs fd {:.4} (z {zf:.2}), d/dx {:.4} vs fd {:.4} (z {zb:.2})",
            spec.key(),
            grad.value(),
            fd.value(),
            gradb.value(),
            fdb.value()
        ));
    }
    (ok, notes.join("; "))
}

type TestFn = (fn(f64) -> f64, fn(f64) -> f64, fn(f64) -> f64);

fn test_functions() -> [TestFn; 5] {
    [
        (|y| (-y * y).exp(), |y| -2.0 * y * (-y * y).exp(), |y| (4.0 * y * y - 2.0) * (-y * y).exp()),
        (|y| y.cos(), |y| -y.sin(), |y| -y.cos()),
        (|y| y.sin() * (-0.5 * y * y).exp(), |y| (y.cos() - y * y.sin()) * (-0.5 * y * y).exp(), |y| {
            ((y * y - 2.0) * y.sin() - 2.0 * y * y.cos()) * (-0.5 * y * y).exp()
        }),
        (|y| 1.0 / (1.0 + y * y), |y| -2.0 * y / (1.0 + y * y).powi(2), |y| {
            (6.0 * y * y - 2.0) / (1.0 + y * y).powi(3)
        }),
        (|y| (y - 0.5).tanh(), |y| 1.0 / (y - 0.5).cosh().powi(2), |y| {
            -2.0 * (y - 0.5).tanh() / (y - 0.5).cosh().powi(2)
        }),
    ]
}

fn ibp() -> Outcome {
    let model: Model = ModelSpec::SinusoidalVolatility { s0: 1.0, s1: 0.3, omega: 1.3, drift: 0.3 }.build().unwrap();
    let a = |v: f64| model.diffusion_matrix(&[v]).unwrap().get(0, 0);
    let b = |v: f64| model.drift(&[v]).unwrap()[0];
    let (t, x0, z0) = (0.3, 0.4, -0.2);
    let mut worst: f64 = 0.0;
    for (f, df, d2f) in test_functions() {
        let c = x0 + b(x0) * t;
        let w = 14.0 * (1.3f64.powi(2) * t).sqrt();
        let lhs = trapezoid(
            |y| f(y) * theta_forward(&model, t, &[x0], &[y]).unwrap() * frozen_density(&model, &[x0], t, &[x0], &[y]).unwrap(),
            c - w,
            c + w,
            6001,
        );
        let rhs = trapezoid(
            |y| {
                let gen = 0.5 * (a(y) - a(x0)) * d2f(y) + (b(y) - b(x0)) * df(y);
                gen * frozen_density(&model, &[x0], t, &[x0], &[y]).unwrap()
            },
            c - w,
            c + w,
            6001,
        );
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1e-12));

        let v = t * a(z0);
        let c = z0 - b(z0) * t;
        let phi = |x: f64| gauss_1d(v, z0 - x - b(z0) * t);
        let lhs = trapezoid(|x| f(x) * theta_hat(&model, t, &[x], &[z0]).unwrap() * phi(x), c - w, c + w, 6001);
        let rhs = trapezoid(
            |x| {
                let u = z0 - x - b(z0) * t;
                let d1 = u / v * phi(x);
                let d2 = (u * u / (v * v) - 1.0 / v) * phi(x);
                f(x) * (0.5 * (a(x) - a(z0)) * d2 + (b(x) - b(z0)) * d1)
            },
            c - w,
            c + w,
            6001,
        );
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1e-12));
    }
    (worst < IBP_REL, format!("max relative error {worst:.2e} over 5 functions, forward and backward"))
}

fn series_cross_check() -> Outcome {
    let model: Model = ModelSpec::OrnsteinUhlenbeck { dim: 1, kappa: 0.5, mean: 0.0, sigma: 1.0 }.build().unwrap();
    let (x, y, t) = (0.3, -0.2, 0.25);
    let i1 = series_term_quadrature(&model, x, y, t, 1).unwrap();
    let r = RunConfig::new(1_000_000, 17)
        .workers(0)
        .run(1, |rng, out| {
            let p = sample_forward_path(&model, &[x], t, 1.0, rng, false).unwrap();
            if p.grid.jump_count() == 1 {
                out[0] = forward_density_term(&model, &p, &[y]).unwrap();
            }
            SampleInfo::weight(p.weight)
        })
        .unwrap();
    let z = r.z_score(i1);
    (z <= Z, format!("one-jump estimate {:.6} ± {:.1e} vs quadrature {i1:.6} (z {z:.2})", r.value(), r.error()))
}

fn lambda_invariance() -> Outcome {
    let model: Model = ModelSpec::SinusoidalVolatility { s0: 1.0, s1: 0.3, omega: 1.0, drift: 0.3 }.build().unwrap();
    let (x, y, t) = ([0.0], [0.4], 1.0);
    let mut worst: f64 = 0.0;
    for forward in [true, false] {
        let rs: Vec<EstimatorResult> = [0.5, 1.0, 2.0]
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                let run = RunConfig::new(400_000, 200 + k as u64).lambda(l);
                if forward {
                    estimate_density_forward(&model, &x, &y, t, &run)
                } else {
                    estimate_density_backward(&model, &x, &y, t, &run)
                }
                .unwrap()
            })
            .collect();
        for i in 0..3 {
            for j in i + 1..3 {
                worst = worst.max(combined(&rs[i], &rs[j]).1);
            }
        }
    }
    (worst <= Z, format!("max pairwise combined z {worst:.2} over lambda in {{0.5, 1, 2}}"))
}

/// `c_n(t0, a, b)` by nested Gauss–Legendre after a smoothing change of
/// variables that tames both endpoint singularities.
fn nested_beta(t0: f64, a: f64, b: f64, n: u32, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    if n == 0 {
        return t0.powf(b);
    }
    let (nodes, weights) = rule;
    let mut acc = 0.0;
    for (&u, &w) in nodes.iter().zip(weights) {
        let v = 0.5 * (u + 1.0);
        let s = v.powi(4) * (35.0 - 84.0 * v + 70.0 * v * v - 20.0 * v.powi(3));
        let ds = 140.0 * v.powi(3) * (1.0 - v).powi(3);
        let t1 = t0 * s;
        if ds == 0.0 || t1 <= 0.0 || t1 >= t0 {
            continue;
        }
        acc += 0.5 * w * t0 * ds * (t0 - t1).powf(-a) * nested_beta(t1, a, b, n - 1, rule);
    }
    acc
}

fn appendix() -> Outcome {
    let rule = gauss_legendre(96);
    let mut beta_worst: f64 = 0.0;
    for &(t0, a, b) in &[(1.0, 0.5, 0.0), (2.0, 0.25, 0.5), (0.7, 0.4, -0.3), (1.5, 0.1, 1.0)] {
        for n in 1..=3 {
            let exact = beta_coefficient(t0, a, b, n).unwrap();
            let quad = nested_beta(t0, a, b, n, &rule);
            beta_worst = beta_worst.max((quad - exact).abs() / exact);
        }
    }

    let mut rng = sample_rng(77, 0);
    let (mut g4_bad, mut g4_literal_bad, mut a3_bad, mut a3_literal_bad) = (0, 0, 0, 0);
    for _ in 0..100 {
        let lo: f64 = rng.random_range(0.3..1.0);
        let hi: f64 = lo * rng.random_range(1.0..3.0);
        let av: f64 = rng.random_range(lo..=hi);
        let alpha: f64 = rng.random_range(0.0..=1.0);
        let t: f64 = rng.random_range(0.05..2.0);
        let y: f64 = rng.random_range(-6.0..6.0) * (t * hi).sqrt();
        let rho = hi / lo;
        let s = t * av;
        let q = gauss_1d(s, y);
        let d2 = ((y * y / (s * s)) - 1.0 / s).abs() * q;
        let d1 = (y / s).abs() * q;
        let c = (2.0 * rho).sqrt() / lo * (4.0 * hi).powf(alpha / 2.0) * (4.0 * rho + 1.0);
        let c1 = 1.0 / lo * (4.0 * hi).powf((1.0 + alpha) / 2.0) * (2.0 * rho).sqrt();
        let lhs2 = y.abs().powf(alpha) * d2;
        let lhs1 = y.abs().powf(alpha) * d1;
        let bound2 = c / t.powf(1.0 - alpha / 2.0);
        let bound1 = c1 / t.powf((1.0 - alpha) / 2.0);
        if lhs2 > bound2 * gauss_1d(2.0 * t * hi, y) || lhs1 > bound1 * gauss_1d(2.0 * t * hi, y) {
            g4_bad += 1;
        }
        if lhs2 > bound2 * gauss_1d(0.5 * t * hi, y) || lhs1 > bound1 * gauss_1d(0.5 * t * hi, y) {
            g4_literal_bad += 1;
        }

        let s1: f64 = rng.random_range(0.1..2.0);
        let s2: f64 = s1 * rng.random_range(1.0..4.0);
        let y: f64 = rng.random_range(-8.0..8.0) * s2.sqrt();
        let lhs = (gauss_1d(s2, y) - gauss_1d(s1, y)).abs();
        let factor = (2.0 * s2 / s1).sqrt() * (s2 - s1) / s1;
        if lhs > factor * gauss_1d(2.0 * s2, y) * (1.0 + 1e-12) {
            a3_bad += 1;
        }
        if lhs > factor * gauss_1d(s2, y) * (1.0 + 1e-12) {
            a3_literal_bad += 1;
        }
    }

    let mut herm_worst: f64 = 0.0;
    let a = Matrix::new(2, vec![1.3, 0.4, 0.4, 0.8]).unwrap();
    for p in [[0.3, -0.5], [1.1, 0.7], [-0.8, 0.2]] {
        let q = gauss_density(&a, &p).unwrap();
        for i in 0..2 {
            let h = 1e-4;
            let mut up = p;
            let mut dn = p;
            up[i] += h;
            dn[i] -= h;
            let fd1 = (gauss_density(&a, &up).unwrap() - gauss_density(&a, &dn).unwrap()) / (2.0 * h);
            let an1 = hermite1(&a, &p, i).unwrap() * q;
            herm_worst = herm_worst.max((fd1 - an1).abs() / an1.abs().max(1e-3));
            for j in 0..2 {
                let h = 1e-3;
                let at = |di: f64, dj: f64| {
                    let mut v = p;
                    v[i] += di;
                    v[j] += dj;
                    gauss_density(&a, &v).unwrap()
                };
                let fd2 = if i == j {
                    (at(h, 0.0) - 2.0 * q + at(-h, 0.0)) / (h * h)
                } else {
                    (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
                };
                let an2 = hermite2(&a, &p, i, j).unwrap() * q;
                herm_worst = herm_worst.max((fd2 - an2).abs() / an2.abs().max(1e-3));
            }
        }
    }
    let ok = beta_worst < BETA_REL && g4_bad == 0 && a3_bad == 0 && herm_worst < HERMITE_REL;
    (
        ok,
        format!(
            "beta coefficients rel {beta_worst:.1e}; derivative bounds {g4_bad}/100 violations ({g4_literal_bad} for the \
             uncorrected right side); kernel difference bound {a3_bad}/100 ({a3_literal_bad} uncorrected); hermite rel {herm_worst:.1e}"
        ),
    )
}

fn levy_suite() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let discrete = LevyMixture::discrete(1.5, 256).unwrap();
    let power = LevyMixture::power(0.75, 1e-3).unwrap();

    for (name, mix) in [("discrete", &discrete), ("power", &power)] {
        let dt = 0.5;
        let r = RunConfig::new(200_000, 31)
            .run(1, |rng, out| {
                out[0] = mix.sample_increment(dt, rng);
                SampleInfo::weight(1.0)
            })
            .unwrap();
        let z = r.z_score(dt * mix.c_nu());
        ok &= z <= Z;
        notes.push(format!("E[V] {name} z {z:.2}"));
    }

    let model: LevyModel<f64> = LevyModel::holder(1.0, 0.3, 0.8, discrete.clone()).unwrap();
    let mut mass_worst: f64 = 0.0;
    for (z0, t) in [(0.3, 0.5), (-1.0, 1.0)] {
        let mass = trapezoid(
            |x| {
                let mut rng = sample_rng(5, 0);
                frozen_density_levy(&model, z0, t, x, 0.0, 64, &mut rng).unwrap()
            },
            -12.0,
            12.0,
            2401,
        );
        mass_worst = mass_worst.max((mass - 1.0).abs());
    }
    ok &= mass_worst <= LEVY_MASS_TOL;
    notes.push(format!("frozen mass error {mass_worst:.1e}"));

    let flat: LevyModel<f64> = LevyModel::constant(1.2, discrete.clone()).unwrap();
    let mut nonzero = 0;
    for i in 0..20_000 {
        let mut rng = sample_rng(8, i);
        let p = sample_levy_backward_chain(&flat, 0.3, 1.0, 1.0, &mut rng).unwrap();
        if p.grid.jump_count() >= 1 && p.weight != 0.0 {
            nonzero += 1;
        }
    }
    ok &= nonzero == 0;
    notes.push(format!("constant-sigma nonzero jump weights {nonzero}"));

    for (name, mix) in [("discrete", &discrete), ("power", &power)] {
        let m: LevyModel<f64> = LevyModel::holder(1.0, 0.5, 0.9, mix.clone()).unwrap();
        let (x, y, t) = (0.9, 0.1, 0.4);
        let mc = RunConfig::new(400_000, 41)
            .run(1, |rng, out| {
                out[0] = sample_jump_kernel(&m, x, y, t, rng).unwrap();
                SampleInfo::weight(1.0)
            })
            .unwrap();
        let oracle = levy_theta_phi(&m, x, y, t, 20_000, 42, 0).unwrap();
        let (_, z) = combined(&mc, &oracle);
        ok &= z <= Z;
        notes.push(format!("jump factor {name} {:.5} vs {:.5} (z {z:.2})", mc.value(), oracle.value()));
    }

    let mass_model: LevyModel<f64> = LevyModel::holder(1.0, 0.1, 0.9, discrete.clone()).unwrap();
    let step = 0.5;
    let (mut total, mut var) = (0.0, 0.0);
    for k in 0..=48u64 {
        let y = -12.0 + step * k as f64;
        let r = estimate_density_levy(&mass_model, 0.0, y, 1.0, 1, &RunConfig::new(250_000, 500 + k)).unwrap();
        let wgt = if k == 0 || k == 48 { 0.5 * step } else { step };
        total += wgt * r.value();
        var += (wgt * r.error()).powi(2);
    }
    let mass_ok = (total - 1.0).abs() <= LEVY_MASS_TOL;
    ok &= mass_ok;
    notes.push(format!("density mass {total:.4} ± {:.4}", var.sqrt()));
    (ok, notes.join("; "))
}

const DETERMINISM_CONFIGS: [&str; 3] = [
    r#"
command = "estimate-density"
engine = "forward"
n_samples = 30000
seed = 123
[model]
kind = "sin-vol"
s0 = 1.0
s1 = 0.3
[[points]]
x = 0.0
y = 0.4
T = 1.0
[[points]]
x = -0.5
y = 0.2
T = 0.5
"#,
    r#"
command = "estimate-gradient"
engine = "backward"
n_samples = 30000
seed = 9
[model]
kind = "holder-vol"
a0 = 1.0
a1 = 0.25
alpha = 0.5
[[points]]
x = 0.1
y = -0.3
T = 1.0
"#,
    r#"
command = "estimate-density"
engine = "levy"
n_samples = 20000
seed = 4
inner_m = 8
[model]
kind = "levy-holder"
s0 = 1.0
s1 = 0.3
alpha = 0.8
[levy]
kind = "discrete"
rho = 1.5
[[points]]
x = 0.0
y = 0.5
T = 1.0
"#,
];

fn estimate_column(cfg: &Config, workers: usize) -> Vec<String> {
    let over = Overrides { workers: Some(workers), ..Overrides::default() };
    let rows = run(cfg, &over, None, &mut std::io::sink()).unwrap();
    let mut buf = Vec::new();
    parametrix_cli::write_csv(&rows, &mut buf).unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(6).unwrap().to_string())
        .collect()
}

fn determinism() -> Outcome {
    let mut ok = true;
    let mut rows = 0;
    for text in DETERMINISM_CONFIGS {
        let cfg = Config::parse(text).unwrap();
        let base = estimate_column(&cfg, 1);
        rows += base.len();
        for w in [4, 8] {
            ok &= estimate_column(&cfg, w) == base;
        }
    }
    (ok, format!("{rows} rows identical across 1, 4 and 8 workers"))
}

fn heavy_tails() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut record = |name: &str, r: &EstimatorResult| {
        let good = r.kurtosis() > 0.0 && r.max_abs_weight > 0.0 && r.kurtosis().is_finite();
        ok &= good;
        notes.push(format!("{name} kurtosis {:.1} max|w| {:.1}", r.kurtosis(), r.max_abs_weight));
    };
    let run = RunConfig::new(50_000, 3);
    for spec in [
        ModelSpec::OrnsteinUhlenbeck { dim: 1, kappa: 0.5, mean: 0.0, sigma: 1.0 },
        ModelSpec::SinusoidalVolatility { s0: 1.0, s1: 0.3, omega: 1.0, drift: 0.3 },
    ] {
        let m: Model = spec.build().unwrap();
        record(spec.key(), &estimate_density_forward(&m, &[0.0], &[0.5], 1.0, &run).unwrap());
        record(spec.key(), &estimate_density_backward(&m, &[0.0], &[0.5], 1.0, &run).unwrap());
    }
    let holder: Model = ModelSpec::HolderVolatility { a0: 1.0, a1: 0.25, alpha: 0.5, drift: 0.0 }.build().unwrap();
    record("holder-vol", &estimate_density_backward(&holder, &[0.0], &[0.5], 1.0, &run).unwrap());
    let levy: LevyModel<f64> = LevyModel::holder(1.0, 0.3, 0.8, LevyMixture::discrete(1.5, 256).unwrap()).unwrap();
    record("levy-holder", &estimate_density_levy(&levy, 0.0, 0.5, 1.0, 8, &run).unwrap());
    (ok, notes.join("; "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("constant-coefficient collapse", collapse),
        ("OU benchmark, forward and backward", ou_benchmark),
        ("forward/backward cross-agreement", cross_agreement),
        ("Holder backward vs Euler+KDE", holder_vs_kde),
        ("gradient estimators vs finite differences", gradients),
        ("integration-by-parts identities", ibp),
        ("one-jump series term vs quadrature", series_cross_check),
        ("lambda invariance", lambda_invariance),
        ("appendix identities and bounds", appendix),
        ("Levy suite", levy_suite),
        ("determinism across workers", determinism),
        ("heavy-tail diagnostics", heavy_tails),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{:2}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
