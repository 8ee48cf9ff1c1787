//! Reproducible parallel Monte Carlo driver.
//!
//! Every sample `i` draws from its own ChaCha stream keyed by the run seed with
//! stream id `i`, so the value of a sample never depends on which worker ran it.
//! Samples are accumulated in fixed-size chunks and the chunk statistics are
//! merged by a pairwise tree in index order, which makes the reported mean a
//! pure function of `(sampler, seed, n_samples)` regardless of worker count.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Per-sample random number generator.
pub type SampleRng = ChaCha8Rng;

const CHUNK: u64 = 4096;

/// Deterministic generator for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> SampleRng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a sampler reports besides its value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleInfo {
    /// Multiplicative weight carried by the sample (e.g. `e^{λT} λ^{-J} Γ`).
    pub weight: f64,
    /// Grids redrawn because of floating point time collisions.
    pub resampled: u32,
}

impl SampleInfo {
    pub fn weight(weight: f64) -> Self {
        Self {
            weight,
            resampled: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EstimatorOptions {
    /// Worker threads; `0` uses every available core.
    pub workers: usize,
    /// Number of contiguous blocks for the median-of-means diagnostic.
    pub median_of_means_blocks: Option<usize>,
    /// Caps `|weight|` by rescaling the sample. Biases the estimator.
    pub clip_weight: Option<f64>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            median_of_means_blocks: None,
            clip_weight: None,
        }
    }
}

impl EstimatorOptions {
    pub fn with_workers(workers: usize) -> Self {
        Self {
            workers,
            ..Self::default()
        }
    }
}

/// Parameters shared by every estimator: Poisson intensity, sample count,
/// seed and driver options.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub lambda: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub options: EstimatorOptions,
}

impl RunConfig {
    pub fn new(n_samples: u64, seed: u64) -> Self {
        Self {
            lambda: 1.0,
            n_samples,
            seed,
            options: EstimatorOptions::default(),
        }
    }

    pub fn lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.options.workers = workers;
        self
    }

    pub fn run<S>(&self, dim: usize, sampler: S) -> Result<EstimatorResult>
    where
        S: Fn(&mut SampleRng, &mut [f64]) -> SampleInfo + Sync,
    {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        let mut r = run_estimator(dim, self.n_samples, self.seed, &self.options, sampler)?;
        r.note("lambda", self.lambda);
        Ok(r)
    }
}

/// Outcome of a Monte Carlo run. Vector-valued estimators report one entry
/// per component.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorResult {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Samples that entered the statistics (non-finite samples excluded).
    pub n_samples: u64,
    pub nan_count: u64,
    pub max_abs_weight: f64,
    /// Pearson kurtosis `m4 / m2²` per component; zero for a degenerate sample.
    pub sample_kurtosis: Vec<f64>,
    pub median_of_means: Option<Vec<f64>>,
    pub seed: u64,
    pub metadata: BTreeMap<String, String>,
}

impl EstimatorResult {
    /// First component of the mean.
    pub fn value(&self) -> f64 {
        self.mean[0]
    }

    pub fn error(&self) -> f64 {
        self.std_error[0]
    }

    pub fn kurtosis(&self) -> f64 {
        self.sample_kurtosis[0]
    }

    /// `|mean - target| / std_error` for the first component.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value() - target).abs() / self.error()
    }

    pub(crate) fn note(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }
}

/// Central moments up to order four, mergeable (Pébay's update formulas).
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    fn merge(a: &Self, b: &Self) -> Self {
        if a.n == 0.0 {
            return *b;
        }
        if b.n == 0.0 {
            return *a;
        }
        let n = a.n + b.n;
        let delta = b.mean - a.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let mean = a.mean + delta * b.n / n;
        let m2 = a.m2 + b.m2 + d2 * a.n * b.n / n;
        let m3 = a.m3 + b.m3 + d3 * a.n * b.n * (a.n - b.n) / (n * n)
            + 3.0 * delta * (a.n * b.m2 - b.n * a.m2) / n;
        let m4 = a.m4
            + b.m4
            + d4 * a.n * b.n * (a.n * a.n - a.n * b.n + b.n * b.n) / (n * n * n)
            + 6.0 * d2 * (a.n * a.n * b.m2 + b.n * b.n * a.m2) / (n * n)
            + 4.0 * delta * (a.n * b.m3 - b.n * a.m3) / n;
        Self { n, mean, m2, m3, m4 }
    }
}

#[derive(Clone, Debug)]
struct ChunkStats {
    group: usize,
    moments: Vec<Moments>,
    nan_count: u64,
    max_abs_weight: f64,
    resampled: u64,
    clipped: u64,
}

impl ChunkStats {
    fn merge(a: &Self, b: &Self) -> Self {
        Self {
            group: a.group,
            moments: a
                .moments
                .iter()
                .zip(&b.moments)
                .map(|(x, y)| Moments::merge(x, y))
                .collect(),
            nan_count: a.nan_count + b.nan_count,
            max_abs_weight: a.max_abs_weight.max(b.max_abs_weight),
            resampled: a.resampled + b.resampled,
            clipped: a.clipped + b.clipped,
        }
    }
}

fn tree_merge(items: &[ChunkStats]) -> ChunkStats {
    match items.len() {
        1 => items[0].clone(),
        n => {
            let (l, r) = items.split_at(n / 2);
            ChunkStats::merge(&tree_merge(l), &tree_merge(r))
        }
    }
}

/// Runs `sampler` for `n_samples` independent samples of dimension `dim`.
///
/// The sampler writes its value into the provided slice. Samples with any
/// non-finite component are excluded from the statistics and counted in
/// `nan_count`; a run in which every sample is non-finite is an error.
pub fn run_estimator<S>(
    dim: usize,
    n_samples: u64,
    seed: u64,
    options: &EstimatorOptions,
    sampler: S,
) -> Result<EstimatorResult>
where
    S: Fn(&mut SampleRng, &mut [f64]) -> SampleInfo + Sync,
{
    if n_samples < 2 {
        return Err(invalid(format!("n_samples must be at least 2, got {n_samples}")));
    }
    if dim == 0 {
        return Err(invalid("sample dimension must be positive"));
    }
    let groups = options.median_of_means_blocks.unwrap_or(1).max(1) as u64;
    if groups > n_samples {
        return Err(invalid(format!(
            "median-of-means blocks ({groups}) exceed n_samples ({n_samples})"
        )));
    }
    let mut ranges = Vec::new();
    for g in 0..groups {
        let lo = g * n_samples / groups;
        let hi = (g + 1) * n_samples / groups;
        let mut s = lo;
        while s < hi {
            let e = (s + CHUNK).min(hi);
            ranges.push((g as usize, s, e));
            s = e;
        }
    }
    let clip = options.clip_weight;
    let run_chunk = |&(group, lo, hi): &(usize, u64, u64)| {
        let mut stats = ChunkStats {
            group,
            moments: vec![Moments::default(); dim],
            nan_count: 0,
            max_abs_weight: 0.0,
            resampled: 0,
            clipped: 0,
        };
        let mut value = vec![0.0; dim];
        for i in lo..hi {
            let mut rng = sample_rng(seed, i);
            value.iter_mut().for_each(|v| *v = 0.0);
            let info = sampler(&mut rng, &mut value);
            stats.resampled += info.resampled as u64;
            if value.iter().any(|v| !v.is_finite()) || !info.weight.is_finite() {
                stats.nan_count += 1;
                continue;
            }
            let mut w = info.weight.abs();
            if let Some(c) = clip {
                if w > c {
                    let scale = c / w;
                    value.iter_mut().for_each(|v| *v *= scale);
                    w = c;
                    stats.clipped += 1;
                }
            }
            stats.max_abs_weight = stats.max_abs_weight.max(w);
            for (m, &v) in stats.moments.iter_mut().zip(&value) {
                m.push(v);
            }
        }
        stats
    };
    let chunks: Vec<ChunkStats> = if options.workers == 1 {
        ranges.iter().map(run_chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| Error::Estimation(format!("thread pool: {e}")))?;
        pool.install(|| ranges.par_iter().map(run_chunk).collect())
    };

    let total = tree_merge(&chunks);
    let n = total.moments[0].n;
    if n == 0.0 {
        return Err(Error::Estimation(format!(
            "all {n_samples} samples were non-finite"
        )));
    }
    let mean: Vec<f64> = total.moments.iter().map(|m| m.mean).collect();
    let std_error = total
        .moments
        .iter()
        .map(|m| {
            if m.n < 2.0 {
                f64::NAN
            } else {
                (m.m2 / (m.n - 1.0)).sqrt() / m.n.sqrt()
            }
        })
        .collect();
    let sample_kurtosis = total
        .moments
        .iter()
        .map(|m| if m.m2 > 0.0 { m.n * m.m4 / (m.m2 * m.m2) } else { 0.0 })
        .collect();
    let median_of_means = options.median_of_means_blocks.map(|_| {
        let mut per_group: Vec<Vec<ChunkStats>> = vec![Vec::new(); groups as usize];
        for c in &chunks {
            per_group[c.group].push(c.clone());
        }
        let group_means: Vec<Vec<f64>> = per_group
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| tree_merge(g).moments.iter().map(|m| m.mean).collect())
            .collect();
        (0..dim)
            .map(|k| {
                let mut v: Vec<f64> = group_means.iter().map(|g| g[k]).filter(|x| x.is_finite()).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                match v.len() {
                    0 => f64::NAN,
                    l if l % 2 == 1 => v[l / 2],
                    l => 0.5 * (v[l / 2 - 1] + v[l / 2]),
                }
            })
            .collect()
    });
    let mut result = EstimatorResult {
        mean,
        std_error,
        n_samples: n as u64,
        nan_count: total.nan_count,
        max_abs_weight: total.max_abs_weight,
        sample_kurtosis,
        median_of_means,
        seed,
        metadata: BTreeMap::new(),
    };
    result.note("nan_count", total.nan_count);
    result.note("resampled_grids", total.resampled);
    if clip.is_some() {
        result.note("clipped", total.clipped);
        result.note("biased", "true");
    }
    Ok(result)
}
