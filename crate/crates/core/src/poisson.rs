//! Random time partitions driven by a Poisson process.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Partition `0 = τ_0 < τ_1 < … < τ_J < T` of `[0, T]` by the jump times of a
/// Poisson process of intensity `λ`, with `T` appended.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonGrid<F> {
    pub lambda: F,
    pub horizon: F,
    /// `[τ_0 = 0, τ_1, …, τ_J, T]`.
    pub times: Vec<F>,
    /// Draws discarded because floating point produced coincident times.
    pub resampled: u32,
}

impl<F: Scalar> PoissonGrid<F> {
    /// `J_T`.
    pub fn jump_count(&self) -> usize {
        self.times.len() - 2
    }

    /// `τ_{J_T}`, the last jump time (zero when there is no jump).
    pub fn last_jump(&self) -> F {
        self.times[self.times.len() - 2]
    }

    /// `T - τ_{J_T}`.
    pub fn terminal_gap(&self) -> F {
        self.horizon - self.last_jump()
    }

    /// Interval lengths `τ_{j+1} - τ_j` for `j < J_T`.
    pub fn jump_increments(&self) -> impl Iterator<Item = F> + '_ {
        let j = self.jump_count();
        self.times[..=j].windows(2).map(|w| w[1] - w[0])
    }

    /// `e^{λT} λ^{-J_T}`, the normalization multiplying every representation.
    pub fn normalization(&self) -> F {
        (self.lambda * self.horizon - F::of(self.jump_count() as f64) * self.lambda.ln()).exp()
    }
}

/// Largest accepted `λT`; beyond it a single grid would not fit in memory.
pub const MAX_POISSON_MEAN: f64 = 1e7;

/// Samples `J_T ~ Poisson(λT)` and, given `J_T = n`, the jump times as the
/// order statistics of `n` uniforms on `[0, T]`.
pub fn sample_poisson_grid<F: Scalar, R: Rng + ?Sized>(
    lambda: F,
    horizon: F,
    rng: &mut R,
) -> Result<PoissonGrid<F>> {
    if !(lambda > F::zero()) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if !(horizon > F::zero()) || !horizon.is_finite() {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    let mean = (lambda * horizon).as_f64();
    if mean > MAX_POISSON_MEAN {
        return Err(invalid(format!("lambda * T = {mean} exceeds {MAX_POISSON_MEAN}")));
    }
    let dist = Poisson::new(mean).map_err(|e| invalid(format!("poisson mean {mean}: {e}")))?;
    let mut resampled = 0u32;
    loop {
        let n = dist.sample(rng) as usize;
        let mut times = Vec::with_capacity(n + 2);
        times.push(F::zero());
        for _ in 0..n {
            times.push(F::sample_unit(rng) * horizon);
        }
        times[1..].sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        times.push(horizon);
        if times.windows(2).all(|w| w[0] < w[1]) {
            return Ok(PoissonGrid {
                lambda,
                horizon,
                times,
                resampled,
            });
        }
        resampled += 1;
    }
}
