//! Recursive Dirichlet-process posterior over the number of local optima.
//!
//! Each stage `j` of the optimizer reports a count `Y_j` (resampled particles
//! landing in `B(η_j)`). Treating the `Y_j` as draws from an unknown measure on
//! the nonnegative integers, the stage-wise DP recursion concentrates its base
//! measure as `Σ_{j=1}^k j⁻² G + Σ_j δ_{y_j}` after `k` stages, with
//! `G({m}) = 2^{−m}`. The geometric base sums to one over `m ∈ {1, 2, …}`; an
//! observed count of zero is kept as a dedicated cell with zero base mass, so
//! its posterior mass comes from observations alone.
//!
//! The marginal of a single cell under a Dirichlet process is Beta in the
//! (cell mass, remaining mass) decomposition, which gives the closed-form mean
//! and variance reported here.

use serde::Serialize;

use crate::error::{Error, Result};

/// Per-stage counts `Y_j`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CountRecord {
    pub y: Vec<usize>,
}

impl CountRecord {
    pub fn new(y: Vec<usize>) -> Self {
        Self { y }
    }

    /// Number of stages recorded.
    pub fn k(&self) -> usize {
        self.y.len()
    }

    pub fn max_count(&self) -> usize {
        self.y.iter().copied().max().unwrap_or(0)
    }
}

/// Base measure `G({m}) = 2^{−m}` on `m ∈ {1, 2, …}`; the `m = 0` cell carries
/// no base mass.
pub fn base_measure(m: usize) -> f64 {
    if m == 0 || m >= 1075 {
        0.0
    } else {
        (0.5f64).powi(m as i32)
    }
}

/// Posterior mean and variance of the cell probability `p_mk` after `k` stages.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DpPosteriorSummary {
    pub m: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Total base mass after `k` stages, `Σ_{j=1}^k j⁻²`, summed smallest-first.
fn stage_mass(k: usize) -> f64 {
    let mut s = 0.0;
    for j in (1..=k).rev() {
        let jf = j as f64;
        s += 1.0 / (jf * jf);
    }
    s
}

/// Closed-form DP cell posterior: with concentration
/// `α_m = 2^{−m} Σ_j j⁻² + Σ_j I(y_j = m)` out of total `T = Σ_j j⁻² + k`,
/// the marginal is Beta(α_m, T − α_m), so
/// `mean = α_m / T` and `variance = α_m (T − α_m) / (T² (T + 1))`.
pub fn dp_mean_var(m: usize, record: &CountRecord) -> Result<DpPosteriorSummary> {
    let k = record.k();
    if k == 0 {
        return Err(Error::InvalidConfig(
            "count record must hold at least one stage".into(),
        ));
    }
    let s = stage_mass(k);
    let hits = record.y.iter().filter(|&&yj| yj == m).count() as f64;
    let total = s + k as f64;
    let alpha = base_measure(m) * s + hits;
    let mean = alpha / total;
    let variance = alpha * (total - alpha) / (total * total * (total + 1.0));
    Ok(DpPosteriorSummary { m, mean, variance })
}

/// The count `m̃` whose posterior mean exceeds `threshold`, if exactly one does
/// among `0..=max(y)`. `threshold` must lie in `(0.5, 1)`.
pub fn converged_count(record: &CountRecord, threshold: f64) -> Result<Option<usize>> {
    if !(threshold > 0.5 && threshold < 1.0) {
        return Err(Error::InvalidConfig(
            "threshold must lie in (0.5, 1)".into(),
        ));
    }
    if record.k() == 0 {
        return Ok(None);
    }
    let mut hit = None;
    for m in 0..=record.max_count() {
        if dp_mean_var(m, record)?.mean >= threshold {
            if hit.is_some() {
                return Ok(None);
            }
            hit = Some(m);
        }
    }
    Ok(hit)
}
