//! Shrinking-target estimators over Haar-distributed start points.
//!
//! Sample `i` of an experiment starts at the Haar point drawn from the
//! counter-based stream (seed, i), so results do not depend on the worker
//! count. Per-sample results are gathered in index order and reduced
//! sequentially.

mod depths;
mod hits;
mod met;
mod qi;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::flows::{walk_forward_ball, FlowSpec, OrbitCursor};
use crate::lattice::{Lattice, QuotientPoint};
use crate::targets::start_point;

pub use crate::spectral::SpectralConfig;
pub use depths::{
    hitting_times, loglaw_experiment, penetration_depths, DepthSeries, HitTarget, LoglawResult, LoglawSample,
};
pub use hits::{
    always_hitting_experiment, cumulative_measure, doubling_constant, frozen_expectation, hit_count_experiment,
    hit_counts, AlwaysHitting, HitRecord,
};
pub use met::{beta_plus, met_experiment, MetEstimate};
pub use qi::{qi_experiment, QiEstimate};

/// Lattice, flow, master seed and worker count shared by all experiments.
#[derive(Clone, Debug)]
pub struct Setup {
    pub lattice: Arc<Lattice>,
    pub flow: FlowSpec,
    pub seed: u64,
    pub workers: usize,
}

impl Setup {
    pub fn new(lattice: Arc<Lattice>, flow: FlowSpec, seed: u64, workers: usize) -> Result<Self> {
        if flow.params() != lattice.params() {
            return invalid("flow and lattice use different models");
        }
        if workers == 0 {
            return invalid("workers must be ≥ 1");
        }
        Ok(Self { lattice, flow, seed, workers })
    }

    pub fn start(&self, index: u64) -> Result<QuotientPoint> {
        start_point(&self.lattice, self.seed, index)
    }

    /// Evaluate `f(index, start)` for every sample; output is in index order.
    pub fn map_samples<T, F>(&self, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64, &QuotientPoint) -> Result<T> + Sync + Send,
    {
        if count == 0 {
            return invalid("sample count must be ≥ 1");
        }
        let job = |i: u64| self.start(i).and_then(|x| f(i, &x));
        let results: Vec<Result<T>> = if self.workers == 1 {
            (0..count as u64).map(job).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build()
                .map_err(|e| Error::Configuration(format!("cannot start worker pool: {e}")))?;
            pool.install(|| (0..count as u64).into_par_iter().map(job).collect())
        };
        results.into_iter().collect()
    }
}

/// 2^lo, 2^{lo+1}, …, 2^hi.
pub fn dyadic_grid(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|j| 1u64 << j).collect()
}

/// Powers of two below m_max, then m_max itself.
pub fn dyadic_up_to(m_max: u64) -> Vec<u64> {
    let mut g: Vec<u64> = (0..64).map(|j| 1u64 << j).take_while(|&m| m < m_max).collect();
    g.push(m_max);
    g
}

pub(crate) fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("m-grid must be non-empty, positive and strictly increasing");
    }
    Ok(())
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile; NaN for an empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One-sample Kolmogorov–Smirnov test: statistic D and asymptotic p-value.
pub fn ks_test<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_tail(lambda))
}

/// P(K > λ) for the Kolmogorov distribution.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=20)
            .map(|k| (-((2 * k - 1) as f64).powi(2) * pi2 / (8.0 * lambda * lambda)).exp())
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| if k % 2 == 1 { 1.0 } else { -1.0 } * (-2.0 * (k * k) as f64 * lambda * lambda).exp())
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// Visit every point of x·H⁺_m with its shell index max kᵢ.
pub(crate) fn walk_shells<F>(x: &QuotientPoint, spec: &FlowSpec, lat: &Lattice, m: u64, mut f: F) -> Result<()>
where
    F: FnMut(u64, &QuotientPoint) -> Result<()>,
{
    if spec.rank() == 1 {
        let mut cursor = OrbitCursor::new(x, spec, lat)?;
        for k in 1..=m {
            f(k, cursor.advance()?)?;
        }
        return Ok(());
    }
    walk_forward_ball(x, spec, lat, m, |k, p| f(*k.iter().max().expect("rank ≥ 1"), p))
}

/// Number of points of H⁺ with shell index s: sᵈ − (s−1)ᵈ.
pub(crate) fn shell_size(s: u64, d: usize) -> f64 {
    (s as f64).powi(d as i32) - ((s - 1) as f64).powi(d as i32)
}
