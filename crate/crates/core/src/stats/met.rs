//! Forward-ball averages β⁺_m f and their L² convergence to μ(f).

use crate::error::{invalid, Result};
use crate::fit::{least_squares, LinearFit};
use crate::flows::FlowSpec;
use crate::lattice::{Lattice, QuotientPoint};
use crate::targets::TargetFamily;

use super::{check_grid, mean_se, walk_shells, Setup};

/// β⁺_m f(x) = m^{−d} Σ_{h ∈ H⁺_m} f(xh).
pub fn beta_plus<F>(f: F, x: &QuotientPoint, spec: &FlowSpec, lat: &Lattice, m: u64) -> Result<f64>
where
    F: Fn(&QuotientPoint) -> f64,
{
    if m == 0 {
        return invalid("forward ball needs m ≥ 1");
    }
    let mut sum = 0.0;
    walk_shells(x, spec, lat, m, |_, p| {
        sum += f(p);
        Ok(())
    })?;
    Ok(sum / (m as f64).powi(spec.rank() as i32))
}

/// Hit counts of the indicator over H⁺_m for every grid m, in one walk.
fn ball_counts(x: &QuotientPoint, spec: &FlowSpec, lat: &Lattice, f: &TargetFamily, m_grid: &[u64]) -> Result<Vec<u64>> {
    let mut buckets = vec![0u64; m_grid.len()];
    walk_shells(x, spec, lat, *m_grid.last().expect("checked"), |s, p| {
        if f.membership(p, 1) {
            buckets[m_grid.partition_point(|&g| g < s)] += 1;
        }
        Ok(())
    })?;
    let mut acc = 0;
    Ok(buckets
        .into_iter()
        .map(|b| {
            acc += b;
            acc
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetEstimate {
    pub m_grid: Vec<u64>,
    pub mu_f: f64,
    /// Root-mean-square of β⁺_m f − μ(f) over samples, with standard error.
    pub norms: Vec<(f64, f64)>,
    /// Sample mean of β⁺_m f with standard error.
    pub means: Vec<(f64, f64)>,
    /// Fit of ln norm against ln m; κ̂ is minus its slope. None if a norm vanishes.
    pub fit: Option<LinearFit>,
    /// Fraction of samples with |β⁺_m f − μ(f)| ≥ μ(f)/2.
    pub atypical_fractions: Vec<f64>,
    /// Fraction of samples whose forward ball misses the target.
    pub empty_fractions: Vec<f64>,
    /// Per-sample β⁺_m f, sample-major.
    pub betas: Vec<Vec<f64>>,
}

impl MetEstimate {
    pub fn kappa(&self) -> Option<f64> {
        self.fit.map(|f| -f.slope)
    }

    /// 95% interval for κ̂.
    pub fn kappa_interval(&self) -> Option<(f64, f64)> {
        self.fit.map(|f| {
            let (lo, hi) = f.slope_interval();
            (-hi, -lo)
        })
    }
}

/// Averages of f = 1_{B_1} for the given family, whose measure must be positive.
pub fn met_experiment(setup: &Setup, f: &TargetFamily, m_grid: &[u64], samples: usize) -> Result<MetEstimate> {
    check_grid(m_grid)?;
    let mu_f = f.measure(1)?.value;
    if !(mu_f > 0.0) {
        return invalid("mean ergodic experiment needs a target with μ(f) > 0");
    }
    let d = setup.flow.rank() as i32;
    let betas: Vec<Vec<f64>> = setup.map_samples(samples, |_, x| {
        let counts = ball_counts(x, &setup.flow, &setup.lattice, f, m_grid)?;
        Ok(counts.iter().zip(m_grid).map(|(&c, &m)| c as f64 / (m as f64).powi(d)).collect())
    })?;
    let s = betas.len() as f64;
    let mut norms = Vec::new();
    let mut means = Vec::new();
    let mut atypical_fractions = Vec::new();
    let mut empty_fractions = Vec::new();
    for j in 0..m_grid.len() {
        let col: Vec<f64> = betas.iter().map(|b| b[j]).collect();
        let sq: Vec<f64> = col.iter().map(|b| (b - mu_f).powi(2)).collect();
        let (ms, ms_se) = mean_se(&sq);
        let norm = ms.sqrt();
        let norm_se = if norm > 0.0 { ms_se / (2.0 * norm) } else { 0.0 };
        norms.push((norm, norm_se));
        means.push(mean_se(&col));
        atypical_fractions.push(col.iter().filter(|b| (*b - mu_f).abs() >= 0.5 * mu_f).count() as f64 / s);
        empty_fractions.push(col.iter().filter(|b| **b == 0.0).count() as f64 / s);
    }
    let fit = if norms.iter().all(|n| n.0 > 0.0) && m_grid.len() >= 2 {
        let lx: Vec<f64> = m_grid.iter().map(|&m| (m as f64).ln()).collect();
        let ly: Vec<f64> = norms.iter().map(|n| n.0.ln()).collect();
        Some(least_squares(&lx, &ly)?)
    } else {
        None
    };
    Ok(MetEstimate { m_grid: m_grid.to_vec(), mu_f, norms, means, fit, atypical_fractions, empty_fractions, betas })
}
