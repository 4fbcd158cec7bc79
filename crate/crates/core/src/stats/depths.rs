//! Penetration depths, logarithm-law ratios and first hitting times along
//! the one-parameter orbit x g_1, x g_2, … of the first flow axis.

use crate::error::{invalid, Result};
use crate::flows::{FlowSpec, OrbitCursor};
use crate::lattice::{CenterProbe, Lattice, QuotientPoint};

use super::{check_grid, median, Setup};

/// Distances at or below this count as the orbit passing through the center.
const EXACT_HIT: f64 = 1e-9;

/// Running extrema at each grid point m:
/// d_ball = min_{j≤m} d(xg_j, x₀), d_cusp = max_{j≤m} cusp_height(xg_j).
#[derive(Clone, Debug, PartialEq)]
pub struct DepthSeries {
    pub m_grid: Vec<u64>,
    pub d_ball: Vec<f64>,
    pub d_cusp: Vec<f64>,
}

pub fn penetration_depths(
    x: &QuotientPoint,
    spec: &FlowSpec,
    lat: &Lattice,
    m_grid: &[u64],
    center: &CenterProbe,
) -> Result<DepthSeries> {
    check_grid(m_grid)?;
    let mut cursor = OrbitCursor::new(x, spec, lat)?;
    let mut d_ball = Vec::with_capacity(m_grid.len());
    let mut d_cusp = Vec::with_capacity(m_grid.len());
    let (mut best_ball, mut best_cusp) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut next = 0;
    for m in 1..=*m_grid.last().expect("checked") {
        let p = cursor.advance()?;
        best_cusp = best_cusp.max(p.log_height());
        if let Some(d) = center.distance_below(p, best_ball) {
            best_ball = d;
        }
        if m == m_grid[next] {
            d_ball.push(best_ball);
            d_cusp.push(best_cusp);
            next += 1;
        }
    }
    Ok(DepthSeries { m_grid: m_grid.to_vec(), d_ball, d_cusp })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoglawSample {
    pub sample_id: u64,
    /// d_m(x,∞)/ln m per grid point.
    pub cusp_ratio: Vec<f64>,
    /// −ln d_m(x,x₀)/ln m per grid point, over the orbit punctured at exact hits.
    pub ball_ratio: Vec<f64>,
    /// The orbit passed through x₀ itself.
    pub exact_hit: bool,
    /// #{m ≤ t : cusp_height(xg_m) ≥ c ln t/(n−1)} per configured c, t = m_max.
    pub cusp_counts: Vec<u64>,
    /// #{m ≤ t : d(xg_m, x₀) < t^{−c/n}} per configured c.
    pub ball_counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoglawResult {
    pub m_grid: Vec<u64>,
    pub exponents: Vec<f64>,
    pub samples: Vec<LoglawSample>,
    pub median_cusp: Vec<f64>,
    pub median_ball: Vec<f64>,
}

impl LoglawResult {
    pub fn final_median_cusp(&self) -> f64 {
        *self.median_cusp.last().expect("non-empty grid")
    }

    pub fn final_median_ball(&self) -> f64 {
        *self.median_ball.last().expect("non-empty grid")
    }

    /// Median ratios at grid point m.
    pub fn medians_at(&self, m: u64) -> Option<(f64, f64)> {
        let j = self.m_grid.iter().position(|&g| g == m)?;
        Some((self.median_cusp[j], self.median_ball[j]))
    }
}

fn loglaw_sample(
    id: u64,
    x: &QuotientPoint,
    spec: &FlowSpec,
    lat: &Lattice,
    m_grid: &[u64],
    center: &CenterProbe,
    exponents: &[f64],
) -> Result<LoglawSample> {
    let m_max = *m_grid.last().expect("checked");
    let n = lat.n() as f64;
    let log_t = (m_max as f64).ln();
    let cusp_levels: Vec<f64> = exponents.iter().map(|c| c * log_t / (n - 1.0)).collect();
    let ball_levels: Vec<f64> = exponents.iter().map(|c| (-c * log_t / n).exp()).collect();
    let widest = ball_levels.iter().cloned().fold(0.0, f64::max);
    let mut cusp_counts = vec![0u64; exponents.len()];
    let mut ball_counts = vec![0u64; exponents.len()];

    let mut cursor = OrbitCursor::new(x, spec, lat)?;
    let (mut best_ball, mut best_cusp) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut exact_hit = false;
    let mut cusp_ratio = Vec::with_capacity(m_grid.len());
    let mut ball_ratio = Vec::with_capacity(m_grid.len());
    let mut next = 0;
    for m in 1..=m_max {
        let p = cursor.advance()?;
        let h = p.log_height();
        best_cusp = best_cusp.max(h);
        for (count, level) in cusp_counts.iter_mut().zip(&cusp_levels) {
            if h >= *level {
                *count += 1;
            }
        }
        if let Some(d) = center.distance_below(p, best_ball.max(widest)) {
            if d <= EXACT_HIT {
                exact_hit = true;
            } else {
                best_ball = best_ball.min(d);
                for (count, level) in ball_counts.iter_mut().zip(&ball_levels) {
                    if d < *level {
                        *count += 1;
                    }
                }
            }
        }
        if m == m_grid[next] {
            let lm = (m as f64).ln();
            cusp_ratio.push(best_cusp / lm);
            ball_ratio.push(-best_ball.ln() / lm);
            next += 1;
        }
    }
    Ok(LoglawSample { sample_id: id, cusp_ratio, ball_ratio, exact_hit, cusp_counts, ball_counts })
}

/// Log-law ratios for `samples` Haar start points. The grid must end at
/// m_max ≥ 1000 and should avoid m = 1, where ln m vanishes.
pub fn loglaw_experiment(
    setup: &Setup,
    samples: usize,
    m_grid: &[u64],
    center: &CenterProbe,
    exponents: &[f64],
) -> Result<LoglawResult> {
    check_grid(m_grid)?;
    if *m_grid.last().expect("checked") < 1000 {
        return invalid("log-law experiments need m_max ≥ 1000");
    }
    if m_grid[0] < 2 {
        return invalid("log-law grid must start at m ≥ 2");
    }
    if exponents.iter().any(|c| !(0.0..1.0).contains(c)) {
        return invalid("counting exponents c must lie in [0, 1)");
    }
    let rows = setup.map_samples(samples, |i, x| {
        loglaw_sample(i, x, &setup.flow, &setup.lattice, m_grid, center, exponents)
    })?;
    let column = |j: usize, cusp: bool| -> Vec<f64> {
        rows.iter().map(|r| if cusp { r.cusp_ratio[j] } else { r.ball_ratio[j] }).collect()
    };
    let median_cusp = (0..m_grid.len()).map(|j| median(&column(j, true))).collect();
    let median_ball = (0..m_grid.len()).map(|j| median(&column(j, false))).collect();
    Ok(LoglawResult { m_grid: m_grid.to_vec(), exponents: exponents.to_vec(), samples: rows, median_cusp, median_ball })
}

#[derive(Clone, Copy, Debug)]
pub enum HitTarget<'a> {
    /// B_r(x₀) = {d(·, x₀) < r}.
    Ball(&'a CenterProbe),
    /// B_r(∞) = {cusp_height ≥ r}.
    Cusp,
}

/// τ_r = min{m ≥ 1 : xg_m ∈ B_r} for each r, None if not hit by `horizon`.
pub fn hitting_times(
    x: &QuotientPoint,
    spec: &FlowSpec,
    lat: &Lattice,
    target: HitTarget<'_>,
    r_grid: &[f64],
    horizon: u64,
) -> Result<Vec<Option<u64>>> {
    let increasing = r_grid.windows(2).all(|w| w[0] <= w[1]);
    let decreasing = r_grid.windows(2).all(|w| w[0] >= w[1]);
    if r_grid.is_empty() || !(increasing || decreasing) || r_grid.iter().any(|r| !r.is_finite()) {
        return invalid("r-grid must be non-empty, finite and monotone");
    }
    // Visit targets from largest to smallest.
    let mut order: Vec<usize> = (0..r_grid.len()).collect();
    match target {
        HitTarget::Ball(_) => order.sort_by(|&a, &b| r_grid[b].total_cmp(&r_grid[a])),
        HitTarget::Cusp => order.sort_by(|&a, &b| r_grid[a].total_cmp(&r_grid[b])),
    }
    let mut tau = vec![None; r_grid.len()];
    let mut next = 0;
    let mut cursor = OrbitCursor::new(x, spec, lat)?;
    for m in 1..=horizon {
        let p = cursor.advance()?;
        match target {
            HitTarget::Ball(probe) => {
                if let Some(d) = probe.distance_below(p, r_grid[order[next]]) {
                    while next < order.len() && d < r_grid[order[next]] {
                        tau[order[next]] = Some(m);
                        next += 1;
                    }
                }
            }
            HitTarget::Cusp => {
                let h = p.log_height();
                while next < order.len() && h >= r_grid[order[next]] {
                    tau[order[next]] = Some(m);
                    next += 1;
                }
            }
        }
        if next == order.len() {
            break;
        }
    }
    Ok(tau)
}
