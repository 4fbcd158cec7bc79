//! Quasi-independence of the events {xg_m ∈ B_m} and the counting discrepancy.
//!
//! With f_m(x) = 1_{B_m}(xg_m), R_{m,m′} = μ(f_m f_{m′}) − μ(f_m)μ(f_{m′}) is
//! estimated from co-occurrence counts. Pairs that no sample hits jointly
//! contribute exactly μ_m μ_{m′}, so Σ|R̂| is assembled from the sparse set of
//! observed pairs plus (Σμ)², without forming the window-sized matrix.

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::flows::{FlowSpec, OrbitCursor};
use crate::lattice::{Lattice, QuotientPoint};
use crate::targets::TargetFamily;

use super::Setup;

#[derive(Clone, Debug, PartialEq)]
pub struct QiEstimate {
    pub window: (u64, u64),
    pub samples: usize,
    /// μ(f_m) for m in the window.
    pub mu: Vec<f64>,
    /// Σ_{m,m′} |R̂_{m,m′}| over the window.
    pub sum_abs_r: f64,
    /// Σ_m μ(f_m) over the window.
    pub sum_mu: f64,
    /// Σ_{m′} R̂_{m,m′} for each m in the window.
    pub row_sums: Vec<f64>,
    /// E_N = Σ_{m ≤ N} μ(f_m).
    pub e_total: f64,
    /// S_N(x) = #{m ≤ N : xg_m ∈ B_m} per sample.
    pub s_samples: Vec<u64>,
    co_hits: BTreeMap<(u64, u64), u64>,
}

impl QiEstimate {
    /// Σ|R̂| / Σμ, the constant in the quasi-independence bound.
    pub fn ratio(&self) -> f64 {
        self.sum_abs_r / self.sum_mu
    }

    pub fn r_entry(&self, m: u64, m2: u64) -> Option<f64> {
        let (lo, hi) = self.window;
        if !(lo..=hi).contains(&m) || !(lo..=hi).contains(&m2) {
            return None;
        }
        let key = (m.min(m2), m.max(m2));
        let c = *self.co_hits.get(&key).unwrap_or(&0) as f64 / self.samples as f64;
        Some(c - self.mu[(m - lo) as usize] * self.mu[(m2 - lo) as usize])
    }

    /// |S_N − E_N| / (√E_N · ln(E_N)^power) per sample.
    pub fn discrepancy(&self, power: f64) -> Vec<f64> {
        let e = self.e_total;
        let scale = e.sqrt() * e.ln().powf(power);
        self.s_samples.iter().map(|&s| (s as f64 - e).abs() / scale).collect()
    }
}

fn sample_hits(
    x: &QuotientPoint,
    spec: &FlowSpec,
    lat: &Lattice,
    fam: &TargetFamily,
    lo: u64,
    hi: u64,
) -> Result<(Vec<u64>, u64)> {
    let mut cursor = OrbitCursor::new(x, spec, lat)?;
    let mut window = Vec::new();
    let mut total = 0;
    for m in 1..=hi {
        if fam.membership(cursor.advance()?, m) {
            total += 1;
            if m >= lo {
                window.push(m);
            }
        }
    }
    Ok((window, total))
}

pub fn qi_experiment(setup: &Setup, fam: &TargetFamily, window: (u64, u64), samples: usize) -> Result<QiEstimate> {
    let (lo, hi) = window;
    if !(1 <= lo && lo < hi) {
        return invalid("QI window needs 1 ≤ M < N");
    }
    if setup.flow.rank() != 1 {
        return invalid("QI sums follow a one-parameter orbit; use a rank-1 flow");
    }
    let mut mu = Vec::with_capacity((hi - lo + 1) as usize);
    let mut e_total = 0.0;
    for m in 1..=hi {
        let v = fam.measure(m)?;
        if !v.is_exact() {
            return Err(Error::Configuration("QI sums need exact target measures".into()));
        }
        e_total += v.value;
        if m >= lo {
            mu.push(v.value);
        }
    }
    let rows = setup.map_samples(samples, |_, x| sample_hits(x, &setup.flow, &setup.lattice, fam, lo, hi))?;

    let mut co_hits: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for (hits, _) in &rows {
        for (a, &m) in hits.iter().enumerate() {
            for &m2 in &hits[a..] {
                *co_hits.entry((m, m2)).or_insert(0) += 1;
            }
        }
    }
    let sn = samples as f64;
    let sum_mu: f64 = mu.iter().sum();
    let idx = |m: u64| (m - lo) as usize;
    let mut sum_abs_r = sum_mu * sum_mu;
    let mut row_sums: Vec<f64> = mu.iter().map(|u| -u * sum_mu).collect();
    for (&(m, m2), &c) in &co_hits {
        let prod = mu[idx(m)] * mu[idx(m2)];
        let c = c as f64 / sn;
        let weight = if m == m2 { 1.0 } else { 2.0 };
        sum_abs_r += weight * ((c - prod).abs() - prod);
        row_sums[idx(m)] += c;
        if m != m2 {
            row_sums[idx(m2)] += c;
        }
    }
    Ok(QiEstimate {
        window,
        samples,
        mu,
        sum_abs_r,
        sum_mu,
        row_sums,
        e_total,
        s_samples: rows.iter().map(|r| r.1).collect(),
        co_hits,
    })
}
