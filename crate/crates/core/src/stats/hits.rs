//! Hit counts, expected counts and the eventually-always-hitting test.

use crate::error::{invalid, Error, Result};
use crate::flows::{FlowSpec, OrbitCursor};
use crate::lattice::{Lattice, QuotientPoint};
use crate::targets::TargetFamily;

use super::{check_grid, shell_size, walk_shells, Setup};

/// Counts at each grid point M for the forward ball H⁺_M with shell index s = max kᵢ:
/// diagonal #{h ∈ H⁺_M : xh ∈ B_{s(h)}} and frozen #{h ∈ H⁺_M : xh ∈ B_M}.
/// For one-parameter flows these are #{m ≤ M : xg_m ∈ B_m} and #{k ≤ M : xg_k ∈ B_M}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HitRecord {
    pub sample_id: u64,
    pub m_grid: Vec<u64>,
    pub hit_count_diag: Vec<u64>,
    pub hit_count_frozen: Vec<u64>,
}

fn hit_record(
    id: u64,
    x: &QuotientPoint,
    spec: &FlowSpec,
    lat: &Lattice,
    fam: &TargetFamily,
    m_grid: &[u64],
) -> Result<HitRecord> {
    check_grid(m_grid)?;
    let m_max = *m_grid.last().expect("checked");
    let lo = m_grid[0];
    let mut diag_buckets = vec![0u64; m_grid.len()];
    // (shell, depth) of every visit to B_{m_grid[0]}
    let mut visits: Vec<(u64, u64)> = Vec::new();
    walk_shells(x, spec, lat, m_max, |s, p| {
        let depth = fam.depth(p, m_max);
        if depth >= s {
            diag_buckets[m_grid.partition_point(|&g| g < s)] += 1;
        }
        if depth >= lo {
            visits.push((s, depth));
        }
        Ok(())
    })?;
    let mut hit_count_diag = Vec::with_capacity(m_grid.len());
    let mut acc = 0;
    for b in diag_buckets {
        acc += b;
        hit_count_diag.push(acc);
    }
    let hit_count_frozen = m_grid
        .iter()
        .map(|&m| visits.iter().filter(|&&(s, d)| s <= m && d >= m).count() as u64)
        .collect();
    Ok(HitRecord { sample_id: id, m_grid: m_grid.to_vec(), hit_count_diag, hit_count_frozen })
}

pub fn hit_counts(
    x: &QuotientPoint,
    spec: &FlowSpec,
    lat: &Lattice,
    fam: &TargetFamily,
    m_grid: &[u64],
) -> Result<HitRecord> {
    hit_record(0, x, spec, lat, fam, m_grid)
}

pub fn hit_count_experiment(setup: &Setup, fam: &TargetFamily, m_grid: &[u64], samples: usize) -> Result<Vec<HitRecord>> {
    check_grid(m_grid)?;
    setup.map_samples(samples, |i, x| hit_record(i, x, &setup.flow, &setup.lattice, fam, m_grid))
}

fn exact_measure(fam: &TargetFamily, m: u64) -> Result<f64> {
    let mu = fam.measure(m)?;
    if !mu.is_exact() {
        return Err(Error::Configuration(format!(
            "expected counts need exact target measures, but μ(B_{m}) is a Monte Carlo estimate"
        )));
    }
    Ok(mu.value)
}

/// E_M = Σ_{h ∈ H⁺_M} μ(B_{s(h)}) at each grid point, matching the diagonal count.
pub fn cumulative_measure(fam: &TargetFamily, m_grid: &[u64], rank: usize) -> Result<Vec<f64>> {
    check_grid(m_grid)?;
    let mut out = Vec::with_capacity(m_grid.len());
    let mut acc = 0.0;
    let mut s = 1;
    for &m in m_grid {
        while s <= m {
            acc += shell_size(s, rank) * exact_measure(fam, s)?;
            s += 1;
        }
        out.push(acc);
    }
    Ok(out)
}

/// mᵈ μ(B_m) at each grid point, matching the frozen count.
pub fn frozen_expectation(fam: &TargetFamily, m_grid: &[u64], rank: usize) -> Result<Vec<f64>> {
    m_grid.iter().map(|&m| Ok((m as f64).powi(rank as i32) * exact_measure(fam, m)?)).collect()
}

/// max_j μ(B_{2ʲ})/μ(B_{2ʲ⁺¹}) over 2ʲ⁺¹ ≤ m_hi; infinite if a target becomes null.
pub fn doubling_constant(fam: &TargetFamily, m_hi: u64) -> Result<f64> {
    let mut worst: f64 = 1.0;
    let mut m = 1u64;
    let mut prev = fam.measure(1)?.value;
    while m.saturating_mul(2) <= m_hi {
        m *= 2;
        let cur = fam.measure(m)?.value;
        worst = worst.max(if cur > 0.0 { prev / cur } else if prev > 0.0 { f64::INFINITY } else { 1.0 });
        prev = cur;
    }
    Ok(worst)
}

/// Per-sample first window index m ∈ [m_lo, m_hi] with xH⁺_m ∩ B_m = ∅.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlwaysHitting {
    pub m_lo: u64,
    pub m_hi: u64,
    pub first_miss: Vec<Option<u64>>,
}

impl AlwaysHitting {
    /// Fraction of samples meeting B_m for every m ∈ [m_lo, m_hi].
    pub fn fraction(&self) -> f64 {
        self.fraction_through(self.m_hi)
    }

    /// The same fraction with the window cut at `horizon`.
    pub fn fraction_through(&self, horizon: u64) -> f64 {
        let ok = self.first_miss.iter().filter(|f| f.is_none_or(|m| m > horizon)).count();
        ok as f64 / self.first_miss.len() as f64
    }
}

fn first_miss(
    x: &QuotientPoint,
    spec: &FlowSpec,
    lat: &Lattice,
    fam: &TargetFamily,
    m_lo: u64,
    m_hi: u64,
) -> Result<Option<u64>> {
    // A(m) = max depth over H⁺_m; the window is hit at m iff A(m) ≥ m.
    if spec.rank() == 1 {
        let mut cursor = OrbitCursor::new(x, spec, lat)?;
        let mut reach = 0;
        for m in 1..=m_hi {
            reach = reach.max(fam.depth(cursor.advance()?, m_hi));
            if m >= m_lo && reach < m {
                return Ok(Some(m));
            }
        }
        return Ok(None);
    }
    let mut best = vec![0u64; m_hi as usize + 1];
    walk_shells(x, spec, lat, m_hi, |s, p| {
        let d = fam.depth(p, m_hi);
        let slot = &mut best[s as usize];
        *slot = (*slot).max(d);
        Ok(())
    })?;
    let mut reach = 0;
    for m in 1..=m_hi {
        reach = reach.max(best[m as usize]);
        if m >= m_lo && reach < m {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

pub fn always_hitting_experiment(
    setup: &Setup,
    fam: &TargetFamily,
    samples: usize,
    m_lo: u64,
    m_hi: u64,
) -> Result<AlwaysHitting> {
    if !(1 <= m_lo && m_lo < m_hi) {
        return invalid("always-hitting window needs 1 ≤ M_lo < M_hi");
    }
    let first_miss = setup.map_samples(samples, |_, x| first_miss(x, &setup.flow, &setup.lattice, fam, m_lo, m_hi))?;
    Ok(AlwaysHitting { m_lo, m_hi, first_miss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{BasePoint, GroupElement, ModelParams};
    use crate::targets::{start_point, MeasureLaw, Schedule};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn modular() -> Arc<Lattice> {
        Arc::new(Lattice::modular())
    }

    /// Direct counts by re-walking the orbit for every grid point.
    fn brute(x: &QuotientPoint, spec: &FlowSpec, lat: &Lattice, fam: &TargetFamily, grid: &[u64]) -> HitRecord {
        let mut diag = vec![];
        let mut frozen = vec![];
        for &m in grid {
            let (mut dc, mut fc) = (0, 0);
            walk_shells(x, spec, lat, m, |s, p| {
                dc += fam.membership(p, s) as u64;
                fc += fam.membership(p, m) as u64;
                Ok(())
            })
            .unwrap();
            diag.push(dc);
            frozen.push(fc);
        }
        HitRecord { sample_id: 0, m_grid: grid.to_vec(), hit_count_diag: diag, hit_count_frozen: frozen }
    }

    #[test]
    fn periodic_orbit_hits_every_step() {
        let lat = modular();
        let x = lat.reduce(&GroupElement::identity(lat.params())).unwrap();
        let spec = FlowSpec::unipotent(vec![vec![1.0]], lat.params()).unwrap();
        let i = lat.point_at(&BasePoint::Plane(Complex64::new(0.0, 1.0))).unwrap();
        let fam = TargetFamily::ball(lat.clone(), &i, Schedule::Constant(0.5)).unwrap();
        let r = hit_counts(&x, &spec, &lat, &fam, &[1, 10, 300]).unwrap();
        assert_eq!(r.hit_count_frozen, vec![1, 10, 300]);
        assert_eq!(r.hit_count_diag, vec![1, 10, 300]);
        let empty = TargetFamily::empty(lat.clone());
        let r = hit_counts(&x, &spec, &lat, &empty, &[1, 10]).unwrap();
        assert_eq!(r.hit_count_frozen, vec![0, 0]);
        assert_eq!(r.hit_count_diag, vec![0, 0]);
    }

    #[test]
    fn streaming_counts_match_brute_force() {
        let lat = modular();
        let c = lat.point_at(&lat.default_center()).unwrap();
        let fams = [
            TargetFamily::ball_with_measure(lat.clone(), &c, MeasureLaw::power(0.2, 0.5)).unwrap(),
            TargetFamily::cusp(lat.clone(), Schedule::Logarithmic { coef: 0.5, offset: 0.0 }).unwrap(),
        ];
        let diag = FlowSpec::diagonal(0.7, lat.params()).unwrap();
        let grid = [1u64, 3, 17, 64, 200];
        for fam in &fams {
            for i in 0..10 {
                let x = start_point(&lat, 9, i).unwrap();
                assert_eq!(hit_counts(&x, &diag, &lat, fam, &grid).unwrap(), brute(&x, &diag, &lat, fam, &grid));
            }
        }
        let pic = Arc::new(Lattice::picard());
        let c = pic.point_at(&pic.default_center()).unwrap();
        let fam = TargetFamily::ball_with_measure(pic.clone(), &c, MeasureLaw::power(0.1, 0.5)).unwrap();
        let spec = FlowSpec::unipotent_standard(2, ModelParams::sl2c()).unwrap();
        for i in 0..5 {
            let x = start_point(&pic, 2, i).unwrap();
            assert_eq!(hit_counts(&x, &spec, &pic, &fam, &[2, 5, 12]).unwrap(), brute(&x, &spec, &pic, &fam, &[2, 5, 12]));
        }
    }

    #[test]
    fn expectations() {
        let lat = modular();
        let fam = TargetFamily::cusp_with_measure(lat.clone(), MeasureLaw::power(0.5, 1.0)).unwrap();
        let e = cumulative_measure(&fam, &[1, 2, 4], 1).unwrap();
        assert!((e[2] - 0.5 * (1.0 + 0.5 + 1.0 / 3.0 + 0.25)).abs() < 1e-12);
        let e2 = cumulative_measure(&fam, &[2], 2).unwrap();
        assert!((e2[0] - (0.5 + 3.0 * 0.25)).abs() < 1e-12);
        let f = frozen_expectation(&fam, &[10], 1).unwrap();
        assert!((f[0] - 0.5).abs() < 1e-12);
        let i = lat.point_at(&BasePoint::Plane(Complex64::new(0.0, 1.0))).unwrap();
        let mc = TargetFamily::ball(lat.clone(), &i, Schedule::Constant(0.2)).unwrap();
        assert!(matches!(cumulative_measure(&mc, &[1], 1), Err(Error::Configuration(_))));
    }

    #[test]
    fn doubling() {
        let lat = modular();
        let fam = TargetFamily::cusp_with_measure(lat.clone(), MeasureLaw::power(0.5, 1.0)).unwrap();
        assert!((doubling_constant(&fam, 1 << 20).unwrap() - 2.0).abs() < 1e-9);
        let fast = TargetFamily::cusp(lat.clone(), Schedule::Power { scale: 1.0, exponent: -1.0 }).unwrap();
        assert!(doubling_constant(&fast, 1 << 10).unwrap() > 1e100);
    }

    #[test]
    fn always_hitting_trivial_families() {
        let lat = modular();
        let spec = FlowSpec::diagonal(1.0, lat.params()).unwrap();
        let setup = Setup::new(lat.clone(), spec, 4, 2).unwrap();
        let all = always_hitting_experiment(&setup, &TargetFamily::whole_space(lat.clone()), 10, 5, 50).unwrap();
        assert_eq!(all.fraction(), 1.0);
        let none = always_hitting_experiment(&setup, &TargetFamily::empty(lat.clone()), 10, 5, 50).unwrap();
        assert_eq!(none.fraction(), 0.0);
        assert!(none.first_miss.iter().all(|m| *m == Some(5)));
        assert!(always_hitting_experiment(&setup, &TargetFamily::empty(lat.clone()), 10, 5, 5).is_err());
    }

    #[test]
    fn always_hitting_matches_direct_window_check() {
        let lat = modular();
        let fam = TargetFamily::cusp(lat.clone(), Schedule::Logarithmic { coef: 0.6, offset: 0.0 }).unwrap();
        for spec in [
            FlowSpec::diagonal(1.0, lat.params()).unwrap(),
        ] {
            for i in 0..10 {
                let x = start_point(&lat, 6, i).unwrap();
                let got = first_miss(&x, &spec, &lat, &fam, 4, 120).unwrap();
                let mut want = None;
                for m in 4..=120 {
                    let mut hit = false;
                    walk_shells(&x, &spec, &lat, m, |_, p| {
                        hit |= fam.membership(p, m);
                        Ok(())
                    })
                    .unwrap();
                    if !hit {
                        want = Some(m);
                        break;
                    }
                }
                assert_eq!(got, want);
            }
        }
        let pic = Arc::new(Lattice::picard());
        let fam = TargetFamily::cusp(pic.clone(), Schedule::Logarithmic { coef: 0.3, offset: 0.0 }).unwrap();
        let spec = FlowSpec::unipotent_standard(2, ModelParams::sl2c()).unwrap();
        for i in 0..4 {
            let x = start_point(&pic, 6, i).unwrap();
            let got = first_miss(&x, &spec, &pic, &fam, 2, 12).unwrap();
            let mut want = None;
            for m in 2..=12 {
                let mut hit = false;
                walk_shells(&x, &spec, &pic, m, |_, p| {
                    hit |= fam.membership(p, m);
                    Ok(())
                })
                .unwrap();
                if !hit {
                    want = Some(m);
                    break;
                }
            }
            assert_eq!(got, want);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn counts_are_monotone_and_sandwiched(seed in any::<u64>()) {
            let lat = modular();
            let c = lat.point_at(&lat.default_center()).unwrap();
            let fam = TargetFamily::ball_with_measure(lat.clone(), &c, MeasureLaw::power(0.25, 0.5)).unwrap();
            let spec = FlowSpec::diagonal(1.0, lat.params()).unwrap();
            let x = start_point(&lat, seed, 0).unwrap();
            let grid: Vec<u64> = (1..=60).map(|j| j * 20).collect();
            let r = hit_counts(&x, &spec, &lat, &fam, &grid).unwrap();
            prop_assert!(r.hit_count_diag.windows(2).all(|w| w[1] >= w[0]));
            // #{k ≤ m : xg_k ∈ B_m} ≤ #{k ≤ m : xg_k ∈ B_j} for j ≤ m
            for (j, m) in [(1u64, 1200u64), (100, 400), (600, 1200)] {
                let frozen = r.hit_count_frozen[grid.iter().position(|&g| g == m).unwrap()];
                let mut with_j = 0u64;
                walk_shells(&x, &spec, &lat, m, |_, p| {
                    with_j += fam.membership(p, j) as u64;
                    Ok(())
                })
                .unwrap();
                prop_assert!(frozen <= with_j);
            }
        }
    }
}
