//! Build library objects from a validated config and run one experiment.

use std::fmt;
use std::sync::Arc;

use hyperhit::flows::FlowSpec;
use hyperhit::group::{BasePoint, GroupElement, ModelParams, Sl2C, Sl2R};
use hyperhit::lattice::{CenterProbe, Lattice, QuotientPoint};
use hyperhit::spectral::{decay_envelope_check, spherical_fn, SpectralConfig};
use hyperhit::stats::{
    always_hitting_experiment, cumulative_measure, doubling_constant, frozen_expectation, hit_count_experiment,
    loglaw_experiment, median, met_experiment, penetration_depths, qi_experiment, quantile, Setup,
};
use hyperhit::targets::{
    ball_volume, schedule_loglaw, LoglawSide, MeasureLaw, MonteCarlo, Schedule, TargetFamily,
    DEFAULT_EXACT_BALL_RADIUS, DEFAULT_MC_SAMPLES,
};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{
    Diagnostic, ExperimentConfig, ExperimentKind, FlowConfig, LatticeChoice, Severity, Shape, Side, TargetConfig,
};
use crate::output::{float_json, Aggregate, Table};

#[derive(Debug)]
pub enum RunError {
    /// The config cannot be turned into library objects (exit 2).
    Config(String),
    /// A library computation failed (exit 3).
    Numeric(hyperhit::Error),
    /// Reading or writing files failed (exit 1).
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Numeric(e) => write!(f, "numeric failure: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<hyperhit::Error> for RunError {
    fn from(e: hyperhit::Error) -> Self {
        RunError::Numeric(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

fn config_err(e: hyperhit::Error) -> RunError {
    RunError::Config(e.to_string())
}

pub struct Built {
    pub lattice: Arc<Lattice>,
    pub flow: FlowSpec,
    pub target: Option<TargetFamily>,
}

pub struct Outcome {
    pub table: Table,
    pub aggregate: Aggregate,
    /// Per-grid summaries for the meta sidecar.
    pub trend: Value,
}

pub fn build(c: &ExperimentConfig) -> Result<Built, RunError> {
    let lattice = Arc::new(match c.lattice {
        LatticeChoice::Modular => Lattice::modular(),
        LatticeChoice::Picard => Lattice::picard(),
    });
    let params = lattice.params();
    let flow = match &c.flow {
        FlowConfig::Diag { step, conjugator: None } => FlowSpec::diagonal(*step, params),
        FlowConfig::Diag { step, conjugator: Some(m) } => {
            FlowSpec::diagonal_conjugated(*step, conjugator(params, m).map_err(config_err)?)
        }
        FlowConfig::Unipotent { rank, basis: None } => FlowSpec::unipotent_standard(*rank, params),
        FlowConfig::Unipotent { basis: Some(b), .. } => FlowSpec::unipotent(b.clone(), params),
    }
    .map_err(config_err)?;
    let target = c.target.as_ref().map(|t| build_target(c, t, &lattice)).transpose()?;
    Ok(Built { lattice, flow, target })
}

fn conjugator(params: ModelParams, m: &[f64]) -> hyperhit::Result<GroupElement> {
    if params.n() == 2 {
        GroupElement::from_sl2r(Sl2R::new(m[0], m[1], m[2], m[3]))
    } else {
        let z = |i: usize| Complex64::new(m[2 * i], m[2 * i + 1]);
        GroupElement::from_sl2c(Sl2C::new(z(0), z(1), z(2), z(3)))
    }
}

fn center_point(lat: &Lattice, coords: Option<&Vec<f64>>) -> Result<QuotientPoint, RunError> {
    let base = match coords {
        None => lat.default_center(),
        Some(v) if lat.n() == 2 => BasePoint::Plane(Complex64::new(v[0], v[1])),
        Some(v) => BasePoint::Space { z: Complex64::new(v[0], v[1]), r: v[2] },
    };
    lat.point_at(&base).map_err(config_err)
}

fn build_target(c: &ExperimentConfig, t: &TargetConfig, lat: &Arc<Lattice>) -> Result<TargetFamily, RunError> {
    let mc = |fam: TargetFamily, samples: Option<usize>| {
        fam.with_monte_carlo(MonteCarlo { seed: c.seed, samples: samples.unwrap_or(DEFAULT_MC_SAMPLES) })
    };
    let fam = match t {
        TargetConfig::Ball { center, radius, radius_exponent, eta, scale, cap, mc_samples } => {
            let x0 = center_point(lat, center.as_ref())?;
            let fam = match (radius, eta) {
                (Some(r), _) => {
                    let schedule = match radius_exponent {
                        Some(e) if *e > 0.0 => Schedule::Power { scale: *r, exponent: *e },
                        _ => Schedule::Constant(*r),
                    };
                    TargetFamily::ball(lat.clone(), &x0, schedule)
                }
                (None, Some(e)) => {
                    let probe = CenterProbe::new(&x0, lat);
                    let largest = ball_volume(lat.n(), DEFAULT_EXACT_BALL_RADIUS.min(probe.inradius())) / lat.covolume();
                    let law = MeasureLaw::power(scale.unwrap_or(1.0), *e).with_cap(cap.unwrap_or(largest));
                    TargetFamily::ball_with_measure(lat.clone(), &x0, law)
                }
                (None, None) => unreachable!("validated"),
            }
            .map_err(config_err)?;
            mc(fam, *mc_samples)
        }
        TargetConfig::Cusp { height, height_exponent, eta, scale, cap } => match (height, eta) {
            (Some(y), _) => TargetFamily::cusp(
                lat.clone(),
                Schedule::Logarithmic { coef: height_exponent.unwrap_or(0.0), offset: y.ln() },
            ),
            (None, Some(e)) => {
                let mut law = MeasureLaw::power(scale.unwrap_or(1.0), *e);
                if let Some(cap) = cap {
                    law = law.with_cap(*cap);
                }
                TargetFamily::cusp_with_measure(lat.clone(), law)
            }
            (None, None) => unreachable!("validated"),
        }
        .map_err(config_err)?,
        TargetConfig::Loglaw { shape, side, epsilon, center } => {
            let side = match side {
                Side::Plus => LoglawSide::Plus,
                Side::Minus => LoglawSide::Minus,
            };
            let x0 = match shape {
                Shape::Ball => Some(center_point(lat, center.as_ref())?),
                Shape::Cusp => None,
            };
            mc(schedule_loglaw(lat.clone(), x0.as_ref(), side, *epsilon).map_err(config_err)?, None)
        }
        TargetConfig::Empty => TargetFamily::empty(lat.clone()),
        TargetConfig::Whole => TargetFamily::whole_space(lat.clone()),
    };
    Ok(fam)
}

fn warning(message: String) -> Diagnostic {
    Diagnostic { severity: Severity::Warning, message }
}

/// Warnings for configurations outside the regimes the predictions cover.
pub fn regime_warnings(c: &ExperimentConfig, b: &Built) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let kind = c.experiment;
    let counting = matches!(kind, ExperimentKind::Hits | ExperimentKind::Ah);
    if counting && b.flow.is_unipotent() && b.lattice.n() == 2 {
        out.push(warning(
            "unipotent flow on the modular surface: for n = 2 the hit-count limit is only known under a \
             stronger summability assumption than the n ≥ 3 statement"
                .into(),
        ));
    }
    let Some(fam) = &b.target else { return out };
    if !fam.is_spherical() {
        return out;
    }
    let m_max = c.m_max().max(4);
    let exact = [1, m_max].iter().all(|&m| fam.measure(m).is_ok_and(|v| v.is_exact()));
    if !exact {
        if matches!(kind, ExperimentKind::Hits | ExperimentKind::Qi) {
            out.push(warning(format!(
                "target measures beyond ball radius {:.3} are Monte Carlo estimates; `{}` needs exact measures",
                fam.exact_ball_radius(),
                kind.name()
            )));
        }
        return out;
    }
    let d = b.flow.rank() as f64;
    if kind == ExperimentKind::Hits {
        let lo = (m_max as f64).sqrt().round().max(2.0) as u64;
        let (mu_lo, mu_hi) = (fam.measure(lo).map(|v| v.value), fam.measure(m_max).map(|v| v.value));
        if let (Ok(a), Ok(z)) = (mu_lo, mu_hi) {
            let eta = if a > 0.0 && z > 0.0 { (a / z).ln() / (m_max as f64 / lo as f64).ln() } else { f64::INFINITY };
            let hd = |m: u64, mu: f64| (m as f64).powf(d) * mu;
            if eta >= d - 0.02 || hd(m_max, z) <= hd(lo, a) {
                out.push(warning(format!(
                    "m^d·μ(B_m) stays bounded on the grid (decay exponent ≈ {eta:.3}, d = {d}); the subsequence \
                     form of the hit-count asymptotic needs it unbounded"
                )));
            }
            if eta > d + 0.02 {
                out.push(warning(format!(
                    "μ(B_m) decays like m^(-{eta:.3}) with exponent above d = {d}: for almost every start the \
                     orbit eventually misses B_m entirely, so hit counts stay bounded"
                )));
            }
        }
    }
    if counting {
        if let Ok(dc) = doubling_constant(fam, m_max.min(1 << 30)) {
            if dc > 16.0 {
                out.push(warning(format!(
                    "μ(B_m)/μ(B_2m) reaches {dc:.3e}: the schedule is far from regular and the doubling \
                     assumption behind the hit-count estimates fails"
                )));
            }
        }
    }
    out
}

fn quantile_fields(agg: &mut Aggregate, prefix: &str, values: &[f64], qs: &[f64]) {
    for q in qs {
        agg.float(format!("{prefix}_q{}", (q * 100.0).round()), quantile(values, *q));
    }
}

/// Data columns written by each experiment.
pub fn columns(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::Orbit => &["sample_id", "m", "d_ball", "d_cusp"],
        ExperimentKind::Loglaw => &["sample_id", "cusp_ratio", "ball_ratio", "exact_hit"],
        ExperimentKind::Hits => &["sample_id", "m", "hit_count_diag", "hit_count_frozen"],
        ExperimentKind::Ah => &["sample_id", "first_miss", "always_hit"],
        ExperimentKind::Met => &["sample_id", "m", "beta"],
        ExperimentKind::Qi => &["sample_id", "s_n", "discrepancy"],
        ExperimentKind::Spherical => &["t", "re", "im"],
        ExperimentKind::Sample => &["sample_id", "x0", "x1", "height", "log_height"],
        ExperimentKind::Measure => &["m", "parameter", "measure", "std_error", "exact"],
    }
}

pub fn run(c: &ExperimentConfig, b: &Built) -> Result<Outcome, RunError> {
    let setup = Setup::new(b.lattice.clone(), b.flow.clone(), c.seed, c.workers)?;
    let grid = c.grid_points();
    let m_max = c.m_max();
    let target = || b.target.as_ref().expect("validated: target present");
    let qs = &c.report.quantiles;
    let mut agg = Aggregate::default();
    agg.put("experiment", c.experiment.name());
    agg.put("samples", c.samples as u64);

    let (table, trend) = match c.experiment {
        ExperimentKind::Orbit => {
            let x0 = match &c.target {
                Some(TargetConfig::Ball { center, .. }) | Some(TargetConfig::Loglaw { center, .. }) => {
                    center_point(&b.lattice, center.as_ref())?
                }
                _ => center_point(&b.lattice, None)?,
            };
            let probe = CenterProbe::new(&x0, &b.lattice);
            let series = setup.map_samples(c.samples, |_, x| penetration_depths(x, &b.flow, &b.lattice, &grid, &probe))?;
            let mut t = Table::new(columns(ExperimentKind::Orbit));
            for (i, s) in series.iter().enumerate() {
                for (j, &m) in grid.iter().enumerate() {
                    t.push(vec![(i as u64).into(), m.into(), s.d_ball[j].into(), s.d_cusp[j].into()]);
                }
            }
            let col = |j: usize, ball: bool| -> Vec<f64> {
                series.iter().map(|s| if ball { s.d_ball[j] } else { s.d_cusp[j] }).collect()
            };
            let last = grid.len() - 1;
            agg.put("m", m_max);
            agg.float("median_d_ball", median(&col(last, true)));
            agg.float("median_d_cusp", median(&col(last, false)));
            let trend = json!({
                "m": grid,
                "median_d_ball": (0..grid.len()).map(|j| float_json(median(&col(j, true)))).collect::<Vec<_>>(),
                "median_d_cusp": (0..grid.len()).map(|j| float_json(median(&col(j, false)))).collect::<Vec<_>>(),
            });
            (t, trend)
        }
        ExperimentKind::Loglaw => {
            let x0 = center_point(&b.lattice, None)?;
            let probe = CenterProbe::new(&x0, &b.lattice);
            let r = loglaw_experiment(&setup, c.samples, &grid, &probe, &[])?;
            let mut t = Table::new(columns(ExperimentKind::Loglaw));
            for s in &r.samples {
                let last = s.cusp_ratio.len() - 1;
                t.push(vec![s.sample_id.into(), s.cusp_ratio[last].into(), s.ball_ratio[last].into(), s.exact_hit.into()]);
            }
            let n = b.lattice.n() as f64;
            let cusp: Vec<f64> = r.samples.iter().map(|s| *s.cusp_ratio.last().unwrap()).collect();
            let ball: Vec<f64> = r.samples.iter().map(|s| *s.ball_ratio.last().unwrap()).collect();
            agg.put("m", m_max);
            agg.float("median_cusp_ratio", r.final_median_cusp());
            agg.float("median_ball_ratio", r.final_median_ball());
            agg.float("cusp_limit", 1.0 / (n - 1.0));
            agg.float("ball_limit", 1.0 / n);
            quantile_fields(&mut agg, "cusp_ratio", &cusp, qs);
            quantile_fields(&mut agg, "ball_ratio", &ball, qs);
            agg.put("exact_hits", r.samples.iter().filter(|s| s.exact_hit).count() as u64);
            let trend = json!({
                "m": grid,
                "median_cusp_ratio": r.median_cusp.iter().map(|v| float_json(*v)).collect::<Vec<_>>(),
                "median_ball_ratio": r.median_ball.iter().map(|v| float_json(*v)).collect::<Vec<_>>(),
            });
            (t, trend)
        }
        ExperimentKind::Hits => {
            let fam = target();
            let recs = hit_count_experiment(&setup, fam, &grid, c.samples)?;
            let mut t = Table::new(columns(ExperimentKind::Hits));
            for r in &recs {
                for (j, &m) in grid.iter().enumerate() {
                    t.push(vec![r.sample_id.into(), m.into(), r.hit_count_diag[j].into(), r.hit_count_frozen[j].into()]);
                }
            }
            let d = b.flow.rank();
            let cum = cumulative_measure(fam, &grid, d).ok();
            let frozen = frozen_expectation(fam, &grid, d).ok();
            let last = grid.len() - 1;
            let col = |j: usize, diag: bool| -> Vec<f64> {
                recs.iter().map(|r| (if diag { r.hit_count_diag[j] } else { r.hit_count_frozen[j] }) as f64).collect()
            };
            agg.put("m", m_max);
            agg.float("median_hit_count_diag", median(&col(last, true)));
            agg.float("median_hit_count_frozen", median(&col(last, false)));
            agg.opt("expected_diag", cum.as_ref().map(|v| v[last]));
            agg.opt("expected_frozen", frozen.as_ref().map(|v| v[last]));
            let ratios = |exp: &Option<Vec<f64>>, diag: bool| -> Option<Vec<f64>> {
                exp.as_ref().map(|e| col(last, diag).iter().map(|v| v / e[last]).collect())
            };
            if let Some(r) = ratios(&cum, true) {
                agg.float("median_diag_ratio", median(&r));
                quantile_fields(&mut agg, "diag_ratio", &r, qs);
            }
            if let Some(r) = ratios(&frozen, false) {
                agg.float("median_frozen_ratio", median(&r));
                quantile_fields(&mut agg, "frozen_ratio", &r, qs);
            }
            let trend = json!({
                "m": grid,
                "median_hit_count_diag": (0..grid.len()).map(|j| float_json(median(&col(j, true)))).collect::<Vec<_>>(),
                "median_hit_count_frozen": (0..grid.len()).map(|j| float_json(median(&col(j, false)))).collect::<Vec<_>>(),
                "expected_diag": cum.map(|v| v.into_iter().map(float_json).collect::<Vec<_>>()),
                "expected_frozen": frozen.map(|v| v.into_iter().map(float_json).collect::<Vec<_>>()),
            });
            (t, trend)
        }
        ExperimentKind::Ah => {
            let [lo, hi] = c.window.expect("validated");
            let r = always_hitting_experiment(&setup, target(), c.samples, lo, hi)?;
            let mut t = Table::new(columns(ExperimentKind::Ah));
            for (i, f) in r.first_miss.iter().enumerate() {
                t.push(vec![(i as u64).into(), (*f).into(), f.is_none().into()]);
            }
            agg.put("window_lo", lo);
            agg.put("window_hi", hi);
            agg.float("fraction", r.fraction());
            let mut horizons: Vec<u64> = (0..64).map(|j| 1u64 << j).filter(|&h| h > lo && h < hi).collect();
            horizons.push(hi);
            let trend = json!({
                "horizon": horizons,
                "fraction": horizons.iter().map(|&h| float_json(r.fraction_through(h))).collect::<Vec<_>>(),
            });
            (t, trend)
        }
        ExperimentKind::Met => {
            let est = met_experiment(&setup, target(), &grid, c.samples)?;
            let mut t = Table::new(columns(ExperimentKind::Met));
            for (i, row) in est.betas.iter().enumerate() {
                for (j, &m) in grid.iter().enumerate() {
                    t.push(vec![(i as u64).into(), m.into(), row[j].into()]);
                }
            }
            let rho = b.lattice.params().rho();
            let spectral = if c.report.exceptional_exponents.is_empty() {
                SpectralConfig::tempered(rho)
            } else {
                SpectralConfig::new(c.report.exceptional_exponents.clone(), rho).map_err(config_err)?
            };
            let last = grid.len() - 1;
            agg.float("mu_f", est.mu_f);
            agg.opt("kappa", est.kappa());
            agg.opt("kappa_lo", est.kappa_interval().map(|i| i.0));
            agg.opt("kappa_hi", est.kappa_interval().map(|i| i.1));
            agg.float("predicted_kappa", spectral.predicted_kappa(&b.flow));
            agg.put("m", m_max);
            agg.float("norm", est.norms[last].0);
            agg.float("norm_se", est.norms[last].1);
            agg.float("atypical_fraction", est.atypical_fractions[last]);
            agg.float("empty_fraction", est.empty_fractions[last]);
            let f = |v: Vec<f64>| v.into_iter().map(float_json).collect::<Vec<_>>();
            let trend = json!({
                "m": grid,
                "norm": f(est.norms.iter().map(|n| n.0).collect()),
                "norm_se": f(est.norms.iter().map(|n| n.1).collect()),
                "mean": f(est.means.iter().map(|n| n.0).collect()),
                "mean_se": f(est.means.iter().map(|n| n.1).collect()),
                "atypical_fraction": f(est.atypical_fractions.clone()),
                "empty_fraction": f(est.empty_fractions.clone()),
            });
            (t, trend)
        }
        ExperimentKind::Qi => {
            let [lo, hi] = c.window.expect("validated");
            let q = qi_experiment(&setup, target(), (lo, hi), c.samples)?;
            let power = c.report.discrepancy_power;
            let disc = q.discrepancy(power);
            let mut t = Table::new(columns(ExperimentKind::Qi));
            for (i, (s, dv)) in q.s_samples.iter().zip(&disc).enumerate() {
                t.push(vec![(i as u64).into(), (*s).into(), (*dv).into()]);
            }
            agg.put("window_lo", lo);
            agg.put("window_hi", hi);
            agg.float("sum_abs_r", q.sum_abs_r);
            agg.float("sum_mu", q.sum_mu);
            agg.float("ratio", q.ratio());
            agg.float("e_total", q.e_total);
            agg.float("discrepancy_power", power);
            agg.float("median_discrepancy", median(&disc));
            agg.float("fraction_discrepancy_le_1", disc.iter().filter(|v| **v <= 1.0).count() as f64 / disc.len() as f64);
            let trend = json!({
                "m": (lo..=hi).collect::<Vec<_>>(),
                "row_sums": q.row_sums.iter().map(|v| float_json(*v)).collect::<Vec<_>>(),
            });
            (t, trend)
        }
        ExperimentKind::Spherical => {
            let sc = &c.spherical;
            let s = Complex64::new(sc.s[0], sc.s[1]);
            let n = sc.n.unwrap_or(b.lattice.n());
            let [t0, t1] = sc.t_range;
            let ts: Vec<f64> = (0..sc.t_steps)
                .map(|i| if sc.t_steps == 1 { t0 } else { t0 + (t1 - t0) * i as f64 / (sc.t_steps - 1) as f64 })
                .collect();
            let mut t = Table::new(columns(ExperimentKind::Spherical));
            for &tv in &ts {
                let v = spherical_fn(s, tv, n)?;
                t.push(vec![tv.into(), v.re.into(), v.im.into()]);
            }
            agg.float("s_re", s.re);
            agg.float("s_im", s.im);
            agg.put("n", n as u64);
            let envelope_grid: Vec<f64> = ts.iter().copied().filter(|t| (1.0..=40.0).contains(t)).collect();
            let env = if envelope_grid.len() >= 2 { Some(decay_envelope_check(s, &envelope_grid, n)?) } else { None };
            agg.opt("decay_exponent", env.as_ref().and_then(|e| e.exponent()));
            agg.opt("envelope_constant", env.map(|e| e.constant));
            (t, Value::Null)
        }
        ExperimentKind::Sample => {
            let pts = setup.map_samples(c.samples, |_, x| Ok(x.clone()))?;
            let mut t = Table::new(columns(ExperimentKind::Sample));
            for (i, p) in pts.iter().enumerate() {
                let (x0, x1) = match p.base_point() {
                    BasePoint::Plane(z) => (z.re, None),
                    BasePoint::Space { z, .. } => (z.re, Some(z.im)),
                    BasePoint::Hyperboloid(_) => unreachable!("quotients use SL2 models"),
                };
                t.push(vec![(i as u64).into(), x0.into(), x1.into(), p.height().into(), p.log_height().into()]);
            }
            let lh: Vec<f64> = pts.iter().map(|p| p.log_height()).collect();
            agg.float("mean_log_height", lh.iter().sum::<f64>() / lh.len() as f64);
            quantile_fields(&mut agg, "log_height", &lh, qs);
            (t, Value::Null)
        }
        ExperimentKind::Measure => {
            let fam = target();
            let mut t = Table::new(columns(ExperimentKind::Measure));
            for &m in &grid {
                let v = fam.measure(m)?;
                t.push(vec![m.into(), fam.parameter(m).into(), v.value.into(), v.std_error.into(), v.is_exact().into()]);
            }
            let last = fam.measure(m_max)?;
            agg.put("m", m_max);
            agg.float("measure", last.value);
            agg.float("m_d_measure", (m_max as f64).powi(b.flow.rank() as i32) * last.value);
            agg.opt("doubling_constant", doubling_constant(fam, m_max).ok());
            (t, Value::Null)
        }
    };
    agg.put("rows", table.rows.len() as u64);
    Ok(Outcome { table, aggregate: agg, trend })
}
