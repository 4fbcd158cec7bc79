//! Shrinking target families B_m and Haar sampling of Γ\G.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::group::{make_diag, make_unipotent, random_k, BasePoint};
use crate::lattice::{CenterProbe, Lattice, LatticeName, QuotientPoint};
use crate::quadrature::{integrate, Tolerance};
use crate::rng::{stream, Purpose};

/// Default radius below which ball measures are computed from the volume formula.
pub const DEFAULT_EXACT_BALL_RADIUS: f64 = 0.3;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

/// Measure law μ(m) = min(cap, scale · m^{−exponent}).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureLaw {
    pub scale: f64,
    pub exponent: f64,
    pub cap: f64,
}

impl MeasureLaw {
    pub fn power(scale: f64, exponent: f64) -> Self {
        Self { scale, exponent, cap: 1.0 }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    pub fn at(&self, m: u64) -> f64 {
        (self.scale * (m.max(1) as f64).powf(-self.exponent)).min(self.cap)
    }
}

/// Parameter schedule m ↦ value: a ball radius or a cusp log-height.
#[derive(Clone)]
pub enum Schedule {
    Constant(f64),
    /// scale · m^{−exponent}
    Power { scale: f64, exponent: f64 },
    /// coef · ln m + offset
    Logarithmic { coef: f64, offset: f64 },
    /// Radius of a ball with the prescribed measure.
    BallForMeasure { law: MeasureLaw, n: usize, covolume: f64 },
    /// Log-height of a cusp set with the prescribed measure.
    CuspForMeasure { law: MeasureLaw, n: usize, covolume: f64 },
    Custom(Arc<dyn Fn(u64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(v) => write!(f, "Constant({v})"),
            Schedule::Power { scale, exponent } => write!(f, "Power({scale}·m^-{exponent})"),
            Schedule::Logarithmic { coef, offset } => write!(f, "Logarithmic({coef}·ln m + {offset})"),
            Schedule::BallForMeasure { law, .. } => write!(f, "BallForMeasure({law:?})"),
            Schedule::CuspForMeasure { law, .. } => write!(f, "CuspForMeasure({law:?})"),
            Schedule::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Schedule {
    pub fn at(&self, m: u64) -> f64 {
        let mf = m.max(1) as f64;
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Power { scale, exponent } => scale * mf.powf(-exponent),
            Schedule::Logarithmic { coef, offset } => coef * mf.ln() + offset,
            Schedule::BallForMeasure { law, n, covolume } => ball_radius_for_volume(*n, law.at(m) * covolume),
            Schedule::CuspForMeasure { law, n, covolume } => {
                cusp_log_height_for_volume(*n, law.at(m) * covolume).max(0.0)
            }
            Schedule::Custom(f) => f(m),
        }
    }

    /// Check monotonicity on a dyadic grid up to 2⁴⁰.
    fn check_monotone(&self, nonincreasing: bool) -> Result<()> {
        let mut prev = self.at(1);
        for j in 0..=160u32 {
            let m = (2f64.powf(j as f64 / 4.0)).round() as u64;
            let v = self.at(m);
            if !v.is_finite() {
                return invalid(format!("schedule value at m = {m} is not finite"));
            }
            let bad = if nonincreasing { v > prev } else { v < prev };
            if bad {
                return invalid(format!("schedule is not monotone at m = {m}; targets must be nested"));
            }
            prev = v;
        }
        Ok(())
    }
}

/// sinh x − x without cancellation for small x.
fn sinh_minus_x(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let x2 = x * x;
        x * x2 / 6.0 * (1.0 + x2 / 20.0 * (1.0 + x2 / 42.0 * (1.0 + x2 / 72.0 * (1.0 + x2 / 110.0))))
    } else {
        x.sinh() - x
    }
}

/// Hyperbolic volume of a ball of radius r in ℍⁿ, n ∈ {2, 3}.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    match n {
        2 => 4.0 * std::f64::consts::PI * (0.5 * r).sinh().powi(2),
        _ => std::f64::consts::PI * sinh_minus_x(2.0 * r),
    }
}

fn ball_radius_for_volume(n: usize, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    match n {
        2 => 2.0 * (v / (4.0 * std::f64::consts::PI)).sqrt().asinh(),
        _ => {
            // Newton on π(sinh 2r − 2r) = v, derivative 4π sinh² r.
            let mut r = (3.0 * v / (4.0 * std::f64::consts::PI)).cbrt();
            for _ in 0..60 {
                let f = ball_volume(3, r) - v;
                let step = f / (4.0 * std::f64::consts::PI * r.sinh().powi(2));
                r -= step;
                if step.abs() <= 1e-15 * r {
                    break;
                }
            }
            r
        }
    }
}

/// Volume of {height ≥ Y} over the rectangle of the domain, valid for Y ≥ 1.
fn cusp_volume_above(n: usize, y: f64) -> f64 {
    match n {
        2 => 1.0 / y,
        _ => 0.25 / (y * y),
    }
}

fn cusp_log_height_for_volume(n: usize, v: f64) -> f64 {
    match n {
        2 => -v.ln(),
        _ => -0.5 * (4.0 * v).ln(),
    }
}

/// Exact hyperbolic volume of {height ≥ Y} inside the fundamental domain.
pub fn exact_cusp_volume(lat: &Lattice, y: f64) -> f64 {
    if y >= 1.0 {
        return cusp_volume_above(lat.n(), y);
    }
    match lat.name() {
        LatticeName::Modular => {
            // ∫ 1/max(Y, √(1−x²)) dx, split at the kink |x| = √(1−Y²).
            let k = (1.0 - y * y).max(0.0).sqrt().min(0.5);
            2.0 * (0.5 - k) / y + 2.0 * k.asin()
        }
        LatticeName::Picard => {
            let inner = |x: f64| {
                let f = |t: f64| 0.5 / (1.0 - x * x - t * t).max(y * y);
                let kink = (1.0 - y * y - x * x).max(0.0).sqrt().min(0.5);
                let tol = Tolerance::relative(1e-12);
                let a = integrate(f, 0.0, kink, tol).map(|e| e.value).unwrap_or(0.0);
                let b = integrate(f, kink, 0.5, tol).map(|e| e.value).unwrap_or(0.0);
                a + b
            };
            let kx = (1.0 - y * y).max(0.0).sqrt().min(0.5);
            let mut total = 0.0;
            for (a, b) in [(-0.5, -kx), (-kx, kx), (kx, 0.5)] {
                if b > a {
                    total += integrate(inner, a, b, Tolerance::relative(1e-11)).expect("smooth").value;
                }
            }
            total
        }
    }
}

/// Law of the height of a Haar-random point: P(height ≥ y) = vol{height ≥ y}/covolume.
#[derive(Clone, Debug)]
pub struct HeightLaw {
    floor: f64,
    covolume: f64,
    n: usize,
    /// Tail volumes on a uniform grid over [floor, 1]; empty when a closed form exists.
    table: Vec<f64>,
    exact: Option<LatticeName>,
}

impl HeightLaw {
    pub fn new(lat: &Lattice) -> Self {
        let floor = lat.min_height();
        let table = match lat.name() {
            LatticeName::Modular => Vec::new(),
            LatticeName::Picard => {
                let k = 4096;
                (0..=k).map(|j| exact_cusp_volume(lat, floor + (1.0 - floor) * j as f64 / k as f64)).collect()
            }
        };
        let exact = (lat.name() == LatticeName::Modular).then_some(LatticeName::Modular);
        Self { floor, covolume: lat.covolume(), n: lat.n(), table, exact }
    }

    pub fn tail(&self, y: f64) -> f64 {
        if y <= self.floor {
            return 1.0;
        }
        let v = if y >= 1.0 {
            cusp_volume_above(self.n, y)
        } else if self.exact.is_some() {
            let k = (1.0 - y * y).sqrt().min(0.5);
            2.0 * (0.5 - k) / y + 2.0 * k.asin()
        } else {
            let pos = (y - self.floor) / (1.0 - self.floor) * (self.table.len() - 1) as f64;
            let j = (pos.floor() as usize).min(self.table.len() - 2);
            let w = pos - j as f64;
            self.table[j] * (1.0 - w) + self.table[j + 1] * w
        };
        (v / self.covolume).min(1.0)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        1.0 - self.tail(y)
    }
}

/// μ of a target at one index, with a standard error for Monte Carlo values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measure {
    pub value: f64,
    /// None for exact values.
    pub std_error: Option<f64>,
}

impl Measure {
    fn exact(value: f64) -> Self {
        Self { value, std_error: None }
    }

    pub fn is_exact(&self) -> bool {
        self.std_error.is_none()
    }
}

#[derive(Clone)]
pub enum CustomMeasure {
    Known(Arc<dyn Fn(u64) -> f64 + Send + Sync>),
    Estimate,
}

pub type Membership = Arc<dyn Fn(&QuotientPoint, u64) -> bool + Send + Sync>;

#[derive(Clone)]
pub enum TargetKind {
    Ball { probe: CenterProbe, radius: Schedule, outer: f64 },
    /// {cusp_height ≥ ln Y(m)}; the schedule gives ln Y.
    CuspHeight { log_height: Schedule },
    Custom { membership: Membership, measure: CustomMeasure },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarlo {
    pub seed: u64,
    pub samples: usize,
}

#[derive(Clone)]
pub struct TargetFamily {
    kind: TargetKind,
    lattice: Arc<Lattice>,
    exact_ball_radius: f64,
    monte_carlo: Option<MonteCarlo>,
}

impl fmt::Debug for TargetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            TargetKind::Ball { probe, radius, .. } => {
                write!(f, "Ball(center={:?}, r={radius:?})", probe.base())
            }
            TargetKind::CuspHeight { log_height } => write!(f, "CuspHeight(lnY={log_height:?})"),
            TargetKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoglawSide {
    /// exponent 1 + ε
    Plus,
    /// exponent 1 − ε
    Minus,
}

impl TargetFamily {
    pub fn ball(lattice: Arc<Lattice>, center: &QuotientPoint, radius: Schedule) -> Result<Self> {
        radius.check_monotone(true)?;
        if radius.at(1) < 0.0 {
            return invalid("ball radius must be ≥ 0");
        }
        let probe = CenterProbe::new(center, &lattice);
        let exact_ball_radius = DEFAULT_EXACT_BALL_RADIUS.min(probe.inradius());
        let outer = radius.at(1);
        Ok(Self {
            kind: TargetKind::Ball { probe, radius, outer },
            lattice,
            exact_ball_radius,
            monte_carlo: Some(MonteCarlo { seed: 0, samples: DEFAULT_MC_SAMPLES }),
        })
    }

    /// Balls whose radii realize μ(B_m) = law(m) exactly.
    pub fn ball_with_measure(lattice: Arc<Lattice>, center: &QuotientPoint, law: MeasureLaw) -> Result<Self> {
        let probe = CenterProbe::new(center, &lattice);
        let r_max = DEFAULT_EXACT_BALL_RADIUS.min(probe.inradius());
        let mu_max = ball_volume(lattice.n(), r_max) / lattice.covolume();
        if law.at(1) > mu_max * (1.0 + 1e-12) {
            return invalid(format!(
                "measure law starts at {:.4} but exact balls at this center hold at most {:.4}; lower the cap",
                law.at(1),
                mu_max
            ));
        }
        let schedule = Schedule::BallForMeasure { law, n: lattice.n(), covolume: lattice.covolume() };
        Self::ball(lattice, center, schedule)
    }

    pub fn cusp(lattice: Arc<Lattice>, log_height: Schedule) -> Result<Self> {
        log_height.check_monotone(false)?;
        Ok(Self {
            kind: TargetKind::CuspHeight { log_height },
            lattice,
            exact_ball_radius: 0.0,
            monte_carlo: Some(MonteCarlo { seed: 0, samples: DEFAULT_MC_SAMPLES }),
        })
    }

    /// Cusp sets realizing μ(B_m) = law(m); heights are clamped at Y ≥ 1.
    pub fn cusp_with_measure(lattice: Arc<Lattice>, law: MeasureLaw) -> Result<Self> {
        let schedule = Schedule::CuspForMeasure { law, n: lattice.n(), covolume: lattice.covolume() };
        Self::cusp(lattice, schedule)
    }

    pub fn custom(lattice: Arc<Lattice>, membership: Membership, measure: CustomMeasure) -> Self {
        Self {
            kind: TargetKind::Custom { membership, measure },
            lattice,
            exact_ball_radius: 0.0,
            monte_carlo: None,
        }
    }

    pub fn whole_space(lattice: Arc<Lattice>) -> Self {
        Self::custom(lattice, Arc::new(|_, _| true), CustomMeasure::Known(Arc::new(|_| 1.0)))
    }

    pub fn empty(lattice: Arc<Lattice>) -> Self {
        Self::custom(lattice, Arc::new(|_, _| false), CustomMeasure::Known(Arc::new(|_| 0.0)))
    }

    /// Monte Carlo settings used where no exact measure exists.
    pub fn with_monte_carlo(mut self, mc: MonteCarlo) -> Self {
        self.monte_carlo = Some(mc);
        self
    }

    /// Largest radius for which ball measures use the volume formula.
    pub fn with_exact_ball_radius(mut self, r: f64) -> Self {
        if let TargetKind::Ball { probe, .. } = &self.kind {
            self.exact_ball_radius = r.min(probe.inradius());
        }
        self
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn exact_ball_radius(&self) -> f64 {
        self.exact_ball_radius
    }

    /// Ball radius r(m) or cusp log-height ln Y(m); NaN for custom families.
    pub fn parameter(&self, m: u64) -> f64 {
        match &self.kind {
            TargetKind::Ball { radius, .. } => radius.at(m),
            TargetKind::CuspHeight { log_height } => log_height.at(m),
            TargetKind::Custom { .. } => f64::NAN,
        }
    }

    pub fn is_spherical(&self) -> bool {
        !matches!(self.kind, TargetKind::Custom { .. })
    }

    #[inline]
    pub fn membership(&self, p: &QuotientPoint, m: u64) -> bool {
        match &self.kind {
            TargetKind::Ball { probe, radius, outer } => {
                probe.distance_below(p, *outer).is_some_and(|d| d < radius.at(m))
            }
            TargetKind::CuspHeight { log_height } => p.log_height() >= log_height.at(m),
            TargetKind::Custom { membership, .. } => membership(p, m),
        }
    }

    /// Largest m ≤ m_max with p ∈ B_m, or 0 when p ∉ B_1. Uses nesting.
    pub fn depth(&self, p: &QuotientPoint, m_max: u64) -> u64 {
        let inside: Box<dyn Fn(u64) -> bool + '_> = match &self.kind {
            TargetKind::Ball { probe, radius, outer } => match probe.distance_below(p, *outer) {
                None => return 0,
                Some(d) => Box::new(move |m| d < radius.at(m)),
            },
            TargetKind::CuspHeight { log_height } => {
                let h = p.log_height();
                Box::new(move |m| h >= log_height.at(m))
            }
            TargetKind::Custom { membership, .. } => Box::new(move |m| membership(p, m)),
        };
        if !inside(1) {
            return 0;
        }
        if inside(m_max) {
            return m_max;
        }
        let (mut lo, mut hi) = (1u64, m_max);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if inside(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// μ(B_m): exact when a formula applies, otherwise Monte Carlo.
    pub fn measure(&self, m: u64) -> Result<Measure> {
        match &self.kind {
            TargetKind::CuspHeight { log_height } => {
                let y = log_height.at(m).exp();
                Ok(Measure::exact(exact_cusp_volume(&self.lattice, y) / self.lattice.covolume()))
            }
            TargetKind::Ball { radius, .. } => {
                let r = radius.at(m);
                if r <= self.exact_ball_radius {
                    Ok(Measure::exact(ball_volume(self.lattice.n(), r) / self.lattice.covolume()))
                } else {
                    self.estimate_measure(m)
                }
            }
            TargetKind::Custom { measure: CustomMeasure::Known(f), .. } => Ok(Measure::exact(f(m))),
            TargetKind::Custom { measure: CustomMeasure::Estimate, .. } => self.estimate_measure(m),
        }
    }

    fn estimate_measure(&self, m: u64) -> Result<Measure> {
        let mc = self.monte_carlo.ok_or_else(|| {
            Error::Configuration("target declares an estimated measure but no Monte Carlo sampler is configured".into())
        })?;
        let mut sampler = HaarSampler::for_stream(self.lattice.clone(), mc.seed, Purpose::MeasureEstimate, m);
        let mut hits = 0usize;
        for _ in 0..mc.samples {
            if self.membership(&sampler.sample_one()?, m) {
                hits += 1;
            }
        }
        let p = hits as f64 / mc.samples as f64;
        Ok(Measure { value: p, std_error: Some((p * (1.0 - p) / mc.samples as f64).sqrt()) })
    }
}

/// Log-law schedules r_m = m^{−(1±ε)/n} for balls and
/// ln Y_m = (1±ε) ln m/(n−1) for the cusp.
pub fn schedule_loglaw(
    lattice: Arc<Lattice>,
    center: Option<&QuotientPoint>,
    side: LoglawSide,
    epsilon: f64,
) -> Result<TargetFamily> {
    if !(0.0..1.0).contains(&epsilon) {
        return invalid(format!("log-law epsilon must lie in [0, 1), got {epsilon}"));
    }
    let e = match side {
        LoglawSide::Plus => 1.0 + epsilon,
        LoglawSide::Minus => 1.0 - epsilon,
    };
    let n = lattice.n() as f64;
    match center {
        Some(c) => TargetFamily::ball(lattice, c, Schedule::Power { scale: 1.0, exponent: e / n }),
        None => TargetFamily::cusp(lattice, Schedule::Logarithmic { coef: e / (n - 1.0), offset: 0.0 }),
    }
}

/// Rejection sampler for the Haar probability measure on Γ\G.
#[derive(Clone, Debug)]
pub struct HaarSampler {
    lattice: Arc<Lattice>,
    rng: ChaCha8Rng,
    seed: u64,
    attempts: u64,
    accepted: u64,
}

impl HaarSampler {
    pub fn new(lattice: Arc<Lattice>, seed: u64) -> Self {
        Self::for_stream(lattice, seed, Purpose::StartPoint, 0)
    }

    pub fn for_stream(lattice: Arc<Lattice>, seed: u64, purpose: Purpose, index: u64) -> Self {
        Self { lattice, rng: stream(seed, purpose, index), seed, attempts: 0, accepted: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.attempts as f64
    }

    pub fn sample_one(&mut self) -> Result<QuotientPoint> {
        let lat = self.lattice.clone();
        let params = lat.params();
        let floor = lat.min_height();
        loop {
            self.attempts += 1;
            if self.attempts >= 1000 && (self.accepted as f64) < 0.01 * self.attempts as f64 {
                return Err(Error::Configuration(format!(
                    "Haar rejection sampler acceptance rate {:.4} is below 1%",
                    self.acceptance_rate()
                )));
            }
            let u = 1.0 - self.rng.random::<f64>();
            let (base, x) = match lat.name() {
                LatticeName::Modular => {
                    let x = self.rng.random::<f64>() - 0.5;
                    let y = floor / u;
                    (BasePoint::Plane(Complex64::new(x, y)), vec![x])
                }
                LatticeName::Picard => {
                    let x1 = self.rng.random::<f64>() - 0.5;
                    let x2 = 0.5 * self.rng.random::<f64>();
                    let r = floor / u.sqrt();
                    (BasePoint::Space { z: Complex64::new(x1, x2), r }, vec![x1, x2])
                }
            };
            if !lat.domain_contains(&base, 0.0) {
                continue;
            }
            self.accepted += 1;
            let k = random_k(params, &mut self.rng);
            let g = make_unipotent(&x, params)?.mul(&make_diag(base.height().ln(), params)?).mul(&k);
            return lat.reduce_quiet(&g);
        }
    }

    pub fn haar_sample(&mut self, count: usize) -> Result<Vec<QuotientPoint>> {
        if count == 0 {
            return invalid("sample count must be ≥ 1");
        }
        (0..count).map(|_| self.sample_one()).collect()
    }
}

/// Start point for sample `index` of an experiment with the given master seed.
pub fn start_point(lattice: &Arc<Lattice>, seed: u64, index: u64) -> Result<QuotientPoint> {
    HaarSampler::for_stream(lattice.clone(), seed, Purpose::StartPoint, index).sample_one()
}
