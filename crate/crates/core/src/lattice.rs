//! The modular group PSL(2,ℤ) acting on ℍ² and the Picard group
//! PSL(2,ℤ[i]) acting on ℍ³: reduction into the classical fundamental
//! domains, quotient distance and cusp height.

use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{BasePoint, GroupElement, Matrix, ModelParams, Sl2C, Sl2R};
use crate::quadrature::{integrate, Tolerance};

/// Guard against runaway reductions.
pub const MAX_REDUCTION_MOVES: usize = 1_000_000;
/// Slack when testing membership of the closed fundamental domain.
pub const DOMAIN_TOL: f64 = 1e-9;
const INVERT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeName {
    Modular,
    Picard,
}

/// One step of a reduction word, applied on the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    /// Translation z ↦ z − (re + i·im).
    Translate { re: i64, im: i64 },
    /// z ↦ −z (Picard only).
    Unit,
    /// The inversion S.
    Invert,
}

#[derive(Clone, Debug)]
pub struct Lattice {
    name: LatticeName,
    params: ModelParams,
    generators: Vec<GroupElement>,
    covolume: f64,
    word_radius: usize,
    word_ball: Vec<GroupElement>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuotientPoint {
    rep: GroupElement,
    word_log: Option<Vec<Move>>,
}

impl QuotientPoint {
    pub fn rep(&self) -> &GroupElement {
        &self.rep
    }

    pub fn word_log(&self) -> Option<&[Move]> {
        self.word_log.as_deref()
    }

    pub fn base_point(&self) -> BasePoint {
        self.rep.base_point()
    }

    pub(crate) fn rep_mut(&mut self) -> &mut GroupElement {
        &mut self.rep
    }

    /// Height y of the reduced representative.
    pub fn height(&self) -> f64 {
        self.log_height().exp()
    }

    /// ln y, evaluated without squaring so that deep cusp excursions
    /// stay finite.
    pub fn log_height(&self) -> f64 {
        match self.rep.matrix() {
            Matrix::Real(m) => -2.0 * m.c.hypot(m.d).ln(),
            Matrix::Complex(m) => -2.0 * m.c.norm().hypot(m.d.norm()).ln(),
            Matrix::Lorentz(_) => self.base_point().height().ln(),
        }
    }
}

fn t_real(x: f64) -> Sl2R {
    Sl2R::new(1.0, x, 0.0, 1.0)
}

fn t_complex(w: Complex64) -> Sl2C {
    let one = Complex64::new(1.0, 0.0);
    Sl2C::new(one, w, Complex64::new(0.0, 0.0), one)
}

fn s_real() -> Sl2R {
    Sl2R::new(0.0, -1.0, 1.0, 0.0)
}

fn s_complex() -> Sl2C {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    Sl2C::new(zero, -one, one, zero)
}

fn u_complex() -> Sl2C {
    let zero = Complex64::new(0.0, 0.0);
    Sl2C::new(Complex64::i(), zero, zero, -Complex64::i())
}

static MODULAR_COVOLUME: OnceLock<f64> = OnceLock::new();
static PICARD_COVOLUME: OnceLock<f64> = OnceLock::new();

/// Hyperbolic area of the modular domain: ∫_{−½}^{½} ∫_{√(1−x²)}^∞ dy/y² dx.
fn modular_covolume() -> f64 {
    *MODULAR_COVOLUME.get_or_init(|| {
        integrate(|x| 1.0 / (1.0 - x * x).sqrt(), -0.5, 0.5, Tolerance::relative(1e-14))
            .expect("smooth integrand")
            .value
    })
}

/// Hyperbolic volume of the Picard domain: the r-integral of dr/r³ above the
/// unit sphere leaves ∫∫ 1/(2(1 − |z|²)) over the rectangle [−½,½]×[0,½].
fn picard_covolume() -> f64 {
    *PICARD_COVOLUME.get_or_init(|| {
        let inner = |x: f64| {
            integrate(|y| 0.5 / (1.0 - x * x - y * y), 0.0, 0.5, Tolerance::relative(1e-14))
                .expect("smooth integrand")
                .value
        };
        integrate(inner, -0.5, 0.5, Tolerance::relative(1e-13)).expect("smooth integrand").value
    })
}

impl Lattice {
    pub fn new(name: LatticeName) -> Self {
        Self::with_word_radius(name, 2)
    }

    pub fn modular() -> Self {
        Self::new(LatticeName::Modular)
    }

    pub fn picard() -> Self {
        Self::new(LatticeName::Picard)
    }

    /// Lattice whose quotient distance searches translates by words of
    /// length ≤ `radius` in the generators.
    pub fn with_word_radius(name: LatticeName, radius: usize) -> Self {
        let (params, generators, covolume) = match name {
            LatticeName::Modular => (
                ModelParams::sl2r(),
                vec![GroupElement::real_unchecked(t_real(1.0)), GroupElement::real_unchecked(s_real())],
                modular_covolume(),
            ),
            LatticeName::Picard => (
                ModelParams::sl2c(),
                vec![
                    GroupElement::complex_unchecked(t_complex(Complex64::new(1.0, 0.0))),
                    GroupElement::complex_unchecked(t_complex(Complex64::new(0.0, 1.0))),
                    GroupElement::complex_unchecked(s_complex()),
                    GroupElement::complex_unchecked(u_complex()),
                ],
                picard_covolume(),
            ),
        };
        let word_ball = build_word_ball(&generators, radius);
        Self { name, params, generators, covolume, word_radius: radius, word_ball }
    }

    pub fn name(&self) -> LatticeName {
        self.name
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn generators(&self) -> &[GroupElement] {
        &self.generators
    }

    /// Hyperbolic volume of Γ\ℍⁿ, the normalizer of the probability measure.
    pub fn covolume(&self) -> f64 {
        self.covolume
    }

    pub fn word_radius(&self) -> usize {
        self.word_radius
    }

    /// Distinct elements (up to sign) of word length ≤ the word radius,
    /// identity first.
    pub fn word_ball(&self) -> &[GroupElement] {
        &self.word_ball
    }

    /// Smallest height attained on the fundamental domain.
    pub fn min_height(&self) -> f64 {
        match self.name {
            LatticeName::Modular => 3f64.sqrt() / 2.0,
            LatticeName::Picard => 0.5f64.sqrt(),
        }
    }

    /// Closed fundamental-domain predicate with slack `tol`.
    pub fn domain_contains(&self, p: &BasePoint, tol: f64) -> bool {
        match (self.name, p) {
            (LatticeName::Modular, BasePoint::Plane(z)) => {
                z.im > 0.0 && z.re.abs() <= 0.5 + tol && z.norm_sqr() >= 1.0 - tol
            }
            (LatticeName::Picard, BasePoint::Space { z, r }) => {
                *r > 0.0
                    && z.re.abs() <= 0.5 + tol
                    && z.im >= -tol
                    && z.im <= 0.5 + tol
                    && z.norm_sqr() + r * r >= 1.0 - tol
            }
            _ => false,
        }
    }

    /// Lower bound for the distance from an interior point to the boundary
    /// of the fundamental domain (distance to the walls' full geodesic
    /// hyperplanes); zero on or outside the boundary.
    pub fn inradius_at(&self, p: &BasePoint) -> f64 {
        if !self.domain_contains(p, 0.0) {
            return 0.0;
        }
        let s = match (self.name, p) {
            (LatticeName::Modular, BasePoint::Plane(z)) => {
                let walls = (0.5 - z.re.abs()) / z.im;
                let circle = (z.norm_sqr() - 1.0) / (2.0 * z.im);
                walls.min(circle)
            }
            (LatticeName::Picard, BasePoint::Space { z, r }) => {
                let re = (0.5 - z.re.abs()) / r;
                let im = z.im.min(0.5 - z.im) / r;
                let sphere = (z.norm_sqr() + r * r - 1.0) / (2.0 * r);
                re.min(im).min(sphere)
            }
            _ => 0.0,
        };
        s.max(0.0).asinh()
    }

    /// Reduce g into the fundamental domain, recording the moves.
    pub fn reduce(&self, g: &GroupElement) -> Result<QuotientPoint> {
        let mut log = Vec::new();
        let rep = self.reduce_impl(g, Some(&mut log))?;
        Ok(QuotientPoint { rep, word_log: Some(log) })
    }

    /// Reduce without keeping the move log.
    pub fn reduce_quiet(&self, g: &GroupElement) -> Result<QuotientPoint> {
        Ok(QuotientPoint { rep: self.reduce_impl(g, None)?, word_log: None })
    }

    fn reduce_impl(&self, g: &GroupElement, log: Option<&mut Vec<Move>>) -> Result<GroupElement> {
        if g.params() != self.params {
            return Err(Error::InvalidArgument(format!(
                "{:?} lattice expects elements of model {:?}",
                self.name,
                self.params.model()
            )));
        }
        let mut h = g.clone();
        self.reduce_in_place(&mut h, log)?;
        Ok(h)
    }

    pub(crate) fn reduce_in_place(&self, g: &mut GroupElement, log: Option<&mut Vec<Move>>) -> Result<usize> {
        match g.matrix_mut() {
            Matrix::Real(m) => reduce_modular(m, log),
            Matrix::Complex(m) => reduce_picard(m, log),
            Matrix::Lorentz(_) => Err(Error::InvalidArgument("lattices act on SL2 models only".into())),
        }
    }

    /// Reduce the orbit point in place (used by orbit cursors).
    pub(crate) fn reduce_point(&self, p: &mut QuotientPoint) -> Result<usize> {
        p.word_log = None;
        self.reduce_in_place(&mut p.rep, None)
    }

    /// Apply γ ∈ Γ to a base point.
    pub fn act_on_base(&self, gamma: &GroupElement, p: &BasePoint) -> BasePoint {
        match (gamma.matrix(), p) {
            (Matrix::Real(m), BasePoint::Plane(z)) => BasePoint::Plane(m.act(*z)),
            (Matrix::Complex(m), BasePoint::Space { z, r }) => {
                let (z2, r2) = m.act(*z, *r);
                BasePoint::Space { z: z2, r: r2 }
            }
            _ => BasePoint::Plane(Complex64::new(f64::NAN, f64::NAN)),
        }
    }

    /// Quotient distance: min over the word ball of d(p, γ·q).
    pub fn quotient_distance(&self, p: &QuotientPoint, q: &QuotientPoint) -> f64 {
        let pb = p.base_point();
        let qb = q.base_point();
        self.word_ball
            .iter()
            .map(|g| pb.distance(&self.act_on_base(g, &qb)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn cusp_height(&self, p: &QuotientPoint) -> f64 {
        p.log_height()
    }

    /// Reduced point with the given base projection and trivial frame.
    pub fn point_at(&self, base: &BasePoint) -> Result<QuotientPoint> {
        let g = match (self.name, base) {
            (LatticeName::Modular, BasePoint::Plane(z)) if z.im > 0.0 => {
                let h = z.im.sqrt();
                GroupElement::real_unchecked(Sl2R::new(h, z.re / h, 0.0, 1.0 / h))
            }
            (LatticeName::Picard, BasePoint::Space { z, r }) if *r > 0.0 => {
                let h = r.sqrt();
                GroupElement::complex_unchecked(Sl2C::new(
                    Complex64::new(h, 0.0),
                    z / h,
                    Complex64::new(0.0, 0.0),
                    Complex64::new(1.0 / h, 0.0),
                ))
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "{base:?} is not a point of the {:?} upper half-space",
                    self.name
                )))
            }
        };
        self.reduce(&g)
    }

    /// Default interior center used by ball targets.
    pub fn default_center(&self) -> BasePoint {
        match self.name {
            LatticeName::Modular => BasePoint::Plane(Complex64::new(0.0, 2f64.sqrt())),
            LatticeName::Picard => {
                BasePoint::Space { z: Complex64::new(0.25, 0.25), r: 1.375f64.sqrt() }
            }
        }
    }
}

fn build_word_ball(gens: &[GroupElement], radius: usize) -> Vec<GroupElement> {
    let mut letters: Vec<GroupElement> = Vec::new();
    for g in gens {
        for h in [g.clone(), crate::group::inverse(g)] {
            if !letters.iter().any(|l| l.approx_eq_projective(&h, 1e-12)) {
                letters.push(h);
            }
        }
    }
    let identity = GroupElement::identity(gens[0].params());
    let mut ball = vec![identity.clone()];
    let mut frontier = vec![identity];
    for _ in 0..radius {
        let mut next = Vec::new();
        for w in &frontier {
            for l in &letters {
                let h = w.mul(l);
                if !ball.iter().any(|b| b.approx_eq_projective(&h, 1e-12)) {
                    ball.push(h.clone());
                    next.push(h);
                }
            }
        }
        frontier = next;
    }
    ball
}

fn reduce_modular(m: &mut Sl2R, mut log: Option<&mut Vec<Move>>) -> Result<usize> {
    let mut moves = 0usize;
    loop {
        let s = m.c * m.c + m.d * m.d;
        let x = (m.a * m.c + m.b * m.d) / s;
        if x.abs() > 0.5 {
            let k = x.round();
            m.a -= k * m.c;
            m.b -= k * m.d;
            moves += 1;
            if let Some(l) = log.as_deref_mut() {
                l.push(Move::Translate { re: k as i64, im: 0 });
            }
        }
        if m.a * m.a + m.b * m.b < (1.0 - INVERT_TOL) * s {
            *m = Sl2R::new(-m.c, -m.d, m.a, m.b);
            moves += 1;
            if let Some(l) = log.as_deref_mut() {
                l.push(Move::Invert);
            }
        } else {
            break;
        }
        if moves >= MAX_REDUCTION_MOVES {
            return Err(Error::ReductionFailure { moves });
        }
    }
    if !(m.a.is_finite() && m.b.is_finite() && m.c.is_finite() && m.d.is_finite()) {
        return Err(Error::ReductionFailure { moves });
    }
    Ok(moves)
}

fn reduce_picard(m: &mut Sl2C, mut log: Option<&mut Vec<Move>>) -> Result<usize> {
    let mut moves = 0usize;
    loop {
        let s = m.c.norm_sqr() + m.d.norm_sqr();
        let z = (m.b * m.d.conj() + m.a * m.c.conj()) / s;
        let kr = if z.re.abs() > 0.5 { z.re.round() } else { 0.0 };
        let ki = if z.im.abs() > 0.5 { z.im.round() } else { 0.0 };
        let mut zi = z.im;
        if kr != 0.0 || ki != 0.0 {
            let w = Complex64::new(kr, ki);
            m.a -= w * m.c;
            m.b -= w * m.d;
            zi -= ki;
            moves += 1;
            if let Some(l) = log.as_deref_mut() {
                l.push(Move::Translate { re: kr as i64, im: ki as i64 });
            }
        }
        if zi < 0.0 {
            let i = Complex64::i();
            *m = Sl2C::new(i * m.a, i * m.b, -i * m.c, -i * m.d);
            moves += 1;
            if let Some(l) = log.as_deref_mut() {
                l.push(Move::Unit);
            }
        }
        if m.a.norm_sqr() + m.b.norm_sqr() < (1.0 - INVERT_TOL) * s {
            *m = Sl2C::new(-m.c, -m.d, m.a, m.b);
            moves += 1;
            if let Some(l) = log.as_deref_mut() {
                l.push(Move::Invert);
            }
        } else {
            break;
        }
        if moves >= MAX_REDUCTION_MOVES {
            return Err(Error::ReductionFailure { moves });
        }
    }
    if ![m.a, m.b, m.c, m.d].iter().all(|v| v.is_finite()) {
        return Err(Error::ReductionFailure { moves });
    }
    Ok(moves)
}

/// Fixed reference point for repeated distance queries. Uses the inradius ρ₀
/// of the center: translates γ·x₀ with γ ≠ e lie outside the open domain, so
/// d(p, γx₀) ≥ ρ₀ for every reduced p. Below ρ₀ the identity translate alone
/// decides the quotient distance.
#[derive(Clone, Debug)]
pub struct CenterProbe {
    center: QuotientPoint,
    base: BasePoint,
    inradius: f64,
    translates: Vec<BasePoint>,
}

impl CenterProbe {
    pub fn new(center: &QuotientPoint, lat: &Lattice) -> Self {
        let base = center.base_point();
        let translates = lat.word_ball().iter().map(|g| lat.act_on_base(g, &base)).collect();
        Self { center: center.clone(), inradius: lat.inradius_at(&base), base, translates }
    }

    pub fn center(&self) -> &QuotientPoint {
        &self.center
    }

    pub fn base(&self) -> &BasePoint {
        &self.base
    }

    pub fn inradius(&self) -> f64 {
        self.inradius
    }

    /// Quotient distance from p to the center.
    pub fn distance(&self, p: &QuotientPoint) -> f64 {
        let pb = p.base_point();
        let d0 = pb.distance(&self.base);
        if d0 < self.inradius {
            return d0;
        }
        self.translates.iter().map(|t| pb.distance(t)).fold(d0, f64::min)
    }

    /// The quotient distance if it is below `bound`.
    #[inline]
    pub fn distance_below(&self, p: &QuotientPoint, bound: f64) -> Option<f64> {
        if bound <= self.inradius {
            let d0 = p.base_point().distance(&self.base);
            return (d0 < bound).then_some(d0);
        }
        let d = self.distance(p);
        (d < bound).then_some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{compose, inverse, make_diag, random_k};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(x: f64, y: f64) -> BasePoint {
        BasePoint::Plane(Complex64::new(x, y))
    }

    fn base_z(p: &QuotientPoint) -> Complex64 {
        match p.base_point() {
            BasePoint::Plane(z) => z,
            _ => unreachable!(),
        }
    }

    /// Random element whose base lies near the real axis or far outside the domain.
    fn random_modular(rng: &mut ChaCha8Rng) -> GroupElement {
        let p = ModelParams::sl2r();
        let x = rng.random_range(-20.0..20.0);
        let t = rng.random_range(-6.0..3.0);
        crate::group::make_unipotent(&[x], p)
            .unwrap()
            .mul(&make_diag(t, p).unwrap())
            .mul(&random_k(p, rng))
    }

    fn random_picard(rng: &mut ChaCha8Rng) -> GroupElement {
        let p = ModelParams::sl2c();
        let x = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
        let t = rng.random_range(-6.0..3.0);
        crate::group::make_unipotent(&x, p)
            .unwrap()
            .mul(&make_diag(t, p).unwrap())
            .mul(&random_k(p, rng))
    }

    fn random_word(lat: &Lattice, len: usize, rng: &mut ChaCha8Rng) -> GroupElement {
        let mut g = GroupElement::identity(lat.params());
        for _ in 0..len {
            let h = &lat.generators()[rng.random_range(0..lat.generators().len())];
            g = if rng.random::<bool>() { g.mul(h) } else { g.mul(&inverse(h)) };
        }
        g
    }

    #[test]
    fn generators_satisfy_relations() {
        let m = Lattice::modular();
        let (t, s) = (&m.generators()[0], &m.generators()[1]);
        let id = GroupElement::identity(m.params());
        assert!(s.mul(s).approx_eq_projective(&id, 1e-12));
        let st = s.mul(t);
        assert!(st.mul(&st).mul(&st).approx_eq_projective(&id, 1e-12));

        let p = Lattice::picard();
        let g = p.generators();
        let (t, ti, s, u) = (&g[0], &g[1], &g[2], &g[3]);
        let id = GroupElement::identity(p.params());
        assert!(s.mul(s).approx_eq_projective(&id, 1e-12));
        let st = s.mul(t);
        assert!(st.mul(&st).mul(&st).approx_eq_projective(&id, 1e-12));
        assert!(u.mul(u).approx_eq_projective(&id, 1e-12));
        let su = s.mul(u);
        assert!(su.mul(&su).approx_eq_projective(&id, 1e-12));
        let ut = u.mul(t);
        assert!(ut.mul(&ut).approx_eq_projective(&id, 1e-12));
        let uti = u.mul(ti);
        assert!(uti.mul(&uti).approx_eq_projective(&id, 1e-12));
        assert!(t.mul(ti).approx_eq(&ti.mul(t), 0.0));
    }

    #[test]
    fn modular_covolume_matches_closed_form() {
        assert!((Lattice::modular().covolume() - std::f64::consts::PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn picard_covolume_matches_catalan_over_three() {
        // Independent oracle: Catalan's constant from its alternating series,
        // accelerated by averaging consecutive partial sums.
        let mut partial = 0.0;
        let mut prev = 0.0;
        for k in 0..200_000u64 {
            prev = partial;
            let term = 1.0 / ((2 * k + 1) as f64).powi(2);
            partial += if k % 2 == 0 { term } else { -term };
        }
        let catalan = 0.5 * (partial + prev);
        assert!((Lattice::picard().covolume() - catalan / 3.0).abs() < 1e-10);
    }

    #[test]
    fn reduced_point_unchanged() {
        let m = Lattice::modular();
        let p = m.point_at(&plane(0.25, 10.0)).unwrap();
        assert!((base_z(&p) - Complex64::new(0.25, 10.0)).norm() < 1e-14);
        assert_eq!(p.word_log().unwrap().len(), 0);
    }

    #[test]
    fn translation_case() {
        let m = Lattice::modular();
        let p = m.point_at(&plane(5.0, 1.0)).unwrap();
        assert!((base_z(&p) - Complex64::new(0.0, 1.0)).norm() < 1e-14);
        assert_eq!(p.word_log().unwrap(), &[Move::Translate { re: 5, im: 0 }]);
    }

    #[test]
    fn inversion_then_translation() {
        let m = Lattice::modular();
        let p = m.point_at(&plane(0.3, 0.4)).unwrap();
        assert!((base_z(&p) - Complex64::new(-0.2, 1.6)).norm() < 1e-13);
        assert_eq!(
            p.word_log().unwrap(),
            &[Move::Invert, Move::Translate { re: -1, im: 0 }]
        );
    }

    #[test]
    fn inversion_example_agrees_with_brute_force_search() {
        // Search all words of length ≤ 4 for a translate of 0.3 + 0.4i in the domain.
        let m = Lattice::with_word_radius(LatticeName::Modular, 4);
        let z = BasePoint::Plane(Complex64::new(0.3, 0.4));
        let found: Vec<Complex64> = m
            .word_ball()
            .iter()
            .map(|g| m.act_on_base(g, &z))
            .filter(|w| m.domain_contains(w, 1e-12))
            .map(|w| match w {
                BasePoint::Plane(c) => c,
                _ => unreachable!(),
            })
            .collect();
        assert!(!found.is_empty());
        for w in found {
            assert!((w - Complex64::new(-0.2, 1.6)).norm() < 1e-12);
        }
    }

    #[test]
    fn picard_reduction_lands_in_domain() {
        let lat = Lattice::picard();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let p = lat.reduce(&random_picard(&mut rng)).unwrap();
            assert!(lat.domain_contains(&p.base_point(), DOMAIN_TOL), "{:?}", p.base_point());
        }
    }

    #[test]
    fn modular_reduction_lands_in_domain() {
        let lat = Lattice::modular();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let p = lat.reduce(&random_modular(&mut rng)).unwrap();
            assert!(lat.domain_contains(&p.base_point(), DOMAIN_TOL));
        }
    }

    #[test]
    fn word_log_replays_reduction() {
        let lat = Lattice::picard();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_picard(&mut rng);
        let p = lat.reduce(&g).unwrap();
        let mut h = g.clone();
        for mv in p.word_log().unwrap() {
            let m = match *mv {
                Move::Translate { re, im } => t_complex(-Complex64::new(re as f64, im as f64)),
                Move::Unit => u_complex(),
                Move::Invert => s_complex(),
            };
            h = GroupElement::complex_unchecked(m).mul(&h);
        }
        assert!(h.approx_eq(p.rep(), 1e-12));
    }

    #[test]
    fn reduce_rejects_wrong_model() {
        let g = GroupElement::identity(ModelParams::sl2c());
        assert!(Lattice::modular().reduce(&g).is_err());
    }

    #[test]
    fn distance_examples() {
        let m = Lattice::modular();
        let i = m.point_at(&plane(0.0, 1.0)).unwrap();
        let two_i = m.point_at(&plane(0.0, 2.0)).unwrap();
        assert_eq!(m.quotient_distance(&i, &i), 0.0);
        assert!((m.quotient_distance(&i, &two_i) - 2f64.ln()).abs() < 1e-14);
        assert!((1.25f64.acosh() - 2f64.ln()).abs() < 1e-15);
        // z and z + 1 are the same point of the quotient
        let g = GroupElement::real_unchecked(Sl2R::new(1.3, 0.2, 0.5, 0.8461538461538461));
        let h = GroupElement::real_unchecked(t_real(1.0)).mul(&g);
        let (p, q) = (
            QuotientPoint { rep: g, word_log: None },
            QuotientPoint { rep: h, word_log: None },
        );
        assert!(m.quotient_distance(&p, &q) < 1e-12);
    }

    #[test]
    fn cusp_height_examples() {
        let m = Lattice::modular();
        assert_eq!(m.cusp_height(&m.point_at(&plane(0.0, 1.0)).unwrap()), 0.0);
        let p = m.point_at(&plane(0.25, 3f64.exp())).unwrap();
        assert!((m.cusp_height(&p) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn cusp_height_tracks_distance_high_in_the_cusp() {
        let m = Lattice::modular();
        let base = m.point_at(&plane(0.0, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let y = (2.0 + rng.random::<f64>() * 8.0).exp();
            let p = m.point_at(&plane(rng.random_range(-0.5..0.5), y)).unwrap();
            assert!((m.cusp_height(&p) - m.quotient_distance(&p, &base)).abs() <= 1.0);
        }
    }

    #[test]
    fn default_centers_and_inradius() {
        let m = Lattice::modular();
        let r = m.inradius_at(&m.default_center());
        assert!((r - 2f64.sqrt().ln()).abs() < 1e-14);
        let p = Lattice::picard();
        let r = p.inradius_at(&p.default_center());
        assert!(r > 0.2 && r < 0.22, "{r}");
        assert_eq!(m.inradius_at(&plane(0.0, 1.0)), 0.0);
    }

    #[test]
    fn probe_matches_full_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for lat in [Lattice::modular(), Lattice::picard()] {
            let c = lat.point_at(&lat.default_center()).unwrap();
            let probe = CenterProbe::new(&c, &lat);
            for _ in 0..2000 {
                let g = if lat.name() == LatticeName::Modular { random_modular(&mut rng) } else { random_picard(&mut rng) };
                let p = lat.reduce(&g).unwrap();
                let full = lat.quotient_distance(&p, &c);
                assert!((probe.distance(&p) - full).abs() < 1e-12);
                for bound in [0.05, 0.2, 0.5, 2.0] {
                    assert_eq!(probe.distance_below(&p, bound).is_some(), full < bound);
                }
            }
        }
    }

    #[test]
    fn word_ball_sizes() {
        assert_eq!(Lattice::modular().word_ball().len(), 10);
        let n = Lattice::picard().word_ball().len();
        assert!(n > 20, "{n}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reduction_is_gamma_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for lat in [Lattice::modular(), Lattice::picard()] {
                let g = if lat.name() == LatticeName::Modular { random_modular(&mut rng) } else { random_picard(&mut rng) };
                let len = rng.random_range(1..=6);
                let gamma = random_word(&lat, len, &mut rng);
                let a = lat.reduce(&g).unwrap();
                let b = lat.reduce(&gamma.mul(&g)).unwrap();
                let d = a.base_point().distance(&b.base_point());
                // boundary points may reduce to either of two identified copies
                prop_assert!(d < 1e-8 || lat.quotient_distance(&a, &b) < 1e-8);
            }
        }

        #[test]
        fn reduction_commutes_with_right_flow(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for lat in [Lattice::modular(), Lattice::picard()] {
                let p = lat.params();
                let g = if lat.name() == LatticeName::Modular { random_modular(&mut rng) } else { random_picard(&mut rng) };
                let h = crate::group::random_element(p, 3.0, &mut rng);
                let a = lat.reduce(&compose(lat.reduce(&g).unwrap().rep(), &h).unwrap()).unwrap();
                let b = lat.reduce(&compose(&g, &h).unwrap()).unwrap();
                let d = a.base_point().distance(&b.base_point());
                prop_assert!(d < 1e-8 || lat.quotient_distance(&a, &b) < 1e-8);
            }
        }
    }
}
