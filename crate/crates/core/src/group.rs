//! Isometry groups of hyperbolic space in three matrix models.
//!
//! `Sl2R` and `Sl2C` carry all quotient simulations (n = 2, 3). The
//! `SoN1` model is the J-orthogonal group of the form x₁²+…+xₙ²−x_{n+1}²
//! and exists for decomposition checks in any dimension.
//!
//! Conventions shared by all models: a_t translates the base point by
//! hyperbolic distance |t|, n_x translates horizontally by x in the upper
//! half-space picture, and the base projection of g is g·o with o = i, j
//! or e_{n+1}.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance for accepting an element as lying on the group.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Renormalization refuses to repair defects at or above this level.
pub const DRIFT_LIMIT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    Sl2R,
    Sl2C,
    SoN1,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    n: usize,
    rho: f64,
    model: Model,
}

impl ModelParams {
    pub fn new(n: usize, model: Model) -> Result<Self> {
        match (model, n) {
            (Model::Sl2R, 2) | (Model::Sl2C, 3) => {}
            (Model::SoN1, n) if n >= 2 => {}
            _ => return invalid(format!("model {model:?} is not available for n = {n}")),
        }
        Ok(Self { n, rho: (n as f64 - 1.0) / 2.0, model })
    }

    pub fn sl2r() -> Self {
        Self { n: 2, rho: 0.5, model: Model::Sl2R }
    }

    pub fn sl2c() -> Self {
        Self { n: 3, rho: 1.0, model: Model::Sl2C }
    }

    pub fn so_n1(n: usize) -> Result<Self> {
        Self::new(n, Model::SoN1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn model(&self) -> Model {
        self.model
    }

    /// Dimension of the horizontal coordinate x of n_x.
    pub fn horizontal_dim(&self) -> usize {
        self.n - 1
    }
}

/// Real 2×2 matrix [[a, b], [c, d]].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sl2R {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Sl2R {
    pub const IDENTITY: Sl2R = Sl2R { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    #[inline]
    pub fn mul(&self, o: &Sl2R) -> Sl2R {
        Sl2R {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// Adjugate; equals the inverse on SL(2).
    #[inline]
    pub fn adj(&self) -> Sl2R {
        Sl2R { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn scale(&self, s: f64) -> Sl2R {
        Sl2R { a: self.a * s, b: self.b * s, c: self.c * s, d: self.d * s }
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    /// Möbius action on the upper half-plane.
    #[inline]
    pub fn act(&self, z: Complex64) -> Complex64 {
        (z * self.a + self.b) / (z * self.c + self.d)
    }
}

/// Complex 2×2 matrix [[a, b], [c, d]].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sl2C {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

impl Sl2C {
    pub const IDENTITY: Sl2C = Sl2C { a: C1, b: C0, c: C0, d: C1 };

    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { a, b, c, d }
    }

    #[inline]
    pub fn mul(&self, o: &Sl2C) -> Sl2C {
        Sl2C {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    #[inline]
    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    #[inline]
    pub fn adj(&self) -> Sl2C {
        Sl2C { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn scale(&self, s: Complex64) -> Sl2C {
        Sl2C { a: self.a * s, b: self.b * s, c: self.c * s, d: self.d * s }
    }

    pub fn max_abs(&self) -> f64 {
        self.a.norm().max(self.b.norm()).max(self.c.norm()).max(self.d.norm())
    }

    pub fn conj_transpose(&self) -> Sl2C {
        Sl2C { a: self.a.conj(), b: self.c.conj(), c: self.b.conj(), d: self.d.conj() }
    }

    /// Action on upper half-space, points written z + r·j.
    #[inline]
    pub fn act(&self, z: Complex64, r: f64) -> (Complex64, f64) {
        let w = self.c * z + self.d;
        let den = w.norm_sqr() + self.c.norm_sqr() * r * r;
        let num = (self.a * z + self.b) * w.conj() + self.a * self.c.conj() * (r * r);
        (num / den, r / den)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Matrix {
    Real(Sl2R),
    Complex(Sl2C),
    Lorentz(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    matrix: Matrix,
    params: ModelParams,
}

/// Point of hyperbolic space in the coordinates natural to each model.
#[derive(Clone, Debug, PartialEq)]
pub enum BasePoint {
    /// x + iy in the upper half-plane.
    Plane(Complex64),
    /// z + r·j in upper half-space.
    Space { z: Complex64, r: f64 },
    /// Point on the upper sheet of the hyperboloid ⟨p,p⟩_J = −1.
    Hyperboloid(DVector<f64>),
}

impl BasePoint {
    /// Height coordinate of the upper half-space picture.
    pub fn height(&self) -> f64 {
        match self {
            BasePoint::Plane(z) => z.im,
            BasePoint::Space { r, .. } => *r,
            BasePoint::Hyperboloid(p) => {
                let k = p.len();
                1.0 / (p[k - 1] - p[k - 2])
            }
        }
    }

    /// Hyperbolic distance, computed through sinh(d/2) so that it is
    /// accurate for nearby points.
    pub fn distance(&self, other: &BasePoint) -> f64 {
        match (self, other) {
            (BasePoint::Plane(z), BasePoint::Plane(w)) => {
                let h = (z - w).norm() / (2.0 * (z.im * w.im).sqrt());
                2.0 * h.asinh()
            }
            (BasePoint::Space { z, r }, BasePoint::Space { z: w, r: s }) => {
                let num = ((z - w).norm_sqr() + (r - s) * (r - s)).sqrt();
                2.0 * (num / (2.0 * (r * s).sqrt())).asinh()
            }
            (BasePoint::Hyperboloid(p), BasePoint::Hyperboloid(q)) => {
                let diff = p - q;
                let k = diff.len();
                let mut q2 = -diff[k - 1] * diff[k - 1];
                for i in 0..k - 1 {
                    q2 += diff[i] * diff[i];
                }
                2.0 * (q2.max(0.0).sqrt() / 2.0).asinh()
            }
            _ => f64::NAN,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IwasawaCoords {
    pub x: Vec<f64>,
    pub t: f64,
    pub k: GroupElement,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CartanCoords {
    pub k1: GroupElement,
    pub t: f64,
    pub k2: GroupElement,
}

fn j_form(dim: usize) -> DMatrix<f64> {
    let mut j = DMatrix::identity(dim, dim);
    j[(dim - 1, dim - 1)] = -1.0;
    j
}

fn lorentz_defect(g: &DMatrix<f64>) -> f64 {
    let dim = g.nrows();
    let j = j_form(dim);
    let e = g.transpose() * &j * g - &j;
    let scale = g.amax().powi(2).max(1.0);
    e.amax() / scale
}

impl GroupElement {
    pub fn identity(params: ModelParams) -> Self {
        let matrix = match params.model {
            Model::Sl2R => Matrix::Real(Sl2R::IDENTITY),
            Model::Sl2C => Matrix::Complex(Sl2C::IDENTITY),
            Model::SoN1 => Matrix::Lorentz(DMatrix::identity(params.n + 1, params.n + 1)),
        };
        Self { matrix, params }
    }

    pub fn from_sl2r(m: Sl2R) -> Result<Self> {
        let g = Self::real_unchecked(m);
        g.check_membership()?;
        Ok(g)
    }

    pub fn from_sl2c(m: Sl2C) -> Result<Self> {
        let g = Self::complex_unchecked(m);
        g.check_membership()?;
        Ok(g)
    }

    pub fn from_lorentz(n: usize, m: DMatrix<f64>) -> Result<Self> {
        let params = ModelParams::so_n1(n)?;
        if m.nrows() != n + 1 || m.ncols() != n + 1 {
            return invalid(format!("expected a {0}x{0} matrix for n = {n}", n + 1));
        }
        let g = Self { matrix: Matrix::Lorentz(m), params };
        g.check_membership()?;
        Ok(g)
    }

    pub(crate) fn real_unchecked(m: Sl2R) -> Self {
        Self { matrix: Matrix::Real(m), params: ModelParams::sl2r() }
    }

    pub(crate) fn complex_unchecked(m: Sl2C) -> Self {
        Self { matrix: Matrix::Complex(m), params: ModelParams::sl2c() }
    }

    pub(crate) fn lorentz_unchecked(m: DMatrix<f64>, params: ModelParams) -> Self {
        Self { matrix: Matrix::Lorentz(m), params }
    }

    fn check_membership(&self) -> Result<()> {
        if !self.is_finite() {
            return invalid("group element has non-finite entries");
        }
        let defect = self.defect();
        if defect > MEMBERSHIP_TOL {
            return invalid(format!("matrix is off the group by {defect:.3e}"));
        }
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.matrix
    }

    pub fn as_sl2r(&self) -> Option<&Sl2R> {
        match &self.matrix {
            Matrix::Real(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_sl2c(&self) -> Option<&Sl2C> {
        match &self.matrix {
            Matrix::Complex(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_lorentz(&self) -> Option<&DMatrix<f64>> {
        match &self.matrix {
            Matrix::Lorentz(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match &self.matrix {
            Matrix::Real(m) => [m.a, m.b, m.c, m.d].iter().all(|v| v.is_finite()),
            Matrix::Complex(m) => [m.a, m.b, m.c, m.d].iter().all(|v| v.is_finite()),
            Matrix::Lorentz(m) => m.iter().all(|v| v.is_finite()),
        }
    }

    /// Distance from the constraint manifold: |det − 1| for the SL2 models,
    /// max|gᵀJg − J| relative to the squared entry scale for SO(n,1).
    pub fn defect(&self) -> f64 {
        match &self.matrix {
            Matrix::Real(m) => (m.det() - 1.0).abs(),
            Matrix::Complex(m) => (m.det() - 1.0).norm(),
            Matrix::Lorentz(m) => lorentz_defect(m),
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        match &self.matrix {
            Matrix::Real(m) => m.max_abs(),
            Matrix::Complex(m) => m.max_abs(),
            Matrix::Lorentz(m) => m.amax(),
        }
    }

    /// Entrywise max |self − other|; infinite on model mismatch.
    pub fn max_abs_diff(&self, other: &GroupElement) -> f64 {
        match (&self.matrix, &other.matrix) {
            (Matrix::Real(p), Matrix::Real(q)) => {
                [p.a - q.a, p.b - q.b, p.c - q.c, p.d - q.d].iter().fold(0.0, |acc, v| acc.max(v.abs()))
            }
            (Matrix::Complex(p), Matrix::Complex(q)) => {
                [p.a - q.a, p.b - q.b, p.c - q.c, p.d - q.d].iter().fold(0.0, |acc, v| acc.max(v.norm()))
            }
            (Matrix::Lorentz(p), Matrix::Lorentz(q)) if p.shape() == q.shape() => (p - q).amax(),
            _ => f64::INFINITY,
        }
    }

    /// Entrywise agreement relative to the entry scale of `other`.
    pub fn approx_eq(&self, other: &GroupElement, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol * other.max_abs().max(1.0)
    }

    /// Agreement up to the central sign ±I (equality in PSL).
    pub fn approx_eq_projective(&self, other: &GroupElement, tol: f64) -> bool {
        if self.approx_eq(other, tol) {
            return true;
        }
        let neg = match &self.matrix {
            Matrix::Real(m) => GroupElement::real_unchecked(m.scale(-1.0)),
            Matrix::Complex(m) => GroupElement::complex_unchecked(m.scale(-C1)),
            Matrix::Lorentz(_) => return false,
        };
        neg.approx_eq(other, tol)
    }

    /// Matrix product without the model check, for callers that already know
    /// both factors share a model.
    #[inline]
    pub(crate) fn mul(&self, other: &GroupElement) -> GroupElement {
        let matrix = match (&self.matrix, &other.matrix) {
            (Matrix::Real(p), Matrix::Real(q)) => Matrix::Real(p.mul(q)),
            (Matrix::Complex(p), Matrix::Complex(q)) => Matrix::Complex(p.mul(q)),
            (Matrix::Lorentz(p), Matrix::Lorentz(q)) => Matrix::Lorentz(p * q),
            _ => panic!("model mismatch in group product"),
        };
        GroupElement { matrix, params: self.params }
    }

    pub(crate) fn mul_assign_right(&mut self, other: &GroupElement) {
        match (&mut self.matrix, &other.matrix) {
            (Matrix::Real(p), Matrix::Real(q)) => *p = p.mul(q),
            (Matrix::Complex(p), Matrix::Complex(q)) => *p = p.mul(q),
            (Matrix::Lorentz(p), Matrix::Lorentz(q)) => *p = &*p * q,
            _ => panic!("model mismatch in group product"),
        }
    }

    /// Base projection g·o.
    pub fn base_point(&self) -> BasePoint {
        match &self.matrix {
            Matrix::Real(m) => {
                let s = m.c * m.c + m.d * m.d;
                BasePoint::Plane(Complex64::new((m.a * m.c + m.b * m.d) / s, 1.0 / s))
            }
            Matrix::Complex(m) => {
                let s = m.c.norm_sqr() + m.d.norm_sqr();
                BasePoint::Space { z: (m.b * m.d.conj() + m.a * m.c.conj()) / s, r: 1.0 / s }
            }
            Matrix::Lorentz(m) => BasePoint::Hyperboloid(m.column(m.ncols() - 1).into_owned()),
        }
    }
}

fn same_model(g: &GroupElement, h: &GroupElement) -> Result<()> {
    if g.params != h.params {
        return invalid(format!(
            "model mismatch: {:?} (n={}) vs {:?} (n={})",
            g.params.model, g.params.n, h.params.model, h.params.n
        ));
    }
    Ok(())
}

/// a_t.
pub fn make_diag(t: f64, params: ModelParams) -> Result<GroupElement> {
    if !t.is_finite() {
        return invalid("diagonal parameter must be finite");
    }
    let h = (0.5 * t).exp();
    Ok(match params.model {
        Model::Sl2R => GroupElement::real_unchecked(Sl2R::new(h, 0.0, 0.0, 1.0 / h)),
        Model::Sl2C => GroupElement::complex_unchecked(Sl2C::new(
            Complex64::new(h, 0.0),
            C0,
            C0,
            Complex64::new(1.0 / h, 0.0),
        )),
        Model::SoN1 => {
            let n = params.n;
            let mut m = DMatrix::identity(n + 1, n + 1);
            let (ch, sh) = (t.cosh(), t.sinh());
            m[(n - 1, n - 1)] = ch;
            m[(n - 1, n)] = sh;
            m[(n, n - 1)] = sh;
            m[(n, n)] = ch;
            GroupElement::lorentz_unchecked(m, params)
        }
    })
}

/// n_x, horizontal translation by x ∈ ℝ^{n−1}.
pub fn make_unipotent(x: &[f64], params: ModelParams) -> Result<GroupElement> {
    if x.len() != params.horizontal_dim() {
        return invalid(format!(
            "unipotent parameter has dimension {}, expected {}",
            x.len(),
            params.horizontal_dim()
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("unipotent parameter must be finite");
    }
    Ok(match params.model {
        Model::Sl2R => GroupElement::real_unchecked(Sl2R::new(1.0, x[0], 0.0, 1.0)),
        Model::Sl2C => {
            GroupElement::complex_unchecked(Sl2C::new(C1, Complex64::new(x[0], x[1]), C0, C1))
        }
        Model::SoN1 => {
            let n = params.n;
            let q: f64 = x.iter().map(|v| v * v).sum::<f64>() / 2.0;
            let mut m = DMatrix::identity(n + 1, n + 1);
            for (i, &xi) in x.iter().enumerate() {
                m[(i, n - 1)] = -xi;
                m[(i, n)] = xi;
                m[(n - 1, i)] = xi;
                m[(n, i)] = xi;
            }
            m[(n - 1, n - 1)] = 1.0 - q;
            m[(n - 1, n)] = q;
            m[(n, n - 1)] = -q;
            m[(n, n)] = 1.0 + q;
            GroupElement::lorentz_unchecked(m, params)
        }
    })
}

pub fn compose(g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
    same_model(g, h)?;
    Ok(g.mul(h))
}

/// Group inverse. SL2 models use the adjugate, SO(n,1) uses J gᵀ J.
pub fn inverse(g: &GroupElement) -> GroupElement {
    let matrix = match &g.matrix {
        Matrix::Real(m) => Matrix::Real(m.adj()),
        Matrix::Complex(m) => Matrix::Complex(m.adj()),
        Matrix::Lorentz(m) => {
            let j = j_form(m.nrows());
            Matrix::Lorentz(&j * m.transpose() * &j)
        }
    };
    GroupElement { matrix, params: g.params }
}

/// arccosh(1 + e/2) for e ≥ 0, accurate when e is small.
fn arccosh_one_plus_half(e: f64) -> f64 {
    let e = e.max(0.0);
    (0.5 * e + 0.5 * (e * (e + 4.0)).sqrt()).ln_1p()
}

/// Cartan coordinate t ≥ 0 with g = k₁ a_t k₂; equals d(o, g·o).
pub fn cartan_t(g: &GroupElement) -> f64 {
    match &g.matrix {
        // ‖g‖_F² − 2 = (a−d)² + (b+c)² + 2(det − 1), no cancellation near I.
        Matrix::Real(m) => {
            let e = (m.a - m.d).powi(2) + (m.b + m.c).powi(2) + 2.0 * (m.det() - 1.0);
            arccosh_one_plus_half(e)
        }
        Matrix::Complex(m) => {
            let e = (m.a - m.d.conj()).norm_sqr()
                + (m.b + m.c.conj()).norm_sqr()
                + 2.0 * (m.det().re - 1.0);
            arccosh_one_plus_half(e)
        }
        Matrix::Lorentz(m) => {
            let e = m.norm_squared() - m.nrows() as f64;
            if e > 1.0 {
                return 0.5 * arccosh_one_plus_half(e);
            }
            // Near K the trace formula loses half the digits; read the
            // displacement of the base point instead (4sinh²(t/2) = |p − o|²_J).
            let n = m.nrows() - 1;
            let top2: f64 = (0..n).map(|i| m[(i, n)] * m[(i, n)]).sum();
            let last = m[(n, n)] - 1.0;
            2.0 * ((top2 - last * last).max(0.0).sqrt() / 2.0).asinh()
        }
    }
}

/// t_m = cartan_t(g^m) for m = 1..=m_max, computed on a rescaled running
/// product so that powers far beyond the floating range are handled.
pub fn cartan_t_along_powers(g: &GroupElement, m_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m_max);
    let mut p = g.clone();
    // true product = exp(log_scale) · p
    let mut log_scale = 0.0f64;
    for m in 1..=m_max {
        if m > 1 {
            p.mul_assign_right(g);
        }
        let s = p.max_abs();
        if s > 1e50 {
            log_scale += s.ln();
            p = scale_element(&p, 1.0 / s);
        }
        out.push(cartan_t_scaled(&p, log_scale));
    }
    out
}

fn scale_element(g: &GroupElement, s: f64) -> GroupElement {
    let matrix = match &g.matrix {
        Matrix::Real(m) => Matrix::Real(m.scale(s)),
        Matrix::Complex(m) => Matrix::Complex(m.scale(Complex64::new(s, 0.0))),
        Matrix::Lorentz(m) => Matrix::Lorentz(m * s),
    };
    GroupElement { matrix, params: g.params }
}

fn cartan_t_scaled(p: &GroupElement, log_scale: f64) -> f64 {
    if log_scale == 0.0 {
        return cartan_t(p);
    }
    // For these magnitudes arccosh(F/2) = ln F to double precision.
    match &p.matrix {
        Matrix::Real(m) => 2.0 * log_scale + (m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d).ln(),
        Matrix::Complex(m) => {
            2.0 * log_scale + (m.a.norm_sqr() + m.b.norm_sqr() + m.c.norm_sqr() + m.d.norm_sqr()).ln()
        }
        Matrix::Lorentz(m) => log_scale + 0.5 * m.norm_squared().ln(),
    }
}

/// Top unit eigenvector of the Hermitian matrix [[p, q], [q̄, s]].
fn top_eigenvector(p: f64, q: Complex64, s: f64) -> (Complex64, Complex64) {
    let half = 0.5 * (p - s);
    let lam = 0.5 * (p + s) + (half * half + q.norm_sqr()).sqrt();
    let (v0, v1) = if p >= s {
        (Complex64::new(lam - s, 0.0), q.conj())
    } else {
        (q, Complex64::new(lam - p, 0.0))
    };
    let nrm = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
    if nrm == 0.0 || !nrm.is_finite() {
        return (C1, C0);
    }
    (v0 / nrm, v1 / nrm)
}

/// SU(2) matrix with first column (u0, u1).
fn su2_from_column(u0: Complex64, u1: Complex64) -> Sl2C {
    Sl2C::new(u0, -u1.conj(), u1, u0.conj())
}

/// g = k₁ a_t k₂ with k₁, k₂ ∈ K and t ≥ 0.
pub fn cartan(g: &GroupElement) -> CartanCoords {
    let t = cartan_t(g);
    let params = g.params;
    match &g.matrix {
        Matrix::Real(m) => {
            let h = Sl2C::new(m.a.into(), m.b.into(), m.c.into(), m.d.into());
            let (k1, k2) = sl2_singular_frames(&h);
            let re = |k: Sl2C| Sl2R::new(k.a.re, k.b.re, k.c.re, k.d.re);
            CartanCoords {
                k1: GroupElement::real_unchecked(re(k1)),
                t,
                k2: GroupElement::real_unchecked(re(k2)),
            }
        }
        Matrix::Complex(m) => {
            let (k1, k2) = sl2_singular_frames(m);
            CartanCoords {
                k1: GroupElement::complex_unchecked(k1),
                t,
                k2: GroupElement::complex_unchecked(k2),
            }
        }
        Matrix::Lorentz(m) => {
            let n = params.n;
            let p = m.column(n);
            let top = p.rows(0, n);
            let st = top.norm();
            let mut k1 = DMatrix::identity(n + 1, n + 1);
            if st > 0.0 {
                let v = top / st;
                let mut w = -v.clone();
                w[n - 1] += 1.0;
                let ww = w.norm_squared();
                if ww > 1e-30 {
                    // Householder swap of e_n and v, composed with a reflection
                    // in e_1 to restore orientation.
                    let mut h = DMatrix::<f64>::identity(n, n) - (&w * w.transpose()) * (2.0 / ww);
                    h.column_mut(0).neg_mut();
                    k1.view_mut((0, 0), (n, n)).copy_from(&h);
                }
            }
            let ch = t.cosh();
            let h = k1.transpose() * m;
            let mut k2 = h.clone();
            for col in 0..=n {
                k2[(n - 1, col)] = if col == n { 0.0 } else { h[(n - 1, col)] / ch };
                k2[(n, col)] = if col == n { 1.0 } else { 0.0 };
            }
            CartanCoords {
                k1: GroupElement::lorentz_unchecked(k1, params),
                t,
                k2: GroupElement::lorentz_unchecked(k2, params),
            }
        }
    }
}

/// Left and right singular frames (k₁, k₂) of an SL(2) matrix, with
/// g = k₁ diag(σ₁, 1/σ₁) k₂.
fn sl2_singular_frames(g: &Sl2C) -> (Sl2C, Sl2C) {
    // gᴴg = [[|a|²+|c|², ā b + c̄ d], [.., |b|²+|d|²]]
    let p = g.a.norm_sqr() + g.c.norm_sqr();
    let s = g.b.norm_sqr() + g.d.norm_sqr();
    let q = g.a.conj() * g.b + g.c.conj() * g.d;
    let (v0, v1) = top_eigenvector(p, q, s);
    let w0 = g.a * v0 + g.b * v1;
    let w1 = g.c * v0 + g.d * v1;
    let nrm = (w0.norm_sqr() + w1.norm_sqr()).sqrt();
    let k1 = su2_from_column(w0 / nrm, w1 / nrm);
    let k2 = su2_from_column(v0, v1).conj_transpose();
    (k1, k2)
}

/// g = n_x a_t k.
pub fn iwasawa(g: &GroupElement) -> IwasawaCoords {
    let params = g.params;
    match &g.matrix {
        Matrix::Real(m) => {
            let s = m.c * m.c + m.d * m.d;
            let r = s.sqrt();
            let x = (m.a * m.c + m.b * m.d) / s;
            let k = Sl2R::new(m.d / r, -m.c / r, m.c / r, m.d / r);
            IwasawaCoords { x: vec![x], t: -s.ln(), k: GroupElement::real_unchecked(k) }
        }
        Matrix::Complex(m) => {
            let s = m.c.norm_sqr() + m.d.norm_sqr();
            let r = s.sqrt();
            let z = (m.b * m.d.conj() + m.a * m.c.conj()) / s;
            let k = Sl2C::new(m.d.conj() / r, -m.c.conj() / r, m.c / r, m.d / r);
            IwasawaCoords { x: vec![z.re, z.im], t: -s.ln(), k: GroupElement::complex_unchecked(k) }
        }
        Matrix::Lorentz(m) => {
            let n = params.n;
            // X_n − X_{n−1} for the image X of the hyperboloid base point;
            // X_n² − X_{n−1}² = 1 + Σ_{i<n−1} X_i² avoids cancellation.
            let (xn, xl) = (m[(n, n)], m[(n - 1, n)]);
            let gap = if xl > 0.0 {
                (1.0 + (0..n - 1).map(|i| m[(i, n)].powi(2)).sum::<f64>()) / (xn + xl)
            } else {
                xn - xl
            };
            let t = -gap.ln();
            let x: Vec<f64> = (0..n - 1).map(|i| m[(i, n)] / gap).collect();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let nx_inv = make_unipotent(&neg, params).expect("dimension matches");
            let at_inv = make_diag(-t, params).expect("finite t");
            let inv = at_inv.mul(&nx_inv);
            let fwd = make_unipotent(&x, params).expect("dimension matches").mul(&make_diag(t, params).expect("finite t"));
            let (inv, fwd) = (inv.as_lorentz().expect("same model"), fwd.as_lorentz().expect("same model"));
            // One refinement step against a compensated residual g − n_x a_t k;
            // the plain product loses digits to the large entries of n_x and a_t.
            let mut k = inv * m;
            k += inv * compensated_residual(m, fwd, &k);
            IwasawaCoords { x, t, k: GroupElement::lorentz_unchecked(k, params) }
        }
    }
}

/// g − p·k with each entry accumulated in error-free transformations.
fn compensated_residual(g: &DMatrix<f64>, p: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| {
        let (mut sum, mut err) = (g[(i, j)], 0.0);
        for l in 0..p.ncols() {
            let prod = -p[(i, l)] * k[(l, j)];
            let prod_err = (-p[(i, l)]).mul_add(k[(l, j)], -prod);
            let next = sum + prod;
            let bv = next - sum;
            err += (sum - (next - bv)) + (prod - bv) + prod_err;
            sum = next;
        }
        sum + err
    })
}

pub fn recompose_iwasawa(c: &IwasawaCoords) -> Result<GroupElement> {
    let params = c.k.params;
    Ok(make_unipotent(&c.x, params)?.mul(&make_diag(c.t, params)?).mul(&c.k))
}

pub fn recompose_cartan(c: &CartanCoords) -> Result<GroupElement> {
    let params = c.k1.params;
    Ok(c.k1.mul(&make_diag(c.t, params)?).mul(&c.k2))
}

/// Project an approximate group element back onto the group.
pub fn renormalize(g: &GroupElement) -> Result<GroupElement> {
    let defect = g.defect();
    if !(defect < DRIFT_LIMIT) {
        return Err(Error::Drift { defect });
    }
    let matrix = match &g.matrix {
        Matrix::Real(m) => Matrix::Real(m.scale(1.0 / m.det().sqrt())),
        Matrix::Complex(m) => Matrix::Complex(m.scale(m.det().sqrt().inv())),
        Matrix::Lorentz(m) => {
            let dim = m.nrows();
            let j = j_form(dim);
            let three = DMatrix::<f64>::identity(dim, dim) * 3.0;
            let mut cur = m.clone();
            for _ in 0..8 {
                if lorentz_defect(&cur) < 1e-15 {
                    break;
                }
                let c = &j * cur.transpose() * &j * &cur;
                cur = (&cur * (&three - c)) * 0.5;
            }
            Matrix::Lorentz(cur)
        }
    };
    Ok(GroupElement { matrix, params: g.params })
}

/// Haar-random element of the maximal compact subgroup K.
pub fn random_k<R: Rng + ?Sized>(params: ModelParams, rng: &mut R) -> GroupElement {
    match params.model {
        Model::Sl2R => {
            let th: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let (s, c) = th.sin_cos();
            GroupElement::real_unchecked(Sl2R::new(c, -s, s, c))
        }
        Model::Sl2C => {
            let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let nrm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let u0 = Complex64::new(q[0], q[1]) / nrm;
            let u1 = Complex64::new(q[2], q[3]) / nrm;
            GroupElement::complex_unchecked(su2_from_column(u0, u1))
        }
        Model::SoN1 => {
            let n = params.n;
            let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
            let qr = a.qr();
            let (mut q, r) = qr.unpack();
            for i in 0..n {
                if r[(i, i)] < 0.0 {
                    q.column_mut(i).neg_mut();
                }
            }
            if q.determinant() < 0.0 {
                q.column_mut(0).neg_mut();
            }
            let mut m = DMatrix::identity(n + 1, n + 1);
            m.view_mut((0, 0), (n, n)).copy_from(&q);
            GroupElement::lorentz_unchecked(m, params)
        }
    }
}

/// k₁ a_t k₂ with Haar-random frames and t uniform in [0, t_max].
pub fn random_element<R: Rng + ?Sized>(params: ModelParams, t_max: f64, rng: &mut R) -> GroupElement {
    let t = rng.random::<f64>() * t_max;
    let k1 = random_k(params, rng);
    let k2 = random_k(params, rng);
    k1.mul(&make_diag(t, params).expect("finite")).mul(&k2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn product_scale(a: &GroupElement, b: &GroupElement) -> f64 {
        (a.max_abs() * b.max_abs()).max(1.0)
    }

    fn all_models() -> Vec<ModelParams> {
        vec![
            ModelParams::sl2r(),
            ModelParams::sl2c(),
            ModelParams::so_n1(2).unwrap(),
            ModelParams::so_n1(3).unwrap(),
            ModelParams::so_n1(5).unwrap(),
        ]
    }

    #[test]
    fn model_params_rho_and_compatibility() {
        assert_eq!(ModelParams::sl2r().rho(), 0.5);
        assert_eq!(ModelParams::sl2c().rho(), 1.0);
        assert_eq!(ModelParams::so_n1(6).unwrap().rho(), 2.5);
        assert!(ModelParams::new(3, Model::Sl2R).is_err());
        assert!(ModelParams::new(1, Model::SoN1).is_err());
    }

    #[test]
    fn diag_at_zero_is_identity() {
        for p in all_models() {
            let a = make_diag(0.0, p).unwrap();
            assert!(a.approx_eq(&GroupElement::identity(p), 0.0));
        }
    }

    #[test]
    fn diag_rejects_non_finite() {
        assert!(make_diag(f64::NAN, ModelParams::sl2r()).is_err());
        assert!(make_diag(f64::INFINITY, ModelParams::sl2c()).is_err());
    }

    #[test]
    fn diag_composes_additively() {
        for p in all_models() {
            let g = compose(&make_diag(1.0, p).unwrap(), &make_diag(2.0, p).unwrap()).unwrap();
            assert!(g.approx_eq(&make_diag(3.0, p).unwrap(), 1e-12), "{p:?}");
        }
    }

    #[test]
    fn diag_ln2_doubles_height_of_i() {
        let a = make_diag(2f64.ln(), ModelParams::sl2r()).unwrap();
        let z = a.as_sl2r().unwrap().act(Complex64::new(0.0, 1.0));
        assert!((z - Complex64::new(0.0, 2.0)).norm() < 1e-15);
        match a.base_point() {
            BasePoint::Plane(w) => assert!((w.im - 2.0).abs() < 1e-15),
            _ => unreachable!(),
        }
    }

    #[test]
    fn unipotent_identity_and_additivity() {
        for p in all_models() {
            let d = p.horizontal_dim();
            let zero = vec![0.0; d];
            assert!(make_unipotent(&zero, p).unwrap().approx_eq(&GroupElement::identity(p), 0.0));
            let one = vec![1.0; d];
            let two = vec![2.0; d];
            let three = vec![3.0; d];
            let g = compose(&make_unipotent(&one, p).unwrap(), &make_unipotent(&two, p).unwrap()).unwrap();
            assert!(g.approx_eq(&make_unipotent(&three, p).unwrap(), 0.0), "{p:?}");
        }
    }

    #[test]
    fn unipotent_dimension_mismatch() {
        assert!(make_unipotent(&[1.0, 2.0], ModelParams::sl2r()).is_err());
        assert!(make_unipotent(&[1.0], ModelParams::sl2c()).is_err());
    }

    #[test]
    fn lorentz_unipotent_preserves_form() {
        let p = ModelParams::so_n1(4).unwrap();
        let g = make_unipotent(&[0.3, -1.7, 2.2], p).unwrap();
        assert!(g.defect() < 1e-14);
    }

    #[test]
    fn lorentz_unipotent_cartan_from_cosh_identity() {
        // 2cosh(2t) = 2 + 4|x|² + |x|⁴ with x = (3): arccosh(119/2)/2
        let p = ModelParams::so_n1(2).unwrap();
        let t = cartan_t(&make_unipotent(&[3.0], p).unwrap());
        let oracle = 0.5 * (59.5f64 + (59.5f64 * 59.5 - 1.0).sqrt()).ln();
        assert!((t - oracle).abs() < 1e-12);
        assert!((t - 2.3896).abs() < 1e-4);
    }

    #[test]
    fn lorentz_unipotent_translates_horizontally() {
        let p = ModelParams::so_n1(3).unwrap();
        let g = compose(&make_unipotent(&[0.4, -1.1], p).unwrap(), &make_diag(0.7, p).unwrap()).unwrap();
        let c = iwasawa(&g);
        assert!((c.x[0] - 0.4).abs() < 1e-13 && (c.x[1] + 1.1).abs() < 1e-13);
        assert!((c.t - 0.7).abs() < 1e-13);
    }

    #[test]
    fn inverse_of_identity() {
        for p in all_models() {
            let id = GroupElement::identity(p);
            assert!(inverse(&id).approx_eq(&id, 0.0));
        }
    }

    #[test]
    fn compose_model_mismatch() {
        let g = GroupElement::identity(ModelParams::sl2r());
        let h = GroupElement::identity(ModelParams::sl2c());
        assert!(compose(&g, &h).is_err());
        let a = GroupElement::identity(ModelParams::so_n1(2).unwrap());
        let b = GroupElement::identity(ModelParams::so_n1(3).unwrap());
        assert!(compose(&a, &b).is_err());
    }

    #[test]
    fn from_matrix_validation() {
        assert!(GroupElement::from_sl2r(Sl2R::new(2.0, 0.0, 0.0, 0.5)).is_ok());
        assert!(GroupElement::from_sl2r(Sl2R::new(2.0, 0.0, 0.0, 1.0)).is_err());
        assert!(GroupElement::from_sl2r(Sl2R::new(f64::NAN, 0.0, 0.0, 1.0)).is_err());
        let mut m = DMatrix::identity(3, 3);
        assert!(GroupElement::from_lorentz(2, m.clone()).is_ok());
        m[(0, 1)] = 0.1;
        assert!(GroupElement::from_lorentz(2, m).is_err());
        assert!(GroupElement::from_lorentz(3, DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn cartan_t_of_identity_and_diag() {
        for p in all_models() {
            assert_eq!(cartan_t(&GroupElement::identity(p)), 0.0);
            for t0 in [1.0, -1.0, 5.0, -5.0] {
                let t = cartan_t(&make_diag(t0, p).unwrap());
                assert!((t - f64::abs(t0)).abs() < 1e-12, "{p:?} {t0} {t}");
            }
        }
    }

    #[test]
    fn cartan_t_of_unit_shear_matches_half_plane_distance() {
        let g = make_unipotent(&[1.0], ModelParams::sl2r()).unwrap();
        let t = cartan_t(&g);
        // singular-value oracle: σ² = (3 + √5)/2
        let sv = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        // d(i, 1+i) = arccosh(1 + 1/2)
        let dist = 1.5f64.acosh();
        assert!((t - sv).abs() < 1e-14 && (t - dist).abs() < 1e-14);
        assert!((t - 0.9624).abs() < 1e-4);
    }

    #[test]
    fn cartan_t_near_identity_is_finite() {
        for p in all_models() {
            let g = make_diag(1e-9, p).unwrap();
            let t = cartan_t(&g);
            assert!(t.is_finite() && t >= 0.0);
            let k = random_k(p, &mut ChaCha8Rng::seed_from_u64(1));
            let t = cartan_t(&k);
            assert!(t.is_finite() && t < 1e-6, "{p:?} {t}");
        }
    }

    #[test]
    fn cartan_t_equals_base_displacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in all_models() {
            let o = GroupElement::identity(p).base_point();
            for _ in 0..50 {
                let g = random_element(p, 4.0, &mut rng);
                let d = o.distance(&g.base_point());
                assert!((cartan_t(&g) - d).abs() < 1e-9, "{p:?}");
            }
        }
    }

    #[test]
    fn iwasawa_of_identity_and_rotation() {
        let p = ModelParams::sl2r();
        let c = iwasawa(&GroupElement::identity(p));
        assert_eq!(c.x, vec![0.0]);
        assert_eq!(c.t, 0.0);
        let s = GroupElement::from_sl2r(Sl2R::new(0.0, -1.0, 1.0, 0.0)).unwrap();
        let c = iwasawa(&s);
        assert!(c.x[0].abs() < 1e-15 && c.t.abs() < 1e-15);
        assert!(c.k.approx_eq(&s, 1e-15));
    }

    #[test]
    fn iwasawa_and_cartan_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in all_models() {
            for _ in 0..200 {
                let g = random_element(p, 6.0, &mut rng);
                let iw = iwasawa(&g);
                assert!(recompose_iwasawa(&iw).unwrap().approx_eq(&g, 1e-8), "{p:?}");
                assert!(iw.k.defect() < 1e-9 && cartan_t(&iw.k) < 1e-6, "{p:?} {} {}", iw.k.defect(), cartan_t(&iw.k));
                let ca = cartan(&g);
                assert!(ca.t >= 0.0);
                assert!(recompose_cartan(&ca).unwrap().approx_eq(&g, 1e-8), "{p:?}");
                assert!(cartan_t(&ca.k1) < 1e-6 && cartan_t(&ca.k2) < 1e-6);
            }
        }
    }

    #[test]
    fn cartan_of_large_displacement_keeps_frames_compact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in [ModelParams::sl2r(), ModelParams::sl2c()] {
            let k1 = random_k(p, &mut rng);
            let k2 = random_k(p, &mut rng);
            let g = k1.mul(&make_diag(30.0, p).unwrap()).mul(&k2);
            let c = cartan(&g);
            assert!((c.t - 30.0).abs() < 1e-9);
            assert!(c.k1.defect() < 1e-9 && c.k2.defect() < 1e-9);
            assert!(cartan_t(&c.k2) < 1e-5, "{p:?}");
        }
    }

    #[test]
    fn renormalize_fixed_point_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in all_models() {
            let g = random_element(p, 2.0, &mut rng);
            let r = renormalize(&g).unwrap();
            assert!(r.max_abs_diff(&g) < 1e-14 * g.max_abs().max(1.0) * 10.0, "{p:?}");
        }
        let g = make_unipotent(&[0.7], ModelParams::sl2r()).unwrap();
        let scaled = GroupElement::real_unchecked(g.as_sl2r().unwrap().scale(1.0 + 1e-6));
        let r = renormalize(&scaled).unwrap();
        assert!(r.defect() < 1e-14);
    }

    #[test]
    fn renormalize_repairs_lorentz_drift() {
        let p = ModelParams::so_n1(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_element(p, 2.0, &mut rng);
        let noisy = g.as_lorentz().unwrap().map(|v| v * (1.0 + 1e-7));
        let r = renormalize(&GroupElement::lorentz_unchecked(noisy, p)).unwrap();
        assert!(r.defect() < 1e-12);
    }

    #[test]
    fn renormalize_rejects_large_drift() {
        let g = GroupElement::real_unchecked(Sl2R::new(1.1, 0.0, 0.0, 1.0));
        assert!(matches!(renormalize(&g), Err(Error::Drift { .. })));
    }

    #[test]
    fn long_products_stay_on_group_with_renormalization() {
        // Elements of the compact subgroup a_s K a_{-s} keep products bounded.
        for p in [ModelParams::sl2r(), ModelParams::sl2c(), ModelParams::so_n1(3).unwrap()] {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let a = make_diag(0.5, p).unwrap();
            let a_inv = inverse(&a);
            let gens: Vec<GroupElement> =
                (0..64).map(|_| a.mul(&random_k(p, &mut rng)).mul(&a_inv)).collect();
            let steps = if p.model() == Model::SoN1 { 200_000 } else { 1_000_000 };
            let mut g = GroupElement::identity(p);
            let mut worst: f64 = 0.0;
            for i in 1..=steps {
                g.mul_assign_right(&gens[rng.random_range(0..gens.len())]);
                if i % 1000 == 0 {
                    worst = worst.max(g.defect());
                    g = renormalize(&g).unwrap();
                }
            }
            assert!(worst < 1e-9, "{p:?} defect {worst:e}");
        }
    }

    #[test]
    fn base_distance_formulas() {
        let i = BasePoint::Plane(Complex64::new(0.0, 1.0));
        let two_i = BasePoint::Plane(Complex64::new(0.0, 2.0));
        assert!((i.distance(&two_i) - 2f64.ln()).abs() < 1e-15);
        let j = BasePoint::Space { z: C0, r: 1.0 };
        let p = BasePoint::Space { z: Complex64::new(1.0, 0.0), r: 1.0 };
        // cosh d = 1 + 1/2
        assert!((j.distance(&p) - 1.5f64.acosh()).abs() < 1e-14);
    }

    #[test]
    fn sl2c_action_matches_real_action_on_real_matrices() {
        let m = Sl2R::new(2.0, 1.0, 3.0, 2.0);
        let c = Sl2C::new(m.a.into(), m.b.into(), m.c.into(), m.d.into());
        let (z, r) = c.act(Complex64::new(0.3, 0.0), 0.8);
        let w = m.act(Complex64::new(0.3, 0.8));
        assert!((z.re - w.re).abs() < 1e-14 && z.im.abs() < 1e-14 && (r - w.im).abs() < 1e-14);
    }

    #[test]
    fn powers_of_conjugated_diag_grow_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in [ModelParams::sl2r(), ModelParams::sl2c(), ModelParams::so_n1(3).unwrap()] {
            let tau = random_element(p, 3.0, &mut rng);
            let g1 = inverse(&tau).mul(&make_diag(0.7, p).unwrap()).mul(&tau);
            let ts = cartan_t_along_powers(&g1, 3000);
            let bound = 2.0 * cartan_t(&tau) + 1e-6;
            for (i, t) in ts.iter().enumerate() {
                let m = (i + 1) as f64;
                assert!((t - 0.7 * m).abs() <= bound, "{p:?} m={m} t={t}");
            }
        }
    }

    proptest! {
        #[test]
        fn one_parameter_laws(s in -10.0f64..10.0, t in -10.0f64..10.0,
                              x in proptest::collection::vec(-10.0f64..10.0, 4),
                              y in proptest::collection::vec(-10.0f64..10.0, 4)) {
            for p in all_models() {
                let (a, b) = (make_diag(s, p).unwrap(), make_diag(t, p).unwrap());
                let lhs = compose(&a, &b).unwrap();
                prop_assert!(lhs.max_abs_diff(&make_diag(s + t, p).unwrap()) <= 1e-10 * product_scale(&a, &b));
                let d = p.horizontal_dim();
                let sum: Vec<f64> = (0..d).map(|i| x[i] + y[i]).collect();
                let (a, b) = (make_unipotent(&x[..d], p).unwrap(), make_unipotent(&y[..d], p).unwrap());
                let lhs = compose(&a, &b).unwrap();
                prop_assert!(lhs.max_abs_diff(&make_unipotent(&sum, p).unwrap()) <= 1e-10 * product_scale(&a, &b));
            }
        }

        #[test]
        fn inverse_is_two_sided(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in all_models() {
                let g = random_element(p, 1.5, &mut rng);
                let e = compose(&g, &inverse(&g)).unwrap();
                prop_assert!(e.approx_eq(&GroupElement::identity(p), 1e-10));
            }
        }

        #[test]
        fn cartan_t_bi_invariance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in all_models() {
                let g = random_element(p, 5.0, &mut rng);
                let t = cartan_t(&g);
                prop_assert!((cartan_t(&inverse(&g)) - t).abs() < 1e-8);
                let k1 = random_k(p, &mut rng);
                let k2 = random_k(p, &mut rng);
                prop_assert!((cartan_t(&k1.mul(&g).mul(&k2)) - t).abs() < 1e-8);
            }
        }

        #[test]
        fn cartan_unipotent_growth(x0 in -1e4f64..1e4, x1 in -1e4f64..1e4) {
            let nrm = (x0 * x0 + x1 * x1).sqrt();
            prop_assume!(nrm >= 2.0);
            let bound = if nrm >= 10.0 { 0.05 } else { 0.8 };
            for (p, x) in [(ModelParams::sl2r(), vec![nrm]), (ModelParams::sl2c(), vec![x0, x1]),
                           (ModelParams::so_n1(3).unwrap(), vec![x0, x1])] {
                let t = cartan_t(&make_unipotent(&x, p).unwrap());
                prop_assert!((t - 2.0 * nrm.ln()).abs() <= bound);
            }
        }
    }
}
