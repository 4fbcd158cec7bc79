//! Spherical functions of SO(n,1) and their decay envelopes.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fit::{least_squares, LinearFit};
use crate::flows::FlowSpec;
use crate::quadrature::{integrate_complex, Tolerance};

const QUAD_REL: f64 = 1e-11;
const ENVELOPE_T_RANGE: (f64, f64) = (1.0, 40.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalPoint {
    pub s: Complex64,
    pub t: f64,
    pub value: Complex64,
}

/// ∫₀^π sin^k θ dθ.
fn sine_power_integral(k: usize) -> f64 {
    let mut even = std::f64::consts::PI;
    let mut odd = 2.0;
    for j in 2..=k {
        let next = (j as f64 - 1.0) / j as f64 * if j % 2 == 0 { even } else { odd };
        if j % 2 == 0 {
            even = next;
        } else {
            odd = next;
        }
    }
    if k % 2 == 0 { even } else { odd }
}

fn check_parameter(s: Complex64, n: usize) -> Result<f64> {
    if n < 2 {
        return invalid(format!("spherical functions need n ≥ 2, got {n}"));
    }
    let rho = (n as f64 - 1.0) / 2.0;
    let tempered = s.re == 0.0 && s.im.is_finite();
    let complementary = s.im == 0.0 && s.re >= 0.0 && s.re <= rho;
    if !(tempered || complementary) {
        return invalid(format!("spectral parameter {s} must be imaginary or real in (0, {rho}]"));
    }
    Ok(rho)
}

/// φ_s(a_t) = ∫₀^π (cosh t + sinh t cos θ)^{s−ρ} sin^{n−2}θ dθ / ∫₀^π sin^{n−2}θ dθ.
///
/// cosh t + sinh t cos θ = e^t cos²(θ/2) + e^{−t} sin²(θ/2); the half θ ≤ π/2 is
/// integrated directly and the half near θ = π in ψ = ln(π − θ), where the
/// integrand concentrates at scale e^{−t}.
pub fn spherical_fn(s: Complex64, t: f64, n: usize) -> Result<Complex64> {
    let rho = check_parameter(s, n)?;
    if !(t >= 0.0 && t.is_finite()) {
        return invalid(format!("Cartan coordinate must be finite and ≥ 0, got {t}"));
    }
    if t == 0.0 || s == Complex64::new(rho, 0.0) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let k = n - 2;
    let e = s - rho;
    let damp = (-2.0 * t).exp();
    // ln(e^t c² + e^{−t} q²) with c, q the cosine and sine of the half angle.
    let log_base = |c2: f64, q2: f64| t + (c2 + damp * q2).ln();
    let tol = Tolerance { relative_to_mass: true, ..Tolerance::relative(QUAD_REL) };

    let near = integrate_complex(
        |theta| {
            let h = 0.5 * theta;
            (e * log_base(h.cos().powi(2), h.sin().powi(2))).exp() * theta.sin().powi(k as i32)
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
        tol,
    )?;
    let phi_min = 1e-8 * (-t).exp().min(1.0);
    let far = integrate_complex(
        |psi| {
            let phi = psi.exp();
            let h = 0.5 * phi;
            (e * log_base(h.sin().powi(2), h.cos().powi(2))).exp() * phi.sin().powi(k as i32) * phi
        },
        phi_min.ln(),
        std::f64::consts::FRAC_PI_2.ln(),
        tol,
    )?;
    // On [0, φ_min] the base is e^{−t} to relative order 1e−16.
    let head = (e * -t).exp() * phi_min.powi(k as i32 + 1) / (k as f64 + 1.0);
    let total = near.value + far.value + head;
    let mass = near.mass + far.mass;
    let error = near.error + far.error;
    if error > 1e-8 * mass.max(f64::MIN_POSITIVE) {
        return Err(Error::Precision { achieved: error / mass, requested: 1e-8 });
    }
    Ok(total / sine_power_integral(k))
}

pub fn spherical_point(s: Complex64, t: f64, n: usize) -> Result<SphericalPoint> {
    Ok(SphericalPoint { s, t, value: spherical_fn(s, t, n)? })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayEnvelope {
    /// Fit of ln|φ_s| against t for real s > 0; the slope estimates s − ρ.
    pub fit: Option<LinearFit>,
    /// e^{intercept} for real s, sup |φ_s(a_t)| e^{ρt}/t otherwise.
    pub constant: f64,
}

impl DecayEnvelope {
    pub fn exponent(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }
}

pub fn decay_envelope_check(s: Complex64, t_grid: &[f64], n: usize) -> Result<DecayEnvelope> {
    let rho = check_parameter(s, n)?;
    if t_grid.len() < 2 || t_grid.iter().any(|t| !(ENVELOPE_T_RANGE.0..=ENVELOPE_T_RANGE.1).contains(t)) {
        return invalid("decay envelope grid needs at least two points in [1, 40]");
    }
    let values = t_grid.iter().map(|&t| spherical_fn(s, t, n)).collect::<Result<Vec<_>>>()?;
    if s.im == 0.0 && s.re > 0.0 {
        let logs: Vec<f64> = values.iter().map(|v| v.norm().ln()).collect();
        let fit = least_squares(t_grid, &logs)?;
        Ok(DecayEnvelope { fit: Some(fit), constant: fit.intercept.exp() })
    } else {
        let sup = t_grid
            .iter()
            .zip(&values)
            .map(|(t, v)| v.norm() * (rho * t).exp() / t)
            .fold(0.0, f64::max);
        Ok(DecayEnvelope { fit: None, constant: sup })
    }
}

/// Exceptional spherical exponents of a lattice and the resulting gap.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralConfig {
    exceptional_exponents: Vec<f64>,
    rho: f64,
    spectral_gap: f64,
    /// Exponential decay rate of smooth matrix coefficients along a_t.
    pub decay_alpha: f64,
}

impl SpectralConfig {
    pub fn new(exceptional_exponents: Vec<f64>, rho: f64) -> Result<Self> {
        if let Some(bad) = exceptional_exponents.iter().find(|s| !(**s > 0.0 && **s < rho)) {
            return invalid(format!("exceptional exponent {bad} must lie in (0, {rho})"));
        }
        let top = exceptional_exponents.iter().cloned().fold(0.0, f64::max);
        let spectral_gap = rho - top;
        Ok(Self { exceptional_exponents, rho, spectral_gap, decay_alpha: spectral_gap })
    }

    /// No exceptional spectrum, the default for both built-in lattices.
    pub fn tempered(rho: f64) -> Self {
        Self::new(Vec::new(), rho).expect("empty list is valid")
    }

    pub fn exceptional_exponents(&self) -> &[f64] {
        &self.exceptional_exponents
    }

    pub fn spectral_gap(&self) -> f64 {
        self.spectral_gap
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Predicted L² decay exponent of forward-ball averages over m^d flow elements.
    ///
    /// Diagonal flows have summable correlations, giving d/2. Along unipotent
    /// directions coefficients decay like ‖x‖^{−2(ρ−s)}, which caps the rate at the gap.
    pub fn predicted_kappa(&self, spec: &FlowSpec) -> f64 {
        let half = spec.rank() as f64 / 2.0;
        if spec.is_unipotent() { half.min(self.spectral_gap) } else { half }
    }
}
