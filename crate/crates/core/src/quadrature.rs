//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    /// Measure the relative tolerance against ∫|f| instead of |∫f|; needed for
    /// oscillating integrands whose value may cancel to nearly zero.
    pub relative_to_mass: bool,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self { abs: 0.0, rel, relative_to_mass: false, max_intervals: 2000 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    /// Estimate of ∫|f|.
    pub mass: f64,
}

#[derive(Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    mass: f64,
}

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut mass = fc.norm() * WGK[7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        kron += (f1 + f2) * WGK[j];
        mass += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    Piece { a, b, value: kron * h, error: ((kron - gauss) * h).norm(), mass: mass * h.abs() }
}

/// ∫_a^b f for complex-valued f.
pub fn integrate_complex<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Estimate<Complex64>> {
    let mut pieces = vec![gk15(&mut f, a, b)];
    loop {
        let value: Complex64 = pieces.iter().map(|p| p.value).sum();
        let error: f64 = pieces.iter().map(|p| p.error).sum();
        let mass: f64 = pieces.iter().map(|p| p.mass).sum();
        let scale = if tol.relative_to_mass { mass } else { value.norm() };
        let target = tol.abs.max(tol.rel * scale);
        if error <= target || !error.is_finite() {
            if !value.is_finite() {
                return Err(Error::Precision { achieved: f64::INFINITY, requested: target });
            }
            return Ok(Estimate { value, error, mass });
        }
        if pieces.len() >= tol.max_intervals {
            return Err(Error::Precision { achieved: error, requested: target });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.error > acc.1 { (i, p.error) } else { acc });
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::Precision { achieved: error, requested: target });
        }
        pieces.push(gk15(&mut f, p.a, mid));
        pieces.push(gk15(&mut f, mid, p.b));
    }
}

/// ∫_a^b f for real-valued f.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate<f64>> {
    let e = integrate_complex(|x| Complex64::new(f(x), 0.0), a, b, tol)?;
    Ok(Estimate { value: e.value.re, error: e.error, mass: e.mass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let e = integrate(|x| x.powi(6) - 2.0 * x, 0.0, 2.0, Tolerance::relative(1e-14)).unwrap();
        assert!((e.value - (128.0 / 7.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand() {
        // ∫_0^1 1/(1e-4 + x²) = atan(100)/1e-2
        let e = integrate(|x| 1.0 / (1e-4 + x * x), 0.0, 1.0, Tolerance::relative(1e-12)).unwrap();
        assert!((e.value - 100f64.atan() * 100.0).abs() < 1e-9);
    }

    #[test]
    fn oscillating_complex() {
        let tol = Tolerance { relative_to_mass: true, ..Tolerance::relative(1e-12) };
        let e = integrate_complex(|x| Complex64::new(0.0, 20.0 * x).exp(), 0.0, std::f64::consts::PI, tol).unwrap();
        assert!(e.value.norm() < 1e-12);
        assert!((e.mass - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn non_convergence_reports_precision() {
        let tol = Tolerance { max_intervals: 4, ..Tolerance::relative(1e-15) };
        let r = integrate(|x| (1.0 / x).sin(), 1e-6, 1.0, tol);
        assert!(matches!(r, Err(Error::Precision { .. })));
    }
}
