//! Discrete diagonalizable flows, unipotent ℤᵈ actions and long-orbit
//! iteration on the quotient.

use crate::error::{invalid, Result};
use crate::group::{inverse, make_diag, make_unipotent, renormalize, GroupElement, ModelParams};
use crate::lattice::{Lattice, QuotientPoint};

pub const DEFAULT_RENORM_CADENCE: u32 = 1024;

#[derive(Clone, Debug)]
pub enum FlowKind {
    /// g_m = τ⁻¹ a_{cm} τ.
    Diagonalizable { step: f64, conjugator: GroupElement },
    /// h_k = n_{Σ kᵢ bᵢ}.
    Unipotent { basis: Vec<Vec<f64>> },
}

#[derive(Clone, Debug)]
pub struct FlowSpec {
    kind: FlowKind,
    params: ModelParams,
    /// Unit steps g_{e_i}, one per axis.
    generators: Vec<GroupElement>,
}

impl FlowSpec {
    pub fn diagonal(step: f64, params: ModelParams) -> Result<Self> {
        Self::diagonal_conjugated(step, GroupElement::identity(params))
    }

    pub fn diagonal_conjugated(step: f64, conjugator: GroupElement) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return invalid(format!("diagonal step must be positive and finite, got {step}"));
        }
        let params = conjugator.params();
        let g1 = inverse(&conjugator).mul(&make_diag(step, params)?).mul(&conjugator);
        Ok(Self { kind: FlowKind::Diagonalizable { step, conjugator }, params, generators: vec![g1] })
    }

    pub fn unipotent(basis: Vec<Vec<f64>>, params: ModelParams) -> Result<Self> {
        let d = basis.len();
        let dim = params.horizontal_dim();
        if d == 0 || d > dim {
            return invalid(format!("unipotent rank must lie in 1..={dim}, got {d}"));
        }
        if basis.iter().any(|b| b.len() != dim) {
            return invalid(format!("basis vectors must have dimension {dim}"));
        }
        let gram = nalgebra::DMatrix::from_fn(d, d, |i, j| {
            basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum::<f64>()
        });
        let scale: f64 = (0..d).map(|i| gram[(i, i)]).product();
        if !(gram.determinant() > 1e-12 * scale) {
            return invalid("unipotent basis vectors are linearly dependent");
        }
        let generators = basis.iter().map(|b| make_unipotent(b, params)).collect::<Result<Vec<_>>>()?;
        Ok(Self { kind: FlowKind::Unipotent { basis }, params, generators })
    }

    /// Unipotent action along the first `rank` standard basis vectors.
    pub fn unipotent_standard(rank: usize, params: ModelParams) -> Result<Self> {
        let dim = params.horizontal_dim();
        let basis = (0..rank)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::unipotent(basis, params)
    }

    pub fn kind(&self) -> &FlowKind {
        &self.kind
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn is_unipotent(&self) -> bool {
        matches!(self.kind, FlowKind::Unipotent { .. })
    }

    pub fn generator(&self, axis: usize) -> &GroupElement {
        &self.generators[axis]
    }

    /// g_k for k ∈ ℤᵈ.
    pub fn flow_element(&self, k: &[i64]) -> Result<GroupElement> {
        if k.len() != self.rank() {
            return invalid(format!("index has {} components, flow rank is {}", k.len(), self.rank()));
        }
        match &self.kind {
            FlowKind::Diagonalizable { step, conjugator } => Ok(inverse(conjugator)
                .mul(&make_diag(step * k[0] as f64, self.params)?)
                .mul(conjugator)),
            FlowKind::Unipotent { basis } => {
                let mut x = vec![0.0; self.params.horizontal_dim()];
                for (ki, b) in k.iter().zip(basis) {
                    for (xj, bj) in x.iter_mut().zip(b) {
                        *xj += *ki as f64 * bj;
                    }
                }
                make_unipotent(&x, self.params)
            }
        }
    }

    /// Lexicographic enumeration of H⁺_m = {g_k : k ∈ {1..m}ᵈ}.
    pub fn forward_ball(&self, m: u64) -> Result<ForwardBall<'_>> {
        if m == 0 {
            return invalid("forward ball needs m ≥ 1");
        }
        Ok(ForwardBall { spec: self, m, next: Some(vec![1; self.rank()]) })
    }
}

pub struct ForwardBall<'a> {
    spec: &'a FlowSpec,
    m: u64,
    next: Option<Vec<u64>>,
}

impl Iterator for ForwardBall<'_> {
    type Item = (Vec<u64>, GroupElement);

    fn next(&mut self) -> Option<Self::Item> {
        let k = self.next.take()?;
        let ki: Vec<i64> = k.iter().map(|&v| v as i64).collect();
        let g = self.spec.flow_element(&ki).expect("rank matches");
        let mut succ = k.clone();
        let mut axis = succ.len();
        while axis > 0 {
            axis -= 1;
            if succ[axis] < self.m {
                succ[axis] += 1;
                self.next = Some(succ);
                break;
            }
            succ[axis] = 1;
        }
        Some((k, g))
    }
}

/// Orbit x g_1, x g_2, … along one axis, reduced after every step.
#[derive(Clone, Debug)]
pub struct OrbitCursor<'a> {
    lattice: &'a Lattice,
    step: GroupElement,
    current: QuotientPoint,
    m: u64,
    cadence: u32,
    since_renorm: u32,
}

impl<'a> OrbitCursor<'a> {
    pub fn new(start: &QuotientPoint, spec: &FlowSpec, lattice: &'a Lattice) -> Result<Self> {
        Self::along(start, spec, 0, lattice)
    }

    /// Cursor stepping by the generator of the given axis.
    pub fn along(start: &QuotientPoint, spec: &FlowSpec, axis: usize, lattice: &'a Lattice) -> Result<Self> {
        if spec.params() != lattice.params() {
            return invalid("flow and lattice use different models");
        }
        if axis >= spec.rank() {
            return invalid(format!("axis {axis} out of range for rank {}", spec.rank()));
        }
        Ok(Self {
            lattice,
            step: spec.generator(axis).clone(),
            current: start.clone(),
            m: 0,
            cadence: DEFAULT_RENORM_CADENCE,
            since_renorm: 0,
        })
    }

    pub fn with_cadence(mut self, cadence: u32) -> Result<Self> {
        if cadence == 0 {
            return invalid("renormalization cadence must be ≥ 1");
        }
        self.cadence = cadence;
        Ok(self)
    }

    pub fn current(&self) -> &QuotientPoint {
        &self.current
    }

    pub fn step_index(&self) -> u64 {
        self.m
    }

    /// current ← reduce(current · g₁).
    #[inline]
    pub fn advance(&mut self) -> Result<&QuotientPoint> {
        self.current.rep_mut().mul_assign_right(&self.step);
        self.since_renorm += 1;
        if self.since_renorm >= self.cadence {
            *self.current.rep_mut() = renormalize(self.current.rep())?;
            self.since_renorm = 0;
        }
        self.lattice.reduce_point(&mut self.current)?;
        self.m += 1;
        Ok(&self.current)
    }
}

/// Visit x h for every h ∈ H⁺_m in row-major order of k, calling
/// `f(k, point)`. Prefix products along the leading axes are reused, so
/// the walk costs O(mᵈ) group operations.
pub fn walk_forward_ball<F>(start: &QuotientPoint, spec: &FlowSpec, lattice: &Lattice, m: u64, mut f: F) -> Result<()>
where
    F: FnMut(&[u64], &QuotientPoint) -> Result<()>,
{
    if m == 0 {
        return invalid("forward ball needs m ≥ 1");
    }
    let mut k = vec![0u64; spec.rank()];
    walk_axis(start, spec, lattice, m, 0, &mut k, &mut f)
}

fn walk_axis<F>(
    point: &QuotientPoint,
    spec: &FlowSpec,
    lattice: &Lattice,
    m: u64,
    axis: usize,
    k: &mut Vec<u64>,
    f: &mut F,
) -> Result<()>
where
    F: FnMut(&[u64], &QuotientPoint) -> Result<()>,
{
    let mut cursor = OrbitCursor::along(point, spec, axis, lattice)?;
    let last = axis + 1 == spec.rank();
    for j in 1..=m {
        cursor.advance()?;
        k[axis] = j;
        if last {
            f(k, cursor.current())?;
        } else {
            walk_axis(cursor.current(), spec, lattice, m, axis + 1, k, f)?;
        }
    }
    Ok(())
}
