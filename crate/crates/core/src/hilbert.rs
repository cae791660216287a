//! Finite-dimensional Hilbert-space primitives: states, Hermitian operators,
//! projectors and Heisenberg-picture evolution.
//!
//! Units use ħ = 1 and times are dimensionless labels. All matrices are dense
//! `Complex64`; the intended scale is d ≤ 64.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const TOL_NORM: f64 = 1e-12;
pub const TOL_OP: f64 = 1e-10;
pub const TOL_HERMITIAN: f64 = 1e-12;

/// Numerical tolerances applied when validating constructed objects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub norm: f64,
    pub operator: f64,
    pub hermitian: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            norm: TOL_NORM,
            operator: TOL_OP,
            hermitian: TOL_HERMITIAN,
        }
    }
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub(crate) fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidConfig("zero-dimensional matrix".into()));
    }
    Ok(m.nrows())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Unit-norm pure state |Ψ⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        Self::with_tolerance(amplitudes, TOL_NORM)
    }

    pub fn with_tolerance(amplitudes: CVector, tol: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidConfig("empty state vector".into()));
        }
        let defect = (amplitudes.norm() - 1.0).abs();
        if defect > tol {
            return Err(Error::invariant("state_norm", defect));
        }
        Ok(StateVector { amplitudes })
    }

    /// Rescales a non-zero vector to unit norm.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let n = amplitudes.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invariant("state_norm", n));
        }
        Ok(StateVector {
            amplitudes: amplitudes.unscale(n),
        })
    }

    /// The computational basis vector |i⟩.
    pub fn basis(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(Error::IndexOutOfRange {
                slot: 0,
                index: i,
                size: dim,
            });
        }
        let mut v = CVector::zeros(dim);
        v[i] = Complex64::new(1.0, 0.0);
        Ok(StateVector { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// Tensor product, leftmost factor slowest-varying.
    pub fn kron(&self, other: &StateVector) -> StateVector {
        StateVector {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: CMatrix,
}

impl HermitianOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        check_square(&entries)?;
        let defect = hermiticity_defect(&entries);
        if defect > TOL_HERMITIAN {
            return Err(Error::invariant("hermitian", defect));
        }
        Ok(HermitianOperator { entries })
    }

    pub fn zero(dim: usize) -> Self {
        HermitianOperator {
            entries: CMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }
}

/// Orthogonal projection operator with a human-readable label.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    entries: CMatrix,
    label: String,
}

impl Projector {
    pub fn new(entries: CMatrix, label: impl Into<String>) -> Result<Self> {
        Self::with_tolerances(entries, label, &Tolerances::default())
    }

    pub fn with_tolerances(
        entries: CMatrix,
        label: impl Into<String>,
        tol: &Tolerances,
    ) -> Result<Self> {
        check_square(&entries)?;
        let herm = hermiticity_defect(&entries);
        if herm > tol.hermitian {
            return Err(Error::invariant("projector_hermitian", herm));
        }
        let idem = max_abs(&(&entries * &entries - &entries));
        if idem > tol.operator {
            return Err(Error::invariant("projector_idempotent", idem));
        }
        Ok(Projector {
            entries,
            label: label.into(),
        })
    }

    /// Rank-one projector |v⟩⟨v| onto the direction of a non-zero vector.
    pub fn onto(v: &CVector, label: impl Into<String>) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) {
            return Err(Error::invariant("projector_direction_norm", n));
        }
        let u = v.unscale(n);
        Ok(Projector {
            entries: &u * u.adjoint(),
            label: label.into(),
        })
    }

    /// Sum of computational-basis projectors |i⟩⟨i| for `i` in `indices`.
    pub fn basis_subset(dim: usize, indices: &[usize], label: impl Into<String>) -> Result<Self> {
        let mut m = CMatrix::zeros(dim, dim);
        for &i in indices {
            if i >= dim {
                return Err(Error::IndexOutOfRange {
                    slot: 0,
                    index: i,
                    size: dim,
                });
            }
            if m[(i, i)].re != 0.0 {
                return Err(Error::invariant("basis_subset_distinct", 1.0));
            }
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        Ok(Projector {
            entries: m,
            label: label.into(),
        })
    }

    pub fn zero(dim: usize, label: impl Into<String>) -> Self {
        Projector {
            entries: CMatrix::zeros(dim, dim),
            label: label.into(),
        }
    }

    pub fn identity(dim: usize, label: impl Into<String>) -> Self {
        Projector {
            entries: CMatrix::identity(dim, dim),
            label: label.into(),
        }
    }

    /// I − P.
    pub fn complement(&self, label: impl Into<String>) -> Projector {
        let dim = self.dim();
        Projector {
            entries: CMatrix::identity(dim, dim) - &self.entries,
            label: label.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rank(&self) -> usize {
        self.entries.trace().re.round().max(0.0) as usize
    }

    pub(crate) fn from_parts_unchecked(entries: CMatrix, label: String) -> Projector {
        Projector { entries, label }
    }
}

/// Defects measured by [`validate_projector_set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorSetReport {
    pub completeness_defect: f64,
    pub exclusivity_defect: f64,
    pub idempotency_defects: Vec<f64>,
    pub pass: bool,
}

impl ProjectorSetReport {
    pub fn max_defect(&self) -> f64 {
        self.idempotency_defects
            .iter()
            .copied()
            .fold(self.completeness_defect.max(self.exclusivity_defect), f64::max)
    }
}

/// Checks Σ P = I, P_a P_b = δ_ab P_a and per-member idempotency.
pub fn validate_projector_set(members: &[Projector], tol: f64) -> Result<ProjectorSetReport> {
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty projector set".into()))?;
    let dim = first.dim();
    for p in members {
        check_dim(dim, p.dim())?;
    }
    let mut sum = CMatrix::zeros(dim, dim);
    for p in members {
        sum += p.entries();
    }
    let completeness_defect = max_abs(&(sum - CMatrix::identity(dim, dim)));

    let mut exclusivity_defect: f64 = 0.0;
    let mut idempotency_defects = Vec::with_capacity(members.len());
    for (a, pa) in members.iter().enumerate() {
        for (b, pb) in members.iter().enumerate() {
            let prod = pa.entries() * pb.entries();
            if a == b {
                idempotency_defects.push(max_abs(&(prod - pa.entries())));
            } else {
                exclusivity_defect = exclusivity_defect.max(max_abs(&prod));
            }
        }
    }
    let mut report = ProjectorSetReport {
        completeness_defect,
        exclusivity_defect,
        idempotency_defects,
        pass: false,
    };
    report.pass = report.max_defect() <= tol;
    Ok(report)
}

/// Exhaustive, mutually exclusive projectors attached to one time label.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSet {
    members: Vec<Projector>,
    time: f64,
}

impl ProjectorSet {
    pub fn new(members: Vec<Projector>, time: f64) -> Result<Self> {
        Self::with_tolerance(members, time, TOL_OP)
    }

    pub fn with_tolerance(members: Vec<Projector>, time: f64, tol: f64) -> Result<Self> {
        if !time.is_finite() {
            return Err(Error::InvalidConfig(format!("non-finite time {time}")));
        }
        let report = validate_projector_set(&members, tol)?;
        if !report.pass {
            let (name, magnitude) = if report.completeness_defect > tol {
                ("completeness", report.completeness_defect)
            } else if report.exclusivity_defect > tol {
                ("exclusivity", report.exclusivity_defect)
            } else {
                ("idempotency", report.max_defect())
            };
            return Err(Error::invariant(name, magnitude));
        }
        Ok(ProjectorSet { members, time })
    }

    /// One rank-1 projector per computational basis vector.
    pub fn computational_basis(dim: usize, time: f64) -> Self {
        let members = (0..dim)
            .map(|i| {
                Projector::basis_subset(dim, &[i], format!("{i}")).expect("index within dim")
            })
            .collect();
        ProjectorSet { members, time }
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn members(&self) -> &[Projector] {
        &self.members
    }

    pub fn labels(&self) -> Vec<String> {
        self.members.iter().map(|p| p.label.clone()).collect()
    }

    /// Evolves every member into the Heisenberg picture at this set's time.
    pub fn heisenberg(&self, evo: &EvolutionSpec) -> Result<ProjectorSet> {
        let members = self
            .members
            .iter()
            .map(|p| heisenberg_projector(p, self.time, evo))
            .collect::<Result<Vec<_>>>()?;
        ProjectorSet::with_tolerance(members, self.time, 10.0 * TOL_OP)
    }
}

/// Dynamics used to move Schrödinger-picture projectors into the Heisenberg picture.
#[derive(Debug, Clone, PartialEq)]
pub enum EvolutionSpec {
    Hamiltonian(HermitianOperator),
    /// Explicit U(t) for each time that will be requested.
    Unitaries(Vec<(f64, CMatrix)>),
}

impl EvolutionSpec {
    pub fn zero(dim: usize) -> Self {
        EvolutionSpec::Hamiltonian(HermitianOperator::zero(dim))
    }

    pub fn unitaries(list: Vec<(f64, CMatrix)>) -> Result<Self> {
        for (_, u) in &list {
            let d = check_square(u)?;
            let defect = max_abs(&(u.adjoint() * u - CMatrix::identity(d, d)));
            if defect > TOL_OP {
                return Err(Error::invariant("unitary", defect));
            }
        }
        Ok(EvolutionSpec::Unitaries(list))
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            EvolutionSpec::Hamiltonian(h) => Some(h.dim()),
            EvolutionSpec::Unitaries(list) => list.first().map(|(_, u)| u.nrows()),
        }
    }

    /// U(t) = e^{-iHt}, or the supplied matrix for that time.
    pub fn propagator(&self, t: f64) -> Result<CMatrix> {
        match self {
            EvolutionSpec::Hamiltonian(h) => hermitian_exponential(h, t),
            EvolutionSpec::Unitaries(list) => list
                .iter()
                .find(|(time, _)| *time == t)
                .map(|(_, u)| u.clone())
                .ok_or(Error::MissingUnitary { time: t }),
        }
    }
}

/// e^{-iHt} through the Hermitian eigendecomposition H = V Λ V†.
pub fn hermitian_exponential(h: &HermitianOperator, t: f64) -> Result<CMatrix> {
    if !t.is_finite() {
        return Err(Error::InvalidConfig(format!("non-finite time {t}")));
    }
    let dim = h.dim();
    if t == 0.0 || max_abs(h.entries()) == 0.0 {
        return Ok(CMatrix::identity(dim, dim));
    }
    let eig = nalgebra::SymmetricEigen::try_new(h.entries().clone(), f64::EPSILON, 10_000)
        .ok_or(Error::EigenFailure)?;
    let phases = CVector::from_iterator(
        dim,
        eig.eigenvalues
            .iter()
            .map(|&lambda| Complex64::from_polar(1.0, -lambda * t)),
    );
    let v = &eig.eigenvectors;
    let u = v * CMatrix::from_diagonal(&phases) * v.adjoint();
    let defect = max_abs(&(u.adjoint() * &u - CMatrix::identity(dim, dim)));
    if defect > TOL_OP {
        return Err(Error::invariant("unitary", defect));
    }
    Ok(u)
}

/// P(t) = U(t)† P U(t) with U(t) = e^{-iHt}.
pub fn heisenberg_projector(p: &Projector, t: f64, evo: &EvolutionSpec) -> Result<Projector> {
    if let Some(d) = evo.dim() {
        check_dim(p.dim(), d)?;
    }
    let u = evo.propagator(t)?;
    check_dim(p.dim(), u.nrows())?;
    let evolved = u.adjoint() * p.entries() * &u;
    let tol = Tolerances {
        operator: 10.0 * TOL_OP,
        hermitian: 1e-9,
        ..Tolerances::default()
    };
    Projector::with_tolerances(evolved, p.label.clone(), &tol)
}
