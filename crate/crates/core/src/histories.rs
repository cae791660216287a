//! Sets of alternative histories built from chains of Heisenberg-picture
//! projectors, and the quantities evaluated on them: extended probabilities,
//! Born-rule (decoherent) probabilities and the decoherence functional.
//!
//! Histories are addressed either by a [`HistoryIndex`] (one alternative per
//! time slot) or by a flat index. Flattening is row-major with the earliest
//! time varying fastest: `flat = a_1 + n_1 * (a_2 + n_2 * (a_3 + ...))`.

use num_complex::Complex64;
use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{check_dim, CMatrix, CVector, EvolutionSpec, ProjectorSet, StateVector};

pub const DEFAULT_DECOHERENCE_TOL: f64 = 1e-8;
pub const DEFAULT_HISTORY_CAP: usize = 4096;

/// Anything that supplies an exhaustive family of class operators over a
/// common Hilbert space, addressed by flat index.
pub trait HistoryFamily {
    fn dim(&self) -> usize;

    fn history_count(&self) -> usize;

    fn class_operator_at(&self, flat: usize) -> Result<CMatrix>;

    fn history_label(&self, flat: usize) -> String {
        flat.to_string()
    }

    /// Latest time label appearing in the histories, if the family has one.
    fn last_time(&self) -> Option<f64> {
        None
    }

    /// C_α |Ψ⟩ for every α in flat order.
    fn branches(&self, psi: &StateVector) -> Result<Vec<CVector>> {
        check_dim(self.dim(), psi.dim())?;
        (0..self.history_count())
            .map(|flat| Ok(self.class_operator_at(flat)? * psi.amplitudes()))
            .collect()
    }
}

/// Multi-index (α₁, …, α_n), one alternative per time slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct HistoryIndex(pub Vec<usize>);

impl HistoryIndex {
    pub fn new(components: Vec<usize>) -> Self {
        HistoryIndex(components)
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for HistoryIndex {
    fn from(v: Vec<usize>) -> Self {
        HistoryIndex(v)
    }
}

/// Time-ordered sequence of projector sets, already in the Heisenberg picture.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySet {
    slots: Vec<ProjectorSet>,
}

impl HistorySet {
    pub fn new(slots: Vec<ProjectorSet>) -> Result<Self> {
        let first = slots
            .first()
            .ok_or_else(|| Error::InvalidConfig("history set needs at least one slot".into()))?;
        let dim = first.dim();
        for pair in slots.windows(2) {
            if !(pair[1].time() > pair[0].time()) {
                return Err(Error::InvalidConfig(format!(
                    "slot times must be strictly increasing ({} then {})",
                    pair[0].time(),
                    pair[1].time()
                )));
            }
        }
        for s in &slots {
            check_dim(dim, s.dim())?;
        }
        let mut count: usize = 1;
        for s in &slots {
            count = count.checked_mul(s.len()).ok_or(Error::CapExceeded {
                what: "history",
                count: usize::MAX,
                cap: DEFAULT_HISTORY_CAP,
            })?;
        }
        Ok(HistorySet { slots })
    }

    /// Evolves Schrödinger-picture slots to the Heisenberg picture first.
    pub fn from_schrodinger(slots: Vec<ProjectorSet>, evo: &EvolutionSpec) -> Result<Self> {
        let evolved = slots
            .iter()
            .map(|s| s.heisenberg(evo))
            .collect::<Result<Vec<_>>>()?;
        HistorySet::new(evolved)
    }

    pub fn dim(&self) -> usize {
        self.slots[0].dim()
    }

    pub fn slots(&self) -> &[ProjectorSet] {
        &self.slots
    }

    pub fn times(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.time()).collect()
    }

    /// Number of alternatives in each slot.
    pub fn shape(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.slots.iter().map(|s| s.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn validate_index(&self, idx: &HistoryIndex) -> Result<()> {
        if idx.0.len() != self.slots.len() {
            return Err(Error::DimensionMismatch {
                expected: self.slots.len(),
                found: idx.0.len(),
            });
        }
        for (slot, (&a, s)) in idx.0.iter().zip(&self.slots).enumerate() {
            if a >= s.len() {
                return Err(Error::IndexOutOfRange {
                    slot,
                    index: a,
                    size: s.len(),
                });
            }
        }
        Ok(())
    }

    pub fn flat_index(&self, idx: &HistoryIndex) -> Result<usize> {
        self.validate_index(idx)?;
        let mut flat = 0;
        for (&a, s) in idx.0.iter().zip(&self.slots).rev() {
            flat = flat * s.len() + a;
        }
        Ok(flat)
    }

    pub fn history_index(&self, flat: usize) -> Result<HistoryIndex> {
        let m = self.len();
        if flat >= m {
            return Err(Error::IndexOutOfRange {
                slot: 0,
                index: flat,
                size: m,
            });
        }
        let mut rest = flat;
        let comps = self
            .slots
            .iter()
            .map(|s| {
                let a = rest % s.len();
                rest /= s.len();
                a
            })
            .collect();
        Ok(HistoryIndex(comps))
    }

    /// All multi-indices in flat order.
    pub fn indices(&self) -> impl Iterator<Item = HistoryIndex> + '_ {
        (0..self.len()).map(move |f| self.history_index(f).expect("flat index in range"))
    }

    pub fn label(&self, idx: &HistoryIndex) -> String {
        idx.0
            .iter()
            .zip(&self.slots)
            .map(|(&a, s)| s.members()[a].label().to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl HistoryFamily for HistorySet {
    fn dim(&self) -> usize {
        HistorySet::dim(self)
    }

    fn history_count(&self) -> usize {
        self.len()
    }

    fn class_operator_at(&self, flat: usize) -> Result<CMatrix> {
        class_operator(self, &self.history_index(flat)?)
    }

    fn history_label(&self, flat: usize) -> String {
        self.history_index(flat)
            .map(|idx| self.label(&idx))
            .unwrap_or_default()
    }

    fn last_time(&self) -> Option<f64> {
        self.slots.last().map(|s| s.time())
    }

    fn branches(&self, psi: &StateVector) -> Result<Vec<CVector>> {
        check_dim(self.dim(), psi.dim())?;
        self.indices()
            .map(|idx| apply_chain(self, &idx, psi.amplitudes()))
            .collect()
    }
}

fn apply_chain(hs: &HistorySet, idx: &HistoryIndex, v: &CVector) -> Result<CVector> {
    let mut out = v.clone();
    for (&a, slot) in idx.0.iter().zip(hs.slots()) {
        out = slot.members()[a].entries() * out;
    }
    Ok(out)
}

/// C_α = P^n_{α_n}(t_n) ⋯ P^1_{α_1}(t_1), latest time leftmost.
pub fn class_operator(hs: &HistorySet, idx: &HistoryIndex) -> Result<CMatrix> {
    hs.validate_index(idx)?;
    let mut c = hs.slots[0].members()[idx.0[0]].entries().clone();
    for (&a, slot) in idx.0.iter().zip(&hs.slots).skip(1) {
        c = slot.members()[a].entries() * c;
    }
    Ok(c)
}

/// Unnormalized branch state C_α|Ψ⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchVector {
    pub index: HistoryIndex,
    pub amplitudes: CVector,
}

impl BranchVector {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }
}

pub fn branch_vector(hs: &HistorySet, idx: &HistoryIndex, psi: &StateVector) -> Result<BranchVector> {
    check_dim(hs.dim(), psi.dim())?;
    let amplitudes = class_operator(hs, idx)? * psi.amplitudes();
    Ok(BranchVector {
        index: idx.clone(),
        amplitudes,
    })
}

/// Re⟨Ψ|C_α|Ψ⟩. May be negative; never above 1 for a chain.
pub fn extended_probability(hs: &HistorySet, idx: &HistoryIndex, psi: &StateVector) -> Result<f64> {
    let b = branch_vector(hs, idx, psi)?;
    Ok(psi.amplitudes().dotc(&b.amplitudes).re)
}

/// ‖C_α|Ψ⟩‖².
pub fn dh_probability(hs: &HistorySet, idx: &HistoryIndex, psi: &StateVector) -> Result<f64> {
    Ok(branch_vector(hs, idx, psi)?.norm_sqr())
}

/// p^DH(α) − p^EP(α), evaluated as −Re Σ_{β≠α} D(β,α).
pub fn dh_ep_difference(hs: &HistorySet, idx: &HistoryIndex, psi: &StateVector) -> Result<f64> {
    let alpha = hs.flat_index(idx)?;
    let branches = hs.branches(psi)?;
    let target = &branches[alpha];
    let mut acc = 0.0;
    for (beta, b) in branches.iter().enumerate() {
        if beta != alpha {
            acc += b.dotc(target).re;
        }
    }
    Ok(-acc)
}

/// Sum of the strictly negative extended probabilities.
pub fn total_negative<F: HistoryFamily + ?Sized>(family: &F, psi: &StateVector) -> Result<f64> {
    Ok(total_negative_of(&extended_probabilities(family, psi)?))
}

pub fn total_negative_of(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p < 0.0).sum()
}

/// Re⟨Ψ|C_α|Ψ⟩ for every history in flat order.
pub fn extended_probabilities<F: HistoryFamily + ?Sized>(family: &F, psi: &StateVector) -> Result<Vec<f64>> {
    Ok(family
        .branches(psi)?
        .iter()
        .map(|b| psi.amplitudes().dotc(b).re)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceOptions {
    /// Bound on |D(α,β)|, α ≠ β, for medium decoherence; also the floor for linear positivity.
    pub tolerance: f64,
    pub max_histories: usize,
}

impl Default for DecoherenceOptions {
    fn default() -> Self {
        DecoherenceOptions {
            tolerance: DEFAULT_DECOHERENCE_TOL,
            max_histories: DEFAULT_HISTORY_CAP,
        }
    }
}

impl DecoherenceOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        DecoherenceOptions {
            tolerance,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceReport {
    pub labels: Vec<String>,
    /// D(α,β) = ⟨Ψ_α|Ψ_β⟩.
    pub functional: CMatrix,
    pub dec: f64,
    pub max_off_diagonal: f64,
    pub ep_probs: Vec<f64>,
    pub dh_probs: Vec<f64>,
    pub medium_decoherent: bool,
    pub linearly_positive: bool,
    pub tolerance: f64,
}

impl DecoherenceReport {
    pub fn len(&self) -> usize {
        self.ep_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ep_probs.is_empty()
    }

    /// Off-diagonal pairs α < β with |D(α,β)| above the report tolerance.
    pub fn offending_pairs(&self) -> Vec<(usize, usize, f64)> {
        let m = self.len();
        let mut out = Vec::new();
        for a in 0..m {
            for b in (a + 1)..m {
                let v = self.functional[(a, b)].norm();
                if v > self.tolerance {
                    out.push((a, b, v));
                }
            }
        }
        out
    }

    pub fn total_negative(&self) -> f64 {
        total_negative_of(&self.ep_probs)
    }
}

/// Σ_{α≠β} |D(α,β)|.
pub fn dec_measure(functional: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for a in 0..functional.nrows() {
        for b in 0..functional.ncols() {
            if a != b {
                acc += functional[(a, b)].norm();
            }
        }
    }
    acc
}

pub fn max_off_diagonal(functional: &CMatrix) -> f64 {
    let mut acc: f64 = 0.0;
    for a in 0..functional.nrows() {
        for b in 0..functional.ncols() {
            if a != b {
                acc = acc.max(functional[(a, b)].norm());
            }
        }
    }
    acc
}

/// Gram matrix of the branch vectors. The upper triangle is computed and the
/// lower triangle mirrored, so D(β,α) = conj D(α,β) holds exactly.
pub fn gram_functional(branches: &[CVector]) -> CMatrix {
    let m = branches.len();
    let mut d = CMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = branches[a].dotc(&branches[b]);
            if a == b {
                d[(a, a)] = Complex64::new(v.re, 0.0);
            } else {
                d[(a, b)] = v;
                d[(b, a)] = v.conj();
            }
        }
    }
    d
}

pub fn decoherence_functional<F: HistoryFamily + ?Sized>(
    family: &F,
    psi: &StateVector,
    opts: &DecoherenceOptions,
) -> Result<DecoherenceReport> {
    check_dim(family.dim(), psi.dim())?;
    let m = family.history_count();
    if m > opts.max_histories {
        return Err(Error::CapExceeded {
            what: "history",
            count: m,
            cap: opts.max_histories,
        });
    }
    let branches = family.branches(psi)?;
    let functional = gram_functional(&branches);
    let ep_probs: Vec<f64> = branches
        .iter()
        .map(|b| psi.amplitudes().dotc(b).re)
        .collect();
    let dh_probs: Vec<f64> = (0..m).map(|a| functional[(a, a)].re).collect();
    let dec = dec_measure(&functional);
    let max_off = max_off_diagonal(&functional);
    let min_ep = ep_probs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DecoherenceReport {
        labels: (0..m).map(|f| family.history_label(f)).collect(),
        functional,
        dec,
        max_off_diagonal: max_off,
        ep_probs,
        dh_probs,
        medium_decoherent: max_off <= opts.tolerance,
        linearly_positive: min_ep >= -opts.tolerance,
        tolerance: opts.tolerance,
    })
}

pub(crate) fn complex_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

impl Serialize for DecoherenceReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("DecoherenceReport", 10)?;
        s.serialize_field("histories", &self.labels)?;
        s.serialize_field("tolerance", &self.tolerance)?;
        s.serialize_field("medium_decoherent", &self.medium_decoherent)?;
        s.serialize_field("linearly_positive", &self.linearly_positive)?;
        s.serialize_field("dec", &self.dec)?;
        s.serialize_field("max_off_diagonal", &self.max_off_diagonal)?;
        s.serialize_field("total_negative", &self.total_negative())?;
        s.serialize_field("ep_probs", &self.ep_probs)?;
        s.serialize_field("dh_probs", &self.dh_probs)?;
        s.serialize_field("functional", &complex_rows(&self.functional))?;
        s.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Projector;

    fn ket(v: &[f64]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|&x| Complex64::new(x, 0.0)))
    }

    fn three_box() -> (HistorySet, StateVector) {
        let abc = ProjectorSet::computational_basis(3, 1.0);
        let phi = Projector::onto(&ket(&[1.0, 1.0, -1.0]), "Phi").unwrap();
        let not_phi = phi.complement("notPhi");
        let fin = ProjectorSet::new(vec![phi, not_phi], 2.0).unwrap();
        let psi = StateVector::normalized(ket(&[1.0, 1.0, 1.0])).unwrap();
        (HistorySet::new(vec![abc, fin]).unwrap(), psi)
    }

    #[test]
    fn flattening_is_earliest_fastest() {
        let (hs, _) = three_box();
        assert_eq!(hs.len(), 6);
        assert_eq!(hs.history_index(1).unwrap().0, vec![1, 0]);
        assert_eq!(hs.history_index(3).unwrap().0, vec![0, 1]);
        for f in 0..6 {
            assert_eq!(hs.flat_index(&hs.history_index(f).unwrap()).unwrap(), f);
        }
    }

    #[test]
    fn single_slot_class_operator_is_projector() {
        let ps = ProjectorSet::computational_basis(3, 0.0);
        let hs = HistorySet::new(vec![ps.clone()]).unwrap();
        let c = class_operator(&hs, &HistoryIndex(vec![0])).unwrap();
        assert_eq!(&c, ps.members()[0].entries());
    }

    #[test]
    fn class_operator_orders_latest_leftmost() {
        let (hs, _) = three_box();
        let c = class_operator(&hs, &HistoryIndex(vec![0, 0])).unwrap();
        let expected = hs.slots()[1].members()[0].entries() * hs.slots()[0].members()[0].entries();
        assert_eq!(c, expected);
        let mut sum = CMatrix::zeros(3, 3);
        for idx in hs.indices() {
            sum += class_operator(&hs, &idx).unwrap();
        }
        assert!(crate::hilbert::max_abs(&(sum - CMatrix::identity(3, 3))) < 1e-10);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let (hs, psi) = three_box();
        assert!(matches!(
            class_operator(&hs, &HistoryIndex(vec![3, 0])),
            Err(Error::IndexOutOfRange { slot: 0, .. })
        ));
        assert!(extended_probability(&hs, &HistoryIndex(vec![0]), &psi).is_err());
    }

    #[test]
    fn three_box_branch_and_probabilities() {
        let (hs, psi) = three_box();
        let c_phi = HistoryIndex(vec![2, 0]);
        let b = branch_vector(&hs, &c_phi, &psi).unwrap();
        // P_Phi P_C psi = <Phi|C><C|psi> Phi = (-1/sqrt3)(1/sqrt3) Phi
        let phi = ket(&[1.0, 1.0, -1.0]).unscale(3f64.sqrt());
        let expected = phi.scale(-1.0 / 3.0);
        assert!((b.amplitudes - expected).norm() < 1e-15);
        let ep = extended_probability(&hs, &c_phi, &psi).unwrap();
        let dh = dh_probability(&hs, &c_phi, &psi).unwrap();
        assert!((ep + 1.0 / 9.0).abs() < 1e-15);
        assert!((dh - 1.0 / 9.0).abs() < 1e-15);
        let diff = dh_ep_difference(&hs, &c_phi, &psi).unwrap();
        assert!((diff - 2.0 / 9.0).abs() < 1e-14);
        assert!((total_negative(&hs, &psi).unwrap() + 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_psi_gives_zero_branch() {
        let hs = HistorySet::new(vec![ProjectorSet::computational_basis(2, 0.0)]).unwrap();
        let psi = StateVector::basis(2, 1).unwrap();
        let b = branch_vector(&hs, &HistoryIndex(vec![0]), &psi).unwrap();
        assert_eq!(b.norm_sqr(), 0.0);
    }

    #[test]
    fn trivial_history_has_unit_probability() {
        let hs = HistorySet::new(vec![ProjectorSet::new(vec![Projector::identity(2, "I")], 0.0).unwrap()]).unwrap();
        let psi = StateVector::normalized(ket(&[0.6, 0.8])).unwrap();
        assert!((extended_probability(&hs, &HistoryIndex(vec![0]), &psi).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_time_set_is_exactly_decoherent() {
        let hs = HistorySet::new(vec![ProjectorSet::computational_basis(4, 0.0)]).unwrap();
        let psi = StateVector::normalized(ket(&[0.1, 0.5, -0.3, 0.7])).unwrap();
        let r = decoherence_functional(&hs, &psi, &DecoherenceOptions::default()).unwrap();
        assert_eq!(r.dec, 0.0);
        assert!(r.medium_decoherent && r.linearly_positive);
        for (idx, (ep, dh)) in r.ep_probs.iter().zip(&r.dh_probs).enumerate() {
            assert!((ep - dh).abs() < 1e-15, "{idx}");
            let diff = dh_ep_difference(&hs, &HistoryIndex(vec![idx]), &psi).unwrap();
            assert!(diff.abs() < 1e-15);
        }
        assert_eq!(total_negative(&hs, &psi).unwrap(), 0.0);
    }

    #[test]
    fn three_box_fine_set_report() {
        let (hs, psi) = three_box();
        let r = decoherence_functional(&hs, &psi, &DecoherenceOptions::with_tolerance(1e-10)).unwrap();
        assert!(!r.medium_decoherent);
        assert!(!r.linearly_positive);
        for (got, want) in r.ep_probs[..3].iter().zip([1.0 / 9.0, 1.0 / 9.0, -1.0 / 9.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        let recomputed = dec_measure(&r.functional);
        assert_eq!(recomputed, r.dec);
        for a in 0..6 {
            for b in 0..6 {
                assert_eq!(r.functional[(a, b)], r.functional[(b, a)].conj());
            }
        }
    }

    #[test]
    fn history_cap_is_an_error() {
        let (hs, psi) = three_box();
        let opts = DecoherenceOptions {
            max_histories: 5,
            ..Default::default()
        };
        assert!(matches!(
            decoherence_functional(&hs, &psi, &opts),
            Err(Error::CapExceeded { count: 6, cap: 5, .. })
        ));
    }

    #[test]
    fn times_must_increase() {
        let a = ProjectorSet::computational_basis(2, 1.0);
        let b = ProjectorSet::computational_basis(2, 1.0);
        assert!(HistorySet::new(vec![a, b]).is_err());
        assert!(HistorySet::new(vec![]).is_err());
    }
}
