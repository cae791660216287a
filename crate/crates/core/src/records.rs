//! Record projectors for history sets and the weak/strong record conditions
//! that decide whether a set supports a settleable bet.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::histories::{decoherence_functional, DecoherenceOptions, HistoryFamily};
use crate::hilbert::{
    check_dim, validate_projector_set, CMatrix, CVector, Projector, StateVector, TOL_OP,
};

/// Branch norms at or below this get a rank-0 record.
pub const ZERO_BRANCH: f64 = 1e-12;

/// One record projector per history (flat order), valid at `t_rec`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    members: Vec<Projector>,
    t_rec: f64,
    /// Flat index of the record that absorbed the complement of the branch span.
    completion_index: Option<usize>,
}

impl RecordSet {
    /// Validates exhaustiveness and exclusivity; `t_rec` is a label and is not checked here.
    pub fn new(members: Vec<Projector>, t_rec: f64) -> Result<Self> {
        let report = validate_projector_set(&members, TOL_OP)?;
        if !report.pass {
            return Err(Error::invariant("record_set", report.max_defect()));
        }
        Ok(RecordSet {
            members,
            t_rec,
            completion_index: None,
        })
    }

    pub fn members(&self) -> &[Projector] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn t_rec(&self) -> f64 {
        self.t_rec
    }

    pub fn completion_index(&self) -> Option<usize> {
        self.completion_index
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    /// ⟨Ψ|R_α|Ψ⟩ for every record.
    pub fn record_probabilities(&self, psi: &StateVector) -> Result<Vec<f64>> {
        check_dim(self.dim(), psi.dim())?;
        Ok(self
            .members
            .iter()
            .map(|r| psi.amplitudes().dotc(&(r.entries() * psi.amplitudes())).re)
            .collect())
    }
}

/// Modified Gram–Schmidt with one re-orthogonalization pass. Vectors whose
/// norm is at or below `ZERO_BRANCH` map to `None`.
fn orthonormalize(vectors: &[CVector]) -> Vec<Option<CVector>> {
    let mut basis: Vec<CVector> = Vec::new();
    let mut out = Vec::with_capacity(vectors.len());
    for v in vectors {
        if v.norm() <= ZERO_BRANCH {
            out.push(None);
            continue;
        }
        let mut w = v.clone();
        for _pass in 0..2 {
            for e in &basis {
                let overlap = e.dotc(&w);
                w -= e * overlap;
            }
        }
        let n = w.norm();
        if n <= ZERO_BRANCH {
            out.push(None);
            continue;
        }
        let e = w.unscale(n);
        basis.push(e.clone());
        out.push(Some(e));
    }
    out
}

/// R_α = projector onto |Ψ_α⟩, labelled with t_rec = (last history time) + 1. The complement of the branch span goes to the
/// record of the lowest flat index with a non-zero branch. The set must be
/// medium decoherent at `opts.tolerance`, and the constructed set must pass
/// the strong-record check at the same tolerance.
pub fn construct_records<F: HistoryFamily + ?Sized>(
    family: &F,
    psi: &StateVector,
    opts: &DecoherenceOptions,
) -> Result<RecordSet> {
    let report = decoherence_functional(family, psi, opts)?;
    if !report.medium_decoherent {
        return Err(Error::NotDecoherent {
            offending: report.offending_pairs(),
            max: report.max_off_diagonal,
        });
    }
    let branches = family.branches(psi)?;
    let dim = family.dim();
    let directions = orthonormalize(&branches);
    let first = directions
        .iter()
        .position(Option::is_some)
        .ok_or(Error::AllBranchesZero)?;

    let mut span = CMatrix::zeros(dim, dim);
    let mut members: Vec<CMatrix> = directions
        .iter()
        .map(|e| match e {
            Some(e) => {
                let p = e * e.adjoint();
                span += &p;
                p
            }
            None => CMatrix::zeros(dim, dim),
        })
        .collect();
    members[first] += CMatrix::identity(dim, dim) - span;

    let projectors = members
        .into_iter()
        .enumerate()
        .map(|(a, m)| Projector::new(m, family.history_label(a)))
        .collect::<Result<Vec<_>>>()?;
    let t_rec = family.last_time().map_or(1.0, |t| t + 1.0);
    let mut rs = RecordSet::new(projectors, t_rec)?;
    rs.completion_index = Some(first);

    let strong = verify_strong_records(family, psi, &rs, opts.tolerance)?;
    if !strong.pass {
        return Err(Error::invariant("strong_records", strong.max_defect));
    }
    Ok(rs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordCheck {
    pub max_defect: f64,
    pub pass: bool,
    pub tolerance: f64,
}

fn check_records<F: HistoryFamily + ?Sized>(family: &F, psi: &StateVector, rs: &RecordSet) -> Result<()> {
    check_dim(family.dim(), psi.dim())?;
    check_dim(family.dim(), rs.dim())?;
    if rs.len() != family.history_count() {
        return Err(Error::DimensionMismatch {
            expected: family.history_count(),
            found: rs.len(),
        });
    }
    Ok(())
}

/// max_{α,β} ‖R_α C_β|Ψ⟩ − δ_{αβ} C_β|Ψ⟩‖.
pub fn verify_strong_records<F: HistoryFamily + ?Sized>(
    family: &F,
    psi: &StateVector,
    rs: &RecordSet,
    tolerance: f64,
) -> Result<RecordCheck> {
    check_records(family, psi, rs)?;
    let branches = family.branches(psi)?;
    let mut max_defect: f64 = 0.0;
    for (a, r) in rs.members().iter().enumerate() {
        for (b, branch) in branches.iter().enumerate() {
            let mut v = r.entries() * branch;
            if a == b {
                v -= branch;
            }
            max_defect = max_defect.max(v.norm());
        }
    }
    Ok(RecordCheck {
        max_defect,
        pass: max_defect <= tolerance,
        tolerance,
    })
}

/// max_{β,α} |Re⟨Ψ|R_β C_α|Ψ⟩ − δ_{βα} p(α)|.
pub fn verify_weak_records<F: HistoryFamily + ?Sized>(
    family: &F,
    psi: &StateVector,
    rs: &RecordSet,
    tolerance: f64,
) -> Result<RecordCheck> {
    check_records(family, psi, rs)?;
    let branches = family.branches(psi)?;
    let bra = psi.amplitudes();
    let ep: Vec<f64> = branches.iter().map(|b| bra.dotc(b).re).collect();
    let mut max_defect: f64 = 0.0;
    for (b_rec, r) in rs.members().iter().enumerate() {
        for (a, branch) in branches.iter().enumerate() {
            let joint = bra.dotc(&(r.entries() * branch)).re;
            let target = if a == b_rec { ep[a] } else { 0.0 };
            max_defect = max_defect.max((joint - target).abs());
        }
    }
    Ok(RecordCheck {
        max_defect,
        pass: max_defect <= tolerance,
        tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub history: String,
    pub record_probability: f64,
    pub extended_probability: f64,
    /// |⟨Ψ|R_α|Ψ⟩ − Re⟨Ψ|C_α|Ψ⟩|.
    pub defect: f64,
    /// For negative extended probabilities: whether both magnitudes lie below the
    /// table's maximum defect. `None` when the extended probability is non-negative.
    pub small_negative_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    pub max_defect: f64,
}

/// Per-history correlation between record probabilities and extended probabilities.
///
/// With ε the largest defect in the table, a negative extended probability is
/// only consistent with correlated records when both |⟨Ψ|R_α|Ψ⟩| and
/// |Re⟨Ψ|C_α|Ψ⟩| are at most ε; that bound is reported per negative row.
pub fn record_correlation_report<F: HistoryFamily + ?Sized>(
    family: &F,
    psi: &StateVector,
    rs: &RecordSet,
) -> Result<CorrelationReport> {
    check_records(family, psi, rs)?;
    let bra = psi.amplitudes();
    let ep: Vec<f64> = family.branches(psi)?.iter().map(|b| bra.dotc(b).re).collect();
    let rp = rs.record_probabilities(psi)?;
    let defects: Vec<f64> = rp.iter().zip(&ep).map(|(r, e)| (r - e).abs()).collect();
    let eps = defects.iter().copied().fold(0.0, f64::max);
    let rows = (0..ep.len())
        .map(|a| CorrelationRow {
            history: family.history_label(a),
            record_probability: rp[a],
            extended_probability: ep[a],
            defect: defects[a],
            small_negative_bound: (ep[a] < 0.0).then(|| rp[a].abs() <= eps && ep[a].abs() <= eps),
        })
        .collect();
    Ok(CorrelationReport {
        rows,
        max_defect: eps,
    })
}

/// Rotates every record by the unitary e^{-iθG} with G Hermitian; used to build
/// imperfect records in tests and reports.
pub fn perturb_records(rs: &RecordSet, generator: &CMatrix, angle: f64) -> Result<RecordSet> {
    let h = crate::hilbert::HermitianOperator::new(generator.clone())?;
    let u = crate::hilbert::hermitian_exponential(&h, angle)?;
    let members = rs
        .members()
        .iter()
        .map(|r| {
            Projector::with_tolerances(
                &u * r.entries() * u.adjoint(),
                r.label().to_string(),
                &crate::hilbert::Tolerances {
                    hermitian: 1e-9,
                    operator: 1e-9,
                    ..Default::default()
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecordSet {
        members,
        t_rec: rs.t_rec,
        completion_index: rs.completion_index,
    })
}

pub(crate) fn kron_records(a: &RecordSet, b: &RecordSet) -> RecordSet {
    let mut members = Vec::with_capacity(a.len() * b.len());
    for ra in a.members() {
        for rb in b.members() {
            members.push(Projector::from_parts_unchecked(
                ra.entries().kronecker(rb.entries()),
                format!("{}⊗{}", ra.label(), rb.label()),
            ));
        }
    }
    RecordSet {
        members,
        t_rec: a.t_rec.max(b.t_rec),
        completion_index: None,
    }
}

pub(crate) fn unit() -> RecordSet {
    RecordSet {
        members: vec![Projector::identity(1, "")],
        t_rec: f64::NEG_INFINITY,
        completion_index: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarsegrain::{coarsen_slot, Partition};
    use crate::histories::HistorySet;
    use crate::hilbert::ProjectorSet;
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn ket(v: &[f64]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|&x| c(x)))
    }

    fn three_box() -> (HistorySet, StateVector) {
        let abc = ProjectorSet::computational_basis(3, 1.0);
        let phi = Projector::onto(&ket(&[1.0, 1.0, -1.0]), "Phi").unwrap();
        let fin = ProjectorSet::new(vec![phi.clone(), phi.complement("notPhi")], 2.0).unwrap();
        let psi = StateVector::normalized(ket(&[1.0, 1.0, 1.0])).unwrap();
        (HistorySet::new(vec![abc, fin]).unwrap(), psi)
    }

    #[test]
    fn single_time_basis_records() {
        let hs = HistorySet::new(vec![ProjectorSet::computational_basis(3, 0.0)]).unwrap();
        let psi = StateVector::normalized(ket(&[0.2, -0.5, 0.7])).unwrap();
        let rs = construct_records(&hs, &psi, &DecoherenceOptions::default()).unwrap();
        for (a, r) in rs.members().iter().enumerate() {
            let want = ProjectorSet::computational_basis(3, 0.0).members()[a].entries().clone();
            assert!(crate::hilbert::max_abs(&(r.entries() - want)) < 1e-14);
        }
        let strong = verify_strong_records(&hs, &psi, &rs, 1e-10).unwrap();
        assert!(strong.pass && strong.max_defect <= 1e-10);
        assert!(verify_weak_records(&hs, &psi, &rs, 1e-10).unwrap().pass);
    }

    #[test]
    fn completion_goes_to_lowest_nonzero_branch() {
        // psi has no weight on |0>, so record 0 is rank 0 and record 1 absorbs the complement
        let hs = HistorySet::new(vec![
            ProjectorSet::new(
                vec![
                    Projector::basis_subset(3, &[0], "0").unwrap(),
                    Projector::basis_subset(3, &[1, 2], "12").unwrap(),
                ],
                0.0,
            )
            .unwrap(),
        ])
        .unwrap();
        let psi = StateVector::normalized(ket(&[0.0, 0.6, 0.8])).unwrap();
        let rs = construct_records(&hs, &psi, &DecoherenceOptions::default()).unwrap();
        assert_eq!(rs.completion_index(), Some(1));
        assert_eq!(rs.members()[0].rank(), 0);
        assert_eq!(rs.members()[1].rank(), 3);
    }

    #[test]
    fn three_box_a_coarse_set_records() {
        let (hs, psi) = three_box();
        let a_set = coarsen_slot(&hs, 0, &Partition::new(3, vec![vec![0], vec![1, 2]]).unwrap()).unwrap();
        let rs = construct_records(&a_set, &psi, &DecoherenceOptions::with_tolerance(1e-10)).unwrap();
        let phi = Projector::onto(&ket(&[1.0, 1.0, -1.0]), "").unwrap();
        // R_0 is rank-1 onto |Phi> (branches span C^3, so the complement is empty)
        assert_eq!(rs.completion_index(), Some(0));
        assert!(crate::hilbert::max_abs(&(rs.members()[0].entries() - phi.entries())) < 1e-14);
        // (notA, Phi) branch vanishes
        assert_eq!(rs.members()[1].rank(), 0);
        assert!(verify_strong_records(&a_set, &psi, &rs, 1e-10).unwrap().pass);
        let corr = record_correlation_report(&a_set, &psi, &rs).unwrap();
        assert!(corr.max_defect <= 1e-12);
        let rp = rs.record_probabilities(&psi).unwrap();
        assert!((rp.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn three_box_fine_set_is_not_recordable() {
        let (hs, psi) = three_box();
        let err = construct_records(&hs, &psi, &DecoherenceOptions::with_tolerance(1e-10)).unwrap_err();
        match err {
            Error::NotDecoherent { offending, max } => {
                assert!(!offending.is_empty());
                assert!(max > 0.1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn misattributed_records_fail() {
        let hs = HistorySet::new(vec![ProjectorSet::computational_basis(2, 0.0)]).unwrap();
        let psi = StateVector::normalized(ket(&[1.0, 1.0])).unwrap();
        let rs = RecordSet::new(vec![Projector::identity(2, "I"), Projector::zero(2, "0")], 1.0).unwrap();
        let strong = verify_strong_records(&hs, &psi, &rs, 1e-10).unwrap();
        assert!(!strong.pass);
        assert!(!verify_weak_records(&hs, &psi, &rs, 1e-10).unwrap().pass);
    }

    #[test]
    fn perturbed_records_have_small_defects() {
        let hs = HistorySet::new(vec![ProjectorSet::computational_basis(3, 0.0)]).unwrap();
        let psi = StateVector::normalized(ket(&[0.3, 0.5, 0.81])).unwrap();
        let rs = construct_records(&hs, &psi, &DecoherenceOptions::default()).unwrap();
        // imaginary antisymmetric generator: a real rotation in the 0-1 plane
        let i = Complex64::new(0.0, 1.0);
        let z = c(0.0);
        let g = CMatrix::from_row_slice(3, 3, &[z, -i, z, i, z, z, z, z, z]);
        let perturbed = perturb_records(&rs, &g, 1e-4).unwrap();
        let corr = record_correlation_report(&hs, &psi, &perturbed).unwrap();
        assert!(corr.max_defect > 1e-6 && corr.max_defect < 1e-3, "{}", corr.max_defect);
    }
}
