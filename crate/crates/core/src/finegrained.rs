//! A designated fine-grained history set (one orthonormal basis per time) and
//! the distribution of extended probabilities over it. Every coarse-grained
//! extended probability is a class sum of this distribution.

use std::fmt::Write as _;

use serde::Serialize;

use crate::coarsegrain::{class_sums, coarsen_slot, Partition};
use crate::error::{Error, Result};
use crate::histories::{extended_probabilities, HistorySet, DEFAULT_HISTORY_CAP};
use crate::hilbert::{check_dim, CMatrix, Projector, ProjectorSet, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct FineGrainedSpec {
    psi: StateVector,
    histories: HistorySet,
}

impl FineGrainedSpec {
    /// Each slot must consist of `dim` rank-1 projectors (Heisenberg picture).
    pub fn new(psi: StateVector, bases: Vec<ProjectorSet>) -> Result<Self> {
        let histories = HistorySet::new(bases)?;
        check_dim(histories.dim(), psi.dim())?;
        let d = histories.dim();
        for slot in histories.slots() {
            check_dim(d, slot.len())?;
            for p in slot.members() {
                let trace = p.entries().trace().re;
                if (trace - 1.0).abs() > 1e-10 {
                    return Err(Error::invariant("fine_grained_rank_one", (trace - 1.0).abs()));
                }
            }
        }
        Ok(FineGrainedSpec { psi, histories })
    }

    /// Builds rank-1 projectors from the columns of each basis matrix.
    pub fn from_basis_matrices(psi: StateVector, times: &[f64], bases: &[CMatrix]) -> Result<Self> {
        check_dim(times.len(), bases.len())?;
        let sets = times
            .iter()
            .zip(bases)
            .map(|(&t, b)| {
                let members = (0..b.ncols())
                    .map(|j| Projector::onto(&b.column(j).into_owned(), format!("{j}")))
                    .collect::<Result<Vec<_>>>()?;
                ProjectorSet::new(members, t)
            })
            .collect::<Result<Vec<_>>>()?;
        FineGrainedSpec::new(psi, sets)
    }

    pub fn dim(&self) -> usize {
        self.psi.dim()
    }

    pub fn steps(&self) -> usize {
        self.histories.slots().len()
    }

    pub fn psi(&self) -> &StateVector {
        &self.psi
    }

    pub fn history_set(&self) -> &HistorySet {
        &self.histories
    }
}

/// w(h) over h = (b₁,…,b_n), b₁ varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FineGrainedDistribution {
    pub dim: usize,
    pub steps: usize,
    pub values: Vec<f64>,
}

impl FineGrainedDistribution {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn history(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        (0..self.steps)
            .map(|_| {
                let b = rest % self.dim;
                rest /= self.dim;
                b
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// CSV with columns `b1..bn,w`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.steps).map(|k| format!("b{k}")).collect();
        let _ = writeln!(out, "{},w", header.join(","));
        for (flat, w) in self.values.iter().enumerate() {
            let h: Vec<String> = self.history(flat).iter().map(|b| b.to_string()).collect();
            let _ = writeln!(out, "{},{}", h.join(","), w);
        }
        out
    }
}

pub fn fundamental_distribution(spec: &FineGrainedSpec, cap: usize) -> Result<FineGrainedDistribution> {
    let count = spec
        .dim()
        .checked_pow(spec.steps() as u32)
        .unwrap_or(usize::MAX);
    if count > cap {
        return Err(Error::CapExceeded {
            what: "fine-grained history",
            count,
            cap,
        });
    }
    let values = extended_probabilities(&spec.histories, &spec.psi)?;
    Ok(FineGrainedDistribution {
        dim: spec.dim(),
        steps: spec.steps(),
        values,
    })
}

pub fn fundamental_distribution_default(spec: &FineGrainedSpec) -> Result<FineGrainedDistribution> {
    fundamental_distribution(spec, DEFAULT_HISTORY_CAP)
}

/// p(α) = Σ_{h∈c_α} w(h).
pub fn class_sum(dist: &FineGrainedDistribution, part: &Partition) -> Result<Vec<f64>> {
    class_sums(&dist.values, part)
}

/// Partition of h-space into cylinders: at each time the basis indices are
/// grouped by `groupings[k]`. Classes follow the flat order of the coarse set.
pub fn cylinder_partition(spec: &FineGrainedSpec, groupings: &[Partition]) -> Result<Partition> {
    check_dim(spec.steps(), groupings.len())?;
    let mut part = Partition::singletons(spec.histories.len());
    let mut current = spec.histories.clone();
    for (k, g) in groupings.iter().enumerate() {
        let lifted = crate::coarsegrain::slot_partition(&current, k, g)?;
        // compose: classes of `lifted` index the classes of `part`
        let classes = lifted
            .classes()
            .iter()
            .map(|cls| {
                let mut members: Vec<usize> =
                    cls.iter().flat_map(|&c| part.classes()[c].iter().copied()).collect();
                members.sort_unstable();
                members
            })
            .collect();
        part = Partition::new(spec.histories.len(), classes)?;
        current = coarsen_slot(&current, k, g)?;
    }
    Ok(part)
}

/// The chain history set whose slot projectors are the grouped basis sums.
pub fn cylinder_history_set(spec: &FineGrainedSpec, groupings: &[Partition]) -> Result<HistorySet> {
    check_dim(spec.steps(), groupings.len())?;
    let mut current = spec.histories.clone();
    for (k, g) in groupings.iter().enumerate() {
        current = coarsen_slot(&current, k, g)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histories::extended_probability;
    use crate::hilbert::CVector;
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn rotated(theta: f64) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(theta.cos()), c(-theta.sin()), c(theta.sin()), c(theta.cos())])
    }

    #[test]
    fn single_time_is_born_rule() {
        let psi = StateVector::normalized(CVector::from_vec(vec![c(0.3), c(-0.4), c(0.5)])).unwrap();
        let spec = FineGrainedSpec::from_basis_matrices(psi, &[0.0], &[CMatrix::identity(3, 3)]).unwrap();
        let w = fundamental_distribution_default(&spec).unwrap();
        let want = [0.09 / 0.5, 0.16 / 0.5, 0.25 / 0.5];
        for (got, want) in w.values.iter().zip(want) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn rotated_second_basis_yields_negative_weight() {
        // w(b1,b2) = Re <psi|Q_b2 P_b1|psi>, psi at angle -pi/8, Q basis at 45 degrees
        let a = -std::f64::consts::PI / 8.0;
        let psi = StateVector::new(CVector::from_vec(vec![c(a.cos()), c(a.sin())])).unwrap();
        let spec = FineGrainedSpec::from_basis_matrices(
            psi,
            &[1.0, 2.0],
            &[CMatrix::identity(2, 2), rotated(std::f64::consts::FRAC_PI_4)],
        )
        .unwrap();
        let w = fundamental_distribution_default(&spec).unwrap();
        // hand oracle: w(1,0) = <psi|q0><q0|1><1|psi> with q0 = (1,1)/sqrt2
        let q0_psi = (a.cos() + a.sin()) / 2f64.sqrt();
        let want = q0_psi * (1.0 / 2f64.sqrt()) * a.sin();
        assert!((w.values[1] - want).abs() < 1e-14);
        assert!(w.values[1] < 0.0);
        assert!((w.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cylinder_sums_match_chain_probabilities() {
        let psi = StateVector::normalized(CVector::from_vec(vec![c(0.3), c(0.9), c(-0.2)])).unwrap();
        let b2 = {
            let t = 0.6f64;
            CMatrix::from_row_slice(
                3,
                3,
                &[c(t.cos()), c(0.0), c(-t.sin()), c(0.0), c(1.0), c(0.0), c(t.sin()), c(0.0), c(t.cos())],
            )
        };
        let spec = FineGrainedSpec::from_basis_matrices(psi.clone(), &[1.0, 2.0], &[rotated3(0.4), b2]).unwrap();
        let w = fundamental_distribution_default(&spec).unwrap();
        let groups = [
            Partition::new(3, vec![vec![0, 2], vec![1]]).unwrap(),
            Partition::new(3, vec![vec![0], vec![1, 2]]).unwrap(),
        ];
        let part = cylinder_partition(&spec, &groups).unwrap();
        let coarse = cylinder_history_set(&spec, &groups).unwrap();
        let sums = class_sum(&w, &part).unwrap();
        for (flat, idx) in coarse.indices().enumerate() {
            let ep = extended_probability(&coarse, &idx, &psi).unwrap();
            assert!((ep - sums[flat]).abs() < 1e-12);
        }
        assert_eq!(class_sum(&w, &Partition::singletons(9)).unwrap(), w.values);
        let one = class_sum(&w, &Partition::total(9)).unwrap();
        assert!((one[0] - 1.0).abs() < 1e-12);
    }

    fn rotated3(theta: f64) -> CMatrix {
        let mut m = CMatrix::identity(3, 3);
        m[(0, 0)] = c(theta.cos());
        m[(0, 1)] = c(-theta.sin());
        m[(1, 0)] = c(theta.sin());
        m[(1, 1)] = c(theta.cos());
        m
    }

    #[test]
    fn cap_is_enforced_and_csv_layout() {
        let psi = StateVector::basis(2, 0).unwrap();
        let spec = FineGrainedSpec::from_basis_matrices(
            psi,
            &[1.0, 2.0, 3.0],
            &[CMatrix::identity(2, 2), CMatrix::identity(2, 2), CMatrix::identity(2, 2)],
        )
        .unwrap();
        assert!(matches!(
            fundamental_distribution(&spec, 7),
            Err(Error::CapExceeded { count: 8, .. })
        ));
        let w = fundamental_distribution(&spec, 8).unwrap();
        let csv = w.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("b1,b2,b3,w"));
        assert_eq!(lines.next(), Some("0,0,0,1"));
        assert_eq!(lines.next(), Some("1,0,0,0"));
    }

    #[test]
    fn rank_two_member_is_rejected() {
        let psi = StateVector::basis(3, 0).unwrap();
        let set = ProjectorSet::new(
            vec![
                Projector::basis_subset(3, &[0, 1], "01").unwrap(),
                Projector::basis_subset(3, &[2], "2").unwrap(),
            ],
            0.0,
        )
        .unwrap();
        assert!(FineGrainedSpec::new(psi, vec![set]).is_err());
    }
}
