//! Coarse graining: partitions of a history set into exclusive classes, the
//! induced class operators and decoherence functionals, and a greedy search
//! for decohering coarse grainings.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::histories::{
    dec_measure, extended_probabilities, HistoryFamily, HistorySet,
};
use crate::hilbert::{check_dim, CMatrix, CVector, Projector, ProjectorSet, StateVector};

/// Exhaustive, exclusive grouping of fine indices `0..fine_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    fine_count: usize,
    classes: Vec<Vec<usize>>,
    labels: Vec<String>,
}

impl Partition {
    pub fn new(fine_count: usize, classes: Vec<Vec<usize>>) -> Result<Self> {
        let labels = (0..classes.len()).map(|c| c.to_string()).collect();
        Self::with_labels(fine_count, classes, labels)
    }

    pub fn with_labels(fine_count: usize, classes: Vec<Vec<usize>>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != classes.len() {
            return Err(Error::InvalidPartition(format!(
                "{} labels for {} classes",
                labels.len(),
                classes.len()
            )));
        }
        let mut seen = vec![false; fine_count];
        for (c, class) in classes.iter().enumerate() {
            if class.is_empty() {
                return Err(Error::InvalidPartition(format!("class {c} is empty")));
            }
            for &i in class {
                if i >= fine_count {
                    return Err(Error::InvalidPartition(format!(
                        "index {i} outside 0..{fine_count}"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidPartition(format!("index {i} appears twice")));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("index {missing} is not covered")));
        }
        Ok(Partition {
            fine_count,
            classes,
            labels,
        })
    }

    /// Every fine index in its own class.
    pub fn singletons(m: usize) -> Self {
        Partition {
            fine_count: m,
            classes: (0..m).map(|i| vec![i]).collect(),
            labels: (0..m).map(|i| i.to_string()).collect(),
        }
    }

    /// One class holding everything.
    pub fn total(m: usize) -> Self {
        Partition {
            fine_count: m,
            classes: vec![(0..m).collect()],
            labels: vec!["all".into()],
        }
    }

    /// Partition from a class assignment per fine index (restricted growth not required).
    pub fn from_assignment(assignment: &[usize]) -> Result<Self> {
        let mut order: Vec<usize> = Vec::new();
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for (i, &a) in assignment.iter().enumerate() {
            let c = match order.iter().position(|&o| o == a) {
                Some(c) => c,
                None => {
                    order.push(a);
                    classes.push(Vec::new());
                    order.len() - 1
                }
            };
            classes[c].push(i);
        }
        Partition::new(assignment.len(), classes)
    }

    pub fn fine_count(&self) -> usize {
        self.fine_count
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Class index of every fine index.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![0; self.fine_count];
        for (c, class) in self.classes.iter().enumerate() {
            for &i in class {
                out[i] = c;
            }
        }
        out
    }

    /// True when every class of `self` lies inside a single class of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.fine_count != coarser.fine_count {
            return false;
        }
        let owner = coarser.assignment();
        self.classes
            .iter()
            .all(|class| class.iter().all(|&i| owner[i] == owner[class[0]]))
    }

    /// Merges classes `i < j`; the result keeps classes ordered by smallest member.
    pub fn merge(&self, i: usize, j: usize) -> Result<Partition> {
        if i == j || i >= self.len() || j >= self.len() {
            return Err(Error::InvalidPartition(format!("cannot merge classes {i} and {j}")));
        }
        let mut classes = self.classes.clone();
        let (lo, hi) = (i.min(j), i.max(j));
        let moved = classes.remove(hi);
        classes[lo].extend(moved);
        classes[lo].sort_unstable();
        Ok(canonical(self.fine_count, classes))
    }

    fn check_fine(&self, m: usize) -> Result<()> {
        if self.fine_count != m {
            return Err(Error::InvalidPartition(format!(
                "partition covers {} fine histories, set has {m}",
                self.fine_count
            )));
        }
        Ok(())
    }
}

fn canonical(fine_count: usize, mut classes: Vec<Vec<usize>>) -> Partition {
    for c in &mut classes {
        c.sort_unstable();
    }
    classes.sort_by_key(|c| c[0]);
    let labels = (0..classes.len()).map(|c| c.to_string()).collect();
    Partition {
        fine_count,
        classes,
        labels,
    }
}

/// Every set partition of `0..m` (restricted growth strings). Bell-number sized; `m ≤ 8`.
pub fn all_partitions(m: usize) -> Result<Vec<Partition>> {
    if m > 8 {
        return Err(Error::CapExceeded {
            what: "partition enumeration size",
            count: m,
            cap: 8,
        });
    }
    let mut out = Vec::new();
    if m == 0 {
        return Ok(out);
    }
    let mut rgs = vec![0usize; m];
    loop {
        out.push(Partition::from_assignment(&rgs)?);
        // next restricted growth string
        let mut i = m - 1;
        loop {
            let max_prefix = rgs[..i].iter().copied().max().unwrap_or(0);
            if i > 0 && rgs[i] <= max_prefix {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
        }
    }
}

/// Lifts a grouping of one slot's alternatives to a partition of flat
/// history indices. Classes follow the flat order of the coarsened set.
pub fn slot_partition(hs: &HistorySet, slot: usize, groups: &Partition) -> Result<Partition> {
    let shape = hs.shape();
    if slot >= shape.len() {
        return Err(Error::InvalidPartition(format!("no slot {slot}")));
    }
    groups.check_fine(shape[slot])?;
    let mut coarse_shape = shape.clone();
    coarse_shape[slot] = groups.len();
    let owner = groups.assignment();
    let coarse_count: usize = coarse_shape.iter().product();
    let mut classes = vec![Vec::new(); coarse_count];
    for (flat, idx) in hs.indices().enumerate() {
        let mut comps = idx.0.clone();
        comps[slot] = owner[comps[slot]];
        let mut cf = 0;
        for (&a, &n) in comps.iter().zip(&coarse_shape).rev() {
            cf = cf * n + a;
        }
        classes[cf].push(flat);
    }
    Partition::new(hs.len(), classes)
}

/// The chain-preserving coarse set: projectors of `slot` summed within each group.
pub fn coarsen_slot(hs: &HistorySet, slot: usize, groups: &Partition) -> Result<HistorySet> {
    if slot >= hs.slots().len() {
        return Err(Error::InvalidPartition(format!("no slot {slot}")));
    }
    let set = &hs.slots()[slot];
    groups.check_fine(set.len())?;
    let members = groups
        .classes()
        .iter()
        .map(|class| {
            let mut m = CMatrix::zeros(set.dim(), set.dim());
            for &i in class {
                m += set.members()[i].entries();
            }
            let label = class
                .iter()
                .map(|&i| set.members()[i].label())
                .collect::<Vec<_>>()
                .join("+");
            Projector::new(m, label)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut slots = hs.slots().to_vec();
    slots[slot] = ProjectorSet::new(members, set.time())?;
    HistorySet::new(slots)
}

/// C_ᾱ = Σ_{α∈ᾱ} C_α.
pub fn coarse_class_operator<F: HistoryFamily + ?Sized>(
    family: &F,
    part: &Partition,
    class: usize,
) -> Result<CMatrix> {
    part.check_fine(family.history_count())?;
    let members = part.classes().get(class).ok_or(Error::IndexOutOfRange {
        slot: 0,
        index: class,
        size: part.len(),
    })?;
    let d = family.dim();
    let mut sum = CMatrix::zeros(d, d);
    for &a in members {
        sum += family.class_operator_at(a)?;
    }
    Ok(sum)
}

/// D̄(ᾱ,β̄) = Σ_{α∈ᾱ} Σ_{β∈β̄} D(α,β).
pub fn coarse_decoherence_functional(functional: &CMatrix, part: &Partition) -> Result<CMatrix> {
    if functional.nrows() != functional.ncols() {
        return Err(Error::DimensionMismatch {
            expected: functional.nrows(),
            found: functional.ncols(),
        });
    }
    part.check_fine(functional.nrows())?;
    let k = part.len();
    let mut out = CMatrix::zeros(k, k);
    for (ca, a_members) in part.classes().iter().enumerate() {
        for (cb, b_members) in part.classes().iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &a in a_members {
                for &b in b_members {
                    acc += functional[(a, b)];
                }
            }
            out[(ca, cb)] = acc;
        }
    }
    Ok(out)
}

/// p(ᾱ) = Σ_{α∈ᾱ} p(α).
pub fn class_sums(fine: &[f64], part: &Partition) -> Result<Vec<f64>> {
    part.check_fine(fine.len())?;
    Ok(part
        .classes()
        .iter()
        .map(|class| class.iter().map(|&a| fine[a]).sum())
        .collect())
}

/// Class sums of the fine extended probabilities.
pub fn coarse_extended_probabilities<F: HistoryFamily + ?Sized>(
    family: &F,
    part: &Partition,
    psi: &StateVector,
) -> Result<Vec<f64>> {
    part.check_fine(family.history_count())?;
    class_sums(&extended_probabilities(family, psi)?, part)
}

/// Re⟨Ψ|C_ᾱ|Ψ⟩ evaluated on the summed class operators.
pub fn coarse_extended_probabilities_direct<F: HistoryFamily + ?Sized>(
    family: &F,
    part: &Partition,
    psi: &StateVector,
) -> Result<Vec<f64>> {
    check_dim(family.dim(), psi.dim())?;
    (0..part.len())
        .map(|c| {
            let op = coarse_class_operator(family, part, c)?;
            Ok(psi.amplitudes().dotc(&(op * psi.amplitudes())).re)
        })
        .collect()
}

/// A fine history family viewed through a partition.
pub struct CoarseGrained<'a, F: HistoryFamily + ?Sized> {
    fine: &'a F,
    partition: Partition,
}

impl<'a, F: HistoryFamily + ?Sized> CoarseGrained<'a, F> {
    pub fn new(fine: &'a F, partition: Partition) -> Result<Self> {
        partition.check_fine(fine.history_count())?;
        Ok(CoarseGrained { fine, partition })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }
}

impl<F: HistoryFamily + ?Sized> HistoryFamily for CoarseGrained<'_, F> {
    fn dim(&self) -> usize {
        self.fine.dim()
    }

    fn history_count(&self) -> usize {
        self.partition.len()
    }

    fn class_operator_at(&self, flat: usize) -> Result<CMatrix> {
        coarse_class_operator(self.fine, &self.partition, flat)
    }

    fn history_label(&self, flat: usize) -> String {
        self.partition.classes()[flat]
            .iter()
            .map(|&a| self.fine.history_label(a))
            .collect::<Vec<_>>()
            .join("|")
    }

    fn last_time(&self) -> Option<f64> {
        self.fine.last_time()
    }

    fn branches(&self, psi: &StateVector) -> Result<Vec<CVector>> {
        let fine = self.fine.branches(psi)?;
        Ok(self
            .partition
            .classes()
            .iter()
            .map(|class| {
                let mut acc = CVector::zeros(self.fine.dim());
                for &a in class {
                    acc += &fine[a];
                }
                acc
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyStep {
    /// Class indices merged, in the numbering before the merge.
    pub merged: (usize, usize),
    pub dec_after: f64,
    pub classes_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyOutcome {
    pub partition: Partition,
    pub dec: f64,
    pub initial_dec: f64,
    /// False when no admissible merge remains before the target is met.
    pub reached: bool,
    pub trace: Vec<GreedyStep>,
}

/// Relative width within which candidate merges count as tied.
const TIE_EPS: f64 = 1e-12;

/// Greedy pairwise merging on an explicit functional. At each step the
/// admissible pair whose merge leaves the smallest dec(D̄) is merged; ties go
/// to the lexicographically smallest (i, j). Stops as soon as dec ≤ `target`.
pub fn greedy_search_functional<A>(functional: &CMatrix, target: f64, admissible: A) -> GreedyOutcome
where
    A: Fn(&[usize], &[usize]) -> bool,
{
    let m = functional.nrows();
    let mut part = Partition::singletons(m);
    let mut d = functional.clone();
    let initial_dec = dec_measure(&d);
    let mut dec = initial_dec;
    let mut trace = Vec::new();
    while dec > target && part.len() > 1 {
        let k = part.len();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..k {
            for j in (i + 1)..k {
                if !admissible(&part.classes()[i], &part.classes()[j]) {
                    continue;
                }
                let score = dec_after_merge(&d, dec, i, j);
                let better = match best {
                    None => true,
                    Some((_, _, b)) => score < b - TIE_EPS * (1.0 + b.abs()),
                };
                if better {
                    best = Some((i, j, score));
                }
            }
        }
        let Some((i, j, _)) = best else {
            return GreedyOutcome {
                partition: part,
                dec,
                initial_dec,
                reached: false,
                trace,
            };
        };
        let merged = part.merge(i, j).expect("valid class pair");
        d = coarse_decoherence_functional(functional, &merged).expect("partition matches functional");
        dec = dec_measure(&d);
        part = merged;
        trace.push(GreedyStep {
            merged: (i, j),
            dec_after: dec,
            classes_after: part.len(),
        });
    }
    GreedyOutcome {
        partition: part,
        dec,
        initial_dec,
        reached: dec <= target,
        trace,
    }
}

fn dec_after_merge(d: &CMatrix, dec: f64, i: usize, j: usize) -> f64 {
    let k = d.nrows();
    let mut removed = d[(i, j)].norm() + d[(j, i)].norm();
    let mut added = 0.0;
    for c in 0..k {
        if c == i || c == j {
            continue;
        }
        removed += d[(i, c)].norm() + d[(j, c)].norm() + d[(c, i)].norm() + d[(c, j)].norm();
        added += (d[(i, c)] + d[(j, c)]).norm() + (d[(c, i)] + d[(c, j)]).norm();
    }
    (dec - removed + added).max(0.0)
}

/// Unconstrained greedy search on the decoherence functional of `family`.
pub fn greedy_decohering_search<F: HistoryFamily + ?Sized>(
    family: &F,
    psi: &StateVector,
    target: f64,
) -> Result<GreedyOutcome> {
    if family.history_count() < 2 {
        return Err(Error::InvalidConfig("greedy search needs at least two histories".into()));
    }
    let branches = family.branches(psi)?;
    let functional = crate::histories::gram_functional(&branches);
    Ok(greedy_search_functional(&functional, target, |_, _| true))
}
