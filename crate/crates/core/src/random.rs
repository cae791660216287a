//! Seeded random models: states, bases, projector sets, history sets and
//! partitions. Used by the property harnesses and by the CLI's `--seed` runs.

use nalgebra::linalg::QR;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coarsegrain::Partition;
use crate::error::Result;
use crate::histories::HistorySet;
use crate::hilbert::{CMatrix, CVector, Projector, ProjectorSet, StateVector};

pub type ModelRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ModelRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CVector {
    CVector::from_fn(dim, |_, _| gaussian(rng))
}

/// Haar-like random unit vector.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> StateVector {
    StateVector::normalized(random_vector(rng, dim)).expect("gaussian vector is non-zero")
}

/// Haar-distributed unitary via QR of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
    let qr = QR::new(g);
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
    (&g + g.adjoint()).scale(0.5)
}

/// Random assignment of `0..n` into exactly `k` non-empty groups.
pub fn random_groups<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<Vec<usize>> {
    assert!(k >= 1 && k <= n, "need 1 <= k <= n");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut groups: Vec<Vec<usize>> = order[..k].iter().map(|&i| vec![i]).collect();
    for &i in &order[k..] {
        let g = rng.random_range(0..k);
        groups[g].push(i);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    groups
}

/// `k` projectors that group the columns of `basis`.
pub fn grouped_projector_set(basis: &CMatrix, groups: &[Vec<usize>], time: f64) -> Result<ProjectorSet> {
    let d = basis.nrows();
    let members = groups
        .iter()
        .enumerate()
        .map(|(g, cols)| {
            let mut m = CMatrix::zeros(d, d);
            for &c in cols {
                let v = basis.column(c);
                m += &v * v.adjoint();
            }
            Projector::new(m, format!("p{g}"))
        })
        .collect::<Result<Vec<_>>>()?;
    ProjectorSet::new(members, time)
}

pub fn random_projector_set<R: Rng + ?Sized>(rng: &mut R, dim: usize, k: usize, time: f64) -> Result<ProjectorSet> {
    let basis = random_unitary(rng, dim);
    let groups = random_groups(rng, dim, k);
    grouped_projector_set(&basis, &groups, time)
}

/// `slots` time slots, each with between 2 and `dim` alternatives.
pub fn random_history_set<R: Rng + ?Sized>(rng: &mut R, dim: usize, slots: usize) -> Result<HistorySet> {
    let sets = (0..slots)
        .map(|t| {
            let k = rng.random_range(2.min(dim)..=dim);
            random_projector_set(rng, dim, k, (t + 1) as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    HistorySet::new(sets)
}

pub fn random_partition<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Partition {
    let k = rng.random_range(1..=m);
    Partition::new(m, random_groups(rng, m, k)).expect("groups cover 0..m")
}

/// A history set that is exactly medium decoherent for `psi`.
///
/// The first slot is random. Each later slot is diagonal in an orthonormal
/// basis that contains the normalized non-zero branches so far, completed at
/// random, with its basis vectors grouped at random. Every branch therefore
/// either survives unchanged or is annihilated, and surviving branches stay
/// mutually orthogonal.
pub fn decoherent_history_set<R: Rng + ?Sized>(
    rng: &mut R,
    psi: &StateVector,
    slots: usize,
) -> Result<HistorySet> {
    let dim = psi.dim();
    let k0 = rng.random_range(2.min(dim)..=dim);
    let mut sets = vec![random_projector_set(rng, dim, k0, 1.0)?];
    for t in 1..slots {
        let partial = HistorySet::new(sets.clone())?;
        let branches = crate::histories::HistoryFamily::branches(&partial, psi)?;
        let mut basis: Vec<CVector> = Vec::new();
        for b in branches.iter().filter(|b| b.norm() > 1e-9) {
            basis.push(b.unscale(b.norm()));
        }
        while basis.len() < dim {
            let mut v = random_vector(rng, dim);
            for _ in 0..2 {
                for e in &basis {
                    let o = e.dotc(&v);
                    v -= e * o;
                }
            }
            basis.push(v.unscale(v.norm()));
        }
        let matrix = CMatrix::from_columns(&basis);
        let k = rng.random_range(2.min(dim)..=dim);
        let groups = random_groups(rng, dim, k);
        sets.push(grouped_projector_set(&matrix, &groups, (t + 1) as f64)?);
    }
    HistorySet::new(sets)
}
