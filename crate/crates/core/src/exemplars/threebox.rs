//! The three-box model: a particle in boxes A, B, C with zero Hamiltonian,
//! prepared in (|A⟩+|B⟩+|C⟩)/√3 and post-selected on (|A⟩+|B⟩−|C⟩)/√3.

use num_complex::Complex64;
use serde::Serialize;

use crate::coarsegrain::{coarsen_slot, Partition};
use crate::error::Result;
use crate::histories::{decoherence_functional, DecoherenceOptions, HistorySet};
use crate::hilbert::{CVector, Projector, ProjectorSet, StateVector};

/// Time label of the box alternatives.
pub const T_BOX: f64 = 1.0;
/// Time label of the final Φ / not-Φ alternatives.
pub const T_FINAL: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct ThreeBox {
    pub psi: StateVector,
    pub phi: StateVector,
    pub p_a: Projector,
    pub p_b: Projector,
    pub p_c: Projector,
    pub p_phi: Projector,
    /// Slots {A, B, C} then {Φ, Φ̄}; flat indices 0..3 are the histories ending in Φ.
    pub fine: HistorySet,
    /// {X, X̄} then {Φ, Φ̄}, for X = A, B, C.
    pub coarse: [HistorySet; 3],
}

fn real_ket(v: [f64; 3]) -> CVector {
    CVector::from_iterator(3, v.iter().map(|&x| Complex64::new(x, 0.0)))
}

pub fn three_box_model() -> Result<ThreeBox> {
    let psi = StateVector::normalized(real_ket([1.0, 1.0, 1.0]))?;
    let phi = StateVector::normalized(real_ket([1.0, 1.0, -1.0]))?;
    let p_a = Projector::basis_subset(3, &[0], "A")?;
    let p_b = Projector::basis_subset(3, &[1], "B")?;
    let p_c = Projector::basis_subset(3, &[2], "C")?;
    let p_phi = Projector::onto(phi.amplitudes(), "Phi")?;

    let boxes = ProjectorSet::new(vec![p_a.clone(), p_b.clone(), p_c.clone()], T_BOX)?;
    let last = ProjectorSet::new(vec![p_phi.clone(), p_phi.complement("notPhi")], T_FINAL)?;
    let fine = HistorySet::new(vec![boxes, last])?;

    let group = |x: usize| {
        let rest: Vec<usize> = (0..3).filter(|&i| i != x).collect();
        Partition::new(3, vec![vec![x], rest])
    };
    let coarse = [
        coarsen_slot(&fine, 0, &group(0)?)?,
        coarsen_slot(&fine, 0, &group(1)?)?,
        coarsen_slot(&fine, 0, &group(2)?)?,
    ];
    Ok(ThreeBox {
        psi,
        phi,
        p_a,
        p_b,
        p_c,
        p_phi,
        fine,
        coarse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoarseRow {
    pub alternative: String,
    pub conditional: f64,
    pub conditional_negation: f64,
    pub medium_decoherent: bool,
    pub max_off_diagonal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreeBoxTable {
    /// p(Φ) = ⟨Ψ|P_Φ|Ψ⟩.
    pub p_phi: f64,
    /// p(Φ,A), p(Φ,B), p(Φ,C).
    pub extended: [f64; 3],
    /// p(X|Φ) = p(Φ,X)/p(Φ).
    pub conditionals: [f64; 3],
    pub fine_medium_decoherent: bool,
    pub coarse: Vec<CoarseRow>,
    pub tolerance: f64,
}

/// Evaluates every quantity of the worked example at decoherence tolerance `tol`.
pub fn three_box_table(tol: f64) -> Result<ThreeBoxTable> {
    let model = three_box_model()?;
    let opts = DecoherenceOptions::with_tolerance(tol);
    let fine = decoherence_functional(&model.fine, &model.psi, &opts)?;
    let p_phi: f64 = fine.ep_probs[..3].iter().sum();
    let extended = [fine.ep_probs[0], fine.ep_probs[1], fine.ep_probs[2]];
    let conditionals = extended.map(|p| p / p_phi);
    let coarse = ["A", "B", "C"]
        .iter()
        .zip(&model.coarse)
        .map(|(name, hs)| {
            let r = decoherence_functional(hs, &model.psi, &opts)?;
            Ok(CoarseRow {
                alternative: name.to_string(),
                conditional: r.ep_probs[0] / p_phi,
                conditional_negation: r.ep_probs[1] / p_phi,
                medium_decoherent: r.medium_decoherent,
                max_off_diagonal: r.max_off_diagonal,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThreeBoxTable {
        p_phi,
        extended,
        conditionals,
        fine_medium_decoherent: fine.medium_decoherent,
        coarse,
        tolerance: tol,
    })
}
