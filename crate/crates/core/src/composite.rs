//! Unentangled, non-interacting subsystems. The joint state is the tensor
//! product of the factor states and the joint class operators are tensor
//! products of factor class operators.
//!
//! Kronecker ordering puts the leftmost factor on the slowest-varying index,
//! both for Hilbert-space components and for joint flat history indices.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::histories::{DecoherenceOptions, HistoryFamily, HistoryIndex, HistorySet};
use crate::hilbert::{check_dim, CMatrix, CVector, StateVector};
use crate::records::{self, construct_records, verify_strong_records, RecordSet};

pub const JOINT_DIM_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub psi: StateVector,
    pub histories: HistorySet,
}

impl Factor {
    pub fn new(psi: StateVector, histories: HistorySet) -> Result<Self> {
        check_dim(histories.dim(), psi.dim())?;
        Ok(Factor { psi, histories })
    }

    /// ⟨Ψ|C_α|Ψ⟩ before taking the real part.
    pub fn amplitude(&self, idx: &HistoryIndex) -> Result<Complex64> {
        let c = crate::histories::class_operator(&self.histories, idx)?;
        Ok(self.psi.amplitudes().dotc(&(c * self.psi.amplitudes())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSystem {
    factors: Vec<Factor>,
    joint_psi: StateVector,
}

impl CompositeSystem {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidConfig("composite needs at least one factor".into()));
        }
        let mut dim: usize = 1;
        for f in &factors {
            dim = dim.saturating_mul(f.psi.dim());
        }
        if dim > JOINT_DIM_CAP {
            return Err(Error::CapExceeded {
                what: "joint dimension",
                count: dim,
                cap: JOINT_DIM_CAP,
            });
        }
        let mut joint = factors[0].psi.clone();
        for f in &factors[1..] {
            joint = joint.kron(&f.psi);
        }
        Ok(CompositeSystem {
            factors,
            joint_psi: joint,
        })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn joint_state(&self) -> &StateVector {
        &self.joint_psi
    }

    /// History count of each factor.
    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.histories.len()).collect()
    }

    /// Joint flat index from per-factor flat indices.
    pub fn joint_flat(&self, per_factor: &[usize]) -> Result<usize> {
        check_dim(self.factors.len(), per_factor.len())?;
        let mut flat = 0;
        for (k, (&i, m)) in per_factor.iter().zip(self.shape()).enumerate() {
            if i >= m {
                return Err(Error::IndexOutOfRange {
                    slot: k,
                    index: i,
                    size: m,
                });
            }
            flat = flat * m + i;
        }
        Ok(flat)
    }

    pub fn split_flat(&self, mut flat: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut out = vec![0; shape.len()];
        for (k, &m) in shape.iter().enumerate().rev() {
            out[k] = flat % m;
            flat /= m;
        }
        out
    }

    fn factor_indices(&self, per_factor: &[HistoryIndex]) -> Result<Vec<usize>> {
        check_dim(self.factors.len(), per_factor.len())?;
        self.factors
            .iter()
            .zip(per_factor)
            .map(|(f, idx)| f.histories.flat_index(idx))
            .collect()
    }
}

impl HistoryFamily for CompositeSystem {
    fn dim(&self) -> usize {
        self.joint_psi.dim()
    }

    fn history_count(&self) -> usize {
        self.shape().iter().product()
    }

    fn class_operator_at(&self, flat: usize) -> Result<CMatrix> {
        let parts = self.split_flat(flat);
        let mut op = CMatrix::identity(1, 1);
        for (f, &i) in self.factors.iter().zip(&parts) {
            op = op.kronecker(&f.histories.class_operator_at(i)?);
        }
        Ok(op)
    }

    fn history_label(&self, flat: usize) -> String {
        self.split_flat(flat)
            .iter()
            .zip(&self.factors)
            .map(|(&i, f)| format!("({})", f.histories.history_label(i)))
            .collect::<Vec<_>>()
            .join("⊗")
    }

    fn branches(&self, psi: &StateVector) -> Result<Vec<CVector>> {
        check_dim(self.dim(), psi.dim())?;
        if psi != &self.joint_psi {
            return (0..self.history_count())
                .map(|flat| Ok(self.class_operator_at(flat)? * psi.amplitudes()))
                .collect();
        }
        let per_factor = self
            .factors
            .iter()
            .map(|f| f.histories.branches(&f.psi))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.history_count())
            .map(|flat| {
                let parts = self.split_flat(flat);
                let mut v = CVector::from_element(1, Complex64::new(1.0, 0.0));
                for (branches, &i) in per_factor.iter().zip(&parts) {
                    v = v.kronecker(&branches[i]);
                }
                v
            })
            .collect())
    }
}

/// Re Π_k ⟨Ψ^k|C^k_{α^k}|Ψ^k⟩.
pub fn joint_extended_probability(cs: &CompositeSystem, per_factor: &[HistoryIndex]) -> Result<f64> {
    check_dim(cs.factors.len(), per_factor.len())?;
    let mut z = Complex64::new(1.0, 0.0);
    for (f, idx) in cs.factors.iter().zip(per_factor) {
        z *= f.amplitude(idx)?;
    }
    Ok(z.re)
}

/// Re⟨𝚿|C¹⊗⋯⊗C^N|𝚿⟩ with the full tensor-product matrices.
pub fn joint_extended_probability_embedded(
    cs: &CompositeSystem,
    per_factor: &[HistoryIndex],
) -> Result<f64> {
    let flat = cs.joint_flat(&cs.factor_indices(per_factor)?)?;
    let op = cs.class_operator_at(flat)?;
    let psi = cs.joint_state().amplitudes();
    Ok(psi.dotc(&(op * psi)).re)
}

/// Π_k Re⟨Ψ^k|C^k_{α^k}|Ψ^k⟩.
pub fn product_of_factor_probabilities(cs: &CompositeSystem, per_factor: &[HistoryIndex]) -> Result<f64> {
    check_dim(cs.factors.len(), per_factor.len())?;
    let mut p = 1.0;
    for (f, idx) in cs.factors.iter().zip(per_factor) {
        p *= f.amplitude(idx)?.re;
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductRuleRow {
    pub factor_histories: Vec<usize>,
    pub label: String,
    pub joint: f64,
    pub product: f64,
    pub violation: f64,
}

/// Joint EP versus the product of factor EPs for every joint history.
pub fn product_rule_table(cs: &CompositeSystem) -> Result<Vec<ProductRuleRow>> {
    (0..cs.history_count())
        .map(|flat| {
            let parts = cs.split_flat(flat);
            let idx = cs
                .factors
                .iter()
                .zip(&parts)
                .map(|(f, &i)| f.histories.history_index(i))
                .collect::<Result<Vec<_>>>()?;
            let joint = joint_extended_probability(cs, &idx)?;
            let product = product_of_factor_probabilities(cs, &idx)?;
            Ok(ProductRuleRow {
                factor_histories: parts,
                label: cs.history_label(flat),
                joint,
                product,
                violation: (joint - product).abs(),
            })
        })
        .collect()
}

/// Joint records R¹⊗⋯⊗R^N, ordered by joint flat index. Every factor set
/// must pass the strong-record check at `tolerance`.
pub fn product_records(cs: &CompositeSystem, factor_records: &[RecordSet], tolerance: f64) -> Result<RecordSet> {
    check_dim(cs.factors.len(), factor_records.len())?;
    for (k, (f, rs)) in cs.factors.iter().zip(factor_records).enumerate() {
        let check = verify_strong_records(&f.histories, &f.psi, rs, tolerance)?;
        if !check.pass {
            return Err(Error::FactorNotRecorded {
                factor: k,
                defect: check.max_defect,
            });
        }
    }
    let mut joint = records::unit();
    for rs in factor_records {
        joint = records::kron_records(&joint, rs);
    }
    RecordSet::new(joint.members().to_vec(), joint.t_rec())
}

/// Builds each factor's records and combines them; fails on the first factor
/// that is not medium decoherent.
pub fn recorded_product(cs: &CompositeSystem, opts: &DecoherenceOptions) -> Result<RecordSet> {
    let factor_records = cs
        .factors
        .iter()
        .enumerate()
        .map(|(k, f)| {
            construct_records(&f.histories, &f.psi, opts).map_err(|e| match e {
                Error::NotDecoherent { max, .. } => Error::FactorNotRecorded { factor: k, defect: max },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    product_records(cs, &factor_records, opts.tolerance)
}
