//! Extended probabilities and decoherence functionals for finite-dimensional
//! quantum histories.

pub mod coarsegrain;
pub mod composite;
pub mod error;
pub mod exemplars;
pub mod finegrained;
pub mod hilbert;
pub mod histories;
pub mod model;
pub mod random;
pub mod records;

pub use error::{Error, ParseDiagnostic, Result};
pub use hilbert::{
    CMatrix, CVector, EvolutionSpec, HermitianOperator, Projector, ProjectorSet, StateVector, Tolerances,
};
pub use histories::{
    decoherence_functional, extended_probabilities, extended_probability, DecoherenceOptions,
    DecoherenceReport, HistoryFamily, HistorySet,
};
pub use model::{build_model, load_model, parse_model, parse_partition_literal, Model, ModelDocument};
