//! Python bindings for `extprob`.

use std::path::PathBuf;

use extprob::coarsegrain::{greedy_decohering_search, CoarseGrained, Partition};
use extprob::composite::{product_rule_table, recorded_product};
use extprob::exemplars::{dutchbook, threebox, twoslit};
use extprob::finegrained::fundamental_distribution_default;
use extprob::histories::{
    decoherence_functional, extended_probabilities, DecoherenceOptions, DecoherenceReport, HistoryFamily,
    DEFAULT_DECOHERENCE_TOL,
};
use extprob::hilbert::EvolutionSpec;
use extprob::model::{self, Model as CoreModel, ModelDocument};
use extprob::random;
use extprob::records::{construct_records, record_correlation_report, verify_strong_records};
use extprob::Error;
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(extprob, ExtprobError, PyException);
create_exception!(extprob, ParseError, ExtprobError);
create_exception!(extprob, InvariantViolation, ExtprobError);
create_exception!(extprob, NotDecoherent, ExtprobError);
create_exception!(extprob, CapExceeded, ExtprobError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Parse(_) => ParseError::new_err(msg),
        Error::InvariantViolation { .. } | Error::DimensionMismatch { .. } => InvariantViolation::new_err(msg),
        Error::NotDecoherent { .. } | Error::FactorNotRecorded { .. } => NotDecoherent::new_err(msg),
        Error::CapExceeded { .. } => CapExceeded::new_err(msg),
        _ => ExtprobError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for extprob::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A partition given by name (declared in the model file) or as a list of classes.
#[derive(FromPyObject)]
enum PartitionArg {
    Name(String),
    Classes(Vec<Vec<usize>>),
}

/// Decoherence functional of a (possibly coarse-grained) history set.
#[pyclass(frozen, name = "DecoherenceReport")]
struct PyReport {
    inner: DecoherenceReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.clone()
    }

    /// D(α,β) as nested lists of complex numbers.
    #[getter]
    fn functional(&self) -> Vec<Vec<Complex64>> {
        let d = &self.inner.functional;
        (0..d.nrows()).map(|i| (0..d.ncols()).map(|j| d[(i, j)]).collect()).collect()
    }

    #[getter]
    fn extended_probabilities(&self) -> Vec<f64> {
        self.inner.ep_probs.clone()
    }

    #[getter]
    fn dh_probabilities(&self) -> Vec<f64> {
        self.inner.dh_probs.clone()
    }

    #[getter]
    fn dec(&self) -> f64 {
        self.inner.dec
    }

    #[getter]
    fn max_off_diagonal(&self) -> f64 {
        self.inner.max_off_diagonal
    }

    #[getter]
    fn medium_decoherent(&self) -> bool {
        self.inner.medium_decoherent
    }

    #[getter]
    fn linearly_positive(&self) -> bool {
        self.inner.linearly_positive
    }

    #[getter]
    fn total_negative(&self) -> f64 {
        self.inner.total_negative()
    }

    fn offending_pairs(&self) -> Vec<(usize, usize, f64)> {
        self.inner.offending_pairs()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "DecoherenceReport(histories={}, dec={}, medium_decoherent={})",
            self.inner.len(),
            self.inner.dec,
            self.inner.medium_decoherent
        )
    }
}

/// A parsed and built model file.
#[pyclass(frozen, name = "Model")]
struct PyModel {
    doc: Option<ModelDocument>,
    inner: CoreModel,
}

impl PyModel {
    fn partition(&self, arg: PartitionArg) -> PyResult<Partition> {
        let hs = self.inner.require_histories().py()?;
        match arg {
            PartitionArg::Name(name) => Ok(self.inner.partition(&name).py()?.flat.clone()),
            PartitionArg::Classes(classes) => Partition::new(hs.len(), classes).py(),
        }
    }
}

#[pymethods]
impl PyModel {
    /// Parses model text. Factor paths resolve against `base`, if given.
    #[staticmethod]
    #[pyo3(signature = (text, base=None))]
    fn parse(text: &str, base: Option<PathBuf>) -> PyResult<Self> {
        let doc = model::parse_model(text).py()?;
        let inner = model::build_model(&doc, base.as_deref()).py()?;
        Ok(PyModel { doc: Some(doc), inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (doc, inner) = model::load_model(&path).py()?;
        Ok(PyModel { doc: Some(doc), inner })
    }

    /// Random state and history set from a seed.
    #[staticmethod]
    #[pyo3(signature = (seed, dim=3, slots=2))]
    fn random(seed: u64, dim: usize, slots: usize) -> PyResult<Self> {
        let mut rng = random::rng(seed);
        let psi = random::random_state(&mut rng, dim);
        let hs = random::random_history_set(&mut rng, dim, slots).py()?;
        Ok(PyModel {
            doc: None,
            inner: CoreModel {
                dim,
                psi: Some(psi),
                evolution: EvolutionSpec::zero(dim),
                histories: Some(hs),
                partitions: Vec::new(),
                fine: None,
                composite: None,
            },
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn labels(&self) -> PyResult<Vec<String>> {
        let hs = self.inner.require_histories().py()?;
        Ok((0..hs.len()).map(|i| hs.history_label(i)).collect())
    }

    #[getter]
    fn partitions(&self) -> Vec<String> {
        self.inner.partitions.iter().map(|p| p.name.clone()).collect()
    }

    /// Canonical model text, or None for a random model.
    fn to_text(&self) -> Option<String> {
        self.doc.as_ref().map(|d| d.to_string())
    }

    #[pyo3(signature = (partition=None))]
    fn extended_probabilities(&self, partition: Option<PartitionArg>) -> PyResult<Vec<f64>> {
        let psi = self.inner.require_state().py()?;
        let hs = self.inner.require_histories().py()?;
        match partition {
            Some(p) => extended_probabilities(&CoarseGrained::new(hs, self.partition(p)?).py()?, psi).py(),
            None => extended_probabilities(hs, psi).py(),
        }
    }

    #[pyo3(signature = (partition=None, tol=DEFAULT_DECOHERENCE_TOL))]
    fn decoherence(&self, partition: Option<PartitionArg>, tol: f64) -> PyResult<PyReport> {
        let psi = self.inner.require_state().py()?;
        let hs = self.inner.require_histories().py()?;
        let opts = DecoherenceOptions::with_tolerance(tol);
        let inner = match partition {
            Some(p) => decoherence_functional(&CoarseGrained::new(hs, self.partition(p)?).py()?, psi, &opts),
            None => decoherence_functional(hs, psi, &opts),
        }
        .py()?;
        Ok(PyReport { inner })
    }

    /// Builds strong records; raises NotDecoherent when the set interferes.
    #[pyo3(signature = (partition=None, tol=DEFAULT_DECOHERENCE_TOL))]
    fn records<'py>(&self, py: Python<'py>, partition: Option<PartitionArg>, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let psi = self.inner.require_state().py()?;
        let hs = self.inner.require_histories().py()?;
        let opts = DecoherenceOptions::with_tolerance(tol);
        let out = PyDict::new(py);
        let fill = |family: &dyn HistoryFamily| -> PyResult<()> {
            let rs = construct_records(family, psi, &opts).py()?;
            let check = verify_strong_records(family, psi, &rs, 1e-9).py()?;
            let corr = record_correlation_report(family, psi, &rs).py()?;
            out.set_item("t_rec", rs.t_rec())?;
            out.set_item("count", rs.len())?;
            out.set_item("strong_defect", check.max_defect)?;
            out.set_item("record_probabilities", rs.record_probabilities(psi).py()?)?;
            out.set_item("correlation_defect", corr.max_defect)?;
            Ok(())
        };
        match partition {
            Some(p) => fill(&CoarseGrained::new(hs, self.partition(p)?).py()?)?,
            None => fill(hs)?,
        }
        Ok(out)
    }

    /// Greedy pairwise merging until dec ≤ target; returns (classes, dec, reached).
    #[pyo3(signature = (target=DEFAULT_DECOHERENCE_TOL))]
    fn greedy_coarsen(&self, target: f64) -> PyResult<(Vec<Vec<usize>>, f64, bool)> {
        let psi = self.inner.require_state().py()?;
        let hs = self.inner.require_histories().py()?;
        let out = greedy_decohering_search(hs, psi, target).py()?;
        Ok((out.partition.classes().to_vec(), out.dec, out.reached))
    }

    /// Fundamental distribution as (history, w) pairs.
    fn fundamental_distribution(&self) -> PyResult<Vec<(Vec<usize>, f64)>> {
        let spec = self
            .inner
            .fine
            .as_ref()
            .ok_or_else(|| ExtprobError::new_err("model has no fine section"))?;
        let dist = fundamental_distribution_default(spec).py()?;
        Ok((0..dist.len()).map(|i| (dist.history(i), dist.values[i])).collect())
    }

    /// Largest |p_joint − Π p_k| and whether every factor has records.
    #[pyo3(signature = (tol=DEFAULT_DECOHERENCE_TOL))]
    fn product_rule(&self, tol: f64) -> PyResult<(f64, bool)> {
        let cs = self
            .inner
            .composite
            .as_ref()
            .ok_or_else(|| ExtprobError::new_err("model has no factor declarations"))?;
        let worst = product_rule_table(cs).py()?.iter().map(|r| r.violation).fold(0.0, f64::max);
        let recorded = recorded_product(cs, &DecoherenceOptions::with_tolerance(tol)).is_ok();
        Ok((worst, recorded))
    }

    fn __repr__(&self) -> String {
        let histories = self.inner.histories.as_ref().map_or(0, |h| h.len());
        format!("Model(dim={}, histories={})", self.inner.dim, histories)
    }
}

#[pyfunction]
fn parse_complex(text: &str) -> PyResult<Complex64> {
    model::parse_complex(text).ok_or_else(|| ExtprobError::new_err(format!("not a complex literal: {text:?}")))
}

/// Worked three-box values as a dict.
#[pyfunction]
#[pyo3(signature = (tol=1e-10))]
fn three_box<'py>(py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let t = threebox::three_box_table(tol).py()?;
    let out = PyDict::new(py);
    out.set_item("p_phi", t.p_phi)?;
    out.set_item("extended", t.extended.to_vec())?;
    out.set_item("conditionals", t.conditionals.to_vec())?;
    out.set_item("fine_medium_decoherent", t.fine_medium_decoherent)?;
    let coarse = PyDict::new(py);
    for row in &t.coarse {
        let r = PyDict::new(py);
        r.set_item("conditional", row.conditional)?;
        r.set_item("conditional_negation", row.conditional_negation)?;
        r.set_item("medium_decoherent", row.medium_decoherent)?;
        r.set_item("max_off_diagonal", row.max_off_diagonal)?;
        coarse.set_item(&row.alternative, r)?;
    }
    out.set_item("coarse", coarse)?;
    Ok(out)
}

/// ℘(y,U) at screen position y for the default geometry.
#[pyfunction]
fn two_slit_density(y: f64) -> f64 {
    twoslit::extended_density(&twoslit::TwoSlitConfig::default(), y)
}

/// Binned p(i,U) as (lo, hi, value) for bins of width kΔ / k.
#[pyfunction]
#[pyo3(signature = (k_delta=5.0, panels=twoslit::DEFAULT_PANELS))]
fn two_slit_bins(k_delta: f64, panels: usize) -> PyResult<Vec<(f64, f64, f64)>> {
    let cfg = twoslit::TwoSlitConfig {
        panels,
        ..twoslit::TwoSlitConfig::with_k_delta(k_delta)
    };
    let rows = twoslit::binned_extended_probabilities(&cfg).py()?;
    Ok(rows.iter().map(|r| (r.lo, r.hi, r.upper)).collect())
}

/// Bettor gains (G_A, G_Ā); p_not_a defaults to 1 − p_a.
#[pyfunction]
#[pyo3(signature = (p_a, stake_a, p_not_a=None, stake_not_a=0.0))]
fn dutch_book(p_a: f64, stake_a: f64, p_not_a: Option<f64>, stake_not_a: f64) -> (f64, f64) {
    let g = dutchbook::dutch_book_gains(&dutchbook::BetSpec {
        p_a,
        p_not_a,
        stake_a,
        stake_not_a,
    });
    (g.if_a, g.if_not_a)
}

#[pymodule]
#[pyo3(name = "extprob")]
fn extprob_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("ExtprobError", py.get_type::<ExtprobError>())?;
    m.add("ParseError", py.get_type::<ParseError>())?;
    m.add("InvariantViolation", py.get_type::<InvariantViolation>())?;
    m.add("NotDecoherent", py.get_type::<NotDecoherent>())?;
    m.add("CapExceeded", py.get_type::<CapExceeded>())?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(parse_complex, m)?)?;
    m.add_function(wrap_pyfunction!(three_box, m)?)?;
    m.add_function(wrap_pyfunction!(two_slit_density, m)?)?;
    m.add_function(wrap_pyfunction!(two_slit_bins, m)?)?;
    m.add_function(wrap_pyfunction!(dutch_book, m)?)?;
    Ok(())
}
