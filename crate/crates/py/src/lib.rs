//! Python bindings: orbit catalogs, restricted tensors, proofs and
//! certificate verification.
//!
//!     import mmrank
//!     result = mmrank.prove(2, 2, 2)
//!     assert mmrank.verify(result.certificate()) == 7

use pyo3::create_exception;
use pyo3::exceptions::{PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use mmrank_core::certificate::Certificate;
use mmrank_core::engine::{prove_format, EngineConfig, ProofRun};
use mmrank_core::orbits::{self, RestrictionSet};
use mmrank_core::tensor::{build_restricted_tensor, Bipartition, Tensor3};
use mmrank_core::verifier::{verify_bytes, VerifyError};
use mmrank_core::Error;

create_exception!(mmrank, CertificateRejected, PyValueError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::ResourceLimit(msg) => PyMemoryError::new_err(msg),
        Error::DimensionMismatch(_) | Error::Unsupported(_) | Error::Format(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) | Error::Internal(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Orbit representatives of restriction subspaces, grouped by dimension.
#[pyclass(name = "OrbitCatalog", frozen)]
struct PyOrbitCatalog {
    inner: orbits::OrbitCatalog,
}

#[pymethods]
impl PyOrbitCatalog {
    #[getter]
    fn l(&self) -> usize {
        self.inner.l()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn square(&self) -> bool {
        self.inner.square()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn layer_counts(&self) -> Vec<usize> {
        self.inner.layer_counts()
    }

    /// RREF basis words of an orbit's representative.
    fn representative(&self, orbit: u32) -> PyResult<Vec<u64>> {
        if orbit as usize >= self.inner.len() {
            return Err(PyValueError::new_err(format!("orbit {orbit} out of range")));
        }
        Ok(self.inner.representative(orbit).basis().to_vec())
    }

    /// Orbit of the span of `functionals` and the symmetry mapping it onto
    /// the representative, as `(orbit, left_code, right_code, transposed)`.
    fn canonicalize(&self, functionals: Vec<u64>) -> PyResult<(u32, u64, u64, bool)> {
        let set = RestrictionSet::new(self.inner.l(), self.inner.m(), &functionals).map_err(to_py)?;
        let (id, w) = self.inner.canonicalize(&set).map_err(to_py)?;
        Ok((id, w.left.code(), w.right.code(), w.transposed))
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: orbits::OrbitCatalog::from_bytes(data).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("OrbitCatalog({}x{}, square={}, orbits={})", self.inner.l(), self.inner.m(), self.inner.square(), self.inner.len())
    }
}

/// The matrix multiplication tensor restricted by linear functionals on A.
#[pyclass(name = "Tensor", frozen)]
struct PyTensor {
    inner: Tensor3,
}

#[pymethods]
impl PyTensor {
    #[new]
    #[pyo3(signature = (l, m, n, restrictions=Vec::new()))]
    fn new(l: usize, m: usize, n: usize, restrictions: Vec<u64>) -> PyResult<Self> {
        let set = RestrictionSet::new(l, m, &restrictions).map_err(to_py)?;
        Ok(Self {
            inner: build_restricted_tensor(l, m, n, &set).map_err(to_py)?,
        })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    fn cells(&self) -> Vec<(usize, usize, usize)> {
        self.inner.cells()
    }

    /// Ranks of the AB|C, BC|A and CA|B flattenings.
    fn flattening_ranks(&self) -> (usize, usize, usize) {
        let [a, b, c] = Bipartition::ALL.map(|p| self.inner.flattening_rank(p));
        (a, b, c)
    }

    fn max_flattening_rank(&self) -> usize {
        self.inner.max_flattening_rank()
    }

    /// Exhaustive check of `rank <= r` (dimensions up to 4, `r <= 8`).
    fn rank_at_most(&self, r: usize) -> PyResult<bool> {
        mmrank_core::oracle::exhaustive_rank_leq(&self.inner, r).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Outcome of `prove`: the bound table and its certificate.
#[pyclass(name = "ProofResult", frozen)]
struct PyProofResult {
    run: ProofRun,
}

#[pymethods]
impl PyProofResult {
    #[getter]
    fn lower_bound(&self) -> u32 {
        self.run.final_bound()
    }

    fn bounds(&self) -> Vec<u32> {
        self.run.bounds()
    }

    fn techniques(&self) -> Vec<&'static str> {
        self.run.entries.iter().map(|e| e.technique.name()).collect()
    }

    fn catalog(&self) -> PyOrbitCatalog {
        PyOrbitCatalog {
            inner: orbits::OrbitCatalog::from_bytes(&self.run.catalog.to_bytes()).expect("catalog round trip"),
        }
    }

    fn certificate<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.run.certificate.to_bytes())
    }

    fn dump(&self) -> String {
        self.run.certificate.dump_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "ProofResult(<{},{},{}>, lower_bound={})",
            self.run.l,
            self.run.m,
            self.run.n,
            self.run.final_bound()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (l, m, square=false))]
fn enumerate_orbits(py: Python<'_>, l: usize, m: usize, square: bool) -> PyResult<PyOrbitCatalog> {
    let inner = py.detach(|| orbits::enumerate_orbits(l, m, square)).map_err(to_py)?;
    Ok(PyOrbitCatalog { inner })
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (l, m, n, step_limit=10_000_000, fp_bits=32, threads=0, target=None))]
fn prove(
    py: Python<'_>,
    l: usize,
    m: usize,
    n: usize,
    step_limit: u64,
    fp_bits: usize,
    threads: usize,
    target: Option<u32>,
) -> PyResult<PyProofResult> {
    let cfg = EngineConfig {
        step_limit,
        fp_bit_cap: fp_bits,
        thread_count: threads,
        global_target: target,
        ..EngineConfig::default()
    };
    let run = py.detach(|| prove_format(l, m, n, &cfg)).map_err(to_py)?;
    Ok(PyProofResult { run })
}

/// Verifies certificate bytes and returns the verified bound. Raises
/// `CertificateRejected` on any failed check.
#[pyfunction]
#[pyo3(signature = (certificate, threads=0))]
fn verify(py: Python<'_>, certificate: &[u8], threads: usize) -> PyResult<u32> {
    let cfg = EngineConfig {
        thread_count: threads,
        ..EngineConfig::default()
    };
    let data = certificate.to_vec();
    match py.detach(|| verify_bytes(&data, &cfg)) {
        Ok(table) => Ok(table.final_bound),
        Err(e @ VerifyError::Rejected { .. }) => Err(CertificateRejected::new_err(e.to_string())),
        Err(VerifyError::Environment(e)) => Err(to_py(e)),
    }
}

/// Text rendering of certificate bytes.
#[pyfunction]
fn dump(certificate: &[u8]) -> PyResult<String> {
    let cert = Certificate::from_bytes(certificate).map_err(|e| CertificateRejected::new_err(e.to_string()))?;
    Ok(cert.dump_text())
}

/// Names a functional word, e.g. `a_{0,1}+a_{1,0}`.
#[pyfunction]
fn functional_name(m: usize, word: u64) -> String {
    orbits::functional_name(m, word)
}

#[pymodule]
fn mmrank(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("CertificateRejected", m.py().get_type::<CertificateRejected>())?;
    m.add_class::<PyOrbitCatalog>()?;
    m.add_class::<PyTensor>()?;
    m.add_class::<PyProofResult>()?;
    m.add_function(wrap_pyfunction!(enumerate_orbits, m)?)?;
    m.add_function(wrap_pyfunction!(prove, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(dump, m)?)?;
    m.add_function(wrap_pyfunction!(functional_name, m)?)?;
    Ok(())
}
