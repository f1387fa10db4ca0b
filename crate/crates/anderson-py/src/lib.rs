//! Python bindings: white noise, spectra, heat traces, caches and the
//! acceptance experiments, returning plain Python numbers and lists.

use anderson::cache::SpectralCache;
use anderson::experiments::{self as ex, CriterionReport};
use anderson::heat::HeatKernel;
use anderson::paracontrolled::EnhancedNoise;
use anderson::spectral::{self, OperatorMatrix, OperatorMeta, SpectralDecomposition};
use anderson::{sample_white_noise, TorusGrid};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: anderson::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn grid(l: f64, n: usize) -> PyResult<TorusGrid> {
    TorusGrid::new(l, n).map_err(py_err)
}

/// A spectral decomposition of the regularized operator.
#[pyclass(module = "anderson_py", frozen)]
struct Decomposition {
    inner: SpectralDecomposition,
}

#[pymethods]
impl Decomposition {
    /// Dense decomposition (with eigenvectors) for `(L, N, seed, r)`.
    #[new]
    #[pyo3(signature = (l, n, seed, r, z0 = 1.0))]
    fn new(py: Python<'_>, l: f64, n: usize, seed: u64, r: f64, z0: f64) -> PyResult<Self> {
        let g = grid(l, n)?;
        let inner = py.detach(|| ex::dense(g, seed, r, z0)).map_err(py_err)?.1;
        Ok(Self { inner })
    }

    /// Load an ANDS spectral cache (magic, version and checksum verified).
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let inner = SpectralCache::load(&path).and_then(|c| c.to_decomposition()).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Store as an ANDS spectral cache (atomic write).
    fn store(&self, path: std::path::PathBuf) -> PyResult<()> {
        SpectralCache::from_decomposition(&self.inner).and_then(|c| c.store(&path)).map_err(py_err)
    }

    /// Ascending eigenvalues.
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Eigenfunction `n` on the `N x N` grid, row-major.
    fn eigenfunction(&self, n: usize) -> PyResult<Vec<f64>> {
        if n >= self.inner.len() {
            return Err(PyValueError::new_err(format!("eigenpair {n} out of range (have {})", self.inner.len())));
        }
        Ok(self.inner.grid_values(n))
    }

    /// `tr e^{-tH}` by the eigen-sum.
    fn heat_trace(&self, t: f64) -> PyResult<f64> {
        HeatKernel::new(&self.inner).and_then(|hk| hk.trace(t)).map_err(py_err)
    }

    /// `(lambda_1 - lambda_0, min u_0, Cheeger bound, log-Sobolev bound)`.
    fn gap_certificate(&self) -> (f64, f64, f64, f64) {
        let c = spectral::GapCertificate::from_decomposition(&self.inner);
        (c.gap, c.u0_min, c.cheeger_bound, c.log_sobolev_bound)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        let g = self.inner.grid();
        format!("Decomposition(L={}, N={}, seed={}, r={}, pairs={})", g.l(), g.n(), self.inner.meta.seed, self.inner.meta.r, self.inner.len())
    }
}

/// Heat-regularized white noise on the `N x N` grid, row-major.
#[pyfunction]
fn white_noise(l: f64, n: usize, seed: u64, r: f64) -> PyResult<Vec<f64>> {
    let noise = sample_white_noise(grid(l, n)?, seed).heat_regularize(r).map_err(py_err)?;
    Ok(noise.field.values())
}

/// The lowest `k` eigenvalues by Lanczos.
#[pyfunction]
#[pyo3(signature = (l, n, seed, r, k, z0 = 1.0))]
fn lowest_eigenvalues(py: Python<'_>, l: f64, n: usize, seed: u64, r: f64, k: usize, z0: f64) -> PyResult<Vec<f64>> {
    let g = grid(l, n)?;
    py.detach(|| {
        let e = EnhancedNoise::new(&sample_white_noise(g, seed), r, z0)?;
        let spec = spectral::lanczos_lowest(&e.potential(), OperatorMeta { r, z0, seed, h: 1.0 }, k, 1e-11)?;
        Ok(spec.values().to_vec())
    })
    .map_err(py_err)
}

/// All eigenvalues of the flat operator `-Delta` on the Galerkin space.
#[pyfunction]
fn flat_eigenvalues(l: f64, n: usize) -> PyResult<Vec<f64>> {
    let flat = OperatorMatrix::from_potential(&anderson::SpectralField::zeros(grid(l, n)?), OperatorMeta::default());
    Ok(flat.eigendecompose(false).map_err(py_err)?.values().to_vec())
}

/// The Weyl constant `L^2 / (4 pi)`.
#[pyfunction]
fn weyl_constant(l: f64) -> f64 {
    spectral::weyl_constant(l)
}

fn report_tuple(r: CriterionReport) -> (u8, bool, String) {
    (r.id, r.passed, r.line())
}

/// Run a quick acceptance criterion at reduced size: 3 (resolvent equivalence),
/// 4 (Weyl law) or 10 (spectrum shift).  Returns `(id, passed, line)`.
#[pyfunction]
fn quick_criterion(py: Python<'_>, id: u8) -> PyResult<(u8, bool, String)> {
    let g = grid(2.0 * std::f64::consts::PI, 16)?;
    let r = 2f64.powi(-6);
    let report = py.detach(|| match id {
        3 => ex::resolvent_equivalence(g, r, 0, 3),
        4 => ex::weyl_law(g, 2, r),
        10 => ex::spectrum_shift(g, 0, r),
        _ => Err(anderson::Error::InvalidArgument(format!("no quick run for criterion {id}"))),
    });
    report.map(report_tuple).map_err(py_err)
}

#[pymodule]
fn anderson_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Decomposition>()?;
    m.add_function(wrap_pyfunction!(white_noise, m)?)?;
    m.add_function(wrap_pyfunction!(lowest_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(flat_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(weyl_constant, m)?)?;
    m.add_function(wrap_pyfunction!(quick_criterion, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
