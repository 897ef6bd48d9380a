//! Python bindings: meshes, builtin cases, solves with interface recovery,
//! convergence studies and block-Jacobi.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use evflow::coupling::{block_jacobi_solve, BlockJacobiOptions};
use evflow::linalg::CgOptions;
use evflow::verification::{self, LevelConvention, LevelRun, StudyOptions};
use evflow::{build_multiblock, checkerboard, compute_interface_trace, enumerate_dofs, BlockSpec, ManufacturedCase, MultiblockMesh};

fn py_err(e: evflow::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn convention(name: &str) -> PyResult<LevelConvention> {
    match name {
        "coarse-domain" => Ok(LevelConvention::CoarseDomain),
        "fine-block" => Ok(LevelConvention::FineBlock),
        other => Err(PyValueError::new_err(format!("unknown level convention {other:?}"))),
    }
}

/// Multiblock rectangular mesh.
#[pyclass(name = "Mesh", frozen)]
struct PyMesh {
    inner: MultiblockMesh,
}

#[pymethods]
impl PyMesh {
    /// 2x2 checkerboard with `n` cells per direction in the fine blocks.
    #[staticmethod]
    #[pyo3(signature = (n, ratio = 4))]
    fn checkerboard(n: usize, ratio: usize) -> PyResult<Self> {
        Ok(Self { inner: checkerboard(n, ratio).map_err(py_err)? })
    }

    /// Checkerboard for a study level under the given convention.
    #[staticmethod]
    #[pyo3(signature = (n, ratio = 4, convention = "coarse-domain"))]
    fn level(n: usize, ratio: usize, convention: &str) -> PyResult<Self> {
        Ok(Self { inner: self::convention(convention)?.mesh(n, ratio).map_err(py_err)? })
    }

    /// Blocks as `(x0, x1, y0, y1, nx, ny)` tuples.
    #[staticmethod]
    fn from_blocks(blocks: Vec<(f64, f64, f64, f64, usize, usize)>) -> PyResult<Self> {
        let specs: Vec<BlockSpec> =
            blocks.into_iter().map(|(x0, x1, y0, y1, nx, ny)| BlockSpec { x0, x1, y0, y1, nx, ny }).collect();
        Ok(Self { inner: build_multiblock(&specs).map_err(py_err)? })
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells()
    }

    #[getter]
    fn n_subdomains(&self) -> usize {
        self.inner.subdomains.len()
    }

    #[getter]
    fn n_interfaces(&self) -> usize {
        self.inner.adjacency.len()
    }

    /// `(lo, hi, midpoint, length)` of every interface sub-edge.
    fn sub_edges(&self) -> Vec<(f64, f64, [f64; 2], f64)> {
        compute_interface_trace(&self.inner).sub_edges.iter().map(|e| (e.lo, e.hi, e.midpoint, e.length)).collect()
    }

    fn cell_centers(&self) -> Vec<[f64; 2]> {
        self.inner.cells().map(|c| self.inner.cell_center(c)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(subdomains={}, cells={})", self.inner.subdomains.len(), self.inner.n_cells())
    }
}

/// Builtin manufactured case.
#[pyclass(name = "Case", frozen)]
struct PyCase {
    inner: ManufacturedCase,
}

#[pymethods]
impl PyCase {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self { inner: ManufacturedCase::builtin(name).map_err(py_err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn pressure(&self, x: f64, y: f64) -> f64 {
        self.inner.p([x, y])
    }

    fn velocity(&self, x: f64, y: f64) -> [f64; 2] {
        self.inner.u([x, y])
    }

    fn permeability(&self, x: f64, y: f64) -> [f64; 2] {
        self.inner.perm.at([x, y])
    }
}

/// Solve with post-processing and interface errors.
#[pyclass(name = "Run", frozen)]
struct PyRun {
    inner: LevelRun,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn pressure(&self) -> Vec<f64> {
        self.inner.solution.p.clone()
    }

    #[getter]
    fn velocity(&self) -> Vec<f64> {
        self.inner.solution.u.clone()
    }

    /// Left-to-right flux of the discrete velocity on each sub-edge.
    #[getter]
    fn raw_flux(&self) -> Vec<f64> {
        self.inner.raw_flux.clone()
    }

    #[getter]
    fn recovered_flux(&self) -> Vec<f64> {
        self.inner.fields.recovered.values.clone()
    }

    #[getter]
    fn e_u(&self) -> f64 {
        self.inner.e_u.value
    }

    #[getter]
    fn e_rec(&self) -> f64 {
        self.inner.e_rec.value
    }

    #[getter]
    fn mass_residual(&self) -> f64 {
        self.inner.mass_residual
    }

    #[getter]
    fn constraint_residual(&self) -> f64 {
        self.inner.constraint_residual
    }

    /// Recovered continuous pressure at a point.
    fn s_h(&self, x: f64, y: f64) -> PyResult<f64> {
        let m = &self.inner.mesh;
        let s = m
            .subdomains
            .iter()
            .position(|g| g.contains([x, y], m.tol()))
            .ok_or_else(|| PyValueError::new_err(format!("({x}, {y}) is outside the mesh")))?;
        Ok(self.inner.fields.nodal[s].eval([x, y]))
    }
}

#[pyfunction]
#[pyo3(signature = (case, mesh, weighted = true, tol = 1e-12))]
fn solve(py: Python<'_>, case: &PyCase, mesh: &PyMesh, weighted: bool, tol: f64) -> PyResult<PyRun> {
    let (case, mesh) = (case.inner.clone(), mesh.inner.clone());
    let run = py
        .detach(|| verification::run_mesh(&case, mesh, 0, weighted, CgOptions { tol, ..Default::default() }))
        .map_err(py_err)?;
    Ok(PyRun { inner: run })
}

/// Block-Jacobi solve; returns `(pressure, velocity, sweeps)`.
#[pyfunction]
#[pyo3(signature = (case, mesh, tol = 1e-11, max_iter = 20000))]
fn block_jacobi(py: Python<'_>, case: &PyCase, mesh: &PyMesh, tol: f64, max_iter: usize) -> PyResult<(Vec<f64>, Vec<f64>, usize)> {
    let (case, mesh) = (&case.inner, &mesh.inner);
    let out = py
        .detach(|| {
            let iface = compute_interface_trace(mesh);
            let dofs = enumerate_dofs(mesh, &iface);
            block_jacobi_solve(case, mesh, &iface, &dofs, BlockJacobiOptions { tol, max_iter, ..Default::default() })
        })
        .map_err(py_err)?;
    Ok((out.solution.p, out.solution.u, out.iterations))
}

/// Rows `(n, e_u, order_u, e_rec, order_rec)`; orders are None on the first row.
#[pyfunction]
#[pyo3(signature = (test, levels, ratio = 4, weighted = true, convention = "coarse-domain"))]
#[allow(clippy::type_complexity)]
fn convergence_study(
    py: Python<'_>,
    test: u32,
    levels: Vec<usize>,
    ratio: usize,
    weighted: bool,
    convention: &str,
) -> PyResult<Vec<(usize, f64, Option<f64>, f64, Option<f64>)>> {
    let opts = StudyOptions { ratio, weighted, convention: self::convention(convention)?, solver: CgOptions::default() };
    let rows = py.detach(|| verification::convergence_study(test, &levels, opts)).map_err(py_err)?;
    Ok(rows.into_iter().map(|r| (r.n, r.e_u, r.order_u, r.e_rec, r.order_rec)).collect())
}

#[pyfunction]
fn convergence_order(e1: f64, e2: f64, n1: f64, n2: f64) -> PyResult<f64> {
    verification::convergence_order(e1, e2, n1, n2).map_err(py_err)
}

/// Relative interface error of per-sub-edge fluxes against the exact solution.
#[pyfunction]
#[pyo3(signature = (values, case, mesh, weighted = true))]
fn interface_velocity_error(values: Vec<f64>, case: &PyCase, mesh: &PyMesh, weighted: bool) -> PyResult<f64> {
    let iface = compute_interface_trace(&mesh.inner);
    if values.len() != iface.sub_edges.len() {
        return Err(PyValueError::new_err(format!("expected {} values, got {}", iface.sub_edges.len(), values.len())));
    }
    Ok(verification::interface_velocity_error(&values, &case.inner, &iface, weighted).value)
}

#[pymodule]
fn pyevflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyCase>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(block_jacobi, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_study, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_order, m)?)?;
    m.add_function(wrap_pyfunction!(interface_velocity_error, m)?)?;
    Ok(())
}
