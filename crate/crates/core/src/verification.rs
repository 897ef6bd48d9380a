//! Manufactured-solution convergence studies on the interface.

use rayon::prelude::*;

use crate::case::ManufacturedCase;
use crate::darcy::{residual_mass_conservation, MixedSolution, MixedSystem};
use crate::dofs::{enumerate_dofs, DofMap};
use crate::error::{Error, Result};
use crate::linalg::CgOptions;
use crate::mesh::{checkerboard, compute_interface_trace, InterfaceMesh, MultiblockMesh};
use crate::postprocess::{constraint_residual, recover, PostFields};

pub fn manufactured_case(id: u32) -> Result<ManufacturedCase> {
    match id {
        1 => Ok(ManufacturedCase::test1()),
        2 => Ok(ManufacturedCase::test2()),
        other => Err(Error::UnknownCase(other.to_string())),
    }
}

/// Relative discrete L2 error of normal fluxes at sub-edge midpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceError {
    pub value: f64,
    /// False when the exact flux vanishes on the whole interface and the
    /// absolute error is reported instead.
    pub normalized: bool,
}

/// `sqrt(sum w_e (v_e - u.nu(m_e))^2) / sqrt(sum w_e (u.nu(m_e))^2)` with
/// `w_e = |e|` when `weighted`, else `w_e = 1`.
pub fn interface_velocity_error(
    values: &[f64],
    case: &ManufacturedCase,
    interface: &InterfaceMesh,
    weighted: bool,
) -> InterfaceError {
    assert_eq!(values.len(), interface.sub_edges.len());
    let (mut num, mut den) = (0.0, 0.0);
    for (v, e) in values.iter().zip(&interface.sub_edges) {
        let w = if weighted { e.length } else { 1.0 };
        let exact = case.u(e.midpoint)[e.normal.index()];
        num += w * (v - exact).powi(2);
        den += w * exact * exact;
    }
    if den > 0.0 {
        InterfaceError { value: (num / den).sqrt(), normalized: true }
    } else {
        InterfaceError { value: num.sqrt(), normalized: false }
    }
}

/// `log(e1 / e2) / log(n2 / n1)`.
pub fn convergence_order(e1: f64, e2: f64, n1: f64, n2: f64) -> Result<f64> {
    if !(e1 > 0.0 && e2 > 0.0 && n1 > 0.0 && n2 > n1) {
        return Err(Error::InvalidArgument(format!(
            "convergence order needs positive errors and n2 > n1 > 0, got e=({e1}, {e2}) n=({n1}, {n2})"
        )));
    }
    Ok((e1 / e2).ln() / (n2 / n1).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub e_u: f64,
    pub order_u: Option<f64>,
    pub e_rec: f64,
    pub order_rec: Option<f64>,
}

/// Meaning of a study level `n` on the 2x2 checkerboard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LevelConvention {
    /// `n` coarse cells per direction across the unit square: coarse blocks
    /// get `n / 2` cells per direction, fine blocks `n ratio / 2`.
    #[default]
    CoarseDomain,
    /// `n` cells per direction in each fine block, `n / ratio` in the coarse ones.
    FineBlock,
}

impl LevelConvention {
    /// Cells per direction of a fine block.
    pub fn fine_cells(self, n: usize, ratio: usize) -> Result<usize> {
        match self {
            LevelConvention::FineBlock if n > 0 && ratio > 0 && n.is_multiple_of(ratio) => Ok(n),
            LevelConvention::FineBlock => Err(Error::NotDivisible { n, ratio }),
            LevelConvention::CoarseDomain if n > 0 && ratio > 0 && n.is_multiple_of(2) => Ok(n / 2 * ratio),
            LevelConvention::CoarseDomain => Err(Error::NotDivisible { n, ratio: 2 }),
        }
    }

    pub fn mesh(self, n: usize, ratio: usize) -> Result<MultiblockMesh> {
        checkerboard(self.fine_cells(n, ratio)?, ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOptions {
    pub ratio: usize,
    pub weighted: bool,
    pub convention: LevelConvention,
    pub solver: CgOptions,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { ratio: 4, weighted: true, convention: LevelConvention::default(), solver: CgOptions::default() }
    }
}

/// Everything computed for one checkerboard level.
#[derive(Debug, Clone)]
pub struct LevelRun {
    pub n: usize,
    pub mesh: MultiblockMesh,
    pub interface: InterfaceMesh,
    pub dofs: DofMap,
    pub solution: MixedSolution,
    pub fields: PostFields,
    pub raw_flux: Vec<f64>,
    pub e_u: InterfaceError,
    pub e_rec: InterfaceError,
    pub mass_residual: f64,
    pub constraint_residual: f64,
}

pub fn run_mesh(
    case: &ManufacturedCase,
    mesh: MultiblockMesh,
    n: usize,
    weighted: bool,
    solver: CgOptions,
) -> Result<LevelRun> {
    let interface = compute_interface_trace(&mesh);
    let dofs = enumerate_dofs(&mesh, &interface);
    let solution = MixedSystem::assemble(case, &mesh, &dofs)?.solve(solver)?;
    evaluate_solution(case, mesh, interface, dofs, solution, n, weighted)
}

/// Post-process a solution obtained by any solver and measure its errors.
pub fn evaluate_solution(
    case: &ManufacturedCase,
    mesh: MultiblockMesh,
    interface: InterfaceMesh,
    dofs: DofMap,
    solution: MixedSolution,
    n: usize,
    weighted: bool,
) -> Result<LevelRun> {
    let fields = recover(&solution, case, &mesh, &interface, &dofs)?;
    let raw_flux: Vec<f64> = dofs
        .sub_edge_dof
        .iter()
        .zip(&interface.sub_edges)
        .map(|(&d, e)| solution.u[d] * dofs.velocity[d].orientation_for(mesh.global_cell(e.left)))
        .collect();
    let e_u = interface_velocity_error(&raw_flux, case, &interface, weighted);
    let e_rec = interface_velocity_error(&fields.recovered.values, case, &interface, weighted);
    let mass_residual = residual_mass_conservation(&solution, case, &mesh, &dofs);
    let constraint_residual = constraint_residual(&fields.post, &solution.p, &fields.lambda);
    Ok(LevelRun {
        n,
        mesh,
        interface,
        dofs,
        solution,
        fields,
        raw_flux,
        e_u,
        e_rec,
        mass_residual,
        constraint_residual,
    })
}

pub fn run_level(case: &ManufacturedCase, n: usize, opts: StudyOptions) -> Result<LevelRun> {
    run_mesh(case, opts.convention.mesh(n, opts.ratio)?, n, opts.weighted, opts.solver)
}

/// Attach orders from consecutive rows.
pub fn fill_orders(rows: &mut [ConvergenceRow]) -> Result<()> {
    for k in 1..rows.len() {
        let (a, b) = (rows[k - 1], rows[k]);
        rows[k].order_u = Some(convergence_order(a.e_u, b.e_u, a.n as f64, b.n as f64)?);
        rows[k].order_rec = Some(convergence_order(a.e_rec, b.e_rec, a.n as f64, b.n as f64)?);
    }
    Ok(())
}

/// Run every level (concurrently) and tabulate interface errors and orders.
pub fn convergence_study_runs(case: &ManufacturedCase, levels: &[usize], opts: StudyOptions) -> Result<Vec<LevelRun>> {
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("levels must be strictly increasing".into()));
    }
    for &n in levels {
        opts.convention.fine_cells(n, opts.ratio)?;
    }
    levels.par_iter().map(|&n| run_level(case, n, opts)).collect()
}

pub fn rows_from_runs(runs: &[LevelRun]) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = runs
        .iter()
        .map(|r| ConvergenceRow { n: r.n, e_u: r.e_u.value, order_u: None, e_rec: r.e_rec.value, order_rec: None })
        .collect();
    fill_orders(&mut rows)?;
    Ok(rows)
}

pub fn convergence_study(test_id: u32, levels: &[usize], opts: StudyOptions) -> Result<Vec<ConvergenceRow>> {
    let case = manufactured_case(test_id)?;
    rows_from_runs(&convergence_study_runs(&case, levels, opts)?)
}

/// Relative L2 error of the cell-center velocity (average of opposite face
/// fluxes) over cells whose center is farther than `distance` from every
/// interface.
pub fn interior_velocity_error(run: &LevelRun, case: &ManufacturedCase, distance: f64) -> f64 {
    use crate::mesh::Face;
    use crate::postprocess::projected_face_flux;
    let mesh = &run.mesh;
    let far = |p: [f64; 2]| {
        mesh.adjacency.iter().all(|a| {
            let (n, t) = match a.normal {
                crate::mesh::Axis::X => (p[0], p[1]),
                crate::mesh::Axis::Y => (p[1], p[0]),
            };
            let dt = if t < a.lo { a.lo - t } else if t > a.hi { t - a.hi } else { 0.0 };
            ((n - a.coord).powi(2) + dt * dt).sqrt() > distance
        })
    };
    let (mut num, mut den) = (0.0, 0.0);
    for c in mesh.cells() {
        let x = mesh.cell_center(c);
        if !far(x) {
            continue;
        }
        let gc = mesh.global_cell(c);
        let area = mesh.subdomains[c.subdomain].cell_area();
        let ux = 0.5
            * (projected_face_flux(&run.solution, &run.dofs, gc, Face::East)
                - projected_face_flux(&run.solution, &run.dofs, gc, Face::West));
        let uy = 0.5
            * (projected_face_flux(&run.solution, &run.dofs, gc, Face::North)
                - projected_face_flux(&run.solution, &run.dofs, gc, Face::South));
        let ue = case.u(x);
        num += area * ((ux - ue[0]).powi(2) + (uy - ue[1]).powi(2));
        den += area * (ue[0] * ue[0] + ue[1] * ue[1]);
    }
    (num / den).sqrt()
}
