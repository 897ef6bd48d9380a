//! Interface flux operators on the one-element layers next to each
//! interface, trace projections, ghost-layer pressures and a block-Jacobi
//! domain decomposition solve.
//!
//! For a sub-edge `e` between layer cells `l` (left) and `r` (right), the
//! eliminated velocity gives the flux in the left-to-right direction
//!
//! ```text
//! u_e = |e| / B_e (p_l - p_r) = A1[e, l] p_l + A2[e, r] p_r
//! ```

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::case::{ManufacturedCase, PermField};
use crate::darcy::{assemble_velocity_mass, MixedSolution, MixedSystem};
use crate::dofs::DofMap;
use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, CgOptions, CsrMatrix};
use crate::mesh::{InterfaceMesh, MultiblockMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Length-weighted averaging from sub-edges onto the edge trace of one side.
/// Row `E` holds `|e| / |E|` for every sub-edge `e` inside `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceProjection {
    pub matrix: DMatrix<f64>,
    pub segment_lengths: Vec<f64>,
}

impl TraceProjection {
    /// `segment[k]` is the trace segment containing sub-edge `k`.
    pub fn from_groups(segment: &[usize], lengths: &[f64], n_segments: usize) -> Self {
        assert_eq!(segment.len(), lengths.len());
        let mut seg_len = vec![0.0; n_segments];
        for (&s, &l) in segment.iter().zip(lengths) {
            seg_len[s] += l;
        }
        let mut matrix = DMatrix::zeros(n_segments, segment.len());
        for (k, (&s, &l)) in segment.iter().zip(lengths).enumerate() {
            matrix[(s, k)] = l / seg_len[s];
        }
        Self { matrix, segment_lengths: seg_len }
    }

    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(psi)).iter().copied().collect()
    }
}

/// Operators of one interface. Layer cells are global cell indices; each one
/// touches the interface along exactly one trace segment, so segments and
/// layer cells share an index.
#[derive(Debug, Clone)]
pub struct InterfaceOperators {
    pub interface: usize,
    pub left_subdomain: usize,
    pub right_subdomain: usize,
    pub left_cells: Vec<usize>,
    pub right_cells: Vec<usize>,
    /// `n_sub x n_left`.
    pub a1: DMatrix<f64>,
    /// `n_sub x n_right`.
    pub a2: DMatrix<f64>,
    pub left: TraceProjection,
    pub right: TraceProjection,
}

fn layer(cells: impl Iterator<Item = usize>) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = Vec::new();
    let mut index = Vec::new();
    for c in cells {
        let k = match order.iter().position(|&o| o == c) {
            Some(k) => k,
            None => {
                order.push(c);
                order.len() - 1
            }
        };
        index.push(k);
    }
    (order, index)
}

impl InterfaceOperators {
    /// `u^Gamma = A1 p_L + A2 p_R`, left-to-right sub-edge fluxes.
    pub fn interface_flux(&self, p: &[f64]) -> Vec<f64> {
        let pl = DVector::from_iterator(self.left_cells.len(), self.left_cells.iter().map(|&c| p[c]));
        let pr = DVector::from_iterator(self.right_cells.len(), self.right_cells.iter().map(|&c| p[c]));
        (&self.a1 * pl + &self.a2 * pr).iter().copied().collect()
    }

    pub fn projection(&self, side: Side) -> &TraceProjection {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Diagonal of `A^L_1 = P^L A1` (left) or `A^R_1 = -P^R A2` (right):
    /// the transmissibility between a layer cell and its ghost.
    pub fn layer_transmissibility(&self, side: Side) -> Vec<f64> {
        let m = match side {
            Side::Left => &self.left.matrix * &self.a1,
            Side::Right => -(&self.right.matrix * &self.a2),
        };
        (0..m.nrows()).map(|k| m[(k, k)]).collect()
    }
}

pub fn interface_operators(
    mesh: &MultiblockMesh,
    iface: &InterfaceMesh,
    dofs: &DofMap,
    perm: &PermField,
) -> Result<Vec<InterfaceOperators>> {
    let mass = assemble_velocity_mass(mesh, dofs, perm)?;
    let mut out = Vec::with_capacity(mesh.adjacency.len());
    for (k, adj) in mesh.adjacency.iter().enumerate() {
        let range = iface.ranges[k].clone();
        let edges = &iface.sub_edges[range.clone()];
        let (left_cells, li) = layer(edges.iter().map(|e| mesh.global_cell(e.left)));
        let (right_cells, ri) = layer(edges.iter().map(|e| mesh.global_cell(e.right)));
        let mut a1 = DMatrix::zeros(edges.len(), left_cells.len());
        let mut a2 = DMatrix::zeros(edges.len(), right_cells.len());
        for (m, s) in range.enumerate() {
            let d = dofs.sub_edge_dof[s];
            let t = edges[m].length / mass[d];
            a1[(m, li[m])] = t;
            a2[(m, ri[m])] = -t;
        }
        let lengths: Vec<f64> = edges.iter().map(|e| e.length).collect();
        out.push(InterfaceOperators {
            interface: k,
            left_subdomain: adj.left,
            right_subdomain: adj.right,
            left: TraceProjection::from_groups(&li, &lengths, left_cells.len()),
            right: TraceProjection::from_groups(&ri, &lengths, right_cells.len()),
            left_cells,
            right_cells,
            a1,
            a2,
        })
    }
    Ok(out)
}

/// Project sub-edge values onto the trace of one side.
pub fn project_trace(ops: &InterfaceOperators, side: Side, psi: &[f64]) -> Vec<f64> {
    ops.projection(side).apply(psi)
}

/// Ghost-layer pressures `p^e_L = (A^L_2)^-1 P^L A2 p_R` and
/// `p^e_R = (A^R_1)^-1 P^R A1 p_L`, with `A^L_2 = -A^L_1`, `A^R_1 = -A^R_2`.
pub fn ghost_pressures(ops: &InterfaceOperators, p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let pl = DVector::from_iterator(ops.left_cells.len(), ops.left_cells.iter().map(|&c| p[c]));
    let pr = DVector::from_iterator(ops.right_cells.len(), ops.right_cells.iter().map(|&c| p[c]));
    let gl = &ops.left.matrix * (&ops.a2 * pr);
    let gr = &ops.right.matrix * (&ops.a1 * pl);
    let tl = ops.layer_transmissibility(Side::Left);
    let tr = ops.layer_transmissibility(Side::Right);
    if tl.iter().chain(&tr).any(|t| t.is_nan() || *t == 0.0) {
        return Err(Error::Singular(format!("interface {} has a singular layer block", ops.interface)));
    }
    // A^L_2 = -diag(tl), A^R_1 = diag(tr)
    let left = gl.iter().zip(&tl).map(|(g, t)| -g / t).collect();
    let right = gr.iter().zip(&tr).map(|(g, t)| g / t).collect();
    Ok((left, right))
}

/// Projected interface flux seen by one side with ghost data:
/// `A^i_1 (p_layer - p^e)` on each trace segment, left-to-right.
pub fn ghost_flux(ops: &InterfaceOperators, side: Side, p: &[f64], ghost: &[f64]) -> Vec<f64> {
    let t = ops.layer_transmissibility(side);
    match side {
        Side::Left => ops.left_cells.iter().zip(ghost).zip(&t).map(|((&c, g), t)| t * (p[c] - g)).collect(),
        Side::Right => ops.right_cells.iter().zip(ghost).zip(&t).map(|((&c, g), t)| t * (g - p[c])).collect(),
    }
}

/// Cell-centered problem of one subdomain with the interface couplings cut.
#[derive(Debug, Clone)]
pub struct SubdomainProblem {
    pub subdomain: usize,
    /// Global indices of the subdomain cells, in local order.
    pub cells: Vec<usize>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

pub fn subdomain_problems(mesh: &MultiblockMesh, system: &MixedSystem) -> Vec<SubdomainProblem> {
    let s = system.schur_matrix();
    let r = system.schur_rhs();
    (0..mesh.subdomains.len())
        .map(|sd| {
            let start = mesh.cell_offset(sd);
            let cells: Vec<usize> = (start..start + mesh.subdomains[sd].n_cells()).collect();
            SubdomainProblem {
                subdomain: sd,
                matrix: s.principal_submatrix(&cells),
                rhs: cells.iter().map(|&c| r[c]).collect(),
                cells,
            }
        })
        .collect()
}

/// Solve one subdomain with ghost Dirichlet data on its interfaces.
/// `ghosts[k]` holds the `(left, right)` ghost pressures of interface `k`.
pub fn solve_subdomain(
    problem: &SubdomainProblem,
    ops: &[InterfaceOperators],
    ghosts: &[(Vec<f64>, Vec<f64>)],
    x0: Option<&[f64]>,
    opts: CgOptions,
) -> Result<Vec<f64>> {
    let mut rhs = problem.rhs.clone();
    let offset = problem.cells[0];
    for (op, (gl, gr)) in ops.iter().zip(ghosts) {
        for (side, cells, ghost) in [(Side::Left, &op.left_cells, gl), (Side::Right, &op.right_cells, gr)] {
            let sd = match side {
                Side::Left => op.left_subdomain,
                Side::Right => op.right_subdomain,
            };
            if sd != problem.subdomain {
                continue;
            }
            let t = op.layer_transmissibility(side);
            let len = &op.projection(side).segment_lengths;
            for (m, &c) in cells.iter().enumerate() {
                rhs[c - offset] += len[m] * t[m] * ghost[m];
            }
        }
    }
    Ok(conjugate_gradient(&problem.matrix, &rhs, x0, opts)?.x)
}

/// Initial pressure iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartGuess {
    Zero,
    /// Dirichlet data evaluated at the cell centers.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockJacobiOptions {
    /// Stop when the l2 change of the interface fluxes falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub inner: CgOptions,
    pub start: StartGuess,
}

impl Default for BlockJacobiOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 20_000, inner: CgOptions { tol: 1e-13, max_iter: 20_000 }, start: StartGuess::Dirichlet }
    }
}

#[derive(Debug, Clone)]
pub struct BlockJacobiOutcome {
    pub solution: MixedSolution,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Block-Jacobi iteration over all subdomains: every sweep computes ghost
/// pressures from the previous iterate and solves the subdomains
/// independently.
pub fn block_jacobi_solve(
    case: &ManufacturedCase,
    mesh: &MultiblockMesh,
    iface: &InterfaceMesh,
    dofs: &DofMap,
    opts: BlockJacobiOptions,
) -> Result<BlockJacobiOutcome> {
    let system = MixedSystem::assemble(case, mesh, dofs)?;
    let ops = interface_operators(mesh, iface, dofs, &case.perm)?;
    let problems = subdomain_problems(mesh, &system);
    let mut p: Vec<f64> = match opts.start {
        StartGuess::Zero => vec![0.0; mesh.n_cells()],
        StartGuess::Dirichlet => mesh.cells().map(|c| case.g(mesh.cell_center(c))).collect(),
    };
    let flux = |p: &[f64]| -> Vec<f64> { ops.iter().flat_map(|op| op.interface_flux(p)).collect() };
    let mut prev = flux(&p);
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let ghosts = ops.iter().map(|op| ghost_pressures(op, &p)).collect::<Result<Vec<_>>>()?;
        let local = problems
            .par_iter()
            .map(|pb| {
                let x0: Vec<f64> = pb.cells.iter().map(|&c| p[c]).collect();
                solve_subdomain(pb, &ops, &ghosts, Some(&x0), opts.inner)
            })
            .collect::<Result<Vec<_>>>()?;
        for (pb, x) in problems.iter().zip(local) {
            for (&c, v) in pb.cells.iter().zip(x) {
                p[c] = v;
            }
        }
        let next = flux(&p);
        let change = next.iter().zip(&prev).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        history.push(change);
        prev = next;
        if change < opts.tol {
            let u = system.recover_velocity(&p);
            return Ok(BlockJacobiOutcome { solution: MixedSolution { u, p }, iterations: it, history });
        }
        if !change.is_finite() {
            break;
        }
    }
    Err(Error::BlockJacobiDiverged { iterations: history.len(), last: history.last().copied().unwrap_or(f64::NAN), history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dofs::enumerate_dofs;
    use crate::mesh::{build_multiblock, checkerboard, compute_interface_trace, BlockSpec};

    fn pair(nl: usize, nr: usize) -> MultiblockMesh {
        build_multiblock(&[
            BlockSpec { x0: 0.0, x1: 0.5, y0: 0.0, y1: 1.0, nx: 1, ny: nl },
            BlockSpec { x0: 0.5, x1: 1.0, y0: 0.0, y1: 1.0, nx: 1, ny: nr },
        ])
        .unwrap()
    }

    struct Setup {
        mesh: MultiblockMesh,
        iface: InterfaceMesh,
        dofs: DofMap,
    }

    fn setup(mesh: MultiblockMesh) -> Setup {
        let iface = compute_interface_trace(&mesh);
        let dofs = enumerate_dofs(&mesh, &iface);
        Setup { mesh, iface, dofs }
    }

    /// Left-to-right flux of every sub-edge straight from the velocity vector.
    fn monolithic_interface_flux(s: &Setup, u: &[f64], k: usize) -> Vec<f64> {
        s.iface.ranges[k]
            .clone()
            .map(|e| {
                let d = s.dofs.sub_edge_dof[e];
                let left = s.mesh.global_cell(s.iface.sub_edges[e].left);
                u[d] * s.dofs.velocity[d].orientation_for(left)
            })
            .collect()
    }

    #[test]
    fn matching_unit_transmissibility() {
        // two cells of size 1/2; B_e = (h/2 + h/2) |e| and u = (p_L - p_R) / h
        let mesh = build_multiblock(&[
            BlockSpec { x0: 0.0, x1: 0.5, y0: 0.0, y1: 0.5, nx: 1, ny: 1 },
            BlockSpec { x0: 0.5, x1: 1.0, y0: 0.0, y1: 0.5, nx: 1, ny: 1 },
        ])
        .unwrap();
        let s = setup(mesh);
        let ops = interface_operators(&s.mesh, &s.iface, &s.dofs, &PermField::identity()).unwrap();
        let t = ops[0].a1[(0, 0)];
        assert!((t * 0.5 - 1.0).abs() < 1e-14);
        assert!((ops[0].a2[(0, 0)] + t).abs() < 1e-14);
        let ops2 = interface_operators(&s.mesh, &s.iface, &s.dofs, &PermField::scalar(2.0)).unwrap();
        assert!((ops2[0].a1[(0, 0)] - 2.0 * t).abs() < 1e-14);
        assert!((ops2[0].a2[(0, 0)] + 2.0 * t).abs() < 1e-14);
    }

    #[test]
    fn operators_reproduce_monolithic_fluxes() {
        let s = setup(pair(2, 3));
        let case = ManufacturedCase::test2();
        let system = MixedSystem::assemble(&case, &s.mesh, &s.dofs).unwrap();
        let ops = interface_operators(&s.mesh, &s.iface, &s.dofs, &case.perm).unwrap();
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..10 {
            let p: Vec<f64> = (0..s.mesh.n_cells()).map(|_| next()).collect();
            let u = system.recover_velocity(&p);
            let expect = monolithic_interface_flux(&s, &u, 0);
            for (a, b) in ops[0].interface_flux(&p).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn projection_examples() {
        let p = TraceProjection::from_groups(&[0, 0], &[1.0 / 3.0, 1.0 / 6.0], 1);
        assert!((p.apply(&[1.0, 4.0])[0] - 2.0).abs() < 1e-15);
        let s = setup(pair(2, 3));
        let ops = interface_operators(&s.mesh, &s.iface, &s.dofs, &PermField::identity()).unwrap();
        let n = s.iface.sub_edges.len();
        for side in [Side::Left, Side::Right] {
            for v in project_trace(&ops[0], side, &vec![3.5; n]) {
                assert!((v - 3.5).abs() < 1e-14);
            }
        }
        // idempotent: constant per segment stays put
        let seg: Vec<f64> = (0..ops[0].left_cells.len()).map(|k| k as f64).collect();
        let psi = ops[0].left.matrix.transpose().map(|v| if v > 0.0 { 1.0 } else { 0.0 }) * DVector::from_vec(seg.clone());
        for (a, b) in project_trace(&ops[0], Side::Left, psi.as_slice()).iter().zip(&seg) {
            assert!((a - b).abs() < 1e-14);
        }
        // matching grids: identity
        let s = setup(pair(3, 3));
        let ops = interface_operators(&s.mesh, &s.iface, &s.dofs, &PermField::identity()).unwrap();
        assert_eq!(ops[0].left.matrix, DMatrix::identity(3, 3));
        assert_eq!(ops[0].right.matrix, DMatrix::identity(3, 3));
    }

    #[test]
    fn projected_flux_identity() {
        let s = setup(pair(2, 3));
        let case = ManufacturedCase::test2();
        let sol = MixedSystem::assemble(&case, &s.mesh, &s.dofs).unwrap().solve(CgOptions::default()).unwrap();
        let ops = interface_operators(&s.mesh, &s.iface, &s.dofs, &case.perm).unwrap();
        let ug = monolithic_interface_flux(&s, &sol.u, 0);
        let (gl, gr) = ghost_pressures(&ops[0], &sol.p).unwrap();
        for (side, ghost) in [(Side::Left, &gl), (Side::Right, &gr)] {
            let projected = project_trace(&ops[0], side, &ug);
            for (a, b) in ghost_flux(&ops[0], side, &sol.p, ghost).iter().zip(&projected) {
                assert!((a - b).abs() < 1e-13, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn ghost_examples() {
        let s = setup(pair(3, 3));
        let ops = interface_operators(&s.mesh, &s.iface, &s.dofs, &PermField::identity()).unwrap();
        let p: Vec<f64> = s.mesh.cells().map(|c| s.mesh.cell_center(c)[0]).collect();
        let (gl, gr) = ghost_pressures(&ops[0], &p).unwrap();
        for (g, &c) in gl.iter().zip(&ops[0].right_cells) {
            assert!((g - p[c]).abs() < 1e-15);
        }
        for (g, &c) in gr.iter().zip(&ops[0].left_cells) {
            assert!((g - p[c]).abs() < 1e-15);
        }
        let s = setup(pair(2, 3));
        let ops = interface_operators(&s.mesh, &s.iface, &s.dofs, &PermField::identity()).unwrap();
        let (gl, gr) = ghost_pressures(&ops[0], &vec![1.25; s.mesh.n_cells()]).unwrap();
        assert!(gl.iter().chain(&gr).all(|g| (g - 1.25).abs() < 1e-14));
    }

    #[test]
    fn ghost_resolve_reproduces_projected_flux() {
        let s = setup(pair(2, 3));
        let case = ManufacturedCase::test1();
        let system = MixedSystem::assemble(&case, &s.mesh, &s.dofs).unwrap();
        let sol = system.solve(CgOptions::default()).unwrap();
        let ops = interface_operators(&s.mesh, &s.iface, &s.dofs, &case.perm).unwrap();
        let problems = subdomain_problems(&s.mesh, &system);
        let ghosts = vec![ghost_pressures(&ops[0], &sol.p).unwrap()];
        let ug = monolithic_interface_flux(&s, &sol.u, 0);
        for (side, pb) in [(Side::Left, &problems[0]), (Side::Right, &problems[1])] {
            let x = solve_subdomain(pb, &ops, &ghosts, None, CgOptions::default()).unwrap();
            let mut p = sol.p.clone();
            for (&c, v) in pb.cells.iter().zip(&x) {
                p[c] = *v;
            }
            let ghost = match side {
                Side::Left => &ghosts[0].0,
                Side::Right => &ghosts[0].1,
            };
            let projected = project_trace(&ops[0], side, &ug);
            for (a, b) in ghost_flux(&ops[0], side, &p, ghost).iter().zip(&projected) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn block_jacobi_constant_and_linear() {
        let s = setup(pair(3, 3));
        let out = block_jacobi_solve(&ManufacturedCase::constant(2.0), &s.mesh, &s.iface, &s.dofs, BlockJacobiOptions::default())
            .unwrap();
        assert!(out.iterations <= 2, "{} iterations", out.iterations);
        assert!(out.solution.p.iter().all(|p| (p - 2.0).abs() < 1e-12));

        let s = setup(pair(4, 4));
        let case = ManufacturedCase::linear(1.0, 0.0, 0.0, 1.0);
        let opts = BlockJacobiOptions { tol: 1e-9, ..Default::default() };
        let out = block_jacobi_solve(&case, &s.mesh, &s.iface, &s.dofs, opts).unwrap();
        let mono = MixedSystem::assemble(&case, &s.mesh, &s.dofs).unwrap().solve(CgOptions::default()).unwrap();
        assert!(max_diff(&out.solution.p, &mono.p) < 1e-8);
    }

    #[test]
    fn block_jacobi_matches_monolithic_on_checkerboard() {
        let s = setup(checkerboard(8, 4).unwrap());
        let case = ManufacturedCase::test2();
        let opts = BlockJacobiOptions { start: StartGuess::Zero, ..Default::default() };
        let out = block_jacobi_solve(&case, &s.mesh, &s.iface, &s.dofs, opts).unwrap();
        let mono = MixedSystem::assemble(&case, &s.mesh, &s.dofs).unwrap().solve(CgOptions::default()).unwrap();
        assert!(max_diff(&out.solution.p, &mono.p) < 1e-8);
        assert!(max_diff(&out.solution.u, &mono.u) < 1e-8);
        assert_eq!(out.history.len(), out.iterations);
    }

    #[test]
    fn block_jacobi_reports_history_on_failure() {
        let s = setup(checkerboard(8, 4).unwrap());
        let opts = BlockJacobiOptions { max_iter: 3, ..Default::default() };
        match block_jacobi_solve(&ManufacturedCase::test1(), &s.mesh, &s.iface, &s.dofs, opts) {
            Err(Error::BlockJacobiDiverged { iterations: 3, history, .. }) => assert_eq!(history.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
