//! Assembly and solution of the enhanced velocity mixed system
//!
//! ```text
//! B u - D^T p = b_u
//!     D u     = b_p
//! ```
//!
//! `B` is the velocity mass matrix under the trapezoidal-midpoint rule and is
//! diagonal, so the velocity is eliminated and the cell-centered Schur system
//! `D B^-1 D^T p = b_p - D B^-1 b_u` is solved instead.

use crate::case::{ManufacturedCase, PermField};
use crate::dofs::DofMap;
use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, CgOptions, CsrMatrix};
use crate::mesh::MultiblockMesh;

/// Coefficients of `u_h` (normal fluxes, per velocity DOF) and `p_h` (per cell).
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

/// Diagonal of the velocity mass matrix.
///
/// For a DOF on a face of cell `T` with normal along `axis`, the trapezoidal
/// rule in the normal direction puts weight `h_n / 2` on the face, the
/// midpoint rule covers the face (or sub-edge) length. `K^-1` is sampled at
/// the face (or sub-edge) midpoint.
pub fn assemble_velocity_mass(mesh: &MultiblockMesh, dofs: &DofMap, perm: &PermField) -> Result<Vec<f64>> {
    dofs.velocity
        .iter()
        .map(|dof| {
            let k = perm.checked(dof.midpoint)?[dof.axis.index()];
            let half_widths: f64 = dof
                .cells()
                .map(|c| 0.5 * mesh.subdomains[mesh.cell_ref(c).subdomain].h(dof.axis))
                .sum();
            Ok(half_widths * dof.length / k)
        })
        .collect()
}

/// `D[T, e] = (div v_e, 1)_T`, i.e. `+|e|` when `e` points out of `T`.
pub fn assemble_divergence(dofs: &DofMap) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(2 * dofs.n_velocity());
    for (e, dof) in dofs.velocity.iter().enumerate() {
        triplets.push((dof.from, e, dof.length));
        if let Some(to) = dof.to {
            triplets.push((to, e, -dof.length));
        }
    }
    CsrMatrix::from_triplets(dofs.n_cells, dofs.n_velocity(), &triplets)
}

/// Right-hand sides by the midpoint rule: `b_u = -g(m_e) |e|` on boundary
/// DOFs (oriented outward), `b_p = f(c_T) |T|`.
pub fn assemble_rhs(case: &ManufacturedCase, mesh: &MultiblockMesh, dofs: &DofMap) -> (Vec<f64>, Vec<f64>) {
    let b_u = dofs
        .velocity
        .iter()
        .map(|dof| if dof.to.is_none() { -case.g(dof.midpoint) * dof.length } else { 0.0 })
        .collect();
    let b_p = mesh
        .cells()
        .map(|c| case.f(mesh.cell_center(c)) * mesh.subdomains[c.subdomain].cell_area())
        .collect();
    (b_u, b_p)
}

/// Assembled saddle-point system.
#[derive(Debug, Clone)]
pub struct MixedSystem {
    pub mass: Vec<f64>,
    pub div: CsrMatrix,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
}

impl MixedSystem {
    pub fn assemble(case: &ManufacturedCase, mesh: &MultiblockMesh, dofs: &DofMap) -> Result<Self> {
        let mass = assemble_velocity_mass(mesh, dofs, &case.perm)?;
        let div = assemble_divergence(dofs);
        let (rhs_u, rhs_p) = assemble_rhs(case, mesh, dofs);
        Ok(Self { mass, div, rhs_u, rhs_p })
    }

    /// `D B^-1 D^T`.
    pub fn schur_matrix(&self) -> CsrMatrix {
        schur_matrix(&self.mass, &self.div)
    }

    /// `b_p - D B^-1 b_u`.
    pub fn schur_rhs(&self) -> Vec<f64> {
        let scaled: Vec<f64> = self.rhs_u.iter().zip(&self.mass).map(|(b, m)| b / m).collect();
        let dbu = self.div.mul_vec(&scaled);
        self.rhs_p.iter().zip(dbu).map(|(b, d)| b - d).collect()
    }

    /// `u = B^-1 (D^T p + b_u)`.
    pub fn recover_velocity(&self, p: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.mass.len()];
        for (t, pt) in p.iter().enumerate() {
            for (e, d) in self.div.row(t) {
                u[e] += d * pt;
            }
        }
        for ((ue, b), m) in u.iter_mut().zip(&self.rhs_u).zip(&self.mass) {
            *ue = (*ue + b) / m;
        }
        u
    }

    pub fn solve(&self, opts: CgOptions) -> Result<MixedSolution> {
        solve_monolithic(&self.mass, &self.div, &self.rhs_u, &self.rhs_p, opts)
    }
}

pub fn schur_matrix(mass: &[f64], div: &CsrMatrix) -> CsrMatrix {
    let dt = div.transpose();
    let mut triplets = Vec::new();
    for (e, m) in mass.iter().enumerate() {
        let col: Vec<(usize, f64)> = dt.row(e).collect();
        for &(r, a) in &col {
            for &(s, b) in &col {
                triplets.push((r, s, a * b / m));
            }
        }
    }
    CsrMatrix::from_triplets(div.nrows, div.nrows, &triplets)
}

/// Eliminate the velocity and solve the SPD cell-centered system.
pub fn solve_monolithic(
    mass: &[f64],
    div: &CsrMatrix,
    rhs_u: &[f64],
    rhs_p: &[f64],
    opts: CgOptions,
) -> Result<MixedSolution> {
    if let Some(bad) = mass.iter().find(|m| m.is_nan() || **m <= 0.0) {
        return Err(Error::Singular(format!("velocity mass entry {bad} is not positive")));
    }
    let system = MixedSystem { mass: mass.to_vec(), div: div.clone(), rhs_u: rhs_u.to_vec(), rhs_p: rhs_p.to_vec() };
    let s = system.schur_matrix();
    let rhs = system.schur_rhs();
    let out = conjugate_gradient(&s, &rhs, None, opts)?;
    let u = system.recover_velocity(&out.x);
    Ok(MixedSolution { u, p: out.x })
}

/// Per-cell mass residual `| sum_e +-u_e |e| - f(c_T) |T| |`.
pub fn cell_mass_residuals(
    sol: &MixedSolution,
    case: &ManufacturedCase,
    mesh: &MultiblockMesh,
    dofs: &DofMap,
) -> Vec<f64> {
    let mut net = vec![0.0; dofs.n_cells];
    for (e, dof) in dofs.velocity.iter().enumerate() {
        let flux = sol.u[e] * dof.length;
        net[dof.from] += flux;
        if let Some(to) = dof.to {
            net[to] -= flux;
        }
    }
    mesh.cells()
        .zip(net)
        .map(|(c, n)| (n - case.f(mesh.cell_center(c)) * mesh.subdomains[c.subdomain].cell_area()).abs())
        .collect()
}

pub fn residual_mass_conservation(
    sol: &MixedSolution,
    case: &ManufacturedCase,
    mesh: &MultiblockMesh,
    dofs: &DofMap,
) -> f64 {
    cell_mass_residuals(sol, case, mesh, dofs).into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dofs::{enumerate_dofs, DofKind};
    use crate::mesh::{build_multiblock, compute_interface_trace, BlockSpec, Face};

    fn setup(blocks: &[BlockSpec]) -> (MultiblockMesh, DofMap) {
        let mesh = build_multiblock(blocks).unwrap();
        let iface = compute_interface_trace(&mesh);
        let dofs = enumerate_dofs(&mesh, &iface);
        (mesh, dofs)
    }

    fn unit(nx: usize, ny: usize) -> BlockSpec {
        BlockSpec { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0, nx, ny }
    }

    #[test]
    fn single_cell_mass_is_half_area() {
        let (mesh, dofs) = setup(&[BlockSpec { x0: 0.0, x1: 0.5, y0: 0.0, y1: 0.5, nx: 1, ny: 1 }]);
        let b = assemble_velocity_mass(&mesh, &dofs, &PermField::identity()).unwrap();
        assert_eq!(b.len(), 4);
        for v in b {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn interior_edge_mass_and_scaling() {
        let (mesh, dofs) = setup(&[unit(2, 1)]);
        let b1 = assemble_velocity_mass(&mesh, &dofs, &PermField::identity()).unwrap();
        let b2 = assemble_velocity_mass(&mesh, &dofs, &PermField::scalar(2.0)).unwrap();
        let interior = dofs.velocity.iter().position(|d| d.kind == DofKind::Interior).unwrap();
        // hx = 1/2, hy = 1: two halves of hx/2 * hy
        assert!((b1[interior] - 0.5).abs() < 1e-15);
        for (a, b) in b1.iter().zip(&b2) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn nonpositive_permeability_is_rejected() {
        let (mesh, dofs) = setup(&[unit(2, 2)]);
        let bad = PermField::new(0.0, 1.0, |x, _| [1.0, x - 0.6]);
        assert!(matches!(
            assemble_velocity_mass(&mesh, &dofs, &bad),
            Err(Error::NonPositivePermeability { .. })
        ));
    }

    #[test]
    fn divergence_theorem_on_one_cell() {
        let h = 0.25;
        let (_, dofs) = setup(&[BlockSpec { x0: 0.0, x1: h, y0: 0.0, y1: h, nx: 1, ny: 1 }]);
        let d = assemble_divergence(&dofs);
        let ones = vec![1.0; 4];
        assert!((d.mul_vec(&ones)[0] - 4.0 * h).abs() < 1e-15);
    }

    #[test]
    fn sub_edge_entries_in_divergence_rows() {
        let (mesh, dofs) = setup(&[
            BlockSpec { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0, nx: 1, ny: 2 },
            BlockSpec { x0: 1.0, x1: 2.0, y0: 0.0, y1: 1.0, nx: 1, ny: 3 },
        ]);
        let d = assemble_divergence(&dofs);
        let cell = mesh.global_cell(crate::mesh::CellRef { subdomain: 0, i: 0, j: 0 });
        let east = dofs.face_dofs(cell, Face::East);
        let lens: Vec<f64> = east.iter().map(|&e| d.get(cell, e)).collect();
        assert!((lens[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((lens[1] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_flow_is_divergence_free() {
        let (_, dofs) = setup(&[
            BlockSpec { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0, nx: 2, ny: 2 },
            BlockSpec { x0: 1.0, x1: 2.0, y0: 0.0, y1: 1.0, nx: 3, ny: 5 },
        ]);
        let d = assemble_divergence(&dofs);
        let u: Vec<f64> = dofs.velocity.iter().map(|dof| dof.normal()[0]).collect();
        for r in d.mul_vec(&u) {
            assert!(r.abs() < 1e-14);
        }
    }

    #[test]
    fn rhs_trivial_cases() {
        let (mesh, dofs) = setup(&[unit(3, 2)]);
        let zero_g = ManufacturedCase::new("f1", PermField::identity(), |_, _| 0.0, |_, _| [0.0, 0.0], |_, _| 1.0);
        let (bu, bp) = assemble_rhs(&zero_g, &mesh, &dofs);
        assert!(bu.iter().all(|v| *v == 0.0));
        for v in bp {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn schur_matches_five_point_stencil() {
        // K = I, h = 1/3: interior coupling h^2 / B = h^2 / h^2 = 1, Dirichlet face h^2 / (h^2/2) = 2
        let (mesh, dofs) = setup(&[unit(3, 3)]);
        let sys = MixedSystem::assemble(&ManufacturedCase::constant(0.0), &mesh, &dofs).unwrap();
        let s = sys.schur_matrix().to_dense();
        for j in 0..3usize {
            for i in 0..3usize {
                let r = j * 3 + i;
                let boundary_faces = [i == 0, i == 2, j == 0, j == 2].iter().filter(|b| **b).count();
                let neighbours = 4 - boundary_faces;
                assert!((s[(r, r)] - (neighbours as f64 + 2.0 * boundary_faces as f64)).abs() < 1e-13);
                if i > 0 {
                    assert!((s[(r, r - 1)] + 1.0).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn linear_pressure_is_exact() {
        let (mesh, dofs) = setup(&[unit(4, 3)]);
        let case = ManufacturedCase::linear(1.0, 0.0, 0.0, 1.0);
        let sys = MixedSystem::assemble(&case, &mesh, &dofs).unwrap();
        let sol = sys.solve(CgOptions::default()).unwrap();
        for (c, p) in mesh.cells().zip(&sol.p) {
            assert!((p - mesh.cell_center(c)[0]).abs() < 1e-10);
        }
        for (dof, u) in dofs.velocity.iter().zip(&sol.u) {
            let expect = -dof.normal()[0];
            assert!((u - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_pressure_gives_no_flow() {
        let (mesh, dofs) = setup(&[
            BlockSpec { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0, nx: 2, ny: 4 },
            BlockSpec { x0: 1.0, x1: 2.0, y0: 0.0, y1: 1.0, nx: 1, ny: 1 },
        ]);
        let case = ManufacturedCase::constant(2.5);
        let sol = MixedSystem::assemble(&case, &mesh, &dofs).unwrap().solve(CgOptions::default()).unwrap();
        assert!(sol.p.iter().all(|p| (p - 2.5).abs() < 1e-10));
        assert!(sol.u.iter().all(|u| u.abs() < 1e-10));
    }

    #[test]
    fn perturbed_flux_shows_in_residual() {
        let (mesh, dofs) = setup(&[unit(4, 4)]);
        let case = ManufacturedCase::test1();
        let mut sol = MixedSystem::assemble(&case, &mesh, &dofs).unwrap().solve(CgOptions::default()).unwrap();
        assert!(residual_mass_conservation(&sol, &case, &mesh, &dofs) < 1e-10);
        let e = dofs.velocity.iter().position(|d| d.kind == DofKind::Interior).unwrap();
        sol.u[e] += 1e-3;
        let r = residual_mass_conservation(&sol, &case, &mesh, &dofs);
        assert!((r - 1e-3 * dofs.velocity[e].length).abs() < 1e-10);
    }

    #[test]
    fn solution_is_linear_in_data() {
        let (mesh, dofs) = setup(&[
            BlockSpec { x0: 0.0, x1: 0.5, y0: 0.0, y1: 1.0, nx: 4, ny: 8 },
            BlockSpec { x0: 0.5, x1: 1.0, y0: 0.0, y1: 1.0, nx: 2, ny: 3 },
        ]);
        let a = ManufacturedCase::test1();
        let b = ManufacturedCase::linear(0.3, -1.0, 2.0, 1.0);
        let sum = ManufacturedCase::new(
            "sum",
            PermField::identity(),
            {
                let (a, b) = (a.clone(), b.clone());
                move |x, y| a.p([x, y]) + b.p([x, y])
            },
            |_, _| [0.0, 0.0],
            {
                let (a, b) = (a.clone(), b.clone());
                move |x, y| a.f([x, y]) + b.f([x, y])
            },
        );
        let solve = |c: &ManufacturedCase| {
            MixedSystem::assemble(c, &mesh, &dofs).unwrap().solve(CgOptions { tol: 1e-14, max_iter: 10_000 }).unwrap()
        };
        let (sa, sb, ss) = (solve(&a), solve(&b), solve(&sum));
        for i in 0..ss.p.len() {
            assert!((ss.p[i] - sa.p[i] - sb.p[i]).abs() < 1e-10);
        }
        for i in 0..ss.u.len() {
            assert!((ss.u[i] - sa.u[i] - sb.u[i]).abs() < 1e-10);
        }
    }
}
