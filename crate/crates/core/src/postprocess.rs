//! Interface velocity recovery from a post-processed pressure.
//!
//! 1. Edge multipliers `lambda_T(e)` from the local mixed equations.
//! 2. A per-element polynomial in `span{1, x, y, x^2, y^2}` matching the
//!    cell mean of `p_h` and the four edge averages `lambda_T(e)`.
//! 3. Nodal averaging of that field onto a continuous Q2 field per subdomain.
//! 4. Two-point fluxes across every interface sub-edge from the Q2 fields.

use crate::case::{ManufacturedCase, PermField};
use crate::darcy::MixedSolution;
use crate::dofs::DofMap;
use crate::error::{Error, Result};
use crate::mesh::{CellRef, Face, InterfaceMesh, MultiblockMesh, SubdomainGrid};

/// One value per face, indexed by `Face as usize`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMultipliers {
    pub values: Vec<[f64; 4]>,
}

/// Outward normal flux on a face, averaged over its sub-edges by length.
/// On interface faces of the coarse side this is the L2 projection of the
/// enhanced velocity onto the element's own edge.
pub fn projected_face_flux(sol: &MixedSolution, dofs: &DofMap, cell: usize, face: Face) -> f64 {
    let list = dofs.face_dofs(cell, face);
    let (mut flux, mut len) = (0.0, 0.0);
    for &e in list {
        let dof = &dofs.velocity[e];
        flux += dof.orientation_for(cell) * sol.u[e] * dof.length;
        len += dof.length;
    }
    flux / len
}

/// `lambda(e) |e| = (p_h, div v_e)_T - (K^-1 u_h, v_e)_T` for the local RT0
/// basis function with unit outward flux on `e`, the second term with the
/// trapezoidal-midpoint rule.
pub fn compute_lagrange_multipliers(
    sol: &MixedSolution,
    perm: &PermField,
    mesh: &MultiblockMesh,
    dofs: &DofMap,
) -> Result<EdgeMultipliers> {
    let mut values = Vec::with_capacity(mesh.n_cells());
    for c in mesh.cells() {
        let g = &mesh.subdomains[c.subdomain];
        let gc = mesh.global_cell(c);
        let center = g.cell_center(c.i, c.j);
        let mut lam = [0.0; 4];
        for face in Face::ALL {
            let axis = face.axis();
            let h = g.h(axis);
            let mut mid = center;
            mid[axis.index()] += face.outward_sign() * 0.5 * h;
            let k = perm.checked(mid)?[axis.index()];
            let un = projected_face_flux(sol, dofs, gc, face);
            lam[face as usize] = sol.p[gc] - 0.5 * h * un / k;
        }
        values.push(lam);
    }
    Ok(EdgeMultipliers { values })
}

/// Coefficients in `{1, xi, eta, xi^2, eta^2}` where `xi = (x - xc) / (hx/2)`
/// and `eta = (y - yc) / (hy/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPoly5 {
    pub coeffs: [f64; 5],
    pub center: [f64; 2],
    pub half: [f64; 2],
}

impl LocalPoly5 {
    pub fn local(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.center[0]) / self.half[0], (p[1] - self.center[1]) / self.half[1])
    }

    pub fn eval_local(&self, xi: f64, eta: f64) -> f64 {
        let [a, b, d, c, e] = self.coeffs;
        a + b * xi + d * eta + c * xi * xi + e * eta * eta
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let (xi, eta) = self.local(p);
        self.eval_local(xi, eta)
    }

    pub fn cell_mean(&self) -> f64 {
        let [a, _, _, c, e] = self.coeffs;
        a + (c + e) / 3.0
    }

    pub fn edge_average(&self, face: Face) -> f64 {
        let [a, b, d, c, e] = self.coeffs;
        match face {
            Face::West => a - b + c + e / 3.0,
            Face::East => a + b + c + e / 3.0,
            Face::South => a - d + c / 3.0 + e,
            Face::North => a + d + c / 3.0 + e,
        }
    }
}

/// Solve the 5x5 moment system of one element in closed form.
///
/// The edge conditions decouple into odd parts (`b`, `d`) and even parts;
/// the latter together with the mean give `c`, `e` and `a`.
pub fn local_postprocess(p: f64, lambda: [f64; 4], center: [f64; 2], half: [f64; 2]) -> LocalPoly5 {
    let [w, east, s, n] = lambda;
    let b = 0.5 * (east - w);
    let d = 0.5 * (n - s);
    let mx = 0.5 * (east + w);
    let my = 0.5 * (n + s);
    let c = 1.5 * (mx - p);
    let e = 1.5 * (my - p);
    let a = p - (c + e) / 3.0;
    LocalPoly5 { coeffs: [a, b, d, c, e], center, half }
}

/// Post-processed pressure, one polynomial per global cell.
#[derive(Debug, Clone)]
pub struct PostPressure {
    pub polys: Vec<LocalPoly5>,
}

pub fn postprocess_pressure(p_h: &[f64], lambda: &EdgeMultipliers, mesh: &MultiblockMesh) -> PostPressure {
    let polys = mesh
        .cells()
        .map(|c| {
            let g = &mesh.subdomains[c.subdomain];
            let gc = mesh.global_cell(c);
            local_postprocess(p_h[gc], lambda.values[gc], g.cell_center(c.i, c.j), [0.5 * g.hx(), 0.5 * g.hy()])
        })
        .collect();
    PostPressure { polys }
}

/// Largest violation of the mean and edge-average constraints over all cells.
pub fn constraint_residual(post: &PostPressure, p_h: &[f64], lambda: &EdgeMultipliers) -> f64 {
    post.polys
        .iter()
        .enumerate()
        .map(|(t, poly)| {
            let mut r = (poly.cell_mean() - p_h[t]).abs();
            for f in Face::ALL {
                r = r.max((poly.edge_average(f) - lambda.values[t][f as usize]).abs());
            }
            r
        })
        .fold(0.0, f64::max)
}

/// Continuous Q2 field on one subdomain: values at the `(2 nx + 1) x (2 ny + 1)`
/// Lagrange nodes, row-major with x fastest.
#[derive(Debug, Clone)]
pub struct NodalQ2Field {
    pub subdomain: usize,
    pub grid: SubdomainGrid,
    pub values: Vec<f64>,
}

impl NodalQ2Field {
    pub fn nodes_x(&self) -> usize {
        2 * self.grid.nx + 1
    }

    pub fn nodes_y(&self) -> usize {
        2 * self.grid.ny + 1
    }

    pub fn node(&self, a: usize, b: usize) -> f64 {
        self.values[b * self.nodes_x() + a]
    }

    pub fn node_coord(&self, a: usize, b: usize) -> [f64; 2] {
        node_coord(&self.grid, a, b)
    }

    /// Biquadratic interpolation inside the element containing `p`.
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let (i, j) = self.grid.locate(p);
        let c = self.grid.cell_center(i, j);
        let xi = (p[0] - c[0]) / (0.5 * self.grid.hx());
        let eta = (p[1] - c[1]) / (0.5 * self.grid.hy());
        let lx = quadratic_lagrange(xi);
        let ly = quadratic_lagrange(eta);
        let mut v = 0.0;
        for (bb, wy) in ly.iter().enumerate() {
            for (aa, wx) in lx.iter().enumerate() {
                v += wx * wy * self.node(2 * i + aa, 2 * j + bb);
            }
        }
        v
    }
}

/// Lagrange basis on nodes `-1, 0, 1`.
fn quadratic_lagrange(t: f64) -> [f64; 3] {
    [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)]
}

fn node_coord(g: &SubdomainGrid, a: usize, b: usize) -> [f64; 2] {
    [g.x0 + a as f64 * 0.5 * g.hx(), g.y0 + b as f64 * 0.5 * g.hy()]
}

/// Element indices along one axis touching node index `a` (0..=2n).
fn elements_at(a: usize, n: usize) -> impl Iterator<Item = usize> {
    let (lo, hi) = if a % 2 == 1 {
        (a / 2, a / 2 + 1)
    } else {
        ((a / 2).saturating_sub(1), (a / 2 + 1).min(n))
    };
    lo..hi
}

/// Average the element values at every Lagrange node of subdomain `s`.
/// Nodes on the outer boundary take the Dirichlet value; nodes on an
/// interface average only this subdomain's elements.
pub fn oswald_average(post: &PostPressure, mesh: &MultiblockMesh, s: usize, boundary: &dyn Fn([f64; 2]) -> f64) -> NodalQ2Field {
    let g = &mesh.subdomains[s];
    let (na, nb) = (2 * g.nx + 1, 2 * g.ny + 1);
    let mut values = Vec::with_capacity(na * nb);
    for b in 0..nb {
        for a in 0..na {
            let v = node_coord(g, a, b);
            if mesh.on_outer_boundary(v) {
                values.push(boundary(v));
                continue;
            }
            let (mut sum, mut count) = (0.0, 0usize);
            for j in elements_at(b, g.ny) {
                for i in elements_at(a, g.nx) {
                    let gc = mesh.global_cell(CellRef { subdomain: s, i, j });
                    sum += post.polys[gc].eval(v);
                    count += 1;
                }
            }
            values.push(sum / count as f64);
        }
    }
    NodalQ2Field { subdomain: s, grid: g.clone(), values }
}

/// Recovered normal velocity on each interface sub-edge, positive from the
/// left subdomain into the right one.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredFlux {
    pub values: Vec<f64>,
}

/// Two-point flux `-(s_R - s_L) / (d_L / K_L + d_R / K_R)` with the
/// evaluation points half a cell width off the sub-edge midpoint.
pub fn recover_interface_velocity(
    fields: &[NodalQ2Field],
    perm: &PermField,
    mesh: &MultiblockMesh,
    interface: &InterfaceMesh,
) -> Result<RecoveredFlux> {
    let mut values = Vec::with_capacity(interface.sub_edges.len());
    for e in &interface.sub_edges {
        let axis = e.normal;
        let ax = axis.index();
        let gl = &mesh.subdomains[e.left.subdomain];
        let gr = &mesh.subdomains[e.right.subdomain];
        let dl = 0.5 * gl.h(axis);
        let dr = 0.5 * gr.h(axis);
        let mut pl = e.midpoint;
        pl[ax] -= dl;
        let mut pr = e.midpoint;
        pr[ax] += dr;
        let tol = mesh.tol();
        if !gl.contains(pl, tol) || !gr.contains(pr, tol) {
            return Err(Error::InvalidArgument(format!("two-point stencil leaves its subdomain at {:?}", e.midpoint)));
        }
        let sl = fields[e.left.subdomain].eval(pl);
        let sr = fields[e.right.subdomain].eval(pr);
        let kl = perm.checked(pl)?[ax];
        let kr = perm.checked(pr)?[ax];
        values.push(two_point_flux(sl, sr, dl, dr, kl, kr));
    }
    Ok(RecoveredFlux { values })
}

pub fn two_point_flux(sl: f64, sr: f64, dl: f64, dr: f64, kl: f64, kr: f64) -> f64 {
    -(sr - sl) / (dl / kl + dr / kr)
}

/// Everything the recovery pipeline produces for one solve.
#[derive(Debug, Clone)]
pub struct PostFields {
    pub lambda: EdgeMultipliers,
    pub post: PostPressure,
    pub nodal: Vec<NodalQ2Field>,
    pub recovered: RecoveredFlux,
}

pub fn recover(
    sol: &MixedSolution,
    case: &ManufacturedCase,
    mesh: &MultiblockMesh,
    interface: &InterfaceMesh,
    dofs: &DofMap,
) -> Result<PostFields> {
    let lambda = compute_lagrange_multipliers(sol, &case.perm, mesh, dofs)?;
    let post = postprocess_pressure(&sol.p, &lambda, mesh);
    let g = |p: [f64; 2]| case.g(p);
    let nodal: Vec<NodalQ2Field> = (0..mesh.subdomains.len()).map(|s| oswald_average(&post, mesh, s, &g)).collect();
    let recovered = recover_interface_velocity(&nodal, &case.perm, mesh, interface)?;
    Ok(PostFields { lambda, post, nodal, recovered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darcy::MixedSystem;
    use crate::dofs::enumerate_dofs;
    use crate::linalg::CgOptions;
    use crate::mesh::{build_multiblock, checkerboard, compute_interface_trace, BlockSpec};

    fn block(nx: usize, ny: usize, x1: f64, y1: f64) -> MultiblockMesh {
        build_multiblock(&[BlockSpec { x0: 0.0, x1, y0: 0.0, y1, nx, ny }]).unwrap()
    }

    struct Run {
        mesh: MultiblockMesh,
        sol: MixedSolution,
        fields: PostFields,
        iface: InterfaceMesh,
    }

    fn run(case: &ManufacturedCase, mesh: MultiblockMesh) -> Run {
        let iface = compute_interface_trace(&mesh);
        let dofs = enumerate_dofs(&mesh, &iface);
        let sol = MixedSystem::assemble(case, &mesh, &dofs).unwrap().solve(CgOptions::default()).unwrap();
        let fields = recover(&sol, case, &mesh, &iface, &dofs).unwrap();
        Run { mesh, sol, fields, iface }
    }

    #[test]
    fn multipliers_for_linear_pressure_on_one_cell() {
        let h = 0.5;
        let r = run(&ManufacturedCase::linear(1.0, 0.0, 0.0, 1.0), block(1, 1, h, h));
        let lam = r.fields.lambda.values[0];
        assert!((lam[Face::East as usize] - h).abs() < 1e-14);
        assert!(lam[Face::West as usize].abs() < 1e-14);
        assert!((lam[Face::South as usize] - h / 2.0).abs() < 1e-14);
        assert!((lam[Face::North as usize] - h / 2.0).abs() < 1e-14);
    }

    #[test]
    fn constants_are_reproduced() {
        let poly = local_postprocess(2.5, [2.5; 4], [0.3, 0.4], [0.1, 0.2]);
        for (xi, eta) in [(-1.0, -1.0), (0.3, 0.7), (1.0, 0.0)] {
            assert!((poly.eval_local(xi, eta) - 2.5).abs() < 1e-15);
        }
    }

    /// 3-point Gauss-Legendre on [-1, 1].
    const GAUSS: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

    #[test]
    fn moments_match_quadrature() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..50 {
            let p = next();
            let lam = [next(), next(), next(), next()];
            let center = [next(), next()];
            let half = [0.1 + next().abs(), 0.1 + next().abs()];
            let poly = local_postprocess(p, lam, center, half);
            let at = |xi: f64, eta: f64| poly.eval([center[0] + xi * half[0], center[1] + eta * half[1]]);
            let mut mean = 0.0;
            for (x, wx) in GAUSS {
                for (y, wy) in GAUSS {
                    mean += 0.25 * wx * wy * at(x, y);
                }
            }
            assert!((mean - p).abs() < 1e-12);
            let edge = |face: Face, t: f64| match face {
                Face::West => (-1.0, t),
                Face::East => (1.0, t),
                Face::South => (t, -1.0),
                Face::North => (t, 1.0),
            };
            for face in Face::ALL {
                let avg: f64 = GAUSS.iter().map(|&(t, w)| {
                    let (x, y) = edge(face, t);
                    0.5 * w * at(x, y)
                }).sum();
                assert!((avg - lam[face as usize]).abs() < 1e-12, "{face:?}");
            }
        }
    }

    fn constant_post(mesh: &MultiblockMesh, values: &[f64]) -> PostPressure {
        let polys = mesh
            .cells()
            .zip(values)
            .map(|(c, &v)| {
                let g = &mesh.subdomains[c.subdomain];
                LocalPoly5 { coeffs: [v, 0.0, 0.0, 0.0, 0.0], center: g.cell_center(c.i, c.j), half: [0.5 * g.hx(), 0.5 * g.hy()] }
            })
            .collect();
        PostPressure { polys }
    }

    #[test]
    fn nodal_average_examples() {
        // two elements side by side; the node in the middle of the shared edge
        let mesh = block(2, 1, 1.0, 0.5);
        let f = oswald_average(&constant_post(&mesh, &[1.0, 3.0]), &mesh, 0, &|_| 0.0);
        assert_eq!(f.node_coord(2, 1), [0.5, 0.25]);
        assert!((f.node(2, 1) - 2.0).abs() < 1e-15);
        assert!((f.node(1, 1) - 1.0).abs() < 1e-15);
        // four elements around an interior vertex
        let mesh = block(2, 2, 1.0, 1.0);
        let f = oswald_average(&constant_post(&mesh, &[1.0, 2.0, 3.0, 6.0]), &mesh, 0, &|_| -7.0);
        assert!((f.node(2, 2) - 3.0).abs() < 1e-15);
        assert_eq!(f.node(0, 1), -7.0);
    }

    #[test]
    fn two_point_flux_examples() {
        let (d, delta) = (0.1, 0.4);
        let v = two_point_flux(1.0, 1.0 + delta, d, d, 1.0, 3.0);
        assert!((v + 3.0 * delta / (4.0 * d)).abs() < 1e-14);
        assert_eq!(two_point_flux(2.0, 2.0, d, 0.3, 1.0, 5.0), 0.0);
    }

    #[test]
    fn nodal_field_is_continuous() {
        let r = run(&ManufacturedCase::test2(), checkerboard(8, 4).unwrap());
        for f in &r.fields.nodal {
            let g = &f.grid;
            for i in 1..g.nx {
                let x = g.x0 + i as f64 * g.hx();
                for t in [0.13, 0.5, 0.91] {
                    let y = g.y0 + t * (g.y1 - g.y0);
                    let (a, b) = (f.eval([x - 1e-12, y]), f.eval([x + 1e-12, y]));
                    assert!((a - b).abs() < 1e-9, "jump {} at ({x}, {y})", a - b);
                }
            }
        }
    }

    #[test]
    fn boundary_multipliers_equal_dirichlet_data() {
        let r = run(&ManufacturedCase::test1(), checkerboard(8, 4).unwrap());
        for c in r.mesh.cells() {
            let gc = r.mesh.global_cell(c);
            for face in Face::ALL {
                if r.mesh.side_on_boundary(c.subdomain, face) {
                    let g = &r.mesh.subdomains[c.subdomain];
                    let at_edge = match face {
                        Face::West => c.i == 0,
                        Face::East => c.i + 1 == g.nx,
                        Face::South => c.j == 0,
                        Face::North => c.j + 1 == g.ny,
                    };
                    if at_edge {
                        assert!(r.fields.lambda.values[gc][face as usize].abs() < 1e-12);
                    }
                }
            }
        }
        assert!(constraint_residual(&r.fields.post, &r.sol.p, &r.fields.lambda) < 1e-12);
    }

    #[test]
    fn linear_fields_are_exact_on_matching_blocks() {
        for (a, b, c) in [(1.0, 0.0, 0.0), (0.0, 1.0, 0.5), (1.0, -2.0, 0.25), (0.0, 0.0, 1.5)] {
            let case = ManufacturedCase::linear(a, b, c, 1.0);
            let r = run(&case, checkerboard(4, 1).unwrap());
            for (t, poly) in r.fields.post.polys.iter().enumerate() {
                let x = r.mesh.cell_center(r.mesh.cell_ref(t));
                assert!((r.sol.p[t] - case.p(x)).abs() < 1e-10);
                for pt in [[x[0] + 0.05, x[1] - 0.02], x] {
                    assert!((poly.eval(pt) - case.p(pt)).abs() < 1e-10);
                }
            }
            for f in &r.fields.nodal {
                for bb in 0..f.nodes_y() {
                    for aa in 0..f.nodes_x() {
                        assert!((f.node(aa, bb) - case.p(f.node_coord(aa, bb))).abs() < 1e-10);
                    }
                }
            }
            for (v, e) in r.fields.recovered.values.iter().zip(&r.iface.sub_edges) {
                assert!((v - case.u(e.midpoint)[e.normal.index()]).abs() < 1e-10);
            }
        }
    }
}
