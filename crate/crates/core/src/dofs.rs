//! Degrees of freedom of the enhanced velocity space and the cell pressures.

use crate::mesh::{Axis, CellRef, Face, InterfaceMesh, MultiblockMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    /// Edge interior to a subdomain.
    Interior,
    /// Edge on the outer boundary; oriented outward.
    Boundary,
    /// Interface sub-edge, by index into [`InterfaceMesh::sub_edges`].
    Interface(usize),
}

/// A normal-flux degree of freedom. The value is the normal velocity in the
/// direction of `sign * axis`, i.e. pointing from `from` towards `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityDof {
    pub kind: DofKind,
    pub axis: Axis,
    pub sign: f64,
    pub midpoint: [f64; 2],
    pub length: f64,
    pub from: usize,
    pub to: Option<usize>,
}

impl VelocityDof {
    pub fn normal(&self) -> [f64; 2] {
        let u = self.axis.unit();
        [self.sign * u[0], self.sign * u[1]]
    }

    /// +1 if the DOF direction is outward for `cell`, -1 if inward.
    pub fn orientation_for(&self, cell: usize) -> f64 {
        if self.from == cell {
            1.0
        } else {
            debug_assert_eq!(self.to, Some(cell));
            -1.0
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> {
        std::iter::once(self.from).chain(self.to)
    }
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub velocity: Vec<VelocityDof>,
    pub n_cells: usize,
    /// Velocity DOFs on each face of each cell, indexed by `Face as usize`.
    /// Interface faces list one DOF per sub-edge, in arc order.
    pub cell_faces: Vec<[Vec<usize>; 4]>,
    /// DOF index of each interface sub-edge.
    pub sub_edge_dof: Vec<usize>,
}

impl DofMap {
    pub fn n_velocity(&self) -> usize {
        self.velocity.len()
    }

    pub fn face_dofs(&self, cell: usize, face: Face) -> &[usize] {
        &self.cell_faces[cell][face as usize]
    }
}

pub fn enumerate_dofs(mesh: &MultiblockMesh, interface: &InterfaceMesh) -> DofMap {
    let n_cells = mesh.n_cells();
    let mut velocity = Vec::new();
    let mut cell_faces: Vec<[Vec<usize>; 4]> = vec![Default::default(); n_cells];

    fn push(
        velocity: &mut Vec<VelocityDof>,
        dof: VelocityDof,
        from_face: Face,
        to_face: Option<Face>,
        faces: &mut [[Vec<usize>; 4]],
    ) {
        let idx = velocity.len();
        faces[dof.from][from_face as usize].push(idx);
        if let (Some(t), Some(f)) = (dof.to, to_face) {
            faces[t][f as usize].push(idx);
        }
        velocity.push(dof);
    }

    for (s, g) in mesh.subdomains.iter().enumerate() {
        let (hx, hy) = (g.hx(), g.hy());
        let gc = |i: usize, j: usize| mesh.global_cell(CellRef { subdomain: s, i, j });
        // x-normal edges
        for j in 0..g.ny {
            let y = g.y0 + (j as f64 + 0.5) * hy;
            for i in 0..=g.nx {
                let x = g.x0 + i as f64 * hx;
                let midpoint = [x, y];
                if i > 0 && i < g.nx {
                    let dof = VelocityDof {
                        kind: DofKind::Interior,
                        axis: Axis::X,
                        sign: 1.0,
                        midpoint,
                        length: hy,
                        from: gc(i - 1, j),
                        to: Some(gc(i, j)),
                    };
                    push(&mut velocity, dof, Face::East, Some(Face::West), &mut cell_faces);
                } else if i == 0 && mesh.side_on_boundary(s, Face::West) {
                    let dof = VelocityDof {
                        kind: DofKind::Boundary,
                        axis: Axis::X,
                        sign: -1.0,
                        midpoint,
                        length: hy,
                        from: gc(0, j),
                        to: None,
                    };
                    push(&mut velocity, dof, Face::West, None, &mut cell_faces);
                } else if i == g.nx && mesh.side_on_boundary(s, Face::East) {
                    let dof = VelocityDof {
                        kind: DofKind::Boundary,
                        axis: Axis::X,
                        sign: 1.0,
                        midpoint,
                        length: hy,
                        from: gc(g.nx - 1, j),
                        to: None,
                    };
                    push(&mut velocity, dof, Face::East, None, &mut cell_faces);
                }
            }
        }
        // y-normal edges
        for i in 0..g.nx {
            let x = g.x0 + (i as f64 + 0.5) * hx;
            for j in 0..=g.ny {
                let y = g.y0 + j as f64 * hy;
                let midpoint = [x, y];
                if j > 0 && j < g.ny {
                    let dof = VelocityDof {
                        kind: DofKind::Interior,
                        axis: Axis::Y,
                        sign: 1.0,
                        midpoint,
                        length: hx,
                        from: gc(i, j - 1),
                        to: Some(gc(i, j)),
                    };
                    push(&mut velocity, dof, Face::North, Some(Face::South), &mut cell_faces);
                } else if j == 0 && mesh.side_on_boundary(s, Face::South) {
                    let dof = VelocityDof {
                        kind: DofKind::Boundary,
                        axis: Axis::Y,
                        sign: -1.0,
                        midpoint,
                        length: hx,
                        from: gc(i, 0),
                        to: None,
                    };
                    push(&mut velocity, dof, Face::South, None, &mut cell_faces);
                } else if j == g.ny && mesh.side_on_boundary(s, Face::North) {
                    let dof = VelocityDof {
                        kind: DofKind::Boundary,
                        axis: Axis::Y,
                        sign: 1.0,
                        midpoint,
                        length: hx,
                        from: gc(i, g.ny - 1),
                        to: None,
                    };
                    push(&mut velocity, dof, Face::North, None, &mut cell_faces);
                }
            }
        }
    }

    let mut sub_edge_dof = Vec::with_capacity(interface.sub_edges.len());
    for (k, e) in interface.sub_edges.iter().enumerate() {
        let (from_face, to_face) = match e.normal {
            Axis::X => (Face::East, Face::West),
            Axis::Y => (Face::North, Face::South),
        };
        sub_edge_dof.push(velocity.len());
        let dof = VelocityDof {
            kind: DofKind::Interface(k),
            axis: e.normal,
            sign: 1.0,
            midpoint: e.midpoint,
            length: e.length,
            from: mesh.global_cell(e.left),
            to: Some(mesh.global_cell(e.right)),
        };
        push(&mut velocity, dof, from_face, Some(to_face), &mut cell_faces);
    }

    // sub-edges were pushed interface by interface; keep each face in arc order
    for faces in &mut cell_faces {
        for list in faces.iter_mut() {
            if list.len() > 1 {
                list.sort_by(|&a, &b| {
                    let (ma, mb) = (velocity[a].midpoint, velocity[b].midpoint);
                    ma[0].total_cmp(&mb[0]).then(ma[1].total_cmp(&mb[1]))
                });
            }
        }
    }

    DofMap { velocity, n_cells, cell_faces, sub_edge_dof }
}
