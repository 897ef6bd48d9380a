//! Multiblock Cartesian meshes and the interface trace mesh.
//!
//! Each subdomain carries its own uniform grid. Where two subdomains share a
//! segment of a coordinate line, the traces of both grids are intersected
//! into sub-edges; every sub-edge sees exactly one cell on each side.

use crate::error::{Error, Result};

/// Coordinate direction. For an edge it names the normal direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn unit(self) -> [f64; 2] {
        match self {
            Axis::X => [1.0, 0.0],
            Axis::Y => [0.0, 1.0],
        }
    }

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Local face numbering of a rectangular cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    West = 0,
    East = 1,
    South = 2,
    North = 3,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::West, Face::East, Face::South, Face::North];

    pub fn axis(self) -> Axis {
        match self {
            Face::West | Face::East => Axis::X,
            Face::South | Face::North => Axis::Y,
        }
    }

    /// +1 for faces whose outward normal points along the positive axis.
    pub fn outward_sign(self) -> f64 {
        match self {
            Face::East | Face::North => 1.0,
            Face::West | Face::South => -1.0,
        }
    }
}

/// Rectangle plus resolution, as given in a layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSpec {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainGrid {
    pub id: usize,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

impl SubdomainGrid {
    pub fn hx(&self) -> f64 {
        (self.x1 - self.x0) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y1 - self.y0) / self.ny as f64
    }

    /// Cell width along `axis`.
    pub fn h(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.hx(),
            Axis::Y => self.hy(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// Row-major local index, `i` along x.
    pub fn local_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_ij(&self, local: usize) -> (usize, usize) {
        (local % self.nx, local / self.nx)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.x0 + (i as f64 + 0.5) * self.hx(),
            self.y0 + (j as f64 + 0.5) * self.hy(),
        ]
    }

    /// Grid line coordinates along `axis` (`n + 1` values).
    pub fn lines(&self, axis: Axis) -> Vec<f64> {
        let (a, n, h) = match axis {
            Axis::X => (self.x0, self.nx, self.hx()),
            Axis::Y => (self.y0, self.ny, self.hy()),
        };
        (0..=n).map(|k| a + k as f64 * h).collect()
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        p[0] >= self.x0 - tol && p[0] <= self.x1 + tol && p[1] >= self.y0 - tol && p[1] <= self.y1 + tol
    }

    /// Cell containing `p`, clamped to the grid.
    pub fn locate(&self, p: [f64; 2]) -> (usize, usize) {
        let fi = ((p[0] - self.x0) / self.hx()).floor();
        let fj = ((p[1] - self.y0) / self.hy()).floor();
        let i = (fi.max(0.0) as usize).min(self.nx - 1);
        let j = (fj.max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }

    fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// A cell addressed by subdomain and grid position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellRef {
    pub subdomain: usize,
    pub i: usize,
    pub j: usize,
}

/// Two subdomains sharing a segment of the line `{x = coord}` (normal
/// `Axis::X`) or `{y = coord}` (normal `Axis::Y`). `left` lies on the
/// negative side of the line.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub left: usize,
    pub right: usize,
    pub normal: Axis,
    pub coord: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Adjacency {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Map a tangential coordinate on the interface to a point.
    pub fn point(&self, t: f64) -> [f64; 2] {
        match self.normal {
            Axis::X => [self.coord, t],
            Axis::Y => [t, self.coord],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    /// 2x2 split of the unit square at (0.5, 0.5). Fine blocks carry `n`
    /// cells per direction, coarse blocks `n / ratio`.
    Checkerboard { n: usize, ratio: usize },
    Explicit,
}

#[derive(Debug, Clone)]
pub struct MultiblockMesh {
    pub subdomains: Vec<SubdomainGrid>,
    pub adjacency: Vec<Adjacency>,
    pub layout: Layout,
    /// Bounding box `(x0, x1, y0, y1)` of the domain.
    pub bounds: (f64, f64, f64, f64),
    cell_offsets: Vec<usize>,
    tol: f64,
}

impl MultiblockMesh {
    pub fn n_cells(&self) -> usize {
        *self.cell_offsets.last().unwrap()
    }

    pub fn cell_offset(&self, subdomain: usize) -> usize {
        self.cell_offsets[subdomain]
    }

    pub fn global_cell(&self, c: CellRef) -> usize {
        self.cell_offsets[c.subdomain] + self.subdomains[c.subdomain].local_index(c.i, c.j)
    }

    pub fn cell_ref(&self, global: usize) -> CellRef {
        let s = self.cell_offsets.partition_point(|&o| o <= global) - 1;
        let (i, j) = self.subdomains[s].cell_ij(global - self.cell_offsets[s]);
        CellRef { subdomain: s, i, j }
    }

    pub fn cell_center(&self, c: CellRef) -> [f64; 2] {
        self.subdomains[c.subdomain].cell_center(c.i, c.j)
    }

    pub fn cells(&self) -> impl Iterator<Item = CellRef> + '_ {
        self.subdomains.iter().enumerate().flat_map(|(s, g)| {
            (0..g.ny).flat_map(move |j| (0..g.nx).map(move |i| CellRef { subdomain: s, i, j }))
        })
    }

    /// Absolute geometric tolerance used for coordinate comparisons.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn on_outer_boundary(&self, p: [f64; 2]) -> bool {
        let (x0, x1, y0, y1) = self.bounds;
        (p[0] - x0).abs() <= self.tol
            || (p[0] - x1).abs() <= self.tol
            || (p[1] - y0).abs() <= self.tol
            || (p[1] - y1).abs() <= self.tol
    }

    /// Whether the side of subdomain `s` on `face` lies on the outer boundary.
    pub fn side_on_boundary(&self, s: usize, face: Face) -> bool {
        let g = &self.subdomains[s];
        let (x0, x1, y0, y1) = self.bounds;
        match face {
            Face::West => (g.x0 - x0).abs() <= self.tol,
            Face::East => (g.x1 - x1).abs() <= self.tol,
            Face::South => (g.y0 - y0).abs() <= self.tol,
            Face::North => (g.y1 - y1).abs() <= self.tol,
        }
    }
}

/// Build a mesh from explicit blocks. The blocks must tile their bounding box.
pub fn build_multiblock(blocks: &[BlockSpec]) -> Result<MultiblockMesh> {
    build_with_layout(blocks, Layout::Explicit)
}

/// 2x2 checkerboard of the unit square; fine blocks at lower-left and
/// upper-right with `n` cells per direction, the others with `n / ratio`.
pub fn checkerboard(n: usize, ratio: usize) -> Result<MultiblockMesh> {
    if ratio == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("n = {n} and ratio = {ratio} must be positive")));
    }
    if !n.is_multiple_of(ratio) {
        return Err(Error::NotDivisible { n, ratio });
    }
    let c = n / ratio;
    let block = |x0: f64, y0: f64, m: usize| BlockSpec { x0, x1: x0 + 0.5, y0, y1: y0 + 0.5, nx: m, ny: m };
    let blocks = [block(0.0, 0.0, n), block(0.5, 0.0, c), block(0.0, 0.5, c), block(0.5, 0.5, n)];
    build_with_layout(&blocks, Layout::Checkerboard { n, ratio })
}

fn build_with_layout(blocks: &[BlockSpec], layout: Layout) -> Result<MultiblockMesh> {
    if blocks.is_empty() {
        return Err(Error::NonTiling("no blocks".into()));
    }
    for (index, b) in blocks.iter().enumerate() {
        let finite = [b.x0, b.x1, b.y0, b.y1].iter().all(|v| v.is_finite());
        if !finite || b.x0 >= b.x1 || b.y0 >= b.y1 {
            return Err(Error::InvalidBlock { index, reason: "degenerate or non-finite extent".into() });
        }
        if b.nx == 0 || b.ny == 0 {
            return Err(Error::InvalidBlock { index, reason: "cell counts must be positive".into() });
        }
    }
    let x0 = blocks.iter().map(|b| b.x0).fold(f64::INFINITY, f64::min);
    let x1 = blocks.iter().map(|b| b.x1).fold(f64::NEG_INFINITY, f64::max);
    let y0 = blocks.iter().map(|b| b.y0).fold(f64::INFINITY, f64::min);
    let y1 = blocks.iter().map(|b| b.y1).fold(f64::NEG_INFINITY, f64::max);
    let scale = (x1 - x0).max(y1 - y0);
    let tol = 1e-12 * scale;

    let subdomains: Vec<SubdomainGrid> = blocks
        .iter()
        .enumerate()
        .map(|(id, b)| SubdomainGrid { id, x0: b.x0, x1: b.x1, y0: b.y0, y1: b.y1, nx: b.nx, ny: b.ny })
        .collect();

    let total = (x1 - x0) * (y1 - y0);
    for a in 0..subdomains.len() {
        for b in a + 1..subdomains.len() {
            let (p, q) = (&subdomains[a], &subdomains[b]);
            let ox = (p.x1.min(q.x1) - p.x0.max(q.x0)).max(0.0);
            let oy = (p.y1.min(q.y1) - p.y0.max(q.y0)).max(0.0);
            if ox * oy > 1e-12 * total {
                return Err(Error::NonTiling(format!("blocks {a} and {b} overlap")));
            }
        }
    }
    let covered: f64 = subdomains.iter().map(SubdomainGrid::area).sum();
    if (covered - total).abs() > 1e-12 * total {
        return Err(Error::NonTiling(format!(
            "blocks cover area {covered} of bounding box area {total}"
        )));
    }

    let mut adjacency = Vec::new();
    for a in 0..subdomains.len() {
        for b in 0..subdomains.len() {
            if a == b {
                continue;
            }
            let (p, q) = (&subdomains[a], &subdomains[b]);
            if (p.x1 - q.x0).abs() <= tol {
                let lo = p.y0.max(q.y0);
                let hi = p.y1.min(q.y1);
                if hi - lo > tol {
                    adjacency.push(Adjacency { left: a, right: b, normal: Axis::X, coord: p.x1, lo, hi });
                }
            }
            if (p.y1 - q.y0).abs() <= tol {
                let lo = p.x0.max(q.x0);
                let hi = p.x1.min(q.x1);
                if hi - lo > tol {
                    adjacency.push(Adjacency { left: a, right: b, normal: Axis::Y, coord: p.y1, lo, hi });
                }
            }
        }
    }

    let mut cell_offsets = Vec::with_capacity(subdomains.len() + 1);
    let mut acc = 0;
    cell_offsets.push(0);
    for g in &subdomains {
        acc += g.n_cells();
        cell_offsets.push(acc);
    }

    Ok(MultiblockMesh { subdomains, adjacency, layout, bounds: (x0, x1, y0, y1), cell_offsets, tol })
}

/// One piece of the intersection of two grid traces on an interface.
#[derive(Debug, Clone, PartialEq)]
pub struct SubEdge {
    pub interface: usize,
    pub lo: f64,
    pub hi: f64,
    pub midpoint: [f64; 2],
    pub length: f64,
    pub left: CellRef,
    pub right: CellRef,
    pub normal: Axis,
}

#[derive(Debug, Clone)]
pub struct InterfaceMesh {
    pub sub_edges: Vec<SubEdge>,
    /// Index range into `sub_edges` per adjacency entry.
    pub ranges: Vec<std::ops::Range<usize>>,
}

impl InterfaceMesh {
    pub fn on_interface(&self, k: usize) -> &[SubEdge] {
        &self.sub_edges[self.ranges[k].clone()]
    }

    pub fn is_empty(&self) -> bool {
        self.sub_edges.is_empty()
    }
}

/// Merge sorted breakpoints, dropping those closer than `tol` to the previous one.
pub(crate) fn merge_breakpoints(mut pts: Vec<f64>, tol: f64) -> Vec<f64> {
    pts.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        match out.last() {
            Some(&last) if p - last <= tol => {}
            _ => out.push(p),
        }
    }
    out
}

/// Intersect the grid traces on every interface.
pub fn compute_interface_trace(mesh: &MultiblockMesh) -> InterfaceMesh {
    let mut sub_edges = Vec::new();
    let mut ranges = Vec::with_capacity(mesh.adjacency.len());
    for (k, adj) in mesh.adjacency.iter().enumerate() {
        let start = sub_edges.len();
        let left = &mesh.subdomains[adj.left];
        let right = &mesh.subdomains[adj.right];
        let tangent = match adj.normal {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        };
        let tol = 1e-12 * adj.length();
        let mut pts = vec![adj.lo, adj.hi];
        for g in [left, right] {
            pts.extend(g.lines(tangent).into_iter().filter(|&t| t > adj.lo + tol && t < adj.hi - tol));
        }
        let pts = merge_breakpoints(pts, tol);
        for w in pts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi - lo <= tol {
                continue;
            }
            let t = 0.5 * (lo + hi);
            let m = adj.point(t);
            let cell_on = |g: &SubdomainGrid, first: bool| -> CellRef {
                let (mut i, mut j) = g.locate(m);
                match (adj.normal, first) {
                    (Axis::X, true) => i = g.nx - 1,
                    (Axis::X, false) => i = 0,
                    (Axis::Y, true) => j = g.ny - 1,
                    (Axis::Y, false) => j = 0,
                }
                CellRef { subdomain: g.id, i, j }
            };
            sub_edges.push(SubEdge {
                interface: k,
                lo,
                hi,
                midpoint: m,
                length: hi - lo,
                left: cell_on(left, true),
                right: cell_on(right, false),
                normal: adj.normal,
            });
        }
        ranges.push(start..sub_edges.len());
    }
    InterfaceMesh { sub_edges, ranges }
}
