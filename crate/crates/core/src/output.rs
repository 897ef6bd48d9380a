//! Result export: convergence tables as CSV, fields as legacy ASCII VTK.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::darcy::MixedSolution;
use crate::dofs::DofMap;
use crate::error::{Error, Result};
use crate::mesh::{CellRef, Face, MultiblockMesh};
use crate::postprocess::{projected_face_flux, NodalQ2Field};
use crate::verification::ConvergenceRow;

pub const CSV_HEADER: &str = "n,e_u,order_u,e_rec,order_rec";

/// Six significant digits with a signed, at least two-digit exponent
/// (`1.47000e-01`).
pub fn format_sci(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:.5e}");
    let (mant, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

pub fn write_csv_string(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let opt = |o: Option<f64>| o.map(format_sci).unwrap_or_default();
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.n, format_sci(r.e_u), opt(r.order_u), format_sci(r.e_rec), opt(r.order_rec));
    }
    out
}

pub fn parse_csv(text: &str) -> std::result::Result<Vec<ConvergenceRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(format!("expected header {CSV_HEADER:?}"));
    }
    let num = |s: &str, line: usize| s.parse::<f64>().map_err(|e| format!("line {line}: {s:?}: {e}"));
    let opt = |s: &str, line: usize| if s.is_empty() { Ok(None) } else { num(s, line).map(Some) };
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(k, l)| {
            let line = k + 2;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(format!("line {line}: expected 5 fields, got {}", f.len()));
            }
            Ok(ConvergenceRow {
                n: f[0].parse().map_err(|e| format!("line {line}: {e}"))?,
                e_u: num(f[1], line)?,
                order_u: opt(f[2], line)?,
                e_rec: num(f[3], line)?,
                order_rec: opt(f[4], line)?,
            })
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

pub fn write_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, write_csv_string(rows)).map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<ConvergenceRow>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_csv(&text).map_err(|reason| Error::Parse { path: path.display().to_string(), reason })
}

/// Legacy VTK structured-points document for one subdomain: cell pressure,
/// the four outward face fluxes per cell (W, E, S, N) and the recovered
/// continuous pressure at the cell vertices.
pub fn vtk_subdomain(mesh: &MultiblockMesh, s: usize, sol: &MixedSolution, dofs: &DofMap, nodal: &NodalQ2Field) -> String {
    let g = &mesh.subdomains[s];
    let n = g.n_cells();
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "evflow subdomain {s}");
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", g.nx + 1, g.ny + 1);
    let _ = writeln!(out, "ORIGIN {:e} {:e} 0", g.x0, g.y0);
    let _ = writeln!(out, "SPACING {:e} {:e} 1", g.hx(), g.hy());
    let _ = writeln!(out, "CELL_DATA {n}");
    let _ = writeln!(out, "SCALARS pressure double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    let cells: Vec<usize> = (0..n)
        .map(|k| {
            let (i, j) = g.cell_ij(k);
            mesh.global_cell(CellRef { subdomain: s, i, j })
        })
        .collect();
    for &c in &cells {
        let _ = writeln!(out, "{:e}", sol.p[c]);
    }
    let _ = writeln!(out, "FIELD face_flux 1");
    let _ = writeln!(out, "face_flux 4 {n} double");
    for &c in &cells {
        let f: Vec<String> = Face::ALL.iter().map(|&f| format!("{:e}", projected_face_flux(sol, dofs, c, f))).collect();
        let _ = writeln!(out, "{}", f.join(" "));
    }
    let _ = writeln!(out, "POINT_DATA {}", (g.nx + 1) * (g.ny + 1));
    let _ = writeln!(out, "SCALARS s_h double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let _ = writeln!(out, "{:e}", nodal.node(2 * i, 2 * j));
        }
    }
    out
}

/// Write `subdomain_<s>.vtk` for every subdomain into `dir`.
pub fn write_vtk(
    dir: &Path,
    mesh: &MultiblockMesh,
    sol: &MixedSolution,
    dofs: &DofMap,
    nodal: &[NodalQ2Field],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    (0..mesh.subdomains.len())
        .map(|s| {
            let path = dir.join(format!("subdomain_{s}.vtk"));
            fs::write(&path, vtk_subdomain(mesh, s, sol, dofs, &nodal[s])).map_err(io_err(&path))?;
            Ok(path)
        })
        .collect()
}

/// Minimal reader for the files written above: named scalar/field arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkArrays {
    pub dimensions: [usize; 3],
    pub pressure: Vec<f64>,
    pub face_flux: Vec<[f64; 4]>,
    pub s_h: Vec<f64>,
}

struct Cursor<'a> {
    lines: std::str::Lines<'a>,
}

impl<'a> Cursor<'a> {
    fn next(&mut self, what: &str) -> std::result::Result<&'a str, String> {
        self.lines.next().map(str::trim).ok_or_else(|| format!("unexpected end of file before {what}"))
    }

    fn expect(&mut self, line: &str) -> std::result::Result<(), String> {
        let got = self.next(line)?;
        if got == line {
            Ok(())
        } else {
            Err(format!("expected {line:?}, got {got:?}"))
        }
    }

    fn values(&mut self, count: usize) -> std::result::Result<Vec<f64>, String> {
        (0..count).map(|_| self.next("value")?.parse::<f64>().map_err(|e| e.to_string())).collect()
    }
}

pub fn parse_vtk(text: &str) -> std::result::Result<VtkArrays, String> {
    let mut c = Cursor { lines: text.lines() };
    if !c.next("header")?.starts_with("# vtk DataFile") {
        return Err("not a legacy VTK file".into());
    }
    c.next("title")?;
    c.expect("ASCII")?;
    c.expect("DATASET STRUCTURED_POINTS")?;
    let dims: Vec<usize> = c
        .next("dimensions")?
        .strip_prefix("DIMENSIONS ")
        .ok_or("expected DIMENSIONS")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| format!("{e}")))
        .collect::<std::result::Result<_, String>>()?;
    if dims.len() != 3 || dims[0] < 2 || dims[1] < 2 {
        return Err("bad DIMENSIONS".into());
    }
    let n_cells = (dims[0] - 1) * (dims[1] - 1);
    let n_points = dims[0] * dims[1] * dims[2];
    c.next("origin")?;
    c.next("spacing")?;
    c.expect(&format!("CELL_DATA {n_cells}"))?;
    c.expect("SCALARS pressure double 1")?;
    c.expect("LOOKUP_TABLE default")?;
    let pressure = c.values(n_cells)?;
    c.expect("FIELD face_flux 1")?;
    c.expect(&format!("face_flux 4 {n_cells} double"))?;
    let mut face_flux = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let v = c
            .next("face flux")?
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| e.to_string())?;
        face_flux.push(<[f64; 4]>::try_from(v).map_err(|_| "face_flux needs four components".to_string())?);
    }
    c.expect(&format!("POINT_DATA {n_points}"))?;
    c.expect("SCALARS s_h double 1")?;
    c.expect("LOOKUP_TABLE default")?;
    let s_h = c.values(n_points)?;
    Ok(VtkArrays { dimensions: [dims[0], dims[1], dims[2]], pressure, face_flux, s_h })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ConvergenceRow> {
        vec![
            ConvergenceRow { n: 8, e_u: 0.147, order_u: None, e_rec: 0.355, order_rec: None },
            ConvergenceRow { n: 16, e_u: 7.7e-2, order_u: Some(0.9328), e_rec: 0.112, order_rec: Some(1.6643) },
        ]
    }

    #[test]
    fn scientific_format() {
        assert_eq!(format_sci(0.147), "1.47000e-01");
        assert_eq!(format_sci(12345.678), "1.23457e+04");
        assert_eq!(format_sci(1.0), "1.00000e+00");
        assert_eq!(format_sci(-2.5e-120), "-2.50000e-120");
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let text = write_csv_string(&rows());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "8,1.47000e-01,,3.55000e-01,");
        assert_eq!(lines[2], "16,7.70000e-02,9.32800e-01,1.12000e-01,1.66430e+00");
        let back = parse_csv(&text).unwrap();
        assert_eq!(back, rows());
        assert_eq!(write_csv_string(&back), text);
        assert!(parse_csv("n,e\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n8,x,,1,\n")).is_err());
    }

    #[test]
    fn csv_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("t.csv");
        write_csv(&path, &rows()).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows());
    }

    #[test]
    fn vtk_round_trip_and_determinism() {
        use crate::verification::{manufactured_case, run_mesh};
        let case = manufactured_case(1).unwrap();
        let run = run_mesh(&case, crate::mesh::checkerboard(4, 4).unwrap(), 4, true, Default::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_vtk(dir.path(), &run.mesh, &run.solution, &run.dofs, &run.fields.nodal).unwrap();
        assert_eq!(paths.len(), 4);
        for (s, path) in paths.iter().enumerate() {
            let text = fs::read_to_string(path).unwrap();
            let arrays = parse_vtk(&text).unwrap();
            let g = &run.mesh.subdomains[s];
            assert_eq!(arrays.dimensions, [g.nx + 1, g.ny + 1, 1]);
            assert_eq!(arrays.pressure[0], run.solution.p[run.mesh.cell_offset(s)]);
            assert_eq!(arrays.s_h.len(), (g.nx + 1) * (g.ny + 1));
            assert_eq!(arrays.face_flux.len(), g.n_cells());
            assert_eq!(text, vtk_subdomain(&run.mesh, s, &run.solution, &run.dofs, &run.fields.nodal[s]));
        }
    }
}
