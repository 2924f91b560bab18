//! CSV and legacy-VTK output with matching readers.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces every value bit for bit.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fem::{q1_shape, FemSpace};
use crate::mesh::Mesh;
use crate::stepper::StepRecord;

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Step history with columns `step,t,k,accepted,err_norm,gmres_iters,averaged`.
pub fn write_history<W: Write>(w: W, history: &[StepRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in history {
        wr.serialize(r).map_err(csv_err)?;
    }
    if history.is_empty() {
        wr.write_record(["step", "t", "k", "accepted", "err_norm", "gmres_iters", "averaged"]).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_history<R: Read>(r: R) -> Result<Vec<StepRecord>> {
    csv::Reader::from_reader(r).deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

/// Named nodal field with one or two components, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub name: String,
    pub components: usize,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn scalar(name: impl Into<String>, values: Vec<f64>) -> Self {
        NodalField { name: name.into(), components: 1, values }
    }

    /// Interleaves a velocity vector (`x` block then `y` block) per node.
    pub fn velocity(name: impl Into<String>, u: &[f64]) -> Self {
        let n = u.len() / 2;
        let values = (0..n).flat_map(|i| [u[i], u[n + i]]).collect();
        NodalField { name: name.into(), components: 2, values }
    }
}

/// Pressure at every Q2 node, interpolating the Q1 field at midside and
/// centre nodes.
pub fn pressure_at_nodes(mesh: &Mesh, p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_nodes()];
    for (conn, pc) in mesh.elements.iter().zip(&mesh.element_pressure) {
        for b in 0..3 {
            for a in 0..3 {
                let phi = q1_shape(a as f64 - 1.0, b as f64 - 1.0);
                out[conn[3 * b + a]] = phi.iter().zip(pc).map(|(w, &i)| w * p[i]).sum();
            }
        }
    }
    out
}

/// Velocity magnitude, pressure and velocity fields of one state.
pub fn flow_fields(space: &FemSpace, u: &[f64], p: &[f64]) -> Vec<NodalField> {
    let n = space.n_nodes();
    let speed = (0..n).map(|i| u[i].hypot(u[n + i])).collect();
    vec![NodalField::velocity("velocity", u), NodalField::scalar("pressure", pressure_at_nodes(&space.mesh, p)), NodalField::scalar("speed", speed)]
}

/// Node table `x,y,<field columns>`; two-component fields become `name_x,name_y`.
pub fn write_field_csv<W: Write>(w: W, mesh: &Mesh, fields: &[NodalField]) -> Result<()> {
    check_fields(mesh, fields)?;
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["x".to_string(), "y".to_string()];
    for f in fields {
        if f.components == 1 {
            header.push(f.name.clone());
        } else {
            header.push(format!("{}_x", f.name));
            header.push(format!("{}_y", f.name));
        }
    }
    wr.write_record(&header).map_err(csv_err)?;
    for (i, node) in mesh.nodes.iter().enumerate() {
        let mut row = vec![node[0].to_string(), node[1].to_string()];
        for f in fields {
            row.extend(f.values[i * f.components..(i + 1) * f.components].iter().map(f64::to_string));
        }
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Numeric CSV table with a header row.
pub fn write_table<W: Write, S: AsRef<str>>(w: W, header: &[S], rows: &[Vec<f64>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header.iter().map(|s| s.as_ref())).map_err(csv_err)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Dimension(format!("row of {} values under {} columns", row.len(), header.len())));
        }
        wr.write_record(row.iter().map(f64::to_string)).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Column names and rows of a numeric CSV table.
pub fn read_table<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(rec.iter().map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")))).collect::<Result<Vec<_>>>()?);
    }
    Ok((header, rows))
}

fn check_fields(mesh: &Mesh, fields: &[NodalField]) -> Result<()> {
    for f in fields {
        if !(f.components == 1 || f.components == 2) || f.values.len() != f.components * mesh.n_nodes() {
            return Err(Error::Dimension(format!("field `{}` has {} values for {} nodes", f.name, f.values.len(), mesh.n_nodes())));
        }
        if f.name.is_empty() || f.name.contains(char::is_whitespace) {
            return Err(Error::Dimension(format!("field name `{}` is not a single token", f.name)));
        }
    }
    Ok(())
}

/// The four bilinear sub-quadrilaterals of every Q2 element.
pub fn sub_quads(mesh: &Mesh) -> Vec<[usize; 4]> {
    let mut cells = Vec::with_capacity(4 * mesh.n_elements());
    for conn in &mesh.elements {
        for b in 0..2 {
            for a in 0..2 {
                let n = |a: usize, b: usize| conn[3 * b + a];
                cells.push([n(a, b), n(a + 1, b), n(a + 1, b + 1), n(a, b + 1)]);
            }
        }
    }
    cells
}

const VTK_QUAD: u8 = 9;

/// ASCII legacy VTK unstructured grid with nodal point data.
pub fn write_vtk<W: Write>(mut w: W, mesh: &Mesh, title: &str, fields: &[NodalField]) -> Result<()> {
    check_fields(mesh, fields)?;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_nodes())?;
    for p in &mesh.nodes {
        writeln!(w, "{} {} 0", p[0], p[1])?;
    }
    let cells = sub_quads(mesh);
    writeln!(w, "CELLS {} {}", cells.len(), 5 * cells.len())?;
    for c in &cells {
        writeln!(w, "4 {} {} {} {}", c[0], c[1], c[2], c[3])?;
    }
    writeln!(w, "CELL_TYPES {}", cells.len())?;
    for _ in &cells {
        writeln!(w, "{VTK_QUAD}")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.n_nodes())?;
    for f in fields {
        if f.components == 1 {
            writeln!(w, "SCALARS {} double 1", f.name)?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in &f.values {
                writeln!(w, "{v}")?;
            }
        } else {
            writeln!(w, "VECTORS {} double", f.name)?;
            for v in f.values.chunks(2) {
                writeln!(w, "{} {} 0", v[0], v[1])?;
            }
        }
    }
    Ok(())
}

/// Contents of a file written by [`write_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub title: String,
    pub points: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 4]>,
    pub fields: Vec<NodalField>,
}

pub fn read_vtk(text: &str) -> Result<VtkData> {
    let bad = |what: &str| Error::Parse(format!("VTK: {what}"));
    let mut lines = text.lines();
    let mut next = || lines.next().ok_or_else(|| bad("unexpected end of file"));
    if !next()?.starts_with("# vtk DataFile") {
        return Err(bad("missing header"));
    }
    let title = next()?.to_string();
    if next()?.trim() != "ASCII" {
        return Err(bad("only ASCII files are supported"));
    }
    next()?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("VTK: bad number `{s}`")));
    let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("VTK: bad integer `{s}`")));
    let count = |line: &str, key: &str| -> Result<usize> {
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(Error::Parse(format!("VTK: expected {key}, found `{line}`")));
        }
        int(it.next().unwrap_or(""))
    };
    let n_points = count(next()?, "POINTS")?;
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let v: Vec<f64> = next()?.split_whitespace().map(num).collect::<Result<_>>()?;
        if v.len() < 2 {
            return Err(bad("short point line"));
        }
        points.push([v[0], v[1]]);
    }
    let n_cells = count(next()?, "CELLS")?;
    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let v: Vec<usize> = next()?.split_whitespace().map(int).collect::<Result<_>>()?;
        if v.len() != 5 || v[0] != 4 {
            return Err(bad("only quadrilateral cells are supported"));
        }
        cells.push([v[1], v[2], v[3], v[4]]);
    }
    count(next()?, "CELL_TYPES")?;
    for _ in 0..n_cells {
        next()?;
    }
    let mut fields = Vec::new();
    let mut rest = lines.skip_while(|l| l.trim().is_empty());
    if let Some(line) = rest.next() {
        if count(line, "POINT_DATA")? != n_points {
            return Err(bad("point data size differs from point count"));
        }
        while let Some(line) = rest.next() {
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.first() {
                None => continue,
                Some(&"SCALARS") => {
                    rest.next();
                    let values = (0..n_points).map(|_| num(rest.next().unwrap_or("").trim())).collect::<Result<_>>()?;
                    fields.push(NodalField::scalar(words[1], values));
                }
                Some(&"VECTORS") => {
                    let mut values = Vec::with_capacity(2 * n_points);
                    for _ in 0..n_points {
                        let v: Vec<f64> = rest.next().unwrap_or("").split_whitespace().map(num).collect::<Result<_>>()?;
                        if v.len() < 2 {
                            return Err(bad("short vector line"));
                        }
                        values.extend_from_slice(&v[..2]);
                    }
                    fields.push(NodalField { name: words[1].to_string(), components: 2, values });
                }
                Some(other) => return Err(Error::Parse(format!("VTK: unsupported section `{other}`"))),
            }
        }
    }
    Ok(VtkData { title, points, cells, fields })
}
