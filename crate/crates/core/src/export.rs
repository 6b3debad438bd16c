//! Nodal field tables: `x,y,n1,n2,n3,phi,lambda_cell`, one row per Q2 node in
//! node-index order (x-major), values with 17 significant digits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::build_mesh;
use crate::fem::mesh::StructuredMesh;
use crate::state::State;

pub const HEADER: [&str; 7] = ["x", "y", "n1", "n2", "n3", "phi", "lambda_cell"];

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Cell whose multiplier is reported for a node: the one with the node in
/// its closed lower-left quadrant, clamped at the top and right edges.
fn owning_cell(mesh: &StructuredMesh, node: usize) -> usize {
    let (ix, iy) = mesh.node_grid_position(node);
    let last = mesh.cells_per_side() - 1;
    mesh.cell_index((ix / 2).min(last), (iy / 2).min(last))
}

pub fn write_solution(state: &State, w: impl Write) -> Result<()> {
    let mesh = state.mesh();
    let to_err = |e: csv::Error| Error::Parse(e.to_string());
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(HEADER).map_err(to_err)?;
    let phi = state.potential();
    let lam = state.lambda();
    for node in 0..mesh.node_count() {
        let (x, y) = mesh.node_coords(node);
        let n = state.director_at(node);
        let p = phi.map_or(String::new(), |p| num(p[node]));
        out.write_record([num(x), num(y), num(n[0]), num(n[1]), num(n[2]), p, num(lam[owning_cell(mesh, node)])])
            .map_err(to_err)?;
    }
    out.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub fn export_solution(state: &State, path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut f = std::io::BufWriter::new(File::create(path).map_err(io)?);
    write_solution(state, &mut f)?;
    f.flush().map_err(io)
}

/// Inverse of [`write_solution`]. The mesh level follows from the row count;
/// periodicity is not recorded in the table and must be supplied.
pub fn read_solution(r: impl Read, periodic_x: bool) -> Result<State> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if header.iter().ne(HEADER) {
        return Err(Error::Parse(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Parse(format!("bad number '{s}'")))
        };
        let mut row = [None; 7];
        for (i, slot) in row.iter_mut().enumerate() {
            *slot = field(i)?;
        }
        rows.push(row);
    }
    let side = (rows.len() as f64).sqrt().round() as usize;
    let level = (0..=10).find(|&l| 16 * (1 << l) + 1 == side && side * side == rows.len());
    let level = level.ok_or_else(|| Error::Parse(format!("{} rows do not form a level mesh", rows.len())))?;
    let mesh = build_mesh(level, periodic_x)?;
    let has_potential = rows[0][5].is_some();
    let mut state = State::zeros(&mesh, has_potential);
    let nodes = mesh.node_count();
    let missing = |what: &str, node: usize| Error::Parse(format!("row {node}: missing {what}"));
    for (node, row) in rows.iter().enumerate() {
        for f in 0..3 {
            state.values_mut()[f * nodes + node] = row[2 + f].ok_or_else(|| missing(HEADER[2 + f], node))?;
        }
        if has_potential {
            state.values_mut()[3 * nodes + node] = row[5].ok_or_else(|| missing("phi", node))?;
        }
        let (ix, iy) = mesh.node_grid_position(node);
        if ix % 2 == 1 && iy % 2 == 1 {
            let cell = owning_cell(&mesh, node);
            state.lambda_mut()[cell] = row[6].ok_or_else(|| missing("lambda_cell", node))?;
        }
    }
    Ok(state)
}

pub fn import_solution(path: &Path, periodic_x: bool) -> Result<State> {
    let f = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_solution(std::io::BufReader::new(f), periodic_x)
}
