//! The FVMESH line-oriented text format.
//!
//! ```text
//! FVMESH 1 <dim>
//! <n_cells> <n_interior_edges> <n_boundary_edges>
//! <x> <y> <measure>                 one line per cell
//! <K> <L> <m_sigma> <nu_x> <nu_y>   one line per interior edge
//! <K> <m_sigma> <d_sigma>           one line per boundary edge
//! ```
//!
//! Cell indices are 0-based. Center distances for interior edges are derived
//! from the cell centers; the edge itself is reconstructed halfway between
//! them (the Voronoi position), which is exact for the structured meshes this
//! engine produces. Floats are written with 17 significant digits.

use std::fs;
use std::path::Path;

use crate::mesh::{raw_interior_edge, BoundaryEdge, Cell, Mesh, MeshError};
use crate::util::fmt_g17;

/// Read and validate a mesh in the FVMESH format.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let text = fs::read_to_string(path)?;
    parse_mesh(&text)
}

/// Parse FVMESH text; all derived quantities are recomputed from the raw
/// geometry and every mesh invariant is validated.
pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (lno, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 3 || head[0] != "FVMESH" || head[1] != "1" {
        return Err(parse_err(lno, "expected header `FVMESH 1 <dim>`"));
    }
    let dim: u8 = head[2]
        .parse()
        .map_err(|_| parse_err(lno, "dimension must be an integer"))?;
    if dim != 1 && dim != 2 {
        return Err(parse_err(lno, "dimension must be 1 or 2"));
    }

    let (lno, counts) = lines
        .next()
        .ok_or_else(|| parse_err(lno + 1, "missing counts line"))?;
    let counts = parse_floats(counts, 3, lno)?;
    let (n_cells, n_int, n_bnd) = (counts[0] as usize, counts[1] as usize, counts[2] as usize);
    if n_cells == 0 {
        return Err(parse_err(lno, "mesh must contain at least one cell"));
    }

    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let (lno, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in cell block"))?;
        let v = parse_floats(line, 3, lno)?;
        cells.push(Cell { center: [v[0], v[1]], measure: v[2] });
    }

    let mut interior_edges = Vec::with_capacity(n_int);
    for _ in 0..n_int {
        let (lno, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in interior-edge block"))?;
        let v = parse_floats(line, 5, lno)?;
        let (k, l) = (v[0] as usize, v[1] as usize);
        if v[0].fract() != 0.0 || v[1].fract() != 0.0 || k >= n_cells || l >= n_cells {
            return Err(parse_err(lno, "interior edge cell indices out of range"));
        }
        if k == l {
            return Err(parse_err(lno, "interior edge joins a cell to itself"));
        }
        interior_edges.push(raw_interior_edge(&cells, k, l, v[2], [v[3], v[4]]));
    }

    let mut boundary_edges = Vec::with_capacity(n_bnd);
    for _ in 0..n_bnd {
        let (lno, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in boundary-edge block"))?;
        let v = parse_floats(line, 3, lno)?;
        let k = v[0] as usize;
        if v[0].fract() != 0.0 || k >= n_cells {
            return Err(parse_err(lno, "boundary edge cell index out of range"));
        }
        boundary_edges.push(BoundaryEdge { cell: k, measure: v[1], distance: v[2] });
    }

    if let Some((lno, _)) = lines.next() {
        return Err(parse_err(lno, "trailing content after boundary-edge block"));
    }

    let mesh = Mesh {
        cells,
        interior_edges,
        boundary_edges,
        dimension: dim,
        structured: None,
    };
    mesh.validate(None)?;
    Ok(mesh)
}

/// Write a mesh in the FVMESH format.
pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

/// Canonical FVMESH text for a mesh.
pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str(&format!("FVMESH 1 {}\n", mesh.dimension));
    out.push_str(&format!(
        "{} {} {}\n",
        mesh.cells.len(),
        mesh.interior_edges.len(),
        mesh.boundary_edges.len()
    ));
    for c in &mesh.cells {
        out.push_str(&format!(
            "{} {} {}\n",
            fmt_g17(c.center[0]),
            fmt_g17(c.center[1]),
            fmt_g17(c.measure)
        ));
    }
    for e in &mesh.interior_edges {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            e.left,
            e.right,
            fmt_g17(e.measure),
            fmt_g17(e.normal[0]),
            fmt_g17(e.normal[1])
        ));
    }
    for e in &mesh.boundary_edges {
        out.push_str(&format!(
            "{} {} {}\n",
            e.cell,
            fmt_g17(e.measure),
            fmt_g17(e.distance)
        ));
    }
    out
}

fn parse_err(line: usize, message: &str) -> MeshError {
    MeshError::Parse { line, message: message.to_string() }
}

fn parse_floats(line: &str, expected: usize, lno: usize) -> Result<Vec<f64>, MeshError> {
    let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
    match vals {
        Ok(v) if v.len() == expected => Ok(v),
        Ok(v) => Err(parse_err(
            lno,
            &format!("expected {expected} fields, found {}", v.len()),
        )),
        Err(e) => Err(parse_err(lno, &format!("bad float: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_rectangle_mesh};

    fn meshes_equal(a: &Mesh, b: &Mesh) -> bool {
        a.dimension == b.dimension
            && a.cells.len() == b.cells.len()
            && a.cells.iter().zip(&b.cells).all(|(x, y)| {
                x.center == y.center && x.measure == y.measure
            })
            && a.interior_edges.len() == b.interior_edges.len()
            && a.interior_edges.iter().zip(&b.interior_edges).all(|(x, y)| {
                x.left == y.left
                    && x.right == y.right
                    && x.measure == y.measure
                    && x.distance == y.distance
                    && x.transmissibility == y.transmissibility
                    && x.diamond_measure == y.diamond_measure
            })
            && a.boundary_edges.iter().zip(&b.boundary_edges).all(|(x, y)| {
                x.cell == y.cell && x.measure == y.measure && x.distance == y.distance
            })
    }

    #[test]
    fn interval_round_trip_is_bit_exact() {
        let built = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let text = mesh_to_string(&built);
        let loaded = parse_mesh(&text).unwrap();
        assert!(meshes_equal(&built, &loaded));
        assert_eq!(text, mesh_to_string(&loaded));
    }

    #[test]
    fn awkward_bounds_round_trip() {
        let built = build_interval_mesh(-0.3, 0.7, 7).unwrap();
        let loaded = parse_mesh(&mesh_to_string(&built)).unwrap();
        assert!(meshes_equal(&built, &loaded));
        let rect = build_rectangle_mesh(1.0, 0.3, 5, 3).unwrap();
        let loaded = parse_mesh(&mesh_to_string(&rect)).unwrap();
        assert!(meshes_equal(&rect, &loaded));
    }

    #[test]
    fn zero_measure_cell_rejected() {
        let mut text = mesh_to_string(&build_interval_mesh(0.0, 1.0, 4).unwrap());
        text = text.replace("0.125 0 0.25", "0.125 0 0");
        let err = parse_mesh(&text).unwrap_err();
        assert!(matches!(err, MeshError::Validation(ref m) if m.contains("nonpositive measure")));
    }

    #[test]
    fn inflated_cell_breaks_diamond_partition() {
        // Growing one cell's measure without touching the edges leaves the
        // dual diamonds unable to cover the cell total.
        let mut text = mesh_to_string(&build_interval_mesh(0.0, 1.0, 4).unwrap());
        text = text.replace("0.125 0 0.25", "0.125 0 0.35");
        let err = parse_mesh(&text).unwrap_err();
        assert!(
            matches!(err, MeshError::Validation(ref m) if m.contains("dual-diamond")),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn skewed_normal_rejected() {
        let mut text = mesh_to_string(&build_rectangle_mesh(1.0, 1.0, 2, 2).unwrap());
        // First interior edge is vertical with normal (1, 0); tilt it.
        text = text.replace("0 1 0.5 1 0", "0 1 0.5 0.8 0.6");
        let err = parse_mesh(&text).unwrap_err();
        assert!(matches!(err, MeshError::Validation(ref m) if m.contains("orthogonal")));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_mesh("FVMESH 1 1\n2 1 2\nnot a float\n").unwrap_err();
        match err {
            MeshError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
        assert!(parse_mesh("NOPE 1 1\n").is_err());
    }

    #[test]
    fn load_applies_full_validation() {
        let text = mesh_to_string(&build_rectangle_mesh(2.0, 1.0, 3, 2).unwrap());
        let mesh = parse_mesh(&text).unwrap();
        assert!(mesh.validate(Some(2.0)).is_ok());
        assert_eq!(mesh.dimension, 2);
        assert!(mesh.structured.is_none());
    }
}
