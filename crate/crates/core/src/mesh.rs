//! Admissible finite-volume meshes: cells with centers, interior and boundary
//! edges, transmissibilities, and dual-diamond measures.
//!
//! Admissibility means the segment between neighboring cell centers is
//! orthogonal to the shared edge, so two-point fluxes are consistent.
//! Structured interval and rectangle meshes are admissible by construction;
//! anything else enters through the `FVMESH` loader and is validated there.

use std::fmt;

use crate::state::StateField;

/// Relative tolerance for the domain-measure and dual-diamond checks.
pub const MEASURE_REL_TOL: f64 = 1e-12;
const PARTITION_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Cell {
    pub center: [f64; 2],
    pub measure: f64,
}

#[derive(Clone, Debug)]
pub struct InteriorEdge {
    /// Cell on the negative side of the normal.
    pub left: usize,
    /// Cell on the positive side of the normal.
    pub right: usize,
    /// Edge measure m(sigma); 1 in one dimension.
    pub measure: f64,
    /// Center-to-center distance d_sigma.
    pub distance: f64,
    /// m(sigma) / d_sigma.
    pub transmissibility: f64,
    /// Unit normal pointing from `left` to `right`.
    pub normal: [f64; 2],
    /// Full diamond measure, m(sigma) d_sigma / 2.
    pub diamond_measure: f64,
    /// Distance from the left center to the edge.
    pub dist_left: f64,
    /// Distance from the right center to the edge.
    pub dist_right: f64,
}

#[derive(Clone, Debug)]
pub struct BoundaryEdge {
    pub cell: usize,
    pub measure: f64,
    /// Center-to-edge distance; doubles as d_sigma for boundary edges.
    pub distance: f64,
}

/// Extra bookkeeping for meshes built by the structured constructors,
/// used by nesting checks and exact initial-data quadrature.
#[derive(Clone, Debug, PartialEq)]
pub enum StructuredInfo {
    Interval { a: f64, b: f64, n: usize },
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub cells: Vec<Cell>,
    pub interior_edges: Vec<InteriorEdge>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub dimension: u8,
    pub structured: Option<StructuredInfo>,
}

#[derive(Debug)]
pub enum MeshError {
    InvalidArgument(String),
    Parse { line: usize, message: String },
    Validation(String),
    Range(String),
    Io(std::io::Error),
}

impl fmt::Display for MeshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshError::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            MeshError::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            MeshError::Validation(m) => write!(f, "mesh validation failed: {m}"),
            MeshError::Range(m) => write!(f, "value out of range: {m}"),
            MeshError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for MeshError {}

impl From<std::io::Error> for MeshError {
    fn from(e: std::io::Error) -> Self {
        MeshError::Io(e)
    }
}

/// Mesh quality report: the largest zeta with d(x_K, sigma) >= zeta d_sigma
/// for every cell-edge pair.
#[derive(Clone, Debug)]
pub struct MeshRegularityReport {
    pub zeta: f64,
    pub worst_interior_edge: Option<usize>,
    pub worst_boundary_edge: Option<usize>,
}

impl MeshRegularityReport {
    /// Index of the offending interior edge when the mesh misses `threshold`.
    pub fn offending_edge(&self, threshold: f64) -> Option<usize> {
        if self.zeta < threshold {
            self.worst_interior_edge
        } else {
            None
        }
    }
}

/// Uniform 1D mesh of `n_cells` cells on (a, b).
pub fn build_interval_mesh(a: f64, b: f64, n_cells: usize) -> Result<Mesh, MeshError> {
    if !(a < b) {
        return Err(MeshError::InvalidArgument(format!(
            "interval bounds must satisfy a < b, got a={a}, b={b}"
        )));
    }
    if n_cells < 2 {
        return Err(MeshError::InvalidArgument(format!(
            "need at least 2 cells, got {n_cells}"
        )));
    }
    let h = (b - a) / n_cells as f64;
    let cells: Vec<Cell> = (0..n_cells)
        .map(|i| Cell {
            center: [a + (i as f64 + 0.5) * h, 0.0],
            measure: h,
        })
        .collect();
    let mut interior_edges = Vec::with_capacity(n_cells - 1);
    for i in 0..n_cells - 1 {
        interior_edges.push(raw_interior_edge(&cells, i, i + 1, 1.0, [1.0, 0.0]));
    }
    let boundary_edges = vec![
        BoundaryEdge { cell: 0, measure: 1.0, distance: 0.5 * h },
        BoundaryEdge { cell: n_cells - 1, measure: 1.0, distance: 0.5 * h },
    ];
    let mesh = Mesh {
        cells,
        interior_edges,
        boundary_edges,
        dimension: 1,
        structured: Some(StructuredInfo::Interval { a, b, n: n_cells }),
    };
    mesh.validate(Some(b - a))?;
    Ok(mesh)
}

/// Structured nx-by-ny rectangle mesh of (0,lx) x (0,ly); admissible because
/// center-to-center segments are orthogonal to the shared edges.
pub fn build_rectangle_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    if !(lx > 0.0 && ly > 0.0) {
        return Err(MeshError::InvalidArgument(format!(
            "side lengths must be positive, got lx={lx}, ly={ly}"
        )));
    }
    if nx < 2 || ny < 2 {
        return Err(MeshError::InvalidArgument(format!(
            "need at least 2 cells per axis, got nx={nx}, ny={ny}"
        )));
    }
    let hx = lx / nx as f64;
    let hy = ly / ny as f64;
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(Cell {
                center: [(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy],
                measure: hx * hy,
            });
        }
    }
    let idx = |i: usize, j: usize| j * nx + i;
    let mut interior_edges = Vec::new();
    for j in 0..ny {
        for i in 0..nx - 1 {
            interior_edges.push(raw_interior_edge(&cells, idx(i, j), idx(i + 1, j), hy, [1.0, 0.0]));
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            interior_edges.push(raw_interior_edge(&cells, idx(i, j), idx(i, j + 1), hx, [0.0, 1.0]));
        }
    }
    let mut boundary_edges = Vec::new();
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge { cell: idx(0, j), measure: hy, distance: 0.5 * hx });
        boundary_edges.push(BoundaryEdge { cell: idx(nx - 1, j), measure: hy, distance: 0.5 * hx });
    }
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge { cell: idx(i, 0), measure: hx, distance: 0.5 * hy });
        boundary_edges.push(BoundaryEdge { cell: idx(i, ny - 1), measure: hx, distance: 0.5 * hy });
    }
    let mesh = Mesh {
        cells,
        interior_edges,
        boundary_edges,
        dimension: 2,
        structured: Some(StructuredInfo::Rectangle { lx, ly, nx, ny }),
    };
    mesh.validate(Some(lx * ly))?;
    Ok(mesh)
}

/// Derive all per-edge quantities from the two cell centers. The edge is
/// assumed to sit halfway between the centers (true for structured and
/// Voronoi-type meshes); the loader shares this reconstruction.
pub(crate) fn raw_interior_edge(
    cells: &[Cell],
    left: usize,
    right: usize,
    measure: f64,
    normal: [f64; 2],
) -> InteriorEdge {
    let d = center_distance(&cells[left], &cells[right]);
    InteriorEdge {
        left,
        right,
        measure,
        distance: d,
        transmissibility: measure / d,
        normal,
        diamond_measure: 0.5 * measure * d,
        dist_left: 0.5 * d,
        dist_right: 0.5 * d,
    }
}

pub(crate) fn center_distance(a: &Cell, b: &Cell) -> f64 {
    let dx = b.center[0] - a.center[0];
    let dy = b.center[1] - a.center[1];
    (dx * dx + dy * dy).sqrt()
}

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Total measure of the domain.
    pub fn domain_measure(&self) -> f64 {
        self.cells.iter().map(|c| c.measure).sum()
    }

    /// Neighbor lists over interior edges, each sorted ascending.
    pub fn cell_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.cells.len()];
        for e in &self.interior_edges {
            adj[e.left].push(e.right);
            adj[e.right].push(e.left);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Check every structural invariant; `expected_measure` adds the exact
    /// domain-measure test for constructed meshes.
    pub fn validate(&self, expected_measure: Option<f64>) -> Result<(), MeshError> {
        let n = self.cells.len();
        for (k, c) in self.cells.iter().enumerate() {
            if !(c.measure > 0.0) {
                return Err(MeshError::Validation(format!(
                    "cell {k} has nonpositive measure {}",
                    c.measure
                )));
            }
        }
        for (e, edge) in self.interior_edges.iter().enumerate() {
            if edge.left >= n || edge.right >= n || edge.left == edge.right {
                return Err(MeshError::Validation(format!(
                    "interior edge {e} references invalid cells {} | {}",
                    edge.left, edge.right
                )));
            }
            if !(edge.measure > 0.0) {
                return Err(MeshError::Validation(format!(
                    "interior edge {e} has nonpositive measure {}",
                    edge.measure
                )));
            }
            if !(edge.distance > 0.0) {
                return Err(MeshError::Validation(format!(
                    "interior edge {e} has nonpositive center distance {}",
                    edge.distance
                )));
            }
            let tau = edge.measure / edge.distance;
            if (edge.transmissibility - tau).abs() > 1e-14 * tau.abs() {
                return Err(MeshError::Validation(format!(
                    "interior edge {e} transmissibility {} disagrees with m/d = {tau}",
                    edge.transmissibility
                )));
            }
            let diamond = 0.5 * edge.measure * edge.distance;
            if (edge.diamond_measure - diamond).abs() > 1e-10 * diamond.max(1e-300) {
                return Err(MeshError::Validation(format!(
                    "interior edge {e} violates the dual-diamond identity: \
                     m(sigma) d_sigma = {} but 2 m(T) = {}",
                    edge.measure * edge.distance,
                    2.0 * edge.diamond_measure
                )));
            }
            let split = edge.dist_left + edge.dist_right;
            if (split - edge.distance).abs() > 1e-12 * edge.distance {
                return Err(MeshError::Validation(format!(
                    "interior edge {e}: center-to-edge distances {split} do not sum to d_sigma {}",
                    edge.distance
                )));
            }
            let norm = (edge.normal[0] * edge.normal[0] + edge.normal[1] * edge.normal[1]).sqrt();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(MeshError::Validation(format!(
                    "interior edge {e} normal is not unit length ({norm})"
                )));
            }
            // Admissibility: the normal must be the unit vector from the left
            // center to the right center.
            let a = &self.cells[edge.left];
            let b = &self.cells[edge.right];
            let dot = edge.normal[0] * (b.center[0] - a.center[0])
                + edge.normal[1] * (b.center[1] - a.center[1]);
            if (dot - edge.distance).abs() > 1e-10 * edge.distance {
                return Err(MeshError::Validation(format!(
                    "interior edge {e} is not orthogonal to the center segment \
                     (nu . (x_L - x_K) = {dot}, d_sigma = {})",
                    edge.distance
                )));
            }
        }
        for (e, edge) in self.boundary_edges.iter().enumerate() {
            if edge.cell >= n {
                return Err(MeshError::Validation(format!(
                    "boundary edge {e} references invalid cell {}",
                    edge.cell
                )));
            }
            if !(edge.measure > 0.0) || !(edge.distance > 0.0) {
                return Err(MeshError::Validation(format!(
                    "boundary edge {e} has nonpositive measure or distance"
                )));
            }
        }
        // The dual diamonds partition the domain, so their total measure must
        // reproduce the cell total.
        let cell_total = self.domain_measure();
        let diamond_total: f64 = if self.dimension == 1 {
            self.interior_edges.iter().map(|e| e.distance).sum::<f64>()
                + self.boundary_edges.iter().map(|e| e.distance).sum::<f64>()
        } else {
            self.interior_edges.iter().map(|e| e.diamond_measure).sum::<f64>()
                + self.boundary_edges.iter().map(|e| 0.5 * e.measure * e.distance).sum::<f64>()
        };
        if (diamond_total - cell_total).abs() > PARTITION_REL_TOL * cell_total {
            return Err(MeshError::Validation(format!(
                "dual-diamond identity violated: diamonds cover {diamond_total} \
                 but cells cover {cell_total}"
            )));
        }
        if let Some(expected) = expected_measure {
            if (cell_total - expected).abs() > MEASURE_REL_TOL * expected {
                return Err(MeshError::Validation(format!(
                    "cell measures sum to {cell_total}, expected {expected}"
                )));
            }
        }
        Ok(())
    }
}

/// Largest zeta such that d(x_K, sigma) >= zeta d_sigma for all cell-edge
/// pairs; boundary edges contribute ratio 1 by definition of d_sigma.
pub fn regularity_zeta(mesh: &Mesh) -> MeshRegularityReport {
    let mut zeta = 1.0f64;
    let mut worst_interior = None;
    let mut worst_boundary = None;
    for (e, edge) in mesh.interior_edges.iter().enumerate() {
        for ratio in [edge.dist_left / edge.distance, edge.dist_right / edge.distance] {
            if ratio < zeta {
                zeta = ratio;
                worst_interior = Some(e);
                worst_boundary = None;
            }
        }
    }
    // Boundary edges have d(x_K, sigma) = d_sigma exactly; they can only
    // matter for the report when no interior edge dips below 1.
    if worst_interior.is_none() && !mesh.boundary_edges.is_empty() {
        worst_boundary = Some(0);
    }
    MeshRegularityReport {
        zeta,
        worst_interior_edge: worst_interior,
        worst_boundary_edge: worst_boundary,
    }
}

const QUAD_SUBDIV: usize = 4;

/// Discretize pointwise initial data into per-cell averages via the midpoint
/// rule on a 4x-subdivided cell. Exact for piecewise-constant data aligned
/// with cell boundaries. Loaded meshes without structured metadata fall back
/// to a single center evaluation per cell.
pub fn cell_averages<F>(field: F, mesh: &Mesh, n_species: usize) -> Result<StateField, MeshError>
where
    F: Fn(f64, f64) -> Vec<f64>,
{
    let mut state = StateField::zeros(n_species, mesh.n_cells());
    let mut acc = vec![0.0; n_species];
    for k in 0..mesh.n_cells() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        let points = sample_points(mesh, k);
        let weight = 1.0 / points.len() as f64;
        for [x, y] in &points {
            let vals = field(*x, *y);
            if vals.len() != n_species {
                return Err(MeshError::InvalidArgument(format!(
                    "initial field returned {} components, expected {n_species}",
                    vals.len()
                )));
            }
            for (a, v) in acc.iter_mut().zip(vals.iter()) {
                *a += weight * v;
            }
        }
        let sum: f64 = acc.iter().sum();
        for (i, v) in acc.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(MeshError::Range(format!(
                    "cell {k} species {} average {v} leaves [0,1]",
                    i + 1
                )));
            }
        }
        if sum > 1.0 + 1e-12 {
            return Err(MeshError::Range(format!(
                "cell {k} species sum {sum} violates the volume-filling bound"
            )));
        }
        state.cell_mut(k).copy_from_slice(&acc);
    }
    Ok(state)
}

fn sample_points(mesh: &Mesh, k: usize) -> Vec<[f64; 2]> {
    match &mesh.structured {
        Some(StructuredInfo::Interval { a, b, n }) => {
            let h = (b - a) / *n as f64;
            let x0 = a + k as f64 * h;
            (0..QUAD_SUBDIV)
                .map(|m| [x0 + (m as f64 + 0.5) * h / QUAD_SUBDIV as f64, 0.0])
                .collect()
        }
        Some(StructuredInfo::Rectangle { lx, ly, nx, ny }) => {
            let hx = lx / *nx as f64;
            let hy = ly / *ny as f64;
            let (i, j) = (k % nx, k / nx);
            let (x0, y0) = (i as f64 * hx, j as f64 * hy);
            let mut pts = Vec::with_capacity(QUAD_SUBDIV * QUAD_SUBDIV);
            for mj in 0..QUAD_SUBDIV {
                for mi in 0..QUAD_SUBDIV {
                    pts.push([
                        x0 + (mi as f64 + 0.5) * hx / QUAD_SUBDIV as f64,
                        y0 + (mj as f64 + 0.5) * hy / QUAD_SUBDIV as f64,
                    ]);
                }
            }
            pts
        }
        None => vec![mesh.cells[k].center],
    }
}
