//! Entropy, mass, and norm functionals plus the estimators used by the
//! convergence and long-time experiment harnesses.

use std::fmt;

use crate::edge::EdgeState;
use crate::entropy::EntropySpec;
use crate::mesh::{Mesh, StructuredInfo};
use crate::state::{solvent_fraction, StateField};

#[derive(Debug, Clone)]
pub enum DiagnosticsError {
    Domain(String),
    MeshMismatch(String),
    NotNested(String),
    SingularEdge { edge: usize, species: usize },
    BadSeries(String),
}

impl fmt::Display for DiagnosticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticsError::Domain(m) => write!(f, "domain error: {m}"),
            DiagnosticsError::MeshMismatch(m) => write!(f, "mesh mismatch: {m}"),
            DiagnosticsError::NotNested(m) => write!(f, "meshes are not nested: {m}"),
            DiagnosticsError::SingularEdge { edge, species } => write!(
                f,
                "dissipation is singular on edge {edge}, species {species}: \
                 zero mean with a nonzero jump"
            ),
            DiagnosticsError::BadSeries(m) => write!(f, "bad series: {m}"),
        }
    }
}

impl std::error::Error for DiagnosticsError {}

/// Total entropy sum_K m(K) h(u_K), with the density extended continuously
/// to states touching the boundary of the simplex.
pub fn discrete_entropy(state: &StateField, mesh: &Mesh, entropy: &EntropySpec) -> f64 {
    let n = state.n_species();
    let mut total = 0.0;
    for (k, cell) in mesh.cells.iter().enumerate() {
        let u = state.cell(k);
        let mut h = entropy.species(0).h(solvent_fraction(u));
        for i in 0..n {
            h += entropy.species(i + 1).h(u[i]);
        }
        total += cell.measure * h;
    }
    total
}

/// Relative entropy sum_i sum_K m(K) (u_i ln(u_i/s_i) + s_i - u_i) against a
/// strictly interior steady state `steady` (species only; the solvent
/// component is derived). Nonnegative, zero exactly at the steady state.
pub fn relative_entropy(
    state: &StateField,
    mesh: &Mesh,
    steady: &[f64],
) -> Result<f64, DiagnosticsError> {
    let n = state.n_species();
    if steady.len() != n {
        return Err(DiagnosticsError::Domain(format!(
            "steady state has {} species, state has {n}",
            steady.len()
        )));
    }
    let s0 = 1.0 - steady.iter().sum::<f64>();
    let mut full = Vec::with_capacity(n + 1);
    full.push(s0);
    full.extend_from_slice(steady);
    if full.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(DiagnosticsError::Domain(format!(
            "steady state must be strictly interior, got {full:?}"
        )));
    }
    let mut total = 0.0;
    for (k, cell) in mesh.cells.iter().enumerate() {
        let u = state.cell(k);
        let mut cell_sum = bregman(solvent_fraction(u), full[0]);
        for i in 0..n {
            cell_sum += bregman(u[i], full[i + 1]);
        }
        total += cell.measure * cell_sum;
    }
    Ok(total)
}

fn bregman(u: f64, s: f64) -> f64 {
    let log_term = if u == 0.0 { 0.0 } else { u * (u / s).ln() };
    log_term + s - u
}

/// Unweighted dissipation sum_i sum_edges tau u_sigma^(2(s-1)) (D u_i)^2 over
/// the species (solvent excluded). A zero mean contributes nothing when the
/// jump is zero and is singular otherwise; `s = 1` weights every edge by one.
pub fn entropy_dissipation(
    state: &StateField,
    edge_state: &EdgeState,
    mesh: &Mesh,
    exponent_s: f64,
) -> Result<f64, DiagnosticsError> {
    let n = state.n_species();
    let mut total = 0.0;
    for (e, edge) in mesh.interior_edges.iter().enumerate() {
        let means = edge_state.means(e);
        let uk = state.cell(edge.left);
        let ul = state.cell(edge.right);
        for i in 0..n {
            let jump = ul[i] - uk[i];
            let mean = means[1 + i];
            let weight = if exponent_s == 1.0 {
                1.0
            } else if mean == 0.0 {
                if jump == 0.0 {
                    continue;
                }
                return Err(DiagnosticsError::SingularEdge { edge: e, species: i + 1 });
            } else {
                mean.powf(2.0 * (exponent_s - 1.0))
            };
            total += edge.transmissibility * weight * jump * jump;
        }
    }
    Ok(total)
}

/// Discrete H1 seminorm sqrt(sum_edges tau (D v)^2); boundary edges carry a
/// zero jump and contribute nothing.
pub fn h1_seminorm(values: &[f64], mesh: &Mesh) -> f64 {
    let mut total = 0.0;
    for edge in &mesh.interior_edges {
        let d = values[edge.right] - values[edge.left];
        total += edge.transmissibility * d * d;
    }
    total.sqrt()
}

/// Measure-weighted restriction of a fine state onto a coarser nested mesh.
/// Both meshes must come from the structured constructors with identical
/// bounds and commensurate resolutions.
pub fn coarsen(
    fine_state: &StateField,
    fine_mesh: &Mesh,
    coarse_mesh: &Mesh,
) -> Result<StateField, DiagnosticsError> {
    let map = nesting_map(fine_mesh, coarse_mesh)?;
    let n = fine_state.n_species();
    let mut out = StateField::zeros(n, coarse_mesh.n_cells());
    for (fine_cell, &coarse_cell) in map.iter().enumerate() {
        let w = fine_mesh.cells[fine_cell].measure;
        let u = fine_state.cell(fine_cell);
        for i in 0..n {
            out.cell_mut(coarse_cell)[i] += w * u[i];
        }
    }
    for (k, cell) in coarse_mesh.cells.iter().enumerate() {
        for v in out.cell_mut(k) {
            *v /= cell.measure;
        }
    }
    out.set_time(fine_state.time());
    Ok(out)
}

fn nesting_map(fine: &Mesh, coarse: &Mesh) -> Result<Vec<usize>, DiagnosticsError> {
    match (&fine.structured, &coarse.structured) {
        (
            Some(StructuredInfo::Interval { a, b, n: nf }),
            Some(StructuredInfo::Interval { a: a2, b: b2, n: nc }),
        ) => {
            if a != a2 || b != b2 {
                return Err(DiagnosticsError::NotNested(
                    "interval bounds differ".into(),
                ));
            }
            if nf % nc != 0 {
                return Err(DiagnosticsError::NotNested(format!(
                    "{nf} fine cells are not a multiple of {nc} coarse cells"
                )));
            }
            let ratio = nf / nc;
            Ok((0..*nf).map(|i| i / ratio).collect())
        }
        (
            Some(StructuredInfo::Rectangle { lx, ly, nx: fx, ny: fy }),
            Some(StructuredInfo::Rectangle { lx: lx2, ly: ly2, nx: cx, ny: cy }),
        ) => {
            if lx != lx2 || ly != ly2 {
                return Err(DiagnosticsError::NotNested("rectangle bounds differ".into()));
            }
            if fx % cx != 0 || fy % cy != 0 {
                return Err(DiagnosticsError::NotNested(format!(
                    "({fx}, {fy}) fine cells are not multiples of ({cx}, {cy})"
                )));
            }
            let (rx, ry) = (fx / cx, fy / cy);
            let mut map = Vec::with_capacity(fx * fy);
            for j in 0..*fy {
                for i in 0..*fx {
                    map.push((j / ry) * cx + i / rx);
                }
            }
            Ok(map)
        }
        _ => Err(DiagnosticsError::NotNested(
            "coarsening requires structured meshes of the same kind".into(),
        )),
    }
}

/// Per-species L1 distances sum_K m(K) |a - b| and their total.
pub fn l1_error(
    a: &StateField,
    b: &StateField,
    mesh: &Mesh,
) -> Result<(Vec<f64>, f64), DiagnosticsError> {
    if a.n_cells() != b.n_cells() || a.n_species() != b.n_species() {
        return Err(DiagnosticsError::MeshMismatch(format!(
            "states have shapes {}x{} and {}x{}",
            a.n_cells(),
            a.n_species(),
            b.n_cells(),
            b.n_species()
        )));
    }
    if a.n_cells() != mesh.n_cells() {
        return Err(DiagnosticsError::MeshMismatch(
            "states do not match the mesh".into(),
        ));
    }
    let n = a.n_species();
    let mut per = vec![0.0; n];
    for (k, cell) in mesh.cells.iter().enumerate() {
        for i in 0..n {
            per[i] += cell.measure * (a.cell(k)[i] - b.cell(k)[i]).abs();
        }
    }
    let total = per.iter().sum();
    Ok((per, total))
}

/// Observed orders log(e_j/e_{j+1}) / log(h_j/h_{j+1}) for consecutive pairs
/// of (mesh size, error) entries with strictly decreasing sizes.
pub fn convergence_orders(errors: &[(f64, f64)]) -> Result<Vec<f64>, DiagnosticsError> {
    if errors.len() < 2 {
        return Err(DiagnosticsError::BadSeries(
            "need at least two resolutions".into(),
        ));
    }
    for w in errors.windows(2) {
        if !(w[1].0 < w[0].0) {
            return Err(DiagnosticsError::BadSeries(
                "mesh sizes must decrease strictly".into(),
            ));
        }
    }
    if errors.iter().any(|&(_, e)| !(e > 0.0)) {
        return Err(DiagnosticsError::BadSeries("errors must be positive".into()));
    }
    Ok(errors
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect())
}

/// Exponential-decay fit of a positive series.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Decay rate (negated slope of the log-linear fit).
    pub lambda: f64,
    /// Intercept of the log-linear fit.
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Least-squares fit of log(value) against t over `window` (defaults to the
/// second half of the series, past the initial transient).
pub fn decay_fit(
    series: &[(f64, f64)],
    window: Option<(f64, f64)>,
) -> Result<DecayFit, DiagnosticsError> {
    if series.len() < 3 {
        return Err(DiagnosticsError::BadSeries("need at least 3 points".into()));
    }
    let window = window.unwrap_or_else(|| {
        let t0 = series.first().unwrap().0;
        let t1 = series.last().unwrap().0;
        (0.5 * (t0 + t1), t1)
    });
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .copied()
        .collect();
    if pts.len() < 3 {
        return Err(DiagnosticsError::BadSeries(format!(
            "only {} points inside the fit window",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(DiagnosticsError::BadSeries(format!(
            "nonpositive entropy {v} at t={t} inside the fit window"
        )));
    }
    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, v) in &pts {
        sxx += (t - mean_t) * (t - mean_t);
        sxy += (t - mean_t) * (v.ln() - mean_y);
    }
    if sxx == 0.0 {
        return Err(DiagnosticsError::BadSeries(
            "all points share one time coordinate".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (t, v) in &pts {
        let y = v.ln();
        ss_res += (y - (intercept + slope * t)) * (y - (intercept + slope * t));
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(DecayFit { lambda: -slope, intercept, r_squared, window })
}

/// Steady state of the two-species recombination system with rate 1000 and
/// conserved masses 9/44 and 2/11: the closed-form root that keeps both
/// species nonnegative.
pub fn thin_film_steady_state() -> [f64; 2] {
    let alpha = (-5.0 * 206530f64.sqrt() + 4504.0) / 10956.0;
    [9.0 / 44.0 - alpha, 2.0 / 11.0 + 2.0 * alpha]
}
