//! Residual and Jacobian assembly for the implicit Euler two-point scheme.
//!
//! The residual of cell K and species i is
//!
//! ```text
//! m(K) (u_new - u_old) / dt  +  sum_{edges of K} F_{i,K,sigma}  -  m(K) f_i(u_K)
//! F_{i,K,sigma} = - tau_sigma sum_j A_{ij}(u_sigma) (u_{j,L} - u_{j,K})
//! ```
//!
//! with the coefficient matrix evaluated at the per-edge mean vector of the
//! *new* state. Boundary edges carry no flux. Each interior flux is computed
//! once and added to both adjacent rows with opposite signs, so the discrete
//! local balance F_{i,K,sigma} + F_{i,L,sigma} = 0 holds exactly in floating
//! point.

use nalgebra::DMatrix;

use super::SolveError;
use crate::edge::compute_edge_state_permissive;
use crate::linalg::{distance2_coloring, reverse_cuthill_mckee, BandedMatrix, BandedLu, LinalgError};
use crate::mesh::Mesh;
use crate::models::Model;
use crate::state::StateField;

/// Forward-difference increment for one unknown.
pub fn fd_increment(u: f64) -> f64 {
    (1e-8f64).max(1e-8 * u.abs())
}

/// Assemble the scheme residual into `out` (cell-major, n unknowns per cell).
///
/// Out-of-range trial states (small negative entries, oversaturated sums)
/// are evaluated through the zero-branch extension of the edge means, so
/// Newton iterates and difference probes never fail on excursions; the
/// result on admissible states is unaffected.
pub fn assemble_residual(
    u_new: &StateField,
    u_old: &StateField,
    dt: f64,
    mesh: &Mesh,
    model: &Model,
    out: &mut [f64],
) -> Result<(), SolveError> {
    let n = model.n_species();
    debug_assert_eq!(u_new.n_cells(), mesh.n_cells());
    debug_assert_eq!(out.len(), n * mesh.n_cells());

    let edges = compute_edge_state_permissive(mesh, u_new, model.entropy())?;

    for (k, cell) in mesh.cells.iter().enumerate() {
        let un = u_new.cell(k);
        let uo = u_old.cell(k);
        let scale = cell.measure / dt;
        for i in 0..n {
            out[k * n + i] = scale * (un[i] - uo[i]);
        }
    }

    let mut a = vec![0.0; n * n];
    for (e, edge) in mesh.interior_edges.iter().enumerate() {
        model.a_sigma(edges.means(e), &mut a)?;
        let uk = u_new.cell(edge.left);
        let ul = u_new.cell(edge.right);
        for i in 0..n {
            let mut flux = 0.0;
            for j in 0..n {
                flux -= a[i * n + j] * (ul[j] - uk[j]);
            }
            flux *= edge.transmissibility;
            out[edge.left * n + i] += flux;
            out[edge.right * n + i] -= flux;
        }
    }

    if model.has_source() {
        let mut rates = vec![0.0; n];
        for (k, cell) in mesh.cells.iter().enumerate() {
            model.source(u_new.cell(k), &mut rates);
            for i in 0..n {
                out[k * n + i] -= cell.measure * rates[i];
            }
        }
    }
    Ok(())
}

/// Mesh-derived data reused across Jacobian assemblies: adjacency, closed
/// neighborhoods, a distance-2 coloring of the cells, and a bandwidth-
/// reducing cell ordering.
#[derive(Clone, Debug)]
pub struct JacobianStencil {
    n_species: usize,
    closed_neighborhoods: Vec<Vec<usize>>,
    color_classes: Vec<Vec<usize>>,
    cell_perm: Vec<usize>,
    band: usize,
}

impl JacobianStencil {
    pub fn new(mesh: &Mesh, n_species: usize) -> Self {
        let adj = mesh.cell_adjacency();
        let colors = distance2_coloring(&adj);
        let n_colors = colors.iter().copied().max().map_or(0, |c| c + 1);
        let mut color_classes = vec![Vec::new(); n_colors];
        for (cell, &c) in colors.iter().enumerate() {
            color_classes[c].push(cell);
        }
        let cell_perm = reverse_cuthill_mckee(&adj);
        let mut max_jump = 0usize;
        for e in &mesh.interior_edges {
            max_jump = max_jump.max(cell_perm[e.left].abs_diff(cell_perm[e.right]));
        }
        let band = n_species * max_jump + n_species - 1;
        let closed_neighborhoods = adj
            .into_iter()
            .enumerate()
            .map(|(v, mut nbrs)| {
                nbrs.push(v);
                nbrs.sort_unstable();
                nbrs
            })
            .collect();
        JacobianStencil {
            n_species,
            closed_neighborhoods,
            color_classes,
            cell_perm,
            band,
        }
    }

    pub fn n_colors(&self) -> usize {
        self.color_classes.len()
    }

    pub fn bandwidth(&self) -> usize {
        self.band
    }

    fn unknown(&self, cell: usize, species: usize) -> usize {
        self.cell_perm[cell] * self.n_species + species
    }
}

/// Finite-difference Jacobian in banded storage under the stencil's cell
/// ordering. `get`/`to_dense` answer in natural (cell-major) indices.
pub struct SparseJacobian {
    n_species: usize,
    cell_perm: Vec<usize>,
    banded: BandedMatrix,
}

impl SparseJacobian {
    pub fn n_unknowns(&self) -> usize {
        self.banded.n()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let n = self.n_species;
        let r = self.cell_perm[row / n] * n + row % n;
        let c = self.cell_perm[col / n] * n + col % n;
        self.banded.get(r, c)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.n_unknowns();
        DMatrix::from_fn(m, m, |i, j| self.get(i, j))
    }

    pub fn factor(self) -> Result<FactoredJacobian, LinalgError> {
        Ok(FactoredJacobian {
            n_species: self.n_species,
            cell_perm: self.cell_perm,
            lu: self.banded.lu()?,
        })
    }
}

pub struct FactoredJacobian {
    n_species: usize,
    cell_perm: Vec<usize>,
    lu: BandedLu,
}

impl FactoredJacobian {
    /// Solve J x = rhs with both vectors in natural ordering.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n_species;
        let mut permuted = vec![0.0; rhs.len()];
        for (idx, &v) in rhs.iter().enumerate() {
            permuted[self.cell_perm[idx / n] * n + idx % n] = v;
        }
        self.lu.solve_in_place(&mut permuted);
        let mut out = vec![0.0; rhs.len()];
        for idx in 0..rhs.len() {
            out[idx] = permuted[self.cell_perm[idx / n] * n + idx % n];
        }
        out
    }
}

/// Colored forward-difference Jacobian of [`assemble_residual`] with respect
/// to `u_new`. Cells of one color are at pairwise distance three or more, so
/// perturbing one species on all of them at once still yields columns that
/// are bitwise identical to one-at-a-time differencing.
pub fn assemble_jacobian(
    u_new: &StateField,
    u_old: &StateField,
    dt: f64,
    mesh: &Mesh,
    model: &Model,
    stencil: &JacobianStencil,
) -> Result<SparseJacobian, SolveError> {
    let n = model.n_species();
    let m = n * mesh.n_cells();
    let mut banded = BandedMatrix::zeros(m, stencil.band, stencil.band);

    let mut base = vec![0.0; m];
    assemble_residual(u_new, u_old, dt, mesh, model, &mut base)?;

    let mut probe = u_new.clone();
    let mut r = vec![0.0; m];
    for class in &stencil.color_classes {
        for j in 0..n {
            let mut eps = Vec::with_capacity(class.len());
            for &cell in class {
                let v = probe.cell(cell)[j];
                let e = fd_increment(v);
                probe.cell_mut(cell)[j] = v + e;
                eps.push((cell, v, e));
            }
            assemble_residual(&probe, u_old, dt, mesh, model, &mut r)?;
            for &(cell, original, e) in &eps {
                let col = stencil.unknown(cell, j);
                for &k in &stencil.closed_neighborhoods[cell] {
                    for i in 0..n {
                        let natural = k * n + i;
                        let row = stencil.unknown(k, i);
                        banded.set(row, col, (r[natural] - base[natural]) / e);
                    }
                }
                probe.cell_mut(cell)[j] = original;
            }
        }
    }
    Ok(SparseJacobian {
        n_species: n,
        cell_perm: stencil.cell_perm.clone(),
        banded,
    })
}

/// Dense finite-difference oracle: one unknown perturbed per evaluation with
/// the same increments as the colored path. Quadratic cost; test use only.
pub fn dense_fd_jacobian(
    u_new: &StateField,
    u_old: &StateField,
    dt: f64,
    mesh: &Mesh,
    model: &Model,
) -> Result<DMatrix<f64>, SolveError> {
    let n = model.n_species();
    let m = n * mesh.n_cells();
    let mut base = vec![0.0; m];
    assemble_residual(u_new, u_old, dt, mesh, model, &mut base)?;
    let mut jac = DMatrix::zeros(m, m);
    let mut probe = u_new.clone();
    let mut r = vec![0.0; m];
    for col in 0..m {
        let (cell, j) = (col / n, col % n);
        let v = probe.cell(cell)[j];
        let e = fd_increment(v);
        probe.cell_mut(cell)[j] = v + e;
        assemble_residual(&probe, u_old, dt, mesh, model, &mut r)?;
        for row in 0..m {
            jac[(row, col)] = (r[row] - base[row]) / e;
        }
        probe.cell_mut(cell)[j] = v;
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, BoundaryEdge, Cell, Mesh};
    use crate::models::{make_thin_film, make_two_species_euler_limit};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_cell_state() -> StateField {
        let mut s = StateField::zeros(2, 2);
        s.cell_mut(0).copy_from_slice(&[0.6, 0.2]);
        s.cell_mut(1).copy_from_slice(&[0.1, 0.5]);
        s
    }

    #[test]
    fn constant_state_has_zero_residual() {
        let mesh = build_interval_mesh(0.0, 1.0, 6).unwrap();
        let model = make_two_species_euler_limit();
        let s = StateField::constant(6, &[0.3, 0.25]);
        let mut r = vec![1.0; 12];
        assemble_residual(&s, &s, 1e-3, &mesh, &model, &mut r).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_cell_frozen_residual() {
        // Flux fixed by an independent 50-digit evaluation; the time term
        // vanishes because old and new states coincide.
        let mesh = build_interval_mesh(0.0, 1.0, 2).unwrap();
        let model = make_two_species_euler_limit();
        let s = two_cell_state();
        let mut r = vec![0.0; 4];
        assemble_residual(&s, &s, 0.1, &mesh, &model, &mut r).unwrap();
        assert!((r[0] - 8.75282725749004897e-1).abs() < 1e-14);
        assert!((r[1] + 7.46326934896613392e-1).abs() < 1e-14);
        assert_eq!(r[2], -r[0]);
        assert_eq!(r[3], -r[1]);
    }

    #[test]
    fn interior_fluxes_cancel_in_the_total() {
        // Summing rows over cells leaves only time and source terms.
        let mesh = build_interval_mesh(0.0, 1.0, 9).unwrap();
        let model = make_two_species_euler_limit();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let mut s = StateField::zeros(2, 9);
            for k in 0..9 {
                let u = crate::models::sample_simplex_interior(&mut rng, 2);
                s.cell_mut(k).copy_from_slice(&u);
            }
            let mut r = vec![0.0; 18];
            assemble_residual(&s, &s, 1e-2, &mesh, &model, &mut r).unwrap();
            for i in 0..2 {
                let total: f64 = (0..9).map(|k| r[k * 2 + i]).sum();
                assert!(total.abs() < 1e-13, "species {i} total {total}");
            }
        }
    }

    #[test]
    fn jacobian_matches_dense_oracle_exactly() {
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let model = make_two_species_euler_limit();
        let mut s = StateField::zeros(2, 4);
        for (k, vals) in [[0.6, 0.2], [0.1, 0.5], [0.3, 0.3], [0.05, 0.9]].iter().enumerate() {
            s.cell_mut(k).copy_from_slice(vals);
        }
        let old = StateField::constant(4, &[0.25, 0.25]);
        let stencil = JacobianStencil::new(&mesh, 2);
        let colored = assemble_jacobian(&s, &old, 1e-3, &mesh, &model, &stencil).unwrap();
        let dense = dense_fd_jacobian(&s, &old, 1e-3, &mesh, &model).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(colored.get(i, j), dense[(i, j)], "entry ({i}, {j})");
            }
        }
    }

    #[test]
    fn decoupled_model_gives_block_diagonal_jacobian() {
        let mesh = build_interval_mesh(0.0, 1.0, 5).unwrap();
        let model = make_thin_film(vec![vec![0.8; 3]; 3]).unwrap();
        let s = StateField::constant(5, &[0.3, 0.4]);
        let old = s.clone();
        let stencil = JacobianStencil::new(&mesh, 2);
        let jac = assemble_jacobian(&s, &old, 1e-4, &mesh, &model, &stencil).unwrap();
        for row in 0..10 {
            for col in 0..10 {
                if row % 2 != col % 2 {
                    assert!(
                        jac.get(row, col).abs() <= 1e-6,
                        "cross-species coupling at ({row}, {col}): {}",
                        jac.get(row, col)
                    );
                }
            }
        }
    }

    #[test]
    fn single_cell_jacobian_is_mass_over_dt() {
        // One cell, no interior edges: the residual reduces to the time term.
        let mesh = Mesh {
            cells: vec![Cell { center: [0.5, 0.0], measure: 1.0 }],
            interior_edges: vec![],
            boundary_edges: vec![
                BoundaryEdge { cell: 0, measure: 1.0, distance: 0.5 },
                BoundaryEdge { cell: 0, measure: 1.0, distance: 0.5 },
            ],
            dimension: 1,
            structured: None,
        };
        mesh.validate(Some(1.0)).unwrap();
        let model = make_two_species_euler_limit();
        let s = StateField::constant(1, &[0.3, 0.3]);
        let dt = 2e-3;
        let stencil = JacobianStencil::new(&mesh, 2);
        let jac = assemble_jacobian(&s, &s, dt, &mesh, &model, &stencil).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 / dt } else { 0.0 };
                // Forward differencing of the exactly linear time term.
                assert!(
                    (jac.get(i, j) - want).abs() <= 1e-4 * (1.0 / dt),
                    "({i},{j}) = {}",
                    jac.get(i, j)
                );
            }
        }
    }

    #[test]
    fn factored_jacobian_solves_newton_system() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let model = make_two_species_euler_limit();
        let s = StateField::constant(8, &[0.3, 0.2]);
        let mut pert = s.clone();
        pert.cell_mut(3)[0] = 0.4;
        let stencil = JacobianStencil::new(&mesh, 2);
        let jac = assemble_jacobian(&pert, &s, 1e-4, &mesh, &model, &stencil).unwrap();
        let dense = jac.to_dense();
        let rhs: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = jac.factor().unwrap().solve(&rhs);
        let back = dense * nalgebra::DVector::from_vec(x);
        for i in 0..16 {
            assert!((back[i] - rhs[i]).abs() < 1e-9 * rhs[i].abs().max(1.0));
        }
    }
}
