//! Per-cell concentration vectors at one time level.

use crate::mesh::Mesh;

/// Tolerance on the volume-filling sum for accepted states.
pub const ADMISSIBLE_SUM_TOL: f64 = 1e-12;

/// Concentrations of the free species on every cell, stored cell-major.
/// The solvent fraction is derived, never stored.
#[derive(Clone, Debug)]
pub struct StateField {
    n_species: usize,
    time: f64,
    data: Vec<f64>,
}

impl StateField {
    pub fn zeros(n_species: usize, n_cells: usize) -> Self {
        StateField {
            n_species,
            time: 0.0,
            data: vec![0.0; n_species * n_cells],
        }
    }

    /// Same value vector on every cell.
    pub fn constant(n_cells: usize, values: &[f64]) -> Self {
        let mut data = Vec::with_capacity(values.len() * n_cells);
        for _ in 0..n_cells {
            data.extend_from_slice(values);
        }
        StateField {
            n_species: values.len(),
            time: 0.0,
            data,
        }
    }

    pub fn from_data(n_species: usize, data: Vec<f64>) -> Self {
        assert!(n_species > 0 && data.len() % n_species == 0);
        StateField {
            n_species,
            time: 0.0,
            data,
        }
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn n_cells(&self) -> usize {
        self.data.len() / self.n_species
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn cell(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_species..(k + 1) * self.n_species]
    }

    pub fn cell_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n_species..(k + 1) * self.n_species]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Derived solvent fraction 1 - sum(u), clamped at zero.
    pub fn solvent(&self, k: usize) -> f64 {
        solvent_fraction(self.cell(k))
    }

    /// All entries in [0,1] and per-cell sums at most 1 + `sum_tol`.
    pub fn is_admissible(&self, sum_tol: f64) -> bool {
        (0..self.n_cells()).all(|k| {
            let c = self.cell(k);
            c.iter().all(|&v| (0.0..=1.0).contains(&v)) && c.iter().sum::<f64>() <= 1.0 + sum_tol
        })
    }

    /// Smallest species concentration over all cells (solvent excluded).
    pub fn min_concentration(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest per-cell sum of species concentrations.
    pub fn max_volume_sum(&self) -> f64 {
        (0..self.n_cells())
            .map(|k| self.cell(k).iter().sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Per-species totals sum_K m(K) u_{i,K}.
    pub fn masses(&self, mesh: &Mesh) -> Vec<f64> {
        let mut m = vec![0.0; self.n_species];
        for (k, cell) in mesh.cells.iter().enumerate() {
            for (i, v) in self.cell(k).iter().enumerate() {
                m[i] += cell.measure * v;
            }
        }
        m
    }
}

/// Solvent fraction 1 - sum(u) clamped into [0,1]. Oversaturated sums map to
/// exactly zero, which routes the solvent to the zero branch of the edge
/// means; Newton trial states and difference probes rely on this extension.
pub fn solvent_fraction(u: &[f64]) -> f64 {
    (1.0 - u.iter().sum::<f64>()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;

    #[test]
    fn solvent_is_clamped() {
        assert_eq!(solvent_fraction(&[0.8, 0.2]), 0.0);
        assert!((solvent_fraction(&[0.3, 0.3]) - 0.4).abs() < 1e-15);
        assert_eq!(solvent_fraction(&[0.5, 0.5 + 1e-9]), 0.0);
    }

    #[test]
    fn masses_weigh_by_cell_measure() {
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let mut s = StateField::zeros(2, 4);
        s.cell_mut(0).copy_from_slice(&[0.8, 0.2]);
        s.cell_mut(1).copy_from_slice(&[0.8, 0.2]);
        s.cell_mut(2).copy_from_slice(&[0.0, 0.2]);
        s.cell_mut(3).copy_from_slice(&[0.0, 0.2]);
        let m = s.masses(&mesh);
        assert!((m[0] - 0.4).abs() < 1e-15);
        assert!((m[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn admissibility_bounds() {
        let ok = StateField::constant(3, &[0.4, 0.6]);
        assert!(ok.is_admissible(ADMISSIBLE_SUM_TOL));
        let over = StateField::constant(3, &[0.5, 0.6]);
        assert!(!over.is_admissible(ADMISSIBLE_SUM_TOL));
        let neg = StateField::constant(3, &[-0.1, 0.3]);
        assert!(!neg.is_admissible(ADMISSIBLE_SUM_TOL));
    }
}
