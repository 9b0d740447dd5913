//! Damped Newton iteration for one implicit Euler step.

use super::scheme::{assemble_jacobian, assemble_residual, JacobianStencil};
use super::stepping::SolverConfig;
use super::SolveError;
use crate::mesh::Mesh;
use crate::models::Model;
use crate::state::{StateField, ADMISSIBLE_SUM_TOL};

#[derive(Debug, Clone, Copy)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Converged entries this far below zero are solver noise (the residual can
/// no longer see them) and snap back to the boundary.
const ACCEPT_PROJECTION_TOL: f64 = 1e-14;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Solve the implicit Euler step starting from `u_old`. Each iterate solves
/// the sparse linearized system directly and applies the full update when it
/// evaluates to a finite residual, halving it otherwise down to the damping
/// floor. Iterates may leave the admissible set transiently (the means route
/// nonpositive values to their zero branch); the converged state must be
/// admissible or the step is rejected. Residual errors at the base point
/// propagate to the caller.
pub fn newton_solve(
    u_old: &StateField,
    dt: f64,
    mesh: &Mesh,
    model: &Model,
    config: &SolverConfig,
) -> Result<(StateField, NewtonStats), SolveError> {
    let stencil = JacobianStencil::new(mesh, model.n_species());
    newton_solve_with(&stencil, u_old, dt, mesh, model, config)
}

pub(crate) fn newton_solve_with(
    stencil: &JacobianStencil,
    u_old: &StateField,
    dt: f64,
    mesh: &Mesh,
    model: &Model,
    config: &SolverConfig,
) -> Result<(StateField, NewtonStats), SolveError> {
    let n = model.n_species();
    let m = n * mesh.n_cells();
    let mut u = u_old.clone();
    let mut residual = vec![0.0; m];
    assemble_residual(&u, u_old, dt, mesh, model, &mut residual)?;

    let mut norm = max_abs(&residual);
    for iter in 1..=config.newton_max_iter {
        if norm <= config.newton_tol {
            for v in u.data_mut() {
                if *v < 0.0 && *v >= -ACCEPT_PROJECTION_TOL {
                    *v = 0.0;
                }
            }
            if !u.is_admissible(ADMISSIBLE_SUM_TOL) {
                return Err(SolveError::NewtonDiverged { iterations: iter, residual_norm: norm });
            }
            u.set_time(u_old.time() + dt);
            return Ok((u, NewtonStats { iterations: iter, residual_norm: norm }));
        }
        if iter == config.newton_max_iter {
            break;
        }
        let jac = assemble_jacobian(&u, u_old, dt, mesh, model, stencil)?;
        let factored = jac.factor()?;
        let mut rhs = residual.clone();
        rhs.iter_mut().for_each(|v| *v = -*v);
        let delta = factored.solve(&rhs);

        let mut lambda = 1.0;
        let mut trial = u.clone();
        loop {
            for (t, (base, d)) in trial
                .data_mut()
                .iter_mut()
                .zip(u.data().iter().zip(delta.iter()))
            {
                *t = base + lambda * d;
            }
            match assemble_residual(&trial, u_old, dt, mesh, model, &mut residual) {
                Ok(()) if residual.iter().all(|v| v.is_finite()) => break,
                // Singular model denominators and nonfinite residuals mark
                // trials outside the solvable region; damp them away.
                Ok(()) | Err(SolveError::Model(_)) | Err(SolveError::Edge(_)) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
            if lambda < config.damping_min {
                return Err(SolveError::NewtonDiverged { iterations: iter, residual_norm: norm });
            }
        }
        std::mem::swap(&mut u, &mut trial);
        norm = max_abs(&residual);
    }
    Err(SolveError::NewtonDiverged {
        iterations: config.newton_max_iter,
        residual_norm: norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;
    use crate::models::{make_maxwell_stefan, make_two_species_euler_limit};
    use crate::solver::stepping::SolverConfig;

    fn paper_model() -> crate::models::Model {
        make_maxwell_stefan(1.0 / 0.168, 1.0 / 0.68, 1.0 / 0.883).unwrap()
    }

    #[test]
    fn constant_state_converges_in_one_iteration() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let model = make_two_species_euler_limit();
        let u = StateField::constant(8, &[0.3, 0.25]);
        let config = SolverConfig::default();
        let (next, stats) = newton_solve(&u, 1e-4, &mesh, &model, &config).unwrap();
        assert_eq!(stats.iterations, 1);
        assert_eq!(stats.residual_norm, 0.0);
        assert_eq!(next.data(), u.data());
        assert!((next.time() - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn step_from_discontinuous_datum_converges() {
        let mesh = build_interval_mesh(0.0, 1.0, 40).unwrap();
        let model = paper_model();
        let mut u = StateField::zeros(2, 40);
        for k in 0..40 {
            let u1 = if k < 20 { 0.8 } else { 0.0 };
            u.cell_mut(k).copy_from_slice(&[u1, 0.2]);
        }
        let config = SolverConfig::default();
        let (next, stats) = newton_solve(&u, 1e-5, &mesh, &model, &config).unwrap();
        assert!(stats.residual_norm <= 1e-10);
        assert!(next.is_admissible(1e-12));
        assert!(next.min_concentration() > 0.0, "positivity after one step");
        assert!(next.max_volume_sum() <= 1.0 + 1e-12);
    }

    #[test]
    fn absurd_time_step_diverges() {
        let mesh = build_interval_mesh(0.0, 1.0, 16).unwrap();
        let model = paper_model();
        let mut u = StateField::zeros(2, 16);
        for k in 0..16 {
            let u1 = if k < 8 { 0.8 } else { 0.0 };
            u.cell_mut(k).copy_from_slice(&[u1, 0.2]);
        }
        let config = SolverConfig::default();
        let err = newton_solve(&u, 1e30, &mesh, &model, &config).unwrap_err();
        assert!(matches!(err, SolveError::NewtonDiverged { .. }), "got {err}");
    }
}
