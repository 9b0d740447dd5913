//! Time-stepping drivers: fixed-step and adaptive implicit Euler.

use super::newton::{newton_solve_with, NewtonStats};
use super::scheme::JacobianStencil;
use super::SolveError;
use crate::diagnostics::{discrete_entropy, entropy_dissipation, relative_entropy};
use crate::edge::compute_edge_state;
use crate::mesh::Mesh;
use crate::models::Model;
use crate::state::StateField;

/// Time-step selection: a fixed step that must divide the horizon exactly,
/// or the adaptive grow/shrink policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStepMode {
    Adaptive,
    Fixed { dt: f64 },
}

/// Newton and step-size controls.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Residual max-norm threshold for Newton acceptance.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Step-size multiplier after a failed Newton solve.
    pub dt_shrink: f64,
    /// Step-size multiplier applied at the start of each new step.
    pub dt_grow: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_initial: f64,
    /// Smallest admissible Newton damping factor.
    pub damping_min: f64,
    pub mode: TimeStepMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-10,
            newton_max_iter: 50,
            dt_shrink: 0.2,
            dt_grow: 1.1,
            dt_min: 1e-8,
            dt_max: 1e-2,
            dt_initial: 1e-5,
            damping_min: (2.0f64).powi(-30),
            mode: TimeStepMode::Adaptive,
        }
    }
}

impl SolverConfig {
    pub fn fixed(dt: f64) -> Self {
        SolverConfig { mode: TimeStepMode::Fixed { dt }, ..SolverConfig::default() }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_initial && self.dt_initial <= self.dt_max)
        {
            return Err(SolveError::Config(format!(
                "need 0 < dt_min <= dt_initial <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_initial, self.dt_max
            )));
        }
        if !(self.dt_shrink > 0.0 && self.dt_shrink < 1.0 && self.dt_grow > 1.0) {
            return Err(SolveError::Config(format!(
                "need 0 < dt_shrink < 1 < dt_grow, got {} and {}",
                self.dt_shrink, self.dt_grow
            )));
        }
        if let TimeStepMode::Fixed { dt } = self.mode {
            if !(dt > 0.0) {
                return Err(SolveError::Config(format!("fixed dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

/// Diagnostics for one accepted step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub newton_iterations: usize,
    pub residual_norm: f64,
    pub rejected_attempts: usize,
    pub entropy: f64,
    pub relative_entropy: Option<f64>,
    /// Unweighted dissipation sum; infinite when a zero mean meets a
    /// nonzero jump (possible only for states touching the boundary).
    pub dissipation: f64,
    pub masses: Vec<f64>,
    pub min_concentration: f64,
    pub max_volume_sum: f64,
}

/// Per-step callback invoked on every accepted state.
pub trait Observer {
    fn on_step(
        &mut self,
        mesh: &Mesh,
        state: &StateField,
        report: &StepReport,
    ) -> Result<(), Box<dyn std::error::Error + Send + Sync>>;
}

fn make_report(
    step: usize,
    stats: NewtonStats,
    dt: f64,
    rejected: usize,
    mesh: &Mesh,
    model: &Model,
    state: &StateField,
    steady: Option<&[f64]>,
) -> StepReport {
    StepReport {
        step,
        t: state.time(),
        dt,
        newton_iterations: stats.iterations,
        residual_norm: stats.residual_norm,
        rejected_attempts: rejected,
        entropy: discrete_entropy(state, mesh, model.entropy()),
        relative_entropy: steady
            .map(|s| relative_entropy(state, mesh, s).expect("steady state interior")),
        dissipation: dissipation_or_inf(state, mesh, model),
        masses: state.masses(mesh),
        min_concentration: state.min_concentration(),
        max_volume_sum: state.max_volume_sum(),
    }
}

fn dissipation_or_inf(state: &StateField, mesh: &Mesh, model: &Model) -> f64 {
    match compute_edge_state(mesh, state, model.entropy()) {
        Ok(es) => entropy_dissipation(state, &es, mesh, model.exponent_s())
            .unwrap_or(f64::INFINITY),
        Err(_) => f64::NAN,
    }
}

/// Diagnostics of a state before any step has been taken.
pub fn initial_report(
    state: &StateField,
    mesh: &Mesh,
    model: &Model,
    steady: Option<&[f64]>,
) -> StepReport {
    make_report(
        0,
        NewtonStats { iterations: 0, residual_norm: 0.0 },
        0.0,
        0,
        mesh,
        model,
        state,
        steady,
    )
}

/// Iterator over accepted steps of the adaptive policy: the step grows by
/// `dt_grow` each accepted step (clamped to the configured window and to the
/// remaining horizon) and shrinks by `dt_shrink` after a failed solve.
pub struct AdaptiveStepper<'a> {
    mesh: &'a Mesh,
    model: &'a Model,
    config: SolverConfig,
    stencil: JacobianStencil,
    state: StateField,
    t_end: f64,
    dt_prev: Option<f64>,
    step: usize,
    steady: Option<Vec<f64>>,
    finished: bool,
}

/// Adaptive stepping from `initial` to `t_end`.
pub fn advance_adaptive<'a>(
    initial: StateField,
    mesh: &'a Mesh,
    model: &'a Model,
    config: &SolverConfig,
    t_end: f64,
) -> AdaptiveStepper<'a> {
    let stencil = JacobianStencil::new(mesh, model.n_species());
    AdaptiveStepper {
        mesh,
        model,
        config: config.clone(),
        stencil,
        state: initial,
        t_end,
        dt_prev: None,
        step: 0,
        steady: None,
        finished: false,
    }
}

impl<'a> AdaptiveStepper<'a> {
    /// Attach a steady state so reports carry the relative entropy.
    pub fn with_steady_state(mut self, steady: Vec<f64>) -> Self {
        self.steady = Some(steady);
        self
    }

    pub fn state(&self) -> &StateField {
        &self.state
    }
}

impl<'a> Iterator for AdaptiveStepper<'a> {
    type Item = Result<(StateField, StepReport), SolveError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished || self.state.time() >= self.t_end {
            self.finished = true;
            return None;
        }
        let remaining = self.t_end - self.state.time();
        let mut dt = match self.dt_prev {
            None => self.config.dt_initial,
            Some(p) => (self.config.dt_grow * p).clamp(self.config.dt_min, self.config.dt_max),
        };
        let lands_exactly = dt >= remaining;
        if lands_exactly {
            dt = remaining;
        }
        let mut rejected = 0;
        loop {
            match newton_solve_with(
                &self.stencil,
                &self.state,
                dt,
                self.mesh,
                self.model,
                &self.config,
            ) {
                Ok((mut next, stats)) => {
                    if dt == remaining {
                        next.set_time(self.t_end);
                    }
                    self.state = next.clone();
                    self.dt_prev = Some(dt);
                    self.step += 1;
                    let report = make_report(
                        self.step,
                        stats,
                        dt,
                        rejected,
                        self.mesh,
                        self.model,
                        &self.state,
                        self.steady.as_deref(),
                    );
                    return Some(Ok((next, report)));
                }
                Err(SolveError::NewtonDiverged { .. }) | Err(SolveError::LinearSolveFailure { .. }) => {
                    rejected += 1;
                    let smaller = self.config.dt_shrink * dt;
                    if smaller < self.config.dt_min {
                        self.finished = true;
                        return Some(Err(SolveError::DtUnderflow {
                            t: self.state.time(),
                            dt: smaller,
                        }));
                    }
                    dt = smaller;
                }
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

/// Run a simulation to `t_end` under the configured stepping mode, invoking
/// every observer on each accepted step. Returns the final state plus one
/// report per accepted step.
pub fn simulate(
    initial: &StateField,
    mesh: &Mesh,
    model: &Model,
    config: &SolverConfig,
    t_end: f64,
    steady: Option<&[f64]>,
    observers: &mut [&mut dyn Observer],
) -> Result<(StateField, Vec<StepReport>), SolveError> {
    config.validate()?;
    if t_end < initial.time() {
        return Err(SolveError::Config(format!(
            "t_end = {t_end} precedes the initial time {}",
            initial.time()
        )));
    }
    let mut reports = Vec::new();
    if t_end == initial.time() {
        return Ok((initial.clone(), reports));
    }
    match config.mode {
        TimeStepMode::Adaptive => {
            let mut stepper = advance_adaptive(initial.clone(), mesh, model, config, t_end);
            if let Some(s) = steady {
                stepper = stepper.with_steady_state(s.to_vec());
            }
            let mut last = None;
            for item in &mut stepper {
                let (state, report) = item?;
                for obs in observers.iter_mut() {
                    obs.on_step(mesh, &state, &report).map_err(SolveError::Observer)?;
                }
                reports.push(report);
                last = Some(state);
            }
            Ok((last.expect("at least one step"), reports))
        }
        TimeStepMode::Fixed { dt } => {
            let span = t_end - initial.time();
            let steps = (span / dt).round();
            if steps < 1.0 || (steps * dt - span).abs() > 1e-9 * span.max(dt) {
                return Err(SolveError::Config(format!(
                    "fixed mode requires dt to divide the horizon exactly; \
                     t_end - t0 = {span}, dt = {dt}"
                )));
            }
            let steps = steps as usize;
            let t0 = initial.time();
            let stencil = JacobianStencil::new(mesh, model.n_species());
            let mut state = initial.clone();
            for k in 1..=steps {
                let (mut next, stats) =
                    newton_solve_with(&stencil, &state, dt, mesh, model, config)?;
                next.set_time(if k == steps { t_end } else { t0 + k as f64 * dt });
                state = next;
                let report =
                    make_report(k, stats, dt, 0, mesh, model, &state, steady);
                for obs in observers.iter_mut() {
                    obs.on_step(mesh, &state, &report).map_err(SolveError::Observer)?;
                }
                reports.push(report);
            }
            Ok((state, reports))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;
    use crate::models::make_two_species_euler_limit;

    #[test]
    fn zero_horizon_returns_initial() {
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let model = make_two_species_euler_limit();
        let u = StateField::constant(4, &[0.3, 0.3]);
        let config = SolverConfig::default();
        let (final_state, reports) =
            simulate(&u, &mesh, &model, &config, 0.0, None, &mut []).unwrap();
        assert!(reports.is_empty());
        assert_eq!(final_state.data(), u.data());
    }

    #[test]
    fn fixed_mode_requires_exact_division() {
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let model = make_two_species_euler_limit();
        let u = StateField::constant(4, &[0.3, 0.3]);
        let config = SolverConfig::fixed(3e-4);
        let err = simulate(&u, &mesh, &model, &config, 1e-3, None, &mut []).unwrap_err();
        assert!(matches!(err, SolveError::Config(_)));
    }

    #[test]
    fn fixed_mode_step_count_and_times() {
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let model = make_two_species_euler_limit();
        let u = StateField::constant(4, &[0.3, 0.3]);
        let config = SolverConfig::fixed(2.5e-4);
        let (final_state, reports) =
            simulate(&u, &mesh, &model, &config, 1e-3, None, &mut []).unwrap();
        assert_eq!(reports.len(), 4);
        assert_eq!(final_state.time(), 1e-3);
        for w in reports.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }

    #[test]
    fn adaptive_grows_to_cap_and_lands_exactly() {
        // A constant state accepts every step in one Newton iteration, so the
        // step size ramps up to dt_max and stays there.
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let model = make_two_species_euler_limit();
        let u = StateField::constant(4, &[0.3, 0.3]);
        let config = SolverConfig::default();
        let t_end = 0.5;
        let (final_state, reports) =
            simulate(&u, &mesh, &model, &config, t_end, None, &mut []).unwrap();
        assert_eq!(final_state.time(), t_end);
        assert!(reports.iter().all(|r| r.newton_iterations == 1));
        let max_dt = reports.iter().map(|r| r.dt).fold(0.0f64, f64::max);
        assert!((max_dt - config.dt_max).abs() < 1e-15);
        assert_eq!(reports.first().unwrap().dt, config.dt_initial);
        let last = reports.last().unwrap();
        assert_eq!(last.t, t_end);
    }

    #[test]
    fn config_invariants_enforced() {
        let mut c = SolverConfig::default();
        c.dt_min = 0.5;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.dt_shrink = 1.5;
        assert!(c.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }
}
