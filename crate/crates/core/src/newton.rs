//! Damped Newton iteration, plain or deflated.

use serde::{Deserialize, Serialize};

use crate::deflation::{deflated_update, eta_with_gradient, DeflationConfig, DeflationSet};
use crate::energy::{hessian, MaterialParams, Model};
use crate::error::{Error, Result};
use crate::fem::Discretization;
use crate::linear::{LinearSolver, SolveContext};
use crate::sparse::norm2;
use crate::state::{unit_length_violation, State};

pub const MIN_OMEGA: f64 = 0.1;
pub const MAX_OMEGA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingMode {
    Increasing,
    Decreasing,
}

/// Fixed damping per level: `clamp(ω₀ ± l·Δ, 0.1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampingSchedule {
    pub omega0: f64,
    pub delta: f64,
    pub mode: DampingMode,
}

impl DampingSchedule {
    pub fn increasing(omega0: f64, delta: f64) -> Self {
        Self { omega0, delta, mode: DampingMode::Increasing }
    }

    pub fn decreasing(omega0: f64, delta: f64) -> Self {
        Self { omega0, delta, mode: DampingMode::Decreasing }
    }

    pub fn omega(&self, level: usize) -> f64 {
        let step = level as f64 * self.delta;
        let w = match self.mode {
            DampingMode::Increasing => self.omega0 + step,
            DampingMode::Decreasing => self.omega0 - step,
        };
        w.clamp(MIN_OMEGA, MAX_OMEGA)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0 && self.omega0 <= 1.0) || !(self.delta >= 0.0) {
            return Err(Error::Config(format!(
                "damping needs ω₀ ∈ (0, 1] and Δ ≥ 0, got ω₀ = {}, Δ = {}",
                self.omega0, self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Bound on the l² norm of the undeflated residual.
    pub fooc_tol: f64,
    pub max_iters: usize,
    /// Mean nodal director length beyond which the run is abandoned.
    pub blowup_mean_length: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            fooc_tol: 1e-4,
            max_iters: 100,
            blowup_mean_length: 3.0,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fooc_tol > 0.0) || self.max_iters == 0 || !(self.blowup_mean_length > 0.0) {
            return Err(Error::Config("Newton tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonStatus {
    Converged,
    MaxIters,
    Blowup,
    SolverStall,
    AtKnownRoot,
    SingularUpdate,
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub status: NewtonStatus,
    pub state: State,
    pub iterations: usize,
    /// Undeflated residual norm before each step (and at the final iterate).
    pub residual_history: Vec<f64>,
    pub work_units: f64,
    pub krylov_iterations: usize,
}

impl NewtonOutcome {
    pub fn converged(&self) -> bool {
        self.status == NewtonStatus::Converged
    }
}

/// Optional deflation data for [`newton_solve`].
#[derive(Clone, Copy, Debug)]
pub struct Deflation<'a> {
    pub roots: &'a DeflationSet,
    pub config: &'a DeflationConfig,
}

pub struct NewtonProblem<'a> {
    pub disc: &'a Discretization,
    pub ctx: Option<SolveContext<'a>>,
    pub params: &'a MaterialParams,
    pub model: Model,
}

fn failure_status(e: &Error) -> Option<NewtonStatus> {
    match e {
        Error::AtKnownRoot { .. } => Some(NewtonStatus::AtKnownRoot),
        Error::SingularUpdate { .. } => Some(NewtonStatus::SingularUpdate),
        Error::SolverStall { .. } | Error::Factorization(_) => Some(NewtonStatus::SolverStall),
        _ => None,
    }
}

/// Iterate `u ← u + ω δu` until the undeflated residual drops below
/// `fooc_tol` or a failure criterion triggers. Only configuration and
/// contract errors are returned as `Err`.
pub fn newton_solve(
    problem: &NewtonProblem<'_>,
    state0: State,
    deflation: Option<Deflation<'_>>,
    omega: f64,
    cfg: &NewtonConfig,
    solver: &mut LinearSolver,
) -> Result<NewtonOutcome> {
    cfg.validate()?;
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::Config(format!("damping ω = {omega} outside (0, 1]")));
    }
    let disc = problem.disc;
    let wu0 = solver.meter().work_units();
    let kr0 = solver.krylov_iterations();
    let mut state = state0;
    let mut history = Vec::new();
    let mut iterations = 0;
    let status = loop {
        let system = hessian(disc, problem.params, problem.model, &state)?;
        let r = norm2(&system.residual);
        history.push(r);
        if !r.is_finite() {
            break NewtonStatus::Blowup;
        }
        let deflated = match deflation {
            Some(d) if !d.roots.is_empty() => match eta_with_gradient(disc, &state, d.roots, d.config) {
                Ok(v) => Some(v),
                Err(e) => match failure_status(&e) {
                    Some(s) => break s,
                    None => return Err(e),
                },
            },
            _ => None,
        };
        if r <= cfg.fooc_tol {
            break NewtonStatus::Converged;
        }
        if iterations >= cfg.max_iters {
            break NewtonStatus::MaxIters;
        }
        let step = match &deflated {
            Some((eta, grad)) => deflated_update(&system, grad, *eta, solver, problem.ctx),
            None => solver
                .solve(&system.jacobian, system.primal_len, problem.ctx, &system.residual)
                .map(|(y, rep)| (y.into_iter().map(|v| -v).collect(), rep)),
        };
        let delta = match step {
            Ok((d, _)) => d,
            Err(e) => match failure_status(&e) {
                Some(s) => break s,
                None => return Err(e),
            },
        };
        disc.dofs().add_active(state.values_mut(), omega, &delta);
        iterations += 1;
        let mean = unit_length_violation(&state);
        log::trace!(
            "newton {iterations}: residual {r:.3e}, step {:.3e}, mean |n| {mean:.3}",
            norm2(&delta)
        );
        if !mean.is_finite() || mean > cfg.blowup_mean_length {
            history.push(f64::NAN);
            break NewtonStatus::Blowup;
        }
    };
    log::debug!(
        "newton: {:?} after {} iterations, residual {:.3e}",
        status,
        iterations,
        history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(NewtonOutcome {
        status,
        state,
        iterations,
        residual_history: history,
        work_units: solver.meter().work_units() - wu0,
        krylov_iterations: solver.krylov_iterations() - kr0,
    })
}
