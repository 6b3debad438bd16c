//! Nested iteration with deflation: continue every known solution onto each
//! finer level, then search for new ones from the guess library.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::deflation::{u_distance_sq, DeflationSet, DEDUP_DISTANCE};
use crate::energy::free_energy;
use crate::error::Result;
use crate::fem::{build_mesh, prolong, Discretization, LevelStack};
use crate::linear::{LinearSolver, SolveContext, WorkUnitMeter};
use crate::newton::{newton_solve, Deflation, NewtonOutcome, NewtonProblem, NewtonStatus};
use crate::presets::ExperimentPreset;
use crate::state::State;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Undeflated solve from the first guess on the coarsest level.
    Initial,
    /// Deflated discovery solve.
    Deflated,
    /// Undeflated discovery solve (deflation switched off).
    Undeflated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub level: usize,
    pub energy: f64,
    pub newton_iterations: usize,
    pub status: NewtonStatus,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub id: usize,
    pub provenance: Provenance,
    pub discovery_level: usize,
    /// Guess index the solution was found from.
    pub guess: usize,
    /// One entry per level from the discovery level on.
    pub levels: Vec<LevelEntry>,
    pub work_units: f64,
    pub warnings: Vec<String>,
}

impl SolutionRecord {
    pub fn final_energy(&self) -> f64 {
        self.levels.last().map_or(f64::NAN, |e| e.energy)
    }

    pub fn energy_at(&self, level: usize) -> Option<f64> {
        self.levels.iter().find(|e| e.level == level).map(|e| e.energy)
    }

    pub fn newton_iterations(&self) -> usize {
        self.levels.iter().map(|e| e.newton_iterations).sum()
    }
}

/// Failed or duplicate solves on one level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnonymousEntry {
    pub level: usize,
    pub attempts: usize,
    pub newton_iterations: usize,
    pub work_units: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelSolverStats {
    pub level: usize,
    pub linear_solves: usize,
    pub krylov_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub preconditioner: crate::linear::PreconditionerKind,
    pub linear_solves: usize,
    pub krylov_iterations: usize,
    pub work_units: f64,
    pub meter: WorkUnitMeter,
    pub per_level: Vec<LevelSolverStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentPreset,
    pub solutions: Vec<SolutionRecord>,
    pub anonymous: Vec<AnonymousEntry>,
    pub total_newton_iterations: usize,
    pub solver: SolverStats,
}

impl RunReport {
    pub fn anonymous_iterations(&self) -> usize {
        self.anonymous.iter().map(|a| a.newton_iterations).sum()
    }

    pub fn attributed_iterations(&self) -> usize {
        self.solutions.iter().map(|s| s.newton_iterations()).sum()
    }

    /// Final-level energies in discovery order.
    pub fn energies(&self) -> Vec<f64> {
        self.solutions.iter().map(|s| s.final_energy()).collect()
    }
}

/// Report plus the final-level states (same order as `report.solutions`).
#[derive(Debug)]
pub struct RunResult {
    pub report: RunReport,
    pub states: Vec<State>,
    pub finest: Arc<Discretization>,
}

struct Known {
    record: SolutionRecord,
    state: State,
}

struct Runner<'a> {
    preset: &'a ExperimentPreset,
    solver: LinearSolver,
    known: Vec<Known>,
    anonymous: Vec<AnonymousEntry>,
    total_iterations: usize,
}

impl Runner<'_> {
    fn anonymous(&mut self, level: usize, out: &NewtonOutcome) {
        let entry = match self.anonymous.iter_mut().find(|a| a.level == level) {
            Some(e) => e,
            None => {
                self.anonymous.push(AnonymousEntry { level, ..Default::default() });
                self.anonymous.last_mut().unwrap()
            }
        };
        entry.attempts += 1;
        entry.newton_iterations += out.iterations;
        entry.work_units += out.work_units;
    }

    fn entry(&self, disc: &Discretization, out: &NewtonOutcome) -> Result<LevelEntry> {
        Ok(LevelEntry {
            level: disc.mesh().level(),
            energy: free_energy(disc, &self.preset.params, self.preset.model, &out.state)?,
            newton_iterations: out.iterations,
            status: out.status,
            residual: out.residual_history.last().copied().unwrap_or(f64::NAN),
        })
    }

    fn is_distinct(&self, disc: &Discretization, state: &State) -> Result<bool> {
        for k in &self.known {
            if u_distance_sq(disc, state, &k.state)?.sqrt() <= DEDUP_DISTANCE {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn accept(
        &mut self,
        disc: &Discretization,
        out: NewtonOutcome,
        provenance: Provenance,
        guess: usize,
    ) -> Result<bool> {
        let level = disc.mesh().level();
        if !out.converged() || !self.is_distinct(disc, &out.state)? {
            if out.converged() {
                log::info!("level {level}: guess {guess} converged onto a known solution");
            }
            self.anonymous(level, &out);
            return Ok(false);
        }
        let entry = self.entry(disc, &out)?;
        log::info!(
            "level {level}: new solution {} from guess {guess} ({provenance:?}), energy {:.6}",
            self.known.len(),
            entry.energy
        );
        let record = SolutionRecord {
            id: self.known.len(),
            provenance,
            discovery_level: level,
            guess,
            levels: vec![entry],
            work_units: out.work_units,
            warnings: Vec::new(),
        };
        self.known.push(Known { record, state: out.state });
        Ok(true)
    }

    fn continue_known(&mut self, disc: &Discretization, ctx: SolveContext<'_>) -> Result<()> {
        let level = disc.mesh().level();
        let omega = self.preset.undeflated.omega(level);
        let problem = NewtonProblem { disc, ctx: Some(ctx), params: &self.preset.params, model: self.preset.model };
        for i in 0..self.known.len() {
            let start = self.known[i].state.clone();
            let out = newton_solve(&problem, start.clone(), None, omega, &self.preset.newton, &mut self.solver)?;
            self.total_iterations += out.iterations;
            let entry = self.entry(disc, &out)?;
            let k = &mut self.known[i];
            k.record.work_units += out.work_units;
            if !out.converged() {
                let msg = format!("continuation on level {level} ended with {:?}", out.status);
                log::warn!("solution {}: {msg}", k.record.id);
                k.record.warnings.push(msg);
            }
            k.record.levels.push(entry);
            k.state = if out.status == NewtonStatus::Blowup { start } else { out.state };
        }
        Ok(())
    }

    /// Deflated solves from every guess. A guess is retried in a later pass
    /// only if new solutions joined the deflation set since its last attempt.
    fn discover(&mut self, disc: &Discretization, ctx: SolveContext<'_>) -> Result<()> {
        let p = self.preset;
        let level = disc.mesh().level();
        let problem = NewtonProblem { disc, ctx: Some(ctx), params: &p.params, model: p.model };
        let guesses = guess_indices(p);
        let mut tried_against = vec![usize::MAX; guesses.len()];
        for _ in 0..p.discovery_passes.max(1) {
            let mut found = false;
            for (slot, &g) in guesses.iter().enumerate() {
                if tried_against[slot] == self.known.len() {
                    continue;
                }
                tried_against[slot] = self.known.len();
                if !p.use_deflation {
                    let guess = p.guesses.build(g, disc, p.params.voltage);
                    let out = newton_solve(&problem, guess, None, p.undeflated.omega(level), &p.newton, &mut self.solver)?;
                    self.total_iterations += out.iterations;
                    found |= self.accept(disc, out, Provenance::Undeflated, g)?;
                    continue;
                }
                let mut omegas = vec![p.deflated.omega(level)];
                let retry = p.undeflated.omega(level);
                if p.damping_fallback && (retry - omegas[0]).abs() > 1e-12 {
                    omegas.push(retry);
                }
                for omega in omegas {
                    let guess = p.guesses.build(g, disc, p.params.voltage);
                    let roots = DeflationSet::new(self.known.iter().map(|k| k.state.clone()).collect());
                    let defl = Deflation { roots: &roots, config: &p.deflation };
                    let out = newton_solve(&problem, guess, Some(defl), omega, &p.newton, &mut self.solver)?;
                    self.total_iterations += out.iterations;
                    if self.accept(disc, out, Provenance::Deflated, g)? {
                        found = true;
                        break;
                    }
                }
            }
            if !found || !p.use_deflation {
                break;
            }
        }
        Ok(())
    }
}

fn guess_indices(p: &ExperimentPreset) -> Vec<usize> {
    if p.guess_subset.is_empty() {
        (0..p.guesses.count()).collect()
    } else {
        p.guess_subset.iter().copied().filter(|&g| g < p.guesses.count()).collect()
    }
}

/// Run the full nested-iteration/deflation pipeline on levels `0..=preset.levels`.
pub fn run(preset: &ExperimentPreset) -> Result<RunResult> {
    preset.validate()?;
    let bc = preset.boundary_conditions();
    let mut stack = LevelStack::new(&build_mesh(0, preset.periodic_x)?, &bc)?;
    let mut solver = LinearSolver::new(preset.linear.clone());
    solver.meter_mut().set_finest_level(preset.levels);
    let mut runner = Runner {
        preset,
        solver,
        known: Vec::new(),
        anonymous: Vec::new(),
        total_iterations: 0,
    };
    let mut per_level = Vec::new();
    for level in 0..=preset.levels {
        if level > 0 {
            stack.refine()?;
            let fine = stack.finest().clone();
            for k in &mut runner.known {
                k.state = prolong(&k.state, fine.dofs())?;
            }
        }
        let disc = stack.level(level).clone();
        let ctx = SolveContext {
            levels: &stack.levels()[..=level],
            prolongations: &stack.prolongations()[..level],
        };
        let (solves0, krylov0) = (runner.solver.solves(), runner.solver.krylov_iterations());
        if level == 0 {
            let first = guess_indices(preset).first().copied().unwrap_or(0);
            let guess = preset.guesses.build(first, &disc, preset.params.voltage);
            let problem =
                NewtonProblem { disc: &disc, ctx: Some(ctx), params: &preset.params, model: preset.model };
            let omega = preset.undeflated.omega(0);
            let out = newton_solve(&problem, guess, None, omega, &preset.newton, &mut runner.solver)?;
            runner.total_iterations += out.iterations;
            runner.accept(&disc, out, Provenance::Initial, first)?;
        } else {
            runner.continue_known(&disc, ctx)?;
        }
        runner.discover(&disc, ctx)?;
        per_level.push(LevelSolverStats {
            level,
            linear_solves: runner.solver.solves() - solves0,
            krylov_iterations: runner.solver.krylov_iterations() - krylov0,
        });
    }
    let solver = SolverStats {
        preconditioner: preset.linear.preconditioner,
        linear_solves: runner.solver.solves(),
        krylov_iterations: runner.solver.krylov_iterations(),
        work_units: runner.solver.meter().work_units(),
        meter: runner.solver.meter().clone(),
        per_level,
    };
    let (records, states): (Vec<_>, Vec<_>) = runner.known.into_iter().map(|k| (k.record, k.state)).unzip();
    Ok(RunResult {
        report: RunReport {
            config: preset.clone(),
            solutions: records,
            anonymous: runner.anonymous,
            total_newton_iterations: runner.total_iterations,
            solver,
        },
        states,
        finest: stack.finest().clone(),
    })
}
