//! Inner linear solves for the Newton systems.

pub mod direct;
pub mod gmres;
pub mod multigrid;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Discretization;
use crate::sparse::CsrMatrix;

pub use direct::{DirectSolver, SymbolicCache};
pub use gmres::{gmres, GmresOutcome};
pub use multigrid::{braess_sarazin_relax, MgHierarchy, DEFAULT_BS_SCALING};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerKind {
    Multigrid,
    Direct,
    None,
}

impl std::str::FromStr for PreconditionerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multigrid" | "mg" => Ok(Self::Multigrid),
            "direct" => Ok(Self::Direct),
            "none" => Ok(Self::None),
            _ => Err(Error::Config(format!("unknown preconditioner '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolveConfig {
    pub rel_tol: f64,
    pub max_krylov: usize,
    pub preconditioner: PreconditionerKind,
    /// Diagonal scaling `t` of the Braess–Sarazin primal approximation.
    pub bs_scaling: f64,
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_krylov: 200,
            preconditioner: PreconditionerKind::Direct,
            bs_scaling: DEFAULT_BS_SCALING,
        }
    }
}

/// V-cycle counts per mesh level, weighted `(1/4)^l` by distance `l` from the finest level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkUnitMeter {
    finest: usize,
    counts: BTreeMap<usize, u64>,
}

impl WorkUnitMeter {
    pub fn new(finest_level: usize) -> Self {
        Self {
            finest: finest_level,
            counts: BTreeMap::new(),
        }
    }

    pub fn finest_level(&self) -> usize {
        self.finest
    }

    pub fn set_finest_level(&mut self, level: usize) {
        self.finest = level;
    }

    pub fn record(&mut self, level: usize, cycles: u64) {
        *self.counts.entry(level).or_default() += cycles;
    }

    pub fn count(&self, level: usize) -> u64 {
        self.counts.get(&level).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<usize, u64> {
        &self.counts
    }

    pub fn work_units(&self) -> f64 {
        self.counts
            .iter()
            .map(|(&level, &c)| {
                let dist = self.finest.saturating_sub(level) as i32;
                c as f64 * 0.25f64.powi(dist)
            })
            .sum()
    }
}

/// Level hierarchy a system lives on; the system belongs to the last level.
#[derive(Clone, Copy, Debug)]
pub struct SolveContext<'a> {
    pub levels: &'a [Arc<Discretization>],
    pub prolongations: &'a [Arc<CsrMatrix>],
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioner built for one Jacobian.
enum Prepared {
    Direct(DirectSolver),
    Multigrid(MgHierarchy),
    Identity,
}

/// GMRES with a configurable preconditioner plus running statistics.
#[derive(Debug)]
pub struct LinearSolver {
    cfg: LinearSolveConfig,
    meter: WorkUnitMeter,
    solves: usize,
    krylov_iterations: usize,
    symbolic: SymbolicCache,
}

impl LinearSolver {
    pub fn new(cfg: LinearSolveConfig) -> Self {
        Self {
            cfg,
            meter: WorkUnitMeter::default(),
            solves: 0,
            krylov_iterations: 0,
            symbolic: SymbolicCache::default(),
        }
    }

    pub fn config(&self) -> &LinearSolveConfig {
        &self.cfg
    }

    pub fn meter(&self) -> &WorkUnitMeter {
        &self.meter
    }

    pub fn meter_mut(&mut self) -> &mut WorkUnitMeter {
        &mut self.meter
    }

    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn krylov_iterations(&self) -> usize {
        self.krylov_iterations
    }

    fn prepare(
        &mut self,
        a: &CsrMatrix,
        primal_len: usize,
        ctx: Option<SolveContext<'_>>,
    ) -> Result<Prepared> {
        Ok(match self.cfg.preconditioner {
            PreconditionerKind::None => Prepared::Identity,
            PreconditionerKind::Direct => {
                let order = ctx.map(|c| c.levels.last().unwrap().nested_dissection());
                Prepared::Direct(DirectSolver::factor_cached(a, order, &mut self.symbolic)?)
            }
            PreconditionerKind::Multigrid => {
                let ctx = ctx.ok_or_else(|| {
                    Error::Config("multigrid preconditioning needs a level hierarchy".into())
                })?;
                let primal: Vec<usize> = ctx
                    .levels
                    .iter()
                    .map(|d| d.dofs().primal_active_len())
                    .collect();
                debug_assert_eq!(*primal.last().unwrap(), primal_len);
                let order = ctx.levels[0].nested_dissection();
                Prepared::Multigrid(MgHierarchy::build(
                    a,
                    ctx.prolongations,
                    &primal,
                    Some(order),
                    self.cfg.bs_scaling,
                )?)
            }
        })
    }

    /// Solve `A x = rhs` to the configured relative tolerance from `x₀ = 0`.
    pub fn solve(
        &mut self,
        a: &CsrMatrix,
        primal_len: usize,
        ctx: Option<SolveContext<'_>>,
        rhs: &[f64],
    ) -> Result<(Vec<f64>, LinearReport)> {
        let prepared = self.prepare(a, primal_len, ctx)?;
        let level = ctx.map_or(0, |c| c.levels.last().unwrap().mesh().level());
        let mut cycles = 0u64;
        let out = gmres(
            |v, y| a.mul_vec_into(v, y),
            |v| match &prepared {
                Prepared::Direct(d) => d.solve(v),
                Prepared::Multigrid(mg) => {
                    cycles += 1;
                    mg.apply(v)
                }
                Prepared::Identity => v.to_vec(),
            },
            rhs,
            self.cfg.rel_tol,
            self.cfg.max_krylov,
        );
        if cycles > 0 {
            self.meter.record(level, cycles);
        }
        self.solves += 1;
        self.krylov_iterations += out.iterations;
        if !out.converged || out.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverStall {
                iterations: out.iterations,
                relative_residual: out.relative_residual,
            });
        }
        Ok((
            out.x,
            LinearReport {
                iterations: out.iterations,
                relative_residual: out.relative_residual,
            },
        ))
    }
}
