//! Geometric V(1,1) multigrid for saddle systems `[A Bᵀ; B 0]` with
//! Braess–Sarazin relaxation and Galerkin coarse operators.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linear::direct::DirectSolver;
use crate::sparse::CsrMatrix;

/// Default scaling of the diagonal primal approximation `D = t·diag(A)`.
pub const DEFAULT_BS_SCALING: f64 = 1.5;

#[derive(Debug)]
enum Smoother {
    /// Exact solve of the approximate saddle system with `A ≈ D`.
    BraessSarazin {
        dinv: Vec<f64>,
        b: CsrMatrix,
        bt: CsrMatrix,
        schur: DirectSolver,
    },
    /// Damped Jacobi on the primal block only (multipliers untouched).
    Jacobi { dinv: Vec<f64> },
}

#[derive(Debug)]
struct Level {
    a: CsrMatrix,
    primal: usize,
    smoother: Smoother,
    /// Prolongation from the next coarser level (absent on the coarsest).
    p: Option<Arc<CsrMatrix>>,
    pt: Option<CsrMatrix>,
}

/// One operator per level, coarsest first.
#[derive(Debug)]
pub struct MgHierarchy {
    levels: Vec<Level>,
    coarse: DirectSolver,
}

fn build_smoother(a: &CsrMatrix, primal: usize, t: f64) -> Smoother {
    let diag = a.diagonal();
    let dinv: Vec<f64> = diag[..primal].iter().map(|d| 1.0 / (t * d)).collect();
    let jacobi = |dinv: Vec<f64>| Smoother::Jacobi {
        dinv: dinv.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect(),
    };
    if dinv.iter().any(|v| !v.is_finite()) {
        log::warn!("zero diagonal in primal block; relaxation falls back to damped Jacobi");
        return jacobi(dinv);
    }
    if primal == a.nrows() {
        return jacobi(dinv);
    }
    let n = a.nrows();
    let b = a.block(primal..n, 0..primal);
    let bt = b.transpose();
    let mut scaled_bt = bt.clone();
    {
        let rp = scaled_bt.row_ptr().to_vec();
        let vals = scaled_bt.values_mut();
        for (i, d) in dinv.iter().enumerate() {
            for v in &mut vals[rp[i]..rp[i + 1]] {
                *v *= d;
            }
        }
    }
    let s = b.matmul(&scaled_bt);
    match DirectSolver::factor(&s, None) {
        Ok(schur) => Smoother::BraessSarazin { dinv, b, bt, schur },
        Err(e) => {
            log::warn!("Schur complement factorization failed ({e}); using damped Jacobi");
            jacobi(dinv)
        }
    }
}

impl MgHierarchy {
    /// `prolongations[i]` maps level `i` to level `i + 1`; `primal_lens` is
    /// given coarsest first and has one more entry than `prolongations`.
    pub fn build(
        fine: &CsrMatrix,
        prolongations: &[Arc<CsrMatrix>],
        primal_lens: &[usize],
        coarse_order: Option<&[usize]>,
        scaling: f64,
    ) -> Result<Self> {
        if primal_lens.len() != prolongations.len() + 1 {
            return Err(Error::Contract("one primal size per level required".into()));
        }
        let nl = primal_lens.len();
        let mut mats: Vec<CsrMatrix> = vec![fine.clone()];
        for p in prolongations.iter().rev() {
            let next = mats.last().unwrap().galerkin(p);
            mats.push(next);
        }
        mats.reverse();
        let coarse = DirectSolver::factor(&mats[0], coarse_order)?;
        let mut levels = Vec::with_capacity(nl);
        for (k, a) in mats.into_iter().enumerate() {
            let primal = primal_lens[k];
            let smoother = if k == 0 {
                Smoother::Jacobi { dinv: Vec::new() }
            } else {
                build_smoother(&a, primal, scaling)
            };
            let p = (k > 0).then(|| prolongations[k - 1].clone());
            let pt = p.as_ref().map(|p| p.transpose());
            levels.push(Level {
                a,
                primal,
                smoother,
                p,
                pt,
            });
        }
        Ok(Self { levels, coarse })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Operator on level `k` (coarsest = 0).
    pub fn operator(&self, k: usize) -> &CsrMatrix {
        &self.levels[k].a
    }

    pub fn uses_braess_sarazin(&self, k: usize) -> bool {
        matches!(self.levels[k].smoother, Smoother::BraessSarazin { .. })
    }

    /// One V(1,1) cycle on the finest level starting from `x`.
    pub fn vcycle(&self, rhs: &[f64], x: &mut [f64]) {
        self.cycle(self.levels.len() - 1, rhs, x);
    }

    /// Preconditioner application: one cycle from a zero initial guess.
    pub fn apply(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; rhs.len()];
        self.vcycle(rhs, &mut x);
        x
    }

    fn cycle(&self, k: usize, rhs: &[f64], x: &mut [f64]) {
        if k == 0 {
            let r = residual(&self.levels[0].a, rhs, x);
            let dx = self.coarse.solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            return;
        }
        let lvl = &self.levels[k];
        relax(lvl, rhs, x);
        let r = residual(&lvl.a, rhs, x);
        let rc = lvl.pt.as_ref().unwrap().mul_vec(&r);
        let mut xc = vec![0.0; rc.len()];
        self.cycle(k - 1, &rc, &mut xc);
        let corr = lvl.p.as_ref().unwrap().mul_vec(&xc);
        for (xi, c) in x.iter_mut().zip(corr) {
            *xi += c;
        }
        relax(lvl, rhs, x);
    }

    /// One relaxation sweep on level `k`, for tests.
    pub fn relax_level(&self, k: usize, rhs: &[f64], x: &mut [f64]) {
        relax(&self.levels[k], rhs, x);
    }
}

fn residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
}

fn relax(lvl: &Level, rhs: &[f64], x: &mut [f64]) {
    let r = residual(&lvl.a, rhs, x);
    let p = lvl.primal;
    match &lvl.smoother {
        Smoother::Jacobi { dinv } => {
            for i in 0..p {
                x[i] += dinv[i] * r[i];
            }
        }
        Smoother::BraessSarazin { dinv, b, bt, schur } => {
            let (ru, rl) = r.split_at(p);
            let t: Vec<f64> = ru.iter().zip(dinv).map(|(a, d)| a * d).collect();
            let mut s_rhs = b.mul_vec(&t);
            for (s, l) in s_rhs.iter_mut().zip(rl) {
                *s -= l;
            }
            let dl = schur.solve(&s_rhs);
            let btdl = bt.mul_vec(&dl);
            for i in 0..p {
                x[i] += dinv[i] * (ru[i] - btdl[i]);
            }
            for (xi, d) in x[p..].iter_mut().zip(&dl) {
                *xi += d;
            }
        }
    }
}

/// Braess–Sarazin sweep on an explicit saddle system, returning the update.
/// Exposed for hand-checkable examples.
pub fn braess_sarazin_relax(
    a: &CsrMatrix,
    primal: usize,
    rhs: &[f64],
    x: &mut [f64],
    scaling: f64,
) {
    let lvl = Level {
        a: a.clone(),
        primal,
        smoother: build_smoother(a, primal, scaling),
        p: None,
        pt: None,
    };
    relax(&lvl, rhs, x);
}
