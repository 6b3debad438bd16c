//! Sparse direct factorizations backed by faer.
//!
//! Symmetric systems are factored as `L D Lᵀ` without pivoting under a
//! caller-supplied (nested-dissection) or AMD ordering. If the factorization
//! hits a zero pivot or fails an accuracy self-check, a pivoted sparse LU is
//! used instead.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::perm::PermRef;
use faer::prelude::*;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LdltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, Par, Side};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sparse::{norm2, CsrMatrix};

/// Relative residual the LDLᵀ factorization must reach on a self-check solve.
const SELF_CHECK_TOL: f64 = 1e-8;

enum Factor {
    Ldlt {
        symbolic: Arc<SymbolicCholesky<usize>>,
        values: Vec<f64>,
    },
    Lu(Lu<usize, f64>),
}

pub struct DirectSolver {
    n: usize,
    factor: Factor,
}

impl std::fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectSolver")
            .field("n", &self.n)
            .field("kind", &self.kind())
            .finish()
    }
}

/// CSC arrays of `A` (the CSR arrays of `Aᵀ`).
fn to_faer(a: &CsrMatrix) -> Result<SparseColMat<usize, f64>> {
    let t = a.transpose();
    let sym = SymbolicSparseColMat::new_checked(
        a.nrows(),
        a.ncols(),
        t.row_ptr().to_vec(),
        None,
        t.col_indices().iter().map(|&c| c as usize).collect(),
    );
    Ok(SparseColMat::new(sym, t.values().to_vec()))
}

/// Symbolic LDLᵀ analysis of the last pattern seen, reused while the sparsity
/// pattern and ordering stay the same (every Newton step on one level).
#[derive(Default)]
pub struct SymbolicCache {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    order: Option<Vec<usize>>,
    symbolic: Option<Arc<SymbolicCholesky<usize>>>,
}

impl std::fmt::Debug for SymbolicCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolicCache").field("n", &self.row_ptr.len().saturating_sub(1)).finish()
    }
}

impl SymbolicCache {
    fn lookup(&self, a: &CsrMatrix, order: Option<&[usize]>) -> Option<Arc<SymbolicCholesky<usize>>> {
        let hit = self.row_ptr == a.row_ptr() && self.cols == a.col_indices() && self.order.as_deref() == order;
        if hit {
            self.symbolic.clone()
        } else {
            None
        }
    }

    fn store(&mut self, a: &CsrMatrix, order: Option<&[usize]>, symbolic: Arc<SymbolicCholesky<usize>>) {
        self.row_ptr = a.row_ptr().to_vec();
        self.cols = a.col_indices().to_vec();
        self.order = order.map(<[usize]>::to_vec);
        self.symbolic = Some(symbolic);
    }
}

impl DirectSolver {
    /// Factor a square matrix; `symmetric_order` (`order[new] = old`) enables
    /// the symmetric path with that ordering, `None` uses AMD.
    pub fn factor(a: &CsrMatrix, symmetric_order: Option<&[usize]>) -> Result<Self> {
        Self::factor_cached(a, symmetric_order, &mut SymbolicCache::default())
    }

    pub fn factor_cached(
        a: &CsrMatrix,
        symmetric_order: Option<&[usize]>,
        cache: &mut SymbolicCache,
    ) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Contract("direct solve needs a square matrix".into()));
        }
        let n = a.nrows();
        let csc = to_faer(a)?;
        if a.max_asymmetry() <= 1e-12 * a.max_abs().max(f64::MIN_POSITIVE) {
            let cached = cache.lookup(a, symmetric_order);
            let symbolic = match cached {
                Some(s) => Ok(s),
                None => Self::symbolic_ldlt(&csc, symmetric_order).map(|s| {
                    let s = Arc::new(s);
                    cache.store(a, symmetric_order, s.clone());
                    s
                }),
            };
            match symbolic.and_then(|s| Self::numeric_ldlt(&csc, s)) {
                Ok(f) => {
                    let solver = Self { n, factor: f };
                    if solver.self_check(a) {
                        return Ok(solver);
                    }
                    log::debug!("LDLᵀ self-check failed, switching to LU");
                }
                Err(e) => log::debug!("LDLᵀ failed ({e}), switching to LU"),
            }
        }
        let symbolic = SymbolicLu::try_new(csc.symbolic())
            .map_err(|e| Error::Factorization(format!("symbolic LU: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic, csc.as_ref())
            .map_err(|e| Error::Factorization(format!("numeric LU: {e:?}")))?;
        Ok(Self {
            n,
            factor: Factor::Lu(lu),
        })
    }

    fn symbolic_ldlt(csc: &SparseColMat<usize, f64>, order: Option<&[usize]>) -> Result<SymbolicCholesky<usize>> {
        let n = csc.nrows();
        match order {
            Some(fwd) => {
                let mut inv = vec![0usize; n];
                for (new, &old) in fwd.iter().enumerate() {
                    inv[old] = new;
                }
                let perm = PermRef::new_checked(fwd, &inv, n);
                factorize_symbolic_cholesky(
                    csc.symbolic(),
                    Side::Lower,
                    SymmetricOrdering::Custom(perm),
                    Default::default(),
                )
            }
            None => factorize_symbolic_cholesky(
                csc.symbolic(),
                Side::Lower,
                SymmetricOrdering::Amd,
                Default::default(),
            ),
        }
        .map_err(|e| Error::Factorization(format!("symbolic LDLᵀ: {e:?}")))
    }

    fn numeric_ldlt(csc: &SparseColMat<usize, f64>, symbolic: Arc<SymbolicCholesky<usize>>) -> Result<Factor> {
        let mut values = vec![0.0f64; symbolic.len_val()];
        let mut mem =
            MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()));
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                csc.as_ref(),
                Side::Lower,
                LdltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::Factorization(format!("numeric LDLᵀ: {e:?}")))?;
        Ok(Factor::Ldlt { symbolic, values })
    }

    fn self_check(&self, a: &CsrMatrix) -> bool {
        let x0: Vec<f64> = (0..self.n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
        let b = a.mul_vec(&x0);
        let x = self.solve(&b);
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        norm2(&r) <= SELF_CHECK_TOL * norm2(&b)
    }

    pub fn kind(&self) -> &'static str {
        match self.factor {
            Factor::Ldlt { .. } => "ldlt",
            Factor::Lu(_) => "lu",
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = Col::<f64>::from_fn(self.n, |i| b[i]);
        match &self.factor {
            Factor::Ldlt { symbolic, values } => {
                let ldlt = LdltRef::<usize, f64>::new(symbolic.as_ref(), values);
                let mut mem = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
                ldlt.solve_in_place_with_conj(Conj::No, x.as_mat_mut(), Par::Seq, MemStack::new(&mut mem));
            }
            Factor::Lu(lu) => {
                x = lu.solve(&x);
            }
        }
        (0..self.n).map(|i| x[i]).collect()
    }
}
