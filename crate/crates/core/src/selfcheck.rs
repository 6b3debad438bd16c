//! Finite-difference and dense-oracle checks of the assembled derivatives and
//! the deflated update, shared by the `check` command and the test suites.

use std::f64::consts::PI;

use faer::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::deflation::{deflated_update, eta_with_gradient, DeflationConfig, DeflationSet};
use crate::energy::{hessian, lagrangian, residual, MaterialParams, Model};
use crate::error::Result;
use crate::fem::{build_mesh, BoundaryConditions, DirectorBc, Discretization};
use crate::linear::{LinearSolveConfig, LinearSolver};
use crate::sparse::{dot, norm2};
use crate::state::State;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckCase {
    Nematic,
    Electric,
    Cholesteric,
}

impl CheckCase {
    pub const ALL: [CheckCase; 3] = [CheckCase::Nematic, CheckCase::Electric, CheckCase::Cholesteric];

    fn setup(&self) -> (BoundaryConditions, Model, MaterialParams) {
        let director = DirectorBc::Plates { bottom: [1.0, 0.0, 0.0], top: [1.0, 0.0, 0.0] };
        let nematic = MaterialParams::elastic(1.0, 3.0, 1.2);
        match self {
            CheckCase::Nematic => (BoundaryConditions { director, potential: None }, Model::Nematic, nematic),
            CheckCase::Electric => (
                BoundaryConditions { director, potential: Some((0.0, 1.1)) },
                Model::Nematic,
                MaterialParams {
                    k1: 1.0,
                    k2: 0.62903,
                    k3: 1.32258,
                    eps0: 1.42809,
                    eps_perp: 7.0,
                    eps_a: 11.5,
                    t0: 0.0,
                    voltage: 1.1,
                },
            ),
            CheckCase::Cholesteric => (
                BoundaryConditions { director, potential: None },
                Model::Cholesteric,
                MaterialParams { t0: -2.0 * PI, ..nematic },
            ),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DerivativeCheck {
    pub case: CheckCase,
    pub samples: usize,
    /// Largest `|FD − ⟨R, v⟩| / |⟨R, v⟩|` over the samples (h = 1e-5).
    pub max_gradient_error: f64,
    /// Largest `‖FD − J v‖ / ‖J v‖` over the samples (h = 1e-5).
    pub max_hessian_error: f64,
    /// Smallest observed order of the central-difference error under halving h.
    pub gradient_order: f64,
    pub hessian_order: f64,
}

fn random_state(disc: &Discretization, rng: &mut ChaCha8Rng) -> State {
    let mut st = State::zeros(disc.mesh(), disc.dofs().has_potential());
    for v in st.values_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    disc.dofs().enforce(st.values_mut());
    st
}

fn shifted(disc: &Discretization, st: &State, h: f64, dir: &[f64]) -> State {
    let mut out = st.clone();
    disc.dofs().add_active(out.values_mut(), h, dir);
    out
}

/// Residual and Hessian-action FD checks on `samples` random 8×8 states.
pub fn derivative_check(case: CheckCase, samples: usize, seed: u64) -> Result<DerivativeCheck> {
    let (bc, model, p) = case.setup();
    let disc = Discretization::new(&build_mesh(0, true)?, &bc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = disc.dofs().active_len();
    let mut out = DerivativeCheck {
        case,
        samples,
        max_gradient_error: 0.0,
        max_hessian_error: 0.0,
        gradient_order: f64::INFINITY,
        hessian_order: f64::INFINITY,
    };
    for _ in 0..samples {
        let st = random_state(&disc, &mut rng);
        let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sys = hessian(&disc, &p, model, &st)?;
        let exact = dot(&sys.residual, &dir);
        let jv = sys.jacobian.mul_vec(&dir);
        let grad_err = |h: f64| -> Result<f64> {
            let lp = lagrangian(&disc, &p, model, &shifted(&disc, &st, h, &dir))?;
            let lm = lagrangian(&disc, &p, model, &shifted(&disc, &st, -h, &dir))?;
            Ok(((lp - lm) / (2.0 * h) - exact).abs() / exact.abs())
        };
        let hess_err = |h: f64| -> Result<f64> {
            let rp = residual(&disc, &p, model, &shifted(&disc, &st, h, &dir))?;
            let rm = residual(&disc, &p, model, &shifted(&disc, &st, -h, &dir))?;
            let d: Vec<f64> = rp.iter().zip(&rm).zip(&jv).map(|((a, b), j)| (a - b) / (2.0 * h) - j).collect();
            Ok(norm2(&d) / norm2(&jv))
        };
        out.max_gradient_error = out.max_gradient_error.max(grad_err(1e-5)?);
        out.max_hessian_error = out.max_hessian_error.max(hess_err(1e-5)?);
        // truncation-dominated step sizes for the order estimate
        let (h1, h2) = (2e-2, 1e-2);
        out.gradient_order = out.gradient_order.min((grad_err(h1)? / grad_err(h2)?).log2());
        out.hessian_order = out.hessian_order.min((hess_err(h1)? / hess_err(h2)?).log2());
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ShermanMorrisonCheck {
    pub level: usize,
    pub roots: usize,
    /// `‖δ_SM − δ_dense‖ / ‖δ_dense‖`.
    pub relative_error: f64,
}

/// Deflated update by the rank-one formula against an explicit dense solve of
/// `(η J + A ∇ηᵀ) δ = −η A`, on a smooth tilt-twist-like state with roots
/// placed nearby.
pub fn sherman_morrison_check(level: usize, roots: usize, seed: u64) -> Result<ShermanMorrisonCheck> {
    let bc = BoundaryConditions {
        director: DirectorBc::Plates { bottom: [1.0, 0.0, 0.0], top: [1.0, 0.0, 0.0] },
        potential: None,
    };
    let disc = Discretization::new(&build_mesh(level, true)?, &bc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = State::from_fn(disc.mesh(), |x, y| [(3.0 * y).cos(), 0.2 * (x * 6.0).sin(), (3.0 * y).sin()], None);
    disc.dofs().enforce(u.values_mut());
    let n = disc.dofs().active_len();
    let set = DeflationSet::new(
        (0..roots)
            .map(|_| {
                let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.2..0.2)).collect();
                shifted(&disc, &u, 1.0, &dir)
            })
            .collect(),
    );
    let sys = hessian(&disc, &MaterialParams::elastic(1.0, 3.0, 1.2), Model::Nematic, &u)?;
    let (eta, grad) = eta_with_gradient(&disc, &u, &set, &DeflationConfig::default())?;
    let mut solver = LinearSolver::new(LinearSolveConfig { rel_tol: 1e-13, ..Default::default() });
    let (update, _) = deflated_update(&sys, &grad, eta, &mut solver, None)?;

    let jd = sys.jacobian.to_dense();
    let a = &sys.residual;
    let m = Mat::<f64>::from_fn(n, n, |i, j| eta * jd[i][j] + a[i] * grad[j]);
    let rhs = Col::<f64>::from_fn(n, |i| -eta * a[i]);
    let x = m.partial_piv_lu().solve(&rhs);
    let xn = (0..n).map(|i| x[i] * x[i]).sum::<f64>().sqrt();
    let err = (0..n).map(|i| (x[i] - update[i]).powi(2)).sum::<f64>().sqrt();
    Ok(ShermanMorrisonCheck { level, roots, relative_error: err / xn })
}
