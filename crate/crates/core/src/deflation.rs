//! Shifted deflation: U-norm distances, the deflation factor η and its gradient,
//! and the Sherman–Morrison deflated Newton update.

use serde::{Deserialize, Serialize};

use crate::energy::AssembledSystem;
use crate::error::{Error, Result};
use crate::fem::mesh::QuadPoint;
use crate::fem::Discretization;
use crate::linear::{LinearReport, LinearSolver, SolveContext};
use crate::sparse::{dot, CsrMatrix};
use crate::state::State;

/// Below this U-distance the iterate is taken to be the root itself.
pub const ROOT_COINCIDENCE: f64 = 1e-12;

/// Minimum U-distance for a converged state to count as a new solution.
pub const DEDUP_DISTANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeflationConfig {
    pub p: f64,
    pub alpha: f64,
}

impl Default for DeflationConfig {
    fn default() -> Self {
        Self { p: 3.0, alpha: 1.0 }
    }
}

impl DeflationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !(self.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "deflation needs p ≥ 1 and α ≥ 0, got p = {}, α = {}",
                self.p, self.alpha
            )));
        }
        Ok(())
    }
}

/// Known solutions on the current level.
#[derive(Clone, Debug, Default)]
pub struct DeflationSet {
    pub roots: Vec<State>,
}

impl DeflationSet {
    pub fn new(roots: Vec<State>) -> Self {
        Self { roots }
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }
}

/// Gram features of one local dof: `(slot, coefficient)` pairs over
/// `[n1, n2, n3, φ, div, curl_x, curl_y, curl_z, φx, φy, λ]`.
fn features(q: &QuadPoint, fields: usize) -> Vec<([(usize, f64); 3], usize)> {
    let mut out = Vec::with_capacity(9 * fields + 1);
    for f in 0..fields {
        for j in 0..9 {
            let (v, dx, dy) = (q.value[j], q.dx[j], q.dy[j]);
            out.push(match f {
                0 => ([(0, v), (4, dx), (7, -dy)], 3),
                1 => ([(1, v), (4, dy), (7, dx)], 3),
                2 => ([(2, v), (5, dy), (6, -dx)], 3),
                _ => ([(3, v), (8, dx), (9, dy)], 3),
            });
        }
    }
    out.push(([(10, 1.0), (0, 0.0), (0, 0.0)], 1));
    out
}

const SLOTS: usize = 11;

/// `‖a − b‖²_U` integrated from the stored difference.
pub fn u_distance_sq(disc: &Discretization, a: &State, b: &State) -> Result<f64> {
    a.check_compatible(b)?;
    if a.mesh() != disc.mesh() || a.fields() != disc.fields() {
        return Err(Error::Contract("state does not live on this discretization".into()));
    }
    let mesh = disc.mesh();
    let fields = disc.fields();
    let feats: Vec<_> = disc.element().points.iter().map(|q| features(q, fields)).collect();
    let (av, bv) = (a.values(), b.values());
    let dofs = disc.dofs();
    let mut local = vec![0.0; disc.local_len()];
    let mut total = 0.0;
    for cell in 0..mesh.cell_count() {
        let nodes = mesh.cell_nodes(cell);
        for f in 0..fields {
            for (j, &k) in nodes.iter().enumerate() {
                let s = dofs.stored_index(f, k);
                local[9 * f + j] = av[s] - bv[s];
            }
        }
        let s = dofs.lambda_index(cell);
        local[9 * fields] = av[s] - bv[s];
        for (q, fq) in disc.element().points.iter().zip(&feats) {
            let mut acc = [0.0; SLOTS];
            for (u, (entries, len)) in local.iter().zip(fq) {
                for &(slot, c) in &entries[..*len] {
                    acc[slot] += c * u;
                }
            }
            total += q.weight * acc.iter().map(|v| v * v).sum::<f64>();
        }
    }
    Ok(total)
}

/// Gram matrix of the U inner product on the active space (cached per level).
pub fn gram_matrix(disc: &Discretization) -> &CsrMatrix {
    disc.gram_cache().get_or_init(|| {
        let fields = disc.fields();
        let l = disc.local_len();
        let feats: Vec<_> = disc.element().points.iter().map(|q| features(q, fields)).collect();
        let n = disc.dofs().active_len();
        let mut local = vec![0.0; l * l];
        let mut triplets = Vec::new();
        for cell in 0..disc.mesh().cell_count() {
            local.iter_mut().for_each(|v| *v = 0.0);
            for (q, fq) in disc.element().points.iter().zip(&feats) {
                let mut dense = vec![[0.0; SLOTS]; l];
                for (i, (entries, len)) in fq.iter().enumerate() {
                    for &(slot, c) in &entries[..*len] {
                        dense[i][slot] += c;
                    }
                }
                for i in 0..l {
                    for j in 0..l {
                        let v: f64 = (0..SLOTS).map(|s| dense[i][s] * dense[j][s]).sum();
                        local[i * l + j] += q.weight * v;
                    }
                }
            }
            let dofs = disc.cell_dofs(cell);
            for i in 0..l {
                if dofs[i] == u32::MAX {
                    continue;
                }
                for j in 0..l {
                    let v = local[i * l + j];
                    if dofs[j] != u32::MAX && v != 0.0 {
                        triplets.push((dofs[i] as usize, dofs[j] as usize, v));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(n, n, triplets)
    })
}

fn distances(disc: &Discretization, u: &State, set: &DeflationSet) -> Result<Vec<f64>> {
    set.roots
        .iter()
        .map(|r| {
            let d = u_distance_sq(disc, u, r)?.sqrt();
            if d <= ROOT_COINCIDENCE {
                Err(Error::AtKnownRoot { distance: d })
            } else {
                Ok(d)
            }
        })
        .collect()
}

/// `η(u) = Π (‖u − rᵢ‖_U^{−p} + α)`; 1 for an empty set.
pub fn eta(disc: &Discretization, u: &State, set: &DeflationSet, cfg: &DeflationConfig) -> Result<f64> {
    Ok(distances(disc, u, set)?
        .iter()
        .map(|d| d.powf(-cfg.p) + cfg.alpha)
        .product())
}

/// η and its gradient over the active space.
pub fn eta_with_gradient(
    disc: &Discretization,
    u: &State,
    set: &DeflationSet,
    cfg: &DeflationConfig,
) -> Result<(f64, Vec<f64>)> {
    let dist = distances(disc, u, set)?;
    let factors: Vec<f64> = dist.iter().map(|d| d.powf(-cfg.p) + cfg.alpha).collect();
    let eta: f64 = factors.iter().product();
    let n = disc.dofs().active_len();
    let mut grad = vec![0.0; n];
    if set.is_empty() {
        return Ok((eta, grad));
    }
    let gram = gram_matrix(disc);
    for (i, r) in set.roots.iter().enumerate() {
        let others: f64 = factors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, f)| f)
            .product();
        let diff: Vec<f64> = u.values().iter().zip(r.values()).map(|(a, b)| a - b).collect();
        let md = gram.mul_vec(&disc.dofs().gather(&diff));
        let coef = others * (-cfg.p) * dist[i].powf(-cfg.p - 2.0);
        for (g, m) in grad.iter_mut().zip(md) {
            *g += coef * m;
        }
    }
    Ok((eta, grad))
}

pub fn eta_gradient(
    disc: &Discretization,
    u: &State,
    set: &DeflationSet,
    cfg: &DeflationConfig,
) -> Result<Vec<f64>> {
    Ok(eta_with_gradient(disc, u, set, cfg)?.1)
}

/// Deflated Newton update from a single undeflated solve:
/// `y = J⁻¹ A`, `δ = −y / (1 + dᵀy / η)`.
pub fn deflated_update(
    system: &AssembledSystem,
    d: &[f64],
    eta: f64,
    solver: &mut LinearSolver,
    ctx: Option<SolveContext<'_>>,
) -> Result<(Vec<f64>, LinearReport)> {
    let (y, report) = solver.solve(&system.jacobian, system.primal_len, ctx, &system.residual)?;
    let s = dot(d, &y);
    let denom = 1.0 + s / eta;
    log::trace!("deflated step: η = {eta:.4e}, dᵀy/η = {:.4e}", s / eta);
    if !denom.is_finite() || denom.abs() < 1e-14 {
        return Err(Error::SingularUpdate { denominator: denom });
    }
    let scale = -1.0 / denom;
    Ok((y.iter().map(|v| scale * v).collect(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{hessian, MaterialParams, Model};
    use crate::fem::{build_mesh, BoundaryConditions, DirectorBc};
    use crate::linear::{LinearSolveConfig, PreconditionerKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn disc(level: usize, periodic: bool) -> Discretization {
        let mesh = build_mesh(level, periodic).unwrap();
        let bc = BoundaryConditions {
            director: DirectorBc::Plates {
                bottom: [1.0, 0.0, 0.0],
                top: [1.0, 0.0, 0.0],
            },
            potential: None,
        };
        Discretization::new(&mesh, &bc).unwrap()
    }

    fn random_state(d: &Discretization, rng: &mut ChaCha8Rng) -> State {
        let mut s = State::zeros(d.mesh(), false);
        for v in s.values_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        d.dofs().enforce(s.values_mut());
        s
    }

    #[test]
    fn distance_examples() {
        let d = disc(1, true);
        let a = State::from_fn(d.mesh(), |_, _| [0.0; 3], None);
        assert_eq!(u_distance_sq(&d, &a, &a).unwrap(), 0.0);
        let b = State::from_fn(d.mesh(), |_, _| [0.7, 0.0, 0.0], None);
        assert!((u_distance_sq(&d, &b, &a).unwrap() - 0.49).abs() < 1e-13);
        let d2 = disc(3, true);
        let a = State::zeros(d2.mesh(), false);
        let c = State::from_fn(d2.mesh(), |_, y| [0.0, 0.0, (2.0 * PI * y).sin()], None);
        let exact = 0.5 + 2.0 * PI * PI;
        assert!((u_distance_sq(&d2, &c, &a).unwrap() - exact).abs() < 1e-5 * exact);
    }

    #[test]
    fn gram_matches_quadrature_distance_in_homogeneous_space() {
        let d = disc(0, true);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_state(&d, &mut rng);
        let b = random_state(&d, &mut rng);
        let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
        let g = d.dofs().gather(&diff);
        let via_matrix = dot(&g, &gram_matrix(&d).mul_vec(&g));
        let via_quad = u_distance_sq(&d, &a, &b).unwrap();
        assert!((via_matrix - via_quad).abs() < 1e-12 * via_quad);
        assert!(gram_matrix(&d).max_asymmetry() < 1e-14);
    }

    fn shifted(d: &Discretization, base: &State, dir: &[f64], s: f64) -> State {
        let mut out = base.clone();
        d.dofs().add_active(out.values_mut(), s, dir);
        out
    }

    #[test]
    fn eta_examples() {
        let d = disc(1, true);
        let cfg = DeflationConfig::default();
        let u = State::from_fn(d.mesh(), |_, _| [0.0; 3], None);
        assert_eq!(eta(&d, &u, &DeflationSet::default(), &cfg).unwrap(), 1.0);
        let r1 = State::from_fn(d.mesh(), |_, _| [1.0, 0.0, 0.0], None);
        let r2 = State::from_fn(d.mesh(), |_, _| [2.0, 0.0, 0.0], None);
        let one = DeflationSet::new(vec![r1.clone()]);
        assert!((eta(&d, &u, &one, &cfg).unwrap() - 2.0).abs() < 1e-12);
        let two = DeflationSet::new(vec![r1, r2]);
        assert!((eta(&d, &u, &two, &cfg).unwrap() - 2.25).abs() < 1e-12);
        assert!(matches!(
            eta(&d, &u, &DeflationSet::new(vec![u.clone()]), &cfg),
            Err(Error::AtKnownRoot { .. })
        ));
    }

    #[test]
    fn eta_blows_up_like_distance_power() {
        let d = disc(0, true);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = random_state(&d, &mut rng);
        let dir: Vec<f64> = (0..d.dofs().active_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = DeflationConfig { p: 3.0, alpha: 0.0 };
        let set = DeflationSet::new(vec![r.clone()]);
        let e1 = eta(&d, &shifted(&d, &r, &dir, 1e-2), &set, &cfg).unwrap();
        let e2 = eta(&d, &shifted(&d, &r, &dir, 5e-3), &set, &cfg).unwrap();
        assert!((e2 / e1 - 8.0).abs() < 1e-10 * 8.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = disc(0, true);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = DeflationConfig::default();
        let u = random_state(&d, &mut rng);
        let n = d.dofs().active_len();
        let roots = (0..3)
            .map(|_| {
                let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.05..0.05)).collect();
                shifted(&d, &u, &dir, 1.0)
            })
            .collect();
        let set = DeflationSet::new(roots);
        let grad = eta_gradient(&d, &u, &set, &cfg).unwrap();
        for _ in 0..5 {
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let ep = eta(&d, &shifted(&d, &u, &dir, h), &set, &cfg).unwrap();
            let em = eta(&d, &shifted(&d, &u, &dir, -h), &set, &cfg).unwrap();
            let fd = (ep - em) / (2.0 * h);
            let exact = dot(&grad, &dir);
            assert!((fd - exact).abs() <= 1e-7 * exact.abs(), "{fd} vs {exact}");
        }
    }

    #[test]
    fn far_root_gives_negligible_gradient() {
        let d = disc(0, true);
        let u = State::from_fn(d.mesh(), |_, _| [0.0; 3], None);
        let r = State::from_fn(d.mesh(), |_, _| [1e6, 0.0, 0.0], None);
        let diff: Vec<f64> = u.values().iter().zip(r.values()).map(|(a, b)| a - b).collect();
        let m = gram_matrix(&d).mul_vec(&d.dofs().gather(&diff));
        let mnorm = dot(&m, &m).sqrt();
        let g = eta_gradient(&d, &u, &DeflationSet::new(vec![r]), &DeflationConfig::default()).unwrap();
        assert!(dot(&g, &g).sqrt() <= 1e-12 * mnorm);
    }

    #[test]
    fn zero_gradient_gives_newton_step() {
        let d = disc(0, true);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_state(&d, &mut rng);
        let sys = hessian(&d, &MaterialParams::elastic(1.0, 3.0, 1.2), Model::Nematic, &u).unwrap();
        let mut solver = LinearSolver::new(LinearSolveConfig {
            preconditioner: PreconditionerKind::Direct,
            rel_tol: 1e-12,
            ..Default::default()
        });
        let zero = vec![0.0; sys.residual.len()];
        let (up, _) = deflated_update(&sys, &zero, 3.0, &mut solver, None).unwrap();
        let (y, _) = solver.solve(&sys.jacobian, sys.primal_len, None, &sys.residual).unwrap();
        for (a, b) in up.iter().zip(&y) {
            assert!((a + b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        // doubling d rescales but never rotates the update
        let d1: Vec<f64> = (0..zero.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d2: Vec<f64> = d1.iter().map(|v| 2.0 * v).collect();
        let (u1, _) = deflated_update(&sys, &d1, 3.0, &mut solver, None).unwrap();
        let (u2, _) = deflated_update(&sys, &d2, 3.0, &mut solver, None).unwrap();
        let cos = dot(&u1, &u2) / (dot(&u1, &u1) * dot(&u2, &u2)).sqrt();
        assert!((cos.abs() - 1.0).abs() < 1e-10);
    }

    fn dense_oracle_case(level: usize, roots: usize, seed: u64) {
        use faer::prelude::*;
        let d = disc(level, true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = State::from_fn(
            d.mesh(),
            |x, y| [(3.0 * y).cos(), 0.2 * (x * 6.0).sin(), (3.0 * y).sin()],
            None,
        );
        let mut u = u;
        d.dofs().enforce(u.values_mut());
        let n = d.dofs().active_len();
        let set = DeflationSet::new(
            (0..roots)
                .map(|_| {
                    let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.2..0.2)).collect();
                    shifted(&d, &u, &dir, 1.0)
                })
                .collect(),
        );
        let cfg = DeflationConfig::default();
        let sys = hessian(&d, &MaterialParams::elastic(1.0, 3.0, 1.2), Model::Nematic, &u).unwrap();
        let (eta, grad) = eta_with_gradient(&d, &u, &set, &cfg).unwrap();
        let mut solver = LinearSolver::new(LinearSolveConfig {
            rel_tol: 1e-13,
            ..Default::default()
        });
        let (update, _) = deflated_update(&sys, &grad, eta, &mut solver, None).unwrap();
        assert_eq!(solver.solves(), 1);

        let jd = sys.jacobian.to_dense();
        let a = &sys.residual;
        let m = Mat::<f64>::from_fn(n, n, |i, j| eta * jd[i][j] + a[i] * grad[j]);
        let rhs = Col::<f64>::from_fn(n, |i| -eta * a[i]);
        let x = m.partial_piv_lu().solve(&rhs);
        let xn = (0..n).map(|i| x[i] * x[i]).sum::<f64>().sqrt();
        let err = (0..n).map(|i| (x[i] - update[i]).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-8 * xn, "level {level}, {roots} roots: {err} vs {xn}");
    }

    #[test]
    fn sherman_morrison_matches_dense_solve() {
        for roots in 1..=3 {
            dense_oracle_case(0, roots, 10 + roots as u64);
        }
        dense_oracle_case(1, 2, 21);
    }
}
