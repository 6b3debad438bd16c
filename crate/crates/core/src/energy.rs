//! Discrete Frank–Oseen Lagrangian on the slab: energy, first and second variations.
//!
//! Pointwise, with `a = div n`, `c = curl n`, `s = n·c`, `e = n·∇φ`:
//!
//! ```text
//! f = K1 a² + K3 |c|² − (K3 − K2) s² − ε0ε⊥ |∇φ|² − ε0εa e² + 2 K2 t0 s + λ (|n|² − 1)
//! ```
//!
//! The bend/twist part uses `K3 (Z c)·c = K3 |c|² − (K3 − K2)(n·c)²`. Fields do
//! not depend on `z`, so `div n = ∂x n1 + ∂y n2` and
//! `curl n = (∂y n3, −∂x n3, ∂x n2 − ∂y n1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::mesh::QuadPoint;
use crate::fem::Discretization;
use crate::sparse::CsrMatrix;
use crate::state::State;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Nematic,
    Cholesteric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub eps0: f64,
    pub eps_perp: f64,
    pub eps_a: f64,
    pub t0: f64,
    /// Potential difference between the plates; only meaningful with a φ field.
    pub voltage: f64,
}

impl MaterialParams {
    pub fn elastic(k1: f64, k2: f64, k3: f64) -> Self {
        Self {
            k1,
            k2,
            k3,
            eps0: 0.0,
            eps_perp: 0.0,
            eps_a: 0.0,
            t0: 0.0,
            voltage: 0.0,
        }
    }

    pub fn validate(&self, model: Model) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0) {
            return Err(Error::Config(format!(
                "Frank constants must be positive, got ({}, {}, {})",
                self.k1, self.k2, self.k3
            )));
        }
        if model == Model::Nematic && self.t0 != 0.0 {
            return Err(Error::Config("nonzero t0 requires the cholesteric model".into()));
        }
        Ok(())
    }

    /// Threshold voltage of the splay Freedericksz transition, `π √(K1 / (ε0 εa))`.
    pub fn critical_voltage(&self) -> f64 {
        std::f64::consts::PI * (self.k1 / (self.eps0 * self.eps_a)).sqrt()
    }
}

/// Pointwise variables: `n1 n2 n3 n1x n1y n2x n2y n3x n3y φx φy λ`.
pub type Vars = [f64; 12];

const NV: usize = 12;
const PHI_X: usize = 9;
const PHI_Y: usize = 10;
const LAM: usize = 11;

#[derive(Clone, Copy, Debug)]
struct Coeffs {
    k1: f64,
    k2: f64,
    k3: f64,
    e_perp: f64,
    e_a: f64,
    t0: f64,
}

impl Coeffs {
    fn new(p: &MaterialParams, model: Model) -> Self {
        Self {
            k1: p.k1,
            k2: p.k2,
            k3: p.k3,
            e_perp: p.eps0 * p.eps_perp,
            e_a: p.eps0 * p.eps_a,
            t0: if model == Model::Cholesteric { p.t0 } else { 0.0 },
        }
    }
}

#[inline]
fn twist(w: &Vars) -> f64 {
    w[0] * w[8] - w[1] * w[7] + w[2] * (w[5] - w[4])
}

#[inline]
fn twist_grad(w: &Vars) -> Vars {
    let mut g = [0.0; NV];
    g[0] = w[8];
    g[1] = -w[7];
    g[2] = w[5] - w[4];
    g[4] = -w[2];
    g[5] = w[2];
    g[7] = -w[1];
    g[8] = w[0];
    g
}

/// Nonzero entries `(i, j, value)` of the (constant) Hessian of `s`, upper half.
const TWIST_HESS: [(usize, usize, f64); 4] = [(0, 8, 1.0), (1, 7, -1.0), (2, 5, 1.0), (2, 4, -1.0)];

/// Elastic and electric density (no multiplier term).
fn density(c: &Coeffs, w: &Vars) -> f64 {
    let a = w[3] + w[6];
    let curl2 = w[8] * w[8] + w[7] * w[7] + (w[5] - w[4]).powi(2);
    let s = twist(w);
    let grad_phi2 = w[PHI_X] * w[PHI_X] + w[PHI_Y] * w[PHI_Y];
    let e = w[0] * w[PHI_X] + w[1] * w[PHI_Y];
    c.k1 * a * a + c.k3 * curl2 - (c.k3 - c.k2) * s * s - c.e_perp * grad_phi2 - c.e_a * e * e
        + 2.0 * c.k2 * c.t0 * s
}

fn constraint_term(w: &Vars) -> f64 {
    w[LAM] * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2] - 1.0)
}

fn gradient(c: &Coeffs, w: &Vars) -> Vars {
    let mut g = [0.0; NV];
    let a = w[3] + w[6];
    g[3] += 2.0 * c.k1 * a;
    g[6] += 2.0 * c.k1 * a;
    g[8] += 2.0 * c.k3 * w[8];
    g[7] += 2.0 * c.k3 * w[7];
    let c3 = w[5] - w[4];
    g[5] += 2.0 * c.k3 * c3;
    g[4] -= 2.0 * c.k3 * c3;
    let s = twist(w);
    let ds = twist_grad(w);
    let coef = -2.0 * (c.k3 - c.k2) * s + 2.0 * c.k2 * c.t0;
    for k in 0..NV {
        g[k] += coef * ds[k];
    }
    g[PHI_X] -= 2.0 * c.e_perp * w[PHI_X];
    g[PHI_Y] -= 2.0 * c.e_perp * w[PHI_Y];
    let e = w[0] * w[PHI_X] + w[1] * w[PHI_Y];
    g[0] -= 2.0 * c.e_a * e * w[PHI_X];
    g[1] -= 2.0 * c.e_a * e * w[PHI_Y];
    g[PHI_X] -= 2.0 * c.e_a * e * w[0];
    g[PHI_Y] -= 2.0 * c.e_a * e * w[1];
    for i in 0..3 {
        g[i] += 2.0 * w[LAM] * w[i];
    }
    g[LAM] = w[0] * w[0] + w[1] * w[1] + w[2] * w[2] - 1.0;
    g
}

fn hessian_point(c: &Coeffs, w: &Vars) -> [[f64; NV]; NV] {
    let mut h = [[0.0; NV]; NV];
    for &(i, j) in &[(3, 3), (3, 6), (6, 3), (6, 6)] {
        h[i][j] += 2.0 * c.k1;
    }
    h[8][8] += 2.0 * c.k3;
    h[7][7] += 2.0 * c.k3;
    h[5][5] += 2.0 * c.k3;
    h[4][4] += 2.0 * c.k3;
    h[4][5] -= 2.0 * c.k3;
    h[5][4] -= 2.0 * c.k3;
    let s = twist(w);
    let ds = twist_grad(w);
    let kt = c.k3 - c.k2;
    for i in 0..NV {
        if ds[i] == 0.0 {
            continue;
        }
        for j in 0..NV {
            h[i][j] -= 2.0 * kt * ds[i] * ds[j];
        }
    }
    let second = -2.0 * kt * s + 2.0 * c.k2 * c.t0;
    for &(i, j, v) in &TWIST_HESS {
        h[i][j] += second * v;
        h[j][i] += second * v;
    }
    h[PHI_X][PHI_X] -= 2.0 * c.e_perp;
    h[PHI_Y][PHI_Y] -= 2.0 * c.e_perp;
    if c.e_a != 0.0 {
        let e = w[0] * w[PHI_X] + w[1] * w[PHI_Y];
        let mut de = [0.0; NV];
        de[0] = w[PHI_X];
        de[1] = w[PHI_Y];
        de[PHI_X] = w[0];
        de[PHI_Y] = w[1];
        for i in [0, 1, PHI_X, PHI_Y] {
            for j in [0, 1, PHI_X, PHI_Y] {
                h[i][j] -= 2.0 * c.e_a * de[i] * de[j];
            }
        }
        for (i, j) in [(0, PHI_X), (1, PHI_Y)] {
            h[i][j] -= 2.0 * c.e_a * e;
            h[j][i] -= 2.0 * c.e_a * e;
        }
    }
    for i in 0..3 {
        h[i][i] += 2.0 * w[LAM];
        h[i][LAM] += 2.0 * w[i];
        h[LAM][i] += 2.0 * w[i];
    }
    h
}

/// How each local dof enters the pointwise variables at one quadrature point:
/// up to three `(variable, coefficient)` pairs.
#[derive(Clone, Copy, Debug, Default)]
struct Column {
    len: usize,
    entries: [(usize, f64); 3],
}

fn columns(q: &QuadPoint, fields: usize) -> Vec<Column> {
    let mut out = Vec::with_capacity(9 * fields + 1);
    for f in 0..fields {
        for j in 0..9 {
            out.push(if f < 3 {
                Column {
                    len: 3,
                    entries: [(f, q.value[j]), (3 + 2 * f, q.dx[j]), (4 + 2 * f, q.dy[j])],
                }
            } else {
                Column {
                    len: 2,
                    entries: [(PHI_X, q.dx[j]), (PHI_Y, q.dy[j]), (0, 0.0)],
                }
            });
        }
    }
    out.push(Column {
        len: 1,
        entries: [(LAM, 1.0), (0, 0.0), (0, 0.0)],
    });
    out
}

fn check_state(disc: &Discretization, state: &State) -> Result<()> {
    if state.mesh() != disc.mesh() || state.fields() != disc.fields() {
        return Err(Error::Contract(format!(
            "state (level {}, {} fields) does not match discretization (level {}, {} fields)",
            state.mesh().level(),
            state.fields(),
            disc.mesh().level(),
            disc.fields()
        )));
    }
    Ok(())
}

/// Local coefficients of one cell in local ordering (Dirichlet values included).
pub fn local_coefficients(disc: &Discretization, state: &State, cell: usize, out: &mut Vec<f64>) {
    let mesh = disc.mesh();
    let nodes = mesh.cell_nodes(cell);
    out.clear();
    for f in 0..disc.fields() {
        let field = state.field(f);
        out.extend(nodes.iter().map(|&k| field[k]));
    }
    out.push(state.lambda()[cell]);
}

/// Pointwise variables at one quadrature point from local coefficients.
pub fn point_vars(q: &QuadPoint, fields: usize, local: &[f64]) -> Vars {
    let mut w = [0.0; NV];
    for f in 0..fields {
        let u = &local[9 * f..9 * f + 9];
        let (mut v, mut dx, mut dy) = (0.0, 0.0, 0.0);
        for j in 0..9 {
            v += q.value[j] * u[j];
            dx += q.dx[j] * u[j];
            dy += q.dy[j] * u[j];
        }
        if f < 3 {
            w[f] = v;
            w[3 + 2 * f] = dx;
            w[4 + 2 * f] = dy;
        } else {
            w[PHI_X] = dx;
            w[PHI_Y] = dy;
        }
    }
    w[LAM] = local[9 * fields];
    w
}

/// Visit every quadrature point with its weight and pointwise variables.
pub fn for_each_point(
    disc: &Discretization,
    state: &State,
    mut visit: impl FnMut(usize, &QuadPoint, &Vars),
) -> Result<()> {
    check_state(disc, state)?;
    let mut local = Vec::with_capacity(disc.local_len());
    for cell in 0..disc.mesh().cell_count() {
        local_coefficients(disc, state, cell, &mut local);
        for q in &disc.element().points {
            let w = point_vars(q, disc.fields(), &local);
            visit(cell, q, &w);
        }
    }
    Ok(())
}

/// Discrete Lagrangian `∫ f` including the multiplier term (the minimization
/// functional, i.e. twice the physical energy without chiral constant).
pub fn lagrangian(
    disc: &Discretization,
    params: &MaterialParams,
    model: Model,
    state: &State,
) -> Result<f64> {
    let c = Coeffs::new(params, model);
    let mut total = 0.0;
    for_each_point(disc, state, |_, q, w| {
        total += q.weight * (density(&c, w) + constraint_term(w));
    })?;
    Ok(total)
}

/// Reported free energy: half the elastic/electric integral, plus `½ K2 t0² |Ω|`
/// for cholesterics.
pub fn free_energy(
    disc: &Discretization,
    params: &MaterialParams,
    model: Model,
    state: &State,
) -> Result<f64> {
    params.validate(model)?;
    let c = Coeffs::new(params, model);
    let mut total = 0.0;
    for_each_point(disc, state, |_, q, w| total += q.weight * density(&c, w))?;
    let chiral = if model == Model::Cholesteric {
        params.k2 * params.t0 * params.t0
    } else {
        0.0
    };
    Ok(0.5 * (total + chiral))
}

/// First variation over the active space.
pub fn residual(
    disc: &Discretization,
    params: &MaterialParams,
    model: Model,
    state: &State,
) -> Result<Vec<f64>> {
    check_state(disc, state)?;
    let c = Coeffs::new(params, model);
    let fields = disc.fields();
    let cols: Vec<Vec<Column>> = disc.element().points.iter().map(|q| columns(q, fields)).collect();
    let mut out = vec![0.0; disc.dofs().active_len()];
    let mut local = Vec::with_capacity(disc.local_len());
    let mut r = vec![0.0; disc.local_len()];
    for cell in 0..disc.mesh().cell_count() {
        local_coefficients(disc, state, cell, &mut local);
        r.iter_mut().for_each(|v| *v = 0.0);
        for (q, qc) in disc.element().points.iter().zip(&cols) {
            let w = point_vars(q, fields, &local);
            let g = gradient(&c, &w);
            for (ri, col) in r.iter_mut().zip(qc) {
                let mut s = 0.0;
                for &(k, b) in &col.entries[..col.len] {
                    s += g[k] * b;
                }
                *ri += q.weight * s;
            }
        }
        disc.add_local_vector(&mut out, cell, &r);
    }
    Ok(out)
}

/// Newton system over the active space.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub jacobian: CsrMatrix,
    pub residual: Vec<f64>,
    /// Active primal dofs precede the `len − primal_len` multiplier dofs.
    pub primal_len: usize,
}

/// Second variation (and the residual, assembled in the same sweep).
pub fn hessian(
    disc: &Discretization,
    params: &MaterialParams,
    model: Model,
    state: &State,
) -> Result<AssembledSystem> {
    check_state(disc, state)?;
    let c = Coeffs::new(params, model);
    let fields = disc.fields();
    let l = disc.local_len();
    let cols: Vec<Vec<Column>> = disc.element().points.iter().map(|q| columns(q, fields)).collect();
    let mut jac = disc.zero_matrix();
    let mut res = vec![0.0; disc.dofs().active_len()];
    let mut local = Vec::with_capacity(l);
    let mut r = vec![0.0; l];
    let mut kl = vec![0.0; l * l];
    let mut hb = vec![0.0; NV * l];
    for cell in 0..disc.mesh().cell_count() {
        local_coefficients(disc, state, cell, &mut local);
        r.iter_mut().for_each(|v| *v = 0.0);
        kl.iter_mut().for_each(|v| *v = 0.0);
        for (q, qc) in disc.element().points.iter().zip(&cols) {
            let w = point_vars(q, fields, &local);
            let g = gradient(&c, &w);
            let h = hessian_point(&c, &w);
            for (j, col) in qc.iter().enumerate() {
                let mut s = 0.0;
                for &(k, b) in &col.entries[..col.len] {
                    s += g[k] * b;
                }
                r[j] += q.weight * s;
                for (kk, hrow) in h.iter().enumerate() {
                    let mut v = 0.0;
                    for &(m, b) in &col.entries[..col.len] {
                        v += hrow[m] * b;
                    }
                    hb[kk * l + j] = v;
                }
            }
            for (i, ci) in qc.iter().enumerate() {
                let row = &mut kl[i * l..(i + 1) * l];
                for &(k, b) in &ci.entries[..ci.len] {
                    let wb = q.weight * b;
                    let src = &hb[k * l..(k + 1) * l];
                    for (dst, v) in row.iter_mut().zip(src) {
                        *dst += wb * v;
                    }
                }
            }
        }
        disc.add_local_vector(&mut res, cell, &r);
        disc.add_local_matrix(&mut jac, cell, &kl);
    }
    Ok(AssembledSystem {
        jacobian: jac,
        residual: res,
        primal_len: disc.dofs().primal_active_len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_mesh, BoundaryConditions, DirectorBc};
    use crate::sparse::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn plates(potential: Option<(f64, f64)>) -> BoundaryConditions {
        BoundaryConditions {
            director: DirectorBc::Plates {
                bottom: [1.0, 0.0, 0.0],
                top: [1.0, 0.0, 0.0],
            },
            potential,
        }
    }

    fn full_params() -> MaterialParams {
        MaterialParams {
            k1: 1.0,
            k2: 0.62903,
            k3: 1.32258,
            eps0: 1.42809,
            eps_perp: 7.0,
            eps_a: 11.5,
            t0: 0.0,
            voltage: 1.1,
        }
    }

    fn random_state(disc: &Discretization, rng: &mut ChaCha8Rng) -> State {
        let mut st = State::zeros(disc.mesh(), disc.fields() == 4);
        for v in st.values_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        disc.dofs().enforce(st.values_mut());
        st
    }

    fn perturbed(disc: &Discretization, st: &State, h: f64, dir: &[f64]) -> State {
        let mut out = st.clone();
        disc.dofs().add_active(out.values_mut(), h, dir);
        out
    }

    #[test]
    fn uniform_director_has_zero_energy_and_residual() {
        let mesh = build_mesh(0, true).unwrap();
        let disc = Discretization::new(&mesh, &plates(None)).unwrap();
        let st = State::from_fn(&mesh, |_, _| [1.0, 0.0, 0.0], None);
        let p = MaterialParams::elastic(1.0, 3.0, 1.2);
        assert!(free_energy(&disc, &p, Model::Nematic, &st).unwrap().abs() < 1e-14);
        let r = residual(&disc, &p, Model::Nematic, &st).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn stretched_director_constraint_residual() {
        let mesh = build_mesh(0, false).unwrap();
        let bc = BoundaryConditions {
            director: DirectorBc::Plates {
                bottom: [2.0, 0.0, 0.0],
                top: [2.0, 0.0, 0.0],
            },
            potential: None,
        };
        let disc = Discretization::new(&mesh, &bc).unwrap();
        let st = State::from_fn(&mesh, |_, _| [2.0, 0.0, 0.0], None);
        let r = residual(&disc, &MaterialParams::elastic(1.0, 1.0, 1.0), Model::Nematic, &st).unwrap();
        let h2 = mesh.cell_width().powi(2);
        let off = disc.dofs().primal_active_len();
        for v in &r[off..] {
            assert!((v - 3.0 * h2).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesteric_reference_energies() {
        let mesh = build_mesh(2, true).unwrap();
        let disc = Discretization::new(&mesh, &plates(None)).unwrap();
        let mut p = MaterialParams::elastic(1.0, 3.0, 1.2);
        p.t0 = -2.0 * PI;
        let a = PI / 12.0;
        let planar = State::from_fn(&mesh, |_, _| [a.cos(), a.sin(), 0.0], None);
        let e = free_energy(&disc, &p, Model::Cholesteric, &planar).unwrap();
        assert!((e - 6.0 * PI * PI).abs() < 1e-10);
        let t0 = p.t0;
        let helix = State::from_fn(&mesh, |_, y| [(t0 * y).cos(), 0.0, -(t0 * y).sin()], None);
        let e = free_energy(&disc, &p, Model::Cholesteric, &helix).unwrap();
        assert!(e.abs() < 1e-3, "helix energy {e}");
        assert!(free_energy(&disc, &p, Model::Nematic, &helix).is_err());
    }

    #[test]
    fn planar_twist_energy() {
        // n = (cos θ, 0, sin θ) with θ = π(y − ½)/2 rotates about the y axis along y.
        let mesh = build_mesh(2, true).unwrap();
        let bc = BoundaryConditions {
            director: DirectorBc::Plates {
                bottom: [(-PI / 4.0).cos(), 0.0, (-PI / 4.0).sin()],
                top: [(PI / 4.0).cos(), 0.0, (PI / 4.0).sin()],
            },
            potential: None,
        };
        let disc = Discretization::new(&mesh, &bc).unwrap();
        let p = MaterialParams::elastic(1.0, 3.0, 1.2);
        let st = State::from_fn(
            &mesh,
            |_, y| {
                let t = PI / 2.0 * (y - 0.5);
                [t.cos(), 0.0, t.sin()]
            },
            None,
        );
        // |curl n| = n·curl n = θ', so the density reduces to K2 θ'².
        let e = free_energy(&disc, &p, Model::Nematic, &st).unwrap();
        assert!((e - 0.5 * 3.0 * (PI / 2.0).powi(2)).abs() < 1e-5, "{e}");
    }

    #[test]
    fn residual_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mesh = build_mesh(0, true).unwrap();
        for (bc, model, mut p) in [
            (plates(None), Model::Nematic, MaterialParams::elastic(1.0, 3.0, 1.2)),
            (plates(Some((0.0, 1.1))), Model::Nematic, full_params()),
            (plates(None), Model::Cholesteric, {
                let mut q = MaterialParams::elastic(1.0, 3.0, 1.2);
                q.t0 = -2.0 * PI;
                q
            }),
        ] {
            p.voltage = 1.1;
            let disc = Discretization::new(&mesh, &bc).unwrap();
            for _ in 0..3 {
                let st = random_state(&disc, &mut rng);
                let dir: Vec<f64> = (0..disc.dofs().active_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let r = residual(&disc, &p, model, &st).unwrap();
                let exact = dot(&r, &dir);
                let h = 1e-5;
                let lp = lagrangian(&disc, &p, model, &perturbed(&disc, &st, h, &dir)).unwrap();
                let lm = lagrangian(&disc, &p, model, &perturbed(&disc, &st, -h, &dir)).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "{fd} vs {exact}");
            }
        }
    }

    #[test]
    fn hessian_action_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mesh = build_mesh(0, true).unwrap();
        let mut chol = MaterialParams::elastic(1.0, 3.0, 1.2);
        chol.t0 = -2.0 * PI;
        for (bc, model, p) in [
            (plates(None), Model::Nematic, MaterialParams::elastic(1.0, 3.0, 1.2)),
            (plates(Some((0.0, 1.1))), Model::Nematic, full_params()),
            (plates(None), Model::Cholesteric, chol),
        ] {
            let disc = Discretization::new(&mesh, &bc).unwrap();
            let st = random_state(&disc, &mut rng);
            let sys = hessian(&disc, &p, model, &st).unwrap();
            let r0 = residual(&disc, &p, model, &st).unwrap();
            for (a, b) in sys.residual.iter().zip(&r0) {
                assert!((a - b).abs() < 1e-12);
            }
            let dir: Vec<f64> = (0..disc.dofs().active_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let jv = sys.jacobian.mul_vec(&dir);
            let h = 1e-5;
            let rp = residual(&disc, &p, model, &perturbed(&disc, &st, h, &dir)).unwrap();
            let rm = residual(&disc, &p, model, &perturbed(&disc, &st, -h, &dir)).unwrap();
            let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let err: f64 = fd.iter().zip(&jv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = jv.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err <= 1e-5 * scale, "{err} vs {scale}");
            let j = &sys.jacobian;
            assert!(j.max_asymmetry() <= 1e-12 * j.max_abs());
        }
    }

    #[test]
    fn multiplier_blocks_are_structurally_zero() {
        let mesh = build_mesh(0, true).unwrap();
        let disc = Discretization::new(&mesh, &plates(Some((0.0, 1.1)))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = random_state(&disc, &mut rng);
        let sys = hessian(&disc, &full_params(), Model::Nematic, &st).unwrap();
        let dofs = disc.dofs();
        for i in 0..sys.jacobian.nrows() {
            let fi = dofs.active_field(i);
            let (cols, vals) = sys.jacobian.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let fj = dofs.active_field(*c as usize);
                if fi == 4 && (fj == 4 || fj == 3) {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn multiplier_coupling_at_uniform_director() {
        // At n = (1, 0, 0), λ = 0: only n1 couples to λ, with entries 2 ∫ φ_i.
        let mesh = build_mesh(0, false).unwrap();
        let disc = Discretization::new(&mesh, &plates(None)).unwrap();
        let st = State::from_fn(&mesh, |_, _| [1.0, 0.0, 0.0], None);
        let sys = hessian(&disc, &MaterialParams::elastic(1.0, 1.0, 1.0), Model::Nematic, &st).unwrap();
        let dofs = disc.dofs();
        let cell = mesh.cell_index(3, 4);
        let lam = dofs.active_index(dofs.lambda_index(cell)).unwrap();
        let centre = mesh.cell_nodes(cell)[4];
        let h2 = mesh.cell_width().powi(2);
        let n1 = dofs.active_index(dofs.stored_index(0, centre)).unwrap();
        let n2 = dofs.active_index(dofs.stored_index(1, centre)).unwrap();
        // ∫ of the bubble function over a cell is (2/3)² h²
        assert!((sys.jacobian.get(lam, n1) - 2.0 * 4.0 / 9.0 * h2).abs() < 1e-14);
        assert_eq!(sys.jacobian.get(lam, n2), 0.0);
    }

    #[test]
    fn z_identity_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mesh = build_mesh(0, true).unwrap();
        let disc = Discretization::new(&mesh, &plates(None)).unwrap();
        let (k2, k3) = (3.0, 1.2);
        for _ in 0..5 {
            let st = random_state(&disc, &mut rng);
            let mut tensor = 0.0;
            let mut scalar = 0.0;
            for_each_point(&disc, &st, |_, q, w| {
                let n = [w[0], w[1], w[2]];
                let c = [w[8], -w[7], w[5] - w[4]];
                let kappa = k2 / k3;
                let mut zc = [0.0; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        let z = if i == j { 1.0 } else { 0.0 } - (1.0 - kappa) * n[i] * n[j];
                        zc[i] += z * c[j];
                    }
                }
                tensor += q.weight * k3 * (zc[0] * c[0] + zc[1] * c[1] + zc[2] * c[2]);
                let s = n[0] * c[0] + n[1] * c[1] + n[2] * c[2];
                scalar += q.weight * (k3 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]) - (k3 - k2) * s * s);
            })
            .unwrap();
            assert!((tensor - scalar).abs() <= 1e-12 * scalar.abs().max(1.0));
        }
    }

    #[test]
    fn rotation_about_z_preserves_elastic_energy() {
        // Rotate director and domain together by quarter turns about the square's
        // centre: n'(x) = R n(Rᵀ(x − c) + c). Quarter turns map the node grid and
        // the Gauss points onto themselves.
        let mesh = build_mesh(1, false).unwrap();
        let bc = BoundaryConditions {
            director: DirectorBc::FacingCenter,
            potential: None,
        };
        let disc = Discretization::new(&mesh, &bc).unwrap();
        let p = MaterialParams::elastic(1.0, 3.0, 1.2);
        let field = |x: f64, y: f64| {
            let (a, b) = (PI * y * (0.4 + x), 1.3 * x - 0.7 * y * y);
            [a.cos() * b.cos(), a.cos() * b.sin(), a.sin()]
        };
        let mut energies = Vec::new();
        for quarter in 0..4 {
            let rot = quarter as f64 * PI / 2.0;
            let (c, s) = (rot.cos().round(), rot.sin().round());
            let st = State::from_fn(
                &mesh,
                |x, y| {
                    let (dx, dy) = (x - 0.5, y - 0.5);
                    let v = field(0.5 + c * dx + s * dy, 0.5 - s * dx + c * dy);
                    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
                },
                None,
            );
            energies.push(free_energy(&disc, &p, Model::Nematic, &st).unwrap());
        }
        for e in &energies[1..] {
            assert!((e - energies[0]).abs() < 1e-10 * energies[0].abs(), "{energies:?}");
        }
    }

    #[test]
    fn one_constant_reduction() {
        let mesh = build_mesh(2, true).unwrap();
        let disc = Discretization::new(&mesh, &plates(None)).unwrap();
        let p = MaterialParams::elastic(1.7, 1.7, 1.7);
        let st = State::from_fn(
            &mesh,
            |x, y| {
                let (a, b) = (PI * y, 2.0 * PI * x);
                [a.sin() * b.cos(), a.sin() * b.sin(), a.cos()]
            },
            None,
        );
        let mut reduced = 0.0;
        for_each_point(&disc, &st, |_, q, w| {
            let div = w[3] + w[6];
            let curl2 = w[8] * w[8] + w[7] * w[7] + (w[5] - w[4]).powi(2);
            reduced += q.weight * 1.7 * (div * div + curl2);
        })
        .unwrap();
        let e = free_energy(&disc, &p, Model::Nematic, &st).unwrap();
        assert!((2.0 * e - reduced).abs() < 1e-10 * reduced);
    }

    #[test]
    fn critical_voltage_formula() {
        let vc = full_params().critical_voltage();
        assert!((vc - 0.775).abs() < 5e-4);
        assert!((vc - 0.775_216_777_8).abs() < 1e-9);
    }
}
