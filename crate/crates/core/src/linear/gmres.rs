//! Right-preconditioned GMRES (flexible variant: preconditioned vectors are kept).

use crate::sparse::{axpy, dot, norm2};

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True residual ratio `‖b − A x‖ / ‖b‖`.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solve `A x = b` from `x₀ = 0` until `‖b − A x‖ ≤ rel_tol ‖b‖`.
///
/// `apply` computes `y = A v`; `precond` returns `M⁻¹ v`. Restarts only happen
/// if the recurrence estimate and the true residual disagree.
pub fn gmres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return GmresOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let target = rel_tol * bnorm;
    let mut iterations = 0;
    let mut r = b.to_vec();
    let mut ax = vec![0.0; n];
    loop {
        let beta = norm2(&r);
        if beta <= target || iterations >= max_iter {
            return GmresOutcome {
                x,
                iterations,
                relative_residual: beta / bnorm,
                converged: beta <= target,
            };
        }
        let budget = max_iter - iterations;
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut w = vec![0.0; n];
        for j in 0..budget {
            let zj = precond(&v[j]);
            apply(&zj, &mut w);
            z.push(zj);
            iterations += 1;
            let mut col = vec![0.0; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                axpy(-hij, vi, &mut w);
            }
            // one reorthogonalization pass keeps the basis orthogonal at tight tolerances
            for (i, vi) in v.iter().enumerate() {
                let c = dot(&w, vi);
                col[i] += c;
                axpy(-c, vi, &mut w);
            }
            let wn = norm2(&w);
            col[j + 1] = wn;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let rho = col[j].hypot(col[j + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[j] / rho, col[j + 1] / rho) };
            col[j] = rho;
            col[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s * gj);
            h.push(col);
            let breakdown = wn <= 1e-300;
            if g[j + 1].abs() <= target || breakdown || j + 1 == budget {
                break;
            }
            v.push(w.iter().map(|wi| wi / wn).collect());
        }
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= h[l][i] * y[l];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        for (zi, yi) in z.iter().zip(&y) {
            axpy(*yi, zi, &mut x);
        }
        apply(&x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        if k == 0 {
            break;
        }
    }
    let res = norm2(&r);
    GmresOutcome {
        x,
        iterations,
        relative_residual: res / bnorm,
        converged: res <= target,
    }
}
