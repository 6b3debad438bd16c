//! Geometric nested dissection on the Q2 node grid.
//!
//! Separators are whole node lines with even index (cell edges), so every
//! cell lies entirely on one side. Each λ is eliminated right after the
//! director dofs of its cell-centre node, which keeps the symmetric
//! indefinite factorization pivot-free in practice.

use crate::fem::dofs::DofMap;

/// Active dofs in elimination order (`order[new] = old`).
pub fn nested_dissection(dofs: &DofMap) -> Vec<usize> {
    let mesh = *dofs.mesh();
    let m = mesh.nodes_per_side();
    let mut order = Vec::with_capacity(dofs.active_len());
    let mut emit = |i: usize, j: usize, order: &mut Vec<usize>| {
        let node = mesh.node_index(i, j);
        for f in 0..dofs.fields() {
            let s = dofs.stored_index(f, node);
            if let Some(a) = dofs.active_index(s) {
                if dofs.representative(a) == s {
                    order.push(a);
                }
            }
        }
        if i % 2 == 1 && j % 2 == 1 {
            let cell = mesh.cell_index((i - 1) / 2, (j - 1) / 2);
            order.push(dofs.active_index(dofs.lambda_index(cell)).unwrap());
        }
    };
    if mesh.periodic_x() {
        dissect(1, m - 2, 0, m - 1, &mut emit, &mut order);
        for j in 0..m {
            emit(0, j, &mut order);
        }
        // slave column has no representatives but keeps the loop uniform
        for j in 0..m {
            emit(m - 1, j, &mut order);
        }
    } else {
        dissect(0, m - 1, 0, m - 1, &mut emit, &mut order);
    }
    debug_assert_eq!(order.len(), dofs.active_len());
    order
}

fn dissect(
    i0: usize,
    i1: usize,
    j0: usize,
    j1: usize,
    emit: &mut impl FnMut(usize, usize, &mut Vec<usize>),
    order: &mut Vec<usize>,
) {
    let w = i1 + 1 - i0;
    let h = j1 + 1 - j0;
    if w <= 3 && h <= 3 {
        for i in i0..=i1 {
            for j in j0..=j1 {
                emit(i, j, order);
            }
        }
        return;
    }
    if w >= h {
        let s = even_split(i0, i1);
        dissect(i0, s - 1, j0, j1, emit, order);
        dissect(s + 1, i1, j0, j1, emit, order);
        for j in j0..=j1 {
            emit(s, j, order);
        }
    } else {
        let s = even_split(j0, j1);
        dissect(i0, i1, j0, s - 1, emit, order);
        dissect(i0, i1, s + 1, j1, emit, order);
        for i in i0..=i1 {
            emit(i, s, order);
        }
    }
}

/// Even index strictly inside `(lo, hi)`, as central as possible.
fn even_split(lo: usize, hi: usize) -> usize {
    let mut s = (lo + hi) / 2;
    if s % 2 == 1 {
        s = if s + 1 < hi { s + 1 } else { s - 1 };
    }
    debug_assert!(s > lo && s < hi);
    s
}
