//! Interpolation between nested levels.

use crate::error::{Error, Result};
use crate::fem::dofs::DofMap;
use crate::fem::mesh::{lagrange_1d, StructuredMesh};
use crate::sparse::CsrMatrix;
use crate::state::State;

/// Coarse Q2 nodes (1D index) and weights that reproduce the value at fine node `i_fine`.
fn weights_1d(i_fine: usize, coarse_cells: usize) -> [(usize, f64); 3] {
    let cx = (i_fine / 4).min(coarse_cells - 1);
    let t = (i_fine - 4 * cx) as f64 / 4.0;
    let l = lagrange_1d(t);
    [(2 * cx, l[0]), (2 * cx + 1, l[1]), (2 * cx + 2, l[2])]
}

fn check_levels(coarse: &StructuredMesh, fine: &StructuredMesh) -> Result<()> {
    if coarse.level() + 1 != fine.level() || coarse.periodic_x() != fine.periodic_x() {
        return Err(Error::Contract(format!(
            "cannot transfer from level {} to level {}",
            coarse.level(),
            fine.level()
        )));
    }
    Ok(())
}

/// Evaluate the coarse finite-element expansion on the next finer level and
/// re-apply the fine constraints.
pub fn prolong(state: &State, fine_dofs: &DofMap) -> Result<State> {
    let coarse = state.mesh();
    let fine = fine_dofs.mesh();
    check_levels(coarse, fine)?;
    if state.fields() != fine_dofs.fields() {
        return Err(Error::Contract("field count differs between levels".into()));
    }
    let nc = coarse.cells_per_side();
    let mf = fine.nodes_per_side();
    let mut out = State::zeros(fine, state.has_potential());
    for f in 0..state.fields() {
        let src = state.field(f);
        let dst = out.field_mut(f);
        for ix in 0..mf {
            let wx = weights_1d(ix, nc);
            for iy in 0..mf {
                let wy = weights_1d(iy, nc);
                let mut v = 0.0;
                for (ca, a) in wx {
                    if a == 0.0 {
                        continue;
                    }
                    for (cb, b) in wy {
                        if b != 0.0 {
                            v += a * b * src[coarse.node_index(ca, cb)];
                        }
                    }
                }
                dst[fine.node_index(ix, iy)] = v;
            }
        }
    }
    let lam = state.lambda().to_vec();
    let nf = fine.cells_per_side();
    let dst = out.lambda_mut();
    for cx in 0..nf {
        for cy in 0..nf {
            dst[fine.cell_index(cx, cy)] = lam[coarse.cell_index(cx / 2, cy / 2)];
        }
    }
    fine_dofs.enforce(out.values_mut());
    Ok(out)
}

/// Active-space prolongation `P` (fine active × coarse active): Q2 interpolation
/// for the nodal fields, parent-to-child injection for λ.
pub fn prolongation_matrix(coarse: &DofMap, fine: &DofMap) -> Result<CsrMatrix> {
    let cm = *coarse.mesh();
    let fm = *fine.mesh();
    check_levels(&cm, &fm)?;
    let nc = cm.cells_per_side();
    let fine_nodes = fm.node_count();
    let fields = fine.fields();
    let mut triplets = Vec::new();
    for a in 0..fine.active_len() {
        let s = fine.representative(a);
        let f = s / fine_nodes;
        if f == fields {
            let (cx, cy) = fm.cell_grid_position(s - fields * fine_nodes);
            let parent = coarse.lambda_index(cm.cell_index(cx / 2, cy / 2));
            triplets.push((a, coarse.active_index(parent).unwrap(), 1.0));
            continue;
        }
        let (ix, iy) = fm.node_grid_position(s - f * fine_nodes);
        for (ca, wa) in weights_1d(ix, nc) {
            for (cb, wb) in weights_1d(iy, nc) {
                let w = wa * wb;
                if w == 0.0 {
                    continue;
                }
                if let Some(ac) = coarse.active_index(coarse.stored_index(f, cm.node_index(ca, cb))) {
                    triplets.push((a, ac, w));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(
        fine.active_len(),
        coarse.active_len(),
        triplets,
    ))
}
