//! Degree-of-freedom enumeration and constraint handling.
//!
//! Stored layout: `[n1 | n2 | n3 | (φ) | λ]`, each Q2 field occupying one block
//! of `node_count` entries and λ one entry per cell. The solver works on the
//! *active* space: free dofs plus periodic masters (slaves folded in), with
//! Dirichlet dofs removed. Active primal dofs come first in stored order, then
//! all λ cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::mesh::StructuredMesh;
use crate::sparse::CsrMatrix;

/// Dirichlet data for the director.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DirectorBc {
    /// Fixed director on the bottom (`y = 0`) and top (`y = 1`) plates.
    Plates { bottom: [f64; 3], top: [f64; 3] },
    /// Whole boundary, director pointing at the domain centre.
    FacingCenter,
}

impl DirectorBc {
    /// Prescribed director at a boundary node, `None` if the node is free.
    pub fn value_at(&self, mesh: &StructuredMesh, node: usize) -> Option<[f64; 3]> {
        let (_, iy) = mesh.node_grid_position(node);
        let last = mesh.nodes_per_side() - 1;
        match self {
            DirectorBc::Plates { bottom, top } => {
                if iy == 0 {
                    Some(*bottom)
                } else if iy == last {
                    Some(*top)
                } else {
                    None
                }
            }
            DirectorBc::FacingCenter => {
                if !mesh.is_boundary_node(node) {
                    return None;
                }
                let (x, y) = mesh.node_coords(node);
                let (cx, cy) = (0.5 - x, 0.5 - y);
                let r = cx.hypot(cy);
                Some([cx / r, cy / r, 0.0])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub director: DirectorBc,
    /// Potential on the bottom and top plates, present for electric problems.
    pub potential: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint {
    Free,
    Dirichlet(f64),
    /// Value tied to another stored dof.
    Periodic { master: usize },
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct DofMap {
    mesh: StructuredMesh,
    fields: usize,
    constraints: Vec<Constraint>,
    stored_to_active: Vec<u32>,
    active_to_stored: Vec<usize>,
    primal_active: usize,
}

impl DofMap {
    /// `fields` counts the Q2 scalar fields: 3 (director) or 4 (director and potential).
    pub fn new(mesh: &StructuredMesh, fields: usize, bc: &BoundaryConditions) -> Result<Self> {
        if fields != 3 && fields != 4 {
            return Err(Error::Contract(format!("unsupported field count {fields}")));
        }
        if (fields == 4) != bc.potential.is_some() {
            return Err(Error::Contract(
                "potential boundary data must be given exactly when φ is present".into(),
            ));
        }
        let nodes = mesh.node_count();
        let m = mesh.nodes_per_side();
        let mut constraints = vec![Constraint::Free; fields * nodes];
        for node in 0..nodes {
            let (ix, iy) = mesh.node_grid_position(node);
            if let Some(v) = bc.director.value_at(mesh, node) {
                for (f, vf) in v.iter().enumerate() {
                    constraints[f * nodes + node] = Constraint::Dirichlet(*vf);
                }
            }
            if let Some((bottom, top)) = bc.potential {
                let slot = &mut constraints[3 * nodes + node];
                if iy == 0 {
                    *slot = Constraint::Dirichlet(bottom);
                } else if iy == m - 1 {
                    *slot = Constraint::Dirichlet(top);
                }
            }
            if mesh.periodic_x() && ix == m - 1 {
                let partner = mesh.node_index(0, iy);
                for f in 0..fields {
                    let s = f * nodes + node;
                    if constraints[s] == Constraint::Free {
                        constraints[s] = Constraint::Periodic {
                            master: f * nodes + partner,
                        };
                    }
                }
            }
        }

        let stored = fields * nodes + mesh.cell_count();
        let mut stored_to_active = vec![NONE; stored];
        let mut active_to_stored = Vec::with_capacity(stored);
        for (s, c) in constraints.iter().enumerate() {
            if *c == Constraint::Free {
                stored_to_active[s] = active_to_stored.len() as u32;
                active_to_stored.push(s);
            }
        }
        for (s, c) in constraints.iter().enumerate() {
            if let Constraint::Periodic { master } = c {
                stored_to_active[s] = stored_to_active[*master];
            }
        }
        let primal_active = active_to_stored.len();
        for s in fields * nodes..stored {
            stored_to_active[s] = active_to_stored.len() as u32;
            active_to_stored.push(s);
        }
        Ok(Self {
            mesh: *mesh,
            fields,
            constraints,
            stored_to_active,
            active_to_stored,
            primal_active,
        })
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn fields(&self) -> usize {
        self.fields
    }

    pub fn has_potential(&self) -> bool {
        self.fields == 4
    }

    pub fn stored_len(&self) -> usize {
        self.stored_to_active.len()
    }

    pub fn active_len(&self) -> usize {
        self.active_to_stored.len()
    }

    /// Number of active director/potential dofs; λ follows them.
    pub fn primal_active_len(&self) -> usize {
        self.primal_active
    }

    #[inline]
    pub fn stored_index(&self, field: usize, node: usize) -> usize {
        field * self.mesh.node_count() + node
    }

    #[inline]
    pub fn lambda_index(&self, cell: usize) -> usize {
        self.fields * self.mesh.node_count() + cell
    }

    pub fn constraint(&self, stored: usize) -> Constraint {
        self.constraints
            .get(stored)
            .copied()
            .unwrap_or(Constraint::Free)
    }

    #[inline]
    pub fn active_index(&self, stored: usize) -> Option<usize> {
        let a = self.stored_to_active[stored];
        (a != NONE).then_some(a as usize)
    }

    /// Stored representative (master) of an active dof.
    pub fn representative(&self, active: usize) -> usize {
        self.active_to_stored[active]
    }

    /// Which field an active dof belongs to; `fields()` denotes λ.
    pub fn active_field(&self, active: usize) -> usize {
        self.active_to_stored[active] / self.mesh.node_count()
    }

    /// Restrict a stored vector to the active space by reading representatives.
    pub fn gather(&self, stored: &[f64]) -> Vec<f64> {
        self.active_to_stored.iter().map(|&s| stored[s]).collect()
    }

    /// Stored-space image of an active update: slaves copy their master,
    /// Dirichlet entries are zero.
    pub fn expand(&self, active: &[f64]) -> Vec<f64> {
        assert_eq!(active.len(), self.active_len());
        self.stored_to_active
            .iter()
            .map(|&a| if a == NONE { 0.0 } else { active[a as usize] })
            .collect()
    }

    /// Transpose of [`expand`](Self::expand): sums slave contributions into masters
    /// and drops Dirichlet rows.
    pub fn condense(&self, stored: &[f64]) -> Vec<f64> {
        assert_eq!(stored.len(), self.stored_len());
        let mut out = vec![0.0; self.active_len()];
        for (s, &a) in self.stored_to_active.iter().enumerate() {
            if a != NONE {
                out[a as usize] += stored[s];
            }
        }
        out
    }

    /// Overwrite Dirichlet entries with their data and slaves with their masters.
    pub fn enforce(&self, stored: &mut [f64]) {
        for (s, c) in self.constraints.iter().enumerate() {
            match c {
                Constraint::Free => {}
                Constraint::Dirichlet(v) => stored[s] = *v,
                Constraint::Periodic { master } => stored[s] = stored[*master],
            }
        }
    }

    /// `u ← u + ω·expand(δ)`.
    pub fn add_active(&self, stored: &mut [f64], omega: f64, active: &[f64]) {
        for (s, &a) in self.stored_to_active.iter().enumerate() {
            if a != NONE {
                stored[s] += omega * active[a as usize];
            }
        }
    }

    /// Extension operator `C` (stored × active) with `expand(x) = C x`.
    pub fn extension_matrix(&self) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(self.stored_len() + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for &a in &self.stored_to_active {
            if a != NONE {
                cols.push(a);
            }
            row_ptr.push(cols.len());
        }
        let vals = vec![1.0; cols.len()];
        CsrMatrix::from_parts(self.stored_len(), self.active_len(), row_ptr, cols, vals)
    }
}

/// Condense a stored-space system to the active space: `(Cᵀ A C, Cᵀ b)`.
///
/// Dirichlet rows and columns disappear (updates there are zero) and periodic
/// slave rows/columns are summed into their masters.
pub fn apply_constraints(
    dofs: &DofMap,
    matrix: &CsrMatrix,
    vector: &[f64],
) -> (CsrMatrix, Vec<f64>) {
    let c = dofs.extension_matrix();
    (matrix.galerkin(&c), dofs.condense(vector))
}
