//! Structured meshes, Q2/P0 spaces, constraints and grid transfer.

pub mod dofs;
pub mod mesh;
pub mod ordering;
pub mod transfer;

use std::sync::{Arc, OnceLock};

use crate::error::Result;
use crate::sparse::CsrMatrix;

pub use dofs::{apply_constraints, BoundaryConditions, Constraint, DirectorBc, DofMap};
pub use mesh::{build_mesh, QuadratureRule, ReferenceElement, StructuredMesh};
pub use transfer::{prolong, prolongation_matrix};

const NONE: u32 = u32::MAX;

/// Everything needed to assemble on one level: mesh, dofs, basis tabulation,
/// the active sparsity pattern and per-cell scatter maps.
#[derive(Debug)]
pub struct Discretization {
    mesh: StructuredMesh,
    bc: BoundaryConditions,
    dofs: DofMap,
    element: ReferenceElement,
    local_len: usize,
    cell_dofs: Vec<u32>,
    pattern: CsrMatrix,
    scatter: Vec<u32>,
    nd_order: OnceLock<Vec<usize>>,
    gram: OnceLock<CsrMatrix>,
}

impl Discretization {
    pub fn new(mesh: &StructuredMesh, bc: &BoundaryConditions) -> Result<Self> {
        let fields = if bc.potential.is_some() { 4 } else { 3 };
        let dofs = DofMap::new(mesh, fields, bc)?;
        let element = ReferenceElement::standard(mesh);
        let local_len = 9 * fields + 1;
        let cells = mesh.cell_count();
        let field_of = |i: usize| if i == 9 * fields { fields } else { i / 9 };

        let mut cell_dofs = Vec::with_capacity(cells * local_len);
        for cell in 0..cells {
            let nodes = mesh.cell_nodes(cell);
            for f in 0..fields {
                for node in nodes {
                    let a = dofs.active_index(dofs.stored_index(f, node));
                    cell_dofs.push(a.map_or(NONE, |a| a as u32));
                }
            }
            cell_dofs.push(dofs.active_index(dofs.lambda_index(cell)).unwrap() as u32);
        }

        let coupled = |fi: usize, fj: usize| {
            let (lam_i, lam_j) = (fi == fields, fj == fields);
            match (lam_i, lam_j) {
                (true, true) => false,
                (true, false) => fj < 3,
                (false, true) => fi < 3,
                (false, false) => true,
            }
        };

        let n = dofs.active_len();
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        for cell in 0..cells {
            let loc = &cell_dofs[cell * local_len..(cell + 1) * local_len];
            for i in 0..local_len {
                if loc[i] == NONE {
                    continue;
                }
                let row = &mut rows[loc[i] as usize];
                for j in 0..local_len {
                    if loc[j] != NONE && coupled(field_of(i), field_of(j)) {
                        row.push(loc[j]);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(&row);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        let pattern = CsrMatrix::from_parts(n, n, row_ptr, cols, vals);

        let mut scatter = Vec::with_capacity(cells * local_len * local_len);
        for cell in 0..cells {
            let loc = &cell_dofs[cell * local_len..(cell + 1) * local_len];
            for i in 0..local_len {
                for j in 0..local_len {
                    let pos = if loc[i] != NONE
                        && loc[j] != NONE
                        && coupled(field_of(i), field_of(j))
                    {
                        pattern.find(loc[i] as usize, loc[j] as usize).unwrap() as u32
                    } else {
                        NONE
                    };
                    scatter.push(pos);
                }
            }
        }

        Ok(Self {
            mesh: *mesh,
            bc: bc.clone(),
            dofs,
            element,
            local_len,
            cell_dofs,
            pattern,
            scatter,
            nd_order: OnceLock::new(),
            gram: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn boundary_conditions(&self) -> &BoundaryConditions {
        &self.bc
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn element(&self) -> &ReferenceElement {
        &self.element
    }

    pub fn fields(&self) -> usize {
        self.dofs.fields()
    }

    /// Local dofs per cell: nine per Q2 field plus one λ.
    pub fn local_len(&self) -> usize {
        self.local_len
    }

    /// Active indices of a cell's local dofs (`u32::MAX` for Dirichlet dofs).
    pub fn cell_dofs(&self, cell: usize) -> &[u32] {
        &self.cell_dofs[cell * self.local_len..(cell + 1) * self.local_len]
    }

    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    /// A zero matrix with the active sparsity pattern.
    pub fn zero_matrix(&self) -> CsrMatrix {
        self.pattern.clone()
    }

    /// Add a dense row-major local matrix into `global` (which must share the pattern).
    pub fn add_local_matrix(&self, global: &mut CsrMatrix, cell: usize, local: &[f64]) {
        let l2 = self.local_len * self.local_len;
        let pos = &self.scatter[cell * l2..(cell + 1) * l2];
        let vals = global.values_mut();
        for (p, v) in pos.iter().zip(local) {
            if *p != NONE {
                vals[*p as usize] += v;
            }
        }
    }

    pub fn add_local_vector(&self, global: &mut [f64], cell: usize, local: &[f64]) {
        for (a, v) in self.cell_dofs(cell).iter().zip(local) {
            if *a != NONE {
                global[*a as usize] += v;
            }
        }
    }

    /// Fill-reducing elimination order for the active system.
    pub fn nested_dissection(&self) -> &[usize] {
        self.nd_order
            .get_or_init(|| ordering::nested_dissection(&self.dofs))
    }

    pub fn gram_cache(&self) -> &OnceLock<CsrMatrix> {
        &self.gram
    }
}

/// Discretizations of levels `0..=L` plus the active prolongations between them.
#[derive(Debug)]
pub struct LevelStack {
    levels: Vec<Arc<Discretization>>,
    prolongations: Vec<Arc<CsrMatrix>>,
}

impl LevelStack {
    pub fn new(coarse: &StructuredMesh, bc: &BoundaryConditions) -> Result<Self> {
        Ok(Self {
            levels: vec![Arc::new(Discretization::new(coarse, bc)?)],
            prolongations: Vec::new(),
        })
    }

    /// Append the next finer level.
    pub fn refine(&mut self) -> Result<Option<Arc<Discretization>>> {
        let top = self.finest().clone();
        let Some(mesh) = top.mesh().refine() else {
            return Ok(None);
        };
        let fine = Arc::new(Discretization::new(&mesh, top.boundary_conditions())?);
        self.prolongations
            .push(Arc::new(prolongation_matrix(top.dofs(), fine.dofs())?));
        self.levels.push(fine.clone());
        Ok(Some(fine))
    }

    pub fn finest(&self) -> &Arc<Discretization> {
        self.levels.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, i: usize) -> &Arc<Discretization> {
        &self.levels[i]
    }

    /// Prolongation from level `i` to level `i + 1`.
    pub fn prolongation(&self, i: usize) -> &Arc<CsrMatrix> {
        &self.prolongations[i]
    }

    pub fn levels(&self) -> &[Arc<Discretization>] {
        &self.levels
    }

    pub fn prolongations(&self) -> &[Arc<CsrMatrix>] {
        &self.prolongations
    }
}
