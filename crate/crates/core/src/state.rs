//! Discrete states `u = (n, φ, λ)` bound to a mesh level.

use crate::error::{Error, Result};
use crate::fem::mesh::StructuredMesh;

/// Coefficient vector in the stored layout `[n1 | n2 | n3 | (φ) | λ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    mesh: StructuredMesh,
    fields: usize,
    values: Vec<f64>,
}

impl State {
    pub fn zeros(mesh: &StructuredMesh, has_potential: bool) -> Self {
        let fields = if has_potential { 4 } else { 3 };
        Self {
            mesh: *mesh,
            fields,
            values: vec![0.0; fields * mesh.node_count() + mesh.cell_count()],
        }
    }

    pub fn from_values(mesh: &StructuredMesh, has_potential: bool, values: Vec<f64>) -> Result<Self> {
        let s = Self::zeros(mesh, has_potential);
        if values.len() != s.values.len() {
            return Err(Error::Contract(format!(
                "state vector has {} entries, expected {}",
                values.len(),
                s.values.len()
            )));
        }
        Ok(Self { values, ..s })
    }

    /// Nodal interpolant of a director (and potential) profile; λ = 0.
    pub fn from_fn(
        mesh: &StructuredMesh,
        director: impl Fn(f64, f64) -> [f64; 3],
        potential: Option<&dyn Fn(f64, f64) -> f64>,
    ) -> Self {
        let mut s = Self::zeros(mesh, potential.is_some());
        let nodes = mesh.node_count();
        for node in 0..nodes {
            let (x, y) = mesh.node_coords(node);
            let n = director(x, y);
            for (f, v) in n.iter().enumerate() {
                s.values[f * nodes + node] = *v;
            }
            if let Some(p) = potential {
                s.values[3 * nodes + node] = p(x, y);
            }
        }
        s
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Nodal values of one Q2 field (0..3 director, 3 potential).
    pub fn field(&self, f: usize) -> &[f64] {
        let n = self.mesh.node_count();
        assert!(f < self.fields);
        &self.values[f * n..(f + 1) * n]
    }

    pub fn field_mut(&mut self, f: usize) -> &mut [f64] {
        let n = self.mesh.node_count();
        assert!(f < self.fields);
        &mut self.values[f * n..(f + 1) * n]
    }

    pub fn director_at(&self, node: usize) -> [f64; 3] {
        let n = self.mesh.node_count();
        [
            self.values[node],
            self.values[n + node],
            self.values[2 * n + node],
        ]
    }

    pub fn potential(&self) -> Option<&[f64]> {
        self.has_potential().then(|| self.field(3))
    }

    pub fn lambda(&self) -> &[f64] {
        &self.values[self.fields * self.mesh.node_count()..]
    }

    pub fn lambda_mut(&mut self) -> &mut [f64] {
        let off = self.fields * self.mesh.node_count();
        &mut self.values[off..]
    }

    pub fn check_compatible(&self, other: &State) -> Result<()> {
        if self.mesh != other.mesh || self.fields != other.fields {
            return Err(Error::Contract(format!(
                "states live on different spaces (level {} / {} fields vs level {} / {} fields)",
                self.mesh.level(),
                self.fields,
                other.mesh.level(),
                other.fields
            )));
        }
        Ok(())
    }

    /// Reflect `y ↦ 1 − y` and flip the sign of `n2`.
    pub fn reflected_y(&self) -> State {
        let mesh = self.mesh;
        let m = mesh.nodes_per_side();
        let nc = mesh.cells_per_side();
        let mut out = self.clone();
        for f in 0..self.fields {
            let src = self.field(f);
            let sign = if f == 1 { -1.0 } else { 1.0 };
            let dst = out.field_mut(f);
            for ix in 0..m {
                for iy in 0..m {
                    dst[mesh.node_index(ix, iy)] = sign * src[mesh.node_index(ix, m - 1 - iy)];
                }
            }
        }
        let lam = self.lambda().to_vec();
        let dst = out.lambda_mut();
        for cx in 0..nc {
            for cy in 0..nc {
                dst[mesh.cell_index(cx, cy)] = lam[mesh.cell_index(cx, nc - 1 - cy)];
            }
        }
        out
    }
}

/// Mean over Q2 nodes of the pointwise director length.
pub fn unit_length_violation(state: &State) -> f64 {
    let nodes = state.mesh().node_count();
    let total: f64 = (0..nodes)
        .map(|k| {
            let n = state.director_at(k);
            (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
        })
        .sum();
    total / nodes as f64
}
