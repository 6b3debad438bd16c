//! Uniform quadrilateral meshes of the unit square.
//!
//! Level 0 is the 8×8 coarse mesh; every refinement splits each cell into four.
//! Nodes of the biquadratic (Q2) grid and cells are both numbered
//! lexicographically in `(x, y)`: index = `i_x * side + i_y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cells per side on the coarsest level.
pub const COARSE_CELLS: usize = 8;

/// Deepest supported refinement level (512×512 cells).
pub const MAX_LEVEL: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    Bottom,
    Top,
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StructuredMesh {
    level: usize,
    cells_per_side: usize,
    periodic_x: bool,
}

impl StructuredMesh {
    pub fn new(level: usize, periodic_x: bool) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::Config(format!(
                "mesh level {level} outside supported range 0..={MAX_LEVEL}"
            )));
        }
        Ok(Self {
            level,
            cells_per_side: COARSE_CELLS << level,
            periodic_x,
        })
    }

    /// Uniform refinement, or `None` once the refinement limit is reached.
    pub fn refine(&self) -> Option<Self> {
        (self.level < MAX_LEVEL).then(|| Self {
            level: self.level + 1,
            cells_per_side: self.cells_per_side * 2,
            periodic_x: self.periodic_x,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn periodic_x(&self) -> bool {
        self.periodic_x
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.cells_per_side as f64
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_side * self.cells_per_side
    }

    /// Q2 nodes along one side, `2N + 1`.
    pub fn nodes_per_side(&self) -> usize {
        2 * self.cells_per_side + 1
    }

    pub fn node_count(&self) -> usize {
        let m = self.nodes_per_side();
        m * m
    }

    #[inline]
    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        ix * self.nodes_per_side() + iy
    }

    #[inline]
    pub fn node_grid_position(&self, node: usize) -> (usize, usize) {
        let m = self.nodes_per_side();
        (node / m, node % m)
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let (ix, iy) = self.node_grid_position(node);
        let denom = (2 * self.cells_per_side) as f64;
        (ix as f64 / denom, iy as f64 / denom)
    }

    #[inline]
    pub fn cell_index(&self, cx: usize, cy: usize) -> usize {
        cx * self.cells_per_side + cy
    }

    #[inline]
    pub fn cell_grid_position(&self, cell: usize) -> (usize, usize) {
        (cell / self.cells_per_side, cell % self.cells_per_side)
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(&self, cell: usize) -> (f64, f64) {
        let (cx, cy) = self.cell_grid_position(cell);
        let h = self.cell_width();
        (cx as f64 * h, cy as f64 * h)
    }

    /// The nine Q2 nodes of a cell, local index `3 * a + b` for the node at
    /// reference position `(a / 2, b / 2)`.
    pub fn cell_nodes(&self, cell: usize) -> [usize; 9] {
        let (cx, cy) = self.cell_grid_position(cell);
        let mut out = [0; 9];
        for a in 0..3 {
            for b in 0..3 {
                out[3 * a + b] = self.node_index(2 * cx + a, 2 * cy + b);
            }
        }
        out
    }

    /// Boundary facets a node lies on (corners lie on two).
    pub fn node_boundaries(&self, node: usize) -> Vec<Boundary> {
        let (ix, iy) = self.node_grid_position(node);
        let last = self.nodes_per_side() - 1;
        let mut tags = Vec::new();
        if iy == 0 {
            tags.push(Boundary::Bottom);
        }
        if iy == last {
            tags.push(Boundary::Top);
        }
        if ix == 0 {
            tags.push(Boundary::Left);
        }
        if ix == last {
            tags.push(Boundary::Right);
        }
        tags
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (ix, iy) = self.node_grid_position(node);
        let last = self.nodes_per_side() - 1;
        ix == 0 || iy == 0 || ix == last || iy == last
    }

    /// Cell containing a point, clamped to the domain.
    pub fn locate(&self, x: f64, y: f64) -> usize {
        let n = self.cells_per_side;
        let clamp = |v: f64| ((v * n as f64).floor().max(0.0) as usize).min(n - 1);
        self.cell_index(clamp(x), clamp(y))
    }
}

/// Convenience constructor mirroring the operation name used across the crate.
pub fn build_mesh(level: usize, periodic_x: bool) -> Result<StructuredMesh> {
    StructuredMesh::new(level, periodic_x)
}

/// Tensor-product Gauss rule on the reference square `[0, 1]²`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<([f64; 2], f64)>,
}

impl QuadratureRule {
    /// `n × n` Gauss–Legendre rule, exact for polynomials of degree `2n − 1`
    /// in each variable. Supported `n`: 1..=5.
    pub fn gauss(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        for (xa, wa) in nodes.iter().zip(&weights) {
            for (xb, wb) in nodes.iter().zip(&weights) {
                points.push(([*xa, *xb], wa * wb));
            }
        }
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = (1.0f64 / 3.0).sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let s = (6.0f64 / 5.0).sqrt();
            let a = ((3.0 - 2.0 * s) / 7.0).sqrt();
            let b = ((3.0 + 2.0 * s) / 7.0).sqrt();
            let wa = (18.0 + 30.0f64.sqrt()) / 36.0;
            let wb = (18.0 - 30.0f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        5 => {
            let r = (10.0f64 / 7.0).sqrt();
            let a = (5.0 - 2.0 * r).sqrt() / 3.0;
            let b = (5.0 + 2.0 * r).sqrt() / 3.0;
            let wa = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
            let wb = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
            (vec![-b, -a, 0.0, a, b], vec![wb, wa, 128.0 / 225.0, wa, wb])
        }
        _ => panic!("Gauss rule with {n} points per direction is not tabulated"),
    };
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|wi| 0.5 * wi).collect(),
    )
}

/// 1D quadratic Lagrange basis on `[0, 1]` with nodes `0, ½, 1`.
#[inline]
pub fn lagrange_1d(t: f64) -> [f64; 3] {
    [
        2.0 * (t - 0.5) * (t - 1.0),
        -4.0 * t * (t - 1.0),
        2.0 * t * (t - 0.5),
    ]
}

#[inline]
pub fn lagrange_1d_deriv(t: f64) -> [f64; 3] {
    [4.0 * t - 3.0, -8.0 * t + 4.0, 4.0 * t - 1.0]
}

/// Q2 basis values at a reference point, local ordering `3 * a + b`.
pub fn q2_values(xi: f64, eta: f64) -> [f64; 9] {
    let lx = lagrange_1d(xi);
    let ly = lagrange_1d(eta);
    let mut out = [0.0; 9];
    for a in 0..3 {
        for b in 0..3 {
            out[3 * a + b] = lx[a] * ly[b];
        }
    }
    out
}

/// Reference gradients `(∂ξ, ∂η)` of the Q2 basis.
pub fn q2_gradients(xi: f64, eta: f64) -> ([f64; 9], [f64; 9]) {
    let lx = lagrange_1d(xi);
    let ly = lagrange_1d(eta);
    let dx = lagrange_1d_deriv(xi);
    let dy = lagrange_1d_deriv(eta);
    let mut gx = [0.0; 9];
    let mut gy = [0.0; 9];
    for a in 0..3 {
        for b in 0..3 {
            gx[3 * a + b] = dx[a] * ly[b];
            gy[3 * a + b] = lx[a] * dy[b];
        }
    }
    (gx, gy)
}

/// Basis tabulation at one quadrature point of a physical cell of width `h`.
#[derive(Clone, Debug)]
pub struct QuadPoint {
    pub reference: [f64; 2],
    /// Weight already scaled by the cell area `h²`.
    pub weight: f64,
    pub value: [f64; 9],
    pub dx: [f64; 9],
    pub dy: [f64; 9],
}

/// Q2 tabulation on every cell of a uniform mesh (all cells are congruent).
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub points: Vec<QuadPoint>,
    pub cell_width: f64,
}

impl ReferenceElement {
    pub fn new(mesh: &StructuredMesh, rule: &QuadratureRule) -> Self {
        let h = mesh.cell_width();
        let points = rule
            .points
            .iter()
            .map(|&([xi, eta], w)| {
                let (gx, gy) = q2_gradients(xi, eta);
                QuadPoint {
                    reference: [xi, eta],
                    weight: w * h * h,
                    value: q2_values(xi, eta),
                    dx: gx.map(|g| g / h),
                    dy: gy.map(|g| g / h),
                }
            })
            .collect();
        Self {
            points,
            cell_width: h,
        }
    }

    /// Default 3×3 Gauss tabulation.
    pub fn standard(mesh: &StructuredMesh) -> Self {
        Self::new(mesh, &QuadratureRule::gauss(3))
    }
}
