//! Static initial-guess library. Every guess has λ = 0 and carries the
//! problem's Dirichlet data once built.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::fem::Discretization;
use crate::state::State;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessFamily {
    /// `(cos(π/40), ±sin(π/40), 0)`, with `φ = V y` when electric.
    SlightTilt,
    /// Radial in-plane profile escaping by `±cos(9π/20)`.
    Disclination,
    /// Planar, modulated tilt and helical profiles.
    Cholesteric,
}

impl GuessFamily {
    pub fn count(&self) -> usize {
        match self {
            GuessFamily::SlightTilt | GuessFamily::Disclination => 2,
            GuessFamily::Cholesteric => 3,
        }
    }

    /// Director profile of guess `index` at `(x, y)`.
    pub fn director(&self, index: usize, x: f64, y: f64) -> [f64; 3] {
        match (self, index) {
            (GuessFamily::SlightTilt, 0) => [(PI / 40.0).cos(), (PI / 40.0).sin(), 0.0],
            (GuessFamily::SlightTilt, _) => [(PI / 40.0).cos(), -(PI / 40.0).sin(), 0.0],
            (GuessFamily::Disclination, i) => disclination(x, y, if i == 0 { 1.0 } else { -1.0 }),
            (GuessFamily::Cholesteric, 0) => [(PI / 12.0).cos(), (PI / 12.0).sin(), 0.0],
            (GuessFamily::Cholesteric, 1) => {
                let (xi, zeta) = (7.0 * PI / 16.0, PI / 4.0);
                let a = zeta * (4.0 * PI * x).cos();
                [xi.sin() * a.cos(), xi.sin() * a.sin(), xi.cos()]
            }
            (GuessFamily::Cholesteric, _) => {
                let c = (2.0 * PI * y).cos();
                [c * (PI / 8.0).cos(), c * (PI / 8.0).sin(), (2.0 * PI * y).sin()]
            }
        }
    }

    /// Guess `index` on the given level, with Dirichlet values applied.
    pub fn build(&self, index: usize, disc: &Discretization, voltage: f64) -> State {
        let mesh = disc.mesh();
        let phi = |_: f64, y: f64| voltage * y;
        let potential: Option<&dyn Fn(f64, f64) -> f64> =
            if disc.dofs().has_potential() { Some(&phi) } else { None };
        let mut s = State::from_fn(mesh, |x, y| self.director(index, x, y), potential);
        disc.dofs().enforce(s.values_mut());
        s
    }

    pub fn build_all(&self, disc: &Discretization, voltage: f64) -> Vec<State> {
        (0..self.count()).map(|i| self.build(i, disc, voltage)).collect()
    }
}

fn disclination(x: f64, y: f64, sign: f64) -> [f64; 3] {
    if x == 0.5 && y == 0.5 {
        return [0.0, 0.0, sign];
    }
    let zeta = 9.0 * PI / 20.0;
    let xi = ((0.5 - y) / (0.5 - x)).atan().abs();
    let n1 = zeta.sin() * xi.cos();
    let n2 = zeta.sin() * xi.sin();
    [
        if x <= 0.5 { n1 } else { -n1 },
        if y <= 0.5 { n2 } else { -n2 },
        sign * zeta.cos(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_mesh, BoundaryConditions, DirectorBc};

    #[test]
    fn slight_tilt_pair_is_reflected() {
        let f = GuessFamily::SlightTilt;
        let a = f.director(0, 0.3, 0.4);
        let b = f.director(1, 0.3, 0.4);
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], -b[1]);
        assert!((a[1] - (PI / 40.0).sin()).abs() < 1e-16);
    }

    #[test]
    fn disclination_profile() {
        let f = GuessFamily::Disclination;
        assert_eq!(f.director(0, 0.5, 0.5), [0.0, 0.0, 1.0]);
        assert_eq!(f.director(1, 0.5, 0.5), [0.0, 0.0, -1.0]);
        // on the diagonal the in-plane part points at the centre
        let n = f.director(0, 0.25, 0.25);
        let zeta = 9.0 * PI / 20.0;
        let s = zeta.sin() / 2f64.sqrt();
        assert!((n[0] - s).abs() < 1e-15 && (n[1] - s).abs() < 1e-15);
        assert!((n[2] - zeta.cos()).abs() < 1e-15);
        let m = f.director(1, 0.75, 0.9);
        assert!(m[0] < 0.0 && m[1] < 0.0 && m[2] < 0.0);
        let len: f64 = m.iter().map(|v| v * v).sum();
        assert!((len - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cholesteric_profiles() {
        let f = GuessFamily::Cholesteric;
        assert_eq!(f.count(), 3);
        let g2 = f.director(1, 0.0, 0.3);
        let (xi, zeta) = (7.0 * PI / 16.0, PI / 4.0);
        assert!((g2[0] - xi.sin() * zeta.cos()).abs() < 1e-15);
        let g3 = f.director(2, 0.1, 0.25);
        assert!(g3[0].abs() < 1e-15 && (g3[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn guesses_satisfy_dirichlet_data_and_zero_multiplier() {
        let mesh = build_mesh(1, true).unwrap();
        let bc = BoundaryConditions {
            director: DirectorBc::Plates { bottom: [1.0, 0.0, 0.0], top: [0.0, 0.0, 1.0] },
            potential: Some((0.0, 1.1)),
        };
        let disc = Discretization::new(&mesh, &bc).unwrap();
        for s in GuessFamily::SlightTilt.build_all(&disc, 1.1) {
            let mut e = s.clone();
            disc.dofs().enforce(e.values_mut());
            assert_eq!(e.values(), s.values());
            assert!(s.lambda().iter().all(|&l| l == 0.0));
            let phi = s.potential().unwrap();
            let top = mesh.node_index(5, mesh.nodes_per_side() - 1);
            assert!((phi[top] - 1.1).abs() < 1e-15);
        }
    }
}
