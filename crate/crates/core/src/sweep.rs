//! Parameter sweeps over `K2` or the applied voltage, with the maximal tilt
//! angle θ_m and free energy of every branch found at each point.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::driver::run;
use crate::error::{Error, Result};
use crate::presets::ExperimentPreset;
use crate::state::State;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    K2,
    V,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParameter::K2 => "K2",
            SweepParameter::V => "V",
        })
    }
}

impl FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K2" | "k2" => Ok(SweepParameter::K2),
            "V" | "v" => Ok(SweepParameter::V),
            _ => Err(Error::Config(format!("unknown sweep parameter '{s}' (expected K2 or V)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub preset: ExperimentPreset,
    /// Nested-iteration depth per point.
    pub levels: usize,
}

impl SweepSpec {
    pub fn new(preset: ExperimentPreset, parameter: SweepParameter, lo: f64, hi: f64, steps: usize) -> Self {
        Self { parameter, lo, hi, steps, preset, levels: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Config(format!("sweep range [{}, {}] is empty", self.lo, self.hi)));
        }
        if self.steps < 2 {
            return Err(Error::Config(format!("a sweep needs at least 2 steps, got {}", self.steps)));
        }
        if self.parameter == SweepParameter::V && !self.preset.electric {
            return Err(Error::Config(format!("preset {} has no applied field", self.preset.name)));
        }
        Ok(())
    }

    /// Parameter values, endpoints included.
    pub fn values(&self) -> Vec<f64> {
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| if i + 1 == self.steps { self.hi } else { self.lo + i as f64 * h }).collect()
    }

    fn preset_at(&self, value: f64) -> ExperimentPreset {
        let mut p = self.preset.clone();
        p.levels = self.levels;
        match self.parameter {
            SweepParameter::K2 => p.params.k2 = value,
            SweepParameter::V => p.params.voltage = value,
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub parameter: f64,
    pub solution_id: usize,
    pub theta_m: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPointSummary {
    pub parameter: f64,
    pub branches: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub points: Vec<BranchPoint>,
    pub summary: Vec<SweepPointSummary>,
    /// Last value with one branch and the first later value with at least three.
    pub bracket: Option<(f64, f64)>,
}

impl SweepResult {
    pub fn estimate(&self) -> Option<f64> {
        self.bracket.map(|(a, b)| 0.5 * (a + b))
    }

    /// `parameter,solution_id,theta_m,energy`, one row per branch point.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "parameter,solution_id,theta_m,energy")?;
        for p in &self.points {
            writeln!(w, "{:.17e},{},{:.17e},{:.17e}", p.parameter, p.solution_id, p.theta_m, p.energy)?;
        }
        Ok(())
    }
}

/// Largest nodal `|asin(n2)|`.
pub fn theta_m(state: &State) -> f64 {
    state.field(1).iter().map(|&v| v.clamp(-1.0, 1.0).asin().abs()).fold(0.0, f64::max)
}

/// Bracket from per-point branch counts (see [`SweepResult::bracket`]).
pub fn bifurcation_bracket(counts: &[(f64, usize)]) -> Option<(f64, f64)> {
    let first = counts.iter().position(|&(_, c)| c >= 3)?;
    let last = counts[..first].iter().rposition(|&(_, c)| c == 1)?;
    Some((counts[last].0, counts[first].0))
}

pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut points = Vec::new();
    let mut summary = Vec::new();
    for value in spec.values() {
        let preset = spec.preset_at(value);
        match run(&preset) {
            Ok(r) => {
                for (rec, state) in r.report.solutions.iter().zip(&r.states) {
                    points.push(BranchPoint {
                        parameter: value,
                        solution_id: rec.id,
                        theta_m: theta_m(state),
                        energy: rec.final_energy(),
                    });
                }
                log::info!("{} = {value}: {} branches", spec.parameter, r.states.len());
                summary.push(SweepPointSummary { parameter: value, branches: r.states.len(), error: None });
            }
            Err(e) => {
                log::warn!("{} = {value}: {e}", spec.parameter);
                summary.push(SweepPointSummary { parameter: value, branches: 0, error: Some(e.to_string()) });
            }
        }
    }
    let counts: Vec<(f64, usize)> =
        summary.iter().filter(|s| s.error.is_none()).map(|s| (s.parameter, s.branches)).collect();
    Ok(SweepResult { parameter: spec.parameter, points, summary, bracket: bifurcation_bracket(&counts) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_mesh;
    use crate::presets::PresetName;

    /// Tilt of the voltage-driven splay cell from the reduced two-point
    /// problem in `y`, with `n = (cos θ, sin θ, 0)`:
    /// `K(θ) θ'' = −½ K'(θ) θ'² − ε0 εa sinθ cosθ φ'²`, `K = K1 cos² + K3 sin²`,
    /// `φ' = D / (ε⊥ + εa sin² θ)`, `θ(0) = θ(1) = 0`, `φ(1) − φ(0) = V`.
    /// Shooting on `θ'(0)` with `D` matched by an inner bisection, RK4 with fixed steps.
    fn shooting_theta_max(k1: f64, k3: f64, eps0: f64, eps_perp: f64, eps_a: f64, v: f64) -> f64 {
        const N: usize = 4000;
        let integrate = |a: f64, d: f64| -> (f64, f64, f64) {
            let rhs = |s: [f64; 3]| -> [f64; 3] {
                let (sn, cs) = s[0].sin_cos();
                let k = k1 * cs * cs + k3 * sn * sn;
                let dk = 2.0 * (k3 - k1) * sn * cs;
                let phi_y = d / (eps_perp + eps_a * sn * sn);
                [s[1], (-0.5 * dk * s[1] * s[1] - eps0 * eps_a * sn * cs * phi_y * phi_y) / k, phi_y]
            };
            let h = 1.0 / N as f64;
            let mut s = [0.0, a, 0.0];
            let mut top = 0.0f64;
            for _ in 0..N {
                let k1v = rhs(s);
                let add = |s: [f64; 3], k: [f64; 3], c: f64| [s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2]];
                let k2v = rhs(add(s, k1v, 0.5 * h));
                let k3v = rhs(add(s, k2v, 0.5 * h));
                let k4v = rhs(add(s, k3v, h));
                for i in 0..3 {
                    s[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
                }
                top = top.max(s[0].abs());
            }
            (s[0], s[2] - v, top)
        };
        let bisect = |f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64| -> f64 {
            let flo = f(lo);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (f(mid) > 0.0) == (flo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        // inner: flux D matching the voltage for a given slope (φ(1) grows with D)
        let flux = |a: f64| bisect(&|d| integrate(a, d).1, 0.5 * v * eps_perp, 1.5 * v * (eps_perp + eps_a));
        // outer: first sign change of θ(1) away from the trivial slope a = 0
        let end_angle = |a: f64| integrate(a, flux(a)).0;
        let grid: Vec<f64> = (1..=32).map(|k| 0.25 * k as f64).collect();
        let k = grid
            .windows(2)
            .position(|w| (end_angle(w[0]) > 0.0) != (end_angle(w[1]) > 0.0))
            .expect("no tilted solution in the slope range");
        let a = bisect(&end_angle, grid[k], grid[k + 1]);
        let (r0, r1, top) = integrate(a, flux(a));
        assert!(r0.abs() < 1e-8 && r1.abs() < 1e-8, "shooting did not converge: {r0:e} {r1:e}");
        assert!(top > 1e-3, "shooting fell onto the untilted state");
        top
    }

    #[test]
    fn theta_m_of_untilted_states_is_zero() {
        let mesh = build_mesh(0, true).unwrap();
        let s = State::from_fn(&mesh, |_, y| [(y - 0.5).cos(), 0.0, (y - 0.5).sin()], None);
        assert_eq!(theta_m(&s), 0.0);
        let rest = State::from_fn(&mesh, |_, _| [1.0, 0.0, 0.0], Some(&|_, y| 1.1 * y));
        assert_eq!(theta_m(&rest), 0.0);
        let tilted = State::from_fn(&mesh, |_, y| [0.0, if y == 0.5 { 1.2 } else { -0.3 }, 0.0], None);
        assert!((theta_m(&tilted) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn bracket_from_counts() {
        let c = [(0.70, 1), (0.75, 1), (0.77, 1), (0.78, 3), (0.80, 3)];
        assert_eq!(bifurcation_bracket(&c), Some((0.77, 0.78)));
        assert_eq!(bifurcation_bracket(&[(1.0, 1), (2.0, 1)]), None);
        assert_eq!(bifurcation_bracket(&[(1.0, 3), (2.0, 1)]), None);
        // an intermediate count of two does not close the bracket
        assert_eq!(bifurcation_bracket(&[(1.0, 1), (2.0, 2), (3.0, 3)]), Some((1.0, 3.0)));
    }

    #[test]
    fn degenerate_ranges_rejected() {
        let p = ExperimentPreset::new(PresetName::Freedericksz);
        let spec = SweepSpec::new(p.clone(), SweepParameter::V, 0.8, 0.8, 4);
        assert!(matches!(sweep(&spec), Err(Error::Config(_))));
        assert!(SweepSpec::new(p.clone(), SweepParameter::V, 0.8, 0.9, 1).validate().is_err());
        assert!(SweepSpec::new(p, SweepParameter::V, 0.9, 0.8, 4).validate().is_err());
        let t = ExperimentPreset::new(PresetName::TiltTwist);
        assert!(SweepSpec::new(t, SweepParameter::V, 0.7, 0.8, 4).validate().is_err());
        let v = SweepSpec::new(ExperimentPreset::new(PresetName::Freedericksz), SweepParameter::V, 0.70, 0.85, 16).values();
        assert_eq!(v.len(), 16);
        assert!((v[7] - 0.77).abs() < 1e-12 && v[15] == 0.85);
    }

    #[test]
    fn freedericksz_tilt_matches_shooting_oracle() {
        let mut p = ExperimentPreset::new(PresetName::Freedericksz);
        p.levels = 2;
        let q = p.params.clone();
        let oracle = shooting_theta_max(q.k1, q.k3, q.eps0, q.eps_perp, q.eps_a, q.voltage);
        let r = run(&p).unwrap();
        let tilts: Vec<f64> = r.states.iter().map(theta_m).collect();
        let tilted: Vec<f64> = tilts.iter().copied().filter(|&t| t > 0.05).collect();
        assert_eq!(tilted.len(), 2, "tilts {tilts:?}");
        for t in tilted {
            assert!((t - oracle).abs() <= 0.02 * oracle, "θ_m {t} vs oracle {oracle}");
        }
    }
}
