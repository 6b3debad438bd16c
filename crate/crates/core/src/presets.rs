//! The four experiment presets and dotted-key overrides.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::deflation::DeflationConfig;
use crate::energy::{MaterialParams, Model};
use crate::error::{Error, Result};
use crate::fem::{BoundaryConditions, DirectorBc};
use crate::guesses::GuessFamily;
use crate::linear::LinearSolveConfig;
use crate::newton::{DampingSchedule, NewtonConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    TiltTwist,
    Freedericksz,
    Disclination,
    Cholesteric,
}

impl PresetName {
    pub const ALL: [PresetName; 4] = [
        PresetName::TiltTwist,
        PresetName::Freedericksz,
        PresetName::Disclination,
        PresetName::Cholesteric,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::TiltTwist => "tilt_twist",
            PresetName::Freedericksz => "freedericksz",
            PresetName::Disclination => "disclination",
            PresetName::Cholesteric => "cholesteric",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}'")))
    }
}

/// Full problem and algorithm configuration for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub model: Model,
    pub params: MaterialParams,
    pub periodic_x: bool,
    pub director_bc: DirectorBc,
    /// Solve for φ with `φ = 0` at `y = 0` and `φ = V` at `y = 1`.
    pub electric: bool,
    /// `ω₁ + l Δ₁`, used for every undeflated (continuation) solve.
    pub undeflated: DampingSchedule,
    /// `ω₂ − l Δ₂`, used for deflated discovery solves.
    pub deflated: DampingSchedule,
    pub deflation: DeflationConfig,
    pub newton: NewtonConfig,
    pub linear: LinearSolveConfig,
    pub guesses: GuessFamily,
    /// Guess indices to use, all when empty.
    #[serde(default)]
    pub guess_subset: Vec<usize>,
    /// Discovery solves are deflated against the known solutions.
    pub use_deflation: bool,
    /// Sweeps over the guess list per level; later sweeps rerun only guesses
    /// whose deflation set has grown since their last attempt.
    pub discovery_passes: usize,
    /// A failed deflated attempt is repeated once with the continuation
    /// damping `ω₁ + l Δ₁` before the guess is given up.
    pub damping_fallback: bool,
    /// Finest level of the nested iteration (level 0 is 8×8).
    pub levels: usize,
}

impl ExperimentPreset {
    pub fn new(name: PresetName) -> Self {
        let nematic = MaterialParams::elastic(1.0, 3.0, 1.2);
        let q = PI / 4.0;
        let base = Self {
            name,
            model: Model::Nematic,
            params: nematic.clone(),
            periodic_x: true,
            director_bc: DirectorBc::Plates {
                bottom: [(-q).cos(), 0.0, (-q).sin()],
                top: [q.cos(), 0.0, q.sin()],
            },
            electric: false,
            undeflated: DampingSchedule::increasing(1.0, 0.0),
            deflated: DampingSchedule::decreasing(1.0, 0.5),
            deflation: DeflationConfig::default(),
            newton: NewtonConfig::default(),
            linear: LinearSolveConfig::default(),
            guesses: GuessFamily::SlightTilt,
            guess_subset: Vec::new(),
            use_deflation: true,
            discovery_passes: 2,
            damping_fallback: true,
            levels: 3,
        };
        match name {
            PresetName::TiltTwist => base,
            PresetName::Freedericksz => Self {
                params: MaterialParams {
                    k1: 1.0,
                    k2: 0.62903,
                    k3: 1.32258,
                    eps0: 1.42809,
                    eps_perp: 7.0,
                    eps_a: 11.5,
                    t0: 0.0,
                    voltage: 1.1,
                },
                director_bc: DirectorBc::Plates {
                    bottom: [1.0, 0.0, 0.0],
                    top: [1.0, 0.0, 0.0],
                },
                electric: true,
                ..base
            },
            PresetName::Disclination => Self {
                periodic_x: false,
                director_bc: DirectorBc::FacingCenter,
                undeflated: DampingSchedule::increasing(0.4, 0.2),
                guesses: GuessFamily::Disclination,
                ..base
            },
            PresetName::Cholesteric => Self {
                model: Model::Cholesteric,
                params: MaterialParams {
                    t0: -2.0 * PI,
                    ..nematic
                },
                director_bc: DirectorBc::Plates {
                    bottom: [1.0, 0.0, 0.0],
                    top: [1.0, 0.0, 0.0],
                },
                undeflated: DampingSchedule::increasing(0.2, 0.2),
                deflated: DampingSchedule::decreasing(0.2, 0.0),
                guesses: GuessFamily::Cholesteric,
                ..base
            },
        }
    }

    pub fn boundary_conditions(&self) -> BoundaryConditions {
        BoundaryConditions {
            director: self.director_bc.clone(),
            potential: self.electric.then_some((0.0, self.params.voltage)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate(self.model)?;
        self.undeflated.validate()?;
        self.deflated.validate()?;
        self.deflation.validate()?;
        self.newton.validate()?;
        if self.levels > 6 {
            return Err(Error::Config(format!("at most 6 levels, got {}", self.levels)));
        }
        if self.electric && !(self.params.eps0 > 0.0) {
            return Err(Error::Config("electric problems need ε0 > 0".into()));
        }
        if !self.periodic_x && matches!(self.director_bc, DirectorBc::Plates { .. }) {
            return Err(Error::Config(
                "plate boundary data leaves the side walls free; use periodic_x".into(),
            ));
        }
        Ok(())
    }

    /// Override one field by dotted key, e.g. `params.k2=2.7` or
    /// `deflation.alpha=0.1`. The value is read as JSON, falling back to a
    /// plain string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut doc = serde_json::to_value(&*self).map_err(|e| Error::Parse(e.to_string()))?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) => map
                    .get_mut(part)
                    .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?,
                Value::Array(items) => part
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?,
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            };
        }
        *slot = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        *self = serde_json::from_value(doc)
            .map_err(|e| Error::Config(format!("bad value for '{key}': {e}")))?;
        Ok(())
    }

    /// Apply `key=value` overrides in order.
    pub fn apply_overrides<'a>(&mut self, items: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for item in items {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}
