//! Plant and scenario configuration files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heat_rejection::OcParams;
use crate::loads::LoadParams;
use crate::machines::{AdcmParams, ChpParams, RevHpParams};
use crate::storage::{TankGeometry, DEFAULT_OMEGA};
use crate::timeseries::BoundarySpec;
use crate::units::Fluids;

/// Operating mode of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Summer, electricity production: the HTES drives the adsorption chiller.
    #[serde(rename = "SEP")]
    Sep,
    /// Winter, electricity production: the CHP charges the HTES.
    #[serde(rename = "WEP")]
    Wep,
    /// Summer, electricity consumption: the compression chiller cools the CTES.
    #[serde(rename = "SEC")]
    Sec,
    /// Winter, electricity consumption: the heat pump charges the HTES.
    #[serde(rename = "WEC")]
    Wec,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Sep, Mode::Wep, Mode::Sec, Mode::Wec];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sep => "SEP",
            Mode::Wep => "WEP",
            Mode::Sec => "SEC",
            Mode::Wec => "WEC",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown mode \"{s}\" (expected SEP, WEP, SEC or WEC)")))
    }
}

/// Component parameter blocks of the plant. Blocks are optional so that a
/// missing block can be reported by name for the requested mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(default)]
    pub fluids: Fluids,
    pub adcm: Option<AdcmParams>,
    pub chp: Option<ChpParams>,
    pub revhp: Option<RevHpParams>,
    pub oc: Option<OcParams>,
    pub htes: Option<TankGeometry>,
    pub ctes: Option<TankGeometry>,
    pub load_h: Option<LoadParams>,
    pub load_c: Option<LoadParams>,
    /// HTES layer feeding the AdCM high-temperature circuit.
    #[serde(default = "PlantConfig::default_adcm_tap")]
    pub adcm_tap_layer: usize,
    /// Smoothing constant of the tank upwind term (kg²/s²).
    #[serde(default = "PlantConfig::default_omega")]
    pub omega: f64,
    /// Free-form notes carried along with the file.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl PlantConfig {
    fn default_adcm_tap() -> usize {
        70
    }

    fn default_omega() -> f64 {
        DEFAULT_OMEGA
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("plant config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Initial tank temperatures: one uniform value or a full profile, bottom first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TankInit {
    Uniform(f64),
    Profile(Vec<f64>),
}

impl TankInit {
    pub fn profile(&self, layers: usize, name: &str) -> Result<Vec<f64>> {
        let v = match self {
            TankInit::Uniform(t) => vec![*t; layers],
            TankInit::Profile(p) if p.len() == layers => p.clone(),
            TankInit::Profile(p) => {
                return Err(Error::Config(format!(
                    "initial.{name} has {} values for {layers} layers",
                    p.len()
                )))
            }
        };
        if v.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config(format!("initial.{name} contains a non-finite value")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub htes: TankInit,
    pub ctes: TankInit,
    /// Initial CHP thermal power (W).
    #[serde(default)]
    pub chp_p_th: f64,
}

/// Circuit volume flows (m³/h) overriding the plant defaults of the mode's machine.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowOverrides {
    pub ht: Option<f64>,
    pub mt: Option<f64>,
    pub lt: Option<f64>,
    pub oc: Option<f64>,
}

/// On/off schedules; a value of 0.5 or more means on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switches {
    pub adcm: Option<BoundarySpec>,
    pub chp: Option<BoundarySpec>,
    pub revhp: Option<BoundarySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Terminate once the sensor falls to the threshold or below.
    Below,
    /// Terminate once the sensor rises to the threshold or above.
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetPoint {
    /// Sensor channel, e.g. `CTES_T_4`.
    pub sensor: String,
    pub threshold: f64,
    pub direction: Direction,
}

impl SetPoint {
    pub fn reached(&self, value: f64) -> bool {
        match self.direction {
            Direction::Below => value <= self.threshold,
            Direction::Above => value >= self.threshold,
        }
    }
}

fn zero() -> BoundarySpec {
    BoundarySpec::Constant(0.0)
}

fn default_dt() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub initial: InitialState,
    /// Ambient air temperature (°C).
    pub t_amb: BoundarySpec,
    /// Air temperature around the tanks (°C); defaults to `t_amb`.
    #[serde(default)]
    pub t_room: Option<BoundarySpec>,
    /// Heating demand (W).
    #[serde(default = "zero")]
    pub p_load_h: BoundarySpec,
    /// Cooling demand (W).
    #[serde(default = "zero")]
    pub p_load_c: BoundarySpec,
    #[serde(default)]
    pub flows: FlowOverrides,
    /// Outdoor coil fan voltage (V).
    #[serde(default)]
    pub v_set_oc: f64,
    #[serde(default)]
    pub switches: Switches,
    pub setpoint: SetPoint,
    /// Requested integration step (s).
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Maximum simulated duration (s).
    pub horizon: f64,
    /// Directory used to resolve CSV references; set by [`Scenario::from_path`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut s = Self::from_json(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        for (name, v) in [("ht", self.flows.ht), ("mt", self.flows.mt), ("lt", self.flows.lt), ("oc", self.flows.oc)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Config(format!("flows.{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_tokens() {
        assert_eq!("sep".parse::<Mode>().unwrap(), Mode::Sep);
        assert_eq!(serde_json::from_str::<Mode>("\"WEC\"").unwrap(), Mode::Wec);
        assert!(matches!("XYZ".parse::<Mode>(), Err(Error::Config(_))));
        assert!(serde_json::from_str::<Mode>("\"XYZ\"").is_err());
    }

    #[test]
    fn scenario_minimal() {
        let s = Scenario::from_json(
            r#"{"mode": "WEP", "initial": {"htes": 43, "ctes": 15}, "t_amb": 5,
                "setpoint": {"sensor": "HTES_T_1", "threshold": 72, "direction": "above"},
                "horizon": 36000}"#,
        )
        .unwrap();
        assert_eq!(s.dt, 5.0);
        assert_eq!(s.p_load_h, BoundarySpec::Constant(0.0));
        assert!(s.setpoint.reached(72.0));
        assert!(!s.setpoint.reached(71.9));
        s.validate().unwrap();
        assert_eq!(s.initial.htes.profile(3, "htes").unwrap(), vec![43.0; 3]);
        assert!(TankInit::Profile(vec![1.0, 2.0]).profile(3, "htes").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = Scenario::from_json(
            r#"{"mode": "WEP", "initial": {"htes": 43, "ctes": 15}, "t_amb": 5,
                "setpoint": {"sensor": "HTES_T_1", "threshold": 72, "direction": "above"},
                "horizon": 36000, "horizn": 1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("horizn"));
        assert!(PlantConfig::from_json(r#"{"adcmm": null}"#).is_err());
        let empty = PlantConfig::from_json("{}").unwrap();
        assert!(empty.adcm.is_none());
        assert_eq!(empty.adcm_tap_layer, 70);
    }
}
