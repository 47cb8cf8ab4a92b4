//! Shared physical types and the switch-gated circuit rules.
//!
//! Unit contract used across the crate: temperatures in °C, volume flows in
//! m³/h, mass flows in kg/s, powers in W. Only temperature differences enter
//! the balances, so °C is safe everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Density and specific heat of a working fluid, both constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    /// kg/m³
    pub rho: f64,
    /// J/(kg·K)
    pub c_p: f64,
}

impl FluidProps {
    pub const WATER: FluidProps = FluidProps { rho: 1000.0, c_p: 4186.0 };
    /// 34 % glycol-water mixture.
    pub const BRINE: FluidProps = FluidProps { rho: 1040.0, c_p: 3600.0 };
    /// Only `c_p` is used for air; density is that of air at ~20 °C.
    pub const AIR: FluidProps = FluidProps { rho: 1.2, c_p: 1006.0 };

    pub fn new(rho: f64, c_p: f64) -> Result<Self> {
        let f = FluidProps { rho, c_p };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.c_p > 0.0) || !self.rho.is_finite() || !self.c_p.is_finite() {
            return Err(Error::InvalidInput(format!(
                "fluid properties must be positive (rho = {}, c_p = {})",
                self.rho, self.c_p
            )));
        }
        Ok(())
    }

    /// Heat capacity rate (W/K) of a volume flow in m³/h.
    pub fn capacity_rate(&self, v_dot: f64) -> f64 {
        self.rho / 3600.0 * v_dot * self.c_p
    }
}

/// Working-fluid property set used by the plant models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fluids {
    pub water: FluidProps,
    pub brine: FluidProps,
    pub air: FluidProps,
}

impl Default for Fluids {
    fn default() -> Self {
        Fluids { water: FluidProps::WATER, brine: FluidProps::BRINE, air: FluidProps::AIR }
    }
}

impl Fluids {
    pub fn validate(&self) -> Result<()> {
        self.water.validate()?;
        self.brine.validate()?;
        self.air.validate()
    }

    pub fn get(&self, kind: FluidKind) -> FluidProps {
        match kind {
            FluidKind::Water => self.water,
            FluidKind::Brine => self.brine,
        }
    }
}

/// Liquid filling a hydraulic circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluidKind {
    Water,
    Brine,
}

/// Binary machine operation status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Switch {
    Off,
    On,
}

impl Switch {
    pub fn value(self) -> f64 {
        match self {
            Switch::Off => 0.0,
            Switch::On => 1.0,
        }
    }

    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

impl From<bool> for Switch {
    fn from(on: bool) -> Self {
        if on {
            Switch::On
        } else {
            Switch::Off
        }
    }
}

impl From<Switch> for u8 {
    fn from(s: Switch) -> u8 {
        s.value() as u8
    }
}

impl TryFrom<u8> for Switch {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Switch::Off),
            1 => Ok(Switch::On),
            other => Err(format!("switch must be 0 or 1, got {other}")),
        }
    }
}

/// Sign of the temperature change across a machine circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatDirection {
    /// Fluid is heated (feed warmer than return).
    Heating,
    /// Fluid is cooled (feed colder than return).
    Cooling,
}

impl HeatDirection {
    fn sign(self) -> f64 {
        match self {
            HeatDirection::Heating => 1.0,
            HeatDirection::Cooling => -1.0,
        }
    }
}

/// Outputs of one hydraulic circuit of a component.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CircuitResult {
    /// Return-line temperature entering the component (°C).
    pub t_rl: f64,
    /// Feed-line temperature leaving the component (°C).
    pub t_fl: f64,
    /// Volume flow (m³/h).
    pub v_dot: f64,
    /// Mass flow (kg/s), zero when the owning component is off.
    pub m_dot: f64,
    /// Thermal power exchanged in the circuit (W).
    pub p_th: f64,
}

/// Mass flow induced by a machine: `switch · v_dot · rho / 3600`.
pub fn circuit_mass_flow(switch: Switch, v_dot: f64, fluid: FluidProps) -> Result<f64> {
    if v_dot.is_nan() || v_dot < 0.0 {
        return Err(Error::InvalidInput(format!("volume flow must be >= 0, got {v_dot}")));
    }
    Ok(match switch {
        Switch::Off => 0.0,
        Switch::On => v_dot * fluid.rho / 3600.0,
    })
}

/// Feed-line temperature after exchanging `p_th` watts with a circuit of
/// volume flow `v_dot`. Dividing by the volume flow keeps this finite when the
/// machine is off and the mass flow is zero.
pub fn temp_after_heat(
    t_rl: f64,
    p_th: f64,
    v_dot: f64,
    fluid: FluidProps,
    direction: HeatDirection,
) -> Result<f64> {
    if v_dot.is_nan() || v_dot <= 0.0 {
        return Err(Error::InvalidInput(format!("volume flow must be > 0, got {v_dot}")));
    }
    Ok(t_rl + direction.sign() * p_th / fluid.capacity_rate(v_dot))
}

/// Build the full circuit record for a machine circuit.
pub(crate) fn circuit(
    switch: Switch,
    t_rl: f64,
    p_th: f64,
    v_dot: f64,
    fluid: FluidProps,
    direction: HeatDirection,
) -> Result<CircuitResult> {
    Ok(CircuitResult {
        t_rl,
        t_fl: temp_after_heat(t_rl, p_th, v_dot, fluid, direction)?,
        v_dot,
        m_dot: circuit_mass_flow(switch, v_dot, fluid)?,
        p_th,
    })
}
