//! Static and quasi-static models of the adsorption chiller (AdCM), the CHP
//! unit with first-order thermal dynamics, and the reversible heat pump in
//! heating (HP) and chilling (CCM) mode.
//!
//! Capacity maps are stored in kW as fitted; every power leaving this module
//! is in W.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::PolyMap;
use crate::units::{circuit, CircuitResult, FluidKind, Fluids, HeatDirection, Switch};

fn require_map(map: &PolyMap, n_vars: usize, name: &str) -> Result<()> {
    if map.n_vars() != n_vars {
        return Err(Error::Config(format!(
            "{name} must be a {n_vars}-variable map, got {} variables",
            map.n_vars()
        )));
    }
    Ok(())
}

fn require_positive(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(*v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

fn require_finite(temps: &[f64]) -> Result<()> {
    if temps.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite temperature in {temps:?}")));
    }
    Ok(())
}

/// Adsorption chiller parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcmParams {
    /// Cooling capacity map in kW over (T_rl_LT, T_rl_HT, T_rl_MT).
    pub d: PolyMap,
    /// COP map over the same inputs.
    pub e: PolyMap,
    pub v_dot_lt: f64,
    pub v_dot_mt: f64,
    pub v_dot_ht: f64,
    /// Electric draw while running (W).
    pub p_el_nom: f64,
    #[serde(default = "AdcmParams::default_cop_floor")]
    pub cop_floor: f64,
}

impl AdcmParams {
    fn default_cop_floor() -> f64 {
        0.05
    }

    pub fn validate(&self) -> Result<()> {
        require_map(&self.d, 3, "adcm.d")?;
        require_map(&self.e, 3, "adcm.e")?;
        require_positive(&[
            ("adcm.v_dot_lt", self.v_dot_lt),
            ("adcm.v_dot_mt", self.v_dot_mt),
            ("adcm.v_dot_ht", self.v_dot_ht),
            ("adcm.cop_floor", self.cop_floor),
        ])?;
        if !(self.p_el_nom >= 0.0) {
            return Err(Error::Config("adcm.p_el_nom must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdcmOutput {
    pub lt: CircuitResult,
    pub ht: CircuitResult,
    pub mt: CircuitResult,
    pub cop: f64,
    pub p_el: f64,
}

/// Evaluate the AdCM on its three return-line temperatures.
///
/// Powers follow the static maps whatever the switch state; mass flows and
/// electric draw are gated by the switch.
pub fn adcm_step(
    p: &AdcmParams,
    t_rl_lt: f64,
    t_rl_ht: f64,
    t_rl_mt: f64,
    switch: Switch,
    fluids: &Fluids,
) -> Result<AdcmOutput> {
    require_finite(&[t_rl_lt, t_rl_ht, t_rl_mt])?;
    let x = [t_rl_lt, t_rl_ht, t_rl_mt];
    let p_lt = (p.d.eval(&x)? * 1000.0).max(0.0);
    let cop = p.e.eval(&x)?.max(p.cop_floor);
    let p_ht = p_lt / cop;
    let p_mt = p_ht + p_lt;
    let w = fluids.water;
    Ok(AdcmOutput {
        lt: circuit(switch, t_rl_lt, p_lt, p.v_dot_lt, w, HeatDirection::Cooling)?,
        ht: circuit(switch, t_rl_ht, p_ht, p.v_dot_ht, w, HeatDirection::Cooling)?,
        mt: circuit(switch, t_rl_mt, p_mt, p.v_dot_mt, w, HeatDirection::Heating)?,
        cop,
        p_el: switch.value() * p.p_el_nom,
    })
}

/// CHP parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChpParams {
    /// Volume flow map in m³/h over T_rl.
    pub b: PolyMap,
    /// Thermal time constant (s).
    pub c1: f64,
    pub p_el_nom: f64,
    pub p_th_nom: f64,
    pub eta_el_nom: f64,
    pub eta_th_nom: f64,
    /// Higher calorific value of the fuel (Wh/m³).
    pub hcv_fuel: f64,
    #[serde(default = "ChpParams::default_v_dot_min")]
    pub v_dot_min: f64,
    #[serde(default = "ChpParams::default_v_dot_max")]
    pub v_dot_max: f64,
}

impl ChpParams {
    fn default_v_dot_min() -> f64 {
        0.3
    }

    fn default_v_dot_max() -> f64 {
        1.3
    }

    pub fn validate(&self) -> Result<()> {
        require_map(&self.b, 1, "chp.b")?;
        require_positive(&[
            ("chp.c1", self.c1),
            ("chp.hcv_fuel", self.hcv_fuel),
            ("chp.v_dot_min", self.v_dot_min),
        ])?;
        let eta = self.eta_el_nom + self.eta_th_nom;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Config(format!("chp efficiencies must sum into (0, 1], got {eta}")));
        }
        if self.v_dot_max < self.v_dot_min {
            return Err(Error::Config("chp.v_dot_max must be >= chp.v_dot_min".into()));
        }
        if !(self.p_el_nom >= 0.0 && self.p_th_nom >= 0.0) {
            return Err(Error::Config("chp nominal powers must be >= 0".into()));
        }
        Ok(())
    }
}

/// Thermal state of the CHP.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChpState {
    /// Current thermal power (W).
    pub p_th: f64,
}

/// First-order lag of the thermal power towards `switch · P_th_nom` (W/s).
pub fn chp_dpth_dt(p: &ChpParams, s: ChpState, switch: Switch) -> f64 {
    (p.p_th_nom * switch.value() - s.p_th) / p.c1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChpOutput {
    /// Circuit record with the clamped volume flow.
    pub circuit: CircuitResult,
    /// Unclamped map value (m³/h).
    pub v_dot_raw: f64,
    pub p_el: f64,
    /// Fuel volume flow (m³/h).
    pub v_fuel: f64,
}

pub fn chp_outputs(
    p: &ChpParams,
    s: ChpState,
    t_rl: f64,
    switch: Switch,
    fluids: &Fluids,
) -> Result<ChpOutput> {
    require_finite(&[t_rl])?;
    let v_dot_raw = p.b.eval(&[t_rl])?;
    let v_dot = v_dot_raw.max(p.v_dot_min).min(p.v_dot_max);
    let circuit = circuit(switch, t_rl, s.p_th, v_dot, fluids.water, HeatDirection::Heating)?;
    let v_fuel = switch.value() * (p.p_el_nom + p.p_th_nom)
        / (p.hcv_fuel * (p.eta_el_nom + p.eta_th_nom));
    Ok(ChpOutput { circuit, v_dot_raw, p_el: switch.value() * p.p_el_nom, v_fuel })
}

/// Reversible heat pump parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevHpParams {
    /// Heating capacity map (kW) over (T_rl_HT, T_rl_MT).
    pub g: PolyMap,
    /// Cooling capacity map (kW) over (T_rl_MT, T_rl_LT).
    pub h: PolyMap,
    /// Electric power map (kW) over (evaporator return, condenser return).
    pub i: PolyMap,
    pub v_dot_ht: f64,
    pub v_dot_mt: f64,
    pub v_dot_lt: f64,
    #[serde(default = "RevHpParams::water")]
    pub ht_fluid: FluidKind,
    #[serde(default = "RevHpParams::brine")]
    pub mt_fluid: FluidKind,
    #[serde(default = "RevHpParams::water")]
    pub lt_fluid: FluidKind,
}

impl RevHpParams {
    fn water() -> FluidKind {
        FluidKind::Water
    }

    fn brine() -> FluidKind {
        FluidKind::Brine
    }

    pub fn validate(&self) -> Result<()> {
        require_map(&self.g, 2, "revhp.g")?;
        require_map(&self.h, 2, "revhp.h")?;
        require_map(&self.i, 2, "revhp.i")?;
        require_positive(&[
            ("revhp.v_dot_ht", self.v_dot_ht),
            ("revhp.v_dot_mt", self.v_dot_mt),
            ("revhp.v_dot_lt", self.v_dot_lt),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HpOutput {
    pub ht: CircuitResult,
    pub mt: CircuitResult,
    pub p_el: f64,
    pub cop: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CcmOutput {
    pub mt: CircuitResult,
    pub lt: CircuitResult,
    pub p_el: f64,
    pub cop: f64,
}

/// Heating mode: condenser on HT, evaporator on MT.
pub fn hp_step(
    p: &RevHpParams,
    t_rl_ht: f64,
    t_rl_mt: f64,
    switch: Switch,
    fluids: &Fluids,
) -> Result<HpOutput> {
    require_finite(&[t_rl_ht, t_rl_mt])?;
    let p_ht = p.g.eval(&[t_rl_ht, t_rl_mt])? * 1000.0;
    let p_el = switch.value() * p.i.eval(&[t_rl_mt, t_rl_ht])? * 1000.0;
    let p_mt = p_ht - p_el;
    let cop = if switch.is_on() && p_el != 0.0 { p_ht / p_el } else { 0.0 };
    Ok(HpOutput {
        ht: circuit(switch, t_rl_ht, p_ht, p.v_dot_ht, fluids.get(p.ht_fluid), HeatDirection::Heating)?,
        mt: circuit(switch, t_rl_mt, p_mt, p.v_dot_mt, fluids.get(p.mt_fluid), HeatDirection::Cooling)?,
        p_el,
        cop,
    })
}

/// Chilling mode: evaporator on LT, condenser on MT.
pub fn ccm_step(
    p: &RevHpParams,
    t_rl_mt: f64,
    t_rl_lt: f64,
    switch: Switch,
    fluids: &Fluids,
) -> Result<CcmOutput> {
    require_finite(&[t_rl_mt, t_rl_lt])?;
    let p_lt = p.h.eval(&[t_rl_mt, t_rl_lt])? * 1000.0;
    let p_el = switch.value() * p.i.eval(&[t_rl_lt, t_rl_mt])? * 1000.0;
    let p_mt = p_lt + p_el;
    let cop = if switch.is_on() && p_el != 0.0 { p_lt / p_el } else { 0.0 };
    Ok(CcmOutput {
        mt: circuit(switch, t_rl_mt, p_mt, p.v_dot_mt, fluids.get(p.mt_fluid), HeatDirection::Heating)?,
        lt: circuit(switch, t_rl_lt, p_lt, p.v_dot_lt, fluids.get(p.lt_fluid), HeatDirection::Cooling)?,
        p_el,
        cop,
    })
}
