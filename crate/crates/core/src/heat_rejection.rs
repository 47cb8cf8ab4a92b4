//! Dry cooling tower (outdoor coil) built from the fan affinity laws and the
//! effectiveness-NTU method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{circuit_mass_flow, Fluids, Switch};

/// Outdoor coil parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcParams {
    /// Overall conductance (W/K).
    pub ua: f64,
    /// Exchanger area (m²).
    pub area: f64,
    pub rpm_max: f64,
    /// Fan power at full speed (W).
    pub p_el_max: f64,
    /// Control voltage at full speed (V).
    pub v_max: f64,
    /// Air mass flow at full speed (kg/s).
    pub m_air_max: f64,
}

impl OcParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("oc.ua", self.ua),
            ("oc.area", self.area),
            ("oc.rpm_max", self.rpm_max),
            ("oc.p_el_max", self.p_el_max),
            ("oc.v_max", self.v_max),
            ("oc.m_air_max", self.m_air_max),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FanState {
    pub rpm: f64,
    /// kg/s
    pub m_air: f64,
    /// W
    pub p_el: f64,
}

/// Fan speed proportional to the control voltage, air flow proportional to
/// speed, power cubic in speed.
pub fn fan_state(p: &OcParams, v_set: f64, switch: Switch) -> Result<FanState> {
    if !(0.0..=p.v_max).contains(&v_set) {
        return Err(Error::InvalidInput(format!(
            "fan voltage {v_set} V outside [0, {}] V",
            p.v_max
        )));
    }
    let rpm = p.rpm_max * v_set / p.v_max;
    let ratio = rpm / p.rpm_max;
    Ok(FanState {
        rpm,
        m_air: rpm * p.m_air_max / p.rpm_max,
        p_el: switch.value() * ratio * ratio * ratio * p.p_el_max,
    })
}

/// Effectiveness `(1 - e^{-NTU(1-Cr)}) / (1 - Cr e^{-NTU(1-Cr)})` with
/// `NTU = UA/C_min`, `Cr = C_min/C_max`.
pub fn ntu_effectiveness(c_min: f64, c_max: f64, ua: f64) -> Result<f64> {
    if !(c_min > 0.0) || !c_min.is_finite() {
        return Err(Error::InvalidInput(format!("C_min must be positive, got {c_min}")));
    }
    if !(c_max >= c_min) {
        return Err(Error::InvalidInput(format!("C_max ({c_max}) must be >= C_min ({c_min})")));
    }
    if !(ua >= 0.0) {
        return Err(Error::InvalidInput(format!("UA must be >= 0, got {ua}")));
    }
    let ntu = ua / c_min;
    let cr = if c_max.is_infinite() { 0.0 } else { c_min / c_max };
    Ok(effectiveness_from_ntu(ntu, cr))
}

/// Effectiveness as a function of NTU and capacity ratio.
pub fn effectiveness_from_ntu(ntu: f64, cr: f64) -> f64 {
    if ntu == 0.0 {
        return 0.0;
    }
    if (1.0 - cr).abs() < 1e-9 {
        return ntu / (1.0 + ntu);
    }
    if cr == 0.0 {
        return -(-ntu).exp_m1();
    }
    let x = ntu * (1.0 - cr);
    let one_minus_e = -(-x).exp_m1();
    one_minus_e / (one_minus_e + (1.0 - cr) * (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OcOutput {
    /// Heat rejected from the brine to the air (W); negative when the coil
    /// acts as a heat source.
    pub p_th: f64,
    pub t_rl: f64,
    pub t_fl: f64,
    pub t_air_out: f64,
    pub p_el: f64,
    /// Brine mass flow (kg/s).
    pub m_dot: f64,
    pub m_air: f64,
}

/// One evaluation of the outdoor coil.
pub fn oc_step(
    p: &OcParams,
    t_rl: f64,
    t_amb: f64,
    v_dot: f64,
    v_set: f64,
    switch: Switch,
    fluids: &Fluids,
) -> Result<OcOutput> {
    let fan = fan_state(p, v_set, switch)?;
    let m_dot = circuit_mass_flow(switch, v_dot, fluids.brine)?;
    let m_air = switch.value() * fan.m_air;
    let c_h = m_dot * fluids.brine.c_p;
    let c_c = m_air * fluids.air.c_p;
    if c_h == 0.0 || c_c == 0.0 {
        return Ok(OcOutput { p_th: 0.0, t_rl, t_fl: t_rl, t_air_out: t_amb, p_el: fan.p_el, m_dot, m_air });
    }
    let (c_min, c_max) = if c_h <= c_c { (c_h, c_c) } else { (c_c, c_h) };
    let eps = ntu_effectiveness(c_min, c_max, p.ua)?;
    let p_th = eps * c_min * (t_rl - t_amb);
    Ok(OcOutput {
        p_th,
        t_rl,
        t_fl: t_rl - p_th / c_h,
        t_air_out: t_amb + p_th / c_c,
        p_el: fan.p_el,
        m_dot,
        m_air,
    })
}
