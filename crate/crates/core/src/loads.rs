//! Heating and cooling loads served from the tanks through an ideal
//! three-way mixing valve in a constant-flow HVAC circuit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::FluidProps;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadParams {
    /// HVAC feed set temperature (°C).
    pub t_fl_hvac: f64,
    /// HVAC circuit mass flow (kg/s).
    pub m_dot_hvac: f64,
    /// Fixed tank-side return temperature. When absent the return follows
    /// the HVAC circuit balance, see [`return_temperature`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_return: Option<f64>,
}

impl LoadParams {
    pub fn new(t_fl_hvac: f64, m_dot_hvac: f64) -> Self {
        LoadParams { t_fl_hvac, m_dot_hvac, t_return: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m_dot_hvac > 0.0) || !self.m_dot_hvac.is_finite() {
            return Err(Error::Config(format!("m_dot_hvac must be positive, got {}", self.m_dot_hvac)));
        }
        if !self.t_fl_hvac.is_finite() {
            return Err(Error::Config("t_fl_hvac must be finite".into()));
        }
        Ok(())
    }
}

fn draw(p: &LoadParams, p_load: f64, delta_t: f64, t_tank: f64, water: FluidProps) -> Result<f64> {
    if !(p_load >= 0.0) || !p_load.is_finite() {
        return Err(Error::InvalidInput(format!("load power must be >= 0, got {p_load}")));
    }
    if p_load == 0.0 {
        return Ok(0.0);
    }
    if !(delta_t > 0.0) {
        return Err(Error::InsufficientTankTemperature { tank: t_tank, hvac: p.t_fl_hvac });
    }
    Ok(p_load * p.m_dot_hvac / (p.m_dot_hvac * water.c_p * delta_t + p_load))
}

/// Mass flow (kg/s) drawn from the hot tank to cover `p_load` (W).
pub fn heating_load_draw(p: &LoadParams, p_load: f64, t_fl_load_h: f64, water: FluidProps) -> Result<f64> {
    draw(p, p_load, t_fl_load_h - p.t_fl_hvac, t_fl_load_h, water)
}

/// Mass flow (kg/s) drawn from the cold tank to cover `p_load` (W).
pub fn cooling_load_draw(p: &LoadParams, p_load: f64, t_fl_load_c: f64, water: FluidProps) -> Result<f64> {
    draw(p, p_load, p.t_fl_hvac - t_fl_load_c, t_fl_load_c, water)
}

/// Tank draw used during simulation: when the tank can no longer serve the
/// load the whole HVAC flow is taken from it and the load goes unmet.
pub fn saturating_draw(p: &LoadParams, p_load: f64, t_tank: f64, heating: bool, water: FluidProps) -> f64 {
    let delta_t = if heating { t_tank - p.t_fl_hvac } else { p.t_fl_hvac - t_tank };
    if p_load <= 0.0 {
        0.0
    } else if delta_t <= 0.0 {
        p.m_dot_hvac
    } else {
        p_load * p.m_dot_hvac / (p.m_dot_hvac * water.c_p * delta_t + p_load)
    }
}

/// Temperature of the water returned from the HVAC circuit to the tank.
///
/// The HVAC loop leaves the load at `T_fl_HVAC ∓ P/(ṁ_HVAC c_p)`; that is
/// the stream split off to the tank by the mixing valve.
pub fn return_temperature(p: &LoadParams, p_load: f64, heating: bool, water: FluidProps) -> f64 {
    if let Some(t) = p.t_return {
        return t;
    }
    let dt = p_load.max(0.0) / (p.m_dot_hvac * water.c_p);
    if heating {
        p.t_fl_hvac - dt
    } else {
        p.t_fl_hvac + dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const W: FluidProps = FluidProps::WATER;

    #[test]
    fn heating_examples() {
        let p = LoadParams::new(35.0, 0.3);
        assert_eq!(heating_load_draw(&p, 0.0, 60.0, W).unwrap(), 0.0);
        assert_relative_eq!(heating_load_draw(&p, 3000.0, 60.0, W).unwrap(), 900.0 / 34395.0, epsilon = 1e-15);
        assert_relative_eq!(heating_load_draw(&p, 3000.0, 60.0, W).unwrap(), 0.026167, epsilon = 1e-6);
        let near = heating_load_draw(&p, 3000.0, 35.0 + 1e-9, W).unwrap();
        assert!((near - 0.3).abs() < 1e-6);
    }

    #[test]
    fn cooling_examples() {
        let p = LoadParams::new(18.0, 0.3);
        assert_eq!(cooling_load_draw(&p, 0.0, 10.0, W).unwrap(), 0.0);
        assert_relative_eq!(cooling_load_draw(&p, 3000.0, 10.0, W).unwrap(), 0.068984, epsilon = 1e-6);
        let h = LoadParams::new(35.0, 0.3);
        assert_eq!(
            cooling_load_draw(&p, 2500.0, 13.0, W).unwrap(),
            heating_load_draw(&h, 2500.0, 40.0, W).unwrap()
        );
    }

    #[test]
    fn insufficient_temperature() {
        let p = LoadParams::new(35.0, 0.3);
        assert!(matches!(
            heating_load_draw(&p, 100.0, 35.0, W),
            Err(Error::InsufficientTankTemperature { .. })
        ));
        let c = LoadParams::new(18.0, 0.3);
        assert!(cooling_load_draw(&c, 100.0, 19.0, W).is_err());
        assert!(heating_load_draw(&p, -1.0, 60.0, W).is_err());
        assert!(LoadParams::new(35.0, 0.0).validate().is_err());
        assert_eq!(saturating_draw(&p, 100.0, 30.0, true, W), 0.3);
    }

    #[test]
    fn return_override() {
        let mut p = LoadParams::new(35.0, 0.3);
        assert_relative_eq!(return_temperature(&p, 1255.8, true, W), 34.0, epsilon = 1e-12);
        p.t_return = Some(30.0);
        assert_eq!(return_temperature(&p, 1255.8, true, W), 30.0);
    }

    proptest! {
        #[test]
        fn draw_bounds_and_monotonicity(p_load in 0.0f64..20000.0, dt in 0.01f64..60.0, dp in 1.0f64..1000.0, ddt in 0.1f64..10.0) {
            let p = LoadParams::new(35.0, 0.3);
            let m = heating_load_draw(&p, p_load, 35.0 + dt, W).unwrap();
            prop_assert!((0.0..=0.3).contains(&m));
            prop_assert!(heating_load_draw(&p, p_load + dp, 35.0 + dt, W).unwrap() > m);
            if p_load > 0.0 {
                prop_assert!(heating_load_draw(&p, p_load, 35.0 + dt + ddt, W).unwrap() < m);
            }
        }

        #[test]
        fn mixing_balance_closes(p_load in 0.0f64..20000.0, dt in 0.5f64..60.0, heating in any::<bool>()) {
            let (p, t_tank) = if heating {
                (LoadParams::new(35.0, 0.3), 35.0 + dt)
            } else {
                (LoadParams::new(18.0, 0.3), 18.0 - dt)
            };
            let m = if heating {
                heating_load_draw(&p, p_load, t_tank, W).unwrap()
            } else {
                cooling_load_draw(&p, p_load, t_tank, W).unwrap()
            };
            let t_ret = return_temperature(&p, p_load, heating, W);
            let delivered = m * W.c_p * (t_tank - t_ret);
            let signed = if heating { p_load } else { -p_load };
            prop_assert!((delivered - signed).abs() <= 1e-9 * (1.0 + p_load));
        }
    }
}
