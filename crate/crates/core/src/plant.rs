//! Plant assembly and time integration.
//!
//! The state vector holds the HTES layers, the CTES layers, the CHP thermal
//! power and six energy accumulators (source, load and loss heat of each
//! tank). Machine outputs are algebraic and are re-evaluated at every
//! Runge–Kutta stage from the stage state.

use std::ops::Range;

use serde::Serialize;

use crate::config::{Mode, PlantConfig, Scenario, SetPoint};
use crate::error::{Error, Result};
use crate::heat_rejection::{oc_step, OcOutput, OcParams};
use crate::loads::{return_temperature, saturating_draw, LoadParams};
use crate::machines::{
    adcm_step, ccm_step, chp_dpth_dt, chp_outputs, hp_step, AdcmOutput, AdcmParams, CcmOutput, ChpOutput, ChpParams,
    ChpState, HpOutput, RevHpParams,
};
use crate::storage::{BoundaryHeat, Orientation, Tank, TankBoundary, TankGeometry};
use crate::timeseries::{Series, TimeSeriesTable};
use crate::units::{Fluids, Switch};

/// Logging interval (s).
pub const LOG_INTERVAL: f64 = 60.0;
pub const HTES_SENSORS: usize = 9;
pub const CTES_SENSORS: usize = 4;

/// Which component is connected where, for a given mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Wiring {
    pub mode: Mode,
    pub htes_source: Option<&'static str>,
    pub htes_load: Option<&'static str>,
    /// 1-based HTES layer feeding the HTES load side.
    pub htes_tap_layer: usize,
    pub ctes_source: Option<&'static str>,
    pub ctes_load: Option<&'static str>,
    pub ctes_tap_layer: usize,
    /// Machine whose medium-temperature circuit is closed through the outdoor coil.
    pub oc_coupled_to: Option<&'static str>,
}

/// Checks that the blocks needed by `mode` are present and returns the wiring.
pub fn assemble(mode: Mode, plant: &PlantConfig) -> Result<Wiring> {
    let mut missing = Vec::new();
    let mut need = |present: bool, key: &str| {
        if !present {
            missing.push(key.to_owned());
        }
    };
    need(plant.htes.is_some(), "htes");
    need(plant.ctes.is_some(), "ctes");
    match mode {
        Mode::Sep => {
            need(plant.adcm.is_some(), "adcm");
            need(plant.oc.is_some(), "oc");
        }
        Mode::Wep => need(plant.chp.is_some(), "chp"),
        Mode::Sec | Mode::Wec => {
            need(plant.revhp.is_some(), "revhp");
            need(plant.oc.is_some(), "oc");
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }
    let htes = plant.htes.as_ref().expect("checked");
    let ctes = plant.ctes.as_ref().expect("checked");
    let (htes_source, htes_load, htes_tap_layer) = match mode {
        Mode::Sep => (plant.chp.as_ref().map(|_| "CHP"), Some("AdCM_HT"), plant.adcm_tap_layer),
        Mode::Wep => (Some("CHP"), Some("Load_H"), htes.load_layer),
        Mode::Sec => (None, Some("Load_H"), htes.load_layer),
        Mode::Wec => (Some("HP_HT"), Some("Load_H"), htes.load_layer),
    };
    let ctes_source = match mode {
        Mode::Sep => Some("AdCM_LT"),
        Mode::Sec => Some("CCM_LT"),
        Mode::Wep | Mode::Wec => None,
    };
    let oc_coupled_to = match mode {
        Mode::Sep => Some("AdCM_MT"),
        Mode::Sec => Some("CCM_MT"),
        Mode::Wec => Some("HP_MT"),
        Mode::Wep => None,
    };
    Ok(Wiring {
        mode,
        htes_source,
        htes_load,
        htes_tap_layer,
        ctes_source,
        ctes_load: Some("Load_C"),
        ctes_tap_layer: ctes.load_layer,
        oc_coupled_to,
    })
}

/// Positions of the state components.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub htes: Range<usize>,
    pub ctes: Range<usize>,
    pub chp: usize,
    /// HTES source, load and loss heat (J).
    pub htes_energy: Range<usize>,
    /// CTES source, load and loss heat (J).
    pub ctes_energy: Range<usize>,
    pub len: usize,
}

impl StateLayout {
    fn new(nh: usize, nc: usize) -> Self {
        let chp = nh + nc;
        StateLayout {
            htes: 0..nh,
            ctes: nh..chp,
            chp,
            htes_energy: chp + 1..chp + 4,
            ctes_energy: chp + 4..chp + 7,
            len: chp + 7,
        }
    }

    fn describe(&self, i: usize) -> String {
        if self.htes.contains(&i) {
            format!("HTES layer {}", i - self.htes.start + 1)
        } else if self.ctes.contains(&i) {
            format!("CTES layer {}", i - self.ctes.start + 1)
        } else if i == self.chp {
            "CHP thermal state".to_owned()
        } else {
            format!("energy accumulator {}", i - self.chp)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TankId {
    Htes,
    Ctes,
}

#[derive(Debug, Clone, PartialEq)]
struct Sensor {
    tank: TankId,
    layers: Range<usize>,
}

/// Load circuit operating point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LoadFlow {
    /// Demanded power (W).
    pub demand: f64,
    /// Mass flow drawn from the tank (kg/s).
    pub m_dot: f64,
    pub t_feed: f64,
    pub t_return: f64,
    /// Power actually taken from the tank (W).
    pub delivered: f64,
}

/// Algebraic outputs of the plant at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Eval {
    pub t_amb: f64,
    pub t_room: f64,
    pub adcm: Option<AdcmOutput>,
    pub chp: Option<ChpOutput>,
    pub hp: Option<HpOutput>,
    pub ccm: Option<CcmOutput>,
    pub oc: Option<OcOutput>,
    pub load_h: LoadFlow,
    pub load_c: LoadFlow,
    pub htes: TankBoundary,
    pub ctes: TankBoundary,
    pub htes_heat: BoundaryHeat,
    pub ctes_heat: BoundaryHeat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminationReason {
    Setpoint,
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Termination {
    pub reason: TerminationReason,
    /// Set-point crossing time or end of the horizon (s).
    pub time_s: f64,
    pub time_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TankAudit {
    pub tank: &'static str,
    pub enthalpy_change_j: f64,
    pub source_j: f64,
    pub load_j: f64,
    pub loss_j: f64,
    pub residual_j: f64,
    /// Residual over the gross boundary heat.
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub termination: Termination,
    pub setpoint: SetPoint,
    pub dt_requested_s: f64,
    pub dt_s: f64,
    pub dt_max_s: f64,
    pub steps: u64,
    pub wiring: Wiring,
    pub energy_audit: Vec<TankAudit>,
}

/// Simulation output: the 60 s log and the run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub table: TimeSeriesTable,
    pub summary: Summary,
}

/// A scenario bound to a plant, ready to integrate.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub mode: Mode,
    pub wiring: Wiring,
    pub fluids: Fluids,
    pub htes: Tank,
    pub ctes: Tank,
    adcm: Option<AdcmParams>,
    chp: Option<ChpParams>,
    revhp: Option<RevHpParams>,
    oc: Option<OcParams>,
    load_h: Option<LoadParams>,
    load_c: Option<LoadParams>,
    omega: f64,
    t_amb: Series,
    t_room: Series,
    p_load_h: Series,
    p_load_c: Series,
    sw_adcm: Series,
    sw_chp: Series,
    sw_revhp: Series,
    v_set_oc: f64,
    oc_v_dot: f64,
    setpoint: SetPoint,
    sensor: Sensor,
    dt_requested: f64,
    substeps: usize,
    dt_max: f64,
    horizon: f64,
    initial: Vec<f64>,
    layout: StateLayout,
}

fn series_max(s: &Series) -> f64 {
    s.points().iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
}

fn switch_at(s: &Series, t: f64) -> Switch {
    Switch::from(s.at(t) >= 0.5)
}

fn mass_flow(v_dot: f64, rho: f64) -> f64 {
    v_dot * rho / 3600.0
}

impl Simulation {
    pub fn new(plant: &PlantConfig, scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        plant.fluids.validate()?;
        let mode = scenario.mode;
        let mut wiring = assemble(mode, plant)?;
        let fluids = plant.fluids;
        let base = &scenario.base_dir;

        let on = |v: bool| Series::constant(if v { 1.0 } else { 0.0 });
        let resolve = |spec: &Option<crate::timeseries::BoundarySpec>, default: bool| match spec {
            Some(s) => s.resolve(base),
            None => Ok(on(default)),
        };
        let sw_adcm = resolve(&scenario.switches.adcm, mode == Mode::Sep)?;
        let sw_chp = resolve(&scenario.switches.chp, mode == Mode::Wep)?;
        let sw_revhp = resolve(&scenario.switches.revhp, matches!(mode, Mode::Sec | Mode::Wec))?;

        let p_load_h = scenario.p_load_h.resolve(base)?;
        let p_load_c = scenario.p_load_c.resolve(base)?;
        let t_amb = scenario.t_amb.resolve(base)?;
        let t_room = match &scenario.t_room {
            Some(s) => s.resolve(base)?,
            None => t_amb.clone(),
        };

        let mut missing = Vec::new();
        let uses_chp = match mode {
            Mode::Wep => true,
            Mode::Sep => series_max(&sw_chp) >= 0.5,
            Mode::Sec | Mode::Wec => false,
        };
        if uses_chp && plant.chp.is_none() {
            missing.push("chp".to_owned());
        }
        if !uses_chp {
            wiring.htes_source = match mode {
                Mode::Sep => None,
                _ => wiring.htes_source,
            };
        }
        let heat_demand = series_max(&p_load_h) > 0.0;
        let cold_demand = series_max(&p_load_c) > 0.0;
        if heat_demand && mode == Mode::Sep {
            return Err(Error::Config("SEP serves no heating load; p_load_h must be zero".into()));
        }
        if heat_demand && plant.load_h.is_none() {
            missing.push("load_h".to_owned());
        }
        if cold_demand && plant.load_c.is_none() {
            missing.push("load_c".to_owned());
        }
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        if mode != Mode::Sep && !heat_demand {
            wiring.htes_load = None;
        }
        if !cold_demand {
            wiring.ctes_load = None;
        }

        let flows = &scenario.flows;
        let adcm = match (mode, &plant.adcm) {
            (Mode::Sep, Some(a)) => {
                let mut a = a.clone();
                a.v_dot_ht = flows.ht.unwrap_or(a.v_dot_ht);
                a.v_dot_mt = flows.mt.unwrap_or(a.v_dot_mt);
                a.v_dot_lt = flows.lt.unwrap_or(a.v_dot_lt);
                a.validate()?;
                Some(a)
            }
            _ => None,
        };
        let revhp = match (mode, &plant.revhp) {
            (Mode::Sec | Mode::Wec, Some(r)) => {
                let mut r = r.clone();
                r.v_dot_ht = flows.ht.unwrap_or(r.v_dot_ht);
                r.v_dot_mt = flows.mt.unwrap_or(r.v_dot_mt);
                r.v_dot_lt = flows.lt.unwrap_or(r.v_dot_lt);
                r.validate()?;
                Some(r)
            }
            _ => None,
        };
        let chp = if uses_chp { plant.chp.clone() } else { None };
        if let Some(c) = &chp {
            c.validate()?;
        }
        let oc = if mode == Mode::Wep { None } else { plant.oc.clone() };
        if let Some(o) = &oc {
            o.validate()?;
            if !(0.0..=o.v_max).contains(&scenario.v_set_oc) {
                return Err(Error::Config(format!("v_set_oc {} V outside [0, {}] V", scenario.v_set_oc, o.v_max)));
            }
        }
        let oc_v_dot = flows.oc.unwrap_or(match (&adcm, &revhp) {
            (Some(a), _) => a.v_dot_mt,
            (_, Some(r)) => r.v_dot_mt,
            _ => 0.0,
        });
        let load_h = if heat_demand { plant.load_h.clone() } else { None };
        let load_c = if cold_demand { plant.load_c.clone() } else { None };
        for l in load_h.iter().chain(load_c.iter()) {
            l.validate()?;
        }

        let mut hg: TankGeometry = plant.htes.clone().expect("assembled");
        hg.load_layer = wiring.htes_tap_layer;
        let cg: TankGeometry = plant.ctes.clone().expect("assembled");
        if hg.orientation != Orientation::HotTank || cg.orientation != Orientation::ColdTank {
            return Err(Error::Config("htes must be a hot_tank and ctes a cold_tank".into()));
        }
        let htes = Tank::new(hg, fluids.water)?;
        let ctes = Tank::new(cg, fluids.water)?;
        for (tank, n, name) in [(&htes, HTES_SENSORS, "htes"), (&ctes, CTES_SENSORS, "ctes")] {
            if tank.layers() % n != 0 {
                return Err(Error::Config(format!("{name}.layers must be a multiple of {n}")));
            }
        }
        if !(plant.omega > 0.0) {
            return Err(Error::Config(format!("omega must be positive, got {}", plant.omega)));
        }

        let rho = fluids.water.rho;
        let htes_src = chp.as_ref().map_or(0.0, |c| mass_flow(c.v_dot_max, rho))
            + revhp.as_ref().filter(|_| mode == Mode::Wec).map_or(0.0, |r| mass_flow(r.v_dot_ht, rho));
        let htes_ld = adcm.as_ref().map_or(0.0, |a| mass_flow(a.v_dot_ht, rho))
            + load_h.as_ref().map_or(0.0, |l| l.m_dot_hvac);
        let ctes_src = adcm.as_ref().map_or(0.0, |a| mass_flow(a.v_dot_lt, rho))
            + revhp.as_ref().filter(|_| mode == Mode::Sec).map_or(0.0, |r| mass_flow(r.v_dot_lt, rho));
        let ctes_ld = load_c.as_ref().map_or(0.0, |l| l.m_dot_hvac);
        let bound = |tank: &Tank, face: f64| if face > 0.0 { 0.5 * tank.layer.m / face } else { f64::INFINITY };
        let dt_max = bound(&htes, htes_src.max(htes_ld)).min(bound(&ctes, ctes_src.max(ctes_ld)));
        if scenario.dt > dt_max {
            return Err(Error::Config(format!(
                "dt = {} s exceeds the stability bound dt_max = {:.3} s",
                scenario.dt, dt_max
            )));
        }
        let substeps = (LOG_INTERVAL / scenario.dt).ceil().max(1.0) as usize;

        let layout = StateLayout::new(htes.layers(), ctes.layers());
        let sensor = parse_sensor(&scenario.setpoint.sensor, &layout)?;
        let mut initial = vec![0.0; layout.len];
        initial[layout.htes.clone()].copy_from_slice(&scenario.initial.htes.profile(htes.layers(), "htes")?);
        initial[layout.ctes.clone()].copy_from_slice(&scenario.initial.ctes.profile(ctes.layers(), "ctes")?);
        initial[layout.chp] = scenario.initial.chp_p_th;

        Ok(Simulation {
            mode,
            wiring,
            fluids,
            htes,
            ctes,
            adcm,
            chp,
            revhp,
            oc,
            load_h,
            load_c,
            omega: plant.omega,
            t_amb,
            t_room,
            p_load_h,
            p_load_c,
            sw_adcm,
            sw_chp,
            sw_revhp,
            v_set_oc: scenario.v_set_oc,
            oc_v_dot,
            setpoint: scenario.setpoint.clone(),
            sensor,
            dt_requested: scenario.dt,
            substeps,
            dt_max,
            horizon: scenario.horizon,
            initial,
            layout,
        })
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.initial.clone()
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max
    }

    /// Step actually used: the log interval split into equal sub-steps.
    pub fn dt(&self) -> f64 {
        LOG_INTERVAL / self.substeps as f64
    }

    /// Closes the medium-temperature loop between a machine and the outdoor
    /// coil: finds the machine return temperature equal to the coil outlet.
    fn close_mt_loop(
        &self,
        t: f64,
        machine: &str,
        t_amb: f64,
        switch: Switch,
        machine_feed: &dyn Fn(f64) -> Result<f64>,
    ) -> Result<(f64, OcOutput)> {
        let oc = self.oc.as_ref().expect("oc present when a loop is closed");
        if !switch.is_on() {
            let out = oc_step(oc, t_amb, t_amb, self.oc_v_dot, self.v_set_oc, Switch::Off, &self.fluids)?;
            return Ok((t_amb, out));
        }
        let residual = |t: f64| -> Result<f64> {
            let feed = machine_feed(t)?;
            Ok(oc_step(oc, feed, t_amb, self.oc_v_dot, self.v_set_oc, Switch::On, &self.fluids)?.t_fl - t)
        };
        let t_rl = solve_bracketed(&residual, t_amb)?.ok_or_else(|| Error::Divergence {
            location: format!("{machine} medium-temperature loop: the outdoor coil cannot balance the machine heat"),
            time: t,
        })?;
        let out = oc_step(oc, machine_feed(t_rl)?, t_amb, self.oc_v_dot, self.v_set_oc, Switch::On, &self.fluids)?;
        Ok((t_rl, out))
    }

    /// Algebraic plant outputs for state `y` at time `t`.
    pub fn evaluate(&self, t: f64, y: &[f64]) -> Result<Eval> {
        let l = &self.layout;
        let th = &y[l.htes.clone()];
        let tc = &y[l.ctes.clone()];
        let t_amb = self.t_amb.at(t);
        let t_room = self.t_room.at(t);
        let f = &self.fluids;
        let ho = self.htes.outlet_temps(th);
        let co = self.ctes.outlet_temps(tc);

        let mut htes = TankBoundary { t_amb: t_room, t_fl_s: ho.to_source_return, t_rl_l: ho.to_load_feed, ..Default::default() };
        let mut ctes = TankBoundary { t_amb: t_room, t_fl_s: co.to_source_return, t_rl_l: co.to_load_feed, ..Default::default() };
        let mut ev = Eval {
            t_amb,
            t_room,
            adcm: None,
            chp: None,
            hp: None,
            ccm: None,
            oc: None,
            load_h: LoadFlow::default(),
            load_c: LoadFlow::default(),
            htes,
            ctes,
            htes_heat: BoundaryHeat::default(),
            ctes_heat: BoundaryHeat::default(),
        };

        if let Some(p) = &self.chp {
            let sw = switch_at(&self.sw_chp, t);
            let out = chp_outputs(p, ChpState { p_th: y[l.chp] }, ho.to_source_return, sw, f)?;
            htes.m_dot_s = out.circuit.m_dot;
            htes.t_fl_s = out.circuit.t_fl;
            ev.chp = Some(out);
        }
        if let Some(p) = &self.adcm {
            let sw = switch_at(&self.sw_adcm, t);
            let (t_lt, t_ht) = (co.to_source_return, ho.to_load_feed);
            let feed = |t_mt: f64| -> Result<f64> { Ok(adcm_step(p, t_lt, t_ht, t_mt, sw, f)?.mt.t_fl) };
            let (t_mt, oc) = self.close_mt_loop(t, "AdCM", t_amb, sw, &feed)?;
            let out = adcm_step(p, t_lt, t_ht, t_mt, sw, f)?;
            htes.m_dot_l = out.ht.m_dot;
            htes.t_rl_l = out.ht.t_fl;
            ctes.m_dot_s = out.lt.m_dot;
            ctes.t_fl_s = out.lt.t_fl;
            ev.adcm = Some(out);
            ev.oc = Some(oc);
        }
        if let Some(p) = &self.revhp {
            let sw = switch_at(&self.sw_revhp, t);
            if self.mode == Mode::Wec {
                let t_ht = ho.to_source_return;
                let feed = |t_mt: f64| -> Result<f64> { Ok(hp_step(p, t_ht, t_mt, sw, f)?.mt.t_fl) };
                let (t_mt, oc) = self.close_mt_loop(t, "HP", t_amb, sw, &feed)?;
                let out = hp_step(p, t_ht, t_mt, sw, f)?;
                htes.m_dot_s = out.ht.m_dot;
                htes.t_fl_s = out.ht.t_fl;
                ev.hp = Some(out);
                ev.oc = Some(oc);
            } else {
                let t_lt = co.to_source_return;
                let feed = |t_mt: f64| -> Result<f64> { Ok(ccm_step(p, t_mt, t_lt, sw, f)?.mt.t_fl) };
                let (t_mt, oc) = self.close_mt_loop(t, "CCM", t_amb, sw, &feed)?;
                let out = ccm_step(p, t_mt, t_lt, sw, f)?;
                ctes.m_dot_s = out.lt.m_dot;
                ctes.t_fl_s = out.lt.t_fl;
                ev.ccm = Some(out);
                ev.oc = Some(oc);
            }
        }
        if let Some(p) = &self.load_h {
            let lf = load_flow(p, self.p_load_h.at(t), ho.to_load_feed, true, f);
            htes.m_dot_l = lf.m_dot;
            htes.t_rl_l = lf.t_return;
            ev.load_h = lf;
        }
        if let Some(p) = &self.load_c {
            let lf = load_flow(p, self.p_load_c.at(t), co.to_load_feed, false, f);
            ctes.m_dot_l = lf.m_dot;
            ctes.t_rl_l = lf.t_return;
            ev.load_c = lf;
        }
        ev.htes = htes;
        ev.ctes = ctes;
        ev.htes_heat = self.htes.boundary_heat(th, &htes);
        ev.ctes_heat = self.ctes.boundary_heat(tc, &ctes);
        Ok(ev)
    }

    fn check_finite(&self, y: &[f64], t: f64) -> Result<()> {
        match y.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Divergence { location: self.layout.describe(i), time: t }),
            None => Ok(()),
        }
    }

    /// Time derivative of the full state.
    pub fn derivatives(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        self.check_finite(y, t)?;
        let ev = self.evaluate(t, y)?;
        let l = &self.layout;
        let mut d = vec![0.0; l.len];
        let dh = self.htes.derivatives_smooth(&y[l.htes.clone()], &ev.htes, self.omega);
        let dc = self.ctes.derivatives_smooth(&y[l.ctes.clone()], &ev.ctes, self.omega);
        d[l.htes.clone()].copy_from_slice(&dh);
        d[l.ctes.clone()].copy_from_slice(&dc);
        if let Some(p) = &self.chp {
            d[l.chp] = chp_dpth_dt(p, ChpState { p_th: y[l.chp] }, switch_at(&self.sw_chp, t));
        }
        for (range, heat) in [(&l.htes_energy, ev.htes_heat), (&l.ctes_energy, ev.ctes_heat)] {
            d[range.start] = heat.source;
            d[range.start + 1] = heat.load;
            d[range.start + 2] = heat.loss;
        }
        Ok(d)
    }

    /// One classical fourth-order Runge–Kutta step of length `h`.
    pub fn step(&self, y: &[f64], t: f64, h: f64) -> Result<Vec<f64>> {
        let axpy = |a: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect() };
        let k1 = self.derivatives(t, y)?;
        let k2 = self.derivatives(t + 0.5 * h, &axpy(0.5 * h, &k1))?;
        let k3 = self.derivatives(t + 0.5 * h, &axpy(0.5 * h, &k2))?;
        let k4 = self.derivatives(t + h, &axpy(h, &k3))?;
        let next: Vec<f64> = (0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        self.check_finite(&next, t + h)?;
        Ok(next)
    }

    pub fn sensor_value(&self, y: &[f64]) -> f64 {
        let base = match self.sensor.tank {
            TankId::Htes => self.layout.htes.start,
            TankId::Ctes => self.layout.ctes.start,
        };
        let r = &self.sensor.layers;
        y[base + r.start..base + r.end].iter().sum::<f64>() / r.len() as f64
    }

    /// Total enthalpy of each tank relative to 0 °C (J).
    pub fn enthalpies(&self, y: &[f64]) -> (f64, f64) {
        (self.htes.enthalpy(&y[self.layout.htes.clone()]), self.ctes.enthalpy(&y[self.layout.ctes.clone()]))
    }

    /// Integrates until the set-point is crossed or the horizon expires.
    pub fn run(&self) -> Result<SimLog> {
        let mut y = self.initial_state();
        let h = self.dt();
        let mut table = TimeSeriesTable::new(Vec::new());
        let first = self.channels(0.0, &y)?;
        table.columns = first.iter().map(|c| c.0.clone()).collect();
        table.push(0.0, first.into_iter().map(|c| c.1).collect());

        let mut steps = 0u64;
        let mut termination = None;
        if self.setpoint.reached(self.sensor_value(&y)) {
            termination = Some((TerminationReason::Setpoint, 0.0));
        }
        let mut k = 0u64;
        while termination.is_none() {
            let t0 = k as f64 * LOG_INTERVAL;
            for j in 0..self.substeps {
                let t = t0 + j as f64 * h;
                let next = self.step(&y, t, h)?;
                steps += 1;
                let (before, after) = (self.sensor_value(&y), self.sensor_value(&next));
                y = next;
                if self.setpoint.reached(after) {
                    let frac = if before != after { (before - self.setpoint.threshold) / (before - after) } else { 1.0 };
                    termination = Some((TerminationReason::Setpoint, t + h * frac.clamp(0.0, 1.0)));
                    break;
                }
            }
            if termination.is_some() {
                break;
            }
            k += 1;
            let t = k as f64 * LOG_INTERVAL;
            let row = self.channels(t, &y)?;
            table.push(t, row.into_iter().map(|c| c.1).collect());
            if t >= self.horizon {
                termination = Some((TerminationReason::Horizon, t));
            }
        }
        let (reason, time_s) = termination.expect("loop exits with a termination");
        log::debug!("{} terminated by {:?} at {:.1} s after {} steps", self.mode, reason, time_s, steps);

        Ok(SimLog {
            table,
            summary: Summary {
                mode: self.mode,
                termination: Termination { reason, time_s, time_min: time_s / 60.0 },
                setpoint: self.setpoint.clone(),
                dt_requested_s: self.dt_requested,
                dt_s: h,
                dt_max_s: self.dt_max,
                steps,
                wiring: self.wiring.clone(),
                energy_audit: self.audit(&y),
            },
        })
    }

    /// Compares each tank's enthalpy change with its integrated boundary heat.
    pub fn audit(&self, y: &[f64]) -> Vec<TankAudit> {
        let (h0, c0) = self.enthalpies(&self.initial);
        let (h1, c1) = self.enthalpies(y);
        let l = &self.layout;
        [("HTES", h1 - h0, &l.htes_energy), ("CTES", c1 - c0, &l.ctes_energy)]
            .into_iter()
            .map(|(tank, dh, r)| {
                let (source_j, load_j, loss_j) = (y[r.start], y[r.start + 1], y[r.start + 2]);
                let residual_j = dh - (source_j - load_j - loss_j);
                let gross = source_j.abs() + load_j.abs() + loss_j.abs();
                let relative_error = if gross > 0.0 { residual_j.abs() / gross } else { residual_j.abs() };
                TankAudit { tank, enthalpy_change_j: dh, source_j, load_j, loss_j, residual_j, relative_error }
            })
            .collect()
    }

    /// Logged channels at time `t`, in a fixed order for the mode.
    pub fn channels(&self, t: f64, y: &[f64]) -> Result<Vec<(String, f64)>> {
        let ev = self.evaluate(t, y)?;
        let l = &self.layout;
        let mut out: Vec<(String, f64)> = vec![("T_amb".into(), ev.t_amb)];
        let mut push = |name: &str, v: f64| out.push((name.to_owned(), v));
        let block = |temps: &[f64], n: usize| -> Vec<f64> {
            crate::storage::sensor_temps(temps, n).expect("layer count checked at construction")
        };
        for (i, v) in block(&y[l.htes.clone()], HTES_SENSORS).into_iter().enumerate() {
            push(&format!("HTES_T_{}", i + 1), v);
        }
        for (i, v) in block(&y[l.ctes.clone()], CTES_SENSORS).into_iter().enumerate() {
            push(&format!("CTES_T_{}", i + 1), v);
        }
        let fuel = ev.chp.map_or(0.0, |c| c.v_fuel);
        push("v_fuel", fuel);
        if let Some(a) = ev.adcm {
            for (circ, c) in [("LT", a.lt), ("HT", a.ht), ("MT", a.mt)] {
                push(&format!("AdCM_T_rl_{circ}"), c.t_rl);
                push(&format!("AdCM_T_fl_{circ}"), c.t_fl);
                push(&format!("P_th_AdCM_{circ}"), c.p_th);
                push(&format!("m_dot_AdCM_{circ}"), c.m_dot);
            }
            push("COP_AdCM", a.cop);
            push("P_el_AdCM", a.p_el);
        }
        if let Some(c) = ev.chp {
            push("CHP_T_rl", c.circuit.t_rl);
            push("CHP_T_fl", c.circuit.t_fl);
            push("P_th_CHP", c.circuit.p_th);
            push("v_dot_CHP", c.circuit.v_dot);
            push("m_dot_CHP", c.circuit.m_dot);
            push("P_el_CHP", c.p_el);
        }
        if let Some(hp) = ev.hp {
            for (circ, c) in [("HT", hp.ht), ("MT", hp.mt)] {
                push(&format!("HP_T_rl_{circ}"), c.t_rl);
                push(&format!("HP_T_fl_{circ}"), c.t_fl);
                push(&format!("P_th_HP_{circ}"), c.p_th);
                push(&format!("m_dot_HP_{circ}"), c.m_dot);
            }
            push("COP_HP", hp.cop);
            push("P_el_RevHP", hp.p_el);
        }
        if let Some(cc) = ev.ccm {
            for (circ, c) in [("MT", cc.mt), ("LT", cc.lt)] {
                push(&format!("CCM_T_rl_{circ}"), c.t_rl);
                push(&format!("CCM_T_fl_{circ}"), c.t_fl);
                push(&format!("P_th_CCM_{circ}"), c.p_th);
                push(&format!("m_dot_CCM_{circ}"), c.m_dot);
            }
            push("COP_CCM", cc.cop);
            push("P_el_RevHP", cc.p_el);
        }
        if let Some(o) = ev.oc {
            push("OC_T_rl", o.t_rl);
            push("OC_T_fl", o.t_fl);
            push("OC_T_air_out", o.t_air_out);
            push("P_th_OC", o.p_th);
            push("m_dot_OC", o.m_dot);
            push("P_el_OC", o.p_el);
        }
        push("P_th_Load_H", ev.load_h.delivered);
        push("m_dot_Load_H", ev.load_h.m_dot);
        push("P_th_Load_C", ev.load_c.delivered);
        push("m_dot_Load_C", ev.load_c.m_dot);
        Ok(out)
    }
}

fn load_flow(p: &LoadParams, demand: f64, t_feed: f64, heating: bool, f: &Fluids) -> LoadFlow {
    let m_dot = saturating_draw(p, demand, t_feed, heating, f.water);
    let t_return = return_temperature(p, demand, heating, f.water);
    let sign = if heating { 1.0 } else { -1.0 };
    LoadFlow { demand, m_dot, t_feed, t_return, delivered: sign * m_dot * f.water.c_p * (t_feed - t_return) }
}

fn parse_sensor(name: &str, layout: &StateLayout) -> Result<Sensor> {
    let parse = |prefix: &str, n: usize, layers: usize, tank: TankId| -> Option<Sensor> {
        let k: usize = name.strip_prefix(prefix)?.parse().ok()?;
        if k == 0 || k > n {
            return None;
        }
        let block = layers / n;
        Some(Sensor { tank, layers: (k - 1) * block..k * block })
    };
    parse("HTES_T_", HTES_SENSORS, layout.htes.len(), TankId::Htes)
        .or_else(|| parse("CTES_T_", CTES_SENSORS, layout.ctes.len(), TankId::Ctes))
        .ok_or_else(|| {
            Error::Config(format!("setpoint.sensor \"{name}\" is not one of HTES_T_1..9 or CTES_T_1..4"))
        })
}

/// Root of `f` found by expanding a bracket from `start` and refining it with
/// the Illinois variant of regula falsi. `None` when no sign change is found
/// within 512 K of `start`.
pub fn solve_bracketed(f: &dyn Fn(f64) -> Result<f64>, start: f64) -> Result<Option<f64>> {
    let f0 = f(start)?;
    if f0 == 0.0 {
        return Ok(Some(start));
    }
    let dir = f0.signum();
    let (mut a, mut fa) = (start, f0);
    let mut width = 1.0;
    let (mut b, mut fb) = loop {
        let x = start + dir * width;
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(Some(x));
        }
        if fx.signum() != dir {
            break (x, fx);
        }
        a = x;
        fa = fx;
        width *= 2.0;
        if width > 512.0 {
            return Ok(None);
        }
    };
    let mut side = 0i8;
    for _ in 0..200 {
        let x = (a * fb - b * fa) / (fb - fa);
        let fx = f(x)?;
        if fx == 0.0 || (b - a).abs() < 1e-10 || fx.abs() < 1e-12 {
            return Ok(Some(x));
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(Some((a * fb - b * fa) / (fb - fa)))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::config::{Direction, FlowOverrides, InitialState, Switches, TankInit};
    use crate::heat_rejection::tests::default_oc;
    use crate::machines::tests::{table_adcm, table_chp, table_revhp};
    use crate::timeseries::BoundarySpec;
    use approx::assert_relative_eq;

    pub(crate) fn test_plant() -> PlantConfig {
        PlantConfig {
            fluids: Fluids::default(),
            adcm: Some(table_adcm()),
            chp: Some(table_chp()),
            revhp: Some(table_revhp()),
            oc: Some(default_oc()),
            htes: Some(TankGeometry {
                diameter: 1.0,
                height: 1.95,
                wall: 0.005,
                layers: 90,
                load_layer: 60,
                k_loss: 0.002,
                lambda_eff: 0.0015,
                orientation: Orientation::HotTank,
            }),
            ctes: Some(TankGeometry {
                diameter: 1.0,
                height: 1.885,
                wall: 0.005,
                layers: 40,
                load_layer: 1,
                k_loss: 0.002,
                lambda_eff: 0.0015,
                orientation: Orientation::ColdTank,
            }),
            load_h: Some(LoadParams::new(35.0, 0.3)),
            load_c: Some(LoadParams::new(18.0, 0.3)),
            adcm_tap_layer: 70,
            omega: crate::storage::DEFAULT_OMEGA,
            notes: Vec::new(),
        }
    }

    pub(crate) fn scenario(mode: Mode, sensor: &str, threshold: f64, direction: Direction, horizon: f64) -> Scenario {
        Scenario {
            mode,
            description: None,
            initial: InitialState { htes: TankInit::Uniform(40.0), ctes: TankInit::Uniform(15.0), chp_p_th: 0.0 },
            t_amb: BoundarySpec::Constant(20.0),
            t_room: None,
            p_load_h: BoundarySpec::Constant(0.0),
            p_load_c: BoundarySpec::Constant(0.0),
            flows: FlowOverrides::default(),
            v_set_oc: 10.0,
            switches: Switches::default(),
            setpoint: SetPoint { sensor: sensor.into(), threshold, direction },
            dt: 5.0,
            horizon,
            base_dir: Default::default(),
        }
    }

    #[test]
    fn wiring_per_mode() {
        let plant = test_plant();
        let w = assemble(Mode::Sep, &plant).unwrap();
        assert_eq!((w.htes_load, w.htes_tap_layer, w.ctes_source, w.oc_coupled_to), (Some("AdCM_HT"), 70, Some("AdCM_LT"), Some("AdCM_MT")));
        let w = assemble(Mode::Wep, &plant).unwrap();
        assert_eq!((w.htes_source, w.htes_tap_layer, w.oc_coupled_to), (Some("CHP"), 60, None));
        assert_eq!(assemble(Mode::Sec, &plant).unwrap().ctes_source, Some("CCM_LT"));
        assert_eq!(assemble(Mode::Wec, &plant).unwrap().htes_source, Some("HP_HT"));

        let mut no_adcm = plant.clone();
        no_adcm.adcm = None;
        assert_eq!(assemble(Mode::Sep, &no_adcm).unwrap_err(), Error::MissingKeys(vec!["adcm".into()]));
        assert!(assemble(Mode::Wep, &no_adcm).is_ok());
    }

    #[test]
    fn all_off_without_losses_is_steady() {
        let mut plant = test_plant();
        plant.htes.as_mut().unwrap().k_loss = 0.0;
        plant.ctes.as_mut().unwrap().k_loss = 0.0;
        let mut s = scenario(Mode::Sep, "CTES_T_4", 0.0, Direction::Below, 3600.0);
        s.switches.adcm = Some(BoundarySpec::Constant(0.0));
        let sim = Simulation::new(&plant, &s).unwrap();
        let y0 = sim.initial_state();
        let mut y = y0.clone();
        for k in 0..120 {
            y = sim.step(&y, k as f64 * 5.0, 5.0).unwrap();
        }
        for (a, b) in y0.iter().zip(&y).take(130) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn idle_tanks_drift_only_by_losses() {
        let plant = test_plant();
        let mut s = scenario(Mode::Sep, "CTES_T_4", 0.0, Direction::Below, 3600.0);
        s.switches.adcm = Some(BoundarySpec::Constant(0.0));
        let log = Simulation::new(&plant, &s).unwrap().run().unwrap();
        assert_eq!(log.summary.termination.reason, TerminationReason::Horizon);
        assert_eq!(log.table.time.len(), 61);
        let h1 = log.table.column("HTES_T_5").unwrap();
        let c1 = log.table.column("CTES_T_2").unwrap();
        assert!(h1[60] < 40.0 && h1[60] > 39.99);
        assert!(c1[60] > 15.0 && c1[60] < 15.01);
    }

    #[test]
    fn switched_off_machine_draws_nothing() {
        let plant = test_plant();
        let mut s = scenario(Mode::Wec, "HTES_T_1", 40.0, Direction::Above, 600.0);
        s.switches.revhp = Some(BoundarySpec::Constant(0.0));
        let sim = Simulation::new(&plant, &s).unwrap();
        let mut y = sim.initial_state();
        let ht = sim.layout().htes.clone();
        for (i, v) in y[ht].iter_mut().enumerate() {
            *v = 30.0 + i as f64 * 0.3;
        }
        let ev = sim.evaluate(0.0, &y).unwrap();
        assert_eq!(ev.htes.m_dot_s, 0.0);
        assert_eq!(ev.hp.unwrap().p_el, 0.0);
    }

    #[test]
    fn chp_lag_reaches_one_time_constant() {
        let plant = test_plant();
        let s = scenario(Mode::Wep, "HTES_T_1", 72.0, Direction::Above, 3600.0);
        let sim = Simulation::new(&plant, &s).unwrap();
        let mut y = sim.initial_state();
        let c = sim.layout().chp;
        let target = 10200.0 * (1.0 - (-1.0f64).exp());
        let mut t = 0.0;
        while y[c] < target {
            y = sim.step(&y, t, 5.0).unwrap();
            t += 5.0;
        }
        assert!((t - 560.78).abs() <= 5.0, "crossed at {t}");
    }

    #[test]
    fn stability_bound_enforced() {
        let plant = test_plant();
        let mut s = scenario(Mode::Sep, "CTES_T_4", 12.0, Direction::Below, 600.0);
        s.dt = 60.0;
        let err = Simulation::new(&plant, &s).unwrap_err();
        assert!(err.to_string().contains("dt_max"), "{err}");
    }

    #[test]
    fn bad_sensor_and_missing_loads() {
        let plant = test_plant();
        let s = scenario(Mode::Sep, "CTES_T_5", 12.0, Direction::Below, 600.0);
        assert!(Simulation::new(&plant, &s).is_err());
        let mut no_load = plant.clone();
        no_load.load_h = None;
        let mut s = scenario(Mode::Wep, "HTES_T_1", 72.0, Direction::Above, 600.0);
        s.p_load_h = BoundarySpec::Constant(3000.0);
        assert_eq!(Simulation::new(&no_load, &s).unwrap_err(), Error::MissingKeys(vec!["load_h".into()]));
    }

    #[test]
    fn loop_solver() {
        let root = solve_bracketed(&|x| Ok(2.0 - x * x), 0.0).unwrap().unwrap();
        assert_relative_eq!(root, 2f64.sqrt(), epsilon = 1e-9);
        let root = solve_bracketed(&|x| Ok(-3.0 - x), 10.0).unwrap().unwrap();
        assert_relative_eq!(root, -3.0, epsilon = 1e-9);
        assert_eq!(solve_bracketed(&|_| Ok(1.0), 0.0).unwrap(), None);
    }
}
