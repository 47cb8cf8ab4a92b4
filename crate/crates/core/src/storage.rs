//! One-dimensional multilayer stratified storage tank.
//!
//! Layers are numbered from the bottom (layer 1) to the top (layer N); in
//! code, index 0 is the bottom layer. Mass exchange between neighbouring
//! layers is tracked per face: face `j` sits between layers `j` and `j+1`
//! and its flow is positive when water moves downward.
//!
//! Two energy balances are provided. [`Tank::derivatives_smooth`] replaces
//! the upwind switch with `(p ± sqrt(p² + ω))/2`, which is continuously
//! differentiable in the face flow. [`Tank::derivatives_reference`] is the
//! plain upwind balance with explicit branches and is used as an oracle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::FluidProps;

/// Default smoothing constant of the differentiable upwind term (kg²/s²).
pub const DEFAULT_OMEGA: f64 = 2e-4;

/// Which side of the tank the source circuit charges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Source feeds the top and takes its return from the bottom; the load
    /// return enters at the bottom.
    HotTank,
    /// Source feeds the bottom and takes its return from the top; the load
    /// return enters at the top.
    ColdTank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TankGeometry {
    /// Outer diameter (m).
    pub diameter: f64,
    /// Height (m).
    pub height: f64,
    /// Wall thickness (m).
    pub wall: f64,
    pub layers: usize,
    /// 1-based layer from which the load circuit draws.
    pub load_layer: usize,
    /// Overall heat loss coefficient (W/(m²·K)).
    #[serde(default = "TankGeometry::default_k")]
    pub k_loss: f64,
    /// Effective vertical conductivity (W/(m·K)).
    #[serde(default = "TankGeometry::default_lambda")]
    pub lambda_eff: f64,
    pub orientation: Orientation,
}

impl TankGeometry {
    fn default_k() -> f64 {
        0.002
    }

    fn default_lambda() -> f64 {
        0.0015
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::Config(format!("tank needs at least 2 layers, got {}", self.layers)));
        }
        if self.load_layer < 1 || self.load_layer > self.layers {
            return Err(Error::Config(format!(
                "load_layer {} outside 1..={}",
                self.load_layer, self.layers
            )));
        }
        if !(self.diameter > 2.0 * self.wall) || !(self.wall >= 0.0) || !(self.height > 0.0) {
            return Err(Error::Config(format!(
                "invalid tank dimensions (D = {}, H = {}, Th = {})",
                self.diameter, self.height, self.wall
            )));
        }
        if !(self.k_loss >= 0.0) || !(self.lambda_eff >= 0.0) {
            return Err(Error::Config("k_loss and lambda_eff must be >= 0".into()));
        }
        Ok(())
    }

    /// Water volume (m³).
    pub fn volume(&self) -> f64 {
        PI * (self.diameter - 2.0 * self.wall).powi(2) / 4.0 * self.height
    }
}

/// Geometry shared by every layer of a uniformly discretised tank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerGeometry {
    /// Layer height (m).
    pub z: f64,
    /// Lateral loss area per layer (m²).
    pub a_ext: f64,
    /// Inner cross-section (m²).
    pub a: f64,
    /// Water mass per layer (kg).
    pub m: f64,
}

pub fn layer_geometry(g: &TankGeometry, water: FluidProps) -> LayerGeometry {
    let z = g.height / g.layers as f64;
    let a = PI * (g.diameter - 2.0 * g.wall).powi(2) / 4.0;
    LayerGeometry { z, a_ext: PI * g.diameter * z, a, m: a * z * water.rho }
}

/// Hydraulic boundary of a tank. Mass flows in kg/s, temperatures in °C.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TankBoundary {
    pub m_dot_s: f64,
    /// Feed temperature of the source entering the tank.
    pub t_fl_s: f64,
    pub m_dot_l: f64,
    /// Return temperature of the load entering the tank.
    pub t_rl_l: f64,
    pub t_amb: f64,
}

/// Temperatures leaving the tank towards the source and the load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outlets {
    pub to_source_return: f64,
    pub to_load_feed: f64,
}

/// Heat flows across the tank boundary (W).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BoundaryHeat {
    /// Net heat brought in by the source circuit.
    pub source: f64,
    /// Net heat taken out by the load circuit.
    pub load: f64,
    /// Heat lost through the wall.
    pub loss: f64,
}

impl BoundaryHeat {
    pub fn net(&self) -> f64 {
        self.source - self.load - self.loss
    }
}

/// A tank with its derived layer geometry and water properties.
#[derive(Debug, Clone, PartialEq)]
pub struct Tank {
    pub geometry: TankGeometry,
    pub layer: LayerGeometry,
    pub water: FluidProps,
}

impl Tank {
    pub fn new(geometry: TankGeometry, water: FluidProps) -> Result<Self> {
        geometry.validate()?;
        water.validate()?;
        let layer = layer_geometry(&geometry, water);
        Ok(Tank { geometry, layer, water })
    }

    pub fn layers(&self) -> usize {
        self.geometry.layers
    }

    fn source_inlet(&self) -> usize {
        match self.geometry.orientation {
            Orientation::HotTank => self.layers() - 1,
            Orientation::ColdTank => 0,
        }
    }

    fn load_inlet(&self) -> usize {
        match self.geometry.orientation {
            Orientation::HotTank => 0,
            Orientation::ColdTank => self.layers() - 1,
        }
    }

    /// Net face flows (kg/s, positive downward) implied by the source and
    /// load connections.
    pub fn interlayer_flows(&self, b: &TankBoundary) -> Vec<f64> {
        let n = self.layers();
        let tap = self.geometry.load_layer;
        (1..n)
            .map(|face| match self.geometry.orientation {
                Orientation::HotTank if face >= tap => b.m_dot_s,
                Orientation::HotTank => b.m_dot_s - b.m_dot_l,
                Orientation::ColdTank if face < tap => -b.m_dot_s,
                Orientation::ColdTank => -(b.m_dot_s - b.m_dot_l),
            })
            .collect()
    }

    pub fn outlet_temps(&self, temps: &[f64]) -> Outlets {
        let n = self.layers();
        let to_source_return = match self.geometry.orientation {
            Orientation::HotTank => temps[0],
            Orientation::ColdTank => temps[n - 1],
        };
        Outlets { to_source_return, to_load_feed: temps[self.geometry.load_layer - 1] }
    }

    /// Heat exchanged across the boundary for a mass-consistent set of face flows.
    pub fn boundary_heat(&self, temps: &[f64], b: &TankBoundary) -> BoundaryHeat {
        let c = self.water.c_p;
        let out = self.outlet_temps(temps);
        let loss = temps
            .iter()
            .map(|t| self.geometry.k_loss * self.layer.a_ext * (t - b.t_amb))
            .sum();
        BoundaryHeat {
            source: b.m_dot_s * c * (b.t_fl_s - out.to_source_return),
            load: b.m_dot_l * c * (out.to_load_feed - b.t_rl_l),
            loss,
        }
    }

    /// Total enthalpy relative to 0 °C (J).
    pub fn enthalpy(&self, temps: &[f64]) -> f64 {
        self.layer.m * self.water.c_p * temps.iter().sum::<f64>()
    }

    pub fn derivatives_smooth(&self, temps: &[f64], b: &TankBoundary, omega: f64) -> Vec<f64> {
        let faces = self.interlayer_flows(b);
        self.derivatives_with_faces(temps, &faces, b, Upwind::Smooth(omega))
    }

    pub fn derivatives_reference(&self, temps: &[f64], b: &TankBoundary) -> Vec<f64> {
        let faces = self.interlayer_flows(b);
        self.derivatives_with_faces(temps, &faces, b, Upwind::Exact)
    }

    /// Layer derivatives (K/s) for explicitly given face flows.
    ///
    /// The source and load terms use `b`; the face flows need not be
    /// consistent with them, which lets tests drive arbitrary flow fields.
    pub fn derivatives_with_faces(&self, temps: &[f64], faces: &[f64], b: &TankBoundary, upwind: Upwind) -> Vec<f64> {
        let n = self.layers();
        assert_eq!(temps.len(), n, "temperature vector length");
        assert_eq!(faces.len(), n - 1, "face flow vector length");
        let c = self.water.c_p;
        let LayerGeometry { z, a_ext, a, m } = self.layer;
        let cond = a * self.geometry.lambda_eff / z;
        let loss = self.geometry.k_loss * a_ext;
        let src = self.source_inlet();
        let ret = self.load_inlet();

        (0..n)
            .map(|i| {
                let t = temps[i];
                let mut q = -loss * (t - b.t_amb);
                if i == src {
                    q += b.m_dot_s * c * (b.t_fl_s - t);
                }
                if i == ret {
                    q += b.m_dot_l * c * (b.t_rl_l - t);
                }
                if i + 1 < n {
                    let above = temps[i + 1] - t;
                    q += upwind.downward(faces[i]) * c * above + cond * above;
                }
                if i > 0 {
                    let below = temps[i - 1] - t;
                    q += upwind.upward(faces[i - 1]) * c * below + cond * below;
                }
                q / (m * c)
            })
            .collect()
    }
}

/// Upwind weighting of a face flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upwind {
    /// `max(p, 0)` and `max(-p, 0)`.
    Exact,
    /// `(p + sqrt(p² + ω))/2` and `(sqrt(p² + ω) - p)/2`.
    Smooth(f64),
}

impl Upwind {
    /// Mass flow entering the layer below the face from above.
    fn downward(self, p: f64) -> f64 {
        match self {
            Upwind::Exact => p.max(0.0),
            Upwind::Smooth(omega) => 0.5 * (p + (p * p + omega).sqrt()),
        }
    }

    /// Mass flow entering the layer above the face from below.
    fn upward(self, p: f64) -> f64 {
        match self {
            Upwind::Exact => (-p).max(0.0),
            Upwind::Smooth(omega) => 0.5 * ((p * p + omega).sqrt() - p),
        }
    }
}

pub fn interlayer_flows(g: &TankGeometry, b: &TankBoundary) -> Result<Vec<f64>> {
    Ok(Tank::new(g.clone(), FluidProps::WATER)?.interlayer_flows(b))
}

pub fn tank_derivatives_smooth(tank: &Tank, temps: &[f64], b: &TankBoundary, omega: f64) -> Result<Vec<f64>> {
    if !(omega > 0.0) {
        return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
    }
    check_state(tank, temps)?;
    Ok(tank.derivatives_smooth(temps, b, omega))
}

pub fn tank_derivatives_reference(tank: &Tank, temps: &[f64], b: &TankBoundary) -> Result<Vec<f64>> {
    check_state(tank, temps)?;
    Ok(tank.derivatives_reference(temps, b))
}

fn check_state(tank: &Tank, temps: &[f64]) -> Result<()> {
    if temps.len() != tank.layers() {
        return Err(Error::InvalidInput(format!(
            "expected {} layer temperatures, got {}",
            tank.layers(),
            temps.len()
        )));
    }
    if temps.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite layer temperature".into()));
    }
    Ok(())
}

/// Sensor readings as block means of `layers / n_sensors` layers, bottom first.
pub fn sensor_temps(temps: &[f64], n_sensors: usize) -> Result<Vec<f64>> {
    if n_sensors == 0 || !temps.len().is_multiple_of(n_sensors) {
        return Err(Error::InvalidInput(format!(
            "{} layers cannot be split into {n_sensors} sensor blocks",
            temps.len()
        )));
    }
    let block = temps.len() / n_sensors;
    Ok(temps.chunks(block).map(|c| c.iter().sum::<f64>() / block as f64).collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn geometry(layers: usize, load_layer: usize, orientation: Orientation) -> TankGeometry {
        TankGeometry {
            diameter: 1.0,
            height: 1.8,
            wall: 0.005,
            layers,
            load_layer,
            k_loss: 0.002,
            lambda_eff: 0.0015,
            orientation,
        }
    }

    fn tank(layers: usize, load_layer: usize, orientation: Orientation) -> Tank {
        Tank::new(geometry(layers, load_layer, orientation), FluidProps::WATER).unwrap()
    }

    #[test]
    fn layer_geometry_example() {
        let lg = layer_geometry(&geometry(90, 60, Orientation::HotTank), FluidProps::WATER);
        assert_relative_eq!(lg.z, 0.02, epsilon = 1e-15);
        assert_relative_eq!(lg.a_ext, 0.0628319, epsilon = 1e-6);
        assert_relative_eq!(lg.a, 0.7697687, epsilon = 1e-6);
        assert_relative_eq!(lg.m, 15.395375, epsilon = 1e-5);
        let g = geometry(90, 60, Orientation::HotTank);
        assert!((90.0 * lg.m / (g.volume() * 1000.0) - 1.0).abs() < 0.01);

        let mut thin = geometry(10, 1, Orientation::HotTank);
        thin.height = 1.0;
        thin.wall = 0.0;
        assert_relative_eq!(layer_geometry(&thin, FluidProps::WATER).a, PI / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn single_layer_rejected() {
        assert!(geometry(1, 1, Orientation::HotTank).validate().is_err());
        assert!(geometry(10, 11, Orientation::HotTank).validate().is_err());
        let mut g = geometry(10, 1, Orientation::HotTank);
        g.wall = 0.5;
        assert!(g.validate().is_err());
    }

    #[test]
    fn face_flow_examples() {
        let t = tank(90, 90, Orientation::HotTank);
        let zero = t.interlayer_flows(&TankBoundary::default());
        assert!(zero.iter().all(|&f| f == 0.0));

        let b = TankBoundary { m_dot_s: 0.3, m_dot_l: 0.1, ..Default::default() };
        assert!(t.interlayer_flows(&b).iter().all(|&f| (f - 0.2).abs() < 1e-15));

        let t6 = tank(90, 6, Orientation::HotTank);
        let b = TankBoundary { m_dot_s: 0.0, m_dot_l: 0.1, ..Default::default() };
        let f = t6.interlayer_flows(&b);
        assert!(f[5..].iter().all(|&v| v == 0.0));
        assert!(f[..5].iter().all(|&v| v == -0.1));
    }

    #[test]
    fn cold_tank_flows_mirror() {
        let t = tank(40, 10, Orientation::ColdTank);
        let b = TankBoundary { m_dot_s: 0.4, m_dot_l: 0.1, ..Default::default() };
        let f = t.interlayer_flows(&b);
        assert!(f[..9].iter().all(|&v| v == -0.4));
        assert!(f[9..].iter().all(|&v| (v + 0.3).abs() < 1e-15));
    }

    #[test]
    fn uniform_tank_at_ambient_is_steady() {
        let t = tank(90, 60, Orientation::HotTank);
        let temps = vec![40.0; 90];
        let b = TankBoundary { t_amb: 40.0, t_fl_s: 40.0, t_rl_l: 40.0, ..Default::default() };
        assert!(t.derivatives_smooth(&temps, &b, DEFAULT_OMEGA).iter().all(|&d| d == 0.0));
        assert!(t.derivatives_reference(&temps, &b).iter().all(|&d| d == 0.0));
        let moving = TankBoundary { m_dot_s: 0.2, ..b };
        assert!(t.derivatives_smooth(&temps, &moving, DEFAULT_OMEGA).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn conduction_only_interior_layer() {
        let mut g = geometry(10, 5, Orientation::HotTank);
        g.k_loss = 0.0;
        let t = Tank::new(g, FluidProps::WATER).unwrap();
        let mut temps = vec![40.0; 10];
        temps[5] = 50.0;
        let b = TankBoundary::default();
        let lg = t.layer;
        let cond = lg.a * 0.0015 / lg.z;
        let reference = t.derivatives_reference(&temps, &b);
        assert_relative_eq!(reference[4], cond * 10.0 / (lg.m * 4186.0), max_relative = 1e-12);
        // The smoothed balance keeps a residual exchange of sqrt(ω)/2 per face at zero flow.
        let smooth = t.derivatives_smooth(&temps, &b, DEFAULT_OMEGA);
        let mixing = 0.5 * DEFAULT_OMEGA.sqrt() * 4186.0;
        assert_relative_eq!(smooth[4], (cond + mixing) * 10.0 / (lg.m * 4186.0), max_relative = 1e-12);
        assert!(smooth[4] > 0.0);
    }

    #[test]
    fn outlets() {
        let t = tank(90, 60, Orientation::HotTank);
        let uniform = vec![60.0; 90];
        let o = t.outlet_temps(&uniform);
        assert_eq!((o.to_source_return, o.to_load_feed), (60.0, 60.0));
        let linear: Vec<f64> = (0..90).map(|i| 40.0 + 30.0 * i as f64 / 89.0).collect();
        let o = t.outlet_temps(&linear);
        assert_eq!(o.to_load_feed, linear[59]);
        assert_eq!(o.to_source_return, linear[0]);
        let cold = tank(40, 1, Orientation::ColdTank);
        let temps: Vec<f64> = (0..40).map(|i| 8.0 + i as f64 * 0.1).collect();
        let o = cold.outlet_temps(&temps);
        assert_eq!((o.to_load_feed, o.to_source_return), (temps[0], temps[39]));
    }

    #[test]
    fn sensors() {
        assert_eq!(sensor_temps(&[5.0; 90], 9).unwrap(), vec![5.0; 9]);
        let temps: Vec<f64> = (1..=90).map(|i| i as f64).collect();
        let s = sensor_temps(&temps, 9).unwrap();
        assert_relative_eq!(s[6], (61..=70).sum::<i32>() as f64 / 10.0);
        assert_eq!(sensor_temps(&[1.0; 40], 4).unwrap().len(), 4);
        assert!(sensor_temps(&[1.0; 40], 7).is_err());
    }

    #[test]
    fn zero_flow_reference_matches_smooth_up_to_mixing() {
        let t = tank(20, 5, Orientation::HotTank);
        let temps: Vec<f64> = (0..20).map(|i| 30.0 + (i * 7 % 5) as f64).collect();
        let b = TankBoundary { t_amb: 20.0, ..Default::default() };
        let r = t.derivatives_reference(&temps, &b);
        let s = t.derivatives_smooth(&temps, &b, DEFAULT_OMEGA);
        let half = 0.5 * DEFAULT_OMEGA.sqrt();
        for i in 0..20 {
            let mut lap = 0.0;
            if i + 1 < 20 {
                lap += temps[i + 1] - temps[i];
            }
            if i > 0 {
                lap += temps[i - 1] - temps[i];
            }
            assert_relative_eq!(s[i] - r[i], half * lap / t.layer.m, epsilon = 1e-15);
        }
    }

    fn boundary_strategy() -> impl Strategy<Value = TankBoundary> {
        (0.0f64..0.7, 10.0f64..90.0, 0.0f64..0.7, 10.0f64..90.0, 0.0f64..30.0)
            .prop_map(|(m_dot_s, t_fl_s, m_dot_l, t_rl_l, t_amb)| TankBoundary { m_dot_s, t_fl_s, m_dot_l, t_rl_l, t_amb })
    }

    proptest! {
        #[test]
        fn enthalpy_balance(
            temps in proptest::collection::vec(10.0f64..90.0, 30),
            b in boundary_strategy(),
            tap in 1usize..=30,
            cold in any::<bool>(),
        ) {
            let orientation = if cold { Orientation::ColdTank } else { Orientation::HotTank };
            let t = tank(30, tap, orientation);
            let mc = t.layer.m * t.water.c_p;
            let heat = t.boundary_heat(&temps, &b).net();
            for d in [t.derivatives_smooth(&temps, &b, DEFAULT_OMEGA), t.derivatives_reference(&temps, &b)] {
                let total: f64 = d.iter().map(|x| x * mc).sum();
                let scale = heat.abs().max(b.m_dot_s.max(b.m_dot_l) * t.water.c_p * 80.0).max(1.0);
                prop_assert!((total - heat).abs() <= 1e-6 * scale, "{} vs {}", total, heat);
            }
        }

        #[test]
        fn adiabatic_closed_tank_conserves(temps in proptest::collection::vec(10.0f64..90.0, 40)) {
            let mut g = geometry(40, 10, Orientation::HotTank);
            g.k_loss = 0.0;
            let t = Tank::new(g, FluidProps::WATER).unwrap();
            let b = TankBoundary::default();
            let d = t.derivatives_smooth(&temps, &b, DEFAULT_OMEGA);
            let total: f64 = d.iter().sum();
            let scale: f64 = d.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
            prop_assert!(total.abs() <= 1e-9 * scale);
        }

        #[test]
        fn maximum_principle(temps in proptest::collection::vec(10.0f64..90.0, 40)) {
            let mut g = geometry(40, 10, Orientation::ColdTank);
            g.k_loss = 0.0;
            let t = Tank::new(g, FluidProps::WATER).unwrap();
            let d = t.derivatives_smooth(&temps, &TankBoundary::default(), DEFAULT_OMEGA);
            let hi = temps.iter().cloned().fold(f64::MIN, f64::max);
            let lo = temps.iter().cloned().fold(f64::MAX, f64::min);
            for (tv, dv) in temps.iter().zip(&d) {
                if *tv == hi { prop_assert!(*dv <= 0.0); }
                if *tv == lo { prop_assert!(*dv >= 0.0); }
            }
        }

        #[test]
        fn smooth_matches_reference_within_omega_bound(
            temps in proptest::collection::vec(10.0f64..90.0, 90),
            flows in proptest::collection::vec((0.02f64..0.69, any::<bool>()), 89),
        ) {
            let t = tank(90, 60, Orientation::HotTank);
            let faces: Vec<f64> = flows.iter().map(|&(m, up)| if up { -m } else { m }).collect();
            let b = TankBoundary { t_amb: 20.0, ..Default::default() };
            let s = t.derivatives_with_faces(&temps, &faces, &b, Upwind::Smooth(DEFAULT_OMEGA));
            let r = t.derivatives_with_faces(&temps, &faces, &b, Upwind::Exact);
            // sqrt(p² + ω) - |p| <= ω / (2|p|) per face, two faces per layer.
            for i in 0..90 {
                let mut bound = 0.0;
                if i + 1 < 90 { bound += DEFAULT_OMEGA / (4.0 * faces[i].abs()) * (temps[i + 1] - temps[i]).abs(); }
                if i > 0 { bound += DEFAULT_OMEGA / (4.0 * faces[i - 1].abs()) * (temps[i - 1] - temps[i]).abs(); }
                prop_assert!((s[i] - r[i]).abs() <= bound / t.layer.m * (1.0 + 1e-9) + 1e-15);
            }
        }
    }
}
