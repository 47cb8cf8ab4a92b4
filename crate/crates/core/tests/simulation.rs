use std::path::{Path, PathBuf};

use greybox_core::config::{PlantConfig, Scenario};
use greybox_core::plant::{Simulation, TerminationReason};
use greybox_core::Error;
use proptest::prelude::*;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn plant() -> PlantConfig {
    PlantConfig::from_path(&configs().join("plant.json")).unwrap()
}

fn scenario(name: &str) -> Scenario {
    Scenario::from_path(&configs().join(format!("{name}.json"))).unwrap()
}

fn idle_wec(temp: f64, t_amb: f64, horizon: f64) -> Scenario {
    Scenario::from_json(&format!(
        r#"{{"mode": "WEC", "initial": {{"htes": {temp}, "ctes": {temp}}}, "t_amb": {t_amb},
            "switches": {{"revhp": 0}},
            "setpoint": {{"sensor": "HTES_T_1", "threshold": 200, "direction": "above"}},
            "horizon": {horizon}}}"#
    ))
    .unwrap()
}

#[test]
fn bundled_scenarios_reach_their_setpoints() {
    let p = plant();
    for name in ["wep", "sec", "wec"] {
        let s = scenario(name);
        let log = Simulation::new(&p, &s).unwrap().run().unwrap();
        let t = &log.summary.termination;
        assert_eq!(t.reason, TerminationReason::Setpoint, "{name}");
        assert!(t.time_s < s.horizon, "{name}");
        for a in &log.summary.energy_audit {
            assert!(a.relative_error < 1e-6, "{name} {}: {}", a.tank, a.relative_error);
        }
        let sensor = log.table.column(&s.setpoint.sensor).unwrap();
        assert!(!s.setpoint.reached(sensor[0]), "{name} starts past its set-point");
    }
}

#[test]
fn log_is_on_a_sixty_second_grid() {
    let log = Simulation::new(&plant(), &scenario("wec")).unwrap().run().unwrap();
    let t = &log.table.time;
    assert_eq!(t[0], 0.0);
    for w in t[..t.len() - 1].windows(2) {
        assert_eq!(w[1] - w[0], 60.0);
    }
    for c in ["T_amb", "HTES_T_1", "HTES_T_9", "CTES_T_4", "HP_T_fl_HT", "P_el_RevHP", "OC_T_fl", "P_el_OC"] {
        assert!(log.table.column_index(c).is_some(), "missing {c}");
    }
    assert!(log.table.rows.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn cooling_run_cools_the_cold_tank() {
    let log = Simulation::new(&plant(), &scenario("sec")).unwrap().run().unwrap();
    let ctes = log.table.column("CTES_T_4").unwrap();
    assert!(ctes.last().unwrap() < &ctes[0]);
    let p_lt = log.table.column("P_th_CCM_LT").unwrap();
    assert!(p_lt.iter().all(|&v| v > 0.0));
}

#[test]
fn sep_defaults_report_missing_equilibrium() {
    let err = Simulation::new(&plant(), &scenario("sep")).unwrap().run().unwrap_err();
    match err {
        Error::Divergence { location, time } => {
            assert!(location.contains("medium-temperature loop"), "{location}");
            assert_eq!(time, 0.0);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn horizon_ends_an_unreachable_run() {
    let log = Simulation::new(&plant(), &idle_wec(30.0, 10.0, 1800.0)).unwrap().run().unwrap();
    assert_eq!(log.summary.termination.reason, TerminationReason::Horizon);
    assert_eq!(log.summary.termination.time_s, 1800.0);
    assert_eq!(*log.table.time.last().unwrap(), 1800.0);
    let h1 = log.table.column("HTES_T_1").unwrap();
    assert!(h1.windows(2).all(|w| w[1] <= w[0]), "idle tank above ambient must only cool");
}

#[test]
fn table_boundary_drives_ambient() {
    let mut s = idle_wec(20.0, 0.0, 600.0);
    s.t_amb = serde_json::from_str("[[0, 10], [600, 30]]").unwrap();
    let log = Simulation::new(&plant(), &s).unwrap().run().unwrap();
    let amb = log.table.column("T_amb").unwrap();
    assert_eq!(amb[0], 10.0);
    assert_eq!(amb[5], 20.0);
    assert_eq!(*amb.last().unwrap(), 30.0);
}

#[test]
fn dt_above_stability_bound_is_rejected() {
    let mut s = scenario("wec");
    s.dt = 1000.0;
    match Simulation::new(&plant(), &s) {
        Err(Error::Config(m)) => assert!(m.contains("dt_max"), "{m}"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn idle_plant_at_ambient_stays_put(temp in 5.0f64..80.0) {
        let log = Simulation::new(&plant(), &idle_wec(temp, temp, 600.0)).unwrap().run().unwrap();
        for c in ["HTES_T_1", "HTES_T_9", "CTES_T_1", "CTES_T_4"] {
            for v in log.table.column(c).unwrap() {
                prop_assert!((v - temp).abs() < 1e-6, "{} drifted to {}", c, v);
            }
        }
    }

    #[test]
    fn idle_tanks_relax_towards_ambient(temp in 20.0f64..80.0, t_amb in -5.0f64..15.0) {
        let sim = Simulation::new(&plant(), &idle_wec(temp, t_amb, 600.0)).unwrap();
        let log = sim.run().unwrap();
        let h = log.table.column("HTES_T_5").unwrap();
        prop_assert!(*h.last().unwrap() < temp);
        prop_assert!(*h.last().unwrap() > t_amb);
        for a in &log.summary.energy_audit {
            prop_assert!(a.loss_j > 0.0);
            prop_assert!(a.relative_error < 1e-6);
        }
    }
}
