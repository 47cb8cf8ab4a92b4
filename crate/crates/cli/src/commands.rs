use std::fs;
use std::path::Path;

use greybox_core::config::{PlantConfig, Scenario};
use greybox_core::fit::{coefficient_count, fit_map, fit_step_response, Sample};
use greybox_core::metrics::{align, gof, nrmsre, r_squared, rolling_mean, PairedSeries};
use greybox_core::plant::Simulation;
use greybox_core::timeseries::{read_numeric_csv, TimeSeriesTable};
use greybox_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::svg::{render, Curve};
use crate::FitKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Divergence { .. }) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn simulate(plant: &Path, scenario: &Path, out: &Path) -> Result<()> {
    let plant = PlantConfig::from_path(plant)?;
    let scenario = Scenario::from_path(scenario)?;
    let sim = Simulation::new(&plant, &scenario)?;
    log::info!("{} wiring: {:?}; dt = {} s (dt_max {:.2} s)", sim.mode, sim.wiring, sim.dt(), sim.dt_max());
    let log = sim.run()?;
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    log.table.write_path(&out.join("simlog.csv"))?;
    write_json(&out.join("summary.json"), &log.summary)?;
    let t = &log.summary.termination;
    log::info!("terminated by {:?} at {:.1} min", t.reason, t.time_min);
    Ok(())
}

pub fn fit(samples: &Path, kind: FitKind, out: &Path, normalize: bool, step_input: f64) -> Result<()> {
    let (headers, rows) = read_numeric_csv(samples)?;
    let report = match kind {
        FitKind::Step => {
            if headers.len() != 2 {
                return Err(CliError::Usage(format!(
                    "step fit expects 2 columns (time, response), found {}",
                    headers.len()
                )));
            }
            let series: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            let f = fit_step_response(&series, step_input)?;
            json!({
                "kind": "step",
                "step_input": step_input,
                "gain": f.gain,
                "time_constant": f.time_constant,
                "sse": f.sse,
                "indeterminate": f.indeterminate,
                "n_samples": series.len(),
            })
        }
        FitKind::Map1 | FitKind::Map2 | FitKind::Map3 => {
            let n_vars = match kind {
                FitKind::Map1 => 1,
                FitKind::Map2 => 2,
                _ => 3,
            };
            if headers.len() != n_vars + 1 {
                return Err(CliError::Usage(format!(
                    "{}-variable map expects {} columns ({} inputs and the output), found {}",
                    n_vars,
                    n_vars + 1,
                    n_vars,
                    headers.len()
                )));
            }
            let samples: Vec<Sample> =
                rows.iter().map(|r| Sample::new(r[..n_vars].to_vec(), r[n_vars])).collect();
            let f = fit_map(&samples, n_vars, normalize)?;
            json!({
                "kind": format!("map{n_vars}"),
                "inputs": headers[..n_vars],
                "output": headers[n_vars],
                "n_coefficients": coefficient_count(n_vars)?,
                "coefficients": f.map.coeffs(),
                "objective": f.objective,
                "normalized": f.normalized,
                "residuals": f.residuals,
                "n_samples": samples.len(),
            })
        }
    };
    write_json(out, &report)
}

fn metric(r: greybox_core::Result<f64>) -> Value {
    match r {
        Ok(v) => json!(v),
        Err(Error::DegenerateRange) => json!("undefined: degenerate range"),
        Err(Error::DegenerateVariance(which)) => json!(format!("undefined: degenerate variance ({which})")),
        Err(e) => json!(format!("undefined: {e}")),
    }
}

pub fn validate(measured: &Path, simlog: &Path, channels: &[String], out: &Path, rolling: usize) -> Result<()> {
    let m = TimeSeriesTable::read_path(measured)?;
    let s = TimeSeriesTable::read_path(simlog)?;
    let missing: Vec<&str> = channels
        .iter()
        .filter(|c| m.column_index(c).is_none() || s.column_index(c).is_none())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Usage(format!("channels missing from the inputs: {}", missing.join(", "))));
    }
    let mut results = Vec::new();
    for c in channels {
        let p = align(&m.column_series(c)?, &s.column_series(c)?)?;
        let p = PairedSeries::with_time(p.time, rolling_mean(&p.y, rolling), rolling_mean(&p.y_star, rolling))?;
        results.push(json!({
            "channel": c,
            "n": p.len(),
            "nrmsre": metric(nrmsre(&p)),
            "r_squared": metric(r_squared(&p)),
            "gof": metric(gof(&p)),
        }));
    }
    write_json(out, &json!({ "rolling_window": rolling, "channels": results }))
}

pub fn plot(simlog: &Path, channels: &[String], out: &Path, measured: Option<&Path>) -> Result<()> {
    if channels.iter().all(|c| c.trim().is_empty()) {
        return Err(CliError::Usage("no channels given".into()));
    }
    let s = TimeSeriesTable::read_path(simlog)?;
    let m = measured.map(TimeSeriesTable::read_path).transpose()?;
    let mut curves = Vec::new();
    for c in channels {
        let sim = s
            .column_series(c)
            .map_err(|_| CliError::Usage(format!("channel \"{c}\" not in {}", simlog.display())))?;
        if let Some(m) = &m {
            let meas = m
                .column_series(c)
                .map_err(|_| CliError::Usage(format!("channel \"{c}\" not in the measured file")))?;
            curves.push(Curve { label: format!("{c} (measured)"), points: meas, dashed: false });
        }
        curves.push(Curve { label: format!("{c} (simulated)"), points: sim, dashed: true });
    }
    let title = simlog.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    fs::write(out, render(&title, &curves)).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    Ok(())
}
