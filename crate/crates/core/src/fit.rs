//! Identification engine: quadratic performance maps fitted by (optionally
//! relative) least squares, and first-order step-response identification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard on `|y_i|` for the relative-error weights.
pub const Y_FLOOR: f64 = 1e-9;

/// One monomial of the full quadratic basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Term {
    Const,
    Lin(usize),
    Sq(usize),
    Cross(usize, usize),
}

/// Basis term order for each map family. One and three variables use the
/// `1, x, x²` / `1, x.., x².., cross..` layout; the two-variable family puts
/// the cross term before the squares.
fn terms(n_vars: usize) -> Result<&'static [Term]> {
    use Term::*;
    const ONE: [Term; 3] = [Const, Lin(0), Sq(0)];
    const TWO: [Term; 6] = [Const, Lin(0), Lin(1), Cross(0, 1), Sq(0), Sq(1)];
    const THREE: [Term; 10] = [
        Const,
        Lin(0),
        Lin(1),
        Lin(2),
        Sq(0),
        Sq(1),
        Sq(2),
        Cross(0, 1),
        Cross(0, 2),
        Cross(1, 2),
    ];
    match n_vars {
        1 => Ok(&ONE),
        2 => Ok(&TWO),
        3 => Ok(&THREE),
        n => Err(Error::InvalidInput(format!("maps support 1 to 3 variables, got {n}"))),
    }
}

fn term_value(term: Term, x: &[f64]) -> f64 {
    match term {
        Term::Const => 1.0,
        Term::Lin(k) => x[k],
        Term::Sq(k) => x[k] * x[k],
        Term::Cross(j, k) => x[j] * x[k],
    }
}

fn term_name(term: Term) -> String {
    match term {
        Term::Const => "1".to_string(),
        Term::Lin(k) => format!("x{}", k + 1),
        Term::Sq(k) => format!("x{}^2", k + 1),
        Term::Cross(j, k) => format!("x{}*x{}", j + 1, k + 1),
    }
}

/// Number of coefficients of the quadratic map in `n_vars` variables.
pub fn coefficient_count(n_vars: usize) -> Result<usize> {
    terms(n_vars).map(<[Term]>::len)
}

/// Ordered basis values of the quadratic map at `x`.
pub fn basis(n_vars: usize, x: &[f64]) -> Result<Vec<f64>> {
    let ts = terms(n_vars)?;
    if x.len() != n_vars {
        return Err(Error::InvalidInput(format!(
            "expected {n_vars} inputs, got {}",
            x.len()
        )));
    }
    Ok(ts.iter().map(|&t| term_value(t, x)).collect())
}

/// Quadratic multivariate performance map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PolyMap {
    n_vars: usize,
    coeffs: Vec<f64>,
}

impl PolyMap {
    /// The variable count is inferred from the coefficient count (3, 6 or 10).
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        let n_vars = match coeffs.len() {
            3 => 1,
            6 => 2,
            10 => 3,
            n => {
                return Err(Error::InvalidInput(format!(
                    "a quadratic map needs 3, 6 or 10 coefficients, got {n}"
                )))
            }
        };
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("map coefficients must be finite".into()));
        }
        Ok(PolyMap { n_vars, coeffs })
    }

    pub fn zeros(n_vars: usize) -> Result<Self> {
        PolyMap::new(vec![0.0; coefficient_count(n_vars)?])
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        eval_map(self, x)
    }
}

impl TryFrom<Vec<f64>> for PolyMap {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        PolyMap::new(v)
    }
}

impl From<PolyMap> for Vec<f64> {
    fn from(m: PolyMap) -> Vec<f64> {
        m.coeffs
    }
}

pub fn eval_map(map: &PolyMap, x: &[f64]) -> Result<f64> {
    let b = basis(map.n_vars, x)?;
    Ok(map.coeffs.iter().zip(&b).map(|(c, v)| c * v).sum())
}

/// One training observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Sample { x, y }
    }
}

/// Result of a map fit with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFit {
    pub map: PolyMap,
    /// `Σ((y - y*)/y)²` when normalized, `Σ(y - y*)²` otherwise.
    pub objective: f64,
    /// `y_i - y*_i` in output units.
    pub residuals: Vec<f64>,
    pub normalized: bool,
}

/// Fit a quadratic map. With `normalize` the relative squared error is
/// minimized, otherwise the plain squared error.
///
/// Inputs are centred and scaled internally; returned coefficients are in
/// raw input units.
pub fn fit_map(samples: &[Sample], n_vars: usize, normalize: bool) -> Result<MapFit> {
    let ts = terms(n_vars)?;
    let n_coef = ts.len();

    for (i, s) in samples.iter().enumerate() {
        if s.x.len() != n_vars {
            return Err(Error::InvalidSample {
                index: i,
                reason: format!("expected {n_vars} inputs, got {}", s.x.len()),
            });
        }
        if !s.y.is_finite() || s.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample { index: i, reason: "non-finite value".into() });
        }
        if normalize && s.y.abs() <= Y_FLOOR {
            return Err(Error::InvalidSample {
                index: i,
                reason: format!("|y| = {} is at or below the relative-error floor", s.y.abs()),
            });
        }
    }

    let m = samples.len();
    let (mean, scale) = input_scaling(samples, n_vars);
    let scaled: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| (0..n_vars).map(|k| (s.x[k] - mean[k]) / scale[k]).collect())
        .collect();

    // Pad to at least n_coef rows so the SVD exposes the full null space.
    let rows = m.max(n_coef);
    let mut a = DMatrix::<f64>::zeros(rows, n_coef);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (i, (s, xs)) in samples.iter().zip(&scaled).enumerate() {
        let w = if normalize { 1.0 / s.y } else { 1.0 };
        for (j, &t) in ts.iter().enumerate() {
            a[(i, j)] = w * term_value(t, xs);
        }
        rhs[i] = w * s.y;
    }

    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let s_max = sv.iter().cloned().fold(0.0, f64::max);
    let tol = s_max * 1e-10;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < n_coef || m < n_coef {
        let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
        let directions = (0..sv.len())
            .filter(|&k| sv[k] <= tol)
            .map(|k| describe_direction(ts, v_t.row(k).iter().cloned()))
            .collect();
        return Err(Error::DegenerateFit { rank, columns: n_coef, directions });
    }
    let beta_scaled = svd
        .solve(&rhs, tol)
        .map_err(|e| Error::InvalidInput(format!("least-squares solve failed: {e}")))?;

    let coeffs = unscale(ts, beta_scaled.as_slice(), &mean, &scale);
    let map = PolyMap::new(coeffs)?;
    let mut residuals = Vec::with_capacity(m);
    let mut objective = 0.0;
    for s in samples {
        let r = s.y - map.eval(&s.x)?;
        residuals.push(r);
        objective += if normalize { (r / s.y).powi(2) } else { r * r };
    }
    Ok(MapFit { map, objective, residuals, normalized: normalize })
}

fn input_scaling(samples: &[Sample], n_vars: usize) -> (Vec<f64>, Vec<f64>) {
    let m = samples.len().max(1) as f64;
    let mut mean = vec![0.0; n_vars];
    let mut scale = vec![1.0; n_vars];
    for k in 0..n_vars {
        mean[k] = samples.iter().map(|s| s.x[k]).sum::<f64>() / m;
        let var = samples.iter().map(|s| (s.x[k] - mean[k]).powi(2)).sum::<f64>() / m;
        if var > 0.0 {
            scale[k] = var.sqrt();
        }
    }
    (mean, scale)
}

/// Convert coefficients on `x' = (x - mean)/scale` back to raw `x`.
fn unscale(ts: &[Term], beta: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    let idx = |t: Term| ts.iter().position(|&u| u == t).expect("term in basis");
    let a: Vec<f64> = scale.iter().map(|s| 1.0 / s).collect();
    let b: Vec<f64> = mean.iter().zip(scale).map(|(m, s)| -m / s).collect();
    let mut raw = vec![0.0; ts.len()];
    for (&t, &c) in ts.iter().zip(beta) {
        match t {
            Term::Const => raw[idx(Term::Const)] += c,
            Term::Lin(k) => {
                raw[idx(Term::Lin(k))] += c * a[k];
                raw[idx(Term::Const)] += c * b[k];
            }
            Term::Sq(k) => {
                raw[idx(Term::Sq(k))] += c * a[k] * a[k];
                raw[idx(Term::Lin(k))] += c * 2.0 * a[k] * b[k];
                raw[idx(Term::Const)] += c * b[k] * b[k];
            }
            Term::Cross(j, k) => {
                raw[idx(Term::Cross(j, k))] += c * a[j] * a[k];
                raw[idx(Term::Lin(j))] += c * a[j] * b[k];
                raw[idx(Term::Lin(k))] += c * b[j] * a[k];
                raw[idx(Term::Const)] += c * b[j] * b[k];
            }
        }
    }
    raw
}

fn describe_direction(ts: &[Term], v: impl Iterator<Item = f64>) -> String {
    let parts: Vec<String> = ts
        .iter()
        .zip(v)
        .filter(|(_, c)| c.abs() > 1e-3)
        .map(|(&t, c)| format!("{c:+.3}*{}", term_name(t)))
        .collect();
    if parts.is_empty() {
        "0".to_string()
    } else {
        parts.join(" ")
    }
}

/// Identified first-order (PT-1) step response `y = K·u·(1 - exp(-t/T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResponseFit {
    /// Transfer coefficient K_S.
    pub gain: f64,
    /// Time constant T_S in seconds.
    pub time_constant: f64,
    /// Sum of squared residuals at the optimum.
    pub sse: f64,
    /// Set when the series carries no information about T_S (y ≡ 0).
    pub indeterminate: bool,
}

/// Identify K_S and T_S from a step test. K_S is solved in closed form for
/// every candidate T_S; T_S is located by a log-spaced scan over
/// `[1 s, 10 × duration]` refined with golden-section search.
pub fn fit_step_response(series: &[(f64, f64)], u: f64) -> Result<StepResponseFit> {
    if u == 0.0 || !u.is_finite() {
        return Err(Error::InvalidInput(format!("step magnitude must be non-zero, got {u}")));
    }
    if series.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "step response needs at least 5 points, got {}",
            series.len()
        )));
    }
    if series.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidInput("step response contains non-finite values".into()));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidInput("time stamps must be strictly increasing".into()));
    }

    let yy: f64 = series.iter().map(|(_, y)| y * y).sum();
    let duration = series.last().unwrap().0 - series[0].0;
    let lo = 1.0_f64;
    let hi = (10.0 * duration).max(10.0);
    if yy == 0.0 {
        return Ok(StepResponseFit { gain: 0.0, time_constant: lo, sse: 0.0, indeterminate: true });
    }

    // Returns (sse, gain) for a candidate time constant.
    let eval = |tau: f64| -> (f64, f64) {
        let mut yp = 0.0;
        let mut pp = 0.0;
        for &(t, y) in series {
            let p = u * (1.0 - (-t / tau).exp());
            yp += y * p;
            pp += p * p;
        }
        if pp == 0.0 {
            return (yy, 0.0);
        }
        (yy - yp * yp / pp, yp / pp)
    };
    let objective = |log_tau: f64| eval(log_tau.exp()).0;

    const GRID: usize = 160;
    let (l0, l1) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..=GRID).map(|k| l0 + (l1 - l0) * k as f64 / GRID as f64).collect();
    let best = grid
        .iter()
        .enumerate()
        .map(|(k, &g)| (k, objective(g)))
        .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    let a = grid[best.0.saturating_sub(1)];
    let b = grid[(best.0 + 1).min(GRID)];
    let log_tau = golden_section(objective, a, b, 1e-9);
    let tau = log_tau.exp();
    let (sse, gain) = eval(tau);
    Ok(StepResponseFit { gain, time_constant: tau, sse: sse.max(0.0), indeterminate: false })
}

/// Mean gain and time constant over several step tests, ignoring
/// indeterminate fits for the time constant.
pub fn average_step_fits(fits: &[StepResponseFit]) -> Result<StepResponseFit> {
    if fits.is_empty() {
        return Err(Error::InvalidInput("no step fits to average".into()));
    }
    let n = fits.len() as f64;
    let gain = fits.iter().map(|f| f.gain).sum::<f64>() / n;
    let determinate: Vec<_> = fits.iter().filter(|f| !f.indeterminate).collect();
    let sse = fits.iter().map(|f| f.sse).sum::<f64>();
    if determinate.is_empty() {
        return Ok(StepResponseFit { gain, time_constant: fits[0].time_constant, sse, indeterminate: true });
    }
    let time_constant =
        determinate.iter().map(|f| f.time_constant).sum::<f64>() / determinate.len() as f64;
    Ok(StepResponseFit { gain, time_constant, sse, indeterminate: false })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
