//! Velocity fits, inverse-size extrapolation and the velocity-peak locator.

use crate::error::{Error, Result};
use crate::observables::ObservableSeries;

/// Default fit window for the expansion velocity.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (2.0, 10.0);

/// Ordinary least-squares line over a time window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Result of fitting `value = limit + coefficient / size`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtrapolationResult {
    pub limit_value: f64,
    pub coefficient: f64,
    pub limit_stderr: f64,
    pub coefficient_stderr: f64,
    pub inputs: Vec<(f64, f64)>,
}

struct Ols {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    slope_se: f64,
    intercept_se: f64,
}

fn ols(x: &[f64], y: &[f64]) -> Ols {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let sigma2 = sse / dof;
    Ols {
        slope,
        intercept,
        r_squared,
        slope_se: (sigma2 / sxx).sqrt(),
        intercept_se: (sigma2 * (1.0 / n + mx * mx / sxx)).sqrt(),
    }
}

fn window_points(times: &[f64], values: &[f64], window: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    const EDGE: f64 = 1e-9;
    times
        .iter()
        .zip(values)
        .filter(|(&t, v)| t >= window.0 - EDGE && t <= window.1 + EDGE && v.is_finite())
        .map(|(&t, &v)| (t, v))
        .unzip()
}

fn cadence(times: &[f64]) -> f64 {
    match times {
        [a, b, ..] => b - a,
        _ => f64::NAN,
    }
}

/// Least-squares line of `values` against `times` restricted to `window`.
pub fn fit_line(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<FitResult> {
    let (x, y) = window_points(times, values, window);
    if x.len() < 3 {
        return Err(Error::TooFewPoints {
            t_min: window.0,
            t_max: window.1,
            found: x.len(),
            cadence: cadence(times),
        });
    }
    let f = ols(&x, &y);
    Ok(FitResult { slope: f.slope, intercept: f.intercept, r_squared: f.r_squared, window, n_points: x.len() })
}

/// Expansion velocity: slope of the radius over `window`.
pub fn fit_velocity(series: &ObservableSeries, window: (f64, f64)) -> Result<FitResult> {
    fit_line(&series.times, &series.radius, window)
}

/// Radius against `sqrt(t)` over `window`; the window still refers to `t`.
pub fn fit_sqrt_time(times: &[f64], radius: &[f64], window: (f64, f64)) -> Result<FitResult> {
    let (x, y) = window_points(times, radius, window);
    if x.len() < 3 {
        return Err(Error::TooFewPoints {
            t_min: window.0,
            t_max: window.1,
            found: x.len(),
            cadence: cadence(times),
        });
    }
    let sx: Vec<f64> = x.iter().map(|t| t.sqrt()).collect();
    let f = ols(&sx, &y);
    Ok(FitResult { slope: f.slope, intercept: f.intercept, r_squared: f.r_squared, window, n_points: x.len() })
}

/// Fits `value = limit + coefficient / size` by least squares in `1/size`.
pub fn extrapolate_inverse_size(points: &[(f64, f64)]) -> Result<ExtrapolationResult> {
    if points.len() < 3 {
        return Err(Error::DegenerateSizes(format!("got {} points", points.len())));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::DegenerateSizes(format!("size {} repeated", w[0].0)));
        }
    }
    if sorted.iter().any(|p| !(p.0 > 0.0) || !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::DegenerateSizes("sizes must be positive and values finite".into()));
    }
    let x: Vec<f64> = sorted.iter().map(|p| 1.0 / p.0).collect();
    let y: Vec<f64> = sorted.iter().map(|p| p.1).collect();
    let f = ols(&x, &y);
    Ok(ExtrapolationResult {
        limit_value: f.intercept,
        coefficient: f.slope,
        limit_stderr: f.intercept_se,
        coefficient_stderr: f.slope_se,
        inputs: sorted,
    })
}

/// Grid maximum refined by the parabola through it and its two neighbours.
/// Errors when the maximum is on either end of the grid.
pub fn find_velocity_peak(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 5 {
        return Err(Error::Config(format!("peak search needs at least 5 points, got {}", points.len())));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Config("peak search needs a strictly increasing W grid".into()));
    }
    let k = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    if k == 0 || k == points.len() - 1 {
        return Err(Error::PeakAtEdge { w: points[k].0 });
    }
    let (x0, y0) = points[k - 1];
    let (x1, y1) = points[k];
    let (x2, y2) = points[k + 1];
    // Newton form: y = y0 + d1 (x - x0) + d2 (x - x0)(x - x1)
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let d2 = (d12 - d01) / (x2 - x0);
    if !(d2 < 0.0) {
        return Ok((x1, y1));
    }
    let xp = 0.5 * (x0 + x1) - d01 / (2.0 * d2);
    let yp = y0 + d01 * (xp - x0) + d2 * (xp - x0) * (xp - x1);
    Ok((xp, yp))
}
