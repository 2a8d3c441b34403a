use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::analysis::{extrapolate_inverse_size, find_velocity_peak, ExtrapolationResult};
use crate::error::{Error, Result};

use super::config::{ScenarioConfig, ScenarioKind};
use super::run::{header_lines, run_scenario, RunOutcome, REPORT_FORMAT};

pub const SWEEP_REPORT_FILE: &str = "sweep_report.txt";
pub const SWEEP_TABLE_FILE: &str = "sweep_table.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub w: f64,
    pub n: usize,
    pub l: usize,
}

impl SweepPoint {
    pub fn dir_name(&self) -> String {
        format!("w{:.4}_n{}_l{}", self.w, self.n, self.l)
    }
}

#[derive(Debug)]
pub struct PointResult {
    pub point: SweepPoint,
    pub outcome: Result<RunOutcome>,
}

impl PointResult {
    pub fn velocity(&self) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|o| if o.integrity.is_empty() { o.velocity() } else { None })
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub config: ScenarioConfig,
    pub points: Vec<PointResult>,
    /// `value = limit + c / size` fits, labelled by what was held fixed.
    pub extrapolations: Vec<(String, Result<ExtrapolationResult>)>,
    /// Velocity peaks over W, labelled by the size held fixed.
    pub peaks: Vec<(String, Result<(f64, f64)>)>,
    /// Some point failed to run or failed an integrity check.
    pub partial: bool,
}

/// Expands the sweep axes into single-run points.
pub fn sweep_points(cfg: &ScenarioConfig) -> Result<Vec<SweepPoint>> {
    cfg.validate_sweep()?;
    let ws = if cfg.sweep_w.is_empty() { vec![cfg.w] } else { cfg.sweep_w.clone() };
    let mut pts = Vec::new();
    for &w in &ws {
        match cfg.run_kind() {
            ScenarioKind::GsQuench => {
                let ls = if cfg.sweep_l.is_empty() { vec![cfg.l] } else { cfg.sweep_l.clone() };
                for l in ls {
                    if l % 3 != 0 {
                        return Err(Error::Config(format!("gs-quench sweep size L = {l} is not a multiple of 3")));
                    }
                    pts.push(SweepPoint { w, n: 2 * l / 3, l });
                }
            }
            _ => {
                let ns = if cfg.sweep_n.is_empty() { vec![cfg.n] } else { cfg.sweep_n.clone() };
                for n in ns {
                    let l = cfg.pad.map_or(cfg.l, |p| n + 2 * p);
                    pts.push(SweepPoint { w, n, l });
                }
            }
        }
    }
    Ok(pts)
}

/// Config of one sweep point.
pub fn point_config(cfg: &ScenarioConfig, p: &SweepPoint) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.scenario = cfg.run_kind();
    c.base = None;
    c.sweep_w.clear();
    c.sweep_n.clear();
    c.sweep_l.clear();
    c.pad = None;
    if p.n != cfg.n || p.l != cfg.l {
        c.box_sites = None;
    }
    c.w = p.w;
    c.n = p.n;
    c.l = p.l;
    c
}

/// Runs every point in parallel, then fits across points.
pub fn run_sweep(cfg: &ScenarioConfig, output_dir: Option<&Path>) -> Result<SweepOutcome> {
    let pts = sweep_points(cfg)?;
    let points: Vec<PointResult> = pts
        .into_par_iter()
        .map(|p| {
            let c = point_config(cfg, &p);
            let dir = output_dir.map(|d| d.join(p.dir_name()));
            log::info!("sweep point {}", p.dir_name());
            let outcome = run_scenario(&c, dir.as_deref());
            PointResult { point: p, outcome }
        })
        .collect();
    let partial = points.iter().any(|p| match &p.outcome {
        Ok(o) => !o.integrity.is_empty(),
        Err(_) => true,
    });
    let (extrapolations, peaks) = aggregate(cfg, &points);
    let out = SweepOutcome { config: cfg.clone(), points, extrapolations, peaks, partial };
    if let Some(dir) = output_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SWEEP_TABLE_FILE), sweep_table(&out))?;
        fs::write(dir.join(SWEEP_REPORT_FILE), sweep_report(&out))?;
    }
    Ok(out)
}

fn size_of(kind: ScenarioKind, p: &SweepPoint) -> usize {
    match kind {
        ScenarioKind::GsQuench => p.l,
        _ => p.n,
    }
}

type Aggregates = (Vec<(String, Result<ExtrapolationResult>)>, Vec<(String, Result<(f64, f64)>)>);

fn aggregate(cfg: &ScenarioConfig, points: &[PointResult]) -> Aggregates {
    let kind = cfg.run_kind();
    let size_name = if kind == ScenarioKind::GsQuench { "l" } else { "n" };
    let mut sizes: Vec<usize> = points.iter().map(|p| size_of(kind, &p.point)).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut ws: Vec<f64> = points.iter().map(|p| p.point.w).collect();
    ws.sort_by(f64::total_cmp);
    ws.dedup();

    let mut extrap = Vec::new();
    let mut peaks = Vec::new();
    if sizes.len() >= 2 {
        for &w in &ws {
            let pts: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.point.w == w)
                .filter_map(|p| p.velocity().map(|v| (size_of(kind, &p.point) as f64, v)))
                .collect();
            extrap.push((format!("velocity vs {size_name} at w = {w}"), extrapolate_inverse_size(&pts)));
        }
    }
    if ws.len() >= 2 && kind == ScenarioKind::GsQuench {
        let mut peak_sizes = Vec::new();
        for &s in &sizes {
            let pts: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| size_of(kind, &p.point) == s)
                .filter_map(|p| p.velocity().map(|v| (p.point.w, v)))
                .collect();
            let peak = find_velocity_peak(&pts);
            if let Ok((w, _)) = peak {
                peak_sizes.push((s as f64, w));
            }
            peaks.push((format!("{size_name} = {s}"), peak));
        }
        if sizes.len() >= 2 {
            extrap.push(("peak w vs l".into(), extrapolate_inverse_size(&peak_sizes)));
        }
    }
    (extrap, peaks)
}

pub fn sweep_table(o: &SweepOutcome) -> String {
    let mut s = String::from("w,n,l,velocity,r_squared,status\n");
    for p in &o.points {
        let (v, r2, status) = match &p.outcome {
            Ok(out) => (
                out.fit.map_or(f64::NAN, |f| f.slope),
                out.fit.map_or(f64::NAN, |f| f.r_squared),
                if out.integrity.is_empty() { "ok".to_string() } else { "integrity".to_string() },
            ),
            Err(e) => (f64::NAN, f64::NAN, format!("error: {}", e.to_string().replace(',', ";"))),
        };
        let _ = writeln!(s, "{},{},{},{v},{r2},{status}", p.point.w, p.point.n, p.point.l);
    }
    s
}

pub fn sweep_report(o: &SweepOutcome) -> String {
    let mut s = String::new();
    for line in header_lines(&o.config) {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "format = {REPORT_FORMAT}");
    let _ = writeln!(s, "points = {}", o.points.len());
    let _ = writeln!(s, "status = {}", if o.partial { "partial" } else { "complete" });
    for (label, r) in &o.extrapolations {
        let _ = writeln!(s, "\n[extrapolation \"{label}\"]");
        match r {
            Ok(e) => {
                let _ = writeln!(s, "limit_value = {}", e.limit_value);
                let _ = writeln!(s, "limit_stderr = {}", e.limit_stderr);
                let _ = writeln!(s, "coefficient = {}", e.coefficient);
                let _ = writeln!(s, "coefficient_stderr = {}", e.coefficient_stderr);
                let inputs: Vec<String> = e.inputs.iter().map(|(x, y)| format!("{x}:{y}")).collect();
                let _ = writeln!(s, "inputs = {}", inputs.join(", "));
            }
            Err(e) => {
                let _ = writeln!(s, "error = \"{e}\"");
            }
        }
    }
    for (label, r) in &o.peaks {
        let _ = writeln!(s, "\n[peak \"{label}\"]");
        match r {
            Ok((w, v)) => {
                let _ = writeln!(s, "w_peak = {w}");
                let _ = writeln!(s, "v_peak = {v}");
            }
            Err(e) => {
                let _ = writeln!(s, "error = \"{e}\"");
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_sweep_with_padding() {
        let mut c = ScenarioConfig::new(ScenarioKind::Sweep, 1.0, 20, 4);
        c.base = Some(ScenarioKind::MiExpansion);
        c.sweep_n = vec![4, 6, 8];
        c.pad = Some(5);
        let pts = sweep_points(&c).unwrap();
        assert_eq!(pts.iter().map(|p| p.l).collect::<Vec<_>>(), vec![14, 16, 18]);
        let pc = point_config(&c, &pts[1]);
        assert_eq!(pc.scenario, ScenarioKind::MiExpansion);
        assert_eq!(pc.box_bounds(), (6, 11));
        pc.validate_run().unwrap();
    }

    #[test]
    fn free_n_sweep_extrapolates() {
        let mut c = ScenarioConfig::new(ScenarioKind::Sweep, 0.0, 40, 4);
        c.base = Some(ScenarioKind::MiExpansion);
        c.sweep_n = vec![4, 6, 8];
        c.pad = Some(30);
        let o = run_sweep(&c, None).unwrap();
        assert!(!o.partial);
        assert_eq!(o.extrapolations.len(), 1);
        let e = o.extrapolations[0].1.as_ref().unwrap();
        assert!((e.limit_value - 2f64.sqrt()).abs() < 0.1, "{}", e.limit_value);
        assert!(sweep_report(&o).contains("status = complete"));
    }

    #[test]
    fn gs_sweep_requires_thirds() {
        let mut c = ScenarioConfig::new(ScenarioKind::Sweep, 1.0, 12, 8);
        c.base = Some(ScenarioKind::GsQuench);
        c.sweep_l = vec![12, 13];
        assert!(sweep_points(&c).is_err());
    }
}
