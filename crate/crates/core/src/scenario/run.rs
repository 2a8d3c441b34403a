use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::analysis::{fit_sqrt_time, fit_velocity, FitResult};
use crate::error::{Error, Result};
use crate::observables::{melt_time, ObservableSeries, SeriesMeta, Snapshot};

use super::checkpoint;
use super::config::{EngineChoice, ScenarioConfig, ScenarioKind};
use super::engine::{Preparation, Propagator, StepStats};

pub const SERIES_FILE: &str = "series.csv";
pub const FIT_FILE: &str = "fit_report.txt";
pub const MELT_FILE: &str = "melt_report.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const REPORT_FORMAT: &str = "hcb-report-v1";

/// Sites from either edge watched by the wavefront guard.
pub const WAVEFRONT_MARGIN: usize = 6;
/// Density change from `t = 0` above which the wavefront guard fires.
pub const WAVEFRONT_LEVEL: f64 = 1e-4;

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub config: ScenarioConfig,
    pub engine: EngineChoice,
    pub series: ObservableSeries,
    pub preparation: Preparation,
    pub step_stats: Option<StepStats>,
    pub fit: Option<FitResult>,
    pub sqrt_fit: Option<FitResult>,
    pub fit_error: Option<String>,
    pub melt_time: Option<f64>,
    /// First time the wavefront came within the guard margin of an edge.
    pub wavefront: Option<f64>,
    /// Largest radius change on rerunning at half the bond cap.
    pub chi_half_delta: Option<f64>,
    /// Failed integrity checks; empty for a clean run.
    pub integrity: Vec<String>,
    pub output_dir: Option<PathBuf>,
}

impl RunOutcome {
    pub fn velocity(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// `Err(Integrity)` when any check failed.
    pub fn check(&self) -> Result<()> {
        if self.integrity.is_empty() {
            Ok(())
        } else {
            Err(Error::Integrity(self.integrity.join("; ")))
        }
    }
}

/// A run in progress: engine state plus the rows recorded so far.
#[derive(Clone, Debug)]
pub struct Runner {
    pub(crate) cfg: ScenarioConfig,
    pub(crate) prop: Propagator,
    pub(crate) rows: Vec<(f64, Snapshot)>,
    pub(crate) preparation: Preparation,
    pub(crate) output_dir: Option<PathBuf>,
}

/// Config with engine, horizon and fit window made explicit.
pub fn resolve(cfg: &ScenarioConfig) -> ScenarioConfig {
    let mut r = cfg.clone();
    r.engine = cfg.resolve_engine();
    r.t_max = Some(cfg.t_max());
    let (a, b) = cfg.fit_window();
    r.fit_window = Some([a, b]);
    r
}

impl Runner {
    /// Validates `cfg`, prepares the initial state and records `t = 0`.
    pub fn new(cfg: &ScenarioConfig, output_dir: Option<&Path>) -> Result<Self> {
        cfg.validate_run()?;
        let cfg = resolve(cfg);
        let (prop, preparation) = Propagator::prepare(&cfg)?;
        let snap = prop.snapshot()?;
        Ok(Self { cfg, prop, rows: vec![(0.0, snap)], preparation, output_dir: output_dir.map(Path::to_path_buf) })
    }

    /// Continues a run from a checkpoint; outputs go next to the checkpoint.
    pub fn resume(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut r = checkpoint::decode(&bytes)?;
        r.output_dir = path.parent().map(Path::to_path_buf);
        Ok(r)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Index of the last recorded row.
    pub fn recorded(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn total_records(&self) -> usize {
        self.cfg.record_count()
    }

    fn time_of(&self, k: usize) -> f64 {
        k as f64 * self.cfg.record_every
    }

    fn checkpoint_stride(&self) -> Option<usize> {
        self.cfg.checkpoint_every.map(|c| ((c / self.cfg.record_every).round() as usize).max(1))
    }

    /// Evolves and records up to record index `last` (clamped to the horizon).
    pub fn run_until(&mut self, last: usize) -> Result<()> {
        let last = last.min(self.total_records());
        let spr = self.cfg.steps_per_record();
        while self.recorded() < last {
            let k = self.recorded() + 1;
            let (t0, t1) = (self.time_of(k - 1), self.time_of(k));
            self.prop.advance(t0, t1, spr)?;
            self.rows.push((t1, self.prop.snapshot()?));
            if let (Some(stride), Some(dir)) = (self.checkpoint_stride(), &self.output_dir) {
                if k.is_multiple_of(stride) && k < self.total_records() {
                    fs::create_dir_all(dir)?;
                    checkpoint::write(self, &dir.join(CHECKPOINT_FILE))?;
                }
            }
        }
        Ok(())
    }

    /// Runs to the horizon, analyses the series and writes the output files.
    pub fn finish(mut self) -> Result<RunOutcome> {
        self.run_until(usize::MAX)?;
        let outcome = self.analyse()?;
        if let Some(dir) = &outcome.output_dir {
            write_outputs(&outcome, dir)?;
            let ck = dir.join(CHECKPOINT_FILE);
            if ck.exists() {
                fs::remove_file(ck)?;
            }
        }
        Ok(outcome)
    }

    fn analyse(self) -> Result<RunOutcome> {
        let cfg = self.cfg;
        let params = cfg.params()?;
        let mut series = ObservableSeries::new(SeriesMeta {
            params,
            n: cfg.n,
            engine: cfg.engine.as_str().into(),
            dt: cfg.dt,
        });
        for (t, snap) in self.rows {
            series.record(t, snap)?;
        }
        let window = cfg.fit_window();
        let (fit, fit_error) = match fit_velocity(&series, window) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let sqrt_fit = fit_sqrt_time(&series.times, &series.radius, window).ok();
        let melt = match cfg.run_kind() {
            ScenarioKind::MiExpansion => melt_time(&series, cfg.melt_threshold),
            _ => None,
        };
        let wavefront = series.wavefront_hit(WAVEFRONT_MARGIN, WAVEFRONT_LEVEL);
        if let Some(t) = wavefront {
            log::warn!(
                "density within {WAVEFRONT_MARGIN} sites of an edge moved by more than {WAVEFRONT_LEVEL:e} at t = {t}; \
                 reflections may distort the fit window"
            );
        }
        let step_stats = self.prop.step_stats();
        let integrity = integrity_failures(&series, step_stats.as_ref());
        let chi_half_delta = if cfg.chi_check && cfg.engine == EngineChoice::Mps {
            Some(chi_half_delta(&cfg, &series)?)
        } else {
            None
        };
        Ok(RunOutcome {
            engine: cfg.engine,
            config: cfg,
            series,
            preparation: self.preparation,
            step_stats,
            fit,
            sqrt_fit,
            fit_error,
            melt_time: melt,
            wavefront,
            chi_half_delta,
            integrity,
            output_dir: self.output_dir,
        })
    }
}

/// Runs one scenario to completion; files are written when `output_dir` is set.
pub fn run_scenario(cfg: &ScenarioConfig, output_dir: Option<&Path>) -> Result<RunOutcome> {
    Runner::new(cfg, output_dir)?.finish()
}

fn integrity_failures(series: &ObservableSeries, stats: Option<&StepStats>) -> Vec<String> {
    let mut out = Vec::new();
    let n = series.meta.n as f64;
    for (k, (&total, &dw)) in series.total_n.iter().zip(&series.discarded_weight).enumerate() {
        let tol = 1e-8 + 10.0 * dw;
        if (total - n).abs() > tol {
            out.push(format!("particle number {total} at t = {} drifts beyond {tol:.1e}", series.times[k]));
            break;
        }
    }
    match series.recompute_radius() {
        Ok(r) => {
            let dev = r.iter().zip(&series.radius).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if dev > 1e-12 {
                out.push(format!("stored radius differs from recomputed by {dev:.1e}"));
            }
        }
        Err(e) => out.push(e.to_string()),
    }
    if let Some(s) = stats {
        // earlier truncations leave the gauge slightly off, by about the discarded weight
        let dw = series.discarded_weight.last().copied().unwrap_or(0.0);
        let tol = 1e-8 + 10.0 * dw;
        if s.max_norm_drift > tol {
            out.push(format!("norm drift {:.1e} before truncation exceeds {tol:.1e}", s.max_norm_drift));
        }
    }
    out
}

fn chi_half_delta(cfg: &ScenarioConfig, series: &ObservableSeries) -> Result<f64> {
    let mut half = cfg.clone();
    half.chi_max = (cfg.chi_max / 2).max(1);
    half.chi_check = false;
    half.checkpoint_every = None;
    let other = Runner::new(&half, None)?.finish()?;
    Ok(series
        .radius
        .iter()
        .zip(&other.series.radius)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Header lines shared by every file of a run.
pub fn header_lines(cfg: &ScenarioConfig) -> Vec<String> {
    let mut h = vec![format!("scenario = \"{}\"", cfg.run_kind().as_str()), format!("engine = \"{}\"", cfg.engine.as_str())];
    h.push("[config]".into());
    h.extend(cfg.to_toml().lines().filter(|l| !l.trim().is_empty()).map(str::to_string));
    h
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |x| x.to_string())
}

/// `key = value` fit report.
pub fn fit_report(o: &RunOutcome) -> String {
    let mut s = String::new();
    for line in header_lines(&o.config) {
        let _ = writeln!(s, "# {line}");
    }
    let kv = |s: &mut String, k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv(&mut s, "format", REPORT_FORMAT.into());
    kv(&mut s, "scenario", o.config.run_kind().as_str().into());
    kv(&mut s, "engine", o.engine.as_str().into());
    kv(&mut s, "w", o.config.w.to_string());
    kv(&mut s, "l", o.config.l.to_string());
    kv(&mut s, "n", o.config.n.to_string());
    let (a, b) = o.config.fit_window();
    kv(&mut s, "window", format!("{a}, {b}"));
    kv(&mut s, "velocity", opt(o.fit.map(|f| f.slope)));
    kv(&mut s, "intercept", opt(o.fit.map(|f| f.intercept)));
    kv(&mut s, "r_squared", opt(o.fit.map(|f| f.r_squared)));
    kv(&mut s, "n_points", o.fit.map_or(0, |f| f.n_points).to_string());
    if let Some(e) = &o.fit_error {
        kv(&mut s, "fit_error", format!("\"{e}\""));
    }
    kv(&mut s, "sqrt_slope", opt(o.sqrt_fit.map(|f| f.slope)));
    kv(&mut s, "sqrt_intercept", opt(o.sqrt_fit.map(|f| f.intercept)));
    kv(&mut s, "sqrt_r_squared", opt(o.sqrt_fit.map(|f| f.r_squared)));
    kv(&mut s, "max_number_drift", o.series.max_number_drift().to_string());
    kv(&mut s, "discarded_weight", o.series.discarded_weight.last().copied().unwrap_or(0.0).to_string());
    if let Some(st) = &o.step_stats {
        kv(&mut s, "steps", st.steps.to_string());
        kv(&mut s, "max_bond_dim", st.max_bond_dim.to_string());
        kv(&mut s, "chi_cap_reached", st.capped.to_string());
        kv(&mut s, "alarm_steps", st.alarm_steps.to_string());
        kv(&mut s, "max_norm_drift", st.max_norm_drift.to_string());
        kv(&mut s, "max_gauge_drift", st.max_gauge_drift.to_string());
    }
    if let Some(w) = o.preparation.pair_weight {
        kv(&mut s, "pair_weight", w.to_string());
    }
    if let Some(e) = o.preparation.ground_energy {
        kv(&mut s, "ground_energy", e.to_string());
    }
    kv(&mut s, "wavefront_warning", opt(o.wavefront));
    if let Some(d) = o.chi_half_delta {
        kv(&mut s, "chi_half_radius_delta", d.to_string());
    }
    kv(&mut s, "integrity", if o.integrity.is_empty() { "ok".into() } else { format!("\"{}\"", o.integrity.join("; ")) });
    s
}

pub fn melt_report(o: &RunOutcome) -> String {
    let mut s = String::new();
    for line in header_lines(&o.config) {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "format = {REPORT_FORMAT}");
    let _ = writeln!(s, "threshold = {}", o.config.melt_threshold);
    let _ = writeln!(s, "melt_time = {}", opt(o.melt_time));
    s
}

fn write_outputs(o: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let f = fs::File::create(dir.join(SERIES_FILE))?;
    o.series.write_csv(BufWriter::new(f), &header_lines(&o.config))?;
    fs::write(dir.join(FIT_FILE), fit_report(o))?;
    if o.config.run_kind() == ScenarioKind::MiExpansion {
        fs::write(dir.join(MELT_FILE), melt_report(o))?;
    }
    Ok(())
}
