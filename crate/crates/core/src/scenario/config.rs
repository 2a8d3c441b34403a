use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::binomial;
use crate::model::ModelParams;
use crate::mps::Truncation;
use crate::observables::DEFAULT_MELT_THRESHOLD;

/// Sectors up to this dimension go to the exact engine under `engine = "auto"`.
pub const AUTO_EXACT_DIM: u128 = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    MiExpansion,
    GsQuench,
    Sweep,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::MiExpansion => "mi-expansion",
            ScenarioKind::GsQuench => "gs-quench",
            ScenarioKind::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineChoice {
    #[default]
    Auto,
    FreeFermion,
    Exact,
    Mps,
}

impl EngineChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineChoice::Auto => "auto",
            EngineChoice::FreeFermion => "free-fermion",
            EngineChoice::Exact => "exact",
            EngineChoice::Mps => "mps",
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.1
}
fn default_record_every() -> f64 {
    0.5
}
fn default_chi() -> usize {
    400
}
fn default_eps() -> f64 {
    1e-8
}
fn default_order() -> u8 {
    2
}
fn default_melt() -> f64 {
    DEFAULT_MELT_THRESHOLD
}
fn default_output() -> String {
    "out".into()
}
fn default_krylov_tol() -> f64 {
    1e-12
}
fn default_dmrg_chi() -> usize {
    128
}
fn default_dmrg_tol() -> f64 {
    1e-10
}
fn default_dmrg_sweeps() -> usize {
    40
}
fn default_alarm() -> f64 {
    1e-6
}
fn is_empty<T>(v: &[T]) -> bool {
    v.is_empty()
}

/// One scenario, read from flat `key = value` text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub engine: EngineChoice,
    #[serde(default = "one")]
    pub j: f64,
    #[serde(default)]
    pub w: f64,
    pub l: usize,
    pub n: usize,
    /// Box `[i1, i2]`, 1-based and inclusive; centred when absent.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub box_sites: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_record_every")]
    pub record_every: f64,
    #[serde(default = "default_chi")]
    pub chi_max: usize,
    #[serde(default = "default_eps")]
    pub svd_eps: f64,
    #[serde(default = "default_order")]
    pub trotter_order: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default = "default_melt")]
    pub melt_threshold: f64,
    #[serde(default = "default_output")]
    pub output_dir: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_krylov_tol")]
    pub krylov_tol: f64,
    #[serde(default = "default_dmrg_chi")]
    pub dmrg_chi: usize,
    #[serde(default = "default_dmrg_tol")]
    pub dmrg_tol: f64,
    #[serde(default = "default_dmrg_sweeps")]
    pub dmrg_max_sweeps: usize,
    /// Per-step discarded weight above which a step is counted as alarming.
    #[serde(default = "default_alarm")]
    pub discard_alarm: f64,
    /// Checkpoint cadence in time units; off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<f64>,
    /// Rerun MPS expansions at `chi_max / 2` and report the radius change.
    #[serde(default)]
    pub chi_check: bool,
    /// Scenario run at every sweep point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<ScenarioKind>,
    #[serde(default, skip_serializing_if = "is_empty")]
    pub sweep_w: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_empty")]
    pub sweep_n: Vec<usize>,
    #[serde(default, skip_serializing_if = "is_empty")]
    pub sweep_l: Vec<usize>,
    /// Empty sites on each side of the box; sets `L = N + 2 pad` in N sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad: Option<usize>,
}

impl ScenarioConfig {
    /// Minimal config with every optional key at its default.
    pub fn new(scenario: ScenarioKind, w: f64, l: usize, n: usize) -> Self {
        Self {
            scenario,
            engine: EngineChoice::Auto,
            j: 1.0,
            w,
            l,
            n,
            box_sites: None,
            t_max: None,
            dt: default_dt(),
            record_every: default_record_every(),
            chi_max: default_chi(),
            svd_eps: default_eps(),
            trotter_order: default_order(),
            fit_window: None,
            melt_threshold: default_melt(),
            output_dir: default_output(),
            seed: 0,
            krylov_tol: default_krylov_tol(),
            dmrg_chi: default_dmrg_chi(),
            dmrg_tol: default_dmrg_tol(),
            dmrg_max_sweeps: default_dmrg_sweeps(),
            discard_alarm: default_alarm(),
            checkpoint_every: None,
            chi_check: false,
            base: None,
            sweep_w: Vec::new(),
            sweep_n: Vec::new(),
            sweep_l: Vec::new(),
            pad: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.j, self.w, self.l)
    }

    pub fn truncation(&self) -> Truncation {
        Truncation { chi_max: self.chi_max, svd_eps: self.svd_eps }
    }

    /// The scenario actually simulated: `base` for sweeps.
    pub fn run_kind(&self) -> ScenarioKind {
        match self.scenario {
            ScenarioKind::Sweep => self.base.unwrap_or(ScenarioKind::MiExpansion),
            k => k,
        }
    }

    pub fn t_max(&self) -> f64 {
        self.t_max.unwrap_or(match self.run_kind() {
            ScenarioKind::GsQuench => 8.0,
            _ => 12.0,
        })
    }

    pub fn fit_window(&self) -> (f64, f64) {
        match self.fit_window {
            Some([a, b]) => (a, b),
            None => match self.run_kind() {
                ScenarioKind::GsQuench => (2.0, 6.0),
                _ => (2.0, 10.0),
            },
        }
    }

    /// Box bounds `(i1, i2)`, 1-based inclusive.
    pub fn box_bounds(&self) -> (usize, usize) {
        match self.box_sites {
            Some([a, b]) => (a, b),
            None => {
                let i1 = (self.l - self.n.min(self.l)) / 2 + 1;
                (i1, i1 + self.n.max(1) - 1)
            }
        }
    }

    /// Number of records after `t = 0`.
    pub fn record_count(&self) -> usize {
        (self.t_max() / self.record_every + 1e-9).floor() as usize
    }

    /// TEBD steps between records.
    pub fn steps_per_record(&self) -> usize {
        (self.record_every / self.dt).round() as usize
    }

    /// Site of the first created boson in a ground-state quench (1-based).
    pub fn quench_site(&self) -> usize {
        self.l / 2
    }

    /// Sector dimension the exact engine would face.
    pub fn sector_dim(&self) -> u128 {
        binomial(self.l, self.n)
    }

    /// Concrete engine for this single run.
    pub fn resolve_engine(&self) -> EngineChoice {
        match self.engine {
            EngineChoice::Auto => {
                if self.run_kind() == ScenarioKind::MiExpansion && self.w == 0.0 {
                    EngineChoice::FreeFermion
                } else if self.sector_dim() <= AUTO_EXACT_DIM {
                    EngineChoice::Exact
                } else {
                    EngineChoice::Mps
                }
            }
            e => e,
        }
    }

    /// Checks every invariant of a single run (not a sweep).
    pub fn validate_run(&self) -> Result<()> {
        let params = self.params()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n > params.l {
            return bad(format!("N = {} exceeds L = {}", self.n, params.l));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.record_every > 0.0) {
            return bad("record_every must be positive".into());
        }
        let spr = self.steps_per_record();
        if spr == 0 || (spr as f64 * self.dt - self.record_every).abs() > 1e-9 {
            return bad(format!("record_every = {} is not a multiple of dt = {}", self.record_every, self.dt));
        }
        if !(self.t_max() >= 0.0 && self.t_max().is_finite()) {
            return bad("t_max must be non-negative".into());
        }
        let (a, b) = self.fit_window();
        if !(a < b) {
            return bad(format!("fit_window [{a}, {b}] is empty"));
        }
        if !(self.melt_threshold > 0.0 && self.melt_threshold < 1.0) {
            return bad(format!("melt_threshold must lie in (0, 1), got {}", self.melt_threshold));
        }
        if self.trotter_order != 2 && self.trotter_order != 4 {
            return bad(format!("trotter_order must be 2 or 4, got {}", self.trotter_order));
        }
        if self.chi_max == 0 || self.dmrg_chi == 0 {
            return bad("bond dimensions must be positive".into());
        }
        if let Some(c) = self.checkpoint_every {
            if !(c >= self.record_every) {
                return bad("checkpoint_every must be at least record_every".into());
            }
        }
        let engine = self.resolve_engine();
        if engine == EngineChoice::FreeFermion && self.w != 0.0 {
            return Err(Error::EngineDomain { w: self.w });
        }
        if engine == EngineChoice::Exact && self.sector_dim() > crate::fock::FOCK_DIM_CAP {
            return Err(Error::Capacity {
                l: self.l,
                n: self.n,
                dim: self.sector_dim(),
                cap: crate::fock::FOCK_DIM_CAP,
            });
        }
        match self.run_kind() {
            ScenarioKind::MiExpansion => {
                let (i1, i2) = self.box_bounds();
                let width = if i2 >= i1 { i2 - i1 + 1 } else { 0 };
                if self.n == 0 || i1 < 1 || i2 > self.l || width != self.n {
                    return bad(format!(
                        "mi-expansion needs box width = N: box [{i1}, {i2}] holds {width} sites, N = {}",
                        self.n
                    ));
                }
            }
            ScenarioKind::GsQuench => {
                if 3 * self.n != 2 * self.l {
                    return bad(format!("gs-quench needs N/L = 2/3 exactly, got N = {}, L = {}", self.n, self.l));
                }
                if engine == EngineChoice::FreeFermion {
                    return bad("gs-quench runs on the exact or mps engine".into());
                }
            }
            ScenarioKind::Sweep => return bad("sweep base must be mi-expansion or gs-quench".into()),
        }
        Ok(())
    }

    /// Checks a sweep config; the points themselves are validated as they run.
    pub fn validate_sweep(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self.base {
            Some(ScenarioKind::MiExpansion | ScenarioKind::GsQuench) => {}
            _ => return bad("sweep needs base = \"mi-expansion\" or \"gs-quench\"".into()),
        }
        let axes = [self.sweep_w.len(), self.sweep_n.len(), self.sweep_l.len()];
        let set = axes.iter().filter(|&&k| k > 0).count();
        if !(1..=2).contains(&set) {
            return bad(format!("sweep needs one or two axes, got {set}"));
        }
        if axes.contains(&1) {
            return bad("every sweep axis needs at least 2 points".into());
        }
        if self.run_kind() == ScenarioKind::GsQuench && !self.sweep_n.is_empty() {
            return bad("gs-quench sweeps use sweep_l; N follows from 2/3 filling".into());
        }
        if self.run_kind() == ScenarioKind::MiExpansion && !self.sweep_l.is_empty() {
            return bad("mi-expansion sweeps use sweep_n (with pad) rather than sweep_l".into());
        }
        Ok(())
    }

    /// Output directory, joined onto `root` when relative.
    pub fn output_path(&self, root: Option<&Path>) -> PathBuf {
        let p = PathBuf::from(&self.output_dir);
        match root {
            Some(r) if p.is_relative() => r.join(p),
            _ => p,
        }
    }
}
