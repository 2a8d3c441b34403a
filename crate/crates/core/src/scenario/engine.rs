use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fock::{self, FockBasis, FockVector};
use crate::freefermion::{CorrelationMatrix, FreeEvolution};
use crate::model::SparseHamiltonian;
use crate::mps::dmrg::{ground_state_search, DmrgConfig};
use crate::mps::tebd::{TebdSchedule, TebdStepper};
use crate::mps::MpsState;
use crate::observables::Snapshot;

use super::config::{EngineChoice, ScenarioConfig, ScenarioKind};

/// Facts about how the initial state was prepared.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Preparation {
    /// Energy of the `N - 2` ground state (ground-state quench only).
    pub ground_energy: Option<f64>,
    /// Norm² of the state after pair creation, before renormalization.
    pub pair_weight: Option<f64>,
}

/// Counters accumulated over TEBD steps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub steps: u64,
    pub max_norm_drift: f64,
    pub alarm_steps: u64,
    pub capped: bool,
    pub max_bond_dim: usize,
    /// Largest `|norm - 1|` found when re-canonicalizing at record times.
    pub max_gauge_drift: f64,
}

/// Time evolution on one of the three engines.
#[derive(Clone, Debug)]
pub enum Propagator {
    Free { evolution: FreeEvolution, time: f64, current: CorrelationMatrix, j: f64 },
    Exact { state: FockVector, h: SparseHamiltonian, tol: f64, j: f64 },
    Mps { state: MpsState, stepper: TebdStepper, j: f64, alarm: f64, stats: StepStats },
}

impl Propagator {
    /// Builds the initial state of `cfg` on its resolved engine.
    pub fn prepare(cfg: &ScenarioConfig) -> Result<(Self, Preparation)> {
        let params = cfg.params()?;
        let engine = cfg.resolve_engine();
        match (cfg.run_kind(), engine) {
            (ScenarioKind::MiExpansion, EngineChoice::FreeFermion) => {
                let (i1, i2) = cfg.box_bounds();
                let c0 = CorrelationMatrix::box_state(params.l, i1, i2)?;
                let evolution = FreeEvolution::new(c0.clone(), &params)?;
                Ok((Self::Free { evolution, time: 0.0, current: c0, j: params.j }, Preparation::default()))
            }
            (ScenarioKind::MiExpansion, EngineChoice::Exact) => {
                let basis = Arc::new(FockBasis::new(params.l, cfg.n)?);
                let (i1, i2) = cfg.box_bounds();
                let state = fock::box_state(&basis, i1, i2)?;
                let h = SparseHamiltonian::build(&params, &basis)?;
                Ok((Self::Exact { state, h, tol: cfg.krylov_tol, j: params.j }, Preparation::default()))
            }
            (ScenarioKind::MiExpansion, EngineChoice::Mps) => {
                let (i1, i2) = cfg.box_bounds();
                let state = MpsState::box_state(params.l, i1, i2, cfg.truncation())?;
                Ok((Self::mps(cfg, state)?, Preparation::default()))
            }
            (ScenarioKind::GsQuench, EngineChoice::Exact) => {
                let before = Arc::new(FockBasis::new(params.l, cfg.n - 2)?);
                let h0 = SparseHamiltonian::build(&params, &before)?;
                let gs = fock::ground_state(&h0, &before)?;
                if gs.degenerate {
                    log::warn!("N-2 ground state is degenerate (gap {:.3e})", gs.gap);
                }
                let pc = fock::apply_pair_creation(&gs.state, cfg.quench_site())?;
                let h = SparseHamiltonian::build(&params, &pc.state.basis)?;
                let prep = Preparation { ground_energy: Some(gs.energy), pair_weight: Some(pc.weight) };
                Ok((Self::Exact { state: pc.state, h, tol: cfg.krylov_tol, j: params.j }, prep))
            }
            (ScenarioKind::GsQuench, EngineChoice::Mps) => {
                let dmrg = DmrgConfig {
                    chi_max: cfg.dmrg_chi,
                    tol: cfg.dmrg_tol,
                    max_sweeps: cfg.dmrg_max_sweeps,
                    ..DmrgConfig::default()
                };
                let gs = ground_state_search(&params, cfg.n - 2, &dmrg)?;
                let mut state = gs.state;
                state.truncation = cfg.truncation();
                let weight = state.apply_pair_creation(cfg.quench_site())?;
                let prep = Preparation { ground_energy: Some(gs.energy), pair_weight: Some(weight) };
                Ok((Self::mps(cfg, state)?, prep))
            }
            (kind, engine) => Err(Error::Config(format!(
                "{} cannot run on the {} engine",
                kind.as_str(),
                engine.as_str()
            ))),
        }
    }

    fn mps(cfg: &ScenarioConfig, state: MpsState) -> Result<Self> {
        let params = cfg.params()?;
        let schedule = TebdSchedule::with_order(cfg.dt, cfg.trotter_order)?;
        let stats = StepStats { max_bond_dim: state.max_bond_dim(), ..StepStats::default() };
        Ok(Self::Mps {
            state,
            stepper: TebdStepper::new(&params, schedule),
            j: params.j,
            alarm: cfg.discard_alarm,
            stats,
        })
    }

    /// Rebuilds an engine around a stored state.
    pub fn with_mps_state(cfg: &ScenarioConfig, state: MpsState, stats: StepStats) -> Result<Self> {
        let mut p = Self::mps(cfg, state)?;
        if let Self::Mps { stats: s, .. } = &mut p {
            *s = stats;
        }
        Ok(p)
    }

    pub fn engine(&self) -> EngineChoice {
        match self {
            Self::Free { .. } => EngineChoice::FreeFermion,
            Self::Exact { .. } => EngineChoice::Exact,
            Self::Mps { .. } => EngineChoice::Mps,
        }
    }

    /// Evolves from `from` to `to`, taking `steps` TEBD steps on the MPS engine.
    pub fn advance(&mut self, from: f64, to: f64, steps: usize) -> Result<()> {
        match self {
            Self::Free { evolution, time, current, .. } => {
                *time = to;
                *current = evolution.at(to);
            }
            Self::Exact { state, h, tol, .. } => {
                *state = fock::evolve(state, h, to - from, *tol)?;
            }
            Self::Mps { state, stepper, alarm, stats, .. } => {
                for _ in 0..steps {
                    let rep = stepper.step(state)?;
                    stats.steps += 1;
                    stats.max_norm_drift = stats.max_norm_drift.max(rep.norm_drift);
                    stats.capped |= rep.capped;
                    if rep.discarded > *alarm {
                        stats.alarm_steps += 1;
                    }
                }
                stats.max_bond_dim = stats.max_bond_dim.max(state.max_bond_dim());
                // truncated cuts leave the stored form slightly non-canonical
                let norm = state.canonicalize()?;
                stats.max_gauge_drift = stats.max_gauge_drift.max((norm - 1.0).abs());
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        Ok(match self {
            Self::Free { current, j, .. } => Snapshot {
                density: current.density()?,
                half_current: current.half_current(*j),
                entropy_max: None,
                discarded_weight: 0.0,
            },
            Self::Exact { state, j, .. } => Snapshot {
                density: state.density(),
                half_current: state.half_current(*j),
                entropy_max: None,
                discarded_weight: 0.0,
            },
            Self::Mps { state, j, .. } => {
                let norm = state.norm();
                if (norm - 1.0).abs() > 1e-8 {
                    return Err(Error::Integrity(format!("MPS norm {norm} after step")));
                }
                Snapshot {
                    density: state.density(),
                    half_current: state.half_current(*j),
                    entropy_max: Some(state.max_entropy()),
                    discarded_weight: state.discarded_weight(),
                }
            }
        })
    }

    pub fn step_stats(&self) -> Option<StepStats> {
        match self {
            Self::Mps { stats, .. } => Some(*stats),
            _ => None,
        }
    }
}
