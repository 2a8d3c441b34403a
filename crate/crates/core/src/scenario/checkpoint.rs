//! Binary run checkpoints. Floats are stored by bit pattern, so a resumed
//! run continues from exactly the state that was saved.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockVector};
use crate::model::SparseHamiltonian;
use crate::mps::MpsState;
use crate::observables::Snapshot;

use super::config::ScenarioConfig;
use super::engine::{Preparation, Propagator, StepStats};
use super::run::Runner;

pub const CHECKPOINT_FORMAT: &str = "hcb-checkpoint-v1";

const FREE: u64 = 0;
const EXACT: u64 = 1;
const MPS: u64 = 2;

fn opt_f64(e: &mut Encoder, v: Option<f64>) {
    match v {
        Some(x) => {
            e.u64(1);
            e.f64(x);
        }
        None => e.u64(0),
    }
}

fn read_opt_f64(d: &mut Decoder) -> Result<Option<f64>> {
    Ok(match d.u64()? {
        0 => None,
        1 => Some(d.f64()?),
        _ => return Err(Error::Checkpoint("bad option tag".into())),
    })
}

pub fn encode(r: &Runner) -> Vec<u8> {
    let mut e = Encoder::default();
    e.str(CHECKPOINT_FORMAT);
    e.str(&r.cfg.to_toml());
    e.usize(r.rows.len());
    for (t, s) in &r.rows {
        e.f64(*t);
        e.f64s(&s.density);
        e.f64(s.half_current);
        opt_f64(&mut e, s.entropy_max);
        e.f64(s.discarded_weight);
    }
    opt_f64(&mut e, r.preparation.ground_energy);
    opt_f64(&mut e, r.preparation.pair_weight);
    match &r.prop {
        Propagator::Free { .. } => e.u64(FREE),
        Propagator::Exact { state, .. } => {
            e.u64(EXACT);
            e.c64s(state.amplitudes.iter());
        }
        Propagator::Mps { state, stats, .. } => {
            e.u64(MPS);
            e.u64(stats.steps);
            e.f64(stats.max_norm_drift);
            e.u64(stats.alarm_steps);
            e.u64(stats.capped as u64);
            e.usize(stats.max_bond_dim);
            e.f64(stats.max_gauge_drift);
            state.encode(&mut e);
        }
    }
    e.buf
}

pub fn decode(bytes: &[u8]) -> Result<Runner> {
    let mut d = Decoder::new(bytes);
    let tag = d.str()?;
    if tag != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format `{tag}`")));
    }
    let cfg = ScenarioConfig::from_toml(&d.str()?)?;
    cfg.validate_run()?;
    let params = cfg.params()?;
    let nrows = d.usize()?;
    if nrows == 0 || nrows > cfg.record_count() + 1 {
        return Err(Error::Checkpoint(format!("{nrows} rows do not fit the schedule")));
    }
    let mut rows = Vec::with_capacity(nrows);
    for _ in 0..nrows {
        let t = d.f64()?;
        let density = d.f64s()?;
        if density.len() != cfg.l {
            return Err(Error::Checkpoint("density row length".into()));
        }
        let half_current = d.f64()?;
        let entropy_max = read_opt_f64(&mut d)?;
        let discarded_weight = d.f64()?;
        rows.push((t, Snapshot { density, half_current, entropy_max, discarded_weight }));
    }
    let preparation = Preparation { ground_energy: read_opt_f64(&mut d)?, pair_weight: read_opt_f64(&mut d)? };
    let prop = match d.u64()? {
        FREE => {
            let (mut p, _) = Propagator::prepare(&cfg)?;
            let t = rows.last().map_or(0.0, |r| r.0);
            p.advance(0.0, t, 0)?;
            p
        }
        EXACT => {
            let basis = Arc::new(FockBasis::new(cfg.l, cfg.n)?);
            let amplitudes = d.c64s()?;
            if amplitudes.len() != basis.dim() {
                return Err(Error::Checkpoint("amplitude count".into()));
            }
            let h = SparseHamiltonian::build(&params, &basis)?;
            Propagator::Exact { state: FockVector { basis, amplitudes }, h, tol: cfg.krylov_tol, j: params.j }
        }
        MPS => {
            let stats = StepStats {
                steps: d.u64()?,
                max_norm_drift: d.f64()?,
                alarm_steps: d.u64()?,
                capped: d.u64()? != 0,
                max_bond_dim: d.usize()?,
                max_gauge_drift: d.f64()?,
            };
            let state = MpsState::decode(&mut d)?;
            if state.l() != cfg.l || state.n() != cfg.n {
                return Err(Error::Checkpoint("state size differs from config".into()));
            }
            Propagator::with_mps_state(&cfg, state, stats)?
        }
        k => return Err(Error::Checkpoint(format!("unknown engine tag {k}"))),
    };
    if prop.engine() != cfg.engine {
        return Err(Error::Checkpoint("engine differs from config".into()));
    }
    if !d.is_done() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Runner { cfg, prop, rows, preparation, output_dir: None })
}

/// Writes atomically through a temporary sibling file.
pub fn write(r: &Runner, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(r))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::{EngineChoice, ScenarioKind};

    fn csv(o: &crate::scenario::RunOutcome) -> Vec<u8> {
        let mut v = Vec::new();
        o.series.write_csv(&mut v, &crate::scenario::run::header_lines(&o.config)).unwrap();
        v
    }

    #[test]
    fn resume_is_bit_identical_on_every_engine() {
        for (engine, w) in [(EngineChoice::FreeFermion, 0.0), (EngineChoice::Exact, 1.0), (EngineChoice::Mps, 1.0)] {
            let mut cfg = ScenarioConfig::new(ScenarioKind::MiExpansion, w, 10, 4);
            cfg.engine = engine;
            cfg.t_max = Some(3.0);
            cfg.chi_max = 16;
            let full = Runner::new(&cfg, None).unwrap().finish().unwrap();

            let mut part = Runner::new(&cfg, None).unwrap();
            part.run_until(2).unwrap();
            let bytes = encode(&part);
            let resumed = decode(&bytes).unwrap().finish().unwrap();
            assert_eq!(csv(&full), csv(&resumed), "{engine:?}");
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"nope").is_err());
        let cfg = ScenarioConfig::new(ScenarioKind::MiExpansion, 0.0, 10, 4);
        let r = Runner::new(&cfg, None).unwrap();
        let mut bytes = encode(&r);
        bytes.push(0);
        assert!(decode(&bytes).is_err());
    }
}
