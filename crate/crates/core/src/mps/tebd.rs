//! Second-order Trotter stepping:
//! odd-bond hops (dt/2), even-bond hops (dt/2), interaction (dt),
//! even-bond hops (dt/2), odd-bond hops (dt/2).
//!
//! An optional fourth-order Suzuki composition chains five such steps
//! with weights `p, p, 1 - 4p, p, p`, `p = 1 / (4 - 4^(1/3))`.
//!
//! Bonds are numbered by their left site in 1-based terms, so "odd" bonds
//! are `(1,2), (3,4), ...`, i.e. 0-based left sites `0, 2, 4, ...`.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use super::{CutReport, MpsState};
use crate::error::{Error, Result};
use crate::model::{hopping_gate, interaction_phases, ModelParams, ThreeSitePhases};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    fn first_site(self) -> usize {
        match self {
            Parity::Odd => 0,
            Parity::Even => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Layer {
    Hop { parity: Parity, fraction: f64 },
    Interaction { fraction: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TebdSchedule {
    pub dt: f64,
    /// Trotter order, 2 or 4.
    pub order: u8,
}

impl Default for TebdSchedule {
    fn default() -> Self {
        Self { dt: 0.1, order: 2 }
    }
}

impl TebdSchedule {
    pub fn new(dt: f64) -> Self {
        Self { dt, order: 2 }
    }

    pub fn with_order(dt: f64, order: u8) -> Result<Self> {
        if order != 2 && order != 4 {
            return Err(Error::InvalidParams(format!("Trotter order {order} is not 2 or 4")));
        }
        Ok(Self { dt, order })
    }

    /// Time fractions of the second-order steps making up one step.
    pub fn substeps(&self) -> Vec<f64> {
        match self.order {
            4 => {
                let p = 1.0 / (4.0 - 4f64.cbrt());
                vec![p, p, 1.0 - 4.0 * p, p, p]
            }
            _ => vec![1.0],
        }
    }

    pub fn layers(&self) -> [Layer; 5] {
        use Parity::*;
        [
            Layer::Hop { parity: Odd, fraction: 0.5 },
            Layer::Hop { parity: Even, fraction: 0.5 },
            Layer::Interaction { fraction: 1.0 },
            Layer::Hop { parity: Even, fraction: 0.5 },
            Layer::Hop { parity: Odd, fraction: 0.5 },
        ]
    }
}

/// Summary of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Sum of relative discarded weights over all cuts of the step.
    pub discarded: f64,
    /// Largest `|norm² - 1|` seen before any truncation in the step.
    pub norm_drift: f64,
    /// Some cut was limited by the bond dimension cap.
    pub capped: bool,
}

impl StepReport {
    fn add(&mut self, r: &CutReport) {
        self.discarded += r.discarded;
        self.norm_drift = self.norm_drift.max((r.norm_sq - 1.0).abs());
        self.capped |= r.capped;
    }
}

#[derive(Clone, Debug)]
struct Substep {
    half_hop: Array2<C64>,
    phases: ThreeSitePhases,
}

/// Gates for a fixed `(params, schedule)`, built once per run.
#[derive(Clone, Debug)]
pub struct TebdStepper {
    schedule: TebdSchedule,
    substeps: Vec<Substep>,
}

impl TebdStepper {
    pub fn new(params: &ModelParams, schedule: TebdSchedule) -> Self {
        let substeps = schedule
            .substeps()
            .into_iter()
            .map(|f| {
                let dt = f * schedule.dt;
                Substep { half_hop: hopping_gate(params, dt / 2.0).matrix, phases: interaction_phases(params, dt) }
            })
            .collect();
        Self { schedule, substeps }
    }

    pub fn schedule(&self) -> TebdSchedule {
        self.schedule
    }

    pub fn step(&self, state: &mut MpsState) -> Result<StepReport> {
        let mut rep = StepReport::default();
        for sub in &self.substeps {
            for layer in self.schedule.layers() {
                match layer {
                    Layer::Hop { parity, .. } => {
                        for j in (parity.first_site()..state.l().saturating_sub(1)).step_by(2) {
                            rep.add(&state.apply_two_site_matrix(j, &sub.half_hop)?);
                        }
                    }
                    Layer::Interaction { .. } => {
                        for r in state.apply_interaction_layer(&sub.phases)? {
                            rep.add(&r);
                        }
                    }
                }
            }
        }
        Ok(rep)
    }
}

/// One second-order step.
pub fn tebd_step(state: &mut MpsState, params: &ModelParams, schedule: TebdSchedule) -> Result<StepReport> {
    TebdStepper::new(params, schedule).step(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::Truncation;

    #[test]
    fn schedule_is_palindromic() {
        let layers = TebdSchedule::default().layers();
        for i in 0..5 {
            assert_eq!(layers[i], layers[4 - i]);
        }
        let interactions = layers.iter().filter(|l| matches!(l, Layer::Interaction { .. })).count();
        assert_eq!(interactions, 1);
    }

    #[test]
    fn fourth_order_weights() {
        let s = TebdSchedule::with_order(0.1, 4).unwrap();
        let w = s.substeps();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(w[2] < 0.0);
        assert!(TebdSchedule::with_order(0.1, 3).is_err());
    }

    #[test]
    fn zero_step_is_identity() {
        let p = ModelParams::new(1.0, 2.0, 8).unwrap();
        let mut st = MpsState::random(8, 4, 6, 1).unwrap();
        let before = st.clone();
        let rep = tebd_step(&mut st, &p, TebdSchedule::new(0.0)).unwrap();
        assert!(rep.discarded < 1e-14);
        assert!((st.overlap(&before) - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn conserves_norm_and_number() {
        let p = ModelParams::new(1.0, 1.0, 10).unwrap();
        let mut st = MpsState::box_state(10, 4, 7, Truncation::default()).unwrap();
        let stepper = TebdStepper::new(&p, TebdSchedule::new(0.1));
        let e0 = st.energy(&p);
        for _ in 0..20 {
            let rep = stepper.step(&mut st).unwrap();
            assert!(rep.norm_drift < 1e-10);
        }
        assert!((st.total_n() - 4.0).abs() < 1e-10);
        assert!((st.norm() - 1.0).abs() < 1e-10);
        assert!((st.energy(&p) - e0).abs() < 1e-2);
    }
}
