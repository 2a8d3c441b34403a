//! Fixtures shared by the benchmarks.

use hcb_core::model::ModelParams;
use hcb_core::mps::tebd::{TebdSchedule, TebdStepper};
use hcb_core::{MpsState, Truncation};

/// Centered box of `n` particles on `l` sites, evolved for `steps` TEBD
/// steps of `dt = 0.1` so the bonds carry some entanglement.
pub fn entangled_box(l: usize, n: usize, w: f64, steps: usize, chi_max: usize) -> (ModelParams, MpsState) {
    let params = ModelParams::new(1.0, w, l).expect("valid params");
    let i1 = (l - n) / 2 + 1;
    let truncation = Truncation { chi_max, svd_eps: 1e-8 };
    let mut state = MpsState::box_state(l, i1, i1 + n - 1, truncation).expect("box state");
    let stepper = TebdStepper::new(&params, TebdSchedule::new(0.1));
    for _ in 0..steps {
        stepper.step(&mut state).expect("step");
    }
    (params, state)
}
