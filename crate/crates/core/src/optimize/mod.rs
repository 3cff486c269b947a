//! π-pulse optimization: discrete adjoint gradient through the RK4 scheme and
//! a limited-memory quasi-Newton ascent.

mod adjoint;
pub mod lbfgs;
mod pi_pulse;

pub use adjoint::{ControlProblem, Evaluation, TargetFunctional, TrajectoryRecord, DEFAULT_CHECKPOINT_BUDGET, DRIFT_GATE};
pub use pi_pulse::{
    control_truncation, gradcheck, optimize_pi_pulse, optimize_pi_pulse_with, paper_shape, warm_start, GradcheckReport, HistoryEntry, Initialization,
    PiPulseOptions, PiPulseResult,
};
