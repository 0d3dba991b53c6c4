//! Command following by input reconstruction for linear MIMO systems.
//!
//! A discrete LTI plant is driven so its outputs follow previewed reference
//! commands by treating the references as if they were measured outputs: a
//! Kalman filter supplies unbiased state estimates, and a constrained
//! minimum-variance gain (satisfying `L * CB = B`) turns the gap between the
//! previewed reference and the predicted output into the control input.
//! Tracking is unbiased for square trackable systems; wide and tall systems
//! are handled by input-transform squaring, reference projection onto the
//! achievable subspace, or output dropping.
//!
//! The [`sim`] module provides the closed-loop harness, reference
//! generators, a seeded Monte Carlo driver (parallel across runs with the
//! default `parallel` feature) and an LQG baseline for comparisons.

pub mod cir;
pub mod error;
pub mod estimator;
pub mod matcore;
pub mod model;
pub mod reconstructor;
pub mod sim;
pub mod squaring;
pub mod systems;

pub use cir::CirState;
pub use error::{Error, Result};
pub use estimator::{KalmanState, NoiseSpec};
pub use model::{FeasibilityReport, StateSpaceModel};
pub use reconstructor::{umv_gain, UmvGain, UmvState};
pub use sim::{
    lqg_baseline, monte_carlo, monte_carlo_sequential, run_closed_loop, ChannelKind, ChannelSpec,
    CirController, ControlDecision, Controller, ControllerSpec, LqgController, LqgWeights,
    MonteCarloSummary, ReferenceSignal, Scenario, SimulationTrace,
};
pub use squaring::{
    batch_matrices, drop_outputs, make_input_transform, project_reference, BatchMatrices,
    InputTransform,
};
