//! Validated reachability analysis for systems driven by sigmoid/tanh neural
//! network controllers.
//!
//! The pipeline: a trained network is transformed *exactly* into a hybrid
//! automaton whose mode dynamics are the activation ODEs (sigmoid satisfies
//! `g' = g(1−g)` along a scaled time axis, tanh satisfies `g' = x(1−g²)`),
//! the automaton is composed with a plant model, and the closed loop is
//! analyzed end to end with Taylor-model flowpipes. Complementary encoders
//! emit MILP (piecewise-linear sandwich, big-M) and SMT-LIB (exact and
//! exponential-free) problems for external solvers.

pub mod automaton;
pub mod cases;
pub mod encode;
pub mod expr;
pub mod interval;
pub mod neural;
pub mod reach;
pub mod sim;
pub mod taylor;
pub mod verify;

pub use automaton::{ClosedLoop, HybridAutomaton};
pub use cases::{mountain_car_model, quadrotor_model, rk4_discretize, synth_reference_controller};
pub use encode::{export_formula, export_milp, pwl_sandwich};
pub use expr::{Expr, Func};
pub use interval::Interval;
pub use neural::NeuralNetwork;
pub use reach::{
    network_output_range, run_closed_loop, ControllerPath, ReachResult, ReachSettings,
    SubdivisionStrategy,
};
pub use taylor::TaylorModel;
pub use verify::{check_property, falsify_by_simulation, Property, Verdict};
