//! Solver and verification harness for the singular semilinear radial
//! problem with advection on Riemannian models: minimal-branch continuation,
//! extremal-parameter location, stability classification, second-branch
//! extraction and closed-form estimate checks.

// stencil assembly indexes several parallel arrays at once, and the
// negated float comparisons are deliberate NaN guards
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod error;
pub mod estimates;
pub mod expr;
pub mod interp;
pub mod model;
pub mod odecore;
pub mod parallel;
pub mod solver;
pub mod spectrum;

pub use error::{Error, Result};
pub use model::{
    decompose_radial, AdvectionField, Nonlinearity, NonlinearityKind, ProblemSpec, RadialFn,
    RiemannianModel, SpaceForm,
};
pub use odecore::{assemble, make_grid, solve_linear, weighted_lp_norm, Grading, Grid};
pub use solver::{monotone_iterate, newton_solve, residual, Solution};
