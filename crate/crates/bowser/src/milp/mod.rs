//! Solver-independent linear model representation, a built-in exact
//! branch-and-bound solver for desk-scale models, and MPS interchange.

mod model;
mod mps;
mod simplex;
mod solve;

pub use model::{ModelError, MilpModel, Sense, VarId, VarKind};
pub use mps::{parse_mps, write_mps, write_solution_dump, MpsError};
pub use simplex::LpStatus;
pub use solve::{
    solve, solve_lp_relaxation, LpRelaxation, MilpSolution, SolveError, SolveLimits, SolveStats,
    SolveStatus,
};
