//! Optimal control: the MPC problem and its solvers, the learner-matching
//! teacher, and moving horizon state estimation.

pub mod mhe;
pub mod mpc;
pub mod plant;
pub mod solver;
pub mod teacher;
pub mod wasserstein;

pub use mhe::{mhe_estimate, state_scale, MheConfig, MheSolution, MovingHorizonEstimator};
pub use mpc::{
    d_bg, mpc_cost, predict_trajectory, solve_matching_problem, solve_supervision, solve_supervision_traced, Matching,
    MpcConfig, MpcProblem, MpcSolution,
};
pub use plant::{Plant, ScalarPlant};
pub use solver::{minimize_box, minimize_multistart, BoxObjective, IterationRecord, Minimum, SolveStatus, SolverConfig};
pub use teacher::{solve_adaptive_teacher, TeacherConfig};
pub use wasserstein::wasserstein_penalty;
