//! Distributionally robust output-feedback LQG under stationary Wasserstein ambiguity.
//!
//! The crate computes, for a finite-horizon linear system with quadratic cost:
//!
//! * the worst-case stationary noise moments against a causal linear purified-output
//!   policy, over type-2 Wasserstein balls around zero-mean references ([`worst_case`]);
//! * the best linear response to fixed noise moments ([`best_response`]), cross-checked by a
//!   Riccati/Kalman dynamic-programming oracle;
//! * the policy/noise Nash equilibrium by iterated best response ([`equilibrium`]);
//! * Monte Carlo evaluation of closed loops and a small worked comparison between
//!   stationary and non-stationary ambiguity ([`sim_eval`]).
//!
//! Numerical routines are generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below fix the scalar to `f64`.

pub mod best_response;
pub mod config;
pub mod equilibrium;
pub mod error;
pub mod gauss_ot;
pub mod linalg;
pub mod model;
pub mod policy;
pub mod report;
pub mod scalar;
pub mod sim_eval;
pub mod worst_case;

pub use best_response::{best_linear_response, dp_lqg_value, response_gradient};
pub use equilibrium::{iterated_best_response, nash_gap, Equilibrium, EquilibriumOptions};
pub use error::{Error, Result};
pub use gauss_ot::{affine_pushforward_moments, ell, gelbrich_distance, GaussianSpec};
pub use model::{
    assemble_stacked, state_transition_product, validate_problem, ControlProblem, StackedMatrices,
};
pub use policy::{
    aggregate_noise_matrices, closed_loop_cost, expected_cost, f_matrices, FMatrices, LinearPolicy,
    NoiseMoments, NoiseQuadratic,
};
pub use scalar::Scalar;
pub use sim_eval::{
    analytic_cost, monte_carlo_cost, reproduce_motivating_example, rollout_cost, simulate_cost,
    ExampleReport, ExampleRow, NoiseSampler, SamplerKind,
};
pub use worst_case::{
    mean_system_solve, radius_residual, solve_worst_case, verify_first_order, AmbiguitySpec,
    SolverOptions, WorstCaseSolution,
};

pub type ControlProblemF64 = ControlProblem<f64>;
pub type StackedMatricesF64 = StackedMatrices<f64>;
pub type LinearPolicyF64 = LinearPolicy<f64>;
pub type FMatricesF64 = FMatrices<f64>;
pub type NoiseQuadraticF64 = NoiseQuadratic<f64>;
pub type NoiseMomentsF64 = NoiseMoments<f64>;
pub type GaussianSpecF64 = GaussianSpec<f64>;
pub type AmbiguitySpecF64 = AmbiguitySpec<f64>;
pub type WorstCaseSolutionF64 = WorstCaseSolution<f64>;
pub type EquilibriumF64 = Equilibrium<f64>;
pub type NoiseSamplerF64 = NoiseSampler<f64>;
