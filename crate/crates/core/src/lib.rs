//! Backward stochastic differential equations driven by a Brownian motion and a
//! compensated Poisson random measure,
//!
//! ```text
//! Y_t = ξ + ∫_t^T f(s, Y_s, Z_s, U_s) ds − ∫_t^T Z_s dW_s − ∫_{]t,T]×ℝ₀} U_s(x) Ñ(ds, dx),
//! ```
//!
//! for finite-activity Lévy drivers `X_t = a t + σ W_t + Σ_j x_j (jump terms)`.
//!
//! The crate provides
//!
//! * [`levy_model`]: the driving model, path simulation and jump-size truncation;
//! * [`generators`]: generators `f` with their growth / monotonicity coefficients,
//!   the cut-off operators `c_n`, `c̃_n`, `f^(n)` and sampling-based condition checks;
//! * [`lattice`]: exact scenario trees with exact conditional expectations, the
//!   projection `E_n` onto the σ-field of jumps of size `≥ 1/n`, and the exact
//!   backward solver used as oracle;
//! * [`mc_solver`]: a least-squares Monte-Carlo backward solver;
//! * [`estimates`]: Bihari–LaSalle / Gronwall bounds, the explicit a-priori bound and
//!   the stability bound;
//! * [`experiments`]: the experiment runners behind the command line tool.

pub mod error;
pub mod estimates;
pub mod experiments;
pub mod generators;
pub mod lattice;
pub mod levy_model;
pub mod mc_solver;
pub mod solution;
pub mod terminal;

pub use error::{Error, Result};
pub use generators::{GeneratorSpec, PathContext, RhoFunction};
pub use lattice::ScenarioTree;
pub use levy_model::{JumpVector, LevyModel, Mark, PathBundle, TimeGrid};
pub use solution::SolutionGrid;
pub use terminal::TerminalFunctional;
