//! Receding-horizon control by continuation: each sampling instant updates
//! the stacked horizon unknowns with one linearized solve instead of a full
//! nonlinear iteration. The linear systems are matrix-free (directional
//! differences of the optimality residual) and solved by GMRES with a sparse
//! block-arrow preconditioner whose cost stays linear in the horizon length.
//!
//! Crate layout:
//! - [`model`]: the problem trait, a finite-difference adapter, and the
//!   minimum-time benchmark.
//! - [`horizon`]: stacked unknowns and the optimality residual.
//! - [`gmres`]: the restart-free GMRES core and operator traits.
//! - [`oracle`]: dense finite-difference reference tooling for desk-scale
//!   verification.
//! - [`precond`]: the block-arrow approximation of the residual Jacobian and
//!   its linear-cost factorization.
//! - [`continuation`]: per-step update, plant propagation, warm start.
//! - [`sim`]: closed-loop runner, CSV logs, run comparison.
//! - [`plot`]: minimal SVG charts for a finished run.

pub mod continuation;
pub mod error;
pub mod gmres;
pub mod horizon;
pub mod model;
pub mod oracle;
pub mod plot;
pub mod precond;
pub mod sim;

pub use continuation::{ContinuationConfig, PrecondMode, StepOutcome};
pub use error::{Error, Result};
pub use gmres::{GmresOptions, GmresReport, LinearOperator, Preconditioner};
pub use horizon::{ControlVector, HorizonTrajectory};
pub use model::{FdGradients, MinTimeModel, OcpModel, OcpProblem, ProblemDims};
pub use precond::SparsePreconditioner;
pub use sim::{LogRecord, RunConfig, SimulationLog};
