//! Per-sample update of the horizon unknowns.
//!
//! Instead of iterating a nonlinear solver to convergence at every sampling
//! instant, the solution is continued: the previous unknowns are corrected by
//! one linear solve
//!
//! ```text
//! a(V) = b / h,   a(V) = (F[U + hV] - F[U]) / h,   b = -F[U],
//! ```
//!
//! and the update is `U <- U + hV`. The operator `a` is a directional
//! difference of the residual, so no Jacobian is ever formed; GMRES works on
//! it directly, preconditioned by the block-arrow approximation when enabled.
//! Between samples the plant state advances by one explicit Euler step of the
//! physical dynamics.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gmres::{self, GmresOptions, Identity, LinearOperator, Preconditioner};
use crate::horizon::{assemble_residual, ControlVector, HorizonTrajectory};
use crate::model::OcpModel;
use crate::oracle::{build_dense_jacobian, dense_solve, FdMode};
use crate::precond::SparsePreconditioner;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondMode {
    Sparse,
    None,
}

#[derive(Clone, Debug)]
pub struct ContinuationConfig {
    /// Directional-difference step h.
    pub fd_step: f64,
    /// GMRES relative tolerance.
    pub tolerance: f64,
    /// GMRES iteration cap.
    pub max_iterations: usize,
    pub mode: PrecondMode,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            fd_step: 1e-8,
            tolerance: 1e-5,
            max_iterations: 100,
            mode: PrecondMode::Sparse,
        }
    }
}

/// Directional difference of the optimality residual around a fixed base
/// point. The base residual and its trajectory are computed once and reused
/// by every apply, by the right-hand side, and by the preconditioner.
pub struct FdOperator<'a, M: OcpModel + ?Sized> {
    model: &'a M,
    u: &'a ControlVector,
    x0: &'a [f64],
    t: f64,
    h: f64,
    base: DVector<f64>,
    trajectory: HorizonTrajectory,
}

impl<'a, M: OcpModel + ?Sized> FdOperator<'a, M> {
    pub fn new(model: &'a M, u: &'a ControlVector, x0: &'a [f64], t: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::NonFinite {
                what: "directional-difference step".to_string(),
            });
        }
        let (base, trajectory) = assemble_residual(model, u, x0, t)?;
        Ok(FdOperator {
            model,
            u,
            x0,
            t,
            h,
            base,
            trajectory,
        })
    }

    /// Residual at the base point.
    pub fn base_residual(&self) -> &DVector<f64> {
        &self.base
    }

    /// Right-hand side of the update equation, `-F` at the base point.
    pub fn rhs(&self) -> DVector<f64> {
        -&self.base
    }

    pub fn trajectory(&self) -> &HorizonTrajectory {
        &self.trajectory
    }

    pub fn step(&self) -> f64 {
        self.h
    }
}

impl<M: OcpModel + ?Sized> LinearOperator for FdOperator<'_, M> {
    fn dim(&self) -> usize {
        self.u.len()
    }

    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let moved = self.u.added(v, self.h)?;
        let (shifted, _) = assemble_residual(self.model, &moved, self.x0, self.t)?;
        Ok((shifted - &self.base) / self.h)
    }
}

/// Result of one continuation update.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Updated unknowns.
    pub u: ControlVector,
    /// `||F||_2` at the updated unknowns, same state and time.
    pub residual_norm: f64,
    pub gmres_iterations: usize,
    /// GMRES preconditioned residual estimate at exit.
    pub gmres_residual: f64,
    /// Wall time of preconditioner assembly and factorization.
    pub precond_seconds: f64,
    /// Wall time of the GMRES solve.
    pub solve_seconds: f64,
    /// A block needed a ridge, or the step fell back to unpreconditioned
    /// GMRES after a factorization or solver failure.
    pub regularized: bool,
}

pub fn continuation_step<M: OcpModel + ?Sized>(
    model: &M,
    u: &ControlVector,
    x0: &[f64],
    t: f64,
    config: &ContinuationConfig,
) -> Result<StepOutcome> {
    let operator = FdOperator::new(model, u, x0, t, config.fd_step)?;
    let rhs = operator.rhs() / config.fd_step;
    let m = operator.dim();
    let start = DVector::zeros(m);
    let options = GmresOptions {
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
        ..GmresOptions::default()
    };

    let mut regularized = false;
    let mut precond_seconds = 0.0;
    let preconditioner: Box<dyn Preconditioner> = match config.mode {
        PrecondMode::None => Box::new(Identity { dim: m }),
        PrecondMode::Sparse => {
            let clock = Instant::now();
            let assembled =
                SparsePreconditioner::assemble(model, u, t, operator.trajectory(), &operator)?;
            let factored = assembled.factorize();
            precond_seconds = clock.elapsed().as_secs_f64();
            match factored {
                Ok(factored) => {
                    regularized |= factored.regularized;
                    Box::new(factored)
                }
                Err(Error::Factorization { .. }) => {
                    regularized = true;
                    Box::new(Identity { dim: m })
                }
                Err(other) => return Err(other),
            }
        }
    };

    let clock = Instant::now();
    let report = match gmres::solve(&operator, preconditioner.as_ref(), &rhs, &start, &options) {
        Ok(report) => report,
        Err(_) if config.mode == PrecondMode::Sparse => {
            // A damaged preconditioner can poison the Krylov space; the
            // unpreconditioned solve is the last resort before giving up.
            regularized = true;
            gmres::solve(&operator, &Identity { dim: m }, &rhs, &start, &options)?
        }
        Err(err) => return Err(err),
    };
    let solve_seconds = clock.elapsed().as_secs_f64();

    let updated = u.added(&report.solution, config.fd_step)?;
    let (residual, _) = assemble_residual(model, &updated, x0, t)?;

    Ok(StepOutcome {
        u: updated,
        residual_norm: residual.norm(),
        gmres_iterations: report.iterations,
        gmres_residual: report.residual,
        precond_seconds,
        solve_seconds,
        regularized,
    })
}

/// One explicit Euler step of the physical dynamics, using the first control
/// block of the horizon unknowns.
pub fn propagate_state<M: OcpModel + ?Sized>(
    model: &M,
    x: &[f64],
    u: &ControlVector,
    t: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let dims = model.dims();
    if x.len() != dims.state {
        return Err(Error::Dimension {
            what: "plant state",
            expected: dims.state,
            actual: x.len(),
        });
    }
    let f = model.plant_dynamics(t, x, u.control(0), u.parameter());
    if f.len() != dims.state {
        return Err(Error::Dimension {
            what: "plant dynamics output",
            expected: dims.state,
            actual: f.len(),
        });
    }
    let next: Vec<f64> = x.iter().zip(&f).map(|(xi, fi)| xi + dt * fi).collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "propagated state".to_string(),
        });
    }
    Ok(next)
}

const NEWTON_TOLERANCE: f64 = 1e-6;
const NEWTON_MAX_ITERATIONS: usize = 50;
const NEWTON_ACCEPT_CEILING: f64 = 1e-3;
const NEWTON_FD_STEP: f64 = 1e-6;
const ARMIJO_SLOPE: f64 = 1e-4;
const ARMIJO_FLOOR: f64 = 9.5367431640625e-7; // 2^-20
// A guarded unknown that a trial step would push below its floor is clamped
// there: it keeps this fraction of its current value, but never less than
// the absolute floor, so a pinched variable can wait near zero and recover.
const BOUNDARY_REMAINDER: f64 = 0.005;
const BOUNDARY_MICRO: f64 = 1e-6;
const LEVENBERG_SEED: f64 = 1e-10;
const LEVENBERG_GROWTH: f64 = 10.0;
const LEVENBERG_ATTEMPTS: usize = 15;

/// Armijo backtracking on the residual norm, trial points clamped so the
/// guarded components stay strictly positive. Returns the first accepted
/// point, its residual, and the new norm.
fn backtrack<M: OcpModel + ?Sized>(
    model: &M,
    u: &ControlVector,
    direction: &DVector<f64>,
    guarded: &[usize],
    norm: f64,
    x0: &[f64],
    t0: f64,
) -> Result<Option<(ControlVector, DVector<f64>, f64)>> {
    let mut alpha = 1.0_f64;
    while alpha >= ARMIJO_FLOOR {
        let mut data = u.as_vector().clone();
        data.axpy(alpha, direction, 1.0);
        for &k in guarded {
            let floor = (BOUNDARY_REMAINDER * u.as_vector()[k]).max(BOUNDARY_MICRO);
            if data[k] < floor {
                data[k] = floor;
            }
        }
        let candidate = ControlVector::from_vector(u.dims(), data)?;
        if let Ok((f, _)) = assemble_residual(model, &candidate, x0, t0) {
            let candidate_norm = f.norm();
            if candidate_norm.is_finite() && candidate_norm <= (1.0 - ARMIJO_SLOPE * alpha) * norm
            {
                return Ok(Some((candidate, f, candidate_norm)));
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// Solve the horizon problem once from the model's heuristic guess, by damped
/// Newton on the dense finite-difference Jacobian. Backtracking never crosses
/// zero on the model's positivity-guarded unknowns, which pins the intended
/// branch of slack-style variables. Iterations where the Newton direction is
/// unusable (singular Jacobian near a slack pinch, pressed against the
/// boundary, or no decrease along it) fall back to Gauss-Newton steps with a
/// growing Levenberg shift, which descend the residual norm even where the
/// Jacobian is singular. Expensive and desk-scale only; the result seeds the
/// continuation loop.
pub fn initialize<M: OcpModel + ?Sized>(model: &M, x0: &[f64], t0: f64) -> Result<ControlVector> {
    let dims = model.dims();
    let mut u = ControlVector::from_slice(dims, &model.initial_guess(t0, x0))?;
    let mut residual = assemble_residual(model, &u, x0, t0)?.0;
    let mut norm = residual.norm();
    let m = dims.unknowns();
    let guarded = model.positive_unknowns();

    for _ in 0..NEWTON_MAX_ITERATIONS {
        if norm <= NEWTON_TOLERANCE {
            break;
        }
        let jacobian = build_dense_jacobian(model, &u, x0, t0, NEWTON_FD_STEP, FdMode::Central)?;
        let rhs = -&residual;

        let mut accepted = None;
        if let Ok(direction) = dense_solve(&jacobian, &rhs) {
            accepted = backtrack(model, &u, &direction, &guarded, norm, x0, t0)?;
        }
        if accepted.is_none() {
            let jtj = jacobian.transpose() * &jacobian;
            let neg_grad = jacobian.transpose() * &rhs;
            let dscale = jtj.diagonal().amax().max(1e-12);
            let mut lambda = LEVENBERG_SEED;
            for _ in 0..LEVENBERG_ATTEMPTS {
                let mut system = jtj.clone();
                for k in 0..m {
                    system[(k, k)] += lambda * dscale;
                }
                if let Ok(direction) = dense_solve(&system, &neg_grad) {
                    accepted = backtrack(model, &u, &direction, &guarded, norm, x0, t0)?;
                    if accepted.is_some() {
                        break;
                    }
                }
                lambda *= LEVENBERG_GROWTH;
            }
        }
        if accepted.is_none() {
            // Last resort: shift the Jacobian itself. Not a descent guarantee,
            // but it perturbs the direction off the boundary where the
            // least-squares rungs cannot.
            let jscale = jacobian.amax().max(1.0);
            let mut lambda = LEVENBERG_SEED;
            for _ in 0..LEVENBERG_ATTEMPTS {
                let mut system = jacobian.clone();
                for k in 0..m {
                    system[(k, k)] += lambda * jscale;
                }
                if let Ok(direction) = dense_solve(&system, &rhs) {
                    accepted = backtrack(model, &u, &direction, &guarded, norm, x0, t0)?;
                    if accepted.is_some() {
                        break;
                    }
                }
                lambda *= LEVENBERG_GROWTH;
            }
        }
        match accepted {
            Some((next, f, next_norm)) => {
                u = next;
                residual = f;
                norm = next_norm;
            }
            None => break,
        }
    }

    if norm > NEWTON_ACCEPT_CEILING {
        return Err(Error::Initialization {
            what: format!("newton refinement stalled at residual norm {norm:.3e}"),
        });
    }
    Ok(u)
}
