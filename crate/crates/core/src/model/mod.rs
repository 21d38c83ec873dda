//! Optimal-control model contract.
//!
//! A model describes one finite-horizon problem: state dynamics, running and
//! terminal cost, a pointwise equality constraint, a terminal constraint, and
//! the first derivatives of the Hamiltonian
//!
//! ```text
//! H(t, tau, x, lambda, u, mu, p) = L + lambda' f + mu' C
//! ```
//!
//! The horizon lives on a normalized coordinate `tau in [0, 1]`; models whose
//! horizon length is itself an unknown fold the time dilation into `f` and `L`
//! through the parameter block `p`. The plant propagated between samples is a
//! separate evaluator because it carries no such dilation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

mod fd;
pub mod mintime;

pub use fd::{FdGradients, OcpProblem};
pub use mintime::{MinTimeConstants, MinTimeModel};

/// sqrt of f64 machine epsilon, the base step for one-sided differences.
pub(crate) const FD_SQRT_EPS: f64 = 1.4901161193847656e-8;

/// Block sizes of one problem instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProblemDims {
    /// State dimension.
    pub state: usize,
    /// Controls per gridpoint (slack variables included).
    pub control: usize,
    /// Pointwise equality constraints per gridpoint.
    pub constraint: usize,
    /// Terminal equality constraints.
    pub terminal: usize,
    /// Unknown parameters shared across the horizon.
    pub parameter: usize,
    /// Horizon gridpoints.
    pub gridpoints: usize,
}

impl ProblemDims {
    pub fn validate(&self) -> Result<()> {
        if self.gridpoints == 0 {
            return Err(Error::Config {
                what: "gridpoints must be at least 1".into(),
            });
        }
        if self.control == 0 {
            return Err(Error::Config {
                what: "control dimension must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Per-gridpoint unknowns: controls plus constraint multipliers.
    pub fn block(&self) -> usize {
        self.control + self.constraint
    }

    /// Trailing unknowns shared across the horizon: terminal multipliers plus parameters.
    pub fn border(&self) -> usize {
        self.terminal + self.parameter
    }

    /// Total unknowns in the stacked vector.
    pub fn unknowns(&self) -> usize {
        self.gridpoints * self.block() + self.border()
    }

    /// Offset of the control block for gridpoint `i`.
    ///
    /// The stacked layout is `[u_0 .. u_{N-1}, mu_0 .. mu_{N-1}, nu, p]`.
    pub fn control_start(&self, i: usize) -> usize {
        debug_assert!(i < self.gridpoints);
        i * self.control
    }

    /// Offset of the constraint-multiplier block for gridpoint `i`.
    pub fn multiplier_start(&self, i: usize) -> usize {
        debug_assert!(i < self.gridpoints);
        self.gridpoints * self.control + i * self.constraint
    }

    /// Offset of the terminal-multiplier block.
    pub fn terminal_start(&self) -> usize {
        self.gridpoints * self.block()
    }

    /// Offset of the parameter block.
    pub fn parameter_start(&self) -> usize {
        self.terminal_start() + self.terminal
    }
}

/// One finite-horizon optimal-control problem with analytic first derivatives.
///
/// Evaluators receive the wall-clock time `t` and the horizon coordinate
/// `tau` separately so that time-varying data can be sampled consistently on
/// both the plant and the prediction horizon. All slice arguments use the
/// sizes from [`ProblemDims`]; evaluators may assume them and index freely.
pub trait OcpModel {
    fn dims(&self) -> ProblemDims;

    /// Horizon grid spacing. The default covers a normalized horizon.
    fn horizon_step(&self) -> f64 {
        1.0 / self.dims().gridpoints as f64
    }

    /// Plant state at the start of a closed-loop run.
    fn initial_state(&self) -> Vec<f64>;

    /// Heuristic first guess for the stacked unknowns, refined by the warm start.
    fn initial_guess(&self, _t0: f64, _x0: &[f64]) -> Vec<f64> {
        vec![0.0; self.dims().unknowns()]
    }

    /// Indices of stacked unknowns the warm start must keep strictly positive.
    /// Slack-style variables admit a mirrored stationary point of the opposite
    /// sign; listing them here pins the intended branch.
    fn positive_unknowns(&self) -> Vec<usize> {
        Vec::new()
    }

    /// State derivative on the prediction horizon.
    fn dynamics(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64>;

    /// State derivative of the plant in wall-clock time.
    fn plant_dynamics(&self, t: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64>;

    /// Pointwise equality constraint C.
    fn constraint(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64>;

    /// Running cost L.
    fn running_cost(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> f64;

    /// Terminal cost phi.
    fn terminal_cost(&self, x: &[f64], p: &[f64]) -> f64;

    /// Terminal equality constraint psi.
    fn terminal_constraint(&self, x: &[f64], p: &[f64]) -> Vec<f64>;

    /// Scalar Hamiltonian; analytic gradients must agree with finite
    /// differences of this composite.
    fn hamiltonian(
        &self,
        t: f64,
        tau: f64,
        x: &[f64],
        lambda: &[f64],
        u: &[f64],
        mu: &[f64],
        p: &[f64],
    ) -> f64 {
        let f = self.dynamics(t, tau, x, u, p);
        let c = self.constraint(t, tau, x, u, p);
        let mut h = self.running_cost(t, tau, x, u, p);
        for (l, fi) in lambda.iter().zip(&f) {
            h += l * fi;
        }
        for (m, ci) in mu.iter().zip(&c) {
            h += m * ci;
        }
        h
    }

    /// dH/dx as a row of length `state`.
    fn hamiltonian_x(
        &self,
        t: f64,
        tau: f64,
        x: &[f64],
        lambda: &[f64],
        u: &[f64],
        mu: &[f64],
        p: &[f64],
    ) -> Vec<f64>;

    /// dH/du as a row of length `control`.
    fn hamiltonian_u(
        &self,
        t: f64,
        tau: f64,
        x: &[f64],
        lambda: &[f64],
        u: &[f64],
        mu: &[f64],
        p: &[f64],
    ) -> Vec<f64>;

    /// dH/dp as a row of length `parameter`.
    fn hamiltonian_p(
        &self,
        t: f64,
        tau: f64,
        x: &[f64],
        lambda: &[f64],
        u: &[f64],
        mu: &[f64],
        p: &[f64],
    ) -> Vec<f64>;

    /// dphi/dx.
    fn terminal_cost_x(&self, x: &[f64], p: &[f64]) -> Vec<f64>;

    /// dphi/dp.
    fn terminal_cost_p(&self, x: &[f64], p: &[f64]) -> Vec<f64>;

    /// dpsi/dx, sized `terminal x state`.
    fn terminal_constraint_x(&self, x: &[f64], p: &[f64]) -> DMatrix<f64>;

    /// dpsi/dp, sized `terminal x parameter`.
    fn terminal_constraint_p(&self, x: &[f64], p: &[f64]) -> DMatrix<f64>;

    /// d2H/du2, used by the preconditioner blocks.
    ///
    /// The default takes a one-sided difference of [`OcpModel::hamiltonian_u`]
    /// with a magnitude-scaled step and averages out the skew, since the
    /// exact Hessian is symmetric.
    fn hamiltonian_uu(
        &self,
        t: f64,
        tau: f64,
        x: &[f64],
        lambda: &[f64],
        u: &[f64],
        mu: &[f64],
        p: &[f64],
    ) -> DMatrix<f64> {
        let m_u = self.dims().control;
        let base = self.hamiltonian_u(t, tau, x, lambda, u, mu, p);
        let mut hess = DMatrix::zeros(m_u, m_u);
        let mut probe = u.to_vec();
        for k in 0..m_u {
            let step = FD_SQRT_EPS * (1.0 + u[k].abs());
            probe[k] = u[k] + step;
            let grad = self.hamiltonian_u(t, tau, x, lambda, &probe, mu, p);
            probe[k] = u[k];
            for r in 0..m_u {
                hess[(r, k)] = (grad[r] - base[r]) / step;
            }
        }
        for r in 0..m_u {
            for c in 0..r {
                let v = 0.5 * (hess[(r, c)] + hess[(c, r)]);
                hess[(r, c)] = v;
                hess[(c, r)] = v;
            }
        }
        hess
    }

    /// dC/du, sized `constraint x control`, used by the preconditioner blocks.
    fn constraint_u(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> DMatrix<f64> {
        let dims = self.dims();
        let base = self.constraint(t, tau, x, u, p);
        let mut jac = DMatrix::zeros(dims.constraint, dims.control);
        let mut probe = u.to_vec();
        for k in 0..dims.control {
            let step = FD_SQRT_EPS * (1.0 + u[k].abs());
            probe[k] = u[k] + step;
            let c = self.constraint(t, tau, x, &probe, p);
            probe[k] = u[k];
            for r in 0..dims.constraint {
                jac[(r, k)] = (c[r] - base[r]) / step;
            }
        }
        jac
    }

    /// Admissible band for the first control component at wall-clock time `t`,
    /// if the model has one. Used for plot overlays only.
    fn control_band(&self, _t: f64) -> Option<(f64, f64)> {
        None
    }

    /// Column names for the logged state, in layout order.
    fn state_labels(&self) -> Vec<String>;

    /// Column names for the logged control, in layout order.
    fn control_labels(&self) -> Vec<String>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_partition_the_stacked_vector() {
        let dims = ProblemDims {
            state: 2,
            control: 2,
            constraint: 1,
            terminal: 2,
            parameter: 1,
            gridpoints: 5,
        };
        assert_eq!(dims.block(), 3);
        assert_eq!(dims.border(), 3);
        assert_eq!(dims.unknowns(), 18);
        assert_eq!(dims.control_start(0), 0);
        assert_eq!(dims.control_start(4), 8);
        assert_eq!(dims.multiplier_start(0), 10);
        assert_eq!(dims.multiplier_start(4), 14);
        assert_eq!(dims.terminal_start(), 15);
        assert_eq!(dims.parameter_start(), 17);
    }

    #[test]
    fn degenerate_dims_are_rejected() {
        let mut dims = ProblemDims {
            state: 1,
            control: 1,
            constraint: 0,
            terminal: 0,
            parameter: 0,
            gridpoints: 0,
        };
        assert!(dims.validate().is_err());
        dims.gridpoints = 1;
        assert!(dims.validate().is_ok());
        dims.control = 0;
        assert!(dims.validate().is_err());
    }
}
