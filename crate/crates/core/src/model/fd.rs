//! Finite-difference fallback for models without analytic derivatives.

use nalgebra::DMatrix;

use super::{OcpModel, ProblemDims};

/// Value-only problem description: everything [`OcpModel`] needs except
/// derivatives. Wrap it in [`FdGradients`] to obtain a full model.
pub trait OcpProblem {
    fn dims(&self) -> ProblemDims;

    fn horizon_step(&self) -> f64 {
        1.0 / self.dims().gridpoints as f64
    }

    fn initial_state(&self) -> Vec<f64>;

    fn initial_guess(&self, _t0: f64, _x0: &[f64]) -> Vec<f64> {
        vec![0.0; self.dims().unknowns()]
    }

    fn dynamics(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64>;
    fn plant_dynamics(&self, t: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64>;
    fn constraint(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64>;
    fn running_cost(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> f64;
    fn terminal_cost(&self, x: &[f64], p: &[f64]) -> f64;
    fn terminal_constraint(&self, x: &[f64], p: &[f64]) -> Vec<f64>;

    fn control_band(&self, _t: f64) -> Option<(f64, f64)> {
        None
    }

    fn state_labels(&self) -> Vec<String>;
    fn control_labels(&self) -> Vec<String>;
}

/// Default step for the central differences in [`FdGradients`].
pub const FD_GRADIENT_STEP: f64 = 1e-6;

/// Supplies every first derivative of a value-only problem by central
/// differences of the composite Hamiltonian and the terminal functions.
#[derive(Clone, Debug)]
pub struct FdGradients<P> {
    problem: P,
    step: f64,
}

impl<P: OcpProblem> FdGradients<P> {
    pub fn new(problem: P) -> Self {
        FdGradients {
            problem,
            step: FD_GRADIENT_STEP,
        }
    }

    pub fn with_step(problem: P, step: f64) -> Self {
        FdGradients { problem, step }
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    /// Central difference of `f` along coordinate `k` of `at`.
    fn central(&self, at: &[f64], k: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut probe = at.to_vec();
        probe[k] = at[k] + self.step;
        let hi = f(&probe);
        probe[k] = at[k] - self.step;
        let lo = f(&probe);
        (hi - lo) / (2.0 * self.step)
    }
}

impl<P: OcpProblem> OcpModel for FdGradients<P> {
    fn dims(&self) -> ProblemDims {
        self.problem.dims()
    }

    fn horizon_step(&self) -> f64 {
        self.problem.horizon_step()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.problem.initial_state()
    }

    fn initial_guess(&self, t0: f64, x0: &[f64]) -> Vec<f64> {
        self.problem.initial_guess(t0, x0)
    }

    fn dynamics(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
        self.problem.dynamics(t, tau, x, u, p)
    }

    fn plant_dynamics(&self, t: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
        self.problem.plant_dynamics(t, x, u, p)
    }

    fn constraint(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
        self.problem.constraint(t, tau, x, u, p)
    }

    fn running_cost(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> f64 {
        self.problem.running_cost(t, tau, x, u, p)
    }

    fn terminal_cost(&self, x: &[f64], p: &[f64]) -> f64 {
        self.problem.terminal_cost(x, p)
    }

    fn terminal_constraint(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        self.problem.terminal_constraint(x, p)
    }

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
        let f = self.problem.dynamics(t, tau, x, u, p);
        let c = self.problem.constraint(t, tau, x, u, p);
        let mut h = self.problem.running_cost(t, tau, x, u, p);
        for (l, fi) in lambda.iter().zip(&f) {
            h += l * fi;
        }
        for (m, ci) in mu.iter().zip(&c) {
            h += m * ci;
        }
        h
    }

    fn hamiltonian_x(
        &self,
        t: f64,
        tau: f64,
        x: &[f64],
        lambda: &[f64],
        u: &[f64],
        mu: &[f64],
        p: &[f64],
    ) -> Vec<f64> {
        (0..x.len())
            .map(|k| self.central(x, k, |v| self.hamiltonian(t, tau, v, lambda, u, mu, p)))
            .collect()
    }

    fn hamiltonian_u(
        &self,
        t: f64,
        tau: f64,
        x: &[f64],
        lambda: &[f64],
        u: &[f64],
        mu: &[f64],
        p: &[f64],
    ) -> Vec<f64> {
        (0..u.len())
            .map(|k| self.central(u, k, |v| self.hamiltonian(t, tau, x, lambda, v, mu, p)))
            .collect()
    }

    fn hamiltonian_p(
        &self,
        t: f64,
        tau: f64,
        x: &[f64],
        lambda: &[f64],
        u: &[f64],
        mu: &[f64],
        p: &[f64],
    ) -> Vec<f64> {
        (0..p.len())
            .map(|k| self.central(p, k, |v| self.hamiltonian(t, tau, x, lambda, u, mu, v)))
            .collect()
    }

    fn terminal_cost_x(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|k| self.central(x, k, |v| self.problem.terminal_cost(v, p)))
            .collect()
    }

    fn terminal_cost_p(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        (0..p.len())
            .map(|k| self.central(p, k, |v| self.problem.terminal_cost(x, v)))
            .collect()
    }

    fn terminal_constraint_x(&self, x: &[f64], p: &[f64]) -> DMatrix<f64> {
        let rows = self.dims().terminal;
        let mut jac = DMatrix::zeros(rows, x.len());
        for r in 0..rows {
            for k in 0..x.len() {
                jac[(r, k)] = self.central(x, k, |v| self.problem.terminal_constraint(v, p)[r]);
            }
        }
        jac
    }

    fn terminal_constraint_p(&self, x: &[f64], p: &[f64]) -> DMatrix<f64> {
        let rows = self.dims().terminal;
        let mut jac = DMatrix::zeros(rows, p.len());
        for r in 0..rows {
            for k in 0..p.len() {
                jac[(r, k)] = self.central(p, k, |v| self.problem.terminal_constraint(x, v)[r]);
            }
        }
        jac
    }

    fn control_band(&self, t: f64) -> Option<(f64, f64)> {
        self.problem.control_band(t)
    }

    fn state_labels(&self) -> Vec<String> {
        self.problem.state_labels()
    }

    fn control_labels(&self) -> Vec<String> {
        self.problem.control_labels()
    }
}
