//! Horizon discretization: stacked unknowns, state and costate recursions,
//! and the optimality residual.
//!
//! The unknowns over one horizon are stacked as
//! `U = [u_0 .. u_{N-1}, mu_0 .. mu_{N-1}, nu, p]` and the residual stacks
//! the stationarity rows, the pointwise constraints, the terminal constraint,
//! and the parameter stationarity row:
//!
//! ```text
//! F(U, x, t) = [ H_u(i) dtau  for i = 0..N,
//!                C(i)   dtau  for i = 0..N,
//!                psi(x_N, p),
//!                phi_p + psi_p' nu + sum_i H_p(i) dtau ]
//! ```
//!
//! States follow the explicit Euler recursion `x_{i+1} = x_i + f dtau` from
//! the current plant state; costates run backward from
//! `lambda_N = phi_x' + psi_x' nu` with `lambda_i = lambda_{i+1} + H_x' dtau`.
//! Stationarity rows at gridpoint `i` use `lambda_{i+1}`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{OcpModel, ProblemDims};

/// Stacked horizon unknowns with typed block access.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlVector {
    dims: ProblemDims,
    data: DVector<f64>,
}

impl ControlVector {
    pub fn zeros(dims: ProblemDims) -> Result<Self> {
        dims.validate()?;
        Ok(ControlVector {
            dims,
            data: DVector::zeros(dims.unknowns()),
        })
    }

    pub fn from_vector(dims: ProblemDims, data: DVector<f64>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.unknowns() {
            return Err(Error::Dimension {
                what: "stacked unknowns",
                expected: dims.unknowns(),
                actual: data.len(),
            });
        }
        Ok(ControlVector { dims, data })
    }

    pub fn from_slice(dims: ProblemDims, data: &[f64]) -> Result<Self> {
        Self::from_vector(dims, DVector::from_column_slice(data))
    }

    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.len() == 0
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    /// Control block of gridpoint `i`.
    pub fn control(&self, i: usize) -> &[f64] {
        let at = self.dims.control_start(i);
        &self.data.as_slice()[at..at + self.dims.control]
    }

    pub fn control_mut(&mut self, i: usize) -> &mut [f64] {
        let at = self.dims.control_start(i);
        let width = self.dims.control;
        &mut self.data.as_mut_slice()[at..at + width]
    }

    /// Constraint multipliers of gridpoint `i`.
    pub fn multiplier(&self, i: usize) -> &[f64] {
        let at = self.dims.multiplier_start(i);
        &self.data.as_slice()[at..at + self.dims.constraint]
    }

    pub fn multiplier_mut(&mut self, i: usize) -> &mut [f64] {
        let at = self.dims.multiplier_start(i);
        let width = self.dims.constraint;
        &mut self.data.as_mut_slice()[at..at + width]
    }

    /// Terminal-constraint multipliers nu.
    pub fn terminal_multiplier(&self) -> &[f64] {
        let at = self.dims.terminal_start();
        &self.data.as_slice()[at..at + self.dims.terminal]
    }

    pub fn terminal_multiplier_mut(&mut self) -> &mut [f64] {
        let at = self.dims.terminal_start();
        let width = self.dims.terminal;
        &mut self.data.as_mut_slice()[at..at + width]
    }

    /// Parameter block p.
    pub fn parameter(&self) -> &[f64] {
        let at = self.dims.parameter_start();
        &self.data.as_slice()[at..at + self.dims.parameter]
    }

    pub fn parameter_mut(&mut self) -> &mut [f64] {
        let at = self.dims.parameter_start();
        let width = self.dims.parameter;
        &mut self.data.as_mut_slice()[at..at + width]
    }

    /// `self + scale * delta` as a new vector.
    pub fn added(&self, delta: &DVector<f64>, scale: f64) -> Result<Self> {
        if delta.len() != self.data.len() {
            return Err(Error::Dimension {
                what: "unknowns update",
                expected: self.data.len(),
                actual: delta.len(),
            });
        }
        let mut data = self.data.clone();
        data.axpy(scale, delta, 1.0);
        Ok(ControlVector {
            dims: self.dims,
            data,
        })
    }
}

/// States and costates along one horizon, shared between the residual and
/// the preconditioner so each step does the two sweeps once.
#[derive(Clone, Debug)]
pub struct HorizonTrajectory {
    /// Grid coordinates `tau_i = i dtau`, length N + 1.
    pub tau: Vec<f64>,
    /// States `x_0 .. x_N`.
    pub states: Vec<Vec<f64>>,
    /// Costates `lambda_0 .. lambda_N`. The head entry closes the recursion
    /// but no residual row reads it.
    pub costates: Vec<Vec<f64>>,
}

fn check_finite(v: &[f64], what: impl Fn() -> String) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what() })
    }
}

/// Forward state recursion from the current plant state.
pub fn forward_states<M: OcpModel + ?Sized>(
    model: &M,
    u: &ControlVector,
    x0: &[f64],
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let dims = model.dims();
    if x0.len() != dims.state {
        return Err(Error::Dimension {
            what: "plant state",
            expected: dims.state,
            actual: x0.len(),
        });
    }
    let dtau = model.horizon_step();
    let p = u.parameter();
    let mut states = Vec::with_capacity(dims.gridpoints + 1);
    states.push(x0.to_vec());
    for i in 0..dims.gridpoints {
        let tau = i as f64 * dtau;
        let f = model.dynamics(t, tau, &states[i], u.control(i), p);
        if f.len() != dims.state {
            return Err(Error::Dimension {
                what: "dynamics output",
                expected: dims.state,
                actual: f.len(),
            });
        }
        let next: Vec<f64> = states[i]
            .iter()
            .zip(&f)
            .map(|(x, fx)| x + dtau * fx)
            .collect();
        check_finite(&next, || format!("state at gridpoint {}", i + 1))?;
        states.push(next);
    }
    Ok(states)
}

/// Backward costate recursion along precomputed states.
pub fn backward_costates<M: OcpModel + ?Sized>(
    model: &M,
    u: &ControlVector,
    states: &[Vec<f64>],
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let dims = model.dims();
    let n = dims.gridpoints;
    let dtau = model.horizon_step();
    let p = u.parameter();
    let nu = u.terminal_multiplier();

    let phi_x = model.terminal_cost_x(&states[n], p);
    let psi_x = model.terminal_constraint_x(&states[n], p);
    let mut seed = phi_x;
    for j in 0..dims.state {
        for r in 0..dims.terminal {
            seed[j] += psi_x[(r, j)] * nu[r];
        }
    }
    check_finite(&seed, || "terminal costate".to_string())?;

    let mut costates = vec![Vec::new(); n + 1];
    costates[n] = seed;
    for i in (0..n).rev() {
        let tau = i as f64 * dtau;
        let hx = model.hamiltonian_x(t, tau, &states[i], &costates[i + 1], u.control(i), u.multiplier(i), p);
        let prev: Vec<f64> = costates[i + 1]
            .iter()
            .zip(&hx)
            .map(|(l, g)| l + dtau * g)
            .collect();
        check_finite(&prev, || format!("costate at gridpoint {i}"))?;
        costates[i] = prev;
    }
    Ok(costates)
}

/// Optimality residual of the discretized problem at `(U, x, t)`, together
/// with the trajectory it was evaluated on.
pub fn assemble_residual<M: OcpModel + ?Sized>(
    model: &M,
    u: &ControlVector,
    x0: &[f64],
    t: f64,
) -> Result<(DVector<f64>, HorizonTrajectory)> {
    let dims = model.dims();
    let n = dims.gridpoints;
    let dtau = model.horizon_step();

    let states = forward_states(model, u, x0, t)?;
    let costates = backward_costates(model, u, &states, t)?;
    let tau: Vec<f64> = (0..=n).map(|i| i as f64 * dtau).collect();

    let p = u.parameter();
    let nu = u.terminal_multiplier();
    let mut residual = DVector::zeros(dims.unknowns());

    for i in 0..n {
        let hu = model.hamiltonian_u(t, tau[i], &states[i], &costates[i + 1], u.control(i), u.multiplier(i), p);
        let at = dims.control_start(i);
        for k in 0..dims.control {
            residual[at + k] = dtau * hu[k];
        }
        let c = model.constraint(t, tau[i], &states[i], u.control(i), p);
        let at = dims.multiplier_start(i);
        for k in 0..dims.constraint {
            residual[at + k] = dtau * c[k];
        }
    }

    let psi = model.terminal_constraint(&states[n], p);
    let at = dims.terminal_start();
    for k in 0..dims.terminal {
        residual[at + k] = psi[k];
    }

    if dims.parameter > 0 {
        let phi_p = model.terminal_cost_p(&states[n], p);
        let psi_p = model.terminal_constraint_p(&states[n], p);
        let at = dims.parameter_start();
        for k in 0..dims.parameter {
            residual[at + k] = phi_p[k];
            for r in 0..dims.terminal {
                residual[at + k] += psi_p[(r, k)] * nu[r];
            }
        }
        for i in 0..n {
            let hp = model.hamiltonian_p(t, tau[i], &states[i], &costates[i + 1], u.control(i), u.multiplier(i), p);
            for k in 0..dims.parameter {
                residual[at + k] += dtau * hp[k];
            }
        }
    }

    check_finite(residual.as_slice(), || "optimality residual".to_string())?;
    Ok((
        residual,
        HorizonTrajectory {
            tau,
            states,
            costates,
        },
    ))
}
