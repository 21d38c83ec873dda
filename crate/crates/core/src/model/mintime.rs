//! Minimum-time benchmark problem.
//!
//! A point moves in the plane with speed `A x + B` and heading `u`; the task
//! is to reach a target point in the least time while the heading stays on a
//! moving circle `(u - c_u)^2 + u_d^2 = r_u^2` whose center `c_u` oscillates
//! in time. The slack `u_d` turns the band into an equality constraint, and a
//! small running reward on `u_d` keeps the slack away from the degenerate
//! rim. The arrival time is the unknown parameter `p`, so the horizon is the
//! unit interval and both the dynamics and the running cost carry the factor
//! `p` from the change of variables `t -> t + tau p`.

use nalgebra::DMatrix;

use super::{OcpModel, OcpProblem, ProblemDims};

/// Physical and cost constants of the benchmark.
#[derive(Clone, Copy, Debug)]
pub struct MinTimeConstants {
    /// Speed slope: speed = `speed_gain * x + speed_offset`.
    pub speed_gain: f64,
    /// Speed at `x = 0`.
    pub speed_offset: f64,
    /// Plant state at the start of a run.
    pub start: [f64; 2],
    /// Point the terminal constraint pins.
    pub target: [f64; 2],
    /// Mean of the heading-band center `c_u`.
    pub center_base: f64,
    /// Oscillation amplitude of `c_u`.
    pub center_amplitude: f64,
    /// Angular rate of the `c_u` oscillation.
    pub center_frequency: f64,
    /// Band radius `r_u`.
    pub band_radius: f64,
    /// Weight of the slack reward in the running cost.
    pub slack_weight: f64,
}

impl Default for MinTimeConstants {
    fn default() -> Self {
        MinTimeConstants {
            speed_gain: 1.0,
            speed_offset: 1.0,
            start: [0.0, 0.0],
            target: [1.0, 1.0],
            center_base: 0.8,
            center_amplitude: 0.3,
            center_frequency: 20.0,
            band_radius: 0.2,
            slack_weight: 0.005,
        }
    }
}

/// Horizon value of the arrival-time parameter used by the heuristic guess.
const GUESS_HORIZON: f64 = 1.0;

/// The benchmark model on a chosen horizon grid.
#[derive(Clone, Debug)]
pub struct MinTimeModel {
    pub constants: MinTimeConstants,
    gridpoints: usize,
}

impl MinTimeModel {
    pub fn new(gridpoints: usize) -> Self {
        MinTimeModel {
            constants: MinTimeConstants::default(),
            gridpoints,
        }
    }

    pub fn with_constants(gridpoints: usize, constants: MinTimeConstants) -> Self {
        MinTimeModel {
            constants,
            gridpoints,
        }
    }

    /// Band center `c_u` at horizon point `tau` of the problem posed at `t`.
    pub fn band_center(&self, t: f64, tau: f64, p: f64) -> f64 {
        let c = &self.constants;
        c.center_base + c.center_amplitude * (c.center_frequency * (t + tau * p)).sin()
    }

    /// d c_u / d p at fixed `t`, `tau`.
    fn band_center_dp(&self, t: f64, tau: f64, p: f64) -> f64 {
        let c = &self.constants;
        c.center_amplitude * (c.center_frequency * (t + tau * p)).cos() * c.center_frequency * tau
    }

    fn speed(&self, x: &[f64]) -> f64 {
        self.constants.speed_gain * x[0] + self.constants.speed_offset
    }
}

impl OcpModel for MinTimeModel {
    fn dims(&self) -> ProblemDims {
        ProblemDims {
            state: 2,
            control: 2,
            constraint: 1,
            terminal: 2,
            parameter: 1,
            gridpoints: self.gridpoints,
        }
    }

    fn initial_state(&self) -> Vec<f64> {
        self.constants.start.to_vec()
    }

    /// Heading on the band center, slack at the band radius, and the
    /// multiplier that makes the slack stationarity row vanish exactly.
    fn initial_guess(&self, t0: f64, _x0: &[f64]) -> Vec<f64> {
        let dims = OcpModel::dims(self);
        let dtau = OcpModel::horizon_step(self);
        let c = &self.constants;
        let mut guess = vec![0.0; dims.unknowns()];
        let mu = c.slack_weight * GUESS_HORIZON / (2.0 * c.band_radius);
        for i in 0..dims.gridpoints {
            let tau = i as f64 * dtau;
            let at = dims.control_start(i);
            guess[at] = self.band_center(t0, tau, GUESS_HORIZON);
            guess[at + 1] = c.band_radius;
            guess[dims.multiplier_start(i)] = mu;
        }
        guess[dims.parameter_start()] = GUESS_HORIZON;
        guess
    }

    /// The slack enters the cost as -w_d u_d p, which rewards the positive
    /// root of the band constraint; a mirrored stationary point with the
    /// slack and its multiplier both negated exists too, so the warm start
    /// must not let either cross zero.
    fn positive_unknowns(&self) -> Vec<usize> {
        let dims = OcpModel::dims(self);
        (0..dims.gridpoints)
            .flat_map(|i| [dims.control_start(i) + 1, dims.multiplier_start(i)])
            .collect()
    }

    fn dynamics(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
        let _ = (t, tau);
        let v = p[0] * self.speed(x);
        vec![v * u[0].cos(), v * u[0].sin()]
    }

    fn plant_dynamics(&self, _t: f64, x: &[f64], u: &[f64], _p: &[f64]) -> Vec<f64> {
        let v = self.speed(x);
        vec![v * u[0].cos(), v * u[0].sin()]
    }

    fn constraint(&self, t: f64, tau: f64, _x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
        let c = &self.constants;
        let du = u[0] - self.band_center(t, tau, p[0]);
        vec![du * du + u[1] * u[1] - c.band_radius * c.band_radius]
    }

    fn running_cost(&self, _t: f64, _tau: f64, _x: &[f64], u: &[f64], p: &[f64]) -> f64 {
        -self.constants.slack_weight * u[1] * p[0]
    }

    fn terminal_cost(&self, _x: &[f64], p: &[f64]) -> f64 {
        p[0]
    }

    fn terminal_constraint(&self, x: &[f64], _p: &[f64]) -> Vec<f64> {
        let c = &self.constants;
        vec![x[0] - c.target[0], x[1] - c.target[1]]
    }

    fn hamiltonian_x(
        &self,
        _t: f64,
        _tau: f64,
        _x: &[f64],
        lambda: &[f64],
        u: &[f64],
        _mu: &[f64],
        p: &[f64],
    ) -> Vec<f64> {
        // Only the speed depends on the state, and only through x.
        let gain = p[0] * self.constants.speed_gain;
        vec![gain * (lambda[0] * u[0].cos() + lambda[1] * u[0].sin()), 0.0]
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
        let c = &self.constants;
        let v = p[0] * self.speed(x);
        let du = u[0] - self.band_center(t, tau, p[0]);
        vec![
            v * (-lambda[0] * u[0].sin() + lambda[1] * u[0].cos()) + 2.0 * du * mu[0],
            2.0 * mu[0] * u[1] - c.slack_weight * p[0],
        ]
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
        let c = &self.constants;
        let v = self.speed(x);
        let du = u[0] - self.band_center(t, tau, p[0]);
        vec![
            v * (lambda[0] * u[0].cos() + lambda[1] * u[0].sin())
                - 2.0 * du * mu[0] * self.band_center_dp(t, tau, p[0])
                - c.slack_weight * u[1],
        ]
    }

    fn terminal_cost_x(&self, _x: &[f64], _p: &[f64]) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn terminal_cost_p(&self, _x: &[f64], _p: &[f64]) -> Vec<f64> {
        vec![1.0]
    }

    fn terminal_constraint_x(&self, _x: &[f64], _p: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }

    fn terminal_constraint_p(&self, _x: &[f64], _p: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(2, 1)
    }

    fn hamiltonian_uu(
        &self,
        _t: f64,
        _tau: f64,
        x: &[f64],
        lambda: &[f64],
        u: &[f64],
        mu: &[f64],
        p: &[f64],
    ) -> DMatrix<f64> {
        let v = p[0] * self.speed(x);
        let mut hess = DMatrix::zeros(2, 2);
        hess[(0, 0)] = 2.0 * mu[0] - v * (lambda[0] * u[0].cos() + lambda[1] * u[0].sin());
        hess[(1, 1)] = 2.0 * mu[0];
        hess
    }

    fn constraint_u(&self, t: f64, tau: f64, _x: &[f64], u: &[f64], p: &[f64]) -> DMatrix<f64> {
        let du = u[0] - self.band_center(t, tau, p[0]);
        DMatrix::from_row_slice(1, 2, &[2.0 * du, 2.0 * u[1]])
    }

    fn control_band(&self, t: f64) -> Option<(f64, f64)> {
        let center = self.band_center(t, 0.0, 0.0);
        Some((
            center - self.constants.band_radius,
            center + self.constants.band_radius,
        ))
    }

    fn state_labels(&self) -> Vec<String> {
        vec!["x".into(), "y".into()]
    }

    fn control_labels(&self) -> Vec<String> {
        vec!["u".into(), "u_d".into()]
    }
}

/// Value-only view of the same problem, for exercising the derivative adapter.
impl OcpProblem for MinTimeModel {
    fn dims(&self) -> ProblemDims {
        OcpModel::dims(self)
    }

    fn initial_state(&self) -> Vec<f64> {
        OcpModel::initial_state(self)
    }

    fn initial_guess(&self, t0: f64, x0: &[f64]) -> Vec<f64> {
        OcpModel::initial_guess(self, t0, x0)
    }

    fn dynamics(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
        OcpModel::dynamics(self, t, tau, x, u, p)
    }

    fn plant_dynamics(&self, t: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
        OcpModel::plant_dynamics(self, t, x, u, p)
    }

    fn constraint(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
        OcpModel::constraint(self, t, tau, x, u, p)
    }

    fn running_cost(&self, t: f64, tau: f64, x: &[f64], u: &[f64], p: &[f64]) -> f64 {
        OcpModel::running_cost(self, t, tau, x, u, p)
    }

    fn terminal_cost(&self, x: &[f64], p: &[f64]) -> f64 {
        OcpModel::terminal_cost(self, x, p)
    }

    fn terminal_constraint(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        OcpModel::terminal_constraint(self, x, p)
    }

    fn state_labels(&self) -> Vec<String> {
        OcpModel::state_labels(self)
    }

    fn control_labels(&self) -> Vec<String> {
        OcpModel::control_labels(self)
    }
}
