//! Forward optimal control.
//!
//! Problems are discrete-time: `x_{t+1} = f(x_t, u_t; theta)` for
//! `t = 0..T-1`, objective `h(x_T; theta) + sum_t l(x_t, u_t; theta)`, and
//! optional inequality constraints `c_t(x_t, u_t; theta) <= 0`,
//! `c_T(x_T; theta) <= 0`. Continuous-time problems are transcribed onto a
//! fixed grid by [`discretize`] using one RK4 step per interval.
//!
//! Derivatives default to central finite differences; implementations with
//! closed forms override the `*_jacobians` / `*_quadratic` methods.

mod barrier;
mod discretize;
mod ilqr;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::randmat::{BlockSpec, SymBlockMatrix};

pub use barrier::{solve_barrier, BarrierConfig};
pub use discretize::{discretize, time_to_index, ContinuousDynamics, ContinuousProblem};
pub use ilqr::{control_gradient, solve_unconstrained, solve_unconstrained_with, SolverConfig};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("rollout produced non-finite states at step {step}")]
    NonFiniteDynamics { step: usize },
    #[error("objective is not finite at the initial rollout")]
    NonFiniteCost,
    #[error("control Hessian could not be regularized (regularization exceeded {reg:e})")]
    IndefiniteCostNotRegularizable { reg: f64 },
    #[error("initial rollout violates an inequality constraint (max value {max_violation:e})")]
    InfeasibleStart { max_violation: f64 },
    #[error("equality constraints are not supported by the in-repo solvers")]
    EqualityConstraintsUnsupported,
    #[error("problem has inequality constraints; use the barrier solver")]
    ConstraintsPresent,
    #[error("problem has no inequality constraints")]
    NoConstraints,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid discretization: {0}")]
    Discretization(String),
}

/// Discrete-time dynamics `x_{t+1} = f(x_t, u_t; theta)`.
pub trait Dynamics: Send + Sync {
    fn step(&self, t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> Vector;

    /// `(df/dx, df/du)`.
    fn jacobians(&self, t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> (Matrix, Matrix) {
        let n = x.len();
        let fx = fd_jacobian(x, |xp| self.step(t, xp, u, theta), n);
        let fu = fd_jacobian(u, |up| self.step(t, x, up, theta), n);
        (fx, fu)
    }
}

/// Second-order expansion of a stage cost.
#[derive(Debug, Clone)]
pub struct StageQuad {
    pub lx: Vector,
    pub lu: Vector,
    pub lxx: Matrix,
    pub luu: Matrix,
    /// `d^2 l / du dx`, shape `m x n`.
    pub lux: Matrix,
}

/// Stage cost `l(x, u; theta)` and terminal cost `h(x; theta)`.
///
/// `t` is the step (grid node) index.
pub trait Cost: Send + Sync {
    fn stage(&self, t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> f64;
    fn terminal(&self, x: &Vector, theta: &SymBlockMatrix) -> f64;

    fn stage_quadratic(&self, t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> StageQuad {
        let n = x.len();
        let mut z = Vector::zeros(n + u.len());
        z.rows_mut(0, n).copy_from(x);
        z.rows_mut(n, u.len()).copy_from(u);
        let f = |z: &Vector| self.stage(t, &z.rows(0, n).into_owned(), &z.rows(n, z.len() - n).into_owned(), theta);
        let (g, h) = fd_grad_hess(&z, f);
        let m = u.len();
        StageQuad {
            lx: g.rows(0, n).into_owned(),
            lu: g.rows(n, m).into_owned(),
            lxx: h.view((0, 0), (n, n)).into_owned(),
            luu: h.view((n, n), (m, m)).into_owned(),
            lux: h.view((n, 0), (m, n)).into_owned(),
        }
    }

    fn terminal_quadratic(&self, x: &Vector, theta: &SymBlockMatrix) -> (Vector, Matrix) {
        fd_grad_hess(x, |xp| self.terminal(xp, theta))
    }
}

/// Inequality constraints `c_t(x, u) <= 0` and `c_T(x) <= 0`.
pub trait Constraints: Send + Sync {
    fn num_path(&self) -> usize;
    fn num_terminal(&self) -> usize {
        0
    }
    fn path(&self, t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> Vector;
    fn terminal(&self, _x: &Vector, _theta: &SymBlockMatrix) -> Vector {
        Vector::zeros(0)
    }

    /// `(dc/dx, dc/du)`.
    fn path_jacobians(&self, t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> (Matrix, Matrix) {
        let q = self.num_path();
        (
            fd_jacobian(x, |xp| self.path(t, xp, u, theta), q),
            fd_jacobian(u, |up| self.path(t, x, up, theta), q),
        )
    }

    fn terminal_jacobian(&self, x: &Vector, theta: &SymBlockMatrix) -> Matrix {
        fd_jacobian(x, |xp| self.terminal(xp, theta), self.num_terminal())
    }
}

/// Names the role of each block of `theta` for a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaLayout {
    spec: BlockSpec,
    names: Vec<String>,
}

impl ThetaLayout {
    /// One name per block; every block must be named exactly once.
    pub fn new(spec: BlockSpec, names: Vec<String>) -> Result<Self, SolveError> {
        if names.len() != spec.num_blocks() {
            return Err(SolveError::Dimension(format!(
                "layout names {} entries for {} blocks",
                names.len(),
                spec.num_blocks()
            )));
        }
        Ok(Self { spec, names })
    }

    pub fn spec(&self) -> &BlockSpec {
        &self.spec
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// A discrete-time optimal control problem parameterized by `theta`.
#[derive(Clone)]
pub struct OcProblem {
    pub n: usize,
    pub m: usize,
    /// Number of control steps.
    pub horizon: usize,
    /// Seconds per step; `1.0` for natively discrete problems.
    pub dt: f64,
    pub x0: Vector,
    pub dynamics: Arc<dyn Dynamics>,
    pub cost: Arc<dyn Cost>,
    pub constraints: Option<Arc<dyn Constraints>>,
    /// Equality path/terminal constraints are representable but not solvable here.
    pub has_equality_constraints: bool,
    /// Initial controls for every solve.
    pub nominal_controls: Vec<Vector>,
    pub layout: ThetaLayout,
}

impl std::fmt::Debug for OcProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcProblem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("horizon", &self.horizon)
            .field("dt", &self.dt)
            .field("constrained", &self.constraints.is_some())
            .field("layout", &self.layout)
            .finish()
    }
}

impl OcProblem {
    /// A problem with zero nominal controls, no constraints and `dt = 1`.
    pub fn new(
        x0: Vector,
        m: usize,
        horizon: usize,
        dynamics: Arc<dyn Dynamics>,
        cost: Arc<dyn Cost>,
        layout: ThetaLayout,
    ) -> Self {
        Self {
            n: x0.len(),
            m,
            horizon,
            dt: 1.0,
            x0,
            dynamics,
            cost,
            constraints: None,
            has_equality_constraints: false,
            nominal_controls: vec![Vector::zeros(m); horizon],
            layout,
        }
    }

    pub fn with_constraints(mut self, c: Arc<dyn Constraints>) -> Self {
        self.constraints = Some(c);
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_nominal_controls(mut self, us: Vec<Vector>) -> Self {
        self.nominal_controls = us;
        self
    }

    /// Drops the inequality constraints.
    pub fn unconstrained(&self) -> Self {
        Self { constraints: None, ..self.clone() }
    }

    pub(crate) fn check(&self, theta: &SymBlockMatrix) -> Result<(), SolveError> {
        if theta.spec() != self.layout.spec() {
            return Err(SolveError::Dimension(format!(
                "theta has blocks {}, problem expects {}",
                theta.spec(),
                self.layout.spec()
            )));
        }
        if self.x0.len() != self.n || self.nominal_controls.len() != self.horizon {
            return Err(SolveError::Dimension("initial state or nominal controls".into()));
        }
        if self.nominal_controls.iter().any(|u| u.len() != self.m) {
            return Err(SolveError::Dimension("nominal control length".into()));
        }
        if self.has_equality_constraints {
            return Err(SolveError::EqualityConstraintsUnsupported);
        }
        Ok(())
    }

    /// Simulates the dynamics from `x0` under `us`.
    pub fn rollout(&self, us: &[Vector], theta: &SymBlockMatrix) -> Result<Vec<Vector>, SolveError> {
        let mut xs = Vec::with_capacity(us.len() + 1);
        xs.push(self.x0.clone());
        for (t, u) in us.iter().enumerate() {
            let next = self.dynamics.step(t, &xs[t], u, theta);
            if !next.iter().all(|v| v.is_finite()) {
                return Err(SolveError::NonFiniteDynamics { step: t });
            }
            xs.push(next);
        }
        Ok(xs)
    }

    /// Objective `h(x_T) + sum l(x_t, u_t)`.
    pub fn objective(&self, xs: &[Vector], us: &[Vector], theta: &SymBlockMatrix) -> f64 {
        let stage: f64 = us.iter().enumerate().map(|(t, u)| self.cost.stage(t, &xs[t], u, theta)).sum();
        stage + self.cost.terminal(&xs[us.len()], theta)
    }

    /// Largest inequality-constraint value along a trajectory (`-inf` when unconstrained).
    pub fn max_constraint(&self, xs: &[Vector], us: &[Vector], theta: &SymBlockMatrix) -> f64 {
        let Some(c) = &self.constraints else { return f64::NEG_INFINITY };
        let mut worst = f64::NEG_INFINITY;
        for (t, u) in us.iter().enumerate() {
            worst = c.path(t, &xs[t], u, theta).iter().cloned().fold(worst, f64::max);
        }
        c.terminal(&xs[us.len()], theta).iter().cloned().fold(worst, f64::max)
    }
}

/// Solves with the barrier method when the problem has inequality
/// constraints, otherwise with plain iLQR.
pub fn solve(prob: &OcProblem, theta: &SymBlockMatrix) -> Result<Trajectory, SolveError> {
    solve_with(prob, theta, &BarrierConfig::default())
}

/// [`solve`] with explicit settings; `cfg.solver` also drives the unconstrained case.
pub fn solve_with(prob: &OcProblem, theta: &SymBlockMatrix, cfg: &BarrierConfig) -> Result<Trajectory, SolveError> {
    if prob.constraints.is_some() {
        solve_barrier(prob, theta, cfg)
    } else {
        solve_unconstrained_with(prob, theta, &cfg.solver, None)
    }
}

/// A solved trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Time of each state node, `t * dt`.
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub controls: Vec<Vector>,
    /// Objective of the original problem (barrier terms excluded).
    pub objective: f64,
    pub iterations: usize,
    /// Largest control change in the last accepted step.
    pub final_step_norm: f64,
    /// `max_t ||dJ/du_t||_inf` at the returned controls.
    pub grad_norm: f64,
    pub converged: bool,
}

impl Trajectory {
    /// Largest `||x_{t+1} - f(x_t, u_t)||_inf` along the trajectory.
    pub fn dynamics_residual(&self, prob: &OcProblem, theta: &SymBlockMatrix) -> f64 {
        self.controls
            .iter()
            .enumerate()
            .map(|(t, u)| (&self.states[t + 1] - prob.dynamics.step(t, &self.states[t], u, theta)).amax())
            .fold(0.0, f64::max)
    }
}

fn fd_step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

/// Central-difference Jacobian of `f` (output length `rows`) at `z`.
pub(crate) fn fd_jacobian<F: Fn(&Vector) -> Vector>(z: &Vector, f: F, rows: usize) -> Matrix {
    let mut jac = Matrix::zeros(rows, z.len());
    let mut zp = z.clone();
    for j in 0..z.len() {
        let h = fd_step(z[j]);
        zp[j] = z[j] + h;
        let fp = f(&zp);
        zp[j] = z[j] - h;
        let fm = f(&zp);
        zp[j] = z[j];
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Central-difference gradient and Hessian of a scalar function.
pub(crate) fn fd_grad_hess<F: Fn(&Vector) -> f64>(z: &Vector, f: F) -> (Vector, Matrix) {
    let k = z.len();
    let mut g = Vector::zeros(k);
    let mut h = Matrix::zeros(k, k);
    let f0 = f(z);
    let mut zp = z.clone();
    let steps: Vec<f64> = z.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    for i in 0..k {
        let hi = steps[i];
        zp[i] = z[i] + hi;
        let fp = f(&zp);
        zp[i] = z[i] - hi;
        let fm = f(&zp);
        zp[i] = z[i];
        g[i] = (fp - fm) / (2.0 * hi);
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut eval = |si: f64, sj: f64| {
                zp[i] = z[i] + si * hi;
                zp[j] = z[j] + sj * hj;
                let v = f(&zp);
                zp[i] = z[i];
                zp[j] = z[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    (g, h)
}
