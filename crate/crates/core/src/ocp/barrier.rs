use std::sync::Arc;

use super::ilqr::{ilqr, Objective, SolverConfig};
use super::{Constraints, Matrix, OcProblem, SolveError, StageQuad, Trajectory, Vector};
use crate::randmat::SymBlockMatrix;

/// Log-barrier continuation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierConfig {
    pub sigma_init: f64,
    pub sigma_min: f64,
    /// Multiplier applied to sigma between stages.
    pub factor: f64,
    /// Settings for unconstrained problems and the final stage.
    pub solver: SolverConfig,
    /// Replaces `solver.stationarity_tol` in the final stage.
    pub final_stationarity: f64,
    /// Settings for the earlier stages, which only need to warm-start the next.
    pub intermediate: SolverConfig,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            sigma_init: 1.0,
            sigma_min: 1e-4,
            factor: 0.2,
            solver: SolverConfig::default(),
            // Barrier terms near active bounds limit attainable stationarity to
            // about 1e-5, so the final stage asks for less than plain iLQR.
            final_stationarity: 1e-4,
            intermediate: SolverConfig { rel_tol: 1e-6, stationarity_tol: f64::INFINITY, grad_tol: 1e-6, ..SolverConfig::default() },
        }
    }
}

impl BarrierConfig {
    /// `sigma_init, sigma_init * factor, ...` down to `sigma_min`, which is
    /// always the last value.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut s = self.sigma_init;
        while s > self.sigma_min * (1.0 + 1e-12) {
            out.push(s);
            s *= self.factor;
        }
        out.push(self.sigma_min);
        out
    }
}

struct BarrierObjective<'a> {
    prob: &'a OcProblem,
    theta: &'a SymBlockMatrix,
    constraints: &'a Arc<dyn Constraints>,
    sigma: f64,
}

fn log_barrier(sigma: f64, c: &Vector) -> f64 {
    if c.iter().any(|&v| !(v < 0.0)) {
        return f64::INFINITY;
    }
    -sigma * c.iter().map(|v| (-v).ln()).sum::<f64>()
}

/// Gradient and Gauss-Newton Hessian of `-sigma sum log(-c)` given `dc/dz`.
fn barrier_derivs(sigma: f64, c: &Vector, jac: &Matrix) -> (Vector, Matrix) {
    let inv: Vector = c.map(|v| 1.0 / v);
    let grad = -sigma * jac.tr_mul(&inv);
    let scaled = Matrix::from_fn(jac.nrows(), jac.ncols(), |i, j| jac[(i, j)] * inv[i]);
    let hess = sigma * scaled.tr_mul(&scaled);
    (grad, hess)
}

impl Objective for BarrierObjective<'_> {
    fn stage(&self, t: usize, x: &Vector, u: &Vector) -> f64 {
        let c = self.constraints.path(t, x, u, self.theta);
        self.prob.cost.stage(t, x, u, self.theta) + log_barrier(self.sigma, &c)
    }

    fn terminal(&self, x: &Vector) -> f64 {
        let c = self.constraints.terminal(x, self.theta);
        self.prob.cost.terminal(x, self.theta) + log_barrier(self.sigma, &c)
    }

    fn stage_quad(&self, t: usize, x: &Vector, u: &Vector) -> StageQuad {
        let mut q = self.prob.cost.stage_quadratic(t, x, u, self.theta);
        if self.constraints.num_path() == 0 {
            return q;
        }
        let c = self.constraints.path(t, x, u, self.theta);
        let (cx, cu) = self.constraints.path_jacobians(t, x, u, self.theta);
        let n = x.len();
        let mut jac = Matrix::zeros(c.len(), n + u.len());
        jac.view_mut((0, 0), (c.len(), n)).copy_from(&cx);
        jac.view_mut((0, n), (c.len(), u.len())).copy_from(&cu);
        let (g, h) = barrier_derivs(self.sigma, &c, &jac);
        let m = u.len();
        q.lx += g.rows(0, n);
        q.lu += g.rows(n, m);
        q.lxx += h.view((0, 0), (n, n));
        q.luu += h.view((n, n), (m, m));
        q.lux += h.view((n, 0), (m, n));
        q
    }

    fn terminal_quad(&self, x: &Vector) -> (Vector, Matrix) {
        let (mut g, mut h) = self.prob.cost.terminal_quadratic(x, self.theta);
        if self.constraints.num_terminal() > 0 {
            let c = self.constraints.terminal(x, self.theta);
            let jac = self.constraints.terminal_jacobian(x, self.theta);
            let (bg, bh) = barrier_derivs(self.sigma, &c, &jac);
            g += bg;
            h += bh;
        }
        (g, h)
    }
}

/// Inequality-constrained solve: a sequence of iLQR problems with cost
/// `l - sigma sum log(-c)`, each warm-started from the previous stage.
///
/// The nominal controls must give a strictly feasible rollout.
pub fn solve_barrier(prob: &OcProblem, theta: &SymBlockMatrix, cfg: &BarrierConfig) -> Result<Trajectory, SolveError> {
    prob.check(theta)?;
    let constraints = prob.constraints.as_ref().ok_or(SolveError::NoConstraints)?;
    let mut us = prob.nominal_controls.clone();
    let xs = prob.rollout(&us, theta)?;
    let worst = prob.max_constraint(&xs, &us, theta);
    if !(worst < 0.0) {
        return Err(SolveError::InfeasibleStart { max_violation: worst });
    }
    let mut last = None;
    let mut iterations = 0;
    let schedule = cfg.schedule();
    let final_cfg = SolverConfig { stationarity_tol: cfg.final_stationarity, ..cfg.solver.clone() };
    for (i, &sigma) in schedule.iter().enumerate() {
        let obj = BarrierObjective { prob, theta, constraints, sigma };
        let stage_cfg = if i + 1 == schedule.len() { &final_cfg } else { &cfg.intermediate };
        let out = ilqr(prob, theta, &obj, us, stage_cfg)?;
        iterations += out.iterations;
        us = out.us.clone();
        last = Some(out);
    }
    let mut out = last.expect("barrier schedule is never empty");
    out.iterations = iterations;
    Ok(out.into_trajectory(prob, theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_ends_at_minimum() {
        let s = BarrierConfig::default().schedule();
        assert_eq!(s.first(), Some(&1.0));
        assert_eq!(s.last(), Some(&1e-4));
        assert!(s.windows(2).all(|w| w[1] < w[0]));
        let one = BarrierConfig { sigma_min: 1.0, ..Default::default() }.schedule();
        assert_eq!(one, vec![1.0]);
    }

    #[test]
    fn barrier_is_infinite_outside_domain() {
        assert_eq!(log_barrier(1.0, &Vector::from_vec(vec![-1.0, 0.0])), f64::INFINITY);
        assert!((log_barrier(2.0, &Vector::from_vec(vec![-1.0, -std::f64::consts::E])) + 2.0).abs() < 1e-12);
    }
}
