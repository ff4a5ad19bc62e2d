use nalgebra::Cholesky;

use super::{Matrix, OcProblem, SolveError, StageQuad, Trajectory, Vector};
use crate::randmat::SymBlockMatrix;

/// iLQR settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when an accepted step lowers the objective by less than this
    /// fraction and the gradient is within `stationarity_tol`.
    pub rel_tol: f64,
    pub stationarity_tol: f64,
    /// Stop when `max_t ||dJ/du_t||_inf` falls below this.
    pub grad_tol: f64,
    pub reg_init: f64,
    pub reg_factor: f64,
    pub reg_max: f64,
    pub line_search_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-9,
            stationarity_tol: 1e-6,
            grad_tol: 1e-8,
            reg_init: 1e-6,
            reg_factor: 10.0,
            reg_max: 1e6,
            line_search_steps: 12,
        }
    }
}

/// The objective iLQR minimizes. Values may be `+inf` (e.g. outside a barrier's domain).
pub(crate) trait Objective: Sync {
    fn stage(&self, t: usize, x: &Vector, u: &Vector) -> f64;
    fn terminal(&self, x: &Vector) -> f64;
    fn stage_quad(&self, t: usize, x: &Vector, u: &Vector) -> StageQuad;
    fn terminal_quad(&self, x: &Vector) -> (Vector, Matrix);
}

pub(crate) struct PlainObjective<'a> {
    pub prob: &'a OcProblem,
    pub theta: &'a SymBlockMatrix,
}

impl Objective for PlainObjective<'_> {
    fn stage(&self, t: usize, x: &Vector, u: &Vector) -> f64 {
        self.prob.cost.stage(t, x, u, self.theta)
    }
    fn terminal(&self, x: &Vector) -> f64 {
        self.prob.cost.terminal(x, self.theta)
    }
    fn stage_quad(&self, t: usize, x: &Vector, u: &Vector) -> StageQuad {
        self.prob.cost.stage_quadratic(t, x, u, self.theta)
    }
    fn terminal_quad(&self, x: &Vector) -> (Vector, Matrix) {
        self.prob.cost.terminal_quadratic(x, self.theta)
    }
}

/// Unconstrained iLQR from the problem's nominal controls with default settings.
pub fn solve_unconstrained(prob: &OcProblem, theta: &SymBlockMatrix) -> Result<Trajectory, SolveError> {
    solve_unconstrained_with(prob, theta, &SolverConfig::default(), None)
}

/// Unconstrained iLQR. `init` overrides the nominal controls.
///
/// Reaching `max_iters` is not an error: the trajectory is returned with
/// `converged == false`.
pub fn solve_unconstrained_with(
    prob: &OcProblem,
    theta: &SymBlockMatrix,
    cfg: &SolverConfig,
    init: Option<Vec<Vector>>,
) -> Result<Trajectory, SolveError> {
    prob.check(theta)?;
    if prob.constraints.is_some() {
        return Err(SolveError::ConstraintsPresent);
    }
    let us = init.unwrap_or_else(|| prob.nominal_controls.clone());
    let obj = PlainObjective { prob, theta };
    let out = ilqr(prob, theta, &obj, us, cfg)?;
    Ok(out.into_trajectory(prob, theta))
}

pub(crate) struct IlqrOutput {
    pub xs: Vec<Vector>,
    pub us: Vec<Vector>,
    pub iterations: usize,
    pub final_step: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

impl IlqrOutput {
    pub(crate) fn into_trajectory(self, prob: &OcProblem, theta: &SymBlockMatrix) -> Trajectory {
        let objective = prob.objective(&self.xs, &self.us, theta);
        Trajectory {
            times: (0..self.xs.len()).map(|t| t as f64 * prob.dt).collect(),
            states: self.xs,
            controls: self.us,
            objective,
            iterations: self.iterations,
            final_step_norm: self.final_step,
            grad_norm: self.grad_norm,
            converged: self.converged,
        }
    }
}

struct Linearization {
    a: Vec<Matrix>,
    b: Vec<Matrix>,
    quads: Vec<StageQuad>,
    hx: Vector,
    hxx: Matrix,
}

fn linearize(prob: &OcProblem, theta: &SymBlockMatrix, obj: &dyn Objective, xs: &[Vector], us: &[Vector]) -> Linearization {
    let mut a = Vec::with_capacity(us.len());
    let mut b = Vec::with_capacity(us.len());
    let mut quads = Vec::with_capacity(us.len());
    for (t, u) in us.iter().enumerate() {
        let (fx, fu) = prob.dynamics.jacobians(t, &xs[t], u, theta);
        a.push(fx);
        b.push(fu);
        quads.push(obj.stage_quad(t, &xs[t], u));
    }
    let (hx, hxx) = obj.terminal_quad(&xs[us.len()]);
    Linearization { a, b, quads, hx, hxx }
}

/// `max_t ||dJ/du_t||_inf` via the adjoint recursion.
fn adjoint_gradient(lin: &Linearization) -> f64 {
    let mut lambda = lin.hx.clone();
    let mut worst: f64 = 0.0;
    for t in (0..lin.a.len()).rev() {
        let q = &lin.quads[t];
        let g = &q.lu + lin.b[t].tr_mul(&lambda);
        worst = worst.max(g.amax());
        lambda = &q.lx + lin.a[t].tr_mul(&lambda);
    }
    worst
}

struct Policy {
    k: Vec<Vector>,
    gains: Vec<Matrix>,
    /// `sum k' Q_u` and `1/2 sum k' Q_uu k`.
    dv: (f64, f64),
}

fn backward_pass(lin: &Linearization, reg: f64) -> Option<Policy> {
    let steps = lin.a.len();
    let mut vx = lin.hx.clone();
    let mut vxx = lin.hxx.clone();
    let mut k = vec![Vector::zeros(0); steps];
    let mut gains = vec![Matrix::zeros(0, 0); steps];
    let mut dv = (0.0, 0.0);
    for t in (0..steps).rev() {
        let (a, b, q) = (&lin.a[t], &lin.b[t], &lin.quads[t]);
        let vxx_a = &vxx * a;
        let vxx_b = &vxx * b;
        let qx = &q.lx + a.tr_mul(&vx);
        let qu = &q.lu + b.tr_mul(&vx);
        let qxx = &q.lxx + a.tr_mul(&vxx_a);
        let quu = &q.luu + b.tr_mul(&vxx_b);
        let qux = &q.lux + b.tr_mul(&vxx_a);
        let m = quu.nrows();
        let mut quu_reg = &quu + Matrix::identity(m, m) * reg;
        quu_reg = 0.5 * (&quu_reg + quu_reg.transpose());
        let chol = Cholesky::new(quu_reg)?;
        let kt = -chol.solve(&qu);
        let kk = -chol.solve(&qux);
        dv.0 += kt.dot(&qu);
        dv.1 += 0.5 * kt.dot(&(&quu * &kt));
        vx = &qx + kk.tr_mul(&(&quu * &kt)) + kk.tr_mul(&qu) + qux.tr_mul(&kt);
        let cross = kk.tr_mul(&qux);
        vxx = &qxx + kk.tr_mul(&(&quu * &kk)) + &cross + cross.transpose();
        vxx = 0.5 * (&vxx + vxx.transpose());
        k[t] = kt;
        gains[t] = kk;
    }
    Some(Policy { k, gains, dv })
}

fn forward_pass(
    prob: &OcProblem,
    theta: &SymBlockMatrix,
    obj: &dyn Objective,
    xs: &[Vector],
    us: &[Vector],
    policy: &Policy,
    step: f64,
) -> Option<(Vec<Vector>, Vec<Vector>, f64)> {
    let mut nx = Vec::with_capacity(xs.len());
    let mut nu = Vec::with_capacity(us.len());
    let mut x = prob.x0.clone();
    let mut cost = 0.0;
    for t in 0..us.len() {
        let u = &us[t] + &policy.k[t] * step + &policy.gains[t] * (&x - &xs[t]);
        cost += obj.stage(t, &x, &u);
        if !cost.is_finite() {
            return None;
        }
        let next = prob.dynamics.step(t, &x, &u, theta);
        if !next.iter().all(|v| v.is_finite()) {
            return None;
        }
        nx.push(x);
        nu.push(u);
        x = next;
    }
    cost += obj.terminal(&x);
    nx.push(x);
    cost.is_finite().then_some((nx, nu, cost))
}

pub(crate) fn total_cost(obj: &dyn Objective, xs: &[Vector], us: &[Vector]) -> f64 {
    let stage: f64 = us.iter().enumerate().map(|(t, u)| obj.stage(t, &xs[t], u)).sum();
    stage + obj.terminal(&xs[us.len()])
}

pub(crate) fn ilqr(
    prob: &OcProblem,
    theta: &SymBlockMatrix,
    obj: &dyn Objective,
    mut us: Vec<Vector>,
    cfg: &SolverConfig,
) -> Result<IlqrOutput, SolveError> {
    let mut xs = prob.rollout(&us, theta)?;
    let mut cost = total_cost(obj, &xs, &us);
    if !cost.is_finite() {
        return Err(SolveError::NonFiniteCost);
    }
    let mut reg = cfg.reg_init;
    let mut iterations = 0;
    let mut final_step = 0.0;
    let mut converged = false;
    let mut lin = linearize(prob, theta, obj, &xs, &us);
    let mut grad = adjoint_gradient(&lin);

    while iterations < cfg.max_iters {
        if grad <= cfg.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let policy = loop {
            match backward_pass(&lin, reg) {
                Some(p) => break p,
                None => {
                    reg *= cfg.reg_factor;
                    if reg > cfg.reg_max {
                        return Err(SolveError::IndefiniteCostNotRegularizable { reg });
                    }
                }
            }
        };

        let mut accepted = None;
        let mut step = 1.0;
        for _ in 0..cfg.line_search_steps {
            if let Some((nx, nu, ncost)) = forward_pass(prob, theta, obj, &xs, &us, &policy, step) {
                let expected = -(step * policy.dv.0 + step * step * policy.dv.1);
                let actual = cost - ncost;
                if actual > 0.0 && actual >= 1e-4 * expected {
                    accepted = Some((nx, nu, ncost, step));
                    break;
                }
            }
            step *= 0.5;
        }

        match accepted {
            Some((nx, nu, ncost, step)) => {
                let rel = (cost - ncost) / cost.abs().max(1e-300);
                final_step = policy.k.iter().map(|k| k.amax()).fold(0.0, f64::max) * step;
                xs = nx;
                us = nu;
                cost = ncost;
                reg = (reg / cfg.reg_factor).max(cfg.reg_init);
                lin = linearize(prob, theta, obj, &xs, &us);
                grad = adjoint_gradient(&lin);
                if rel < cfg.rel_tol && grad <= cfg.stationarity_tol {
                    converged = true;
                    break;
                }
            }
            None => {
                reg *= cfg.reg_factor;
                if reg > cfg.reg_max {
                    break;
                }
            }
        }
    }
    if grad <= cfg.grad_tol {
        converged = true;
    }
    Ok(IlqrOutput { xs, us, iterations, final_step, grad_norm: grad, converged })
}

/// `max_t ||dJ/du_t||_inf` of the problem objective at a trajectory.
pub fn control_gradient(prob: &OcProblem, theta: &SymBlockMatrix, traj: &Trajectory) -> f64 {
    let obj = PlainObjective { prob, theta };
    adjoint_gradient(&linearize(prob, theta, &obj, &traj.states, &traj.controls))
}
