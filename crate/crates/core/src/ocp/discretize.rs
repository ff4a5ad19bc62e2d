use std::sync::Arc;

use super::{Constraints, Cost, Dynamics, Matrix, OcProblem, SolveError, StageQuad, ThetaLayout, Vector};
use crate::randmat::SymBlockMatrix;

/// Continuous-time dynamics `dx/dt = f(x, u; theta)`.
pub trait ContinuousDynamics: Send + Sync {
    fn rate(&self, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> Vector;
}

/// A continuous-time problem over `[0, duration]`.
///
/// `cost.stage` is the running-cost density; its `t` argument receives the
/// grid node index after transcription.
#[derive(Clone)]
pub struct ContinuousProblem {
    pub duration: f64,
    pub x0: Vector,
    pub m: usize,
    pub dynamics: Arc<dyn ContinuousDynamics>,
    pub cost: Arc<dyn Cost>,
    pub constraints: Option<Arc<dyn Constraints>>,
    pub has_equality_constraints: bool,
    /// Constant nominal control used at every grid node.
    pub nominal_control: Vector,
    pub layout: ThetaLayout,
}

/// One classical RK4 step with the control held over the interval.
struct Rk4 {
    rate: Arc<dyn ContinuousDynamics>,
    dt: f64,
}

impl Dynamics for Rk4 {
    fn step(&self, _t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> Vector {
        let h = self.dt;
        let k1 = self.rate.rate(x, u, theta);
        let k2 = self.rate.rate(&(x + &k1 * (0.5 * h)), u, theta);
        let k3 = self.rate.rate(&(x + &k2 * (0.5 * h)), u, theta);
        let k4 = self.rate.rate(&(x + &k3 * h), u, theta);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }
}

/// Running cost integrated with the rectangle rule: `dt * l`.
struct ScaledCost {
    inner: Arc<dyn Cost>,
    dt: f64,
}

impl Cost for ScaledCost {
    fn stage(&self, t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> f64 {
        self.dt * self.inner.stage(t, x, u, theta)
    }

    fn terminal(&self, x: &Vector, theta: &SymBlockMatrix) -> f64 {
        self.inner.terminal(x, theta)
    }

    fn stage_quadratic(&self, t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> StageQuad {
        let q = self.inner.stage_quadratic(t, x, u, theta);
        StageQuad { lx: q.lx * self.dt, lu: q.lu * self.dt, lxx: q.lxx * self.dt, luu: q.luu * self.dt, lux: q.lux * self.dt }
    }

    fn terminal_quadratic(&self, x: &Vector, theta: &SymBlockMatrix) -> (Vector, Matrix) {
        self.inner.terminal_quadratic(x, theta)
    }
}

/// Transcribes a continuous-time problem onto a uniform grid of step `dt`.
///
/// `duration / dt` must be an integer to within `1e-9`.
pub fn discretize(prob: &ContinuousProblem, dt: f64) -> Result<OcProblem, SolveError> {
    if !(dt > 0.0) {
        return Err(SolveError::Discretization(format!("dt = {dt} must be positive")));
    }
    let ratio = prob.duration / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 || steps < 1.0 {
        return Err(SolveError::Discretization(format!(
            "horizon {} s is not a whole number of {dt} s steps",
            prob.duration
        )));
    }
    let horizon = steps as usize;
    Ok(OcProblem {
        n: prob.x0.len(),
        m: prob.m,
        horizon,
        dt,
        x0: prob.x0.clone(),
        dynamics: Arc::new(Rk4 { rate: prob.dynamics.clone(), dt }),
        cost: Arc::new(ScaledCost { inner: prob.cost.clone(), dt }),
        constraints: prob.constraints.clone(),
        has_equality_constraints: prob.has_equality_constraints,
        nominal_controls: vec![prob.nominal_control.clone(); horizon],
        layout: prob.layout.clone(),
    })
}

/// Grid node nearest to time `t`, rounding halves up.
pub fn time_to_index(t: f64, dt: f64) -> usize {
    // The small relative nudge keeps exact halves from rounding down after
    // the division loses a bit.
    let r = t / dt;
    (r + 0.5 + 1e-9 * r.abs().max(1.0)).floor().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_up_rounding() {
        assert_eq!(time_to_index(0.0, 0.05), 0);
        assert_eq!(time_to_index(0.3, 0.05), 6);
        assert_eq!(time_to_index(0.325, 0.05), 7);
        assert_eq!(time_to_index(0.324, 0.05), 6);
        assert_eq!(time_to_index(3.0, 0.1), 30);
        assert_eq!(time_to_index(2.5, 1.0), 3);
    }
}
