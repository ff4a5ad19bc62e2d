//! The benchmark catalog.
//!
//! | name | n | m | p | tau | T |
//! |---|---|---|---|---|---|
//! | `cartpole`, `cartpole-discrete` | 4 | 1 | 7 | 10 | 3 s |
//! | `cartpole-constrained`, `cartpole-discrete-constrained` | 4 | 1 | 9 | 10 | 3 s |
//! | `robot-arm`, `robot-arm-discrete` | 4 | 2 | 8 | 10 | 3.5 s |
//! | `robot-arm-constrained`, `robot-arm-discrete-constrained` | 4 | 2 | 10 | 10 | 3.5 s |
//! | `lq-tracking-<j>`, `j = 1..=7` | j | j | 3j | 10 | 2 s |
//!
//! Continuous-time variants are transcribed with RK4 at `dt = 0.05` s and
//! charge `dt * l` per step. Discrete variants use one explicit Euler step of
//! `dt = 0.1` s and charge `l` per step. All parameters are scalar blocks on
//! bounded intervals except LQ tracking, whose three blocks are positive
//! definite `j x j` matrices. Measurements are the position components of the
//! state.

mod arm;
mod cartpole;
mod lq;

use std::sync::Arc;

use crate::ioc::{generate_demos, make_loss, DemoSet, IocError, IocLoss, MeasurementModel};
use crate::ocp::{Constraints, ContinuousDynamics, Cost, Dynamics, Matrix, StageQuad, Vector};
use crate::ocp::OcProblem;
use crate::optimizer::{StepSchedule, ZormsConfig};
use crate::paramspace::ParamSpace;
use crate::randmat::{rng_from_seed, sample_block, SymBlockMatrix};

pub use arm::robot_arm;
pub use cartpole::cartpole;
pub use lq::{lq_tracking, reference as lq_reference};

/// Step of the RK4 transcription used by the continuous-time benchmarks.
pub const CONTINUOUS_DT: f64 = 0.05;
/// Step of the Euler discretization used by the discrete-time benchmarks.
pub const DISCRETE_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDomain {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Unconstrained,
    /// Control bounds whose magnitudes are learned parameters.
    ControlBounded,
}

/// A benchmark: forward problem, feasible set, ground truth and defaults.
#[derive(Debug, Clone)]
pub struct BenchmarkDef {
    pub name: String,
    pub problem: OcProblem,
    pub space: ParamSpace,
    pub theta_star: SymBlockMatrix,
    /// Noise-free default model; [`BenchmarkDef::demos`] overrides the noise.
    pub model: MeasurementModel,
    pub zorms: ZormsConfig,
    pub variant: Variant,
    /// Horizon in seconds.
    pub duration: f64,
}

impl BenchmarkDef {
    /// Demonstrations generated at the ground truth with noise scale `noise`.
    pub fn demos(&self, noise: f64, seed: u64) -> Result<DemoSet, IocError> {
        let model = MeasurementModel { noise, ..self.model.clone() };
        generate_demos(&self.problem, &self.theta_star, &model, seed)
    }

    pub fn loss(&self, demos: &DemoSet) -> Result<IocLoss, IocError> {
        make_loss(&self.problem, demos)
    }

    /// `project(theta* + scale * M)` with `M` drawn from `seed`.
    pub fn perturbed_start(&self, scale: f64, seed: u64) -> SymBlockMatrix {
        let mut rng = rng_from_seed(seed);
        let m = sample_block(self.space.spec(), &mut rng);
        let raw = self.theta_star.axpy(scale, &m).expect("same spec");
        self.space.project(&raw).expect("finite input")
    }
}

/// Registered benchmark names.
pub fn names() -> Vec<String> {
    let mut out = Vec::new();
    for sys in ["cartpole", "robot-arm"] {
        for dom in ["", "-discrete"] {
            for var in ["", "-constrained"] {
                out.push(format!("{sys}{dom}{var}"));
            }
        }
    }
    out.extend((1..=7).map(|j| format!("lq-tracking-{j}")));
    out
}

/// Looks a benchmark up by name.
pub fn by_name(name: &str) -> Option<BenchmarkDef> {
    if let Some(j) = name.strip_prefix("lq-tracking-") {
        return j.parse().ok().filter(|j| (1..=7).contains(j)).map(lq_tracking);
    }
    let (rest, variant) = match name.strip_suffix("-constrained") {
        Some(r) => (r, Variant::ControlBounded),
        None => (name, Variant::Unconstrained),
    };
    let (sys, domain) = match rest.strip_suffix("-discrete") {
        Some(s) => (s, TimeDomain::Discrete),
        None => (rest, TimeDomain::Continuous),
    };
    match sys {
        "cartpole" => Some(cartpole(domain, variant)),
        "robot-arm" => Some(robot_arm(domain, variant)),
        _ => None,
    }
}

pub(crate) fn benchmark_zorms(mu: f64, alpha: f64) -> ZormsConfig {
    ZormsConfig { mu, step: StepSchedule::Constant(alpha), iterations: 100, ..Default::default() }
}

/// One explicit Euler step of a continuous rate.
pub(crate) struct Euler {
    pub rate: Arc<dyn ContinuousDynamics>,
    pub dt: f64,
}

impl Dynamics for Euler {
    fn step(&self, _t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> Vector {
        x + self.rate.rate(x, u, theta) * self.dt
    }
}

/// `sum_i w_i (x_i - goal_i)^2 + wu ||u||^2` with each `w_i` read from a
/// scalar block of theta. The terminal cost uses the same state weights.
pub(crate) struct GoalCost {
    /// Theta block holding the weight of each state component.
    pub weight_blocks: Vec<usize>,
    pub goal: Vector,
    pub control_weight: f64,
}

impl GoalCost {
    fn weights(&self, theta: &SymBlockMatrix) -> Vector {
        Vector::from_iterator(self.goal.len(), self.weight_blocks.iter().map(|&b| theta.scalar(b)))
    }
}

impl Cost for GoalCost {
    fn stage(&self, _t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> f64 {
        self.terminal(x, theta) + self.control_weight * u.norm_squared()
    }

    fn terminal(&self, x: &Vector, theta: &SymBlockMatrix) -> f64 {
        let w = self.weights(theta);
        (x - &self.goal).iter().zip(w.iter()).map(|(e, w)| w * e * e).sum()
    }

    fn stage_quadratic(&self, _t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> StageQuad {
        let (lx, lxx) = self.terminal_quadratic(x, theta);
        let m = u.len();
        StageQuad {
            lx,
            lu: u * (2.0 * self.control_weight),
            lxx,
            luu: Matrix::identity(m, m) * (2.0 * self.control_weight),
            lux: Matrix::zeros(m, x.len()),
        }
    }

    fn terminal_quadratic(&self, x: &Vector, theta: &SymBlockMatrix) -> (Vector, Matrix) {
        let w = self.weights(theta);
        let e = x - &self.goal;
        (e.component_mul(&w) * 2.0, Matrix::from_diagonal(&(w * 2.0)))
    }
}

/// `u_j <= b_j` and `-u_j <= b'_j`, bounds read from scalar blocks of theta.
pub(crate) struct ControlBounds {
    /// `(upper, lower)` theta block per control component.
    pub blocks: Vec<(usize, usize)>,
}

impl Constraints for ControlBounds {
    fn num_path(&self) -> usize {
        2 * self.blocks.len()
    }

    fn path(&self, _t: usize, _x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> Vector {
        let mut c = Vector::zeros(2 * self.blocks.len());
        for (j, &(hi, lo)) in self.blocks.iter().enumerate() {
            c[2 * j] = u[j] - theta.scalar(hi);
            c[2 * j + 1] = -u[j] - theta.scalar(lo);
        }
        c
    }

    fn path_jacobians(&self, _t: usize, x: &Vector, u: &Vector, _theta: &SymBlockMatrix) -> (Matrix, Matrix) {
        let q = self.num_path();
        let mut cu = Matrix::zeros(q, u.len());
        for j in 0..self.blocks.len() {
            cu[(2 * j, j)] = 1.0;
            cu[(2 * j + 1, j)] = -1.0;
        }
        (Matrix::zeros(q, x.len()), cu)
    }
}
