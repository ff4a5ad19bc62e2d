//! Cart-pole swing-up.
//!
//! State `(x, q, dx, dq)`: cart position, pole angle (0 hanging down), and
//! their rates; control is the horizontal force on the cart. Starting at rest
//! hanging down, the target is the upright pole `q = pi` over the origin.
//!
//! Parameters, one scalar block each: cart mass, pole mass, pole length, then
//! the weights on `x, q, dx, dq` in the running and terminal costs. The
//! control weight is fixed at 0.1. The bounded variant adds an upper and a
//! lower force bound (`u <= b_hi`, `-u <= b_lo`).

use std::f64::consts::PI;
use std::sync::Arc;

use super::{benchmark_zorms, BenchmarkDef, ControlBounds, Euler, GoalCost, TimeDomain, Variant, CONTINUOUS_DT, DISCRETE_DT};
use crate::ioc::MeasurementModel;
use crate::ocp::{discretize, ContinuousDynamics, ContinuousProblem, Constraints, OcProblem, ThetaLayout, Vector};
use crate::paramspace::{ConeType, ParamSpace};
use crate::randmat::{BlockSpec, SymBlockMatrix};

pub const GRAVITY: f64 = 9.81;
pub const DURATION: f64 = 3.0;
pub const CONTROL_WEIGHT: f64 = 0.1;
/// Cart mass, pole mass, pole length, then the `x, q, dx, dq` weights.
pub const THETA_STAR: [f64; 7] = [0.5, 0.5, 1.0, 1.0, 6.0, 1.0, 1.0];
/// Upper and lower force bounds of the bounded variant.
pub const BOUNDS_STAR: [f64; 2] = [10.0, 10.0];

const PHYSICAL_RANGE: (f64, f64) = (0.1, 5.0);
const WEIGHT_RANGE: (f64, f64) = (0.01, 20.0);
const BOUND_RANGE: (f64, f64) = (0.5, 50.0);

struct CartPole;

impl ContinuousDynamics for CartPole {
    fn rate(&self, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> Vector {
        let (mc, mp, l) = (theta.scalar(0), theta.scalar(1), theta.scalar(2));
        let (q, dx, dq) = (x[1], x[2], x[3]);
        let (s, c) = q.sin_cos();
        let den = mc + mp * s * s;
        let ddx = (u[0] + mp * s * (l * dq * dq + GRAVITY * c)) / den;
        let ddq = (-u[0] * c - mp * l * dq * dq * c * s - (mc + mp) * GRAVITY * s) / (l * den);
        Vector::from_vec(vec![dx, dq, ddx, ddq])
    }
}

pub fn cartpole(domain: TimeDomain, variant: Variant) -> BenchmarkDef {
    let bounded = variant == Variant::ControlBounded;
    let mut names: Vec<String> =
        ["cart_mass", "pole_mass", "pole_length", "w_x", "w_angle", "w_dx", "w_dangle"].map(String::from).to_vec();
    let mut values = THETA_STAR.to_vec();
    let mut cones: Vec<ConeType> = (0..7)
        .map(|i| {
            let (lo, hi) = if i < 3 { PHYSICAL_RANGE } else { WEIGHT_RANGE };
            ConeType::interval(lo, hi)
        })
        .collect();
    if bounded {
        names.extend(["u_upper", "u_lower"].map(String::from));
        values.extend(BOUNDS_STAR);
        cones.extend(std::iter::repeat_n(ConeType::interval(BOUND_RANGE.0, BOUND_RANGE.1), 2));
    }
    let spec = BlockSpec::scalars(values.len()).expect("nonempty");
    let layout = ThetaLayout::new(spec.clone(), names).expect("one name per block");
    let cost = Arc::new(GoalCost {
        weight_blocks: vec![3, 4, 5, 6],
        goal: Vector::from_vec(vec![0.0, PI, 0.0, 0.0]),
        control_weight: CONTROL_WEIGHT,
    });
    let constraints: Option<Arc<dyn Constraints>> =
        bounded.then(|| Arc::new(ControlBounds { blocks: vec![(7, 8)] }) as Arc<dyn Constraints>);
    let x0 = Vector::zeros(4);

    let (problem, base, zorms) = match domain {
        TimeDomain::Continuous => {
            let cont = ContinuousProblem {
                duration: DURATION,
                x0,
                m: 1,
                dynamics: Arc::new(CartPole),
                cost,
                constraints,
                has_equality_constraints: false,
                nominal_control: Vector::zeros(1),
                layout,
            };
            (discretize(&cont, CONTINUOUS_DT).expect("3 s is a whole number of steps"), "cartpole", benchmark_zorms(if bounded { 0.05 } else { 0.01 }, 0.003))
        }
        TimeDomain::Discrete => {
            let steps = (DURATION / DISCRETE_DT).round() as usize;
            let dynamics = Arc::new(Euler { rate: Arc::new(CartPole), dt: DISCRETE_DT });
            let mut p = OcProblem::new(x0, 1, steps, dynamics, cost, layout).with_dt(DISCRETE_DT);
            p.constraints = constraints;
            (p, "cartpole-discrete", benchmark_zorms(0.01, if bounded { 0.003 } else { 0.01 }))
        }
    };
    BenchmarkDef {
        name: if bounded { format!("{base}-constrained") } else { base.to_string() },
        problem,
        space: ParamSpace::new(spec, cones).expect("valid intervals"),
        theta_star: SymBlockMatrix::from_scalars(&values).expect("nonempty"),
        model: MeasurementModel::positions(2, 10, DURATION, 0.0),
        zorms,
        variant,
        duration: DURATION,
    }
}
