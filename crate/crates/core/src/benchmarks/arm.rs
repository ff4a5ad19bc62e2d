//! Planar two-link arm.
//!
//! State `(q1, q2, dq1, dq2)`: shoulder and elbow angles and rates; controls
//! are the two joint torques. Links are uniform rods (centre of mass at half
//! length, inertia `m l^2 / 12`) and gravity is off by default. Starting at
//! rest with both angles zero, the target is `q = (pi/2, 0)`.
//!
//! Parameters, one scalar block each: `l1, m1, l2, m2`, then the weights on
//! `q1, q2, dq1, dq2`. The control weight is fixed at 0.1. The bounded
//! variant adds one torque bound per joint (`|u_j| <= b_j`).

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use super::{benchmark_zorms, BenchmarkDef, ControlBounds, Euler, GoalCost, TimeDomain, Variant, CONTINUOUS_DT, DISCRETE_DT};
use crate::ioc::MeasurementModel;
use crate::ocp::{discretize, ContinuousDynamics, ContinuousProblem, Constraints, OcProblem, ThetaLayout, Vector};
use crate::paramspace::{ConeType, ParamSpace};
use crate::randmat::{BlockSpec, SymBlockMatrix};

pub const DURATION: f64 = 3.5;
pub const CONTROL_WEIGHT: f64 = 0.1;
/// `l1, m1, l2, m2`, then the `q1, q2, dq1, dq2` weights.
pub const THETA_STAR: [f64; 8] = [1.0, 1.0, 1.0, 1.0, 4.0, 2.0, 0.5, 0.5];
/// Torque bounds of the bounded variant.
pub const BOUNDS_STAR: [f64; 2] = [1.5, 1.5];

const PHYSICAL_RANGE: (f64, f64) = (0.1, 5.0);
const WEIGHT_RANGE: (f64, f64) = (0.01, 20.0);
const BOUND_RANGE: (f64, f64) = (0.2, 50.0);

/// Two-link arm; `gravity` along `-y` with the arm in the vertical plane.
pub struct TwoLink {
    pub gravity: f64,
}

impl ContinuousDynamics for TwoLink {
    fn rate(&self, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> Vector {
        let (l1, m1, l2, m2) = (theta.scalar(0), theta.scalar(1), theta.scalar(2), theta.scalar(3));
        let (lc1, lc2) = (0.5 * l1, 0.5 * l2);
        let (i1, i2) = (m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0);
        let (q1, q2, dq1, dq2) = (x[0], x[1], x[2], x[3]);
        let (s2, c2) = q2.sin_cos();
        let m11 = m1 * lc1 * lc1 + i1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2) + i2;
        let m12 = m2 * (lc2 * lc2 + l1 * lc2 * c2) + i2;
        let m22 = m2 * lc2 * lc2 + i2;
        let h = m2 * l1 * lc2 * s2;
        let coriolis = Vector2::new(-h * dq2 * (2.0 * dq1 + dq2), h * dq1 * dq1);
        let g = self.gravity;
        let grav = Vector2::new(
            g * ((m1 * lc1 + m2 * l1) * q1.cos() + m2 * lc2 * (q1 + q2).cos()),
            g * m2 * lc2 * (q1 + q2).cos(),
        );
        let mass = Matrix2::new(m11, m12, m12, m22);
        let rhs = Vector2::new(u[0], u[1]) - coriolis - grav;
        // The mass matrix is positive definite for positive masses and lengths.
        let acc = mass.try_inverse().map(|inv| inv * rhs).unwrap_or(Vector2::new(f64::NAN, f64::NAN));
        Vector::from_vec(vec![dq1, dq2, acc[0], acc[1]])
    }
}

pub fn robot_arm(domain: TimeDomain, variant: Variant) -> BenchmarkDef {
    let bounded = variant == Variant::ControlBounded;
    let mut names: Vec<String> =
        ["l1", "m1", "l2", "m2", "w_q1", "w_q2", "w_dq1", "w_dq2"].map(String::from).to_vec();
    let mut values = THETA_STAR.to_vec();
    let mut cones: Vec<ConeType> = (0..8)
        .map(|i| {
            let (lo, hi) = if i < 4 { PHYSICAL_RANGE } else { WEIGHT_RANGE };
            ConeType::interval(lo, hi)
        })
        .collect();
    if bounded {
        names.extend(["u1_bound", "u2_bound"].map(String::from));
        values.extend(BOUNDS_STAR);
        cones.extend(std::iter::repeat_n(ConeType::interval(BOUND_RANGE.0, BOUND_RANGE.1), 2));
    }
    let spec = BlockSpec::scalars(values.len()).expect("nonempty");
    let layout = ThetaLayout::new(spec.clone(), names).expect("one name per block");
    let cost = Arc::new(GoalCost {
        weight_blocks: vec![4, 5, 6, 7],
        goal: Vector::from_vec(vec![FRAC_PI_2, 0.0, 0.0, 0.0]),
        control_weight: CONTROL_WEIGHT,
    });
    let constraints: Option<Arc<dyn Constraints>> =
        bounded.then(|| Arc::new(ControlBounds { blocks: vec![(8, 8), (9, 9)] }) as Arc<dyn Constraints>);
    let rate = Arc::new(TwoLink { gravity: 0.0 });
    let x0 = Vector::zeros(4);

    let (problem, base, zorms) = match domain {
        TimeDomain::Continuous => {
            let cont = ContinuousProblem {
                duration: DURATION,
                x0,
                m: 2,
                dynamics: rate,
                cost,
                constraints,
                has_equality_constraints: false,
                nominal_control: Vector::zeros(2),
                layout,
            };
            (discretize(&cont, CONTINUOUS_DT).expect("3.5 s is a whole number of steps"), "robot-arm", benchmark_zorms(0.01, 0.03))
        }
        TimeDomain::Discrete => {
            let steps = (DURATION / DISCRETE_DT).round() as usize;
            let dynamics = Arc::new(Euler { rate, dt: DISCRETE_DT });
            let mut p = OcProblem::new(x0, 2, steps, dynamics, cost, layout).with_dt(DISCRETE_DT);
            p.constraints = constraints;
            (p, "robot-arm-discrete", benchmark_zorms(0.01, 0.03))
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
