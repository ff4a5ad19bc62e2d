//! Joint-space linear-quadratic tracking.
//!
//! `j` joints driven by velocity commands, `x_{t+1} = x_t + dt u_t`, track a
//! sinusoidal reference `r_t`. The cost is
//! `sum_t (x_t - r_t)' Q (x_t - r_t) + u_t' R u_t + (x_T - r_T)' Q_T (x_T - r_T)`
//! and theta holds `Q, R, Q_T` as three positive definite `j x j` blocks, so
//! seven joints give a 21-dimensional parameter. All joint angles are measured.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{benchmark_zorms, BenchmarkDef, Variant, DISCRETE_DT};
use crate::ioc::MeasurementModel;
use crate::ocp::{Cost, Dynamics, Matrix, OcProblem, StageQuad, ThetaLayout, Vector};
use crate::paramspace::{ConeType, ParamSpace};
use crate::randmat::{BlockSpec, SymBlockMatrix};

pub const DURATION: f64 = 2.0;
/// Smallest eigenvalue allowed in each block. Keeping the weights away from
/// singular leaves room for unprojected probes to stay definite.
pub const EIGEN_FLOOR: f64 = 0.1;

/// Reference angle of joint `i` at time `t` seconds.
pub fn reference(i: usize, t: f64) -> f64 {
    0.5 * ((1.0 + 0.3 * i as f64) * t + 0.7 * i as f64).sin()
}

/// Ground-truth blocks: tridiagonal `Q` (10 on the diagonal, 2 beside it),
/// `R = I`, `Q_T = 5 I`.
pub fn theta_star(j: usize) -> SymBlockMatrix {
    let q = DMatrix::from_fn(j, j, |a, b| match a.abs_diff(b) {
        0 => 10.0,
        1 => 2.0,
        _ => 0.0,
    });
    let spec = BlockSpec::new(vec![j; 3]).expect("j >= 1");
    SymBlockMatrix::new(spec, vec![q, DMatrix::identity(j, j), DMatrix::identity(j, j) * 5.0]).expect("symmetric")
}

pub(crate) struct Integrator {
    pub dt: f64,
}

impl Dynamics for Integrator {
    fn step(&self, _t: usize, x: &Vector, u: &Vector, _theta: &SymBlockMatrix) -> Vector {
        x + u * self.dt
    }

    fn jacobians(&self, _t: usize, x: &Vector, u: &Vector, _theta: &SymBlockMatrix) -> (Matrix, Matrix) {
        (Matrix::identity(x.len(), x.len()), Matrix::identity(x.len(), u.len()) * self.dt)
    }
}

pub(crate) struct Tracking {
    /// `r_0 .. r_T`.
    pub reference: Vec<Vector>,
}

impl Cost for Tracking {
    fn stage(&self, t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> f64 {
        let e = x - &self.reference[t];
        e.dot(&(theta.block(0) * &e)) + u.dot(&(theta.block(1) * u))
    }

    fn terminal(&self, x: &Vector, theta: &SymBlockMatrix) -> f64 {
        let e = x - self.reference.last().expect("nonempty");
        e.dot(&(theta.block(2) * &e))
    }

    fn stage_quadratic(&self, t: usize, x: &Vector, u: &Vector, theta: &SymBlockMatrix) -> StageQuad {
        let e = x - &self.reference[t];
        let (q, r) = (theta.block(0), theta.block(1));
        StageQuad { lx: q * e * 2.0, lu: r * u * 2.0, lxx: q * 2.0, luu: r * 2.0, lux: Matrix::zeros(u.len(), x.len()) }
    }

    fn terminal_quadratic(&self, x: &Vector, theta: &SymBlockMatrix) -> (Vector, Matrix) {
        let e = x - self.reference.last().expect("nonempty");
        (theta.block(2) * e * 2.0, theta.block(2) * 2.0)
    }
}

/// # Panics
/// If `joints` is not in `1..=7`.
pub fn lq_tracking(joints: usize) -> BenchmarkDef {
    assert!((1..=7).contains(&joints), "lq tracking supports 1 to 7 joints, got {joints}");
    let steps = (DURATION / DISCRETE_DT).round() as usize;
    let refs: Vec<Vector> =
        (0..=steps).map(|t| Vector::from_fn(joints, |i, _| reference(i, t as f64 * DISCRETE_DT))).collect();
    let theta = theta_star(joints);
    let spec = theta.spec().clone();
    let layout = ThetaLayout::new(spec.clone(), ["state_weight", "control_weight", "terminal_weight"].map(String::from).to_vec())
        .expect("three blocks");
    let problem = OcProblem::new(
        refs[0].clone(),
        joints,
        steps,
        Arc::new(Integrator { dt: DISCRETE_DT }),
        Arc::new(Tracking { reference: refs }),
        layout,
    )
    .with_dt(DISCRETE_DT);
    BenchmarkDef {
        name: format!("lq-tracking-{joints}"),
        problem,
        space: ParamSpace::uniform(spec, ConeType::PD { eps_pd: EIGEN_FLOOR }).expect("valid cone"),
        theta_star: theta,
        model: MeasurementModel::positions(joints, 10, DURATION, 0.0),
        // Larger systems need shorter steps to stay clear of the eigenvalue floor.
        zorms: benchmark_zorms(0.01, match joints {
            1..=3 => 3.0,
            4 => 1.0,
            _ => 0.5,
        }),
        variant: Variant::Unconstrained,
        duration: DURATION,
    }
}
