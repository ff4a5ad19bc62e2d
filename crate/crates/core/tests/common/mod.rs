//! LQR instances with independent oracles: the Riccati recursion, the
//! condensed quadratic form, and exhaustive active-set enumeration.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use zorms_core::ocp::{Constraints, Cost, Dynamics, Matrix, OcProblem, StageQuad, ThetaLayout, Vector};
use zorms_core::{BlockSpec, SymBlockMatrix};

pub struct Linear {
    pub a: Matrix,
    pub b: Matrix,
}

impl Dynamics for Linear {
    fn step(&self, _t: usize, x: &Vector, u: &Vector, _th: &SymBlockMatrix) -> Vector {
        &self.a * x + &self.b * u
    }
    fn jacobians(&self, _t: usize, _x: &Vector, _u: &Vector, _th: &SymBlockMatrix) -> (Matrix, Matrix) {
        (self.a.clone(), self.b.clone())
    }
}

/// `theta * (x'Qx + u'Ru)/2` per stage and `theta * x'Px/2` at the end.
pub struct Quadratic {
    pub q: Matrix,
    pub r: Matrix,
    pub p: Matrix,
}

impl Cost for Quadratic {
    fn stage(&self, _t: usize, x: &Vector, u: &Vector, th: &SymBlockMatrix) -> f64 {
        0.5 * th.scalar(0) * (x.dot(&(&self.q * x)) + u.dot(&(&self.r * u)))
    }
    fn terminal(&self, x: &Vector, th: &SymBlockMatrix) -> f64 {
        0.5 * th.scalar(0) * x.dot(&(&self.p * x))
    }
    fn stage_quadratic(&self, _t: usize, x: &Vector, u: &Vector, th: &SymBlockMatrix) -> StageQuad {
        let w = th.scalar(0);
        StageQuad {
            lx: &self.q * x * w,
            lu: &self.r * u * w,
            lxx: &self.q * w,
            luu: &self.r * w,
            lux: Matrix::zeros(u.len(), x.len()),
        }
    }
    fn terminal_quadratic(&self, x: &Vector, th: &SymBlockMatrix) -> (Vector, Matrix) {
        (&self.p * x * th.scalar(0), &self.p * th.scalar(0))
    }
}

pub struct ControlBox {
    pub umax: f64,
    pub m: usize,
}

impl Constraints for ControlBox {
    fn num_path(&self) -> usize {
        2 * self.m
    }
    fn path(&self, _t: usize, _x: &Vector, u: &Vector, _th: &SymBlockMatrix) -> Vector {
        let mut c = Vector::zeros(2 * self.m);
        for j in 0..self.m {
            c[2 * j] = u[j] - self.umax;
            c[2 * j + 1] = -u[j] - self.umax;
        }
        c
    }
}

pub fn scalar_layout() -> ThetaLayout {
    ThetaLayout::new(BlockSpec::scalars(1).unwrap(), vec!["scale".into()]).unwrap()
}

pub fn one() -> SymBlockMatrix {
    SymBlockMatrix::from_scalars(&[1.0]).unwrap()
}

pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + Matrix::identity(n, n) * floor
}

pub struct Lqr {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub p: Matrix,
    pub x0: Vector,
    pub horizon: usize,
}

impl Lqr {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, m: usize, horizon: usize) -> Self {
        Self {
            a: Matrix::identity(n, n) + Matrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3)),
            b: Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)),
            q: random_pd(rng, n, 0.1),
            r: random_pd(rng, m, 0.1),
            p: random_pd(rng, n, 0.1),
            x0: Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
            horizon,
        }
    }

    pub fn problem(&self) -> OcProblem {
        OcProblem::new(
            self.x0.clone(),
            self.b.ncols(),
            self.horizon,
            Arc::new(Linear { a: self.a.clone(), b: self.b.clone() }),
            Arc::new(Quadratic { q: self.q.clone(), r: self.r.clone(), p: self.p.clone() }),
            scalar_layout(),
        )
    }

    /// Backward Riccati recursion, then the closed-loop rollout.
    pub fn riccati_states(&self) -> Vec<Vector> {
        let mut s = self.p.clone();
        let mut gains = Vec::new();
        for _ in 0..self.horizon {
            let k = (&self.r + self.b.transpose() * &s * &self.b).lu().solve(&(self.b.transpose() * &s * &self.a)).unwrap();
            let acl = &self.a - &self.b * &k;
            s = &self.q + self.a.transpose() * &s * &acl;
            s = 0.5 * (&s + s.transpose());
            gains.push(k);
        }
        gains.reverse();
        let mut xs = vec![self.x0.clone()];
        for k in &gains {
            let x = xs.last().unwrap();
            xs.push(&self.a * x - &self.b * (k * x));
        }
        xs
    }

    /// Condensed form `J(u) = u'Hu/2 + g'u + c` over the stacked controls.
    pub fn condensed(&self) -> (Matrix, Vector, f64) {
        let (n, m, h) = (self.a.nrows(), self.b.ncols(), self.horizon);
        // x_t = F_t x0 + G_t u
        let mut f = Matrix::identity(n, n);
        let mut g = Matrix::zeros(n, m * h);
        let mut hess = Matrix::zeros(m * h, m * h);
        let mut lin = Vector::zeros(m * h);
        let mut c = 0.0;
        for t in 0..=h {
            let w = if t == h { &self.p } else { &self.q };
            hess += g.transpose() * w * &g;
            lin += g.transpose() * w * (&f * &self.x0);
            c += 0.5 * (&f * &self.x0).dot(&(w * (&f * &self.x0)));
            if t < h {
                let mut diag = hess.view_mut((m * t, m * t), (m, m));
                diag += &self.r;
                g = &self.a * &g;
                g.view_mut((0, m * t), (n, m)).copy_from(&self.b);
                f = &self.a * f;
            }
        }
        (hess, lin, c)
    }
}

pub fn bounded(lqr: &Lqr, umax: f64) -> OcProblem {
    lqr.problem().with_constraints(Arc::new(ControlBox { umax, m: lqr.b.ncols() }))
}

/// Exhaustive active-set enumeration for `min u'Hu/2 + g'u` s.t. `|u_i| <= umax`.
pub fn box_qp(h: &Matrix, g: &Vector, umax: f64) -> f64 {
    let k = g.len();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(k as u32) {
        // 0 free, 1 at +umax, 2 at -umax
        let states: Vec<usize> = (0..k).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let free: Vec<usize> = (0..k).filter(|&i| states[i] == 0).collect();
        let mut u = DVector::from_fn(k, |i, _| match states[i] {
            1 => umax,
            2 => -umax,
            _ => 0.0,
        });
        if !free.is_empty() {
            let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| {
                let i = free[a];
                -(g[i] + (0..k).filter(|j| states[*j] != 0).map(|j| h[(i, j)] * u[j]).sum::<f64>())
            });
            let sol = hf.cholesky().unwrap().solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                u[i] = sol[a];
            }
        }
        if u.amax() <= umax * (1.0 + 1e-12) {
            best = best.min(0.5 * u.dot(&(h * &u)) + g.dot(&u));
        }
    }
    best
}

