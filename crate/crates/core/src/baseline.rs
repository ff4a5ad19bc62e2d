//! Nelder-Mead over the lower-triangular coordinates of a block matrix.
//!
//! Every candidate vertex is mapped back to a matrix, projected onto the
//! feasible set and re-flattened before it is evaluated, so the simplex only
//! ever holds feasible points. The search itself never probes outside the
//! feasible set, unlike the zeroth-order oracle.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::error::ParamError;
use crate::optimizer::LossFn;
use crate::paramspace::{check_spec, frob_dist, ParamSpace};
use crate::randmat::{BlockSpec, SymBlockMatrix};
use crate::record::{IterRow, RunRecord};

/// Lower triangles of every block, row by row, concatenated.
pub fn vectorize(theta: &SymBlockMatrix) -> DVector<f64> {
    let mut out = Vec::with_capacity(theta.spec().free_dim());
    for b in theta.blocks() {
        for i in 0..b.nrows() {
            for j in 0..=i {
                out.push(b[(i, j)]);
            }
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`vectorize`]; off-diagonal entries are mirrored.
pub fn devectorize(v: &[f64], spec: &BlockSpec) -> Result<SymBlockMatrix, ParamError> {
    if v.len() != spec.free_dim() {
        return Err(ParamError::LengthMismatch { expected: spec.free_dim(), found: v.len() });
    }
    let mut it = v.iter();
    let blocks = spec
        .sizes()
        .iter()
        .map(|&p| {
            let mut b = DMatrix::zeros(p, p);
            for i in 0..p {
                for j in 0..=i {
                    let x = *it.next().expect("length checked above");
                    b[(i, j)] = x;
                    b[(j, i)] = x;
                }
            }
            b
        })
        .collect();
    SymBlockMatrix::new(spec.clone(), blocks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadConfig {
    pub max_iters: usize,
    /// Stop once both the loss spread and the vertex spread (max-norm) fall below this.
    pub tol: f64,
    /// Edge length of the initial simplex; `None` uses `0.1 * max(1, ||v0||_inf)`.
    pub initial_scale: Option<f64>,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-8, initial_scale: None }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NelderMeadError {
    #[error("every initial vertex failed to evaluate (last error: {0})")]
    AllInitialFailed(String),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// How many times each simplex operation ran.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimplexCounters {
    pub reflections: usize,
    pub expansions: usize,
    pub contractions: usize,
    pub shrinks: usize,
    pub evaluations: usize,
    pub failures: usize,
}

/// `d + 1` vertices with their losses; failed evaluations hold `+inf`.
#[derive(Debug, Clone)]
pub struct SimplexState {
    pub vertices: Vec<DVector<f64>>,
    pub losses: Vec<f64>,
    pub counters: SimplexCounters,
}

impl SimplexState {
    /// `|det [v_1 - v_0, ..., v_d - v_0]|`, proportional to the volume.
    pub fn volume(&self) -> f64 {
        let d = self.vertices[0].len();
        let edges = DMatrix::from_fn(d, d, |i, j| self.vertices[j + 1][i] - self.vertices[0][i]);
        edges.determinant().abs()
    }

    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.losses.len()).collect();
        idx.sort_by(|&a, &b| self.losses[a].total_cmp(&self.losses[b]));
        self.vertices = idx.iter().map(|&i| self.vertices[i].clone()).collect();
        self.losses = idx.iter().map(|&i| self.losses[i]).collect();
    }

    fn spread(&self) -> (f64, f64) {
        let f0 = self.losses[0];
        let df = self.losses.iter().map(|f| (f - f0).abs()).fold(0.0, f64::max);
        let dx = self.vertices.iter().map(|v| (v - &self.vertices[0]).amax()).fold(0.0, f64::max);
        (df, dx)
    }
}

struct Evaluator<'a, L: LossFn + ?Sized> {
    loss: &'a L,
    space: &'a ParamSpace,
    last_error: Option<String>,
}

impl<L: LossFn + ?Sized> Evaluator<'_, L> {
    /// Projects `v`, returning the feasible point and its loss (`+inf` on failure).
    fn eval(&mut self, v: &DVector<f64>, counters: &mut SimplexCounters) -> Result<(DVector<f64>, f64), ParamError> {
        let theta = self.space.project(&devectorize(v.as_slice(), self.space.spec())?)?;
        counters.evaluations += 1;
        let f = match self.loss.eval(&theta) {
            Ok(f) if f.is_finite() => f,
            Ok(_) => {
                self.last_error = Some("non-finite loss".into());
                counters.failures += 1;
                f64::INFINITY
            }
            Err(e) => {
                self.last_error = Some(e.to_string());
                counters.failures += 1;
                f64::INFINITY
            }
        };
        Ok((vectorize(&theta), f))
    }
}

/// Shrinks every vertex but the best halfway towards it.
fn shrink<L: LossFn + ?Sized>(s: &mut SimplexState, ev: &mut Evaluator<'_, L>) -> Result<(), ParamError> {
    let best = s.vertices[0].clone();
    for i in 1..s.vertices.len() {
        let target = &best + (&s.vertices[i] - &best) * 0.5;
        let (v, f) = ev.eval(&target, &mut s.counters)?;
        s.vertices[i] = v;
        s.losses[i] = f;
    }
    s.counters.shrinks += 1;
    Ok(())
}

/// Projected Nelder-Mead from `theta0`. One logged row per simplex update,
/// holding the best vertex loss; row 0 is the initial simplex.
pub fn nelder_mead<L: LossFn + ?Sized>(
    loss: &L,
    space: &ParamSpace,
    theta0: &SymBlockMatrix,
    cfg: &NelderMeadConfig,
) -> Result<RunRecord, NelderMeadError> {
    nelder_mead_state(loss, space, theta0, cfg).map(|(rec, _)| rec)
}

/// [`nelder_mead`], also returning the final simplex.
pub fn nelder_mead_state<L: LossFn + ?Sized>(
    loss: &L,
    space: &ParamSpace,
    theta0: &SymBlockMatrix,
    cfg: &NelderMeadConfig,
) -> Result<(RunRecord, SimplexState), NelderMeadError> {
    check_spec(space.spec(), theta0.spec())?;
    let start = Instant::now();
    let spec = space.spec();
    let v0 = vectorize(theta0);
    let d = v0.len();
    let scale = cfg.initial_scale.unwrap_or(0.1 * v0.amax().max(1.0));
    let mut ev = Evaluator { loss, space, last_error: None };
    let mut s = SimplexState { vertices: Vec::with_capacity(d + 1), losses: Vec::with_capacity(d + 1), counters: SimplexCounters::default() };
    for i in 0..=d {
        let mut v = v0.clone();
        if i > 0 {
            v[i - 1] += scale;
        }
        let (v, f) = ev.eval(&v, &mut s.counters)?;
        s.vertices.push(v);
        s.losses.push(f);
    }
    if s.losses.iter().all(|f| !f.is_finite()) {
        return Err(NelderMeadError::AllInitialFailed(ev.last_error.unwrap_or_default()));
    }
    s.order();

    let row = |iter: usize, s: &SimplexState, newest: f64, step: f64, failures: usize| IterRow {
        iter,
        loss: s.losses[0],
        perturbed_loss: newest,
        oracle_norm: f64::NAN,
        step_norm: step,
        grad_map_norm: f64::NAN,
        wall_s: start.elapsed().as_secs_f64(),
        skipped: false,
        eval_failures: failures,
    };
    let mut rows = vec![row(0, &s, f64::NAN, f64::NAN, s.counters.failures)];

    for k in 1..=cfg.max_iters {
        let (df, dx) = s.spread();
        if df <= cfg.tol && dx <= cfg.tol {
            break;
        }
        let failures_before = s.counters.failures;
        let best_before = s.vertices[0].clone();
        let worst = d;
        let centroid = s.vertices[..worst].iter().fold(DVector::zeros(d), |acc, v| acc + v) / d as f64;
        let (xr, fr) = ev.eval(&(&centroid + (&centroid - &s.vertices[worst])), &mut s.counters)?;
        let mut newest = fr;
        if fr < s.losses[0] {
            let (xe, fe) = ev.eval(&(&centroid + (&xr - &centroid) * 2.0), &mut s.counters)?;
            newest = fe;
            if fe < fr {
                s.vertices[worst] = xe;
                s.losses[worst] = fe;
                s.counters.expansions += 1;
            } else {
                s.vertices[worst] = xr;
                s.losses[worst] = fr;
                s.counters.reflections += 1;
            }
        } else if fr < s.losses[worst - 1] {
            s.vertices[worst] = xr;
            s.losses[worst] = fr;
            s.counters.reflections += 1;
        } else {
            // Outside contraction when the reflection beats the worst vertex, inside otherwise.
            let outside = fr < s.losses[worst];
            let target = if outside {
                &centroid + (&xr - &centroid) * 0.5
            } else {
                &centroid + (&s.vertices[worst] - &centroid) * 0.5
            };
            let (xc, fc) = ev.eval(&target, &mut s.counters)?;
            newest = fc;
            if fc < if outside { fr } else { s.losses[worst] } {
                s.vertices[worst] = xc;
                s.losses[worst] = fc;
                s.counters.contractions += 1;
            } else {
                shrink(&mut s, &mut ev)?;
            }
        }
        s.order();
        let step = frob_dist(&devectorize(best_before.as_slice(), spec)?, &devectorize(s.vertices[0].as_slice(), spec)?)?;
        rows.push(row(k, &s, newest, step, s.counters.failures - failures_before));
    }

    let best_theta = devectorize(s.vertices[0].as_slice(), spec)?;
    let best_loss = s.losses[0];
    let best_index = rows.iter().position(|r| r.loss == best_loss).unwrap_or(0);
    Ok((RunRecord { rows, best_theta, best_loss, best_index }, s))
}
