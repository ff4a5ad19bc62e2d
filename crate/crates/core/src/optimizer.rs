//! Zeroth-order random matrix search.
//!
//! Each iteration draws a block-diagonal GOE direction `M_k`, forms the
//! two-point estimate
//!
//! ```text
//! O_mu(theta, M) = [L(theta + mu M) - L(theta)] / mu * M
//! ```
//!
//! and takes the projected step `theta_{k+1} = P[theta_k - alpha_k O_mu]`.
//! The returned parameter is the iterate with the smallest logged loss.
//!
//! The probe point `theta + mu M` is evaluated without projection. When the
//! loss cannot be evaluated there, a fresh direction is drawn (up to
//! `resample_limit` times) before the iteration is skipped.

use std::time::Instant;

use thiserror::Error;

use crate::error::ParamError;
use crate::par::{self, Execution};
use crate::paramspace::{axpy, frob_dist, ParamSpace};
use crate::randmat::{moments, rng_from_seed, sample_block, BlockSpec, SymBlockMatrix};
use crate::record::{IterRow, RunRecord};

/// Why a loss evaluation failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("forward solve failed: {0}")]
    Solver(String),
    #[error("loss is not finite")]
    NonFinite,
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// A deterministic loss over parameter matrices.
///
/// Implementations must tolerate two concurrent evaluations.
pub trait LossFn: Sync {
    fn eval(&self, theta: &SymBlockMatrix) -> Result<f64, EvalError>;
}

impl<F> LossFn for F
where
    F: Fn(&SymBlockMatrix) -> Result<f64, EvalError> + Sync,
{
    fn eval(&self, theta: &SymBlockMatrix) -> Result<f64, EvalError> {
        self(theta)
    }
}

fn checked_eval<L: LossFn + ?Sized>(loss: &L, theta: &SymBlockMatrix) -> Result<f64, EvalError> {
    let v = loss.eval(theta)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Which of the two oracle evaluations failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleSide {
    Base,
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("oracle evaluation failed at the {side:?} point: {source}")]
pub struct OracleError {
    pub side: OracleSide,
    pub source: EvalError,
}

#[derive(Debug, Clone)]
pub struct OracleOutput {
    pub direction: SymBlockMatrix,
    pub loss_at_theta: f64,
    pub loss_at_perturbed: f64,
}

/// Two-point random matrix oracle. Both evaluations may run concurrently.
pub fn oracle<L: LossFn + ?Sized>(
    loss: &L,
    theta: &SymBlockMatrix,
    m: &SymBlockMatrix,
    mu: f64,
    exec: Execution,
) -> Result<OracleOutput, OracleError> {
    assert!(mu > 0.0, "oracle precision must be positive");
    let probe = axpy(mu, m, theta).map_err(|e| OracleError { side: OracleSide::Perturbed, source: e.into() })?;
    let (base, pert) = par::join(exec, || checked_eval(loss, theta), || checked_eval(loss, &probe));
    let base = base.map_err(|source| OracleError { side: OracleSide::Base, source })?;
    let pert = pert.map_err(|source| OracleError { side: OracleSide::Perturbed, source })?;
    Ok(OracleOutput {
        direction: m.scale((pert - base) / mu),
        loss_at_theta: base,
        loss_at_perturbed: pert,
    })
}

/// Step-size rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `alpha_k = alpha`.
    Constant(f64),
    /// `alpha_k = c / sqrt(k + 1)`.
    Decaying(f64),
    /// Convex-case schedule for target accuracy `eps`; sets `mu` too.
    Prop1 { eps: f64 },
    /// Nonconvex schedule for smoothing accuracy `eps` and stationarity
    /// target `delta`; sets `mu` too.
    Prop2 { eps: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZormsConfig {
    /// Oracle precision. Ignored by the `Prop1`/`Prop2` schedules, which derive it.
    pub mu: f64,
    pub step: StepSchedule,
    pub iterations: usize,
    pub seed: u64,
    /// Lipschitz constant of the loss; estimated around `theta0` when absent.
    pub lipschitz: Option<f64>,
    /// Bound on `||theta0 - theta*||_F`; `||theta0||_F + r_bar_margin` when absent.
    pub r_bar: Option<f64>,
    pub r_bar_margin: f64,
    /// Radius of the random probe used for Lipschitz estimation.
    pub probe_radius: f64,
    pub probe_points: usize,
    pub resample_limit: usize,
    pub execution: Execution,
}

impl Default for ZormsConfig {
    fn default() -> Self {
        Self {
            mu: 0.01,
            step: StepSchedule::Constant(0.01),
            iterations: 100,
            seed: 0,
            lipschitz: None,
            r_bar: None,
            r_bar_margin: 1.0,
            probe_radius: 0.1,
            probe_points: 20,
            resample_limit: 3,
            execution: Execution::default(),
        }
    }
}

impl ZormsConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::InvalidConfig(m.to_string()));
        let pos = |x: f64| x > 0.0 && x.is_finite();
        match self.step {
            StepSchedule::Constant(a) | StepSchedule::Decaying(a) if !pos(a) => {
                return bad("step size must be positive")
            }
            StepSchedule::Prop1 { eps } if !pos(eps) => return bad("eps must be positive"),
            StepSchedule::Prop2 { eps, delta } if !pos(eps) || !pos(delta) => {
                return bad("eps and delta must be positive")
            }
            StepSchedule::Constant(_) | StepSchedule::Decaying(_) if !pos(self.mu) => {
                return bad("mu must be positive")
            }
            _ => {}
        }
        if self.lipschitz.is_some_and(|l| !pos(l)) || self.r_bar.is_some_and(|r| !pos(r)) {
            return bad("Lipschitz constant and r_bar must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("loss at the initial parameter could not be evaluated: {0}")]
    InitialEvaluation(EvalError),
    #[error("aborted: {skipped} of {iterations} iterations skipped (forward solver failing or mu too large)")]
    TooManySkips { skipped: usize, iterations: usize },
    #[error("could not estimate the Lipschitz constant: {0}")]
    Lipschitz(#[from] LipschitzError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Hyperparameters for the convex case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop1Schedule {
    pub mu_max: f64,
    /// `alpha_k = alpha_scale / sqrt(k + 1)`.
    pub alpha_scale: f64,
    pub n_min: u64,
}

impl Prop1Schedule {
    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha_scale / ((k + 1) as f64).sqrt()
    }
}

/// `mu <= eps / (lambda sqrt(4 m2))`, `alpha_k = r / (lambda sqrt(m4) sqrt(k+1))`,
/// `N >= 4 m4 lambda^2 r^2 / eps^2`.
pub fn schedule_prop1(eps: f64, lambda: f64, r_bar: f64, spec: &BlockSpec) -> Prop1Schedule {
    let m = moments(spec);
    Prop1Schedule {
        mu_max: eps / (lambda * (4.0 * m.m2).sqrt()),
        alpha_scale: r_bar / (lambda * m.m4.sqrt()),
        n_min: ceil_count(4.0 * m.m4 * lambda * lambda * r_bar * r_bar / (eps * eps)),
    }
}

/// Hyperparameters for the nonconvex case.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop2Schedule {
    pub mu: f64,
    pub alpha: f64,
    pub n_min: u64,
    /// Set when the requested iteration count is below `n_min`.
    pub warning: Option<String>,
}

/// `mu = eps / (lambda sqrt(m2))`, `alpha = sqrt(eps r / ((N+1) lambda^3 m2 m4))`,
/// `N_min = 2 m2 m4 lambda^5 r / (eps delta^2)`.
pub fn schedule_prop2(
    eps: f64,
    delta: f64,
    lambda: f64,
    r_bar: f64,
    iterations: usize,
    spec: &BlockSpec,
) -> Prop2Schedule {
    let m = moments(spec);
    let n_min = ceil_count(2.0 * m.m2 * m.m4 * lambda.powi(5) * r_bar / (eps * delta * delta));
    let warning = ((iterations as u64) < n_min)
        .then(|| format!("N = {iterations} is below the iteration bound {n_min}"));
    Prop2Schedule {
        mu: eps / (lambda * m.m2.sqrt()),
        alpha: (eps * r_bar / ((iterations as f64 + 1.0) * lambda.powi(3) * m.m2 * m.m4)).sqrt(),
        n_min,
        warning,
    }
}

/// Ceiling that ignores floating-point noise just above an integer.
fn ceil_count(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// `G = (theta - P[theta - alpha O]) / alpha`.
pub fn gradient_mapping(
    theta: &SymBlockMatrix,
    oracle_out: &SymBlockMatrix,
    alpha: f64,
    space: &ParamSpace,
) -> Result<SymBlockMatrix, ParamError> {
    let stepped = space.project(&axpy(-alpha, oracle_out, theta)?)?;
    Ok(axpy(-1.0, &stepped, theta)?.scale(1.0 / alpha))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LipschitzError {
    #[error("no pair of distinct parameters with finite losses")]
    NoValidPair,
}

/// Largest secant slope `|L(a) - L(b)| / ||a - b||_F` over all pairs, ignoring
/// pairs closer than `1e-12`.
pub fn estimate_lipschitz(pairs: &[(SymBlockMatrix, f64)]) -> Result<f64, LipschitzError> {
    let mut best: Option<f64> = None;
    for (i, (a, la)) in pairs.iter().enumerate() {
        for (b, lb) in &pairs[i + 1..] {
            let Ok(d) = frob_dist(a, b) else { continue };
            if d < 1e-12 || !la.is_finite() || !lb.is_finite() {
                continue;
            }
            let slope = (la - lb).abs() / d;
            best = Some(best.map_or(slope, |s: f64| s.max(slope)));
        }
    }
    best.ok_or(LipschitzError::NoValidPair)
}

/// Resolved oracle precision and step rule for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSchedule {
    pub mu: f64,
    pub alpha_scale: f64,
    pub decaying: bool,
    pub lipschitz: Option<f64>,
    pub r_bar: Option<f64>,
    pub warning: Option<String>,
}

impl ResolvedSchedule {
    pub fn alpha(&self, k: usize) -> f64 {
        if self.decaying {
            self.alpha_scale / ((k + 1) as f64).sqrt()
        } else {
            self.alpha_scale
        }
    }
}

/// Fills in `mu` and the step rule, estimating the Lipschitz constant and
/// radius around `theta0` when the schedule needs them and they are not given.
pub fn resolve_schedule<L: LossFn + ?Sized>(
    loss: &L,
    space: &ParamSpace,
    theta0: &SymBlockMatrix,
    cfg: &ZormsConfig,
) -> Result<ResolvedSchedule, RunError> {
    let (eps, delta) = match cfg.step {
        StepSchedule::Constant(a) => {
            return Ok(ResolvedSchedule {
                mu: cfg.mu,
                alpha_scale: a,
                decaying: false,
                lipschitz: cfg.lipschitz,
                r_bar: cfg.r_bar,
                warning: None,
            })
        }
        StepSchedule::Decaying(c) => {
            return Ok(ResolvedSchedule {
                mu: cfg.mu,
                alpha_scale: c,
                decaying: true,
                lipschitz: cfg.lipschitz,
                r_bar: cfg.r_bar,
                warning: None,
            })
        }
        StepSchedule::Prop1 { eps } => (eps, None),
        StepSchedule::Prop2 { eps, delta } => (eps, Some(delta)),
    };
    let lambda = match cfg.lipschitz {
        Some(l) => l,
        None => probe_lipschitz(loss, space, theta0, cfg)?,
    };
    let r_bar = cfg.r_bar.unwrap_or_else(|| theta0.frob_norm() + cfg.r_bar_margin);
    let spec = space.spec();
    Ok(match delta {
        None => {
            let s = schedule_prop1(eps, lambda, r_bar, spec);
            ResolvedSchedule {
                mu: s.mu_max,
                alpha_scale: s.alpha_scale,
                decaying: true,
                lipschitz: Some(lambda),
                r_bar: Some(r_bar),
                warning: ((cfg.iterations as u64) < s.n_min)
                    .then(|| format!("N = {} is below the iteration bound {}", cfg.iterations, s.n_min)),
            }
        }
        Some(delta) => {
            let s = schedule_prop2(eps, delta, lambda, r_bar, cfg.iterations, spec);
            ResolvedSchedule {
                mu: s.mu,
                alpha_scale: s.alpha,
                decaying: false,
                lipschitz: Some(lambda),
                r_bar: Some(r_bar),
                warning: s.warning,
            }
        }
    })
}

/// Lipschitz estimate from `theta0` and `probe_points` projected random
/// points at distance `probe_radius` around it.
pub fn probe_lipschitz<L: LossFn + ?Sized>(
    loss: &L,
    space: &ParamSpace,
    theta0: &SymBlockMatrix,
    cfg: &ZormsConfig,
) -> Result<f64, RunError> {
    let mut rng = rng_from_seed(cfg.seed);
    rng.set_stream(1);
    let mut points = vec![theta0.clone()];
    for _ in 0..cfg.probe_points {
        let m = sample_block(space.spec(), &mut rng);
        let dir = m.scale(cfg.probe_radius / m.frob_norm().max(f64::MIN_POSITIVE));
        points.push(space.project(&axpy(1.0, &dir, theta0)?)?);
    }
    let values = par::map_slice(cfg.execution, &points, |p| checked_eval(loss, p));
    let pairs: Vec<(SymBlockMatrix, f64)> = points
        .into_iter()
        .zip(values)
        .filter_map(|(p, v)| v.ok().map(|v| (p, v)))
        .collect();
    Ok(estimate_lipschitz(&pairs)?)
}

/// Runs `cfg.iterations` projected zeroth-order steps from `theta0`.
///
/// The log has one row per iterate `theta_0..theta_N`; the last row carries
/// only the loss. Deterministic given `cfg.seed`: directions are drawn on the
/// sequential path before any concurrent evaluation.
pub fn run<L: LossFn + ?Sized>(
    loss: &L,
    space: &ParamSpace,
    theta0: &SymBlockMatrix,
    cfg: &ZormsConfig,
) -> Result<RunRecord, RunError> {
    cfg.validate()?;
    let schedule = resolve_schedule(loss, space, theta0, cfg)?;
    run_with_schedule(loss, space, theta0, cfg, &schedule)
}

pub fn run_with_schedule<L: LossFn + ?Sized>(
    loss: &L,
    space: &ParamSpace,
    theta0: &SymBlockMatrix,
    cfg: &ZormsConfig,
    schedule: &ResolvedSchedule,
) -> Result<RunRecord, RunError> {
    crate::paramspace::check_spec(space.spec(), theta0.spec())?;
    let start = Instant::now();
    let mu = schedule.mu;
    let mut rng = rng_from_seed(cfg.seed);
    let mut theta = theta0.clone();
    let mut cached = Some(checked_eval(loss, theta0).map_err(RunError::InitialEvaluation)?);
    let mut rows = Vec::with_capacity(cfg.iterations + 1);
    let mut best = (cached.unwrap_or(f64::INFINITY), 0usize, theta0.clone());
    let mut skipped = 0usize;

    for k in 0..cfg.iterations {
        let alpha = schedule.alpha(k);
        let mut failures = 0usize;
        let mut outcome = None;
        let mut base_loss = cached;
        for _ in 0..=cfg.resample_limit {
            let m = sample_block(space.spec(), &mut rng);
            let result = match base_loss {
                Some(b) => perturbed_only(loss, &theta, &m, mu, b),
                None => oracle(loss, &theta, &m, mu, cfg.execution),
            };
            match result {
                Ok(o) => {
                    outcome = Some(o);
                    break;
                }
                Err(OracleError { side: OracleSide::Base, .. }) => {
                    failures += 1;
                    break;
                }
                Err(_) => {
                    failures += 1;
                    // the base value may have been computed alongside the failed probe
                    if base_loss.is_none() {
                        base_loss = checked_eval(loss, &theta).ok();
                        if base_loss.is_none() {
                            break;
                        }
                    }
                }
            }
        }
        let wall = start.elapsed().as_secs_f64();
        match outcome {
            Some(o) => {
                let next = space.project(&axpy(-alpha, &o.direction, &theta)?)?;
                let step_norm = frob_dist(&next, &theta)?;
                if o.loss_at_theta < best.0 {
                    best = (o.loss_at_theta, k, theta.clone());
                }
                rows.push(IterRow {
                    iter: k,
                    loss: o.loss_at_theta,
                    perturbed_loss: o.loss_at_perturbed,
                    oracle_norm: o.direction.frob_norm(),
                    step_norm,
                    grad_map_norm: step_norm / alpha,
                    wall_s: wall,
                    skipped: false,
                    eval_failures: failures,
                });
                theta = next;
                cached = None;
            }
            None => {
                skipped += 1;
                let l = base_loss.unwrap_or(f64::NAN);
                if l < best.0 {
                    best = (l, k, theta.clone());
                }
                rows.push(IterRow {
                    skipped: true,
                    eval_failures: failures,
                    step_norm: 0.0,
                    ..IterRow::loss_only(k, l, wall)
                });
                cached = base_loss;
                if 2 * skipped > cfg.iterations {
                    return Err(RunError::TooManySkips { skipped, iterations: cfg.iterations });
                }
            }
        }
    }

    let final_loss = match cached {
        Some(l) => l,
        None => checked_eval(loss, &theta).unwrap_or(f64::NAN),
    };
    if final_loss < best.0 {
        best = (final_loss, cfg.iterations, theta.clone());
    }
    rows.push(IterRow::loss_only(cfg.iterations, final_loss, start.elapsed().as_secs_f64()));

    Ok(RunRecord { rows, best_theta: best.2, best_loss: best.0, best_index: best.1 })
}

fn perturbed_only<L: LossFn + ?Sized>(
    loss: &L,
    theta: &SymBlockMatrix,
    m: &SymBlockMatrix,
    mu: f64,
    base: f64,
) -> Result<OracleOutput, OracleError> {
    let err = |source| OracleError { side: OracleSide::Perturbed, source };
    let probe = axpy(mu, m, theta).map_err(|e| err(e.into()))?;
    let pert = checked_eval(loss, &probe).map_err(err)?;
    Ok(OracleOutput { direction: m.scale((pert - base) / mu), loss_at_theta: base, loss_at_perturbed: pert })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramspace::ConeType;
    use crate::randmat::rng_from_seed;

    fn spec(s: &[usize]) -> BlockSpec {
        BlockSpec::new(s.to_vec()).unwrap()
    }

    fn quadratic(target: SymBlockMatrix) -> impl Fn(&SymBlockMatrix) -> Result<f64, EvalError> + Sync {
        move |t: &SymBlockMatrix| Ok(frob_dist(t, &target)?.powi(2))
    }

    #[test]
    fn constant_loss_gives_zero_direction() {
        let sp = spec(&[2, 1]);
        let m = sample_block(&sp, &mut rng_from_seed(0));
        let theta = SymBlockMatrix::identity(&sp);
        let o = oracle(&|_: &SymBlockMatrix| Ok(4.2), &theta, &m, 0.3, Execution::Sequential).unwrap();
        assert_eq!(o.direction, SymBlockMatrix::zeros(&sp));
    }

    #[test]
    fn squared_norm_oracle_is_biased_at_origin() {
        let sp = spec(&[2]);
        let m = sample_block(&sp, &mut rng_from_seed(4));
        let mu = 0.5;
        let o = oracle(&|t: &SymBlockMatrix| Ok(t.frob_norm().powi(2)), &SymBlockMatrix::zeros(&sp), &m, mu, Execution::Parallel)
            .unwrap();
        let expected = m.scale(mu * m.frob_norm().powi(2));
        assert!(frob_dist(&o.direction, &expected).unwrap() < 1e-12);
        assert!(o.direction.frob_norm() > 0.0);
    }

    #[test]
    fn oracle_reports_failing_side() {
        let sp = spec(&[1]);
        let theta = SymBlockMatrix::zeros(&sp);
        let m = SymBlockMatrix::identity(&sp);
        let loss = |t: &SymBlockMatrix| if t.scalar(0) > 0.0 { Err(EvalError::Solver("x".into())) } else { Ok(0.0) };
        let e = oracle(&loss, &theta, &m, 1.0, Execution::Sequential).unwrap_err();
        assert_eq!(e.side, OracleSide::Perturbed);
        let e = oracle(&|_: &SymBlockMatrix| Ok(f64::NAN), &theta, &m, 1.0, Execution::Sequential).unwrap_err();
        assert_eq!(e.side, OracleSide::Base);
    }

    #[test]
    fn prop1_examples() {
        let s = schedule_prop1(1.0, 1.0, 1.0, &spec(&[1]));
        assert!((s.mu_max - 0.5).abs() < 1e-15);
        assert!((s.alpha(0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((s.alpha(3) - 1.0 / (3f64.sqrt() * 2.0)).abs() < 1e-15);
        assert_eq!(s.n_min, 12);
        assert_eq!(schedule_prop1(0.5, 1.0, 1.0, &spec(&[1])).n_min, 48);

        // m4 for (2,3): 15 + 48 + (6 * 12) / 2 = 99.
        let s = schedule_prop1(0.5, 2.0, 1.0, &spec(&[2, 3]));
        assert_eq!(s.n_min, (4.0f64 * 99.0 * 4.0 / 0.25).ceil() as u64);
    }

    #[test]
    fn prop2_examples() {
        let s = schedule_prop2(1.0, 1.0, 1.0, 1.0, 5, &spec(&[1]));
        assert!((s.mu - 1.0).abs() < 1e-15);
        assert!((s.alpha - 1.0 / 18f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.n_min, 6);
        assert!(s.warning.is_some());
        assert!(schedule_prop2(1.0, 1.0, 1.0, 1.0, 6, &spec(&[1])).warning.is_none());
        let s2 = schedule_prop2(0.5, 1.0, 1.0, 1.0, 5, &spec(&[1]));
        assert!((s2.mu - 0.5 * s.mu).abs() < 1e-15);
        let s3 = schedule_prop2(1.0, 1.0, 1.0, 1.0, 23, &spec(&[1]));
        assert!((s3.alpha - s.alpha * (6.0f64 / 24.0).sqrt()).abs() < 1e-15);
        assert!(schedule_prop2(1.0, 0.1, 1.0, 1.0, 5, &spec(&[1])).warning.is_some());
    }

    #[test]
    fn gradient_mapping_cases() {
        let sp = spec(&[2]);
        let mut rng = rng_from_seed(2);
        let theta = sample_block(&sp, &mut rng);
        let o = sample_block(&sp, &mut rng);
        let free = ParamSpace::free(sp.clone());
        let g = gradient_mapping(&theta, &o, 0.1, &free).unwrap();
        assert!(frob_dist(&g, &o).unwrap() < 1e-12);

        let psd = ParamSpace::uniform(sp.clone(), ConeType::PSD).unwrap();
        let interior = SymBlockMatrix::identity(&sp).scale(5.0);
        let g = gradient_mapping(&interior, &o, 1e-3, &psd).unwrap();
        assert!(frob_dist(&g, &o).unwrap() < 1e-9);

        let boundary = SymBlockMatrix::new(sp.clone(), vec![nalgebra::dmatrix![0.0, 0.0; 0.0, 1.0]]).unwrap();
        let outward = SymBlockMatrix::new(sp, vec![nalgebra::dmatrix![1.0, 0.0; 0.0, 0.0]]).unwrap();
        let g = gradient_mapping(&boundary, &outward, 0.5, &psd).unwrap();
        assert!(g.frob_norm() < outward.frob_norm());
    }

    #[test]
    fn lipschitz_estimates() {
        let sp = spec(&[2]);
        let mut rng = rng_from_seed(6);
        let c = sample_block(&sp, &mut rng);
        let pts: Vec<_> = (0..30).map(|_| sample_block(&sp, &mut rng)).collect();
        let pairs: Vec<_> = pts.iter().map(|p| (p.clone(), p.inner(&c).unwrap())).collect();
        assert!(estimate_lipschitz(&pairs).unwrap() <= c.frob_norm() + 1e-12);

        let a = SymBlockMatrix::zeros(&sp);
        let b = SymBlockMatrix::identity(&sp);
        let pairs = vec![(a.clone(), 0.0), (a.clone(), 5.0), (b, 2f64.sqrt())];
        // The coincident pair is dropped; both remaining secants have slope 1 or |5 - sqrt2|/sqrt2.
        let est = estimate_lipschitz(&pairs).unwrap();
        assert!((est - (5.0 - 2f64.sqrt()) / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(estimate_lipschitz(&[(a.clone(), 1.0), (a, 2.0)]), Err(LipschitzError::NoValidPair));
    }

    #[test]
    fn lipschitz_of_norm_from_random_secants() {
        let sp = spec(&[3]);
        let mut rng = rng_from_seed(12);
        let pairs: Vec<_> = (0..100)
            .map(|_| {
                let t = sample_block(&sp, &mut rng);
                let v = t.frob_norm();
                (t, v)
            })
            .collect();
        let est = estimate_lipschitz(&pairs).unwrap();
        assert!(est > 0.9 && est <= 1.0 + 1e-12, "{est}");
    }

    #[test]
    fn zero_iterations_returns_start() {
        let sp = spec(&[2]);
        let target = SymBlockMatrix::identity(&sp);
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let loss = |t: &SymBlockMatrix| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(frob_dist(t, &target)?.powi(2))
        };
        let theta0 = SymBlockMatrix::zeros(&sp);
        let cfg = ZormsConfig { iterations: 0, ..Default::default() };
        let rec = run(&loss, &ParamSpace::free(sp), &theta0, &cfg).unwrap();
        assert_eq!(rec.rows.len(), 1);
        assert_eq!(rec.best_index, 0);
        assert_eq!(rec.best_theta, theta0);
        assert!((rec.best_loss - 2.0).abs() < 1e-15);
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 1);
    }

    #[test]
    fn run_is_deterministic_and_feasible() {
        let sp = spec(&[2, 1]);
        let space = ParamSpace::uniform(sp.clone(), ConeType::PSD).unwrap();
        let target = SymBlockMatrix::identity(&sp);
        let loss = quadratic(target);
        let theta0 = SymBlockMatrix::zeros(&sp);
        let cfg = ZormsConfig { iterations: 60, seed: 9, step: StepSchedule::Constant(0.05), mu: 0.01, ..Default::default() };
        let seq = ZormsConfig { execution: Execution::Sequential, ..cfg.clone() };
        let a = run(&loss, &space, &theta0, &cfg).unwrap();
        let b = run(&loss, &space, &theta0, &seq).unwrap();
        let la: Vec<u64> = a.rows.iter().map(|r| r.loss.to_bits()).collect();
        let lb: Vec<u64> = b.rows.iter().map(|r| r.loss.to_bits()).collect();
        assert_eq!(la, lb);
        assert!(a.best_loss < a.initial_loss());
        assert!(space.contains(&a.best_theta, 1e-8));
        let best = a.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(a.rows[a.best_index].loss, a.best_loss);
    }

    #[test]
    fn failing_probes_are_resampled_then_skipped() {
        let sp = spec(&[1]);
        // Iterates are held at the failure boundary by the box, so about half
        // of the probes land outside it.
        let space = ParamSpace::uniform(sp.clone(), ConeType::interval(-10.0, 0.0)).unwrap();
        let loss = |t: &SymBlockMatrix| {
            if t.scalar(0) > 0.0 {
                Err(EvalError::Solver("rejected".into()))
            } else {
                Ok((t.scalar(0) - 1.0).powi(2))
            }
        };
        let cfg = ZormsConfig { iterations: 40, seed: 1, resample_limit: 3, mu: 0.05, ..Default::default() };
        let rec = run(&loss, &space, &SymBlockMatrix::zeros(&sp), &cfg).unwrap();
        assert!(rec.rows.iter().any(|r| r.eval_failures > 0));

        let always = |_: &SymBlockMatrix| -> Result<f64, EvalError> { Err(EvalError::Solver("down".into())) };
        let err = run(&always, &space, &SymBlockMatrix::zeros(&sp), &cfg).unwrap_err();
        assert!(matches!(err, RunError::InitialEvaluation(_)));

        let only_start = |t: &SymBlockMatrix| {
            if t.scalar(0) == 0.0 { Ok(1.0) } else { Err(EvalError::Solver("probe".into())) }
        };
        let err = run(&only_start, &space, &SymBlockMatrix::zeros(&sp), &cfg).unwrap_err();
        assert!(matches!(err, RunError::TooManySkips { .. }));
    }

    #[test]
    fn invalid_config_rejected() {
        let sp = spec(&[1]);
        let space = ParamSpace::free(sp.clone());
        let loss = |_: &SymBlockMatrix| Ok(0.0);
        let cfg = ZormsConfig { mu: 0.0, ..Default::default() };
        assert!(matches!(run(&loss, &space, &SymBlockMatrix::zeros(&sp), &cfg), Err(RunError::InvalidConfig(_))));
        let cfg = ZormsConfig { step: StepSchedule::Prop2 { eps: 1.0, delta: -1.0 }, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn prop1_schedule_estimates_missing_constants() {
        let sp = spec(&[2]);
        let space = ParamSpace::free(sp.clone());
        let loss = |t: &SymBlockMatrix| Ok(t.frob_norm());
        let cfg = ZormsConfig { step: StepSchedule::Prop1 { eps: 0.1 }, iterations: 10, ..Default::default() };
        let theta0 = SymBlockMatrix::identity(&sp);
        let s = resolve_schedule(&loss, &space, &theta0, &cfg).unwrap();
        let lambda = s.lipschitz.unwrap();
        assert!(lambda > 0.5 && lambda <= 1.0 + 1e-12);
        assert!((s.r_bar.unwrap() - (2f64.sqrt() + 1.0)).abs() < 1e-12);
        assert!(s.warning.is_some());
    }
}
