//! Demonstrations and the bilevel loss.
//!
//! A [`MeasurementModel`] picks state and control components at a set of
//! sample times. [`generate_demos`] solves the forward problem at a known
//! parameter and records noisy measurements; [`make_loss`] turns a problem
//! and a [`DemoSet`] into a [`LossFn`] that re-solves the problem at each
//! candidate parameter and sums squared measurement residuals.

use std::fmt::Write as _;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::baseline::{devectorize, vectorize};
use crate::ocp::{solve_with, time_to_index, BarrierConfig, OcProblem, SolveError, Trajectory, Vector};
use crate::optimizer::{EvalError, LossFn};
use crate::randmat::{rng_from_seed, BlockSpec, SymBlockMatrix};

const FORMAT_TAG: &str = "zorms-demos";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IocError {
    #[error("invalid measurement model: {0}")]
    Model(String),
    #[error("demonstrations do not fit the problem: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("demo file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One measured coordinate: a state or a control component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    State(usize),
    Control(usize),
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Component::State(i) => write!(f, "x{i}"),
            Component::Control(i) => write!(f, "u{i}"),
        }
    }
}

impl FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (kind, idx) = s.split_at(s.len().min(1));
        let idx: usize = idx.parse().map_err(|_| format!("bad component `{s}`"))?;
        match kind {
            "x" => Ok(Component::State(idx)),
            "u" => Ok(Component::Control(idx)),
            _ => Err(format!("bad component `{s}` (expected x<i> or u<i>)")),
        }
    }
}

/// Which components are measured, when, and with how much noise.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    pub components: Vec<Component>,
    /// Strictly increasing times in `[0, T]`.
    pub sample_times: Vec<f64>,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
}

impl MeasurementModel {
    /// `tau` samples at `i T / tau`, `i = 1..=tau`.
    pub fn uniform(components: Vec<Component>, tau: usize, duration: f64, noise: f64) -> Self {
        let sample_times = (1..=tau).map(|i| i as f64 * duration / tau as f64).collect();
        Self { components, sample_times, noise }
    }

    /// Positions `x0..x{k-1}` sampled uniformly.
    pub fn positions(k: usize, tau: usize, duration: f64, noise: f64) -> Self {
        Self::uniform((0..k).map(Component::State).collect(), tau, duration, noise)
    }

    pub fn q(&self) -> usize {
        self.components.len()
    }

    pub fn tau(&self) -> usize {
        self.sample_times.len()
    }

    /// Checks the model against a problem and returns the grid node of each sample.
    pub fn node_indices(&self, prob: &OcProblem) -> Result<Vec<usize>, IocError> {
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(IocError::Model(format!("noise scale {} must be finite and >= 0", self.noise)));
        }
        if self.components.is_empty() || self.q() > prob.n + prob.m {
            return Err(IocError::Model(format!("{} measured components for n + m = {}", self.q(), prob.n + prob.m)));
        }
        if self.sample_times.is_empty() {
            return Err(IocError::Model("no sample times".into()));
        }
        if self.sample_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(IocError::Model("sample times must be strictly increasing".into()));
        }
        let end = prob.horizon as f64 * prob.dt;
        let (first, last) = (self.sample_times[0], *self.sample_times.last().unwrap());
        if !(first >= 0.0) || last > end * (1.0 + 1e-12) {
            return Err(IocError::Model(format!("sample times must lie in [0, {end}]")));
        }
        let nodes: Vec<usize> = self.sample_times.iter().map(|&t| time_to_index(t, prob.dt).min(prob.horizon)).collect();
        for c in &self.components {
            match *c {
                Component::State(i) if i >= prob.n => {
                    return Err(IocError::Model(format!("state index {i} out of range for n = {}", prob.n)))
                }
                Component::Control(i) if i >= prob.m => {
                    return Err(IocError::Model(format!("control index {i} out of range for m = {}", prob.m)))
                }
                Component::Control(_) if nodes.contains(&prob.horizon) => {
                    return Err(IocError::Model("controls cannot be measured at the final node".into()))
                }
                _ => {}
            }
        }
        Ok(nodes)
    }

    /// `g` at every sampled node of a trajectory.
    pub fn measure(&self, traj: &Trajectory, nodes: &[usize]) -> Vec<Vector> {
        nodes
            .iter()
            .map(|&k| {
                Vector::from_iterator(
                    self.q(),
                    self.components.iter().map(|c| match *c {
                        Component::State(i) => traj.states[k][i],
                        Component::Control(i) => traj.controls[k][i],
                    }),
                )
            })
            .collect()
    }
}

/// Measurements `y(t_1..t_tau)` and, for synthetic sets, how they were made.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub model: MeasurementModel,
    pub measurements: Vec<Vector>,
    /// Unscaled standard-normal draws; the noise added is `model.noise * w`.
    pub noise_draws: Vec<Vector>,
    pub seed: Option<u64>,
    pub theta_star: Option<SymBlockMatrix>,
}

impl DemoSet {
    /// Sum over samples of `||noise * w||^2`.
    pub fn noise_energy(&self) -> f64 {
        let s = self.model.noise;
        self.noise_draws.iter().map(|w| (w * s).norm_squared()).sum()
    }

    /// Writes the versioned text format; floats use shortest round-trip
    /// notation so reading back is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_TAG} {FORMAT_VERSION}");
        let _ = writeln!(out, "q={}", self.model.q());
        let _ = writeln!(out, "tau={}", self.model.tau());
        let _ = writeln!(out, "noise={:?}", self.model.noise);
        let comps: Vec<String> = self.model.components.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "components={}", comps.join(","));
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed={seed}");
        }
        if let Some(theta) = &self.theta_star {
            let _ = writeln!(out, "theta_spec={}", theta.spec());
            let _ = writeln!(out, "theta={}", join(vectorize(theta).iter()));
        }
        let q = self.model.q();
        let mut header = vec!["t".to_string()];
        header.extend((0..q).map(|i| format!("y{i}")));
        header.extend((0..q).map(|i| format!("w{i}")));
        let _ = writeln!(out, "{}", header.join(","));
        for (k, t) in self.model.sample_times.iter().enumerate() {
            let row = std::iter::once(t).chain(self.measurements[k].iter()).chain(self.noise_draws[k].iter());
            let _ = writeln!(out, "{}", join(row));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, IocError> {
        let err = |line: usize, reason: String| IocError::Parse { line, reason };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let (n0, first) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let mut head = first.split_whitespace();
        if head.next() != Some(FORMAT_TAG) {
            return Err(err(n0, format!("expected `{FORMAT_TAG} <version>`")));
        }
        match head.next().map(str::parse::<u32>) {
            Some(Ok(FORMAT_VERSION)) => {}
            other => return Err(err(n0, format!("unsupported version {other:?}"))),
        }

        let (mut q, mut tau, mut noise, mut comps, mut seed, mut spec, mut theta) =
            (None, None, None, None, None, None, None);
        let mut header_line = None;
        for (n, line) in lines.by_ref() {
            let Some((key, value)) = line.split_once('=') else {
                header_line = Some((n, line));
                break;
            };
            let bad = |what: &str| err(n, format!("bad {what} `{value}`"));
            match key.trim() {
                "q" => q = Some(value.parse::<usize>().map_err(|_| bad("q"))?),
                "tau" => tau = Some(value.parse::<usize>().map_err(|_| bad("tau"))?),
                "noise" => noise = Some(value.parse::<f64>().map_err(|_| bad("noise"))?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("seed"))?),
                "components" => {
                    comps = Some(value.split(',').map(Component::from_str).collect::<Result<Vec<_>, _>>().map_err(|e| err(n, e))?)
                }
                "theta_spec" => spec = Some(value.parse::<BlockSpec>().map_err(|e| err(n, e.to_string()))?),
                "theta" => theta = Some(parse_floats(value).map_err(|e| err(n, e))?),
                other => return Err(err(n, format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| err(0, format!("missing `{k}`"));
        let (q, tau) = (q.ok_or_else(|| missing("q"))?, tau.ok_or_else(|| missing("tau"))?);
        let noise = noise.ok_or_else(|| missing("noise"))?;
        let components = comps.ok_or_else(|| missing("components"))?;
        if components.len() != q {
            return Err(err(0, format!("{} components for q = {q}", components.len())));
        }
        let theta_star = match (spec, theta) {
            (Some(spec), Some(v)) => Some(devectorize(&v, &spec).map_err(|e| err(0, e.to_string()))?),
            (None, None) => None,
            _ => return Err(err(0, "theta_spec and theta must appear together".into())),
        };
        let (hn, _) = header_line.ok_or_else(|| missing("column header"))?;

        let (mut times, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines {
            let v = parse_floats(line).map_err(|e| err(n, e))?;
            if v.len() != 1 + 2 * q {
                return Err(err(n, format!("expected {} columns, found {}", 1 + 2 * q, v.len())));
            }
            times.push(v[0]);
            ys.push(Vector::from_column_slice(&v[1..1 + q]));
            ws.push(Vector::from_column_slice(&v[1 + q..]));
        }
        if times.len() != tau {
            return Err(err(hn, format!("{} rows for tau = {tau}", times.len())));
        }
        Ok(Self {
            model: MeasurementModel { components, sample_times: times, noise },
            measurements: ys,
            noise_draws: ws,
            seed,
            theta_star,
        })
    }
}

fn join<'a>(vals: impl Iterator<Item = &'a f64>) -> String {
    vals.map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`"))).collect()
}

/// Solves at `theta_star` and records `g + noise * w` with `w ~ N(0, I)` at
/// every sample time. Deterministic in `seed`.
pub fn generate_demos(
    prob: &OcProblem,
    theta_star: &SymBlockMatrix,
    model: &MeasurementModel,
    seed: u64,
) -> Result<DemoSet, IocError> {
    generate_demos_with(prob, theta_star, model, seed, &BarrierConfig::default())
}

pub fn generate_demos_with(
    prob: &OcProblem,
    theta_star: &SymBlockMatrix,
    model: &MeasurementModel,
    seed: u64,
    solver: &BarrierConfig,
) -> Result<DemoSet, IocError> {
    let nodes = model.node_indices(prob)?;
    let traj = solve_with(prob, theta_star, solver)?;
    let clean = model.measure(&traj, &nodes);
    let mut rng = rng_from_seed(seed);
    let mut draws = Vec::with_capacity(clean.len());
    let mut measurements = Vec::with_capacity(clean.len());
    for y in clean {
        let w = Vector::from_fn(y.len(), |_, _| StandardNormal.sample(&mut rng));
        measurements.push(if model.noise > 0.0 { y + &w * model.noise } else { y });
        draws.push(w);
    }
    Ok(DemoSet { model: model.clone(), measurements, noise_draws: draws, seed: Some(seed), theta_star: Some(theta_star.clone()) })
}

/// The bilevel loss `sum_i ||y(t_i) - g(x(t_i; theta), u(t_i; theta))||^2`.
#[derive(Debug, Clone)]
pub struct IocLoss {
    prob: OcProblem,
    demos: DemoSet,
    nodes: Vec<usize>,
    solver: BarrierConfig,
}

/// Binds a problem to demonstrations; fails if their dimensions disagree.
pub fn make_loss(prob: &OcProblem, demos: &DemoSet) -> Result<IocLoss, IocError> {
    let nodes = demos.model.node_indices(prob)?;
    let q = demos.model.q();
    if demos.measurements.len() != nodes.len() || demos.measurements.iter().any(|y| y.len() != q) {
        return Err(IocError::Mismatch(format!("expected {} measurements of length {q}", nodes.len())));
    }
    Ok(IocLoss { prob: prob.clone(), demos: demos.clone(), nodes, solver: BarrierConfig::default() })
}

impl IocLoss {
    pub fn with_solver(mut self, solver: BarrierConfig) -> Self {
        self.solver = solver;
        self
    }

    pub fn problem(&self) -> &OcProblem {
        &self.prob
    }

    pub fn demos(&self) -> &DemoSet {
        &self.demos
    }

    /// Noise-free measurements predicted at `theta`.
    pub fn predict(&self, theta: &SymBlockMatrix) -> Result<Vec<Vector>, SolveError> {
        let traj = solve_with(&self.prob, theta, &self.solver)?;
        Ok(self.demos.model.measure(&traj, &self.nodes))
    }
}

impl LossFn for IocLoss {
    fn eval(&self, theta: &SymBlockMatrix) -> Result<f64, EvalError> {
        let pred = self.predict(theta).map_err(|e| EvalError::Solver(e.to_string()))?;
        Ok(sq_dist(&pred, &self.demos.measurements))
    }
}

/// `sum_i ||a_i - b_i||^2`.
pub fn sq_dist(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_names_round_trip() {
        for c in [Component::State(0), Component::State(12), Component::Control(3)] {
            assert_eq!(c.to_string().parse::<Component>().unwrap(), c);
        }
        assert!("y1".parse::<Component>().is_err());
        assert!("x".parse::<Component>().is_err());
    }

    #[test]
    fn uniform_times_exclude_zero_and_end_at_horizon() {
        let m = MeasurementModel::positions(2, 10, 3.0, 0.0);
        assert_eq!(m.sample_times.len(), 10);
        assert_eq!(m.sample_times[0], 0.3);
        assert_eq!(*m.sample_times.last().unwrap(), 3.0);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(DemoSet::from_text("").is_err());
        assert!(DemoSet::from_text("zorms-demos 2\n").is_err());
        let ok = "zorms-demos 1\nq=1\ntau=1\nnoise=0.0\ncomponents=x0\nt,y0,w0\n1.0,2.0,0.0\n";
        assert!(DemoSet::from_text(ok).is_ok());
        assert!(DemoSet::from_text(&ok.replace("tau=1", "tau=2")).is_err());
        assert!(DemoSet::from_text(&ok.replace("2.0,0.0", "2.0")).is_err());
        assert!(DemoSet::from_text(&ok.replace("q=1", "q=1\nbogus=3")).is_err());
    }
}
