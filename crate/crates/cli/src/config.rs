//! Experiment configuration: a TOML file overlaid with command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zorms_core::benchmarks::{by_name, BenchmarkDef};
use zorms_core::{Execution, StepSchedule, ZormsConfig};

use crate::CliError;

/// Output root when `ZORMS_OUT` is unset.
pub const DEFAULT_ROOT: &str = "zorms-out";

/// Root directory for default output paths.
pub fn output_root() -> PathBuf {
    std::env::var_os("ZORMS_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Zorms,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Constant,
    Decaying,
    Prop1,
    Prop2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    Unconstrained,
    Constrained,
}

/// Every key is optional in the file; unset keys take the benchmark's
/// defaults. The resolved form written beside the outputs has all of them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: Option<String>,
    pub variant: Option<VariantName>,
    pub noise: Option<f64>,
    pub tau: Option<usize>,
    pub demo_seed: Option<u64>,
    /// Demonstration file to learn from instead of generating one.
    pub demos: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub optimizer: Option<Optimizer>,
    pub iterations: Option<usize>,
    pub mu: Option<f64>,
    pub schedule: Option<Schedule>,
    /// Step size of the constant schedule, or `c` in `c / sqrt(k + 1)`.
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub lipschitz: Option<f64>,
    pub r_bar: Option<f64>,
    pub resample_limit: Option<usize>,
    /// Scale of the random perturbation of the truth used as the start.
    pub start_scale: Option<f64>,
    pub simplex_scale: Option<f64>,
    pub simplex_tol: Option<f64>,
    pub output: Option<PathBuf>,
    pub svg: Option<bool>,
    /// Run seeds concurrently.
    pub parallel: Option<bool>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Keys set in `other` win.
    pub fn overlay(self, other: ExperimentConfig) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { ExperimentConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            benchmark, variant, noise, tau, demo_seed, demos, seeds, optimizer, iterations, mu, schedule, alpha,
            eps, delta, lipschitz, r_bar, resample_limit, start_scale, simplex_scale, simplex_tol, output, svg,
            parallel
        )
    }

    /// Validates and fills every key.
    pub fn resolve(self) -> Result<Resolved, CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let Some(mut name) = self.benchmark.clone() else {
            return bad("no benchmark given".into());
        };
        match self.variant {
            Some(VariantName::Constrained) if !name.ends_with("-constrained") => name.push_str("-constrained"),
            Some(VariantName::Unconstrained) if name.ends_with("-constrained") => {
                return bad(format!("benchmark {name} is the constrained variant"))
            }
            _ => {}
        }
        let Some(bench) = by_name(&name) else {
            return bad(format!("unknown benchmark {name:?}"));
        };
        let seeds = self.seeds.clone().unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let defaults = &bench.zorms;
        let (default_alpha, default_mu) = match defaults.step {
            StepSchedule::Constant(a) | StepSchedule::Decaying(a) => (a, defaults.mu),
            _ => (0.01, defaults.mu),
        };
        let alpha = self.alpha.unwrap_or(default_alpha);
        let schedule = self.schedule.unwrap_or(Schedule::Constant);
        let step = match schedule {
            Schedule::Constant => StepSchedule::Constant(alpha),
            Schedule::Decaying => StepSchedule::Decaying(alpha),
            Schedule::Prop1 => StepSchedule::Prop1 { eps: self.eps.ok_or_else(|| CliError::Config("prop1 needs eps".into()))? },
            Schedule::Prop2 => StepSchedule::Prop2 {
                eps: self.eps.ok_or_else(|| CliError::Config("prop2 needs eps".into()))?,
                delta: self.delta.ok_or_else(|| CliError::Config("prop2 needs delta".into()))?,
            },
        };
        let zorms = ZormsConfig {
            mu: self.mu.unwrap_or(default_mu),
            step,
            iterations: self.iterations.unwrap_or(defaults.iterations),
            lipschitz: self.lipschitz,
            r_bar: self.r_bar,
            resample_limit: self.resample_limit.unwrap_or(defaults.resample_limit),
            execution: Execution::Sequential,
            ..defaults.clone()
        };
        zorms.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let noise = self.noise.unwrap_or(0.0);
        if !(noise >= 0.0 && noise.is_finite()) {
            return bad(format!("noise must be a nonnegative number, got {noise}"));
        }
        if self.tau == Some(0) {
            return bad("tau must be at least 1".into());
        }
        let start_scale = self.start_scale.unwrap_or(0.5);
        if !(start_scale >= 0.0 && start_scale.is_finite()) {
            return bad(format!("start_scale must be nonnegative, got {start_scale}"));
        }
        if self.simplex_scale.is_some_and(|s| !(s > 0.0)) || self.simplex_tol.is_some_and(|t| !(t >= 0.0)) {
            return bad("simplex_scale must be positive and simplex_tol nonnegative".into());
        }
        let optimizer = self.optimizer.unwrap_or(Optimizer::Zorms);
        let output = self.output.clone().unwrap_or_else(|| {
            let tag = match optimizer {
                Optimizer::Zorms => "zorms",
                Optimizer::NelderMead => "nelder-mead",
            };
            output_root().join(&name).join(tag)
        });
        let file = ExperimentConfig {
            benchmark: Some(name),
            variant: Some(if bench.variant == zorms_core::benchmarks::Variant::ControlBounded {
                VariantName::Constrained
            } else {
                VariantName::Unconstrained
            }),
            noise: Some(noise),
            tau: Some(self.tau.unwrap_or(bench.model.tau())),
            demo_seed: Some(self.demo_seed.unwrap_or(0)),
            demos: self.demos,
            seeds: Some(seeds),
            optimizer: Some(optimizer),
            iterations: Some(zorms.iterations),
            mu: Some(zorms.mu),
            schedule: Some(schedule),
            alpha: Some(alpha),
            eps: self.eps,
            delta: self.delta,
            lipschitz: self.lipschitz,
            r_bar: self.r_bar,
            resample_limit: Some(zorms.resample_limit),
            start_scale: Some(start_scale),
            simplex_scale: self.simplex_scale,
            simplex_tol: Some(self.simplex_tol.unwrap_or(1e-8)),
            output: Some(output),
            svg: Some(self.svg.unwrap_or(true)),
            parallel: Some(self.parallel.unwrap_or(true)),
        };
        Ok(Resolved { bench, zorms, file })
    }
}

/// A validated configuration.
pub struct Resolved {
    pub bench: BenchmarkDef,
    pub zorms: ZormsConfig,
    /// Every key filled in; written beside the outputs.
    pub file: ExperimentConfig,
}

impl Resolved {
    pub fn seeds(&self) -> &[u64] {
        self.file.seeds.as_deref().unwrap_or_default()
    }

    pub fn output(&self) -> &Path {
        self.file.output.as_deref().expect("resolved")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("config serializes")
    }
}
