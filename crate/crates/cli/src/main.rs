//! `zorms`: generate demonstrations, run the search or the Nelder-Mead
//! baseline on registered benchmarks, print complexity bounds and summarize
//! run logs.
//!
//! Exit codes: 0 success, 1 I/O or solver failure, 2 configuration error,
//! 3 run aborted.

mod config;
mod output;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zorms_core::baseline::{nelder_mead, NelderMeadConfig, NelderMeadError};
use zorms_core::benchmarks::{names, BenchmarkDef};
use zorms_core::ioc::{generate_demos, make_loss, DemoSet, IocError, MeasurementModel};
use zorms_core::optimizer::{run, schedule_prop1, schedule_prop2};
use zorms_core::par::{map_slice, Execution};
use zorms_core::randmat::{moments, reference_m4};
use zorms_core::record::{median, read_rows, read_summary, summarize, write_summary, SummaryRow};
use zorms_core::{BlockSpec, IterRow, RunError, RunRecord, ZormsConfig};

use config::{ExperimentConfig, Optimizer, Resolved, Schedule, VariantName};
use output::{write_atomic, Staging};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run aborted: {0}")]
    Aborted(String),
    #[error("{0}")]
    Failed(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Aborted(_) => 3,
            CliError::Failed(_) | CliError::Io { .. } => 1,
        }
    }
}

impl From<IocError> for CliError {
    fn from(e: IocError) -> Self {
        match e {
            IocError::Solve(_) => CliError::Failed(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "zorms", version, about = "Zeroth-order learning of optimal control problems from demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate demonstration files from a benchmark's ground truth.
    Demo(DemoArgs),
    /// Learn a benchmark's parameters from demonstrations over several seeds.
    Run(RunArgs),
    /// Print GOE moments and step-size schedules as key=value lines.
    Bounds(BoundsArgs),
    /// Re-read run logs, print their key numbers and optionally aggregate them.
    Report(ReportArgs),
    /// List registered benchmarks.
    List,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    benchmark: String,
    #[arg(long, value_enum)]
    variant: Option<VariantName>,
    /// Noise scales; one file is written per value.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    noise: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of measurement times (defaults to the benchmark's).
    #[arg(long)]
    tau: Option<usize>,
    /// Output file; only with a single noise value.
    #[arg(long, conflicts_with = "out_dir")]
    out: Option<PathBuf>,
    /// Directory for `<benchmark>-noise<nu>-seed<seed>.txt` files (default `$ZORMS_OUT/demos`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with experiment keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long, value_enum)]
    variant: Option<VariantName>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    demo_seed: Option<u64>,
    /// Demonstration file to learn from instead of generating one.
    #[arg(long)]
    demos: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', conflicts_with = "num_seeds")]
    seeds: Option<Vec<u64>>,
    /// Shorthand for seeds 0..N.
    #[arg(long)]
    num_seeds: Option<u64>,
    #[arg(long, value_enum)]
    optimizer: Option<Optimizer>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, value_enum)]
    schedule: Option<Schedule>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    r_bar: Option<f64>,
    #[arg(long)]
    resample_limit: Option<usize>,
    #[arg(long)]
    start_scale: Option<f64>,
    #[arg(long)]
    simplex_scale: Option<f64>,
    #[arg(long)]
    simplex_tol: Option<f64>,
    /// Run directory (default `$ZORMS_OUT/<benchmark>/<optimizer>`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_svg: bool,
    /// Run seeds one after another.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig, CliError> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let flags = ExperimentConfig {
            benchmark: self.benchmark,
            variant: self.variant,
            noise: self.noise,
            tau: self.tau,
            demo_seed: self.demo_seed,
            demos: self.demos,
            seeds: self.seeds.or(self.num_seeds.map(|n| (0..n).collect())),
            optimizer: self.optimizer,
            iterations: self.iterations,
            mu: self.mu,
            schedule: self.schedule,
            alpha: self.alpha,
            eps: self.eps,
            delta: self.delta,
            lipschitz: self.lipschitz,
            r_bar: self.r_bar,
            resample_limit: self.resample_limit,
            start_scale: self.start_scale,
            simplex_scale: self.simplex_scale,
            simplex_tol: self.simplex_tol,
            output: self.out,
            svg: self.no_svg.then_some(false),
            parallel: self.sequential.then_some(false),
        };
        Ok(base.overlay(flags))
    }
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("shape").required(true).args(["spec", "split"])))]
struct BoundsArgs {
    /// Block sizes, e.g. `(2,3)`.
    #[arg(long)]
    spec: Option<String>,
    /// Total dimension to split into equal blocks, one line per divisor.
    #[arg(long)]
    split: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    r_bar: f64,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    /// Enables the nonconvex schedule.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Run CSVs, summary CSVs, or run directories.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Write the per-iteration summary of all run CSVs here.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Write a loss-curve plot of all run CSVs here.
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Demo(a) => cmd_demo(a),
        Command::Run(a) => a.into_config().and_then(cmd_run),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Report(a) => cmd_report(a),
        Command::List => {
            names().iter().for_each(|n| println!("{n}"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zorms: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn benchmark(name: &str, variant: Option<VariantName>) -> Result<BenchmarkDef, CliError> {
    let cfg = ExperimentConfig { benchmark: Some(name.to_string()), variant, ..Default::default() };
    Ok(cfg.resolve()?.bench)
}

fn model_for(bench: &BenchmarkDef, tau: Option<usize>, noise: f64) -> Result<MeasurementModel, CliError> {
    if tau == Some(0) {
        return Err(CliError::Config("tau must be at least 1".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(CliError::Config(format!("noise must be a nonnegative number, got {noise}")));
    }
    let tau = tau.unwrap_or(bench.model.tau());
    Ok(MeasurementModel::uniform(bench.model.components.clone(), tau, bench.duration, noise))
}

fn cmd_demo(a: DemoArgs) -> Result<(), CliError> {
    let bench = benchmark(&a.benchmark, a.variant)?;
    if a.out.is_some() && a.noise.len() != 1 {
        return Err(CliError::Config("--out takes a single noise value; use --out-dir for sweeps".into()));
    }
    for &noise in &a.noise {
        let model = model_for(&bench, a.tau, noise)?;
        let demos = generate_demos(&bench.problem, &bench.theta_star, &model, a.seed)?;
        let path = match &a.out {
            Some(p) => p.clone(),
            None => a
                .out_dir
                .clone()
                .unwrap_or_else(|| config::output_root().join("demos"))
                .join(format!("{}-noise{noise}-seed{}.txt", bench.name, a.seed)),
        };
        write_atomic(&path, demos.to_text().as_bytes())?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run_error(seed: u64, e: RunError) -> CliError {
    match e {
        RunError::InvalidConfig(_) | RunError::Param(_) => CliError::Config(e.to_string()),
        _ => CliError::Aborted(format!("seed {seed}: {e}")),
    }
}

fn run_seed(r: &Resolved, loss: &zorms_core::ioc::IocLoss, seed: u64, inner: Execution) -> Result<RunRecord, CliError> {
    let b = &r.bench;
    let start = b.perturbed_start(r.file.start_scale.unwrap_or(0.5), seed);
    match r.file.optimizer.unwrap_or(Optimizer::Zorms) {
        Optimizer::Zorms => {
            let cfg = ZormsConfig { seed, execution: inner, ..r.zorms.clone() };
            run(loss, &b.space, &start, &cfg).map_err(|e| run_error(seed, e))
        }
        Optimizer::NelderMead => {
            let cfg = NelderMeadConfig {
                max_iters: r.zorms.iterations,
                tol: r.file.simplex_tol.unwrap_or(1e-8),
                initial_scale: r.file.simplex_scale,
            };
            nelder_mead(loss, &b.space, &start, &cfg).map_err(|e| match e {
                NelderMeadError::AllInitialFailed(_) => CliError::Aborted(format!("seed {seed}: {e}")),
                NelderMeadError::Param(_) => CliError::Config(e.to_string()),
            })
        }
    }
}

fn cmd_run(cfg: ExperimentConfig) -> Result<(), CliError> {
    let r = cfg.resolve()?;
    let b = &r.bench;
    let demos = match &r.file.demos {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            DemoSet::from_text(&text)?
        }
        None => {
            let model = model_for(b, r.file.tau, r.file.noise.unwrap_or(0.0))?;
            generate_demos(&b.problem, &b.theta_star, &model, r.file.demo_seed.unwrap_or(0))?
        }
    };
    let loss = make_loss(&b.problem, &demos)?;
    let staging = Staging::new(r.output())?;

    let parallel = r.file.parallel.unwrap_or(true);
    let (outer, inner) =
        if parallel { (Execution::Parallel, Execution::Sequential) } else { (Execution::Sequential, Execution::Parallel) };
    let records = map_slice(outer, r.seeds(), |&seed| run_seed(&r, &loss, seed, inner));
    let records: Vec<RunRecord> = records.into_iter().collect::<Result<_, _>>()?;

    let mut buf = Vec::new();
    for (seed, rec) in r.seeds().iter().zip(&records) {
        buf.clear();
        rec.write_csv(&mut buf).map_err(|e| CliError::Failed(e.to_string()))?;
        staging.write(&format!("seed-{seed}.csv"), &buf)?;
    }
    let runs: Vec<Vec<IterRow>> = records.iter().map(|r| r.rows.clone()).collect();
    let summary = summarize(&runs);
    buf.clear();
    write_summary(&summary, &mut buf).map_err(|e| CliError::Failed(e.to_string()))?;
    staging.write("summary.csv", &buf)?;
    staging.write("demos.txt", demos.to_text().as_bytes())?;
    if r.file.svg.unwrap_or(true) {
        let traces: Vec<Vec<f64>> = runs.iter().map(|r| r.iter().map(|x| x.loss).collect()).collect();
        let title = format!("{} ({:?}, {} seeds)", b.name, r.file.optimizer.unwrap_or(Optimizer::Zorms), records.len());
        staging.write("loss.svg", svg::loss_curves(&title, &traces, &summary).as_bytes())?;
    }
    staging.write(output::RUN_MARKER, r.to_toml().as_bytes())?;
    let dir = staging.commit()?;

    let best: Vec<f64> = records.iter().map(|r| r.best_loss).collect();
    let initial: Vec<f64> = records.iter().map(|r| r.initial_loss()).collect();
    println!("output={}", dir.display());
    println!("benchmark={}", b.name);
    println!("seeds={}", records.len());
    println!("median_initial_loss={}", median(&initial));
    println!("median_best_loss={}", median(&best));
    println!("skipped_iterations={}", records.iter().map(|r| r.skipped()).sum::<usize>());
    Ok(())
}

fn parse_spec(s: &str) -> Result<BlockSpec, CliError> {
    s.parse().map_err(|e: zorms_core::ParamError| CliError::Config(format!("invalid spec {s:?}: {e}")))
}

fn cmd_bounds(a: BoundsArgs) -> Result<(), CliError> {
    for (name, v) in [("lambda", a.lambda), ("r_bar", a.r_bar), ("eps", a.eps), ("delta", a.delta.unwrap_or(1.0))] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if let Some(p) = a.split {
        if p == 0 {
            return Err(CliError::Config("split must be at least 1".into()));
        }
        for blocks in (1..=p).filter(|k| p % k == 0) {
            let spec = BlockSpec::new(vec![p / blocks; blocks]).expect("positive sizes");
            let m = moments(&spec);
            let r = reference_m4(&spec);
            println!(
                "p={p} blocks={blocks} spec={spec} m2={} m4={} reference_m4_full={} reference_m4_vector={}",
                m.m2_exact, m.m4_exact, r.full_matrix, r.vector
            );
        }
        return Ok(());
    }
    let spec = parse_spec(a.spec.as_deref().expect("group requires one"))?;
    let m = moments(&spec);
    let r = reference_m4(&spec);
    let p1 = schedule_prop1(a.eps, a.lambda, a.r_bar, &spec);
    println!("spec={spec}");
    println!("m1_bound={}", m.m1_bound);
    println!("m2={}", m.m2_exact);
    println!("m4={}", m.m4_exact);
    println!("reference_m4_full={}", r.full_matrix);
    println!("reference_m4_vector={}", r.vector);
    println!("prop1_mu_max={}", p1.mu_max);
    println!("prop1_alpha_scale={}", p1.alpha_scale);
    println!("prop1_n_min={}", p1.n_min);
    if let Some(delta) = a.delta {
        let p2 = schedule_prop2(a.eps, delta, a.lambda, a.r_bar, a.iterations, &spec);
        println!("prop2_mu={}", p2.mu);
        println!("prop2_alpha={}", p2.alpha);
        println!("prop2_n_min={}", p2.n_min);
        if let Some(w) = p2.warning {
            println!("prop2_warning={w}");
        }
    }
    Ok(())
}

enum Log {
    Run(Vec<IterRow>),
    Summary(Vec<SummaryRow>),
}

fn read_log(path: &Path) -> Result<Log, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let header = text.lines().next().unwrap_or_default();
    let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    if header.starts_with("iter,loss,") {
        Ok(Log::Run(read_rows(text.as_bytes()).map_err(|e| bad(&e))?))
    } else if header.starts_with("iter,runs,") {
        Ok(Log::Summary(read_summary(text.as_bytes()).map_err(|e| bad(&e))?))
    } else {
        Err(CliError::Config(format!("{}: not a run or summary CSV", path.display())))
    }
}

/// Expands run directories into their per-seed logs and summary.
fn expand(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn cmd_report(a: ReportArgs) -> Result<(), CliError> {
    let mut runs = Vec::new();
    for path in expand(&a.inputs)? {
        match read_log(&path)? {
            Log::Run(rows) => {
                let losses: Vec<f64> = rows.iter().map(|r| r.loss).collect();
                let best = losses.iter().copied().filter(|l| l.is_finite()).fold(f64::INFINITY, f64::min);
                println!(
                    "file={} kind=run rows={} initial_loss={} best_loss={} final_loss={} skipped={}",
                    path.display(),
                    rows.len(),
                    losses.first().copied().unwrap_or(f64::NAN),
                    best,
                    losses.last().copied().unwrap_or(f64::NAN),
                    rows.iter().filter(|r| r.skipped).count()
                );
                runs.push(rows);
            }
            Log::Summary(rows) => {
                let last = rows.last();
                println!(
                    "file={} kind=summary rows={} runs={} final_mean_loss={} final_median_best={}",
                    path.display(),
                    rows.len(),
                    last.map_or(0, |r| r.runs),
                    last.map_or(f64::NAN, |r| r.mean_loss),
                    last.map_or(f64::NAN, |r| r.median_best)
                );
            }
        }
    }
    if (a.summary.is_some() || a.svg.is_some()) && runs.is_empty() {
        return Err(CliError::Config("no run CSVs to aggregate".into()));
    }
    let summary = summarize(&runs);
    if let Some(p) = &a.summary {
        let mut buf = Vec::new();
        write_summary(&summary, &mut buf).map_err(|e| CliError::Failed(e.to_string()))?;
        write_atomic(p, &buf)?;
    }
    if let Some(p) = &a.svg {
        let traces: Vec<Vec<f64>> = runs.iter().map(|r| r.iter().map(|x| x.loss).collect()).collect();
        write_atomic(p, svg::loss_curves(&format!("{} runs", runs.len()), &traces, &summary).as_bytes())?;
    }
    Ok(())
}
