use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use retention_core::harness::{
    dp_demo, fmt_f64, lower_bound_probe, lower_bound_threshold, mean_csv, regression_csv, run_seeds, run_sweep,
    sgd_csv, table_csv, SweepSpec,
};
use retention_core::mean_estimation::{baseline_run, run_alg1, run_improved};
use retention_core::regression::{group_mle_density_probe_with, ols_baseline, run_alg2};
use retention_core::rng::{seeded_rng, STREAM_PROBE};
use retention_core::sgd::{first_bound_violation, mean_trajectory, NoiseOracle, NoisySgdSpec};
use retention_core::subset_sum::{rss_success_probability, rss_success_probability_vec};
use retention_core::{DesignSpec, DistributionSpec, Engine, Error, EtaSchedule, RunConfig, RunResult};

/// Simulator for online estimation when only a small, recent sample of the
/// stream may be kept.
///
/// CSV schemas:
///   mean-*       seed,T,m,d,sq_error,max_encoding_error,compliance_ok
///   regress-*    seed,T,m,d,k,param_sq_error,worst_case_pred_error,singular_groups,compliance_ok
///   sgd-check    t,mean_L,bound
///   rss-probe    n,d,epsilon,trials,success_probability
///   lower-bound  d,m,epsilon,threshold,trials,failure_probability
///   density      bin,lo,hi,density
///   sweep        kind,algorithm,axis,value,seed,sq_error,sq_error_se,max_encoding_error,compliance_ok,status
///
/// Floats are printed with 17 significant digits. Exit status: 0 success,
/// 1 run failure, 2 configuration error.
#[derive(Parser, Debug)]
#[command(name = "retention-lab", version, verbatim_doc_comment)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Vector mean estimation with subset encoding.
    MeanAlg1(RunArgs),
    /// Per-coordinate mean estimation (d scalar instances).
    MeanImproved(RunArgs),
    /// Keep-the-last-batch mean baseline.
    MeanBaseline(RunArgs),
    /// Linear regression with grouped-MLE encoding.
    RegressAlg2(RunArgs),
    /// OLS on the last batch.
    RegressBaseline(RunArgs),
    /// Histogram of single-group OLS fits for one coordinate.
    RegressDensityProbe(DensityArgs),
    /// Mean loss of noisy SGD against the 7Γ²/(λ²t) bound.
    SgdCheck(SgdArgs),
    /// Random subset-sum success probability.
    RssProbe(RssArgs),
    /// Genie-aided failure probability of subset means.
    LowerBoundProbe(LowerBoundArgs),
    /// Two neighbouring batches with disjoint retained sets.
    DpDemo(OutArgs),
    /// Multi-seed sweep over one parameter.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct OutArgs {
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON output path (one JSON document per line).
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// RunConfig JSON; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "T")]
    t: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// DistributionSpec JSON file.
    #[arg(long)]
    dist: Option<PathBuf>,
    /// exact, mitm or greedy.
    #[arg(long)]
    engine: Option<String>,
    /// inverse_t, inverse_lambda_t:<λ> or constant:<c>.
    #[arg(long)]
    eta: Option<String>,
    /// Exit with status 1 if any run keeps a stale item.
    #[arg(long)]
    check_compliance: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct DensityArgs {
    /// Regression DistributionSpec JSON file.
    #[arg(long)]
    dist: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    coordinate: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 0.25)]
    half_width: f64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum NoiseKind {
    Zero,
    Gaussian,
    Adversarial,
}

#[derive(Args, Debug)]
struct SgdArgs {
    /// NoisySgdSpec JSON; replaces the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long = "T", default_value_t = 10_000)]
    t: u64,
    /// Γ² in the bound.
    #[arg(long, default_value_t = 2.0)]
    gamma_sq: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long, value_enum, default_value_t = NoiseKind::Adversarial)]
    noise: NoiseKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    seeds: usize,
    /// Exit with status 1 if the mean loss crosses the bound.
    #[arg(long)]
    check_bound: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct RssArgs {
    /// Candidate counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10,15,20,25")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct LowerBoundArgs {
    #[arg(long, default_value_t = 6)]
    d: usize,
    /// Batch sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    m: Vec<usize>,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// SweepSpec JSON file.
    #[arg(long, alias = "config")]
    spec: PathBuf,
    #[command(flatten)]
    out: OutArgs,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Run(e.into())
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<T, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_err)
}

fn emit(out: &OutArgs, csv: &str, json_lines: &[String]) -> Outcome {
    match &out.out {
        Some(path) => fs::write(path, csv)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Run)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(csv.as_bytes())
                .context("writing stdout")
                .map_err(Failure::Run)?;
        }
    }
    if let Some(path) = &out.json_out {
        let mut text = json_lines.join("\n");
        text.push('\n');
        fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Run)?;
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> std::result::Result<String, Failure> {
    serde_json::to_string(value).context("serializing JSON").map_err(Failure::Run)
}

#[derive(Clone, Copy, PartialEq)]
enum Task {
    Mean,
    Regression,
}

fn default_distribution(task: Task, d: usize) -> DistributionSpec {
    match task {
        Task::Mean => DistributionSpec::ContaminatedUniformMean {
            theta: vec![0.0; d],
            gamma: 1.0,
            p: 0.5,
            sigma: 1.0,
        },
        Task::Regression => DistributionSpec::Regression {
            theta: (0..d).map(|i| if i % 2 == 0 { 0.5 } else { -0.25 }).collect(),
            design: DesignSpec::UniformBox { b: 1.0 },
            sigma: 0.5,
        },
    }
}

fn build_config(args: &RunArgs, task: Task) -> std::result::Result<RunConfig, Failure> {
    let dist: Option<DistributionSpec> = args.dist.as_deref().map(read_json).transpose()?;
    let mut cfg = match &args.config {
        Some(path) => read_json::<RunConfig>(path)?,
        None => {
            let (Some(m), Some(t)) = (args.m, args.t) else {
                return Err(config_err(anyhow::anyhow!("--m and --T are required without --config")));
            };
            let dist = match &dist {
                Some(d) => d.clone(),
                None => default_distribution(task, args.d.unwrap_or(if task == Task::Mean { 1 } else { 2 })),
            };
            RunConfig::new(m, t, dist)
        }
    };
    if let Some(d) = dist {
        cfg.d = d.dim();
        cfg.distribution = d;
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(t) = args.t {
        cfg.t = t;
    }
    if let Some(d) = args.d {
        if d != cfg.d {
            return Err(Error::Dimension {
                expected: cfg.d,
                got: d,
            }
            .into());
        }
    }
    if args.b.is_some() {
        cfg.b = args.b;
    }
    if args.k.is_some() {
        cfg.k = args.k;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(engine) = &args.engine {
        cfg.engine = engine.parse::<Engine>()?;
    }
    if let Some(eta) = &args.eta {
        cfg.eta_schedule = eta.parse::<EtaSchedule>()?;
    }
    if args.seeds == 0 {
        return Err(config_err(anyhow::anyhow!("--seeds must be positive")));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_many(
    args: &RunArgs,
    task: Task,
    run: fn(&RunConfig) -> retention_core::Result<RunResult>,
) -> Outcome {
    let cfg = build_config(args, task)?;
    let results = run_seeds(&cfg, args.seeds, run)
        .into_iter()
        .collect::<retention_core::Result<Vec<_>>>()?;
    let csv = match task {
        Task::Mean => mean_csv(&cfg, &results)?,
        Task::Regression => regression_csv(&cfg, &results)?,
    };
    let json = results.iter().map(to_json).collect::<std::result::Result<Vec<_>, _>>()?;
    emit(&args.out, &csv, &json)?;
    if args.check_compliance {
        let stale = results.iter().filter(|r| !r.compliance_ok).count();
        if stale > 0 {
            return Err(Failure::Run(anyhow::anyhow!("{stale} run(s) violated the recency contract")));
        }
    }
    Ok(())
}

fn density(args: &DensityArgs) -> Outcome {
    let spec = match &args.dist {
        Some(p) => read_json(p)?,
        None => default_distribution(Task::Regression, args.d),
    };
    let mut rng = seeded_rng(args.seed, STREAM_PROBE);
    let probe = group_mle_density_probe_with(
        &spec,
        args.k,
        args.coordinate,
        args.trials,
        args.half_width,
        args.bins,
        &mut rng,
    )?;
    let width = (probe.window.1 - probe.window.0) / args.bins as f64;
    let rows: Vec<Vec<String>> = probe
        .densities
        .iter()
        .enumerate()
        .map(|(i, &dens)| {
            vec![
                i.to_string(),
                fmt_f64(probe.window.0 + i as f64 * width),
                fmt_f64(probe.window.0 + (i + 1) as f64 * width),
                fmt_f64(dens),
            ]
        })
        .collect();
    let csv = table_csv(&["bin", "lo", "hi", "density"], &rows)?;
    eprintln!(
        "min density {} singular fraction {} iqr {}",
        fmt_f64(probe.min_density),
        fmt_f64(probe.singular_fraction),
        fmt_f64(probe.iqr)
    );
    emit(&args.out, &csv, &[to_json(&probe)?])
}

fn sgd(args: &SgdArgs) -> Outcome {
    let spec: NoisySgdSpec = match &args.config {
        Some(p) => read_json(p)?,
        None => {
            if !(args.gamma_sq > 0.0) {
                return Err(config_err(anyhow::anyhow!("--gamma-sq must be positive")));
            }
            let gamma = args.gamma_sq.sqrt();
            let budget = retention_core::sgd::noise_budget(gamma, 1.0, args.t);
            let noise = match args.noise {
                NoiseKind::Zero => NoiseOracle::ZeroNoise,
                NoiseKind::Gaussian => NoiseOracle::GaussianNoise { scale: budget },
                NoiseKind::Adversarial => NoiseOracle::AdversarialWorstCase { scale: budget },
            };
            NoisySgdSpec::unit_quadratic(vec![0.0; args.d], args.noise_sd, gamma, noise, args.t)
        }
    };
    let mean = mean_trajectory(&spec, args.seed, args.seeds)?;
    let csv = sgd_csv(&mean, |t| spec.bound(t))?;
    let violation = first_bound_violation(&spec, &mean);
    match violation {
        Some(t) => eprintln!("mean loss exceeds the bound first at t={t}"),
        None => eprintln!("mean loss within the bound for all t in [2, {}]", spec.t),
    }
    emit(&args.out, &csv, &[to_json(&mean)?])?;
    if args.check_bound && violation.is_some() {
        return Err(Failure::Run(anyhow::anyhow!("bound violated")));
    }
    Ok(())
}

fn rss(args: &RssArgs) -> Outcome {
    let mut rows = Vec::new();
    for &n in &args.n {
        let mut rng = seeded_rng(args.seed, STREAM_PROBE);
        let p = if args.d == 1 {
            rss_success_probability(n, args.epsilon, args.trials, &mut rng)?
        } else {
            rss_success_probability_vec(n, args.d, args.epsilon, args.trials, &mut rng)?
        };
        rows.push(vec![
            n.to_string(),
            args.d.to_string(),
            fmt_f64(args.epsilon),
            args.trials.to_string(),
            fmt_f64(p),
        ]);
    }
    let csv = table_csv(&["n", "d", "epsilon", "trials", "success_probability"], &rows)?;
    emit(&args.out, &csv, &[])
}

fn lower_bound(args: &LowerBoundArgs) -> Outcome {
    let threshold = lower_bound_threshold(args.d, args.epsilon);
    let mut rows = Vec::new();
    for &m in &args.m {
        let mut rng = seeded_rng(args.seed, STREAM_PROBE);
        let p = lower_bound_probe(args.d, m, args.epsilon, args.trials, &mut rng)?;
        rows.push(vec![
            args.d.to_string(),
            m.to_string(),
            fmt_f64(args.epsilon),
            fmt_f64(threshold),
            args.trials.to_string(),
            fmt_f64(p),
        ]);
    }
    let csv = table_csv(&["d", "m", "epsilon", "threshold", "trials", "failure_probability"], &rows)?;
    emit(&args.out, &csv, &[])
}

fn dp(out: &OutArgs) -> Outcome {
    let report = dp_demo();
    let fmt_sets = |sets: &[Vec<f64>]| {
        let inner: Vec<String> = sets
            .iter()
            .map(|s| format!("{{{}}}", s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        format!("{{{}}}", inner.join(","))
    };
    let rows: Vec<Vec<String>> = report
        .cases
        .iter()
        .map(|c| {
            vec![
                format!("({})", c.batch.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")),
                c.gradient_item.to_string(),
                c.target.to_string(),
                format!("{{{}}}", c.kept.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")),
            ]
        })
        .collect();
    let csv = table_csv(&["batch", "gradient_item", "target", "kept"], &rows)?;
    eprintln!(
        "image (0,10,10) = {}, image (0,0,10) = {}, disjoint = {}",
        fmt_sets(&report.image),
        fmt_sets(&report.image_neighbour),
        report.disjoint
    );
    emit(out, &csv, &[to_json(&report)?])?;
    if !report.disjoint {
        return Err(Failure::Run(anyhow::anyhow!("image sets intersect")));
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Outcome {
    let spec: SweepSpec = read_json(&args.spec)?;
    let table = run_sweep(&spec)?;
    let json = table.rows.iter().map(to_json).collect::<std::result::Result<Vec<_>, _>>()?;
    emit(&args.out, &table.to_csv()?, &json)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::MeanAlg1(a) => run_many(a, Task::Mean, run_alg1),
        Command::MeanImproved(a) => run_many(a, Task::Mean, run_improved),
        Command::MeanBaseline(a) => run_many(a, Task::Mean, baseline_run),
        Command::RegressAlg2(a) => run_many(a, Task::Regression, run_alg2),
        Command::RegressBaseline(a) => run_many(a, Task::Regression, ols_baseline),
        Command::RegressDensityProbe(a) => density(a),
        Command::SgdCheck(a) => sgd(a),
        Command::RssProbe(a) => rss(a),
        Command::LowerBoundProbe(a) => lower_bound(a),
        Command::DpDemo(a) => dp(a),
        Command::Sweep(a) => sweep(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
