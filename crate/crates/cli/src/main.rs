use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rode_density::analysis::{
    consecutive_differences, regress_error_vs_difference, sampling_error_study, ConvergenceStudy,
    SamplingStudy,
};
use rode_density::config::{RunConfig, PRESETS};
use rode_density::density::{estimate, GridSpec, Role};
use rode_density::report::{self, CvComparisonRow};
use rode_density::series::{advise_truncation, AdvisorInput, Which};
use rode_density::Error;

#[derive(Parser, Debug)]
#[command(
    name = "rode",
    version,
    about = "Density estimation for random second-order linear ODEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the density of X(t) on a grid.
    Estimate(RunArgs),
    /// Consecutive-difference and reference-error tables over truncation orders.
    Convergence(RunArgs),
    /// Sampling-error study over nested sample sizes.
    Sampling(RunArgs),
    /// Crude versus control-variate consecutive differences and pointwise variances.
    CvCompare(RunArgs),
    /// Truncation order guaranteeing a mean-square error below epsilon.
    Advise(AdviseArgs),
    /// Print the resolved configuration as TOML.
    Config(SourceArgs),
    /// List the bundled presets.
    Presets,
}

#[derive(Args, Debug, Clone)]
struct SourceArgs {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name (see `rode presets`).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WhichArg {
    S0,
    S1,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleArg {
    ViaY0,
    ViaY1,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Base seed of the sample streams
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Truncation order N.
    #[arg(short = 'N', long = "order")]
    order: Option<usize>,
    /// Sample count M.
    #[arg(short = 'M', long = "samples")]
    samples: Option<usize>,
    /// Initial condition whose density carries the estimate
    #[arg(long, value_enum)]
    role: Option<RoleArg>,
    /// Comma-separated evaluation times.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    /// Comma-separated truncation orders of a study.
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    /// Reference order L of a convergence study; 0 disables it.
    #[arg(long)]
    reference_order: Option<usize>,
    /// Comma-separated nested sample sizes of a sampling study.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Uniform grid `LO,HI,COUNT` replacing the configured grid.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Use the control variate built from this fundamental solution.
    #[arg(long, value_enum)]
    control_variate: Option<WhichArg>,
    /// Order N0 of the control variate.
    #[arg(long)]
    control_order: Option<usize>,
    /// Pilot sample count of the control coefficient.
    #[arg(long)]
    pilot: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct AdviseArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Evaluation time.
    #[arg(long)]
    t: f64,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Intermediate radius with |t − t0| < s < r.
    #[arg(long)]
    s: Option<f64>,
    /// Convergence radius when the problem declares none.
    #[arg(long)]
    r: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    created_unix: u64,
    source: String,
    outputs: Vec<&'a str>,
    config: &'a RunConfig,
}

fn load(source: &SourceArgs) -> anyhow::Result<(RunConfig, String)> {
    match (&source.config, &source.preset) {
        (Some(path), _) => Ok((RunConfig::load(path)?, path.display().to_string())),
        (None, Some(name)) => Ok((RunConfig::preset(name)?, format!("preset:{name}"))),
        (None, None) => bail!("pass --config <file> or --preset <name>"),
    }
}

fn apply(cfg: &mut RunConfig, args: &RunArgs) -> anyhow::Result<()> {
    let e = &mut cfg.estimator;
    if let Some(v) = args.seed {
        e.seed = v;
    }
    if let Some(v) = args.threads {
        e.threads = v;
    }
    if let Some(v) = args.order {
        e.order = v;
        cfg.sampling.order = v;
        cfg.control.pointwise_order = v;
    }
    if let Some(v) = args.samples {
        e.samples = v;
        cfg.sampling.reference_samples = v;
    }
    if let Some(r) = args.role {
        e.role = Some(match r {
            RoleArg::ViaY0 => Role::ViaY0,
            RoleArg::ViaY1 => Role::ViaY1,
        });
    }
    if let Some(times) = &args.times {
        cfg.estimate.times = times.clone();
        cfg.convergence.times = times.clone();
        cfg.sampling.times = times.clone();
        if let [t] = times[..] {
            cfg.control.time = t;
        }
    }
    if let Some(orders) = &args.orders {
        cfg.convergence.orders = orders.clone();
        cfg.control.orders = orders.clone();
    }
    if let Some(l) = args.reference_order {
        cfg.convergence.reference_order = l;
    }
    if let Some(sizes) = &args.sizes {
        cfg.sampling.sizes = sizes.clone();
    }
    if let Some(g) = &args.grid {
        cfg.grid = parse_grid(g)?;
    }
    if let Some(w) = args.control_variate {
        cfg.control.which = match w {
            WhichArg::S0 => Which::S0,
            WhichArg::S1 => Which::S1,
        };
    }
    if let Some(v) = args.control_order {
        cfg.control.n0 = v;
    }
    if let Some(v) = args.pilot {
        cfg.control.pilot = v;
    }
    cfg.validate()?;
    Ok(())
}

fn parse_grid(text: &str) -> anyhow::Result<GridSpec> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [lo, hi, n] = parts[..] else {
        bail!("--grid expects LO,HI,COUNT, got `{text}`");
    };
    let lo: f64 = lo
        .parse()
        .with_context(|| format!("grid lower end `{lo}`"))?;
    let hi: f64 = hi
        .parse()
        .with_context(|| format!("grid upper end `{hi}`"))?;
    let n: usize = n.parse().with_context(|| format!("grid count `{n}`"))?;
    if !(lo < hi) || n < 2 {
        bail!("--grid needs LO < HI and COUNT ≥ 2, got `{text}`");
    }
    Ok(GridSpec::Uniform { lo, hi, n })
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    source: String,
    outputs: Vec<&str>,
    cfg: &RunConfig,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        source,
        outputs,
        config: cfg,
    };
    let mut w = create(dir, "manifest.json")?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run_command(args: &RunArgs, command: &str, control_flag: bool) -> anyhow::Result<()> {
    let (mut cfg, source) = load(&args.source)?;
    apply(&mut cfg, args)?;
    let use_cv = control_flag || args.control_variate.is_some();
    let mut est = cfg.estimator_config();
    if use_cv && command != "cv-compare" {
        est = est.with_method(cfg.control_method());
    }
    est.validate()?;
    let dir = &args.out;
    let tail_tol = cfg.estimator.tail_tol;
    match command {
        "estimate" => {
            write_manifest(dir, command, source, vec!["estimates.csv"], &cfg)?;
            let mut estimates = Vec::new();
            for &t in &cfg.estimate.times {
                let grid = cfg.grid.resolve(&cfg.problem, &est, t)?;
                let e = estimate(&cfg.problem, &est, t, &grid)?;
                report_diagnostics(&e.diagnostics, t, e.order);
                estimates.push(e);
            }
            report::write_estimates(create(dir, "estimates.csv")?, &estimates)?;
        }
        "convergence" => {
            let outputs = vec![
                "estimates.csv",
                "consecutive_norms.csv",
                "reference_errors.csv",
                "pointwise.csv",
                "regression.csv",
            ];
            write_manifest(dir, command, source, outputs, &cfg)?;
            let c = &cfg.convergence;
            let reference = (c.reference_order > 0).then_some(c.reference_order);
            let study = ConvergenceStudy::run(
                &cfg.problem,
                &est,
                &c.times,
                &c.orders,
                reference,
                &cfg.grid,
                tail_tol,
            )?;
            let tables = consecutive_differences(&study)?;
            let all: Vec<_> = study
                .slices
                .iter()
                .flat_map(|s| s.estimates.iter().chain(s.reference.iter()).cloned())
                .collect();
            report::write_estimates(create(dir, "estimates.csv")?, &all)?;
            report::write_consecutive_norms(
                create(dir, "consecutive_norms.csv")?,
                &tables.consecutive,
            )?;
            report::write_reference_errors(
                create(dir, "reference_errors.csv")?,
                &tables.reference_errors,
            )?;
            report::write_pointwise(create(dir, "pointwise.csv")?, &tables.pointwise)?;
            let mut fits = Vec::new();
            if reference.is_some() {
                for (t, fit) in regress_error_vs_difference(&tables) {
                    match fit {
                        Ok(f) => fits.push(f),
                        Err(e) => log::warn!("t = {t}: no regression fit ({e})"),
                    }
                }
            }
            report::write_regression(create(dir, "regression.csv")?, &fits)?;
        }
        "sampling" => {
            write_manifest(
                dir,
                command,
                source,
                vec!["sampling_errors.csv", "sampling_slopes.csv"],
                &cfg,
            )?;
            let s = &cfg.sampling;
            let study = SamplingStudy::new(s.order, s.sizes.clone(), s.reference_samples)?;
            let result =
                sampling_error_study(&cfg.problem, &est, &s.times, &study, &cfg.grid, tail_tol)?;
            report::write_sampling_errors(create(dir, "sampling_errors.csv")?, &result.errors)?;
            report::write_sampling_slopes(create(dir, "sampling_slopes.csv")?, &result.slopes)?;
        }
        "cv-compare" => {
            write_manifest(
                dir,
                command,
                source,
                vec!["cv_compare.csv", "cv_pointwise.csv"],
                &cfg,
            )?;
            let c = &cfg.control;
            let times = [c.time];
            let cv = est.clone().with_method(cfg.control_method());
            let crude_study = ConvergenceStudy::run(
                &cfg.problem,
                &est,
                &times,
                &c.orders,
                None,
                &cfg.grid,
                tail_tol,
            )?;
            // both studies share the grid so their tables are comparable
            let grid = GridSpec::Explicit {
                points: crude_study.slices[0].grid.clone(),
            };
            let cv_study =
                ConvergenceStudy::run(&cfg.problem, &cv, &times, &c.orders, None, &grid, tail_tol)?;
            let crude = consecutive_differences(&crude_study)?.consecutive;
            let controlled = consecutive_differences(&cv_study)?.consecutive;
            let rows: Vec<CvComparisonRow> = crude
                .iter()
                .zip(&controlled)
                .map(|(a, b)| CvComparisonRow {
                    t: a.t,
                    order: a.order,
                    crude_delta_eps: a.delta_eps,
                    cv_delta_eps: b.delta_eps,
                })
                .collect();
            report::write_cv_comparison(create(dir, "cv_compare.csv")?, &rows)?;
            let pointwise_cfg = cv.with_order(c.pointwise_order);
            let points = cfg.grid.resolve(&cfg.problem, &pointwise_cfg, c.time)?;
            let e = estimate(&cfg.problem, &pointwise_cfg, c.time, &points)?;
            report_diagnostics(&e.diagnostics, c.time, e.order);
            report::write_cv_pointwise(create(dir, "cv_pointwise.csv")?, &e)?;
        }
        other => unreachable!("unknown command {other}"),
    }
    log::info!("results written to {}", dir.display());
    Ok(())
}

fn report_diagnostics(d: &rode_density::density::Diagnostics, t: f64, order: usize) {
    if d.degenerate_warning {
        log::warn!(
            "t = {t}, N = {order}: {} of the samples have |denominator| below the threshold (min {:.3e})",
            d.degenerate_fraction,
            d.min_abs_denominator
        );
    }
    if d.skipped_count > 0 {
        log::warn!(
            "t = {t}, N = {order}: {} samples with a zero denominator were skipped",
            d.skipped_count
        );
    }
}

fn advise(args: &AdviseArgs) -> anyhow::Result<()> {
    let (cfg, _) = load(&args.source)?;
    let p = &cfg.problem;
    let r = p
        .radius
        .or(args.r)
        .or(cfg.advisor.r)
        .filter(|r| r.is_finite())
        .context("the advisor needs a finite convergence radius; pass --r")?;
    let rho = (args.t - p.t0).abs();
    let s = args.s.or(cfg.advisor.s).unwrap_or(0.5 * (rho + r));
    let epsilon = args.epsilon.unwrap_or(cfg.advisor.epsilon);
    let count = cfg.estimator.order.max(1);
    let bounds_a = p.a.advisor_bounds(count)?;
    let bounds_b = p.b.advisor_bounds(count)?;
    let input = AdvisorInput {
        bounds_a: &bounds_a,
        bounds_b: &bounds_b,
        y0_norm: p.y0.l2_norm()?,
        y1_norm: p.y1.l2_norm()?,
        r,
        rho,
        s,
        epsilon,
    };
    let advice = advise_truncation(&input)?;
    let out = serde_json::json!({
        "t": args.t, "rho": rho, "r": r, "s": s, "epsilon": epsilon,
        "u": advice.u, "c_u": advice.c_u, "n": advice.n, "k": advice.k, "order": advice.order,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Estimate(a) => run_command(a, "estimate", false),
        Command::Convergence(a) => run_command(a, "convergence", false),
        Command::Sampling(a) => run_command(a, "sampling", false),
        Command::CvCompare(a) => run_command(a, "cv-compare", true),
        Command::Advise(a) => advise(a),
        Command::Config(s) => {
            let (cfg, _) = load(s)?;
            print!("{}", cfg.to_toml_string()?);
            Ok(())
        }
        Command::Presets => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    }
}

/// 2 for invalid input, 3 for numerical or I/O failure, 4 for too little data.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Spec(_) | Error::Config(_) | Error::Unsupported(_)) => 2,
        Some(Error::InsufficientData(_)) => 4,
        Some(_) => 3,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => 3,
        None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
