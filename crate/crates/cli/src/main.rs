use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Serialize};

use robcal::bench::{write_raw_csv, write_summary_csv};
use robcal::estimate::load_samples;
use robcal::numerics::{chi_quantile, Polyhedron};
use robcal::solve::PsiContext;
use robcal::{
    baseline_scales, calibrate_scale, cholesky_psd, estimate_mu, run_sweep, AccuracyParams, CalibrationConfig,
    Error, Mode, ProblemSpec, RngStream, SensitivityMap, SolverConfig, Subspace, SweepConfig,
};

/// Robustness-scale calibration for ellipsoidal robust optimization.
#[derive(Parser, Debug)]
#[command(name = "robcal", version)]
struct Cli {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate λ̂ from a problem file and a CSV of samples.
    Calibrate(CalibrateArgs),
    /// Run the synthetic portfolio sweep and write raw and summary CSVs.
    Sweep(SweepArgs),
    /// Estimate the spatial uniform bound μ̇ on a problem.
    Mu(MuArgs),
    /// Print the chi quantile χ_dof⁻¹(p).
    Quantile(QuantileArgs),
    /// Membership tables for the two-dimensional toy problem.
    Demo(DemoArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Practical,
    Theoretical,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Practical => Mode::Practical,
            ModeArg::Theoretical => Mode::Theoretical,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct CalibrateArgs {
    /// Problem file (TOML or JSON).
    #[arg(long)]
    problem: PathBuf,
    /// CSV with one sample per row, non-dummy coordinates only.
    #[arg(long)]
    samples: PathBuf,
    /// Violation probability δ in (0, 1).
    #[arg(long)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Practical)]
    mode: ModeArg,
    /// Moment bound τ (theoretical mode; plug-in estimate when absent).
    #[arg(long, requires = "tau_prime")]
    tau: Option<f64>,
    /// Moment bound τ' (theoretical mode).
    #[arg(long, requires = "tau")]
    tau_prime: Option<f64>,
    /// Calibration settings file (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the result JSON.
    #[arg(long, default_value = "calibration.json")]
    out: PathBuf,
    /// Where to write the run manifest (default: next to the result).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    /// Sweep configuration (TOML or JSON); desk-scale defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use 30 covariance draws × 20 trials.
    #[arg(long)]
    full_scale: bool,
    /// Override the sample-size grid, e.g. `20,60,120`.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Output directory for raw.csv, summary.csv and manifest.json.
    #[arg(long, default_value = "sweep-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct MuArgs {
    /// Problem file (TOML or JSON).
    #[arg(long)]
    problem: PathBuf,
    /// Covariance as a JSON or TOML file holding `sigma` (rows); identity on free coordinates when absent.
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// Subspace file (JSON); the full domain when absent.
    #[arg(long)]
    subspace: Option<PathBuf>,
    /// Target probability p.
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.02)]
    beta: f64,
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    /// Optional run manifest path.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct QuantileArgs {
    dof: usize,
    p: f64,
}

#[derive(Args, Debug, Serialize)]
struct DemoArgs {
    /// Scale λ for the membership tables.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Serialize)]
struct RunManifest<'a, T: Serialize> {
    command: &'a str,
    config_path: Option<&'a Path>,
    parameters: &'a T,
    seed: u64,
    threads: Option<usize>,
    outputs: Vec<PathBuf>,
    version: &'static str,
    started_unix_secs: u64,
}

fn write_manifest<T: Serialize>(
    path: &Path,
    command: &str,
    config_path: Option<&Path>,
    parameters: &T,
    cli: &Cli,
    outputs: Vec<PathBuf>,
) -> anyhow::Result<()> {
    let manifest = RunManifest {
        command,
        config_path,
        parameters,
        seed: cli.seed,
        threads: cli.threads,
        outputs,
        version: env!("CARGO_PKG_VERSION"),
        started_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    write_json(path, &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.downcast_ref::<Error>() else {
        return 1;
    };
    match e.root() {
        Error::Parse(_)
        | Error::InvalidArgument(_)
        | Error::InvalidProblem(_)
        | Error::DimensionMismatch { .. }
        | Error::NotPsd { .. }
        | Error::Empty(_)
        | Error::UnboundedQuantile(_)
        | Error::SurrogateUnavailable(_) => 2,
        Error::Infeasible | Error::RobustInfeasible => 3,
        Error::NonConvergence { .. } => 4,
        _ => 1,
    }
}

fn cmd_calibrate(cli: &Cli, args: &CalibrateArgs) -> anyhow::Result<()> {
    let problem = ProblemSpec::from_path(&args.problem)?;
    let samples = load_samples(&args.samples, &problem)?;
    let mut cfg: CalibrationConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => CalibrationConfig::default(),
    };
    if let (Some(t), Some(tp)) = (args.tau, args.tau_prime) {
        cfg.moment_bounds = Some((t, tp));
    }
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must be in (0, 1), got {}", args.delta)).into());
    }
    let manifest = args.manifest.clone().unwrap_or_else(|| args.out.with_extension("manifest.json"));
    write_manifest(
        &manifest,
        "calibrate",
        args.config.as_deref(),
        &(args, &cfg),
        cli,
        vec![args.out.clone()],
    )?;

    let result = calibrate_scale(&problem, &samples, args.delta, &cfg, args.mode.into(), &RngStream::new(cli.seed))?;
    write_json(&args.out, &result)?;
    let d = problem.free_dim().max(1);
    let (lo, hi) = baseline_scales(result.n, d, args.delta)?;
    let sn = (result.n as f64).sqrt();
    println!("n = {}, d = {d}, delta = {}", result.n, args.delta);
    println!("lambda_hat         = {:.6}", result.lambda_hat);
    println!("sqrt(n)*lambda_hat = {:.6}", result.sqrt_n_lambda_hat);
    println!("reference sqrt(n)*lambda: chi_1 = {:.6}, chi_{d} = {:.6}", lo * sn, hi * sn);
    println!(
        "stage 1: mu_dot = {:.6} (p = {}, Q = {}, {} bisection steps)",
        result.mu_dot, result.stage1.p, result.stage1.q_samples, result.stage1.iterations
    );
    println!("stage 2: mu_hat = {:.6}, w_hat = {:.6}", result.mu_hat, result.w_hat);
    println!(
        "stage 5: lambda_dot = {:.6} (p = {}, Q = {}, {} bisection steps)",
        result.lambda_dot, result.stage2.p, result.stage2.q_samples, result.stage2.iterations
    );
    println!("result written to {}", args.out.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> anyhow::Result<()> {
    let mut cfg: SweepConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => SweepConfig::desk_scale(cli.seed),
    };
    if args.full_scale {
        cfg = cfg.full_scale();
    }
    if let Some(n) = &args.n {
        cfg.n_grid = n.clone();
    }
    cfg.validate()?;
    let raw = args.out_dir.join("raw.csv");
    let summary = args.out_dir.join("summary.csv");
    write_manifest(
        &args.out_dir.join("manifest.json"),
        "sweep",
        args.config.as_deref(),
        &cfg,
        cli,
        vec![raw.clone(), summary.clone()],
    )?;
    let t = Instant::now();
    let report = run_sweep(&cfg)?;
    write_raw_csv(&report, fs::File::create(&raw).with_context(|| raw.display().to_string())?)?;
    write_summary_csv(&report, fs::File::create(&summary).with_context(|| summary.display().to_string())?)?;
    println!("{:>6} {:>9} {:>10} {:>10} {:>14}", "n", "method", "VaR", "violation", "sqrt(n)*lambda");
    for c in &report.cells {
        println!(
            "{:>6} {:>9} {:>10.4} {:>10.3} {:>14.4}",
            c.n,
            c.method.name(),
            c.var_delta,
            c.violation_rate,
            c.mean_sqrt_n_lambda
        );
    }
    let failures: usize = report.cells.iter().map(|c| c.failures).sum();
    if failures > 0 {
        println!("{failures} trials failed and were scored at the cap");
    }
    println!(
        "{} trials in {:.1}s; wrote {} and {}",
        report.records.len(),
        t.elapsed().as_secs_f64(),
        raw.display(),
        summary.display()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SigmaFile {
    sigma: Vec<Vec<f64>>,
}

fn cmd_mu(cli: &Cli, args: &MuArgs) -> anyhow::Result<()> {
    let problem = ProblemSpec::from_path(&args.problem)?;
    let sigma = match &args.sigma {
        Some(p) => {
            let f: SigmaFile = read_config(p)?;
            let d = f.sigma.len();
            if f.sigma.iter().any(|r| r.len() != d) {
                return Err(Error::Parse("sigma must be square".into()).into());
            }
            DMatrix::from_fn(d, d, |i, j| f.sigma[i][j])
        }
        None => DMatrix::from_fn(problem.d, problem.d, |i, j| {
            if i == j && !problem.is_dummy(i) {
                1.0
            } else {
                0.0
            }
        }),
    };
    let subspace = match &args.subspace {
        Some(p) => read_config(p)?,
        None => Subspace::full(&problem),
    };
    let acc = AccuracyParams::new(args.alpha, args.beta, args.gamma)?;
    if let Some(m) = &args.manifest {
        write_manifest(m, "mu", None, args, cli, vec![])?;
    }
    let cfg = SolverConfig::default();
    let est = estimate_mu(args.p, &problem, &subspace, &sigma, &acc, &cfg, &RngStream::new(cli.seed))?;
    println!("mu_dot = {:.6}", est.mu_dot);
    println!(
        "Q = {}, bracket [{:.6}, {:.6}], {} bisection steps, final rate {:?}",
        est.q_samples, est.bracket.0, est.bracket.1, est.iterations, est.final_rate
    );
    println!(
        "with probability >= {:.4}: mu(p) - slack <= mu_dot <= mu(p + {}) + {} + slack",
        1.0 - args.alpha,
        args.beta,
        args.gamma
    );
    Ok(())
}

fn cmd_quantile(args: &QuantileArgs) -> anyhow::Result<()> {
    println!("{:.4}", chi_quantile(args.dof, args.p)?);
    Ok(())
}

fn toy_problem() -> ProblemSpec {
    ProblemSpec {
        m: 2,
        d: 3,
        objective: DVector::from_vec(vec![1.0, 1.0]),
        constraints: vec![SensitivityMap {
            a: DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]),
            c: DVector::from_vec(vec![-2.0, 0.0, 0.0]),
        }],
        domain: Polyhedron::boxed(&[-1.0, -1.0], &[1.0, 1.0]),
        dummy_coords: vec![0],
        epigraph_var: None,
    }
}

fn cmd_demo(args: &DemoArgs) -> anyhow::Result<()> {
    let problem = toy_problem();
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 1.0]));
    let factor = cholesky_psd(&sigma)?;
    let domains = [
        ("R^2", Polyhedron::boxed(&[-1.0, -1.0], &[1.0, 1.0])),
        ("R^2_+", Polyhedron::boxed(&[0.0, 0.0], &[1.0, 1.0])),
        ("x1-axis", Polyhedron::boxed(&[0.0, 0.0], &[1.0, 0.0])),
    ];
    let ctxs = domains
        .iter()
        .map(|(_, b)| PsiContext::new(&problem, &Subspace::with_base(&problem, b.clone()), &factor))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = SolverConfig::default();
    let lambda = args.lambda;
    println!("min x1 + x2 s.t. theta1 x1 + theta2 x2 - 2 >= 0, Sigma = I, lambda = {lambda}");
    println!("membership of the error (e1, e2) in S(lambda, Y):");
    println!("{:>16} {:>8} {:>8} {:>8}", "(e1, e2)", domains[0].0, domains[1].0, domains[2].0);
    let points = [
        (0.0, 0.0),
        (0.6, 0.6),
        (0.9, -0.9),
        (-0.7, 0.7),
        (0.5, 10.0),
        (-0.3, 4.0),
        (1.2, 0.0),
        (1.5, -1.5),
    ];
    for (e1, e2) in points {
        let eps = DVector::from_vec(vec![0.0, e1 * lambda, e2 * lambda]);
        let marks = ctxs
            .iter()
            .map(|c| c.membership(lambda, &eps, &cfg).map(|m| if m.member { "in" } else { "-" }))
            .collect::<Result<Vec<_>, _>>()?;
        println!(
            "{:>16} {:>8} {:>8} {:>8}",
            format!("({:.2}, {:.2})", e1 * lambda, e2 * lambda),
            marks[0],
            marks[1],
            marks[2]
        );
    }
    println!(
        "scale for delta = 0.1: chi_2 = {:.4} on R^2, chi_1 = {:.4} on the x1-axis",
        chi_quantile(2, 0.9)?,
        chi_quantile(1, 0.9)?
    );
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(cli, a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Mu(a) => cmd_mu(cli, a),
        Command::Quantile(a) => cmd_quantile(a),
        Command::Demo(a) => cmd_demo(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ROBCAL_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
