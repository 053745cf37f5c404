mod config;
mod figures;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use rcd_core::calibration::{
    calibrate, quantile_table, write_quantile_table, CalibratedThreshold, CalibrationMethod, CalibrationOptions,
};
use rcd_core::delay::{solve_delay, write_delay_table, DelayRow, delay_asymptotic};
use rcd_core::detectors::{run_on_llrs, run_to_stop, write_trajectory_csv, RunOutcome};
use rcd_core::experiments::{bayes_average, estimate_delay, run_grid, write_results_csv, RuleConfig};
use rcd_core::{BoundarySpec, ChangeModel, ChangeTime, Error, GaussianShift, PathSpec, Result, RuleKind};

use crate::config::{env_seed, prepare, SweepFile};

#[derive(Parser)]
#[command(
    name = "rcd",
    version,
    about = "Sequential change-point detection: threshold calibration, detection, Monte Carlo sweeps and figure data",
    after_help = "Seeds default to the RCD_SEED environment variable, then 0."
)]
struct Cli {
    /// Worker threads; defaults to the available parallelism. Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the offset t of the boundary rule.
    Calibrate(CalibrateArgs),
    /// Run one detector on observations from a file or a simulated path.
    Detect(DetectArgs),
    /// Run a Monte Carlo sweep described by a TOML file.
    Sweep(SweepArgs),
    /// Tabulate delay bounds of the boundary rule, optionally with measured delays.
    Delays(DelaysArgs),
    /// Write the data series behind figure 2, 3, 4 or 5.
    Figures(FiguresArgs),
}

#[derive(Args)]
struct BoundaryArgs {
    /// Number of logarithm iterations in the boundary.
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Boundary exponent in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    boundary: BoundaryArgs,
    /// Target false-alarm probability.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// analytic, product or mc.
    #[arg(long, default_value = "product")]
    method: String,
    /// Monte Carlo sample size.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Write a quantile table for these alphas instead (comma separated).
    #[arg(long, value_delimiter = ',')]
    table: Vec<f64>,
    /// Output file for --table; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "simulate"])))]
struct DetectArgs {
    /// bayes_geometric, uniform_prior, cusum_ml, shiryaev_roberts or robust_boundary.
    #[arg(long)]
    rule: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Prior parameter of the Bayes-geometric rule.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fixed threshold overriding the one derived from alpha.
    #[arg(long)]
    threshold: Option<f64>,
    /// Calibration method of the boundary rule.
    #[arg(long)]
    calibration: Option<String>,
    /// Post-change mean; observations are N(0, 1) before the change.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Headerless file with one observation per line.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Simulate a path with the change at this step (or `inf`).
    #[arg(long)]
    simulate: Option<String>,
    #[arg(long, default_value_t = 1000)]
    horizon: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the trajectory (step, statistic, threshold, stopped) here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep description.
    config: PathBuf,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
    /// Output CSV; overrides `experiment.output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DelaysArgs {
    #[command(flatten)]
    boundary: BoundaryArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Change points (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 10, 100, 1000])]
    thetas: Vec<u64>,
    /// Trials per change point for measured delays; 0 skips the simulation.
    #[arg(long, default_value_t = 0)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FiguresArgs {
    /// Figure number.
    #[arg(value_parser = clap::value_parser!(u8).range(2..=5))]
    which: u8,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "figures")]
    out_dir: PathBuf,
    /// Monte Carlo samples per eps for figure 5.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
}

fn seed_or_env(flag: Option<u64>) -> Result<u64> {
    flag.map_or_else(env_seed, Ok)
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn print_threshold(t: &CalibratedThreshold) {
    println!("method = {}", t.method);
    println!("m = {}", t.m);
    println!("epsilon = {}", t.epsilon);
    println!("alpha = {}", t.alpha);
    println!("t = {}", t.value);
    println!("clamped = {}", t.diagnostics.clamped);
    if let Some(b) = t.diagnostics.truncation_bound {
        println!("truncation_bound = {b}");
    }
    if let Some(se) = t.diagnostics.mc_std_error {
        println!("mc_std_error = {se}");
    }
    if let Some(n) = t.diagnostics.samples {
        println!("samples = {n}");
    }
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let spec = BoundarySpec::new(args.boundary.m, args.boundary.epsilon)?;
    let seed = seed_or_env(args.seed)?;
    let options = CalibrationOptions { samples: args.samples, seed, ..Default::default() };
    if !args.table.is_empty() {
        let rows = quantile_table(&spec, &args.table, &options)?;
        let comments = format!(
            "# m = {}\n# epsilon = {}\n# samples = {}\n# seed = {seed}\n",
            args.boundary.m, args.boundary.epsilon, args.samples
        );
        return match &args.out {
            Some(path) => {
                let mut out = create_file(path)?;
                out.write_all(comments.as_bytes())?;
                write_quantile_table(&mut out, &rows)
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(comments.as_bytes())?;
                write_quantile_table(&mut out, &rows)
            }
        };
    }
    let method: CalibrationMethod = args.method.parse()?;
    let t = calibrate(&spec, args.alpha, method, &options)?;
    print_threshold(&t);
    if method == CalibrationMethod::MonteCarlo {
        println!("seed = {seed}");
    }
    Ok(())
}

fn parse_theta(s: &str) -> Result<ChangeTime> {
    if s == "inf" {
        return Ok(ChangeTime::Never);
    }
    match s.parse::<u64>() {
        Ok(k) if k >= 1 => Ok(ChangeTime::At(k)),
        _ => Err(Error::Usage(format!("change point must be a positive integer or `inf`, got `{s}`"))),
    }
}

fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.trim();
        let v: f64 = field
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Data(format!("{}:{}: not a finite number: `{field}`", path.display(), i + 1)))?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::Data(format!("{}: no observations", path.display())));
    }
    Ok(values)
}

fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let kind: RuleKind = args.rule.parse()?;
    let seed = seed_or_env(args.seed)?;
    let calibration = args.calibration.as_deref().map(str::parse::<CalibrationMethod>).transpose()?;
    let rule_config = RuleConfig {
        label: None,
        kind,
        alpha: args.alpha,
        gamma: args.gamma,
        m: args.m,
        epsilon: args.epsilon,
        threshold: args.threshold,
        calibration,
    };
    let rule = rule_config.resolve(&CalibrationOptions { seed, ..Default::default() })?;
    let model = GaussianShift::new(args.delta)?;
    let record = args.trajectory.is_some();
    let mut comments = vec![
        ("rule".to_string(), kind.to_string()),
        ("alpha".to_string(), args.alpha.to_string()),
        ("threshold".to_string(), rule.threshold().value().to_string()),
        ("delta".to_string(), args.delta.to_string()),
    ];
    if let Some(g) = rule.gamma() {
        comments.push(("gamma".to_string(), g.to_string()));
    }
    if let Some(b) = rule.boundary() {
        comments.push(("m".to_string(), b.m().to_string()));
        comments.push(("epsilon".to_string(), b.epsilon().to_string()));
    }
    let outcome: RunOutcome<f64> = match (&args.input, &args.simulate) {
        (Some(path), _) => {
            comments.push(("input".to_string(), path.display().to_string()));
            let xs = read_observations(path)?;
            run_on_llrs(&rule, xs.into_iter().map(|x| model.llr(x)), record)?
        }
        (None, Some(theta)) => {
            let theta = parse_theta(theta)?;
            comments.push(("theta".to_string(), theta.to_string()));
            comments.push(("horizon".to_string(), args.horizon.to_string()));
            comments.push(("seed".to_string(), seed.to_string()));
            let spec = PathSpec::new(theta, args.horizon, seed)?;
            run_to_stop(&model, &rule, &spec, record)?
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    println!("rule = {kind}");
    println!("stop = {}", outcome.stop);
    println!("statistic = {}", outcome.final_statistic);
    println!("threshold = {}", outcome.final_threshold);
    if let (Some(path), Some(points)) = (&args.trajectory, &outcome.trajectory) {
        write_trajectory_csv(create_file(path)?, points, &comments)?;
    }
    Ok(())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sweep".into());
    out.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let file = SweepFile::load(&args.config)?;
    let (_, resolved, echo) = prepare(&file, args.seed)?;
    let out = args
        .out
        .clone()
        .or_else(|| file.experiment.output.clone())
        .unwrap_or_else(|| PathBuf::from("sweep.csv"));
    let mut echo = echo;
    echo.experiment.output = Some(out.clone());
    let echo_text = echo.to_toml()?;
    if args.dry_run {
        print!("{echo_text}");
        return Ok(());
    }
    let result = run_grid(
        &resolved.model,
        &resolved.rules,
        &resolved.theta_grid,
        resolved.trials,
        resolved.horizon,
        resolved.master_seed,
        None,
    )?;
    let mut csv_out = create_file(&out)?;
    for line in echo_text.lines().filter(|l| !l.trim().is_empty()) {
        writeln!(csv_out, "# {line}")?;
    }
    write_results_csv(&mut csv_out, &result, &[])?;
    let config_path = sidecar(&out, ".config.toml");
    std::fs::write(&config_path, &echo_text)?;
    for row in result.rows.iter().filter(|r| r.censoring_warning) {
        eprintln!(
            "warning: {} at theta={}: {} of {} trials censored",
            row.rule, row.theta, row.censored, row.trials
        );
    }
    if !file.experiment.prior_gammas.is_empty() {
        let path = sidecar(&out, ".bayes.csv");
        let mut w = create_file(&path)?;
        writeln!(w, "rule,gamma,avg_alpha,alpha_se,avg_delta,delta_se,prior_mass,tail_warning")?;
        for &gamma in &file.experiment.prior_gammas {
            let averages = bayes_average(&result, gamma)?;
            if let Some(a) = averages.first().filter(|a| a.tail_warning) {
                eprintln!("warning: gamma={gamma}: prior mass {} lies beyond the grid", a.tail_mass);
            }
            for a in averages {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    a.rule, a.gamma, a.avg_alpha, a.alpha_se, a.avg_delta, a.delta_se, a.weight_sum, a.tail_warning
                )?;
            }
        }
        w.flush()?;
        println!("wrote {}", path.display());
    }
    println!("wrote {}", out.display());
    println!("wrote {}", config_path.display());
    Ok(())
}

fn cmd_delays(args: &DelaysArgs) -> Result<()> {
    let spec = BoundarySpec::new(args.boundary.m, args.boundary.epsilon)?;
    let seed = seed_or_env(args.seed)?;
    let model = GaussianShift::new(args.delta)?;
    let t = calibrate(&spec, args.alpha, CalibrationMethod::ProductCdf, &CalibrationOptions::default())?;
    let rule = rcd_core::StoppingRule::robust(spec, t)?;
    let mut rows = Vec::with_capacity(args.thetas.len());
    for &theta in &args.thetas {
        let d = solve_delay(&spec, &t, theta, model.mu1())?;
        let (measured_mean, measured_se) = if args.trials > 0 {
            let horizon = (10.0 * (theta as f64 + d.value)).ceil() as u64;
            let est = estimate_delay(&model, &rule, theta, args.trials, horizon, seed)?;
            (Some(est.delta_hat), Some(est.se))
        } else {
            (None, None)
        };
        rows.push(DelayRow {
            theta,
            d_fixed_point: d.value,
            d_asymptotic: delay_asymptotic(&spec, args.alpha, theta, model.mu1())?,
            measured_mean,
            measured_se,
        });
    }
    let header = format!(
        "# m = {}\n# epsilon = {}\n# alpha = {}\n# t = {}\n# delta = {}\n# trials = {}\n# seed = {seed}\n",
        spec.m(),
        spec.epsilon(),
        args.alpha,
        t.value,
        args.delta,
        args.trials
    );
    match &args.out {
        Some(path) => {
            let mut out = create_file(path)?;
            out.write_all(header.as_bytes())?;
            write_delay_table(&mut out, &rows)
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(header.as_bytes())?;
            write_delay_table(&mut out, &rows)
        }
    }
}

fn cmd_figures(args: &FiguresArgs) -> Result<()> {
    let opts = figures::FigureOptions {
        seed: seed_or_env(args.seed)?,
        out_dir: args.out_dir.clone(),
        samples: args.samples,
    };
    for path in figures::generate(args.which, &opts)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Delays(a) => cmd_delays(a),
        Command::Figures(a) => cmd_figures(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
