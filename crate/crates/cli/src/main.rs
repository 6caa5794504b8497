//! `plam`: fit partially linear additive models, run simulation studies and
//! reproduce the Boston housing analysis.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
//! domain error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use plam_core::adapt::{asam_fit, ScoreBandwidth, DEFAULT_SCORE_FLOOR};
use plam_core::boston::{rule_of_thumb_bandwidths, run_boston, write_boston_outputs, BostonOptions};
use plam_core::data::Dataset;
use plam_core::error::Error;
use plam_core::ingest::{load_dataset, DropRule, IngestSchema};
use plam_core::kernel::Bandwidths;
use plam_core::plam::{pl_fit, sam_fit};
use plam_core::report::{asam_report, plam_report, write_components_csv, write_json, FitReport};
use plam_core::sbf::SbfConfig;
use plam_core::study::{run_study, write_study_outputs, StudyConfig};

const LOG_ENV: &str = "SBF_PLAM_LOG";

#[derive(Parser, Debug)]
#[command(name = "plam", version, about = "Partially linear additive models by smooth backfitting")]
struct Cli {
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one model to a CSV file and write a JSON report and component curves.
    Fit(FitArgs),
    /// Run a Monte Carlo study described by a TOML file.
    Simulate(SimulateArgs),
    /// Fit SAM and ASAM to the Boston housing data.
    Boston(BostonArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum EstimatorArg {
    Sam,
    Asam,
    Pl,
}

#[derive(Args, Debug)]
struct SmoothingArgs {
    /// Bandwidth for each smooth covariate, in order; one value is used for all.
    /// Defaults to the rule of thumb.
    #[arg(long = "bandwidth", value_name = "H")]
    bandwidths: Vec<f64>,

    /// Number of grid points on [0, 1].
    #[arg(long, default_value_t = 101)]
    grid_size: usize,

    /// Score-density bandwidth `a` for ASAM: "auto" (Sheather-Jones) or a positive number.
    #[arg(long, default_value = "auto")]
    score_bandwidth: ScoreBandwidth,

    /// Density floor `b` for ASAM; must be positive.
    #[arg(long, default_value_t = DEFAULT_SCORE_FLOOR, value_parser = positive_f64)]
    score_floor: f64,

    /// Random seed. Fitting is deterministic, so this is only recorded for scripting symmetry.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Input CSV with a header row.
    data: PathBuf,

    #[arg(long, value_enum, default_value_t = EstimatorArg::Sam)]
    estimator: EstimatorArg,

    /// Response column.
    #[arg(long)]
    response: String,

    /// Linear covariate columns (repeat or comma-separate).
    #[arg(long, required = true, value_delimiter = ',')]
    parametric: Vec<String>,

    /// Smooth covariate columns (repeat or comma-separate).
    #[arg(long, required = true, value_delimiter = ',')]
    nonparametric: Vec<String>,

    /// Columns to log-transform before fitting.
    #[arg(long = "log", value_delimiter = ',')]
    log_transform: Vec<String>,

    /// Drop rows matching a rule such as "MEDV == 50".
    #[arg(long = "drop")]
    drop_rule: Option<DropRule>,

    #[command(flatten)]
    smoothing: SmoothingArgs,

    /// Output directory for report.json and components.csv.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Study configuration (TOML).
    config: PathBuf,

    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for the CSV tables.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BostonArgs {
    /// Boston housing CSV in the standard 14-column layout.
    data: PathBuf,

    #[command(flatten)]
    smoothing: SmoothingArgs,

    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive number, got {v}"))
    }
}

fn bandwidths_for(given: &[f64], data: &Dataset) -> Result<(Bandwidths, Vec<String>), Error> {
    match given {
        [] => rule_of_thumb_bandwidths(data),
        [h] => Ok((Bandwidths::uniform(data.d(), *h)?, Vec::new())),
        hs if hs.len() == data.d() => Ok((Bandwidths::new(hs.to_vec())?, Vec::new())),
        hs => Err(Error::InvalidArgument(format!(
            "{} bandwidths given for {} smooth covariates",
            hs.len(),
            data.d()
        ))),
    }
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let schema = IngestSchema {
        response: args.response,
        parametric: args.parametric,
        nonparametric: args.nonparametric,
        log_transform: args.log_transform,
        drop_rule: args.drop_rule,
    };
    let data = load_dataset(&args.data, &schema)?;
    let s = &args.smoothing;
    let (bandwidths, notes) = bandwidths_for(&s.bandwidths, &data)?;
    let config = SbfConfig::new(bandwidths).with_grid_size(s.grid_size);
    let mut report = match args.estimator {
        EstimatorArg::Sam => plam_report(&sam_fit(&data, &config)?, &data, &config)?,
        EstimatorArg::Pl => plam_report(&pl_fit(&data, &config)?, &data, &config)?,
        EstimatorArg::Asam => {
            let fit = asam_fit(&data, &config, s.score_bandwidth, s.score_floor)?;
            asam_report(&fit, &data, &config)?
        }
    };
    report.warnings.extend(notes);
    write_fit_outputs(&report, &args.out)
}

fn write_fit_outputs(report: &FitReport, dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    write_json(report, dir.join("report.json"))?;
    write_components_csv(report, dir.join("components.csv"))?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    println!("{}", serde_json::to_string_pretty(&report.coefficients)?);
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut cfg = StudyConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let scenarios = run_study(&cfg)?;
    write_study_outputs(&scenarios, &args.out)?;
    println!("wrote mse_table.csv, best_mse.csv and boxplot_data.csv to {}", args.out.display());
    Ok(())
}

fn cmd_boston(args: BostonArgs) -> Result<(), Error> {
    let s = &args.smoothing;
    let opts = BostonOptions {
        bandwidths: (!s.bandwidths.is_empty()).then(|| s.bandwidths.clone()),
        grid_size: s.grid_size,
        score_bandwidth: s.score_bandwidth,
        score_floor: s.score_floor,
    };
    let result = run_boston(&args.data, &opts)?;
    write_boston_outputs(&result, &args.out)?;
    println!(
        "{:<10} {:>12} {:>10} {:>8} {:>12} {:>10} {:>8}",
        "", "SAM", "SE", "|z|", "ASAM", "SE", "|z|"
    );
    for r in &result.comparison {
        println!(
            "{:<10} {:>12.4} {:>10.4} {:>8.2} {:>12.4} {:>10.4} {:>8.2}",
            r.coefficient, r.sam_estimate, r.sam_se, r.sam_abs_z, r.asam_estimate, r.asam_se, r.asam_abs_z
        );
    }
    println!("generalized R2: SAM {:.4}, ASAM {:.4}", result.sam.generalized_r2, result.asam.generalized_r2);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .parse_filters(&std::env::var(LOG_ENV).unwrap_or_else(|_| "warn".into()))
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Boston(args) => cmd_boston(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
