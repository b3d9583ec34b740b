//! `sfplane` command line: run the simulations, estimate information
//! quantities from sample CSVs, or train a sparse filtering module on user
//! data.
//!
//! Exit codes: 0 success, 1 user error (bad flags, config or input files),
//! 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use sfplane::datagen::{read_samples_csv, RngSeed};
use sfplane::harness::{aggregate, run_batch, train_sparse_filter, EvalSplit, SimulationConfig};
use sfplane::infotheory::{discretize, fdl_objective_terms, BinSpec};
use sfplane::optim::{Method, OptimizerConfig};
use sfplane::report::{
    export_csv, export_trajectory_csv, export_weights_csv, render_dynamics_panels,
    render_information_plane, PlotStyle,
};

#[derive(Parser)]
#[command(
    name = "sfplane",
    version,
    about = "Sparse filtering with information-plane instrumentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or all of the four simulations and write CSV and SVG reports.
    Simulate(SimulateArgs),
    /// Print I[X;T], H[T] and the uniform-reference KL term for two sample CSVs.
    Estimate(EstimateArgs),
    /// Train a sparse filtering module on a data CSV.
    Train(TrainArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation to run: 1, 2, 3, 4 or "all".
    #[arg(long)]
    sim: Option<String>,
    /// Number of repetitions per simulation.
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Bins per dimension for the estimators.
    #[arg(long)]
    bins: Option<usize>,
    /// Training method.
    #[arg(long, value_enum)]
    optimizer: Option<MethodArg>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV of input samples (one sample per line, dim_* header).
    #[arg(long)]
    x: PathBuf,
    /// CSV of representation samples; values are treated as lying in [0, 1]
    /// (outliers clamp to the edge bins).
    #[arg(long)]
    t: PathBuf,
    /// Bins per dimension.
    #[arg(long, default_value_t = 30)]
    bins: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// CSV of training samples (one sample per line, dim_* header).
    #[arg(long)]
    data: PathBuf,
    /// Number of learned features (rows of W).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    features: u64,
    /// Training method.
    #[arg(long, value_enum, default_value_t = MethodArg::Lbfgs)]
    optimizer: MethodArg,
    /// Seed for the weight initialization.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Bins per dimension for the trajectory statistics.
    #[arg(long, default_value_t = 30)]
    bins: usize,
    /// Output directory for weights.csv and trajectory.csv.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lbfgs,
    Gd,
}

impl From<MethodArg> for Method {
    fn from(value: MethodArg) -> Method {
        match value {
            MethodArg::Lbfgs => Method::Lbfgs,
            MethodArg::Gd => Method::Gd,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum SimSelect {
    One(u8),
    All,
}

impl SimSelect {
    fn ids(self) -> Vec<u8> {
        match self {
            SimSelect::One(id) => vec![id],
            SimSelect::All => vec![1, 2, 3, 4],
        }
    }
}

fn parse_sim(text: &str) -> Result<SimSelect, CliError> {
    if text.eq_ignore_ascii_case("all") {
        return Ok(SimSelect::All);
    }
    text.parse::<u8>()
        .ok()
        .filter(|id| (1..=4).contains(id))
        .map(SimSelect::One)
        .ok_or_else(|| {
            CliError::User(format!(
                "invalid simulation {text:?}: valid values are 1, 2, 3, 4 or all"
            ))
        })
}

/// JSON configuration mirroring the simulation settings. Every field is
/// optional; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    sim: Option<SimField>,
    reps: Option<usize>,
    seed: Option<u64>,
    bins: Option<usize>,
    epsilon: Option<f64>,
    eval_split: Option<EvalSplit>,
    optimizer: Option<OptimizerConfig>,
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SimField {
    Number(u8),
    Text(String),
}

enum CliError {
    User(String),
    Runtime(String),
}

fn classify(e: sfplane::Error) -> CliError {
    use sfplane::Error as E;
    match e {
        E::Config(_) | E::Parse(_) | E::SampleCountMismatch { .. } | E::DimensionMismatch(_) => {
            CliError::User(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Train(args) => cmd_train(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => load_config(path)?,
        None => FileConfig::default(),
    };

    let sim = match (&args.sim, &file.sim) {
        (Some(flag), _) => parse_sim(flag)?,
        (None, Some(SimField::Number(n))) => parse_sim(&n.to_string())?,
        (None, Some(SimField::Text(s))) => parse_sim(s)?,
        (None, None) => SimSelect::All,
    };
    let out_dir = args
        .out
        .clone()
        .or(file.out.clone())
        .unwrap_or_else(|| PathBuf::from("results"));

    for sim_id in sim.ids() {
        let mut config = SimulationConfig::new(sim_id);
        if let Some(reps) = args.reps.or(file.reps) {
            config.repetitions = reps;
        }
        if let Some(seed) = args.seed.or(file.seed) {
            config.base_seed = RngSeed(seed);
        }
        if let Some(bins) = args.bins.or(file.bins) {
            config.bin_count = bins;
        }
        if let Some(epsilon) = file.epsilon {
            config.epsilon = epsilon;
        }
        if let Some(split) = file.eval_split {
            config.eval_split = split;
        }
        if let Some(optimizer) = &file.optimizer {
            config.optimizer = optimizer.clone();
        }
        if let Some(method) = args.optimizer {
            config.optimizer.method = method.into();
        }
        config.validate().map_err(classify)?;

        let dir = match sim {
            SimSelect::All => out_dir.join(format!("sim_{sim_id}")),
            SimSelect::One(_) => out_dir.clone(),
        };
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;

        let runs = run_batch(&config).map_err(classify)?;
        let agg = aggregate(&runs).map_err(classify)?;
        let style = PlotStyle::default();
        let mut written = export_csv(&runs, &agg, &dir).map_err(classify)?;
        let plane = dir.join(format!("information_plane_{sim_id}.svg"));
        render_information_plane(&agg, &style, &plane).map_err(classify)?;
        written.push(plane);
        let dynamics = dir.join(format!("dynamics_{sim_id}.svg"));
        render_dynamics_panels(&runs, &style, &dynamics).map_err(classify)?;
        written.push(dynamics);

        println!(
            "sim {sim_id}: {} runs, {} files in {}",
            runs.len(),
            written.len(),
            dir.display()
        );
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    // Input files the user named: any read or parse failure is a user error.
    let x = read_samples_csv(&args.x).map_err(|e| CliError::User(e.to_string()))?;
    let t = read_samples_csv(&args.t).map_err(|e| CliError::User(e.to_string()))?;

    let x_spec = BinSpec::from_data(x.values(), args.bins).map_err(classify)?;
    let x_binned = discretize(x.values(), &x_spec).map_err(classify)?;
    let t_spec = BinSpec::fixed(t.dims(), args.bins, 0.0, 1.0).map_err(classify)?;
    let t_binned = discretize(t.values(), &t_spec).map_err(classify)?;

    let terms = fdl_objective_terms(&x_binned, &t_binned, args.bins, t.dims()).map_err(classify)?;
    println!(
        "mi_xt_bits={:.16e} entropy_t_bits={:.16e} kl_uniform_bits={:.16e}",
        terms.mi_xt_bits, terms.entropy_t_bits, terms.kl_uniform_bits
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let data = read_samples_csv(&args.data).map_err(|e| CliError::User(e.to_string()))?;
    let optimizer = OptimizerConfig {
        method: args.optimizer.into(),
        ..OptimizerConfig::default()
    };

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;

    let outcome = train_sparse_filter(
        &data,
        &data,
        args.features as usize,
        RngSeed(args.seed),
        args.bins,
        sfplane::sf::DEFAULT_EPSILON,
        &optimizer,
    )
    .map_err(classify)?;

    let weights_path = args.out.join("weights.csv");
    export_weights_csv(&outcome.weights, &weights_path).map_err(classify)?;
    let trajectory_path = args.out.join("trajectory.csv");
    export_trajectory_csv(&outcome.records, &trajectory_path).map_err(classify)?;

    println!(
        "trained {} features on {} samples ({} iterations, {:?}); wrote {} and {}",
        args.features,
        data.samples(),
        outcome.records.len() - 1,
        outcome.termination,
        weights_path.display(),
        trajectory_path.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_parsing() {
        assert!(matches!(parse_sim("1"), Ok(SimSelect::One(1))));
        assert!(matches!(parse_sim("4"), Ok(SimSelect::One(4))));
        assert!(matches!(parse_sim("all"), Ok(SimSelect::All)));
        assert!(parse_sim("9").is_err());
        assert!(parse_sim("0").is_err());
        assert!(parse_sim("banana").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
