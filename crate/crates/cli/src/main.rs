use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mvprobit_cli::commands;
use mvprobit_cli::config::{
    self, load_config_file, parse_schema, ConfigFile, FitArgsRaw, SampleArgsRaw, ScalingArgsRaw,
};
use mvprobit_cli::error::CliError;
use mvprobit_cli::output::render_key_values;

/// Maximum-likelihood estimation of multivariate probit models by Monte
/// Carlo EM, with a sequential Monte Carlo sampler for the truncated
/// multivariate normal E step.
#[derive(Parser)]
#[command(name = "mvprobit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a multivariate probit model to a data file
    Fit(FitArgs),
    /// Measure sampler truncation steps against the mass ratio over dimensions
    Scaling(ScalingArgs),
    /// Sample a truncated multivariate normal and estimate its mass
    SampleTmvn(SampleArgs),
    /// Check a data file against a schema and report its shape
    ValidateData(ValidateArgs),
    /// Write a synthetic data file with a schema's shape
    SynthData(SynthArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV file
    #[arg(long)]
    data: Option<PathBuf>,
    /// Data schema: sixcities or generic
    #[arg(long)]
    schema: Option<String>,
    /// Covariance handling: constrained (correlation matrix) or unconstrained
    #[arg(long)]
    mode: Option<String>,
    /// Maximization objective: q or qtilde
    #[arg(long)]
    objective: Option<String>,
    /// Pin sigma_11 = 1 instead of the whole diagonal (unconstrained qtilde)
    #[arg(long)]
    fix_sigma11: bool,
    /// Move particles between iterations instead of sampling afresh
    #[arg(long)]
    recycle: bool,
    /// Particle schedule as start,step,growth,plateau,max
    #[arg(long)]
    particles_schedule: Option<String>,
    /// Averaged tail iterations after the schedule
    #[arg(long)]
    vr_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for artifact files
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Skip the standard-error pass
    #[arg(long)]
    skip_se: bool,
    /// TOML configuration file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit
    #[arg(long)]
    show_config: bool,
}

#[derive(Args)]
struct ScalingArgs {
    /// Replicates per dimension
    #[arg(long)]
    replicates: Option<usize>,
    /// Particles per sampler run
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    show_config: bool,
}

#[derive(Args)]
struct SampleArgs {
    /// Mean vector, comma separated: 0,0
    #[arg(long)]
    mu: Option<String>,
    /// Covariance rows separated by ;: 1,0.9;0.9,1
    #[arg(long)]
    sigma: Option<String>,
    /// Orthant signs, one + or - per component: +-
    #[arg(long)]
    orthant: Option<String>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    show_config: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "sixcities")]
    schema: String,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "sixcities")]
    schema: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Rows to generate (generic schema)
    #[arg(long, default_value_t = 537)]
    rows: usize,
    /// Response dimension (generic schema)
    #[arg(long, default_value_t = 3)]
    dims: usize,
    /// Output file
    #[arg(long)]
    out: PathBuf,
}

fn file_section(path: Option<&PathBuf>) -> Result<ConfigFile, CliError> {
    match path {
        Some(p) => load_config_file(p),
        None => Ok(ConfigFile::default()),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(args) => {
            let file = file_section(args.config.as_ref())?;
            // Let --show-config print the resolved defaults even before a
            // data file has been chosen.
            let data = args.data.or_else(|| {
                args.show_config.then(|| PathBuf::from("(unset)"))
            });
            let raw = FitArgsRaw {
                data,
                schema: args.schema,
                mode: args.mode,
                objective: args.objective,
                fix_sigma11: args.fix_sigma11,
                recycle: args.recycle,
                particles_schedule: args.particles_schedule,
                vr_steps: args.vr_steps,
                seed: args.seed,
                threads: args.threads,
                out_dir: args.out_dir,
                skip_standard_errors: args.skip_se,
            };
            let settings = config::resolve_fit(&raw, file.fit.as_ref())?;
            if args.show_config {
                print!("{}", render_key_values(&settings.show()));
                return Ok(());
            }
            commands::fit::run(&settings)
        }
        Command::Scaling(args) => {
            let file = file_section(args.config.as_ref())?;
            let raw = ScalingArgsRaw {
                replicates: args.replicates,
                particles: args.particles,
                seed: args.seed,
                threads: args.threads,
                out_dir: args.out_dir,
            };
            let settings = config::resolve_scaling(&raw, file.scaling.as_ref())?;
            if args.show_config {
                print!("{}", render_key_values(&settings.show()));
                return Ok(());
            }
            commands::scaling::run(&settings)
        }
        Command::SampleTmvn(args) => {
            let file = file_section(args.config.as_ref())?;
            let raw = SampleArgsRaw {
                mu: args.mu,
                sigma: args.sigma,
                orthant: args.orthant,
                particles: args.particles,
                seed: args.seed,
                out_dir: args.out_dir,
            };
            let settings = config::resolve_sample(&raw, file.sample_tmvn.as_ref())?;
            if args.show_config {
                print!("{}", render_key_values(&settings.show()));
                return Ok(());
            }
            commands::sample::run(&settings)
        }
        Command::ValidateData(args) => {
            let schema = parse_schema(&args.schema)?;
            commands::validate::run(&args.data, schema)
        }
        Command::SynthData(args) => {
            let schema = parse_schema(&args.schema)?;
            commands::synth::run(schema, args.seed, args.rows, args.dims, &args.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
