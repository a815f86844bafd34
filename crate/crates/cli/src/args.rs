use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

fn parse_steps(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("steps must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "geodyn", version, about = "Split variational integrators for the Kepler problem")]
pub struct Cli {
    /// Read default options from a `key = value` file. Command-line options win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and write it as CSV or SVG.
    Run(RunArgs),
    /// Per-period drift of eccentricity and angle over a step-size sweep.
    Convergence(ConvergenceArgs),
    /// Helmholtz conditions for a builtin system or an expression file.
    Check(CheckArgs),
    /// Modified-equation demos: the linear series and drift-order predictions.
    Modified(ModifiedArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Kepler,
    Relativistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Composition,
    TwoStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Plot {
    /// `x2` against `x1`.
    Orbit,
    /// `|H − H₀|` against time.
    Energy,
    /// `|e − e₀|` against time.
    Ecc,
    /// LRL angle against time.
    Angle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Ecc,
    Angle,
    All,
}

/// Initial state, either from an eccentricity or explicit vectors.
#[derive(Debug, Clone, Args)]
pub struct SeedArgs {
    /// Canonical seed (1−e, 0, 0, √((1+e)/(1−e))).
    #[arg(long, conflicts_with_all = ["x0", "v0"])]
    pub ecc: Option<f64>,

    /// Initial position.
    #[arg(long, num_args = 2, value_names = ["X1", "X2"], allow_negative_numbers = true, requires = "v0")]
    pub x0: Option<Vec<f64>>,

    /// Initial velocity (the spatial four-velocity `u` for the relativistic model).
    #[arg(long, num_args = 2, value_names = ["V1", "V2"], allow_negative_numbers = true, requires = "x0")]
    pub v0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Kepler: sym-euler, sv, vi1, vi1-adjoint, vi2, vi2-alt.
    /// Relativistic: k1, k1-adjoint, k2, k2-alt, del.
    #[arg(long)]
    pub method: String,

    #[arg(long, value_enum, default_value_t = Model::Kepler)]
    pub model: Model,

    #[command(flatten)]
    pub seed: SeedArgs,

    /// Initial γ for the relativistic model; defaults to the mass shell.
    #[arg(long)]
    pub gamma0: Option<f64>,

    /// Speed of light in the units of the seed and the output.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,

    /// Step size (proper time for the relativistic model).
    #[arg(long)]
    pub h: f64,

    #[arg(long, value_parser = parse_steps)]
    pub steps: usize,

    /// Kepler split weights, comma separated, summing to 1.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub split: Option<Vec<f64>>,

    #[arg(long, value_enum, default_value_t = FormArg::Composition)]
    pub form: FormArg,

    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Quantity drawn by `--format svg`.
    #[arg(long, value_enum, default_value_t = Plot::Orbit)]
    pub plot: Plot,

    /// Logarithmic y axis for SVG output.
    #[arg(long)]
    pub log_y: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    /// Methods to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "sym-euler,sv,vi1,vi2")]
    pub methods: Vec<String>,

    #[arg(long, value_enum, default_value_t = MetricArg::All)]
    pub metric: MetricArg,

    /// Step sizes are h0/2, h0/4, ..., h0/2^levels.
    #[arg(long, default_value_t = 1.0)]
    pub h0: f64,

    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..=30))]
    pub levels: u64,

    #[command(flatten)]
    pub seed: SeedArgs,

    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub split: Option<Vec<f64>>,

    #[arg(long, short)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    /// Builtin name (kepler, damped, magnetic, ...) or path to an expression file.
    pub system: String,

    #[arg(long, default_value_t = geodyn::variational::DEFAULT_SAMPLES)]
    pub samples: usize,

    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,

    /// Residual threshold for a condition to pass.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["linear", "drift"]))]
pub struct ModifiedArgs {
    /// Compare the modified series for x'' = −λx with the exact dispersion.
    #[arg(long, requires_all = ["lambda", "h"])]
    pub linear: bool,

    /// Predicted versus measured drift order of a Kepler method.
    #[arg(long, value_name = "METHOD")]
    pub drift: Option<String>,

    #[arg(long)]
    pub lambda: Option<f64>,

    #[arg(long)]
    pub h: Option<f64>,

    /// Number of series terms.
    #[arg(long, default_value_t = 20)]
    pub kmax: usize,

    /// Steps of the scheme used to measure the frequency directly.
    #[arg(long, default_value_t = 20_000)]
    pub measure_steps: usize,

    #[arg(long, value_enum, default_value_t = MetricArg::Ecc)]
    pub metric: MetricArg,

    #[arg(long, default_value_t = 1.0)]
    pub h0: f64,

    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(2..=30))]
    pub levels: u64,

    #[command(flatten)]
    pub seed: SeedArgs,

    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub split: Option<Vec<f64>>,
}
