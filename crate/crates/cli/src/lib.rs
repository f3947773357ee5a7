//! Command-line surface of ppda: direction estimates from CSV files,
//! asymptotic efficiency tables, simulation runs and PCA applicability.

pub mod commands;
pub mod input;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ppda", version, about = "Linear discriminant direction estimation for two-group Gaussian mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a direction from a CSV file.
    Estimate(EstimateArgs),
    /// Tables of asymptotic constants and efficiencies.
    Asymptotics(AsymptoticsArgs),
    /// Run a simulation config.
    Simulate(SimulateArgs),
    /// Check whether PCA recovers the discriminant direction of a model.
    FisherCheck(FisherCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pp,
    Fobi,
    Pca,
    Lda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndexArg {
    Skewness,
    Kurtosis,
    Hybrid,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input CSV; a non-numeric first row is read as the header.
    pub csv: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Pp)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = IndexArg::Hybrid)]
    pub index: IndexArg,
    /// Skewness weight of the hybrid index.
    #[arg(long, default_value_t = 0.8)]
    pub w1: f64,
    /// Labels column, by header name or 0-based index.
    #[arg(long)]
    pub labels: Option<String>,
    /// Seed of the random restarts.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random restarts in addition to the FOBI start.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    /// C_kappa, C_gamma and C_eta over alpha1 x tau x w1.
    Constants,
    /// Efficiencies 1/C vs LDA over alpha1 x tau x w1.
    Efficiencies,
    /// Optimal hybrid weight over alpha1 x tau.
    OptimalWeight,
    /// Average efficiency A(w1, tau) over w1 x tau.
    Average,
    /// Weight maximizing the average efficiency, per tau.
    BestWeight,
    /// Proportions where kurtosis and skewness are equally efficient, per tau.
    Frontier,
    /// Hybrid efficiency at alpha1 = delta1 + epsilon over epsilon x tau x w1.
    Epsilon,
    /// Limiting covariance traces for the model given by --model.
    PsiTrace,
}

#[derive(Debug, Args)]
pub struct AsymptoticsArgs {
    #[arg(long, value_enum, default_value_t = Which::Efficiencies)]
    pub which: Which,
    /// Grid as a:b:n or a comma list.
    #[arg(long, default_value = "0.01:0.99:99")]
    pub alpha1: String,
    /// Grid as a:b:n or a comma list; `inf` selects the limit.
    #[arg(long, default_value = "5")]
    pub tau: String,
    /// Grid as a:b:n or a comma list.
    #[arg(long, default_value = "0.8")]
    pub w1: String,
    /// Grid of offsets from delta1 for --which epsilon.
    #[arg(long, default_value = "0.1,0.01,0.001")]
    pub epsilon: String,
    /// Model JSON for --which psi-trace.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Heatmap,
    Curve,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config (JSON, schema 1).
    pub config: PathBuf,
    /// Override the replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Override the seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; default from the config, then PPDA_WORKERS, then all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Override the output file stem.
    #[arg(long)]
    pub stem: Option<String>,
    #[arg(long, value_enum)]
    pub layout: Option<LayoutArg>,
    /// Also write a JSON bundle of config and results.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FisherCheckArgs {
    /// Model JSON with alpha1, mu2, sigma and optional mu1.
    #[arg(long, conflicts_with_all = ["alpha1", "mu1", "mu2", "sigma"])]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub alpha1: f64,
    /// Comma list; defaults to the origin.
    #[arg(long)]
    pub mu1: Option<String>,
    /// Comma list.
    #[arg(long, required_unless_present = "model")]
    pub mu2: Option<String>,
    /// Rows separated by ';', entries by ','; defaults to the identity.
    #[arg(long)]
    pub sigma: Option<String>,
}

/// Parses the arguments, runs the command and returns the exit code:
/// 0 on success, 1 on invalid input, 2 on numerical failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut out = std::io::stdout().lock();
    match commands::dispatch(&cli.command, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
