//! `blwave`: spline wavelet systems, weighted sequence norms and transforms from the command line.
//!
//! Exit codes: 0 success, 1 computational error (or a failing self-test), 2 invalid input.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Compute(String),
}

impl From<blwave_core::Error> for Failure {
    fn from(e: blwave_core::Error) -> Self {
        use blwave_core::Error::*;
        match e {
            InvalidParams(_) | InvalidWeightSpec(_) | OrderTooLarge(_) | OrderTooSmall { .. } | MomentDeficit { .. } => {
                Failure::Validation(e.to_string())
            }
            _ => Failure::Compute(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "blwave", version, about = "Battle-Lemarie spline wavelets and weighted sequence norms")]
pub struct Cli {
    /// Worker threads (overrides BLWAVE_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML run configuration; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (JSON, JSON lines or CSV depending on the command); stdout otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Euler-Frobenius roots and derived constants for order n.
    Roots {
        #[arg(long)]
        order: usize,
    },
    /// Sample the truncated orthonormal generator φ or ψ.
    Gen(GenArgs),
    /// Localization coefficients and supports of Φ and Ψ.
    Localize(LocalizeArgs),
    /// Gram table λ_h and its sum for every generator type of a tensor system.
    Gram(SystemArgs),
    /// Local or global Muckenhoupt constant estimate, optionally with r0.
    Weights(WeightsArgs),
    /// Sequence norm of a coefficient tree (JSON lines).
    Norm(NormArgs),
    /// Coefficients of a B-spline test function or sampled grid.
    Analyze(AnalyzeArgs),
    /// Reconstruct from a coefficient tree and sample the result as CSV.
    Synthesize(SynthesizeArgs),
    /// Atom and kernel certificates for normalized Φ or scaled Ψ.
    Certify(CertifyArgs),
    /// Sequence norm against convolution norm over a family of test functions.
    Equiv(EquivArgs),
    /// Run the acceptance checks.
    Selftest {
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Roots { .. } => "roots",
            Command::Gen(_) => "gen",
            Command::Localize(_) => "localize",
            Command::Gram(_) => "gram",
            Command::Weights(_) => "weights",
            Command::Norm(_) => "norm",
            Command::Analyze(_) => "analyze",
            Command::Synthesize(_) => "synthesize",
            Command::Certify(_) => "certify",
            Command::Equiv(_) => "equiv",
            Command::Selftest { .. } => "selftest",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Phi,
    Psi,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    #[arg(long)]
    pub order: usize,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub k: i64,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub s: i64,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Number of samples over the support.
    #[arg(long, default_value_t = 1024)]
    pub points: usize,
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub order: usize,
    #[arg(long, default_value_t = 0)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub kk: u8,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub k: i64,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub s: i64,
}

/// A tensor system: repeated `--axis n,m,kk,k,s`, or one isotropic axis and `--dim`.
#[derive(Args, Debug, Clone, Default)]
pub struct SystemArgs {
    #[arg(long = "axis", value_name = "N,M,KK,K,S", allow_hyphen_values = true)]
    pub axes: Vec<String>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub kk: Option<u8>,
    #[arg(long, allow_hyphen_values = true)]
    pub k_shift: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub s_shift: Option<i64>,
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Args, Debug)]
pub struct WeightsArgs {
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, conflicts_with = "global")]
    pub local: bool,
    #[arg(long)]
    pub global: bool,
    /// Also estimate r0 over this exponent grid.
    #[arg(long, value_delimiter = ',')]
    pub r0_grid: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    B,
    F,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SpaceArgs {
    #[arg(long, value_enum)]
    pub space: Option<SpaceArg>,
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Summability; `inf` allowed.
    #[arg(long, value_parser = io::parse_q)]
    pub q: Option<f64>,
    #[arg(long)]
    pub weight: Option<String>,
    /// r0 of the weight; derived from the weight when omitted.
    #[arg(long)]
    pub r0: Option<f64>,
}

#[derive(Args, Debug)]
pub struct NormArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Coefficient tree as JSON lines; stdin when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Report the bold variant (s = N/p).
    #[arg(long)]
    pub bold: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TreeFormat {
    Jsonl,
    Csv,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// `bspline:n=2[,dilate=j][,shift=a][,c=1]`, tensorized over the system dimension.
    #[arg(long, conflicts_with = "samples")]
    pub function: Option<String>,
    /// CSV grid samples with columns x[,y[,z]],value.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long, value_enum, default_value_t = TreeFormat::Jsonl)]
    pub format: TreeFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Analysis coefficients used directly.
    #[value(name = "paper", alias = "direct")]
    Direct,
    Dual,
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Dual)]
    pub mode: ModeArg,
    /// Samples per axis.
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, value_enum)]
    pub kind: GenKind,
    /// Wavelet type for `psi`.
    #[arg(long, default_value_t = 1)]
    pub i: usize,
    /// Cube level (0 for `phi`).
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub tau: Vec<i64>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Derivative and moment orders K = L = A = B; default n0 − 1.
    #[arg(long)]
    pub conditions: Option<usize>,
    /// Cube enlargement; default from the generator supports.
    #[arg(long)]
    pub dilation: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EquivArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub depth: Option<u32>,
    /// Mollifier moment order Γ.
    #[arg(long, default_value_t = 2)]
    pub gamma: usize,
    /// Order of the B-spline test function.
    #[arg(long, default_value_t = 2)]
    pub base_order: usize,
    #[arg(long, value_delimiter = ',')]
    pub dilates: Vec<u32>,
    /// Translation vector, components separated by commas; repeatable.
    #[arg(long = "translate", allow_hyphen_values = true)]
    pub translates: Vec<String>,
    /// Extra translates drawn from the seed, each component uniform in [−2, 2].
    #[arg(long, default_value_t = 0)]
    pub random_translates: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub scalars: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn configure_threads(cli: &Cli, cfg: &RunConfig) -> Result<(), Failure> {
    let from_env = match std::env::var("BLWAVE_THREADS") {
        Ok(v) => Some(
            v.parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| Failure::Validation(format!("BLWAVE_THREADS must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    if cli.threads == Some(0) {
        return Err(Failure::Validation("--threads must be positive".into()));
    }
    if let Some(n) = cli.threads.or(from_env).or(cfg.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Compute(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &cfg.command {
        if c != cli.command.name() {
            return Err(Failure::Validation(format!(
                "config is for `{c}` but `{}` was invoked",
                cli.command.name()
            )));
        }
    }
    configure_threads(&cli, &cfg)?;
    let out = cli.out.clone().or(cfg.out.clone());
    commands::dispatch(&cli.command, &cfg, out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn argument_definitions() {
        super::Cli::command().debug_assert();
    }
}
