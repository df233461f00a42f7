use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ScheduleName;

#[derive(Debug, Parser)]
#[command(
    name = "cfe",
    version,
    about = "Coalition games, Gibbs posteriors and precision sweeps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. Flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// RNG seed [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Harsanyi dividends, exact Shapley values and synergy labels.
    Dividends(DividendsArgs),
    /// Shapley values, exact or by permutation sampling.
    Shapley(ShapleyArgs),
    /// Gibbs posterior, participation marginals and free energy.
    Gibbs(GibbsArgs),
    /// Mean-field marginals against exact Gibbs marginals.
    Meanfield(MeanfieldArgs),
    /// Epsilon-Nash certificates of mean-field profiles over a precision grid.
    Nash(NashArgs),
    /// Precision sweep, quadratic fit and peak precision for a domain preset.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct DividendsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Value table (`mask,value` CSV or JSON).
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Also write the game truncated to dividends of at most this order.
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Dividends within this of zero are labelled neutral [default: 1e-9].
    #[arg(long)]
    pub synergy_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ShapleyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Estimate from this many sampled permutations instead of exactly.
    #[arg(long)]
    pub permutations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GibbsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Energy table (`mask,energy`), or a value table with `--from-game`.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Read a value table and use `E = -v`.
    #[arg(long)]
    pub from_game: bool,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Check optimality against this many seeded perturbations.
    #[arg(long)]
    pub verify_trials: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleName>,
}

#[derive(Debug, Args)]
pub struct MeanfieldArgs {
    #[command(flatten)]
    pub common: Common,
    /// Pairwise energy JSON `{"phi": [...], "psi": [[...]]}`.
    #[arg(long, value_name = "PATH")]
    pub pairwise: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct NashArgs {
    #[command(flatten)]
    pub common: Common,
    /// Pairwise energy JSON.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["input", "random_agents"])]
    pub pairwise: Option<PathBuf>,
    /// Energy table.
    #[arg(long, value_name = "PATH", conflicts_with = "random_agents")]
    pub input: Option<PathBuf>,
    /// Draw a seeded random pairwise game with this many agents.
    #[arg(long)]
    pub random_agents: Option<usize>,
    /// Ascending precisions, comma separated [default: 1,2,4,8,16].
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// Grid points for the best-response search [default: 1001].
    #[arg(long)]
    pub grid: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[command(flatten)]
    pub common: Common,
    /// neural, neural_s4, fish, marl or all.
    pub domain: String,
}
