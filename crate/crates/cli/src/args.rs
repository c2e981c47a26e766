//! Command-line flags. Long names mirror the library config fields.

use std::path::PathBuf;

use autopeer_core::simulator::{SaltPhase, SimConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "autopeer", version, about = "Salt-based autopeering simulator and eclipse analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the network simulation and write per-tick metrics, epoch minima and a topology snapshot.
    Simulate(SimulateArgs),
    /// Sample the smallest neighbor scores at salt updates and compare with the analytic CDFs.
    Scores(ScoresArgs),
    /// Compare Monte-Carlo takeover estimates with the closed forms over a parameter grid.
    Eclipse(EclipseArgs),
    /// Run eclipse attacks inside the simulator.
    Attack(AttackArgs),
    /// Tabulate a closed-form expression over a parameter grid.
    Analytics(AnalyticsArgs),
    /// Run the oracle-equivalence suite and report every check.
    Verify(VerifyArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Random,
    Synchronized,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Honest node count.
    #[arg(long, default_value_t = 100)]
    pub nodes: usize,
    /// Neighbor cap per direction.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Salt update period T in ticks.
    #[arg(long, default_value_t = 100)]
    pub salt_interval: u64,
    /// Query period d in ticks.
    #[arg(long, default_value_t = 1)]
    pub query_delay: u64,
    /// θ-test threshold; 1.0 disables the test.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    /// Message delivery delay in ticks.
    #[arg(long, default_value_t = 1)]
    pub latency: u64,
    /// Simulated ticks.
    #[arg(long, default_value_t = 5000)]
    pub ticks: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Salt timer phases across nodes.
    #[arg(long, value_enum, default_value_t = PhaseArg::Random)]
    pub salt_phase: PhaseArg,
    /// Hash-chain length M.
    #[arg(long, default_value_t = SimConfig::default().chain_length)]
    pub chain_length: usize,
    /// Most public salt updates a verifier will hash through.
    #[arg(long, default_value_t = SimConfig::default().max_verify_steps)]
    pub max_verify_steps: u32,
}

impl SimArgs {
    pub fn config(&self) -> SimConfig {
        SimConfig {
            nodes: self.nodes,
            k: self.k,
            salt_interval: self.salt_interval,
            query_delay: self.query_delay,
            theta: self.theta,
            latency: self.latency,
            max_ticks: self.ticks,
            seed: self.seed,
            salt_phase: match self.salt_phase {
                PhaseArg::Random => SaltPhase::Random,
                PhaseArg::Synchronized => SaltPhase::Synchronized,
            },
            chain_length: self.chain_length,
            max_verify_steps: self.max_verify_steps,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Tick of the topology snapshot; defaults to the last tick.
    #[arg(long)]
    pub topology_at: Option<u64>,
    /// Ticks excluded from the printed summary.
    #[arg(long, default_value_t = 500)]
    pub warmup: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoresArgs {
    /// `--ticks` is ignored; the run lasts `epochs + 1` salt intervals.
    #[command(flatten)]
    pub sim: SimArgs,
    /// Sampled salt epochs after the warm-up epoch.
    #[arg(long, default_value_t = 10)]
    pub epochs: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Inbound,
    Outbound,
    RandomChoice,
}

#[derive(Debug, Args)]
pub struct EclipseArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Inbound)]
    pub model: ModelArg,
    /// Attacker counts N_A.
    #[arg(long, value_delimiter = ',', default_values_t = [5u64, 20, 80])]
    pub n_attackers: Vec<u64>,
    /// Honest node counts N (outbound and random-choice models).
    #[arg(long, value_delimiter = ',', default_values_t = [50u64])]
    pub honest: Vec<u64>,
    /// Honest request counts L (inbound and outbound models).
    #[arg(long, value_delimiter = ',', default_values_t = [5u64, 20, 80])]
    pub requests: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [4u64])]
    pub k: Vec<u64>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Spam,
    ProtocolFollowing,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 10)]
    pub n_attackers: usize,
    #[arg(long, value_enum, default_value_t = StrategyArg::Spam)]
    pub strategy: StrategyArg,
    /// Honest node index under attack.
    #[arg(long, default_value_t = 0)]
    pub victim: usize,
    /// Independent runs; run `t` uses seed `seed + t`.
    #[arg(long, default_value_t = 5)]
    pub trials: u64,
    /// First measurement tick; defaults to one salt interval.
    #[arg(long)]
    pub measure_from: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub measure_every: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormulaArg {
    OrderStatPdf,
    OrderStatMean,
    MinCdf,
    Inbound,
    InboundTheta,
    Outbound,
    FiniteCdf,
    LimitingCdf,
    EclipseBound,
    RandomChoice,
}

/// Every list flag defaults to empty; a formula whose parameter list is empty
/// yields a header-only table.
#[derive(Debug, Args)]
pub struct AnalyticsArgs {
    #[arg(long, value_enum)]
    pub formula: FormulaArg,
    /// Order statistic rank.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub r: Vec<u64>,
    /// Sample size / honest request count L.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub l: Vec<u64>,
    /// Score in [0, 1].
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub x: Vec<f64>,
    /// Honest node count N.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub n: Vec<u64>,
    /// Attacker count N_A.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub n_attackers: Vec<u64>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub k: Vec<u64>,
    /// Scaled score x·N.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub x_bar: Vec<f64>,
    /// Attacker-to-honest ratio.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub a: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub theta: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Monte-Carlo trials per parameter point.
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Allowed deviation in standard errors.
    #[arg(long, default_value_t = 3.0)]
    pub sigmas: f64,
    /// Optional directory for the report and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Test fixture: scale the closed-form takeover probabilities.
    #[arg(long, hide = true)]
    pub perturb: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the reproduced artifacts.
    #[arg(long)]
    pub out: PathBuf,
}
