//! Command-line grammar.

use clap::{Args, Parser, Subcommand};

use crate::report::OutputFormat;
use crate::verify::{DEFAULT_SEED, DEFAULT_SERIAL_BOUND};

/// Near the similarity regime the 16 x 4 banding separates best.
pub const DEFAULT_DELTA_CLUST: f64 = 0.3;

pub const DEFAULT_NODE_BUDGET: u64 = kbcost_core::trace::search::DEFAULT_NODE_BUDGET;

#[derive(Parser, Debug)]
#[command(
    name = "kbcost",
    version,
    about = "Derivation depth, description cost and cache allocation for Horn knowledge bases"
)]
pub struct Cli {
    /// Report format.
    #[arg(long, global = true, default_value = "json")]
    pub format: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Canonical irredundant core of the stored base.
    Core(KbArgs),
    /// Derivation depth of a query with its witness.
    Depth(DepthArgs),
    /// Shortest derivation trace, replayed and checked.
    Trace(QueryArgs),
    /// Canonical formula encoding and the bit-exact trace encoding.
    Encode(QueryArgs),
    /// Minimal trace length and essential premises.
    Nsearch(NsearchArgs),
    /// Cache versus derive costs over a frequency sweep or a workload.
    Tradeoff(TradeoffArgs),
    /// Critical frequency, its bisection check and locality factors.
    Fc(FcArgs),
    /// Budgeted cache allocation by greedy knapsack.
    Allocate(AllocateArgs),
    /// Query clustering and cluster-aware allocation.
    Cluster(ClusterArgs),
    /// Depth and cost perturbation under a noisy premise base.
    Noise(NoiseArgs),
    /// Two-phase allocation under a depth SLA on a noisy base.
    Twophase(TwoPhaseArgs),
    /// Count of distinct-conjunct BCQs against the richness bound.
    Richness(RichnessArgs),
    /// Depth and proxy ratios on the tightness family.
    Tightness(TightnessArgs),
    /// Invariant suites, optionally with the acceptance criteria.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct KbArgs {
    /// Knowledge base text file.
    #[arg(long)]
    pub kb: String,
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    /// Search states before shortest-trace search falls back to an upper bound.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    pub node_budget: u64,
}

#[derive(Args, Debug, Clone)]
pub struct CostArgs {
    /// Storage price relative to computation (default: workload header, else 1).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Per-access lookup cost (default: workload header, else 1).
    #[arg(long)]
    pub c_hit: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct DepthArgs {
    #[command(flatten)]
    pub kb: KbArgs,
    /// Query formula, e.g. "p(a) & q(b)".
    #[arg(long)]
    pub query: String,
    /// Cache file (candidate format) added to the stored base for a depth profile.
    #[arg(long)]
    pub candidates: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct QueryArgs {
    #[command(flatten)]
    pub kb: KbArgs,
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Args, Debug, Clone)]
pub struct NsearchArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Union over at most this many shortest traces instead of all of them.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct TradeoffArgs {
    #[command(flatten)]
    pub kb: KbArgs,
    /// Single query swept over `--frequency` values.
    #[arg(long, conflicts_with = "workload")]
    pub query: Option<String>,
    /// Workload file; one row per query at frequency horizon × prob.
    #[arg(long)]
    pub workload: Option<String>,
    /// Access frequencies (default: powers of two from 1 to 65536).
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub frequency: Vec<f64>,
    #[command(flatten)]
    pub cost: CostArgs,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Args, Debug, Clone)]
pub struct FcArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    /// Lower band constant for the frequency window.
    #[arg(long)]
    pub c_lo: Option<f64>,
    /// Upper band constant for the frequency window.
    #[arg(long)]
    pub c_hi: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct NoiseSource {
    /// Noise spec file (JSON).
    #[arg(long, conflicts_with_all = ["loss_rate", "pollution_rate"])]
    pub noise: Option<String>,
    /// Fraction of the base to lose in a generated spec.
    #[arg(long)]
    pub loss_rate: Option<f64>,
    /// Spurious atoms to add in a generated spec, as a fraction of the base.
    #[arg(long)]
    pub pollution_rate: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub kb: KbArgs,
    #[arg(long)]
    pub workload: String,
    /// Candidate file (default: non-premise workload queries and witness atoms).
    #[arg(long)]
    pub candidates: Option<String>,
    /// Budget in bits.
    #[arg(long)]
    pub budget: u64,
    /// Partial-enumeration seed size.
    #[arg(long, default_value_t = 3)]
    pub seed_size: usize,
    /// Sampled diminishing-returns checks.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Also compute the brute-force optimum (at most 20 candidates).
    #[arg(long)]
    pub exact: bool,
    /// Allocate against the noisy base with this pollution-exposure penalty.
    /// Requires a noise source.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub noise: NoiseSource,
}

#[derive(Args, Debug, Clone)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub kb: KbArgs,
    #[arg(long)]
    pub workload: String,
    /// Jaccard distance threshold for cluster cohesion.
    #[arg(long, default_value_t = DEFAULT_DELTA_CLUST)]
    pub delta_clust: f64,
    /// Clusters of three or more queries below this centrality are split.
    #[arg(long, default_value_t = 0.5)]
    pub kappa_threshold: f64,
    /// Run cluster-aware allocation with this budget.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub candidates: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub seed_size: usize,
}

#[derive(Args, Debug, Clone)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub kb: KbArgs,
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub noise: NoiseSource,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Access frequency for the cost comparison.
    #[arg(long, default_value_t = 1.0)]
    pub frequency: f64,
    #[command(flatten)]
    pub cost: CostArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TwoPhaseArgs {
    #[command(flatten)]
    pub kb: KbArgs,
    #[arg(long)]
    pub workload: String,
    #[command(flatten)]
    pub noise: NoiseSource,
    #[arg(long)]
    pub candidates: Option<String>,
    /// Depth threshold h every query must meet.
    #[arg(long)]
    pub sla_depth: u32,
    #[arg(long)]
    pub budget: u64,
    #[arg(long, default_value_t = 3)]
    pub seed_size: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct RichnessArgs {
    #[arg(long)]
    pub m: u64,
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 0.0)]
    pub delta0: f64,
}

#[derive(Args, Debug, Clone)]
pub struct TightnessArgs {
    #[arg(long)]
    pub m: usize,
    /// Sampled queries.
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Smaller samples for a fast run.
    #[arg(long)]
    pub quick: bool,
    /// Also run the ten acceptance criteria.
    #[arg(long)]
    pub criteria: bool,
    /// Flag threshold for the trace-length to depth ratio.
    #[arg(long, default_value_t = DEFAULT_SERIAL_BOUND)]
    pub serial_bound: f64,
}
