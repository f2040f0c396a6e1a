use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "arblab",
    version,
    about = "Context-weighted reward modeling lab on synthetic data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; created if absent.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate a synthetic world of contexts and responses.
    Synth(SynthArgs),
    /// Simulate five annotation rounds per response.
    Annotate(AnnotateArgs),
    /// Aggregate annotations into labels with adjusted weights.
    Label(LabelArgs),
    /// Mine pairs, split into ranking and regression sets, inject hard negatives.
    Curate(CurateArgs),
    /// Train one reward architecture on a curated corpus.
    TrainReward(TrainArgs),
    /// Evaluate trained reward nets on held-out pairs.
    EvalReward(EvalArgs),
    /// Monte Carlo estimator orderings, Fisher identity and error bounds.
    Theory(TheoryArgs),
    /// Train a contrastive projection head on a risk corpus.
    Riskclust(RiskArgs),
    /// Train a toy policy with group-relative optimization.
    Grpo(GrpoArgs),
    /// Aggregate finished runs into one comparison table.
    Report(ReportArgs),
    /// Re-execute a run from its manifest and compare output hashes.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Annotate(_) => "annotate",
            Command::Label(_) => "label",
            Command::Curate(_) => "curate",
            Command::TrainReward(_) => "train-reward",
            Command::EvalReward(_) => "eval-reward",
            Command::Theory(_) => "theory",
            Command::Riskclust(_) => "riskclust",
            Command::Grpo(_) => "grpo",
            Command::Report(_) => "report",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by `synth`.
    #[arg(long)]
    pub world: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LabelArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CurateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Overrides `reward.split.bt_frac`.
    #[arg(long)]
    pub bt_frac: Option<f64>,
    /// Overrides `reward.hard_negative_p`.
    #[arg(long)]
    pub hard_negative_p: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// `prepared.json` written by `curate`.
    #[arg(long)]
    pub prepared: PathBuf,
    /// single, sequential or parallel.
    #[arg(long)]
    pub kind: String,
    /// Overrides `reward.train.lambda`.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Train on the ranking set before hard-negative substitution.
    #[arg(long)]
    pub no_injection: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub prepared: PathBuf,
    /// Checkpoint written by `train-reward`; repeatable.
    #[arg(long, required = true)]
    pub net: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides `theory.mc.replicates`.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RiskArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct GrpoArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run directory containing a manifest; repeatable.
    #[arg(long, required = true)]
    pub run: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Also write the replayed outputs here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
