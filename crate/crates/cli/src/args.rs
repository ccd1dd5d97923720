use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pgan_core::metrics::KlDirection;
use pgan_core::synthdata::{Mode, Split, DEFAULT_RESOLUTION, DEFAULT_TEST_SIZE, DEFAULT_TRAIN_SIZE};

#[derive(Debug, Parser)]
#[command(name = "pgan", version, about = "Exocentric-to-egocentric view synthesis on a procedural dataset")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a paired dataset to disk.
    Synth(SynthArgs),
    /// Train both generators and discriminators from a JSON run config.
    Train(TrainArgs),
    /// Score a checkpoint against a dataset split.
    Eval(EvalArgs),
    /// Compose an input | generated | ground-truth image grid.
    Grid(GridArgs),
    /// Translate one exocentric PNG into an egocentric view.
    Generate(GenerateArgs),
    /// Train the scene classifier used for KL and top-k scores.
    TrainClassifier(ClassifierArgs),
    /// Train the full model and the no-cross-cycle / no-contextual variants.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Side2ego,
    Top2ego,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Side2ego => Mode::Side2Ego,
            ModeArg::Top2ego => Mode::Top2Ego,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KlArg {
    GeneratedToReal,
    RealToGenerated,
}

impl From<KlArg> for KlDirection {
    fn from(k: KlArg) -> KlDirection {
        match k {
            KlArg::GeneratedToReal => KlDirection::GeneratedToReal,
            KlArg::RealToGenerated => KlDirection::RealToGenerated,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "side2ego")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRAIN_SIZE)]
    pub train: usize,
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    pub test: usize,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub res: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config; defaults apply to every omitted key.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's `dataset`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Overrides the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
    /// Report JSON path; the CSV and full evaluation are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "generated-to-real")]
    pub kl_direction: KlArg,
    #[arg(long, default_value_t = pgan_core::metrics::CONFIDENT_THRESHOLD)]
    pub confident_threshold: f64,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Exocentric RGB PNG at the training resolution.
    #[arg(long)]
    pub input: PathBuf,
    /// Egocentric segmentation PNG, required when the checkpoint conditions on one.
    #[arg(long)]
    pub seg: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifierArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra rendered pairs beyond the train split.
    #[arg(long)]
    pub extra: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Caps every variant at this many steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
}
