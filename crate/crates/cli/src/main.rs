mod commands;
mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "panelscope", version, about = "Manga panel-transition annotation and analysis")]
struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus manifest checks and statistics.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Inter-annotator agreement (Cohen's kappa).
    Agree(AgreeArgs),
    /// Panel feature file checks.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// Train the transition classifier on the corpus labels.
    Train(TrainArgs),
    /// Predict transition labels for a list of pairs.
    Predict(PredictArgs),
    /// Run the iterative feedback loop.
    Loop(LoopArgs),
    /// Cluster books by their transition distributions.
    Cluster(ClusterArgs),
    /// Inertia and distortion over a range of k.
    Elbow(ElbowArgs),
    /// Cluster membership per genre group.
    Intersect(IntersectArgs),
    /// Frequent transition sequences per genre group.
    Mine(MineArgs),
    /// Serve the annotation HTTP API.
    Serve(ServeArgs),
    /// Generate synthetic corpora.
    #[command(subcommand)]
    Synth(SynthCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    Validate { dir: PathBuf },
    Stats { dir: PathBuf },
}

#[derive(Args)]
struct AgreeArgs {
    dir: PathBuf,
    /// Two annotator ids, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "all_pairs")]
    raters: Option<Vec<String>>,
    /// Report every annotator pair.
    #[arg(long)]
    all_pairs: bool,
    /// Extra annotation files merged with the corpus annotations.
    #[arg(long)]
    extra: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum FeaturesCmd {
    Check {
        file: PathBuf,
        /// Also check that every pair of this corpus has features.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// JSON training config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Train on one annotator's labels instead of the majority vote.
    #[arg(long)]
    annotator: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value = "model.ckpt")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Pair keys (`book:page:panel`) or JSON records, one per line.
    #[arg(long)]
    pairs: PathBuf,
}

#[derive(Args)]
struct LoopArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Feedback labels in annotation format.
    #[arg(long, required_unless_present = "interactive")]
    oracle: Option<PathBuf>,
    #[arg(long, default_value_t = 11)]
    rounds: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial labels from one annotator instead of the majority vote.
    #[arg(long)]
    ground_annotator: Option<String>,
    /// Move wrongly predicted pairs into the pool with their feedback label.
    #[arg(long)]
    adopt_corrections: bool,
    /// Re-initialize the network every round.
    #[arg(long)]
    cold_start: bool,
    /// Also run the fixed-pool comparison.
    #[arg(long)]
    baseline: bool,
    #[arg(long, default_value = "loop_out")]
    out: PathBuf,
    /// Collect feedback from annotators over HTTP instead of the oracle.
    #[arg(long)]
    interactive: bool,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Session log for interactive feedback; defaults to OUT/sessions.jsonl.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value = "annotator")]
    annotator: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Groups {
    Default,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    annotator: Option<String>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the fitted model here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write `book_id,cluster,act,asp,sub` rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ElbowArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    annotator: Option<String>,
    #[arg(long, default_value_t = 1)]
    kmin: usize,
    #[arg(long, default_value_t = 10)]
    kmax: usize,
    #[arg(long, default_value_t = 0.10)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write `k,distortion,inertia` rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct IntersectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Corpus whose book genres define the groups.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "default")]
    groups: Groups,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Labels to mine; defaults to the corpus annotations.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    annotator: Option<String>,
    #[arg(long, value_enum, default_value = "default")]
    groups: Groups,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    topk: usize,
    /// Count gapped subsequences allowing this many skipped positions.
    #[arg(long)]
    max_gap: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "sessions.jsonl")]
    log: PathBuf,
    /// Round reports of a running experiment, exposed at /rounds.
    #[arg(long)]
    rounds: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Labeled corpus with a three-annotator evaluation subset.
    Sample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 109)]
        seed: u64,
    },
    /// Six separable classes for exercising the feedback loop.
    Blobs {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        labeled: usize,
        #[arg(long, default_value_t = 1100)]
        unlabeled: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
