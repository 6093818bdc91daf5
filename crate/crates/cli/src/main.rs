mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "evidentia", version, about = "Agentic video misinformation verifier and GRPO reward engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Http,
}

/// Model, tool and concurrency settings shared by episode-running commands.
#[derive(Args, Clone, Debug)]
pub struct RunArgs {
    /// Scripted responses for `--backend mock` (falls back to $EVIDENTIA_MOCK_SCRIPT).
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Directory of canned search responses; without it the HTTP provider is used.
    #[arg(long)]
    pub search_fixtures: Option<PathBuf>,
    /// Where ClipScout writes frame grids.
    #[arg(long)]
    pub grid_dir: Option<PathBuf>,
    /// External frame decoder, whitespace-separated argv with {path}, {t} and {out}.
    #[arg(long)]
    pub decoder: Option<String>,
    /// Prompt templates as TOML (stage1_system, stage1_user, stage2_user, audit).
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub concurrency: usize,
    /// Record real tool latencies instead of 0.
    #[arg(long)]
    pub measure_latency: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode per manifest item and write trajectories.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendKind::Http)]
        backend: BackendKind,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Sample a rollout group per manifest item.
    Rollout {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = evidentia_core::DEFAULT_GROUP_SIZE)]
        group_size: usize,
        #[arg(long, value_enum, default_value_t = BackendKind::Http)]
        backend: BackendKind,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = evidentia_core::DEFAULT_BETA)]
        beta: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compute rewards, advantages and objective diagnostics for rollout groups.
    Score {
        #[arg(long)]
        groups: PathBuf,
        /// Reward coefficients as TOML; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve reward computations as newline-delimited JSON.
    ServeRewards {
        /// TCP address (host:port) or Unix socket path.
        #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
        socket: Option<String>,
        #[arg(long)]
        stdio: bool,
    },
    /// Compute metrics, cost sweeps and audits, and write report files.
    Eval(EvalArgs),
    /// Build the supervised fine-tuning corpus.
    #[command(subcommand)]
    Forge(ForgeCommand),
    /// Write a deterministic synthetic corpus for demos and tests.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        group_size: usize,
    },
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Prediction or trajectory JSONL.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = ["temporal"])]
    pub split: Option<String>,
    #[arg(long, default_value_t = evidentia_core::eval::DEFAULT_TEST_FRACTION)]
    pub test_frac: f64,
    /// Cost ratios alpha:gamma, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<String>,
    /// One prediction file per sweep ratio, comma-separated, in the same order.
    #[arg(long, value_delimiter = ',')]
    pub sweep_predictions: Vec<PathBuf>,
    /// Judge-audit correctly predicted trajectories; needs trajectory JSONL as predictions.
    #[arg(long)]
    pub audit: bool,
    #[arg(long, value_enum, default_value_t = BackendKind::Http)]
    pub judge_backend: BackendKind,
    #[arg(long)]
    pub judge_script: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub audit_concurrency: usize,
}

#[derive(Subcommand)]
enum ForgeCommand {
    /// Capture teacher trajectories with label-revealing prompts.
    Generate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendKind::Http)]
        teacher_backend: BackendKind,
        #[arg(long)]
        teacher_model: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Apply the rejection rules and the manual review file.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        review: Option<PathBuf>,
        #[arg(long)]
        kept: PathBuf,
        #[arg(long)]
        rejected: PathBuf,
    },
    /// Emit student-facing conversations for kept records.
    Emit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify {
            manifest,
            out,
            backend,
            temperature,
            seed,
            run,
        } => commands::verify(&manifest, &out, backend, temperature, seed, &run),
        Command::Rollout {
            manifest,
            out,
            group_size,
            backend,
            temperature,
            seed,
            beta,
            run,
        } => commands::rollout(&manifest, &out, group_size, backend, temperature, seed, beta, &run),
        Command::Score { groups, config, out } => commands::score(&groups, config.as_deref(), &out),
        Command::ServeRewards { socket, stdio } => commands::serve_rewards(socket.as_deref(), stdio),
        Command::Eval(args) => commands::eval(&args),
        Command::Forge(ForgeCommand::Generate {
            manifest,
            teacher_backend,
            teacher_model,
            out,
            run,
        }) => commands::forge_generate(&manifest, teacher_backend, teacher_model, &out, &run),
        Command::Forge(ForgeCommand::Filter {
            input,
            review,
            kept,
            rejected,
        }) => commands::forge_filter(&input, review.as_deref(), &kept, &rejected),
        Command::Forge(ForgeCommand::Emit { input, out }) => commands::forge_emit(&input, &out),
        Command::Synth {
            out,
            n,
            seed,
            group_size,
        } => commands::synth(&out, n, seed, group_size),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
