use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scratchpad::config::load_config;
use scratchpad::pipeline::{cmd_analyze, cmd_average, cmd_compare, cmd_evaluate, cmd_gen_data, cmd_train, EvalRequest};
use scratchpad::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(name = "scratchpad", version, about = "Train, decode and analyse attentional seq2seq models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set model.hidden=128`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set output_dir=DIR`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<String> {
        let mut o = Vec::new();
        if let Some(d) = &self.output_dir {
            o.push(format!("output_dir={}", toml_string(&d.to_string_lossy())));
        }
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        o.extend(self.set.iter().cloned());
        o
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory written by `train`.
    run: PathBuf,
    /// Checkpoint to use instead of checkpoints/final.ckpt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// TSV test set instead of the run's data/test.tsv.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Beam width; 1 is greedy.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

impl EvalArgs {
    fn request(&self) -> EvalRequest {
        EvalRequest { checkpoint: self.checkpoint.clone(), test: self.test.clone(), beam: self.beam, max_len: self.max_len }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a run directory.
    Train(ConfigArgs),
    /// Decode the test set and write eval/metrics.json.
    Evaluate(EvalArgs),
    /// Write the attention-entropy CDF and heatmaps.
    Analyze(EvalArgs),
    /// Compare two evaluated runs. Exits 0 when A has the lower mean entropy, 3 otherwise.
    Compare { a: PathBuf, b: PathBuf },
    /// Write the configured train/valid/test splits as TSV files.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        /// Destination directory (default: <output_dir>/data).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average checkpoints of one run.
    AverageCheckpoints {
        run: PathBuf,
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Train(args) => {
            let config = load_config(args.config.as_deref(), &args.overrides())?;
            let outcome = cmd_train(&config)?;
            if let Some(last) = outcome.epochs.last() {
                println!(
                    "trained {} epochs, val_loss {:.6}{}; run in {}",
                    last.epoch,
                    last.val_loss,
                    if outcome.stopped_early { " (stopped early)" } else { "" },
                    config.output_dir.display()
                );
            }
        }
        Command::Evaluate(args) => {
            let m = cmd_evaluate(&args.run, &args.request())?;
            println!("{}", serde_json::to_string_pretty(&m).expect("summary serialises"));
        }
        Command::Analyze(args) => {
            let a = cmd_analyze(&args.run, &args.request())?;
            println!("mean entropy {:.6} over {} steps", a.stats.mean, a.stats.entropies.len());
            for f in &a.files {
                println!("{}", f.display());
            }
        }
        Command::Compare { a, b } => {
            let c = cmd_compare(&a, &b)?;
            print!("{}", c.table());
            return Ok(if c.a_lower_entropy() { 0 } else { EXIT_INCONCLUSIVE });
        }
        Command::GenData { config, out } => {
            let cfg = load_config(config.config.as_deref(), &config.overrides())?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.join("data"));
            let corpus = cmd_gen_data(&cfg, &dir)?;
            println!(
                "wrote {}/{}/{} pairs to {}",
                corpus.train.len(),
                corpus.valid.len(),
                corpus.test.len(),
                dir.display()
            );
        }
        Command::AverageCheckpoints { run, checkpoints, out } => {
            let p = cmd_average(&run, &checkpoints, &out)?;
            println!("averaged {} checkpoints ({} parameters) into {}", checkpoints.len(), p.numel(), out.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
