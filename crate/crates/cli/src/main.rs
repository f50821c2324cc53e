use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairij::Result;
use fairij_cli::commands;
use fairij_cli::config::{self, RunConfig};

#[derive(Parser)]
#[command(name = "fairij", version, about = "Post-hoc fairness editing with influence functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Global seed (falls back to FAIRIJ_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct WithOut {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long, short = 'o', default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct WithModel {
    #[command(flatten)]
    base: WithOut,
    /// Model checkpoint; defaults to model.json in the output directory.
    #[arg(long, short = 'm')]
    model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a CSV (optionally converting the raw Adult files first).
    Prep {
        #[command(flatten)]
        base: WithOut,
        /// Directory holding adult.data and adult.test.
        #[arg(long)]
        adult_dir: Option<PathBuf>,
    },
    /// Write a two-moons CSV and the schema that reads it.
    GenMoons {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        separation: Option<f64>,
        /// Output CSV file.
        #[arg(long, short = 'o')]
        out: PathBuf,
    },
    /// Train the classifier and save a checkpoint.
    Train(WithOut),
    /// Influence of every training instance on the fairness surrogate.
    Influence(WithModel),
    /// Edit a trained model towards fairness.
    Mitigate(WithModel),
    /// Accuracy and fairness metrics of a checkpoint.
    Eval(WithModel),
    /// Compare approximate IHVP methods with the exact one.
    IhvpBench(WithOut),
    /// Repeated seeded train-and-edit trials.
    Sweep {
        #[command(flatten)]
        base: WithOut,
        #[arg(long)]
        trials: Option<usize>,
        /// Fairness metric: dp, eo or eqopp.
        #[arg(long)]
        metric: Option<String>,
        /// Trials run at the same time.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn resolve(common: &Common, mut extra: Vec<(String, String)>) -> Result<RunConfig> {
    let mut pairs = Vec::new();
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| fairij::Error::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = common.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    pairs.append(&mut extra);
    config::load(common.config.as_deref(), &pairs)
}

fn model_path(m: &WithModel) -> PathBuf {
    m.model.clone().unwrap_or_else(|| commands::default_model(&m.base.out))
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Prep { base, adult_dir } => {
            commands::prep(resolve(&base.common, vec![])?, adult_dir.as_deref(), &base.out)
        }
        Command::GenMoons {
            common,
            n,
            noise,
            separation,
            out,
        } => {
            let mut extra = vec![("data.source".to_string(), "moons".to_string())];
            let opt = |k: &str, v: Option<String>| v.map(|v| (k.to_string(), v));
            extra.extend(opt("data.n", n.map(|v| v.to_string())));
            extra.extend(opt("data.noise", noise.map(|v| v.to_string())));
            extra.extend(opt("data.separation", separation.map(|v| v.to_string())));
            commands::gen_moons(resolve(&common, extra)?, &out)
        }
        Command::Train(b) => commands::train(resolve(&b.common, vec![])?, &b.out),
        Command::Influence(m) => commands::influence(resolve(&m.base.common, vec![])?, &model_path(&m), &m.base.out),
        Command::Mitigate(m) => commands::mitigate(resolve(&m.base.common, vec![])?, &model_path(&m), &m.base.out),
        Command::Eval(m) => commands::eval(resolve(&m.base.common, vec![])?, &model_path(&m), &m.base.out),
        Command::IhvpBench(b) => commands::ihvp_bench(resolve(&b.common, vec![])?, &b.out),
        Command::Sweep {
            base,
            trials,
            metric,
            jobs,
        } => {
            let mut extra = Vec::new();
            extra.extend(trials.map(|t| ("trials".to_string(), t.to_string())));
            extra.extend(metric.map(|m| ("mitigate.metric".to_string(), m)));
            commands::sweep(resolve(&base.common, extra)?, jobs, &base.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(fairij_cli::exit_code(&e) as u8)
        }
    }
}

