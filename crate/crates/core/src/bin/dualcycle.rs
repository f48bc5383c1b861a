use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualcycle::cli::{
    error_line, evaluate_run, export_report, load_corpus, pretrain_frame_estimator,
    pretrain_language_model, run_experiment, show_cycle_examples, ExperimentConfig, Overrides,
};
use dualcycle::data::{synth, write_e2e_csv, Corpus};
use dualcycle::error::Result;

#[derive(Parser)]
#[command(name = "dualcycle", version, about = "Joint dual training of frame understanding and sentence generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Learning scheme id (a, c to l).
    #[arg(long)]
    scheme: Option<String>,
    /// Seed; repeat for several runs.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Directory with trainset.csv and testset.csv.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on training pairs.
    #[arg(long)]
    subset: Option<usize>,
    /// Apply reward terms from the first epoch.
    #[arg(long)]
    no_warm_start: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed and write the summary.
    Train(RunArgs),
    /// Re-evaluate the final checkpoints of a run.
    Evaluate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the summary table of a run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Show recorded primal and dual cycles.
    Examples {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
    /// Pretrain the language model used by the estimator reward.
    PretrainLm(RunArgs),
    /// Pretrain the MADE frame estimator used by the estimator reward.
    PretrainMade(RunArgs),
    /// Write a synthetic corpus in the E2E CSV layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2020)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        train_mrs: usize,
        #[arg(long, default_value_t = 200)]
        test_mrs: usize,
    },
}

fn experiment(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    Overrides {
        scheme: args.scheme.clone(),
        seeds: args.seeds.clone(),
        data_dir: args.data_dir.clone(),
        out: args.out.clone(),
        subset: args.subset,
        no_warm_start: args.no_warm_start,
    }
    .apply(&mut cfg)?;
    cfg.train.validate()?;
    Ok(cfg)
}

fn prepare(args: &RunArgs) -> Result<(ExperimentConfig, Corpus)> {
    let cfg = experiment(args)?;
    let corpus = load_corpus(&cfg)?;
    std::fs::create_dir_all(&cfg.out)?;
    Ok((cfg, corpus))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let summary = run_experiment(&experiment(&args)?)?;
            print!("{}", summary.to_text());
        }
        Command::Evaluate { out } => {
            for (seed, r) in evaluate_run(&out)? {
                println!("seed {seed}");
                print!("{}", r.to_text());
            }
        }
        Command::Report { out } => print!("{}", export_report(&out)?.to_text()),
        Command::Examples { out, count } => print!("{}", show_cycle_examples(&out, count)?),
        Command::PretrainLm(args) => {
            let (cfg, corpus) = prepare(&args)?;
            pretrain_language_model(&cfg, &corpus, cfg.seeds[0], &cfg.out)?;
        }
        Command::PretrainMade(args) => {
            let (cfg, corpus) = prepare(&args)?;
            pretrain_frame_estimator(&cfg, &corpus, cfg.seeds[0], &cfg.out)?;
        }
        Command::Synth { out, seed, train_mrs, test_mrs } => {
            let (train, test) = synth::generate(&synth::SynthConfig {
                seed,
                train_mrs,
                test_mrs,
                ..Default::default()
            });
            std::fs::create_dir_all(&out)?;
            write_e2e_csv(std::fs::File::create(out.join("trainset.csv"))?, &train)?;
            write_e2e_csv(std::fs::File::create(out.join("testset.csv"))?, &test)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
