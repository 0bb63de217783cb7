//! `tristream`: synthesize data, train, evaluate, predict and run gradient checks.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tristream_core::checks::GradScope;

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "tristream", version, about = "Three-stream gesture sequence classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the config-driven commands. Each maps to the config key of the same name.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset root.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override any config key, e.g. `--set epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_key_value)]
    overrides: Vec<(String, String)>,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn toml_string(p: &std::path::Path) -> String {
    toml::Value::String(p.to_string_lossy().into_owned()).to_string()
}

impl Common {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(("seed".into(), s.to_string()));
        }
        if let Some(o) = &self.out {
            overrides.push(("out".into(), toml_string(o)));
        }
        if let Some(d) = &self.data {
            overrides.push(("data".into(), toml_string(d)));
        }
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    All,
    Train,
    Val,
    Test,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic gesture dataset.
    Synth {
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        n_per_class: u64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..=10))]
        classes: u64,
        #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
        frames: u64,
        #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(8..))]
        size: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=4))]
        channels: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split, augment and train; writes a checkpoint, the epoch history and the resolved config.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from this checkpoint; epoch numbering carries on.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset; writes text and JSON reports and the confusion matrix.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Which part of the dataset to score. Splits are rebuilt from the config and seed.
        #[arg(long, value_enum, default_value_t = SplitChoice::All)]
        split: SplitChoice,
        /// Also retrain and score the stream subsets {1}, {2}, {3}, {1,2,3}.
        #[arg(long)]
        ablation: bool,
    },
    /// Classify one sample directory.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        /// File with one class name per line; defaults to the standard gesture names.
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[arg(
            long,
            default_value = "all",
            value_parser = PossibleValuesParser::new(GradScope::NAMES).map(|s| s.parse::<GradScope>().expect("listed scope"))
        )]
        scope: GradScope,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth {
            n_per_class,
            classes,
            frames,
            size,
            channels,
            seed,
            out,
        } => commands::synth(
            &tristream_core::dataio::SynthConfig {
                classes: classes as usize,
                n_per_class: n_per_class as usize,
                frames: frames as usize,
                size: size as usize,
                channels: channels as usize,
                seed,
                ..Default::default()
            },
            &out,
        ),
        Command::Train { mut common, resume } => {
            if let Some(r) = resume {
                common.overrides.push(("resume".into(), toml_string(&r)));
            }
            commands::train(&common.resolve()?)
        }
        Command::Eval {
            common,
            checkpoint,
            split,
            ablation,
        } => commands::eval(&common.resolve()?, &checkpoint, split, ablation),
        Command::Predict {
            checkpoint,
            sample,
            classes,
        } => commands::predict(&checkpoint, &sample, classes.as_deref()),
        Command::Gradcheck { scope, seed } => commands::gradcheck(scope, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
