//! `xtrack` command-line tool.
//!
//! Exit status is 0 on success, 1 for usage and validation errors (bad
//! flags, malformed config or input files, a failed certification) and 2
//! for runtime failures (I/O, divergence, non-finite values).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xtrack::evalcli::{
    ablate, certify, evaluate, preprocess, read_predictions, write_predictions, MetricsReport, RunConfig, ABLATION_GRID,
};
use xtrack::model::{load_params, save_params, train, Model};
use xtrack::scenario::{
    load_tracks, read_archive, split_dataset, synth_generate, synth_recording, write_archive, write_tracks, RecordingSpec,
    Scenario,
};
use xtrack::Error;

#[derive(Parser, Debug)]
#[command(name = "xtrack", version, about = "Highway trajectory prediction with xLSTM encoders and kinematic rollout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tracks CSV to a balanced, target-frame scenario archive.
    Preprocess(Common),
    /// Synthetic scenario archive, or a raw highway recording with --recording.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Write a tracks CSV in the configured column layout instead.
        #[arg(long)]
        recording: bool,
        /// Recording length in seconds.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
    },
    /// Trains on the archive's train split and writes the best checkpoint.
    Train(Common),
    /// Scores a checkpoint, or a predictions CSV, against an archive.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Subset::All)]
        split: Subset,
    },
    /// Per-scenario predicted trajectories as CSV.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Subset::All)]
        split: Subset,
    },
    /// Runs the gradient certification suite.
    Gradcheck {
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trains and evaluates every encoder/decoder pair of the ablation grid.
    Ablate(Common),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for initialization, shuffling and generation.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["xtraj", "xtrack"])]
    variant: Option<String>,
    #[arg(long, value_parser = ["lstm", "slstm", "mlstm"])]
    encoder: Option<String>,
    #[arg(long, value_parser = ["lstm", "slstm", "mlstm"])]
    decoder: Option<String>,
    /// Input file: tracks CSV for preprocess, scenario archive otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Sample spacing in seconds.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum Subset {
    All,
    Train,
    Val,
    Test,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Usage(_)
            | Error::Parse { .. }
            | Error::MissingColumn(_)
            | Error::Format(_)
            | Error::ConfigMismatch { .. }
            | Error::Empty(_)
            | Error::Json(_) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

impl Common {
    fn run_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).map_err(|e| match e {
                Error::Io(io) => Failure::Validation(format!("cannot read config {}: {io}", p.display())),
                e => e.into(),
            })?,
            None => RunConfig::default(),
        };
        let mut set = |k: &str, v: String| cfg.set(k, &v);
        if let Some(s) = self.seed {
            for k in ["seed", "train_seed", "split.seed", "balance_seed"] {
                set(k, s.to_string())?;
            }
        }
        if let Some(v) = &self.variant {
            set("variant", v.clone())?;
        }
        if let Some(v) = &self.encoder {
            set("encoder", v.clone())?;
        }
        if let Some(v) = &self.decoder {
            set("decoder", v.clone())?;
        }
        if let Some(v) = self.epochs {
            set("epochs", v.to_string())?;
        }
        if let Some(v) = self.batch {
            set("batch_size", v.to_string())?;
        }
        if let Some(v) = self.dt {
            set("dt", v.to_string())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn data(&self) -> CliResult<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Failure::Validation("--data is required".into()))
    }

    fn out(&self) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Failure::Validation("--out is required".into()))
    }

    fn seed(&self, cfg: &RunConfig) -> u64 {
        self.seed.unwrap_or(cfg.model.seed)
    }
}

fn load_archive(path: &Path) -> CliResult<Vec<Scenario>> {
    let data = read_archive(path).map_err(|e| match e {
        Error::Io(io) => Failure::Runtime(format!("cannot read {}: {io}", path.display())),
        e => e.into(),
    })?;
    if data.is_empty() {
        return Err(Failure::Validation(format!("{} holds no scenarios", path.display())));
    }
    Ok(data)
}

fn subset(data: Vec<Scenario>, which: Subset, cfg: &RunConfig) -> CliResult<Vec<Scenario>> {
    if which == Subset::All {
        return Ok(data);
    }
    let s = split_dataset(&data, &cfg.split)?;
    Ok(match which {
        Subset::Train => s.train,
        Subset::Val => s.val,
        _ => s.test,
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Preprocess(c) => {
            let cfg = c.run_config()?;
            let tracks = load_tracks(c.data()?, &cfg.format)?;
            let scenarios = preprocess(&tracks, &cfg)?;
            write_archive(c.out()?, &scenarios)?;
            println!("{} tracks -> {} scenarios", tracks.len(), scenarios.len());
        }
        Command::Synth {
            common: c,
            recording,
            duration,
        } => {
            let cfg = c.run_config()?;
            let seed = c.seed(&cfg);
            if recording {
                let spec = RecordingSpec {
                    duration,
                    frame_rate: cfg.format.frame_rate,
                    ..RecordingSpec::default()
                };
                let tracks = synth_recording(&spec, seed)?;
                write_tracks(c.out()?, &tracks, &cfg.format)?;
                println!("{} tracks", tracks.len());
            } else {
                let scenarios = synth_generate(&cfg.synth(), seed)?;
                write_archive(c.out()?, &scenarios)?;
                println!("{} scenarios", scenarios.len());
            }
        }
        Command::Train(c) => {
            let cfg = c.run_config()?;
            let out = c.out()?;
            let splits = split_dataset(&load_archive(c.data()?)?, &cfg.split)?;
            let outcome = train(Model::new(cfg.model.clone())?, &splits.train, &splits.val, &cfg.train)?;
            for h in &outcome.history {
                match h.val_loss {
                    Some(v) => eprintln!("epoch {:>4}  train {:.6}  val {:.6}", h.epoch, h.train_loss, v),
                    None => eprintln!("epoch {:>4}  train {:.6}", h.epoch, h.train_loss),
                }
            }
            save_params(&outcome.model, out)?;
            println!(
                "best epoch {} of {}, {} optimizer steps",
                outcome.best_epoch,
                outcome.history.len(),
                outcome.optimizer_steps
            );
        }
        Command::Evaluate {
            common: c,
            checkpoint,
            predictions,
            split,
        } => {
            let cfg = c.run_config()?;
            let data = subset(load_archive(c.data()?)?, split, &cfg)?;
            let report = match (checkpoint, predictions) {
                (Some(ck), _) => evaluate(&load_params(ck, None)?, &data, cfg.train.threads)?,
                (None, Some(p)) => {
                    MetricsReport::from_predictions(&read_predictions(p)?, &data, cfg.model.variant, cfg.model.fingerprint())?
                }
                (None, None) => return Err(Failure::Validation("--checkpoint or --predictions is required".into())),
            };
            let json = report.to_json()?;
            match &c.out {
                Some(p) => write_text(p, &json)?,
                None => print!("{json}"),
            }
        }
        Command::Predict {
            common: c,
            checkpoint,
            split,
        } => {
            let cfg = c.run_config()?;
            let out = c.out()?;
            let model = load_params(checkpoint, None)?;
            let data = subset(load_archive(c.data()?)?, split, &cfg)?;
            let preds = model.predict_all(&data, cfg.train.threads)?;
            write_predictions(out, &preds, data[0].dt)?;
            println!("{} scenarios x {} steps", preds.len(), model.config.t_f);
        }
        Command::Gradcheck { out } => {
            let report = certify()?;
            for line in report.lines() {
                println!("{line}");
            }
            if let Some(p) = out {
                write_text(&p, &(serde_json::to_string_pretty(&report.entries).map_err(Error::from)? + "\n"))?;
            }
            if !report.passed() {
                return Err(Failure::Validation("gradient certification failed".into()));
            }
        }
        Command::Ablate(c) => {
            let cfg = c.run_config()?;
            let splits = split_dataset(&load_archive(c.data()?)?, &cfg.split)?;
            let table = ablate(&splits.train, &splits.val, &splits.test, &cfg.model, &cfg.train, &ABLATION_GRID)?;
            print!("{}", table.to_text());
            if let Some(p) = &c.out {
                write_text(p, &table.to_csv())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
