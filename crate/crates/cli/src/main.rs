use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use colog_core::config::{Config, Overrides};
use colog_core::modality::WindowKind;
use colog_core::{pipeline, Error, Result};

#[derive(Parser)]
#[command(name = "colog", version, about = "Collaborative multimodal log anomaly detection")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for generation, embedding, initialisation and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// 2 (point anomalies) or 4 (point and collective anomalies).
    #[arg(long, global = true)]
    classes: Option<usize>,
    /// Number of neighbouring events on each side.
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long = "window-kind", global = true, value_parser = ["background", "context"])]
    window_kind: Option<String>,
    /// Work directory holding every stage's artefacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic log with ground truth.
    Synth,
    /// Split headers and mine templates.
    Parse,
    /// Build the semantic and sequence inputs.
    Prepare,
    /// Remove Tomek links from the training split.
    Balance,
    /// Fit the model and save the best checkpoint.
    Train,
    /// Score the test split.
    Eval,
    /// Score every line of a log file.
    Predict {
        #[arg(long)]
        input: PathBuf,
        /// Optional ground truth for the input.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Header pattern for the input. Defaults to `parse.pattern`.
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Write latent vectors and their PCA projection for the test split.
    ExportVectors,
    /// Run every stage from one configuration.
    Pipeline,
    /// Print the effective configuration.
    ShowConfig,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Data(_) => 3,
        Error::Numerical(_) => 4,
    }
}

fn load(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        classes: cli.classes,
        window: cli.window,
        window_kind: cli.window_kind.as_deref().map(str::parse::<WindowKind>).transpose()?,
        out: cli.out.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn log_epoch(r: &colog_core::train::EpochRecord) {
    log::info!(
        "epoch {:>3}  lr {:.3e}  train_loss {:.6}  val_f1 {:.4}",
        r.epoch,
        r.lr,
        r.train_loss,
        r.val_f1
    );
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    let layout = pipeline::Layout::new(&cfg);
    match &cli.command {
        Command::Synth => {
            let log = pipeline::synth(&cfg)?;
            let anomalies = log.truth.iter().filter(|t| t.point == 0).count();
            println!(
                "wrote {} lines ({anomalies} anomalous) to {}",
                log.lines.len(),
                layout.raw().display()
            );
        }
        Command::Parse => {
            let s = pipeline::parse(&cfg)?;
            for (file, n) in &s.files {
                println!("{file}: {n} records");
            }
            println!("{} templates", s.templates);
        }
        Command::Prepare => {
            let ds = pipeline::prepare(&cfg)?;
            println!(
                "{} samples, vocabulary {}, written to {}",
                ds.samples.len(),
                ds.vocab.len(),
                layout.prepared().display()
            );
        }
        Command::Balance => {
            let r = pipeline::balance(&cfg)?;
            println!("removed per class {:?}", r.removed_per_class);
            print_json(&r);
        }
        Command::Train => {
            let r = pipeline::train(&cfg, log_epoch)?;
            println!(
                "best epoch {} (val macro F1 {:.4}) of {}; checkpoint {}",
                r.best_epoch,
                r.best_val_f1,
                r.history.len(),
                layout.checkpoint().display()
            );
        }
        Command::Eval => {
            let (r, _) = pipeline::evaluate(&cfg)?;
            println!("{}", r.to_json());
        }
        Command::Predict { input, labels, pattern } => {
            let mut cfg = cfg.clone();
            if let Some(p) = pattern {
                cfg.parse.pattern = p.clone();
                cfg.validate()?;
            }
            let (v, report) = pipeline::predict(&cfg, input, labels.as_deref())?;
            let flagged = v.iter().filter(|v| v.anomaly_probability >= 0.5).count();
            println!(
                "{} lines scored, {flagged} flagged anomalous; verdicts in {}",
                v.len(),
                layout.predict().display()
            );
            if let Some(r) = report {
                println!("macro F1 against labels {:.4}", r.metrics.macro_f1);
            }
        }
        Command::ExportVectors => match pipeline::export_vectors(&cfg)? {
            Some(p) => println!(
                "explained variance ratio {:.4} / {:.4}; files in {}",
                p.explained_ratio[0],
                p.explained_ratio.get(1).copied().unwrap_or(0.0),
                layout.vectors().display()
            ),
            None => println!("fewer than two samples; PCA skipped"),
        },
        Command::Pipeline => {
            let r = pipeline::run_all(&cfg, log_epoch)?;
            println!(
                "{} templates; trained {} epochs (best {}); test macro F1 {:.4}",
                r.parse.templates,
                r.fit.history.len(),
                r.fit.best_epoch,
                r.report.metrics.macro_f1
            );
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("colog: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
