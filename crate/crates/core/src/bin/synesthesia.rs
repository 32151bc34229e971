use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use synesthesia::audio::{decode_wav, extract_features};
use synesthesia::canvas::save_png;
use synesthesia::emotion::speech_emotion;
use synesthesia::encoders::load_weight_file;
use synesthesia::gradcheck::{run_gradcheck, Component, GradcheckOptions};
use synesthesia::pipeline::paint;
use synesthesia::strokes::{render_plan, PaintingPlan};
use synesthesia::{Error, Result};

/// Paint stroke plans from sound, speech, text, images and emotions.
///
/// Exit codes: 0 success, 2 usage or config, 3 I/O, 4 numeric failure.
/// SYNESTHESIA_THREADS caps the worker threads.
#[derive(Parser)]
#[command(name = "synesthesia", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a painting plan from a JSON config.
    Paint {
        #[arg(long)]
        config: PathBuf,
        /// Overrides outputs.dir from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render a plan JSON to PNG.
    Render {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write mel, MFCC and chroma features of a WAV as JSON.
    Features {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify the emotion of a speech WAV.
    Emotion {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every analytic gradient against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        configs: usize,
        #[arg(long, hide = true)]
        corrupt_vjp: Option<String>,
    },
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SYNESTHESIA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("SYNESTHESIA_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Paint { config, out_dir } => {
            let dir = paint(&config, out_dir.as_deref())?;
            println!("wrote {}", dir.display());
        }
        Command::Render { plan, out } => {
            let text = std::fs::read_to_string(&plan).map_err(|source| Error::Io {
                path: plan.clone(),
                source,
            })?;
            save_png(&render_plan(&PaintingPlan::from_json(&text)?), &out)?;
        }
        Command::Features { wav, out } => {
            let feats = extract_features(&decode_wav(&wav)?)?;
            write_json(&out, &serde_json::to_value(&feats).map_err(|e| Error::Format(e.to_string()))?)?;
        }
        Command::Emotion { wav, weights, out } => {
            let feats = extract_features(&decode_wav(&wav)?)?;
            let dist = speech_emotion(&feats, &load_weight_file(&weights)?)?;
            write_json(&out, &json!({"probs": dist.probs, "argmax": dist.argmax().name()}))?;
        }
        Command::Gradcheck {
            seed,
            configs,
            corrupt_vjp,
        } => {
            let corrupt = corrupt_vjp
                .map(|name| {
                    Component::from_name(&name)
                        .ok_or_else(|| Error::Param(format!("unknown component {name:?}")))
                })
                .transpose()?;
            let report = run_gradcheck(&GradcheckOptions {
                seed,
                configs,
                corrupt,
                ..GradcheckOptions::default()
            })?;
            print!("{report}");
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
