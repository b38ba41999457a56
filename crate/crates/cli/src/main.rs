use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use coupling::specdec::InvariantMethod;
use coupling_cli::commands::{self, Format, SpecdecMode};

/// Shared-randomness coupling experiments.
#[derive(Parser)]
#[command(name = "coupling", version)]
struct Cli {
    /// Base seed for all randomness.
    #[arg(long, global = true, env = "COUPLING_SEED", default_value_t = 0)]
    seed: u64,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact collision probabilities for a pair of distributions.
    Report { p: PathBuf, q: PathBuf },
    /// Empirical Gumbel and WMH collision rates against TV for each pair in
    /// a manifest.
    Figure {
        manifest: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        trials: u64,
    },
    /// Pairwise collisions on the adversarial family of size d + 1.
    Lowerbound {
        #[arg(long, short)]
        d: usize,
        #[arg(long, default_value_t = 20_000)]
        trials: u64,
    },
    /// Low-communication protocol sessions.
    Lowcomm {
        p: PathBuf,
        q: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Number of sessions.
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        /// Write every transcript as JSON lines.
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// Speculative decoding with one or more drafters.
    Specdec {
        #[arg(long)]
        target: PathBuf,
        #[arg(long = "drafter", required = true)]
        drafters: Vec<PathBuf>,
        #[arg(long, default_value_t = 64)]
        length: usize,
        #[arg(long, value_enum, default_value_t = SpecdecMode::Invariant)]
        mode: SpecdecMode,
        #[arg(long, value_parser = parse_method, default_value = "gumbel")]
        method: InvariantMethod,
    },
    /// Writes a toy model: a random Markov chain, or a perturbed copy of
    /// --base.
    GenModel {
        #[arg(long, default_value_t = 16)]
        vocab: usize,
        #[arg(long, default_value_t = 2.0)]
        sharpness: f64,
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long, default_value_t = 0.3)]
        noise_scale: f64,
        #[arg(long)]
        name: Option<String>,
    },
}

fn parse_method(s: &str) -> Result<InvariantMethod, String> {
    match s {
        "gumbel" => Ok(InvariantMethod::Gumbel),
        "wmh" | "weighted-minhash" => Ok(InvariantMethod::WeightedMinHash),
        _ => Err(format!("unknown method {s:?} (expected gumbel or wmh)")),
    }
}

fn run(cli: Cli) -> Result<()> {
    let (seed, format) = (cli.seed, cli.format);
    let output = match cli.command {
        Command::Report { p, q } => commands::report(&p, &q, format)?,
        Command::Figure { manifest, trials } => commands::figure(&manifest, trials, seed, format)?,
        Command::Lowerbound { d, trials } => commands::lowerbound(d, trials, seed, format)?,
        Command::Lowcomm {
            p,
            q,
            epsilon,
            trials,
            transcripts,
        } => commands::lowcomm(
            &p,
            &q,
            epsilon,
            trials,
            seed,
            transcripts.as_deref(),
            format,
        )?,
        Command::Specdec {
            target,
            drafters,
            length,
            mode,
            method,
        } => {
            let (text, out) =
                commands::specdec(&target, &drafters, length, seed, mode, method, format)?;
            for r in &out.runs {
                eprintln!("{}: acceptance {:.4}", r.drafter, r.acceptance);
            }
            text
        }
        Command::GenModel {
            vocab,
            sharpness,
            base,
            noise_scale,
            name,
        } => commands::gen_model(
            vocab,
            sharpness,
            seed,
            base.as_deref(),
            noise_scale,
            name.as_deref(),
        )?,
    };
    match cli.out {
        Some(path) => {
            fs::write(&path, output).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(output.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
