//! `socnn`: dataset generation, electricity ingestion, model training and
//! the evaluation studies, as seeded reproducible subcommands.
//!
//! Logs go to standard error; standard output carries one final
//! machine-parsable `key=value` summary line per run. Every subcommand
//! writes a `manifest.json` (begun before work, finalized with a status)
//! into its output directory; all other outputs are byte-identical across
//! identical seeded invocations.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "socnn", version, about = "asynchronous time-series models and studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Sync,
    Async,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Socnn,
    Cnn,
    Var,
}

/// Default output root: $SOCNN_OUT_ROOT or the current directory.
fn default_out() -> PathBuf {
    std::env::var_os("SOCNN_OUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic synchronous or asynchronous dataset.
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Number of sources (16 or 64 unless --allow-any-k).
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_os_t = default_out())]
        out: PathBuf,
        #[arg(long)]
        allow_any_k: bool,
    },
    /// Parse and asynchronize the household electricity file.
    Ingest {
        #[arg(long)]
        uci: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_os_t = default_out())]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        error_budget: usize,
    },
    /// Train a model on a generated or ingested dataset directory.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Directory holding frame.csv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_os_t = default_out())]
        out: PathBuf,
        /// Config file path or inline key=value[,key=value] overrides.
        #[arg(long)]
        config: Option<String>,
    },
    /// Evaluate a checkpoint: split MSEs plus activation export.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Split seed; use the seed the model was trained with.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_os_t = default_out())]
        out: PathBuf,
        #[arg(long)]
        config: Option<String>,
        /// Samples in the activation export (significance-offset models).
        #[arg(long, default_value_t = 3)]
        activation_samples: usize,
    },
    /// Input-noise robustness study of a trained checkpoint.
    Robustness {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Split seed; use the seed the model was trained with.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_os_t = default_out())]
        out: PathBuf,
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 6000)]
        n_obs: usize,
        #[arg(long, default_value_t = 128)]
        gammas: usize,
        #[arg(long, default_value_t = 6.0)]
        range_sigmas: f64,
        #[arg(long, default_value_t = 5)]
        lag_stride: usize,
    },
    /// Compare the lag-coefficient recursion against Monte-Carlo OLS.
    Lemma {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long, default_value_t = 10)]
        kmax: usize,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_os_t = default_out())]
        out: PathBuf,
    },
    /// Train one model per (alpha, seed) cell and tabulate test errors.
    AlphaGrid {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "0,0.01,0.1")]
        alphas: String,
        #[arg(long, default_value = "0")]
        seeds: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_os_t = default_out())]
        out: PathBuf,
        #[arg(long)]
        config: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate {
            kind,
            k,
            n,
            seed,
            out,
            allow_any_k,
        } => commands::generate(kind, k, n, seed, &out, allow_any_k),
        Command::Ingest {
            uci,
            seed,
            out,
            error_budget,
        } => commands::ingest(&uci, seed, &out, error_budget),
        Command::Train {
            model,
            data,
            seed,
            out,
            config,
        } => commands::train(model, &data, seed, &out, config.as_deref()),
        Command::Eval {
            ckpt,
            data,
            seed,
            out,
            config,
            activation_samples,
        } => commands::eval(&ckpt, &data, seed, &out, config.as_deref(), activation_samples),
        Command::Robustness {
            ckpt,
            data,
            seed,
            out,
            config,
            n_obs,
            gammas,
            range_sigmas,
            lag_stride,
        } => commands::robustness(
            &ckpt,
            &data,
            seed,
            &out,
            config.as_deref(),
            n_obs,
            gammas,
            range_sigmas,
            lag_stride,
        ),
        Command::Lemma {
            a,
            b,
            kmax,
            n,
            seed,
            out,
        } => commands::lemma(a, b, kmax, n, seed, &out),
        Command::AlphaGrid {
            data,
            alphas,
            seeds,
            jobs,
            out,
            config,
        } => commands::alpha_grid(&data, &alphas, &seeds, jobs, &out, config.as_deref()),
    };
    match outcome {
        Ok(summary) => {
            println!("{}", summary);
        }
        Err(e) => {
            eprintln!("error: {}", e);
            std::process::exit(1);
        }
    }
}
