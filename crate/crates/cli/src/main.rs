use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use astraea_core::config::{config_from_manifest, parse_config, parse_config_str, Overrides};
use astraea_core::runner;
use clap::Parser;

/// Deterministic federated learning simulator with class rebalancing.
#[derive(Parser, Debug)]
#[command(name = "astraea", version)]
struct Args {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Rerun the configuration recorded in an earlier run's manifest.json.
    #[arg(long, conflicts_with = "config")]
    from_manifest: Option<PathBuf>,

    #[arg(long, value_parser = ["astraea", "fedavg", "proposition-check", "schedule-only"])]
    mode: Option<String>,

    /// Number of clients.
    #[arg(long)]
    k: Option<usize>,

    /// Local minibatch size.
    #[arg(long)]
    b: Option<usize>,

    /// Clients online per round.
    #[arg(long)]
    c: Option<usize>,

    /// Augmentation strength in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,

    /// Maximum clients per mediator.
    #[arg(long)]
    gamma: Option<usize>,

    #[arg(long)]
    local_epochs: Option<usize>,

    #[arg(long)]
    mediator_epochs: Option<usize>,

    #[arg(long)]
    rounds: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, value_parser = ["sgd", "adam"])]
    optimizer: Option<String>,

    #[arg(long)]
    lr: Option<f64>,

    /// Compute mediators once over all clients instead of every round.
    #[arg(long)]
    static_schedule: bool,

    #[arg(long)]
    out_dir: Option<PathBuf>,

    #[arg(long, value_parser = ["synthetic", "idx"])]
    dataset: Option<String>,

    #[arg(long)]
    idx_images: Option<PathBuf>,

    #[arg(long)]
    idx_labels: Option<PathBuf>,

    /// Train mediators one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

impl Args {
    fn overrides(&self) -> Overrides {
        Overrides {
            mode: self.mode.clone(),
            k: self.k,
            b: self.b,
            c: self.c,
            alpha: self.alpha,
            gamma: self.gamma,
            local_epochs: self.local_epochs,
            mediator_epochs: self.mediator_epochs,
            rounds: self.rounds,
            seed: self.seed,
            optimizer: self.optimizer.clone(),
            lr: self.lr,
            static_schedule: self.static_schedule.then_some(true),
            out_dir: self.out_dir.clone(),
            dataset: self.dataset.clone(),
            idx_images: self.idx_images.clone(),
            idx_labels: self.idx_labels.clone(),
            parallel_mediators: self.sequential.then_some(false),
        }
    }
}

fn execute(args: &Args) -> Result<()> {
    let overrides = args.overrides();
    let config = if let Some(manifest) = &args.from_manifest {
        let mut c = config_from_manifest(manifest)
            .with_context(|| format!("reading {}", manifest.display()))?;
        if let Some(dir) = &overrides.out_dir {
            c.output.out_dir = dir.clone();
        }
        c
    } else if let Some(path) = &args.config {
        parse_config(path, &overrides).with_context(|| format!("loading {}", path.display()))?
    } else {
        parse_config_str("", &overrides)?
    };

    let summary = runner::run(&config)?;
    println!("mode: {}", config.mode);
    if let Some(a) = summary.final_accuracy {
        println!("final accuracy: {a:.4}");
    }
    if let Some(mb) = summary.cumulative_megabytes() {
        println!("cumulative traffic: {mb:.3} MB");
    }
    if let Some(d) = summary.max_divergence {
        println!("max divergence: {d:e}");
    }
    if let (Some(m), Some(c)) = (summary.mean_mediator_kld, summary.mean_client_kld) {
        println!("mean KLD: mediator {m:.4}, client {c:.4}");
    }
    if let Some(t) = summary.mean_round_secs {
        println!("mean round time: {t:.3} s");
    }
    println!("outputs: {}", config.output.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
