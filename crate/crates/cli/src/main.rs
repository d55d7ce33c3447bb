use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use rbsl::env::Variant;
use rbsl::plot::plot_metrics;
use rbsl::run::{eval_run, gen_data, train_run, DataPolicy, EvalOptions, GenDataOptions, RunConfig, TrainOptions};

#[derive(Parser)]
#[command(name = "rbsl", version, about = "Offline safe goal-conditioned RL: data, training, evaluation, plots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Reach2d,
    Push2d,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Expert,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    WgcslOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a data-collection policy and save the dataset.
    GenData {
        #[arg(long, value_enum)]
        env: EnvArg,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        /// Overridden by the RBSL_SEED environment variable.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        p_block: Option<f64>,
        /// Expert detour margin; negative values cut into the safety band.
        #[arg(long, allow_hyphen_values = true)]
        margin: Option<f64>,
        /// Draw each episode's margin uniformly from [margin, margin-max].
        #[arg(long, allow_hyphen_values = true, requires = "margin")]
        margin_max: Option<f64>,
    },
    /// Train the goal policy and (unless ablated) the recovery side.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, requires = "data")]
        data_random: Option<PathBuf>,
        #[arg(long, requires = "data_random")]
        expert_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        ablation: Option<Ablation>,
    },
    /// Evaluate a trained run on one or more seeds.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        no_switching: bool,
        /// Switching limit override (defaults to the trained run's limit).
        #[arg(long)]
        limit: Option<f64>,
        /// Metrics CSV path (defaults to a file inside the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional per-episode JSON Lines log.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Plot per-epoch discounted and cost returns to an SVG file.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        limit: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var("RBSL_SEED") {
        Ok(s) => Ok(Some(s.trim().parse().with_context(|| format!("RBSL_SEED is not an unsigned integer: {s:?}"))?)),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            env,
            policy,
            episodes,
            seed,
            out,
            noise_std,
            p_block,
            margin,
            margin_max,
        } => {
            let opts = GenDataOptions {
                env: match env {
                    EnvArg::Reach2d => Variant::Reach2D,
                    EnvArg::Push2d => Variant::Push2D,
                },
                policy: match policy {
                    PolicyArg::Expert => DataPolicy::Expert,
                    PolicyArg::Random => DataPolicy::Random,
                },
                episodes: episodes as usize,
                seed: seed_override()?.unwrap_or(seed),
                out,
                noise_std,
                p_block,
                margin,
                margin_max,
            };
            let stats = gen_data(&opts)?;
            println!("{stats}");
        }
        Command::Train {
            config,
            data,
            data_random,
            expert_fraction,
            out,
            ablation,
        } => {
            let mut cfg = RunConfig::from_json(
                &std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?,
                &config.display().to_string(),
            )?;
            if let Some(seed) = seed_override()? {
                cfg.seed = seed;
            }
            let opts = TrainOptions {
                data,
                data_random,
                expert_fraction,
                out,
                wgcsl_only: matches!(ablation, Some(Ablation::WgcslOnly)),
            };
            let run = train_run(&cfg, &opts)?;
            let m = &run.manifest;
            println!(
                "trained: D={} D_e={} D_rec={} recovery_trained={} switching={}",
                m.datasets.full.trajectories,
                m.datasets.expert_filtered_trajectories,
                m.datasets.recovery_trajectories,
                m.recovery_trained,
                m.switching
            );
        }
        Command::Eval {
            run,
            episodes,
            seeds,
            no_switching,
            limit,
            out,
            records,
        } => {
            let report = eval_run(&EvalOptions {
                run,
                episodes: episodes.map(|e| e as usize),
                seeds,
                no_switching,
                limit,
                out,
                records,
            })?;
            let a = &report.aggregate;
            println!(
                "success_rate={:.4}±{:.4} cost_return={:.4}±{:.4} discounted_return={:.4}±{:.4} -> {}",
                a.success_rate.mean,
                a.success_rate.std,
                a.cost_return.mean,
                a.cost_return.std,
                a.discounted_return.mean,
                a.discounted_return.std,
                report.csv_path.display()
            );
        }
        Command::Plot { metrics, limit, out } => {
            plot_metrics(&metrics, limit, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
