use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dbgfqn::config::{EncoderConfig, ExperimentConfig, Variant};
use dbgfqn::harness::experiment::{checkpoint_dir, run_experiment, RunOptions};
use dbgfqn::harness::params::{ablation_models, report_parameters};
use dbgfqn::rl::Trainer;
use dbgfqn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dbgfqn",
    version,
    about = "Train and evaluate transformer Q-networks with recurrent sublayers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over its seeds.
    Train(RunArgs),
    /// Greedy evaluation of a saved checkpoint.
    Eval(EvalArgs),
    /// Parameter counts for every sublayer variant.
    Params(ParamsArgs),
    /// Train several variants with the same settings.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Environment name, e.g. carflag, memorycards-p3-t6, gv-memory-5x5.
    #[arg(long)]
    env: Option<String>,
    /// Experiment config (TOML); flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    /// Hidden layers of the DTQN feed-forward sublayer.
    #[arg(long, default_value_t = 1)]
    ffn_layers: usize,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    variant: Option<Variant>,
    /// Continue from existing checkpoints in the output directory.
    #[arg(long)]
    resume: bool,
    /// Stop at this step and checkpoint, as if interrupted.
    #[arg(long)]
    stop_at: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory; defaults to `<out>/checkpoint_seed<seed>`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long, default_value = "carflag")]
    env: String,
    /// Embedding width; defaults to the environment's standard width.
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Also write the report as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated variants; all by default.
    #[arg(long = "variant", value_delimiter = ',')]
    variants: Vec<Variant>,
    /// Comma-separated seeds; overrides --seed and the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

fn build_config(c: &Common, variant: Option<Variant>) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let env = c
                .env
                .as_deref()
                .ok_or_else(|| Error::Config("either --env or --config is required".into()))?;
            ExperimentConfig::new(env, variant.unwrap_or(Variant::Dbgfqn))?
        }
    };
    if c.config.is_some() {
        if let Some(env) = &c.env {
            let spec: dbgfqn::envs::EnvSpec = env.parse()?;
            let built = spec.build()?;
            use dbgfqn::envs::PomdpEnv;
            cfg.env = spec.to_string();
            cfg.encoder.obs_width = built.obs_width();
            cfg.encoder.action_count = built.action_count();
        }
    }
    if let Some(v) = variant {
        let e = cfg.encoder;
        cfg.encoder = EncoderConfig {
            heads: e.heads,
            encoder_layers: e.encoder_layers,
            context_length: e.context_length,
            ..EncoderConfig::with_sublayer(
                v.sublayer(c.ffn_layers),
                e.embed_dim,
                e.obs_width,
                e.action_count,
            )
        };
    }
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    if let Some(n) = c.steps {
        cfg.train.total_steps = n;
    }
    cfg.deterministic |= c.deterministic;
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(out: &Path, s: &dbgfqn::harness::Summary) {
    for seed in &s.seeds {
        println!(
            "seed {:>3}  steps {:>8}  episodes {:>6}  final {:.4}  best {:.4}",
            seed.seed, seed.steps, seed.episodes, seed.final_rate, seed.best_rate
        );
    }
    println!(
        "mean final {:.4}  mean best {:.4}  ({})",
        s.mean_final,
        s.mean_best,
        out.display()
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let cfg = build_config(&a.common, a.variant)?;
            let opts = RunOptions {
                resume: a.resume,
                stop_at: a.stop_at,
                threads: None,
            };
            let summary = run_experiment(&cfg, &a.common.out, &opts)?;
            print_summary(&a.common.out, &summary);
        }
        Command::Eval(a) => {
            let dir = a
                .checkpoint
                .unwrap_or_else(|| checkpoint_dir(&a.out, a.seed));
            let trainer = Trainer::load(&dir)?;
            let r = trainer.evaluate_greedy(a.episodes)?;
            println!(
                "step {}  episodes {}  success {:.4}  mean return {:.4}",
                r.global_step, r.episodes, r.success_rate, r.mean_return
            );
        }
        Command::Params(a) => {
            let spec: dbgfqn::envs::EnvSpec = a.env.parse()?;
            let mut base = EncoderConfig::for_env(Variant::Dbgfqn, &spec)?;
            if let Some(d) = a.embed_dim {
                base = EncoderConfig::for_variant(
                    Variant::Dbgfqn,
                    d,
                    base.obs_width,
                    base.action_count,
                );
            }
            let table = report_parameters(&base, &ablation_models());
            println!("{:<10} {:>12} {:>12}", "model", "sublayers", "total");
            for (name, cfg, report) in &table.models {
                let sub: usize = (0..cfg.encoder_layers)
                    .map(|l| report.get(&format!("block{l}.sublayer")))
                    .sum();
                println!("{name:<10} {sub:>12} {:>12}", report.total());
            }
            if let Some(r) = table.reduction() {
                println!("dbgfqn vs dtqn_4x: {:.1}% fewer parameters", 100.0 * r);
            }
            if let Some(path) = a.out {
                table.write_csv(&path)?;
            }
        }
        Command::Sweep(a) => {
            let variants = if a.variants.is_empty() {
                Variant::ALL.to_vec()
            } else {
                a.variants
            };
            for v in variants {
                let mut cfg = build_config(&a.common, Some(v))?;
                if !a.seeds.is_empty() {
                    cfg.seeds = a.seeds.clone();
                }
                let out = a.common.out.join(v.name());
                let summary = run_experiment(&cfg, &out, &RunOptions::default())?;
                println!("== {v}");
                print_summary(&out, &summary);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
