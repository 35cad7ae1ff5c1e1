use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{csv_err, format_err, io_err, Error, Result};
use crate::harness::metrics::{read_metrics, MetricsRecord, MetricsWriter};
use crate::rl::{EvalRecord, Trainer};

pub const THREADS_VAR: &str = "DBGFQN_THREADS";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue from `checkpoint_seed{seed}` when one exists.
    pub resume: bool,
    /// Stop early at this global step, saving a checkpoint there.
    pub stop_at: Option<u64>,
    /// Seeds trained at once; `None` reads the thread cap.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub steps: u64,
    pub episodes: u64,
    /// Running success rate after the last episode.
    pub final_rate: f64,
    /// Highest running success rate once the window was full, or over all
    /// episodes if it never filled.
    pub best_rate: f64,
    pub final_eval: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub env: String,
    pub sublayer: String,
    pub seeds: Vec<SeedSummary>,
    pub mean_final: f64,
    pub mean_best: f64,
}

pub fn metrics_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("metrics_seed{seed}.csv"))
}

pub fn eval_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("eval_seed{seed}.csv"))
}

pub fn checkpoint_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("checkpoint_seed{seed}"))
}

/// Parallelism cap from `DBGFQN_THREADS`, defaulting to the available cores.
pub fn thread_cap() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!(
                "{THREADS_VAR} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn summarize(
    seed: u64,
    steps: u64,
    records: &[MetricsRecord],
    window: usize,
    final_eval: Option<f64>,
) -> SeedSummary {
    let full: Vec<f64> = records
        .iter()
        .filter(|r| r.episode_index + 1 >= window as u64)
        .map(|r| r.running_success_rate)
        .collect();
    let pool: Vec<f64> = if full.is_empty() {
        records.iter().map(|r| r.running_success_rate).collect()
    } else {
        full
    };
    SeedSummary {
        seed,
        steps,
        episodes: records.len() as u64,
        final_rate: records.last().map_or(0.0, |r| r.running_success_rate),
        best_rate: pool.into_iter().fold(0.0, f64::max),
        final_eval,
    }
}

fn truncate_csv<R: Serialize + for<'de> Deserialize<'de>>(
    path: &Path,
    keep: impl Fn(&R) -> bool,
    header: &[&str],
) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let rows: Vec<R> = {
        let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
        r.deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err(path))?
    };
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows.iter().filter(|r| keep(r)) {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

const EVAL_HEADER: [&str; 4] = ["global_step", "episodes", "success_rate", "mean_return"];

/// Trains one seed, streaming metrics to `out`. Returns the summary of
/// everything in the metrics file, including rows from before a resume.
pub fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Path,
    opts: &RunOptions,
) -> Result<SeedSummary> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let ckpt = checkpoint_dir(out, seed);
    let (mp, ep) = (metrics_path(out, seed), eval_path(out, seed));
    let resumed = opts.resume && ckpt.join("state.json").exists();
    let mut trainer = if resumed {
        let t = Trainer::load(&ckpt)?;
        let expected = crate::config::TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        if t.encoder_config() != &cfg.encoder || t.train_config() != &expected {
            return Err(format_err(
                &ckpt,
                "checkpoint was written with a different configuration",
            ));
        }
        let step = t.global_step();
        truncate_csv::<MetricsRecord>(&mp, |r| r.global_step <= step, &MetricsRecord::HEADER)?;
        truncate_csv::<EvalRecord>(&ep, |r| r.global_step <= step, &EVAL_HEADER)?;
        t
    } else {
        Trainer::for_seed(cfg, seed)?
    };
    let mut metrics = if resumed {
        MetricsWriter::append(&mp)?
    } else {
        MetricsWriter::create(&mp)?
    };
    let mut evals = if cfg.train.eval_every.is_some() {
        let fresh = !resumed || !ep.exists();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .truncate(false)
            .open(&ep)
            .map_err(io_err(&ep))?;
        if fresh {
            file.set_len(0).map_err(io_err(&ep))?;
        }
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        if fresh {
            w.write_record(EVAL_HEADER).map_err(csv_err(&ep))?;
        }
        Some(w)
    } else {
        None
    };

    let stop = opts
        .stop_at
        .map_or(cfg.train.total_steps, |s| s.min(cfg.train.total_steps));
    while trainer.global_step() < stop {
        let outcome = trainer.step()?;
        if let Some(r) = &outcome.episode {
            metrics.write(r)?;
        }
        if let (Some(e), Some(w)) = (&outcome.eval, evals.as_mut()) {
            w.serialize(e).map_err(csv_err(&ep))?;
            w.flush().map_err(io_err(&ep))?;
        }
        if cfg
            .train
            .checkpoint_every
            .is_some_and(|n| trainer.global_step() % n == 0)
        {
            trainer.save(&ckpt)?;
        }
    }
    if opts.stop_at.is_some_and(|s| s < cfg.train.total_steps) {
        trainer.save(&ckpt)?;
    }

    let records = read_metrics(&mp)?;
    let final_eval = if ep.exists() {
        let mut r = csv::Reader::from_path(&ep).map_err(csv_err(&ep))?;
        let all: Vec<EvalRecord> = r
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err(&ep))?;
        all.last().map(|e| e.success_rate)
    } else {
        None
    };
    Ok(summarize(
        seed,
        trainer.global_step(),
        &records,
        cfg.train.success_window,
        final_eval,
    ))
}

fn sublayer_name(cfg: &ExperimentConfig) -> String {
    serde_json::to_string(&cfg.encoder.sublayer_variant)
        .unwrap_or_default()
        .trim_matches('"')
        .to_string()
}

/// Runs every seed of `cfg` (up to the thread cap at once), then writes
/// `config.toml` and `summary.json` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<Summary> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(io_err(&cfg_path))?;
    let threads = match opts.threads {
        Some(n) => n.max(1),
        None => thread_cap()?,
    }
    .min(cfg.seeds.len());
    let queue = Mutex::new(cfg.seeds.iter().copied().enumerate());
    let results: Mutex<Vec<(usize, Result<SeedSummary>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let next = queue.lock().expect("queue lock").next();
                let Some((i, seed)) = next else { break };
                let r = run_seed(cfg, seed, out, opts);
                results.lock().expect("results lock").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(i, _)| *i);
    let seeds = results
        .into_iter()
        .map(|(_, r)| r)
        .collect::<Result<Vec<_>>>()?;
    let n = seeds.len().max(1) as f64;
    let summary = Summary {
        env: cfg.env.clone(),
        sublayer: sublayer_name(cfg),
        mean_final: seeds.iter().map(|s| s.final_rate).sum::<f64>() / n,
        mean_best: seeds.iter().map(|s| s.best_rate).sum::<f64>() / n,
        seeds,
    };
    let path = out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| format_err(&path, e))?;
    std::fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(summary)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Summary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}
