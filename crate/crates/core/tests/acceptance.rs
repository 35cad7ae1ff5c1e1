//! Acceptance checks, one PASS/FAIL line each. Run with
//! `cargo test -p dbgfqn --test acceptance`.
//!
//! The learning checks read the runs committed under `results/`. Set
//! `DBGFQN_ACCEPTANCE_TRAIN=1` to retrain them from `configs/` first.

mod common;

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use dbgfqn::config::{EncoderConfig, ExperimentConfig, SublayerVariant, TrainConfig, Variant};
use dbgfqn::envs::{
    hallucinate_rooms, Cell, GridConfig, GridWorld, Heading, Layout, MemoryCards,
    MemoryCardsConfig, PomdpEnv, Pose,
};
use dbgfqn::envs::{CarFlag, ScriptedCarFlag};
use dbgfqn::harness::experiment::{
    eval_path, metrics_path, read_summary, run_experiment, run_seed, summarize, RunOptions, Summary,
};
use dbgfqn::harness::metrics::read_metrics;
use dbgfqn::harness::params::{ablation_models, align, constant_residual, report_parameters};
use dbgfqn::tensor::gradcheck::{grad_check_params, FD_STEP};
use dbgfqn::tensor::{Tape, Tensor, TensorError};
use dbgfqn::QNetwork;
use rand::Rng;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> std::result::Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))
}

trait Str<T> {
    fn s(self) -> std::result::Result<T, String>;
}

impl<T, E: std::fmt::Display> Str<T> for std::result::Result<T, E> {
    fn s(self) -> std::result::Result<T, String> {
        self.map_err(|e| e.to_string())
    }
}

fn contract(e: dbgfqn::Error) -> TensorError {
    TensorError::Contract {
        op: "network",
        detail: e.to_string(),
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// ---------------------------------------------------------------- gradients

fn gradient_fidelity() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, sub) in ALL_SUBLAYERS.iter().enumerate() {
        let cfg = tiny(*sub);
        let net = network(cfg, i as u64);
        let mut r = rng(i as u64);
        let valid = [4, 3];
        let obs: Vec<f64> = (0..8 * cfg.obs_width)
            .map(|_| r.gen_range(-1.0..1.0))
            .collect();
        let weights: Vec<f64> = (0..8 * cfg.action_count)
            .map(|k| {
                if k / cfg.action_count == 7 {
                    0.0
                } else {
                    r.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let report = grad_check_params(
            net.params(),
            |tape: &Tape<f64>, params| {
                let net = QNetwork::from_params(cfg, params.clone()).map_err(contract)?;
                let x = tape.constant(Tensor::new([8, cfg.obs_width], obs.clone())?);
                let q = net.forward(tape, x, &valid, true).map_err(contract)?;
                q.weighted_sum(weights.clone())
            },
            FD_STEP,
        )
        .map_err(|e| format!("{sub:?}: {e}"))?;
        ensure(report.max_rel_error < 1e-4, || {
            format!(
                "{sub:?}: max relative error {:.3e} at {:?}",
                report.max_rel_error, report.worst
            )
        })?;
        worst = worst.max(report.max_rel_error);
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "8 sublayers, worst relative error {worst:.2e}, {:.1?}",
        start.elapsed()
    ))
}

// ---------------------------------------------------------------- parameter counts

/// Totals as printed in the published ablation table, columns in
/// `ablation_models` order without the 4× baseline.
const COLUMNS: [&str; 8] = [
    "dtqn1", "dtqn2", "dtqn3", "drfqn", "dlfqn", "dgfqn", "dbrfqn", "dblfqn",
];
const PUBLISHED: [(&str, Option<(usize, usize, usize)>, [usize; 8]); 5] = [
    (
        "hallway",
        None,
        [64005, 80517, 97029, 64005, 113925, 97285, 59909, 97541],
    ),
    (
        "heaven hell",
        None,
        [63892, 80404, 96916, 63892, 113812, 97172, 59796, 97428],
    ),
    (
        "gridverse",
        Some((128, 66, 3)),
        [
            234566, 300358, 366150, 234566, 432710, 366662, 218182, 367174,
        ],
    ),
    (
        "car flag",
        Some((64, 3, 3)),
        [63371, 79883, 96395, 63371, 113291, 96651, 59275, 96907],
    ),
    (
        "memory cards",
        Some((128, 15, 10)),
        [
            239066, 304858, 370650, 239066, 437210, 371162, 222682, 371674,
        ],
    ),
];

fn parameter_counts() -> Check {
    let table_for = |d: usize, obs: usize, actions: usize| {
        report_parameters(
            &EncoderConfig::for_variant(Variant::Dbgfqn, d, obs, actions),
            &ablation_models(),
        )
    };

    let car = table_for(64, 3, 3);
    let order = [
        "dbrfqn", "dtqn1", "dtqn2", "dtqn3", "dgfqn", "dblfqn", "dlfqn",
    ];
    let totals: Vec<usize> = order.iter().map(|m| car.total(m).unwrap()).collect();
    ensure(totals.windows(2).all(|w| w[0] < w[1]), || {
        format!("ordering {order:?} violated by {totals:?}")
    })?;

    let mut residuals = Vec::new();
    for (row, dims, published) in PUBLISHED {
        // Hallway and Heaven Hell sit at D=64; their input widths only move
        // the shared part, so sublayer differences are still comparable.
        let (d, obs, actions) = dims.unwrap_or((64, 3, 3));
        let table = table_for(d, obs, actions);
        for (m, p) in COLUMNS.iter().zip(published) {
            let ours = table.total(m).unwrap() as i64 - table.total("dtqn1").unwrap() as i64;
            let theirs = p as i64 - published[0] as i64;
            ensure(ours == theirs, || {
                format!("{row}: {m} - dtqn1 is {ours}, published {theirs}")
            })?;
        }
        if dims.is_some() {
            let pairs: Vec<(&str, usize)> = COLUMNS.iter().copied().zip(published).collect();
            let aligned = align(&table, &pairs);
            let r = constant_residual(&aligned)
                .ok_or_else(|| format!("{row}: residual differs between models: {aligned:?}"))?;
            let (_, _, report) = &table.models[0];
            let shared: Vec<String> = report
                .by_kind()
                .into_iter()
                .filter(|(k, _)| k != "sublayer")
                .map(|(k, c)| format!("{k} {c}"))
                .collect();
            println!(
                "       {row}: published - ours = {r} for every model; our shared part: {}",
                shared.join(", ")
            );
            residuals.push((row, r));
        }
    }

    let gv = table_for(128, 66, 3);
    let (bigru, wide) = (gv.total("dbgfqn").unwrap(), gv.total("dtqn_4x").unwrap());
    ensure(bigru as f64 <= 0.80 * wide as f64, || {
        format!("dbgfqn {bigru} > 0.80 x {wide}")
    })?;

    println!("       exact published totals not reproduced; constant residuals {residuals:?}");
    Ok(format!(
        "ordering holds, all sublayer differences match, dbgfqn/dtqn_4x = {bigru}/{wide} = {:.3}",
        bigru as f64 / wide as f64
    ))
}

// ---------------------------------------------------------------- causality

fn random_rows(r: &mut rand_chacha::ChaCha8Rng, rows: usize, width: usize) -> Vec<f64> {
    (0..rows * width).map(|_| r.gen_range(-2.0..2.0)).collect()
}

fn causality() -> Check {
    let start = Instant::now();
    let (k, w) = (4, 3);
    let mut trials = 0;
    for (v, sub) in ALL_SUBLAYERS.iter().enumerate() {
        let mut r = rng(300 + v as u64);
        for trial in 0..1000u64 {
            let net = network(tiny(*sub), 1000 * v as u64 + trial);
            let obs = random_rows(&mut r, k, w);
            if sub.bidirectional() {
                let valid = r.gen_range(1..k);
                let mut padded = obs.clone();
                padded[valid * w..].copy_from_slice(&random_rows(&mut r, k - valid, w));
                let a = net.q_values(Tensor::new([k, w], obs).s()?, &[valid]).s()?;
                let b = net
                    .q_values(Tensor::new([k, w], padded).s()?, &[valid])
                    .s()?;
                ensure(a.row(valid - 1) == b.row(valid - 1), || {
                    format!(
                        "{sub:?} trial {trial}: pad rows leaked into position {}",
                        valid - 1
                    )
                })?;
            } else {
                let t = r.gen_range(0..k - 1);
                let mut later = obs.clone();
                later[(t + 1) * w..].copy_from_slice(&random_rows(&mut r, k - t - 1, w));
                let a = net.q_values(Tensor::new([k, w], obs).s()?, &[k]).s()?;
                let b = net.q_values(Tensor::new([k, w], later).s()?, &[k]).s()?;
                for s in 0..=t {
                    ensure(a.row(s) == b.row(s), || {
                        format!("{sub:?} trial {trial}: position {s} saw position > {t}")
                    })?;
                }
                ensure(a.row(k - 1) != b.row(k - 1), || {
                    format!("{sub:?} trial {trial}: last position ignored its inputs")
                })?;
            }
            trials += 1;
        }
    }
    within(Duration::from_secs(120), start)?;
    Ok(format!("{trials} trials, {:.1?}", start.elapsed()))
}

// ---------------------------------------------------------------- environments

fn grid_variants() -> Vec<GridConfig> {
    let mut out = Vec::new();
    for n in [5, 7, 9, 11, 13] {
        for b in 1..=3 {
            out.push(GridConfig::memory(n).with_beacons(b));
        }
        out.push(GridConfig::keydoor(n));
    }
    for (n, r) in [(7, 2), (9, 2), (9, 3), (11, 3), (11, 4), (13, 5)] {
        for b in 1..=3 {
            out.push(GridConfig::rooms(n, r).with_beacons(b));
        }
    }
    out.push(hallucinate_rooms(&GridConfig::memory(13), 5).unwrap());
    out
}

/// Cells reachable from `from`; terminal cells are entered but not left.
fn flood(env: &GridWorld, from: (usize, usize), key: bool) -> Vec<bool> {
    let n = env.size();
    let open = |r: usize, c: usize| match env.cell(r, c) {
        Cell::Wall => false,
        Cell::Door => key,
        _ => true,
    };
    let mut seen = vec![false; n * n];
    seen[from.0 * n + from.1] = true;
    let mut queue = VecDeque::from([from]);
    while let Some((r, c)) = queue.pop_front() {
        if (r, c) != from && matches!(env.cell(r, c), Cell::Flag(_) | Cell::Goal) {
            continue;
        }
        let next = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (nr, nc) in next {
            if nr < n && nc < n && !seen[nr * n + nc] && open(nr, nc) {
                seen[nr * n + nc] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    seen
}

fn cells_where(env: &GridWorld, f: impl Fn(Cell) -> bool) -> Vec<usize> {
    env.cells()
        .iter()
        .enumerate()
        .filter(|(_, c)| f(**c))
        .map(|(i, _)| i)
        .collect()
}

fn reachability() -> Check {
    let variants = grid_variants();
    for i in 0..1000u64 {
        let cfg = variants[i as usize % variants.len()];
        let mut env = GridWorld::new(cfg).s()?;
        env.reset(i);
        let p = env.pose();
        let start = (p.row, p.col);
        let from_start = flood(&env, start, false);
        ensure(from_start == env.reachable(start, false), || {
            format!("{cfg:?} seed {i}: library reachability disagrees")
        })?;
        let at = |set: &[bool], cells: &[usize]| cells.iter().all(|&c| set[c]);
        if cfg.layout == Layout::Keydoor {
            let keys = cells_where(&env, |c| c == Cell::Key);
            let goals = cells_where(&env, |c| c == Cell::Goal);
            ensure(keys.len() == 1 && goals.len() == 1, || {
                format!("{cfg:?} seed {i}: expected one key and one goal")
            })?;
            ensure(at(&from_start, &keys), || {
                format!("{cfg:?} seed {i}: key unreachable")
            })?;
            let n = env.size();
            let with_key = flood(&env, (keys[0] / n, keys[0] % n), true);
            ensure(at(&with_key, &goals), || {
                format!("{cfg:?} seed {i}: goal unreachable with the key")
            })?;
        } else {
            let flags = cells_where(&env, |c| matches!(c, Cell::Flag(_)));
            let beacons = cells_where(&env, |c| matches!(c, Cell::Beacon(_)));
            ensure(flags.len() == 2 && beacons.len() == cfg.beacons, || {
                format!(
                    "{cfg:?} seed {i}: {} flags, {} beacons",
                    flags.len(),
                    beacons.len()
                )
            })?;
            ensure(at(&from_start, &flags) && at(&from_start, &beacons), || {
                format!("{cfg:?} seed {i}: flag or beacon unreachable")
            })?;
        }
    }
    Ok(format!("1000 layouts over {} variants", variants.len()))
}

fn hallucinated_kernel() -> Check {
    let open_cfg = GridConfig::memory(13);
    let hall_cfg = hallucinate_rooms(&open_cfg, 5).s()?;
    let (mut compared, mut obs_differ) = (0, 0);
    for seed in 0..4 {
        let mut open = GridWorld::new(open_cfg).s()?;
        let mut hall = GridWorld::new(hall_cfg).s()?;
        open.reset(seed);
        hall.reset(seed);
        ensure(open.cells() == hall.cells(), || {
            format!("seed {seed}: layouts differ")
        })?;
        for row in 0..13 {
            for col in 0..13 {
                if open.cell(row, col) == Cell::Wall {
                    continue;
                }
                for heading in Heading::ALL {
                    let pose = Pose { row, col, heading };
                    let (mut a, mut b) = (open.clone(), hall.clone());
                    a.set_pose(pose);
                    b.set_pose(pose);
                    if a.observe() != b.observe() {
                        obs_differ += 1;
                    }
                    for action in 0..3 {
                        let (mut a, mut b) = (a.clone(), b.clone());
                        let (sa, sb) = (a.step(action).s()?, b.step(action).s()?);
                        let same = a.pose() == b.pose()
                            && (sa.reward, sa.done, sa.success) == (sb.reward, sb.done, sb.success);
                        ensure(same, || {
                            format!("seed {seed}: {pose:?} action {action} diverges")
                        })?;
                        compared += 1;
                    }
                }
            }
        }
    }
    ensure(obs_differ > 0, || {
        "overlay never changed an observation".into()
    })?;
    Ok(format!(
        "{compared} (pose, action) pairs identical, observations differ at {obs_differ} poses"
    ))
}

fn scripted_car_flag() -> Check {
    let mut env = CarFlag::new();
    let mut wins = 0;
    for seed in 0..100 {
        let mut obs = env.reset(seed);
        let mut policy = ScriptedCarFlag::new();
        loop {
            let s = env.step(policy.act(&obs)).s()?;
            if s.done {
                wins += usize::from(s.success);
                break;
            }
            obs = s.obs;
        }
    }
    ensure(wins == 100, || format!("{wins}/100 successes"))?;
    Ok("100/100 successes".into())
}

/// Exact success probability of uniform guessing: the next revealed card is
/// uniform over unsolved positions, pairs are (0,1), (2,3), ...
fn exact_random_success(pairs: usize, steps_left: usize, solved: &mut Vec<bool>) -> f64 {
    if solved.iter().all(|s| *s) {
        return 1.0;
    }
    if steps_left == 0 {
        return 0.0;
    }
    let open: Vec<usize> = (0..2 * pairs).filter(|p| !solved[p / 2]).collect();
    let mut total = 0.0;
    for &shown in &open {
        for guess in 0..2 * pairs {
            let p = if guess == shown ^ 1 {
                solved[shown / 2] = true;
                let v = exact_random_success(pairs, steps_left - 1, solved);
                solved[shown / 2] = false;
                v
            } else {
                exact_random_success(pairs, steps_left - 1, solved)
            };
            total += p / (open.len() * 2 * pairs) as f64;
        }
    }
    total
}

fn memory_cards_baseline() -> Check {
    let (pairs, max_steps) = (2, 4);
    let exact = exact_random_success(pairs, max_steps, &mut vec![false; pairs]);
    let mut env = MemoryCards::new(MemoryCardsConfig { pairs, max_steps }).s()?;
    let mut r = rng(404);
    let n = 10_000;
    let mut wins = 0;
    for seed in 0..n {
        env.reset(seed);
        loop {
            let s = env.step(r.gen_range(0..2 * pairs)).s()?;
            if s.done {
                wins += usize::from(s.success);
                break;
            }
        }
    }
    let rate = wins as f64 / n as f64;
    let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
    ensure((rate - exact).abs() <= 3.0 * sigma, || {
        format!("Monte Carlo {rate:.4} vs exact {exact:.4}, sigma {sigma:.4}")
    })?;
    Ok(format!(
        "Monte Carlo {rate:.4} vs exact {exact:.4} (3 sigma = {:.4})",
        3.0 * sigma
    ))
}

// ---------------------------------------------------------------- learning

const REPLAY_STEPS: u64 = 2000;

fn retrain() -> bool {
    std::env::var("DBGFQN_ACCEPTANCE_TRAIN").is_ok_and(|v| v == "1")
}

/// Loads a committed run, checking it against its own metrics and against a
/// fresh replay of the first steps of its first seed.
fn load_run(dir: &Path) -> std::result::Result<Summary, String> {
    let cfg = ExperimentConfig::load(dir.join("config.toml"))
        .map_err(|e| format!("{}: {e}", dir.display()))?;
    let summary = read_summary(dir.join("summary.json")).s()?;
    ensure(summary.seeds.len() == cfg.seeds.len(), || {
        format!("{}: incomplete seed list", dir.display())
    })?;
    for s in &summary.seeds {
        let rows = read_metrics(metrics_path(dir, s.seed)).s()?;
        let again = summarize(
            s.seed,
            s.steps,
            &rows,
            cfg.train.success_window,
            s.final_eval,
        );
        ensure(&again == s, || {
            format!(
                "{}: seed {} summary does not match its metrics",
                dir.display(),
                s.seed
            )
        })?;
        ensure(s.steps == cfg.train.total_steps, || {
            format!("{}: seed {} stopped at {}", dir.display(), s.seed, s.steps)
        })?;
    }

    let seed = cfg.seeds[0];
    let tmp = tempfile::tempdir().s()?;
    let stop = RunOptions {
        stop_at: Some(REPLAY_STEPS),
        threads: Some(1),
        ..RunOptions::default()
    };
    run_seed(&cfg, seed, tmp.path(), &stop).s()?;
    let fresh = std::fs::read_to_string(metrics_path(tmp.path(), seed)).s()?;
    let stored = std::fs::read_to_string(metrics_path(dir, seed)).s()?;
    ensure(stored.starts_with(&fresh), || {
        format!(
            "{}: replaying seed {seed} does not reproduce the stored metrics",
            dir.display()
        )
    })?;
    Ok(summary)
}

fn learning_run(
    name: &str,
    sweep_variant: Option<Variant>,
) -> std::result::Result<Summary, String> {
    let root = workspace();
    let out = match sweep_variant {
        Some(v) => root.join("results").join(name).join(v.name()),
        None => root.join("results").join(name),
    };
    if retrain() {
        let mut cfg =
            ExperimentConfig::load(root.join("configs").join(format!("{name}.toml"))).s()?;
        if let Some(v) = sweep_variant {
            let e = cfg.encoder;
            cfg.encoder = EncoderConfig {
                heads: e.heads,
                encoder_layers: e.encoder_layers,
                context_length: e.context_length,
                ..EncoderConfig::with_sublayer(
                    v.sublayer(1),
                    e.embed_dim,
                    e.obs_width,
                    e.action_count,
                )
            };
        }
        run_experiment(&cfg, &out, &RunOptions::default()).s()?;
    }
    if !out.join("summary.json").exists() {
        return Err(format!(
            "no run under {}; train it or set DBGFQN_ACCEPTANCE_TRAIN=1",
            out.display()
        ));
    }
    load_run(&out)
}

fn rates(s: &Summary, f: impl Fn(&dbgfqn::harness::experiment::SeedSummary) -> f64) -> String {
    s.seeds
        .iter()
        .map(|x| format!("{:.3}", f(x)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn learn_gv_memory() -> Check {
    let s = learning_run("gv-memory-5x5", None)?;
    ensure(
        s.sublayer.contains("bi_gru")
            || s.sublayer.contains("BiGru")
            || s.sublayer.contains("bigru"),
        || format!("run used {}", s.sublayer),
    )?;
    let hits = s.seeds.iter().filter(|x| x.best_rate >= 0.80).count();
    ensure(s.seeds.len() == 3 && hits >= 2, || {
        format!(
            "best running rates {}; {hits} of {} reach 0.80",
            rates(&s, |x| x.best_rate),
            s.seeds.len()
        )
    })?;
    Ok(format!(
        "best running rates {} ({hits}/3 at or above 0.80)",
        rates(&s, |x| x.best_rate)
    ))
}

fn learn_memory_cards() -> Check {
    let s = learning_run("memorycards-p3-t6", None)?;
    let baseline = MemoryCardsConfig {
        pairs: 3,
        max_steps: 6,
    }
    .random_policy_success();
    let bar = 5.0 * baseline;
    let hits = s.seeds.iter().filter(|x| x.best_rate > bar).count();
    ensure(hits * 2 > s.seeds.len(), || {
        format!(
            "best running rates {} vs 5 x {baseline:.4} = {bar:.4}",
            rates(&s, |x| x.best_rate)
        )
    })?;
    Ok(format!(
        "best running rates {} vs 5 x random {baseline:.4} = {bar:.4}",
        rates(&s, |x| x.best_rate)
    ))
}

fn learn_four_rooms() -> Check {
    let bi = learning_run("gv-memory-4rooms-7x7", Some(Variant::Dbgfqn))?;
    let uni = learning_run("gv-memory-4rooms-7x7", Some(Variant::Dgfqn))?;
    ensure(bi.seeds.len() == 3 && uni.seeds.len() == 3, || {
        "expected 3 seeds per variant".into()
    })?;
    let detail = format!(
        "mean final running rate dbgfqn {:.3} ({}) vs dgfqn {:.3} ({})",
        bi.mean_final,
        rates(&bi, |x| x.final_rate),
        uni.mean_final,
        rates(&uni, |x| x.final_rate)
    );
    ensure(bi.mean_final > uni.mean_final, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- determinism

fn small_experiment(env: &str, obs: usize, actions: usize, steps: u64) -> ExperimentConfig {
    ExperimentConfig {
        env: env.into(),
        seeds: vec![0],
        deterministic: true,
        encoder: EncoderConfig {
            heads: 2,
            encoder_layers: 1,
            context_length: 4,
            ..EncoderConfig::with_sublayer(SublayerVariant::BiGru, 8, obs, actions)
        },
        train: TrainConfig {
            total_steps: steps,
            warmup_steps: 200,
            batch_size: 8,
            train_every: 4,
            target_sync_period: 500,
            buffer_capacity: 20_000,
            eval_every: Some(steps / 4),
            eval_episodes: 5,
            ..TrainConfig::default()
        },
    }
}

fn bytes(path: &Path) -> std::result::Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn same_outputs(a: &Path, b: &Path, seed: u64) -> std::result::Result<usize, String> {
    let m = bytes(&metrics_path(a, seed))?;
    ensure(m == bytes(&metrics_path(b, seed))?, || {
        "metrics CSVs differ".into()
    })?;
    ensure(
        bytes(&eval_path(a, seed))? == bytes(&eval_path(b, seed))?,
        || "evaluation CSVs differ".into(),
    )?;
    Ok(m.len())
}

fn determinism() -> Check {
    let mut sizes = Vec::new();
    for cfg in [
        small_experiment("memorycards-p2-t4", 6, 4, 4000),
        small_experiment("gv-memory-5x5", 66, 3, 3000),
    ] {
        let (a, b) = (tempfile::tempdir().s()?, tempfile::tempdir().s()?);
        for dir in [a.path(), b.path()] {
            run_seed(&cfg, 7, dir, &RunOptions::default()).s()?;
        }
        sizes.push(same_outputs(a.path(), b.path(), 7).map_err(|e| format!("{}: {e}", cfg.env))?);
    }
    Ok(format!(
        "two environments, identical metrics ({sizes:?} bytes)"
    ))
}

fn checkpoint_round_trip() -> Check {
    let cfg = small_experiment("memorycards-p2-t4", 6, 4, 52_000);
    let (a, b) = (tempfile::tempdir().s()?, tempfile::tempdir().s()?);
    let straight = run_seed(&cfg, 11, a.path(), &RunOptions::default()).s()?;
    let stop = RunOptions {
        stop_at: Some(50_000),
        ..RunOptions::default()
    };
    run_seed(&cfg, 11, b.path(), &stop).s()?;
    let resume = RunOptions {
        resume: true,
        ..RunOptions::default()
    };
    let resumed = run_seed(&cfg, 11, b.path(), &resume).s()?;
    ensure(straight == resumed, || {
        format!("summaries differ: {straight:?} vs {resumed:?}")
    })?;
    let n = same_outputs(a.path(), b.path(), 11)?;
    Ok(format!(
        "resumed at step 50000, {} episodes, {n} identical bytes",
        straight.episodes
    ))
}

// ---------------------------------------------------------------- driver

fn main() {
    let checks: [(&str, &str, fn() -> Check); 12] = [
        ("1", "gradient fidelity", gradient_fidelity),
        ("2", "parameter counts", parameter_counts),
        ("3", "causality", causality),
        ("4a", "grid reachability", reachability),
        ("4b", "hallucinated transition kernel", hallucinated_kernel),
        ("4c", "scripted car flag", scripted_car_flag),
        ("4d", "memory cards random baseline", memory_cards_baseline),
        ("5a", "gv memory 5x5 learning", learn_gv_memory),
        ("5b", "memory cards learning", learn_memory_cards),
        ("5c", "four rooms bi vs uni", learn_four_rooms),
        ("6", "determinism", determinism),
        ("7", "checkpoint round trip", checkpoint_round_trip),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (id, name, check) in checks {
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| id.starts_with(f.as_str()) || name.contains(f.as_str()))
        {
            continue;
        }
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let t = started.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {id:<3} {name}: {detail} [{t:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:<3} {name}: {detail} [{t:.1?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
