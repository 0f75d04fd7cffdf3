//! Experiment runner: tabular diverse policy iteration, the one-step
//! exploration example, maze exploration sweeps, learner training, and the
//! verification suites.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error.

mod records;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use dac::agent::{
    records_to_csv, run_training, AlphaMode, DacAgent, DacHyper, TrainRecord,
};
use dac::checkpoint::Container;
use dac::dpi::{run_dpi, toy_example, DpiConfig, ImprovementMode};
use dac::env::{
    ChainEnv, ContinuousEnv, DelayedRewardWrapper, MazeConfig, MazeEnv, OneStepEmbedEnv,
    SparseThresholdWrapper,
};
use dac::experiments::{
    alpha_label, maze_hyper_small, run_maze_agent, sign_test_p_value, MazeRunSummary,
};
use dac::finite_mdp::{read_mdp_file, FiniteMdp, TabularActionDistribution, TabularPolicy};
use dac::replay::ReplayBuffer;
use dac::sample_entropy::MixtureWeight;
use dac::verify;
use dac::DacError;

use records::{ExperimentRecord, RecordSet};

#[derive(Parser)]
#[command(name = "dac", about = "Diversity actor-critic experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact diverse policy iteration on a finite MDP; writes the J trace.
    TabularDpi(TabularDpiArgs),
    /// One-step exploration example: optimal policy and expected draws.
    Toy(ToyArgs),
    /// Per-seed maze exploration sweep across mixture weights.
    MazeExplore(MazeExploreArgs),
    /// Train the learner on a named environment.
    Train(TrainArgs),
    /// Run the verification suites.
    Verify(VerifyArgs),
}

/// `key=value` lines, `#` comments. Flags win over file entries.
struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| format!("malformed config line `{line}`"))?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(FileConfig(map))
    }

    fn resolve<T: FromStr + Clone>(
        &self,
        flag: &Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, String> {
        if let Some(v) = flag {
            return Ok(v.clone());
        }
        match self.0.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map_err(|_| format!("config key `{key}`: cannot parse `{raw}`")),
            None => Ok(default),
        }
    }
}

fn config_error(message: &str) -> ExitCode {
    eprintln!("configuration error: {message}");
    ExitCode::from(2)
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>, String> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| format!("cannot parse {what} entry `{s}`"))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::TabularDpi(args) => cmd_tabular_dpi(args),
        Command::Toy(args) => cmd_toy(args),
        Command::MazeExplore(args) => cmd_maze_explore(args),
        Command::Train(args) => cmd_train(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

// --- tabular-dpi ----------------------------------------------------------

#[derive(Args)]
struct TabularDpiArgs {
    /// Plain-text MDP table file; a random MDP is generated when absent.
    #[arg(long)]
    mdp_file: Option<PathBuf>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Discount factor for the generated MDP.
    #[arg(long)]
    gamma: Option<f64>,
    /// Buffer action distribution: `uniform` or `random`.
    #[arg(long)]
    q_dist: Option<String>,
    /// Improvement step: `exact-simplex` or `closed-form`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_tabular_dpi(args: TabularDpiArgs) -> ExitCode {
    let cfg = match FileConfig::load(args.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    macro_rules! resolve {
        ($flag:expr, $key:literal, $default:expr) => {
            match cfg.resolve(&$flag, $key, $default) {
                Ok(v) => v,
                Err(e) => return config_error(&e),
            }
        };
    }
    let seed = resolve!(args.seed, "seed", 0u64);
    let states = resolve!(args.states, "states", 6usize);
    let actions = resolve!(args.actions, "actions", 3usize);
    let alpha = resolve!(args.alpha, "alpha", 0.5f64);
    let beta = resolve!(args.beta, "beta", 1.0f64);
    let gamma = resolve!(args.gamma, "gamma", 0.9f64);
    let q_kind = resolve!(args.q_dist, "q_dist", "random".to_string());
    let mode_name = resolve!(args.mode, "mode", "exact-simplex".to_string());
    let tol = resolve!(args.tol, "tol", 1e-9f64);
    let max_iters = resolve!(args.max_iters, "max_iters", 500usize);
    let out = resolve!(args.out, "out", PathBuf::from("out"));

    let mode = match mode_name.as_str() {
        "exact-simplex" => ImprovementMode::ExactSimplex,
        "closed-form" => ImprovementMode::ClosedForm,
        other => return config_error(&format!("unknown improvement mode `{other}`")),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mdp = match &args.mdp_file {
        Some(path) => match read_mdp_file(path) {
            Ok(m) => m,
            Err(e) => return config_error(&format!("cannot load MDP: {e}")),
        },
        None => FiniteMdp::random(states, actions, gamma, &mut rng),
    };
    let q_dist = match q_kind.as_str() {
        "uniform" => TabularActionDistribution::uniform(mdp.n_states, mdp.n_actions),
        "random" => TabularActionDistribution {
            probs: TabularPolicy::random(mdp.n_states, mdp.n_actions, &mut rng).probs,
        },
        other => return config_error(&format!("unknown q distribution `{other}`")),
    };
    let alpha = match MixtureWeight::new(alpha) {
        Ok(a) => a,
        Err(e) => return config_error(&e.to_string()),
    };
    let dpi_cfg = match DpiConfig::new(alpha, beta, mode, tol, max_iters) {
        Ok(c) => c,
        Err(e) => return config_error(&e.to_string()),
    };
    let pi0 = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);

    match run_dpi(&mdp, &q_dist, &dpi_cfg, &pi0) {
        Ok(trace) => {
            if let Err(e) = std::fs::create_dir_all(&out) {
                return config_error(&format!("cannot create {}: {e}", out.display()));
            }
            let path = out.join("dpi_trace.csv");
            if let Err(e) = std::fs::write(&path, trace.to_csv()) {
                eprintln!("write failed: {e}");
                return ExitCode::from(1);
            }
            let last = trace.iterations.len() - 1;
            println!(
                "converged={} iterations={} final_policy_delta={:e}",
                trace.converged, trace.iterations.len(), trace.iterations[last].max_policy_delta
            );
            for (s, j) in trace.final_j().iter().enumerate() {
                println!("J({s}) = {j}");
            }
            println!("trace written to {}", path.display());
            ExitCode::SUCCESS
        }
        Err(DacError::Monotonicity(msg)) => {
            eprintln!("monotonicity violated: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(1)
        }
    }
}

// --- toy ------------------------------------------------------------------

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    n_actions: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_toy(args: ToyArgs) -> ExitCode {
    let cfg = match FileConfig::load(args.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    let n = match cfg.resolve(&args.n_actions, "n_actions", 10usize) {
        Ok(v) => v,
        Err(e) => return config_error(&e),
    };
    match toy_example(n) {
        Ok(result) => {
            println!("optimal policy row (unseen action last):");
            for (i, p) in result.optimal_row.iter().enumerate() {
                println!("  pi(A_{}) = {p:.6}", i + 1);
            }
            println!("mixture row deviation from uniform: {:.3e}", {
                let target = 1.0 / n as f64;
                result
                    .mixture_row
                    .iter()
                    .map(|m| (m - target).abs())
                    .fold(0.0, f64::max)
            });
            println!(
                "expected draws until the unseen action: {} (sample-aware) vs {} (uniform)",
                result.dac_expected_steps, result.uniform_expected_steps
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("toy example failed: {e}");
            ExitCode::from(1)
        }
    }
}

// --- maze-explore -----------------------------------------------------------

#[derive(Args)]
struct MazeExploreArgs {
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    /// Comma-separated mixture weights to sweep.
    #[arg(long)]
    alphas: Option<String>,
    /// Visitation histogram checkpoint steps.
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long)]
    series_interval: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Restrict buffer sampling to the newest N' transitions.
    #[arg(long)]
    q_window: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_maze_explore(args: MazeExploreArgs) -> ExitCode {
    let cfg = match FileConfig::load(args.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    macro_rules! resolve {
        ($flag:expr, $key:literal, $default:expr) => {
            match cfg.resolve(&$flag, $key, $default) {
                Ok(v) => v,
                Err(e) => return config_error(&e),
            }
        };
    }
    let seeds_raw = resolve!(args.seeds, "seeds", "0,1,2,3,4,5,6,7,8,9".to_string());
    let steps = resolve!(args.steps, "steps", 50_000u64);
    let alphas_raw = resolve!(args.alphas, "alphas", "0.5,1.0".to_string());
    let checkpoints_raw = resolve!(args.checkpoints, "checkpoints", "5000,50000,300000".to_string());
    let series_interval = resolve!(args.series_interval, "series_interval", 500u64);
    let threads = resolve!(args.threads, "threads", 2usize);
    let hidden = resolve!(args.hidden, "hidden", 32usize);
    let batch = resolve!(args.batch, "batch", 64usize);
    let lr = resolve!(args.lr, "lr", 1e-3f64);
    let gamma = resolve!(args.gamma, "gamma", maze_hyper_small().gamma);
    let out = resolve!(args.out, "out", PathBuf::from("out"));

    let seeds: Vec<u64> = match parse_list(&seeds_raw, "seed") {
        Ok(v) => v,
        Err(e) => return config_error(&e),
    };
    let alphas: Vec<f64> = match parse_list(&alphas_raw, "alpha") {
        Ok(v) => v,
        Err(e) => return config_error(&e),
    };
    let checkpoints: Vec<u64> = match parse_list::<u64>(&checkpoints_raw, "checkpoint") {
        Ok(v) => v.into_iter().filter(|&c| c <= steps).collect(),
        Err(e) => return config_error(&e),
    };
    if seeds.is_empty() || alphas.is_empty() || steps == 0 {
        return config_error("need at least one seed, one alpha, and steps > 0");
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return config_error("alphas must lie in [0,1]");
    }

    let mut hyper = maze_hyper_small();
    hyper.hidden_size = hidden;
    hyper.minibatch = batch;
    hyper.learning_rate = lr;
    hyper.gamma = gamma;
    hyper.q_window = match (&args.q_window, cfg.0.get("q_window")) {
        (Some(w), _) => Some(*w),
        (None, Some(raw)) => match raw.parse::<usize>() {
            Ok(w) => Some(w),
            Err(_) => return config_error(&format!("bad q_window `{raw}`")),
        },
        (None, None) => None,
    };

    let jobs: Vec<(u64, f64)> = seeds
        .iter()
        .flat_map(|&s| alphas.iter().map(move |&a| (s, a)))
        .collect();

    // Worker pool over the (seed, alpha) grid; each job is independently
    // seeded so scheduling cannot affect the artifacts.
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<dac::Result<MazeRunSummary>>>> =
        (0..jobs.len()).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let (seed, alpha) = jobs[i];
                let result =
                    run_maze_agent(seed, alpha, steps, &hyper, &checkpoints, series_interval);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    let mut summaries = Vec::with_capacity(jobs.len());
    for slot in slots {
        match slot.into_inner().unwrap().expect("worker finished") {
            Ok(s) => summaries.push(s),
            Err(e) => {
                eprintln!("maze run failed: {e}");
                return ExitCode::from(1);
            }
        }
    }

    if let Err(e) = write_maze_outputs(&out, &summaries, steps) {
        eprintln!("write failed: {e}");
        return ExitCode::from(1);
    }

    // Paired sign test between the sample-aware weight 0.5 and the plain
    // entropy agent when both were swept.
    if alphas.contains(&0.5) && alphas.contains(&1.0) {
        let cells = |seed: u64, alpha: f64| -> usize {
            summaries
                .iter()
                .find(|s| s.seed == seed && s.alpha_label == alpha_label(alpha))
                .map(|s| s.unique_cells)
                .unwrap_or(0)
        };
        let wins = seeds.iter().filter(|&&s| cells(s, 0.5) > cells(s, 1.0)).count();
        let p = sign_test_p_value(wins, seeds.len());
        let mean = |alpha: f64| -> f64 {
            seeds.iter().map(|&s| cells(s, alpha) as f64).sum::<f64>() / seeds.len() as f64
        };
        println!(
            "paired comparison: mean unique cells {:.1} (alpha 0.5) vs {:.1} (alpha 1.0), wins {}/{}, one-sided sign test p = {:.4}",
            mean(0.5),
            mean(1.0),
            wins,
            seeds.len(),
            p
        );
    }
    println!("artifacts written to {}", out.display());
    ExitCode::SUCCESS
}

fn window_mean(records: &[TrainRecord], upto_step: u64, field: impl Fn(&TrainRecord) -> f64) -> f64 {
    let window = 1000;
    let upto = upto_step.min(records.len() as u64) as usize;
    let from = upto.saturating_sub(window);
    if upto == from {
        return 0.0;
    }
    records[from..upto].iter().map(&field).sum::<f64>() / (upto - from) as f64
}

fn write_maze_outputs(
    out: &Path,
    summaries: &[MazeRunSummary],
    steps: u64,
) -> anyhow::Result<()> {
    let mut summary_csv = String::from("# schema dac.maze-summary v1\nseed,variant,unique_cells\n");
    for s in summaries {
        let dir = out.join(format!("seed_{}", s.seed));
        std::fs::create_dir_all(&dir)?;

        let mut set = RecordSet::new();
        let run_id = format!("maze-{}", s.alpha_label);
        for &(step, unique) in &s.unique_series {
            set.push(ExperimentRecord {
                run_id: run_id.clone(),
                seed: s.seed,
                step,
                metric: "unique_cells".to_string(),
                value: unique as f64,
            })?;
        }
        let mut checkpoint_steps: Vec<u64> =
            s.snapshots.iter().map(|(step, _)| *step).collect();
        if !checkpoint_steps.contains(&steps) {
            checkpoint_steps.push(steps);
        }
        for &step in &checkpoint_steps {
            set.push(ExperimentRecord {
                run_id: run_id.clone(),
                seed: s.seed,
                step,
                metric: "mean_js_div".to_string(),
                value: window_mean(&s.records, step, |r| r.mean_js_div),
            })?;
            set.push(ExperimentRecord {
                run_id: run_id.clone(),
                seed: s.seed,
                step,
                metric: "mean_entropy".to_string(),
                value: window_mean(&s.records, step, |r| r.mean_entropy),
            })?;
        }
        set.push(ExperimentRecord {
            run_id: run_id.clone(),
            seed: s.seed,
            step: steps,
            metric: "unique_cells_final".to_string(),
            value: s.unique_cells as f64,
        })?;
        let csv = set.to_csv();
        // Round-trip through the schema-checked parser before shipping.
        let parsed = records::parse_experiment_csv(&csv)?;
        anyhow::ensure!(parsed.len() == set.len(), "record count changed in round trip");
        std::fs::write(dir.join(format!("explore_{}.csv", s.alpha_label)), csv)?;

        for (step, grid) in &s.snapshots {
            let base = format!("hist_{}_{step}", s.alpha_label);
            std::fs::write(dir.join(format!("{base}.csv")), grid.to_csv())?;
            std::fs::write(dir.join(format!("{base}.pgm")), grid.to_pgm())?;
        }
        let base = format!("hist_{}_final", s.alpha_label);
        std::fs::write(dir.join(format!("{base}.csv")), s.final_grid.to_csv())?;
        std::fs::write(dir.join(format!("{base}.pgm")), s.final_grid.to_pgm())?;

        summary_csv.push_str(&format!("{},{},{}\n", s.seed, s.alpha_label, s.unique_cells));
    }
    std::fs::write(out.join("summary.csv"), summary_csv)?;
    Ok(())
}

// --- train ------------------------------------------------------------------

#[derive(Args)]
struct TrainArgs {
    /// Environment: `maze`, `chain-delayed`, or `toy-embed`.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    /// Comma-separated seed list; each seed runs in its own subdirectory.
    #[arg(long)]
    seeds: Option<String>,
    /// Mixture weight in [0,1], or `adaptive`.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Restrict buffer sampling to the newest N' transitions.
    #[arg(long)]
    q_window: Option<usize>,
    /// Reward delay for `chain-delayed`.
    #[arg(long)]
    delay: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_train(args: TrainArgs) -> ExitCode {
    let cfg = match FileConfig::load(args.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    macro_rules! resolve {
        ($flag:expr, $key:literal, $default:expr) => {
            match cfg.resolve(&$flag, $key, $default) {
                Ok(v) => v,
                Err(e) => return config_error(&e),
            }
        };
    }
    let env_name = resolve!(args.env, "env", "chain-delayed".to_string());
    let steps = resolve!(args.steps, "steps", 5000u64);
    let seeds_raw = resolve!(args.seeds, "seeds", "0".to_string());
    let alpha_raw = resolve!(args.alpha, "alpha", "0.5".to_string());
    let beta = resolve!(args.beta, "beta", 0.2f64);
    let default_gamma = if env_name == "maze" { 0.999 } else { 0.99 };
    let gamma = resolve!(args.gamma, "gamma", default_gamma);
    let hidden = resolve!(args.hidden, "hidden", 256usize);
    let batch = resolve!(args.batch, "batch", 256usize);
    let lr = resolve!(args.lr, "lr", 3e-4f64);
    let delay = resolve!(args.delay, "delay", 20usize);
    let horizon = resolve!(args.horizon, "horizon", 1000usize);
    let out = resolve!(args.out, "out", PathBuf::from("out"));
    let q_window = match (&args.q_window, cfg.0.get("q_window")) {
        (Some(w), _) => Some(*w),
        (None, Some(raw)) => match raw.parse::<usize>() {
            Ok(w) => Some(w),
            Err(_) => return config_error(&format!("bad q_window `{raw}`")),
        },
        (None, None) => None,
    };

    let seeds: Vec<u64> = match parse_list(&seeds_raw, "seed") {
        Ok(v) if !v.is_empty() => v,
        Ok(_) => return config_error("seed list is empty"),
        Err(e) => return config_error(&e),
    };
    if steps == 0 {
        return config_error("steps must be positive");
    }
    let alpha_mode = match alpha_raw.as_str() {
        "adaptive" => AlphaMode::Adaptive,
        raw => match raw.parse::<f64>() {
            Ok(a) if (0.0..=1.0).contains(&a) => AlphaMode::Fixed(a),
            _ => return config_error(&format!("bad alpha `{raw}`")),
        },
    };

    let mut hyper = DacHyper {
        alpha_mode,
        beta,
        gamma,
        learning_rate: lr,
        minibatch: batch,
        hidden_size: hidden,
        horizon,
        q_window,
        warmup: batch.max(256),
        ..DacHyper::default()
    };
    if let Err(e) = hyper.validate() {
        return config_error(&e.to_string());
    }

    for &seed in &seeds {
        let dir = out.join(format!("seed_{seed}"));
        if let Err(e) = std::fs::create_dir_all(&dir) {
            return config_error(&format!("cannot create {}: {e}", dir.display()));
        }
        let result = match env_name.as_str() {
            "maze" => {
                hyper.beta = 1.0;
                let env = match MazeEnv::new(MazeConfig {
                    horizon,
                    ..MazeConfig::default()
                }) {
                    Ok(e) => e,
                    Err(e) => return config_error(&e.to_string()),
                };
                train_one(env, seed, steps, &hyper, &dir)
            }
            "chain-delayed" => {
                let chain = ChainEnv::new(20.0, horizon.min(200));
                let sparse = SparseThresholdWrapper::new(chain, |_s: &[f64], _a: &[f64], n: &[f64]| {
                    n[0] >= 0.5
                });
                let env = DelayedRewardWrapper::new(sparse, delay);
                train_one(env, seed, steps, &hyper, &dir)
            }
            "toy-embed" => match OneStepEmbedEnv::new(10) {
                Ok(env) => {
                    let preload = env.clone();
                    train_one_with(env, seed, steps, &hyper, &dir, move |buffer| {
                        preload.preload_buffer(buffer)
                    })
                }
                Err(e) => return config_error(&e.to_string()),
            },
            other => return config_error(&format!("unknown environment `{other}`")),
        };
        match result {
            Ok(last) => {
                println!(
                    "seed {seed}: {steps} steps, final eval return {}, metrics in {}",
                    last,
                    dir.display()
                );
            }
            Err(e) => {
                eprintln!("seed {seed}: training failed: {e}");
                return ExitCode::from(1);
            }
        }
    }
    ExitCode::SUCCESS
}

fn train_one<E: ContinuousEnv + Clone>(
    env: E,
    seed: u64,
    steps: u64,
    hyper: &DacHyper,
    dir: &Path,
) -> anyhow::Result<f64> {
    train_one_with(env, seed, steps, hyper, dir, |_| Ok(()))
}

fn train_one_with<E: ContinuousEnv + Clone>(
    mut env: E,
    seed: u64,
    steps: u64,
    hyper: &DacHyper,
    dir: &Path,
    preload: impl FnOnce(&mut ReplayBuffer) -> dac::Result<()>,
) -> anyhow::Result<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut agent = DacAgent::new(env.state_dim(), env.action_dim(), hyper.clone(), &mut rng)?;
    let mut buffer = ReplayBuffer::new(hyper.buffer_capacity)?;
    preload(&mut buffer)?;
    let records = run_training(&mut env, &mut agent, &mut buffer, steps, &mut rng)?;
    std::fs::write(dir.join("metrics.csv"), records_to_csv(&records))?;

    let mut container = Container::new();
    agent.nets.save_into(&mut container)?;
    buffer.dump("buffer", &mut container)?;
    container.save(&dir.join("checkpoint.bin"))?;
    Ok(records.last().map(|r| r.episode_return).unwrap_or(0.0))
}

// --- verify -----------------------------------------------------------------

#[derive(Args)]
struct VerifyArgs {
    /// Also run the long maze comparison.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    maze_seeds: Option<usize>,
    #[arg(long)]
    maze_steps: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Only run suites whose name contains this substring.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_verify(args: VerifyArgs) -> ExitCode {
    let cfg = match FileConfig::load(args.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    let maze_seeds = match cfg.resolve(&args.maze_seeds, "maze_seeds", 10usize) {
        Ok(v) => v,
        Err(e) => return config_error(&e),
    };
    let maze_steps = match cfg.resolve(&args.maze_steps, "maze_steps", 50_000u64) {
        Ok(v) => v,
        Err(e) => return config_error(&e),
    };
    let threads = match cfg.resolve(&args.threads, "threads", 2usize) {
        Ok(v) => v,
        Err(e) => return config_error(&e),
    };

    let mut results = verify::quick_suites();
    if args.full {
        results.push(verify::suite_maze_directional(maze_seeds, maze_steps, threads));
    }
    if let Some(filter) = &args.filter {
        results.retain(|r| r.name.contains(filter.as_str()));
        if results.is_empty() {
            return config_error(&format!("no suite matches `{filter}`"));
        }
    }
    for r in &results {
        println!("{r}");
    }
    if verify::all_passed(&results) {
        println!("all {} suites passed", results.len());
        ExitCode::SUCCESS
    } else {
        let failed: Vec<&str> = results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.name.as_str())
            .collect();
        eprintln!("failed suites: {}", failed.join(", "));
        ExitCode::from(1)
    }
}
