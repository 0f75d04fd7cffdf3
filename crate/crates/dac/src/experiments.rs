//! Maze exploration experiment machinery: seeded agent runs on the 4-room
//! maze with visitation recording, and the paired comparison between the
//! sample-aware learner and its plain-entropy special case.

use std::cell::RefCell;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::agent::{run_training, AlphaMode, DacAgent, DacHyper, TrainRecord};
use crate::env::{ContinuousEnv, MazeConfig, MazeEnv, StepOutcome, VisitationGrid};
use crate::error::Result;
use crate::replay::ReplayBuffer;

/// Visitation bookkeeping attached to a maze environment during training.
#[derive(Debug)]
pub struct MazeRecorder {
    pub grid: VisitationGrid,
    pub unique_series: Vec<(u64, usize)>,
    pub snapshots: Vec<(u64, VisitationGrid)>,
    steps: u64,
    series_interval: u64,
    checkpoints: Vec<u64>,
}

impl MazeRecorder {
    fn new(side: usize, series_interval: u64, checkpoints: &[u64]) -> Self {
        MazeRecorder {
            grid: VisitationGrid::new(side),
            unique_series: Vec::new(),
            snapshots: Vec::new(),
            steps: 0,
            series_interval: series_interval.max(1),
            checkpoints: checkpoints.to_vec(),
        }
    }

    fn record(&mut self, x: f64, y: f64) {
        self.steps += 1;
        self.grid.record(x, y).expect("maze states stay inside the maze");
        if self.steps % self.series_interval == 0 {
            self.unique_series.push((self.steps, self.grid.unique_count()));
        }
        if self.checkpoints.contains(&self.steps) {
            self.snapshots.push((self.steps, self.grid.clone()));
        }
    }
}

/// Maze environment that records every training-time position. Clones made
/// for deterministic evaluation episodes detach from the recorder so
/// evaluation never pollutes the visitation counts.
pub struct RecordingMazeEnv {
    inner: MazeEnv,
    recorder: Option<Rc<RefCell<MazeRecorder>>>,
}

impl Clone for RecordingMazeEnv {
    fn clone(&self) -> Self {
        RecordingMazeEnv {
            inner: self.inner.clone(),
            recorder: None,
        }
    }
}

impl ContinuousEnv for RecordingMazeEnv {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.inner.reset()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let out = self.inner.step(action);
        if let Some(rec) = &self.recorder {
            let p = self.inner.position();
            rec.borrow_mut().record(p.x, p.y);
        }
        out
    }
}

/// Desk-scale maze configuration: pure exploration (γ = 0.999, reward-free)
/// with networks and batches shrunk so a 50k-step run stays in the
/// minutes range on a laptop core.
pub fn maze_hyper_small() -> DacHyper {
    DacHyper {
        hidden_size: 32,
        minibatch: 64,
        warmup: 256,
        learning_rate: 1e-3,
        eval_interval: usize::MAX,
        ..DacHyper::pure_exploration_maze()
    }
}

#[derive(Debug)]
pub struct MazeRunSummary {
    pub seed: u64,
    pub alpha_label: String,
    pub unique_cells: usize,
    pub unique_series: Vec<(u64, usize)>,
    pub snapshots: Vec<(u64, VisitationGrid)>,
    pub final_grid: VisitationGrid,
    pub records: Vec<TrainRecord>,
}

/// Short label for an agent variant: the mixture weight with the two
/// degenerate endpoints spelled out.
pub fn alpha_label(alpha: f64) -> String {
    if alpha == 1.0 {
        "alpha1.0-sac".to_string()
    } else if alpha == 0.0 {
        "alpha0.0-greedy".to_string()
    } else {
        format!("alpha{alpha}")
    }
}

/// One seeded maze run of the agent at a fixed mixture weight. The α = 1
/// and α = 0 endpoints pin the ratio to its closed form, which makes the
/// α = 1 variant exactly the plain-entropy (SAC) learner.
pub fn run_maze_agent(
    seed: u64,
    alpha: f64,
    steps: u64,
    base_hyper: &DacHyper,
    checkpoints: &[u64],
    series_interval: u64,
) -> Result<MazeRunSummary> {
    let mut hyper = base_hyper.clone();
    hyper.alpha_mode = AlphaMode::Fixed(alpha);
    hyper.pin_ratio_unit = alpha == 1.0 || alpha == 0.0;

    let recorder = Rc::new(RefCell::new(MazeRecorder::new(
        MazeConfig::default().side as usize,
        series_interval,
        checkpoints,
    )));
    let mut env = RecordingMazeEnv {
        inner: MazeEnv::new(MazeConfig::default())?,
        recorder: Some(recorder.clone()),
    };

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut agent = DacAgent::new(2, 2, hyper.clone(), &mut rng)?;
    let mut buffer = ReplayBuffer::new(hyper.buffer_capacity)?;
    let records = run_training(&mut env, &mut agent, &mut buffer, steps, &mut rng)?;

    drop(env);
    let recorder = Rc::try_unwrap(recorder)
        .expect("recorder has a single owner after the run")
        .into_inner();
    Ok(MazeRunSummary {
        seed,
        alpha_label: alpha_label(alpha),
        unique_cells: recorder.grid.unique_count(),
        unique_series: recorder.unique_series,
        snapshots: recorder.snapshots,
        final_grid: recorder.grid,
        records,
    })
}

#[derive(Debug, Clone)]
pub struct MazeComparison {
    /// Per seed: (seed, unique cells with α = 0.5, unique cells with α = 1).
    pub per_seed: Vec<(u64, usize, usize)>,
    pub mean_diverse: f64,
    pub mean_plain: f64,
    pub wins: usize,
    pub p_value: f64,
}

impl MazeComparison {
    /// Directional pass: the sample-aware mean strictly exceeds the plain
    /// mean and a one-sided paired sign test rejects at the given level.
    pub fn passes(&self, significance: f64) -> bool {
        self.mean_diverse > self.mean_plain && self.p_value <= significance
    }
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `n` fair coin flips.
pub fn sign_test_p_value(wins: usize, n: usize) -> f64 {
    let mut total = 0.0;
    for k in wins..=n {
        total += binomial(n, k);
    }
    total / 2f64.powi(n as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Paired maze comparison over `n_seeds` seeds: each seed runs the
/// sample-aware agent (α = 0.5) and the plain-entropy agent (α = 1) from
/// identical network initializations, in parallel across `threads` workers.
pub fn maze_directional_comparison(
    n_seeds: usize,
    steps: u64,
    threads: usize,
    base_hyper: &DacHyper,
) -> Result<MazeComparison> {
    let mut jobs: Vec<(u64, f64)> = Vec::new();
    for i in 0..n_seeds {
        let seed = 1000 + i as u64;
        jobs.push((seed, 0.5));
        jobs.push((seed, 1.0));
    }

    let results = run_jobs_parallel(&jobs, steps, threads, base_hyper)?;

    let mut per_seed = Vec::with_capacity(n_seeds);
    for i in 0..n_seeds {
        let seed = 1000 + i as u64;
        let diverse = results[2 * i].unique_cells;
        let plain = results[2 * i + 1].unique_cells;
        per_seed.push((seed, diverse, plain));
    }
    let mean_diverse =
        per_seed.iter().map(|&(_, d, _)| d as f64).sum::<f64>() / n_seeds as f64;
    let mean_plain = per_seed.iter().map(|&(_, _, p)| p as f64).sum::<f64>() / n_seeds as f64;
    let wins = per_seed.iter().filter(|&&(_, d, p)| d > p).count();
    Ok(MazeComparison {
        per_seed,
        mean_diverse,
        mean_plain,
        wins,
        p_value: sign_test_p_value(wins, n_seeds),
    })
}

fn run_jobs_parallel(
    jobs: &[(u64, f64)],
    steps: u64,
    threads: usize,
    base_hyper: &DacHyper,
) -> Result<Vec<MazeRunSummary>> {
    let threads = threads.max(1);
    let mut results: Vec<Option<MazeRunSummary>> = Vec::new();
    results.resize_with(jobs.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<MazeRunSummary>>> =
        (0..jobs.len()).map(|_| std::sync::Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let (seed, alpha) = jobs[i];
                let summary = run_maze_agent(seed, alpha, steps, base_hyper, &[], steps.max(1));
                *slots[i].lock().unwrap() = Some(summary.expect("maze run failed"));
            });
        }
    });

    for (i, slot) in slots.into_iter().enumerate() {
        results[i] = slot.into_inner().unwrap();
    }
    Ok(results.into_iter().map(|r| r.unwrap()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_reference_values() {
        // 9 of 10: (10 + 1)/1024; 8 of 10: (45 + 10 + 1)/1024.
        assert!((sign_test_p_value(9, 10) - 11.0 / 1024.0).abs() < 1e-12);
        assert!((sign_test_p_value(8, 10) - 56.0 / 1024.0).abs() < 1e-12);
        assert!((sign_test_p_value(10, 10) - 1.0 / 1024.0).abs() < 1e-12);
        assert_eq!(sign_test_p_value(0, 10), 1.0);
    }

    #[test]
    fn short_maze_run_records_visits() {
        let mut hyper = maze_hyper_small();
        hyper.hidden_size = 8;
        hyper.minibatch = 16;
        hyper.warmup = 32;
        let summary = run_maze_agent(7, 0.5, 300, &hyper, &[100], 50).unwrap();
        assert_eq!(summary.final_grid.total(), 300);
        assert!(summary.unique_cells >= 1);
        assert_eq!(summary.snapshots.len(), 1);
        assert_eq!(summary.snapshots[0].1.total(), 100);
        assert_eq!(summary.unique_series.len(), 6);
        assert_eq!(summary.records.len(), 300);
    }

    #[test]
    fn maze_runs_are_reproducible() {
        let mut hyper = maze_hyper_small();
        hyper.hidden_size = 8;
        hyper.minibatch = 8;
        hyper.warmup = 16;
        let a = run_maze_agent(3, 0.5, 120, &hyper, &[], 40).unwrap();
        let b = run_maze_agent(3, 0.5, 120, &hyper, &[], 40).unwrap();
        assert_eq!(a.unique_cells, b.unique_cells);
        assert_eq!(a.unique_series, b.unique_series);
    }
}
