//! Multi-seed trials and their aggregates.
//!
//! Seeds fan out over worker threads with nothing shared but the job
//! counter; results come back in seed order, so aggregates do not depend on
//! scheduling.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::env::Nmrdp;
use crate::rl::{armdpq_learning, RunConfig, RunResult, RunStatus};

/// Runs one trial per seed on up to `threads` workers.
pub fn run_trials(env: &Nmrdp, config: &RunConfig, seeds: &[u64], threads: usize) -> Vec<RunResult> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunResult>>> = Mutex::new(vec![None; seeds.len()]);
    let workers = threads.clamp(1, seeds.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let n = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(n) else { break };
                let mut trial = config.clone();
                trial.seed = seed;
                let result = armdpq_learning(env, &trial);
                slots.lock().expect("no worker panics while holding the lock")[n] = Some(result);
            });
        }
    });
    slots.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every seed ran")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub seed: u64,
    pub status: String,
    pub final_k: u32,
    pub num_states: usize,
    pub size_t_o: usize,
    pub solve_seconds: f64,
    pub solve_nodes: u64,
    pub post_exploit_reward: Option<f64>,
    pub first_conflict: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub trials: Vec<Trial>,
    pub completed: usize,
    pub num_states: Option<MeanStd>,
    pub size_t_o: Option<MeanStd>,
    pub median_size_t_o: Option<f64>,
    pub solve_seconds: Option<MeanStd>,
    pub median_solve_seconds: Option<f64>,
    pub post_exploit_reward: Option<MeanStd>,
}

impl Summary {
    pub fn new(results: &[RunResult], seeds: &[u64], exploit_after: u64) -> Summary {
        let trials: Vec<Trial> = results
            .iter()
            .zip(seeds)
            .map(|(r, &seed)| Trial {
                seed,
                status: r.status.to_string(),
                final_k: r.final_k,
                num_states: r.final_rm.num_states(),
                size_t_o: r.traces.len(),
                solve_seconds: r.solve_seconds(),
                solve_nodes: r.solve_nodes(),
                post_exploit_reward: if r.status == RunStatus::Completed {
                    r.mean_reward_from(exploit_after + 1)
                } else {
                    None
                },
                first_conflict: r.first_conflict(),
            })
            .collect();
        let column = |f: fn(&Trial) -> f64| trials.iter().map(f).collect::<Vec<_>>();
        let states = column(|t| t.num_states as f64);
        let sizes = column(|t| t.size_t_o as f64);
        let seconds = column(|t| t.solve_seconds);
        let rewards: Vec<f64> = trials.iter().filter_map(|t| t.post_exploit_reward).collect();
        Summary {
            completed: results.iter().filter(|r| r.status == RunStatus::Completed).count(),
            num_states: MeanStd::of(&states),
            size_t_o: MeanStd::of(&sizes),
            median_size_t_o: median(&sizes),
            solve_seconds: MeanStd::of(&seconds),
            median_solve_seconds: median(&seconds),
            post_exploit_reward: MeanStd::of(&rewards),
            trials,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// One row per seed, then a mean ± std row.
    pub fn table(&self) -> String {
        let mut out = String::from("seed\tstatus\t|U|\t|T_o|\tsolve_s\treward\n");
        for t in &self.trials {
            let reward = t.post_exploit_reward.map_or("-".to_string(), |r| format!("{r:.3}"));
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.2}\t{}",
                t.seed, t.status, t.num_states, t.size_t_o, t.solve_seconds, reward
            );
        }
        let cell = |m: Option<MeanStd>| m.map_or("-".to_string(), |m| m.to_string());
        let _ = writeln!(
            out,
            "all\t{}/{}\t{}\t{}\t{}\t{}",
            self.completed,
            self.trials.len(),
            cell(self.num_states),
            cell(self.size_t_o),
            cell(self.solve_seconds),
            cell(self.post_exploit_reward)
        );
        out
    }
}

/// How per-seed curves line up before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alignment {
    /// Episode numbers as recorded.
    #[default]
    Raw,
    /// Episode 0 is each run's first conflict; runs without one are left
    /// out.
    FirstConflict,
}

/// Mean and spread of the windowed reward per (aligned) episode, over the
/// episodes every included run covers.
pub fn reward_curve(results: &[RunResult], alignment: Alignment) -> String {
    let offsets: Vec<(usize, i64)> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.metrics.is_empty())
        .filter_map(|(n, r)| match alignment {
            Alignment::Raw => Some((n, 0)),
            Alignment::FirstConflict => r.first_conflict().map(|e| (n, e as i64)),
        })
        .collect();
    let mut out = String::from("episode,mean_window_reward,std_window_reward,runs\n");
    let span = |n: usize| {
        let metrics = &results[n].metrics;
        (metrics[0].episode as i64, metrics[metrics.len() - 1].episode as i64)
    };
    let lo = offsets.iter().map(|&(n, off)| span(n).0 - off).max().unwrap_or(0);
    let hi = offsets.iter().map(|&(n, off)| span(n).1 - off).min().unwrap_or(-1);
    for x in lo..=hi {
        let values: Vec<f64> = offsets
            .iter()
            .map(|&(n, off)| results[n].metrics[(x + off - span(n).0) as usize].window_avg_reward)
            .collect();
        let stats = MeanStd::of(&values).expect("at least one run");
        let _ = writeln!(out, "{x},{:.6},{:.6},{}", stats.mean, stats.std, values.len());
    }
    out
}
