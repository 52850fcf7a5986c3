//! Planner timing over whole episodes.

use serde::{Deserialize, Serialize};

use crate::scenario::{ParseError, Scenario};
use crate::sim::{run_episode, Outcome};

/// Median timings of one receding-horizon step, over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// 1-based.
    pub jump: usize,
    pub setup_time: f64,
    pub solve_time: f64,
    pub loop_time: f64,
    /// Horizon the planner settled on.
    pub n: usize,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Scenario(#[from] ParseError),
    #[error("repetition {repetition} ended with {outcome:?}")]
    Episode { repetition: usize, outcome: Option<Outcome> },
    #[error("repetition {repetition} took {got} jumps, the first took {expected}")]
    Unstable { repetition: usize, expected: usize, got: usize },
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

impl BenchReport {
    pub fn median_loop_time(&self) -> Option<f64> {
        median(&mut self.rows.iter().map(|r| r.loop_time).collect::<Vec<_>>())
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>4} {:>3} {:>7} {:>12} {:>12} {:>12}\n",
            "jump", "N", "nodes", "setup [ms]", "solve [ms]", "loop [ms]"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:>4} {:>3} {:>7} {:>12.3} {:>12.3} {:>12.3}\n",
                r.jump,
                r.n,
                r.nodes,
                r.setup_time * 1e3,
                r.solve_time * 1e3,
                r.loop_time * 1e3
            ));
        }
        out
    }
}

/// Run `scenario` `repetitions` times and report per-jump median planner
/// timings. Every repetition must reach the goal with the same number of
/// jumps.
pub fn bench(scenario: &Scenario, repetitions: usize) -> Result<BenchReport, BenchError> {
    let mut runs = Vec::with_capacity(repetitions);
    for repetition in 0..repetitions {
        let log = run_episode(scenario)?;
        if !log.succeeded() {
            return Err(BenchError::Episode {
                repetition,
                outcome: log.outcome,
            });
        }
        if let Some(first) = runs.first().map(|r: &Vec<_>| r.len()) {
            if log.jumps.len() != first {
                return Err(BenchError::Unstable {
                    repetition,
                    expected: first,
                    got: log.jumps.len(),
                });
            }
        }
        runs.push(log.jumps);
    }
    let Some(first) = runs.first() else {
        return Ok(BenchReport::default());
    };
    let rows = (0..first.len())
        .map(|i| {
            let col = |f: &dyn Fn(&crate::sim::JumpRecord) -> f64| {
                median(&mut runs.iter().map(|r| f(&r[i])).collect::<Vec<_>>()).unwrap_or(0.0)
            };
            BenchRow {
                jump: first[i].number,
                setup_time: col(&|j| j.plan.setup_time),
                solve_time: col(&|j| j.plan.solve_time),
                loop_time: col(&|j| j.plan.loop_time),
                n: first[i].plan.horizon,
                nodes: first[i].plan.nodes,
            }
        })
        .collect();
    Ok(BenchReport { repetitions, rows })
}
