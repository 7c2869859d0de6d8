//! Search states and solver run records shared by every solver.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::routing::{CostBreakdown, RoutePlan};

/// One candidate solution: `x1[t]` is the locker serving task `t`, `x2` is the
/// global task execution order (a permutation of task ids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub x1: Vec<usize>,
    pub x2: Vec<usize>,
    /// Cached reward from the last evaluation; 0 when unevaluated.
    #[serde(default)]
    pub reward: f64,
}

impl SearchState {
    pub fn new(x1: Vec<usize>, x2: Vec<usize>) -> Self {
        Self { x1, x2, reward: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.x1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.is_empty()
    }

    /// Checks lengths, locker range and that `x2` is a bijection.
    pub fn check_shape(&self, tasks: usize, max_lockers: usize) -> Result<()> {
        if self.x1.len() != tasks || self.x2.len() != tasks {
            return Err(Error::Shape(format!(
                "state has x1 len {} and x2 len {}, task pool has {}",
                self.x1.len(),
                self.x2.len(),
                tasks
            )));
        }
        if let Some((t, &m)) = self.x1.iter().enumerate().find(|(_, &m)| m >= max_lockers) {
            return Err(Error::Shape(format!(
                "task {t} allocated to locker {m}, only {max_lockers} lockers exist"
            )));
        }
        if !is_permutation(&self.x2) {
            return Err(Error::Shape("x2 is not a permutation of the task ids".into()));
        }
        Ok(())
    }

    /// Same allocation and order, ignoring the cached reward.
    pub fn same_solution(&self, other: &SearchState) -> bool {
        self.x1 == other.x1 && self.x2 == other.x2
    }
}

pub fn is_permutation(seq: &[usize]) -> bool {
    let mut seen = vec![false; seq.len()];
    seq.iter().all(|&v| v < seen.len() && !std::mem::replace(&mut seen[v], true))
}

/// Best reward per iteration of a solver run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunHistory {
    /// `best[t]` is the best reward known after iteration `t`.
    pub best: Vec<f64>,
    pub initial_best: f64,
    pub final_best: f64,
    /// Iteration at which the convergence test fired, if it did.
    pub converged_at: Option<usize>,
}

impl RunHistory {
    pub fn new(initial_best: f64) -> Self {
        Self {
            best: Vec::new(),
            initial_best,
            final_best: initial_best,
            converged_at: None,
        }
    }

    pub fn record(&mut self, best: f64) {
        self.best.push(best);
        self.final_best = best;
    }

    pub fn is_monotone(&self) -> bool {
        self.initial_best <= self.best.first().copied().unwrap_or(self.final_best)
            && self.best.windows(2).all(|w| w[0] <= w[1])
    }

    /// Writes `timestep,best_reward`, with the initial population best at
    /// timestep 0 and iteration `t` at `t + 1`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestep", "best_reward"])?;
        w.write_record(["0".to_string(), self.initial_best.to_string()])?;
        for (t, r) in self.best.iter().enumerate() {
            w.write_record([(t + 1).to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads back the series written by [`RunHistory::write_csv`]. Lines
    /// starting with `#` are skipped; the convergence step is not stored.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<(usize, f64)>() {
            rows.push(rec?.1);
        }
        let Some((&initial, rest)) = rows.split_first() else {
            return Err(Error::Shape("history csv has no rows".into()));
        };
        let mut h = RunHistory::new(initial);
        rest.iter().for_each(|&r| h.record(r));
        Ok(h)
    }
}

/// Best state found by a solver, with its schedule, cost and history.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub state: SearchState,
    pub plan: RoutePlan,
    pub cost: CostBreakdown,
    pub history: RunHistory,
}
