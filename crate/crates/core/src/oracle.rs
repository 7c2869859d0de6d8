//! Exhaustive search over every (allocation, order) pair of a tiny instance.
//!
//! States are visited with `x1` in lexicographic order and, for each `x1`,
//! every permutation `x2` in lexicographic order. Only a strictly larger
//! reward replaces the incumbent, so ties resolve to the lexicographically
//! smallest state regardless of how the work is split across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::routing::Evaluator;
use crate::state::SearchState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLimit {
    pub max_states: u128,
}

impl Default for OracleLimit {
    fn default() -> Self {
        Self { max_states: 10_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub state: SearchState,
    pub reward: f64,
    pub enumerated: u128,
}

/// `lockers^tasks * tasks!`, saturating at `u128::MAX`.
pub fn state_count(tasks: usize, lockers: usize) -> u128 {
    let Ok(exp) = u32::try_from(tasks) else {
        return u128::MAX;
    };
    let alloc = (lockers as u128).checked_pow(exp).unwrap_or(u128::MAX);
    (1..=tasks as u128)
        .try_fold(alloc, |acc, k| acc.checked_mul(k))
        .unwrap_or(u128::MAX)
}

/// Every permutation of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("pivot has a successor");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

fn decode_allocation(mut index: usize, tasks: usize, lockers: usize) -> Vec<usize> {
    let mut x1 = vec![0; tasks];
    for slot in x1.iter_mut().rev() {
        *slot = index % lockers;
        index /= lockers;
    }
    x1
}

/// Finds the reward-maximising state, refusing when the state space is
/// larger than `limit`.
pub fn brute_force_best(eval: &Evaluator<'_>, limit: OracleLimit) -> Result<OracleResult> {
    if limit.max_states == 0 {
        return Err(Error::Parameter("oracle limit must be positive".into()));
    }
    let tasks = eval.task_count();
    if tasks == 0 {
        return Err(Error::NothingToSolve);
    }
    let lockers = eval.max_lockers();
    let cardinality = state_count(tasks, lockers);
    if cardinality > limit.max_states {
        return Err(Error::OracleRefused {
            cardinality,
            limit: limit.max_states,
        });
    }
    let orders = permutations(tasks);
    let allocations = (cardinality / orders.len() as u128) as usize;

    let per_allocation = par::map_range(allocations, |k| -> Result<(f64, usize)> {
        let x1 = decode_allocation(k, tasks, lockers);
        let mut best = (f64::NEG_INFINITY, 0);
        for (p, x2) in orders.iter().enumerate() {
            let r = eval.reward(&SearchState::new(x1.clone(), x2.clone()))?;
            if r > best.0 {
                best = (r, p);
            }
        }
        Ok(best)
    });

    let mut best: Option<(f64, usize, usize)> = None;
    for (k, res) in per_allocation.into_iter().enumerate() {
        let (r, p) = res?;
        if best.is_none_or(|(b, _, _)| r > b) {
            best = Some((r, k, p));
        }
    }
    let (reward, k, p) = best.expect("at least one allocation");
    let mut state = SearchState::new(decode_allocation(k, tasks, lockers), orders[p].clone());
    state.reward = reward;
    Ok(OracleResult {
        state,
        reward,
        enumerated: cardinality,
    })
}
