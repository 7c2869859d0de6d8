//! Hybrid Q-learning search over (allocation, execution order) states.
//!
//! Two decomposed Q-matrices score adjacent decisions: `q1[a][b]` values
//! locker `b` following locker `a` along the task-indexed allocation vector,
//! `q2[i][j]` values task `j` executing right after task `i`. Each matrix
//! carries one extra row used as the predecessor of the first element.
//!
//! Every timestep each agent
//! 1. builds a fresh state by walking both chains with epsilon-greedy choices
//!    over the row-normalised matrices (global search),
//! 2. perturbs its best state relative to a random peer (local search),
//! 3. keeps whichever candidate improves its reward.
//!
//! The matrices are then updated from every agent's accepted state. The run
//! ends after `timesteps` iterations or once consecutive matrices differ by
//! less than `tol` in every entry.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::routing::{AdjustmentPolicy, Evaluator};
use crate::state::{RunHistory, SearchState, SolveOutcome};

/// How the greedy factor epsilon is chosen for each selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Greedy {
    /// Drawn afresh from U(0, 1) for every element.
    Uniform,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HqmParams {
    pub agents: usize,
    pub timesteps: usize,
    /// Initial learning rate; decays as `alpha0 * exp(-t / timesteps)`.
    pub alpha0: f64,
    pub gamma: f64,
    pub greedy: Greedy,
    pub tol: f64,
    pub seed: u64,
}

impl Default for HqmParams {
    fn default() -> Self {
        Self {
            agents: 100,
            timesteps: 1000,
            alpha0: 0.9,
            gamma: 0.9,
            greedy: Greedy::Uniform,
            tol: 1e-8,
            seed: 0,
        }
    }
}

impl HqmParams {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.timesteps == 0 {
            return Err(Error::Parameter("agents and timesteps must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter("convergence tolerance must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha0) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Parameter("alpha0 and gamma must lie in [0, 1]".into()));
        }
        if let Greedy::Fixed(e) = self.greedy {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Parameter("fixed epsilon must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Learning rate at timestep `t`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha0 * (-(t as f64) / self.timesteps as f64).exp()
    }
}

/// Solver settings as read from a TOML config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub agents: usize,
    pub timesteps: usize,
    pub gamma: f64,
    pub tol: f64,
    pub seed: u64,
    pub policy: AdjustmentPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = HqmParams::default();
        Self {
            agents: p.agents,
            timesteps: p.timesteps,
            gamma: p.gamma,
            tol: p.tol,
            seed: p.seed,
            policy: AdjustmentPolicy::Hcps,
        }
    }
}

impl SolverConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn hqm_params(&self) -> HqmParams {
        HqmParams {
            agents: self.agents,
            timesteps: self.timesteps,
            gamma: self.gamma,
            tol: self.tol,
            seed: self.seed,
            ..HqmParams::default()
        }
    }
}

/// A dense row-major matrix stored as rows.
pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct QMatrices {
    /// `(lockers + 1) x lockers`; the last row is the chain start.
    pub q1: Matrix,
    /// `(tasks + 1) x tasks`; the last row is the chain start.
    pub q2: Matrix,
}

impl QMatrices {
    pub fn zeros(lockers: usize, tasks: usize) -> Self {
        Self {
            q1: vec![vec![0.0; lockers]; lockers + 1],
            q2: vec![vec![0.0; tasks]; tasks + 1],
        }
    }

    pub fn lockers(&self) -> usize {
        self.q1.len() - 1
    }

    pub fn tasks(&self) -> usize {
        self.q2.len() - 1
    }

    pub fn normalized(&self) -> Self {
        Self {
            q1: normalize_q(&self.q1),
            q2: normalize_q(&self.q2),
        }
    }

    /// Largest absolute entrywise difference over both matrices.
    pub fn max_abs_diff(&self, other: &QMatrices) -> Result<f64> {
        let dims = |q: &QMatrices| {
            (
                q.q1.len(),
                q.q1.first().map_or(0, Vec::len),
                q.q2.len(),
                q.q2.first().map_or(0, Vec::len),
            )
        };
        if dims(self) != dims(other) {
            return Err(Error::Shape(format!(
                "q-matrix dimensions differ: {:?} vs {:?}",
                dims(self),
                dims(other)
            )));
        }
        let diff = |a: &Matrix, b: &Matrix| {
            a.iter()
                .zip(b)
                .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max)
        };
        Ok(diff(&self.q1, &other.q1).max(diff(&self.q2, &other.q2)))
    }
}

/// Row-wise min-max scaling to `[0, 1]`. A row whose entries are all equal
/// becomes uniform (`1 / ncols` each).
pub fn normalize_q(q: &Matrix) -> Matrix {
    q.iter()
        .map(|row| {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            if span > 0.0 {
                row.iter().map(|v| (v - lo) / span).collect()
            } else {
                vec![1.0 / row.len() as f64; row.len()]
            }
        })
        .collect()
}

/// True iff every entry of both matrices moved by strictly less than `tol`.
pub fn has_converged(prev: &QMatrices, cur: &QMatrices, tol: f64) -> Result<bool> {
    Ok(prev.max_abs_diff(cur)? < tol)
}

/// One temporal-difference step: `q + alpha * (reward + gamma * max_next - q)`.
pub fn q_update(q: f64, reward: f64, max_next: f64, alpha: f64, gamma: f64) -> f64 {
    q + alpha * (reward + gamma * max_next - q)
}

fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(f64::MIN).min(f64::MAX)
}

/// Applies [`q_update`] to every adjacent pair of both chains of `state`,
/// crediting each transition with the state's whole reward.
pub fn update_q(q: &mut QMatrices, state: &SearchState, reward: f64, alpha: f64, gamma: f64) {
    let walk = |m: &mut Matrix, chain: &[usize]| {
        let mut prev = m.len() - 1;
        for &next in chain {
            let max_next = if m[next].is_empty() { 0.0 } else { row_max(&m[next]) };
            m[prev][next] = q_update(m[prev][next], reward, max_next, alpha, gamma);
            prev = next;
        }
    };
    walk(&mut q.q1, &state.x1);
    walk(&mut q.q2, &state.x2);
}

/// Probability of picking each column of `row` by proportional sampling over
/// the columns allowed by `allowed`; uniform over allowed columns when their
/// weights sum to zero.
pub fn selection_probabilities(row: &[f64], allowed: &[bool]) -> Vec<f64> {
    let total: f64 = row.iter().zip(allowed).filter(|(_, &ok)| ok).map(|(v, _)| v.max(0.0)).sum();
    let count = allowed.iter().filter(|&&ok| ok).count();
    row.iter()
        .zip(allowed)
        .map(|(v, &ok)| match (ok, total > 0.0) {
            (false, _) => 0.0,
            (true, true) => v.max(0.0) / total,
            (true, false) => 1.0 / count as f64,
        })
        .collect()
}

fn choose<R: Rng>(row: &[f64], allowed: &[bool], greedy: Greedy, rng: &mut R) -> usize {
    let epsilon = match greedy {
        Greedy::Uniform => rng.random::<f64>(),
        Greedy::Fixed(e) => e,
    };
    let sigma = rng.random::<f64>();
    if sigma < epsilon {
        let mut best: Option<usize> = None;
        for (j, &ok) in allowed.iter().enumerate() {
            if ok && best.is_none_or(|b| row[j] > row[b]) {
                best = Some(j);
            }
        }
        return best.expect("at least one column allowed");
    }
    let probs = selection_probabilities(row, allowed);
    let mut u = rng.random::<f64>();
    let mut last = 0;
    for (j, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last = j;
            if u < *p {
                return j;
            }
            u -= p;
        }
    }
    last
}

/// Builds a new state by walking both chains over normalised matrices.
pub fn global_construct<R: Rng>(qn: &QMatrices, greedy: Greedy, rng: &mut R) -> SearchState {
    let lockers = qn.lockers();
    let tasks = qn.tasks();
    let all = vec![true; lockers];
    let mut x1 = Vec::with_capacity(tasks);
    let mut prev = lockers;
    for _ in 0..tasks {
        let a = choose(&qn.q1[prev], &all, greedy, rng);
        x1.push(a);
        prev = a;
    }
    let mut free = vec![true; tasks];
    let mut x2 = Vec::with_capacity(tasks);
    let mut prev = tasks;
    for _ in 0..tasks {
        let j = choose(&qn.q2[prev], &free, greedy, rng);
        free[j] = false;
        x2.push(j);
        prev = j;
    }
    SearchState::new(x1, x2)
}

/// Moves `state` away from (or toward, for negative `omega`) `neighbor`:
/// `state + omega * (state - neighbor)`, then repairs `x1` by rounding and
/// wrapping into `[0, lockers)` and `x2` by ranking the raw values (ties keep
/// position order).
pub fn local_move(state: &SearchState, neighbor: &SearchState, omega: f64, lockers: usize) -> SearchState {
    if omega == 0.0 {
        return state.clone();
    }
    let x1 = state
        .x1
        .iter()
        .zip(&neighbor.x1)
        .map(|(&a, &b)| {
            let raw = a as f64 + omega * (a as f64 - b as f64);
            (raw.round() as i64).rem_euclid(lockers as i64) as usize
        })
        .collect();
    let raw: Vec<f64> = state
        .x2
        .iter()
        .zip(&neighbor.x2)
        .map(|(&a, &b)| a as f64 + omega * (a as f64 - b as f64))
        .collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| raw[i].total_cmp(&raw[j]).then(i.cmp(&j)));
    let mut x2 = vec![0; raw.len()];
    for (rank, &pos) in order.iter().enumerate() {
        x2[pos] = rank;
    }
    SearchState::new(x1, x2)
}

/// A population member: its best state and private random stream.
#[derive(Debug, Clone)]
pub struct Agent {
    pub best: SearchState,
    rng: ChaCha8Rng,
}

fn agent_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Random initial states (uniform allocation, uniform permutation), one per
/// agent, plus zeroed Q-matrices.
pub fn init_agents(eval: &Evaluator<'_>, params: &HqmParams) -> Result<(Vec<Agent>, QMatrices)> {
    params.validate()?;
    let tasks = eval.task_count();
    if tasks == 0 {
        return Err(Error::NothingToSolve);
    }
    let lockers = eval.max_lockers();
    let agents = par::map_range(params.agents, |i| -> Result<Agent> {
        let mut rng = agent_rng(params.seed, i);
        let mut best = random_state(tasks, lockers, &mut rng);
        eval.score(&mut best)?;
        Ok(Agent { best, rng })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((agents, QMatrices::zeros(lockers, tasks)))
}

/// Uniform random allocation and permutation.
pub fn random_state<R: Rng>(tasks: usize, lockers: usize, rng: &mut R) -> SearchState {
    use rand::seq::SliceRandom;
    let x1 = (0..tasks).map(|_| rng.random_range(0..lockers)).collect();
    let mut x2: Vec<usize> = (0..tasks).collect();
    x2.shuffle(rng);
    SearchState::new(x1, x2)
}

fn best_of(agents: &[Agent]) -> &SearchState {
    let mut best = &agents[0].best;
    for a in &agents[1..] {
        if a.best.reward > best.reward {
            best = &a.best;
        }
    }
    best
}

/// Runs the full hybrid Q-learning search.
pub fn run_hqm(eval: &Evaluator<'_>, params: &HqmParams) -> Result<SolveOutcome> {
    let (mut agents, mut q) = init_agents(eval, params)?;
    let lockers = eval.max_lockers();
    let mut history = RunHistory::new(best_of(&agents).reward);

    for t in 0..params.timesteps {
        let qn = q.normalized();

        par::map_mut(&mut agents, |_, agent| -> Result<()> {
            let mut cand = global_construct(&qn, params.greedy, &mut agent.rng);
            if eval.score(&mut cand)? > agent.best.reward {
                agent.best = cand;
            }
            Ok(())
        })
        .into_iter()
        .collect::<Result<()>>()?;

        let peers: Vec<SearchState> = agents.iter().map(|a| a.best.clone()).collect();
        par::map_mut(&mut agents, |i, agent| -> Result<()> {
            let peer = if peers.len() > 1 {
                let j = agent.rng.random_range(0..peers.len() - 1);
                if j >= i { j + 1 } else { j }
            } else {
                i
            };
            let omega = agent.rng.random_range(-1.0..1.0);
            let mut cand = local_move(&agent.best, &peers[peer], omega, lockers);
            if eval.score(&mut cand)? > agent.best.reward {
                agent.best = cand;
            }
            Ok(())
        })
        .into_iter()
        .collect::<Result<()>>()?;

        let prev = q.clone();
        let alpha = params.alpha(t);
        for agent in &agents {
            update_q(&mut q, &agent.best, agent.best.reward, alpha, params.gamma);
        }
        history.record(best_of(&agents).reward);
        if has_converged(&prev, &q, params.tol)? {
            history.converged_at = Some(t);
            break;
        }
    }

    let state = best_of(&agents).clone();
    let (plan, cost) = eval.evaluate(&state)?;
    Ok(SolveOutcome {
        state,
        plan,
        cost,
        history,
    })
}
