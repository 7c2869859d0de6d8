//! Genetic-algorithm baseline over the same state encoding and evaluator as
//! the Q-learning search.
//!
//! Selection is roulette on reward, `x1` uses uniform crossover and `x2`
//! order crossover, and mutation reassigns lockers or swaps execution
//! positions. The best states of each generation survive unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hqm::random_state;
use crate::par;
use crate::routing::Evaluator;
use crate::state::{RunHistory, SearchState, SolveOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub elite_fraction: f64,
    pub crossover_prob: f64,
    pub mutation_rate: f64,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 1000,
            elite_fraction: 0.05,
            crossover_prob: 0.5,
            mutation_rate: 0.05,
            seed: 0,
        }
    }
}

impl GaParams {
    /// Number of states copied unchanged into each generation.
    pub fn elite_count(&self) -> usize {
        (self.elite_fraction * self.population as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Parameter("population must hold at least 2 states".into()));
        }
        for (name, p) in [
            ("elite fraction", self.elite_fraction),
            ("crossover probability", self.crossover_prob),
            ("mutation rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parameter(format!("{name} {p} outside [0, 1]")));
            }
        }
        if self.elite_count() < 1 {
            return Err(Error::Parameter(format!(
                "elite fraction {} of population {} keeps no state",
                self.elite_fraction, self.population
            )));
        }
        Ok(())
    }
}

/// Indices of `population` sorted by reward, best first; ties keep order.
fn ranked(population: &[SearchState]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..population.len()).collect();
    idx.sort_by(|&a, &b| population[b].reward.total_cmp(&population[a].reward));
    idx
}

fn roulette<R: Rng>(population: &[SearchState], total: f64, rng: &mut R) -> usize {
    if total <= 0.0 {
        return rng.random_range(0..population.len());
    }
    let mut u = rng.random::<f64>() * total;
    for (i, s) in population.iter().enumerate() {
        let w = s.reward.max(0.0);
        if u < w {
            return i;
        }
        u -= w;
    }
    population.len() - 1
}

/// Order crossover: the child keeps `keep[lo..=hi]` in place and fills the
/// other positions with the missing values in the order they appear in
/// `donor`.
pub fn order_crossover(keep: &[usize], donor: &[usize], lo: usize, hi: usize) -> Vec<usize> {
    let n = keep.len();
    let mut used = vec![false; n];
    for &v in &keep[lo..=hi] {
        used[v] = true;
    }
    let mut fill = donor.iter().copied().filter(|&v| !used[v]);
    (0..n)
        .map(|p| {
            if (lo..=hi).contains(&p) {
                keep[p]
            } else {
                fill.next().expect("donor is a permutation")
            }
        })
        .collect()
}

fn crossover<R: Rng>(a: &SearchState, b: &SearchState, rng: &mut R) -> (SearchState, SearchState) {
    let n = a.len();
    let (mut x1a, mut x1b) = (a.x1.clone(), b.x1.clone());
    for t in 0..n {
        if rng.random::<bool>() {
            std::mem::swap(&mut x1a[t], &mut x1b[t]);
        }
    }
    let mut cut = [rng.random_range(0..n), rng.random_range(0..n)];
    cut.sort_unstable();
    let x2a = order_crossover(&a.x2, &b.x2, cut[0], cut[1]);
    let x2b = order_crossover(&b.x2, &a.x2, cut[0], cut[1]);
    (SearchState::new(x1a, x2a), SearchState::new(x1b, x2b))
}

fn mutate<R: Rng>(s: &mut SearchState, rate: f64, lockers: usize, rng: &mut R) {
    let n = s.len();
    let mut changed = false;
    for t in 0..n {
        if rng.random::<f64>() < rate {
            s.x1[t] = rng.random_range(0..lockers);
            changed = true;
        }
    }
    for p in 0..n {
        if rng.random::<f64>() < rate {
            let q = rng.random_range(0..n);
            s.x2.swap(p, q);
            changed = true;
        }
    }
    if changed {
        s.reward = 0.0;
    }
}

/// Produces the next population. Elites keep their cached reward; every
/// other child must be re-evaluated.
pub fn next_generation<R: Rng>(
    population: &[SearchState],
    params: &GaParams,
    lockers: usize,
    rng: &mut R,
) -> Result<Vec<SearchState>> {
    if population.len() < 2 {
        return Err(Error::Parameter("population must hold at least 2 states".into()));
    }
    let size = population.len();
    let elites = ((params.elite_fraction * size as f64 + 1e-9).floor() as usize).min(size);
    let mut next: Vec<SearchState> = ranked(population)[..elites]
        .iter()
        .map(|&i| population[i].clone())
        .collect();
    let total: f64 = population.iter().map(|s| s.reward.max(0.0)).sum();
    while next.len() < size {
        let a = &population[roulette(population, total, rng)];
        let b = &population[roulette(population, total, rng)];
        let (mut c, mut d) = if rng.random::<f64>() < params.crossover_prob {
            crossover(a, b, rng)
        } else {
            (a.clone(), b.clone())
        };
        mutate(&mut c, params.mutation_rate, lockers, rng);
        next.push(c);
        if next.len() < size {
            mutate(&mut d, params.mutation_rate, lockers, rng);
            next.push(d);
        }
    }
    Ok(next)
}

fn evaluate_all(eval: &Evaluator<'_>, states: &mut [SearchState], skip: usize) -> Result<()> {
    par::map_mut(&mut states[skip..], |_, s| eval.score(s).map(|_| ()))
        .into_iter()
        .collect()
}

fn best(population: &[SearchState]) -> &SearchState {
    &population[ranked(population)[0]]
}

pub fn run_ga(eval: &Evaluator<'_>, params: &GaParams) -> Result<SolveOutcome> {
    params.validate()?;
    let tasks = eval.task_count();
    if tasks == 0 {
        return Err(Error::NothingToSolve);
    }
    let lockers = eval.max_lockers();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut population: Vec<SearchState> = (0..params.population)
        .map(|_| random_state(tasks, lockers, &mut rng))
        .collect();
    evaluate_all(eval, &mut population, 0)?;
    let mut history = RunHistory::new(best(&population).reward);

    let elites = params.elite_count();
    for _ in 0..params.generations {
        population = next_generation(&population, params, lockers, &mut rng)?;
        evaluate_all(eval, &mut population, elites)?;
        history.record(best(&population).reward);
    }

    let state = best(&population).clone();
    let (plan, cost) = eval.evaluate(&state)?;
    Ok(SolveOutcome {
        state,
        plan,
        cost,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::is_permutation;

    fn population(n: usize, tasks: usize, rng: &mut ChaCha8Rng) -> Vec<SearchState> {
        (0..n)
            .map(|i| {
                let mut s = random_state(tasks, 3, rng);
                s.reward = (i as f64 + 1.0) / 1000.0;
                s
            })
            .collect()
    }

    #[test]
    fn elite_counts() {
        assert_eq!(GaParams { population: 100, ..GaParams::default() }.elite_count(), 5);
        assert_eq!(GaParams { population: 20, ..GaParams::default() }.elite_count(), 1);
        assert!(GaParams { population: 19, ..GaParams::default() }.validate().is_err());
        assert!(GaParams { population: 1, ..GaParams::default() }.validate().is_err());
        assert!(GaParams { mutation_rate: 1.5, ..GaParams::default() }.validate().is_err());
    }

    #[test]
    fn top_five_survive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pop = population(100, 6, &mut rng);
        let params = GaParams { population: 100, ..GaParams::default() };
        let next = next_generation(&pop, &params, 3, &mut rng).unwrap();
        assert_eq!(next.len(), 100);
        for k in 0..5 {
            assert_eq!(next[k], pop[99 - k]);
        }
    }

    #[test]
    fn no_variation_gives_clones() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pop = population(20, 5, &mut rng);
        let params = GaParams {
            population: 20,
            crossover_prob: 0.0,
            mutation_rate: 0.0,
            ..GaParams::default()
        };
        let next = next_generation(&pop, &params, 3, &mut rng).unwrap();
        assert!(next.iter().all(|c| pop.contains(c)));
    }

    #[test]
    fn children_stay_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pop = population(40, 7, &mut rng);
        let params = GaParams {
            population: 40,
            crossover_prob: 1.0,
            mutation_rate: 0.3,
            ..GaParams::default()
        };
        for _ in 0..50 {
            pop = next_generation(&pop, &params, 3, &mut rng).unwrap();
            for s in &pop {
                assert!(s.check_shape(7, 3).is_ok());
            }
        }
        assert!(next_generation(&pop[..1], &params, 3, &mut rng).is_err());
    }

    #[test]
    fn order_crossover_example() {
        let child = order_crossover(&[0, 1, 2, 3, 4], &[4, 3, 2, 1, 0], 1, 2);
        assert_eq!(child, vec![4, 1, 2, 3, 0]);
        assert!(is_permutation(&child));
    }
}
