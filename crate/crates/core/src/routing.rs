//! Route scheduling, adjustment strategies, objective and feasibility.
//!
//! A locker visits its tasks in window-start order. Timing follows the
//! earliest-start recurrences: the first arrival is `max(e, t_01)`, a locker
//! leaves at `max(arrival, earliest pickup) + S`, and later arrivals are
//! `max(prev leave + t_ij, e)`. When the direct arrival would precede the next
//! slot, or the next task would overflow capacity, the route is adjusted:
//!
//! * **BTD** detours via the depot (`start_i + S_i + t_i0 + t_0j`), emptying
//!   the locker; if it is still early it waits at the next space.
//! * **HCPS** holds at the current space through `l_ia` (`l_ia + t_ij`) and
//!   keeps holding until it can arrive exactly at `e_ja`.
//!
//! Capacity overflow always forces a depot return. Starting after `l_ja` is a
//! soft violation recorded as lateness.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, Position, TimeWindow};
use crate::state::SearchState;
use crate::taskgen::{Task, TaskPool};

/// Which fix to prefer when a locker would reach its next space too early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustmentPolicy {
    /// Back to depot.
    Btd,
    /// Hold at current parking space.
    Hcps,
}

impl AdjustmentPolicy {
    pub const ALL: [AdjustmentPolicy; 2] = [AdjustmentPolicy::Btd, AdjustmentPolicy::Hcps];
}

impl fmt::Display for AdjustmentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdjustmentPolicy::Btd => "btd",
            AdjustmentPolicy::Hcps => "hcps",
        })
    }
}

impl FromStr for AdjustmentPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "btd" => Ok(AdjustmentPolicy::Btd),
            "hcps" => Ok(AdjustmentPolicy::Hcps),
            other => Err(Error::Parameter(format!("unknown policy `{other}` (expected btd|hcps)"))),
        }
    }
}

/// Adjustment applied on the leg into a visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjustment {
    None,
    Btd,
    Hcps,
}

impl fmt::Display for Adjustment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adjustment::None => "none",
            Adjustment::Btd => "btd",
            Adjustment::Hcps => "hcps",
        })
    }
}

/// Travel time in minutes between two points at `speed` km/min.
pub fn travel_time(from: Position, to: Position, speed: f64) -> Result<f64> {
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(Error::Parameter(format!("speed must be positive, got {speed}")));
    }
    Ok(from.distance(&to) / speed)
}

/// Arrival, service start and leave time of one visit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub arrival: f64,
    pub start: f64,
    pub leave: f64,
}

/// Earliest-start timing of a visit.
///
/// With `prev_leave = None` this is the first visit of a route and `travel` is
/// the depot leg: arrival is `max(e, t_01)`. Otherwise arrival is
/// `max(prev_leave + travel, e)`. Service starts at
/// `max(arrival, earliest_pickup)` and lasts `service_time`.
pub fn earliest_schedule(
    prev_leave: Option<f64>,
    travel: f64,
    window: TimeWindow,
    earliest_pickup: f64,
    service_time: f64,
) -> Timing {
    let arrival = match prev_leave {
        None => window.start.max(travel),
        Some(leave) => (leave + travel).max(window.start),
    };
    let start = arrival.max(earliest_pickup);
    Timing {
        arrival,
        start,
        leave: start + service_time,
    }
}

/// Back-to-depot arrival at the next space: `start_i + S_i + t_i0 + t_0j`.
pub fn apply_btd(prev_start: f64, service_time: f64, to_depot: f64, from_depot: f64) -> f64 {
    prev_start + service_time + to_depot + from_depot
}

/// Hold-at-space arrival at the next space: `l_ia + t_ij`.
pub fn apply_hcps(prev_latest_end: f64, travel: f64) -> f64 {
    prev_latest_end + travel
}

/// Multiplicative perturbation of leg travel times, `1 + amplitude * U(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelNoise {
    pub amplitude: f64,
    pub seed: u64,
}

/// One stop on a locker route. `task` is `None` for depot stops (node 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub node: usize,
    pub task: Option<usize>,
    pub arrival: f64,
    pub start: f64,
    pub leave: f64,
    /// Parcels carried since the last depot visit, including this stop.
    pub load: u32,
    pub adjustment: Adjustment,
    pub lateness: f64,
}

impl VisitRecord {
    fn depot(time: f64) -> Self {
        Self {
            node: 0,
            task: None,
            arrival: time,
            start: time,
            leave: time,
            load: 0,
            adjustment: Adjustment::None,
            lateness: 0.0,
        }
    }

    pub fn is_depot(&self) -> bool {
        self.task.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockerRoute {
    pub locker: usize,
    pub stops: Vec<VisitRecord>,
    pub distance: f64,
}

impl LockerRoute {
    pub fn visits(&self) -> impl Iterator<Item = &VisitRecord> {
        self.stops.iter().filter(|s| !s.is_depot())
    }
}

/// Timed routes of every dispatched locker.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoutePlan {
    pub routes: Vec<LockerRoute>,
    pub total_distance: f64,
    pub dispatched: usize,
    pub total_lateness: f64,
    pub average_lateness: f64,
}

impl RoutePlan {
    fn from_routes(routes: Vec<LockerRoute>) -> Self {
        let total_distance = routes.iter().map(|r| r.distance).sum();
        let dispatched = routes.len();
        let mut plan = RoutePlan {
            routes,
            total_distance,
            dispatched,
            ..RoutePlan::default()
        };
        let (total, average) = compute_delay(&plan);
        plan.total_lateness = total;
        plan.average_lateness = average;
        plan
    }

    /// Writes one row per leg: `locker_id,leg_index,from_node,to_node,
    /// arrive_min,start_min,leave_min,load,adjustment,lateness_min`, where the
    /// timing columns describe the stop at `to_node`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "locker_id",
            "leg_index",
            "from_node",
            "to_node",
            "arrive_min",
            "start_min",
            "leave_min",
            "load",
            "adjustment",
            "lateness_min",
        ])?;
        for route in &self.routes {
            for (leg, pair) in route.stops.windows(2).enumerate() {
                let to = &pair[1];
                w.write_record([
                    route.locker.to_string(),
                    leg.to_string(),
                    pair[0].node.to_string(),
                    to.node.to_string(),
                    to.arrival.to_string(),
                    to.start.to_string(),
                    to.leave.to_string(),
                    to.load.to_string(),
                    to.adjustment.to_string(),
                    to.lateness.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Objective `W1 * F * lockers + W2 * c * km` and its reciprocal reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub fleet_term: f64,
    pub travel_term: f64,
    pub objective: f64,
    /// `1 / objective`, or 0 when nothing was dispatched.
    pub reward: f64,
}

impl CostBreakdown {
    pub fn new(instance: &Instance, dispatched: usize, distance: f64) -> Self {
        let fleet_term = instance.weights.fleet * instance.fleet.fixed_cost * dispatched as f64;
        let travel_term = instance.weights.travel * instance.fleet.unit_travel_cost * distance;
        let objective = fleet_term + travel_term;
        Self {
            fleet_term,
            travel_term,
            objective,
            reward: if objective > 0.0 { 1.0 / objective } else { 0.0 },
        }
    }
}

/// Total and mean lateness over task visits; zero for an empty plan.
pub fn compute_delay(plan: &RoutePlan) -> (f64, f64) {
    let mut total = 0.0;
    let mut count = 0usize;
    for visit in plan.routes.iter().flat_map(|r| r.visits()) {
        total += visit.lateness;
        count += 1;
    }
    let average = if count == 0 { 0.0 } else { total / count as f64 };
    (total, average)
}

/// Precomputed scheduling context for one (instance, task pool, policy).
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    instance: &'a Instance,
    pool: &'a TaskPool,
    policy: AdjustmentPolicy,
    noise: Option<TravelNoise>,
    /// node x node travel distance in km; node 0 is the depot
    dist: Vec<Vec<f64>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(instance: &'a Instance, pool: &'a TaskPool, policy: AdjustmentPolicy) -> Result<Self> {
        if !(instance.fleet.speed > 0.0) {
            return Err(Error::Parameter("locker speed must be positive".into()));
        }
        for t in &pool.tasks {
            if instance.space(t.space).is_none() {
                return Err(Error::Shape(format!("task {} refers to unknown space {}", t.id, t.space)));
            }
        }
        let nodes: Vec<Position> = std::iter::once(instance.depot)
            .chain(instance.spaces.iter().map(|s| s.position))
            .collect();
        let dist = nodes
            .iter()
            .map(|a| nodes.iter().map(|b| a.distance(b)).collect())
            .collect();
        Ok(Self {
            instance,
            pool,
            policy,
            noise: None,
            dist,
        })
    }

    pub fn with_noise(mut self, noise: Option<TravelNoise>) -> Self {
        self.noise = noise;
        self
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn pool(&self) -> &'a TaskPool {
        self.pool
    }

    pub fn policy(&self) -> AdjustmentPolicy {
        self.policy
    }

    pub fn task_count(&self) -> usize {
        self.pool.len()
    }

    pub fn max_lockers(&self) -> usize {
        self.instance.fleet.max_lockers
    }

    /// Groups tasks per locker following `x2`, then stably sorts each group by
    /// window start.
    pub fn locker_task_lists(&self, state: &SearchState) -> Result<Vec<Vec<usize>>> {
        state.check_shape(self.pool.len(), self.max_lockers())?;
        let mut lists = vec![Vec::new(); self.max_lockers()];
        for &t in &state.x2 {
            lists[state.x1[t]].push(t);
        }
        for list in &mut lists {
            list.sort_by(|&a, &b| {
                self.pool.tasks[a]
                    .window
                    .start
                    .total_cmp(&self.pool.tasks[b].window.start)
            });
        }
        Ok(lists)
    }

    /// Schedules every locker and scores the result.
    pub fn evaluate(&self, state: &SearchState) -> Result<(RoutePlan, CostBreakdown)> {
        let lists = self.locker_task_lists(state)?;
        let routes: Vec<LockerRoute> = lists
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(locker, l)| self.schedule_ordered(locker, l))
            .collect();
        let plan = RoutePlan::from_routes(routes);
        let cost = CostBreakdown::new(self.instance, plan.dispatched, plan.total_distance);
        Ok((plan, cost))
    }

    pub fn reward(&self, state: &SearchState) -> Result<f64> {
        Ok(self.evaluate(state)?.1.reward)
    }

    /// Evaluates `state` and stores the reward in it.
    pub fn score(&self, state: &mut SearchState) -> Result<f64> {
        state.reward = self.reward(state)?;
        Ok(state.reward)
    }

    /// Schedules one locker over `tasks`, sorting them by window start first.
    pub fn schedule(&self, locker: usize, tasks: &[usize]) -> Result<Option<LockerRoute>> {
        if let Some(&t) = tasks.iter().find(|&&t| t >= self.pool.len()) {
            return Err(Error::Shape(format!("unknown task id {t}")));
        }
        if tasks.is_empty() {
            return Ok(None);
        }
        let mut ordered = tasks.to_vec();
        ordered.sort_by(|&a, &b| {
            self.pool.tasks[a]
                .window
                .start
                .total_cmp(&self.pool.tasks[b].window.start)
        });
        Ok(Some(self.schedule_ordered(locker, &ordered)))
    }

    fn space_service(&self, task: &Task) -> f64 {
        self.instance
            .space(task.space)
            .map(|s| s.service_time)
            .expect("task spaces checked at construction")
    }

    /// Core scheduler over a non-empty, already ordered task list.
    fn schedule_ordered(&self, locker: usize, order: &[usize]) -> LockerRoute {
        let capacity = self.instance.fleet.capacity;
        let speed = self.instance.fleet.speed;
        let mut noise = self.noise.map(|n| {
            let seed = n.seed ^ (locker as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            (n.amplitude, ChaCha8Rng::seed_from_u64(seed))
        });
        let mut leg_time = |from: usize, to: usize| -> f64 {
            let base = self.dist[from][to] / speed;
            match noise.as_mut() {
                Some((amp, rng)) => base * (1.0 + *amp * rng.random_range(-1.0..=1.0)).max(0.0),
                None => base,
            }
        };

        let mut stops = Vec::with_capacity(order.len() + 2);
        let mut distance = 0.0;

        let first = &self.pool.tasks[order[0]];
        let t01 = leg_time(0, first.space);
        let timing = earliest_schedule(
            None,
            t01,
            first.window,
            first.earliest_pickup(),
            self.space_service(first),
        );
        stops.push(VisitRecord::depot(timing.arrival - t01));
        distance += self.dist[0][first.space];
        let mut load = first.demand;
        stops.push(self.visit(first, timing, load, Adjustment::None));

        for pair in order.windows(2) {
            let prev = &self.pool.tasks[pair[0]];
            let next = &self.pool.tasks[pair[1]];
            let prev_stop = stops.last().expect("route has a first visit");
            let (prev_start, prev_leave) = (prev_stop.start, prev_stop.leave);
            let service_next = self.space_service(next);

            let t_ij = leg_time(prev.space, next.space);
            let direct = prev_leave + t_ij;
            let early = direct < next.window.start;
            let overflow = load > 0 && load + next.demand > capacity;

            let (arrival, adjustment) = if overflow || (early && self.policy == AdjustmentPolicy::Btd) {
                let t_i0 = leg_time(prev.space, 0);
                let t_0j = leg_time(0, next.space);
                stops.push(VisitRecord::depot(prev_leave + t_i0));
                distance += self.dist[prev.space][0] + self.dist[0][next.space];
                load = 0;
                let arrival = apply_btd(prev_start, self.space_service(prev), t_i0, t_0j);
                (arrival, Adjustment::Btd)
            } else if early {
                distance += self.dist[prev.space][next.space];
                let arrival = apply_hcps(prev.window.end, t_ij).max(next.window.start);
                (arrival, Adjustment::Hcps)
            } else {
                distance += self.dist[prev.space][next.space];
                (direct, Adjustment::None)
            };

            let start = arrival.max(next.window.start).max(next.earliest_pickup());
            let timing = Timing {
                arrival,
                start,
                leave: start + service_next,
            };
            load += next.demand;
            stops.push(self.visit(next, timing, load, adjustment));
        }

        let last = &self.pool.tasks[*order.last().expect("non-empty")];
        let back = stops.last().expect("non-empty").leave + leg_time(last.space, 0);
        stops.push(VisitRecord::depot(back));
        distance += self.dist[last.space][0];

        LockerRoute {
            locker,
            stops,
            distance,
        }
    }

    fn visit(&self, task: &Task, timing: Timing, load: u32, adjustment: Adjustment) -> VisitRecord {
        VisitRecord {
            node: task.space,
            task: Some(task.id),
            arrival: timing.arrival,
            start: timing.start,
            leave: timing.leave,
            load,
            adjustment,
            lateness: (timing.start - task.window.end).max(0.0),
        }
    }
}

/// Schedules one locker's tasks (sorted by window start) under `policy`.
/// An empty list dispatches nothing.
pub fn schedule_route(
    locker: usize,
    tasks: &[usize],
    pool: &TaskPool,
    instance: &Instance,
    policy: AdjustmentPolicy,
) -> Result<Option<LockerRoute>> {
    Evaluator::new(instance, pool, policy)?.schedule(locker, tasks)
}

/// Schedules and scores a full search state.
pub fn evaluate_solution(
    state: &SearchState,
    pool: &TaskPool,
    instance: &Instance,
    policy: AdjustmentPolicy,
) -> Result<(RoutePlan, CostBreakdown)> {
    Evaluator::new(instance, pool, policy)?.evaluate(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Hard,
    Soft,
}

/// A broken model constraint, numbered as in the mathematical model (2-12).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub constraint: u8,
    pub severity: Severity,
    pub entity: String,
    pub description: String,
    /// Minutes late, for soft time-window violations.
    pub lateness: f64,
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Hard => "hard",
            Severity::Soft => "soft",
        };
        write!(f, "constraint ({}) [{}] {}: {}", self.constraint, sev, self.entity, self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<ConstraintViolation>,
}

impl FeasibilityReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn hard(&self) -> impl Iterator<Item = &ConstraintViolation> {
        self.violations.iter().filter(|v| v.severity == Severity::Hard)
    }

    pub fn has_hard(&self) -> bool {
        self.hard().next().is_some()
    }

    /// Sum of soft lateness, accumulated in plan order.
    pub fn total_lateness(&self) -> f64 {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Soft)
            .fold(0.0, |acc, v| acc + v.lateness)
    }
}

/// Checks a scheduled plan against the model constraints (2)-(11).
pub fn check_feasibility(
    plan: &RoutePlan,
    state: &SearchState,
    pool: &TaskPool,
    instance: &Instance,
) -> FeasibilityReport {
    let mut out = Vec::new();
    fn hard(out: &mut Vec<ConstraintViolation>, constraint: u8, entity: String, description: String) {
        out.push(ConstraintViolation {
            constraint,
            severity: Severity::Hard,
            entity,
            description,
            lateness: 0.0,
        })
    }

    // (2)-(3): every task exactly once, on the locker x1 names
    if state.x1.len() != pool.len() || state.x2.len() != pool.len() || !crate::state::is_permutation(&state.x2) {
        hard(&mut out, 2, "state".into(), "state does not cover every task exactly once".into());
    }
    let mut seen: Vec<Vec<usize>> = vec![Vec::new(); pool.len()];
    for route in &plan.routes {
        for v in route.visits() {
            match v.task {
                Some(t) if t < pool.len() => seen[t].push(route.locker),
                Some(t) => hard(&mut out, 2, format!("locker {}", route.locker), format!("visits unknown task {t}")),
                None => {}
            }
        }
    }
    for (t, lockers) in seen.iter().enumerate() {
        match lockers.as_slice() {
            [] => hard(&mut out, 3, format!("task {t}"), "never visited".into()),
            [m] => {
                if state.x1.get(t).is_some_and(|&a| a != *m) {
                    hard(&mut out, 
                        2,
                        format!("task {t}"),
                        format!("allocated to locker {} but visited by locker {m}", state.x1[t]),
                    );
                }
            }
            many => hard(&mut out, 2, format!("task {t}"), format!("visited {} times by lockers {many:?}", many.len())),
        }
    }

    for route in &plan.routes {
        let name = format!("locker {}", route.locker);
        // (4)-(5): depart from and return to the depot
        if !route.stops.first().is_some_and(VisitRecord::is_depot) {
            hard(&mut out, 5, name.clone(), "route does not depart from the depot".into());
        }
        if !route.stops.last().is_some_and(VisitRecord::is_depot) {
            hard(&mut out, 4, name.clone(), "route does not return to the depot".into());
        }
        for (k, stop) in route.stops.iter().enumerate() {
            // (6): capacity
            if stop.load > instance.fleet.capacity {
                hard(&mut out, 
                    6,
                    name.clone(),
                    format!("load {} exceeds capacity {} at stop {k}", stop.load, instance.fleet.capacity),
                );
            }
            if stop.is_depot() && stop.load != 0 {
                hard(&mut out, 6, name.clone(), format!("load {} not emptied at depot stop {k}", stop.load));
            }
            // (9): time flows forward along the route
            if k > 0 && stop.arrival + 1e-9 < route.stops[k - 1].leave {
                hard(&mut out, 9, name.clone(), format!("stop {k} reached before the previous stop was left"));
            }
            if !(stop.arrival <= stop.start && stop.start <= stop.leave) {
                hard(&mut out, 9, name.clone(), format!("stop {k} has arrival/start/leave out of order"));
            }
            let Some(t) = stop.task.filter(|&t| t < pool.len()) else {
                continue;
            };
            let window = pool.tasks[t].window;
            // (7): never start before the slot opens
            if stop.start + 1e-9 < window.start {
                hard(&mut out, 7, format!("task {t}"), format!("service starts at {} before slot {window}", stop.start));
            }
            // (8), (10)-(11): late start is soft and equals recorded lateness
            if stop.lateness > 0.0 {
                out.push(ConstraintViolation {
                    constraint: 8,
                    severity: Severity::Soft,
                    entity: format!("task {t}"),
                    description: format!("service starts {} min after slot {window} closes", stop.lateness),
                    lateness: stop.lateness,
                });
            }
        }
    }
    FeasibilityReport { violations: out }
}
