//! Experiment drivers: the spaces x locations comparison grid and one-factor
//! delay sweeps, plus the metrics they report.
//!
//! Every solver and policy in a grid cell works on the same generated
//! instance and task pool, so cell entries form paired comparisons.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::{run_ga, GaParams};
use crate::hqm::{run_hqm, HqmParams};
use crate::instance::{assign_customers, generate_instance, GeneratorConfig};
use crate::par;
use crate::routing::{AdjustmentPolicy, Evaluator};
use crate::state::{RunHistory, SolveOutcome};
use crate::taskgen::build_tasks;

/// Relative change of the best reward over a run, in percent.
pub fn improvement_rate(history: &RunHistory) -> Result<f64> {
    improvement_between(history.initial_best, history.final_best)
}

pub fn improvement_between(initial: f64, last: f64) -> Result<f64> {
    if !(initial > 0.0) || !last.is_finite() {
        return Err(Error::UndefinedRate(initial));
    }
    Ok((last - initial) / initial * 100.0)
}

/// `reward_btd - reward_hcps`.
pub fn reward_gap(reward_btd: f64, reward_hcps: f64) -> Result<f64> {
    if !reward_btd.is_finite() || !reward_hcps.is_finite() {
        return Err(Error::Parameter("reward gap needs finite rewards".into()));
    }
    Ok(reward_btd - reward_hcps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Hqm,
    Ga,
}

impl Solver {
    pub const ALL: [Solver; 2] = [Solver::Hqm, Solver::Ga];
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Hqm => "hqm",
            Solver::Ga => "ga",
        })
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hqm" => Ok(Solver::Hqm),
            "ga" => Ok(Solver::Ga),
            other => Err(Error::Config(format!("unknown solver `{other}` (expected hqm or ga)"))),
        }
    }
}

/// Population size and iteration count shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub agents: usize,
    pub iterations: usize,
}

impl Budget {
    /// Small enough for routine runs.
    pub const DESK: Budget = Budget { agents: 20, iterations: 200 };
    /// The published setting.
    pub const PAPER: Budget = Budget { agents: 100, iterations: 1000 };

    pub fn named(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "desk" => Ok(Self::DESK),
            "paper" => Ok(Self::PAPER),
            other => Err(Error::Config(format!("unknown budget `{other}` (expected desk or paper)"))),
        }
    }
}

/// Runs `solver` with `budget` and default rates.
pub fn solve(eval: &Evaluator<'_>, solver: Solver, budget: Budget, seed: u64) -> Result<SolveOutcome> {
    match solver {
        Solver::Hqm => run_hqm(
            eval,
            &HqmParams {
                agents: budget.agents,
                timesteps: budget.iterations,
                seed,
                ..HqmParams::default()
            },
        ),
        Solver::Ga => run_ga(
            eval,
            &GaParams {
                population: budget.agents,
                generations: budget.iterations,
                seed,
                ..GaParams::default()
            },
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub spaces: Vec<usize>,
    pub locations: Vec<usize>,
    pub policies: Vec<AdjustmentPolicy>,
    pub solvers: Vec<Solver>,
    pub replications: usize,
    pub base: GeneratorConfig,
    pub seed: u64,
    pub budget: Budget,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            spaces: (5..=10).collect(),
            locations: vec![5, 10, 15, 20],
            policies: AdjustmentPolicy::ALL.to_vec(),
            solvers: Solver::ALL.to_vec(),
            replications: 1,
            base: GeneratorConfig::default(),
            seed: 1,
            budget: Budget::DESK,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spaces.is_empty() || self.locations.is_empty() || self.policies.is_empty() || self.solvers.is_empty() {
            return Err(Error::Config("grid axes must be non-empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("grid needs at least one replication".into()));
        }
        Ok(())
    }

    /// Generator seed for cell `cell` (row-major over spaces x locations) and
    /// replication `rep`.
    pub fn instance_seed(&self, cell: usize, rep: usize) -> u64 {
        self.seed.wrapping_add((cell * self.replications + rep) as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    /// One solver run on one replication.
    Entry,
    /// Mean over the replications of one (spaces, locations) cell.
    Cell,
    /// Mean over every cell.
    Overall,
}

/// One line of `grid.csv`. Mean rows leave `replication` and `seed` empty;
/// the overall rows also leave `spaces` and `locations` empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub kind: RowKind,
    pub spaces: Option<usize>,
    pub locations: Option<usize>,
    pub replication: Option<usize>,
    pub seed: Option<u64>,
    pub solver: Solver,
    pub policy: AdjustmentPolicy,
    pub tasks: f64,
    /// Rounded up on mean rows.
    pub lockers: f64,
    pub distance_km: f64,
    pub delay_min: f64,
    pub reward: f64,
    pub improvement_pct: f64,
    /// Filled on BTD mean rows when the matching HCPS row exists.
    pub reward_gap: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridResult {
    pub entries: Vec<GridRow>,
    pub cells: Vec<GridRow>,
    pub overall: Vec<GridRow>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn mean_row(kind: RowKind, rows: &[&GridRow]) -> GridRow {
    let first = rows[0];
    let (spaces, locations) = match kind {
        RowKind::Overall => (None, None),
        _ => (first.spaces, first.locations),
    };
    GridRow {
        kind,
        spaces,
        locations,
        replication: None,
        seed: None,
        solver: first.solver,
        policy: first.policy,
        tasks: mean(rows.iter().map(|r| r.tasks)),
        lockers: mean(rows.iter().map(|r| r.lockers)).ceil(),
        distance_km: mean(rows.iter().map(|r| r.distance_km)),
        delay_min: mean(rows.iter().map(|r| r.delay_min)),
        reward: mean(rows.iter().map(|r| r.reward)),
        improvement_pct: mean(rows.iter().map(|r| r.improvement_pct)),
        reward_gap: None,
    }
}

/// Sets `reward_gap` on each BTD row that has an HCPS partner in the same
/// (spaces, locations, solver) group.
fn fill_reward_gaps(rows: &mut [GridRow]) -> Result<()> {
    let hcps: Vec<(Option<usize>, Option<usize>, Solver, f64)> = rows
        .iter()
        .filter(|r| r.policy == AdjustmentPolicy::Hcps)
        .map(|r| (r.spaces, r.locations, r.solver, r.reward))
        .collect();
    for r in rows.iter_mut().filter(|r| r.policy == AdjustmentPolicy::Btd) {
        if let Some(&(_, _, _, other)) = hcps
            .iter()
            .find(|(s, l, v, _)| *s == r.spaces && *l == r.locations && *v == r.solver)
        {
            r.reward_gap = Some(reward_gap(r.reward, other)?);
        }
    }
    Ok(())
}

/// Aggregates entry rows into cell and overall means.
pub fn aggregate(entries: Vec<GridRow>) -> Result<GridResult> {
    let mut cell_keys: Vec<(Option<usize>, Option<usize>, Solver, AdjustmentPolicy)> = Vec::new();
    let mut col_keys: Vec<(Solver, AdjustmentPolicy)> = Vec::new();
    for r in &entries {
        let key = (r.spaces, r.locations, r.solver, r.policy);
        if !cell_keys.contains(&key) {
            cell_keys.push(key);
        }
        if !col_keys.contains(&(r.solver, r.policy)) {
            col_keys.push((r.solver, r.policy));
        }
    }
    let mut cells: Vec<GridRow> = cell_keys
        .iter()
        .map(|&(s, l, v, p)| {
            let rows: Vec<&GridRow> = entries
                .iter()
                .filter(|r| r.spaces == s && r.locations == l && r.solver == v && r.policy == p)
                .collect();
            mean_row(RowKind::Cell, &rows)
        })
        .collect();
    let mut overall: Vec<GridRow> = col_keys
        .iter()
        .map(|&(v, p)| {
            let rows: Vec<&GridRow> = cells.iter().filter(|r| r.solver == v && r.policy == p).collect();
            let mut row = mean_row(RowKind::Overall, &rows);
            // cell means are already rounded; average the raw entries instead
            row.lockers = mean(
                entries
                    .iter()
                    .filter(|r| r.solver == v && r.policy == p)
                    .map(|r| r.lockers),
            )
            .ceil();
            row
        })
        .collect();
    fill_reward_gaps(&mut cells)?;
    fill_reward_gaps(&mut overall)?;
    Ok(GridResult {
        entries,
        cells,
        overall,
    })
}

/// Runs every (cell, replication) of the grid, each solver and policy on
/// the same instance.
pub fn run_grid(grid: &GridConfig) -> Result<GridResult> {
    grid.validate()?;
    let mut jobs = Vec::new();
    for (si, &spaces) in grid.spaces.iter().enumerate() {
        for (li, &locations) in grid.locations.iter().enumerate() {
            let cell = si * grid.locations.len() + li;
            for rep in 0..grid.replications {
                jobs.push((spaces, locations, rep, grid.instance_seed(cell, rep)));
            }
        }
    }
    let per_job = par::map(&jobs, |&(spaces, locations, rep, seed)| -> Result<Vec<GridRow>> {
        let config = GeneratorConfig {
            num_spaces: spaces,
            locations_per_space: locations,
            seed,
            ..grid.base.clone()
        };
        let instance = generate_instance(&config)?;
        let pool = build_tasks(&instance, &assign_customers(&instance));
        let mut rows = Vec::new();
        for &solver in &grid.solvers {
            for &policy in &grid.policies {
                let eval = Evaluator::new(&instance, &pool, policy)?;
                let out = solve(&eval, solver, grid.budget, seed)?;
                rows.push(GridRow {
                    kind: RowKind::Entry,
                    spaces: Some(spaces),
                    locations: Some(locations),
                    replication: Some(rep),
                    seed: Some(seed),
                    solver,
                    policy,
                    tasks: pool.len() as f64,
                    lockers: out.plan.dispatched as f64,
                    distance_km: out.plan.total_distance,
                    delay_min: out.plan.average_lateness,
                    reward: out.cost.reward,
                    improvement_pct: improvement_rate(&out.history)?,
                    reward_gap: None,
                });
            }
        }
        log::info!("grid cell spaces={spaces} locations={locations} rep={rep} done");
        Ok(rows)
    });
    let mut entries = Vec::new();
    for rows in per_job {
        entries.extend(rows?);
    }
    aggregate(entries)
}

impl GridResult {
    pub fn rows(&self) -> impl Iterator<Item = &GridRow> {
        self.entries.iter().chain(&self.cells).chain(&self.overall)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads rows written by [`GridResult::write_csv`]; `#` lines are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut result = GridResult::default();
        for row in rdr.deserialize::<GridRow>() {
            let row = row?;
            match row.kind {
                RowKind::Entry => result.entries.push(row),
                RowKind::Cell => result.cells.push(row),
                RowKind::Overall => result.overall.push(row),
            }
        }
        Ok(result)
    }
}

/// A generator setting varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    /// Centre of the customer residence span range (minutes).
    CustomerSpan,
    /// Centre of the parking span range (minutes).
    ParkingSpan,
    Capacity,
    Speed,
    Spaces,
    Locations,
    /// Radius around the depot for parking spaces (km).
    ServiceRadius,
    /// Upper walking distance for customers (km).
    WalkRadius,
}

impl Factor {
    pub const ALL: [Factor; 8] = [
        Factor::CustomerSpan,
        Factor::ParkingSpan,
        Factor::Capacity,
        Factor::Speed,
        Factor::Spaces,
        Factor::Locations,
        Factor::ServiceRadius,
        Factor::WalkRadius,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Factor::CustomerSpan => "t_s",
            Factor::ParkingSpan => "t_p",
            Factor::Capacity => "capacity",
            Factor::Speed => "speed",
            Factor::Spaces => "spaces",
            Factor::Locations => "locations",
            Factor::ServiceRadius => "rho_l",
            Factor::WalkRadius => "rho_c",
        }
    }

    /// Returns `base` with this factor set to `value`.
    pub fn apply(self, base: &GeneratorConfig, value: f64) -> Result<GeneratorConfig> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::Config(format!("{} value {value} must be positive", self.name())));
        }
        let mut c = base.clone();
        match self {
            Factor::CustomerSpan => c.customer_span_range = span_range(value),
            Factor::ParkingSpan => c.parking_span_range = span_range(value),
            Factor::Capacity => c.fleet.capacity = value.round() as u32,
            Factor::Speed => c.fleet.speed = value,
            Factor::Spaces => c.num_spaces = value.round() as usize,
            Factor::Locations => c.locations_per_space = value.round() as usize,
            Factor::ServiceRadius => c.service_radius = value,
            Factor::WalkRadius => c.walk_range = [value.min(0.1), value],
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        Factor::ALL
            .into_iter()
            .find(|f| f.name() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = Factor::ALL.iter().map(|f| f.name()).collect();
                Error::Config(format!("unknown factor `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Spans are drawn uniformly within 20 minutes either side of the centre.
fn span_range(centre: f64) -> [f64; 2] {
    [(centre - 20.0).max(1.0), centre + 20.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub factor: Factor,
    pub values: Vec<f64>,
    pub base: GeneratorConfig,
    pub solver: Solver,
    pub policy: AdjustmentPolicy,
    pub replications: usize,
    pub seed: u64,
    pub budget: Budget,
}

impl SweepConfig {
    pub fn new(factor: Factor, values: Vec<f64>) -> Self {
        Self {
            factor,
            values,
            base: GeneratorConfig::default(),
            solver: Solver::Hqm,
            policy: AdjustmentPolicy::Hcps,
            replications: 10,
            seed: 1,
            budget: Budget::DESK,
        }
    }
}

/// One point of a sweep with the full generator setting it used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub factor: Factor,
    pub t_s: f64,
    pub t_p: f64,
    pub capacity: u32,
    pub speed: f64,
    pub spaces: usize,
    pub locations: usize,
    pub rho_l: f64,
    pub rho_c: f64,
    pub mean_delay: f64,
    pub stderr: f64,
    /// Replications that produced a non-empty task pool.
    pub replications: usize,
}

/// Mean and standard error of the mean; the error is 0 below two samples.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Average delay at every sweep value. Replication `r` uses generator seed
/// `seed + r` at every value, so points differ only in the varied factor.
pub fn sweep_factor(sweep: &SweepConfig) -> Result<Vec<SweepRow>> {
    if sweep.values.is_empty() || sweep.replications == 0 {
        return Err(Error::Config("sweep needs at least one value and one replication".into()));
    }
    let configs: Vec<GeneratorConfig> = sweep
        .values
        .iter()
        .map(|&v| sweep.factor.apply(&sweep.base, v))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|i| (0..sweep.replications).map(move |r| (i, r)))
        .collect();
    let delays = par::map(&jobs, |&(i, rep)| -> Result<Option<f64>> {
        let seed = sweep.seed.wrapping_add(rep as u64);
        let config = GeneratorConfig {
            seed,
            ..configs[i].clone()
        };
        let instance = generate_instance(&config)?;
        let pool = build_tasks(&instance, &assign_customers(&instance));
        if pool.is_empty() {
            return Ok(None);
        }
        let eval = Evaluator::new(&instance, &pool, sweep.policy)?;
        Ok(Some(solve(&eval, sweep.solver, sweep.budget, seed)?.plan.average_lateness))
    });
    let mut per_value = vec![Vec::new(); configs.len()];
    for (&(i, _), d) in jobs.iter().zip(delays) {
        if let Some(d) = d? {
            per_value[i].push(d);
        }
    }
    Ok(configs
        .iter()
        .zip(per_value)
        .map(|(c, d)| {
            let (mean_delay, stderr) = mean_stderr(&d);
            SweepRow {
                factor: sweep.factor,
                t_s: (c.customer_span_range[0] + c.customer_span_range[1]) / 2.0,
                t_p: (c.parking_span_range[0] + c.parking_span_range[1]) / 2.0,
                capacity: c.fleet.capacity,
                speed: c.fleet.speed,
                spaces: c.num_spaces,
                locations: c.locations_per_space,
                rho_l: c.service_radius,
                rho_c: c.walk_range[1],
                mean_delay,
                stderr,
                replications: d.len(),
            }
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// A point of a plot series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: String,
    pub y: f64,
    pub series: String,
}

fn write_series(path: &Path, points: &[PlotPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<Vec<PlotPoint>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes one series file per grid metric (x = cell label, one series per
/// solver and policy) into `dir`. Returns the files written.
pub fn write_grid_plotdata(dir: &Path, grid: &GridResult) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let metrics: [(&str, fn(&GridRow) -> f64); 4] = [
        ("lockers", |r| r.lockers),
        ("distance_km", |r| r.distance_km),
        ("delay_min", |r| r.delay_min),
        ("reward", |r| r.reward),
    ];
    let mut written = Vec::new();
    for (name, metric) in metrics {
        let points: Vec<PlotPoint> = grid
            .cells
            .iter()
            .map(|r| PlotPoint {
                x: format!("{}x{}", r.spaces.unwrap_or(0), r.locations.unwrap_or(0)),
                y: metric(r),
                series: format!("{}-{}", r.solver, r.policy),
            })
            .collect();
        let path = dir.join(format!("grid_{name}.csv"));
        write_series(&path, &points)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes the sweep's mean delay curve as `sweep_<factor>.csv` in `dir`.
pub fn write_sweep_plotdata(dir: &Path, rows: &[SweepRow], label: &str) -> Result<std::path::PathBuf> {
    fs::create_dir_all(dir)?;
    let factor = rows.first().map_or("empty", |r| r.factor.name());
    let points: Vec<PlotPoint> = rows
        .iter()
        .map(|r| PlotPoint {
            x: factor_value(r).to_string(),
            y: r.mean_delay,
            series: label.to_string(),
        })
        .collect();
    let path = dir.join(format!("sweep_{factor}.csv"));
    write_series(&path, &points)?;
    Ok(path)
}

/// The value of the row's swept factor.
pub fn factor_value(row: &SweepRow) -> f64 {
    match row.factor {
        Factor::CustomerSpan => row.t_s,
        Factor::ParkingSpan => row.t_p,
        Factor::Capacity => row.capacity as f64,
        Factor::Speed => row.speed,
        Factor::Spaces => row.spaces as f64,
        Factor::Locations => row.locations as f64,
        Factor::ServiceRadius => row.rho_l,
        Factor::WalkRadius => row.rho_c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_examples() {
        assert!((improvement_between(1e-3, 5e-3).unwrap() - 400.0).abs() < 1e-9);
        assert_eq!(improvement_between(2e-3, 2e-3).unwrap(), 0.0);
        assert!(matches!(improvement_between(0.0, 1e-3), Err(Error::UndefinedRate(_))));
    }

    #[test]
    fn gap_examples() {
        let g = reward_gap(6.242e-3, 6.719e-3).unwrap();
        assert_eq!((g * 1e6).round() / 1e3, -0.477);
        let g = reward_gap(1.249e-3, 1.067e-3).unwrap();
        assert_eq!((g * 1e6).round() / 1e3, 0.182);
        assert_eq!(reward_gap(3e-3, 3e-3).unwrap(), 0.0);
        assert!(reward_gap(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn budgets_and_names() {
        assert_eq!(Budget::named("desk").unwrap(), Budget { agents: 20, iterations: 200 });
        assert_eq!(Budget::named("PAPER").unwrap(), Budget { agents: 100, iterations: 1000 });
        assert!(Budget::named("huge").is_err());
        assert_eq!("ga".parse::<Solver>().unwrap(), Solver::Ga);
        assert!("sa".parse::<Solver>().is_err());
        for f in Factor::ALL {
            assert_eq!(f.name().parse::<Factor>().unwrap(), f);
        }
    }

    #[test]
    fn factor_application() {
        let base = GeneratorConfig::default();
        assert_eq!(Factor::CustomerSpan.apply(&base, 50.0).unwrap().customer_span_range, [30.0, 70.0]);
        assert_eq!(Factor::ParkingSpan.apply(&base, 30.0).unwrap().parking_span_range, [10.0, 50.0]);
        assert_eq!(Factor::WalkRadius.apply(&base, 0.05).unwrap().walk_range, [0.05, 0.05]);
        assert_eq!(Factor::WalkRadius.apply(&base, 0.8).unwrap().walk_range, [0.1, 0.8]);
        assert_eq!(Factor::Capacity.apply(&base, 30.0).unwrap().fleet.capacity, 30);
        assert!(Factor::Speed.apply(&base, -1.0).is_err());
    }

    #[test]
    fn stderr_of_known_sample() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    fn entry(spaces: usize, rep: usize, solver: Solver, policy: AdjustmentPolicy, reward: f64, lockers: f64) -> GridRow {
        GridRow {
            kind: RowKind::Entry,
            spaces: Some(spaces),
            locations: Some(5),
            replication: Some(rep),
            seed: Some(rep as u64),
            solver,
            policy,
            tasks: 4.0,
            lockers,
            distance_km: 10.0 * reward,
            delay_min: 1.0,
            reward,
            improvement_pct: 50.0,
            reward_gap: None,
        }
    }

    #[test]
    fn aggregation_means_and_gaps() {
        use AdjustmentPolicy::{Btd, Hcps};
        let entries = vec![
            entry(5, 0, Solver::Hqm, Btd, 0.004, 1.0),
            entry(5, 1, Solver::Hqm, Btd, 0.002, 2.0),
            entry(5, 0, Solver::Hqm, Hcps, 0.005, 1.0),
            entry(5, 1, Solver::Hqm, Hcps, 0.005, 1.0),
            entry(6, 0, Solver::Hqm, Btd, 0.001, 3.0),
            entry(6, 0, Solver::Hqm, Hcps, 0.002, 3.0),
        ];
        let g = aggregate(entries).unwrap();
        assert_eq!(g.cells.len(), 4);
        let c = &g.cells[0];
        assert_eq!((c.spaces, c.policy), (Some(5), Btd));
        assert!((c.reward - 0.003).abs() < 1e-15);
        assert_eq!(c.lockers, 2.0); // mean 1.5 rounded up
        assert!((c.reward_gap.unwrap() + 0.002).abs() < 1e-15);
        assert_eq!(g.cells[1].reward_gap, None);
        assert_eq!(g.overall.len(), 2);
        assert!((g.overall[0].reward - 0.002).abs() < 1e-15);
        assert_eq!(g.overall[0].lockers, 2.0);

        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(GridResult::read_csv(buf.as_slice()).unwrap(), g);
    }
}
