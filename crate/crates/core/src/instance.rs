//! Problem instances: parking spaces, customers with time-windowed locations,
//! and the locker fleet.
//!
//! Times are minutes since midnight and distances are planar Euclidean
//! kilometres. The depot is node 0 and sits at [`Instance::depot`]; parking
//! space ids run from 1 to the number of spaces.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes in a day; upper bound for any time window.
pub const DAY_MINUTES: f64 = 1440.0;

/// A planar point in kilometres, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Position {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Position> for [f64; 2] {
    fn from(p: Position) -> Self {
        [p.x, p.y]
    }
}

/// A closed interval `[start, end]` in minutes since midnight, serialized as
/// `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Length of the intersection with `other`; negative when disjoint.
    pub fn overlap(&self, other: &TimeWindow) -> f64 {
        self.end.min(other.end) - self.start.max(other.start)
    }

    /// Whether the two windows share a stretch of positive length.
    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        self.overlap(other) > 0.0
    }

    pub fn is_valid(&self) -> bool {
        self.start.is_finite()
            && self.end.is_finite()
            && 0.0 <= self.start
            && self.start <= self.end
            && self.end <= DAY_MINUTES
    }
}

impl From<[f64; 2]> for TimeWindow {
    fn from([start, end]: [f64; 2]) -> Self {
        Self { start, end }
    }
}

impl From<TimeWindow> for [f64; 2] {
    fn from(w: TimeWindow) -> Self {
        [w.start, w.end]
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerLocation {
    pub position: Position,
    pub window: TimeWindow,
    /// Maximum walking distance (km) the customer accepts from this location.
    pub max_walk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: usize,
    pub demand: u32,
    pub locations: Vec<CustomerLocation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkingSpace {
    pub id: usize,
    pub position: Position,
    pub window: TimeWindow,
    /// Length of one service slot at this space, in minutes.
    pub service_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    pub max_lockers: usize,
    pub capacity: u32,
    /// Locker speed in km per minute.
    pub speed: f64,
    pub fixed_cost: f64,
    /// Cost per km travelled.
    pub unit_travel_cost: f64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            max_lockers: 20,
            capacity: 20,
            speed: 0.7,
            fixed_cost: 1.0,
            unit_travel_cost: 1.0,
        }
    }
}

/// Objective weights: `fleet` scales the fixed locker cost, `travel` the
/// distance cost. Serialized as `[fleet, travel]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Weights {
    pub fleet: f64,
    pub travel: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            fleet: 5.0,
            travel: 1.0,
        }
    }
}

impl From<[f64; 2]> for Weights {
    fn from([fleet, travel]: [f64; 2]) -> Self {
        Self { fleet, travel }
    }
}

impl From<Weights> for [f64; 2] {
    fn from(w: Weights) -> Self {
        [w.fleet, w.travel]
    }
}

/// Default minimum overlap (minutes) between a task slot and a customer window.
pub const DEFAULT_BUFFER_MIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub depot: Position,
    pub spaces: Vec<ParkingSpace>,
    pub customers: Vec<Customer>,
    pub fleet: FleetSpec,
    #[serde(rename = "buffer_min")]
    pub buffer: f64,
    pub weights: Weights,
    /// Free-form provenance, e.g. the generator configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl Instance {
    /// Looks up a parking space by its 1-based id.
    pub fn space(&self, id: usize) -> Option<&ParkingSpace> {
        id.checked_sub(1).and_then(|k| self.spaces.get(k))
    }

    /// Position of network node `node` (0 is the depot).
    pub fn node_position(&self, node: usize) -> Option<Position> {
        if node == 0 {
            Some(self.depot)
        } else {
            self.space(node).map(|s| s.position)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses an instance document. Unknown fields are ignored with a warning;
    /// malformed input reports the line, column and field path.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let parsed: std::result::Result<Instance, serde_path_to_error::Error<serde_json::Error>> =
            serde_path_to_error::deserialize(&mut de);
        let parse_error = |e: serde_json::Error, field: String| Error::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            field,
            message: e.to_string(),
        };
        let instance = parsed.map_err(|e| {
            let field = e.path().to_string();
            parse_error(e.into_inner(), field)
        })?;
        de.end().map_err(|e| parse_error(e, "<trailing>".into()))?;
        // Keys that do not survive a parse/serialise round trip were ignored.
        let input: serde_json::Value = serde_json::from_str(text)?;
        let kept = serde_json::to_value(&instance)?;
        let mut ignored = Vec::new();
        unknown_keys(&input, &kept, String::new(), &mut ignored);
        for path in ignored {
            log::warn!("{}: ignoring unknown field `{}`", origin.display(), path);
        }
        Ok(instance)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(self.to_json()?.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text, path)
    }
}

/// Collects dotted paths of object keys present in `input` but not in `kept`.
fn unknown_keys(input: &serde_json::Value, kept: &serde_json::Value, prefix: String, out: &mut Vec<String>) {
    use serde_json::Value;
    let join = |key: &str| if prefix.is_empty() { key.to_string() } else { format!("{prefix}.{key}") };
    match (input, kept) {
        (Value::Object(a), Value::Object(b)) => {
            for (key, value) in a {
                match b.get(key) {
                    Some(other) => unknown_keys(value, other, join(key), out),
                    None => out.push(join(key)),
                }
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                unknown_keys(x, y, format!("{prefix}[{i}]"), out);
            }
        }
        _ => {}
    }
}

/// Writes `instance` to `path` and reads it back.
pub fn roundtrip_instance(instance: &Instance, path: &Path) -> Result<Instance> {
    instance.save(path)?;
    Instance::load(path)
}

/// Parameters for synthetic instance generation. Defaults follow the
/// benchmark setting: 5 km service radius, 9:00-18:00 working hours, demand
/// 1-4, walking range 0.1-1 km, customer spans 30-90 min, parking spans
/// 30-70 min.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub num_spaces: usize,
    pub locations_per_space: usize,
    /// Radius (km) around the depot within which parking spaces are placed.
    pub service_radius: f64,
    pub locations_per_customer_range: [usize; 2],
    pub working_hours: TimeWindow,
    pub demand_range: [u32; 2],
    /// Walking speed (km/min). Kept for provenance; walks are not routed.
    pub walk_speed: f64,
    pub walk_range: [f64; 2],
    pub customer_span_range: [f64; 2],
    /// Range of the per-space service time `S_i` (minutes).
    pub parking_span_range: [f64; 2],
    pub seed: u64,
    pub fleet: FleetSpec,
    pub buffer_min: f64,
    pub weights: Weights,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_spaces: 5,
            locations_per_space: 5,
            service_radius: 5.0,
            locations_per_customer_range: [1, 4],
            working_hours: TimeWindow::new(540.0, 1080.0),
            demand_range: [1, 4],
            walk_speed: 0.08,
            walk_range: [0.1, 1.0],
            customer_span_range: [30.0, 90.0],
            parking_span_range: [30.0, 70.0],
            seed: 42,
            fleet: FleetSpec::default(),
            buffer_min: DEFAULT_BUFFER_MIN,
            weights: Weights::default(),
        }
    }
}

fn minute_bounds(range: [f64; 2]) -> Option<(i64, i64)> {
    let lo = range[0].ceil() as i64;
    let hi = range[1].floor() as i64;
    (range[0].is_finite() && range[1].is_finite() && lo <= hi && lo > 0).then_some((lo, hi))
}

impl GeneratorConfig {
    /// Reads a TOML table of generator settings; missing keys keep their
    /// defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.service_radius.is_finite() && self.service_radius >= 0.0) {
            return fail("service_radius must be finite and non-negative");
        }
        let [lmin, lmax] = self.locations_per_customer_range;
        if lmin == 0 || lmin > lmax {
            return fail("locations_per_customer_range must satisfy 1 <= min <= max");
        }
        if !self.working_hours.is_valid() || self.working_hours.is_empty() {
            return fail("working_hours must be a non-empty window inside the day");
        }
        let [dmin, dmax] = self.demand_range;
        if dmin == 0 || dmin > dmax {
            return fail("demand_range must satisfy 1 <= min <= max");
        }
        let [wmin, wmax] = self.walk_range;
        if !(wmin > 0.0 && wmin <= wmax && wmax.is_finite()) {
            return fail("walk_range must satisfy 0 < min <= max");
        }
        match minute_bounds(self.customer_span_range) {
            Some((_, hi)) if hi as f64 <= self.working_hours.len() => {}
            _ => return fail("customer_span_range must hold a positive whole minute no longer than working_hours"),
        }
        if minute_bounds(self.parking_span_range).is_none() {
            return fail("parking_span_range must hold a positive whole minute");
        }
        if !(self.walk_speed > 0.0) {
            return fail("walk_speed must be positive");
        }
        if self.fleet.max_lockers == 0 || self.fleet.capacity == 0 || !(self.fleet.speed > 0.0) {
            return fail("fleet needs at least one locker, positive capacity and positive speed");
        }
        if !(self.buffer_min >= 0.0) {
            return fail("buffer_min must be non-negative");
        }
        if !(self.weights.fleet > 0.0 && self.weights.travel > 0.0) {
            return fail("objective weights must be positive");
        }
        Ok(())
    }
}

/// Splits `spans` into disjoint windows inside `hours`, in chronological
/// order, dropping trailing spans that cannot fit.
fn place_disjoint(rng: &mut ChaCha8Rng, hours: TimeWindow, mut spans: Vec<i64>) -> Vec<TimeWindow> {
    let horizon = hours.len().floor() as i64;
    while spans.iter().sum::<i64>() > horizon {
        spans.pop();
    }
    let slack = horizon - spans.iter().sum::<i64>();
    let mut offsets: Vec<i64> = (0..spans.len()).map(|_| rng.random_range(0..=slack)).collect();
    offsets.sort_unstable();
    let mut consumed = 0;
    spans
        .iter()
        .zip(offsets)
        .map(|(&span, off)| {
            let start = hours.start + (off + consumed) as f64;
            consumed += span;
            TimeWindow::new(start, start + span as f64)
        })
        .collect()
}

/// Builds a synthetic instance. Identical configs give identical instances.
pub fn generate_instance(config: &GeneratorConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let depot = Position::ORIGIN;
    let (pmin, pmax) = minute_bounds(config.parking_span_range).expect("validated");
    let (cmin, cmax) = minute_bounds(config.customer_span_range).expect("validated");

    let mut spaces = Vec::with_capacity(config.num_spaces);
    for k in 0..config.num_spaces {
        let r = config.service_radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        spaces.push(ParkingSpace {
            id: k + 1,
            position: Position::new(depot.x + r * theta.cos(), depot.y + r * theta.sin()),
            window: config.working_hours,
            service_time: rng.random_range(pmin..=pmax) as f64,
        });
    }

    // Location points scattered around each space, inside their own walking range.
    let mut points = Vec::with_capacity(config.num_spaces * config.locations_per_space);
    for space in &spaces {
        for _ in 0..config.locations_per_space {
            let max_walk = rng.random_range(config.walk_range[0]..=config.walk_range[1]);
            let r = 0.99 * max_walk * rng.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            let position =
                Position::new(space.position.x + r * theta.cos(), space.position.y + r * theta.sin());
            points.push((position, max_walk));
        }
    }
    points.shuffle(&mut rng);

    let [lmin, lmax] = config.locations_per_customer_range;
    let mut customers = Vec::new();
    let mut rest = points.as_slice();
    while !rest.is_empty() {
        let take = rng.random_range(lmin..=lmax).min(rest.len());
        let (mine, tail) = rest.split_at(take);
        rest = tail;
        let spans: Vec<i64> = (0..take).map(|_| rng.random_range(cmin..=cmax)).collect();
        let windows = place_disjoint(&mut rng, config.working_hours, spans);
        let locations = mine
            .iter()
            .zip(windows)
            .map(|(&(position, max_walk), window)| CustomerLocation {
                position,
                window,
                max_walk,
            })
            .collect();
        customers.push(Customer {
            id: customers.len(),
            demand: rng.random_range(config.demand_range[0]..=config.demand_range[1]),
            locations,
        });
    }

    Ok(Instance {
        depot,
        spaces,
        customers,
        fleet: config.fleet.clone(),
        buffer: config.buffer_min,
        weights: config.weights,
        meta: Some(serde_json::json!({ "generator": config })),
    })
}

/// Where an assigned customer will be served.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignedLocation {
    pub space: usize,
    pub location: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pub assigned: BTreeMap<usize, AssignedLocation>,
    pub unassignable: Vec<usize>,
}

impl Assignment {
    pub fn get(&self, customer: usize) -> Option<&AssignedLocation> {
        self.assigned.get(&customer)
    }

    /// Writes `customer_id,space_id,location_index,distance_km` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["customer_id", "space_id", "location_index", "distance_km"])?;
        for (customer, a) in &self.assigned {
            w.write_record([
                customer.to_string(),
                a.space.to_string(),
                a.location.to_string(),
                a.distance.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Assigns each customer to the closest parking space reachable on foot from
/// any of its locations. The spaces act as fixed cluster centres. Ties go to
/// the lower space id, then the lower location index.
pub fn assign_customers(instance: &Instance) -> Assignment {
    let mut out = Assignment::default();
    for customer in &instance.customers {
        let mut best: Option<AssignedLocation> = None;
        for (k, loc) in customer.locations.iter().enumerate() {
            for space in &instance.spaces {
                let d = loc.position.distance(&space.position);
                if d > loc.max_walk {
                    continue;
                }
                if best.is_none_or(|b| d < b.distance) {
                    best = Some(AssignedLocation {
                        space: space.id,
                        location: k,
                        distance: d,
                    });
                }
            }
        }
        match best {
            Some(a) => {
                out.assigned.insert(customer.id, a);
            }
            None => out.unassignable.push(customer.id),
        }
    }
    out
}

/// One broken invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

/// Checks every type invariant; an empty list means the instance is well formed.
pub fn validate_instance(instance: &Instance) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut flag = |entity: String, rule: &str| {
        report.push(Violation {
            entity,
            rule: rule.to_string(),
        })
    };

    if !instance.depot.is_finite() {
        flag("depot".into(), "non-finite position");
    }
    for (k, space) in instance.spaces.iter().enumerate() {
        let name = format!("space {}", space.id);
        if space.id != k + 1 {
            flag(name.clone(), "space ids must run 1..I in order");
        }
        if !space.position.is_finite() {
            flag(name.clone(), "non-finite position");
        }
        if !space.window.is_valid() || space.window.is_empty() {
            flag(name.clone(), "invalid or empty parking window");
        }
        if !(space.service_time > 0.0) {
            flag(name, "non-positive service time");
        }
    }
    for (k, customer) in instance.customers.iter().enumerate() {
        let name = format!("customer {}", customer.id);
        if customer.id != k {
            flag(name.clone(), "customer ids must run 0..N in order");
        }
        if customer.demand < 1 {
            flag(name.clone(), "demand below 1");
        }
        if customer.locations.is_empty() {
            flag(name.clone(), "no locations");
        }
        for (j, loc) in customer.locations.iter().enumerate() {
            let lname = format!("customer {} location {}", customer.id, j);
            if !loc.position.is_finite() {
                flag(lname.clone(), "non-finite position");
            }
            if !loc.window.is_valid() {
                flag(lname.clone(), "invalid time window");
            }
            if !(loc.max_walk > 0.0) {
                flag(lname, "non-positive max walk");
            }
        }
        let overlapping = customer.locations.iter().enumerate().any(|(a, la)| {
            customer.locations[a + 1..]
                .iter()
                .any(|lb| la.window.overlaps(&lb.window))
        });
        if overlapping {
            flag(name, "customer windows overlap");
        }
    }
    let fleet = &instance.fleet;
    if fleet.max_lockers == 0 {
        flag("fleet".into(), "max_lockers must be at least 1");
    }
    if fleet.capacity == 0 {
        flag("fleet".into(), "non-positive capacity");
    }
    if !(fleet.speed > 0.0) {
        flag("fleet".into(), "non-positive speed");
    }
    if !(fleet.fixed_cost >= 0.0) {
        flag("fleet".into(), "negative fixed cost");
    }
    if !(fleet.unit_travel_cost >= 0.0) {
        flag("fleet".into(), "negative unit travel cost");
    }
    if !(instance.buffer >= 0.0) {
        flag("instance".into(), "negative buffer");
    }
    if !(instance.weights.fleet > 0.0 && instance.weights.travel > 0.0) {
        flag("weights".into(), "weights must be strictly positive");
    }
    report
}
