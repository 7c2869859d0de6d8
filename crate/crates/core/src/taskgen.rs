//! Task pooling.
//!
//! Each parking space's availability is first tightened to the span covered
//! by its assigned customers, then cut into consecutive slots of length
//! `service_time`. Every customer joins the earliest slot that overlaps its
//! window by at least the instance buffer; the customers sharing a slot form
//! one task.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::{Assignment, Instance, TimeWindow};

/// The `index`-th (1-based) service slot of a parking space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubInterval {
    pub space: usize,
    pub index: usize,
    pub window: TimeWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub customer: usize,
    /// Earliest moment the customer can collect inside the task window.
    pub earliest_pickup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub space: usize,
    /// 1-based slot index within the space.
    pub slot: usize,
    pub demand: u32,
    pub window: TimeWindow,
    pub members: Vec<Member>,
}

impl Task {
    /// Earliest pickup over all members; the slot start when there are none.
    pub fn earliest_pickup(&self) -> f64 {
        self.members
            .iter()
            .map(|m| m.earliest_pickup)
            .reduce(f64::min)
            .unwrap_or(self.window.start)
            .max(self.window.start)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskPool {
    pub tasks: Vec<Task>,
    /// customer id -> task id
    pub membership: BTreeMap<usize, usize>,
    /// Assigned customers without a slot overlapping them by the buffer.
    pub unservable: Vec<usize>,
    /// Customers out of walking range of every space.
    pub unassignable: Vec<usize>,
}

impl TaskPool {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn total_demand(&self) -> u64 {
        self.tasks.iter().map(|t| t.demand as u64).sum()
    }

    /// Writes `task_id,space_id,a,e_min,l_min,q,member_customer_ids` rows;
    /// member ids are `;`-separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task_id", "space_id", "a", "e_min", "l_min", "q", "member_customer_ids"])?;
        for t in &self.tasks {
            let members: Vec<String> = t.members.iter().map(|m| m.customer.to_string()).collect();
            w.write_record([
                t.id.to_string(),
                t.space.to_string(),
                t.slot.to_string(),
                t.window.start.to_string(),
                t.window.end.to_string(),
                t.demand.to_string(),
                members.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tightens a space's availability to the span of the windows assigned to it:
/// `[max(E_i, min start), min(L_i, max end)]`. `None` when no windows are
/// given or the result is empty.
pub fn reduce_availability(space_window: TimeWindow, windows: &[TimeWindow]) -> Option<TimeWindow> {
    let earliest = windows.iter().map(|w| w.start).reduce(f64::min)?;
    let latest = windows.iter().map(|w| w.end).reduce(f64::max)?;
    let reduced = TimeWindow::new(space_window.start.max(earliest), space_window.end.min(latest));
    (!reduced.is_empty()).then_some(reduced)
}

/// Cuts `avail` into `floor(len / service_time)` back-to-back slots; any
/// shorter remainder at the end is dropped.
pub fn partition_subintervals(space: usize, avail: TimeWindow, service_time: f64) -> Vec<SubInterval> {
    if !(service_time > 0.0) || avail.is_empty() {
        return Vec::new();
    }
    // tolerate rounding noise on exact multiples
    let count = (avail.len() / service_time + 1e-9).floor() as usize;
    (0..count)
        .map(|k| {
            let start = avail.start + k as f64 * service_time;
            SubInterval {
                space,
                index: k + 1,
                window: TimeWindow::new(start, start + service_time),
            }
        })
        .collect()
}

/// Builds the task pool from an instance and its customer assignment.
pub fn build_tasks(instance: &Instance, assignment: &Assignment) -> TaskPool {
    let mut pool = TaskPool {
        unassignable: assignment.unassignable.clone(),
        ..TaskPool::default()
    };

    // customers per space, in customer id order
    let mut by_space: BTreeMap<usize, Vec<(usize, TimeWindow)>> = BTreeMap::new();
    for (&customer, loc) in &assignment.assigned {
        let Some(c) = instance.customers.get(customer) else {
            continue;
        };
        let Some(l) = c.locations.get(loc.location) else {
            continue;
        };
        by_space.entry(loc.space).or_default().push((customer, l.window));
    }

    for space in &instance.spaces {
        let Some(members) = by_space.get(&space.id) else {
            continue;
        };
        let windows: Vec<TimeWindow> = members.iter().map(|&(_, w)| w).collect();
        let slots = match reduce_availability(space.window, &windows) {
            Some(avail) => partition_subintervals(space.id, avail, space.service_time),
            None => Vec::new(),
        };

        let mut grouped: BTreeMap<usize, Vec<Member>> = BTreeMap::new();
        for &(customer, window) in members {
            let slot = slots
                .iter()
                .position(|s| s.window.overlap(&window) >= instance.buffer && s.window.overlaps(&window));
            match slot {
                Some(k) => grouped.entry(k).or_default().push(Member {
                    customer,
                    earliest_pickup: window.start.max(slots[k].window.start),
                }),
                None => pool.unservable.push(customer),
            }
        }

        for (k, members) in grouped {
            let id = pool.tasks.len();
            let demand = members
                .iter()
                .map(|m| instance.customers[m.customer].demand)
                .sum();
            for m in &members {
                pool.membership.insert(m.customer, id);
            }
            pool.tasks.push(Task {
                id,
                space: space.id,
                slot: slots[k].index,
                demand,
                window: slots[k].window,
                members,
            });
        }
    }
    pool.unservable.sort_unstable();
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{
        assign_customers, generate_instance, AssignedLocation, Customer, CustomerLocation, FleetSpec,
        GeneratorConfig, ParkingSpace, Position, Weights,
    };

    fn tw(a: f64, b: f64) -> TimeWindow {
        TimeWindow::new(a, b)
    }

    #[test]
    fn reduce_examples() {
        assert_eq!(
            reduce_availability(tw(600.0, 960.0), &[tw(620.0, 680.0), tw(840.0, 900.0)]),
            Some(tw(620.0, 900.0))
        );
        assert_eq!(reduce_availability(tw(600.0, 960.0), &[tw(600.0, 960.0)]), Some(tw(600.0, 960.0)));
        assert_eq!(reduce_availability(tw(600.0, 700.0), &[tw(800.0, 900.0)]), None);
        assert_eq!(reduce_availability(tw(600.0, 700.0), &[]), None);
    }

    #[test]
    fn partition_examples() {
        let exact = partition_subintervals(1, tw(0.0, 60.0), 20.0);
        let windows: Vec<_> = exact.iter().map(|s| s.window).collect();
        assert_eq!(windows, vec![tw(0.0, 20.0), tw(20.0, 40.0), tw(40.0, 60.0)]);

        let floored = partition_subintervals(1, tw(600.0, 900.0), 70.0);
        let windows: Vec<_> = floored.iter().map(|s| s.window).collect();
        assert_eq!(
            windows,
            vec![tw(600.0, 670.0), tw(670.0, 740.0), tw(740.0, 810.0), tw(810.0, 880.0)]
        );
        assert_eq!(floored.iter().map(|s| s.index).collect::<Vec<_>>(), vec![1, 2, 3, 4]);

        assert!(partition_subintervals(1, tw(0.0, 15.0), 20.0).is_empty());
    }

    fn one_space_instance(windows: &[(f64, f64, u32)], service: f64) -> (Instance, Assignment) {
        let customers: Vec<Customer> = windows
            .iter()
            .enumerate()
            .map(|(id, &(a, b, q))| Customer {
                id,
                demand: q,
                locations: vec![CustomerLocation {
                    position: Position::new(0.0, 0.0),
                    window: tw(a, b),
                    max_walk: 1.0,
                }],
            })
            .collect();
        let mut assignment = Assignment::default();
        for c in &customers {
            assignment.assigned.insert(
                c.id,
                AssignedLocation {
                    space: 1,
                    location: 0,
                    distance: 0.0,
                },
            );
        }
        let inst = Instance {
            depot: Position::ORIGIN,
            spaces: vec![ParkingSpace {
                id: 1,
                position: Position::new(1.0, 0.0),
                window: tw(600.0, 720.0),
                service_time: service,
            }],
            customers,
            fleet: FleetSpec::default(),
            buffer: 10.0,
            weights: Weights::default(),
            meta: None,
        };
        (inst, assignment)
    }

    #[test]
    fn single_customer_task() {
        // availability reduces to [620,680]; one 60-min slot [620,680]
        let (inst, asg) = one_space_instance(&[(620.0, 680.0, 3)], 60.0);
        let pool = build_tasks(&inst, &asg);
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.tasks[0].demand, 3);
        assert_eq!(pool.tasks[0].slot, 1);
    }

    #[test]
    fn earliest_slot_with_buffer_overlap() {
        // Two customers widen availability to [600,720] -> slots [600,660], [660,720].
        // Customer 0 [620,680] overlaps slot 1 by 40 >= 10.
        let (inst, asg) = one_space_instance(&[(620.0, 680.0, 3), (600.0, 720.0, 1)], 60.0);
        let pool = build_tasks(&inst, &asg);
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.tasks[0].window, tw(600.0, 660.0));
        assert_eq!(pool.tasks[0].demand, 4);
        assert_eq!(pool.tasks[0].members[0].earliest_pickup, 620.0);
    }

    #[test]
    fn shared_slot_sums_demand() {
        let (inst, asg) = one_space_instance(&[(600.0, 660.0, 2), (610.0, 660.0, 3)], 60.0);
        let pool = build_tasks(&inst, &asg);
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.tasks[0].demand, 5);
    }

    #[test]
    fn short_window_is_unservable() {
        let (inst, asg) = one_space_instance(&[(600.0, 605.0, 2), (600.0, 720.0, 1)], 60.0);
        let pool = build_tasks(&inst, &asg);
        assert_eq!(pool.unservable, vec![0]);
        assert_eq!(pool.total_demand(), 1);
    }

    #[test]
    fn generated_pool_conserves_demand() {
        let inst = generate_instance(&GeneratorConfig {
            num_spaces: 6,
            locations_per_space: 10,
            seed: 9,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let asg = assign_customers(&inst);
        let pool = build_tasks(&inst, &asg);
        let served: u64 = pool
            .membership
            .keys()
            .map(|&c| inst.customers[c].demand as u64)
            .sum();
        assert_eq!(served, pool.total_demand());
        assert_eq!(pool.membership.len() + pool.unservable.len(), asg.assigned.len());
        for t in &pool.tasks {
            let s = inst.space(t.space).unwrap();
            assert!((t.window.len() - s.service_time).abs() < 1e-9);
            assert_eq!(pool.tasks[t.id].id, t.id);
        }
        assert_eq!(build_tasks(&inst, &asg), pool);
    }
}
