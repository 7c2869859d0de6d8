#![allow(dead_code)]

use mplq::instance::{FleetSpec, ParkingSpace, Weights};
use mplq::taskgen::{Member, Task};
use mplq::{Instance, Position, TaskPool, TimeWindow};

/// One task per point, each at its own parking space, all sharing `window`.
pub fn point_tasks(
    points: &[(f64, f64)],
    window: (f64, f64),
    service: f64,
    demand: u32,
    max_lockers: usize,
) -> (Instance, TaskPool) {
    let instance = Instance {
        depot: Position::ORIGIN,
        spaces: points
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| ParkingSpace {
                id: k + 1,
                position: Position::new(x, y),
                window: TimeWindow::new(0.0, 1440.0),
                service_time: service,
            })
            .collect(),
        customers: vec![],
        fleet: FleetSpec {
            max_lockers,
            ..FleetSpec::default()
        },
        buffer: 10.0,
        weights: Weights::default(),
        meta: None,
    };
    let pool = TaskPool {
        tasks: (0..points.len())
            .map(|id| Task {
                id,
                space: id + 1,
                slot: 1,
                demand,
                window: TimeWindow::new(window.0, window.1),
                members: vec![Member {
                    customer: id,
                    earliest_pickup: window.0,
                }],
            })
            .collect(),
        ..TaskPool::default()
    };
    (instance, pool)
}

/// The three collinear tasks at 1, 2 and 3 km east of the depot.
pub fn collinear_three() -> (Instance, TaskPool) {
    point_tasks(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], (540.0, 1080.0), 30.0, 1, 2)
}
