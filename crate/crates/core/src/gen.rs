//! Seeded random instance generation, plus a small fixed instance handy for
//! tests and documentation examples.
//!
//! Sampling recipe: train priorities uniform in (0, 1]; loading, unloading,
//! dwelling and safety times uniform in [0, 4) hours; freight due dates fixed
//! at 10 hours; release dates uniform in [0, 5); minimum run times uniform in
//! [0.5, 4); freight weights uniform in [10, 50) tonnes and train capacities
//! uniform in [60, 120) tonnes. Everything is drawn from a counter-based
//! stream cipher RNG, so a seed pins the instance bit for bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Corridor, Direction, Freight, Instance, Train};

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Uniform in (0, 1]: flips the half-open unit sample so zero is excluded.
fn positive_unit(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

fn sample_train(rng: &mut ChaCha8Rng, id: String, direction: Direction, n: usize) -> Train {
    Train {
        id,
        direction,
        priority: positive_unit(rng),
        capacity: uniform(rng, 60.0, 120.0),
        min_run: (0..n).map(|_| uniform(rng, 0.5, 4.0)).collect(),
        load: (0..=n).map(|_| uniform(rng, 0.0, 4.0)).collect(),
        unload: (0..=n).map(|_| uniform(rng, 0.0, 4.0)).collect(),
        dwell: (0..=n).map(|_| uniform(rng, 0.0, 4.0)).collect(),
    }
}

/// Generates a random instance. Deterministic per seed; the output always
/// satisfies [`crate::model::validate_instance`]. When there is no departing
/// train to carry anything, the freight count is forced to zero.
pub fn generate(
    n_segments: usize,
    n_departing: usize,
    n_returning: usize,
    n_freights: usize,
    seed: u64,
) -> Instance {
    let n = n_segments.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trains = Vec::with_capacity(n_departing + n_returning);
    for i in 0..n_departing {
        trains.push(sample_train(
            &mut rng,
            format!("t{}", i + 1),
            Direction::Departing,
            n,
        ));
    }
    for i in 0..n_returning {
        trains.push(sample_train(
            &mut rng,
            format!("r{}", i + 1),
            Direction::Returning,
            n,
        ));
    }
    let safety: Vec<f64> = (0..n).map(|_| uniform(&mut rng, 0.0, 4.0)).collect();
    let n_freights = if n_departing == 0 { 0 } else { n_freights };
    let freights: Vec<Freight> = (0..n_freights)
        .map(|i| Freight {
            id: format!("j{}", i + 1),
            priority: positive_unit(&mut rng),
            weight: uniform(&mut rng, 10.0, 50.0),
            due: 10.0,
            release: uniform(&mut rng, 0.0, 5.0),
        })
        .collect();
    let mut inst = Instance {
        corridor: Corridor::new(n),
        safety,
        big_m: 1.0,
        capacity_floor: 0.6,
        trains,
        freights,
    };
    inst.big_m = (10.0 * inst.horizon_estimate()).max(1.0);
    inst
}

/// A small fixed instance: three segments, three departing and two returning
/// trains, five consignments. Values are at half-hour granularity so worked
/// examples stay readable.
pub fn desk_instance() -> Instance {
    let station = |a: f64, b: f64, c: f64, d: f64| vec![a, b, c, d];
    let train = |id: &str,
                 direction: Direction,
                 priority: f64,
                 capacity: f64,
                 min_run: Vec<f64>,
                 load: Vec<f64>,
                 unload: Vec<f64>,
                 dwell: Vec<f64>| Train {
        id: id.into(),
        direction,
        priority,
        capacity,
        min_run,
        load,
        unload,
        dwell,
    };
    let mut inst = Instance {
        corridor: Corridor::new(3),
        safety: vec![1.0, 0.5, 1.0],
        big_m: 1.0,
        capacity_floor: 0.6,
        trains: vec![
            train(
                "t1",
                Direction::Departing,
                1.0,
                100.0,
                vec![2.0, 3.0, 2.0],
                station(1.0, 1.0, 0.0, 0.0),
                station(0.0, 1.0, 0.5, 0.5),
                station(0.0, 1.0, 0.0, 0.0),
            ),
            train(
                "t2",
                Direction::Departing,
                0.8,
                80.0,
                vec![1.5, 2.0, 2.5],
                station(0.5, 0.5, 0.5, 0.0),
                station(0.0, 0.5, 0.5, 0.5),
                station(0.0, 0.0, 0.5, 0.0),
            ),
            train(
                "t3",
                Direction::Departing,
                0.6,
                90.0,
                vec![2.5, 2.0, 2.0],
                station(1.0, 0.0, 0.5, 0.0),
                station(0.0, 0.5, 0.0, 0.5),
                station(0.5, 0.5, 0.0, 0.0),
            ),
            train(
                "r1",
                Direction::Returning,
                0.7,
                70.0,
                vec![2.0, 2.5, 2.0],
                station(0.0, 0.5, 0.5, 1.0),
                station(0.5, 0.5, 0.0, 0.0),
                station(0.0, 0.5, 0.5, 0.0),
            ),
            train(
                "r2",
                Direction::Returning,
                0.5,
                60.0,
                vec![1.5, 2.0, 1.5],
                station(0.0, 0.0, 1.0, 0.5),
                station(0.5, 0.0, 0.5, 0.0),
                station(0.0, 0.5, 0.0, 0.5),
            ),
        ],
        freights: vec![
            Freight {
                id: "j1".into(),
                priority: 1.0,
                weight: 30.0,
                due: 10.0,
                release: 0.5,
            },
            Freight {
                id: "j2".into(),
                priority: 2.0,
                weight: 25.0,
                due: 10.0,
                release: 1.0,
            },
            Freight {
                id: "j3".into(),
                priority: 1.5,
                weight: 20.0,
                due: 10.0,
                release: 0.0,
            },
            Freight {
                id: "j4".into(),
                priority: 1.0,
                weight: 35.0,
                due: 10.0,
                release: 2.0,
            },
            Freight {
                id: "j5".into(),
                priority: 0.5,
                weight: 40.0,
                due: 10.0,
                release: 4.5,
            },
        ],
    };
    inst.big_m = 10.0 * inst.horizon_estimate();
    inst
}
