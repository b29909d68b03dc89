//! Freight-allocation semantics: which consignment rides which departing
//! train, the tardiness each assignment incurs, the allocation objective, and
//! the feasibility rules (capacity window, single assignment, release dates).

use serde_json::{json, Map, Value};
use std::fmt;

use crate::model::{Direction, Instance, Schedule};
use crate::{Error, Result, TIME_EPS};

/// An assignment of freight to trains. `assign[j]` is the carrying train of
/// freight `j` (at most one, by construction), `relax[t]` marks trains whose
/// capacity floor could not be met, and `wr`/`tardi` are the derived arrival
/// time and tardiness per assigned freight (absent for unassigned freight).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub assign: Vec<Option<usize>>,
    pub relax: Vec<bool>,
    pub wr: Vec<Option<f64>>,
    pub tardi: Vec<Option<f64>>,
}

impl Allocation {
    /// An empty allocation for `freights` consignments and `trains` trains.
    pub fn unassigned(freights: usize, trains: usize) -> Self {
        Allocation {
            assign: vec![None; freights],
            relax: vec![false; trains],
            wr: vec![None; freights],
            tardi: vec![None; freights],
        }
    }

    pub fn from_assignment(assign: Vec<Option<usize>>, trains: usize) -> Self {
        let freights = assign.len();
        Allocation {
            assign,
            relax: vec![false; trains],
            wr: vec![None; freights],
            tardi: vec![None; freights],
        }
    }

    /// The 0/1 assignment matrix, trains as rows and freight as columns.
    pub fn matrix(&self, trains: usize) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.assign.len()]; trains];
        for (j, &a) in self.assign.iter().enumerate() {
            if let Some(t) = a {
                if t < trains {
                    m[t][j] = 1;
                }
            }
        }
        m
    }

    /// Serializes to the allocation document format, keyed by external ids.
    pub fn to_json(&self, inst: &Instance) -> Value {
        let mut assign = Map::new();
        let mut wr = Map::new();
        let mut tardi = Map::new();
        for (j, fr) in inst.freights.iter().enumerate() {
            let train = self.assign[j].map(|t| inst.trains[t].id.clone());
            assign.insert(fr.id.clone(), train.map_or(Value::Null, Value::String));
            if let Some(v) = self.wr[j] {
                wr.insert(fr.id.clone(), json!(v));
            }
            if let Some(v) = self.tardi[j] {
                tardi.insert(fr.id.clone(), json!(v));
            }
        }
        let mut relax = Map::new();
        for (t, tr) in inst.trains.iter().enumerate() {
            if tr.direction == Direction::Departing {
                relax.insert(tr.id.clone(), json!(self.relax[t]));
            }
        }
        json!({ "assign": assign, "relax": relax, "wr": wr, "tardi": tardi })
    }

    /// Parses the allocation document format against an instance.
    pub fn from_json(inst: &Instance, value: &Value) -> Result<Self> {
        let mut alloc = Allocation::unassigned(inst.freights.len(), inst.trains.len());
        let assign = value
            .get("assign")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::InvalidArgument("allocation document lacks \"assign\"".into()))?;
        for (fid, tid) in assign {
            let j = inst
                .freight_index(fid)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown freight id {fid:?}")))?;
            alloc.assign[j] = match tid {
                Value::Null => None,
                Value::String(id) => Some(inst.train_index(id).ok_or_else(|| {
                    Error::InvalidArgument(format!("unknown train id {id:?}"))
                })?),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "assignment for {fid:?} must be a train id or null, found {other}"
                    )))
                }
            };
        }
        if let Some(relax) = value.get("relax").and_then(Value::as_object) {
            for (tid, flag) in relax {
                let t = inst
                    .train_index(tid)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown train id {tid:?}")))?;
                alloc.relax[t] = flag.as_bool().unwrap_or(false);
            }
        }
        for (key, store) in [("wr", 0usize), ("tardi", 1usize)] {
            if let Some(map) = value.get(key).and_then(Value::as_object) {
                for (fid, v) in map {
                    let j = inst.freight_index(fid).ok_or_else(|| {
                        Error::InvalidArgument(format!("unknown freight id {fid:?}"))
                    })?;
                    let v = v.as_f64().ok_or_else(|| {
                        Error::InvalidArgument(format!("{key} for {fid:?} must be a number"))
                    })?;
                    if store == 0 {
                        alloc.wr[j] = Some(v);
                    } else {
                        alloc.tardi[j] = Some(v);
                    }
                }
            }
        }
        Ok(alloc)
    }
}

/// Signed tardiness: arrival time minus due date. Early arrivals come out
/// negative; use [`tardiness_clamped`] to floor them at zero.
pub fn tardiness(wr: f64, due: f64) -> f64 {
    wr - due
}

/// Tardiness floored at zero for settings where earliness earns no credit.
pub fn tardiness_clamped(wr: f64, due: f64) -> f64 {
    (wr - due).max(0.0)
}

/// The allocation objective: total priority-weighted tardiness of assigned
/// freight, minus the total priority of assigned freight (the reward for
/// allocating at all). Unassigned freight contributes to neither term.
pub fn allocation_objective(inst: &Instance, alloc: &Allocation) -> f64 {
    let mut total = 0.0;
    for (j, fr) in inst.freights.iter().enumerate() {
        if alloc.assign[j].is_some() {
            debug_assert!(alloc.tardi[j].is_some(), "objective needs derived tardiness");
            total += fr.priority * (alloc.tardi[j].unwrap_or(0.0) - 1.0);
        }
    }
    total
}

/// One broken allocation rule.
#[derive(Debug, Clone, PartialEq)]
pub enum AllocationViolation {
    CapacityFloor {
        train: usize,
        assigned: f64,
        required: f64,
    },
    CapacityExceeded {
        train: usize,
        assigned: f64,
        capacity: f64,
    },
    Release {
        freight: usize,
        train: usize,
        departure: f64,
        earliest: f64,
    },
    ArrivalMismatch {
        freight: usize,
        wr: Option<f64>,
        expected: f64,
    },
    TardinessMismatch {
        freight: usize,
        tardi: Option<f64>,
        expected: f64,
    },
    NotDeparting {
        freight: usize,
        train: usize,
    },
    UnknownTrain {
        freight: usize,
        train: usize,
    },
    SpuriousArrival {
        freight: usize,
    },
}

impl fmt::Display for AllocationViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AllocationViolation::CapacityFloor {
                train,
                assigned,
                required,
            } => write!(
                f,
                "capacity-floor: train #{train} carries {assigned:.2} t, floor is {required:.2} t"
            ),
            AllocationViolation::CapacityExceeded {
                train,
                assigned,
                capacity,
            } => write!(
                f,
                "capacity: train #{train} carries {assigned:.2} t over capacity {capacity:.2} t"
            ),
            AllocationViolation::Release {
                freight,
                train,
                departure,
                earliest,
            } => write!(
                f,
                "release: freight #{freight} on train #{train} departing {departure:.2} \
                 before earliest {earliest:.2}"
            ),
            AllocationViolation::ArrivalMismatch {
                freight,
                wr,
                expected,
            } => write!(
                f,
                "arrival: freight #{freight} records {wr:?}, schedule says {expected:.2}"
            ),
            AllocationViolation::TardinessMismatch {
                freight,
                tardi,
                expected,
            } => write!(
                f,
                "tardiness: freight #{freight} records {tardi:?}, expected {expected:.2}"
            ),
            AllocationViolation::NotDeparting { freight, train } => {
                write!(f, "freight #{freight} assigned to non-departing train #{train}")
            }
            AllocationViolation::UnknownTrain { freight, train } => {
                write!(f, "freight #{freight} assigned to unknown train #{train}")
            }
            AllocationViolation::SpuriousArrival { freight } => {
                write!(f, "unassigned freight #{freight} carries an arrival time")
            }
        }
    }
}

/// Checks an allocation against the instance and schedule: capacity window
/// per train (floor waived where `relax` is set), arrival/tardiness
/// consistency, and release-date feasibility. Violations are data; an empty
/// list means the allocation is accepted.
pub fn check_allocation(
    inst: &Instance,
    sched: &Schedule,
    alloc: &Allocation,
) -> Result<Vec<AllocationViolation>> {
    if alloc.assign.len() != inst.freights.len() {
        return Err(Error::InvalidArgument(format!(
            "allocation covers {} freights, instance has {}",
            alloc.assign.len(),
            inst.freights.len()
        )));
    }
    if alloc.relax.len() != inst.trains.len() {
        return Err(Error::InvalidArgument(format!(
            "allocation relax flags cover {} trains, instance has {}",
            alloc.relax.len(),
            inst.trains.len()
        )));
    }
    let mut violations = Vec::new();
    let mut load = vec![0.0f64; inst.trains.len()];
    for (j, fr) in inst.freights.iter().enumerate() {
        let Some(t) = alloc.assign[j] else {
            if alloc.wr[j].is_some() || alloc.tardi[j].is_some() {
                violations.push(AllocationViolation::SpuriousArrival { freight: j });
            }
            continue;
        };
        if t >= inst.trains.len() {
            violations.push(AllocationViolation::UnknownTrain { freight: j, train: t });
            continue;
        }
        if inst.trains[t].direction != Direction::Departing {
            violations.push(AllocationViolation::NotDeparting { freight: j, train: t });
            continue;
        }
        load[t] += fr.weight;
        let earliest = fr.release + inst.trains[t].load[0];
        let departure = sched.first_departure(t);
        if departure + TIME_EPS < earliest {
            violations.push(AllocationViolation::Release {
                freight: j,
                train: t,
                departure,
                earliest,
            });
        }
        let expected = sched.final_arrival(t);
        match alloc.wr[j] {
            Some(wr) if (wr - expected).abs() <= TIME_EPS => {}
            other => violations.push(AllocationViolation::ArrivalMismatch {
                freight: j,
                wr: other,
                expected,
            }),
        }
        let expected_tardi = tardiness(expected, fr.due);
        match alloc.tardi[j] {
            Some(td) if (td - expected_tardi).abs() <= TIME_EPS => {}
            other => violations.push(AllocationViolation::TardinessMismatch {
                freight: j,
                tardi: other,
                expected: expected_tardi,
            }),
        }
    }
    for (t, tr) in inst.trains.iter().enumerate() {
        if tr.direction != Direction::Departing {
            continue;
        }
        if load[t] > tr.capacity + TIME_EPS {
            violations.push(AllocationViolation::CapacityExceeded {
                train: t,
                assigned: load[t],
                capacity: tr.capacity,
            });
        }
        let required = inst.capacity_floor * tr.capacity;
        if !alloc.relax[t] && load[t] + TIME_EPS < required {
            violations.push(AllocationViolation::CapacityFloor {
                train: t,
                assigned: load[t],
                required,
            });
        }
    }
    Ok(violations)
}

/// Fills in `wr` and `tardi` from the carrying train's final arrival.
/// Unassigned freight stays absent. An assignment pointing at a train the
/// schedule does not cover is a structural error.
pub fn derive_arrivals(inst: &Instance, sched: &Schedule, alloc: &Allocation) -> Result<Allocation> {
    let mut out = alloc.clone();
    for (j, fr) in inst.freights.iter().enumerate() {
        match alloc.assign[j] {
            Some(t) if t < sched.arr.len() && !sched.arr[t].is_empty() => {
                let wr = sched.final_arrival(t);
                out.wr[j] = Some(wr);
                out.tardi[j] = Some(tardiness(wr, fr.due));
            }
            Some(t) => {
                return Err(Error::InvalidArgument(format!(
                    "freight {} assigned to train #{t} absent from the schedule",
                    fr.id
                )))
            }
            None => {
                out.wr[j] = None;
                out.tardi[j] = None;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Corridor, Freight, Train};

    fn freight(id: &str, priority: f64, weight: f64, due: f64, release: f64) -> Freight {
        Freight {
            id: id.into(),
            priority,
            weight,
            due,
            release,
        }
    }

    fn small_instance() -> Instance {
        let train = |id: &str, capacity: f64| Train {
            id: id.into(),
            direction: Direction::Departing,
            priority: 1.0,
            capacity,
            min_run: vec![2.0],
            load: vec![1.0, 0.0],
            unload: vec![0.0, 0.0],
            dwell: vec![0.0, 0.0],
        };
        Instance {
            corridor: Corridor::new(1),
            safety: vec![0.5],
            big_m: 1e6,
            capacity_floor: 0.6,
            trains: vec![train("t1", 100.0), train("t2", 80.0)],
            freights: vec![
                freight("j1", 1.0, 70.0, 10.0, 0.0),
                freight("j2", 2.0, 50.0, 10.0, 0.0),
            ],
        }
    }

    fn schedule(deps: &[f64], arrs: &[f64]) -> Schedule {
        Schedule {
            dep: deps.iter().map(|&d| vec![d]).collect(),
            arr: arrs.iter().map(|&a| vec![a]).collect(),
            objective: 0.0,
        }
    }

    #[test]
    fn tardiness_is_signed_arrival_minus_due() {
        assert_eq!(tardiness(18.5, 10.0), 8.5);
        assert_eq!(tardiness(12.0, 10.0), 2.0);
        assert_eq!(tardiness(10.0, 10.0), 0.0);
        assert_eq!(tardiness(23.5, 10.0), 13.5);
        assert_eq!(tardiness(8.0, 10.0), -2.0);
        assert_eq!(tardiness_clamped(8.0, 10.0), 0.0);
        assert_eq!(tardiness_clamped(12.0, 10.0), 2.0);
    }

    #[test]
    fn objective_rewards_assignment_and_charges_tardiness() {
        let mut inst = small_instance();
        inst.freights = vec![freight("j1", 1.0, 50.0, 10.0, 0.0)];
        let mut alloc = Allocation::unassigned(1, 2);
        assert_eq!(allocation_objective(&inst, &alloc), 0.0);
        alloc.assign[0] = Some(0);
        alloc.tardi[0] = Some(2.0);
        assert_eq!(allocation_objective(&inst, &alloc), 1.0);

        let mut inst2 = small_instance();
        inst2.freights = vec![
            freight("j1", 1.0, 30.0, 10.0, 0.0),
            freight("j2", 2.0, 30.0, 10.0, 0.0),
        ];
        let mut alloc2 = Allocation::unassigned(2, 2);
        alloc2.assign = vec![Some(0), Some(0)];
        alloc2.tardi = vec![Some(8.5), Some(2.0)];
        assert!((allocation_objective(&inst2, &alloc2) - 9.5).abs() < 1e-12);
    }

    #[test]
    fn capacity_window_is_checked_per_train() {
        let inst = small_instance();
        let sched = schedule(&[1.0, 1.5], &[12.0, 13.0]);
        let mut alloc = Allocation::from_assignment(vec![Some(0), Some(0)], 2);
        alloc.relax[1] = true; // t2 carries nothing
        let derived = derive_arrivals(&inst, &sched, &alloc).unwrap();
        // 70 + 50 = 120 t on a 100 t train.
        let violations = check_allocation(&inst, &sched, &derived).unwrap();
        assert!(violations
            .iter()
            .any(|v| matches!(v, AllocationViolation::CapacityExceeded { train: 0, .. })));

        let mut alloc = Allocation::from_assignment(vec![Some(0), None], 2);
        alloc.relax[1] = true;
        let derived = derive_arrivals(&inst, &sched, &alloc).unwrap();
        // 70 t on 100 t capacity sits above the 60 t floor.
        assert_eq!(check_allocation(&inst, &sched, &derived).unwrap(), vec![]);

        let mut alloc = Allocation::from_assignment(vec![None, Some(0)], 2);
        alloc.relax[1] = true;
        let derived = derive_arrivals(&inst, &sched, &alloc).unwrap();
        // 50 t is short of the 60 t floor while t1 is not relaxed.
        let violations = check_allocation(&inst, &sched, &derived).unwrap();
        assert!(violations
            .iter()
            .any(|v| matches!(v, AllocationViolation::CapacityFloor { train: 0, .. })));
    }

    #[test]
    fn release_dates_bound_first_departures() {
        let mut inst = small_instance();
        inst.freights = vec![freight("j1", 1.0, 70.0, 10.0, 5.0)];
        // Loading takes 1 h, so the carrying train may not leave before 6.
        let sched = schedule(&[4.0, 6.0], &[12.0, 13.0]);
        let mut alloc = Allocation::from_assignment(vec![Some(0)], 2);
        alloc.relax[1] = true;
        let derived = derive_arrivals(&inst, &sched, &alloc).unwrap();
        let violations = check_allocation(&inst, &sched, &derived).unwrap();
        assert!(violations
            .iter()
            .any(|v| matches!(v, AllocationViolation::Release { freight: 0, .. })));
    }

    #[test]
    fn derive_fills_arrivals_from_carrying_train() {
        let mut inst = small_instance();
        inst.freights = vec![
            freight("j1", 1.0, 20.0, 10.0, 0.0),
            freight("j2", 1.0, 20.0, 10.0, 0.0),
            freight("j3", 1.0, 20.0, 10.0, 0.0),
            freight("j4", 1.0, 20.0, 10.0, 0.0),
        ];
        let sched = schedule(&[1.0, 2.0], &[12.0, 18.5]);
        let alloc =
            Allocation::from_assignment(vec![Some(0), Some(1), Some(1), Some(1)], 2);
        let derived = derive_arrivals(&inst, &sched, &alloc).unwrap();
        assert_eq!(derived.wr[0], Some(12.0));
        assert_eq!(derived.tardi[0], Some(2.0));
        // Freight sharing one train shares its arrival.
        assert_eq!(derived.wr[1], Some(18.5));
        assert_eq!(derived.wr[2], Some(18.5));
        assert_eq!(derived.wr[3], Some(18.5));
        assert_eq!(derived.tardi[1], Some(8.5));
    }

    #[test]
    fn unassigned_freight_has_no_arrival() {
        let inst = small_instance();
        let sched = schedule(&[1.0, 2.0], &[12.0, 13.0]);
        let alloc = Allocation::from_assignment(vec![None, None], 2);
        let derived = derive_arrivals(&inst, &sched, &alloc).unwrap();
        assert_eq!(derived.wr, vec![None, None]);
        assert_eq!(derived.tardi, vec![None, None]);
    }

    #[test]
    fn unknown_train_is_structural() {
        let inst = small_instance();
        let sched = schedule(&[1.0, 2.0], &[12.0, 13.0]);
        let alloc = Allocation::from_assignment(vec![Some(7), None], 2);
        assert!(derive_arrivals(&inst, &sched, &alloc).is_err());
    }

    #[test]
    fn derivation_is_idempotent() {
        let inst = small_instance();
        let sched = schedule(&[1.0, 2.0], &[12.0, 13.0]);
        let alloc = Allocation::from_assignment(vec![Some(0), Some(1)], 2);
        let once = derive_arrivals(&inst, &sched, &alloc).unwrap();
        let twice = derive_arrivals(&inst, &sched, &once).unwrap();
        assert_eq!(once, twice);
        assert_eq!(
            allocation_objective(&inst, &once),
            allocation_objective(&inst, &twice)
        );
    }

    #[test]
    fn json_round_trips_by_external_id() {
        let inst = small_instance();
        let sched = schedule(&[1.0, 2.0], &[12.0, 13.0]);
        let mut alloc = Allocation::from_assignment(vec![Some(1), None], 2);
        alloc.relax[0] = true;
        let derived = derive_arrivals(&inst, &sched, &alloc).unwrap();
        let json = derived.to_json(&inst);
        assert_eq!(json["assign"]["j1"], "t2");
        assert_eq!(json["assign"]["j2"], Value::Null);
        assert_eq!(json["relax"]["t1"], true);
        assert!(json["wr"].get("j2").is_none());
        let back = Allocation::from_json(&inst, &json).unwrap();
        assert_eq!(back, derived);
    }
}
