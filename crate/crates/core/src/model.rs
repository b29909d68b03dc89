//! Domain types for the corridor scheduling problem: instances, precedence
//! decisions, schedules, and the validators that serve as the ground truth
//! for every solver in this crate.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::{Error, Result, TIME_EPS};

/// Travel direction along the corridor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "dep")]
    Departing,
    #[serde(rename = "ret")]
    Returning,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Departing => write!(f, "departing"),
            Direction::Returning => write!(f, "returning"),
        }
    }
}

/// The corridor geometry: `n` segments joined by `n + 1` stations. Station 0
/// is the start of the corridor, station `n` its end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Corridor {
    pub n: usize,
}

impl Corridor {
    pub fn new(n: usize) -> Self {
        Corridor { n }
    }

    /// Number of stations (one more than the number of segments).
    pub fn stations(&self) -> usize {
        self.n + 1
    }
}

/// Maps a traversal index to the physical segment it crosses.
///
/// Departing trains see segment `k` at traversal step `k`; returning trains
/// start from the far end, so their traversal step `k` crosses physical
/// segment `n + 1 - k`. Traversal indices and physical segments are both
/// 1-based.
pub fn physical_segment(direction: Direction, k: usize, n: usize) -> Result<usize> {
    if k < 1 || k > n {
        return Err(Error::InvalidArgument(format!(
            "traversal index {k} out of range 1..={n}"
        )));
    }
    Ok(match direction {
        Direction::Departing => k,
        Direction::Returning => n + 1 - k,
    })
}

/// A freight train. Time arrays are in hours; `min_run` is indexed by
/// traversal step (1-based step `k` lives at `min_run[k - 1]`), the station
/// arrays (`load`, `unload`, `dwell`) are indexed by station `0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Train {
    pub id: String,
    pub direction: Direction,
    /// Priority weight in (0, 1].
    pub priority: f64,
    /// Weight capacity in tonnes. Only departing trains carry freight.
    pub capacity: f64,
    pub min_run: Vec<f64>,
    pub load: Vec<f64>,
    pub unload: Vec<f64>,
    pub dwell: Vec<f64>,
}

/// A freight consignment waiting at the start of the corridor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Freight {
    pub id: String,
    /// Priority weight (positive, unbounded).
    pub priority: f64,
    /// Weight in tonnes.
    pub weight: f64,
    /// Due date at the end station, hours.
    pub due: f64,
    /// Release date at the start station, hours.
    pub release: f64,
}

fn default_capacity_floor() -> f64 {
    0.6
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(rename = "n")]
    pub corridor: Corridor,
    /// Safety lag between same-direction departures, per physical segment.
    pub safety: Vec<f64>,
    /// Large constant carried for ILP-style exports; the solvers here branch
    /// on precedence decisions instead of relaxing them, so `big_m` never
    /// enters any computation.
    pub big_m: f64,
    /// Minimum share of each train's weight capacity that allocated freight
    /// must cover (relaxable per train when unreachable).
    #[serde(default = "default_capacity_floor")]
    pub capacity_floor: f64,
    pub trains: Vec<Train>,
    pub freights: Vec<Freight>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.corridor.n
    }

    pub fn train_count(&self) -> usize {
        self.trains.len()
    }

    /// Indices of departing trains, in instance order.
    pub fn departing(&self) -> Vec<usize> {
        (0..self.trains.len())
            .filter(|&t| self.trains[t].direction == Direction::Departing)
            .collect()
    }

    /// Indices of returning trains, in instance order.
    pub fn returning(&self) -> Vec<usize> {
        (0..self.trains.len())
            .filter(|&t| self.trains[t].direction == Direction::Returning)
            .collect()
    }

    /// Physical segment crossed by train `t` at traversal step `k`.
    pub fn phys(&self, t: usize, k: usize) -> usize {
        match self.trains[t].direction {
            Direction::Departing => k,
            Direction::Returning => self.n() + 1 - k,
        }
    }

    /// Station where train `t` stands between traversal steps `k` and `k + 1`.
    pub fn station_after(&self, t: usize, k: usize) -> usize {
        match self.trains[t].direction {
            Direction::Departing => k,
            Direction::Returning => self.n() - k,
        }
    }

    /// Mandatory stop time of train `t` at station `s`.
    pub fn stop_time(&self, t: usize, s: usize) -> f64 {
        let tr = &self.trains[t];
        tr.unload[s] + tr.load[s] + tr.dwell[s]
    }

    /// Travel time of train `t` absent any interaction with other trains:
    /// minimum run times plus mandatory stops at intermediate stations.
    pub fn free_run(&self, t: usize) -> f64 {
        let n = self.n();
        let mut total: f64 = self.trains[t].min_run.iter().sum();
        for k in 1..n {
            total += self.stop_time(t, self.station_after(t, k));
        }
        total
    }

    /// Crude upper estimate of the scheduling horizon: every train's free-run
    /// time plus a full safety lag behind every other train on every segment.
    pub fn horizon_estimate(&self) -> f64 {
        let free: f64 = (0..self.trains.len()).map(|t| self.free_run(t)).sum();
        let lags: f64 = self.safety.iter().sum::<f64>() * self.trains.len() as f64;
        free + lags
    }

    /// Position of the train with external id `id`.
    pub fn train_index(&self, id: &str) -> Option<usize> {
        self.trains.iter().position(|t| t.id == id)
    }

    pub fn freight_index(&self, id: &str) -> Option<usize> {
        self.freights.iter().position(|f| f.id == id)
    }
}

/// One defect found by [`validate_instance`].
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceDefect {
    NoSegments,
    WrongLength {
        context: String,
        expected: usize,
        actual: usize,
    },
    NegativeTime {
        context: String,
        value: f64,
    },
    NonFinite {
        context: String,
    },
    PriorityOutOfRange {
        context: String,
        value: f64,
    },
    NonPositive {
        context: String,
        value: f64,
    },
    CapacityFloorOutOfRange {
        value: f64,
    },
    BigMTooSmall {
        big_m: f64,
        required: f64,
    },
    NoDepartingTrains,
    DuplicateId {
        id: String,
    },
}

impl fmt::Display for InstanceDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceDefect::NoSegments => write!(f, "corridor has no segments"),
            InstanceDefect::WrongLength {
                context,
                expected,
                actual,
            } => write!(f, "{context}: expected {expected} entries, found {actual}"),
            InstanceDefect::NegativeTime { context, value } => {
                write!(f, "{context}: negative time {value}")
            }
            InstanceDefect::NonFinite { context } => write!(f, "{context}: value is not finite"),
            InstanceDefect::PriorityOutOfRange { context, value } => {
                write!(f, "{context}: priority {value} outside (0, 1]")
            }
            InstanceDefect::NonPositive { context, value } => {
                write!(f, "{context}: must be positive, found {value}")
            }
            InstanceDefect::CapacityFloorOutOfRange { value } => {
                write!(f, "capacity floor {value} outside [0, 1]")
            }
            InstanceDefect::BigMTooSmall { big_m, required } => {
                write!(f, "big_m {big_m} below required {required}")
            }
            InstanceDefect::NoDepartingTrains => {
                write!(f, "freight present but no departing train to carry it")
            }
            InstanceDefect::DuplicateId { id } => write!(f, "duplicate id {id:?}"),
        }
    }
}

fn check_time_array(
    defects: &mut Vec<InstanceDefect>,
    context: &str,
    values: &[f64],
    expected: usize,
) {
    if values.len() != expected {
        defects.push(InstanceDefect::WrongLength {
            context: context.to_string(),
            expected,
            actual: values.len(),
        });
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            defects.push(InstanceDefect::NonFinite {
                context: format!("{context}[{i}]"),
            });
        } else if v < 0.0 {
            defects.push(InstanceDefect::NegativeTime {
                context: format!("{context}[{i}]"),
                value: v,
            });
        }
    }
}

/// Checks every type invariant of an [`Instance`]. Returns all defects found;
/// an empty list means the instance is well formed.
pub fn validate_instance(inst: &Instance) -> Vec<InstanceDefect> {
    let mut defects = Vec::new();
    let n = inst.n();
    if n == 0 {
        defects.push(InstanceDefect::NoSegments);
        return defects;
    }

    check_time_array(&mut defects, "safety", &inst.safety, n);

    let mut seen = std::collections::HashSet::new();
    for tr in &inst.trains {
        if !seen.insert(tr.id.as_str()) {
            defects.push(InstanceDefect::DuplicateId { id: tr.id.clone() });
        }
        let ctx = |field: &str| format!("train {} {field}", tr.id);
        if !tr.priority.is_finite() || tr.priority <= 0.0 || tr.priority > 1.0 {
            defects.push(InstanceDefect::PriorityOutOfRange {
                context: format!("train {}", tr.id),
                value: tr.priority,
            });
        }
        if !tr.capacity.is_finite() || tr.capacity < 0.0 {
            defects.push(InstanceDefect::NegativeTime {
                context: ctx("capacity"),
                value: tr.capacity,
            });
        }
        check_time_array(&mut defects, &ctx("min_run"), &tr.min_run, n);
        check_time_array(&mut defects, &ctx("load"), &tr.load, n + 1);
        check_time_array(&mut defects, &ctx("unload"), &tr.unload, n + 1);
        check_time_array(&mut defects, &ctx("dwell"), &tr.dwell, n + 1);
    }

    let mut seen_freights = std::collections::HashSet::new();
    for fr in &inst.freights {
        if !seen_freights.insert(fr.id.as_str()) {
            defects.push(InstanceDefect::DuplicateId { id: fr.id.clone() });
        }
        if !fr.priority.is_finite() || fr.priority <= 0.0 {
            defects.push(InstanceDefect::NonPositive {
                context: format!("freight {} priority", fr.id),
                value: fr.priority,
            });
        }
        if !fr.weight.is_finite() || fr.weight <= 0.0 {
            defects.push(InstanceDefect::NonPositive {
                context: format!("freight {} weight", fr.id),
                value: fr.weight,
            });
        }
        if !fr.due.is_finite() || fr.due < 0.0 {
            defects.push(InstanceDefect::NegativeTime {
                context: format!("freight {} due", fr.id),
                value: fr.due,
            });
        }
        if !fr.release.is_finite() || fr.release < 0.0 {
            defects.push(InstanceDefect::NegativeTime {
                context: format!("freight {} release", fr.id),
                value: fr.release,
            });
        }
    }

    if !inst.capacity_floor.is_finite() || inst.capacity_floor < 0.0 || inst.capacity_floor > 1.0 {
        defects.push(InstanceDefect::CapacityFloorOutOfRange {
            value: inst.capacity_floor,
        });
    }
    // Defect lists above may include wrong-length arrays; the horizon estimate
    // still works because it only sums what is present.
    let required = 10.0 * inst.horizon_estimate();
    if !inst.big_m.is_finite() || inst.big_m <= 0.0 || inst.big_m + TIME_EPS < required {
        defects.push(InstanceDefect::BigMTooSmall {
            big_m: inst.big_m,
            required,
        });
    }
    if !inst.freights.is_empty() && inst.departing().is_empty() {
        defects.push(InstanceDefect::NoDepartingTrains);
    }
    defects
}

/// Event times for every train: `dep[t][k - 1]` / `arr[t][k - 1]` is the
/// departure into / arrival out of traversal step `k` of train `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub dep: Vec<Vec<f64>>,
    pub arr: Vec<Vec<f64>>,
    /// Value of the objective this schedule was solved for.
    pub objective: f64,
}

impl Schedule {
    pub fn dep_at(&self, t: usize, k: usize) -> f64 {
        self.dep[t][k - 1]
    }

    pub fn arr_at(&self, t: usize, k: usize) -> f64 {
        self.arr[t][k - 1]
    }

    /// Departure from the first station of the journey.
    pub fn first_departure(&self, t: usize) -> f64 {
        self.dep[t][0]
    }

    /// Arrival at the last station of the journey.
    pub fn final_arrival(&self, t: usize) -> f64 {
        *self.arr[t].last().expect("schedule rows are nonempty")
    }

    fn check_shape(&self, inst: &Instance) -> Result<()> {
        let n = inst.n();
        if self.dep.len() != inst.trains.len() || self.arr.len() != inst.trains.len() {
            return Err(Error::MalformedSchedule(format!(
                "schedule covers {} trains, instance has {}",
                self.dep.len().min(self.arr.len()),
                inst.trains.len()
            )));
        }
        for t in 0..inst.trains.len() {
            if self.dep[t].len() != n || self.arr[t].len() != n {
                return Err(Error::MalformedSchedule(format!(
                    "train {} has {} departure / {} arrival events, expected {n}",
                    inst.trains[t].id,
                    self.dep[t].len(),
                    self.arr[t].len()
                )));
            }
            for k in 0..n {
                if !self.dep[t][k].is_finite() || !self.arr[t][k].is_finite() {
                    return Err(Error::MalformedSchedule(format!(
                        "train {} has a non-finite event time at step {}",
                        inst.trains[t].id,
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Constraint families checked by [`validate_schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationFamily {
    RunTime,
    StationStop,
    Headway,
    Collision,
    NegativeTime,
}

impl fmt::Display for ViolationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ViolationFamily::RunTime => "run-time",
            ViolationFamily::StationStop => "station-stop",
            ViolationFamily::Headway => "headway",
            ViolationFamily::Collision => "collision",
            ViolationFamily::NegativeTime => "negative-time",
        };
        write!(f, "{name}")
    }
}

/// One broken constraint, with enough context to locate it. `slack` is the
/// (negative) margin by which the constraint fails.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RunTime {
        train: usize,
        traversal: usize,
        slack: f64,
    },
    StationStop {
        train: usize,
        traversal: usize,
        station: usize,
        slack: f64,
    },
    Headway {
        a: usize,
        b: usize,
        traversal: usize,
        phys: usize,
        slack: f64,
    },
    Collision {
        departing: usize,
        returning: usize,
        phys: usize,
        overlap: f64,
    },
    NegativeTime {
        train: usize,
        traversal: usize,
        time: f64,
    },
}

impl Violation {
    pub fn family(&self) -> ViolationFamily {
        match self {
            Violation::RunTime { .. } => ViolationFamily::RunTime,
            Violation::StationStop { .. } => ViolationFamily::StationStop,
            Violation::Headway { .. } => ViolationFamily::Headway,
            Violation::Collision { .. } => ViolationFamily::Collision,
            Violation::NegativeTime { .. } => ViolationFamily::NegativeTime,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RunTime {
                train,
                traversal,
                slack,
            } => write!(
                f,
                "run-time: train #{train} step {traversal} shorter than minimum (slack {slack:.4})"
            ),
            Violation::StationStop {
                train,
                traversal,
                station,
                slack,
            } => write!(
                f,
                "station-stop: train #{train} at station {station} after step {traversal} \
                 stops less than required (slack {slack:.4})"
            ),
            Violation::Headway {
                a,
                b,
                traversal,
                phys,
                slack,
            } => write!(
                f,
                "headway: trains #{a}/#{b} depart step {traversal} (segment {phys}) \
                 within the safety lag (slack {slack:.4})"
            ),
            Violation::Collision {
                departing,
                returning,
                phys,
                overlap,
            } => write!(
                f,
                "collision: trains #{departing}/#{returning} overlap on segment {phys} \
                 for {overlap:.4} h"
            ),
            Violation::NegativeTime {
                train,
                traversal,
                time,
            } => write!(
                f,
                "negative-time: train #{train} step {traversal} departs at {time:.4}"
            ),
        }
    }
}

/// Checks every scheduling constraint against a schedule. Returns one record
/// per broken constraint; an empty list means the schedule is feasible. This
/// is the ground-truth oracle every solver in the crate is tested against.
pub fn validate_schedule(inst: &Instance, sched: &Schedule) -> Result<Vec<Violation>> {
    sched.check_shape(inst)?;
    let n = inst.n();
    let mut violations = Vec::new();

    for t in 0..inst.trains.len() {
        let tr = &inst.trains[t];
        if sched.dep_at(t, 1) < -TIME_EPS {
            violations.push(Violation::NegativeTime {
                train: t,
                traversal: 1,
                time: sched.dep_at(t, 1),
            });
        }
        for k in 1..=n {
            let slack = sched.arr_at(t, k) - sched.dep_at(t, k) - tr.min_run[k - 1];
            if slack < -TIME_EPS {
                violations.push(Violation::RunTime {
                    train: t,
                    traversal: k,
                    slack,
                });
            }
        }
        for k in 1..n {
            let station = inst.station_after(t, k);
            let slack = sched.dep_at(t, k + 1) - sched.arr_at(t, k) - inst.stop_time(t, station);
            if slack < -TIME_EPS {
                violations.push(Violation::StationStop {
                    train: t,
                    traversal: k,
                    station,
                    slack,
                });
            }
        }
    }

    // Same-direction headway: departures into the same segment must be at
    // least the safety lag apart, in one order or the other.
    for dir in [Direction::Departing, Direction::Returning] {
        let group: Vec<usize> = (0..inst.trains.len())
            .filter(|&t| inst.trains[t].direction == dir)
            .collect();
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                let (a, b) = (group[i], group[j]);
                for k in 1..=n {
                    let phys = inst.phys(a, k);
                    let gap = (sched.dep_at(a, k) - sched.dep_at(b, k)).abs();
                    let slack = gap - inst.safety[phys - 1];
                    if slack < -TIME_EPS {
                        violations.push(Violation::Headway {
                            a,
                            b,
                            traversal: k,
                            phys,
                            slack,
                        });
                    }
                }
            }
        }
    }

    // Opposing exclusivity: occupation intervals of a departing and a
    // returning train on a shared physical segment must not overlap.
    for &t in &inst.departing() {
        for &r in &inst.returning() {
            for s in 1..=n {
                let kr = n + 1 - s;
                let (dt, at) = (sched.dep_at(t, s), sched.arr_at(t, s));
                let (dr, ar) = (sched.dep_at(r, kr), sched.arr_at(r, kr));
                if at <= dr + TIME_EPS || ar <= dt + TIME_EPS {
                    continue;
                }
                let overlap = at.min(ar) - dt.max(dr);
                violations.push(Violation::Collision {
                    departing: t,
                    returning: r,
                    phys: s,
                    overlap,
                });
            }
        }
    }

    Ok(violations)
}

// ---------------------------------------------------------------------------
// Precedence decisions
// ---------------------------------------------------------------------------

/// The three families of pairwise precedence decisions that, once fixed,
/// reduce the scheduling problem to a difference-constraint system:
/// same-direction departure order per traversal step (separately for
/// departing and returning pairs) and opposing occupation order per physical
/// segment. Decisions are stored at most once per pair, so the two-sided
/// exclusivity of the underlying binaries holds by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    n: usize,
    dep_trains: Vec<usize>,
    ret_trains: Vec<usize>,
    /// Position of each train in its direction list.
    pos: Vec<usize>,
    dir: Vec<Direction>,
    /// `[step k][pair (a, b), a < b]`: `true` when `dep_trains[a]` departs first.
    dep_prec: Vec<Option<bool>>,
    ret_prec: Vec<Option<bool>>,
    /// `[segment s][departing i][returning j]`: `true` when the departing
    /// train's occupation comes first.
    opp_prec: Vec<Option<bool>>,
}

fn pair_index(count: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < count);
    a * count - a * (a + 1) / 2 + (b - a - 1)
}

fn pair_count(count: usize) -> usize {
    count * count.saturating_sub(1) / 2
}

impl Ordering {
    /// An ordering for `inst` with every decision still open.
    pub fn new(inst: &Instance) -> Self {
        let dep_trains = inst.departing();
        let ret_trains = inst.returning();
        let mut pos = vec![0usize; inst.trains.len()];
        for (i, &t) in dep_trains.iter().enumerate() {
            pos[t] = i;
        }
        for (i, &t) in ret_trains.iter().enumerate() {
            pos[t] = i;
        }
        let dir = inst.trains.iter().map(|t| t.direction).collect();
        let n = inst.n();
        Ordering {
            n,
            dep_prec: vec![None; n * pair_count(dep_trains.len())],
            ret_prec: vec![None; n * pair_count(ret_trains.len())],
            opp_prec: vec![None; n * dep_trains.len() * ret_trains.len()],
            dep_trains,
            ret_trains,
            pos,
            dir,
        }
    }

    pub fn segments(&self) -> usize {
        self.n
    }

    pub fn departing_trains(&self) -> &[usize] {
        &self.dep_trains
    }

    pub fn returning_trains(&self) -> &[usize] {
        &self.ret_trains
    }

    fn same_dir_slot(&self, k: usize, a: usize, b: usize) -> Result<(bool, usize, Direction)> {
        if k < 1 || k > self.n {
            return Err(Error::InvalidArgument(format!(
                "traversal step {k} out of range 1..={}",
                self.n
            )));
        }
        if a == b || a >= self.dir.len() || b >= self.dir.len() || self.dir[a] != self.dir[b] {
            return Err(Error::InvalidArgument(format!(
                "trains #{a} and #{b} are not a distinct same-direction pair"
            )));
        }
        let dir = self.dir[a];
        let count = match dir {
            Direction::Departing => self.dep_trains.len(),
            Direction::Returning => self.ret_trains.len(),
        };
        let (pa, pb) = (self.pos[a], self.pos[b]);
        let (lo, hi, flipped) = if pa < pb {
            (pa, pb, false)
        } else {
            (pb, pa, true)
        };
        Ok((flipped, (k - 1) * pair_count(count) + pair_index(count, lo, hi), dir))
    }

    /// Records which of two same-direction trains departs traversal step `k`
    /// first. Overwrites any previous decision for the pair at that step.
    pub fn set_same_direction(&mut self, k: usize, first: usize, second: usize) -> Result<()> {
        let (flipped, slot, dir) = self.same_dir_slot(k, first, second)?;
        let store = match dir {
            Direction::Departing => &mut self.dep_prec,
            Direction::Returning => &mut self.ret_prec,
        };
        store[slot] = Some(!flipped);
        Ok(())
    }

    /// `Some(true)` when `a` departs step `k` before `b`.
    pub fn same_direction(&self, k: usize, a: usize, b: usize) -> Result<Option<bool>> {
        let (flipped, slot, dir) = self.same_dir_slot(k, a, b)?;
        let store = match dir {
            Direction::Departing => &self.dep_prec,
            Direction::Returning => &self.ret_prec,
        };
        Ok(store[slot].map(|first| first != flipped))
    }

    fn opp_slot(&self, s: usize, t: usize, r: usize) -> Result<usize> {
        if s < 1 || s > self.n {
            return Err(Error::InvalidArgument(format!(
                "physical segment {s} out of range 1..={}",
                self.n
            )));
        }
        if t >= self.dir.len()
            || r >= self.dir.len()
            || self.dir[t] != Direction::Departing
            || self.dir[r] != Direction::Returning
        {
            return Err(Error::InvalidArgument(format!(
                "trains #{t}/#{r} are not a departing/returning pair"
            )));
        }
        Ok((s - 1) * self.dep_trains.len() * self.ret_trains.len()
            + self.pos[t] * self.ret_trains.len()
            + self.pos[r])
    }

    /// Records which of an opposing pair occupies physical segment `s` first.
    pub fn set_opposing(&mut self, s: usize, t: usize, r: usize, departing_first: bool) -> Result<()> {
        let slot = self.opp_slot(s, t, r)?;
        self.opp_prec[slot] = Some(departing_first);
        Ok(())
    }

    /// `Some(true)` when departing train `t` crosses segment `s` before
    /// returning train `r`.
    pub fn opposing(&self, s: usize, t: usize, r: usize) -> Result<Option<bool>> {
        Ok(self.opp_prec[self.opp_slot(s, t, r)?])
    }

    pub fn is_complete(&self) -> bool {
        self.dep_prec.iter().all(Option::is_some)
            && self.ret_prec.iter().all(Option::is_some)
            && self.opp_prec.iter().all(Option::is_some)
    }

    pub fn decided(&self) -> usize {
        self.dep_prec.iter().filter(|d| d.is_some()).count()
            + self.ret_prec.iter().filter(|d| d.is_some()).count()
            + self.opp_prec.iter().filter(|d| d.is_some()).count()
    }

    pub fn decision_count(&self) -> usize {
        self.dep_prec.len() + self.ret_prec.len() + self.opp_prec.len()
    }
}

/// Reads the precedence decisions a feasible schedule realizes. Ties are
/// broken toward the lower train index (same direction) and toward the
/// departing train (opposing pairs).
pub fn ordering_from_schedule(inst: &Instance, sched: &Schedule) -> Result<Ordering> {
    sched.check_shape(inst)?;
    let n = inst.n();
    let mut ord = Ordering::new(inst);
    for dir in [Direction::Departing, Direction::Returning] {
        let group: Vec<usize> = (0..inst.trains.len())
            .filter(|&t| inst.trains[t].direction == dir)
            .collect();
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                let (a, b) = (group[i], group[j]);
                for k in 1..=n {
                    if sched.dep_at(a, k) <= sched.dep_at(b, k) {
                        ord.set_same_direction(k, a, b)?;
                    } else {
                        ord.set_same_direction(k, b, a)?;
                    }
                }
            }
        }
    }
    for &t in &inst.departing() {
        for &r in &inst.returning() {
            for s in 1..=n {
                let kr = n + 1 - s;
                let dep_first = sched.arr_at(t, s) <= sched.dep_at(r, kr) + TIME_EPS;
                ord.set_opposing(s, t, r, dep_first)?;
            }
        }
    }
    Ok(ord)
}

/// Objective to optimize the schedule for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// Total departure time from the first station, over all trains.
    #[serde(rename = "departure")]
    TotalDeparture,
    /// Total arrival time at the last station, over all trains.
    #[serde(rename = "arrival")]
    TotalArrival,
    /// Priority-weighted total travel time.
    #[serde(rename = "travel")]
    #[default]
    WeightedTravelTime,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveKind::TotalDeparture => write!(f, "departure"),
            ObjectiveKind::TotalArrival => write!(f, "arrival"),
            ObjectiveKind::WeightedTravelTime => write!(f, "travel"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;

    fn single_train_instance(min_run: Vec<f64>) -> Instance {
        let n = min_run.len();
        Instance {
            corridor: Corridor::new(n),
            safety: vec![0.0; n],
            big_m: 1e6,
            capacity_floor: 0.6,
            trains: vec![Train {
                id: "t1".into(),
                direction: Direction::Departing,
                priority: 1.0,
                capacity: 100.0,
                min_run,
                load: vec![0.0; n + 1],
                unload: vec![0.0; n + 1],
                dwell: vec![0.0; n + 1],
            }],
            freights: vec![],
        }
    }

    #[test]
    fn physical_segment_maps_both_directions() {
        assert_eq!(physical_segment(Direction::Departing, 1, 3).unwrap(), 1);
        assert_eq!(physical_segment(Direction::Returning, 3, 3).unwrap(), 1);
        assert_eq!(physical_segment(Direction::Returning, 1, 1).unwrap(), 1);
        assert!(physical_segment(Direction::Departing, 0, 3).is_err());
        assert!(physical_segment(Direction::Returning, 4, 3).is_err());
    }

    #[test]
    fn physical_segment_is_a_direction_swapping_bijection() {
        for n in 1..=6 {
            for k in 1..=n {
                let p = physical_segment(Direction::Departing, k, n).unwrap();
                assert_eq!(
                    physical_segment(Direction::Returning, n + 1 - k, n).unwrap(),
                    p
                );
            }
        }
    }

    #[test]
    fn well_formed_instance_passes_validation() {
        let inst = gen::generate(3, 3, 2, 5, 42);
        assert_eq!(validate_instance(&inst), vec![]);
    }

    #[test]
    fn negative_min_run_is_flagged() {
        let mut inst = single_train_instance(vec![2.0, 3.0]);
        inst.trains[0].min_run[1] = -1.0;
        let defects = validate_instance(&inst);
        assert!(defects
            .iter()
            .any(|d| matches!(d, InstanceDefect::NegativeTime { .. })));
    }

    #[test]
    fn small_big_m_is_flagged() {
        let mut inst = single_train_instance(vec![20.0, 20.0, 10.0]);
        // Horizon is roughly 50 h; big_m of 1 is far below ten times that.
        inst.big_m = 1.0;
        let defects = validate_instance(&inst);
        assert_eq!(defects.len(), 1);
        assert!(matches!(defects[0], InstanceDefect::BigMTooSmall { .. }));
    }

    #[test]
    fn tight_single_train_schedule_is_feasible() {
        let inst = single_train_instance(vec![2.0]);
        let sched = Schedule {
            dep: vec![vec![0.0]],
            arr: vec![vec![2.0]],
            objective: 0.0,
        };
        assert_eq!(validate_schedule(&inst, &sched).unwrap(), vec![]);
    }

    #[test]
    fn close_departures_break_headway() {
        let mut inst = single_train_instance(vec![2.0]);
        inst.safety = vec![1.0];
        inst.trains.push(Train {
            id: "t2".into(),
            ..inst.trains[0].clone()
        });
        let sched = Schedule {
            dep: vec![vec![0.0], vec![0.5]],
            arr: vec![vec![2.0], vec![2.5]],
            objective: 0.0,
        };
        let violations = validate_schedule(&inst, &sched).unwrap();
        assert_eq!(violations.len(), 1);
        match &violations[0] {
            Violation::Headway { slack, .. } => assert!((slack - (-0.5)).abs() < 1e-12),
            other => panic!("expected headway violation, got {other:?}"),
        }
    }

    #[test]
    fn overlapping_opposing_intervals_collide() {
        let mut inst = single_train_instance(vec![1.0, 2.0, 1.0]);
        inst.trains.push(Train {
            id: "r1".into(),
            direction: Direction::Returning,
            ..inst.trains[0].clone()
        });
        // Departing occupies physical segment 2 over [5, 7]; the returning
        // train (traversal step 2) overlaps it on [6, 8].
        let sched = Schedule {
            dep: vec![vec![0.0, 5.0, 8.0], vec![2.0, 6.0, 9.0]],
            arr: vec![vec![1.0, 7.0, 9.0], vec![4.0, 8.0, 10.0]],
            objective: 0.0,
        };
        let violations = validate_schedule(&inst, &sched).unwrap();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::Collision { phys: 2, .. })));
    }

    #[test]
    fn missing_events_are_a_structural_error() {
        let inst = single_train_instance(vec![2.0, 3.0]);
        let sched = Schedule {
            dep: vec![vec![0.0]],
            arr: vec![vec![2.0]],
            objective: 0.0,
        };
        assert!(validate_schedule(&inst, &sched).is_err());
    }

    #[test]
    fn shifting_an_isolated_train_keeps_per_train_constraints() {
        let inst = single_train_instance(vec![2.0, 3.0]);
        let base = Schedule {
            dep: vec![vec![0.0, 2.5]],
            arr: vec![vec![2.0, 6.0]],
            objective: 0.0,
        };
        assert_eq!(validate_schedule(&inst, &base).unwrap(), vec![]);
        for eps in [0.1, 1.0, 7.25] {
            let shifted = Schedule {
                dep: vec![base.dep[0].iter().map(|t| t + eps).collect()],
                arr: vec![base.arr[0].iter().map(|t| t + eps).collect()],
                objective: 0.0,
            };
            let violations = validate_schedule(&inst, &shifted).unwrap();
            assert!(!violations
                .iter()
                .any(|v| matches!(v.family(), ViolationFamily::RunTime | ViolationFamily::StationStop)));
        }
    }

    #[test]
    fn instance_json_round_trips_with_stable_schema() {
        let inst = gen::generate(2, 1, 1, 1, 7);
        let json = serde_json::to_string_pretty(&inst).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["n"], serde_json::json!(2));
        assert!(value["safety"].is_array());
        assert_eq!(value["trains"][0]["direction"], "dep");
        assert_eq!(value["trains"][1]["direction"], "ret");
        assert!(value["freights"][0]["release"].is_number());
        let back: Instance = serde_json::from_str(&json).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn ordering_records_one_direction_per_pair() {
        let mut inst = single_train_instance(vec![2.0]);
        inst.trains.push(Train {
            id: "t2".into(),
            ..inst.trains[0].clone()
        });
        let mut ord = Ordering::new(&inst);
        assert!(!ord.is_complete());
        ord.set_same_direction(1, 1, 0).unwrap();
        assert_eq!(ord.same_direction(1, 0, 1).unwrap(), Some(false));
        assert_eq!(ord.same_direction(1, 1, 0).unwrap(), Some(true));
        // Overwriting flips the single stored decision rather than adding one.
        ord.set_same_direction(1, 0, 1).unwrap();
        assert_eq!(ord.same_direction(1, 1, 0).unwrap(), Some(false));
        assert!(ord.is_complete());
        assert_eq!(ord.decision_count(), 1);
    }
}
