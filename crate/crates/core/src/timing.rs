//! The fixed-precedence timing engine.
//!
//! With every pairwise precedence decision fixed, all scheduling constraints
//! become difference constraints `time(to) - time(from) >= bound`. Earliest
//! event times are the longest paths from a time origin; an infeasible set of
//! decisions shows up as a cycle with positive total bound. A backward pass
//! over the same arcs pushes departures as late as the fixed arrivals allow,
//! which is what makes travel-time objectives meaningful.

use std::collections::VecDeque;

use crate::model::{ordering_from_schedule, Instance, ObjectiveKind, Ordering, Schedule};
use crate::{Error, Result};

/// One difference constraint: `time(to) - time(from) >= bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffArc {
    pub from: u32,
    pub to: u32,
    pub bound: f64,
}

/// A difference-constraint system over the event variables of a scheduling
/// instance: one departure and one arrival node per train per traversal step,
/// plus a time origin (node 0). All event times are implicitly at least zero.
#[derive(Debug, Clone)]
pub struct DiffGraph {
    trains: usize,
    segments: usize,
    arcs: Vec<DiffArc>,
    out: Vec<Vec<u32>>,
}

impl DiffGraph {
    pub fn new(trains: usize, segments: usize) -> Self {
        let nodes = 1 + 2 * trains * segments;
        DiffGraph {
            trains,
            segments,
            arcs: Vec::new(),
            out: vec![Vec::new(); nodes],
        }
    }

    pub const ORIGIN: u32 = 0;

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[DiffArc] {
        &self.arcs
    }

    /// Arc ids leaving `node`.
    pub fn outgoing(&self, node: u32) -> &[u32] {
        &self.out[node as usize]
    }

    pub fn trains(&self) -> usize {
        self.trains
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Node of the departure event of train `t` into traversal step `k`.
    pub fn dep_node(&self, t: usize, k: usize) -> u32 {
        debug_assert!(t < self.trains && (1..=self.segments).contains(&k));
        (1 + 2 * (t * self.segments + (k - 1))) as u32
    }

    /// Node of the arrival event of train `t` out of traversal step `k`.
    pub fn arr_node(&self, t: usize, k: usize) -> u32 {
        self.dep_node(t, k) + 1
    }

    pub fn add_arc(&mut self, from: u32, to: u32, bound: f64) {
        let id = self.arcs.len() as u32;
        self.arcs.push(DiffArc { from, to, bound });
        self.out[from as usize].push(id);
    }

    /// Remembers the current arc count so later additions can be undone.
    pub fn mark(&self) -> usize {
        self.arcs.len()
    }

    /// Drops every arc added after `mark`.
    pub fn rollback(&mut self, mark: usize) {
        while self.arcs.len() > mark {
            let arc = self.arcs.pop().expect("mark within bounds");
            self.out[arc.from as usize].pop();
        }
    }

    pub(crate) fn schedule_from_times(&self, times: &[f64]) -> Schedule {
        let mut dep = vec![vec![0.0; self.segments]; self.trains];
        let mut arr = vec![vec![0.0; self.segments]; self.trains];
        for t in 0..self.trains {
            for k in 1..=self.segments {
                dep[t][k - 1] = times[self.dep_node(t, k) as usize];
                arr[t][k - 1] = times[self.arr_node(t, k) as usize];
            }
        }
        Schedule {
            dep,
            arr,
            objective: 0.0,
        }
    }
}

/// Result of a fixed-precedence solve: either a feasible schedule or a
/// witness cycle whose bounds sum to a positive value.
#[derive(Debug, Clone)]
pub enum TimingOutcome {
    Feasible(Schedule),
    Infeasible(Vec<DiffArc>),
}

impl TimingOutcome {
    pub fn feasible(self) -> Option<Schedule> {
        match self {
            TimingOutcome::Feasible(s) => Some(s),
            TimingOutcome::Infeasible(_) => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, TimingOutcome::Feasible(_))
    }
}

/// Incremental longest-path state over a [`DiffGraph`]. Arcs can be added
/// one at a time with cheap re-propagation, either permanently or as undoable
/// trials; this is what makes greedy precedence derivation and exhaustive
/// enumeration affordable.
#[derive(Debug, Clone)]
pub struct Propagator {
    graph: DiffGraph,
    times: Vec<f64>,
    relax_epoch: Vec<u32>,
    relax_count: Vec<u32>,
    epoch: u32,
    /// Pending (time-bits, node) entries; nonnegative times compare
    /// correctly as raw bit patterns, and stale entries are skipped on pop.
    heap: std::collections::BinaryHeap<std::cmp::Reverse<(u64, u32)>>,
}

/// Journal of one [`Propagator::add_arc`] call, sufficient to undo it.
#[derive(Debug, Default)]
pub struct ArcJournal {
    changed: Vec<(u32, f64)>,
}

impl Propagator {
    /// Solves the initial graph. Fails with a witness cycle when the base
    /// arcs are already contradictory.
    pub fn new(graph: DiffGraph) -> std::result::Result<Self, Vec<DiffArc>> {
        let nodes = graph.node_count();
        let mut p = Propagator {
            graph,
            times: vec![0.0; nodes],
            relax_epoch: vec![0; nodes],
            relax_count: vec![0; nodes],
            epoch: 0,
            heap: std::collections::BinaryHeap::with_capacity(nodes),
        };
        p.solve_from_scratch()?;
        Ok(p)
    }

    pub fn graph(&self) -> &DiffGraph {
        &self.graph
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn solve_from_scratch(&mut self) -> std::result::Result<(), Vec<DiffArc>> {
        self.times.iter_mut().for_each(|t| *t = 0.0);
        self.epoch += 1;
        let nodes = self.graph.node_count();
        let mut pred: Vec<u32> = vec![u32::MAX; nodes];
        let mut queue: VecDeque<u32> = (0..nodes as u32).collect();
        let mut in_queue = vec![true; nodes];
        while let Some(v) = queue.pop_front() {
            in_queue[v as usize] = false;
            for idx in 0..self.graph.out[v as usize].len() {
                let aid = self.graph.out[v as usize][idx];
                let arc = self.graph.arcs[aid as usize];
                let cand = self.times[v as usize] + arc.bound;
                let w = arc.to as usize;
                if cand > self.times[w] {
                    self.times[w] = cand;
                    pred[w] = aid;
                    if self.bump_relax(w) {
                        return Err(self.extract_cycle(&pred, arc.to));
                    }
                    if !in_queue[w] {
                        in_queue[w] = true;
                        queue.push_back(arc.to);
                    }
                }
            }
        }
        Ok(())
    }

    fn bump_relax(&mut self, node: usize) -> bool {
        if self.relax_epoch[node] != self.epoch {
            self.relax_epoch[node] = self.epoch;
            self.relax_count[node] = 0;
        }
        self.relax_count[node] += 1;
        self.relax_count[node] as usize > self.graph.node_count() + 1
    }

    fn extract_cycle(&self, pred: &[u32], start: u32) -> Vec<DiffArc> {
        // Walk predecessor arcs far enough to be inside the cycle, then
        // collect it.
        let mut v = start;
        for _ in 0..=self.graph.node_count() {
            v = self.graph.arcs[pred[v as usize] as usize].from;
        }
        let mut cycle = Vec::new();
        let anchor = v;
        loop {
            let arc = self.graph.arcs[pred[v as usize] as usize];
            cycle.push(arc);
            v = arc.from;
            if v == anchor {
                break;
            }
        }
        cycle.reverse();
        cycle
    }

    /// Adds an arc and re-propagates. On success the journal undoes the call
    /// via [`Propagator::undo`]; on a positive cycle the propagator is left
    /// exactly as before and the arc is not kept.
    pub fn add_arc(
        &mut self,
        from: u32,
        to: u32,
        bound: f64,
    ) -> std::result::Result<ArcJournal, ()> {
        self.graph.add_arc(from, to, bound);
        self.epoch += 1;
        let mut journal = ArcJournal::default();
        let cand = self.times[from as usize] + bound;
        if cand <= self.times[to as usize] {
            return Ok(journal); // already satisfied
        }
        journal.changed.push((to, self.times[to as usize]));
        self.times[to as usize] = cand;
        self.heap.clear();
        self.heap
            .push(std::cmp::Reverse((cand.to_bits(), to)));
        let mut overflow = false;
        // Popping nodes in time order keeps re-relaxations rare: a node is
        // usually settled before its successors are looked at.
        'outer: while let Some(std::cmp::Reverse((bits, v))) = self.heap.pop() {
            if bits != self.times[v as usize].to_bits() {
                continue; // stale entry
            }
            for idx in 0..self.graph.out[v as usize].len() {

                let aid = self.graph.out[v as usize][idx];
                let arc = self.graph.arcs[aid as usize];
                let cand = self.times[v as usize] + arc.bound;
                let w = arc.to as usize;
                if cand > self.times[w] {
                    journal.changed.push((arc.to, self.times[w]));
                    self.times[w] = cand;
                    if self.bump_relax(w) {
                        overflow = true;
                        break 'outer;
                    }
                    self.heap.push(std::cmp::Reverse((cand.to_bits(), arc.to)));
                }
            }
        }
        if overflow {
            self.heap.clear();
            self.undo(journal);
            return Err(());
        }
        Ok(journal)
    }

    /// Reverts an [`Propagator::add_arc`] call. Journals must be undone in
    /// reverse order of creation.
    pub fn undo(&mut self, journal: ArcJournal) {
        let arc = self.graph.arcs.pop().expect("journal without arc");
        let out = &mut self.graph.out[arc.from as usize];
        out.pop();
        for &(node, old) in journal.changed.iter().rev() {
            self.times[node as usize] = old;
        }
    }
}

/// Earliest feasible event times of a difference-constraint system: the
/// componentwise-least assignment satisfying every arc (all times clamped at
/// zero or above), found by longest-path propagation from the origin.
pub fn earliest_times(graph: &DiffGraph) -> TimingOutcome {
    match Propagator::new(graph.clone()) {
        Ok(p) => TimingOutcome::Feasible(graph.schedule_from_times(p.times())),
        Err(cycle) => TimingOutcome::Infeasible(cycle),
    }
}

/// Reusable buffers for repeated longest-path sweeps over graphs of one
/// shape, for callers that solve many small variations in a tight loop.
#[derive(Debug, Clone)]
pub(crate) struct SpfaScratch {
    pub times: Vec<f64>,
    queue: VecDeque<u32>,
    in_queue: Vec<bool>,
    relax: Vec<u32>,
}

impl SpfaScratch {
    pub fn new(nodes: usize) -> Self {
        SpfaScratch {
            times: vec![0.0; nodes],
            queue: VecDeque::with_capacity(nodes),
            in_queue: vec![false; nodes],
            relax: vec![0; nodes],
        }
    }

    fn sweep(&mut self, graph: &DiffGraph) -> bool {
        let nodes = graph.node_count();
        while let Some(v) = self.queue.pop_front() {
            self.in_queue[v as usize] = false;
            for &aid in graph.outgoing(v) {
                let arc = graph.arcs()[aid as usize];
                let cand = self.times[v as usize] + arc.bound;
                let w = arc.to as usize;
                if cand > self.times[w] {
                    self.times[w] = cand;
                    self.relax[w] += 1;
                    if self.relax[w] as usize > nodes + 1 {
                        self.queue.clear();
                        return false;
                    }
                    if !self.in_queue[w] {
                        self.in_queue[w] = true;
                        self.queue.push_back(arc.to);
                    }
                }
            }
        }
        true
    }

    /// Earliest times from the origin, all clamped at zero. Returns `false`
    /// on a positive cycle.
    pub fn earliest(&mut self, graph: &DiffGraph) -> bool {
        let nodes = graph.node_count();
        self.times.iter_mut().for_each(|t| *t = 0.0);
        self.relax.iter_mut().for_each(|c| *c = 0);
        self.queue.clear();
        for v in 0..nodes as u32 {
            self.queue.push_back(v);
            self.in_queue[v as usize] = true;
        }
        self.sweep(graph)
    }

    /// Longest-path values from `source` (negative infinity off its cone).
    /// Returns `false` on a positive cycle.
    pub fn from_source(&mut self, graph: &DiffGraph, source: u32) -> bool {
        self.times.iter_mut().for_each(|t| *t = f64::NEG_INFINITY);
        self.relax.iter_mut().for_each(|c| *c = 0);
        self.times[source as usize] = 0.0;
        self.queue.clear();
        self.in_queue.iter_mut().for_each(|b| *b = false);
        self.queue.push_back(source);
        self.in_queue[source as usize] = true;
        self.sweep(graph)
    }
}

fn same_direction_arcs(
    inst: &Instance,
    ord: &Ordering,
    group: &[usize],
    graph: &mut DiffGraph,
) -> Result<()> {
    let n = inst.n();
    for i in 0..group.len() {
        for j in (i + 1)..group.len() {
            let (a, b) = (group[i], group[j]);
            for k in 1..=n {
                let phys = inst.phys(a, k);
                let lag = inst.safety[phys - 1];
                match ord.same_direction(k, a, b)? {
                    Some(true) => graph.add_arc(graph.dep_node(a, k), graph.dep_node(b, k), lag),
                    Some(false) => graph.add_arc(graph.dep_node(b, k), graph.dep_node(a, k), lag),
                    None => {
                        return Err(Error::IncompleteOrdering(format!(
                            "same-direction pair #{a}/#{b} undecided at step {k}"
                        )))
                    }
                }
            }
        }
    }
    Ok(())
}

/// Base arcs shared by every solve: first departures not before their floor,
/// run times, and station stop times.
pub(crate) fn base_arcs(inst: &Instance, floors: Option<&[f64]>, graph: &mut DiffGraph) {
    let n = inst.n();
    for t in 0..inst.trains.len() {
        let floor = floors.map_or(0.0, |f| f[t]);
        graph.add_arc(DiffGraph::ORIGIN, graph.dep_node(t, 1), floor);
        for k in 1..=n {
            graph.add_arc(
                graph.dep_node(t, k),
                graph.arr_node(t, k),
                inst.trains[t].min_run[k - 1],
            );
        }
        for k in 1..n {
            let stop = inst.stop_time(t, inst.station_after(t, k));
            graph.add_arc(graph.arr_node(t, k), graph.dep_node(t, k + 1), stop);
        }
    }
}

pub(crate) fn opposing_arc(
    inst: &Instance,
    graph: &DiffGraph,
    s: usize,
    t: usize,
    r: usize,
    departing_first: bool,
) -> (u32, u32) {
    let n = inst.n();
    let kr = n + 1 - s;
    if departing_first {
        (graph.arr_node(t, s), graph.dep_node(r, kr))
    } else {
        (graph.arr_node(r, kr), graph.dep_node(t, s))
    }
}

/// Translates a complete set of precedence decisions into the full
/// difference-constraint system for `inst`.
pub fn build_constraint_graph(inst: &Instance, ord: &Ordering) -> Result<DiffGraph> {
    build_constraint_graph_with_floors(inst, ord, None)
}

/// Same as [`build_constraint_graph`], with an optional per-train lower bound
/// on the first departure (used to honor freight release dates).
pub fn build_constraint_graph_with_floors(
    inst: &Instance,
    ord: &Ordering,
    floors: Option<&[f64]>,
) -> Result<DiffGraph> {
    let n = inst.n();
    let mut graph = DiffGraph::new(inst.trains.len(), n);
    base_arcs(inst, floors, &mut graph);
    same_direction_arcs(inst, ord, &inst.departing(), &mut graph)?;
    same_direction_arcs(inst, ord, &inst.returning(), &mut graph)?;
    for &t in &inst.departing() {
        for &r in &inst.returning() {
            for s in 1..=n {
                match ord.opposing(s, t, r)? {
                    Some(first) => {
                        let (from, to) = opposing_arc(inst, &graph, s, t, r, first);
                        graph.add_arc(from, to, 0.0);
                    }
                    None => {
                        return Err(Error::IncompleteOrdering(format!(
                            "opposing pair #{t}/#{r} undecided on segment {s}"
                        )))
                    }
                }
            }
        }
    }
    Ok(graph)
}

/// Latest departure times consistent with the given arrival times, computed
/// by one backward pass over the arcs. Arrival nodes and the origin stay
/// pinned; only departure nodes move.
pub(crate) fn latest_departures(graph: &DiffGraph, times: &[f64]) -> Result<Vec<f64>> {
    let nodes = graph.node_count();
    let mut is_dep = vec![false; nodes];
    for t in 0..graph.trains() {
        for k in 1..=graph.segments() {
            is_dep[graph.dep_node(t, k) as usize] = true;
        }
    }
    let mut incoming: Vec<Vec<u32>> = vec![Vec::new(); nodes];
    for (id, arc) in graph.arcs().iter().enumerate() {
        incoming[arc.to as usize].push(id as u32);
    }
    let mut late: Vec<f64> = (0..nodes)
        .map(|v| if is_dep[v] { f64::INFINITY } else { times[v] })
        .collect();
    let mut queue: VecDeque<u32> = (0..nodes as u32).collect();
    let mut in_queue = vec![true; nodes];
    let mut relax_count = vec![0u32; nodes];
    while let Some(v) = queue.pop_front() {
        in_queue[v as usize] = false;
        for &aid in &incoming[v as usize] {
            let arc = graph.arcs()[aid as usize];
            let u = arc.from as usize;
            if !is_dep[u] {
                continue;
            }
            let cap = late[v as usize] - arc.bound;
            if cap < late[u] {
                late[u] = cap;
                relax_count[u] += 1;
                if relax_count[u] as usize > nodes + 1 {
                    return Err(Error::InfeasibleInput(
                        "backward pass diverged; input schedule was not feasible".into(),
                    ));
                }
                if !in_queue[u] {
                    in_queue[u] = true;
                    queue.push_back(arc.from);
                }
            }
        }
    }
    // A departure with no cap above it keeps its current time.
    for v in 0..nodes {
        if late[v].is_infinite() {
            late[v] = times[v];
        }
    }
    Ok(late)
}

pub(crate) fn apply_latest_departures(graph: &DiffGraph, times: &mut [f64]) -> Result<()> {
    let late = latest_departures(graph, times)?;
    for t in 0..graph.trains() {
        for k in 1..=graph.segments() {
            let d = graph.dep_node(t, k) as usize;
            times[d] = late[d];
        }
    }
    Ok(())
}

/// Pushes every departure as late as the constraints allow while holding all
/// arrivals fixed. The result stays feasible and its weighted travel time
/// never exceeds the input's. The precedence decisions are read off the
/// schedule itself.
pub fn tighten_departures(inst: &Instance, sched: &Schedule) -> Result<Schedule> {
    let violations = crate::model::validate_schedule(inst, sched)?;
    if !violations.is_empty() {
        return Err(Error::InfeasibleSchedule(violations));
    }
    let ord = ordering_from_schedule(inst, sched)?;
    let graph = build_constraint_graph(inst, &ord)?;
    let mut times = vec![0.0; graph.node_count()];
    for t in 0..inst.trains.len() {
        for k in 1..=inst.n() {
            times[graph.dep_node(t, k) as usize] = sched.dep_at(t, k);
            times[graph.arr_node(t, k) as usize] = sched.arr_at(t, k);
        }
    }
    apply_latest_departures(&graph, &mut times)?;
    let mut out = graph.schedule_from_times(&times);
    out.objective = objective_value(inst, &out, ObjectiveKind::WeightedTravelTime);
    Ok(out)
}

/// Evaluates a schedule under the chosen objective.
pub fn objective_value(inst: &Instance, sched: &Schedule, kind: ObjectiveKind) -> f64 {
    match kind {
        ObjectiveKind::TotalDeparture => (0..inst.trains.len())
            .map(|t| sched.first_departure(t))
            .sum(),
        ObjectiveKind::TotalArrival => (0..inst.trains.len()).map(|t| sched.final_arrival(t)).sum(),
        ObjectiveKind::WeightedTravelTime => (0..inst.trains.len())
            .map(|t| {
                inst.trains[t].priority * (sched.final_arrival(t) - sched.first_departure(t))
            })
            .sum(),
    }
}

/// Solves the timing problem for a complete set of precedence decisions.
///
/// Earliest times already minimize the total-departure and total-arrival
/// objectives for fixed decisions, so those are returned as-is; for weighted
/// travel time the departures are tightened against the earliest arrivals
/// first.
pub fn solve_fixed_order(inst: &Instance, ord: &Ordering, kind: ObjectiveKind) -> Result<TimingOutcome> {
    solve_fixed_order_with_floors(inst, ord, kind, None)
}

/// [`solve_fixed_order`] with per-train first-departure floors.
pub fn solve_fixed_order_with_floors(
    inst: &Instance,
    ord: &Ordering,
    kind: ObjectiveKind,
    floors: Option<&[f64]>,
) -> Result<TimingOutcome> {
    let graph = build_constraint_graph_with_floors(inst, ord, floors)?;
    let mut prop = match Propagator::new(graph) {
        Ok(p) => p,
        Err(cycle) => return Ok(TimingOutcome::Infeasible(cycle)),
    };
    let mut times = std::mem::take(&mut prop.times);
    if kind == ObjectiveKind::WeightedTravelTime {
        apply_latest_departures(&prop.graph, &mut times)?;
    }
    let mut sched = prop.graph.schedule_from_times(&times);
    sched.objective = objective_value(inst, &sched, kind);
    Ok(TimingOutcome::Feasible(sched))
}
