//! Exact solvers: best-first branch-and-bound over the pairwise precedence
//! decisions for the scheduling problem, and an exact search over per-freight
//! train choices for the allocation problem.
//!
//! Disjunctions are branched, never relaxed, so no big-M constant enters the
//! search. Opposing-pair decisions are branched before same-direction ones,
//! most contended physical segment first, because they constrain the timing
//! graph the most.

use serde::Serialize;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::alloc::{derive_arrivals, Allocation};
use crate::heuristic::decode_sequences;
use crate::model::{validate_instance, Direction, Instance, ObjectiveKind, Ordering, Schedule};
use crate::timing::{
    base_arcs, earliest_times, objective_value, solve_fixed_order, DiffGraph, TimingOutcome,
};
use crate::{Error, Result, TIME_EPS};

/// Limits for one exact solve. `None` means unlimited.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveBudget {
    pub max_nodes: Option<u64>,
    pub max_seconds: Option<f64>,
}

impl SolveBudget {
    pub fn unlimited() -> Self {
        SolveBudget::default()
    }

    pub fn seconds(s: f64) -> Self {
        SolveBudget {
            max_nodes: None,
            max_seconds: Some(s),
        }
    }

    fn exhausted(&self, nodes: u64, started: Instant) -> bool {
        if let Some(limit) = self.max_nodes {
            if nodes >= limit {
                return true;
            }
        }
        if let Some(limit) = self.max_seconds {
            if started.elapsed().as_secs_f64() >= limit {
                return true;
            }
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    BudgetExhausted,
}

/// Outcome of an exact scheduling solve, Table-style: bounds, gap, node and
/// time accounting, plus the incumbent schedule itself.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub schedule: Schedule,
    pub objective: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub nodes_explored: u64,
    pub cpu_seconds: f64,
    pub status: SolveStatus,
    /// `(nodes_explored, objective)` at every incumbent improvement.
    pub incumbent_history: Vec<(u64, f64)>,
}

impl SolveReport {
    /// The report document consumed by the command line tools (the schedule
    /// itself travels in its own document).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "status": self.status,
            "objective": self.objective,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "gap": self.gap,
            "nodes_explored": self.nodes_explored,
            "cpu_seconds": self.cpu_seconds,
        })
    }
}

/// Relative optimality gap with the conventions used in solver tables:
/// zero when the bounds meet, infinite against a zero lower bound.
pub fn relative_gap(lower: f64, upper: f64) -> f64 {
    if (upper - lower).abs() <= 1e-12 {
        0.0
    } else if lower.abs() < 1e-12 {
        f64::INFINITY
    } else {
        (upper - lower) / lower
    }
}

fn round_tenth(seconds: f64) -> f64 {
    (seconds * 10.0).round() / 10.0
}

/// One branch-and-bound node: a partial set of precedence decisions plus the
/// lower bound it admits.
#[derive(Debug, Clone)]
pub struct BnbNode {
    pub ordering: Ordering,
    pub bound: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    Opposing { s: usize, t: usize, r: usize },
    SameDir { k: usize, a: usize, b: usize },
}

/// Free-run earliest times (base arcs only, no interactions).
fn free_run_schedule(inst: &Instance) -> Schedule {
    let mut graph = DiffGraph::new(inst.trains.len(), inst.n());
    base_arcs(inst, None, &mut graph);
    match earliest_times(&graph) {
        TimingOutcome::Feasible(s) => s,
        TimingOutcome::Infeasible(_) => unreachable!("base arcs form a forest of chains"),
    }
}

/// Static branching order: opposing decisions first, ordered by how much the
/// free-run occupation intervals of opposing trains overlap per physical
/// segment, then same-direction decisions over the same segment order.
fn decision_order(inst: &Instance) -> Vec<Decision> {
    let n = inst.n();
    let free = free_run_schedule(inst);
    let departing = inst.departing();
    let returning = inst.returning();
    let mut contention: Vec<(f64, usize)> = (1..=n)
        .map(|s| {
            let mut total = 0.0;
            for &t in &departing {
                for &r in &returning {
                    let kr = n + 1 - s;
                    let lo = free.dep_at(t, s).max(free.dep_at(r, kr));
                    let hi = free.arr_at(t, s).min(free.arr_at(r, kr));
                    total += (hi - lo).max(0.0);
                }
            }
            (total, s)
        })
        .collect();
    contention.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let segment_order: Vec<usize> = contention.into_iter().map(|(_, s)| s).collect();

    let mut decisions = Vec::new();
    for &s in &segment_order {
        for &t in &departing {
            for &r in &returning {
                decisions.push(Decision::Opposing { s, t, r });
            }
        }
    }
    for group in [&departing, &returning] {
        for &s in &segment_order {
            let k = match group.first().map(|&t| inst.trains[t].direction) {
                Some(Direction::Returning) => n + 1 - s,
                _ => s,
            };
            for i in 0..group.len() {
                for j in (i + 1)..group.len() {
                    decisions.push(Decision::SameDir {
                        k,
                        a: group[i],
                        b: group[j],
                    });
                }
            }
        }
    }
    decisions
}

/// Which side of a decision to try first: the train that would reach the
/// contested segment earlier when running free.
fn preferred_value(inst: &Instance, free: &Schedule, decision: Decision) -> bool {
    match decision {
        Decision::Opposing { s, t, r } => {
            let kr = inst.n() + 1 - s;
            free.dep_at(t, s) <= free.dep_at(r, kr)
        }
        Decision::SameDir { k, a, b } => free.dep_at(a, k) <= free.dep_at(b, k),
    }
}

fn apply_decision(ord: &mut Ordering, decision: Decision, value: bool) -> Result<()> {
    match decision {
        Decision::Opposing { s, t, r } => ord.set_opposing(s, t, r, value),
        Decision::SameDir { k, a, b } => {
            if value {
                ord.set_same_direction(k, a, b)
            } else {
                ord.set_same_direction(k, b, a)
            }
        }
    }
}

fn ordering_from_prefix(
    inst: &Instance,
    order: &[Decision],
    values: &[bool],
) -> Result<Ordering> {
    let mut ord = Ordering::new(inst);
    for (decision, &value) in order.iter().zip(values) {
        apply_decision(&mut ord, *decision, value)?;
    }
    Ok(ord)
}

/// Base arcs plus every decided precedence arc; undecided pairs contribute
/// nothing (that is the relaxation).
fn partial_graph(inst: &Instance, ord: &Ordering) -> DiffGraph {
    let n = inst.n();
    let mut graph = DiffGraph::new(inst.trains.len(), n);
    base_arcs(inst, None, &mut graph);
    for group in [inst.departing(), inst.returning()] {
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                let (a, b) = (group[i], group[j]);
                for k in 1..=n {
                    let lag = inst.safety[inst.phys(a, k) - 1];
                    match ord.same_direction(k, a, b).expect("valid pair") {
                        Some(true) => {
                            graph.add_arc(graph.dep_node(a, k), graph.dep_node(b, k), lag)
                        }
                        Some(false) => {
                            graph.add_arc(graph.dep_node(b, k), graph.dep_node(a, k), lag)
                        }
                        None => {}
                    }
                }
            }
        }
    }
    for &t in &inst.departing() {
        for &r in &inst.returning() {
            for s in 1..=n {
                if let Some(first) = ord.opposing(s, t, r).expect("valid pair") {
                    let (from, to) = crate::timing::opposing_arc(inst, &graph, s, t, r, first);
                    graph.add_arc(from, to, 0.0);
                }
            }
        }
    }
    graph
}

fn longest_path_from(graph: &DiffGraph, source: u32) -> Vec<f64> {
    let nodes = graph.node_count();
    let mut value = vec![f64::NEG_INFINITY; nodes];
    value[source as usize] = 0.0;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(source);
    let mut in_queue = vec![false; nodes];
    in_queue[source as usize] = true;
    while let Some(v) = queue.pop_front() {
        in_queue[v as usize] = false;
        for &aid in graph.outgoing(v) {
            let arc = graph.arcs()[aid as usize];
            let cand = value[v as usize] + arc.bound;
            if cand > value[arc.to as usize] {
                value[arc.to as usize] = cand;
                if !in_queue[arc.to as usize] {
                    in_queue[arc.to as usize] = true;
                    queue.push_back(arc.to);
                }
            }
        }
    }
    value
}

/// Lower bound on the objective of every completion of a partial set of
/// precedence decisions. Infeasible partial sets bound to infinity. At a
/// complete node the bound is the node's own solved objective.
pub fn scheduling_lower_bound(inst: &Instance, node: &BnbNode, kind: ObjectiveKind) -> f64 {
    if node.ordering.is_complete() {
        return match solve_fixed_order(inst, &node.ordering, kind) {
            Ok(TimingOutcome::Feasible(s)) => s.objective,
            _ => f64::INFINITY,
        };
    }
    let graph = partial_graph(inst, &node.ordering);
    let earliest = match earliest_times(&graph) {
        TimingOutcome::Feasible(s) => s,
        TimingOutcome::Infeasible(_) => return f64::INFINITY,
    };
    match kind {
        ObjectiveKind::TotalDeparture | ObjectiveKind::TotalArrival => {
            objective_value(inst, &earliest, kind)
        }
        ObjectiveKind::WeightedTravelTime => {
            // Each train's travel time in any completion is at least the
            // longest path from its first departure to its last arrival over
            // the already-fixed arcs (never below free-run).
            let n = inst.n();
            (0..inst.trains.len())
                .map(|t| {
                    let reach = longest_path_from(&graph, graph.dep_node(t, 1));
                    let lp = reach[graph.arr_node(t, n) as usize];
                    inst.trains[t].priority * lp.max(inst.free_run(t))
                })
                .sum()
        }
    }
}

/// Reusable node-bound evaluator: one graph with the base arcs pinned, the
/// decided arcs re-added per evaluation, and scratch buffers for the sweeps.
struct BoundEvaluator<'a> {
    inst: &'a Instance,
    kind: ObjectiveKind,
    order: &'a [Decision],
    graph: DiffGraph,
    base_mark: usize,
    earliest: crate::timing::SpfaScratch,
    reach: crate::timing::SpfaScratch,
    free_run: Vec<f64>,
}

impl<'a> BoundEvaluator<'a> {
    fn new(inst: &'a Instance, kind: ObjectiveKind, order: &'a [Decision]) -> Self {
        let mut graph = DiffGraph::new(inst.trains.len(), inst.n());
        base_arcs(inst, None, &mut graph);
        let base_mark = graph.mark();
        let nodes = graph.node_count();
        BoundEvaluator {
            inst,
            kind,
            order,
            graph,
            base_mark,
            earliest: crate::timing::SpfaScratch::new(nodes),
            reach: crate::timing::SpfaScratch::new(nodes),
            free_run: (0..inst.trains.len()).map(|t| inst.free_run(t)).collect(),
        }
    }

    fn add_decision_arc(&mut self, decision: Decision, value: bool) {
        match decision {
            Decision::Opposing { s, t, r } => {
                let (from, to) = crate::timing::opposing_arc(self.inst, &self.graph, s, t, r, value);
                self.graph.add_arc(from, to, 0.0);
            }
            Decision::SameDir { k, a, b } => {
                let lag = self.inst.safety[self.inst.phys(a, k) - 1];
                let (first, second) = if value { (a, b) } else { (b, a) };
                let from = self.graph.dep_node(first, k);
                let to = self.graph.dep_node(second, k);
                self.graph.add_arc(from, to, lag);
            }
        }
    }

    /// Lower bound of every completion of the prefix; infinity when the
    /// prefix is already contradictory.
    fn bound(&mut self, values: &[bool]) -> f64 {
        self.graph.rollback(self.base_mark);
        for (decision, &value) in self.order.iter().zip(values) {
            self.add_decision_arc(*decision, value);
        }
        if !self.earliest.earliest(&self.graph) {
            return f64::INFINITY;
        }
        let n = self.inst.n();
        match self.kind {
            ObjectiveKind::TotalDeparture => (0..self.inst.trains.len())
                .map(|t| self.earliest.times[self.graph.dep_node(t, 1) as usize])
                .sum(),
            ObjectiveKind::TotalArrival => (0..self.inst.trains.len())
                .map(|t| self.earliest.times[self.graph.arr_node(t, n) as usize])
                .sum(),
            ObjectiveKind::WeightedTravelTime => {
                let mut total = 0.0;
                for t in 0..self.inst.trains.len() {
                    if !self.reach.from_source(&self.graph, self.graph.dep_node(t, 1)) {
                        return f64::INFINITY;
                    }
                    let lp = self.reach.times[self.graph.arr_node(t, n) as usize];
                    total += self.inst.trains[t].priority * lp.max(self.free_run[t]);
                }
                total
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct HeapEntry {
    bound: f64,
    depth: usize,
    id: u64,
    values: Vec<bool>,
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Bound first; among equal bounds prefer deeper nodes (dive toward
        // incumbents instead of sweeping the frontier), then creation order.
        self.bound
            .total_cmp(&other.bound)
            .then(other.depth.cmp(&self.depth))
            .then(self.id.cmp(&other.id))
    }
}

/// Solves the scheduling problem to proven optimality by best-first
/// branch-and-bound over the precedence decisions, subject to the budget.
/// When the budget runs out the report carries the best incumbent and an
/// honest gap.
pub fn solve_scheduling_exact(
    inst: &Instance,
    kind: ObjectiveKind,
    budget: SolveBudget,
) -> Result<SolveReport> {
    let defects = validate_instance(inst);
    if !defects.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "instance has {} defect(s); first: {}",
            defects.len(),
            defects[0]
        )));
    }
    let started = Instant::now();
    let order = decision_order(inst);
    let free = free_run_schedule(inst);

    // Initial incumbent: decode the identity sequences. Always feasible, so
    // budget-exhausted reports still carry a schedule and a finite gap.
    let seed_ord = decode_sequences(inst, &inst.departing(), &inst.returning())?;
    let seed = match solve_fixed_order(inst, &seed_ord, kind)? {
        TimingOutcome::Feasible(s) => s,
        TimingOutcome::Infeasible(_) => {
            return Err(Error::InfeasibleInput(
                "decoded seed ordering is infeasible".into(),
            ))
        }
    };
    let mut incumbent = seed;
    let mut incumbent_history = vec![(0u64, incumbent.objective)];

    let mut evaluator = BoundEvaluator::new(inst, kind, &order);
    let root_bound = evaluator.bound(&[]);
    let mut heap: BinaryHeap<Reverse<HeapEntry>> = BinaryHeap::new();
    let mut next_id = 0u64;
    heap.push(Reverse(HeapEntry {
        bound: root_bound,
        depth: 0,
        id: next_id,
        values: Vec::new(),
    }));
    next_id += 1;

    let mut nodes_explored = 0u64;
    let mut status = SolveStatus::Optimal;
    let mut lower_bound = root_bound;

    while let Some(Reverse(entry)) = heap.pop() {
        if budget.exhausted(nodes_explored, started) {
            status = SolveStatus::BudgetExhausted;
            lower_bound = entry.bound.min(incumbent.objective);
            break;
        }
        nodes_explored += 1;
        if entry.bound >= incumbent.objective - 1e-12 {
            // Best-first order: nothing left can beat the incumbent.
            lower_bound = incumbent.objective;
            break;
        }
        if entry.depth == order.len() {
            let ordering = ordering_from_prefix(inst, &order, &entry.values)?;
            if let TimingOutcome::Feasible(s) = solve_fixed_order(inst, &ordering, kind)? {
                if s.objective < incumbent.objective - 1e-12 {
                    incumbent = s;
                    incumbent_history.push((nodes_explored, incumbent.objective));
                }
            }
            if heap.is_empty() {
                lower_bound = incumbent.objective;
            }
            continue;
        }
        let decision = order[entry.depth];
        let preferred = preferred_value(inst, &free, decision);
        for value in [preferred, !preferred] {
            let mut values = entry.values.clone();
            values.push(value);
            let bound = evaluator.bound(&values);
            if bound.is_finite() && bound < incumbent.objective - 1e-12 {
                heap.push(Reverse(HeapEntry {
                    bound,
                    depth: entry.depth + 1,
                    id: next_id,
                    values,
                }));
                next_id += 1;
            }
        }
        if heap.is_empty() {
            lower_bound = incumbent.objective;
        }
    }
    if status == SolveStatus::Optimal {
        lower_bound = incumbent.objective;
    }

    let upper_bound = incumbent.objective;
    Ok(SolveReport {
        objective: upper_bound,
        schedule: incumbent,
        lower_bound,
        upper_bound,
        gap: relative_gap(lower_bound, upper_bound),
        nodes_explored,
        cpu_seconds: round_tenth(started.elapsed().as_secs_f64()),
        status,
        incumbent_history,
    })
}

// ---------------------------------------------------------------------------
// Exact freight allocation
// ---------------------------------------------------------------------------

struct AllocationSearch<'a> {
    inst: &'a Instance,
    /// Freight indices in search order (heaviest first).
    freight_order: Vec<usize>,
    /// Feasible carrying trains per freight, in departing order.
    choices: Vec<Vec<usize>>,
    /// Assignment cost per (freight, choice): priority * (tardiness - 1).
    costs: Vec<Vec<f64>>,
    /// Most negative achievable cost per freight (0 when all costs positive).
    best_gain: Vec<f64>,
    suffix_weight: Vec<f64>,
    floors: Vec<f64>,
    departing: Vec<usize>,
    budget: SolveBudget,
    started: Instant,
    nodes: u64,
    best_unmet: usize,
    best_objective: f64,
    best_assign: Vec<Option<usize>>,
}

impl<'a> AllocationSearch<'a> {
    fn unmet_floors(&self, load: &[f64]) -> usize {
        self.departing
            .iter()
            .filter(|&&t| load[t] + TIME_EPS < self.floors[t])
            .count()
    }

    fn consider(&mut self, assign: &[Option<usize>], load: &[f64], objective: f64) {
        let unmet = self.unmet_floors(load);
        if unmet < self.best_unmet
            || (unmet == self.best_unmet && objective < self.best_objective - 1e-12)
        {
            self.best_unmet = unmet;
            self.best_objective = objective;
            self.best_assign = assign.to_vec();
        }
    }

    fn dfs(
        &mut self,
        position: usize,
        assign: &mut Vec<Option<usize>>,
        load: &mut Vec<f64>,
        objective: f64,
    ) {
        self.nodes += 1;
        if self.budget.exhausted(self.nodes, self.started) {
            return;
        }
        if position == self.freight_order.len() {
            self.consider(assign, load, objective);
            return;
        }
        // Bound: floors that even the whole remaining tonnage cannot fill,
        // and the objective assuming every remaining gain materializes.
        let remaining = self.suffix_weight[position];
        let unmet_lb = self
            .departing
            .iter()
            .filter(|&&t| load[t] + remaining + TIME_EPS < self.floors[t])
            .count();
        let gain_lb: f64 = self.freight_order[position..]
            .iter()
            .map(|&j| self.best_gain[j])
            .sum();
        let objective_lb = objective + gain_lb;
        if unmet_lb > self.best_unmet
            || (unmet_lb == self.best_unmet && objective_lb >= self.best_objective - 1e-12)
        {
            return;
        }
        let j = self.freight_order[position];
        let weight = self.inst.freights[j].weight;
        for c in 0..self.choices[j].len() {
            let t = self.choices[j][c];
            if load[t] + weight > self.inst.trains[t].capacity + TIME_EPS {
                continue;
            }
            let cost = self.costs[j][c];
            assign[j] = Some(t);
            load[t] += weight;
            self.dfs(position + 1, assign, load, objective + cost);
            load[t] -= weight;
            assign[j] = None;
        }
        self.dfs(position + 1, assign, load, objective);
    }
}

/// Exact freight-to-train allocation against a fixed schedule: minimizes the
/// allocation objective, relaxing capacity floors only for trains whose floor
/// no assignment can reach (fewest relaxed trains first, then objective).
/// Small problems are fully enumerated; larger ones run a depth-first search
/// with the same semantics.
pub fn solve_allocation_exact(
    inst: &Instance,
    sched: &Schedule,
    budget: SolveBudget,
) -> Result<(Allocation, f64)> {
    let freights = inst.freights.len();
    let trains = inst.trains.len();
    if sched.dep.len() != trains || sched.arr.len() != trains {
        return Err(Error::MalformedSchedule(format!(
            "schedule covers {} trains, instance has {trains}",
            sched.dep.len().min(sched.arr.len())
        )));
    }
    let departing = inst.departing();
    let floors: Vec<f64> = (0..trains)
        .map(|t| inst.capacity_floor * inst.trains[t].capacity)
        .collect();
    let mut choices: Vec<Vec<usize>> = Vec::with_capacity(freights);
    let mut costs: Vec<Vec<f64>> = Vec::with_capacity(freights);
    let mut best_gain = vec![0.0f64; freights];
    for (j, fr) in inst.freights.iter().enumerate() {
        let mut trains_for = Vec::new();
        let mut costs_for = Vec::new();
        for &t in &departing {
            let fits = fr.weight <= inst.trains[t].capacity + TIME_EPS;
            let release_ok =
                sched.first_departure(t) + TIME_EPS >= fr.release + inst.trains[t].load[0];
            if fits && release_ok {
                let cost =
                    fr.priority * (crate::alloc::tardiness(sched.final_arrival(t), fr.due) - 1.0);
                trains_for.push(t);
                costs_for.push(cost);
                if cost < best_gain[j] {
                    best_gain[j] = cost;
                }
            }
        }
        choices.push(trains_for);
        costs.push(costs_for);
    }
    let mut freight_order: Vec<usize> = (0..freights).collect();
    freight_order.sort_by(|&a, &b| {
        inst.freights[b]
            .weight
            .total_cmp(&inst.freights[a].weight)
            .then(a.cmp(&b))
    });
    let mut suffix_weight = vec![0.0f64; freights + 1];
    for i in (0..freights).rev() {
        suffix_weight[i] = suffix_weight[i + 1] + inst.freights[freight_order[i]].weight;
    }
    let mut search = AllocationSearch {
        inst,
        freight_order,
        choices,
        costs,
        best_gain,
        suffix_weight,
        floors,
        departing,
        budget,
        started: Instant::now(),
        nodes: 0,
        best_unmet: usize::MAX,
        best_objective: f64::INFINITY,
        best_assign: vec![None; freights],
    };
    // The all-unassigned allocation is always admissible.
    let empty_load = vec![0.0; trains];
    search.best_unmet = search.unmet_floors(&empty_load);
    search.best_objective = 0.0;
    let mut assign = vec![None; freights];
    let mut load = vec![0.0; trains];
    search.dfs(0, &mut assign, &mut load, 0.0);

    let mut alloc = Allocation::from_assignment(search.best_assign.clone(), trains);
    let mut load = vec![0.0f64; trains];
    for (j, &a) in alloc.assign.iter().enumerate() {
        if let Some(t) = a {
            load[t] += inst.freights[j].weight;
        }
    }
    for &t in &search.departing {
        alloc.relax[t] = load[t] + TIME_EPS < search.floors[t];
    }
    let alloc = derive_arrivals(inst, sched, &alloc)?;
    Ok((alloc, search.best_objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::check_allocation;
    use crate::gen;
    use crate::model::{validate_schedule, Corridor, Train};

    fn mk_train(id: &str, direction: Direction, n: usize, run: f64) -> Train {
        Train {
            id: id.into(),
            direction,
            priority: 1.0,
            capacity: 100.0,
            min_run: vec![run; n],
            load: vec![0.0; n + 1],
            unload: vec![0.0; n + 1],
            dwell: vec![0.0; n + 1],
        }
    }

    fn mk_instance(n: usize, trains: Vec<Train>, safety: Vec<f64>) -> Instance {
        let mut inst = Instance {
            corridor: Corridor::new(n),
            safety,
            big_m: 1.0,
            capacity_floor: 0.6,
            trains,
            freights: vec![],
        };
        inst.big_m = 10.0 * inst.horizon_estimate();
        inst
    }

    /// Exhaustive enumeration over every pairwise decision combination,
    /// composed with the fixed-order solve. Independent of the search.
    fn enumeration_optimum(inst: &Instance, kind: ObjectiveKind) -> f64 {
        let n = inst.n();
        let departing = inst.departing();
        let returning = inst.returning();
        let mut slots: Vec<(bool, usize, usize, usize)> = Vec::new(); // (opposing?, seg/step, x, y)
        for k in 1..=n {
            for i in 0..departing.len() {
                for j in (i + 1)..departing.len() {
                    slots.push((false, k, departing[i], departing[j]));
                }
            }
            for i in 0..returning.len() {
                for j in (i + 1)..returning.len() {
                    slots.push((false, k, returning[i], returning[j]));
                }
            }
            for &t in &departing {
                for &r in &returning {
                    slots.push((true, k, t, r));
                }
            }
        }
        assert!(slots.len() <= 20, "enumeration oracle limited to 2^20");
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << slots.len()) {
            let mut ord = Ordering::new(inst);
            for (bit, &(opposing, seg, x, y)) in slots.iter().enumerate() {
                let value = mask & (1 << bit) != 0;
                if opposing {
                    ord.set_opposing(seg, x, y, value).unwrap();
                } else if value {
                    ord.set_same_direction(seg, x, y).unwrap();
                } else {
                    ord.set_same_direction(seg, y, x).unwrap();
                }
            }
            if let TimingOutcome::Feasible(s) = solve_fixed_order(inst, &ord, kind).unwrap() {
                best = best.min(s.objective);
            }
        }
        best
    }

    #[test]
    fn single_train_solves_in_one_node() {
        let inst = mk_instance(
            2,
            vec![mk_train("t1", Direction::Departing, 2, 2.0)],
            vec![1.0, 1.0],
        );
        let report =
            solve_scheduling_exact(&inst, ObjectiveKind::WeightedTravelTime, SolveBudget::unlimited())
                .unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        assert_eq!(report.nodes_explored, 1);
        assert!((report.objective - inst.free_run(0)).abs() < 1e-9);
        assert!(report.gap <= 1e-9);
        assert_eq!(report.lower_bound, report.upper_bound);
    }

    #[test]
    fn symmetric_pair_puts_total_departure_at_the_safety_lag() {
        let inst = mk_instance(
            1,
            vec![
                mk_train("t1", Direction::Departing, 1, 2.0),
                mk_train("t2", Direction::Departing, 1, 2.0),
            ],
            vec![1.0],
        );
        let report =
            solve_scheduling_exact(&inst, ObjectiveKind::TotalDeparture, SolveBudget::unlimited())
                .unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        assert!((report.objective - 1.0).abs() < 1e-9);
        let deps = [
            report.schedule.first_departure(0),
            report.schedule.first_departure(1),
        ];
        let mut sorted = deps;
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, [0.0, 1.0]);
    }

    #[test]
    fn matches_enumeration_on_small_instances() {
        for seed in [1u64, 5, 9] {
            let inst = gen::generate(2, 2, 1, 0, seed);
            for kind in [
                ObjectiveKind::TotalDeparture,
                ObjectiveKind::TotalArrival,
                ObjectiveKind::WeightedTravelTime,
            ] {
                let report =
                    solve_scheduling_exact(&inst, kind, SolveBudget::unlimited()).unwrap();
                assert_eq!(report.status, SolveStatus::Optimal);
                let oracle = enumeration_optimum(&inst, kind);
                assert!(
                    (report.objective - oracle).abs() <= 1e-9,
                    "seed {seed}: search found {}, enumeration {oracle}",
                    report.objective
                );
                assert_eq!(validate_schedule(&inst, &report.schedule).unwrap(), vec![]);
            }
        }
    }

    #[test]
    fn incumbents_never_worsen() {
        let inst = gen::generate(2, 2, 2, 0, 11);
        let report =
            solve_scheduling_exact(&inst, ObjectiveKind::WeightedTravelTime, SolveBudget::unlimited())
                .unwrap();
        for w in report.incumbent_history.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
            assert!(w[1].0 >= w[0].0);
        }
        assert!(report.lower_bound <= report.upper_bound + 1e-12);
    }

    #[test]
    fn lower_bound_is_free_run_at_the_root_and_exact_at_leaves() {
        let inst = mk_instance(
            2,
            vec![mk_train("t1", Direction::Departing, 2, 2.0)],
            vec![1.0, 1.0],
        );
        let root = BnbNode {
            ordering: Ordering::new(&inst),
            bound: f64::NEG_INFINITY,
            depth: 0,
        };
        let bound = scheduling_lower_bound(&inst, &root, ObjectiveKind::WeightedTravelTime);
        assert!((bound - inst.free_run(0)).abs() < 1e-12);

        let inst2 = gen::generate(2, 2, 1, 0, 3);
        let ord = decode_sequences(&inst2, &inst2.departing(), &inst2.returning()).unwrap();
        let leaf = BnbNode {
            bound: f64::NEG_INFINITY,
            depth: 0,
            ordering: ord.clone(),
        };
        let solved = solve_fixed_order(&inst2, &ord, ObjectiveKind::WeightedTravelTime)
            .unwrap()
            .feasible()
            .unwrap();
        let bound = scheduling_lower_bound(&inst2, &leaf, ObjectiveKind::WeightedTravelTime);
        assert!((bound - solved.objective).abs() < 1e-12);

        // Root bound never exceeds the enumerated optimum.
        let root2 = BnbNode {
            ordering: Ordering::new(&inst2),
            bound: f64::NEG_INFINITY,
            depth: 0,
        };
        let lb = scheduling_lower_bound(&inst2, &root2, ObjectiveKind::WeightedTravelTime);
        assert!(lb <= enumeration_optimum(&inst2, ObjectiveKind::WeightedTravelTime) + 1e-12);
    }

    #[test]
    fn node_budget_reports_exhaustion_with_finite_gap() {
        let inst = gen::generate(3, 3, 2, 0, 2);
        let report = solve_scheduling_exact(
            &inst,
            ObjectiveKind::WeightedTravelTime,
            SolveBudget {
                max_nodes: Some(3),
                max_seconds: None,
            },
        )
        .unwrap();
        assert_eq!(report.status, SolveStatus::BudgetExhausted);
        assert!(report.gap.is_finite());
        assert!(report.lower_bound <= report.upper_bound + 1e-12);
        assert_eq!(validate_schedule(&inst, &report.schedule).unwrap(), vec![]);
    }

    /// Enumerates every freight-to-train map (including unassigned) and keeps
    /// the lexicographic best (fewest unmet floors, then objective).
    fn allocation_enumeration(inst: &Instance, sched: &Schedule) -> (usize, f64) {
        let departing = inst.departing();
        let freights = inst.freights.len();
        let options = departing.len() + 1;
        let mut best = (usize::MAX, f64::INFINITY);
        let combos = (options as u64).pow(freights as u32);
        for mut code in 0..combos {
            let mut load = vec![0.0; inst.trains.len()];
            let mut objective = 0.0;
            let mut ok = true;
            for j in 0..freights {
                let pick = (code % options as u64) as usize;
                code /= options as u64;
                if pick == departing.len() {
                    continue;
                }
                let t = departing[pick];
                let fr = &inst.freights[j];
                let release_ok =
                    sched.first_departure(t) + TIME_EPS >= fr.release + inst.trains[t].load[0];
                if !release_ok {
                    ok = false;
                    break;
                }
                load[t] += fr.weight;
                if load[t] > inst.trains[t].capacity + TIME_EPS {
                    ok = false;
                    break;
                }
                objective +=
                    fr.priority * (crate::alloc::tardiness(sched.final_arrival(t), fr.due) - 1.0);
            }
            if !ok {
                continue;
            }
            let unmet = departing
                .iter()
                .filter(|&&t| load[t] + TIME_EPS < inst.capacity_floor * inst.trains[t].capacity)
                .count();
            if unmet < best.0 || (unmet == best.0 && objective < best.1 - 1e-12) {
                best = (unmet, objective);
            }
        }
        best
    }

    fn desk_schedule(inst: &Instance) -> Schedule {
        let ord = decode_sequences(inst, &inst.departing(), &inst.returning()).unwrap();
        solve_fixed_order(inst, &ord, ObjectiveKind::WeightedTravelTime)
            .unwrap()
            .feasible()
            .unwrap()
    }

    #[test]
    fn allocation_matches_enumeration_on_the_desk_instance() {
        let inst = gen::desk_instance();
        let sched = desk_schedule(&inst);
        let (alloc, objective) =
            solve_allocation_exact(&inst, &sched, SolveBudget::unlimited()).unwrap();
        let (oracle_unmet, oracle_obj) = allocation_enumeration(&inst, &sched);
        let unmet = alloc.relax.iter().filter(|&&r| r).count();
        assert_eq!(unmet, oracle_unmet);
        assert!((objective - oracle_obj).abs() <= 1e-9);
        assert_eq!(check_allocation(&inst, &sched, &alloc).unwrap(), vec![]);
        // Every freight rides at most one train.
        for column in 0..inst.freights.len() {
            let rides: u8 = alloc
                .matrix(inst.trains.len())
                .iter()
                .map(|row| row[column])
                .sum();
            assert!(rides <= 1);
        }
    }

    #[test]
    fn empty_freight_set_allocates_nothing() {
        let inst = gen::generate(2, 2, 1, 0, 4);
        let sched = desk_schedule(&inst);
        let (alloc, objective) =
            solve_allocation_exact(&inst, &sched, SolveBudget::unlimited()).unwrap();
        assert_eq!(objective, 0.0);
        assert!(alloc.assign.is_empty());
    }

    #[test]
    fn forced_assignment_is_found() {
        let mut inst = gen::generate(1, 2, 0, 0, 8);
        inst.trains[0].capacity = 100.0;
        inst.trains[1].capacity = 100.0;
        for t in &mut inst.trains {
            t.load = vec![0.0, 0.0];
        }
        inst.freights = vec![crate::model::Freight {
            id: "j1".into(),
            priority: 1.0,
            weight: 90.0,
            due: 10.0,
            release: 4.0,
        }];
        inst.big_m = 10.0 * inst.horizon_estimate();
        // Only the second train departs late enough for the release date.
        let sched = Schedule {
            dep: vec![vec![0.0], vec![6.0]],
            arr: vec![vec![4.0], vec![10.0]],
            objective: 0.0,
        };
        let (alloc, _) = solve_allocation_exact(&inst, &sched, SolveBudget::unlimited()).unwrap();
        assert_eq!(alloc.assign, vec![Some(1)]);
        assert_eq!(alloc.wr[0], Some(10.0));
        assert_eq!(alloc.tardi[0], Some(0.0));
    }

    #[test]
    fn scaling_priorities_scales_the_objective_but_not_the_argmin() {
        let inst = gen::desk_instance();
        let sched = desk_schedule(&inst);
        let (alloc, objective) =
            solve_allocation_exact(&inst, &sched, SolveBudget::unlimited()).unwrap();
        let mut scaled = inst.clone();
        for fr in &mut scaled.freights {
            fr.priority *= 3.0;
        }
        let (alloc_scaled, objective_scaled) =
            solve_allocation_exact(&scaled, &sched, SolveBudget::unlimited()).unwrap();
        assert!((objective_scaled - 3.0 * objective).abs() < 1e-9);
        assert_eq!(alloc.assign, alloc_scaled.assign);
    }
}
