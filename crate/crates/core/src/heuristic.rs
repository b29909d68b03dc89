//! Population heuristic that solves scheduling and allocation together.
//!
//! Construction builds train sequences by rank-biased Monte-Carlo selection
//! over utilization scores after a greedy tentative freight assignment. Each
//! improvement round then partially reorders every member's sequences toward
//! a randomly chosen high-quality reference solution (the number of moved
//! trains scales with how bad the member is) and optionally runs an
//! adjacent-swap local search that keeps only fitness-improving swaps.
//! Movement is by resequencing rather than coordinate arithmetic, so each
//! train position improves independently of the others.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

use crate::alloc::{allocation_objective, derive_arrivals, Allocation};
use crate::model::{validate_instance, Direction, Instance, ObjectiveKind, Ordering, Schedule};
use crate::timing::{self, Propagator};
use crate::{Error, Result, TIME_EPS};

/// Tuning knobs of the heuristic. `elite_fraction` is the share of the
/// population eligible as reference solutions; `correction_strength` scales
/// how many trains a bad solution moves toward its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicParams {
    pub population: usize,
    pub elite_fraction: f64,
    pub correction_strength: f64,
    pub iterations: usize,
    pub seed: u64,
    pub opt_enabled: bool,
    pub allocation_weight: f64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            population: 30,
            elite_fraction: 0.2,
            correction_strength: 0.4,
            iterations: 200,
            seed: 0,
            opt_enabled: true,
            allocation_weight: 1.0,
        }
    }
}

impl HeuristicParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 1 {
            return Err(Error::InvalidArgument("population must be at least 1".into()));
        }
        if !(self.correction_strength > 0.0 && self.correction_strength < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "correction strength {} outside (0, 1)",
                self.correction_strength
            )));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "elite fraction {} outside (0, 1]",
                self.elite_fraction
            )));
        }
        if self.elite_fraction * (self.population as f64) < 1.0 - 1e-12 {
            return Err(Error::InvalidArgument(
                "elite fraction times population selects no reference solutions".into(),
            ));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if !self.allocation_weight.is_finite() || self.allocation_weight < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "allocation weight {} must be finite and nonnegative",
                self.allocation_weight
            )));
        }
        Ok(())
    }
}

/// One member of the population: train sequences per direction, the decoded
/// schedule and allocation they induce, each train's earliest arrival, and
/// the combined fitness (lower is better).
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub seq_dep: Vec<usize>,
    pub seq_ret: Vec<usize>,
    pub earliest: Vec<f64>,
    pub alloc: Allocation,
    pub sched: Schedule,
    pub fitness: f64,
}

/// Best fitness development over the run, one point per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
}

/// Outcome of [`run_heuristic`]: the best solution ever held plus the trace.
#[derive(Debug, Clone)]
pub struct HeuristicRun {
    pub best: Solution,
    pub trace: Vec<TracePoint>,
}

/// Independent RNG stream for one (member, iteration) pair, so that parallel
/// and serial evaluation orders draw identical numbers.
fn stream_rng(seed: u64, member: u64, iteration: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&member.to_le_bytes());
    key[16..24].copy_from_slice(&iteration.to_le_bytes());
    key[24..].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Utilization score of a train over its tentatively assigned freight:
/// priority-weighted freight tonnage per tonne of capacity. Empty trains
/// (returning trains in particular) score zero.
pub fn train_score(
    train: &crate::model::Train,
    assigned: &[&crate::model::Freight],
) -> Result<f64> {
    if assigned.is_empty() {
        return Ok(0.0);
    }
    if train.capacity <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "train {} has no capacity but carries freight",
            train.id
        )));
    }
    Ok(assigned
        .iter()
        .map(|f| f.priority * f.weight)
        .sum::<f64>()
        / train.capacity)
}

/// Linear ranking probabilities for an ascending-score pool of size `k`:
/// rank `i` (1 = lowest score, most preferred) gets `2(k - i + 1) / (k(k+1))`.
pub fn selection_probabilities(k: usize) -> Vec<f64> {
    let denom = (k * (k + 1)) as f64;
    (1..=k).map(|i| 2.0 * (k - i + 1) as f64 / denom).collect()
}

/// Draws an index with the given probabilities (roulette wheel).
pub fn monte_carlo_select<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::InvalidArgument("empty probability vector".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    let draw = rng.random::<f64>();
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}

fn validate_sequences(inst: &Instance, seq_dep: &[usize], seq_ret: &[usize]) -> Result<()> {
    for (seq, expected, label) in [
        (seq_dep, inst.departing(), "departing"),
        (seq_ret, inst.returning(), "returning"),
    ] {
        let mut sorted: Vec<usize> = seq.to_vec();
        sorted.sort_unstable();
        if sorted != expected {
            return Err(Error::InvalidArgument(format!(
                "{label} sequence is not a permutation of the {label} trains"
            )));
        }
    }
    Ok(())
}

/// Earliest allowed first departure per train given the freight it carries:
/// release date plus loading time at the train's origin station.
fn release_floors(inst: &Instance, assign: &[Option<usize>]) -> Vec<f64> {
    let mut floors = vec![0.0; inst.trains.len()];
    for (j, &a) in assign.iter().enumerate() {
        if let Some(t) = a {
            let earliest = inst.freights[j].release + inst.trains[t].load[0];
            if earliest > floors[t] {
                floors[t] = earliest;
            }
        }
    }
    floors
}

/// Builds the precedence decisions induced by the two sequences and solves
/// their timing in one pass. Same-direction precedence follows sequence
/// order on every segment; opposing precedence is chosen greedily per
/// physical segment by trial propagation.
/// Greedy merit of a partial timing: priority-weighted total arrival under
/// the current earliest times. Monotone in every event time, so adding a
/// constraint can only raise it.
fn arrival_merit(inst: &Instance, prop: &Propagator) -> f64 {
    let n = inst.n();
    let (graph, times) = (prop.graph(), prop.times());
    (0..inst.trains.len())
        .map(|t| inst.trains[t].priority * times[graph.arr_node(t, n) as usize])
        .sum()
}

/// Least time from the departure into step `k` to the final arrival through
/// the train's own chain; a lower bound on how far a raised departure pushes
/// the final arrival.
fn tail_min_times(inst: &Instance) -> Vec<Vec<f64>> {
    let n = inst.n();
    (0..inst.trains.len())
        .map(|t| {
            let mut tail = vec![0.0; n + 2];
            for k in (1..=n).rev() {
                tail[k] = inst.trains[t].min_run[k - 1]
                    + if k < n {
                        inst.stop_time(t, inst.station_after(t, k)) + tail[k + 1]
                    } else {
                        0.0
                    };
            }
            tail
        })
        .collect()
}

fn derive_ordering(
    inst: &Instance,
    seq_dep: &[usize],
    seq_ret: &[usize],
    floors: Option<&[f64]>,
) -> Result<(Ordering, Propagator)> {
    validate_sequences(inst, seq_dep, seq_ret)?;
    let n = inst.n();
    let tail_min = tail_min_times(inst);
    let mut ord = Ordering::new(inst);
    let mut graph = crate::timing::DiffGraph::new(inst.trains.len(), n);
    timing::base_arcs(inst, floors, &mut graph);
    for seq in [seq_dep, seq_ret] {
        for i in 0..seq.len() {
            for j in (i + 1)..seq.len() {
                for k in 1..=n {
                    ord.set_same_direction(k, seq[i], seq[j])?;
                }
            }
        }
        // Consecutive headway arcs are enough for the timing: the lag is
        // uniform per segment, so the chained pairs imply all the rest.
        for pair in seq.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            for k in 1..=n {
                let lag = inst.safety[inst.phys(a, k) - 1];
                graph.add_arc(graph.dep_node(a, k), graph.dep_node(b, k), lag);
            }
        }
    }
    let mut prop = Propagator::new(graph).map_err(|_| {
        Error::InfeasibleInput("sequence-induced precedences are contradictory".into())
    })?;

    // Opposing decisions are taken one pair at a time, in sequence order.
    // An opposing pair's decisions across segments always form a crossing
    // profile (the departing train goes first up to some station, the
    // returning one beyond it), so each pair tries every crossing station by
    // trial propagation and keeps the one with the smallest merit. Ties
    // prefer sending the departing train further first.
    let mut journals: Vec<crate::timing::ArcJournal> = Vec::new();
    for &t in seq_dep {
        for &r in seq_ret {
            let mut best: Option<(f64, usize)> = None;
            for crossing in (0..=n).rev() {
                let mut feasible = true;
                journals.clear();
                for s in 1..=n {
                    let (from, to) =
                        timing::opposing_arc(inst, prop.graph(), s, t, r, s <= crossing);
                    match prop.add_arc(from, to, 0.0) {
                        Ok(journal) => journals.push(journal),
                        Err(()) => {
                            feasible = false;
                            break;
                        }
                    }
                }
                if feasible {
                    let merit = arrival_merit(inst, &prop);
                    if best.is_none() || merit < best.unwrap().0 - 1e-12 {
                        best = Some((merit, crossing));
                    }
                }
                for journal in journals.drain(..).rev() {
                    prop.undo(journal);
                }
            }
            let Some((_, crossing)) = best else {
                return Err(Error::InfeasibleInput(format!(
                    "no feasible crossing for trains #{t}/#{r}"
                )));
            };
            for s in 1..=n {
                let dep_first = s <= crossing;
                let (from, to) = timing::opposing_arc(inst, prop.graph(), s, t, r, dep_first);
                prop.add_arc(from, to, 0.0).map_err(|_| {
                    Error::InfeasibleInput("committed crossing became infeasible".into())
                })?;
                ord.set_opposing(s, t, r, dep_first)?;
            }
        }
    }
    let _ = tail_min;
    Ok((ord, prop))
}

/// Translates train sequences into a complete set of precedence decisions.
pub fn decode_sequences(inst: &Instance, seq_dep: &[usize], seq_ret: &[usize]) -> Result<Ordering> {
    derive_ordering(inst, seq_dep, seq_ret, None).map(|(ord, _)| ord)
}

/// Decodes sequences into a full solution: timing with release floors from
/// the assignment, tightened departures, derived freight arrivals, fitness.
fn rebuild_solution(
    inst: &Instance,
    seq_dep: Vec<usize>,
    seq_ret: Vec<usize>,
    assign: Vec<Option<usize>>,
    relax: Vec<bool>,
    allocation_weight: f64,
) -> Result<Solution> {
    let floors = release_floors(inst, &assign);
    let (_ord, prop) = derive_ordering(inst, &seq_dep, &seq_ret, Some(&floors))?;
    let mut times = prop.times().to_vec();
    timing::apply_latest_departures(prop.graph(), &mut times)?;
    let mut sched = prop.graph().schedule_from_times(&times);
    sched.objective = timing::objective_value(inst, &sched, ObjectiveKind::WeightedTravelTime);
    let mut alloc = Allocation::from_assignment(assign, inst.trains.len());
    alloc.relax = relax;
    let alloc = derive_arrivals(inst, &sched, &alloc)?;
    let earliest = (0..inst.trains.len())
        .map(|t| sched.final_arrival(t))
        .collect();
    let fitness = sched.objective + allocation_weight * allocation_objective(inst, &alloc);
    Ok(Solution {
        seq_dep,
        seq_ret,
        earliest,
        alloc,
        sched,
        fitness,
    })
}

/// Greedy tentative freight assignment: earliest release first, each freight
/// onto the lowest-indexed departing train that still fits, preferring trains
/// below their capacity floor so floors fill up train by train.
fn tentative_allocation(inst: &Instance) -> (Vec<Option<usize>>, Vec<bool>) {
    let dep = inst.departing();
    let mut load = vec![0.0f64; inst.trains.len()];
    let mut assign = vec![None; inst.freights.len()];
    let mut order: Vec<usize> = (0..inst.freights.len()).collect();
    order.sort_by(|&a, &b| {
        inst.freights[a]
            .release
            .total_cmp(&inst.freights[b].release)
            .then(a.cmp(&b))
    });
    for j in order {
        let weight = inst.freights[j].weight;
        let fits = |t: usize| load[t] + weight <= inst.trains[t].capacity + TIME_EPS;
        let below_floor =
            |t: usize| load[t] + TIME_EPS < inst.capacity_floor * inst.trains[t].capacity;
        let pick = dep
            .iter()
            .copied()
            .find(|&t| fits(t) && below_floor(t))
            .or_else(|| dep.iter().copied().find(|&t| fits(t)));
        if let Some(t) = pick {
            assign[j] = Some(t);
            load[t] += weight;
        }
    }
    let relax = (0..inst.trains.len())
        .map(|t| {
            inst.trains[t].direction == Direction::Departing
                && load[t] + TIME_EPS < inst.capacity_floor * inst.trains[t].capacity
        })
        .collect();
    (assign, relax)
}

/// Builds one feasible solution: tentative allocation, utilization scoring,
/// rank-biased Monte-Carlo sequencing, then a full decode.
pub fn construct_solution<R: Rng + ?Sized>(
    inst: &Instance,
    rng: &mut R,
    params: &HeuristicParams,
) -> Result<Solution> {
    let (assign, relax) = tentative_allocation(inst);
    let mut per_train: Vec<Vec<&crate::model::Freight>> = vec![Vec::new(); inst.trains.len()];
    for (j, &a) in assign.iter().enumerate() {
        if let Some(t) = a {
            per_train[t].push(&inst.freights[j]);
        }
    }
    let mut scores = vec![0.0f64; inst.trains.len()];
    for t in 0..inst.trains.len() {
        scores[t] = train_score(&inst.trains[t], &per_train[t])?;
    }
    let sorted_pool = |mut trains: Vec<usize>| {
        trains.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        trains
    };
    let mut pool_dep = sorted_pool(inst.departing());
    let mut pool_ret = sorted_pool(inst.returning());
    let mut seq_dep = Vec::with_capacity(pool_dep.len());
    let mut seq_ret = Vec::with_capacity(pool_ret.len());
    while !pool_dep.is_empty() || !pool_ret.is_empty() {
        if !pool_dep.is_empty() {
            let probs = selection_probabilities(pool_dep.len());
            let i = monte_carlo_select(&probs, rng)?;
            seq_dep.push(pool_dep.remove(i));
        }
        if !pool_ret.is_empty() {
            let probs = selection_probabilities(pool_ret.len());
            let i = monte_carlo_select(&probs, rng)?;
            seq_ret.push(pool_ret.remove(i));
        }
    }
    rebuild_solution(inst, seq_dep, seq_ret, assign, relax, params.allocation_weight)
}

/// Combined fitness of a decoded solution: weighted travel time of the
/// schedule plus the weighted allocation objective.
pub fn fitness(inst: &Instance, sol: &Solution, allocation_weight: f64) -> f64 {
    timing::objective_value(inst, &sol.sched, ObjectiveKind::WeightedTravelTime)
        + allocation_weight * allocation_objective(inst, &sol.alloc)
}

/// How many trains of a solution to resequence toward its reference, scaled
/// by where its fitness sits between the iteration's best and worst. The
/// worst solution is corrected maximally (`train_count - 1`).
pub fn correction_count(
    phi_best: f64,
    phi_worst: f64,
    phi_current: f64,
    strength: f64,
    train_count: usize,
) -> Result<usize> {
    if phi_current + TIME_EPS < phi_best || phi_current - TIME_EPS > phi_worst {
        return Err(Error::InvalidArgument(format!(
            "fitness {phi_current} outside [{phi_best}, {phi_worst}]"
        )));
    }
    if train_count == 0 {
        return Ok(0);
    }
    let cap = train_count - 1;
    if (phi_worst - phi_current).abs() <= TIME_EPS {
        return Ok(cap);
    }
    let ratio = (phi_best - phi_worst) / (phi_current - phi_worst);
    let raw = strength * ratio;
    Ok((raw.round() as usize).min(cap))
}

/// The `nu` trains whose priority-weighted delay over free-run travel is
/// largest, ties broken toward the lower train index. Returned sorted by
/// index.
pub fn select_worst_trains(inst: &Instance, sol: &Solution, nu: usize) -> Vec<usize> {
    let mut delays: Vec<(f64, usize)> = (0..inst.trains.len())
        .map(|t| {
            let travel = sol.sched.final_arrival(t) - sol.sched.first_departure(t);
            (
                inst.trains[t].priority * (travel - inst.free_run(t)),
                t,
            )
        })
        .collect();
    delays.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = delays.into_iter().take(nu).map(|(_, t)| t).collect();
    out.sort_unstable();
    out
}

/// Partially reorders `seq` toward `reference`: the selected trains are
/// removed and reinserted, in reference order, each immediately before its
/// nearest reference successor that stayed in place or was already
/// reinserted; with no such successor the train goes to the end.
pub fn reorder_toward_reference(
    seq: &[usize],
    reference: &[usize],
    selected: &[usize],
) -> Result<Vec<usize>> {
    let seq_set: HashSet<usize> = seq.iter().copied().collect();
    if seq.len() != reference.len()
        || seq_set.len() != seq.len()
        || !reference.iter().all(|t| seq_set.contains(t))
    {
        return Err(Error::InvalidArgument(
            "sequence and reference must be permutations of the same trains".into(),
        ));
    }
    let sel: HashSet<usize> = selected.iter().copied().collect();
    for &t in selected {
        if !seq_set.contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "selected train #{t} is not in the sequence"
            )));
        }
    }
    let mut out: Vec<usize> = seq.iter().copied().filter(|t| !sel.contains(t)).collect();
    let mut reinserted: HashSet<usize> = HashSet::new();
    for (pos, &train) in reference.iter().enumerate() {
        if !sel.contains(&train) {
            continue;
        }
        let mut insert_at = out.len();
        for &successor in &reference[pos + 1..] {
            if !sel.contains(&successor) || reinserted.contains(&successor) {
                insert_at = out
                    .iter()
                    .position(|&z| z == successor)
                    .expect("qualifying successor is present");
                break;
            }
        }
        out.insert(insert_at, train);
        reinserted.insert(train);
    }
    Ok(out)
}

/// Adjacent-swap local search over both sequences: each position is swapped
/// with its successor and the swap is kept only when the re-decoded fitness
/// strictly improves. Never returns a worse solution than its input.
pub fn opt_pass(inst: &Instance, sol: &Solution, allocation_weight: f64) -> Result<Solution> {
    let mut current = sol.clone();
    for departing_side in [true, false] {
        let len = if departing_side {
            current.seq_dep.len()
        } else {
            current.seq_ret.len()
        };
        for pos in 0..len.saturating_sub(1) {
            let mut seq_dep = current.seq_dep.clone();
            let mut seq_ret = current.seq_ret.clone();
            if departing_side {
                seq_dep.swap(pos, pos + 1);
            } else {
                seq_ret.swap(pos, pos + 1);
            }
            let candidate = rebuild_solution(
                inst,
                seq_dep,
                seq_ret,
                current.alloc.assign.clone(),
                current.alloc.relax.clone(),
                allocation_weight,
            )?;
            if candidate.fitness < current.fitness {
                current = candidate;
            }
        }
    }
    Ok(current)
}

/// Runs the full heuristic: construct a population, then iterate reference
/// reordering plus the optional swap search, tracking the best solution ever
/// held. Deterministic for a given seed.
pub fn run_heuristic(inst: &Instance, params: &HeuristicParams) -> Result<HeuristicRun> {
    params.validate()?;
    let defects = validate_instance(inst);
    if !defects.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "instance has {} defect(s); first: {}",
            defects.len(),
            defects[0]
        )));
    }
    let size = params.population;
    let mut population = Vec::with_capacity(size);
    for member in 0..size {
        let mut rng = stream_rng(params.seed, member as u64, 0);
        population.push(construct_solution(inst, &mut rng, params)?);
    }
    let best_index = |pop: &[Solution]| {
        let mut idx = 0;
        for i in 1..pop.len() {
            if pop[i].fitness < pop[idx].fitness {
                idx = i;
            }
        }
        idx
    };
    let mean =
        |pop: &[Solution]| pop.iter().map(|s| s.fitness).sum::<f64>() / pop.len() as f64;
    let mut best = population[best_index(&population)].clone();
    let mut trace = vec![TracePoint {
        iteration: 0,
        best_fitness: best.fitness,
        mean_fitness: mean(&population),
    }];
    let total_trains = inst.trains.len();
    let departing: HashSet<usize> = inst.departing().into_iter().collect();
    for iteration in 1..=params.iterations {
        let fits: Vec<f64> = population.iter().map(|s| s.fitness).collect();
        let phi_best = fits.iter().copied().fold(f64::INFINITY, f64::min);
        let phi_worst = fits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let elite_count = ((params.elite_fraction * size as f64).ceil() as usize).clamp(1, size);
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| fits[a].total_cmp(&fits[b]).then(a.cmp(&b)));
        let elite: Vec<(Vec<usize>, Vec<usize>)> = order[..elite_count]
            .iter()
            .map(|&i| (population[i].seq_dep.clone(), population[i].seq_ret.clone()))
            .collect();
        for member in 0..size {
            let mut rng = stream_rng(params.seed, member as u64, iteration as u64);
            let (ref_dep, ref_ret) = &elite[rng.random_range(0..elite_count)];
            let nu = correction_count(
                phi_best,
                phi_worst,
                fits[member],
                params.correction_strength,
                total_trains,
            )?;
            let selected = select_worst_trains(inst, &population[member], nu);
            let sel_dep: Vec<usize> = selected
                .iter()
                .copied()
                .filter(|t| departing.contains(t))
                .collect();
            let sel_ret: Vec<usize> = selected
                .iter()
                .copied()
                .filter(|t| !departing.contains(t))
                .collect();
            let new_dep = reorder_toward_reference(&population[member].seq_dep, ref_dep, &sel_dep)?;
            let new_ret = reorder_toward_reference(&population[member].seq_ret, ref_ret, &sel_ret)?;
            let mut sol = rebuild_solution(
                inst,
                new_dep,
                new_ret,
                population[member].alloc.assign.clone(),
                population[member].alloc.relax.clone(),
                params.allocation_weight,
            )?;
            if params.opt_enabled {
                sol = opt_pass(inst, &sol, params.allocation_weight)?;
            }
            if sol.fitness < best.fitness {
                best = sol.clone();
            }
            population[member] = sol;
        }
        trace.push(TracePoint {
            iteration,
            best_fitness: best.fitness,
            mean_fitness: mean(&population),
        });
    }
    Ok(HeuristicRun { best, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::model::{validate_schedule, Corridor, Freight, Train};
    use crate::timing::{build_constraint_graph, solve_fixed_order};

    fn params() -> HeuristicParams {
        HeuristicParams {
            population: 8,
            iterations: 5,
            ..HeuristicParams::default()
        }
    }

    fn freight(w: f64, weight: f64) -> Freight {
        Freight {
            id: format!("j{weight}"),
            priority: w,
            weight,
            due: 10.0,
            release: 0.0,
        }
    }

    #[test]
    fn train_score_is_weighted_load_per_capacity() {
        let train = Train {
            id: "t1".into(),
            direction: Direction::Departing,
            priority: 1.0,
            capacity: 100.0,
            min_run: vec![1.0],
            load: vec![0.0; 2],
            unload: vec![0.0; 2],
            dwell: vec![0.0; 2],
        };
        let f1 = freight(2.0, 30.0);
        assert_eq!(train_score(&train, &[&f1]).unwrap(), 0.6);
        assert_eq!(train_score(&train, &[]).unwrap(), 0.0);
        let f2 = freight(1.0, 20.0);
        let f3 = freight(2.0, 10.0);
        assert!((train_score(&train, &[&f2, &f3]).unwrap() - 0.4).abs() < 1e-12);
        let mut empty = train.clone();
        empty.capacity = 0.0;
        assert!(train_score(&empty, &[&f1]).is_err());
    }

    #[test]
    fn ranking_probabilities_prefer_low_scores_and_sum_to_one() {
        assert_eq!(selection_probabilities(1), vec![1.0]);
        let p2 = selection_probabilities(2);
        assert!((p2[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p2[1] - 1.0 / 3.0).abs() < 1e-12);
        let p3 = selection_probabilities(3);
        assert!((p3[0] - 0.5).abs() < 1e-12);
        assert!((p3[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p3[2] - 1.0 / 6.0).abs() < 1e-12);
        for k in 1..=40 {
            let sum: f64 = selection_probabilities(k).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn monte_carlo_selection_matches_probabilities() {
        let mut rng = stream_rng(7, 0, 0);
        assert_eq!(monte_carlo_select(&[1.0], &mut rng).unwrap(), 0);
        assert!(monte_carlo_select(&[], &mut rng).is_err());

        for probs in [vec![0.5, 0.5], vec![2.0 / 3.0, 1.0 / 3.0]] {
            let mut counts = vec![0usize; probs.len()];
            let draws = 100_000;
            for _ in 0..draws {
                counts[monte_carlo_select(&probs, &mut rng).unwrap()] += 1;
            }
            for (i, &c) in counts.iter().enumerate() {
                let freq = c as f64 / draws as f64;
                assert!(
                    (freq - probs[i]).abs() < 0.01,
                    "frequency {freq} drifted from {}",
                    probs[i]
                );
            }
        }
    }

    #[test]
    fn correction_count_follows_the_quality_ratio() {
        assert_eq!(correction_count(100.0, 200.0, 150.0, 0.4, 10).unwrap(), 1);
        assert_eq!(correction_count(100.0, 200.0, 100.0, 0.4, 10).unwrap(), 0);
        assert_eq!(correction_count(100.0, 200.0, 200.0, 0.4, 10).unwrap(), 9);
        assert!(correction_count(100.0, 200.0, 250.0, 0.4, 10).is_err());
        assert!(correction_count(100.0, 200.0, 50.0, 0.4, 10).is_err());
    }

    #[test]
    fn correction_count_is_monotone_in_fitness() {
        let mut last = 0;
        for i in 0..=100 {
            let phi = 100.0 + i as f64;
            let nu = correction_count(100.0, 200.0, phi, 0.4, 12).unwrap();
            assert!(nu >= last, "correction count dropped at {phi}");
            last = nu;
        }
    }

    #[test]
    fn reorders_toward_reference_like_the_worked_example() {
        let seq: Vec<usize> = (1..=10).collect();
        let reference = vec![4, 3, 5, 6, 7, 8, 10, 1, 2, 9];
        let updated = reorder_toward_reference(&seq, &reference, &[2, 4, 10]).unwrap();
        assert_eq!(updated, vec![10, 1, 4, 3, 5, 6, 7, 8, 2, 9]);
    }

    #[test]
    fn reorder_edge_cases() {
        let seq = vec![3, 1, 2, 0];
        let reference = vec![0, 2, 3, 1];
        assert_eq!(reorder_toward_reference(&seq, &reference, &[]).unwrap(), seq);
        assert_eq!(
            reorder_toward_reference(&seq, &reference, &[0, 1, 2, 3]).unwrap(),
            reference
        );
        // Reordering toward the sequence itself changes nothing.
        assert_eq!(
            reorder_toward_reference(&seq, &seq, &[1, 2]).unwrap(),
            seq
        );
        assert!(reorder_toward_reference(&seq, &reference, &[9]).is_err());
        assert!(reorder_toward_reference(&seq, &[0, 2, 3], &[]).is_err());
    }

    #[test]
    fn reorder_preserves_the_permutation() {
        let mut rng = stream_rng(3, 1, 4);
        for _ in 0..200 {
            let n = rng.random_range(1..10usize);
            let mut seq: Vec<usize> = (0..n).collect();
            let mut reference: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                seq.swap(i, rng.random_range(0..=i));
                reference.swap(i, rng.random_range(0..=i));
            }
            let selected: Vec<usize> = (0..n).filter(|_| rng.random::<bool>()).collect();
            let mut updated = reorder_toward_reference(&seq, &reference, &selected).unwrap();
            updated.sort_unstable();
            assert_eq!(updated, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn decode_produces_complete_accepted_orderings() {
        let inst = gen::generate(3, 1, 0, 0, 5);
        let ord = decode_sequences(&inst, &[0], &[]).unwrap();
        assert!(ord.is_complete());
        assert_eq!(ord.decision_count(), 0);
        build_constraint_graph(&inst, &ord).unwrap();

        let inst = gen::desk_instance();
        let ord = decode_sequences(&inst, &[0, 1, 2], &[3, 4]).unwrap();
        assert!(ord.is_complete());
        build_constraint_graph(&inst, &ord).unwrap();
    }

    #[test]
    fn decode_picks_the_cheaper_occupation_order() {
        // One segment, one train per direction; the departing train is quick
        // and heavily weighted, so letting it cross first is cheaper.
        let mk_train = |id: &str, direction, priority, run: f64| Train {
            id: id.into(),
            direction,
            priority,
            capacity: 100.0,
            min_run: vec![run],
            load: vec![0.0; 2],
            unload: vec![0.0; 2],
            dwell: vec![0.0; 2],
        };
        let inst = crate::Instance {
            corridor: Corridor::new(1),
            safety: vec![0.5],
            big_m: 1e7,
            capacity_floor: 0.6,
            trains: vec![
                mk_train("t1", Direction::Departing, 1.0, 1.0),
                mk_train("r1", Direction::Returning, 0.2, 4.0),
            ],
            freights: vec![],
        };
        let decoded = decode_sequences(&inst, &[0], &[1]).unwrap();
        // Evaluate both complete orderings under the greedy merit (weighted
        // final arrivals; arrivals are unchanged by departure tightening).
        let mut best = (f64::INFINITY, None);
        for dep_first in [true, false] {
            let mut ord = Ordering::new(&inst);
            ord.set_opposing(1, 0, 1, dep_first).unwrap();
            let sched = solve_fixed_order(&inst, &ord, ObjectiveKind::WeightedTravelTime)
                .unwrap()
                .feasible()
                .unwrap();
            let merit: f64 = (0..2)
                .map(|t| inst.trains[t].priority * sched.final_arrival(t))
                .sum();
            if merit < best.0 {
                best = (merit, Some(dep_first));
            }
        }
        assert_eq!(decoded.opposing(1, 0, 1).unwrap(), best.1);
        assert_eq!(best.1, Some(true));
        assert!((best.0 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn construction_is_deterministic_and_feasible() {
        let inst = gen::desk_instance();
        let p = params();
        let mut rng_a = stream_rng(11, 0, 0);
        let mut rng_b = stream_rng(11, 0, 0);
        let a = construct_solution(&inst, &mut rng_a, &p).unwrap();
        let b = construct_solution(&inst, &mut rng_b, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(validate_schedule(&inst, &a.sched).unwrap(), vec![]);
        assert_eq!(
            crate::alloc::check_allocation(&inst, &a.sched, &a.alloc).unwrap(),
            vec![]
        );
        assert!((fitness(&inst, &a, 1.0) - a.fitness).abs() < 1e-9);
    }

    #[test]
    fn forced_assignment_on_single_train() {
        let mut inst = gen::generate(2, 1, 0, 0, 3);
        inst.freights = vec![Freight {
            id: "j1".into(),
            priority: 1.0,
            weight: 40.0,
            due: 10.0,
            release: 1.0,
        }];
        inst.big_m = 10.0 * inst.horizon_estimate();
        let mut rng = stream_rng(0, 0, 0);
        let sol = construct_solution(&inst, &mut rng, &params()).unwrap();
        assert_eq!(sol.seq_dep, vec![0]);
        assert_eq!(sol.alloc.assign, vec![Some(0)]);
        // Release plus loading time keeps the train at the origin.
        let floor = 1.0 + inst.trains[0].load[0];
        assert!(sol.sched.first_departure(0) >= floor - 1e-9);
    }

    #[test]
    fn worst_train_selection_ranks_by_weighted_delay() {
        let inst = gen::desk_instance();
        let sol = rebuild_solution(
            &inst,
            vec![0, 1, 2],
            vec![3, 4],
            vec![None; 5],
            vec![false; 5],
            1.0,
        )
        .unwrap();
        assert_eq!(select_worst_trains(&inst, &sol, 0), Vec::<usize>::new());
        let mut expected: Vec<(f64, usize)> = (0..5)
            .map(|t| {
                let travel = sol.sched.final_arrival(t) - sol.sched.first_departure(t);
                (inst.trains[t].priority * (travel - inst.free_run(t)), t)
            })
            .collect();
        expected.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut top2: Vec<usize> = expected[..2].iter().map(|&(_, t)| t).collect();
        top2.sort_unstable();
        assert_eq!(select_worst_trains(&inst, &sol, 2), top2);
    }

    #[test]
    fn opt_pass_never_hurts_and_takes_improving_swaps() {
        // A slow low-priority train scheduled first makes the fast
        // high-priority one behind it sit out five hours at the middle
        // station (its segment-2 departure trails the leader's); swapping
        // the pair is strictly better.
        let mk_train = |id: &str, priority, min_run: Vec<f64>| Train {
            id: id.into(),
            direction: Direction::Departing,
            priority,
            capacity: 100.0,
            min_run,
            load: vec![0.0; 3],
            unload: vec![0.0; 3],
            dwell: vec![0.0; 3],
        };
        let inst = crate::Instance {
            corridor: Corridor::new(2),
            safety: vec![0.5, 0.5],
            big_m: 1e7,
            capacity_floor: 0.6,
            trains: vec![
                mk_train("slow", 0.05, vec![6.0, 1.0]),
                mk_train("fast", 1.0, vec![1.0, 1.0]),
            ],
            freights: vec![],
        };
        let start =
            rebuild_solution(&inst, vec![0, 1], vec![], vec![], vec![false; 2], 1.0).unwrap();
        assert!((start.fitness - 7.35).abs() < 1e-9);
        let improved = opt_pass(&inst, &start, 1.0).unwrap();
        assert!(improved.fitness < start.fitness);
        assert!((improved.fitness - 2.35).abs() < 1e-9);
        assert_eq!(improved.seq_dep, vec![1, 0]);
        let stable = opt_pass(&inst, &improved, 1.0).unwrap();
        assert_eq!(stable.seq_dep, improved.seq_dep);
        assert_eq!(stable.fitness, improved.fitness);

        // A one-train sequence has no adjacent pair to try.
        let single =
            rebuild_solution(&inst, vec![0], vec![], vec![], vec![false; 2], 1.0);
        assert!(single.is_err()); // not a permutation of both departing trains
    }

    #[test]
    fn heuristic_run_is_deterministic_and_anytime() {
        let inst = gen::desk_instance();
        let p = HeuristicParams {
            population: 6,
            iterations: 4,
            seed: 21,
            ..HeuristicParams::default()
        };
        let a = run_heuristic(&inst, &p).unwrap();
        let b = run_heuristic(&inst, &p).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.trace, b.trace);
        for w in a.trace.windows(2) {
            assert!(w[1].best_fitness <= w[0].best_fitness + 1e-12);
        }
        assert_eq!(validate_schedule(&inst, &a.best.sched).unwrap(), vec![]);
        assert_eq!(
            crate::alloc::check_allocation(&inst, &a.best.sched, &a.best.alloc).unwrap(),
            vec![]
        );
    }

    #[test]
    fn single_train_instance_settles_immediately() {
        let inst = gen::generate(2, 1, 0, 0, 9);
        let p = HeuristicParams {
            population: 2,
            iterations: 1,
            elite_fraction: 0.5,
            ..HeuristicParams::default()
        };
        let run = run_heuristic(&inst, &p).unwrap();
        let free = inst.trains[0].priority * inst.free_run(0);
        assert!((run.best.fitness - free).abs() < 1e-9);
        assert_eq!(run.trace.len(), 2);
        assert!((run.trace[1].best_fitness - free).abs() < 1e-9);
    }

    #[test]
    fn bad_params_are_rejected() {
        let inst = gen::generate(1, 1, 0, 0, 0);
        let mut p = HeuristicParams::default();
        p.population = 0;
        assert!(run_heuristic(&inst, &p).is_err());
        let mut p = HeuristicParams::default();
        p.population = 3;
        p.elite_fraction = 0.1; // selects nobody
        assert!(run_heuristic(&inst, &p).is_err());
        let mut p = HeuristicParams::default();
        p.correction_strength = 1.0;
        assert!(run_heuristic(&inst, &p).is_err());
    }
}
