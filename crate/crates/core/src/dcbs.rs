//! DCBS: ECBS whose high level hands a node to the motion-primitive database
//! once a trigger policy fires, then checks the repaired plan against a
//! second suboptimality bound `w2`.
//!
//! Database repair ([`db_resolution`]) works on the node's paths directly:
//! it takes the earliest conflict, places a small obstacle-free subgrid over
//! it, routes the robots inside to temporary goals a few steps further along
//! their own paths with an optimal joint motion from the database, and
//! splices that motion into the plan. Two timings are scored per subgrid:
//!
//! * lock — outside robots keep their schedule unless their next step
//!   enters the subgrid (or a cell held by a waiting robot); those wait
//!   until the local motion ends;
//! * pause — every other moving robot waits for the local motion and then
//!   resumes, so the rest of the plan is shifted uniformly.
//!
//! The splice that least often re-creates the same pair's conflict, then
//! leaves the fewest conflicts, then costs the least is applied. Repair gives
//! up when no subgrid fits, when a pair keeps coming back, or after a bounded
//! number of splices.
//!
//! A failed repair or a failed `w2` check leaves the search untouched: the
//! node is expanded as in ECBS.

use std::borrow::Borrow;
use std::time::Instant;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::ecbs::{CtNode, Decision, EcbsConfig, FocalRule, HighLevel, SearchReport, TieBreak};
use crate::error::SolveError;
use crate::grid::{DistanceOracle, GridMap, Vertex};
use crate::lowlevel::ConflictTable;
use crate::instance::Instance;
use crate::plan::{lower_bounds, metrics, Conflict, ConflictScanner, LowerBounds, Path, Plan};
use crate::primdb::{conflict_points, subgrid_candidates, PrimitiveDb, SubgridSpec};

/// When a popped node is handed to the database.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TriggerPolicy {
    /// The node has at most this many conflicts.
    NocThreshold(usize),
    /// The node has at most this fraction of the root's conflicts.
    PocRatio(f64),
    /// The smallest expanded conflict count improved by at most `delta`
    /// over the last `window` expansions.
    Stagnation { window: usize, delta: usize },
}

impl TriggerPolicy {
    pub fn validate(&self) -> Result<(), SolveError> {
        match *self {
            TriggerPolicy::PocRatio(f) if !(f > 0.0 && f <= 1.0) => Err(SolveError::InvalidInput(format!("conflict ratio {f} outside (0, 1]"))),
            TriggerPolicy::Stagnation { window: 0, .. } => Err(SolveError::InvalidInput("stagnation window must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Whether the node with `noc` conflicts triggers database repair.
/// `history` holds the conflict counts of all expanded nodes, this one last.
pub fn db_triggered(policy: &TriggerPolicy, noc: usize, root_noc: usize, history: &[usize]) -> bool {
    if noc == 0 {
        return true;
    }
    match *policy {
        TriggerPolicy::NocThreshold(limit) => noc <= limit,
        TriggerPolicy::PocRatio(fraction) => root_noc == 0 || noc as f64 <= fraction * root_noc as f64,
        TriggerPolicy::Stagnation { window, delta } => {
            if history.len() < window {
                return false;
            }
            let split = history.len() - window;
            let before = history[..=split].iter().min().copied().unwrap_or(usize::MAX);
            let now = history.iter().min().copied().unwrap_or(usize::MAX);
            before - now <= delta
        }
    }
}

/// Objective checked against `w2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateObjective {
    #[default]
    Makespan,
    Soc,
}

/// `plan`'s objective is within `w2` times the distance lower bound.
pub fn check_optimality(plan: &Plan, bounds: &LowerBounds, w2: f64, objective: GateObjective) -> bool {
    if w2.is_infinite() {
        return true;
    }
    let m = metrics(plan);
    match objective {
        GateObjective::Makespan => m.makespan as f64 <= w2 * bounds.makespan as f64,
        GateObjective::Soc => m.soc as f64 <= w2 * bounds.soc as f64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcbsConfig {
    pub w1: f64,
    /// Bound of the final check; infinite disables it.
    pub w2: f64,
    pub trigger: TriggerPolicy,
    pub tiebreak: TieBreak,
    pub focal_rule: FocalRule,
    pub gate: GateObjective,
}

impl DcbsConfig {
    pub fn new(w1: f64, trigger: TriggerPolicy) -> Self {
        DcbsConfig {
            w1,
            w2: f64::INFINITY,
            trigger,
            tiebreak: TieBreak::ByLifo,
            focal_rule: FocalRule::PerNode,
            gate: GateObjective::Makespan,
        }
    }

    /// Repair once a node has at most 20 conflicts.
    pub fn noc20() -> Self {
        Self::new(1.5, TriggerPolicy::NocThreshold(20))
    }

    /// Repair once a node has at most 10% of the root's conflicts.
    pub fn poc10() -> Self {
        Self::new(1.5, TriggerPolicy::PocRatio(0.10))
    }

    /// Repair after 100 expansions without progress; accept makespan
    /// within twice the lower bound.
    pub fn stag100() -> Self {
        DcbsConfig {
            w2: 2.0,
            ..Self::new(1.5, TriggerPolicy::Stagnation { window: 100, delta: 0 })
        }
    }

    pub fn with_w2(mut self, w2: f64) -> Self {
        self.w2 = w2;
        self
    }

    pub fn ecbs(&self) -> EcbsConfig {
        EcbsConfig {
            w1: self.w1,
            tiebreak: self.tiebreak,
            focal_rule: self.focal_rule,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.w1 >= 1.0) {
            return Err(SolveError::InvalidInput(format!("w1 = {} below 1", self.w1)));
        }
        if self.w2.is_finite() && self.w2 <= self.w1 {
            return Err(SolveError::InvalidInput(format!("w2 = {} must exceed w1 = {}", self.w2, self.w1)));
        }
        self.trigger.validate()
    }
}

/// Database activity during one solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbStats {
    /// Nodes handed to the database.
    pub calls: usize,
    /// Repairs that produced a conflict-free plan.
    pub repaired: usize,
    /// Repaired plans rejected by the `w2` check.
    pub gate_rejections: usize,
    /// Expansion at which the first repair was attempted.
    pub first_trigger: Option<usize>,
    /// The returned plan came from a repair rather than a conflict-free node.
    pub solved_by_db: bool,
}

#[derive(Clone, Debug)]
pub struct DcbsReport {
    pub search: SearchReport,
    pub db: DbStats,
}

/// DCBS with its own distance oracle and the given database.
pub fn solve_dcbs(instance: &Instance, config: &DcbsConfig, db: &PrimitiveDb, budget: &Budget) -> DcbsReport {
    let oracle = DistanceOracle::new(instance.map.clone());
    run_dcbs(instance, &oracle, config, db, budget)
}

pub fn run_dcbs(instance: &Instance, oracle: &DistanceOracle, config: &DcbsConfig, db: &PrimitiveDb, budget: &Budget) -> DcbsReport {
    let map = instance.map.clone();
    run_dcbs_with(instance, oracle, config, budget, |node, deadline| db_resolution(&map, &node.paths, db, deadline))
}

/// DCBS with a pluggable repair step (given the node and the deadline).
pub fn run_dcbs_with(
    instance: &Instance,
    oracle: &DistanceOracle,
    config: &DcbsConfig,
    budget: &Budget,
    mut repair: impl FnMut(&CtNode, Option<Instant>) -> Option<Plan>,
) -> DcbsReport {
    let mut db = DbStats::default();
    if let Err(e) = config.validate() {
        return DcbsReport {
            search: SearchReport {
                outcome: Err(e),
                trace: Vec::new(),
                stats: Default::default(),
            },
            db,
        };
    }
    let bounds = lower_bounds(oracle, instance);
    let mut hl = HighLevel::new(instance, oracle, config.ecbs());
    let search = hl.run(budget, |node, state| {
        if node.noc == 0 {
            let plan = node.plan();
            return if check_optimality(&plan, &bounds, config.w2, config.gate) {
                Decision::Return(plan)
            } else {
                Decision::Discard
            };
        }
        if db_triggered(&config.trigger, node.noc, state.root_noc, state.history) {
            db.calls += 1;
            db.first_trigger.get_or_insert(state.expansions);
            if let Some(plan) = repair(node, budget.deadline) {
                db.repaired += 1;
                if check_optimality(&plan, &bounds, config.w2, config.gate) {
                    db.solved_by_db = true;
                    return Decision::Return(plan);
                }
                db.gate_rejections += 1;
            }
        }
        Decision::Expand
    });
    DcbsReport { search, db }
}

/// Database repair of the ECBS root node only, without search.
pub fn solve_db_root(instance: &Instance, db: &PrimitiveDb, budget: &Budget) -> Result<Plan, SolveError> {
    let oracle = DistanceOracle::new(instance.map.clone());
    let mut hl = HighLevel::new(instance, &oracle, EcbsConfig::default());
    hl.set_deadline(budget.deadline);
    let root = hl.root()?;
    db_resolution(&instance.map, &root.paths, db, budget.deadline).ok_or_else(|| {
        if budget.timed_out() {
            SolveError::Timeout
        } else {
            SolveError::GaveUp("database repair of the root failed".into())
        }
    })
}

/// Repairs all conflicts of `paths` with database splices. Returns `None`
/// when some conflict has no enclosing subgrid, the same collision keeps
/// being postponed, the iteration cap of `10 * (initial conflicts + 1)` is
/// reached, or the deadline passes.
pub fn db_resolution<P: Borrow<Path>>(map: &GridMap, paths: &[P], db: &PrimitiveDb, deadline: Option<Instant>) -> Option<Plan> {
    let mut scanner = ConflictScanner::new();
    let initial = scanner.count(paths);
    if initial == 0 {
        return Some(Plan::new(paths.iter().map(|p| p.borrow().clone()).collect()));
    }
    let mut cur: Vec<Path> = paths.iter().map(|p| p.borrow().clone()).collect();
    let mut table = ConflictTable::from_paths(map, cur.iter(), None);
    let mut deferred: FxHashMap<(usize, usize), usize> = FxHashMap::default();
    for _ in 0..10 * (initial + 1) {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return None;
        }
        let Some(conflict) = scanner.first(&cur) else {
            return Some(Plan::new(cur));
        };
        let noc = scanner.count(&cur);
        let splice = best_splice(map, &cur, noc, &conflict, db, &mut table)?;
        // Deferring the same collision again and again means the local
        // moves cannot untangle it.
        if splice.recurs {
            let count = deferred.entry((conflict.a, conflict.b)).or_insert(0);
            *count += 1;
            if *count > MAX_DEFERRALS {
                return None;
            }
        }
        tracing::trace!(t = conflict.t, noc, predicted = splice.noc_after, cost = splice.cost, "database splice");
        for (r, path) in splice.into_paths(&cur) {
            table.remove_path(map, &cur[r]);
            table.add_path(map, &path);
            cur[r] = path;
        }
    }
    None
}

/// Farthest look-ahead (in steps past the conflict) for temporary goals.
const MAX_LOOKAHEAD: usize = 4;
/// Splices allowed to postpone the same pair's collision.
const MAX_DEFERRALS: usize = 4;
/// Steps past the conflict checked for a repeat of the same pair.
const RECUR_HORIZON: usize = 8;

/// How robots outside the subgrid are timed during a splice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Timing {
    /// Only robots about to enter the subgrid (or a waiting robot's cell)
    /// wait; everyone else keeps their schedule.
    Lock,
    /// Every robot still moving waits for the local motion of `len` steps
    /// and makes its own next step together with the motion's last one.
    Pause { len: usize },
}

/// A candidate splice at conflict time `t`.
#[derive(Clone, Debug)]
struct Splice {
    t: usize,
    timing: Timing,
    /// New paths of the robots inside the subgrid and of held robots.
    special: Vec<(usize, Path)>,
    /// The two robots of the resolved conflict collide again soon after.
    recurs: bool,
    /// Predicted conflict count of the plan after the splice.
    noc_after: i64,
    /// Change in the sum of settle times.
    cost: i64,
}

impl Splice {
    fn key(&self) -> (bool, i64, i64) {
        (self.recurs, self.noc_after, self.cost)
    }

    /// Every path the splice changes.
    fn into_paths(self, paths: &[Path]) -> Vec<(usize, Path)> {
        let mut out = self.special;
        if let Timing::Pause { len } = self.timing {
            let t = self.t;
            let mut special = vec![false; paths.len()];
            for (r, _) in &out {
                special[*r] = true;
            }
            for (r, p) in paths.iter().enumerate() {
                if !special[r] && p.settle_time() >= t {
                    out.push((r, pause_path(p, t, len)));
                }
            }
        }
        out
    }
}

/// `old` up to `start`, then `window`, then `old` from index `resume` on.
fn rewrite(old: &Path, start: usize, window: &[Vertex], resume: usize) -> Path {
    let mut steps: Vec<Vertex> = (0..start).map(|t| old.at(t)).collect();
    steps.extend_from_slice(window);
    steps.extend((resume..old.len().max(resume + 1)).map(|t| old.at(t)));
    Path::new(steps).trimmed()
}

/// Waits `len - 1` steps at `t - 1`, then continues on schedule.
fn pause_path(old: &Path, t: usize, len: usize) -> Path {
    let mut window = vec![old.at(t - 1); len];
    window[len - 1] = old.at(t);
    rewrite(old, t, &window, t + 1)
}

/// Conflicts of `path` with the tabled paths from time `from` on. With
/// `jump`, the step into `from` is not a real move and only its arrival
/// cell is checked.
fn conflicts_with(map: &GridMap, table: &ConflictTable, path: &Path, from: usize, jump: bool) -> i64 {
    let end = path.len().max(table.horizon());
    let mut n = 0;
    for t in from.max(1)..end {
        let to = map.index(path.at(t)) as u32;
        n += if jump && t == from {
            table.occupancy(to, t)
        } else {
            table.step_conflicts(map.index(path.at(t - 1)) as u32, to, t)
        } as i64;
    }
    n
}

/// Whether two paths collide at some time in `from..to`.
fn pair_conflicts(p: &Path, q: &Path, from: usize, to: usize) -> bool {
    (from.max(1)..to).any(|t| p.at(t) == q.at(t) || (p.at(t) == q.at(t - 1) && q.at(t) == p.at(t - 1)))
}

/// Predicted change in the conflict count when the `special` robots
/// change from `old` to `new` paths; `frame` holds the new paths as seen
/// by the unchanged robots (for pause timing: without the pause steps).
fn conflict_delta(map: &GridMap, table: &mut ConflictTable, t: usize, old: &[&Path], new: &[&Path], frame: &[&Path], jump: bool) -> i64 {
    for p in old {
        table.remove_path(map, p);
    }
    let mut scanner = ConflictScanner::new();
    let after: i64 = frame.iter().map(|p| conflicts_with(map, table, p, t, jump)).sum::<i64>() + scanner.count(new) as i64;
    let before: i64 = old.iter().map(|p| conflicts_with(map, table, p, t, false)).sum::<i64>() + scanner.count(old) as i64;
    for p in old {
        table.add_path(map, p);
    }
    after - before
}

/// The best splice over all subgrids enclosing `conflict`, look-ahead
/// depths and both timings: one that resolves the conflict for good if
/// possible, then fewest resulting conflicts, then least added cost.
/// `noc` is the current conflict count.
fn best_splice(map: &GridMap, paths: &[Path], noc: usize, conflict: &Conflict, db: &PrimitiveDb, table: &mut ConflictTable) -> Option<Splice> {
    let t = conflict.t;
    let moving = paths.iter().filter(|p| p.settle_time() >= t).count() as i64;
    let mut best: Option<Splice> = None;
    let mut consider = |timing: Timing, special: Vec<(usize, Path)>, frame: Vec<Path>, table: &mut ConflictTable| {
        let old: Vec<&Path> = special.iter().map(|(r, _)| &paths[*r]).collect();
        let new: Vec<&Path> = special.iter().map(|(_, p)| p).collect();
        let (frame, jump): (Vec<&Path>, bool) = match timing {
            Timing::Lock => (new.clone(), false),
            Timing::Pause { .. } => (frame.iter().collect(), true),
        };
        let noc_after = noc as i64 + conflict_delta(map, table, t, &old, &new, &frame, jump);
        let mut cost: i64 = special.iter().map(|(r, p)| p.settle_time() as i64 - paths[*r].settle_time() as i64).sum();
        if let Timing::Pause { len } = timing {
            let shifted = moving - special.iter().filter(|(r, _)| paths[*r].settle_time() >= t).count() as i64;
            cost += shifted * (len as i64 - 1);
        }
        let find = |r: usize| special.iter().find(|(q, _)| *q == r).map_or(&paths[r], |(_, p)| p);
        let recurs = pair_conflicts(find(conflict.a), find(conflict.b), t, t + RECUR_HORIZON + special.len());
        let cand = Splice {
            t,
            timing,
            special,
            recurs,
            noc_after,
            cost,
        };
        if best.as_ref().is_none_or(|b| cand.key() < b.key()) {
            best = Some(cand);
        }
    };
    for spec in subgrid_candidates(map, &conflict_points(conflict, paths)) {
        let inside: Vec<usize> = (0..paths.len()).filter(|&r| spec.contains(paths[r].at(t - 1))).collect();
        let starts: Vec<Vertex> = inside.iter().map(|&r| paths[r].at(t - 1)).collect();
        let mut tried: Vec<Vec<usize>> = Vec::new();
        for lookahead in 1..=MAX_LOOKAHEAD {
            let ends = temporary_goals(&spec, paths, &inside, t, lookahead);
            if tried.contains(&ends) {
                continue;
            }
            let goals: Vec<Vertex> = inside.iter().zip(&ends).map(|(&r, &e)| paths[r].at(e)).collect();
            let Some(steps) = db.query(&spec, &starts, &goals) else {
                continue;
            };
            tried.push(ends.clone());
            let len = steps.len().max(1);
            let windows: Vec<Vec<Vertex>> = (0..inside.len()).map(|k| (0..len).map(|s| steps.get(s).map_or(goals[k], |cfg| cfg[k])).collect()).collect();
            let inner: Vec<(usize, Path)> = inside.iter().enumerate().map(|(k, &r)| (r, rewrite(&paths[r], t, &windows[k], ends[k] + 1))).collect();

            let mut special = inner.clone();
            special.extend(lock_waits(&spec, paths, &inside, t, len));
            consider(Timing::Lock, special, Vec::new(), table);

            let mut special = inner;
            let mut frame: Vec<Path> = inside.iter().enumerate().map(|(k, &r)| rewrite(&paths[r], t, &[goals[k]], ends[k] + 1)).collect();
            for r in pause_holds(paths, &inside, &goals, t) {
                let p = &paths[r];
                special.push((r, rewrite(p, t, &vec![p.at(t - 1); len], t)));
                frame.push(rewrite(p, t, &[p.at(t - 1)], t));
            }
            consider(Timing::Pause { len }, special, frame, table);
        }
    }
    best
}

/// Path index each robot inside the subgrid is routed to: its position
/// `lookahead` steps past the conflict, or the last one before its path
/// leaves the subgrid. Clashing targets are pulled back along the paths
/// until all are distinct (the starts at `t - 1` always are).
fn temporary_goals(spec: &SubgridSpec, paths: &[Path], inside: &[usize], t: usize, lookahead: usize) -> Vec<usize> {
    let mut ends: Vec<usize> = inside
        .iter()
        .map(|&r| {
            let mut e = t - 1;
            while e < t - 1 + lookahead && spec.contains(paths[r].at(e + 1)) {
                e += 1;
            }
            e
        })
        .collect();
    loop {
        let mut changed = false;
        for a in 0..inside.len() {
            for b in a + 1..inside.len() {
                if paths[inside[a]].at(ends[a]) == paths[inside[b]].at(ends[b]) {
                    let k = if ends[b] >= t { b } else { a };
                    ends[k] -= 1;
                    changed = true;
                }
            }
        }
        if !changed {
            return ends;
        }
    }
}

/// Lock timing: outside robots that would enter the subgrid, or a cell
/// where another robot waits, during the `len` locked steps wait there
/// until the lock ends.
fn lock_waits(spec: &SubgridSpec, paths: &[Path], inside: &[usize], t: usize, len: usize) -> Vec<(usize, Path)> {
    let mut exempt = vec![false; paths.len()];
    for &r in inside {
        exempt[r] = true;
    }
    let mut blocked_at: Vec<Option<usize>> = vec![None; paths.len()];
    let mut waiting: FxHashSet<Vertex> = FxHashSet::default();
    for tau in t..t + len {
        loop {
            let mut changed = false;
            for r in 0..paths.len() {
                if exempt[r] || blocked_at[r].is_some() {
                    continue;
                }
                let next = paths[r].at(tau);
                if spec.contains(next) || waiting.contains(&next) {
                    blocked_at[r] = Some(tau);
                    waiting.insert(paths[r].at(tau - 1));
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
    let mut out = Vec::new();
    for (r, b) in blocked_at.iter().enumerate() {
        if let Some(tau) = *b {
            let window: Vec<Vertex> = (t..t + len).map(|s| paths[r].at(s.min(tau - 1))).collect();
            out.push((r, rewrite(&paths[r], t, &window, tau)));
        }
    }
    out
}

/// Pause timing: outside robots whose step `t - 1 -> t` would end on a
/// temporary goal or on a holding robot's cell hold one step longer.
fn pause_holds(paths: &[Path], inside: &[usize], goals: &[Vertex], t: usize) -> Vec<usize> {
    let mut occupied: FxHashSet<Vertex> = goals.iter().copied().collect();
    let candidates: Vec<usize> = (0..paths.len()).filter(|&r| !inside.contains(&r) && paths[r].settle_time() >= t).collect();
    let mut held = Vec::new();
    loop {
        let mut changed = false;
        for &r in &candidates {
            if !held.contains(&r) && occupied.contains(&paths[r].at(t)) {
                held.push(r);
                occupied.insert(paths[r].at(t - 1));
                changed = true;
            }
        }
        if !changed {
            return held;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{count_conflicts, first_conflict, validate_plan};

    fn v(i: u16, j: u16) -> Vertex {
        Vertex::new(i, j)
    }

    #[test]
    fn zero_conflicts_trigger_under_every_policy() {
        for p in [
            TriggerPolicy::NocThreshold(0),
            TriggerPolicy::PocRatio(0.01),
            TriggerPolicy::Stagnation { window: 5, delta: 0 },
        ] {
            assert!(db_triggered(&p, 0, 300, &[300, 0]));
        }
    }

    #[test]
    fn conflict_ratio_boundary() {
        let p = TriggerPolicy::PocRatio(0.10);
        assert!(!db_triggered(&p, 31, 300, &[300, 31]));
        assert!(db_triggered(&p, 30, 300, &[300, 30]));
        assert!(db_triggered(&p, 25, 300, &[300, 25]));
        assert!(db_triggered(&TriggerPolicy::NocThreshold(20), 20, 300, &[20]));
        assert!(!db_triggered(&TriggerPolicy::NocThreshold(20), 21, 300, &[21]));
    }

    #[test]
    fn stagnation_window() {
        let p = TriggerPolicy::Stagnation { window: 100, delta: 0 };
        let flat = vec![7usize; 100];
        assert!(db_triggered(&p, 7, 7, &flat));
        assert!(!db_triggered(&p, 7, 7, &flat[..99]));
        let mut dropping = flat.clone();
        for x in &mut dropping[60..] {
            *x = 6;
        }
        assert!(!db_triggered(&p, 6, 7, &dropping));
        let loose = TriggerPolicy::Stagnation { window: 100, delta: 1 };
        assert!(db_triggered(&loose, 6, 7, &dropping));
    }

    #[test]
    fn gate_arithmetic() {
        let lb = LowerBounds { makespan: 3, soc: 5 };
        let plan = Plan::new(vec![Path(vec![v(1, 1), v(2, 1), v(3, 1), v(4, 1), v(5, 1), v(6, 1), v(7, 1), v(8, 1)])]);
        assert!(!check_optimality(&plan, &lb, 2.0, GateObjective::Makespan));
        assert!(check_optimality(&plan, &lb, 2.5, GateObjective::Makespan));
        assert!(check_optimality(&plan, &lb, f64::INFINITY, GateObjective::Soc));
        assert!(!check_optimality(&plan, &lb, 1.2, GateObjective::Soc));
    }

    #[test]
    fn conflict_free_paths_come_back_unchanged() {
        let map = GridMap::empty(5, 5);
        let paths = vec![Path(vec![v(1, 1), v(2, 1)]), Path(vec![v(1, 3), v(1, 4)])];
        let plan = db_resolution(&map, &paths, &PrimitiveDb::lazy(), None).unwrap();
        assert_eq!(plan.paths, paths);
    }

    #[test]
    fn head_on_swap_is_spliced() {
        let map = GridMap::empty(10, 10);
        let paths = vec![
            Path(vec![v(4, 5), v(5, 5), v(6, 5), v(7, 5)]),
            Path(vec![v(7, 5), v(6, 5), v(5, 5), v(4, 5)]),
        ];
        let plan = db_resolution(&map, &paths, &PrimitiveDb::lazy(), None).unwrap();
        assert_eq!(count_conflicts(&plan), 0);
        assert_eq!(plan.paths[0].last_vertex(), v(7, 5));
        assert_eq!(plan.paths[1].last_vertex(), v(4, 5));
    }

    #[test]
    fn corridor_conflict_cannot_be_repaired() {
        let map = GridMap::parse_movingai("corridor", "type octile\nheight 3\nwidth 5\nmap\n@@@@@\n.....\n@@@@@\n").unwrap();
        let paths = vec![Path(vec![v(2, 2), v(3, 2), v(4, 2)]), Path(vec![v(4, 2), v(3, 2), v(2, 2)])];
        assert!(first_conflict(&Plan::new(paths.clone())).is_some());
        assert!(db_resolution(&map, &paths, &PrimitiveDb::lazy(), None).is_none());
    }

    #[test]
    fn outside_robots_wait_at_the_lock() {
        // Two robots swap inside a 3x2 block while a third drives through it.
        let map = GridMap::empty(8, 8);
        let paths = vec![
            Path(vec![v(3, 3), v(4, 3)]),
            Path(vec![v(4, 3), v(3, 3)]),
            Path(vec![v(7, 4), v(6, 4), v(5, 4), v(4, 4), v(3, 4), v(2, 4)]),
        ];
        let plan = db_resolution(&map, &paths, &PrimitiveDb::lazy(), None).unwrap();
        assert_eq!(count_conflicts(&plan), 0);
        for (p, q) in plan.paths.iter().zip(&paths) {
            assert_eq!(p.last_vertex(), q.last_vertex());
        }
        let inst = Instance::new(
            std::sync::Arc::new(map.clone()),
            paths.iter().map(|p| p.at(0)).collect(),
            paths.iter().map(|p| p.last_vertex()).collect(),
            0,
        )
        .unwrap();
        assert!(validate_plan(&map, &inst, &plan).is_empty());
    }

    #[test]
    fn forced_repair_failure_matches_lifo_ecbs() {
        let map = std::sync::Arc::new(GridMap::empty(5, 5));
        let inst = crate::scenario::gen_uniform(map, 14, 3).unwrap();
        let oracle = DistanceOracle::new(inst.map.clone());
        let cfg = DcbsConfig::noc20();
        let dcbs = run_dcbs_with(&inst, &oracle, &cfg, &Budget::unlimited(), |_, _| None);
        let ecbs = crate::ecbs::run_ecbs(&inst, &oracle, cfg.ecbs(), &Budget::unlimited());
        assert_eq!(dcbs.search.outcome.unwrap(), ecbs.outcome.unwrap());
        assert_eq!(dcbs.search.stats.expansions, ecbs.stats.expansions);
        assert!(dcbs.search.stats.root_noc > 0);
        assert!(dcbs.db.calls > 0);
    }
}
