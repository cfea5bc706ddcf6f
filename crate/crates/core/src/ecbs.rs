//! Constraint-tree search: CBS (`w1 = 1`) and ECBS(`w1`).
//!
//! Both levels are focal searches. High-level OPEN is keyed by the node lower
//! bound `lb` (sum of per-robot low-level `f_min` values); FOCAL holds the
//! OPEN nodes with `soc <= w1 * LB_min` and is ordered by conflict count,
//! then by the configured tie-break. The search loop is shared with DCBS
//! through [`HighLevel::run`], which consults a hook on every expanded node.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::error::SolveError;
use crate::grid::DistanceOracle;
use crate::instance::Instance;
use crate::lowlevel::{ConflictTable, Constraint, ConstraintKind, FocalSearch, SearchContext};
use crate::plan::{Conflict, ConflictKind, ConflictScanner, Path, Plan};

/// FOCAL ordering among nodes with equal conflict count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TieBreak {
    /// Smaller sum of costs first.
    #[default]
    BySoc,
    /// Most recently generated node first (depth-first flavour).
    ByLifo,
}

/// Which lower bound the FOCAL membership test compares against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FocalRule {
    /// `soc <= w1 * min lb over OPEN`; gives the `w1` suboptimality bound.
    #[default]
    GlobalLb,
    /// `soc <= w1 * node.lb`, tested per node. No global bound; when no node
    /// qualifies the minimum-`lb` node is expanded.
    PerNode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcbsConfig {
    pub w1: f64,
    pub tiebreak: TieBreak,
    pub focal_rule: FocalRule,
}

impl EcbsConfig {
    pub fn new(w1: f64) -> Self {
        EcbsConfig {
            w1,
            tiebreak: TieBreak::BySoc,
            focal_rule: FocalRule::GlobalLb,
        }
    }

    /// Exact CBS.
    pub fn cbs() -> Self {
        Self::new(1.0)
    }

    pub fn with_tiebreak(mut self, tiebreak: TieBreak) -> Self {
        self.tiebreak = tiebreak;
        self
    }
}

impl Default for EcbsConfig {
    fn default() -> Self {
        Self::new(1.5)
    }
}

/// A constraint-tree node.
#[derive(Clone, Debug)]
pub struct CtNode {
    pub paths: Vec<Arc<Path>>,
    pub constraints: Vec<Arc<Vec<Constraint>>>,
    /// Per-robot lower bounds; non-decreasing down every branch.
    pub path_lb: Vec<u32>,
    pub soc: u64,
    pub lb: u64,
    pub noc: usize,
    pub seq: u64,
    pub depth: u32,
}

impl CtNode {
    pub fn plan(&self) -> Plan {
        Plan::new(self.paths.iter().map(|p| (**p).clone()).collect())
    }
}

/// One row of the per-iteration conflict trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub expanded_noc: usize,
    pub open_size: usize,
}

/// Renders a trace as CSV with header `iteration,expanded_noc,open_size`.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,expanded_noc,open_size\n");
    for r in trace {
        let _ = writeln!(out, "{},{},{}", r.iteration, r.expanded_noc, r.open_size);
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub expansions: usize,
    pub generated: usize,
    pub root_lb: u64,
    pub root_soc: u64,
    pub root_noc: usize,
    /// Smallest `lb` in OPEN (including the returned node) at termination.
    pub lb_min: u64,
}

/// Result of a high-level search; the trace is kept even on failure.
#[derive(Clone, Debug)]
pub struct SearchReport {
    pub outcome: Result<Plan, SolveError>,
    pub trace: Vec<TraceRow>,
    pub stats: SearchStats,
}

/// What the search does with a node popped from FOCAL.
pub enum Decision {
    /// Terminate with this plan.
    Return(Plan),
    /// Branch on the node's first conflict.
    Expand,
    /// Drop the node without children.
    Discard,
}

/// What the hook sees besides the node.
pub struct HookState<'a> {
    /// Conflict counts of expanded nodes, in expansion order (this node last).
    pub history: &'a [usize],
    pub root_noc: usize,
    pub expansions: usize,
}

/// Shared machinery of a constraint-tree search on one instance.
pub struct HighLevel<'a> {
    instance: &'a Instance,
    oracle: &'a DistanceOracle,
    config: EcbsConfig,
    deadline: Option<Instant>,
    low: FocalSearch,
    table: ConflictTable,
    scanner: ConflictScanner,
    next_seq: u64,
    generated: usize,
}

impl<'a> HighLevel<'a> {
    pub fn new(instance: &'a Instance, oracle: &'a DistanceOracle, config: EcbsConfig) -> Self {
        assert!(config.w1 >= 1.0, "w1 must be at least 1");
        HighLevel {
            instance,
            oracle,
            config,
            deadline: None,
            low: FocalSearch::new(),
            table: ConflictTable::new(&instance.map),
            scanner: ConflictScanner::new(),
            next_seq: 0,
            generated: 0,
        }
    }

    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    fn plan_robot(&mut self, robot: usize, constraints: &[Constraint]) -> Result<Option<(Path, u32)>, SolveError> {
        let map = &self.instance.map;
        let ctx = SearchContext::new(map, self.oracle, self.instance.starts[robot], self.instance.goals[robot])
            .with_constraints(constraints)
            .with_conflicts(&self.table)
            .with_deadline(self.deadline);
        Ok(self.low.run(&ctx, self.config.w1)?.map(|r| (r.path, r.f_min)))
    }

    fn make_node(&mut self, paths: Vec<Arc<Path>>, constraints: Vec<Arc<Vec<Constraint>>>, path_lb: Vec<u32>, depth: u32) -> CtNode {
        let soc = paths.iter().map(|p| p.settle_time() as u64).sum();
        let lb = path_lb.iter().map(|&l| l as u64).sum();
        let noc = self.scanner.count(&paths);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.generated += 1;
        CtNode {
            paths,
            constraints,
            path_lb,
            soc,
            lb,
            noc,
            seq,
            depth,
        }
    }

    /// Plans robots one by one, each avoiding conflicts with those before it.
    pub fn root(&mut self) -> Result<CtNode, SolveError> {
        let n = self.instance.num_robots();
        let map = self.instance.map.clone();
        self.table = ConflictTable::new(&map);
        let mut paths = Vec::with_capacity(n);
        let mut lbs = Vec::with_capacity(n);
        for r in 0..n {
            let Some((path, f_min)) = self.plan_robot(r, &[])? else {
                return Err(SolveError::Infeasible(format!("robot {r} cannot reach its goal")));
            };
            self.table.add_path(&map, &path);
            paths.push(Arc::new(path));
            lbs.push(f_min);
        }
        let empty = Arc::new(Vec::new());
        Ok(self.make_node(paths, vec![empty; n], lbs, 0))
    }

    /// Children of `node` resolving `conflict`, one per involved robot;
    /// a child whose robot cannot be replanned is dropped.
    pub fn expand(&mut self, node: &CtNode, conflict: &Conflict) -> Result<Vec<CtNode>, SolveError> {
        let map = self.instance.map.clone();
        let mut children = Vec::with_capacity(2);
        for (robot, kind) in constraints_for(conflict) {
            let mut cons = (*node.constraints[robot]).clone();
            cons.push(Constraint { robot, kind });
            self.table.rebuild(&map, node.paths.iter().map(|p| &**p), Some(robot));
            let Some((path, f_min)) = self.plan_robot(robot, &cons)? else {
                continue;
            };
            let mut paths = node.paths.clone();
            paths[robot] = Arc::new(path);
            let mut constraints = node.constraints.clone();
            constraints[robot] = Arc::new(cons);
            let mut lbs = node.path_lb.clone();
            lbs[robot] = lbs[robot].max(f_min);
            children.push(self.make_node(paths, constraints, lbs, node.depth + 1));
        }
        Ok(children)
    }

    /// Best-first focal search over the constraint tree.
    pub fn run(&mut self, budget: &Budget, mut hook: impl FnMut(&CtNode, &HookState<'_>) -> Decision) -> SearchReport {
        self.deadline = budget.deadline;
        let mut trace = Vec::new();
        let mut history = Vec::new();
        let mut stats = SearchStats::default();
        let root = match self.root() {
            Ok(r) => r,
            Err(e) => {
                return SearchReport {
                    outcome: Err(e),
                    trace,
                    stats,
                }
            }
        };
        stats.root_lb = root.lb;
        stats.root_soc = root.soc;
        stats.root_noc = root.noc;
        let mut open = OpenList::new(self.config);
        open.insert(root);

        let outcome = loop {
            let Some(lb_min) = open.lb_min() else {
                break Err(SolveError::Exhausted);
            };
            stats.lb_min = lb_min;
            if budget.timed_out() || budget.expansions_exhausted(stats.expansions) {
                break Err(SolveError::Timeout);
            }
            let node = open.pop();
            history.push(node.noc);
            trace.push(TraceRow {
                iteration: stats.expansions,
                expanded_noc: node.noc,
                open_size: open.len(),
            });
            stats.expansions += 1;
            let state = HookState {
                history: &history,
                root_noc: stats.root_noc,
                expansions: stats.expansions,
            };
            match hook(&node, &state) {
                Decision::Return(plan) => break Ok(plan),
                Decision::Discard => continue,
                Decision::Expand => {}
            }
            let Some(conflict) = self.scanner.first(&node.paths) else {
                // A conflict-free node the hook declined to return.
                continue;
            };
            match self.expand(&node, &conflict) {
                Ok(children) => {
                    for c in children {
                        open.insert(c);
                    }
                }
                Err(e) => break Err(e),
            }
        };
        stats.generated = self.generated;
        SearchReport { outcome, trace, stats }
    }
}

/// The two constraints splitting a conflict, one per robot.
pub fn constraints_for(conflict: &Conflict) -> [(usize, ConstraintKind); 2] {
    let t = conflict.t;
    match conflict.kind {
        ConflictKind::Vertex { at } => [
            (conflict.a, ConstraintKind::Vertex { v: at, t }),
            (conflict.b, ConstraintKind::Vertex { v: at, t }),
        ],
        ConflictKind::Edge { from, to } => [
            (conflict.a, ConstraintKind::Edge { from, to, t }),
            (conflict.b, ConstraintKind::Edge { from: to, to: from, t }),
        ],
    }
}

type FocalKey = (Reverse<usize>, Reverse<u64>, u64, Reverse<u64>);

/// OPEN and FOCAL with lazy deletion.
struct OpenList {
    config: EcbsConfig,
    nodes: Vec<Option<CtNode>>,
    by_lb: BTreeSet<(u64, u64)>,
    /// OPEN nodes not yet in FOCAL, by soc.
    waiting: BTreeSet<(u64, u64)>,
    focal: BinaryHeap<(FocalKey, u64)>,
    bound: f64,
}

impl OpenList {
    fn new(config: EcbsConfig) -> Self {
        OpenList {
            config,
            nodes: Vec::new(),
            by_lb: BTreeSet::new(),
            waiting: BTreeSet::new(),
            focal: BinaryHeap::new(),
            bound: f64::NEG_INFINITY,
        }
    }

    fn len(&self) -> usize {
        self.by_lb.len()
    }

    fn lb_min(&self) -> Option<u64> {
        self.by_lb.first().map(|&(lb, _)| lb)
    }

    fn key(&self, n: &CtNode) -> FocalKey {
        match self.config.tiebreak {
            TieBreak::BySoc => (Reverse(n.noc), Reverse(n.soc), 0, Reverse(n.seq)),
            TieBreak::ByLifo => (Reverse(n.noc), Reverse(0), n.seq, Reverse(0)),
        }
    }

    fn eligible(&self, n: &CtNode) -> bool {
        match self.config.focal_rule {
            FocalRule::GlobalLb => n.soc as f64 <= self.bound + 1e-9,
            FocalRule::PerNode => n.soc as f64 <= self.config.w1 * n.lb as f64 + 1e-9,
        }
    }

    fn insert(&mut self, node: CtNode) {
        let seq = node.seq;
        assert_eq!(seq as usize, self.nodes.len(), "nodes are inserted in generation order");
        self.by_lb.insert((node.lb, seq));
        if self.config.focal_rule == FocalRule::GlobalLb {
            self.bound = self.bound.max(self.config.w1 * self.lb_min().unwrap() as f64);
        }
        if self.eligible(&node) {
            self.focal.push((self.key(&node), seq));
        } else {
            self.waiting.insert((node.soc, seq));
        }
        self.nodes.push(Some(node));
    }

    /// Removes and returns the FOCAL head. OPEN must be non-empty.
    fn pop(&mut self) -> CtNode {
        if self.config.focal_rule == FocalRule::GlobalLb {
            let bound = self.config.w1 * self.lb_min().unwrap() as f64;
            if bound > self.bound {
                self.bound = bound;
                while let Some(&(soc, seq)) = self.waiting.first() {
                    if soc as f64 > self.bound + 1e-9 {
                        break;
                    }
                    self.waiting.pop_first();
                    let key = self.key(self.nodes[seq as usize].as_ref().unwrap());
                    self.focal.push((key, seq));
                }
            }
        }
        let seq = loop {
            match self.focal.pop() {
                Some((_, seq)) if self.nodes[seq as usize].is_some() => break seq,
                Some(_) => continue,
                None => {
                    // Only reachable with the per-node rule.
                    let &(_, seq) = self.by_lb.first().unwrap();
                    break seq;
                }
            }
        };
        let node = self.nodes[seq as usize].take().unwrap();
        self.by_lb.remove(&(node.lb, seq));
        self.waiting.remove(&(node.soc, seq));
        node
    }
}

/// A solved ECBS run.
#[derive(Clone, Debug)]
pub struct EcbsSolution {
    pub plan: Plan,
    pub trace: Vec<TraceRow>,
    pub stats: SearchStats,
}

/// ECBS(`w1`) with its own distance oracle; see [`run_ecbs`].
pub fn solve_ecbs(instance: &Instance, config: EcbsConfig, budget: &Budget) -> Result<EcbsSolution, SolveError> {
    let oracle = DistanceOracle::new(instance.map.clone());
    let report = run_ecbs(instance, &oracle, config, budget);
    report.outcome.map(|plan| EcbsSolution {
        plan,
        trace: report.trace,
        stats: report.stats,
    })
}

/// ECBS(`w1`): returns the first conflict-free node popped from FOCAL; its
/// soc is at most `w1 * stats.lb_min`.
pub fn run_ecbs(instance: &Instance, oracle: &DistanceOracle, config: EcbsConfig, budget: &Budget) -> SearchReport {
    let mut hl = HighLevel::new(instance, oracle, config);
    hl.run(budget, |node, _| {
        if node.noc == 0 {
            Decision::Return(node.plan())
        } else {
            Decision::Expand
        }
    })
}
