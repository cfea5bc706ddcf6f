//! Unlabeled path planning via maximum flow on a time-expanded network.
//!
//! Robots are interchangeable: every source must reach some target. For a
//! horizon `T` the network has an in/out node pair per (cell, t) with unit
//! capacity between them (one robot per vertex per step), a wait arc to the
//! next layer, and one unit-capacity gadget per undirected map edge and step
//! that both endpoints feed, so at most one robot crosses an edge per step.
//! This forbids head-on swaps but still lets robots follow each other or
//! rotate around a cycle, matching the labeled collision model. The smallest
//! `T` whose max flow equals `n` is found by counting up from a distance
//! lower bound; the flow then decomposes into the plan.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{InstanceError, SolveError};
use crate::grid::{GridMap, Vertex, UNREACHABLE};
use crate::instance::check_configuration;
use crate::plan::{Path, Plan};

/// Integral max flow (Dinic) on an explicit arc list.
#[derive(Clone, Debug, Default)]
pub struct FlowNetwork {
    head: Vec<u32>,
    next: Vec<u32>,
    to: Vec<u32>,
    cap: Vec<u32>,
    initial: Vec<u32>,
}

const NIL: u32 = u32::MAX;

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            head: vec![NIL; nodes],
            ..Default::default()
        }
    }

    pub fn node_count(&self) -> usize {
        self.head.len()
    }

    pub fn add_node(&mut self) -> usize {
        self.head.push(NIL);
        self.head.len() - 1
    }

    /// Adds `from -> to` with capacity `cap`; returns the arc id.
    pub fn add_arc(&mut self, from: usize, to: usize, cap: u32) -> usize {
        let id = self.to.len();
        for (a, b, c) in [(from, to, cap), (to, from, 0)] {
            self.to.push(b as u32);
            self.cap.push(c);
            self.initial.push(c);
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() as u32 - 1;
        }
        id
    }

    /// Flow currently routed along arc `id`.
    pub fn flow(&self, id: usize) -> u32 {
        self.initial[id] - self.cap[id]
    }

    /// Arcs leaving `node` (forward arcs only) as `(id, target)`.
    pub fn arcs_from(&self, node: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut e = self.head[node];
        std::iter::from_fn(move || {
            while e != NIL {
                let id = e as usize;
                e = self.next[id];
                if id % 2 == 0 {
                    return Some((id, self.to[id] as usize));
                }
            }
            None
        })
    }

    /// Augments to a maximum flow from `source` to `sink` and returns its
    /// value. Calling again continues from the current flow.
    pub fn max_flow(&mut self, source: usize, sink: usize) -> u64 {
        let n = self.head.len();
        let mut total = 0u64;
        let mut level = vec![u32::MAX; n];
        let mut iter = vec![NIL; n];
        let mut queue = VecDeque::new();
        loop {
            level.fill(u32::MAX);
            level[source] = 0;
            queue.clear();
            queue.push_back(source);
            while let Some(x) = queue.pop_front() {
                let mut e = self.head[x];
                while e != NIL {
                    let y = self.to[e as usize] as usize;
                    if self.cap[e as usize] > 0 && level[y] == u32::MAX {
                        level[y] = level[x] + 1;
                        queue.push_back(y);
                    }
                    e = self.next[e as usize];
                }
            }
            if level[sink] == u32::MAX {
                return total;
            }
            iter.copy_from_slice(&self.head);
            loop {
                let pushed = self.augment(source, sink, u32::MAX, &level, &mut iter);
                if pushed == 0 {
                    break;
                }
                total += u64::from(pushed);
            }
        }
    }

    // Iterative blocking-flow DFS along level-increasing arcs.
    fn augment(&mut self, source: usize, sink: usize, limit: u32, level: &[u32], iter: &mut [u32]) -> u32 {
        let mut stack: Vec<u32> = Vec::new();
        let mut x = source;
        loop {
            if x == sink {
                let pushed = stack.iter().map(|&e| self.cap[e as usize]).min().unwrap_or(limit).min(limit);
                for &e in &stack {
                    self.cap[e as usize] -= pushed;
                    self.cap[(e ^ 1) as usize] += pushed;
                }
                return pushed;
            }
            let mut advanced = false;
            while iter[x] != NIL {
                let e = iter[x] as usize;
                let y = self.to[e] as usize;
                if self.cap[e] > 0 && level[y] == level[x] + 1 {
                    stack.push(e as u32);
                    x = y;
                    advanced = true;
                    break;
                }
                iter[x] = self.next[e];
            }
            if !advanced {
                // Dead end: retreat and skip the arc that led here.
                let Some(e) = stack.pop() else { return 0 };
                x = self.to[(e ^ 1) as usize] as usize;
                iter[x] = self.next[iter[x] as usize];
            }
        }
    }
}

/// Interchangeable robots at `sources` that must occupy `targets`.
#[derive(Clone, Debug)]
pub struct UnlabeledProblem {
    pub map: Arc<GridMap>,
    pub sources: Vec<Vertex>,
    pub targets: Vec<Vertex>,
}

impl UnlabeledProblem {
    /// Checks sizes, distinctness and that every connected component holds
    /// as many sources as targets.
    pub fn new(map: Arc<GridMap>, sources: Vec<Vertex>, targets: Vec<Vertex>) -> Result<Self, InstanceError> {
        if sources.len() != targets.len() {
            return Err(InstanceError::SizeMismatch {
                starts: sources.len(),
                goals: targets.len(),
            });
        }
        check_configuration(&map, &sources)?;
        check_configuration(&map, &targets)?;
        let comp = map.components();
        let mut balance = vec![0i64; comp.iter().filter(|&&c| c != u32::MAX).map(|&c| c as usize + 1).max().unwrap_or(0)];
        for &s in &sources {
            balance[comp[map.index(s)] as usize] += 1;
        }
        for &d in &targets {
            balance[comp[map.index(d)] as usize] -= 1;
        }
        if let Some(robot) = sources.iter().position(|&s| balance[comp[map.index(s)] as usize] != 0) {
            return Err(InstanceError::Disconnected { robot });
        }
        Ok(UnlabeledProblem { map, sources, targets })
    }

    pub fn num_robots(&self) -> usize {
        self.sources.len()
    }

    /// The problem with sources and targets exchanged.
    pub fn reversed(&self) -> Self {
        UnlabeledProblem {
            map: self.map.clone(),
            sources: self.targets.clone(),
            targets: self.sources.clone(),
        }
    }

    /// No plan is shorter than the farthest target from its nearest source,
    /// nor the farthest source from its nearest target.
    pub fn makespan_lower_bound(&self) -> usize {
        let nearest = |from: &[Vertex], to: &[Vertex]| {
            to.iter()
                .map(|&d| {
                    let dist = self.map.bfs_from(d);
                    from.iter().map(|&s| dist[self.map.index(s)]).min().unwrap_or(0)
                })
                .filter(|&d| d != UNREACHABLE)
                .max()
                .unwrap_or(0) as usize
        };
        nearest(&self.sources, &self.targets).max(nearest(&self.targets, &self.sources))
    }
}

/// A time-expanded network for one horizon, with the node layout needed to
/// read paths back out of a flow.
pub struct TimeExpandedNetwork {
    pub horizon: usize,
    pub network: FlowNetwork,
    source: usize,
    sink: usize,
    cells: usize,
    // Arc ids of the per-robot source arcs, in robot order.
    source_arcs: Vec<usize>,
}

impl TimeExpandedNetwork {
    pub fn build(problem: &UnlabeledProblem, horizon: usize) -> Self {
        let map = &problem.map;
        let cells = map.cell_count();
        let edges: Vec<(u32, u32)> = (0..cells as u32)
            .filter(|&c| !map.is_blocked_cell(c as usize))
            .flat_map(|c| map.cell_neighbors(c).filter(move |&d| c < d).map(move |d| (c, d)))
            .collect();
        let layers = horizon + 1;
        let gadget_base = 2 * cells * layers;
        let source = gadget_base + 2 * edges.len() * horizon;
        let sink = source + 1;
        let mut network = FlowNetwork::new(sink + 1);
        let vin = |c: u32, t: usize| 2 * (t * cells + c as usize);
        let vout = |c: u32, t: usize| vin(c, t) + 1;
        // Only (cell, t) reachable from some source by t and able to reach
        // some target in the remaining steps can carry flow.
        let from_sources = multi_source_bfs(map, &problem.sources);
        let to_targets = multi_source_bfs(map, &problem.targets);
        let live = |c: u32, t: usize| {
            let (a, b) = (from_sources[c as usize], to_targets[c as usize]);
            a != UNREACHABLE && b != UNREACHABLE && a as usize <= t && b as usize <= horizon - t
        };
        for t in 0..layers {
            for c in 0..cells as u32 {
                if map.is_blocked_cell(c as usize) || !live(c, t) {
                    continue;
                }
                network.add_arc(vin(c, t), vout(c, t), 1);
                if t < horizon && live(c, t + 1) {
                    network.add_arc(vout(c, t), vin(c, t + 1), 1);
                }
            }
        }
        for t in 0..horizon {
            for (k, &(a, b)) in edges.iter().enumerate() {
                let crossable = (live(a, t) && live(b, t + 1)) || (live(b, t) && live(a, t + 1));
                if !crossable {
                    continue;
                }
                let g_in = gadget_base + 2 * (t * edges.len() + k);
                network.add_arc(g_in, g_in + 1, 1);
                for (from, to) in [(a, b), (b, a)] {
                    if live(from, t) && live(to, t + 1) {
                        network.add_arc(vout(from, t), g_in, 1);
                        network.add_arc(g_in + 1, vin(to, t + 1), 1);
                    }
                }
            }
        }
        let source_arcs = problem
            .sources
            .iter()
            .map(|&s| network.add_arc(source, vin(map.index(s) as u32, 0), 1))
            .collect();
        for &d in &problem.targets {
            network.add_arc(vout(map.index(d) as u32, horizon), sink, 1);
        }
        TimeExpandedNetwork {
            horizon,
            network,
            source,
            sink,
            cells,
            source_arcs,
        }
    }

    pub fn max_flow(&mut self) -> usize {
        self.network.max_flow(self.source, self.sink) as usize
    }

    /// Splits a full flow into one vertex sequence per robot.
    pub fn decompose(&self, map: &GridMap) -> Vec<Path> {
        let mut used = vec![0u32; self.network.to.len()];
        let cell_of = |node: usize| -> Option<u32> {
            (node < 2 * self.cells * (self.horizon + 1)).then(|| ((node / 2) % self.cells) as u32)
        };
        self.source_arcs
            .iter()
            .map(|&arc| {
                let mut node = self.network.to[arc] as usize;
                let mut steps = Vec::with_capacity(self.horizon + 1);
                while node != self.sink {
                    if node % 2 == 0 {
                        if let Some(c) = cell_of(node) {
                            steps.push(map.vertex(c));
                        }
                    }
                    let (id, next) = self
                        .network
                        .arcs_from(node)
                        .find(|&(id, _)| self.network.flow(id) > used[id])
                        .expect("flow is conserved");
                    used[id] += 1;
                    node = next;
                }
                Path::new(steps).trimmed()
            })
            .collect()
    }
}

fn multi_source_bfs(map: &GridMap, sources: &[Vertex]) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; map.cell_count()];
    let mut queue = VecDeque::new();
    for &s in sources {
        let c = map.index(s);
        dist[c] = 0;
        queue.push_back(c as u32);
    }
    while let Some(c) = queue.pop_front() {
        for d in map.cell_neighbors(c) {
            if dist[d as usize] == UNREACHABLE {
                dist[d as usize] = dist[c as usize] + 1;
                queue.push_back(d);
            }
        }
    }
    dist
}

/// Makespan-minimal unlabeled plan.
#[derive(Clone, Debug)]
pub struct UnlabeledSolution {
    /// `assignment[i]` is the index of the target robot `i` ends on.
    pub assignment: Vec<usize>,
    pub plan: Plan,
    pub horizon: usize,
    /// The horizon the search started from.
    pub lower_bound: usize,
}

impl UnlabeledSolution {
    /// Targets in robot order.
    pub fn assigned_targets(&self, problem: &UnlabeledProblem) -> Vec<Vertex> {
        self.assignment.iter().map(|&k| problem.targets[k]).collect()
    }
}

/// Maximum number of robots that can be routed within `horizon` steps.
pub fn max_flow_at(problem: &UnlabeledProblem, horizon: usize) -> usize {
    TimeExpandedNetwork::build(problem, horizon).max_flow()
}

pub fn solve_unlabeled(problem: &UnlabeledProblem, deadline: Option<Instant>) -> Result<UnlabeledSolution, SolveError> {
    let n = problem.num_robots();
    let lower_bound = problem.makespan_lower_bound();
    // Unlabeled problems on a connected component are always solvable
    // within |V| + n steps; the cap only guards against bugs.
    let cap = lower_bound + problem.map.free_count() + n;
    for horizon in lower_bound..=cap {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(SolveError::Timeout);
        }
        let mut network = TimeExpandedNetwork::build(problem, horizon);
        if network.max_flow() < n {
            continue;
        }
        let paths = network.decompose(&problem.map);
        let assignment = paths
            .iter()
            .map(|p| problem.targets.iter().position(|&d| d == p.last_vertex()).expect("flow ends on a target"))
            .collect();
        return Ok(UnlabeledSolution {
            assignment,
            plan: Plan::new(paths),
            horizon,
            lower_bound,
        });
    }
    Err(SolveError::Infeasible("no feasible horizon found".into()))
}
