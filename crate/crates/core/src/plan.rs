//! Paths, joint plans, collision semantics and solution metrics.
//!
//! Time is discrete and synchronous. In one step a robot either waits or
//! moves to a 4-neighbor. Two robots collide when they occupy one vertex at
//! one time (vertex conflict) or traverse one edge in opposite directions in
//! one step (edge conflict). Moving into a vertex that is being vacated in
//! the same step is allowed, so rotations along cycles of length 3 or more
//! are legal. A path is padded with its last vertex after it ends: a robot
//! resting on its goal keeps occupying it.

use std::borrow::Borrow;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::grid::{DistanceOracle, GridMap, Vertex, UNREACHABLE};
use crate::instance::Instance;

/// A timed vertex sequence `p^0 .. p^T`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path(pub Vec<Vertex>);

impl Path {
    pub fn new(steps: Vec<Vertex>) -> Self {
        Path(steps)
    }

    /// Position at time `t`, padded with the final vertex.
    #[inline]
    pub fn at(&self, t: usize) -> Vertex {
        self.0[t.min(self.0.len() - 1)]
    }

    pub fn last_vertex(&self) -> Vertex {
        *self.0.last().expect("non-empty path")
    }

    /// Smallest `t_i` with `p^t = p^T` for all `t >= t_i`.
    pub fn settle_time(&self) -> usize {
        let last = self.last_vertex();
        self.0.iter().rposition(|&v| v != last).map_or(0, |k| k + 1)
    }

    /// Drops trailing waits at the final vertex.
    pub fn trimmed(mut self) -> Self {
        let keep = self.settle_time() + 1;
        self.0.truncate(keep);
        self
    }

    pub fn into_inner(self) -> Vec<Vertex> {
        self.0
    }
}

impl Deref for Path {
    type Target = [Vertex];
    fn deref(&self) -> &[Vertex] {
        &self.0
    }
}

impl From<Vec<Vertex>> for Path {
    fn from(v: Vec<Vertex>) -> Self {
        Path(v)
    }
}

/// One path per robot.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub paths: Vec<Path>,
}

impl Plan {
    pub fn new(paths: Vec<Path>) -> Self {
        Plan { paths }
    }

    pub fn num_robots(&self) -> usize {
        self.paths.len()
    }

    /// Largest path index; paths are implicitly padded up to it.
    pub fn horizon(&self) -> usize {
        self.paths.iter().map(|p| p.len().saturating_sub(1)).max().unwrap_or(0)
    }

    #[inline]
    pub fn at(&self, robot: usize, t: usize) -> Vertex {
        self.paths[robot].at(t)
    }

    /// Joint configuration at time `t`.
    pub fn configuration(&self, t: usize) -> Vec<Vertex> {
        self.paths.iter().map(|p| p.at(t)).collect()
    }

    /// Explicitly pads every path to the common horizon.
    pub fn padded(&self) -> Plan {
        let h = self.horizon();
        Plan::new(self.paths.iter().map(|p| Path((0..=h).map(|t| p.at(t)).collect())).collect())
    }

    /// Trims trailing goal waits of every path.
    pub fn trimmed(self) -> Plan {
        Plan::new(self.paths.into_iter().map(Path::trimmed).collect())
    }

    /// Time-reversed plan; collision-freeness is preserved.
    pub fn reversed(&self) -> Plan {
        let h = self.horizon();
        Plan::new(self.paths.iter().map(|p| Path((0..=h).rev().map(|t| p.at(t)).collect()).trimmed()).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConflictKind {
    /// Both robots occupy `at` at time `t`.
    Vertex { at: Vertex },
    /// Robot `a` moves `from -> to` while robot `b` moves `to -> from`.
    Edge { from: Vertex, to: Vertex },
}

/// A collision between robots `a < b` arriving at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Conflict {
    pub t: usize,
    pub a: usize,
    pub b: usize,
    pub kind: ConflictKind,
}

/// Reusable buffers for scanning a plan's conflicts time step by time step.
#[derive(Default)]
pub struct ConflictScanner {
    width: usize,
    head: [Vec<u32>; 2],
    next: [Vec<u32>; 2],
    found: Vec<Conflict>,
}

const NIL: u32 = u32::MAX;

impl ConflictScanner {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare<P: Borrow<Path>>(&mut self, paths: &[P]) {
        let (mut w, mut h) = (1usize, 1usize);
        for p in paths {
            for v in p.borrow().iter() {
                w = w.max(v.i as usize + 1);
                h = h.max(v.j as usize + 1);
            }
        }
        self.width = w;
        for k in 0..2 {
            self.head[k].clear();
            self.head[k].resize(w * h, NIL);
            self.next[k].clear();
            self.next[k].resize(paths.len(), NIL);
        }
    }

    #[inline]
    fn cell(&self, v: Vertex) -> usize {
        v.j as usize * self.width + v.i as usize
    }

    fn fill<P: Borrow<Path>>(&mut self, slot: usize, paths: &[P], t: usize) {
        for r in (0..paths.len()).rev() {
            let c = self.cell(paths[r].borrow().at(t));
            self.next[slot][r] = self.head[slot][c];
            self.head[slot][c] = r as u32;
        }
    }

    fn clear<P: Borrow<Path>>(&mut self, slot: usize, paths: &[P], t: usize) {
        for r in 0..paths.len() {
            let c = self.cell(paths[r].borrow().at(t));
            self.head[slot][c] = NIL;
        }
    }

    /// Visits conflicts ordered by time, then by robot pair; stops when
    /// `visit` returns `false`.
    pub fn scan<P: Borrow<Path>>(&mut self, paths: &[P], mut visit: impl FnMut(&Conflict) -> bool) {
        if paths.len() < 2 {
            return;
        }
        self.prepare(paths);
        let horizon = paths.iter().map(|p| p.borrow().len().saturating_sub(1)).max().unwrap_or(0);
        self.fill(0, paths, 0);
        for t in 0..=horizon {
            let cur = t % 2;
            let prev = 1 - cur;
            if t > 0 {
                self.fill(cur, paths, t);
            }
            self.found.clear();
            for r in 0..paths.len() {
                let v = paths[r].borrow().at(t);
                // Vertex conflicts: pair r with every later robot in its cell.
                let mut o = self.next[cur][r];
                while o != NIL {
                    self.found.push(Conflict {
                        t,
                        a: r,
                        b: o as usize,
                        kind: ConflictKind::Vertex { at: v },
                    });
                    o = self.next[cur][o as usize];
                }
                if t == 0 {
                    continue;
                }
                let u = paths[r].borrow().at(t - 1);
                if u == v {
                    continue;
                }
                // Edge conflicts: a robot that was at v and is now at u.
                let mut o = self.head[prev][self.cell(v)];
                while o != NIL {
                    let other = o as usize;
                    if other > r && paths[other].borrow().at(t) == u {
                        self.found.push(Conflict {
                            t,
                            a: r,
                            b: other,
                            kind: ConflictKind::Edge { from: u, to: v },
                        });
                    }
                    o = self.next[prev][other];
                }
            }
            if !self.found.is_empty() {
                self.found.sort_by_key(|c| (c.a, c.b));
                let found = std::mem::take(&mut self.found);
                let keep_going = found.iter().all(&mut visit);
                self.found = found;
                if !keep_going {
                    if t > 0 {
                        self.clear(prev, paths, t - 1);
                    }
                    self.clear(cur, paths, t);
                    return;
                }
            }
            if t > 0 {
                self.clear(prev, paths, t - 1);
            }
        }
        self.clear(horizon % 2, paths, horizon);
    }

    pub fn count<P: Borrow<Path>>(&mut self, paths: &[P]) -> usize {
        let mut n = 0;
        self.scan(paths, |_| {
            n += 1;
            true
        });
        n
    }

    pub fn first<P: Borrow<Path>>(&mut self, paths: &[P]) -> Option<Conflict> {
        let mut first = None;
        self.scan(paths, |c| {
            first = Some(*c);
            false
        });
        first
    }
}

/// Number of `(t, pair)` vertex and edge conflicts in the padded plan.
pub fn count_conflicts(plan: &Plan) -> usize {
    ConflictScanner::new().count(&plan.paths)
}

/// Earliest conflict; ties at equal `t` go to the smallest robot pair.
pub fn first_conflict(plan: &Plan) -> Option<Conflict> {
    ConflictScanner::new().first(&plan.paths)
}

/// All conflicts, ordered by time then pair.
pub fn all_conflicts(plan: &Plan) -> Vec<Conflict> {
    let mut out = Vec::new();
    ConflictScanner::new().scan(&plan.paths, |c| {
        out.push(*c);
        true
    });
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    RobotCount { expected: usize, found: usize },
    EmptyPath,
    WrongStart { expected: Vertex, found: Vertex },
    WrongGoal { expected: Vertex, found: Vertex },
    InvalidVertex(Vertex),
    /// Step between non-adjacent, non-equal vertices.
    Jump { from: Vertex, to: Vertex },
    VertexCollision(Vertex),
    EdgeCollision { from: Vertex, to: Vertex },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    pub robots: Vec<usize>,
    pub kind: ViolationKind,
}

/// Lists every feasibility and collision violation; empty means valid.
pub fn validate_plan(map: &GridMap, instance: &Instance, plan: &Plan) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = instance.num_robots();
    if plan.num_robots() != n {
        out.push(Violation {
            t: 0,
            robots: vec![],
            kind: ViolationKind::RobotCount {
                expected: n,
                found: plan.num_robots(),
            },
        });
        return out;
    }
    let mut structurally_ok = true;
    for (r, path) in plan.paths.iter().enumerate() {
        if path.is_empty() {
            out.push(Violation {
                t: 0,
                robots: vec![r],
                kind: ViolationKind::EmptyPath,
            });
            structurally_ok = false;
            continue;
        }
        if path[0] != instance.starts[r] {
            out.push(Violation {
                t: 0,
                robots: vec![r],
                kind: ViolationKind::WrongStart {
                    expected: instance.starts[r],
                    found: path[0],
                },
            });
        }
        if path.last_vertex() != instance.goals[r] {
            out.push(Violation {
                t: path.len() - 1,
                robots: vec![r],
                kind: ViolationKind::WrongGoal {
                    expected: instance.goals[r],
                    found: path.last_vertex(),
                },
            });
        }
        for (t, &v) in path.iter().enumerate() {
            if !map.is_free(v) {
                out.push(Violation {
                    t,
                    robots: vec![r],
                    kind: ViolationKind::InvalidVertex(v),
                });
            }
            if t > 0 {
                let u = path[t - 1];
                if u != v && !u.is_adjacent(v) {
                    out.push(Violation {
                        t,
                        robots: vec![r],
                        kind: ViolationKind::Jump { from: u, to: v },
                    });
                }
            }
        }
    }
    if structurally_ok {
        ConflictScanner::new().scan(&plan.paths, |c| {
            out.push(Violation {
                t: c.t,
                robots: vec![c.a, c.b],
                kind: match c.kind {
                    ConflictKind::Vertex { at } => ViolationKind::VertexCollision(at),
                    ConflictKind::Edge { from, to } => ViolationKind::EdgeCollision { from, to },
                },
            });
            true
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub makespan: usize,
    pub soc: usize,
}

/// Makespan and sum of settle times `t_i`.
pub fn metrics(plan: &Plan) -> Metrics {
    let settle: Vec<usize> = plan.paths.iter().map(Path::settle_time).collect();
    Metrics {
        makespan: settle.iter().copied().max().unwrap_or(0),
        soc: settle.iter().sum(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowerBounds {
    pub makespan: u32,
    pub soc: u64,
}

/// Distance-based bounds: `max_i dist(s_i,g_i)` and `sum_i dist(s_i,g_i)`.
pub fn lower_bounds(oracle: &DistanceOracle, instance: &Instance) -> LowerBounds {
    let mut lb = LowerBounds { makespan: 0, soc: 0 };
    for (s, g) in instance.starts.iter().zip(&instance.goals) {
        let d = oracle.dist(*s, *g);
        debug_assert_ne!(d, UNREACHABLE, "starts and goals share a component");
        lb.makespan = lb.makespan.max(d);
        lb.soc += d as u64;
    }
    lb
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn v(i: u16, j: u16) -> Vertex {
        Vertex::new(i, j)
    }

    fn path(steps: &[(u16, u16)]) -> Path {
        Path(steps.iter().map(|&(i, j)| v(i, j)).collect())
    }

    #[test]
    fn swap_is_edge_collision() {
        let map = Arc::new(GridMap::empty(3, 1));
        let inst = Instance::new(map.clone(), vec![v(1, 1), v(2, 1)], vec![v(2, 1), v(1, 1)], 0).unwrap();
        let plan = Plan::new(vec![path(&[(1, 1), (2, 1)]), path(&[(2, 1), (1, 1)])]);
        let viol = validate_plan(&map, &inst, &plan);
        assert_eq!(viol.len(), 1);
        assert_eq!(viol[0].t, 1);
        assert_eq!(viol[0].robots, vec![0, 1]);
        assert!(matches!(viol[0].kind, ViolationKind::EdgeCollision { .. }));
    }

    #[test]
    fn two_by_two_rotation_is_legal() {
        // Conditions 1-2 checked by hand for every pair: no shared vertex at
        // t=1 and no pair exchanges positions.
        let map = Arc::new(GridMap::empty(2, 2));
        let ring = [v(1, 1), v(2, 1), v(2, 2), v(1, 2)];
        let starts = ring.to_vec();
        let goals: Vec<_> = (0..4).map(|k| ring[(k + 1) % 4]).collect();
        let inst = Instance::new(map.clone(), starts.clone(), goals.clone(), 0).unwrap();
        let plan = Plan::new((0..4).map(|k| Path(vec![starts[k], goals[k]])).collect());
        assert!(validate_plan(&map, &inst, &plan).is_empty());
        assert_eq!(count_conflicts(&plan), 0);
    }

    #[test]
    fn teleport_is_a_feasibility_violation() {
        let map = Arc::new(GridMap::empty(4, 1));
        let inst = Instance::new(map.clone(), vec![v(1, 1)], vec![v(3, 1)], 0).unwrap();
        let plan = Plan::new(vec![path(&[(1, 1), (3, 1)])]);
        let viol = validate_plan(&map, &inst, &plan);
        assert_eq!(viol.len(), 1);
        assert!(matches!(viol[0].kind, ViolationKind::Jump { .. }));
    }

    #[test]
    fn endpoint_mismatches_reported() {
        let map = Arc::new(GridMap::empty(4, 1));
        let inst = Instance::new(map.clone(), vec![v(1, 1)], vec![v(3, 1)], 0).unwrap();
        let plan = Plan::new(vec![path(&[(2, 1), (3, 1), (4, 1)])]);
        let kinds: Vec<_> = validate_plan(&map, &inst, &plan).into_iter().map(|v| v.kind).collect();
        assert!(kinds.iter().any(|k| matches!(k, ViolationKind::WrongStart { .. })));
        assert!(kinds.iter().any(|k| matches!(k, ViolationKind::WrongGoal { .. })));
    }

    #[test]
    fn conflict_counts() {
        let free = Plan::new(vec![path(&[(1, 1), (2, 1)]), path(&[(1, 3), (2, 3)])]);
        assert_eq!(count_conflicts(&free), 0);
        assert_eq!(first_conflict(&free), None);

        // Same vertex at t=3 only.
        let meet = Plan::new(vec![
            path(&[(1, 1), (2, 1), (3, 1), (4, 1), (4, 2)]),
            path(&[(4, 3), (4, 4), (4, 3), (4, 1), (5, 1)]),
        ]);
        assert_eq!(count_conflicts(&meet), 1);
        let c = first_conflict(&meet).unwrap();
        assert_eq!((c.t, c.a, c.b), (3, 0, 1));
        assert_eq!(c.kind, ConflictKind::Vertex { at: v(4, 1) });

        // Head-on swap at t=1, then both meet at (3,1) at t=3:
        // enumerating (t, pair) gives {(1,(0,1)) edge, (3,(0,1)) vertex}.
        let both = Plan::new(vec![
            path(&[(1, 1), (2, 1), (2, 2), (3, 1)]),
            path(&[(2, 1), (1, 1), (1, 2), (3, 1)]),
        ]);
        assert_eq!(count_conflicts(&both), 2);
        let c = first_conflict(&both).unwrap();
        assert_eq!(c.t, 1);
        assert_eq!(c.kind, ConflictKind::Edge { from: v(1, 1), to: v(2, 1) });
    }

    #[test]
    fn first_conflict_breaks_ties_by_pair() {
        let plan = Plan::new(vec![
            path(&[(1, 1), (1, 1)]),
            path(&[(3, 1), (4, 1)]),
            path(&[(5, 1), (4, 1)]),
            path(&[(1, 2), (1, 1)]),
        ]);
        let c = first_conflict(&plan).unwrap();
        assert_eq!((c.t, c.a, c.b), (1, 0, 3));
        assert_eq!(count_conflicts(&plan), 2);
    }

    #[test]
    fn parked_robot_keeps_its_goal() {
        let plan = Plan::new(vec![path(&[(2, 1)]), path(&[(4, 1), (3, 1), (2, 1), (1, 1)])]);
        let c = first_conflict(&plan).unwrap();
        assert_eq!(c.t, 2);
    }

    #[test]
    fn metrics_follow_settle_times() {
        // Robot 0 sits on its goal throughout: contributes 0.
        // Robot 1 leaves its goal at t=1 and returns at t=4: t_1 = 4.
        let plan = Plan::new(vec![
            path(&[(1, 1), (1, 1), (1, 1)]),
            path(&[(3, 1), (4, 1), (4, 2), (4, 1), (3, 1)]),
        ]);
        assert_eq!(metrics(&plan), Metrics { makespan: 4, soc: 4 });
    }

    #[test]
    fn diagonal_swap_on_two_by_two() {
        let plan = Plan::new(vec![path(&[(1, 1), (2, 1), (2, 2)]), path(&[(2, 2), (1, 2), (1, 1)])]);
        assert_eq!(count_conflicts(&plan), 0);
        assert_eq!(metrics(&plan), Metrics { makespan: 2, soc: 4 });
    }

    #[test]
    fn lower_bound_examples() {
        let map = Arc::new(GridMap::empty(10, 10));
        let oracle = DistanceOracle::new(map.clone());
        let at_goal = Instance::new(map.clone(), vec![v(1, 1), v(2, 2)], vec![v(1, 1), v(2, 2)], 0).unwrap();
        assert_eq!(lower_bounds(&oracle, &at_goal), LowerBounds { makespan: 0, soc: 0 });
        let one = Instance::new(map.clone(), vec![v(1, 1)], vec![v(5, 4)], 0).unwrap();
        assert_eq!(lower_bounds(&oracle, &one), LowerBounds { makespan: 7, soc: 7 });
        let two = Instance::new(map, vec![v(1, 1), v(1, 5)], vec![v(2, 3), v(6, 5)], 0).unwrap();
        assert_eq!(lower_bounds(&oracle, &two), LowerBounds { makespan: 5, soc: 8 });
    }

    #[test]
    fn reversal_preserves_validity() {
        let plan = Plan::new(vec![path(&[(1, 1), (2, 1), (2, 2)]), path(&[(2, 2), (1, 2), (1, 1)])]);
        let rev = plan.reversed();
        assert_eq!(rev.paths[0].0, vec![v(2, 2), v(2, 1), v(1, 1)]);
        assert_eq!(count_conflicts(&rev), 0);
    }
}
