//! Space-time single-robot search: plain A* and the focal variant used by
//! the ECBS low level.
//!
//! States are `(cell, t)` with `g = t`. The heuristic is
//! `max(dist(cell, goal), earliest_park - t)`, where `earliest_park` is one
//! past the last vertex constraint on the goal; it is consistent, so `f` is
//! non-decreasing along any path and the OPEN minimum never drops.
//!
//! Reaching the goal does not end the search directly: it spawns a terminal
//! "park" node carrying the conflicts the robot would suffer by resting on
//! its goal for good. Popping a park node returns the path.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::grid::{DistanceOracle, GridMap, Vertex, UNREACHABLE};
use crate::plan::Path;

/// Low-level expansions between deadline checks.
pub const DEADLINE_CHECK_INTERVAL: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// The robot may not be at `v` at time `t`.
    Vertex { v: Vertex, t: usize },
    /// The robot may not move `from -> to` arriving at time `t >= 1`.
    Edge { from: Vertex, to: Vertex, t: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub robot: usize,
    pub kind: ConstraintKind,
}

impl Constraint {
    pub fn time(&self) -> usize {
        match self.kind {
            ConstraintKind::Vertex { t, .. } | ConstraintKind::Edge { t, .. } => t,
        }
    }
}

/// Direction slot of the move `from -> to` between adjacent cells.
#[inline]
fn dir_index(from: u32, to: u32, width: u32) -> usize {
    if to == from + 1 {
        0
    } else if to + 1 == from {
        1
    } else if to == from + width {
        2
    } else {
        3
    }
}

/// Occupancy counts of a set of paths, used to count the conflicts a
/// candidate path would have with them.
///
/// Paths are padded: after its end a path occupies its last cell forever,
/// which the table represents by extending the last time row.
#[derive(Clone, Debug)]
pub struct ConflictTable {
    cells: usize,
    width: u32,
    horizon: usize,
    vertex: Vec<u16>,
    moves: Vec<u16>,
}

impl ConflictTable {
    pub fn new(map: &GridMap) -> Self {
        ConflictTable {
            cells: map.cell_count(),
            width: map.width() as u32,
            horizon: 1,
            vertex: vec![0; map.cell_count()],
            moves: vec![0; map.cell_count() * 4],
        }
    }

    /// Table over `paths`, skipping index `exclude`.
    pub fn from_paths<'a>(map: &GridMap, paths: impl IntoIterator<Item = &'a Path>, exclude: Option<usize>) -> Self {
        let mut cat = Self::new(map);
        cat.rebuild(map, paths, exclude);
        cat
    }

    pub fn rebuild<'a>(&mut self, map: &GridMap, paths: impl IntoIterator<Item = &'a Path>, exclude: Option<usize>) {
        let paths: Vec<&Path> = paths.into_iter().collect();
        let horizon = paths
            .iter()
            .enumerate()
            .filter(|(r, _)| Some(*r) != exclude)
            .map(|(_, p)| p.len())
            .max()
            .unwrap_or(1)
            .max(1);
        self.cells = map.cell_count();
        self.width = map.width() as u32;
        self.horizon = horizon;
        self.vertex.clear();
        self.vertex.resize(horizon * self.cells, 0);
        self.moves.clear();
        self.moves.resize(horizon * self.cells * 4, 0);
        for (r, p) in paths.iter().enumerate() {
            if Some(r) != exclude {
                self.apply(map, p, true);
            }
        }
    }

    fn grow(&mut self, horizon: usize) {
        if horizon <= self.horizon {
            return;
        }
        let last = self.vertex[(self.horizon - 1) * self.cells..self.horizon * self.cells].to_vec();
        for _ in self.horizon..horizon {
            self.vertex.extend_from_slice(&last);
        }
        self.moves.resize(horizon * self.cells * 4, 0);
        self.horizon = horizon;
    }

    fn apply(&mut self, map: &GridMap, path: &Path, add: bool) {
        let mut prev = u32::MAX;
        for t in 0..self.horizon {
            let c = map.index(path.at(t)) as u32;
            let slot = &mut self.vertex[t * self.cells + c as usize];
            *slot = if add { *slot + 1 } else { *slot - 1 };
            if t > 0 && c != prev {
                let m = &mut self.moves[(t * self.cells + c as usize) * 4 + dir_index(prev, c, self.width)];
                *m = if add { *m + 1 } else { *m - 1 };
            }
            prev = c;
        }
    }

    pub fn add_path(&mut self, map: &GridMap, path: &Path) {
        self.grow(path.len());
        self.apply(map, path, true);
    }

    /// Removes a path previously added; it must not be longer than the table.
    pub fn remove_path(&mut self, map: &GridMap, path: &Path) {
        assert!(path.len() <= self.horizon, "path outlives the conflict table");
        self.apply(map, path, false);
    }

    /// Number of tabled robots at `cell` at time `t`.
    #[inline]
    pub fn occupancy(&self, cell: u32, t: usize) -> u32 {
        let t = t.min(self.horizon - 1);
        self.vertex[t * self.cells + cell as usize] as u32
    }

    /// Conflicts of the step `from -> to` arriving at `t`.
    #[inline]
    pub fn step_conflicts(&self, from: u32, to: u32, t: usize) -> u32 {
        let mut n = self.occupancy(to, t);
        if from != to && t < self.horizon {
            n += self.moves[(t * self.cells + from as usize) * 4 + dir_index(to, from, self.width)] as u32;
        }
        n
    }

    /// Suffix sums of `occupancy(cell, t')` over `t' >= t`, indexed by `t`.
    fn future_visits(&self, cell: u32) -> Vec<u32> {
        let mut out = vec![0; self.horizon + 1];
        for t in (0..self.horizon).rev() {
            out[t] = out[t + 1] + self.vertex[t * self.cells + cell as usize] as u32;
        }
        out
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Inputs of one single-robot search.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub map: &'a GridMap,
    pub oracle: &'a DistanceOracle,
    pub start: Vertex,
    pub goal: Vertex,
    pub constraints: &'a [Constraint],
    /// Other robots' paths for the secondary heuristic.
    pub conflicts: Option<&'a ConflictTable>,
    /// Overrides the default horizon cap
    /// `free vertices + dist(start, goal) + latest constraint time`.
    pub horizon_cap: Option<usize>,
    pub deadline: Option<Instant>,
}

impl<'a> SearchContext<'a> {
    pub fn new(map: &'a GridMap, oracle: &'a DistanceOracle, start: Vertex, goal: Vertex) -> Self {
        SearchContext {
            map,
            oracle,
            start,
            goal,
            constraints: &[],
            conflicts: None,
            horizon_cap: None,
            deadline: None,
        }
    }

    pub fn with_constraints(mut self, constraints: &'a [Constraint]) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn with_conflicts(mut self, table: &'a ConflictTable) -> Self {
        self.conflicts = Some(table);
        self
    }

    pub fn with_deadline(mut self, deadline: Option<Instant>) -> Self {
        self.deadline = deadline;
        self
    }
}

/// A found path together with the search's cost certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LowLevelPath {
    pub path: Path,
    /// Minimum `f` in OPEN when the path was returned; a lower bound on the
    /// optimal constrained cost.
    pub f_min: u32,
    /// Conflicts of the path against the context's table.
    pub conflicts: u32,
    pub expansions: usize,
}

#[derive(Clone, Copy)]
struct Node {
    cell: u32,
    t: u32,
    f: u32,
    conflicts: u32,
    parent: u32,
    park: bool,
    closed: bool,
}

/// Reusable buffers for repeated searches.
#[derive(Default)]
pub struct FocalSearch {
    nodes: Vec<Node>,
    index: FxHashMap<u64, u32>,
    buckets: Vec<Vec<u32>>,
    live: Vec<u32>,
    focal: BinaryHeap<(Reverse<u32>, Reverse<u32>, u32, Reverse<u32>)>,
    vertex_cons: FxHashSet<u64>,
    edge_cons: FxHashSet<u64>,
}

const NO_PARENT: u32 = u32::MAX;

impl FocalSearch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Focal search with suboptimality factor `w`; `w = 1` is A* with
    /// conflict-count tie-breaking.
    ///
    /// FOCAL holds OPEN nodes with `f <= w * f_min`, ordered by fewest
    /// conflicts, then smaller `f`, then larger `g`, then earliest generation.
    pub fn run(&mut self, ctx: &SearchContext<'_>, w: f64) -> Result<Option<LowLevelPath>, SolveError> {
        assert!(w >= 1.0, "suboptimality factor must be at least 1");
        let map = ctx.map;
        if !map.is_free(ctx.start) || !map.is_free(ctx.goal) {
            return Ok(None);
        }
        let width = map.width() as u32;
        let goal = map.index(ctx.goal) as u32;
        let dist = ctx.oracle.table(ctx.goal);
        let start = map.index(ctx.start) as u32;
        if dist[start as usize] == UNREACHABLE {
            return Ok(None);
        }

        self.vertex_cons.clear();
        self.edge_cons.clear();
        let mut last_constraint = 0usize;
        let mut earliest_park = 0u32;
        for c in ctx.constraints {
            last_constraint = last_constraint.max(c.time());
            match c.kind {
                ConstraintKind::Vertex { v, t } => {
                    if !map.is_free(v) {
                        continue;
                    }
                    let cell = map.index(v) as u32;
                    self.vertex_cons.insert(((cell as u64) << 32) | t as u64);
                    if cell == goal {
                        earliest_park = earliest_park.max(t as u32 + 1);
                    }
                }
                ConstraintKind::Edge { from, to, t } => {
                    if !map.is_free(from) || !map.is_free(to) || !from.is_adjacent(to) {
                        continue;
                    }
                    let (a, b) = (map.index(from) as u32, map.index(to) as u32);
                    let key = ((a as u64 * 4 + dir_index(a, b, width) as u64) << 32) | t as u64;
                    self.edge_cons.insert(key);
                }
            }
        }
        let cap = ctx
            .horizon_cap
            .unwrap_or(map.free_count() + dist[start as usize] as usize + last_constraint) as u32;
        let park_penalty = ctx.conflicts.map(|c| c.future_visits(goal));
        let future = |t: u32| -> u32 {
            park_penalty
                .as_ref()
                .map_or(0, |p| p.get(t as usize + 1).copied().unwrap_or(0))
        };
        let h = |cell: u32, t: u32| dist[cell as usize].max(earliest_park.saturating_sub(t));

        self.nodes.clear();
        self.index.clear();
        for b in &mut self.buckets {
            b.clear();
        }
        self.live.clear();
        self.focal.clear();

        let vertex_blocked = |s: &Self, cell: u32, t: u32| s.vertex_cons.contains(&(((cell as u64) << 32) | t as u64));
        if vertex_blocked(self, start, 0) {
            return Ok(None);
        }
        let start_conf = ctx.conflicts.map_or(0, |c| c.occupancy(start, 0));
        let f0 = h(start, 0);
        if f0 > cap {
            return Ok(None);
        }
        let mut f_min = f0;
        let mut bound = focal_bound(f_min, w);
        self.push(start, 0, f0, start_conf, NO_PARENT, false, bound);

        let mut expansions = 0usize;
        loop {
            // Advance f_min past exhausted buckets, promoting newly eligible
            // nodes into FOCAL.
            while (f_min as usize) < self.live.len() && self.live[f_min as usize] == 0 {
                f_min += 1;
            }
            if f_min as usize >= self.live.len() {
                return Ok(None);
            }
            let new_bound = focal_bound(f_min, w);
            if new_bound > bound {
                for f in (bound + 1)..=new_bound.min(self.buckets.len() as u32 - 1) {
                    for k in 0..self.buckets[f as usize].len() {
                        let id = self.buckets[f as usize][k];
                        let n = self.nodes[id as usize];
                        if !n.closed {
                            self.focal.push((Reverse(n.conflicts), Reverse(n.f), n.t, Reverse(id)));
                        }
                    }
                }
                bound = new_bound;
            }
            let Some((Reverse(conf), _, _, Reverse(id))) = self.focal.pop() else {
                // Cannot happen: f_min's bucket has a live node within bound.
                return Ok(None);
            };
            let node = self.nodes[id as usize];
            if node.closed || node.conflicts != conf {
                continue;
            }
            self.nodes[id as usize].closed = true;
            self.live[node.f as usize] -= 1;

            if node.park {
                return Ok(Some(LowLevelPath {
                    path: self.extract(map, id),
                    f_min,
                    conflicts: node.conflicts,
                    expansions,
                }));
            }

            expansions += 1;
            if expansions % DEADLINE_CHECK_INTERVAL == 0 && ctx.deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(SolveError::Timeout);
            }

            if node.cell == goal && node.t >= earliest_park {
                let conflicts = node.conflicts + future(node.t);
                self.push(goal, node.t, node.t, conflicts, id, true, bound);
            }
            let t = node.t + 1;
            if t > cap {
                continue;
            }
            let wait = std::iter::once(node.cell);
            for next in wait.chain(map.cell_neighbors(node.cell)) {
                if vertex_blocked(self, next, t) {
                    continue;
                }
                if next != node.cell {
                    let key = ((node.cell as u64 * 4 + dir_index(node.cell, next, width) as u64) << 32) | t as u64;
                    if self.edge_cons.contains(&key) {
                        continue;
                    }
                }
                let f = t + h(next, t);
                if f > cap {
                    continue;
                }
                let conflicts = node.conflicts + ctx.conflicts.map_or(0, |c| c.step_conflicts(node.cell, next, t as usize));
                self.push(next, t, f, conflicts, id, false, bound);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, cell: u32, t: u32, f: u32, conflicts: u32, parent: u32, park: bool, bound: u32) {
        let key = ((cell as u64) << 33) | ((t as u64) << 1) | park as u64;
        if let Some(&id) = self.index.get(&key) {
            let n = &mut self.nodes[id as usize];
            if n.closed || n.conflicts <= conflicts {
                return;
            }
            n.conflicts = conflicts;
            n.parent = parent;
            if f <= bound {
                self.focal.push((Reverse(conflicts), Reverse(f), t, Reverse(id)));
            }
            return;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            cell,
            t,
            f,
            conflicts,
            parent,
            park,
            closed: false,
        });
        self.index.insert(key, id);
        let fi = f as usize;
        if self.buckets.len() <= fi {
            self.buckets.resize_with(fi + 1, Vec::new);
        }
        if self.live.len() <= fi {
            self.live.resize(fi + 1, 0);
        }
        self.buckets[fi].push(id);
        self.live[fi] += 1;
        if f <= bound {
            self.focal.push((Reverse(conflicts), Reverse(f), t, Reverse(id)));
        }
    }

    fn extract(&self, map: &GridMap, mut id: u32) -> Path {
        let mut out = Vec::new();
        // The park node duplicates its parent's state.
        id = self.nodes[id as usize].parent;
        while id != NO_PARENT {
            let n = &self.nodes[id as usize];
            out.push(map.vertex(n.cell));
            id = n.parent;
        }
        out.reverse();
        Path(out).trimmed()
    }
}

#[inline]
fn focal_bound(f_min: u32, w: f64) -> u32 {
    // Small epsilon guards against 1.5 * 4 = 5.999...
    ((f_min as f64) * w + 1e-9).floor() as u32
}

/// Minimum-cost space-time path under the context's constraints.
pub fn astar(ctx: &SearchContext<'_>) -> Result<Option<Path>, SolveError> {
    let ctx = SearchContext { conflicts: None, ..*ctx };
    Ok(FocalSearch::new().run(&ctx, 1.0)?.map(|r| r.path))
}

/// Focal search returning a path of cost at most `w1 * f_min`.
pub fn focal_astar(ctx: &SearchContext<'_>, w1: f64) -> Result<Option<LowLevelPath>, SolveError> {
    FocalSearch::new().run(ctx, w1)
}
