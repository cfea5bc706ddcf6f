//! Min-makespan joint solutions on small obstacle-free subgrids.
//!
//! For a base shape (3 wide x 2 tall, or 3 x 3) and every goal vertex subset,
//! a breadth-first search from the goal configuration over the joint
//! transition system records, for each reachable labeled start state, its
//! distance to the goal and one optimal first joint move. Robots are
//! relabeled so that label `l` owns the `l`-th goal cell in row-major order;
//! a goal subset then stands for all `k!` labeled goal configurations.
//!
//! Tables are built eagerly by [`generate_db`] or lazily, on first query of
//! their subset, and are cached for the lifetime of the database.

mod io;
mod subgrid;

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{file_name, load_db, save_db, DB_ENV_VAR};
pub use subgrid::{find_enclosing_subgrid, subgrid_candidates, SubgridShape, SubgridSpec};
pub(crate) use subgrid::conflict_points;

use crate::grid::Vertex;

/// Distance entry of states that cannot reach the goal.
pub const UNREACHED: u8 = u8::MAX;

/// Shapes with their own tables. The 2-wide, 3-tall subgrid reuses the
/// 3 x 2 tables through a transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseShape {
    /// 3 columns, 2 rows.
    ThreeByTwo,
    /// 3 columns, 3 rows.
    ThreeByThree,
}

impl BaseShape {
    pub const fn width(self) -> usize {
        3
    }

    pub const fn height(self) -> usize {
        match self {
            BaseShape::ThreeByTwo => 2,
            BaseShape::ThreeByThree => 3,
        }
    }

    pub const fn cells(self) -> usize {
        self.width() * self.height()
    }

    pub fn code(self) -> u8 {
        match self {
            BaseShape::ThreeByTwo => 6,
            BaseShape::ThreeByThree => 9,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            6 => Some(BaseShape::ThreeByTwo),
            9 => Some(BaseShape::ThreeByThree),
            _ => None,
        }
    }

    /// Neighbour cell of `c` in direction `d` (0 E, 1 W, 2 N, 3 S).
    fn step(self, c: usize, d: u8) -> Option<usize> {
        let (w, h) = (self.width(), self.height());
        let (x, y) = (c % w, c / w);
        match d {
            0 if x + 1 < w => Some(c + 1),
            1 if x > 0 => Some(c - 1),
            2 if y + 1 < h => Some(c + w),
            3 if y > 0 => Some(c - w),
            _ => None,
        }
    }

    fn dir(self, from: usize, to: usize) -> u8 {
        if to == from {
            MOVE_STAY
        } else if to == from + 1 {
            1
        } else if to + 1 == from {
            2
        } else if to > from {
            3
        } else {
            4
        }
    }

    /// Applies a per-robot move code (0 stay, 1 E, 2 W, 3 N, 4 S).
    fn apply(self, c: usize, code: u8) -> usize {
        match code {
            MOVE_STAY => c,
            d => self.step(c, d - 1).expect("stored moves stay inside the shape"),
        }
    }
}

const MOVE_STAY: u8 = 0;

/// Number of labeled states of `k` robots on `cells` cells.
pub fn state_count(cells: usize, k: usize) -> usize {
    (0..k).map(|l| cells - l).product()
}

/// Mixed-radix rank of a labeled placement of distinct cells.
fn rank(cells: usize, pos: &[u8]) -> usize {
    let mut avail: u32 = (1 << cells) - 1;
    let mut r = 0;
    for (l, &p) in pos.iter().enumerate() {
        let idx = (avail & ((1u32 << p) - 1)).count_ones() as usize;
        r = r * (cells - l) + idx;
        avail &= !(1 << p);
    }
    r
}

fn unrank(cells: usize, k: usize, mut r: usize, out: &mut [u8]) {
    let mut digits = [0u8; 9];
    for l in (0..k).rev() {
        let radix = cells - l;
        digits[l] = (r % radix) as u8;
        r /= radix;
    }
    let mut avail: u32 = (1 << cells) - 1;
    for l in 0..k {
        let mut m = avail;
        for _ in 0..digits[l] {
            m &= m - 1;
        }
        let p = m.trailing_zeros() as u8;
        out[l] = p;
        avail &= !(1 << p);
    }
}

/// Distance and first move for every labeled state of one goal subset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetTable {
    pub mask: u16,
    pub k: u8,
    pub dist: Vec<u8>,
    /// Three bits per robot label: the move toward the goal.
    pub moves: Vec<u32>,
}

/// Calls `visit` with each valid joint destination of `pos`.
///
/// Every robot stays or moves to a neighbour; destinations are distinct and
/// no two robots swap. Following and rotations are allowed.
fn for_each_move(shape: BaseShape, pos: &[u8], mut visit: impl FnMut(&[u8])) {
    let mut occ = [u8::MAX; 9];
    for (l, &p) in pos.iter().enumerate() {
        occ[p as usize] = l as u8;
    }
    let mut dest = [0u8; 9];
    fn rec(shape: BaseShape, pos: &[u8], occ: &[u8; 9], l: usize, used: u16, dest: &mut [u8; 9], visit: &mut dyn FnMut(&[u8])) {
        if l == pos.len() {
            visit(&dest[..pos.len()]);
            return;
        }
        let p = pos[l] as usize;
        for code in 0..5u8 {
            let q = if code == 0 {
                p
            } else {
                match shape.step(p, code - 1) {
                    Some(q) => q,
                    None => continue,
                }
            };
            if used & (1 << q) != 0 {
                continue;
            }
            let used_next = used | (1 << q);
            if q != p {
                let b = occ[q] as usize;
                if b < l && dest[b] as usize == p {
                    continue;
                }
                // Forward check: a later robot displaced from q needs some
                // free neighbour other than p (moving to p would be a swap).
                if b != u8::MAX as usize && b > l {
                    let pb = pos[b] as usize;
                    let escape = (0..4).filter_map(|d| shape.step(pb, d)).any(|n| n != p && used_next & (1 << n) == 0);
                    if !escape {
                        continue;
                    }
                }
            }
            dest[l] = q as u8;
            rec(shape, pos, occ, l + 1, used_next, dest, visit);
        }
    }
    rec(shape, pos, &occ, 0, 0, &mut dest, &mut visit);
}

/// Reverse breadth-first search from the goal configuration of `mask`.
pub fn build_subset_table(shape: BaseShape, mask: u16) -> SubsetTable {
    let cells = shape.cells();
    let k = mask.count_ones() as usize;
    let n = state_count(cells, k);
    let mut dist = vec![UNREACHED; n];
    let mut moves = vec![0u32; n];
    let goal: Vec<u8> = (0..cells as u8).filter(|&c| mask & (1 << c) != 0).collect();
    let g = rank(cells, &goal);
    dist[g] = 0;
    let mut queue = Vec::with_capacity(n);
    queue.push(g as u32);
    let mut head = 0;
    let mut pos = [0u8; 9];
    let mut next = [0u8; 9];
    // Legal joint moves depend only on which cells are occupied, so they are
    // enumerated once per occupancy pattern as cell -> cell maps.
    let mut by_occupancy: Vec<Option<Vec<[u8; 9]>>> = vec![None; 1 << cells];
    while head < queue.len() {
        let s = queue[head] as usize;
        head += 1;
        unrank(cells, k, s, &mut pos);
        let d = dist[s];
        let occupied = pos[..k].iter().fold(0usize, |m, &p| m | (1 << p));
        let cell_moves = by_occupancy[occupied].get_or_insert_with(|| {
            let cells_in: Vec<u8> = (0..cells as u8).filter(|&c| occupied & (1 << c) != 0).collect();
            let mut out = Vec::new();
            for_each_move(shape, &cells_in, |dest| {
                let mut map = [0u8; 9];
                for (&from, &to) in cells_in.iter().zip(dest) {
                    map[from as usize] = to;
                }
                out.push(map);
            });
            out
        });
        // The transition relation is symmetric, so a move s -> s' read
        // backwards is an optimal first move from s' toward the goal.
        for map in cell_moves.iter() {
            for l in 0..k {
                next[l] = map[pos[l] as usize];
            }
            let r = rank(cells, &next[..k]);
            if dist[r] == UNREACHED {
                dist[r] = d + 1;
                let mut code = 0u32;
                for l in 0..k {
                    code |= (shape.dir(next[l] as usize, pos[l] as usize) as u32) << (3 * l);
                }
                moves[r] = code;
                queue.push(r as u32);
            }
        }
    }
    SubsetTable {
        mask,
        k: k as u8,
        dist,
        moves,
    }
}

/// All tables of one base shape.
#[derive(Debug)]
pub struct ShapeDb {
    shape: BaseShape,
    tables: Vec<OnceLock<Arc<SubsetTable>>>,
}

impl ShapeDb {
    /// An empty database that builds tables on demand.
    pub fn lazy(shape: BaseShape) -> Self {
        ShapeDb {
            shape,
            tables: (0..1usize << shape.cells()).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn shape(&self) -> BaseShape {
        self.shape
    }

    pub fn table(&self, mask: u16) -> &Arc<SubsetTable> {
        self.tables[mask as usize].get_or_init(|| Arc::new(build_subset_table(self.shape, mask)))
    }

    /// Tables already built or loaded.
    pub fn built(&self) -> impl Iterator<Item = &Arc<SubsetTable>> {
        self.tables.iter().filter_map(|t| t.get())
    }

    pub(crate) fn install(&self, table: SubsetTable) -> bool {
        self.tables[table.mask as usize].set(Arc::new(table)).is_ok()
    }

    /// Builds every table with `k` in `k_range` in parallel.
    pub fn fill(&self, k_min: usize, k_max: usize) {
        let masks: Vec<u16> = (1u16..(1 << self.shape.cells()))
            .filter(|m| (k_min..=k_max).contains(&(m.count_ones() as usize)))
            .filter(|&m| self.tables[m as usize].get().is_none())
            .collect();
        let built: Vec<SubsetTable> = masks.par_iter().map(|&m| build_subset_table(self.shape, m)).collect();
        for t in built {
            self.install(t);
        }
    }

    /// Optimal joint motion of `starts` to `goals` (cells of this shape,
    /// robot-aligned). Returns the configurations after each step, or `None`
    /// if the goal is unreachable.
    pub fn query(&self, starts: &[u8], goals: &[u8]) -> Option<Vec<Vec<u8>>> {
        let k = starts.len();
        assert_eq!(k, goals.len(), "start and goal sizes differ");
        assert!(k >= 1 && k <= self.shape.cells());
        let cells = self.shape.cells();
        // Canonical label of each robot: rank of its goal cell.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&r| goals[r]);
        let mask = goals.iter().fold(0u16, |m, &g| m | (1 << g));
        assert_eq!(mask.count_ones() as usize, k, "goal cells must be distinct");
        let table = self.table(mask);
        let mut state: Vec<u8> = order.iter().map(|&r| starts[r]).collect();
        let mut r = rank(cells, &state);
        let d = table.dist[r];
        if d == UNREACHED {
            return None;
        }
        let mut out = Vec::with_capacity(d as usize);
        for _ in 0..d {
            let code = table.moves[r];
            for (l, p) in state.iter_mut().enumerate() {
                *p = self.shape.apply(*p as usize, ((code >> (3 * l)) & 7) as u8) as u8;
            }
            let mut cfg = vec![0u8; k];
            for (l, &robot) in order.iter().enumerate() {
                cfg[robot] = state[l];
            }
            out.push(cfg);
            r = rank(cells, &state);
        }
        debug_assert_eq!(table.dist[r], 0);
        Some(out)
    }

    /// Stored makespan, `None` when unreachable.
    pub fn makespan(&self, starts: &[u8], goals: &[u8]) -> Option<u8> {
        let k = starts.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&r| goals[r]);
        let mask = goals.iter().fold(0u16, |m, &g| m | (1 << g));
        let state: Vec<u8> = order.iter().map(|&r| starts[r]).collect();
        let d = self.table(mask).dist[rank(self.shape.cells(), &state)];
        (d != UNREACHED).then_some(d)
    }
}

/// Databases for both base shapes.
#[derive(Debug)]
pub struct PrimitiveDb {
    pub three_by_two: ShapeDb,
    pub three_by_three: ShapeDb,
}

impl Default for PrimitiveDb {
    fn default() -> Self {
        Self::lazy()
    }
}

impl PrimitiveDb {
    pub fn lazy() -> Self {
        PrimitiveDb {
            three_by_two: ShapeDb::lazy(BaseShape::ThreeByTwo),
            three_by_three: ShapeDb::lazy(BaseShape::ThreeByThree),
        }
    }

    pub fn shape(&self, shape: BaseShape) -> &ShapeDb {
        match shape {
            BaseShape::ThreeByTwo => &self.three_by_two,
            BaseShape::ThreeByThree => &self.three_by_three,
        }
    }

    /// Optimal local joint motion inside `subgrid`, as host-map
    /// configurations after each step (empty when starts equal goals).
    pub fn query(&self, subgrid: &SubgridSpec, starts: &[Vertex], goals: &[Vertex]) -> Option<Vec<Vec<Vertex>>> {
        let to_local = |v: &Vertex| subgrid.local_cell(*v).expect("vertex inside the subgrid");
        let s: Vec<u8> = starts.iter().map(to_local).collect();
        let g: Vec<u8> = goals.iter().map(to_local).collect();
        let steps = self.shape(subgrid.shape.base()).query(&s, &g)?;
        Some(
            steps
                .into_iter()
                .map(|cfg| cfg.into_iter().map(|c| subgrid.host_vertex(c)).collect())
                .collect(),
        )
    }
}

/// Eagerly builds the tables of `shape` for `k` in `k_min..=k_max`; larger
/// subsets stay lazy.
pub fn generate_db(shape: BaseShape, k_min: usize, k_max: usize) -> ShapeDb {
    let db = ShapeDb::lazy(shape);
    db.fill(k_min.max(1), k_max.min(shape.cells()));
    db
}
