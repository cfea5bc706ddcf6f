//! SCBS: solve a dense rearrangement in three phases.
//!
//! Starts and goals are first spread out into sparse intermediate
//! configurations (greedily, keeping the local robot density under a target),
//! the dense ends are handled as unlabeled problems by max flow, the labeled
//! middle problem between the sparse configurations goes to ECBS, and the
//! three plans are merged by executing them back to back under a
//! minimal-communication policy.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::ecbs::{run_ecbs, EcbsConfig, SearchStats};
use crate::error::{MergeError, SolveError};
use crate::grid::{DistanceOracle, GridMap, Vertex, UNREACHABLE};
use crate::instance::{Configuration, Instance};
use crate::plan::{Path, Plan};
use crate::unlabeled::{solve_unlabeled, UnlabeledProblem};

/// Window side and preferred local density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    pub window: usize,
    pub rho: f64,
}

impl Default for DensityParams {
    fn default() -> Self {
        DensityParams { window: 5, rho: 0.5 }
    }
}

impl DensityParams {
    pub fn new(window: usize, rho: f64) -> Result<Self, SolveError> {
        let p = DensityParams { window, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(SolveError::InvalidInput(format!("window must be odd and positive, got {}", self.window)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(SolveError::InvalidInput(format!("density must lie in (0, 1], got {}", self.rho)));
        }
        Ok(())
    }

    fn radius(&self) -> i32 {
        (self.window / 2) as i32
    }
}

// In-bounds cells of the window centred on `v`.
fn window(map: &GridMap, v: Vertex, radius: i32) -> impl Iterator<Item = Vertex> + '_ {
    let (ci, cj) = (v.i as i32, v.j as i32);
    (cj - radius..=cj + radius).flat_map(move |j| {
        (ci - radius..=ci + radius).filter_map(move |i| {
            let inside = i >= 1 && j >= 1 && i <= map.width() as i32 && j <= map.height() as i32;
            inside.then(|| Vertex::new(i as u16, j as u16))
        })
    })
}

/// Robots in the window around `v` over free cells in it (clipped at the
/// map border).
pub fn local_density(map: &GridMap, config: &[Vertex], v: Vertex, params: &DensityParams) -> f64 {
    let occupied = Occupancy::new(map, config);
    occupied.density(map, v, params.radius(), None)
}

struct Occupancy {
    cells: Vec<bool>,
}

impl Occupancy {
    fn new(map: &GridMap, config: &[Vertex]) -> Self {
        let mut cells = vec![false; map.cell_count()];
        for &v in config {
            cells[map.index(v)] = true;
        }
        Occupancy { cells }
    }

    fn density(&self, map: &GridMap, v: Vertex, radius: i32, extra: Option<Vertex>) -> f64 {
        let (mut robots, mut free) = (0usize, 0usize);
        for u in window(map, v, radius) {
            if !map.is_free(u) {
                continue;
            }
            free += 1;
            if self.cells[map.index(u)] || extra == Some(u) {
                robots += 1;
            }
        }
        robots as f64 / free.max(1) as f64
    }

    // Adding `u` keeps every occupied window containing it at or below rho.
    fn admits(&self, map: &GridMap, u: Vertex, params: &DensityParams) -> bool {
        let r = params.radius();
        window(map, u, r)
            .filter(|&x| x == u || (map.is_free(x) && self.cells[map.index(x)]))
            .all(|x| self.density(map, x, r, Some(u)) <= params.rho + 1e-12)
    }
}

/// Picks one sparse vertex per robot of `config`, in robot order (or a
/// seeded shuffle of it).
///
/// Each robot runs a best-first search from its own vertex ordered by
/// `dist(v, config[i]) + dist(v, other[i])` and takes the first vertex not
/// yet picked whose addition keeps the local density at most `rho`. When no
/// such vertex exists the best unpicked one is taken anyway.
pub fn sparsify_config(
    oracle: &DistanceOracle,
    config: &[Vertex],
    other: &[Vertex],
    params: &DensityParams,
    shuffle: Option<u64>,
) -> Configuration {
    let map = oracle.map();
    let mut order: Vec<usize> = (0..config.len()).collect();
    if let Some(seed) = shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut picked = Occupancy::new(map, &[]);
    let mut out = config.to_vec();
    let mut seen = vec![false; map.cell_count()];
    for i in order {
        let (from, to) = (oracle.table(config[i]), oracle.table(other[i]));
        seen.fill(false);
        let start = map.index(config[i]) as u32;
        let mut heap = BinaryHeap::new();
        let key = |c: u32| Reverse((from[c as usize].saturating_add(to[c as usize]), from[c as usize], c));
        heap.push(key(start));
        seen[start as usize] = true;
        let mut fallback = None;
        let mut choice = None;
        while let Some(Reverse((_, _, c))) = heap.pop() {
            let v = map.vertex(c);
            if !picked.cells[c as usize] {
                if picked.admits(map, v, params) {
                    choice = Some(v);
                    break;
                }
                fallback.get_or_insert(v);
            }
            for d in map.cell_neighbors(c) {
                if !seen[d as usize] && to[d as usize] != UNREACHABLE {
                    seen[d as usize] = true;
                    heap.push(key(d));
                }
            }
        }
        let v = choice.unwrap_or_else(|| {
            tracing::warn!(robot = i, "no vertex satisfies the density target; taking the closest free one");
            fallback.expect("a component holds at least as many cells as robots")
        });
        picked.cells[map.index(v)] = true;
        out[i] = v;
    }
    out
}

/// Everything SCBS computed on the way to a plan.
#[derive(Clone, Debug)]
pub struct SparsifiedInstance {
    /// Unlabeled sparse sets for the start and goal side.
    pub start_targets: Configuration,
    pub goal_targets: Configuration,
    /// The same sets labeled by the unlabeled solutions, in robot order.
    pub start_intermediate: Configuration,
    pub goal_intermediate: Configuration,
    /// Phase plans: starts to `start_intermediate`, the middle problem,
    /// `goal_intermediate` to goals.
    pub phases: [Plan; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScbsConfig {
    pub density: DensityParams,
    pub middle: EcbsConfig,
    /// Process robots in a seeded random order instead of index order.
    pub shuffle: Option<u64>,
}

impl Default for ScbsConfig {
    fn default() -> Self {
        ScbsConfig {
            density: DensityParams::default(),
            middle: EcbsConfig::new(1.5),
            shuffle: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScbsSolution {
    pub plan: Plan,
    pub sparsified: SparsifiedInstance,
    pub middle_stats: SearchStats,
}

pub fn solve_scbs(instance: &Instance, config: &ScbsConfig, budget: &Budget) -> Result<ScbsSolution, SolveError> {
    config.density.validate()?;
    let map = &instance.map;
    let oracle = DistanceOracle::new(map.clone());
    let start_targets = sparsify_config(&oracle, &instance.starts, &instance.goals, &config.density, config.shuffle);
    let goal_targets = sparsify_config(&oracle, &instance.goals, &instance.starts, &config.density, config.shuffle);

    let unlabeled = |sources: &Configuration, targets: &Configuration| {
        let problem = UnlabeledProblem::new(map.clone(), sources.clone(), targets.clone())
            .map_err(|e| SolveError::InvalidInput(e.to_string()))?;
        let solution = solve_unlabeled(&problem, budget.deadline)?;
        Ok::<_, SolveError>((solution.assigned_targets(&problem), solution.plan))
    };
    let (start_intermediate, first) = unlabeled(&instance.starts, &start_targets)?;
    let (goal_intermediate, last) = unlabeled(&instance.goals, &goal_targets)?;
    let last = last.reversed();

    let middle_instance = instance
        .with_endpoints(start_intermediate.clone(), goal_intermediate.clone())
        .map_err(|e| SolveError::InvalidInput(e.to_string()))?;
    let report = run_ecbs(&middle_instance, &oracle, config.middle, budget);
    let middle = report.outcome?;

    let phases = [first, middle, last];
    let plan = mcp_merge(&phases).map_err(|e| SolveError::GaveUp(e.to_string()))?;
    Ok(ScbsSolution {
        plan,
        sparsified: SparsifiedInstance {
            start_targets,
            goal_targets,
            start_intermediate,
            goal_intermediate,
            phases,
        },
        middle_stats: report.stats,
    })
}

fn check_junctions(phases: &[Plan]) -> Result<usize, MergeError> {
    let n = phases.first().ok_or(MergeError::Empty)?.num_robots();
    for (k, phase) in phases.iter().enumerate() {
        if phase.num_robots() != n {
            return Err(MergeError::RobotCount {
                phase: k,
                expected: n,
                found: phase.num_robots(),
            });
        }
    }
    for (k, pair) in phases.windows(2).enumerate() {
        for robot in 0..n {
            let (end, start) = (pair[0].paths[robot].last_vertex(), pair[1].paths[robot][0]);
            if end != start {
                return Err(MergeError::Junction {
                    phase: k,
                    next: k + 1,
                    robot,
                    end,
                    start,
                });
            }
        }
    }
    Ok(n)
}

/// Runs the phases one after another, each starting when the previous one
/// has fully finished.
pub fn synchronized_concatenation(phases: &[Plan]) -> Result<Plan, MergeError> {
    let n = check_junctions(phases)?;
    let mut paths: Vec<Vec<Vertex>> = (0..n).map(|r| vec![phases[0].paths[r][0]]).collect();
    for phase in phases {
        let span = phase.paths.iter().map(Path::settle_time).max().unwrap_or(0);
        for (r, out) in paths.iter_mut().enumerate() {
            out.extend((1..=span).map(|t| phase.paths[r].at(t)));
        }
    }
    Ok(Plan::new(paths.into_iter().map(|p| Path::new(p).trimmed()).collect()))
}

/// Merges consecutive phase plans by executing them under a
/// minimal-communication policy.
///
/// Each robot's phase paths are joined into one vertex sequence (waits
/// dropped). Every entry into a vertex gets a rank from (phase, time), and a
/// robot moves on to its next vertex as soon as it is the next robot due
/// there and the vertex is empty or being left in the same step. Every robot
/// is at least as far along as under the planned timing at all times, so
/// neither the plan's own waits nor waiting for a whole phase to finish cost
/// anything unless the visit order demands it.
pub fn mcp_merge(phases: &[Plan]) -> Result<Plan, MergeError> {
    let n = check_junctions(phases)?;
    let map_cells = {
        let mut all: Vec<Vertex> = phases.iter().flat_map(|p| p.paths.iter().flat_map(|q| q.iter().copied())).collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    let cell = |v: Vertex| map_cells.binary_search(&v).expect("vertex seen in a phase");

    // Joined vertex sequences and the (phase, time) of every entry.
    let mut seqs: Vec<Vec<Vertex>> = vec![Vec::new(); n];
    let mut entries: Vec<Vec<((usize, usize), usize, usize)>> = vec![Vec::new(); map_cells.len()];
    for r in 0..n {
        let seq = &mut seqs[r];
        for (k, phase) in phases.iter().enumerate() {
            let path = &phase.paths[r];
            let skip = usize::from(k > 0);
            for t in skip..=path.settle_time() {
                let v = path.at(t);
                if seq.last() != Some(&v) {
                    entries[cell(v)].push(((k, t), r, seq.len()));
                    seq.push(v);
                }
            }
        }
    }
    let mut order: Vec<Vec<(usize, usize)>> = entries
        .into_iter()
        .map(|mut e| {
            e.sort_unstable();
            e.into_iter().map(|(_, r, idx)| (r, idx)).collect()
        })
        .collect();
    for o in &mut order {
        o.reverse();
    }

    let mut pos = vec![0usize; n];
    let mut occupant: Vec<Option<usize>> = vec![None; map_cells.len()];
    for r in 0..n {
        let c = cell(seqs[r][0]);
        occupant[c] = Some(r);
        debug_assert_eq!(order[c].last(), Some(&(r, 0)));
        order[c].pop();
    }
    let mut out: Vec<Vec<Vertex>> = seqs.iter().map(|s| vec![s[0]]).collect();
    let budget: usize = seqs.iter().map(Vec::len).sum();
    let mut moving = vec![false; n];
    let mut step = 0;
    while (0..n).any(|r| pos[r] + 1 < seqs[r].len()) {
        step += 1;
        if step > budget {
            return Err(MergeError::Deadlock(step));
        }
        for r in 0..n {
            moving[r] = match seqs[r].get(pos[r] + 1) {
                None => false,
                Some(&next) => order[cell(next)].last() == Some(&(r, pos[r] + 1)),
            };
        }
        // Drop movers whose target stays occupied, and head-on pairs, until
        // stable; cycles of movers survive.
        loop {
            let mut changed = false;
            for r in 0..n {
                if !moving[r] {
                    continue;
                }
                let (here, next) = (seqs[r][pos[r]], seqs[r][pos[r] + 1]);
                let blocked = match occupant[cell(next)] {
                    None => false,
                    Some(o) => !moving[o] || seqs[o][pos[o] + 1] == here,
                };
                if blocked {
                    moving[r] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !moving.iter().any(|&m| m) {
            return Err(MergeError::Deadlock(step));
        }
        for r in 0..n {
            if moving[r] {
                let c = cell(seqs[r][pos[r]]);
                if occupant[c] == Some(r) {
                    occupant[c] = None;
                }
            }
        }
        for r in 0..n {
            if moving[r] {
                pos[r] += 1;
                let c = cell(seqs[r][pos[r]]);
                order[c].pop();
                occupant[c] = Some(r);
            }
            out[r].push(seqs[r][pos[r]]);
        }
    }
    Ok(Plan::new(out.into_iter().map(|p| Path::new(p).trimmed()).collect()))
}
