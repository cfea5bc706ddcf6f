//! Test-only oracles: exhaustive joint-state searches that share nothing with
//! the solvers except grid adjacency, plus random case generators.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

use mrpp_core::ecbs::{solve_ecbs, EcbsConfig};
use mrpp_core::budget::Budget;
use mrpp_core::scenario::gen_uniform;
use mrpp_core::{GridMap, Instance, Plan, Vertex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};

type State = Vec<u32>;

fn cells(map: &GridMap, config: &[Vertex]) -> State {
    config.iter().map(|&v| map.index(v) as u32).collect()
}

/// Calls `visit` with every collision-free joint successor of `pos`; robots
/// flagged in `frozen` stay put.
pub fn joint_moves(map: &GridMap, pos: &[u32], frozen: &[bool], mut visit: impl FnMut(&[u32])) {
    let options: Vec<Vec<u32>> = pos
        .iter()
        .zip(frozen)
        .map(|(&p, &f)| {
            let mut o = vec![p];
            if !f {
                o.extend(map.cell_neighbors(p));
            }
            o
        })
        .collect();
    let mut next = Vec::with_capacity(pos.len());
    fn rec(pos: &[u32], options: &[Vec<u32>], next: &mut Vec<u32>, visit: &mut dyn FnMut(&[u32])) {
        let r = next.len();
        if r == pos.len() {
            visit(next);
            return;
        }
        for &b in &options[r] {
            let clash = (0..r).any(|q| next[q] == b || (pos[q] == b && next[q] == pos[r] && b != pos[r]));
            if !clash {
                next.push(b);
                rec(pos, options, next, visit);
                next.pop();
            }
        }
    }
    rec(pos, &options, &mut next, &mut visit);
}

/// Minimum sum of settle times over all collision-free joint plans, by
/// uniform-cost search over (positions, settled robots). A robot may be
/// declared settled only on its goal and never moves again.
pub fn optimal_soc(map: &GridMap, starts: &[Vertex], goals: &[Vertex]) -> Option<usize> {
    let n = starts.len();
    assert!(n <= 16);
    let goal = cells(map, goals);
    let full: u16 = ((1u32 << n) - 1) as u16;
    let mut best: FxHashMap<(State, u16), usize> = FxHashMap::default();
    let mut heap = BinaryHeap::new();
    let s0 = (cells(map, starts), 0u16);
    best.insert(s0.clone(), 0);
    heap.push(Reverse((0usize, s0.0, s0.1)));
    while let Some(Reverse((cost, pos, done))) = heap.pop() {
        if best.get(&(pos.clone(), done)).is_some_and(|&c| c < cost) {
            continue;
        }
        if done == full {
            return Some(cost);
        }
        let mut push = |pos: State, done: u16, c: usize, heap: &mut BinaryHeap<_>| {
            let key = (pos, done);
            if best.get(&key).is_none_or(|&b| c < b) {
                best.insert(key.clone(), c);
                heap.push(Reverse((c, key.0, key.1)));
            }
        };
        for r in 0..n {
            if done & (1 << r) == 0 && pos[r] == goal[r] {
                push(pos.clone(), done | (1 << r), cost, &mut heap);
            }
        }
        let frozen: Vec<bool> = (0..n).map(|r| done & (1 << r) != 0).collect();
        let step = cost + (n - done.count_ones() as usize);
        let mut succ = Vec::new();
        joint_moves(map, &pos, &frozen, |next| succ.push(next.to_vec()));
        for next in succ {
            push(next, done, step, &mut heap);
        }
    }
    None
}

/// Minimum makespan by bidirectional breadth-first search (joint moves are
/// reversible under the collision model, so the backward search uses the
/// same successor function).
pub fn optimal_makespan(map: &GridMap, starts: &[Vertex], goals: &[Vertex]) -> Option<usize> {
    let (s, g) = (cells(map, starts), cells(map, goals));
    if s == g {
        return Some(0);
    }
    let frozen = vec![false; s.len()];
    let mut seen = [FxHashSet::default(), FxHashSet::default()];
    let mut frontier = [vec![s.clone()], vec![g.clone()]];
    seen[0].insert(s);
    seen[1].insert(g);
    let mut depth = [0usize, 0];
    while !frontier[0].is_empty() && !frontier[1].is_empty() {
        let side = usize::from(frontier[1].len() < frontier[0].len());
        let mut next_frontier = Vec::new();
        for pos in std::mem::take(&mut frontier[side]) {
            let mut hit = false;
            joint_moves(map, &pos, &frozen, |next| {
                if hit {
                    return;
                }
                if seen[1 - side].contains(next) {
                    hit = true;
                } else if seen[side].insert(next.to_vec()) {
                    next_frontier.push(next.to_vec());
                }
            });
            if hit {
                return Some(depth[0] + depth[1] + 1);
            }
        }
        depth[side] += 1;
        frontier[side] = next_frontier;
    }
    None
}

/// Minimum makespan for interchangeable robots, by breadth-first search
/// over occupied-vertex sets.
pub fn unlabeled_makespan(map: &GridMap, sources: &[Vertex], targets: &[Vertex]) -> Option<usize> {
    let sorted = |mut v: State| {
        v.sort_unstable();
        v
    };
    let (s, g) = (sorted(cells(map, sources)), sorted(cells(map, targets)));
    let frozen = vec![false; s.len()];
    let mut seen = FxHashSet::default();
    let mut queue = VecDeque::from([(s.clone(), 0usize)]);
    seen.insert(s);
    while let Some((pos, d)) = queue.pop_front() {
        if pos == g {
            return Some(d);
        }
        joint_moves(map, &pos, &frozen, |next| {
            let next = sorted(next.to_vec());
            if seen.insert(next.clone()) {
                queue.push_back((next, d + 1));
            }
        });
    }
    None
}

/// Independent plan check: paths start and end where they should, every step
/// is a wait or a move to a free neighbour, and no two robots share a vertex
/// or swap across an edge at any time (paths padded with their last vertex).
pub fn check_plan(map: &GridMap, starts: &[Vertex], goals: &[Vertex], plan: &Plan) -> Result<(), String> {
    let n = starts.len();
    if plan.paths.len() != n {
        return Err(format!("{} paths for {} robots", plan.paths.len(), n));
    }
    for r in 0..n {
        let p = &plan.paths[r];
        if p.is_empty() || p[0] != starts[r] || *p.last().unwrap() != goals[r] {
            return Err(format!("robot {r}: wrong endpoints"));
        }
        for w in p.windows(2) {
            if !map.is_free(w[1]) || (w[0] != w[1] && w[0].manhattan(w[1]) != 1) {
                return Err(format!("robot {r}: illegal step {} -> {}", w[0], w[1]));
            }
        }
    }
    let horizon = plan.paths.iter().map(|p| p.len()).max().unwrap_or(1);
    let at = |r: usize, t: usize| plan.paths[r][t.min(plan.paths[r].len() - 1)];
    for t in 0..horizon {
        for a in 0..n {
            for b in a + 1..n {
                if at(a, t) == at(b, t) {
                    return Err(format!("robots {a},{b} meet at {} at t={t}", at(a, t)));
                }
                if t > 0 && at(a, t) == at(b, t - 1) && at(b, t) == at(a, t - 1) && at(a, t) != at(a, t - 1) {
                    return Err(format!("robots {a},{b} swap at t={t}"));
                }
            }
        }
    }
    Ok(())
}

/// Both paths visit the same vertex sequence; only the timing differs.
pub fn same_route(a: &[Vertex], b: &[Vertex]) -> bool {
    let squash = |p: &[Vertex]| {
        let mut out: Vec<Vertex> = p.to_vec();
        out.dedup();
        out
    };
    squash(a) == squash(b)
}

/// A random map of the given size with roughly `blocked` of its cells
/// blocked.
pub fn random_map(rng: &mut ChaCha8Rng, width: u16, height: u16, blocked: f64) -> GridMap {
    let mask: Vec<bool> = (0..width as usize * height as usize).map(|_| rng.random_bool(blocked)).collect();
    GridMap::from_mask("random", width, height, mask).expect("mask matches the size")
}

/// A random feasible three-phase decomposition: random start, two random
/// intermediate configurations and random goals on a small map, each phase
/// solved by ECBS. Returns the instance (start to goal) and the phases.
pub fn random_three_phase(seed: u64) -> Option<(Instance, [Plan; 3])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = rng.random_range(5..=8u16);
    let blocked = rng.random_range(0.0..0.2);
    let map = Arc::new(random_map(&mut rng, side, side, blocked));
    let n = rng.random_range(2..=8usize).min(map.free_count() / 3);
    if n == 0 {
        return None;
    }
    let configs: Vec<Instance> = (0..3).map(|k| gen_uniform(map.clone(), n, seed.wrapping_mul(8).wrapping_add(k))).collect::<Result<_, _>>().ok()?;
    let stops = [
        configs[0].starts.clone(),
        configs[0].goals.clone(),
        configs[1].goals.clone(),
        configs[2].goals.clone(),
    ];
    let mut phases = Vec::new();
    for w in stops.windows(2) {
        let inst = Instance::new(map.clone(), w[0].clone(), w[1].clone(), seed).ok()?;
        let sol = solve_ecbs(&inst, EcbsConfig::new(1.5), &Budget::with_expansions(2_000)).ok()?;
        phases.push(sol.plan);
    }
    let whole = Instance::new(map, stops[0].clone(), stops[3].clone(), seed).ok()?;
    Some((whole, phases.try_into().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: u16, j: u16) -> Vertex {
        Vertex::new(i, j)
    }

    #[test]
    fn swap_in_a_corridor_is_impossible() {
        let map = GridMap::empty(3, 1);
        assert_eq!(optimal_makespan(&map, &[v(1, 1), v(2, 1)], &[v(2, 1), v(1, 1)]), None);
        assert_eq!(unlabeled_makespan(&map, &[v(1, 1), v(2, 1)], &[v(2, 1), v(1, 1)]), Some(0));
    }

    #[test]
    fn swap_on_a_square_rotates() {
        let map = GridMap::empty(2, 2);
        // Diagonal exchange needs two quarter rotations.
        assert_eq!(optimal_makespan(&map, &[v(1, 1), v(2, 2)], &[v(2, 2), v(1, 1)]), Some(2));
        assert_eq!(optimal_soc(&map, &[v(1, 1), v(2, 2)], &[v(2, 2), v(1, 1)]), Some(4));
    }

    #[test]
    fn soc_counts_robots_that_must_step_aside() {
        // Robot 1 sits on robot 0's route in a corridor with a side pocket.
        let map = GridMap::with_obstacles(3, 2, &[v(1, 2), v(3, 2)]).unwrap();
        assert_eq!(optimal_soc(&map, &[v(1, 1), v(2, 1)], &[v(3, 1), v(2, 1)]), Some(2 + 2));
    }

    #[test]
    fn checker_flags_swaps() {
        let map = GridMap::empty(2, 1);
        let plan = Plan::new(vec![vec![v(1, 1), v(2, 1)].into(), vec![v(2, 1), v(1, 1)].into()]);
        assert!(check_plan(&map, &[v(1, 1), v(2, 1)], &[v(2, 1), v(1, 1)], &plan).is_err());
    }
}
