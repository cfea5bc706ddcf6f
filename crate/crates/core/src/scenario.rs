//! Instance generators and `.scen` persistence.
//!
//! All generators draw from [`ChaCha8Rng`] seeded with `seed_from_u64`, so an
//! instance is a pure function of its parameters and seed on every platform.

use std::collections::HashSet;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::InstanceError;
use crate::grid::{GridMap, Vertex};
use crate::instance::Instance;

/// Generator parameters recorded in the JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Provenance {
    Uniform { robots: usize },
    Corner { robots: usize, side: u16 },
    /// Starts and goals come from two independent ChaCha streams (0 and 1).
    Gaussian { robots: usize, sigma: f64, streams: String },
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub seed: u64,
    pub map_file: String,
    pub params: Provenance,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Free vertices of the largest connected component, row-major.
fn largest_component(map: &GridMap) -> Vec<Vertex> {
    let labels = map.components();
    let mut sizes = vec![0usize; labels.iter().filter(|&&l| l != u32::MAX).max().map_or(0, |&m| m as usize + 1)];
    for &l in &labels {
        if l != u32::MAX {
            sizes[l as usize] += 1;
        }
    }
    let Some(best) = (0..sizes.len()).max_by_key(|&l| (sizes[l], std::cmp::Reverse(l))) else {
        return Vec::new();
    };
    map.free_vertices().into_iter().filter(|&v| labels[map.index(v)] == best as u32).collect()
}

/// Starts and goals sampled independently and uniformly without replacement.
///
/// Sampling is restricted to the largest connected component so every robot
/// can reach its goal; on connected maps this is the whole free set.
pub fn gen_uniform(map: Arc<GridMap>, n: usize, seed: u64) -> Result<Instance, InstanceError> {
    let pool = largest_component(&map);
    if n > pool.len() {
        return Err(InstanceError::Capacity {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let mut cells = pool.clone();
        let (chosen, _) = cells.partial_shuffle(rng, n);
        chosen.to_vec()
    };
    let starts = draw(&mut rng);
    let goals = draw(&mut rng);
    let mut inst = Instance::new(map, starts, goals, seed)?;
    inst.provenance = Some(Provenance::Uniform { robots: n });
    Ok(inst)
}

/// Side of the corner square used for `k` robots: `ceil(sqrt(k))`.
pub fn corner_side(k: usize) -> u16 {
    let mut s = (k as f64).sqrt() as usize;
    while s * s < k {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= k {
        s -= 1;
    }
    s as u16
}

/// The free cells of the lower-left `side` x `side` square.
///
/// Rows are numbered as in MovingAI files (top to bottom), so the lower-left
/// corner holds columns `1..=side` and rows `h-side+1..=h`.
pub fn corner_cells(map: &GridMap, side: u16) -> Vec<Vertex> {
    let h = map.height();
    let side_i = side.min(map.width());
    let side_j = side.min(h);
    let mut out = Vec::new();
    for j in (h - side_j + 1)..=h {
        for i in 1..=side_i {
            let v = Vertex::new(i, j);
            if map.is_free(v) {
                out.push(v);
            }
        }
    }
    out
}

/// Starts and goals both packed into the lower-left corner square.
pub fn gen_corner_rearrangement(map: Arc<GridMap>, k: usize, seed: u64) -> Result<Instance, InstanceError> {
    if k == 0 {
        return Err(InstanceError::Parameter("corner rearrangement needs k >= 1".into()));
    }
    let side = corner_side(k);
    if side > map.width() || side > map.height() {
        return Err(InstanceError::Capacity {
            requested: k,
            available: corner_cells(&map, side).len(),
        });
    }
    let pool = corner_cells(&map, side);
    if k > pool.len() {
        return Err(InstanceError::Capacity {
            requested: k,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let mut cells = pool.clone();
        let (chosen, _) = cells.partial_shuffle(rng, k);
        chosen.to_vec()
    };
    let starts = draw(&mut rng);
    let goals = draw(&mut rng);
    let mut inst = Instance::new(map, starts, goals, seed)?;
    inst.provenance = Some(Provenance::Corner { robots: k, side });
    Ok(inst)
}

/// Starts and goals drawn as `(floor x, floor y)` with `x, y ~ N(0, sigma^2)`,
/// rejecting repeated points, on an obstacle-free map that covers all samples
/// plus a `ceil(3 sigma)` margin on every side.
pub fn gen_gaussian(n: usize, sigma: f64, seed: u64) -> Result<Instance, InstanceError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(InstanceError::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    if n == 0 {
        return Err(InstanceError::Parameter("gaussian instance needs n >= 1".into()));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| InstanceError::Parameter(e.to_string()))?;
    let sample = |stream: u64| {
        let mut rng = rng_for(seed, stream);
        let mut seen = HashSet::new();
        let mut pts = Vec::with_capacity(n);
        while pts.len() < n {
            let x = normal.sample(&mut rng).floor() as i64;
            let y = normal.sample(&mut rng).floor() as i64;
            if seen.insert((x, y)) {
                pts.push((x, y));
            }
        }
        pts
    };
    let s = sample(0);
    let g = sample(1);
    let margin = (3.0 * sigma).ceil() as i64;
    let all = s.iter().chain(&g);
    let min_x = all.clone().map(|p| p.0).min().unwrap() - margin;
    let max_x = all.clone().map(|p| p.0).max().unwrap() + margin;
    let min_y = all.clone().map(|p| p.1).min().unwrap() - margin;
    let max_y = all.map(|p| p.1).max().unwrap() + margin;
    let (w, h) = (max_x - min_x + 1, max_y - min_y + 1);
    if w > u16::MAX as i64 || h > u16::MAX as i64 {
        return Err(InstanceError::Parameter("gaussian samples exceed the grid size limit".into()));
    }
    let mut map = GridMap::empty(w as u16, h as u16);
    map.set_name(format!("gauss-{w}x{h}"));
    let to_v = |&(x, y): &(i64, i64)| Vertex::new((x - min_x + 1) as u16, (y - min_y + 1) as u16);
    let starts = s.iter().map(to_v).collect();
    let goals = g.iter().map(to_v).collect();
    let mut inst = Instance::new(Arc::new(map), starts, goals, seed)?;
    inst.provenance = Some(Provenance::Gaussian {
        robots: n,
        sigma,
        streams: "independent".into(),
    });
    Ok(inst)
}

fn sidecar_path(path: &FsPath) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn io_err(path: &FsPath, e: std::io::Error) -> InstanceError {
    InstanceError::Io(path.display().to_string(), e)
}

/// Writes `path` (MovingAI `.scen` TSV), `path.json` (sidecar) and the map
/// next to it as `<map name>.map` when it is not already there.
pub fn save_instance(path: &FsPath, instance: &Instance) -> Result<(), InstanceError> {
    let map = &instance.map;
    let map_file = if map.name().ends_with(".map") {
        map.name().to_string()
    } else {
        format!("{}.map", map.name())
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(FsPath::new("."));
    let map_path = dir.join(&map_file);
    fs::write(&map_path, map.to_movingai()).map_err(|e| io_err(&map_path, e))?;

    let oracle_row = |s: Vertex, g: Vertex| map.bfs_from(g)[map.index(s)];
    let mut out = String::from("version 1\n");
    for (r, (s, g)) in instance.starts.iter().zip(&instance.goals).enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r / 10,
            map_file,
            map.width(),
            map.height(),
            s.i - 1,
            s.j - 1,
            g.i - 1,
            g.j - 1,
            oracle_row(*s, *g)
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))?;
    let sidecar = Sidecar {
        seed: instance.seed,
        map_file,
        params: instance.provenance.clone().unwrap_or(Provenance::Manual),
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&sidecar)?).map_err(|e| io_err(&side, e))?;
    Ok(())
}

/// Reads an instance written by [`save_instance`].
///
/// The map is looked up next to the scenario under the name given in the
/// rows; the sidecar is optional (seed defaults to 0).
pub fn load_instance(path: &FsPath) -> Result<Instance, InstanceError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(FsPath::new("."));
    let rows = parse_scen(&text)?;
    let Some(first) = rows.first() else {
        return Err(InstanceError::Parse {
            line: 1,
            msg: "scenario has no robots".into(),
        });
    };
    let map_path = dir.join(&first.map_file);
    let map = GridMap::load_movingai(&map_path)?;
    let mut starts = Vec::with_capacity(rows.len());
    let mut goals = Vec::with_capacity(rows.len());
    for row in &rows {
        if row.map_file != first.map_file || row.width != map.width() || row.height != map.height() {
            return Err(InstanceError::Parse {
                line: row.line,
                msg: "row refers to a different map".into(),
            });
        }
        starts.push(row.start);
        goals.push(row.goal);
    }
    let side = sidecar_path(path);
    let sidecar: Option<Sidecar> = match fs::read_to_string(&side) {
        Ok(s) => Some(serde_json::from_str(&s)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(io_err(&side, e)),
    };
    let mut inst = Instance::new(Arc::new(map), starts, goals, sidecar.as_ref().map_or(0, |s| s.seed))?;
    inst.provenance = sidecar.map(|s| s.params);
    Ok(inst)
}

struct ScenRow {
    line: usize,
    map_file: String,
    width: u16,
    height: u16,
    start: Vertex,
    goal: Vertex,
}

fn parse_scen(text: &str) -> Result<Vec<ScenRow>, InstanceError> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (ln == 0 && line.starts_with("version")) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 9 {
            return Err(InstanceError::Parse {
                line: line_no,
                msg: format!("expected 9 tab-separated fields, found {}", fields.len()),
            });
        }
        let num = |k: usize| -> Result<u16, InstanceError> {
            fields[k].trim().parse::<u16>().map_err(|_| InstanceError::Parse {
                line: line_no,
                msg: format!("field {} (`{}`) is not a coordinate", k + 1, fields[k]),
            })
        };
        let coord = |x: usize, y: usize| -> Result<Vertex, InstanceError> {
            let (x, y) = (num(x)?, num(y)?);
            if x == u16::MAX || y == u16::MAX {
                return Err(InstanceError::Parse {
                    line: line_no,
                    msg: "coordinate out of range".into(),
                });
            }
            Ok(Vertex::new(x + 1, y + 1))
        };
        rows.push(ScenRow {
            line: line_no,
            map_file: fields[1].to_string(),
            width: num(2)?,
            height: num(3)?,
            start: coord(4, 5)?,
            goal: coord(6, 7)?,
        });
        fields[8].trim().parse::<f64>().map_err(|_| InstanceError::Parse {
            line: line_no,
            msg: "distance column is not a number".into(),
        })?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_saturation_is_a_permutation() {
        let map = Arc::new(GridMap::empty(5, 4));
        let inst = gen_uniform(map.clone(), 20, 3).unwrap();
        let mut s = inst.starts.clone();
        let mut g = inst.goals.clone();
        s.sort();
        g.sort();
        assert_eq!(s, map.free_vertices());
        assert_eq!(g, map.free_vertices());
    }

    #[test]
    fn uniform_capacity_error() {
        let map = Arc::new(GridMap::empty(3, 3));
        assert!(matches!(gen_uniform(map, 10, 0), Err(InstanceError::Capacity { requested: 10, available: 9 })));
    }

    #[test]
    fn uniform_272_on_20x20() {
        let inst = gen_uniform(Arc::new(GridMap::empty(20, 20)), 272, 1).unwrap();
        assert_eq!(inst.num_robots(), 272);
        assert!((inst.density() - 0.68).abs() < 1e-12);
    }

    #[test]
    fn corner_49_fills_7x7() {
        let map = Arc::new(GridMap::empty(20, 20));
        let inst = gen_corner_rearrangement(map, 49, 7).unwrap();
        let mut s = inst.starts.clone();
        s.sort();
        let mut expected: Vec<_> = (14..=20).flat_map(|j| (1..=7).map(move |i| Vertex::new(i, j))).collect();
        expected.sort();
        assert_eq!(s, expected);
    }

    #[test]
    fn corner_side_is_ceil_sqrt() {
        assert_eq!(corner_side(1), 1);
        assert_eq!(corner_side(5), 3);
        assert_eq!(corner_side(9), 3);
        assert_eq!(corner_side(10), 4);
        assert_eq!(corner_side(49), 7);
        let inst = gen_corner_rearrangement(Arc::new(GridMap::empty(20, 20)), 5, 2).unwrap();
        assert!(inst.starts.iter().chain(&inst.goals).all(|v| v.i <= 3 && v.j >= 18));
        let one = gen_corner_rearrangement(Arc::new(GridMap::empty(20, 20)), 1, 2).unwrap();
        assert_eq!(one.starts, vec![Vertex::new(1, 20)]);
        assert_eq!(one.goals, one.starts);
    }

    #[test]
    fn gaussian_is_deterministic_and_padded() {
        let a = gen_gaussian(10, 5.0, 42).unwrap();
        let b = gen_gaussian(10, 5.0, 42).unwrap();
        assert_eq!(a.starts, b.starts);
        assert_eq!(a.goals, b.goals);
        assert_eq!(a.map.width(), b.map.width());
        let margin = 15;
        for v in a.starts.iter().chain(&a.goals) {
            assert!(v.i > margin && v.j > margin);
            assert!(v.i <= a.map.width() - margin && v.j <= a.map.height() - margin);
        }
        assert_eq!(gen_gaussian(1, 5.0, 9).unwrap().num_robots(), 1);
        assert!(gen_gaussian(3, 0.0, 9).is_err());
    }

    #[test]
    fn scen_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let inst = gen_uniform(Arc::new(GridMap::warehouse()), 30, 11).unwrap();
        let path = dir.path().join("w.scen");
        save_instance(&path, &inst).unwrap();
        let back = load_instance(&path).unwrap();
        assert_eq!(back.starts, inst.starts);
        assert_eq!(back.goals, inst.goals);
        assert_eq!(back.seed, 11);
        assert_eq!(back.provenance, inst.provenance);
        assert_eq!(back.map.free_vertices(), inst.map.free_vertices());
    }

    #[test]
    fn scen_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("m.map"), GridMap::empty(4, 4).to_movingai()).unwrap();
        let path = dir.path().join("bad.scen");
        fs::write(&path, "version 1\n0\tm.map\t4\t4\t0\t0\t1\t1\t2\n0\tm.map\t4\t4\tx\t0\t1\t1\t2\n").unwrap();
        let err = load_instance(&path).unwrap_err();
        assert!(matches!(err, InstanceError::Parse { line: 3, .. }), "{err:?}");
        fs::write(&path, "version 1\n0\tm.map\t4\t4\t0\t0\n").unwrap();
        assert!(matches!(load_instance(&path).unwrap_err(), InstanceError::Parse { line: 2, .. }));
    }
}
