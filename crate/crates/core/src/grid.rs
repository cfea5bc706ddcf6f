//! 4-connected grid graphs, MovingAI map I/O and the BFS distance oracle.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;
use std::path::Path as FsPath;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::GridError;

/// Sentinel distance for vertices in another connected component.
pub const UNREACHABLE: u32 = u32::MAX;

/// Sentinel cell index used in the adjacency table.
const NO_CELL: u32 = u32::MAX;

/// A grid vertex with 1-based column `i` and row `j`.
///
/// Vertices order row-major: first by `j`, then by `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub i: u16,
    pub j: u16,
}

impl Vertex {
    pub const fn new(i: u16, j: u16) -> Self {
        Vertex { i, j }
    }

    /// Manhattan distance, an obstacle-free lower bound.
    pub fn manhattan(self, other: Vertex) -> u32 {
        (self.i as i32 - other.i as i32).unsigned_abs() + (self.j as i32 - other.j as i32).unsigned_abs()
    }

    pub fn is_adjacent(self, other: Vertex) -> bool {
        self.manhattan(other) == 1
    }
}

impl Ord for Vertex {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.j, self.i).cmp(&(other.j, other.i))
    }
}

impl PartialOrd for Vertex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

/// Obstacle grid with 4-connectivity.
///
/// Cells are addressed either by [`Vertex`] or by a dense row-major cell
/// index (`(j-1)*w + (i-1)`); the searches use indices internally.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridMap {
    name: String,
    width: u16,
    height: u16,
    blocked: Vec<bool>,
    free_count: usize,
    adj: Vec<[u32; 4]>,
}

impl GridMap {
    /// Builds a map from a row-major obstacle mask (`true` = blocked).
    pub fn from_mask(name: impl Into<String>, width: u16, height: u16, blocked: Vec<bool>) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::EmptyMap);
        }
        if blocked.len() != width as usize * height as usize {
            return Err(GridError::MaskSize {
                expected: width as usize * height as usize,
                found: blocked.len(),
            });
        }
        let free_count = blocked.iter().filter(|b| !**b).count();
        let mut map = GridMap {
            name: name.into(),
            width,
            height,
            blocked,
            free_count,
            adj: Vec::new(),
        };
        map.adj = (0..map.cell_count())
            .map(|c| {
                let mut out = [NO_CELL; 4];
                if map.blocked[c] {
                    return out;
                }
                let v = map.vertex(c as u32);
                for (slot, n) in out.iter_mut().zip(map.raw_neighbors(v)) {
                    if let Some(n) = n {
                        if map.is_free(n) {
                            *slot = map.index(n) as u32;
                        }
                    }
                }
                out
            })
            .collect();
        Ok(map)
    }

    /// An obstacle-free `width` x `height` grid.
    pub fn empty(width: u16, height: u16) -> Self {
        Self::from_mask(format!("empty-{width}x{height}"), width, height, vec![false; width as usize * height as usize])
            .expect("non-empty dimensions")
    }

    /// A grid with the listed cells blocked.
    pub fn with_obstacles(width: u16, height: u16, obstacles: &[Vertex]) -> Result<Self, GridError> {
        let mut blocked = vec![false; width as usize * height as usize];
        for &o in obstacles {
            if o.i == 0 || o.j == 0 || o.i > width || o.j > height {
                return Err(GridError::InvalidVertex(o));
            }
            blocked[(o.j as usize - 1) * width as usize + (o.i as usize - 1)] = true;
        }
        Self::from_mask(format!("grid-{width}x{height}"), width, height, blocked)
    }

    /// A 24x18 warehouse-style map with 360 free vertices.
    ///
    /// Six shelf rows, each holding six 2x1 shelf blocks separated by
    /// two-cell aisles. This is a reconstruction of a warehouse layout with
    /// the same dimensions and free-vertex count, not an original map file.
    pub fn warehouse() -> Self {
        let (w, h) = (24u16, 18u16);
        let mut obstacles = Vec::new();
        for &j in &[3u16, 5, 7, 12, 14, 16] {
            for &start in &[2u16, 6, 10, 14, 18, 22] {
                obstacles.push(Vertex::new(start, j));
                obstacles.push(Vertex::new(start + 1, j));
            }
        }
        let mut map = Self::with_obstacles(w, h, &obstacles).expect("shelves inside bounds");
        map.name = "warehouse-24x18".into();
        map
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn free_count(&self) -> usize {
        self.free_count
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v.i >= 1 && v.j >= 1 && v.i <= self.width && v.j <= self.height
    }

    /// In bounds and not an obstacle.
    pub fn is_free(&self, v: Vertex) -> bool {
        self.contains(v) && !self.blocked[self.index(v)]
    }

    /// Row-major cell index. `v` must be in bounds.
    #[inline]
    pub fn index(&self, v: Vertex) -> usize {
        (v.j as usize - 1) * self.width as usize + (v.i as usize - 1)
    }

    #[inline]
    pub fn vertex(&self, cell: u32) -> Vertex {
        let w = self.width as u32;
        Vertex::new((cell % w + 1) as u16, (cell / w + 1) as u16)
    }

    pub fn is_blocked_cell(&self, cell: usize) -> bool {
        self.blocked[cell]
    }

    /// Free neighbors of a cell index, in E, W, N, S order.
    #[inline]
    pub fn cell_neighbors(&self, cell: u32) -> impl Iterator<Item = u32> + '_ {
        self.adj[cell as usize].iter().copied().filter(|&c| c != NO_CELL)
    }

    fn raw_neighbors(&self, v: Vertex) -> [Option<Vertex>; 4] {
        let e = (v.i < self.width).then(|| Vertex::new(v.i + 1, v.j));
        let w = (v.i > 1).then(|| Vertex::new(v.i - 1, v.j));
        let n = (v.j < self.height).then(|| Vertex::new(v.i, v.j + 1));
        let s = (v.j > 1).then(|| Vertex::new(v.i, v.j - 1));
        [e, w, n, s]
    }

    /// The free 4-neighbors of `v`, ordered E `(i+1,j)`, W `(i-1,j)`,
    /// N `(i,j+1)`, S `(i,j-1)`.
    pub fn neighbors(&self, v: Vertex) -> Result<Vec<Vertex>, GridError> {
        if !self.is_free(v) {
            return Err(GridError::InvalidVertex(v));
        }
        Ok(self.cell_neighbors(self.index(v) as u32).map(|c| self.vertex(c)).collect())
    }

    /// All free vertices in row-major order.
    pub fn free_vertices(&self) -> Vec<Vertex> {
        (0..self.cell_count() as u32)
            .filter(|&c| !self.blocked[c as usize])
            .map(|c| self.vertex(c))
            .collect()
    }

    /// Connected-component label per cell (`u32::MAX` for obstacles).
    pub fn components(&self) -> Vec<u32> {
        let mut label = vec![u32::MAX; self.cell_count()];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for c in 0..self.cell_count() {
            if self.blocked[c] || label[c] != u32::MAX {
                continue;
            }
            label[c] = next;
            queue.push_back(c as u32);
            while let Some(u) = queue.pop_front() {
                for n in self.cell_neighbors(u) {
                    if label[n as usize] == u32::MAX {
                        label[n as usize] = next;
                        queue.push_back(n);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Single-source BFS distances over free cells.
    pub fn bfs_from(&self, source: Vertex) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.cell_count()];
        if !self.is_free(source) {
            return dist;
        }
        let s = self.index(source);
        dist[s] = 0;
        let mut queue = VecDeque::from([s as u32]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u as usize] + 1;
            for n in self.cell_neighbors(u) {
                if dist[n as usize] == UNREACHABLE {
                    dist[n as usize] = d;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Parses a MovingAI `.map` file body.
    ///
    /// `.` and `G` are passable; `@`, `O`, `T`, `S` and `W` are blocked.
    /// Row `y` / column `x` of the file become vertex `(x+1, y+1)`.
    pub fn parse_movingai(name: impl Into<String>, text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines().enumerate();
        let mut width = None;
        let mut height = None;
        for (ln, line) in lines.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("type") => {}
                Some("height") => height = Some(parse_dim(parts.next(), ln + 1)?),
                Some("width") => width = Some(parse_dim(parts.next(), ln + 1)?),
                Some("map") => break,
                _ => {
                    return Err(GridError::Parse {
                        line: ln + 1,
                        msg: format!("unexpected header line `{line}`"),
                    })
                }
            }
        }
        let (w, h) = match (width, height) {
            (Some(w), Some(h)) => (w, h),
            _ => {
                return Err(GridError::Parse {
                    line: 0,
                    msg: "missing width/height header".into(),
                })
            }
        };
        let mut blocked = Vec::with_capacity(w as usize * h as usize);
        let mut rows = 0;
        for (ln, line) in lines {
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() && rows == h {
                continue;
            }
            if rows == h {
                return Err(GridError::Parse {
                    line: ln + 1,
                    msg: "more map rows than declared height".into(),
                });
            }
            if line.chars().count() != w as usize {
                return Err(GridError::Parse {
                    line: ln + 1,
                    msg: format!("row has {} cells, expected {w}", line.chars().count()),
                });
            }
            for ch in line.chars() {
                blocked.push(match ch {
                    '.' | 'G' => false,
                    '@' | 'O' | 'T' | 'S' | 'W' => true,
                    other => {
                        return Err(GridError::Parse {
                            line: ln + 1,
                            msg: format!("unknown map character `{other}`"),
                        })
                    }
                });
            }
            rows += 1;
        }
        if rows != h {
            return Err(GridError::Parse {
                line: 0,
                msg: format!("found {rows} map rows, expected {h}"),
            });
        }
        Self::from_mask(name, w, h, blocked)
    }

    pub fn load_movingai(path: &FsPath) -> Result<Self, GridError> {
        let text = std::fs::read_to_string(path).map_err(|e| GridError::Io(path.display().to_string(), e))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Self::parse_movingai(name, &text)
    }

    /// Serializes in MovingAI `.map` format (`.` free, `@` blocked).
    pub fn to_movingai(&self) -> String {
        let mut out = format!("type octile\nheight {}\nwidth {}\nmap\n", self.height, self.width);
        for row in self.blocked.chunks(self.width as usize) {
            out.extend(row.iter().map(|&b| if b { '@' } else { '.' }));
            out.push('\n');
        }
        out
    }
}

fn parse_dim(token: Option<&str>, line: usize) -> Result<u16, GridError> {
    token
        .and_then(|t| t.parse::<u16>().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| GridError::Parse {
            line,
            msg: "invalid dimension".into(),
        })
}

/// Lazily filled BFS distance tables, one per target vertex.
///
/// Tables are computed on first use and cached; the oracle can be shared
/// across threads.
#[derive(Debug)]
pub struct DistanceOracle {
    map: Arc<GridMap>,
    tables: Vec<OnceLock<Box<[u32]>>>,
}

impl DistanceOracle {
    pub fn new(map: Arc<GridMap>) -> Self {
        let tables = (0..map.cell_count()).map(|_| OnceLock::new()).collect();
        DistanceOracle { map, tables }
    }

    pub fn map(&self) -> &Arc<GridMap> {
        &self.map
    }

    /// Distances from every cell to `target`, indexed by cell.
    pub fn table(&self, target: Vertex) -> &[u32] {
        let idx = self.map.index(target);
        self.table_for_cell(idx as u32)
    }

    pub fn table_for_cell(&self, target: u32) -> &[u32] {
        self.tables[target as usize].get_or_init(|| self.map.bfs_from(self.map.vertex(target)).into_boxed_slice())
    }

    /// Shortest-path distance, [`UNREACHABLE`] across components.
    pub fn dist(&self, from: Vertex, to: Vertex) -> u32 {
        if !self.map.is_free(from) || !self.map.is_free(to) {
            return UNREACHABLE;
        }
        self.table(to)[self.map.index(from)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_and_interior_neighbors() {
        let m = GridMap::empty(20, 20);
        assert_eq!(m.neighbors(Vertex::new(1, 1)).unwrap(), vec![Vertex::new(2, 1), Vertex::new(1, 2)]);
        assert_eq!(m.neighbors(Vertex::new(5, 5)).unwrap().len(), 4);
        assert_eq!(
            m.neighbors(Vertex::new(5, 5)).unwrap(),
            vec![Vertex::new(6, 5), Vertex::new(4, 5), Vertex::new(5, 6), Vertex::new(5, 4)]
        );
    }

    #[test]
    fn blocked_neighbor_removed() {
        let m = GridMap::with_obstacles(20, 20, &[Vertex::new(2, 1)]).unwrap();
        assert_eq!(m.neighbors(Vertex::new(1, 1)).unwrap(), vec![Vertex::new(1, 2)]);
    }

    #[test]
    fn invalid_vertex_rejected() {
        let m = GridMap::with_obstacles(4, 4, &[Vertex::new(2, 2)]).unwrap();
        assert!(matches!(m.neighbors(Vertex::new(2, 2)), Err(GridError::InvalidVertex(_))));
        assert!(matches!(m.neighbors(Vertex::new(5, 1)), Err(GridError::InvalidVertex(_))));
        assert!(matches!(m.neighbors(Vertex::new(0, 1)), Err(GridError::InvalidVertex(_))));
    }

    #[test]
    fn warehouse_has_360_free_vertices() {
        let m = GridMap::warehouse();
        assert_eq!((m.width(), m.height()), (24, 18));
        assert_eq!(m.free_count(), 360);
        let comps = m.components();
        let first = comps[m.index(Vertex::new(1, 1))];
        assert!(m.free_vertices().iter().all(|&v| comps[m.index(v)] == first));
    }

    #[test]
    fn movingai_round_trip() {
        let text = "type octile\nheight 3\nwidth 4\nmap\n..@.\n.T..\nG...\n";
        let m = GridMap::parse_movingai("t.map", text).unwrap();
        assert_eq!(m.free_count(), 10);
        assert!(!m.is_free(Vertex::new(3, 1)));
        assert!(!m.is_free(Vertex::new(2, 2)));
        let again = GridMap::parse_movingai("t.map", &m.to_movingai()).unwrap();
        assert_eq!(again.free_vertices(), m.free_vertices());
    }

    #[test]
    fn movingai_errors_carry_line_numbers() {
        let err = GridMap::parse_movingai("x", "type octile\nheight 2\nwidth 2\nmap\n..\n.x\n").unwrap_err();
        assert!(matches!(err, GridError::Parse { line: 6, .. }), "{err:?}");
        let err = GridMap::parse_movingai("x", "type octile\nheight 2\nwidth 3\nmap\n..\n..\n").unwrap_err();
        assert!(matches!(err, GridError::Parse { line: 5, .. }), "{err:?}");
    }

    #[test]
    fn oracle_basics() {
        let m = Arc::new(GridMap::with_obstacles(5, 5, &[Vertex::new(2, 1), Vertex::new(2, 2), Vertex::new(2, 3), Vertex::new(2, 4)]).unwrap());
        let o = DistanceOracle::new(m.clone());
        let a = Vertex::new(1, 1);
        let b = Vertex::new(3, 1);
        assert_eq!(o.dist(a, a), 0);
        assert_eq!(o.dist(a, b), 10);
        assert_eq!(o.dist(b, a), 10);
        assert_eq!(o.dist(a, Vertex::new(2, 2)), UNREACHABLE);
    }
}
