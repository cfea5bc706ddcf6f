use serde::{Deserialize, Serialize};

use super::BaseShape;
use crate::grid::{GridMap, Vertex};
use crate::plan::{Conflict, Path};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubgridShape {
    /// 3 columns x 2 rows.
    Wide,
    /// 2 columns x 3 rows; served by the 3 x 2 tables transposed.
    Tall,
    /// 3 x 3.
    Square,
}

impl SubgridShape {
    /// Preference order used when several shapes fit.
    pub const ALL: [SubgridShape; 3] = [SubgridShape::Wide, SubgridShape::Tall, SubgridShape::Square];

    pub fn width(self) -> u16 {
        match self {
            SubgridShape::Tall => 2,
            _ => 3,
        }
    }

    pub fn height(self) -> u16 {
        match self {
            SubgridShape::Wide => 2,
            _ => 3,
        }
    }

    pub fn base(self) -> BaseShape {
        match self {
            SubgridShape::Square => BaseShape::ThreeByThree,
            _ => BaseShape::ThreeByTwo,
        }
    }
}

/// A placement of a subgrid on the host map; `anchor` is its smallest
/// column and row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubgridSpec {
    pub anchor: Vertex,
    pub shape: SubgridShape,
}

impl SubgridSpec {
    pub fn contains(&self, v: Vertex) -> bool {
        v.i >= self.anchor.i
            && v.j >= self.anchor.j
            && v.i < self.anchor.i + self.shape.width()
            && v.j < self.anchor.j + self.shape.height()
    }

    /// Cell index in the base shape's table.
    pub fn local_cell(&self, v: Vertex) -> Option<u8> {
        if !self.contains(v) {
            return None;
        }
        let (dx, dy) = (v.i - self.anchor.i, v.j - self.anchor.j);
        Some(match self.shape {
            SubgridShape::Tall => dx * 3 + dy,
            _ => dy * 3 + dx,
        } as u8)
    }

    pub fn host_vertex(&self, cell: u8) -> Vertex {
        let (x, y) = ((cell % 3) as u16, (cell / 3) as u16);
        match self.shape {
            SubgridShape::Tall => Vertex::new(self.anchor.i + y, self.anchor.j + x),
            _ => Vertex::new(self.anchor.i + x, self.anchor.j + y),
        }
    }

    /// Host vertices covered, row-major.
    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.shape.height())
            .flat_map(move |dy| (0..self.shape.width()).map(move |dx| Vertex::new(self.anchor.i + dx, self.anchor.j + dy)))
    }

    fn fits(&self, map: &GridMap) -> bool {
        self.vertices().all(|v| map.is_free(v))
    }
}

/// Every obstacle-free placement covering all `points`, in preference
/// order: 3x2, then 2x3, then 3x3; within a shape by anchor, row-major.
pub fn subgrid_candidates(map: &GridMap, points: &[Vertex]) -> Vec<SubgridSpec> {
    let mut out = Vec::new();
    let Some(min_i) = points.iter().map(|v| v.i).min() else {
        return out;
    };
    let max_i = points.iter().map(|v| v.i).max().unwrap();
    let min_j = points.iter().map(|v| v.j).min().unwrap();
    let max_j = points.iter().map(|v| v.j).max().unwrap();
    for shape in SubgridShape::ALL {
        let (w, h) = (shape.width(), shape.height());
        if max_i - min_i >= w || max_j - min_j >= h || w > map.width() || h > map.height() {
            continue;
        }
        let j_lo = (max_j + 1).saturating_sub(h).max(1);
        let j_hi = min_j.min(map.height() - h + 1);
        let i_lo = (max_i + 1).saturating_sub(w).max(1);
        let i_hi = min_i.min(map.width() - w + 1);
        for j in j_lo..=j_hi {
            for i in i_lo..=i_hi {
                let spec = SubgridSpec {
                    anchor: Vertex::new(i, j),
                    shape,
                };
                if spec.fits(map) {
                    out.push(spec);
                }
            }
        }
    }
    out
}

/// Positions of the two conflicting robots at `t - 1` and `t`.
pub(crate) fn conflict_points<P: std::borrow::Borrow<Path>>(conflict: &Conflict, paths: &[P]) -> Vec<Vertex> {
    let mut pts = Vec::with_capacity(4);
    for r in [conflict.a, conflict.b] {
        let p = paths[r].borrow();
        pts.push(p.at(conflict.t));
        if conflict.t > 0 {
            pts.push(p.at(conflict.t - 1));
        }
    }
    pts
}

/// The preferred obstacle-free subgrid containing both conflicting robots'
/// positions just before and at the conflict.
pub fn find_enclosing_subgrid<P: std::borrow::Borrow<Path>>(map: &GridMap, conflict: &Conflict, paths: &[P]) -> Option<SubgridSpec> {
    subgrid_candidates(map, &conflict_points(conflict, paths)).into_iter().next()
}
