use std::sync::Arc;

use rustc_hash::FxHashMap;

use crate::error::InstanceError;
use crate::grid::{GridMap, Vertex};
use crate::scenario::Provenance;

/// An ordered list of vertices, one per robot index.
pub type Configuration = Vec<Vertex>;

/// Checks that every vertex is free and no two robots share a vertex.
pub fn check_configuration(map: &GridMap, config: &[Vertex]) -> Result<(), InstanceError> {
    let mut seen: FxHashMap<Vertex, usize> = FxHashMap::default();
    for (robot, &v) in config.iter().enumerate() {
        if !map.is_free(v) {
            return Err(InstanceError::NotFree { robot, vertex: v });
        }
        if let Some(&first) = seen.get(&v) {
            return Err(InstanceError::Duplicate {
                first,
                second: robot,
                vertex: v,
            });
        }
        seen.insert(v, robot);
    }
    Ok(())
}

/// A labeled problem: map plus start and goal configurations.
#[derive(Clone, Debug)]
pub struct Instance {
    pub map: Arc<GridMap>,
    pub starts: Configuration,
    pub goals: Configuration,
    pub seed: u64,
    /// How the instance was generated, if known.
    pub provenance: Option<Provenance>,
}

impl Instance {
    /// Validates sizes, distinctness, freeness and per-robot connectivity.
    pub fn new(map: Arc<GridMap>, starts: Configuration, goals: Configuration, seed: u64) -> Result<Self, InstanceError> {
        if starts.len() != goals.len() {
            return Err(InstanceError::SizeMismatch {
                starts: starts.len(),
                goals: goals.len(),
            });
        }
        check_configuration(&map, &starts)?;
        check_configuration(&map, &goals)?;
        let comps = map.components();
        for (robot, (s, g)) in starts.iter().zip(&goals).enumerate() {
            if comps[map.index(*s)] != comps[map.index(*g)] {
                return Err(InstanceError::Disconnected { robot });
            }
        }
        Ok(Instance {
            map,
            starts,
            goals,
            seed,
            provenance: None,
        })
    }

    pub fn num_robots(&self) -> usize {
        self.starts.len()
    }

    /// Same map and seed, different endpoints.
    pub fn with_endpoints(&self, starts: Configuration, goals: Configuration) -> Result<Self, InstanceError> {
        Instance::new(self.map.clone(), starts, goals, self.seed)
    }

    /// Robots divided by free vertices.
    pub fn density(&self) -> f64 {
        self.num_robots() as f64 / self.map.free_count() as f64
    }
}
