//! Binary database files.
//!
//! Layout (little endian): magic `MRPPPDB1`, format version `u16`, shape code
//! `u8` (6 or 9 cells), smallest and largest stored `k` (`u8` each), three
//! padding bytes, table count `u32`; then one 16-byte directory record per
//! table (`mask u16`, `k u8`, pad, byte offset `u64`, state count `u32`);
//! then the tables (distance bytes followed by `u32` moves); finally a CRC-32
//! of everything before it.

use std::fs;
use std::path::Path as FsPath;

use super::{state_count, BaseShape, PrimitiveDb, ShapeDb, SubsetTable};
use crate::error::DbError;

const MAGIC: &[u8; 8] = b"MRPPPDB1";
const VERSION: u16 = 1;
const HEADER: usize = 20;
const RECORD: usize = 16;

/// Environment variable naming the directory with database files.
pub const DB_ENV_VAR: &str = "MRPP_DB_DIR";

pub fn file_name(shape: BaseShape) -> &'static str {
    match shape {
        BaseShape::ThreeByTwo => "prim_3x2.db",
        BaseShape::ThreeByThree => "prim_3x3.db",
    }
}

/// Serializes every built table of `db`.
pub fn encode(db: &ShapeDb) -> Vec<u8> {
    let mut tables: Vec<_> = db.built().cloned().collect();
    tables.sort_by_key(|t| t.mask);
    let k_min = tables.iter().map(|t| t.k).min().unwrap_or(0);
    let k_max = tables.iter().map(|t| t.k).max().unwrap_or(0);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(db.shape().code());
    out.push(k_min);
    out.push(k_max);
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&(tables.len() as u32).to_le_bytes());
    let mut offset = (HEADER + RECORD * tables.len()) as u64;
    for t in &tables {
        out.extend_from_slice(&t.mask.to_le_bytes());
        out.push(t.k);
        out.push(0);
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(t.dist.len() as u32).to_le_bytes());
        offset += 5 * t.dist.len() as u64;
    }
    for t in &tables {
        out.extend_from_slice(&t.dist);
        for m in &t.moves {
            out.extend_from_slice(&m.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn malformed(msg: impl Into<String>) -> DbError {
    DbError::Malformed(msg.into())
}

pub fn decode(bytes: &[u8]) -> Result<ShapeDb, DbError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(DbError::BadMagic);
    }
    if bytes.len() < HEADER + 4 {
        return Err(malformed("truncated header"));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != VERSION {
        return Err(DbError::Version(version));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(DbError::Checksum { stored, computed });
    }
    let shape = BaseShape::from_code(body[10]).ok_or_else(|| malformed(format!("unknown shape code {}", body[10])))?;
    let count = u32::from_le_bytes(body[16..20].try_into().unwrap()) as usize;
    if body.len() < HEADER + RECORD * count {
        return Err(malformed("truncated table directory"));
    }
    let db = ShapeDb::lazy(shape);
    for r in 0..count {
        let rec = &body[HEADER + RECORD * r..HEADER + RECORD * (r + 1)];
        let mask = u16::from_le_bytes([rec[0], rec[1]]);
        let k = rec[2];
        let offset = u64::from_le_bytes(rec[4..12].try_into().unwrap()) as usize;
        let states = u32::from_le_bytes(rec[12..16].try_into().unwrap()) as usize;
        if mask == 0 || mask as usize >= 1 << shape.cells() || mask.count_ones() != k as u32 {
            return Err(malformed(format!("bad subset record {r}")));
        }
        if states != state_count(shape.cells(), k as usize) {
            return Err(malformed(format!("subset {mask:#x}: wrong state count")));
        }
        let end = offset
            .checked_add(5 * states)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| malformed(format!("subset {mask:#x}: data out of range")))?;
        let dist = body[offset..offset + states].to_vec();
        let moves = body[offset + states..end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if !db.install(SubsetTable { mask, k, dist, moves }) {
            return Err(malformed(format!("duplicate subset {mask:#x}")));
        }
    }
    Ok(db)
}

pub fn save_db(path: &FsPath, db: &ShapeDb) -> Result<(), DbError> {
    fs::write(path, encode(db)).map_err(|e| DbError::Io(path.display().to_string(), e))
}

pub fn load_db(path: &FsPath) -> Result<ShapeDb, DbError> {
    let bytes = fs::read(path).map_err(|e| DbError::Io(path.display().to_string(), e))?;
    decode(&bytes)
}

impl PrimitiveDb {
    /// Loads `prim_3x2.db` and `prim_3x3.db` from `dir` where present;
    /// missing tables are built on demand.
    pub fn load_dir(dir: &FsPath) -> Result<Self, DbError> {
        let load = |shape| {
            let path = dir.join(file_name(shape));
            if path.exists() {
                load_db(&path)
            } else {
                Ok(ShapeDb::lazy(shape))
            }
        };
        Ok(PrimitiveDb {
            three_by_two: load(BaseShape::ThreeByTwo)?,
            three_by_three: load(BaseShape::ThreeByThree)?,
        })
    }

    /// [`PrimitiveDb::load_dir`] on `$MRPP_DB_DIR`, or a lazy database when
    /// the variable is unset.
    pub fn from_env() -> Result<Self, DbError> {
        match std::env::var_os(DB_ENV_VAR) {
            Some(dir) => Self::load_dir(FsPath::new(&dir)),
            None => Ok(Self::lazy()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primdb::generate_db;

    #[test]
    fn round_trip_is_bit_exact() {
        let db = generate_db(BaseShape::ThreeByTwo, 1, 3);
        let bytes = encode(&db);
        let back = decode(&bytes).unwrap();
        assert_eq!(encode(&back), bytes);
        for t in db.built() {
            assert_eq!(**back.table(t.mask), **t);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let db = generate_db(BaseShape::ThreeByTwo, 1, 2);
        let mut bytes = encode(&db);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(DbError::Checksum { .. })));
        let mut bytes = encode(&db);
        bytes[8] = 9;
        assert!(matches!(decode(&bytes), Err(DbError::Version(9))));
        assert!(matches!(decode(b"nonsense"), Err(DbError::BadMagic)));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let db = generate_db(BaseShape::ThreeByTwo, 1, 6);
        save_db(&dir.path().join(file_name(BaseShape::ThreeByTwo)), &db).unwrap();
        let loaded = PrimitiveDb::load_dir(dir.path()).unwrap();
        assert_eq!(loaded.three_by_two.built().count(), 63);
        assert_eq!(loaded.three_by_three.built().count(), 0);
    }
}
