//! Binary persistence for [`IvfFlatIndex`].
//!
//! Single-file little-endian layout:
//!
//! ```text
//! offset  size          field
//! 0       4             magic "AIVF"
//! 4       4             format version (u32, currently 1)
//! 8       4             dimension D (u32)
//! 12      4             nlist (u32)
//! 16      1             metric (u8: 0 = cosine, 1 = l2)
//! 17      1             flags (u8: bit 0 = fact-keyed retrieval index)
//! 18      2             reserved (zero)
//! 20      nlist*D*4     centroids, row-major f32
//! then, for each of the nlist inverted lists:
//!         8             entry count n (u64)
//!         n*8           ids (u64)
//!         n*D*4         vectors, row-major f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::index::{IvfFlatIndex, Metric};

const MAGIC: &[u8; 4] = b"AIVF";
const VERSION: u32 = 1;
const FLAG_DIFAR: u8 = 0b0000_0001;

/// Writes the index to `path`. The write is not atomic; callers that need
/// atomicity write to a temporary file and rename.
pub fn save_index(index: &IvfFlatIndex, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| CoreError::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(index.dim() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&(index.nlist() as u32).to_le_bytes())
        .map_err(io_err)?;
    let metric = match index.metric() {
        Metric::Cosine => 0u8,
        Metric::L2 => 1u8,
    };
    w.write_all(&[metric, if index.difar { FLAG_DIFAR } else { 0 }, 0, 0])
        .map_err(io_err)?;

    for centroid in index.centroids() {
        for &v in centroid {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    for (ids, vectors) in index.raw_lists() {
        w.write_all(&(ids.len() as u64).to_le_bytes())
            .map_err(io_err)?;
        for &id in ids {
            w.write_all(&id.to_le_bytes()).map_err(io_err)?;
        }
        for &v in vectors {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Reads an index previously written by [`save_index`].
pub fn load_index(path: &Path) -> Result<IvfFlatIndex> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| CoreError::IndexFormat {
        path: path.to_path_buf(),
        msg: msg.into(),
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r).map_err(|_| bad("truncated header"))?;
    if version != VERSION {
        return Err(CoreError::IndexFormat {
            path: path.to_path_buf(),
            msg: format!("unsupported version {version}"),
        });
    }
    let dim = read_u32(&mut r).map_err(|_| bad("truncated header"))? as usize;
    let nlist = read_u32(&mut r).map_err(|_| bad("truncated header"))? as usize;
    let mut tail = [0u8; 4];
    r.read_exact(&mut tail)
        .map_err(|_| bad("truncated header"))?;
    let metric = match tail[0] {
        0 => Metric::Cosine,
        1 => Metric::L2,
        other => {
            return Err(CoreError::IndexFormat {
                path: path.to_path_buf(),
                msg: format!("unknown metric tag {other}"),
            })
        }
    };
    let difar = tail[1] & FLAG_DIFAR != 0;
    if dim == 0 || nlist == 0 {
        return Err(bad("zero dimension or nlist"));
    }

    let mut centroids = Vec::with_capacity(nlist);
    for _ in 0..nlist {
        centroids.push(read_f32s(&mut r, dim).map_err(|_| bad("truncated centroid block"))?);
    }
    let mut lists = Vec::with_capacity(nlist);
    for _ in 0..nlist {
        let n = read_u64(&mut r).map_err(|_| bad("truncated list header"))? as usize;
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(read_u64(&mut r).map_err(|_| bad("truncated id table"))?);
        }
        let vectors = read_f32s(&mut r, n * dim).map_err(|_| bad("truncated vector block"))?;
        lists.push((ids, vectors));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| CoreError::io(path, e))? != 0 {
        return Err(bad("trailing bytes after last list"));
    }
    IvfFlatIndex::from_parts(dim, metric, centroids, lists, difar)
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
