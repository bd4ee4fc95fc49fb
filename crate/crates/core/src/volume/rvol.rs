//! RVOL v1: one JSON header line, then a raw little-endian payload.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Geometry, Grid, Voxel};
use crate::error::{Error, Result};

pub const RVOL_MAGIC: &str = "RVOL1";

// Headers longer than this are rejected before allocating.
const MAX_HEADER: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RvolKind {
    Scalar,
    Label,
    Field3,
}

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    kind: RvolKind,
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

/// Voxel types with an RVOL encoding.
pub trait RvolVoxel: Voxel {
    const KIND: RvolKind;
    const BYTES: usize;
    fn put(&self, out: &mut Vec<u8>);
    fn take(bytes: &[u8]) -> Self;
}

impl RvolVoxel for f32 {
    const KIND: RvolKind = RvolKind::Scalar;
    const BYTES: usize = 4;
    fn put(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(b: &[u8]) -> Self {
        f32::from_le_bytes([b[0], b[1], b[2], b[3]])
    }
}

impl RvolVoxel for u16 {
    const KIND: RvolKind = RvolKind::Label;
    const BYTES: usize = 2;
    fn put(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(b: &[u8]) -> Self {
        u16::from_le_bytes([b[0], b[1]])
    }
}

impl RvolVoxel for [f32; 3] {
    const KIND: RvolKind = RvolKind::Field3;
    const BYTES: usize = 12;
    fn put(&self, out: &mut Vec<u8>) {
        for c in self {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    fn take(b: &[u8]) -> Self {
        [f32::take(&b[0..4]), f32::take(&b[4..8]), f32::take(&b[8..12])]
    }
}

/// Serialize a grid; the header is compact JSON terminated by `\n`.
pub fn write_rvol<T: RvolVoxel, W: Write>(grid: &Grid<T>, mut w: W) -> Result<()> {
    let g = grid.geometry();
    let header = Header {
        magic: RVOL_MAGIC.to_string(),
        kind: T::KIND,
        dims: g.dims,
        spacing: g.spacing,
        origin: g.origin,
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(grid.data().len() * T::BYTES);
    for v in grid.data() {
        v.put(&mut bytes);
    }
    w.write_all(&bytes).map_err(|e| Error::io("<rvol stream>", e))?;
    w.flush().map_err(|e| Error::io("<rvol stream>", e))
}

/// Parse a grid, rejecting wrong magic, kind, or payload length.
pub fn read_rvol<T: RvolVoxel, R: Read>(r: R) -> Result<Grid<T>> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    (&mut r)
        .take(MAX_HEADER as u64)
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::io("<rvol stream>", e))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing or oversized header line".into()));
    }
    line.pop();
    let header: Header = serde_json::from_slice(&line).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.magic != RVOL_MAGIC {
        return Err(Error::Format(format!("unknown magic {:?}", header.magic)));
    }
    if header.kind != T::KIND {
        return Err(Error::Format(format!("expected kind {:?}, found {:?}", T::KIND, header.kind)));
    }
    let geometry = Geometry::new(header.dims, header.spacing, header.origin)?;
    let expected = geometry.len() * T::BYTES;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload).map_err(|e| Error::io("<rvol stream>", e))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let data = payload.chunks_exact(T::BYTES).map(T::take).collect();
    Grid::from_vec(geometry, data)
}

pub fn write_rvol_file<T: RvolVoxel>(grid: &Grid<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rvol(grid, BufWriter::new(f)).map_err(|e| relabel(e, path))
}

pub fn read_rvol_file<T: RvolVoxel>(path: impl AsRef<Path>) -> Result<Grid<T>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_rvol(f).map_err(|e| relabel(e, path))
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}
