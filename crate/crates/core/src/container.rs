//! Flat binary container for cached g-buffers, checkpoints and weight files.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TXCN"
//! 4       2     format version (u16) = 1
//! 6       4     plane count (u32)
//! 10      ...   planes, back to back
//! ```
//!
//! Each plane:
//!
//! ```text
//! 1            name length (u8)
//! name length  name (utf-8)
//! 1            dtype: 0 = f32, 1 = f64, 2 = raw bytes
//! 1            ndim (u8)
//! 4 * ndim     dims (u32 each)
//! payload      product(dims) * dtype size, little-endian
//! ```
//!
//! Cached g-buffers store one file per (pose, level) with f32 planes
//! `uv` (H x W x 2), `depth`, `cos_angle`, `coverage` (each H x W).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TXCN";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum PlaneData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    Bytes(Vec<u8>),
}

impl PlaneData {
    fn dtype(&self) -> u8 {
        match self {
            PlaneData::F32(_) => 0,
            PlaneData::F64(_) => 1,
            PlaneData::Bytes(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            PlaneData::F32(v) => v.len(),
            PlaneData::F64(v) => v.len(),
            PlaneData::Bytes(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContainerPlane {
    pub dims: Vec<u32>,
    pub data: PlaneData,
}

/// An ordered set of named planes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    planes: BTreeMap<String, ContainerPlane>,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn insert(&mut self, name: &str, dims: Vec<u32>, data: PlaneData) {
        let n: usize = dims.iter().map(|&d| d as usize).product();
        assert_eq!(n, data.len(), "plane {name}: dims do not match payload");
        self.planes
            .insert(name.to_string(), ContainerPlane { dims, data });
    }

    pub fn get(&self, name: &str) -> Option<&ContainerPlane> {
        self.planes.get(name)
    }

    pub fn require_f32(&self, name: &str, path: &Path) -> Result<&[f32]> {
        match self.planes.get(name).map(|p| &p.data) {
            Some(PlaneData::F32(v)) => Ok(v),
            _ => Err(Error::parse(path, format!("missing f32 plane `{name}`"))),
        }
    }

    pub fn require_f64(&self, name: &str, path: &Path) -> Result<&[f64]> {
        match self.planes.get(name).map(|p| &p.data) {
            Some(PlaneData::F64(v)) => Ok(v),
            _ => Err(Error::parse(path, format!("missing f64 plane `{name}`"))),
        }
    }

    pub fn require_bytes(&self, name: &str, path: &Path) -> Result<&[u8]> {
        match self.planes.get(name).map(|p| &p.data) {
            Some(PlaneData::Bytes(v)) => Ok(v),
            _ => Err(Error::parse(path, format!("missing bytes plane `{name}`"))),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.planes.keys().map(|s| s.as_str())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.planes.len() as u32).to_le_bytes());
        for (name, plane) in &self.planes {
            assert!(name.len() <= u8::MAX as usize, "plane name too long");
            buf.push(name.len() as u8);
            buf.extend_from_slice(name.as_bytes());
            buf.push(plane.data.dtype());
            buf.push(plane.dims.len() as u8);
            for d in &plane.dims {
                buf.extend_from_slice(&d.to_le_bytes());
            }
            match &plane.data {
                PlaneData::F32(v) => {
                    for x in v {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                }
                PlaneData::F64(v) => {
                    for x in v {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                }
                PlaneData::Bytes(v) => buf.extend_from_slice(v),
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Container> {
        let mut raw = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut raw))
            .map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { raw: &raw, pos: 0, path };
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(Error::parse(path, "bad magic, not a container file"));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::ContainerVersion {
                found: version,
                expected: VERSION,
            });
        }
        let count = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        let mut planes = BTreeMap::new();
        for _ in 0..count {
            let name_len = cur.take(1)?[0] as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|_| Error::parse(path, "plane name is not utf-8"))?;
            let dtype = cur.take(1)?[0];
            let ndim = cur.take(1)?[0] as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(u32::from_le_bytes(cur.take(4)?.try_into().unwrap()));
            }
            let n: usize = dims.iter().map(|&d| d as usize).product();
            let data = match dtype {
                0 => {
                    let bytes = cur.take(n * 4)?;
                    PlaneData::F32(
                        bytes
                            .chunks_exact(4)
                            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                1 => {
                    let bytes = cur.take(n * 8)?;
                    PlaneData::F64(
                        bytes
                            .chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                2 => PlaneData::Bytes(cur.take(n)?.to_vec()),
                other => {
                    return Err(Error::parse(path, format!("unknown plane dtype {other}")));
                }
            };
            planes.insert(name, ContainerPlane { dims, data });
        }
        Ok(Container { planes })
    }
}

struct Cursor<'a> {
    raw: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.raw.len() {
            return Err(Error::parse(self.path, "truncated container file"));
        }
        let s = &self.raw[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}
